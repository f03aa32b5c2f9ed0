//! Compute backends.
//!
//! An [`Executor`] binds nodes to a local shell, an ssh-reachable host, or a
//! Slurm login host. All durable job state lives on the resource: the job's
//! log in its run directory holds the protocol lines that [`Executor::probe`]
//! reads back, so a fresh client can re-derive a [`JobHandle`] and pick up
//! where a previous one stopped.

mod protocol;
mod script;
mod transport;

pub use protocol::{last_status, parse_line, status_line, ProtocolLine, StatusRecord};
pub use script::{create_script, DONE_LINE, PYTHON_HELPER, PYTHON_HELPER_SOURCE, RUNNING_LINE};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::LazyLock;
use std::thread;
use std::time::Duration;

use chrono::Local;
use regex::Regex;
use thiserror::Error;
use tracing::debug;

use crate::model::{JobKind, NodeSpec, Progress, Status};
use script::{entry_for, Entry};
use transport::{quote, quote_path, run_with_timeout, CommandOutput};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("job kind `{0}` is not supported for execution")]
    UnsupportedKind(JobKind),
    #[error("script {} not found", .0.display())]
    MissingLocalScript(PathBuf),
    #[error("host `{host}` unreachable: {detail}")]
    HostUnreachable { host: String, detail: String },
    #[error("copy failed: {0}")]
    CopyFailed(String),
    #[error("launch failed: {0}")]
    LaunchFailed(String),
    #[error("job `{name}` is {status}, not ready")]
    NotReady { name: String, status: Status },
    #[error("node `{0}` has neither script nor exec")]
    Structural(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Programs and locations the executors rely on.
#[derive(Debug, Clone)]
pub struct ExecConfig {
    /// Root of the local state store; local jobs run in `<root>/<workflow>/runtime`.
    pub state_root: PathBuf,
    /// Per-workflow directory prefix on ssh and Slurm resources.
    pub remote_root: String,
    /// ssh invocation; the target and remote command are appended.
    pub ssh: Vec<String>,
    pub sbatch: String,
    pub scancel: String,
    pub squeue: String,
    pub python: String,
    pub jupyter: String,
    /// Shell line activating a node's `venv`; `{venv}` is substituted.
    pub venv_activation: String,
    /// Limit for each remote or shell interaction.
    pub timeout: Duration,
}

impl ExecConfig {
    pub fn new(state_root: impl Into<PathBuf>) -> Self {
        ExecConfig {
            state_root: state_root.into(),
            remote_root: "~/experiment".into(),
            ssh: ["ssh", "-o", "BatchMode=yes", "-o", "ConnectTimeout=10"]
                .map(String::from)
                .to_vec(),
            sbatch: "sbatch".into(),
            scancel: "scancel".into(),
            squeue: "squeue".into(),
            python: "python3".into(),
            jupyter: "jupyter".into(),
            venv_activation: ". {venv}/bin/activate".into(),
            timeout: Duration::from_secs(30),
        }
    }

    /// Defaults overridden by `HYFLOW_SSH`, `HYFLOW_REMOTE_ROOT`,
    /// `HYFLOW_SBATCH`, `HYFLOW_SCANCEL`, `HYFLOW_SQUEUE`, `HYFLOW_PYTHON`
    /// and `HYFLOW_VENV_ACTIVATE`.
    pub fn from_env(state_root: impl Into<PathBuf>) -> Self {
        let mut config = Self::new(state_root);
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(ssh) = var("HYFLOW_SSH").and_then(|s| shlex::split(&s)) {
            if !ssh.is_empty() {
                config.ssh = ssh;
            }
        }
        if let Some(v) = var("HYFLOW_REMOTE_ROOT") {
            config.remote_root = v;
        }
        if let Some(v) = var("HYFLOW_SBATCH") {
            config.sbatch = v;
        }
        if let Some(v) = var("HYFLOW_SCANCEL") {
            config.scancel = v;
        }
        if let Some(v) = var("HYFLOW_SQUEUE") {
            config.squeue = v;
        }
        if let Some(v) = var("HYFLOW_PYTHON") {
            config.python = v;
        }
        if let Some(v) = var("HYFLOW_VENV_ACTIVATE") {
            config.venv_activation = v;
        }
        config
    }
}

/// A node bound to its backend, with the locations it uses on the resource.
/// Every path is a function of the workflow name, node and configuration, so
/// a restarted client derives the same handle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobHandle {
    pub node: NodeSpec,
    pub workflow_name: String,
    /// Where the node's script sources live on this machine.
    pub source_directory: PathBuf,
    /// Experiment directory on the resource.
    pub run_directory: String,
    /// Script started by `run`, on the resource.
    pub script_path: String,
    /// `<jobname>.log`, on the resource.
    pub log_path: String,
    pub pid: Option<u32>,
    pub slurm_job_id: Option<String>,
}

impl JobHandle {
    pub fn log_file(&self) -> String {
        format!("{}.log", self.node.name)
    }

    fn target(&self) -> String {
        if self.node.user.is_empty() {
            self.node.host.clone()
        } else {
            format!("{}@{}", self.node.user, self.node.host)
        }
    }
}

/// A job log and the record read from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub record: StatusRecord,
    pub log: String,
    /// A protocol line was found.
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KillOutcome {
    Killed,
    /// Already terminal; the status it ended in.
    AlreadyFinished(Status),
    /// Nothing to signal; carries the reason.
    NotRunning(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Liveness {
    Alive,
    Dead,
    Unknown,
}

pub const DEFAULT_WATCH_PERIOD: Duration = Duration::from_secs(10);
const WATCH_ERROR_LIMIT: usize = 3;

static SUBMITTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Submitted batch job (\d+)").unwrap());

#[derive(Debug, Clone)]
pub struct Executor {
    config: ExecConfig,
}

impl Executor {
    pub fn new(config: ExecConfig) -> Self {
        Executor { config }
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    /// Local run directory of a workflow.
    pub fn local_run_directory(&self, workflow: &str) -> PathBuf {
        self.config.state_root.join(workflow).join("runtime")
    }

    /// Derives the handle for `node`. Structural nodes have none.
    pub fn handle(&self, node: &NodeSpec, workflow: &str, source_directory: &Path) -> Option<JobHandle> {
        let entry = entry_for(node, &self.config)?;
        let run_directory = match node.kind {
            JobKind::Local | JobKind::Wsl => self.local_run_directory(workflow).display().to_string(),
            JobKind::Ssh | JobKind::Slurm => {
                format!("{}/{}", self.config.remote_root.trim_end_matches('/'), workflow)
            }
        };
        Some(JobHandle {
            node: node.clone(),
            workflow_name: workflow.to_string(),
            source_directory: source_directory.to_path_buf(),
            script_path: format!("{run_directory}/{}", entry.file()),
            log_path: format!("{run_directory}/{}.log", node.name),
            run_directory,
            pid: node.runtime.pid,
            slurm_job_id: node.runtime.slurm_job_id.clone(),
        })
    }

    /// Script text for the handle; see [`create_script`].
    pub fn create_script(&self, handle: &JobHandle, payload: &str) -> Result<String, ExecError> {
        create_script(handle, payload, &self.config)
    }

    fn entry(&self, handle: &JobHandle) -> Result<Entry, ExecError> {
        entry_for(&handle.node, &self.config).ok_or_else(|| ExecError::Structural(handle.node.name.clone()))
    }

    fn is_remote(handle: &JobHandle) -> bool {
        matches!(handle.node.kind, JobKind::Ssh | JobKind::Slurm)
    }

    /// Runs a shell command on the handle's resource.
    fn shell(&self, handle: &JobHandle, command: &str, stdin: Option<&[u8]>) -> Result<CommandOutput, ExecError> {
        debug!(job = %handle.node.name, %command, "shell");
        if Self::is_remote(handle) {
            let (program, args) = self
                .config
                .ssh
                .split_first()
                .ok_or_else(|| ExecError::HostUnreachable {
                    host: handle.node.host.clone(),
                    detail: "no ssh program configured".into(),
                })?;
            let mut cmd = Command::new(program);
            cmd.args(args).arg(handle.target()).arg(command);
            let unreachable = |detail: String| ExecError::HostUnreachable {
                host: handle.node.host.clone(),
                detail,
            };
            let out = run_with_timeout(&mut cmd, stdin, self.config.timeout)
                .map_err(|e| unreachable(format!("{program}: {e}")))?
                .ok_or_else(|| unreachable(format!("timed out after {:?}", self.config.timeout)))?;
            if out.code == Some(255) {
                return Err(unreachable(out.stderr.trim().to_string()));
            }
            Ok(out)
        } else {
            let mut cmd = Command::new("sh");
            cmd.arg("-c").arg(command);
            run_with_timeout(&mut cmd, stdin, self.config.timeout)?
                .ok_or_else(|| ExecError::Io(std::io::Error::new(std::io::ErrorKind::TimedOut, "command timed out")))
        }
    }

    fn write_file(&self, handle: &JobHandle, name: &str, bytes: &[u8]) -> Result<(), ExecError> {
        if Self::is_remote(handle) {
            let dir = quote_path(&handle.run_directory);
            let file = format!("{dir}/{}", quote(name));
            let out = self.shell(
                handle,
                &format!("mkdir -p {dir} && cat > {file} && chmod +x {file}"),
                Some(bytes),
            )?;
            if !out.success() {
                return Err(ExecError::CopyFailed(format!("{name}: {}", out.stderr.trim())));
            }
        } else {
            let dir = PathBuf::from(&handle.run_directory);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| ExecError::CopyFailed(format!("{}: {e}", path.display())))?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755))?;
            }
        }
        Ok(())
    }

    /// Copies the node's script (and generated wrapper, if any) into the run
    /// directory on the resource, creating it when absent. Local sources are
    /// checked before anything touches the resource.
    pub fn sync(&self, handle: &JobHandle) -> Result<(), ExecError> {
        if handle.node.kind == JobKind::Wsl {
            return Err(ExecError::UnsupportedKind(JobKind::Wsl));
        }
        let entry = self.entry(handle)?;
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        if let Some(script) = &handle.node.script {
            let source = handle.source_directory.join(script);
            let bytes = std::fs::read(&source).map_err(|_| ExecError::MissingLocalScript(source.clone()))?;
            let name = Path::new(script)
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_else(|| script.clone());
            if name.ends_with(".py") || name.ends_with(".ipynb") {
                files.push((PYTHON_HELPER.to_string(), PYTHON_HELPER_SOURCE.as_bytes().to_vec()));
            }
            files.push((name, bytes));
        }
        if let Entry::Generated { file, payload } = &entry {
            files.push((file.clone(), self.create_script(handle, payload)?.into_bytes()));
        }
        for (name, bytes) in &files {
            self.write_file(handle, name, bytes)?;
        }
        Ok(())
    }

    /// Starts the job detached from this process: a background process group
    /// whose output appends to the log, or a Slurm batch submission.
    pub fn run(&self, handle: &JobHandle) -> Result<JobHandle, ExecError> {
        let node = &handle.node;
        if !matches!(node.status, Status::Ready | Status::Undefined) {
            return Err(ExecError::NotReady {
                name: node.name.clone(),
                status: node.status,
            });
        }
        let entry = self.entry(handle)?;
        let dir = quote_path(&handle.run_directory);
        let file = quote(entry.file());
        let mut launched = handle.clone();
        match node.kind {
            JobKind::Wsl => return Err(ExecError::UnsupportedKind(JobKind::Wsl)),
            JobKind::Slurm => {
                let out = self.shell(handle, &format!("cd {dir} && {} {file}", self.config.sbatch), None)?;
                let id = SUBMITTED
                    .captures(&out.stdout)
                    .filter(|_| out.success())
                    .map(|c| c[1].to_string())
                    .ok_or_else(|| {
                        ExecError::LaunchFailed(format!("{}{}", out.stdout.trim(), out.stderr.trim()))
                    })?;
                launched.slurm_job_id = Some(id);
            }
            JobKind::Local | JobKind::Ssh => {
                let shell = match entry {
                    Entry::Generated { .. } => "sh -e",
                    Entry::UserScript(_) => "sh",
                };
                let log = quote(&handle.log_file());
                let command = format!(
                    "cd {dir} && if command -v setsid >/dev/null 2>&1; then L=setsid; else L=nohup; fi; \
                     $L {shell} {file} >> {log} 2>&1 < /dev/null & echo $!"
                );
                let out = self.shell(handle, &command, None)?;
                let pid = out
                    .stdout
                    .lines()
                    .last()
                    .and_then(|l| l.trim().parse::<u32>().ok())
                    .filter(|_| out.success())
                    .ok_or_else(|| ExecError::LaunchFailed(out.stderr.trim().to_string()))?;
                launched.pid = Some(pid);
            }
        }
        launched.node.status = Status::Submitted;
        launched.node.runtime.pid = launched.pid;
        launched.node.runtime.slurm_job_id = launched.slurm_job_id.clone();
        Ok(launched)
    }

    fn read_log(&self, handle: &JobHandle) -> Result<Option<String>, ExecError> {
        if Self::is_remote(handle) {
            let out = self.shell(handle, &format!("cat {} 2>/dev/null", quote_path(&handle.log_path)), None)?;
            Ok(out.success().then_some(out.stdout))
        } else {
            match std::fs::read(&handle.log_path) {
                Ok(bytes) => Ok(Some(String::from_utf8_lossy(&bytes).into_owned())),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        }
    }

    /// Reads the log and returns the record of its last protocol line. With no
    /// log or no protocol line, the node's current status and progress 0.
    pub fn probe(&self, handle: &JobHandle) -> Result<Probe, ExecError> {
        let log = self.read_log(handle)?.unwrap_or_default();
        let line = last_status(&log);
        let record = match line {
            Some(l) => StatusRecord {
                status: l.status,
                progress: l.progress,
                pid: l.pid,
                timestamp: Some(Local::now()),
            },
            None => StatusRecord {
                status: handle.node.status,
                progress: Progress::ZERO,
                pid: None,
                timestamp: Some(Local::now()),
            },
        };
        Ok(Probe {
            record,
            log,
            matched: line.is_some(),
        })
    }

    /// Whether the launched process or batch job still exists.
    pub fn liveness(&self, handle: &JobHandle, pid_hint: Option<u32>) -> Result<Liveness, ExecError> {
        match handle.node.kind {
            JobKind::Slurm => {
                let Some(id) = &handle.slurm_job_id else {
                    return Ok(Liveness::Unknown);
                };
                let out = self.shell(handle, &format!("{} -h -j {} -o %T", self.config.squeue, quote(id)), None)?;
                let state = out.stdout.trim();
                let finished = [
                    "COMPLETED", "FAILED", "CANCELLED", "TIMEOUT", "NODE_FAIL", "PREEMPTED",
                    "OUT_OF_MEMORY", "BOOT_FAIL", "DEADLINE",
                ];
                if !out.success() || state.is_empty() || finished.iter().any(|f| state.starts_with(f)) {
                    Ok(Liveness::Dead)
                } else {
                    Ok(Liveness::Alive)
                }
            }
            _ => {
                let Some(pid) = handle.pid.or(pid_hint) else {
                    return Ok(Liveness::Unknown);
                };
                let out = self.shell(handle, &format!("ps -o stat= -p {pid}"), None)?;
                let stat = out.stdout.trim();
                if !out.success() || stat.is_empty() || stat.starts_with('Z') {
                    Ok(Liveness::Dead)
                } else {
                    Ok(Liveness::Alive)
                }
            }
        }
    }

    fn append_line(&self, handle: &JobHandle, line: &str) -> Result<(), ExecError> {
        if Self::is_remote(handle) {
            let out = self.shell(
                handle,
                &format!("printf '%s\\n' {} >> {}", quote(line), quote_path(&handle.log_path)),
                None,
            )?;
            if !out.success() {
                return Err(ExecError::CopyFailed(out.stderr.trim().to_string()));
            }
        } else {
            if let Some(dir) = Path::new(&handle.log_path).parent() {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&handle.log_path)?;
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    /// One watch step. A job whose process (or batch job) is gone without
    /// reaching a terminal line is declared failed, and that verdict is
    /// appended to its log so later probes agree.
    pub fn poll(&self, handle: &mut JobHandle) -> Result<StatusRecord, ExecError> {
        let probe = self.probe(handle)?;
        let record = probe.record;
        if record.pid.is_some() && handle.pid.is_none() {
            handle.pid = record.pid;
        }
        if record.status.is_terminal() {
            handle.node.status = record.status;
            handle.node.progress = record.progress;
            return Ok(record);
        }
        if self.liveness(handle, record.pid)? == Liveness::Dead {
            let again = self.probe(handle)?.record;
            if again.status.is_terminal() {
                handle.node.status = again.status;
                handle.node.progress = again.progress;
                return Ok(again);
            }
            let pid = handle.pid.or(again.pid);
            self.append_line(handle, &status_line(Status::Failed, again.progress, pid))?;
            handle.node.status = Status::Failed;
            handle.node.progress = again.progress;
            return Ok(StatusRecord {
                status: Status::Failed,
                pid,
                ..again
            });
        }
        if probe.matched {
            handle.node.status = record.status;
            handle.node.progress = record.progress;
        }
        Ok(record)
    }

    /// Polls every `period` until the job is done, failed or killed. Probe
    /// errors are tolerated until three occur in a row.
    pub fn watch(&self, handle: &mut JobHandle, period: Duration) -> Result<StatusRecord, ExecError> {
        let mut errors = 0;
        loop {
            match self.poll(handle) {
                Ok(record) if record.status.is_terminal() => return Ok(record),
                Ok(_) => errors = 0,
                Err(e) => {
                    errors += 1;
                    if errors >= WATCH_ERROR_LIMIT {
                        return Err(e);
                    }
                }
            }
            thread::sleep(period);
        }
    }

    /// Signals the job's process group (or cancels the batch job) and records
    /// `killed` in its log.
    pub fn kill(&self, handle: &mut JobHandle) -> Result<KillOutcome, ExecError> {
        let probe = self.probe(handle)?;
        if probe.record.status.is_terminal() {
            handle.node.status = probe.record.status;
            return Ok(KillOutcome::AlreadyFinished(probe.record.status));
        }
        let pid = handle.pid.or(probe.record.pid);
        match handle.node.kind {
            JobKind::Wsl => return Err(ExecError::UnsupportedKind(JobKind::Wsl)),
            JobKind::Slurm => {
                let Some(id) = handle.slurm_job_id.clone() else {
                    return Ok(KillOutcome::NotRunning("no Slurm job id recorded".into()));
                };
                let out = self.shell(handle, &format!("{} {}", self.config.scancel, quote(&id)), None)?;
                if !out.success() {
                    return Ok(KillOutcome::NotRunning(out.stderr.trim().to_string()));
                }
            }
            JobKind::Local | JobKind::Ssh => {
                let Some(pid) = pid else {
                    return Ok(KillOutcome::NotRunning("no pid recorded".into()));
                };
                let out = self.shell(
                    handle,
                    &format!("kill -TERM -{pid} 2>/dev/null || kill -TERM {pid}"),
                    None,
                )?;
                if !out.success() {
                    return Ok(KillOutcome::NotRunning(format!("no such process {pid}")));
                }
            }
        }
        self.append_line(handle, &status_line(Status::Killed, probe.record.progress, pid))?;
        handle.node.status = Status::Killed;
        handle.node.progress = probe.record.progress;
        Ok(KillOutcome::Killed)
    }

    /// Removes the job's log; the next probe reports no progress.
    pub fn clear(&self, handle: &mut JobHandle) -> Result<(), ExecError> {
        if Self::is_remote(handle) {
            let out = self.shell(handle, &format!("rm -f {}", quote_path(&handle.log_path)), None)?;
            if !out.success() {
                return Err(ExecError::CopyFailed(out.stderr.trim().to_string()));
            }
        } else {
            match std::fs::remove_file(&handle.log_path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        handle.pid = None;
        handle.slurm_job_id = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn job(name: &str, kind: JobKind) -> NodeSpec {
        let mut n = NodeSpec::new(name);
        n.kind = kind;
        n.status = Status::Ready;
        n
    }

    fn setup() -> (tempfile::TempDir, Executor) {
        let dir = tempfile::tempdir().unwrap();
        let exec = Executor::new(ExecConfig::new(dir.path().join("store")));
        (dir, exec)
    }

    #[test]
    fn empty_payload_is_three_lines() {
        let (dir, exec) = setup();
        let mut node = job("a", JobKind::Local);
        node.exec = Some("x".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        let text = exec.create_script(&handle, "").unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines, vec![RUNNING_LINE, "", DONE_LINE]);
    }

    #[test]
    fn slurm_script_has_batch_header() {
        let (dir, exec) = setup();
        let mut node = job("train", JobKind::Slurm);
        node.exec = Some("python train.py".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        let text = exec.create_script(&handle, "python train.py").unwrap();
        let running = text.find(RUNNING_LINE).unwrap();
        let header = text.find("#SBATCH --job-name=wf-train").unwrap();
        assert!(header < running);
        assert!(text.contains("#SBATCH --output=train.log"));
        assert!(text.starts_with("#!/bin/bash\n"));
        assert_eq!(handle.run_directory, "~/experiment/wf");
        assert_eq!(handle.log_path, "~/experiment/wf/train.log");
    }

    #[test]
    fn venv_line_precedes_payload() {
        let (dir, exec) = setup();
        let mut node = job("a", JobKind::Local);
        node.exec = Some("python x.py".into());
        node.venv = Some("/opt/env".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        let text = exec.create_script(&handle, "python x.py").unwrap();
        assert!(text.starts_with(". /opt/env/bin/activate\n"));
    }

    #[test]
    fn wsl_is_unsupported() {
        let (dir, exec) = setup();
        let mut node = job("w", JobKind::Wsl);
        node.exec = Some("dir".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        assert!(matches!(
            exec.create_script(&handle, ""),
            Err(ExecError::UnsupportedKind(JobKind::Wsl))
        ));
        assert!(matches!(exec.sync(&handle), Err(ExecError::UnsupportedKind(_))));
    }

    #[test]
    fn structural_nodes_have_no_handle() {
        let (dir, exec) = setup();
        assert!(exec.handle(&NodeSpec::new("start"), "wf", dir.path()).is_none());
    }

    #[test]
    fn log_path_depends_only_on_workflow_and_node() {
        let (dir, exec) = setup();
        let mut node = job("compute", JobKind::Local);
        node.script = Some("test-compute.sh".into());
        let a = exec.handle(&node, "wf", dir.path()).unwrap();
        let b = exec.handle(&node, "wf", Path::new("/elsewhere")).unwrap();
        assert_eq!(a.log_path, b.log_path);
        assert_eq!(
            PathBuf::from(&a.log_path),
            dir.path().join("store/wf/runtime/compute.log")
        );
    }

    #[test]
    fn sync_copies_script_into_runtime() {
        let (dir, exec) = setup();
        std::fs::write(dir.path().join("test-compute.sh"), "echo hi\n").unwrap();
        let mut node = job("compute", JobKind::Local);
        node.script = Some("test-compute.sh".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        assert!(dir.path().join("store/wf/runtime/test-compute.sh").is_file());
    }

    #[test]
    fn sync_fails_fast_on_missing_script() {
        let (dir, exec) = setup();
        let mut node = job("compute", JobKind::Ssh);
        node.host = "unreachable.invalid".into();
        node.script = Some("nope.sh".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        assert!(matches!(exec.sync(&handle), Err(ExecError::MissingLocalScript(_))));
    }

    #[test]
    fn python_jobs_get_wrapper_and_helper() {
        let (dir, exec) = setup();
        std::fs::write(dir.path().join("train.py"), "print('hi')\n").unwrap();
        let mut node = job("train", JobKind::Local);
        node.script = Some("train.py".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        assert!(handle.script_path.ends_with("cc-train.sh"));
        exec.sync(&handle).unwrap();
        let runtime = dir.path().join("store/wf/runtime");
        assert!(runtime.join(PYTHON_HELPER).is_file());
        let wrapper = std::fs::read_to_string(runtime.join("cc-train.sh")).unwrap();
        assert!(wrapper.contains("python3 train.py"));
    }

    fn wait_for_done(exec: &Executor, handle: &mut JobHandle) -> StatusRecord {
        exec.watch(handle, Duration::from_millis(50)).unwrap()
    }

    #[test]
    fn local_exec_job_runs_to_done() {
        let (dir, exec) = setup();
        let mut node = job("hello", JobKind::Local);
        node.exec = Some("echo hello".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        assert!(launched.pid.unwrap() > 0);
        let record = wait_for_done(&exec, &mut launched);
        assert_eq!((record.status, record.progress), (Status::Done, Progress::DONE));
        let log = exec.probe(&launched).unwrap().log;
        assert!(log.contains("hello"));
        // Probing is read-only and repeatable.
        assert_eq!(exec.probe(&launched).unwrap().log, log);
    }

    #[test]
    fn failing_exec_is_failed() {
        let (dir, exec) = setup();
        let mut node = job("bad", JobKind::Local);
        node.exec = Some("false".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        let record = wait_for_done(&exec, &mut launched);
        assert_eq!((record.status, record.progress.value()), (Status::Failed, 1));
        // The verdict is durable.
        assert_eq!(exec.probe(&launched).unwrap().record.status, Status::Failed);
    }

    #[test]
    fn truncated_job_fails_at_last_progress() {
        let (dir, exec) = setup();
        std::fs::write(
            dir.path().join("partial.sh"),
            "echo \"# cloudmesh status=running progress=1 pid=$$\"\necho \"# cloudmesh status=running progress=42 pid=$$\"\n",
        )
        .unwrap();
        let mut node = job("partial", JobKind::Local);
        node.script = Some("partial.sh".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        let record = wait_for_done(&exec, &mut launched);
        assert_eq!((record.status, record.progress.value()), (Status::Failed, 42));
    }

    #[test]
    fn run_requires_ready() {
        let (dir, exec) = setup();
        let mut node = job("a", JobKind::Local);
        node.exec = Some("true".into());
        node.status = Status::Done;
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        assert!(matches!(exec.run(&handle), Err(ExecError::NotReady { .. })));
    }

    #[test]
    fn kill_running_job() {
        let (dir, exec) = setup();
        let mut node = job("sleepy", JobKind::Local);
        node.exec = Some("sleep 30".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        let pid = launched.pid.unwrap();
        // Wait for the running line so the kill is not racing the start.
        let start = Instant::now();
        while !exec.probe(&launched).unwrap().matched && start.elapsed() < Duration::from_secs(5) {
            thread::sleep(Duration::from_millis(20));
        }
        assert_eq!(exec.kill(&mut launched).unwrap(), KillOutcome::Killed);
        let start = Instant::now();
        while exec.liveness(&launched, None).unwrap() == Liveness::Alive {
            assert!(start.elapsed() < Duration::from_secs(2), "pid {pid} survived kill");
            thread::sleep(Duration::from_millis(20));
        }
        assert_eq!(exec.probe(&launched).unwrap().record.status, Status::Killed);
        assert_eq!(launched.node.status, Status::Killed);
    }

    #[test]
    fn kill_reaches_the_whole_process_group() {
        let (dir, exec) = setup();
        let child_pid = dir.path().join("child.pid");
        let mut node = job("family", JobKind::Local);
        node.exec = Some(format!("sleep 30 & echo $! > '{}'; wait", child_pid.display()));
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        let start = Instant::now();
        let child: u32 = loop {
            if let Some(pid) = std::fs::read_to_string(&child_pid).ok().and_then(|s| s.trim().parse().ok()) {
                break pid;
            }
            assert!(start.elapsed() < Duration::from_secs(5), "child never started");
            thread::sleep(Duration::from_millis(20));
        };
        assert_eq!(exec.kill(&mut launched).unwrap(), KillOutcome::Killed);
        let start = Instant::now();
        let alive = |pid: u32| {
            let out = std::process::Command::new("ps").args(["-o", "stat=", "-p", &pid.to_string()]).output().unwrap();
            let stat = String::from_utf8_lossy(&out.stdout).trim().to_string();
            !stat.is_empty() && !stat.starts_with('Z')
        };
        while alive(child) {
            assert!(start.elapsed() < Duration::from_secs(2), "child {child} survived kill");
            thread::sleep(Duration::from_millis(20));
        }
    }

    #[test]
    fn kill_after_done_is_a_note() {
        let (dir, exec) = setup();
        let mut node = job("quick", JobKind::Local);
        node.exec = Some("true".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        wait_for_done(&exec, &mut launched);
        assert_eq!(
            exec.kill(&mut launched).unwrap(),
            KillOutcome::AlreadyFinished(Status::Done)
        );
        assert_eq!(launched.node.status, Status::Done);
    }

    #[test]
    fn clear_resets_probe() {
        let (dir, exec) = setup();
        let mut node = job("quick", JobKind::Local);
        node.exec = Some("true".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        let mut handle2 = handle.clone();
        exec.clear(&mut handle2).unwrap();
        exec.sync(&handle).unwrap();
        let mut launched = exec.run(&handle).unwrap();
        wait_for_done(&exec, &mut launched);
        exec.clear(&mut launched).unwrap();
        let record = exec.probe(&handle).unwrap().record;
        assert_eq!((record.status, record.progress), (Status::Ready, Progress::ZERO));
        exec.clear(&mut launched).unwrap();
    }

    #[test]
    fn missing_log_probes_as_declared() {
        let (dir, exec) = setup();
        let mut node = job("a", JobKind::Local);
        node.exec = Some("true".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        let p = exec.probe(&handle).unwrap();
        assert!(!p.matched);
        assert_eq!((p.record.status, p.record.progress), (Status::Ready, Progress::ZERO));
    }

    #[test]
    fn unreachable_ssh_host() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExecConfig::new(dir.path());
        config.ssh = vec!["sh".into(), "-c".into(), "echo 'ssh: connect refused' >&2; exit 255".into(), "ssh".into()];
        let exec = Executor::new(config);
        let mut node = job("a", JobKind::Ssh);
        node.exec = Some("true".into());
        let handle = exec.handle(&node, "wf", dir.path()).unwrap();
        assert!(matches!(exec.probe(&handle), Err(ExecError::HostUnreachable { .. })));
    }
}
