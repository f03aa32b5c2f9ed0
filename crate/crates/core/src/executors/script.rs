//! Generated job scripts.

use super::{ExecConfig, ExecError, JobHandle};
use crate::model::JobKind;

pub const RUNNING_LINE: &str = r##"echo "# cloudmesh status=running progress=1 pid=$$""##;
pub const DONE_LINE: &str = r##"echo "# cloudmesh status=done progress=100 pid=$$""##;

/// File name of the progress helper placed next to Python and notebook jobs.
pub const PYTHON_HELPER: &str = "cloudmesh_progress.py";

pub const PYTHON_HELPER_SOURCE: &str = r##"import os
import sys


def progress(progress=0, status=None, pid=None, filename=None):
    """Append a progress line; 1-99 report running, 100 reports done."""
    progress = max(0, min(100, int(progress)))
    if status is None:
        status = "done" if progress == 100 else "running"
    pid = os.getpid() if pid is None else pid
    line = f"# cloudmesh status={status} progress={progress} pid={pid}\n"
    if filename is None:
        sys.stdout.write(line)
        sys.stdout.flush()
    else:
        with open(filename, "a") as f:
            f.write(line)
"##;

/// How a node's code is turned into something the resource can start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Entry {
    /// A user shell script, copied as is.
    UserScript(String),
    /// A wrapper produced by [`create_script`] around a payload.
    Generated { file: String, payload: String },
}

impl Entry {
    pub fn file(&self) -> &str {
        match self {
            Entry::UserScript(f) => f,
            Entry::Generated { file, .. } => file,
        }
    }
}

fn file_name(script: &str) -> &str {
    script.rsplit('/').next().unwrap_or(script)
}

fn extension(script: &str) -> Option<&str> {
    file_name(script).rsplit_once('.').map(|(_, e)| e)
}

pub(crate) fn generated_name(job: &str) -> String {
    format!("cc-{job}.sh")
}

pub(crate) fn entry_for(handle_node: &crate::model::NodeSpec, config: &ExecConfig) -> Option<Entry> {
    let generated = |payload: String| Entry::Generated {
        file: generated_name(&handle_node.name),
        payload,
    };
    if let Some(exec) = &handle_node.exec {
        return Some(generated(exec.clone()));
    }
    let script = handle_node.script.as_deref()?;
    let name = file_name(script);
    let quoted = super::transport::quote(name);
    match extension(script) {
        Some("py") => Some(generated(format!("{} {quoted}", config.python))),
        Some("ipynb") => Some(generated(format!(
            "{} nbconvert --to notebook --execute --output {} {quoted}",
            config.jupyter,
            super::transport::quote(&format!("{}-output.ipynb", handle_node.name)),
        ))),
        _ if handle_node.kind == JobKind::Slurm => Some(generated(format!("bash {quoted}"))),
        _ => Some(Entry::UserScript(name.to_string())),
    }
}

/// Wraps `payload` between the running and done protocol lines. Slurm jobs
/// get a batch header whose output file is the job log; a node `venv` adds an
/// activation line ahead of the payload.
pub fn create_script(handle: &JobHandle, payload: &str, config: &ExecConfig) -> Result<String, ExecError> {
    let node = &handle.node;
    let mut lines: Vec<String> = Vec::new();
    match node.kind {
        JobKind::Wsl => return Err(ExecError::UnsupportedKind(node.kind)),
        JobKind::Slurm => {
            lines.push("#!/bin/bash".into());
            lines.push(format!(
                "#SBATCH --job-name={}-{}",
                handle.workflow_name, node.name
            ));
            lines.push(format!("#SBATCH --output={}", handle.log_file()));
            lines.push("set -e".into());
        }
        JobKind::Local | JobKind::Ssh => {}
    }
    if let Some(venv) = &node.venv {
        lines.push(config.venv_activation.replace("{venv}", venv));
    }
    lines.push(RUNNING_LINE.into());
    lines.push(payload.to_string());
    lines.push(DONE_LINE.into());
    let mut text = lines.join("\n");
    text.push('\n');
    Ok(text)
}
