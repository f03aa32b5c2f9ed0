//! Service mode: starting and stopping the service, and workflow verbs
//! proxied through the HTTP client.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context as _, Result};
use hyflow_core::Status;
use hyflow_service::{run_foreground, RestClient, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::args::{NameJob, ServiceAddArgs, ServiceCommand, ServiceRunArgs, ServiceVerb, StartArgs, DEFAULT_WORKFLOW};
use crate::local::{is_archive, job_params, Context};
use crate::output;

const START_TIMEOUT: Duration = Duration::from_secs(20);
const STOP_TIMEOUT: Duration = Duration::from_secs(20);

/// What a running service records about itself in `<root>/service.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub pid: u32,
    pub host: String,
    pub port: u16,
    pub url: String,
}

pub fn record_path(root: &Path) -> PathBuf {
    root.join("service.json")
}

fn read_record(root: &Path) -> Option<ServiceRecord> {
    let text = std::fs::read_to_string(record_path(root)).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_record(root: &Path, record: &ServiceRecord) -> Result<()> {
    std::fs::create_dir_all(root)?;
    let path = record_path(root);
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(record)?)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// A process exists and has not exited; zombies count as gone.
fn process_alive(pid: u32) -> bool {
    Command::new("ps")
        .args(["-o", "stat=", "-p", &pid.to_string()])
        .stderr(Stdio::null())
        .output()
        .is_ok_and(|out| {
            let stat = String::from_utf8_lossy(&out.stdout);
            let stat = stat.trim();
            !stat.is_empty() && !stat.starts_with('Z')
        })
}

fn signal(pid: u32, name: &str) -> bool {
    Command::new("kill")
        .args([&format!("-{name}"), &pid.to_string()])
        .stderr(Stdio::null())
        .status()
        .is_ok_and(|s| s.success())
}

/// The recorded service, if its process is alive. Stale records are removed.
fn running_service(root: &Path) -> Option<ServiceRecord> {
    let record = read_record(root)?;
    if process_alive(record.pid) {
        Some(record)
    } else {
        let _ = std::fs::remove_file(record_path(root));
        None
    }
}

fn not_running() -> anyhow::Error {
    anyhow!("service is not running")
}

/// Address used by `cc workflow service` verbs.
fn service_url(ctx: &Context) -> String {
    ctx.service_url
        .clone()
        .or_else(|| running_service(&ctx.root).map(|r| r.url))
        .unwrap_or_else(|| format!("http://{}:{}", ServiceConfig::DEFAULT_HOST, ServiceConfig::DEFAULT_PORT))
}

fn client(ctx: &Context) -> Result<RestClient> {
    Ok(RestClient::new(&service_url(ctx))?)
}

pub fn start(ctx: &Context, args: StartArgs) -> Result<()> {
    let mut config = ServiceConfig::new(&ctx.root);
    config.host = args.host.clone();
    config.port = args.port;
    config.static_dir = args.static_dir.clone();
    config.resume = !args.no_resume;
    if let Some(poll) = ctx.poll {
        config.poll_period = poll;
    }
    config.validate().map_err(|e| anyhow!(e))?;

    if let Some(record) = running_service(&ctx.root) {
        if record.pid == std::process::id() {
            // Started detached by a parent that recorded us already.
        } else if args.reload {
            stop(ctx)?;
        } else {
            bail!("service already running at {} (pid {})", record.url, record.pid);
        }
    }
    if args.foreground {
        foreground(ctx, &config)
    } else {
        detach(ctx, &args, &config)
    }
}

fn foreground(ctx: &Context, config: &ServiceConfig) -> Result<()> {
    let record = ServiceRecord {
        pid: std::process::id(),
        host: config.host.clone(),
        port: config.port,
        url: config.url(),
    };
    write_record(&ctx.root, &record)?;
    eprintln!("serving {} at {}", ctx.root.display(), record.url);
    let served = run_foreground(config);
    if read_record(&ctx.root).is_some_and(|r| r.pid == record.pid) {
        let _ = std::fs::remove_file(record_path(&ctx.root));
    }
    served.with_context(|| format!("cannot serve at {}", record.url))
}

fn detach(ctx: &Context, args: &StartArgs, config: &ServiceConfig) -> Result<()> {
    use std::os::unix::process::CommandExt;

    std::fs::create_dir_all(&ctx.root)?;
    let log_path = ctx.root.join("service.log");
    let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
    let exe = std::env::current_exe().context("cannot locate the hyflow executable")?;
    let mut command = Command::new(exe);
    command
        .arg("--root")
        .arg(&ctx.root)
        .args(["cc", "start", "-c", "--host", &config.host, "--port", &config.port.to_string()]);
    if let Some(dir) = &args.static_dir {
        command.arg("--static-dir").arg(dir);
    }
    if args.no_resume {
        command.arg("--no-resume");
    }
    if let Some(poll) = ctx.poll {
        command.arg("--poll").arg(poll.as_secs_f64().to_string());
    }
    command.arg(if ctx.verbose > 1 { "-vv" } else { "-v" });
    let mut child = command
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .process_group(0)
        .spawn()
        .context("cannot launch the service")?;

    let client = RestClient::new(&config.url())?;
    let deadline = Instant::now() + START_TIMEOUT;
    loop {
        if let Some(status) = child.try_wait()? {
            let log = std::fs::read_to_string(&log_path).unwrap_or_default();
            let tail: Vec<&str> = log.lines().rev().take(5).collect();
            bail!(
                "service exited during startup ({status}); see {}:\n{}",
                log_path.display(),
                tail.into_iter().rev().collect::<Vec<_>>().join("\n")
            );
        }
        if client.is_reachable() && read_record(&ctx.root).is_some_and(|r| r.pid == child.id()) {
            break;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            bail!("service did not answer at {} within {}s", config.url(), START_TIMEOUT.as_secs());
        }
        thread::sleep(Duration::from_millis(100));
    }
    println!("service running at {} (pid {})", config.url(), child.id());
    Ok(())
}

pub fn stop(ctx: &Context) -> Result<()> {
    let record = running_service(&ctx.root).ok_or_else(not_running)?;
    signal(record.pid, "TERM");
    let deadline = Instant::now() + STOP_TIMEOUT;
    while process_alive(record.pid) {
        if Instant::now() >= deadline {
            signal(record.pid, "KILL");
            break;
        }
        thread::sleep(Duration::from_millis(100));
    }
    if read_record(&ctx.root).is_some_and(|r| r.pid == record.pid) {
        let _ = std::fs::remove_file(record_path(&ctx.root));
    }
    println!("service stopped (pid {})", record.pid);
    Ok(())
}

pub fn status(ctx: &Context) -> Result<()> {
    let record = running_service(&ctx.root).ok_or_else(not_running)?;
    if !RestClient::new(&record.url)?.is_reachable() {
        bail!("service process {} is not answering at {}", record.pid, record.url);
    }
    println!("service running at {} (pid {})", record.url, record.pid);
    Ok(())
}

pub fn view(ctx: &Context) -> Result<()> {
    let record = running_service(&ctx.root).ok_or_else(not_running)?;
    let url = format!("{}/", record.url);
    println!("{url}");
    for opener in ["xdg-open", "open"] {
        let opened = Command::new(opener)
            .arg(&url)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn();
        if opened.is_ok() {
            break;
        }
    }
    Ok(())
}

pub fn workflow(ctx: &Context, command: ServiceCommand) -> Result<()> {
    match command.command {
        ServiceVerb::Add(args) => add(ctx, args),
        ServiceVerb::List(args) => list(ctx, args),
        ServiceVerb::Run(args) => run(ctx, args),
    }
}

fn add(ctx: &Context, args: ServiceAddArgs) -> Result<()> {
    let client = client(ctx)?;
    if args.job.is_none() && args.items.len() == 1 && !args.items[0].contains('=') {
        let path = Path::new(&args.items[0]);
        if !path.is_file() {
            bail!("{} is not a file", path.display());
        }
        if !is_archive(path) && path.extension().and_then(|e| e.to_str()).is_none_or(|e| e != "yaml" && e != "yml") {
            bail!("{} is neither a .tar archive nor a .yaml file", path.display());
        }
        let report = client.upload_workflow(path, args.name.as_deref())?;
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        println!("added workflow `{}` ({} nodes)", report.name, report.nodes);
        return Ok(());
    }
    let pairs = args
        .items
        .iter()
        .map(|item| crate::args::parse_pair(item).map_err(|e| anyhow!(e)))
        .collect::<Result<Vec<_>>>()?;
    let params = job_params(args.job.as_deref(), &pairs)?;
    let name = args.name.as_deref().unwrap_or(DEFAULT_WORKFLOW);
    let added = client.add_job(name, &params)?;
    println!("added job `{}` to workflow `{}`", added.job, added.name);
    Ok(())
}

fn list(ctx: &Context, args: NameJob) -> Result<()> {
    let client = client(ctx)?;
    if args.name.is_none() && args.job.is_none() {
        for name in client.list_workflows()? {
            println!("{name}");
        }
        return Ok(());
    }
    let name = args.name.as_deref().unwrap_or(DEFAULT_WORKFLOW);
    let body = match &args.job {
        Some(job) => client.get_job_json(name, job)?,
        None => client.get_workflow_json(name)?,
    };
    print!("{}", serde_yaml::to_string(&body)?);
    Ok(())
}

fn run(ctx: &Context, args: ServiceRunArgs) -> Result<()> {
    let client = client(ctx)?;
    let ack = client.run_workflow(&args.name, args.show, args.parallel.map(usize::from))?;
    println!("started workflow `{}`: {}", ack.name, ack.plan.join(" -> "));
    if !args.wait {
        return Ok(());
    }
    let poll = ctx.poll.unwrap_or(Duration::from_secs(1));
    let done = client.wait_until_idle(&args.name, Duration::from_secs(7 * 24 * 3600), poll)?;
    print!("{}", output::table(&client.table(&args.name)?));
    if done.document.graph.nodes().any(|n| n.status != Status::Done) {
        bail!("workflow `{}` did not complete", args.name);
    }
    Ok(())
}
