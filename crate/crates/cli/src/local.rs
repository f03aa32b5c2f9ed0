//! Command-line mode: every verb calls the engine directly.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use chrono::Local;
use hyflow_core::specfile::MissingScript;
use hyflow_core::{Engine, JobParams, RunOptions, RunOutcome, Status, WorkflowRun};

use crate::args::{
    AddArgs, GraphArgs, GraphFormatArg, NameJob, RunArgs, StatusArgs, StatusOutput, WorkflowCommand, WorkflowVerb,
    DEFAULT_WORKFLOW,
};
use crate::output;
use crate::service;

/// Settings shared by all commands.
pub struct Context {
    pub root: PathBuf,
    pub poll: Option<Duration>,
    pub service_url: Option<String>,
    pub verbose: u8,
}

impl Context {
    pub fn engine(&self) -> Engine {
        let mut engine = Engine::open(&self.root);
        if let Some(poll) = self.poll {
            engine.settings_mut().poll_period = poll;
        }
        engine
    }
}

fn name_or_default(name: &Option<String>) -> &str {
    name.as_deref().unwrap_or(DEFAULT_WORKFLOW)
}

pub fn workflow(ctx: &Context, command: WorkflowCommand) -> Result<()> {
    match command.command {
        None => dependencies(ctx, name_or_default(&command.name), &command.dependencies),
        Some(WorkflowVerb::Add(args)) => add(ctx, args),
        Some(WorkflowVerb::Delete(args)) => delete(ctx, args),
        Some(WorkflowVerb::List(args)) => list(ctx, args),
        Some(WorkflowVerb::Run(args)) => run(ctx, args),
        Some(WorkflowVerb::Status(args)) => status(ctx, args),
        Some(WorkflowVerb::Graph(args)) => graph(ctx, args),
        Some(WorkflowVerb::Service(args)) => service::workflow(ctx, args),
    }
}

pub fn is_archive(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("tar")
}

fn warn_missing(warnings: &[MissingScript]) {
    for w in warnings {
        eprintln!("warning: job `{}`: script `{}` not found", w.node, w.script);
    }
}

fn import(engine: &Engine, path: &Path, name: Option<&str>) -> Result<WorkflowRun> {
    let (run, warnings) = if is_archive(path) {
        engine.add_workflow_archive(path, name)
    } else {
        engine.add_workflow_file(path, name)
    }
    .with_context(|| format!("cannot add {}", path.display()))?;
    warn_missing(&warnings);
    Ok(run)
}

/// Job parameters from `--job` and key=value pairs; a `name=` pair also
/// names the job.
pub fn job_params(job: Option<&str>, pairs: &[(String, String)]) -> Result<JobParams> {
    let params = JobParams::from_pairs(job.unwrap_or_default(), pairs.iter().map(|(k, v)| (k, v.clone())))?;
    if params.name.is_empty() {
        bail!("name the job with --job=JOB or name=JOB");
    }
    Ok(params)
}

fn add(ctx: &Context, args: AddArgs) -> Result<()> {
    let engine = ctx.engine();
    if let Some(path) = &args.filename {
        let run = import(&engine, path, args.name.as_deref())?;
        println!("added workflow `{}` ({} nodes)", run.name(), run.document.graph.len());
        return Ok(());
    }
    let name = name_or_default(&args.name);
    let params = job_params(args.job.as_deref(), &args.args)?;
    let job = params.name.clone();
    let mut run = engine.open_or_create(name)?;
    engine.add_job(&mut run, params)?;
    println!("added job `{job}` to workflow `{name}`");
    Ok(())
}

fn delete(ctx: &Context, args: NameJob) -> Result<()> {
    let engine = ctx.engine();
    let name = name_or_default(&args.name);
    match &args.job {
        Some(job) => {
            let mut run = engine.load(name)?;
            engine.refresh(&mut run)?;
            engine.remove_job(&mut run, job)?;
            println!("deleted job `{job}` from workflow `{name}`");
        }
        None => {
            engine.remove_workflow(name)?;
            println!("deleted workflow `{name}`");
        }
    }
    Ok(())
}

/// The YAML record of one job, as stored in the state file.
fn job_yaml(run: &WorkflowRun, job: &str) -> Result<String> {
    run.node(job)?;
    let text = run.document.serialize(true)?;
    let doc: serde_yaml::Value = serde_yaml::from_str(&text)?;
    let record = doc
        .get("workflow")
        .and_then(|w| w.get("nodes"))
        .and_then(|n| n.get(job))
        .ok_or_else(|| anyhow!("job `{job}` missing from the serialized workflow"))?;
    Ok(serde_yaml::to_string(record)?)
}

fn list(ctx: &Context, args: NameJob) -> Result<()> {
    let engine = ctx.engine();
    if args.name.is_none() && args.job.is_none() {
        for name in engine.list_workflows()? {
            println!("{name}");
        }
        return Ok(());
    }
    let mut run = engine.load(name_or_default(&args.name))?;
    engine.refresh(&mut run)?;
    match &args.job {
        Some(job) => print!("{}", job_yaml(&run, job)?),
        None => print!("{}", run.document.serialize(true)?),
    }
    Ok(())
}

fn dependencies(ctx: &Context, name: &str, chains: &[String]) -> Result<()> {
    let engine = ctx.engine();
    let mut run = engine.load(name)?;
    for chain in chains {
        engine
            .add_dependencies(&mut run, chain)
            .with_context(|| format!("cannot add dependencies `{chain}`"))?;
        println!("added dependencies `{chain}` to workflow `{name}`");
    }
    Ok(())
}

/// Prints one line per job status or progress change.
struct Reporter {
    seen: HashMap<String, (Status, u8)>,
}

impl Reporter {
    fn new(run: &WorkflowRun) -> Self {
        Reporter {
            seen: run
                .document
                .graph
                .nodes()
                .map(|n| (n.name.clone(), (n.status, n.progress.value())))
                .collect(),
        }
    }

    fn observe(&mut self, run: &WorkflowRun) {
        for node in run.document.graph.nodes() {
            let now = (node.status, node.progress.value());
            if self.seen.get(&node.name) != Some(&now) {
                self.seen.insert(node.name.clone(), now);
                println!("{} {:<20} {:<9} {:>3}%", Local::now().format("%H:%M:%S"), node.name, now.0, now.1);
            }
        }
    }
}

fn run(ctx: &Context, args: RunArgs) -> Result<()> {
    let mut engine = ctx.engine();
    let stem = args
        .filename
        .as_ref()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned());
    let name = args.name.clone().or(stem).unwrap_or_else(|| DEFAULT_WORKFLOW.to_string());
    let mut run = match &args.filename {
        Some(path) if !engine.store().exists(&name) => import(&engine, path, Some(&name))?,
        _ => engine.load(&name)?,
    };

    if args.dryrun {
        let report = engine.run_topo(&mut run, RunOptions::dryrun())?;
        for (i, job) in report.plan.iter().enumerate() {
            println!("{:>3}. {job}", i + 1);
        }
        return Ok(());
    }
    if args.reset {
        engine.reset(&mut run)?;
    }
    engine.settings_mut().show = args.show;
    let mut reporter = Reporter::new(&run);
    let mut observe = |r: &WorkflowRun| reporter.observe(r);
    let options = RunOptions::observed(&mut observe);

    if let Some(job) = &args.job {
        let status = engine.run_job(&mut run, job, options)?;
        print!("{}", output::table(&engine.table_rows(&run)));
        if status != Status::Done {
            bail!("job `{job}` ended {status}");
        }
        return Ok(());
    }

    let report = match args.parallel {
        Some(n) => engine.run_parallel(&mut run, n.into(), options)?,
        None => engine.run_topo(&mut run, options)?,
    };
    print!("{}", output::table(&engine.table_rows(&run)));
    match report.outcome {
        RunOutcome::Completed | RunOutcome::DryRun => Ok(()),
        RunOutcome::Halted { failed, blocked } => {
            bail!("workflow `{name}` halted: failed {failed:?}, not run {blocked:?}")
        }
        RunOutcome::Interrupted => bail!("workflow `{name}` was interrupted"),
    }
}

fn status(ctx: &Context, args: StatusArgs) -> Result<()> {
    let engine = ctx.engine();
    let mut run = engine.load(&args.name)?;
    engine.refresh(&mut run)?;
    let rows = engine.table_rows(&run);
    match args.output {
        StatusOutput::Table => print!("{}", output::table(&rows)),
        StatusOutput::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        StatusOutput::Yaml => print!("{}", serde_yaml::to_string(&rows)?),
    }
    Ok(())
}

fn graph(ctx: &Context, args: GraphArgs) -> Result<()> {
    let engine = ctx.engine();
    let mut run = engine.load(&args.name)?;
    engine.refresh(&mut run)?;
    let extension = match args.format {
        GraphFormatArg::Svg => "svg",
        GraphFormatArg::Dot => "dot",
    };
    let output = args.output.unwrap_or_else(|| {
        engine
            .store()
            .workflow_dir(&args.name)
            .join(format!("{}.{extension}", args.name))
    });
    match args.format {
        GraphFormatArg::Svg => {
            std::fs::write(&output, engine.svg(&run)?)
        }
        GraphFormatArg::Dot => std::fs::write(&output, engine.dot(&run)),
    }
    .with_context(|| format!("cannot write {}", output.display()))?;
    println!("{}", output.display());
    Ok(())
}
