//! Command grammar.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

/// The supported command forms, shown with usage errors.
pub const GRAMMAR: &str = "\
Usage:
  hyflow [--root=DIR] cc workflow add [--name=NAME] [--job=JOB] ARGS...
  hyflow [--root=DIR] cc workflow add [--name=NAME] --filename=FILENAME
  hyflow [--root=DIR] cc workflow delete [--name=NAME] [--job=JOB]
  hyflow [--root=DIR] cc workflow list [--name=NAME] [--job=JOB]
  hyflow [--root=DIR] cc workflow run [--name=NAME] [--job=JOB] [--filename=FILENAME]
                                      [--parallel=N] [--reset] [--show] [--dryrun]
  hyflow [--root=DIR] cc workflow [--name=NAME] --dependencies=DEPENDENCIES
  hyflow [--root=DIR] cc workflow status --name=NAME [--output=table|json|yaml]
  hyflow [--root=DIR] cc workflow graph --name=NAME [--output=FILE] [--format=svg|dot]
  hyflow [--root=DIR] cc start [-c] [--reload] [--host=HOST] [--port=PORT]
  hyflow [--root=DIR] cc stop
  hyflow [--root=DIR] cc status
  hyflow [--root=DIR] cc view
  hyflow cc workflow service add [--name=NAME] FILENAME
  hyflow cc workflow service add [--name=NAME] [--job=JOB] ARGS...
  hyflow cc workflow service list [--name=NAME] [--job=JOB]
  hyflow cc workflow service run --name=NAME [--show] [--parallel=N] [--wait]

ARGS are job attributes as key=value pairs: user, host, kind (local, ssh,
slurm), status, progress, label, script, exec (or command), shape, style, venv.
Without --name, commands act on the workflow named `workflow`.";

/// Workflow used when `--name` is not given.
pub const DEFAULT_WORKFLOW: &str = "workflow";

#[derive(Debug, Parser)]
#[command(name = "hyflow", version, about = "Run workflows of local, ssh and Slurm jobs", after_help = GRAMMAR)]
pub struct Cli {
    /// Directory holding workflow state [default: ~/.cloudmesh-cc/workflows]
    #[arg(long, global = true, env = "HYFLOW_ROOT", value_name = "DIR")]
    pub root: Option<PathBuf>,

    /// Seconds between probes of running jobs.
    #[arg(long, global = true, env = "HYFLOW_POLL", value_name = "SECONDS", value_parser = parse_seconds)]
    pub poll: Option<f64>,

    /// Service address used by `cc workflow service` [default: the running service, else http://127.0.0.1:8000]
    #[arg(long, global = true, env = "HYFLOW_SERVICE_URL", value_name = "URL")]
    pub service_url: Option<String>,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Top,
}

#[derive(Debug, Subcommand)]
pub enum Top {
    /// Workflows and the workflow service.
    Cc(Cc),
}

#[derive(Debug, Args)]
pub struct Cc {
    #[command(subcommand)]
    pub command: CcCommand,
}

#[derive(Debug, Subcommand)]
pub enum CcCommand {
    /// Manage and run workflows.
    Workflow(WorkflowCommand),
    /// Start the service.
    Start(StartArgs),
    /// Stop the service.
    Stop,
    /// Report whether the service is running.
    Status,
    /// Open the browser interface of the service.
    View,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct WorkflowCommand {
    #[command(subcommand)]
    pub command: Option<WorkflowVerb>,

    #[arg(long)]
    pub name: Option<String>,

    /// Dependency chain `a,b,c` (repeatable).
    #[arg(long, required = true, value_name = "DEPENDENCIES")]
    pub dependencies: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum WorkflowVerb {
    /// Add a job from key=value ARGS, or a workflow from a YAML or tar file.
    Add(AddArgs),
    /// Delete a workflow or one of its jobs.
    Delete(NameJob),
    /// List workflows, or show a workflow or one of its jobs.
    List(NameJob),
    /// Run a workflow (or one job) in the foreground.
    Run(RunArgs),
    /// Show job states.
    Status(StatusArgs),
    /// Render the workflow graph.
    Graph(GraphArgs),
    /// Talk to the workflow service.
    Service(ServiceCommand),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(true).args(["filename", "args", "job"])))]
pub struct AddArgs {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, conflicts_with = "filename")]
    pub job: Option<String>,
    #[arg(long, value_name = "FILENAME")]
    pub filename: Option<PathBuf>,
    /// Job attributes as key=value.
    #[arg(value_name = "ARGS", value_parser = parse_pair, conflicts_with = "filename")]
    pub args: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct NameJob {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub job: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub name: Option<String>,
    /// Run only this job, regardless of its dependencies.
    #[arg(long)]
    pub job: Option<String>,
    /// Import this YAML or tar file first, unless the workflow exists.
    #[arg(long, value_name = "FILENAME")]
    pub filename: Option<PathBuf>,
    /// Run up to N jobs at once; a failure only stops its descendants.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: Option<u16>,
    /// Reset all jobs to their initial state first.
    #[arg(long)]
    pub reset: bool,
    /// Write `<name>.dot` and `<name>.svg` after every transition.
    #[arg(long)]
    pub show: bool,
    /// Print the plan without running anything.
    #[arg(long, conflicts_with_all = ["reset", "show"])]
    pub dryrun: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatusOutput {
    Table,
    Json,
    Yaml,
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    #[arg(long, required = true)]
    pub name: String,
    #[arg(long, value_enum, default_value_t = StatusOutput::Table)]
    pub output: StatusOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormatArg {
    Svg,
    Dot,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long, required = true)]
    pub name: String,
    /// Destination [default: <root>/<name>/<name>.svg]
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GraphFormatArg::Svg)]
    pub format: GraphFormatArg,
}

#[derive(Debug, Args)]
pub struct StartArgs {
    /// Run in the foreground instead of detaching.
    #[arg(short = 'c')]
    pub foreground: bool,
    /// Stop a running service first.
    #[arg(long)]
    pub reload: bool,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8000, value_parser = clap::value_parser!(u16).range(1..))]
    pub port: u16,
    /// Directory with a browser UI to serve at `/`.
    #[arg(long, env = "HYFLOW_UI", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Do not pick up runs left unfinished by a previous service.
    #[arg(long)]
    pub no_resume: bool,
}

#[derive(Debug, Args)]
pub struct ServiceCommand {
    #[command(subcommand)]
    pub command: ServiceVerb,
}

#[derive(Debug, Subcommand)]
pub enum ServiceVerb {
    /// Upload a YAML or tar FILENAME, or add a job from key=value ARGS.
    Add(ServiceAddArgs),
    /// List workflows, or show a workflow or one of its jobs.
    List(NameJob),
    /// Start a run on the service.
    Run(ServiceRunArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).multiple(true).args(["items", "job"])))]
pub struct ServiceAddArgs {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub job: Option<String>,
    /// FILENAME, or job attributes as key=value.
    #[arg(value_name = "FILENAME|ARGS")]
    pub items: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServiceRunArgs {
    #[arg(long, required = true)]
    pub name: String,
    #[arg(long)]
    pub show: bool,
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: Option<u16>,
    /// Wait for the run to finish and print the final table.
    #[arg(long)]
    pub wait: bool,
}

pub fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(format!("expected key=value, got `{s}`")),
    }
}

fn parse_seconds(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 && v <= 3600.0 => Ok(v),
        _ => Err(format!("`{s}` is not a number of seconds in (0, 3600]")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn parse(line: &str) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("hyflow").chain(line.split_whitespace()))
    }

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_form_parses() {
        for line in [
            "cc workflow add --name=w --job=a kind=local exec=true",
            "cc workflow add name=a exec=true",
            "cc workflow add --name=w --filename=w.yaml",
            "cc workflow add --job=a",
            "cc workflow delete",
            "cc workflow delete --name=w --job=a",
            "cc workflow list",
            "cc workflow list --name=w --job=a",
            "cc workflow run",
            "cc workflow run --name=w --job=a --filename=w.yaml",
            "cc workflow run --name=w --parallel=3 --reset --show",
            "cc workflow run --name=w --dryrun",
            "cc workflow --name=w --dependencies=a,b,c",
            "cc workflow --dependencies=a,b --dependencies=b,c",
            "cc workflow status --name=w",
            "cc workflow status --name=w --output=json",
            "cc workflow graph --name=w",
            "cc start",
            "cc start -c --reload --host=0.0.0.0 --port=9000",
            "cc stop",
            "cc status",
            "cc view",
            "cc workflow service add --name=w w.tar",
            "cc workflow service add --name=w --job=a kind=local exec=true",
            "cc workflow service list --name=w --job=a",
            "cc workflow service run --name=w",
            "--root /tmp/x cc workflow list",
        ] {
            if let Err(e) = parse(line) {
                panic!("{line}: {e}");
            }
        }
    }

    #[test]
    fn malformed_forms_are_rejected() {
        for line in [
            "",
            "cc",
            "workflow list",
            "cc workflow",
            "cc workflow --name=w",
            "cc workflow add",
            "cc workflow add --filename=w.yaml kind=local",
            "cc workflow add --name=w notapair",
            "cc workflow status",
            "cc workflow status --name=w --output=xml",
            "cc workflow graph",
            "cc workflow run --parallel=0",
            "cc workflow run --dryrun --reset",
            "cc workflow frobnicate",
            "cc start --port=0",
            "cc start --port=70000",
            "cc workflow service run",
            "cc workflow service add",
            "cc workflow --dependencies=a,b list",
        ] {
            assert!(parse(line).is_err(), "accepted: {line}");
        }
    }

    #[test]
    fn pairs_and_seconds() {
        assert_eq!(parse_pair("exec=echo a=b").unwrap(), ("exec".into(), "echo a=b".into()));
        assert_eq!(parse_pair("label=").unwrap(), ("label".into(), String::new()));
        assert!(parse_pair("=x").is_err());
        assert!(parse_pair("plain").is_err());
        assert_eq!(parse_seconds("0.05").unwrap(), 0.05);
        assert!(parse_seconds("0").is_err());
        assert!(parse_seconds("nan").is_err());
    }
}
