//! Workflow engine.
//!
//! The engine drives a [`WorkflowRun`] through its graph: structural nodes
//! complete instantly, job nodes are launched through the [`Executor`] and
//! watched until their logs report a terminal status. Every transition is
//! written to the [`StateStore`] before anything else happens, and a fresh
//! engine re-derives the state of in-flight jobs from their logs
//! ([`Engine::refresh`]), so runs survive the loss of the client.

mod store;

pub use store::{valid_name, StateStore};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Local};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::executors::{ExecConfig, ExecError, Executor, JobHandle, KillOutcome};
use crate::model::{JobKind, ModelError, NodeRuntime, NodeSpec, Progress, Status};
use crate::render::{builtin_svg, to_dot, RenderContext, RenderError, RenderOptions, SvgRenderer};
use crate::specfile::{MissingScript, SpecError, VariableStore, WorkflowDocument};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("`{0}` already exists")]
    AlreadyExists(String),
    #[error("workflow `{0}` has jobs in progress")]
    ActiveRun(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Spec(SpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<SpecError> for EngineError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::AlreadyExists(name) => EngineError::AlreadyExists(name),
            SpecError::Model(m) => EngineError::Model(m),
            SpecError::Io(io) => EngineError::Io(io),
            other => EngineError::Spec(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineSettings {
    /// Interval between probes of running jobs.
    pub poll_period: Duration,
    /// Write `<name>.dot` and `<name>.svg` next to the state file after
    /// every transition.
    pub show: bool,
    pub render: RenderOptions,
    pub renderer: SvgRenderer,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            poll_period: Duration::from_secs(1),
            show: false,
            render: RenderOptions::default(),
            renderer: SvgRenderer::from_env(),
        }
    }
}

/// A workflow document together with what the engine learned about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowRun {
    pub document: WorkflowDocument,
    /// Latest executor error per node, as of the last refresh.
    pub errors: BTreeMap<String, String>,
}

impl WorkflowRun {
    pub fn new(document: WorkflowDocument) -> Self {
        WorkflowRun {
            document,
            errors: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.document.name
    }

    pub fn node(&self, name: &str) -> Result<&NodeSpec, EngineError> {
        self.document
            .graph
            .node(name)
            .ok_or_else(|| EngineError::NotFound(format!("job `{name}`")))
    }

    fn node_mut(&mut self, name: &str) -> Result<&mut NodeSpec, EngineError> {
        self.document
            .graph
            .node_mut(name)
            .ok_or_else(|| EngineError::NotFound(format!("job `{name}`")))
    }

    /// Any node submitted or running.
    pub fn is_active(&self) -> bool {
        self.document.graph.nodes().any(|n| n.status.is_active())
    }

    pub fn is_complete(&self) -> bool {
        self.document.graph.nodes().all(|n| n.status == Status::Done)
    }

    fn names_with(&self, pred: impl Fn(Status) -> bool) -> Vec<String> {
        self.document
            .graph
            .nodes()
            .filter(|n| pred(n.status))
            .map(|n| n.name.clone())
            .collect()
    }
}

/// Attributes of a job to add. `command` is accepted as a synonym of `exec`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobParams {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    #[serde(default, alias = "command", skip_serializing_if = "Option::is_none")]
    pub exec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venv: Option<String>,
}

impl JobParams {
    pub fn named(name: impl Into<String>) -> Self {
        JobParams {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Builds parameters from `key=value` style pairs.
    pub fn from_pairs<K, V>(name: impl Into<String>, pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self, EngineError>
    where
        K: AsRef<str>,
        V: Into<String>,
    {
        let mut params = JobParams::named(name);
        for (key, value) in pairs {
            let value = value.into();
            let slot = match key.as_ref() {
                "name" => {
                    params.name = value;
                    continue;
                }
                "progress" => {
                    params.progress = Some(value.trim().parse().map_err(|_| {
                        EngineError::InvalidArgument(format!("progress `{value}` is not an integer"))
                    })?);
                    continue;
                }
                "user" => &mut params.user,
                "host" => &mut params.host,
                "kind" => &mut params.kind,
                "status" => &mut params.status,
                "label" => &mut params.label,
                "script" => &mut params.script,
                "exec" | "command" => &mut params.exec,
                "shape" => &mut params.shape,
                "style" => &mut params.style,
                "venv" => &mut params.venv,
                other => return Err(EngineError::InvalidArgument(format!("unknown job attribute `{other}`"))),
            };
            *slot = Some(value);
        }
        Ok(params)
    }

    pub fn into_node(self) -> Result<NodeSpec, EngineError> {
        let name = self.name.trim().to_string();
        if name.is_empty() || name.contains(',') || name.chars().any(char::is_whitespace) {
            return Err(EngineError::InvalidArgument(format!("invalid job name `{}`", self.name)));
        }
        let mut node = NodeSpec::new(name);
        if let Some(user) = self.user {
            node.user = user;
        }
        if let Some(host) = self.host {
            node.host = host;
        }
        if let Some(kind) = self.kind {
            node.kind = kind.parse()?;
        }
        node.label = self.label;
        node.script = self.script.filter(|s| !s.is_empty());
        node.exec = self.exec.filter(|s| !s.is_empty());
        node.shape = self.shape;
        node.style = self.style;
        node.venv = self.venv;
        node.status = match self.status {
            Some(s) => s.parse()?,
            None => node.initial_status(),
        };
        node.progress = match self.progress {
            Some(p) => Progress::new(p)?,
            None if node.status == Status::Done => Progress::DONE,
            None => Progress::ZERO,
        };
        Ok(node)
    }
}

/// Called after every persisted transition of a run.
pub type Observer<'a> = &'a mut dyn FnMut(&WorkflowRun);

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Compute the plan only.
    pub dryrun: bool,
    pub observer: Option<Observer<'a>>,
    /// When set, the run stops launching and watching jobs and returns
    /// [`RunOutcome::Interrupted`]; jobs in flight keep running detached.
    pub cancel: Option<&'a AtomicBool>,
}

impl<'a> RunOptions<'a> {
    pub fn dryrun() -> Self {
        RunOptions {
            dryrun: true,
            ..RunOptions::default()
        }
    }

    pub fn observed(observer: Observer<'a>) -> Self {
        RunOptions {
            observer: Some(observer),
            ..RunOptions::default()
        }
    }

    pub fn cancellable(mut self, cancel: &'a AtomicBool) -> Self {
        self.cancel = Some(cancel);
        self
    }

    fn cancelled(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    DryRun,
    Completed,
    /// Some nodes failed (or were killed); `blocked` never became ready.
    Halted { failed: Vec<String>, blocked: Vec<String> },
    /// Cancelled before the end; the run clock keeps running so the run can
    /// be resumed.
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    /// Topological order of the graph.
    pub plan: Vec<String>,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefreshReport {
    /// Nodes whose status or progress changed.
    pub updated: Vec<String>,
    /// Nodes whose resource could not be probed.
    pub errors: BTreeMap<String, String>,
}

/// One line of the status table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub status: Status,
    pub progress: u8,
    pub kind: JobKind,
    pub user: String,
    pub host: String,
    pub command: Option<String>,
    pub tstart: Option<DateTime<Local>>,
    pub tend: Option<DateTime<Local>>,
    pub error: Option<String>,
}

const WATCH_ERROR_LIMIT: usize = 3;

#[derive(Debug, Clone)]
pub struct Engine {
    store: StateStore,
    executor: Executor,
    settings: EngineSettings,
}

impl Engine {
    pub fn new(store: StateStore, executor: Executor, settings: EngineSettings) -> Self {
        Engine {
            store,
            executor,
            settings,
        }
    }

    /// An engine over the store at `root`, configured from the environment.
    pub fn open(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Engine::new(
            StateStore::new(&root),
            Executor::new(ExecConfig::from_env(&root)),
            EngineSettings::default(),
        )
    }

    pub fn store(&self) -> &StateStore {
        &self.store
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn settings_mut(&mut self) -> &mut EngineSettings {
        &mut self.settings
    }

    // --- workflows -------------------------------------------------------

    pub fn list_workflows(&self) -> Result<Vec<String>, EngineError> {
        self.store.list()
    }

    pub fn load(&self, name: &str) -> Result<WorkflowRun, EngineError> {
        Ok(WorkflowRun::new(self.store.load(name)?))
    }

    /// Imports a YAML file (and the scripts it references) into the store.
    pub fn add_workflow_file(
        &self,
        path: &Path,
        name: Option<&str>,
    ) -> Result<(WorkflowRun, Vec<MissingScript>), EngineError> {
        let (doc, warnings) = self.store.import_file(path, name)?;
        Ok((WorkflowRun::new(doc), warnings))
    }

    /// Imports a tar archive holding one YAML file and its scripts, under
    /// `name` if given (default: the YAML file stem).
    pub fn add_workflow_archive(
        &self,
        path: &Path,
        name: Option<&str>,
    ) -> Result<(WorkflowRun, Vec<MissingScript>), EngineError> {
        let loaded = self.store.import_archive(path, name)?;
        Ok((WorkflowRun::new(loaded.document), loaded.warnings))
    }

    /// A new, empty workflow.
    pub fn create_workflow(&self, name: &str) -> Result<WorkflowRun, EngineError> {
        valid_name(name)?;
        if self.store.exists(name) {
            return Err(EngineError::AlreadyExists(name.to_string()));
        }
        let mut doc = WorkflowDocument::new(name, self.store.workflow_dir(name));
        doc.clock.created = Some(Local::now());
        self.store.save(&doc)?;
        Ok(WorkflowRun::new(doc))
    }

    /// Loads `name`, creating an empty workflow if there is none.
    pub fn open_or_create(&self, name: &str) -> Result<WorkflowRun, EngineError> {
        if self.store.exists(name) {
            self.load(name)
        } else {
            self.create_workflow(name)
        }
    }

    pub fn save(&self, run: &WorkflowRun) -> Result<(), EngineError> {
        self.store.save(&run.document)
    }

    /// Writes the workflow as YAML to `path`.
    pub fn export(&self, run: &WorkflowRun, path: &Path, with_state: bool) -> Result<(), EngineError> {
        std::fs::write(path, run.document.serialize(with_state)?)?;
        Ok(())
    }

    /// Deletes a workflow and its local files, and removes the logs its
    /// remote jobs left behind (best effort). Refused while jobs run.
    pub fn remove_workflow(&self, name: &str) -> Result<(), EngineError> {
        let mut run = self.load(name)?;
        self.refresh(&mut run)?;
        if run.is_active() {
            return Err(EngineError::ActiveRun(name.to_string()));
        }
        for node in run.document.graph.nodes() {
            if matches!(node.kind, JobKind::Ssh | JobKind::Slurm) {
                if let Some(mut handle) = self.handle_for(&run, &node.name) {
                    if let Err(e) = self.executor.clear(&mut handle) {
                        warn!(job = %node.name, error = %e, "could not remove remote log");
                    }
                }
            }
        }
        self.store.remove(name)
    }

    // --- jobs ------------------------------------------------------------

    pub fn job<'r>(&self, run: &'r WorkflowRun, name: &str) -> Result<&'r NodeSpec, EngineError> {
        run.node(name)
    }

    pub fn add_job(&self, run: &mut WorkflowRun, params: JobParams) -> Result<(), EngineError> {
        let node = params.into_node()?;
        if run.document.graph.contains(&node.name) {
            return Err(EngineError::AlreadyExists(format!("job `{}`", node.name)));
        }
        run.document.graph.add_node(node)?;
        self.store.save(&run.document)
    }

    /// Adds the edges of a chain `a,b,c`. A chain that would close a cycle is
    /// rejected and leaves the workflow unchanged.
    pub fn add_dependencies(&self, run: &mut WorkflowRun, chain: &str) -> Result<(), EngineError> {
        let mut doc = run.document.clone();
        doc.add_dependencies(chain)?;
        if let Some(cycle) = doc.graph.detect_cycle() {
            return Err(ModelError::CycleDetected(cycle).into());
        }
        run.document = doc;
        self.store.save(&run.document)
    }

    pub fn remove_job(&self, run: &mut WorkflowRun, name: &str) -> Result<NodeSpec, EngineError> {
        if run.node(name)?.status.is_active() {
            return Err(EngineError::ActiveRun(format!("{} (job `{name}` is active)", run.name())));
        }
        let node = run
            .document
            .remove_node(name)
            .ok_or_else(|| EngineError::NotFound(format!("job `{name}`")))?;
        self.store.save(&run.document)?;
        Ok(node)
    }

    /// Sets a node's status. `ready` resets the node and removes its log, so
    /// the next run starts it afresh; `done` implies progress 100.
    pub fn update_status(&self, run: &mut WorkflowRun, name: &str, status: Status) -> Result<(), EngineError> {
        run.node(name)?;
        if status == Status::Ready {
            if let Some(mut handle) = self.handle_for(run, name) {
                self.executor.clear(&mut handle)?;
            }
            let node = run.node_mut(name)?;
            node.reset();
            node.status = Status::Ready;
        } else {
            let node = run.node_mut(name)?;
            node.status = status;
            if status == Status::Done {
                node.progress = Progress::DONE;
            }
        }
        run.errors.remove(name);
        self.store.save(&run.document)
    }

    pub fn update_progress(&self, run: &mut WorkflowRun, name: &str, progress: Progress) -> Result<(), EngineError> {
        run.node_mut(name)?.progress = progress;
        self.store.save(&run.document)
    }

    /// Resets every node to its declared starting point and removes the job
    /// logs, so the next run starts from scratch.
    pub fn reset(&self, run: &mut WorkflowRun) -> Result<(), EngineError> {
        if run.is_active() {
            return Err(EngineError::ActiveRun(run.name().to_string()));
        }
        let names: Vec<String> = run.document.graph.names().map(String::from).collect();
        for name in &names {
            if let Some(mut handle) = self.handle_for(run, name) {
                self.executor.clear(&mut handle)?;
            }
            run.node_mut(name)?.reset();
        }
        run.errors.clear();
        run.document.clock.t0 = None;
        run.document.clock.t1 = None;
        run.document.clock.run_id = None;
        self.store.save(&run.document)
    }

    pub fn kill_job(&self, run: &mut WorkflowRun, name: &str) -> Result<KillOutcome, EngineError> {
        let mut handle = self
            .handle_for(run, name)
            .ok_or_else(|| EngineError::InvalidArgument(format!("`{name}` is not a job")))?;
        let outcome = self.executor.kill(&mut handle)?;
        if absorb(run.node_mut(name)?, &handle) {
            self.store.save(&run.document)?;
        }
        Ok(outcome)
    }

    /// The executor handle of a job node.
    pub fn handle_for(&self, run: &WorkflowRun, name: &str) -> Option<JobHandle> {
        let node = run.document.graph.node(name)?;
        self.executor
            .handle(node, &run.document.name, &run.document.source_directory)
    }

    /// Handles of all job nodes, in declaration order.
    pub fn handles(&self, run: &WorkflowRun) -> IndexMap<String, JobHandle> {
        run.document
            .graph
            .names()
            .filter_map(|n| self.handle_for(run, n).map(|h| (n.to_string(), h)))
            .collect()
    }

    // --- state recovery --------------------------------------------------

    /// Re-derives the state of unfinished jobs from their logs. Active jobs
    /// are polled (a vanished process becomes `failed`); ready jobs adopt
    /// whatever their log reports; finished jobs are left alone. Resources
    /// that cannot be reached are reported, not fatal.
    pub fn refresh(&self, run: &mut WorkflowRun) -> Result<RefreshReport, EngineError> {
        let mut report = RefreshReport::default();
        let names: Vec<String> = run.document.graph.names().map(String::from).collect();
        for name in names {
            let status = run.node(&name)?.status;
            if status.is_terminal() {
                continue;
            }
            let Some(mut handle) = self.handle_for(run, &name) else {
                continue;
            };
            let result = if status.is_active() {
                self.executor.poll(&mut handle).map(|_| ())
            } else {
                self.executor.probe(&handle).map(|p| {
                    if p.matched {
                        handle.node.status = p.record.status;
                        handle.node.progress = p.record.progress;
                        handle.pid = handle.pid.or(p.record.pid);
                    }
                })
            };
            match result {
                Ok(()) => {
                    run.errors.remove(&name);
                    if absorb(run.node_mut(&name)?, &handle) {
                        report.updated.push(name);
                    }
                }
                Err(e) => {
                    debug!(job = %name, error = %e, "refresh failed");
                    run.errors.insert(name.clone(), e.to_string());
                    report.errors.insert(name, e.to_string());
                }
            }
        }
        if !report.updated.is_empty() {
            self.store.save(&run.document)?;
        }
        Ok(report)
    }

    // --- running ---------------------------------------------------------

    /// Runs nodes one at a time in topological order, halting at the first
    /// failure. Finished nodes are skipped and nodes already in flight are
    /// watched rather than relaunched, so a run can be resumed.
    pub fn run_topo(&self, run: &mut WorkflowRun, mut options: RunOptions<'_>) -> Result<RunReport, EngineError> {
        let plan = run.document.graph.topological_order()?;
        if options.dryrun {
            return Ok(RunReport {
                plan,
                outcome: RunOutcome::DryRun,
            });
        }
        self.refresh(run)?;
        self.begin(run, &mut options)?;
        for name in &plan {
            let status = self.drive(run, name, &mut options)?;
            if status != Status::Done {
                break;
            }
        }
        if options.cancelled() && !run.is_complete() {
            return Ok(interrupted(plan));
        }
        self.finish(run, plan, &mut options)
    }

    /// Runs every ready node as soon as its predecessors are done, with at
    /// most `max_parallel` jobs in flight. A failure blocks only the
    /// failed node's descendants; independent branches keep going.
    pub fn run_parallel(
        &self,
        run: &mut WorkflowRun,
        max_parallel: usize,
        mut options: RunOptions<'_>,
    ) -> Result<RunReport, EngineError> {
        if max_parallel == 0 {
            return Err(EngineError::InvalidArgument("max_parallel must be at least 1".into()));
        }
        let plan = run.document.graph.topological_order()?;
        if options.dryrun {
            return Ok(RunReport {
                plan,
                outcome: RunOutcome::DryRun,
            });
        }
        self.refresh(run)?;
        self.begin(run, &mut options)?;

        let mut active: IndexMap<String, JobHandle> = run
            .names_with(Status::is_active)
            .into_iter()
            .filter_map(|n| self.handle_for(run, &n).map(|h| (n, h)))
            .collect();
        let mut poll_errors: HashMap<String, usize> = HashMap::new();
        loop {
            if options.cancelled() {
                return Ok(interrupted(plan));
            }
            let completed: HashSet<String> = run.names_with(|s| s == Status::Done).into_iter().collect();
            let mut excluded: HashSet<String> = run.names_with(|s| s.is_terminal()).into_iter().collect();
            excluded.extend(active.keys().cloned());
            let ready = run.document.graph.ready_set(&completed, &excluded);

            let mut changed = false;
            let mut structural_done = false;
            for name in ready {
                if run.node(&name)?.is_structural() {
                    complete_structural(run.node_mut(&name)?);
                    structural_done = true;
                    changed = true;
                } else if active.len() < max_parallel {
                    if let Some(handle) = self.start(run, &name) {
                        active.insert(name, handle);
                    }
                    changed = true;
                }
            }
            if changed {
                self.commit(run, &mut options)?;
            }
            if structural_done {
                continue;
            }
            if active.is_empty() {
                break;
            }

            thread::sleep(self.settings.poll_period);
            let mut changed = false;
            let mut finished = Vec::new();
            for (name, handle) in active.iter_mut() {
                match self.executor.poll(handle) {
                    Ok(record) => {
                        poll_errors.remove(name);
                        changed |= absorb(run.node_mut(name)?, handle);
                        if record.status.is_terminal() {
                            finished.push(name.clone());
                        }
                    }
                    Err(e) => {
                        let count = poll_errors.entry(name.clone()).or_default();
                        *count += 1;
                        run.node_mut(name)?.runtime.error = Some(e.to_string());
                        if *count >= WATCH_ERROR_LIMIT {
                            self.commit(run, &mut options)?;
                            return Err(e.into());
                        }
                    }
                }
            }
            for name in finished {
                active.shift_remove(&name);
            }
            if changed {
                self.commit(run, &mut options)?;
            }
        }
        self.finish(run, plan, &mut options)
    }

    /// Runs a single job regardless of its dependencies and waits for it.
    /// A finished job is started again; a job in flight is only watched.
    pub fn run_job(&self, run: &mut WorkflowRun, name: &str, mut options: RunOptions<'_>) -> Result<Status, EngineError> {
        let node = run.node_mut(name)?;
        if node.is_structural() {
            complete_structural(node);
            self.commit(run, &mut options)?;
            return Ok(Status::Done);
        }
        if node.status.is_terminal() {
            node.reset();
        }
        self.drive(run, name, &mut options)
    }

    /// Runs or resumes one node and waits until it is terminal.
    /// Returns early, with the node still pending, when the run is cancelled.
    fn drive(&self, run: &mut WorkflowRun, name: &str, options: &mut RunOptions<'_>) -> Result<Status, EngineError> {
        let node = run.node(name)?;
        if node.status.is_terminal() || options.cancelled() {
            return Ok(node.status);
        }
        if node.is_structural() {
            complete_structural(run.node_mut(name)?);
            self.commit(run, options)?;
            return Ok(Status::Done);
        }
        let resumed = node.status.is_active();
        let mut handle = match self.handle_for(run, name) {
            Some(h) if resumed => h,
            _ => {
                let started = self.start(run, name);
                self.commit(run, options)?;
                match started {
                    Some(h) => h,
                    None => return Ok(Status::Failed),
                }
            }
        };
        if resumed {
            info!(job = name, "resuming");
        }
        let mut errors = 0;
        loop {
            match self.executor.poll(&mut handle) {
                Ok(record) => {
                    errors = 0;
                    if absorb(run.node_mut(name)?, &handle) {
                        self.commit(run, options)?;
                    }
                    if record.status.is_terminal() || options.cancelled() {
                        return Ok(record.status);
                    }
                }
                Err(e) => {
                    errors += 1;
                    warn!(job = name, error = %e, "probe failed");
                    if errors >= WATCH_ERROR_LIMIT {
                        run.node_mut(name)?.runtime.error = Some(e.to_string());
                        self.commit(run, options)?;
                        return Err(e.into());
                    }
                }
            }
            thread::sleep(self.settings.poll_period);
        }
    }

    /// Launches a job node. On failure the node is marked failed with the
    /// error recorded, and `None` is returned. Nothing is persisted here.
    fn start(&self, run: &mut WorkflowRun, name: &str) -> Option<JobHandle> {
        match self.launch(run, name) {
            Ok(handle) => {
                info!(job = name, pid = ?handle.pid, slurm_job_id = ?handle.slurm_job_id, "launched");
                let node = run.document.graph.node_mut(name)?;
                node.status = Status::Submitted;
                node.progress = Progress::ZERO;
                node.runtime = NodeRuntime {
                    pid: handle.pid,
                    slurm_job_id: handle.slurm_job_id.clone(),
                    tstart: Some(Local::now()),
                    tend: None,
                    error: None,
                };
                Some(handle)
            }
            Err(e) => {
                warn!(job = name, error = %e, "launch failed");
                let node = run.document.graph.node_mut(name)?;
                node.status = Status::Failed;
                node.runtime.error = Some(e.to_string());
                let now = Local::now();
                node.runtime.tstart.get_or_insert(now);
                node.runtime.tend = Some(now);
                None
            }
        }
    }

    fn launch(&self, run: &WorkflowRun, name: &str) -> Result<JobHandle, ExecError> {
        let mut handle = self
            .handle_for(run, name)
            .ok_or_else(|| ExecError::Structural(name.to_string()))?;
        handle.node.status = Status::Ready;
        self.executor.sync(&handle)?;
        self.executor.clear(&mut handle)?;
        self.executor.run(&handle)
    }

    /// Starts the run clock unless a run is being resumed.
    fn begin(&self, run: &mut WorkflowRun, options: &mut RunOptions<'_>) -> Result<(), EngineError> {
        let clock = &mut run.document.clock;
        if clock.t0.is_none() || clock.t1.is_some() {
            let now = Local::now();
            clock.t0 = Some(now);
            clock.t1 = None;
            clock.run_id = Some(now.format("%Y%m%d-%H%M%S").to_string());
        }
        self.commit(run, options)
    }

    fn finish(&self, run: &mut WorkflowRun, plan: Vec<String>, options: &mut RunOptions<'_>) -> Result<RunReport, EngineError> {
        run.document.clock.t1 = Some(Local::now());
        self.commit(run, options)?;
        let outcome = if run.is_complete() {
            RunOutcome::Completed
        } else {
            RunOutcome::Halted {
                failed: run.names_with(|s| matches!(s, Status::Failed | Status::Killed)),
                blocked: run.names_with(|s| !s.is_terminal()),
            }
        };
        Ok(RunReport { plan, outcome })
    }

    /// Persists the run, refreshes the snapshot files if requested, and
    /// notifies the observer.
    fn commit(&self, run: &WorkflowRun, options: &mut RunOptions<'_>) -> Result<(), EngineError> {
        self.store.save(&run.document)?;
        if self.settings.show {
            self.write_snapshot(run);
        }
        if let Some(observer) = options.observer.as_mut() {
            observer(run);
        }
        Ok(())
    }

    // --- views -----------------------------------------------------------

    pub fn table_rows(&self, run: &WorkflowRun) -> Vec<TableRow> {
        let graph = &run.document.graph;
        let order = graph
            .topological_order()
            .unwrap_or_else(|_| graph.names().map(String::from).collect());
        order
            .iter()
            .filter_map(|n| graph.node(n))
            .map(|n| TableRow {
                name: n.name.clone(),
                status: n.status,
                progress: n.progress.value(),
                kind: n.kind,
                user: n.user.clone(),
                host: n.host.clone(),
                command: n.command().map(String::from),
                tstart: n.runtime.tstart,
                tend: n.runtime.tend,
                error: run.errors.get(&n.name).cloned().or_else(|| n.runtime.error.clone()),
            })
            .collect()
    }

    pub fn render_context(&self, run: &WorkflowRun) -> RenderContext {
        RenderContext {
            now: Some(Local::now()),
            modified: self.store.modified(run.name()),
            vars: VariableStore::load(&self.store.variables_file()).unwrap_or_default(),
        }
    }

    pub fn dot(&self, run: &WorkflowRun) -> String {
        to_dot(&run.document, &self.settings.render, &self.render_context(run))
    }

    /// SVG of the graph through the external renderer, or through
    /// [`builtin_svg`] when that is not installed.
    pub fn svg(&self, run: &WorkflowRun) -> Result<String, EngineError> {
        let ctx = self.render_context(run);
        let dot = to_dot(&run.document, &self.settings.render, &ctx);
        let dir = self.store.workflow_dir(run.name());
        std::fs::create_dir_all(&dir)?;
        static RENDERS: AtomicU64 = AtomicU64::new(0);
        let serial = RENDERS.fetch_add(1, Ordering::Relaxed);
        let output = dir.join(format!(".{}.{}-{serial}.svg", run.name(), std::process::id()));
        let result = self.settings.renderer.render_svg(&dot, &output);
        let svg = match result {
            Ok(path) => {
                let text = std::fs::read_to_string(&path);
                let _ = std::fs::remove_file(&path);
                text?
            }
            Err(RenderError::RendererMissing { program }) => {
                debug!(%program, "renderer missing; using built-in layout");
                builtin_svg(&run.document, &self.settings.render, &ctx)
            }
            Err(e) => return Err(e.into()),
        };
        Ok(svg)
    }

    /// Writes the SVG of the graph to `output`.
    pub fn render_svg(&self, run: &WorkflowRun, output: &Path) -> Result<PathBuf, EngineError> {
        std::fs::write(output, self.svg(run)?)?;
        Ok(output.to_path_buf())
    }

    fn write_snapshot(&self, run: &WorkflowRun) {
        let dir = self.store.workflow_dir(run.name());
        if let Err(e) = std::fs::write(dir.join(format!("{}.dot", run.name())), self.dot(run)) {
            warn!(error = %e, "could not write graph snapshot");
            return;
        }
        if let Err(e) = self.render_svg(run, &dir.join(format!("{}.svg", run.name()))) {
            debug!(error = %e, "no svg snapshot");
        }
    }
}

fn interrupted(plan: Vec<String>) -> RunReport {
    RunReport {
        plan,
        outcome: RunOutcome::Interrupted,
    }
}

fn complete_structural(node: &mut NodeSpec) {
    let now = Local::now();
    node.status = Status::Done;
    node.progress = Progress::DONE;
    node.runtime.tstart.get_or_insert(now);
    node.runtime.tend = Some(now);
}

/// Copies what a poll learned into the node; stamps start and end times.
/// Returns whether anything changed.
fn absorb(node: &mut NodeSpec, handle: &JobHandle) -> bool {
    let before = node.clone();
    node.status = handle.node.status;
    node.progress = handle.node.progress;
    if handle.pid.is_some() {
        node.runtime.pid = handle.pid;
    }
    if handle.slurm_job_id.is_some() {
        node.runtime.slurm_job_id = handle.slurm_job_id.clone();
    }
    let now = Local::now();
    if node.status.is_active() || node.status.is_terminal() {
        node.runtime.tstart.get_or_insert(now);
    }
    if node.status.is_terminal() && node.runtime.tend.is_none() {
        node.runtime.tend = Some(now);
    }
    *node != before
}
