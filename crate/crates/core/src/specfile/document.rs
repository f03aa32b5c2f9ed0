use std::path::{Path, PathBuf};

use chrono::{DateTime, Local};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::SpecError;
use crate::model::{
    parse_chain, JobKind, NodeRuntime, NodeSpec, Progress, Status, WorkflowGraph, DEFAULT_HOST,
};

/// Workflow-level clocks persisted alongside node state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkflowClock {
    pub created: Option<DateTime<Local>>,
    pub t0: Option<DateTime<Local>>,
    pub t1: Option<DateTime<Local>>,
    pub run_id: Option<String>,
}

/// A parsed workflow declaration (and, when loaded from the state store, its
/// last known state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowDocument {
    pub name: String,
    pub graph: WorkflowGraph,
    /// Chains exactly as declared; the graph's edges are derived from them.
    pub dependencies: Vec<String>,
    pub source_directory: PathBuf,
    pub clock: WorkflowClock,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFile {
    workflow: RawWorkflow,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawWorkflow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default)]
    nodes: Option<IndexMap<String, RawNode>>,
    #[serde(default)]
    dependencies: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<RawState>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created: Option<DateTime<Local>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t0: Option<DateTime<Local>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t1: Option<DateTime<Local>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_id: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    host: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    progress: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    script: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    venv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pid: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jobid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tstart: Option<DateTime<Local>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tend: Option<DateTime<Local>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl RawNode {
    fn into_spec(self, key: &str) -> Result<NodeSpec, SpecError> {
        if let Some(name) = &self.name {
            if name != key {
                return Err(SpecError::NameMismatch {
                    key: key.to_string(),
                    name: name.clone(),
                });
            }
        }
        let mut node = NodeSpec::new(key);
        node.user = self.user.unwrap_or_default();
        node.host = self.host.unwrap_or_else(|| DEFAULT_HOST.to_string());
        node.label = self.label;
        node.script = self.script.filter(|s| !s.is_empty());
        node.exec = self.exec.filter(|s| !s.is_empty());
        node.shape = self.shape;
        node.style = self.style;
        node.venv = self.venv;
        if node.script.is_some() && node.exec.is_some() {
            return Err(SpecError::Schema(format!(
                "node `{key}` declares both script and exec"
            )));
        }
        node.kind = match self.kind {
            Some(kind) => kind.parse()?,
            None if node.is_structural() => JobKind::Local,
            None => {
                return Err(SpecError::Schema(format!(
                    "node `{key}` has a script or exec but no kind"
                )))
            }
        };
        node.status = match self.status {
            Some(s) => s.parse()?,
            None => node.initial_status(),
        };
        node.progress = Progress::new(self.progress.unwrap_or(0))?;
        if node.status == Status::Done {
            node.progress = Progress::DONE;
        }
        node.runtime = NodeRuntime {
            pid: self.pid,
            slurm_job_id: self.jobid,
            tstart: self.tstart,
            tend: self.tend,
            error: self.error,
        };
        Ok(node)
    }

    fn from_spec(node: &NodeSpec, with_state: bool) -> RawNode {
        let job = !node.is_structural();
        let mut raw = RawNode {
            name: Some(node.name.clone()),
            user: (job || !node.user.is_empty()).then(|| node.user.clone()),
            host: (job || node.host != DEFAULT_HOST).then(|| node.host.clone()),
            kind: (job || node.kind != JobKind::Local).then(|| node.kind.to_string()),
            label: node.label.clone(),
            script: node.script.clone(),
            exec: node.exec.clone(),
            shape: node.shape.clone(),
            style: node.style.clone(),
            venv: node.venv.clone(),
            ..RawNode::default()
        };
        if with_state {
            raw.status = Some(node.status.to_string());
            raw.progress = Some(node.progress.value().into());
            raw.pid = node.runtime.pid;
            raw.jobid = node.runtime.slurm_job_id.clone();
            raw.tstart = node.runtime.tstart;
            raw.tend = node.runtime.tend;
            raw.error = node.runtime.error.clone();
        } else if job {
            raw.status = Some(node.initial_status().to_string());
        }
        raw
    }
}

impl WorkflowDocument {
    pub fn new(name: impl Into<String>, source_directory: impl Into<PathBuf>) -> Self {
        WorkflowDocument {
            name: name.into(),
            graph: WorkflowGraph::new(),
            dependencies: Vec::new(),
            source_directory: source_directory.into(),
            clock: WorkflowClock::default(),
        }
    }

    /// Parses a `workflow: {nodes, dependencies}` document. The workflow name
    /// comes from an optional `workflow.name` key, else the basename of
    /// `source_directory`; callers that know better overwrite it.
    pub fn parse(text: &str, source_directory: &Path) -> Result<Self, SpecError> {
        let value: serde_yaml::Value =
            serde_yaml::from_str(text).map_err(|e| SpecError::Schema(e.to_string()))?;
        let workflow = value
            .get("workflow")
            .ok_or_else(|| SpecError::Schema("missing top-level `workflow` key".into()))?;
        if workflow.get("nodes").is_none() {
            return Err(SpecError::Schema("missing `workflow.nodes`".into()));
        }
        let raw: RawFile =
            serde_yaml::from_value(value).map_err(|e| SpecError::Schema(e.to_string()))?;
        let raw = raw.workflow;

        let name = raw.name.clone().unwrap_or_else(|| {
            source_directory
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "workflow".to_string())
        });
        let mut doc = WorkflowDocument::new(name, source_directory);
        for (key, node) in raw.nodes.unwrap_or_default() {
            doc.graph.add_node(node.into_spec(&key)?)?;
        }
        for chain in raw.dependencies.unwrap_or_default() {
            doc.add_dependencies(&chain)?;
        }
        if let Some(cycle) = doc.graph.detect_cycle() {
            return Err(SpecError::Model(crate::model::ModelError::CycleDetected(cycle)));
        }
        if let Some(state) = raw.state {
            doc.clock = WorkflowClock {
                created: state.created,
                t0: state.t0,
                t1: state.t1,
                run_id: state.run_id,
            };
        }
        Ok(doc)
    }

    /// Reads a YAML file; the workflow is named after the file stem.
    pub fn from_file(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut doc = Self::parse(&text, &dir)?;
        if let Some(stem) = path.file_stem() {
            doc.name = stem.to_string_lossy().into_owned();
        }
        Ok(doc)
    }

    /// Emits the `workflow: {nodes, dependencies}` layout. Without state, statuses reset to their
    /// declared starting point and progress is omitted.
    pub fn serialize(&self, with_state: bool) -> Result<String, SpecError> {
        let nodes = self
            .graph
            .nodes()
            .map(|n| (n.name.clone(), RawNode::from_spec(n, with_state)))
            .collect();
        let state = with_state.then(|| RawState {
            created: self.clock.created,
            t0: self.clock.t0,
            t1: self.clock.t1,
            run_id: self.clock.run_id.clone(),
        });
        let raw = RawFile {
            workflow: RawWorkflow {
                name: None,
                nodes: Some(nodes),
                dependencies: Some(self.dependencies.clone()),
                state,
            },
        };
        serde_yaml::to_string(&raw).map_err(|e| SpecError::Schema(e.to_string()))
    }

    /// Appends a chain and its edges.
    pub fn add_dependencies(&mut self, chain: &str) -> Result<(), SpecError> {
        self.graph.add_dependency_chain(chain)?;
        let normalized = parse_chain(chain)?.join(",");
        if !self.dependencies.contains(&normalized) {
            self.dependencies.push(normalized);
        }
        Ok(())
    }

    /// Removes a node, its edges, and its occurrences in the dependency
    /// chains. A chain `a,b,c` without `b` splits into `a` and `c`, and
    /// fragments shorter than two names disappear.
    pub fn remove_node(&mut self, name: &str) -> Option<NodeSpec> {
        let node = self.graph.remove_node(name)?;
        let mut chains = Vec::new();
        for chain in &self.dependencies {
            for fragment in chain.split(',').map(str::trim).collect::<Vec<_>>().split(|n| *n == name) {
                if fragment.len() >= 2 {
                    let joined = fragment.join(",");
                    if !chains.contains(&joined) {
                        chains.push(joined);
                    }
                }
            }
        }
        self.dependencies = chains;
        Some(node)
    }

    /// Names of scripts referenced by nodes.
    pub fn referenced_scripts(&self) -> impl Iterator<Item = (&str, &str)> {
        self.graph
            .nodes()
            .filter_map(|n| n.script.as_deref().map(|s| (n.name.as_str(), s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelError;

    pub(crate) const CHAIN_EXAMPLE: &str = r#"workflow:
  nodes:
    start:
       name: start
    fetch-data:
       name: fetch-data
       user: demo
       host: localhost
       kind: local
       status: ready
       label: '{name}\nprogress={progress}'
       script: test-fetch-data.sh
    compute:
       name: compute
       user: demo
       host: localhost
       kind: local
       status: ready
       label: '{name}\nprogress={progress}'
       script: test-compute.sh
    analyze:
      name: analyze
      user: demo
      host: localhost
      kind: local
      status: ready
      label: '{name}\nprogress={progress}'
      script: test-analyze.sh
    end:
       name: end
  dependencies:
    - start,fetch-data,compute,analyze,end
"#;

    const INLINE_EXAMPLE: &str = r#"workflow:
  nodes:
    start:
      label: 'start\nCreated={created}'
      kind: local
      user: grey
      host: local
      status: ready
      exec: 'echo hello'
      name: start
      shape: box
      style: ''
  dependencies: []
"#;

    fn parse(text: &str) -> Result<WorkflowDocument, SpecError> {
        WorkflowDocument::parse(text, Path::new("/tmp/workflow-example"))
    }

    #[test]
    fn parses_the_chain_example() {
        let doc = parse(CHAIN_EXAMPLE).unwrap();
        assert_eq!(doc.name, "workflow-example");
        assert_eq!(doc.graph.len(), 5);
        assert_eq!(doc.graph.edge_count(), 4);
        let scripts: Vec<_> = doc.referenced_scripts().map(|(_, s)| s).collect();
        assert_eq!(
            scripts,
            vec!["test-fetch-data.sh", "test-compute.sh", "test-analyze.sh"]
        );
        let compute = doc.graph.node("compute").unwrap();
        assert_eq!(compute.label.as_deref(), Some("{name}\\nprogress={progress}"));
        assert_eq!(compute.status, Status::Ready);
        assert_eq!(compute.user, "demo");
        let start = doc.graph.node("start").unwrap();
        assert!(start.is_structural());
        assert_eq!(start.status, Status::Undefined);
    }

    #[test]
    fn minimal_document() {
        let doc = parse("workflow: {nodes: {start: {name: start}}, dependencies: []}").unwrap();
        assert_eq!(doc.graph.len(), 1);
        assert_eq!(doc.graph.edge_count(), 0);
    }

    #[test]
    fn shape_and_style_node() {
        let doc = parse(INLINE_EXAMPLE).unwrap();
        let start = doc.graph.node("start").unwrap();
        assert_eq!(start.shape.as_deref(), Some("box"));
        assert_eq!(start.style.as_deref(), Some(""));
        assert_eq!(start.exec.as_deref(), Some("echo hello"));
        assert_eq!(start.host, "local");
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(parse("nodes: {}"), Err(SpecError::Schema(_))));
        assert!(matches!(parse("workflow: {dependencies: []}"), Err(SpecError::Schema(_))));
        assert!(matches!(
            parse("workflow: {nodes: {a: {name: b}}}"),
            Err(SpecError::NameMismatch { .. })
        ));
        assert!(matches!(
            parse("workflow: {nodes: {a: {kind: grid, exec: x}}}"),
            Err(SpecError::Model(ModelError::UnknownKind(_)))
        ));
        assert!(matches!(
            parse("workflow: {nodes: {a: {exec: x}}}"),
            Err(SpecError::Schema(_))
        ));
        assert!(matches!(
            parse("workflow: {nodes: {a: {}, b: {}}, dependencies: ['a,b', 'b,a']}"),
            Err(SpecError::Model(ModelError::CycleDetected(_)))
        ));
        assert!(matches!(
            parse("workflow: {nodes: {a: {}}, dependencies: ['a,a']}"),
            Err(SpecError::Model(ModelError::CycleDetected(_)))
        ));
        assert!(matches!(
            parse("workflow: {nodes: {a: {}}, dependencies: ['a,zz']}"),
            Err(SpecError::Model(ModelError::UnknownNode(_)))
        ));
        assert!(matches!(parse(": : :"), Err(SpecError::Schema(_))));
    }

    #[test]
    fn declaration_round_trip() {
        for text in [CHAIN_EXAMPLE, INLINE_EXAMPLE] {
            let doc = parse(text).unwrap();
            let again = parse(&doc.serialize(false).unwrap()).unwrap();
            assert_eq!(doc, again);
        }
    }

    #[test]
    fn empty_dependencies_round_trip() {
        let doc = parse("workflow: {nodes: {a: {}}, dependencies: []}").unwrap();
        let text = doc.serialize(false).unwrap();
        assert!(text.contains("dependencies: []"), "{text}");
        assert_eq!(parse(&text).unwrap().graph.edge_count(), 0);
    }

    #[test]
    fn state_round_trip_keeps_progress() {
        let mut doc = parse(CHAIN_EXAMPLE).unwrap();
        let node = doc.graph.node_mut("fetch-data").unwrap();
        node.status = Status::Done;
        node.progress = Progress::DONE;
        node.runtime.pid = Some(42);
        doc.clock.t0 = Some(Local::now());
        let text = doc.serialize(true).unwrap();
        assert!(text.contains("status: done"));
        assert!(text.contains("progress: 100"));
        let again = parse(&text).unwrap();
        assert_eq!(again, doc);

        let declaration = parse(&doc.serialize(false).unwrap()).unwrap();
        let node = declaration.graph.node("fetch-data").unwrap();
        assert_eq!((node.status, node.progress), (Status::Ready, Progress::ZERO));
        assert!(!doc.serialize(false).unwrap().contains("progress:"));
    }

    #[test]
    fn remove_node_splits_chains() {
        let mut doc =
            parse("workflow: {nodes: {a: {}, b: {}, c: {}}, dependencies: ['a,b,c']}").unwrap();
        doc.remove_node("b").unwrap();
        assert!(doc.dependencies.is_empty());
        assert_eq!(doc.graph.edge_count(), 0);
        let again = parse(&doc.serialize(false).unwrap()).unwrap();
        assert_eq!(again, doc);
    }
}
