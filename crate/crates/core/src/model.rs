//! Graph data model for workflows.
//!
//! A [`WorkflowGraph`] holds the declared nodes in document order together
//! with the directed dependency edges between them. Scheduling helpers
//! ([`WorkflowGraph::topological_order`], [`WorkflowGraph::ready_set`]) and
//! cycle detection live here as pure functions over the graph.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Local};
use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("malformed dependency chain `{0}`: need at least two comma-separated names")]
    MalformedChain(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("a node named `{0}` already exists")]
    DuplicateName(String),
    #[error("unknown job kind `{0}` (expected local, ssh, slurm or wsl)")]
    UnknownKind(String),
    #[error("invalid status `{0}`")]
    InvalidStatus(String),
    #[error("progress {0} is outside 0..=100")]
    InvalidProgress(i64),
}

/// Compute resource a job is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    #[default]
    Local,
    Ssh,
    Slurm,
    Wsl,
}

impl JobKind {
    pub const ALL: [JobKind; 4] = [JobKind::Local, JobKind::Ssh, JobKind::Slurm, JobKind::Wsl];

    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Local => "local",
            JobKind::Ssh => "ssh",
            JobKind::Slurm => "slurm",
            JobKind::Wsl => "wsl",
        }
    }
}

impl fmt::Display for JobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JobKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JobKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

/// Lifecycle state of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Undefined,
    Ready,
    Submitted,
    Running,
    Done,
    Failed,
    Killed,
}

impl Status {
    pub const ALL: [Status; 7] = [
        Status::Undefined,
        Status::Ready,
        Status::Submitted,
        Status::Running,
        Status::Done,
        Status::Failed,
        Status::Killed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Undefined => "undefined",
            Status::Ready => "ready",
            Status::Submitted => "submitted",
            Status::Running => "running",
            Status::Done => "done",
            Status::Failed => "failed",
            Status::Killed => "killed",
        }
    }

    /// `done`, `failed` and `killed` end a node's run.
    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Done | Status::Failed | Status::Killed)
    }

    /// A job has been handed to its compute resource and has not finished.
    pub fn is_active(self) -> bool {
        matches!(self, Status::Submitted | Status::Running)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| ModelError::InvalidStatus(s.to_string()))
    }
}

/// Percentage of a job that has completed, always within `0..=100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
#[serde(transparent)]
pub struct Progress(u8);

impl Progress {
    pub const ZERO: Progress = Progress(0);
    pub const DONE: Progress = Progress(100);

    pub fn new(value: i64) -> Result<Self, ModelError> {
        if (0..=100).contains(&value) {
            Ok(Progress(value as u8))
        } else {
            Err(ModelError::InvalidProgress(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Progress {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Progress::new(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Runtime bookkeeping for a node that only exists in state-bearing documents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeRuntime {
    pub pid: Option<u32>,
    pub slurm_job_id: Option<String>,
    pub tstart: Option<DateTime<Local>>,
    pub tend: Option<DateTime<Local>>,
    pub error: Option<String>,
}

impl NodeRuntime {
    pub fn is_empty(&self) -> bool {
        *self == NodeRuntime::default()
    }
}

/// Declaration of one job (or structural node) in a workflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub user: String,
    pub host: String,
    pub kind: JobKind,
    pub status: Status,
    pub progress: Progress,
    pub label: Option<String>,
    pub script: Option<String>,
    pub exec: Option<String>,
    pub shape: Option<String>,
    pub style: Option<String>,
    pub venv: Option<String>,
    pub runtime: NodeRuntime,
}

pub const DEFAULT_HOST: &str = "localhost";

impl NodeSpec {
    /// A structural node: no script, no command.
    pub fn new(name: impl Into<String>) -> Self {
        NodeSpec {
            name: name.into(),
            user: String::new(),
            host: DEFAULT_HOST.to_string(),
            kind: JobKind::Local,
            status: Status::Undefined,
            progress: Progress::ZERO,
            label: None,
            script: None,
            exec: None,
            shape: None,
            style: None,
            venv: None,
            runtime: NodeRuntime::default(),
        }
    }

    /// Nodes with neither script nor inline command complete instantly.
    pub fn is_structural(&self) -> bool {
        self.script.is_none() && self.exec.is_none()
    }

    /// Label template, falling back to the node name.
    pub fn label_template(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    /// Status a fresh declaration starts from.
    pub fn initial_status(&self) -> Status {
        if self.is_structural() {
            Status::Undefined
        } else {
            Status::Ready
        }
    }

    /// Forget all run state: back to the declared starting point.
    pub fn reset(&mut self) {
        self.status = self.initial_status();
        self.progress = Progress::ZERO;
        self.runtime = NodeRuntime::default();
    }

    /// `script` or `exec`, whichever the node carries.
    pub fn command(&self) -> Option<&str> {
        self.script.as_deref().or(self.exec.as_deref())
    }
}

/// Nodes plus directed dependency edges.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkflowGraph {
    nodes: IndexMap<String, NodeSpec>,
    edges: IndexSet<(String, String)>,
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, node: NodeSpec) -> Result<(), ModelError> {
        if self.nodes.contains_key(&node.name) {
            return Err(ModelError::DuplicateName(node.name));
        }
        self.nodes.insert(node.name.clone(), node);
        Ok(())
    }

    /// Removes the node and every edge touching it. Predecessors are not
    /// re-linked to successors.
    pub fn remove_node(&mut self, name: &str) -> Option<NodeSpec> {
        let node = self.nodes.shift_remove(name)?;
        self.edges.retain(|(a, b)| a != name && b != name);
        Some(node)
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.get(name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut NodeSpec> {
        self.nodes.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    /// Nodes in declaration order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.values()
    }

    pub fn nodes_mut(&mut self) -> impl Iterator<Item = &mut NodeSpec> {
        self.nodes.values_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains(&(from.to_string(), to.to_string()))
    }

    /// Adds `from -> to`. Returns `false` when the edge was already present.
    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<bool, ModelError> {
        for name in [from, to] {
            if !self.nodes.contains_key(name) {
                return Err(ModelError::UnknownNode(name.to_string()));
            }
        }
        Ok(self.edges.insert((from.to_string(), to.to_string())))
    }

    /// Adds an edge between each consecutive pair of a comma-separated chain
    /// such as `start,fetch-data,compute`. Nothing is added unless every
    /// member is declared.
    pub fn add_dependency_chain(&mut self, chain: &str) -> Result<(), ModelError> {
        let names = parse_chain(chain)?;
        if let Some(unknown) = names.iter().find(|n| !self.nodes.contains_key(**n)) {
            return Err(ModelError::UnknownNode(unknown.to_string()));
        }
        for pair in names.windows(2) {
            self.add_edge(pair[0], pair[1])?;
        }
        Ok(())
    }

    pub fn predecessors<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(_, b)| b == name)
            .map(|(a, _)| a.as_str())
    }

    pub fn successors<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(a, _)| a == name)
            .map(|(_, b)| b.as_str())
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (a, b) in &self.edges {
            let (ia, ib) = (self.index(a), self.index(b));
            adj[ia].push(ib);
        }
        for out in &mut adj {
            out.sort_unstable();
        }
        adj
    }

    fn index(&self, name: &str) -> usize {
        self.nodes
            .get_index_of(name)
            .expect("edge endpoints are validated on insertion")
    }

    /// Kahn's algorithm; among simultaneously available nodes the one
    /// declared first goes first.
    pub fn topological_order(&self) -> Result<Vec<String>, ModelError> {
        let adj = self.adjacency();
        let mut indegree = vec![0usize; adj.len()];
        for out in &adj {
            for &b in out {
                indegree[b] += 1;
            }
        }
        let mut heap: BinaryHeap<Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == 0)
            .map(|(i, _)| Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(adj.len());
        while let Some(Reverse(i)) = heap.pop() {
            order.push(i);
            for &b in &adj[i] {
                indegree[b] -= 1;
                if indegree[b] == 0 {
                    heap.push(Reverse(b));
                }
            }
        }
        if order.len() < adj.len() {
            let cycle = self
                .detect_cycle()
                .expect("Kahn's algorithm stalled, so a cycle exists");
            return Err(ModelError::CycleDetected(cycle));
        }
        Ok(order
            .into_iter()
            .map(|i| self.nodes.get_index(i).unwrap().0.clone())
            .collect())
    }

    /// Nodes outside `completed ∪ active` whose predecessors are all completed,
    /// in declaration order.
    pub fn ready_set(&self, completed: &HashSet<String>, active: &HashSet<String>) -> Vec<String> {
        self.nodes
            .keys()
            .filter(|n| !completed.contains(*n) && !active.contains(*n))
            .filter(|n| self.predecessors(n).all(|p| completed.contains(p)))
            .cloned()
            .collect()
    }

    /// One witness cycle, or `None` for a DAG.
    pub fn detect_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let adj = self.adjacency();
        let mut mark = vec![Mark::White; adj.len()];
        let mut stack_path: Vec<usize> = Vec::new();

        for root in 0..adj.len() {
            if mark[root] != Mark::White {
                continue;
            }
            // Iterative DFS: (node, next child position).
            let mut frames: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = Mark::Grey;
            stack_path.push(root);
            while let Some(frame) = frames.last_mut() {
                let (node, pos) = *frame;
                if pos < adj[node].len() {
                    frame.1 += 1;
                    let next = adj[node][pos];
                    match mark[next] {
                        Mark::White => {
                            mark[next] = Mark::Grey;
                            stack_path.push(next);
                            frames.push((next, 0));
                        }
                        Mark::Grey => {
                            let start = stack_path.iter().position(|&n| n == next).unwrap();
                            return Some(
                                stack_path[start..]
                                    .iter()
                                    .map(|&i| self.nodes.get_index(i).unwrap().0.clone())
                                    .collect(),
                            );
                        }
                        Mark::Black => {}
                    }
                } else {
                    mark[node] = Mark::Black;
                    stack_path.pop();
                    frames.pop();
                }
            }
        }
        None
    }

    /// Number of nodes per status.
    pub fn status_counts(&self) -> BTreeMap<Status, usize> {
        let mut counts = BTreeMap::new();
        for node in self.nodes.values() {
            *counts.entry(node.status).or_insert(0) += 1;
        }
        counts
    }
}

/// Splits `a,b,c` into trimmed names, rejecting empty members and chains
/// shorter than two.
pub fn parse_chain(chain: &str) -> Result<Vec<&str>, ModelError> {
    let names: Vec<&str> = chain.split(',').map(str::trim).collect();
    if names.len() < 2 || names.iter().any(|n| n.is_empty()) {
        return Err(ModelError::MalformedChain(chain.to_string()));
    }
    Ok(names)
}
