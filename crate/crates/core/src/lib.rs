//! Core of the hybrid workflow manager: the workflow graph model, YAML
//! documents, compute executors, the engine and its state store, and graph
//! rendering.

pub mod engine;
pub mod executors;
pub mod model;
pub mod render;
pub mod specfile;

pub use engine::{
    Engine, EngineError, EngineSettings, JobParams, RunOptions, RunOutcome, RunReport, StateStore, TableRow, WorkflowRun,
};
pub use executors::{ExecConfig, ExecError, Executor, JobHandle};
pub use model::{JobKind, ModelError, NodeSpec, Progress, Status, WorkflowGraph};
pub use specfile::{SpecError, WorkflowDocument};
