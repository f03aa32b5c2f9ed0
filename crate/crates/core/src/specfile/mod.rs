//! Workflow YAML documents, label templates, variables and tar ingestion.

mod archive;
mod document;
mod label;
mod vars;

pub use archive::{archive_workflow_name, load_archive, LoadedArchive, MissingScript};
pub use document::{WorkflowClock, WorkflowDocument};
pub use label::{
    format_duration, format_time, render_label, LabelTemplate, TimerContext, DEFAULT_TIME_FORMAT,
    NOT_AVAILABLE,
};
pub use vars::{parse_cm_vars, VariableStore};

use std::path::Path;

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("node key `{key}` does not match its name field `{name}`")]
    NameMismatch { key: String, name: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("archive error: {0}")]
    Archive(String),
    #[error("workflow `{0}` already exists")]
    AlreadyExists(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses workflow YAML text; see [`WorkflowDocument::parse`].
pub fn parse_workflow_yaml(text: &str, source_directory: &Path) -> Result<WorkflowDocument, SpecError> {
    WorkflowDocument::parse(text, source_directory)
}

/// Serializes a document, optionally embedding run state.
pub fn serialize_workflow(doc: &WorkflowDocument, with_state: bool) -> Result<String, SpecError> {
    doc.serialize(with_state)
}
