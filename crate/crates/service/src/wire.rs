//! Bodies exchanged between the service and its clients.

use serde::{Deserialize, Serialize};

/// Answer to an upload: the stored workflow and what was missing from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadReport {
    pub name: String,
    pub nodes: usize,
    /// Scripts referenced by the document but absent from the upload.
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Answer to a run request. The run itself proceeds in the background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunAck {
    pub name: String,
    /// Topological order in which the nodes will be considered.
    pub plan: Vec<String>,
    pub show: bool,
    #[serde(default)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deleted {
    pub name: String,
    #[serde(default)]
    pub job: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobAdded {
    pub name: String,
    pub job: String,
    pub status: String,
}

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub detail: String,
}

/// Representation served by `GET /workflow/{name}/graph`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    #[default]
    Svg,
    Dot,
}

impl GraphFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphFormat::Svg => "svg",
            GraphFormat::Dot => "dot",
        }
    }
}
