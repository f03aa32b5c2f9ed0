//! Blocking HTTP client for the service.

use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use hyflow_core::{JobParams, NodeSpec, TableRow, WorkflowDocument};
use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use reqwest::Url;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::wire::{Deleted, ErrorBody, GraphFormat, JobAdded, RunAck, UploadReport};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach the service at {url}: {source}")]
    Connection {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("{0}")]
    InvalidUrl(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClientError {
    /// HTTP status of an error response.
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// A workflow as reported by the service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteWorkflow {
    /// Document with current state. Its source directory is not meaningful
    /// on the client side.
    pub document: WorkflowDocument,
    /// The service is driving a run of this workflow.
    pub running: bool,
    /// Latest probe error per job.
    pub errors: BTreeMap<String, String>,
}

/// Parses the JSON form of a workflow back into a document.
pub fn document_from_json(name: &str, body: &Value) -> Result<WorkflowDocument, ClientError> {
    let mut inner: Map<String, Value> = body
        .as_object()
        .cloned()
        .ok_or_else(|| ClientError::Decode("workflow is not a JSON object".into()))?;
    for key in ["name", "running", "errors"] {
        inner.remove(key);
    }
    let yaml = serde_yaml::to_string(&json!({ "workflow": inner })).map_err(|e| ClientError::Decode(e.to_string()))?;
    let mut document = WorkflowDocument::parse(&yaml, Path::new(".")).map_err(|e| ClientError::Decode(e.to_string()))?;
    document.name = name.to_string();
    Ok(document)
}

pub struct RestClient {
    base: Url,
    http: Client,
}

impl RestClient {
    /// A client for the service at `base_url`, e.g. `http://127.0.0.1:8000`.
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let base = Url::parse(base_url).map_err(|e| ClientError::InvalidUrl(format!("{base_url}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::InvalidUrl(format!("{base_url}: not a base URL")));
        }
        let http = Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ClientError::Connection {
                url: base_url.to_string(),
                source: e,
            })?;
        Ok(RestClient { base, http })
    }

    pub fn base_url(&self) -> &str {
        self.base.as_str()
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        if let Ok(mut path) = url.path_segments_mut() {
            path.pop_if_empty().extend(segments);
        }
        url
    }

    fn send(&self, request: RequestBuilder) -> Result<Response, ClientError> {
        let response = request.send().map_err(|e| ClientError::Connection {
            url: self.base.to_string(),
            source: e,
        })?;
        let status = response.status();
        if status.is_success() {
            return Ok(response);
        }
        let text = response.text().unwrap_or_default();
        let detail = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.detail)
            .unwrap_or(text);
        Err(ClientError::Http {
            status: status.as_u16(),
            detail,
        })
    }

    fn json<T: DeserializeOwned>(&self, request: RequestBuilder) -> Result<T, ClientError> {
        let text = self
            .send(request)?
            .text()
            .map_err(|e| ClientError::Decode(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(format!("{e}: {text}")))
    }

    /// The service answers.
    pub fn is_reachable(&self) -> bool {
        self.list_workflows().is_ok()
    }

    pub fn list_workflows(&self) -> Result<Vec<String>, ClientError> {
        self.json(self.http.get(self.url(&["workflows"])))
    }

    /// Uploads a local tar archive (or YAML file) as a multipart body.
    pub fn upload_workflow(&self, path: &Path, name: Option<&str>) -> Result<UploadReport, ClientError> {
        let form = multipart::Form::new().file("file", path)?;
        let mut request = self.http.post(self.url(&["workflow"])).multipart(form);
        if let Some(name) = name {
            request = request.query(&[("name", name)]);
        }
        self.json(request)
    }

    /// Asks the service to load an archive from its own filesystem.
    pub fn upload_server_path(&self, archive: &str, name: Option<&str>) -> Result<UploadReport, ClientError> {
        let mut query = vec![("archive", archive)];
        if let Some(name) = name {
            query.push(("name", name));
        }
        self.json(self.http.post(self.url(&["workflow"])).query(&query))
    }

    /// The workflow's JSON form as served.
    pub fn get_workflow_json(&self, name: &str) -> Result<Value, ClientError> {
        self.json(self.http.get(self.url(&["workflow", name])))
    }

    pub fn get_workflow(&self, name: &str) -> Result<RemoteWorkflow, ClientError> {
        let body = self.get_workflow_json(name)?;
        let running = body.get("running").and_then(Value::as_bool).unwrap_or(false);
        let errors = match body.get("errors") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| ClientError::Decode(e.to_string()))?,
            None => BTreeMap::new(),
        };
        Ok(RemoteWorkflow {
            document: document_from_json(name, &body)?,
            running,
            errors,
        })
    }

    /// A single job record as served.
    pub fn get_job_json(&self, name: &str, job: &str) -> Result<Value, ClientError> {
        self.json(self.http.get(self.url(&["workflow", name])).query(&[("job", job)]))
    }

    pub fn get_job(&self, name: &str, job: &str) -> Result<NodeSpec, ClientError> {
        let record = self.get_job_json(name, job)?;
        let body = json!({ "nodes": { job: record }, "dependencies": [] });
        let document = document_from_json(name, &body)?;
        document
            .graph
            .node(job)
            .cloned()
            .ok_or_else(|| ClientError::Decode(format!("job `{job}` missing from response")))
    }

    pub fn delete_workflow(&self, name: &str) -> Result<Deleted, ClientError> {
        self.json(self.http.delete(self.url(&["workflow", name])))
    }

    pub fn delete_job(&self, name: &str, job: &str) -> Result<Deleted, ClientError> {
        self.json(self.http.delete(self.url(&["workflow", name])).query(&[("job", job)]))
    }

    pub fn add_job(&self, name: &str, params: &JobParams) -> Result<JobAdded, ClientError> {
        self.json(self.http.post(self.url(&["workflow", name, "job"])).json(params))
    }

    /// Starts a run; it proceeds in the background on the service.
    pub fn run_workflow(&self, name: &str, show: bool, parallel: Option<usize>) -> Result<RunAck, ClientError> {
        let mut query = vec![("show", if show { "True" } else { "False" }.to_string())];
        if let Some(n) = parallel {
            query.push(("parallel", n.to_string()));
        }
        self.json(self.http.get(self.url(&["workflow", "run", name])).query(&query))
    }

    pub fn table(&self, name: &str) -> Result<Vec<TableRow>, ClientError> {
        self.json(self.http.get(self.url(&["workflow", name, "table"])))
    }

    pub fn graph(&self, name: &str, format: GraphFormat) -> Result<String, ClientError> {
        let request = self
            .http
            .get(self.url(&["workflow", name, "graph"]))
            .query(&[("format", format.as_str())]);
        self.send(request)?
            .text()
            .map_err(|e| ClientError::Decode(e.to_string()))
    }

    /// Polls until the service is no longer running the workflow.
    pub fn wait_until_idle(&self, name: &str, timeout: Duration, poll: Duration) -> Result<RemoteWorkflow, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            let current = self.get_workflow(name)?;
            if !current.running {
                return Ok(current);
            }
            if Instant::now() >= deadline {
                return Err(ClientError::Decode(format!(
                    "workflow `{name}` still running after {}s",
                    timeout.as_secs_f64()
                )));
            }
            thread::sleep(poll);
        }
    }
}
