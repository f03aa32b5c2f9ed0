//! REST service over the workflow engine, and a blocking client for it.
//!
//! Endpoints:
//!
//! | method | path | purpose |
//! |---|---|---|
//! | GET | `/workflows` | names of stored workflows |
//! | POST | `/workflow?archive=&name=` | store a workflow from a server path or a multipart upload |
//! | GET | `/workflow/{name}?job=` | workflow (or one job) with current state |
//! | DELETE | `/workflow/{name}?job=` | delete a workflow or one job |
//! | POST | `/workflow/{name}/job` | add a job (creating the workflow) |
//! | GET | `/workflow/run/{name}?show=&parallel=` | start a run in the background |
//! | GET | `/workflow/{name}/graph?format=svg\|dot` | current graph rendering |
//! | GET | `/workflow/{name}/table` | status table |
//! | GET | `/openapi.json`, `/docs` | API description and explorer |
//! | GET | `/`, `/static/...` | browser UI |
//!
//! Errors are JSON objects `{"detail": "..."}`.

mod api_doc;
mod client;
mod error;
mod server;
mod wire;

pub use api_doc::openapi;
pub use client::{document_from_json, ClientError, RemoteWorkflow, RestClient};
pub use error::ApiError;
pub use server::{run_foreground, spawn, spawn_engine, Service, ServiceConfig, ServiceHandle};
pub use wire::{Deleted, ErrorBody, GraphFormat, JobAdded, RunAck, UploadReport};
