//! The OpenAPI description of the service, its interactive explorer, and the
//! page served at `/` when no browser UI is installed.

use serde_json::{json, Value};

fn name_param() -> Value {
    json!({"name": "name", "in": "path", "required": true, "schema": {"type": "string"}})
}

fn job_param(description: &str) -> Value {
    json!({"name": "job", "in": "query", "required": false, "schema": {"type": "string"}, "description": description})
}

fn error_response(description: &str) -> Value {
    json!({
        "description": description,
        "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}
    })
}

fn json_response(description: &str, schema: Value) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": schema}}})
}

/// OpenAPI 3 document listing every endpoint.
pub fn openapi() -> Value {
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "hyflow workflow service",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Upload, inspect, edit and run workflows of local, ssh and Slurm jobs."
        },
        "paths": {
            "/workflows": {
                "get": {
                    "summary": "List workflows",
                    "operationId": "list_workflows",
                    "responses": {
                        "200": json_response("Workflow names, sorted", json!({"type": "array", "items": {"type": "string"}}))
                    }
                }
            },
            "/workflow": {
                "post": {
                    "summary": "Upload a workflow",
                    "description": "Either names a tar archive (or YAML file) on the server with `archive`, or uploads one as the multipart field `file`. The archive holds exactly one `<name>.yaml` plus the scripts it references.",
                    "operationId": "upload_workflow",
                    "parameters": [
                        {"name": "archive", "in": "query", "required": false, "schema": {"type": "string"}, "description": "Server-local path of the archive"},
                        {"name": "name", "in": "query", "required": false, "schema": {"type": "string"}, "description": "Store the workflow under this name"}
                    ],
                    "requestBody": {
                        "required": false,
                        "content": {"multipart/form-data": {"schema": {
                            "type": "object",
                            "properties": {"file": {"type": "string", "format": "binary"}}
                        }}}
                    },
                    "responses": {
                        "200": json_response("Stored", json!({"$ref": "#/components/schemas/UploadReport"})),
                        "400": error_response("Unreadable archive or document"),
                        "409": error_response("A workflow with that name exists")
                    }
                }
            },
            "/workflow/{name}": {
                "get": {
                    "summary": "Get a workflow, or one of its jobs",
                    "operationId": "get_workflow",
                    "parameters": [name_param(), job_param("Return only this job")],
                    "responses": {
                        "200": json_response("Workflow document with current state, or a single job", json!({"$ref": "#/components/schemas/Workflow"})),
                        "404": error_response("Unknown workflow or job")
                    }
                },
                "delete": {
                    "summary": "Delete a workflow, or one of its jobs",
                    "operationId": "delete_workflow",
                    "parameters": [name_param(), job_param("Delete only this job")],
                    "responses": {
                        "200": json_response("Deleted", json!({"type": "object"})),
                        "404": error_response("Unknown workflow or job"),
                        "409": error_response("Jobs are in progress")
                    }
                }
            },
            "/workflow/{name}/job": {
                "post": {
                    "summary": "Add a job, creating the workflow if needed",
                    "operationId": "add_job",
                    "parameters": [name_param()],
                    "requestBody": {
                        "required": true,
                        "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Job"}}}
                    },
                    "responses": {
                        "200": json_response("Added", json!({"type": "object"})),
                        "409": error_response("Duplicate job name, or jobs are in progress"),
                        "422": error_response("Invalid job attributes")
                    }
                }
            },
            "/workflow/run/{name}": {
                "get": {
                    "summary": "Run a workflow in the background",
                    "operationId": "run_workflow",
                    "parameters": [
                        name_param(),
                        {"name": "show", "in": "query", "required": false, "schema": {"type": "boolean"}, "description": "Write graph snapshots on every transition"},
                        {"name": "parallel", "in": "query", "required": false, "schema": {"type": "integer", "minimum": 1}, "description": "Run up to this many jobs at once"}
                    ],
                    "responses": {
                        "200": json_response("Run started", json!({"$ref": "#/components/schemas/RunAck"})),
                        "404": error_response("Unknown workflow"),
                        "409": error_response("The workflow is already running")
                    }
                }
            },
            "/workflow/{name}/graph": {
                "get": {
                    "summary": "Current graph rendering",
                    "operationId": "workflow_graph",
                    "parameters": [
                        name_param(),
                        {"name": "format", "in": "query", "required": false, "schema": {"type": "string", "enum": ["svg", "dot"]}}
                    ],
                    "responses": {
                        "200": {"description": "SVG or DOT text", "content": {
                            "image/svg+xml": {"schema": {"type": "string"}},
                            "text/vnd.graphviz": {"schema": {"type": "string"}}
                        }},
                        "404": error_response("Unknown workflow")
                    }
                }
            },
            "/workflow/{name}/table": {
                "get": {
                    "summary": "Status table",
                    "operationId": "workflow_table",
                    "parameters": [name_param()],
                    "responses": {
                        "200": json_response("One row per node in topological order", json!({"type": "array", "items": {"$ref": "#/components/schemas/TableRow"}})),
                        "404": error_response("Unknown workflow")
                    }
                }
            }
        },
        "components": {
            "schemas": {
                "Error": {"type": "object", "properties": {"detail": {"type": "string"}}, "required": ["detail"]},
                "UploadReport": {"type": "object", "properties": {
                    "name": {"type": "string"},
                    "nodes": {"type": "integer"},
                    "warnings": {"type": "array", "items": {"type": "string"}}
                }},
                "RunAck": {"type": "object", "properties": {
                    "name": {"type": "string"},
                    "plan": {"type": "array", "items": {"type": "string"}},
                    "show": {"type": "boolean"},
                    "parallel": {"type": "integer", "nullable": true}
                }},
                "Job": {"type": "object", "required": ["name"], "additionalProperties": false, "properties": {
                    "name": {"type": "string"},
                    "user": {"type": "string"},
                    "host": {"type": "string"},
                    "kind": {"type": "string", "enum": ["local", "ssh", "slurm", "wsl"]},
                    "status": {"type": "string"},
                    "progress": {"type": "integer", "minimum": 0, "maximum": 100},
                    "label": {"type": "string"},
                    "script": {"type": "string"},
                    "exec": {"type": "string"},
                    "shape": {"type": "string"},
                    "style": {"type": "string"},
                    "venv": {"type": "string"}
                }},
                "Workflow": {"type": "object", "properties": {
                    "name": {"type": "string"},
                    "running": {"type": "boolean", "description": "A run is being driven by this service"},
                    "nodes": {"type": "object", "additionalProperties": {"type": "object"}},
                    "dependencies": {"type": "array", "items": {"type": "string"}},
                    "state": {"type": "object"},
                    "errors": {"type": "object", "additionalProperties": {"type": "string"}}
                }},
                "TableRow": {"type": "object", "properties": {
                    "name": {"type": "string"},
                    "status": {"type": "string"},
                    "progress": {"type": "integer"},
                    "kind": {"type": "string"},
                    "user": {"type": "string"},
                    "host": {"type": "string"},
                    "command": {"type": "string", "nullable": true},
                    "tstart": {"type": "string", "format": "date-time", "nullable": true},
                    "tend": {"type": "string", "format": "date-time", "nullable": true},
                    "error": {"type": "string", "nullable": true}
                }}
            }
        }
    })
}

/// Interactive explorer over `/openapi.json`.
pub const DOCS_HTML: &str = r##"<!DOCTYPE html>
<html>
<head>
  <meta charset="utf-8">
  <title>hyflow API</title>
  <link rel="stylesheet" href="https://unpkg.com/swagger-ui-dist@5/swagger-ui.css">
</head>
<body>
  <div id="swagger-ui"><p>Loading the API explorer. The raw description is at <a href="/openapi.json">/openapi.json</a>.</p></div>
  <script src="https://unpkg.com/swagger-ui-dist@5/swagger-ui-bundle.js"></script>
  <script>
    window.onload = function () {
      SwaggerUIBundle({ url: "/openapi.json", dom_id: "#swagger-ui" });
    };
  </script>
</body>
</html>
"##;

/// Minimal page listing workflows, served at `/` when no UI is installed.
pub const INDEX_HTML: &str = r##"<!DOCTYPE html>
<html>
<head>
  <meta charset="utf-8">
  <title>hyflow</title>
  <style>
    body { font-family: sans-serif; margin: 2em; }
    table { border-collapse: collapse; }
    td, th { border: 1px solid #ccc; padding: 0.2em 0.6em; }
  </style>
</head>
<body>
  <h1>hyflow</h1>
  <p>API explorer: <a href="/docs">/docs</a></p>
  <h2>Workflows</h2>
  <ul id="workflows"><li>loading&hellip;</li></ul>
  <div id="detail"></div>
  <script>
    async function show(name) {
      const rows = await (await fetch("/workflow/" + encodeURIComponent(name) + "/table")).json();
      const svg = await (await fetch("/workflow/" + encodeURIComponent(name) + "/graph")).text();
      let html = "<h3>" + name + "</h3><table><tr><th>job</th><th>status</th><th>progress</th></tr>";
      for (const r of rows) {
        html += "<tr><td>" + r.name + "</td><td>" + r.status + "</td><td>" + r.progress + "</td></tr>";
      }
      document.getElementById("detail").innerHTML = html + "</table>" + svg;
    }
    async function load() {
      const names = await (await fetch("/workflows")).json();
      const list = document.getElementById("workflows");
      list.innerHTML = names.length ? "" : "<li>none</li>";
      for (const n of names) {
        const li = document.createElement("li");
        const a = document.createElement("a");
        a.href = "#"; a.textContent = n;
        a.onclick = () => { show(n); return false; };
        li.appendChild(a);
        list.appendChild(li);
      }
    }
    load();
  </script>
</body>
</html>
"##;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_endpoint_is_described() {
        let doc = openapi();
        let paths = doc["paths"].as_object().unwrap();
        for (path, method) in [
            ("/workflows", "get"),
            ("/workflow", "post"),
            ("/workflow/{name}", "get"),
            ("/workflow/{name}", "delete"),
            ("/workflow/{name}/job", "post"),
            ("/workflow/run/{name}", "get"),
            ("/workflow/{name}/graph", "get"),
            ("/workflow/{name}/table", "get"),
        ] {
            assert!(paths[path][method].is_object(), "{method} {path}");
        }
    }
}
