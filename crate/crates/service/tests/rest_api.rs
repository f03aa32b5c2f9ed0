//! The REST service end to end over loopback, driven through the client.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use hyflow_core::{JobParams, Status, WorkflowDocument};
use hyflow_service::{spawn, GraphFormat, RestClient, ServiceConfig, ServiceHandle};

const EXAMPLE: &str = "workflow-example";

fn example_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workflows/workflow-example")
}

/// Packs the example workflow and its scripts into `<dir>/workflow-example.tar`.
fn example_tar(dir: &Path) -> PathBuf {
    let path = dir.join(format!("{EXAMPLE}.tar"));
    let mut builder = tar::Builder::new(std::fs::File::create(&path).unwrap());
    for entry in std::fs::read_dir(example_dir()).unwrap() {
        let entry = entry.unwrap();
        builder
            .append_path_with_name(entry.path(), entry.file_name())
            .unwrap();
    }
    builder.finish().unwrap();
    path
}

struct Fixture {
    dir: tempfile::TempDir,
    service: Option<ServiceHandle>,
    client: RestClient,
}

impl Fixture {
    fn new() -> Self {
        // Shorten the stub jobs; every test sets the same value.
        std::env::set_var("HYFLOW_STUB_STEP", "0.1");
        let dir = tempfile::tempdir().unwrap();
        let service = start(dir.path());
        let client = RestClient::new(&service.url()).unwrap();
        Fixture {
            dir,
            service: Some(service),
            client,
        }
    }

    fn root(&self) -> PathBuf {
        self.dir.path().join("store")
    }

    fn restart(&mut self) {
        self.service.take().unwrap().stop().unwrap();
        let service = start(self.dir.path());
        self.client = RestClient::new(&service.url()).unwrap();
        self.service = Some(service);
    }
}

fn start(dir: &Path) -> ServiceHandle {
    let mut config = ServiceConfig::new(dir.join("store"));
    config.port = 0;
    config.poll_period = Duration::from_millis(50);
    spawn(config).unwrap()
}

fn statuses(doc: &WorkflowDocument) -> Vec<(String, Status)> {
    doc.graph.nodes().map(|n| (n.name.clone(), n.status)).collect()
}

#[test]
fn uploads_by_multipart_and_by_server_path() {
    let fx = Fixture::new();
    assert!(fx.client.list_workflows().unwrap().is_empty());

    let tar = example_tar(fx.dir.path());
    let report = fx.client.upload_workflow(&tar, None).unwrap();
    assert_eq!(report.name, EXAMPLE);
    assert_eq!(report.nodes, 5);
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    assert_eq!(fx.client.list_workflows().unwrap(), vec![EXAMPLE]);

    let again = fx.client.upload_workflow(&tar, None).unwrap_err();
    assert_eq!(again.status(), Some(409), "{again}");

    let copy = fx.client.upload_server_path(tar.to_str().unwrap(), Some("copy")).unwrap();
    assert_eq!((copy.name.as_str(), copy.nodes), ("copy", 5));
    assert_eq!(fx.client.list_workflows().unwrap(), vec!["copy", EXAMPLE]);
    assert!(fx.root().join("copy/test-compute.sh").is_file());

    let corrupt = fx.dir.path().join("corrupt.tar");
    std::fs::write(&corrupt, vec![0x42u8; 1500]).unwrap();
    let err = fx.client.upload_workflow(&corrupt, None).unwrap_err();
    assert_eq!(err.status(), Some(400), "{err}");
    assert!(err.to_string().contains("archive"), "{err}");

    let err = fx.client.upload_server_path("/no/such/file.tar", None).unwrap_err();
    assert_eq!(err.status(), Some(400), "{err}");

    let yaml = example_dir().join(format!("{EXAMPLE}.yaml"));
    let from_yaml = fx.client.upload_server_path(yaml.to_str().unwrap(), Some("from-yaml")).unwrap();
    assert_eq!(from_yaml.nodes, 5);
    assert!(fx.root().join("from-yaml/test-analyze.sh").is_file());
}

#[test]
fn retrieved_document_matches_the_local_yaml() {
    let fx = Fixture::new();
    fx.client.upload_workflow(&example_tar(fx.dir.path()), None).unwrap();
    let remote = fx.client.get_workflow(EXAMPLE).unwrap();
    assert!(!remote.running);

    let local = WorkflowDocument::from_file(&example_dir().join(format!("{EXAMPLE}.yaml"))).unwrap();
    assert_eq!(remote.document.name, local.name);
    assert_eq!(remote.document.dependencies, local.dependencies);
    assert_eq!(
        remote.document.graph.edges().collect::<Vec<_>>(),
        local.graph.edges().collect::<Vec<_>>()
    );
    assert_eq!(
        remote.document.graph.nodes().collect::<Vec<_>>(),
        local.graph.nodes().collect::<Vec<_>>()
    );

    let compute = fx.client.get_job(EXAMPLE, "compute").unwrap();
    assert_eq!(compute.script.as_deref(), Some("test-compute.sh"));
    assert_eq!(compute.status, Status::Ready);
    let raw = fx.client.get_job_json(EXAMPLE, "compute").unwrap();
    assert_eq!(raw["name"], "compute");
    assert_eq!(raw["progress"], 0);

    assert_eq!(fx.client.get_job(EXAMPLE, "nope").unwrap_err().status(), Some(404));
    assert_eq!(fx.client.get_workflow("nope").unwrap_err().status(), Some(404));
    assert_eq!(fx.client.get_workflow(".hidden").unwrap_err().status(), Some(422));
}

#[test]
fn jobs_can_be_added_and_deleted() {
    let fx = Fixture::new();
    fx.client.upload_workflow(&example_tar(fx.dir.path()), None).unwrap();

    let params = JobParams {
        kind: Some("local".into()),
        exec: Some("echo extra".into()),
        ..JobParams::named("extra")
    };
    let added = fx.client.add_job(EXAMPLE, &params).unwrap();
    assert_eq!((added.job.as_str(), added.status.as_str()), ("extra", "ready"));
    assert_eq!(fx.client.get_job(EXAMPLE, "extra").unwrap().status, Status::Ready);
    assert_eq!(fx.client.add_job(EXAMPLE, &params).unwrap_err().status(), Some(409));

    let grid = JobParams {
        kind: Some("grid".into()),
        ..JobParams::named("g")
    };
    let err = fx.client.add_job(EXAMPLE, &grid).unwrap_err();
    assert_eq!(err.status(), Some(422), "{err}");
    assert!(err.to_string().contains("grid"), "{err}");
    // A job added to an unknown workflow creates it; a rejected one leaves
    // nothing behind.
    assert_eq!(fx.client.add_job("fresh", &grid).unwrap_err().status(), Some(422));
    assert!(!fx.client.list_workflows().unwrap().contains(&"fresh".to_string()));
    fx.client.add_job("fresh", &params).unwrap();
    assert_eq!(fx.client.get_workflow("fresh").unwrap().document.graph.len(), 1);

    fx.client.delete_job(EXAMPLE, "extra").unwrap();
    fx.client.delete_job(EXAMPLE, "compute").unwrap();
    assert_eq!(fx.client.get_workflow(EXAMPLE).unwrap().document.graph.len(), 4);
    assert_eq!(fx.client.delete_job(EXAMPLE, "compute").unwrap_err().status(), Some(404));

    fx.client.delete_workflow(EXAMPLE).unwrap();
    assert_eq!(fx.client.list_workflows().unwrap(), vec!["fresh".to_string()]);
    assert_eq!(fx.client.delete_workflow(EXAMPLE).unwrap_err().status(), Some(404));
}

#[test]
fn run_completes_in_the_background() {
    let fx = Fixture::new();
    fx.client.upload_workflow(&example_tar(fx.dir.path()), None).unwrap();

    let ack = fx.client.run_workflow(EXAMPLE, true, None).unwrap();
    assert_eq!(ack.plan, vec!["start", "fetch-data", "compute", "analyze", "end"]);
    assert!(ack.show);
    // Conflicting requests during the run.
    assert_eq!(fx.client.run_workflow(EXAMPLE, false, None).unwrap_err().status(), Some(409));
    assert_eq!(fx.client.delete_workflow(EXAMPLE).unwrap_err().status(), Some(409));
    let extra = JobParams {
        kind: Some("local".into()),
        exec: Some("true".into()),
        ..JobParams::named("extra")
    };
    assert_eq!(fx.client.add_job(EXAMPLE, &extra).unwrap_err().status(), Some(409));
    assert!(fx.client.get_workflow(EXAMPLE).unwrap().running);

    let done = fx
        .client
        .wait_until_idle(EXAMPLE, Duration::from_secs(60), Duration::from_millis(100))
        .unwrap();
    assert!(
        done.document.graph.nodes().all(|n| n.status == Status::Done),
        "{:?}",
        statuses(&done.document)
    );
    assert!(done.document.clock.t1.is_some());

    let rows = fx.client.table(EXAMPLE).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.status == Status::Done && r.progress == 100));
    let svg = fx.client.graph(EXAMPLE, GraphFormat::Svg).unwrap();
    assert!(svg.contains("<svg"), "{svg}");
    let dot = fx.client.graph(EXAMPLE, GraphFormat::Dot).unwrap();
    assert!(dot.contains("digraph"), "{dot}");
    // show=True left snapshots next to the state file.
    assert!(fx.root().join(EXAMPLE).join(format!("{EXAMPLE}.svg")).is_file());

    assert_eq!(fx.client.run_workflow("nope", false, None).unwrap_err().status(), Some(404));
}

#[test]
fn parallel_run_through_the_service() {
    let fx = Fixture::new();
    fx.client.upload_workflow(&example_tar(fx.dir.path()), None).unwrap();
    let ack = fx.client.run_workflow(EXAMPLE, false, Some(2)).unwrap();
    assert_eq!(ack.parallel, Some(2));
    let done = fx
        .client
        .wait_until_idle(EXAMPLE, Duration::from_secs(60), Duration::from_millis(100))
        .unwrap();
    assert!(done.document.graph.nodes().all(|n| n.status == Status::Done));
}

#[test]
fn restart_mid_run_recovers_and_finishes() {
    let mut fx = Fixture::new();
    fx.client.upload_workflow(&example_tar(fx.dir.path()), None).unwrap();
    fx.client.run_workflow(EXAMPLE, false, None).unwrap();

    // Stop the service while `fetch-data` is in flight.
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let doc = fx.client.get_workflow(EXAMPLE).unwrap().document;
        if doc.graph.node("fetch-data").unwrap().status.is_active() {
            break;
        }
        assert!(Instant::now() < deadline, "fetch-data never started");
        thread::sleep(Duration::from_millis(20));
    }
    fx.restart();

    let recovered = fx.client.get_workflow(EXAMPLE).unwrap();
    assert!(recovered.running, "unfinished run was not resumed");
    let done = fx
        .client
        .wait_until_idle(EXAMPLE, Duration::from_secs(60), Duration::from_millis(100))
        .unwrap();
    assert!(
        done.document.graph.nodes().all(|n| n.status == Status::Done),
        "{:?}",
        statuses(&done.document)
    );
    // The job in flight across the restart was watched, not relaunched.
    let log = std::fs::read_to_string(fx.root().join(EXAMPLE).join("runtime/fetch-data.log")).unwrap();
    assert_eq!(log.matches("status=running progress=1 ").count(), 1, "{log}");
}

#[test]
fn service_describes_itself() {
    let fx = Fixture::new();
    let base = fx.service.as_ref().unwrap().url();
    let get = |path: &str| {
        let response = reqwest::blocking::get(format!("{base}{path}")).unwrap();
        (response.status().as_u16(), response.text().unwrap())
    };
    let (status, spec) = get("/openapi.json");
    assert_eq!(status, 200);
    let spec: serde_json::Value = serde_json::from_str(&spec).unwrap();
    for path in [
        "/workflows",
        "/workflow",
        "/workflow/{name}",
        "/workflow/{name}/job",
        "/workflow/run/{name}",
    ] {
        assert!(spec["paths"][path].is_object(), "{path}");
    }
    let (status, docs) = get("/docs");
    assert_eq!(status, 200);
    assert!(docs.contains("/openapi.json"));
    let (status, index) = get("/");
    assert_eq!(status, 200);
    assert!(index.contains("/workflows"));
    let (status, body) = get("/no/such/thing");
    assert_eq!(status, 404);
    assert!(body.contains("detail"));
}

#[test]
fn static_ui_directory_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>custom ui</html>").unwrap();
    std::fs::write(ui.join("app.js"), "console.log(1)").unwrap();
    let mut config = ServiceConfig::new(dir.path().join("store"));
    config.port = 0;
    config.static_dir = Some(ui);
    let service = spawn(config).unwrap();
    let base = service.url();
    let index = reqwest::blocking::get(format!("{base}/")).unwrap().text().unwrap();
    assert!(index.contains("custom ui"));
    let js = reqwest::blocking::get(format!("{base}/static/app.js")).unwrap();
    assert_eq!(js.headers()["content-type"], "text/javascript; charset=utf-8");
    let escape = reqwest::blocking::get(format!("{base}/static/..%2F..%2Fetc%2Fpasswd")).unwrap();
    assert_eq!(escape.status().as_u16(), 404);
    service.stop().unwrap();
}
