//! The `hyflow` binary end to end against temporary state roots.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn example_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workflows/workflow-example")
}

fn hyflow(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyflow"))
        .arg("--root")
        .arg(root)
        .args(args)
        .env_remove("HYFLOW_ROOT")
        .env_remove("HYFLOW_SERVICE_URL")
        .env("HYFLOW_POLL", "0.05")
        .env("HYFLOW_STUB_STEP", "0.02")
        .stdin(Stdio::null())
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[track_caller]
fn ok(root: &Path, args: &[&str]) -> String {
    let out = hyflow(root, args);
    assert!(out.status.success(), "{args:?}: {}{}", stdout(&out), stderr(&out));
    stdout(&out)
}

#[track_caller]
fn fails(root: &Path, args: &[&str], code: i32) -> String {
    let out = hyflow(root, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}{}", stdout(&out), stderr(&out));
    stderr(&out)
}

fn free_port() -> String {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port().to_string()
}

#[test]
fn usage_errors_print_the_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(dir.path(), &["cc", "workflow", "frobnicate"], 2);
    assert!(err.contains("cc workflow add [--name=NAME] --filename=FILENAME"), "{err}");
    assert!(err.contains("cc start [-c] [--reload]"), "{err}");
    assert!(ok(dir.path(), &["cc", "workflow", "--help"]).contains("Manage and run workflows"));
}

#[test]
fn engine_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let err = fails(root, &["cc", "workflow", "status", "--name=ghost"], 1);
    assert!(err.starts_with("error:") && err.contains("ghost"), "{err}");
    fails(root, &["cc", "workflow", "delete", "--name=ghost"], 1);
    ok(root, &["cc", "workflow", "add", "--name=w", "--job=a", "exec=true"]);
    let err = fails(root, &["cc", "workflow", "add", "--name=w", "--job=a", "exec=true"], 1);
    assert!(err.contains('a'), "{err}");
    let err = fails(root, &["cc", "workflow", "add", "--name=w", "--job=b", "kind=grid"], 1);
    assert!(err.contains("grid"), "{err}");
    let err = fails(root, &["cc", "workflow", "--name=w", "--dependencies=a,nope"], 1);
    assert!(err.contains("nope"), "{err}");
    fails(root, &["cc", "workflow", "add", "--name=x", "--filename=/does/not/exist.yaml"], 1);
}

#[test]
fn command_line_session() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let yaml = example_dir().join("workflow-example.yaml");
    let added = ok(root, &["cc", "workflow", "add", &format!("--filename={}", yaml.display())]);
    assert!(added.contains("workflow-example") && added.contains("5 nodes"), "{added}");
    assert_eq!(ok(root, &["cc", "workflow", "list"]).trim(), "workflow-example");

    let listed = ok(root, &["cc", "workflow", "list", "--name=workflow-example"]);
    assert!(listed.starts_with("workflow:"), "{listed}");
    let job = ok(root, &["cc", "workflow", "list", "--name=workflow-example", "--job=compute"]);
    assert!(job.contains("script: test-compute.sh"), "{job}");

    let plan = ok(root, &["cc", "workflow", "run", "--name=workflow-example", "--dryrun"]);
    let order: Vec<&str> = plan.lines().map(|l| l.split_whitespace().last().unwrap()).collect();
    assert_eq!(order, ["start", "fetch-data", "compute", "analyze", "end"]);

    let run = ok(root, &["cc", "workflow", "run", "--name=workflow-example"]);
    let table: Vec<&str> = run.lines().skip_while(|l| !l.starts_with("name")).collect();
    assert_eq!(table.len(), 7, "{run}");
    assert!(table[2..].iter().all(|l| l.split_whitespace().nth(1) == Some("done")), "{run}");

    let json = ok(root, &["cc", "workflow", "status", "--name=workflow-example", "--output=json"]);
    let rows: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["status"] == "done" && r["progress"] == 100), "{json}");
    let yaml_rows = ok(root, &["cc", "workflow", "status", "--name=workflow-example", "--output=yaml"]);
    assert!(yaml_rows.contains("name: fetch-data"), "{yaml_rows}");

    let svg_path = ok(root, &["cc", "workflow", "graph", "--name=workflow-example"]);
    let svg = std::fs::read_to_string(svg_path.trim()).unwrap();
    assert!(svg.contains("<svg") && svg.contains("fetch-data"), "{svg}");
    let dot_path = dir.path().join("g.dot");
    ok(root, &["cc", "workflow", "graph", "--name=workflow-example", "--format=dot", &format!("--output={}", dot_path.display())]);
    assert!(std::fs::read_to_string(&dot_path).unwrap().starts_with("digraph"));

    // Rerunning a finished workflow needs --reset to do anything new.
    let rerun = ok(root, &["cc", "workflow", "run", "--name=workflow-example", "--reset", "--parallel=2"]);
    assert!(rerun.contains("running"), "{rerun}");

    ok(root, &["cc", "workflow", "delete", "--name=workflow-example", "--job=end"]);
    let listed = ok(root, &["cc", "workflow", "list", "--name=workflow-example"]);
    assert!(!listed.contains("\n    end:"), "{listed}");
    ok(root, &["cc", "workflow", "delete", "--name=workflow-example"]);
    assert_eq!(ok(root, &["cc", "workflow", "list"]).trim(), "");
}

#[test]
fn failing_run_exits_one_with_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["cc", "workflow", "add", "--job=bad", "exec=false"]);
    ok(root, &["cc", "workflow", "add", "--job=after", "exec=true"]);
    ok(root, &["cc", "workflow", "--dependencies=bad,after"]);
    let out = hyflow(root, &["cc", "workflow", "run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("failed"), "{}", stdout(&out));
    assert!(stderr(&out).contains("halted"), "{}", stderr(&out));
}

#[test]
fn service_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let port = free_port();

    let err = fails(root, &["cc", "stop"], 1);
    assert!(err.contains("not running"), "{err}");
    fails(root, &["cc", "status"], 1);

    let started = ok(root, &["cc", "start", &format!("--port={port}")]);
    assert!(started.contains(&format!("127.0.0.1:{port}")), "{started}");
    let err = fails(root, &["cc", "start", &format!("--port={port}")], 1);
    assert!(err.contains("already running"), "{err}");
    assert!(ok(root, &["cc", "status"]).contains(&port));

    let tar = dir.path().join("workflow-example.tar");
    let mut builder = tar::Builder::new(std::fs::File::create(&tar).unwrap());
    builder.append_dir_all(".", example_dir()).unwrap();
    builder.finish().unwrap();
    let added = ok(root, &["cc", "workflow", "service", "add", tar.to_str().unwrap()]);
    assert!(added.contains("workflow-example"), "{added}");
    assert_eq!(ok(root, &["cc", "workflow", "service", "list"]).trim(), "workflow-example");
    let job = ok(root, &["cc", "workflow", "service", "list", "--name=workflow-example", "--job=analyze"]);
    assert!(job.contains("name: analyze"), "{job}");
    let run = ok(root, &["cc", "workflow", "service", "run", "--name=workflow-example", "--wait"]);
    assert!(run.contains("started workflow `workflow-example`"), "{run}");
    assert_eq!(run.lines().filter(|l| l.contains(" done ")).count(), 5, "{run}");
    let err = fails(root, &["cc", "workflow", "service", "list", "--name=ghost"], 1);
    assert!(err.contains("404"), "{err}");

    // The service and command-line mode share the store.
    assert_eq!(ok(root, &["cc", "workflow", "list"]).trim(), "workflow-example");

    ok(root, &["cc", "stop"]);
    fails(root, &["cc", "status"], 1);
    assert!(!root.join("service.json").exists());
}
