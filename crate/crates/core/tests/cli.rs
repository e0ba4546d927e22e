mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use common::*;
use traffic_xai::explanation::ExplanationMethod;
use traffic_xai::service::{ExplainService, ServiceConfig};

const BIN: &str = env!("CARGO_BIN_EXE_traffic-xai");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("PORT")
        .env_remove("MODEL_PATH")
        .env_remove("DATA_PATH")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains the default model on the checked-in sample into a temp dir.
fn trained_model() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("pretrained_model");
    let o = run(&["train", "--data", SAMPLE_CSV, "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    (dir, model)
}

#[test]
fn train_defaults_metrics_and_determinism() {
    let (dir, model) = trained_model();
    let artifact = std::fs::read_to_string(&model).unwrap();
    assert!(artifact.contains("n_trees=100"));
    assert!(artifact.contains("split train_fraction=0.8 seed=42"));
    let metrics = std::fs::read_to_string(dir.path().join("pretrained_model.metrics")).unwrap();
    assert!(metrics.starts_with("train_rows=320 inference_rows=80 training_mse="), "{metrics}");
    assert_eq!(metrics.lines().count(), 1);

    let again = dir.path().join("again");
    let o = run(&["train", "--data", SAMPLE_CSV, "--out", s(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let other = dir.path().join("other");
    run(&["train", "--data", SAMPLE_CSV, "--out", s(&other), "--seed", "43"]);
    assert_ne!(std::fs::read(&model).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn train_errors() {
    let o = run(&["train", "--data", "/no/such/traffic.csv", "--out", "/tmp/unused-model"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/traffic.csv"));
    let o = run(&["train", "--data", SAMPLE_CSV, "--split", "1.5", "--out", "/tmp/unused-model"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["retrain"]).status.code(), Some(2));
    assert_eq!(run(&["predict", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn explain_text_matches_golden_files() {
    let (_dir, model) = trained_model();
    for row in ["0", "17"] {
        for m in ExplanationMethod::ALL {
            let o = run(&["explain", "--model", s(&model), "--data", SAMPLE_CSV, "--row", row, "--method", m.as_str()]);
            assert!(o.status.success(), "{}", stderr(&o));
            let golden = std::fs::read_to_string(golden_dir().join(format!("row{row}_{m}.txt"))).unwrap();
            assert_eq!(stdout(&o), golden, "row {row}, {m}");
        }
    }
}

#[test]
fn explain_text_is_plain() {
    let (_dir, model) = trained_model();
    for m in ExplanationMethod::ALL {
        let o = run(&["explain", "--model", s(&model), "--data", SAMPLE_CSV, "--row", "3", "--method", m.as_str()]);
        let text = stdout(&o);
        for line in text.lines() {
            assert!(line.chars().count() <= 80, "{line}");
            assert!(!line.chars().any(|c| c == '\t' || c == '\x1b' || ('\u{2500}'..='\u{257f}').contains(&c)));
        }
        let bullets = text.lines().filter(|l| l.starts_with("- ")).count();
        assert_eq!(bullets, 3);
    }
}

#[test]
fn explain_errors() {
    let (_dir, model) = trained_model();
    let o = run(&["explain", "--model", s(&model), "--data", SAMPLE_CSV, "--row", "0", "--method", "gradcam"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for m in ExplanationMethod::ALL {
        assert!(err.contains(m.as_str()), "{err}");
    }
    let o = run(&["explain", "--model", s(&model), "--data", SAMPLE_CSV, "--row", "80", "--method", "lime-simplified"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("out of range"));
}

#[test]
fn explain_json_matches_service_payload() {
    let (_dir, model) = trained_model();
    let svc = ExplainService::open(ServiceConfig::new(&model, SAMPLE_CSV));
    for m in ExplanationMethod::ALL {
        let o = run(&["explain", "--model", s(&model), "--data", SAMPLE_CSV, "--row", "5", "--method", m.as_str(), "--format", "json"]);
        assert!(o.status.success());
        let payload = svc.get_explanation(5, m).unwrap();
        assert_eq!(stdout(&o).trim_end(), &*payload);
    }
}

#[test]
fn predict_lines_match_service() {
    let (_dir, model) = trained_model();
    let o = run(&["predict", "--model", s(&model), "--data", SAMPLE_CSV, "--limit", "0"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());

    let o = run(&["predict", "--model", s(&model), "--data", SAMPLE_CSV, "--limit", "5"]);
    let svc = ExplainService::open(ServiceConfig::new(&model, SAMPLE_CSV));
    let rows = svc.get_predictions().unwrap();
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    for (line, row) in lines.iter().zip(&rows) {
        assert_eq!(
            *line,
            format!(
                "{}: flow={:.1} city={} detector={} speed={:.1} occ={:.4}",
                row.row_id, row.pred_flow, row.city, row.detector, row.speed, row.occupancy
            )
        );
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_serve(model: &Path, port_env: Option<u16>, port_flag: Option<u16>) -> Server {
    let mut cmd = Command::new(BIN);
    cmd.args(["serve", "--host", "127.0.0.1"])
        .env("MODEL_PATH", model)
        .env("DATA_PATH", SAMPLE_CSV)
        .env_remove("PORT")
        .stdout(Stdio::null())
        .stderr(Stdio::piped());
    if let Some(p) = port_env {
        cmd.env("PORT", p.to_string());
    }
    if let Some(p) = port_flag {
        cmd.args(["--port", &p.to_string()]);
    }
    Server(cmd.spawn().unwrap())
}

fn wait_healthy(port: u16, limit: Duration) -> Option<String> {
    let start = Instant::now();
    while start.elapsed() < limit {
        if let Some(r) = get(port, "/api/health") {
            if r.contains("\"ready\":true") {
                return Some(r);
            }
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    None
}

#[cfg(unix)]
#[test]
fn serve_honours_port_env_and_exits_cleanly() {
    let (_dir, model) = trained_model();
    let port = free_port();
    let mut server = spawn_serve(&model, Some(port), None);
    assert!(wait_healthy(port, Duration::from_secs(10)).is_some());
    let line = BufReader::new(server.0.stderr.take().unwrap()).lines().next().unwrap().unwrap();
    assert_eq!(line, format!("listening on http://127.0.0.1:{port}"));

    let status = Command::new("kill").args(["-INT", &server.0.id().to_string()]).status().unwrap();
    assert!(status.success());
    let exit = server.0.wait().unwrap();
    assert_eq!(exit.code(), Some(0));
}

#[test]
fn serve_flag_overrides_env() {
    let (_dir, model) = trained_model();
    let (env_port, flag_port) = (free_port(), free_port());
    let _server = spawn_serve(&model, Some(env_port), Some(flag_port));
    assert!(wait_healthy(flag_port, Duration::from_secs(10)).is_some());
    assert!(get(env_port, "/api/health").is_none());
}

#[test]
fn serve_port_in_use_exits_1() {
    let (_dir, model) = trained_model();
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port();
    let o = Command::new(BIN)
        .args(["serve", "--host", "127.0.0.1", "--port", &port.to_string(), "--model", s(&model), "--data", SAMPLE_CSV])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&port.to_string()));
}
