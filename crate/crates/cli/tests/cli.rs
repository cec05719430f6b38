use std::path::PathBuf;
use std::process::{Command, Output};

use xcosw_core::{from_interchange_json, parse_xcos_xml};

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

fn xcosw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xcosw"))
        .args(args)
        .output()
        .unwrap()
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_unset_motor() {
    let out = xcosw(&["validate", path_str(&model("dc_motor_unset.xml"))]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout
        .lines()
        .filter(|l| l.contains("UNSET_PARAM"))
        .collect();
    assert_eq!(lines.len(), 2, "{stdout}");
}

#[test]
fn validate_clean_model() {
    let out = xcosw(&["validate", path_str(&model("dc_motor.xml"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_loop() {
    let out = xcosw(&["validate", path_str(&model("gain_loop.xml"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("ALGEBRAIC_LOOP"));
}

#[test]
fn simulate_lag_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    let out = xcosw(&[
        "simulate",
        path_str(&model("lag.xml")),
        "--tf",
        "3",
        "--out",
        path_str(&csv_path),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["t", "scope1"]);
    let rows: Vec<(f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.first().unwrap().0, 0.0);
    assert_eq!(rows.last().unwrap().0, 3.0);
    for (t, y) in rows {
        assert!((y - (1.0 - (-2.0 * t).exp())).abs() < 1e-7);
    }
}

#[test]
fn simulate_json_to_stdout() {
    let out = xcosw(&[
        "simulate",
        path_str(&model("dollar.xml")),
        "--format",
        "json",
        "--solver",
        "adaptive",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metadata"]["solver"], "adaptive");
    assert_eq!(*v["times"].as_array().unwrap().last().unwrap(), 1.0);
}

#[test]
fn simulate_refuses_unset_motor() {
    let out = xcosw(&["simulate", path_str(&model("dc_motor_unset.xml"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("UNSET_PARAM"));
}

#[test]
fn simulate_bad_options() {
    let out = xcosw(&["simulate", path_str(&model("lag.xml")), "--tf", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("m.json");
    let xml = dir.path().join("m.xml");
    let src = model("dc_motor.xml");
    let a = xcosw(&[
        "convert",
        path_str(&src),
        "--to",
        "json",
        "--out",
        path_str(&json),
    ]);
    assert_eq!(a.status.code(), Some(0));
    let b = xcosw(&[
        "convert",
        path_str(&json),
        "--to",
        "xml",
        "--out",
        path_str(&xml),
    ]);
    assert_eq!(b.status.code(), Some(0));
    let original = parse_xcos_xml(&std::fs::read(&src).unwrap()).unwrap();
    let via_json = from_interchange_json(&std::fs::read(&json).unwrap()).unwrap();
    let back = parse_xcos_xml(&std::fs::read(&xml).unwrap()).unwrap();
    assert_eq!(via_json.canonicalize(), original.canonicalize());
    assert_eq!(back.canonicalize(), original.canonicalize());
}

#[test]
fn blocks_lists_the_palette() {
    let out = xcosw(&["blocks"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let kinds: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"STEP_FUNCTION"));
    assert_eq!(kinds.len(), 9);
}

#[test]
fn unreadable_inputs_exit_2() {
    let out = xcosw(&["validate", "/definitely/not/here.xml"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.xml");
    std::fs::write(&bad, "<XcosDiagram><unclosed>").unwrap();
    let out = xcosw(&["validate", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("XML"));
    let out = xcosw(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_answers_on_env_port() {
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::time::{Duration, Instant};

    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_xcosw"))
        .args(["serve", "--host", "127.0.0.1", "--jobs", "2"])
        .env("XCOSW_PORT", port.to_string())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    let response = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(mut s) => {
                s.write_all(b"GET /api/blocks HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
                    .unwrap();
                let mut buf = String::new();
                s.read_to_string(&mut buf).unwrap();
                break buf;
            }
            Err(_) if started.elapsed() < Duration::from_secs(20) => {
                std::thread::sleep(Duration::from_millis(50))
            }
            Err(e) => {
                let _ = child.kill();
                panic!("service did not start: {e}");
            }
        }
    };
    let _ = child.kill();
    let _ = child.wait();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("STEP_FUNCTION"));
}

#[test]
fn csv_and_json_exports_carry_the_same_series() {
    let motor = model("dc_motor.xml");
    let csv_out = xcosw(&["simulate", path_str(&motor), "--tf", "1"]);
    let json_out = xcosw(&[
        "simulate",
        path_str(&motor),
        "--tf",
        "1",
        "--format",
        "json",
    ]);
    assert_eq!(csv_out.status.code(), Some(0));
    assert_eq!(json_out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&json_out.stdout).unwrap();
    let times = v["times"].as_array().unwrap();
    let speed = v["signals"][0]["values"].as_array().unwrap();
    let mut reader = csv::Reader::from_reader(&csv_out.stdout[..]);
    assert_eq!(reader.headers().unwrap(), vec!["t", "speed"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), times.len());
    for (row, (t, y)) in rows.iter().zip(times.iter().zip(speed)) {
        assert_eq!(row[0].parse::<f64>().unwrap(), t.as_f64().unwrap());
        assert_eq!(row[1].parse::<f64>().unwrap(), y.as_f64().unwrap());
    }
}
