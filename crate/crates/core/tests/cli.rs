use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use spectral_ends::mesh::read_mesh;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-ends")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spectral-ends-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["eigen", "--refine", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--geometry"));

    let out = run(&["resonance-scan", "--geometry", "obstructed-strip", "--re", "1:2:5", "--im", "-0.1:0.1:5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["eigen", "--geometry", "no-such-shape"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn injected_fault_fails_validation() {
    let out = run(&["validate", "--inject-fault", "branch-sign"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL"));
}

#[test]
fn mesh_round_trip() {
    let path = scratch("bent.mesh");
    let out = run(&["mesh", "--geometry", "bent-waveguide", "--refine", "1", "--out", path.to_str().unwrap(), "--check"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let nodes: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("nodes: "))
        .expect("node count line")
        .trim()
        .parse()
        .unwrap();
    let read = read_mesh(&path).unwrap();
    assert_eq!(read.mesh.n_nodes(), nodes);
    assert_eq!(read.reoriented, 0);
    read.mesh.check().unwrap();
}

#[test]
fn eigen_document() {
    let doc = json(&run(&["eigen", "--geometry", "bent-waveguide", "--refine", "2", "--lambda-max", "30"]));
    let findings = doc["findings"].as_array().unwrap();
    assert_eq!(findings.len(), 1);
    let lambda = findings[0]["lambda"].as_f64().unwrap();
    assert!((lambda - 2.346).abs() < 0.02, "{lambda}");
    assert!(doc["k_bound"].as_u64().unwrap() >= 1);
    assert!(doc["timings"].is_object());
}

#[test]
fn scan_is_independent_of_workers() {
    let args = |w: &'static str, csv: &PathBuf| {
        let mut a = vec![
            "resonance-scan", "--geometry", "obstructed-strip", "--delta", "0.2", "--radius", "0.5", "--refine", "2",
            "--lambda-max", "40", "--re", "1.8:2.3:11", "--im", "-0.05:0:6", "--levels", "2", "--workers", w, "--csv",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        a.push(csv.to_str().unwrap().to_string());
        a
    };
    let (c1, c2) = (scratch("w1.csv"), scratch("w2.csv"));
    let run_owned = |a: Vec<String>| run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let mut d1 = json(&run_owned(args("1", &c1)));
    let mut d2 = json(&run_owned(args("2", &c2)));
    for d in [&mut d1, &mut d2] {
        let obj = d.as_object_mut().unwrap();
        obj.remove("timings");
        obj["config"].as_object_mut().unwrap().remove("workers");
    }
    assert_eq!(d1, d2);
    let (t1, t2) = (std::fs::read_to_string(&c1).unwrap(), std::fs::read_to_string(&c2).unwrap());
    assert_eq!(t1, t2);
    assert_eq!(t1.lines().count(), 1 + 11 * 6);
}
