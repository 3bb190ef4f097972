use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_threatprop")).current_dir(dir).args(args).output().unwrap()
}

fn path_graph(dir: &Path) {
    std::fs::write(dir.join("edges.csv"), "src,dst,weight,t_src,t_dst\n0,1,1,,\n1,2,1,,\n2,3,1,,\n3,4,1,,\n").unwrap();
    std::fs::write(dir.join("obs.csv"), "vertex,p\n0,1\n4,0\n").unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["propagate", "spatial", "--edges", "missing.csv"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn injected_fault_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["validate", "--inject-fault", "flip-boundary-coupling", "--report", "r.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("maximum principle"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn solver_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    let out = run(
        dir.path(),
        &[
            "propagate", "spatial", "--edges", "edges.csv", "--observations", "obs.csv", "--prior", "uniform", "--psi",
            "1", "--max-iter", "1", "--out", "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn spatial_propagation_on_a_path_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    path_graph(dir.path());
    let out = run(
        dir.path(),
        &[
            "propagate", "spatial", "--edges", "edges.csv", "--observations", "obs.csv", "--prior", "uniform", "--psi",
            "1", "--out", "t.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("t.csv")).unwrap();
    let theta: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    for (v, t) in theta.iter().enumerate() {
        assert!((t - (1.0 - v as f64 / 4.0)).abs() < 1e-9, "vertex {v}: {t}");
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("t.csv.meta.json")).unwrap()).unwrap();
    assert!(meta["version"].is_string());
}

#[test]
fn generate_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["generate", "sbm", "--r-fg", "1.5", "--seed", "3", "--out", "net"]);
    assert!(out.status.success());
    for f in ["edges.csv", "truth.csv", "meta.json"] {
        assert!(dir.path().join("net").join(f).exists(), "{f}");
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("net/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"].as_str().map(str::len), Some(64));

    std::fs::write(dir.path().join("perfect.csv"), "threshold,pfa,pd,se\ninf,0,0,0\n1,0,1,0\n0,1,1,0\n").unwrap();
    let args = ["plot", "--curve", "perfect=perfect.csv", "--title", "t", "--out", "a.svg"];
    assert!(run(dir.path(), &args).status.success());
    let svg = std::fs::read_to_string(dir.path().join("a.svg")).unwrap();
    assert!(svg.contains(r#"<polyline points="60.00,460.00 60.00,20.00 500.00,20.00""#));
    assert!(run(dir.path(), &["plot", "--curve", "perfect=perfect.csv", "--title", "t", "--out", "b.svg"]).status.success());
    assert_eq!(svg, std::fs::read_to_string(dir.path().join("b.svg")).unwrap());
}
