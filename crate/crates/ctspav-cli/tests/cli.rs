//! End-to-end checks of the binary: exit codes, file determinism, and the
//! analyze/report flows over real solution files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctspav"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ctspav-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn generate(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let status = bin()
        .args([
            "generate",
            "--n",
            &n.to_string(),
            "--profile",
            "neighborhood",
            "--seed",
            &seed.to_string(),
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    out
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = tmpdir("badinput");
    let st = bin()
        .args(["solve", "--instance"])
        .arg(dir.join("missing.json"))
        .args(["--variant", "base", "--out"])
        .arg(dir.join("x.json"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));

    let inst = generate(&dir, "inst.json", 2, 1);
    let st = bin()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--variant", "bogus", "--out"])
        .arg(dir.join("x.json"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));

    let st = bin()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--variant", "base", "--budget-secs", "0", "--out"])
        .arg(dir.join("x.json"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn optimal_solve_exits_zero_and_is_byte_deterministic() {
    let dir = tmpdir("determinism");
    let inst = generate(&dir, "inst.json", 3, 12);
    for name in ["a.json", "b.json"] {
        let st = bin()
            .args(["solve", "--instance"])
            .arg(&inst)
            .args([
                "--variant",
                "hybrid",
                "--threads",
                "1",
                "--seed",
                "5",
                "--out",
            ])
            .arg(dir.join(name))
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    let a = std::fs::read(dir.join("a.json")).unwrap();
    let b = std::fs::read(dir.join("b.json")).unwrap();
    assert_eq!(
        a, b,
        "repeated single-threaded solves must be byte-identical"
    );

    // Analytics over the same solution twice is byte-identical too.
    for out in ["r1", "r2"] {
        let st = bin()
            .args(["analyze", "--instance"])
            .arg(&inst)
            .arg("--solutions")
            .arg(dir.join("a.json"))
            .arg("--out-dir")
            .arg(dir.join(out))
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    for f in ["metrics.csv", "congestion.csv", "report.json"] {
        let x = std::fs::read(dir.join("r1").join(f)).unwrap();
        let y = std::fs::read(dir.join("r2").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn generate_same_seed_same_bytes() {
    let dir = tmpdir("genseed");
    let a = generate(&dir, "a.json", 4, 77);
    let b = generate(&dir, "b.json", 4, 77);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let c = generate(&dir, "c.json", 4, 78);
    assert_ne!(
        std::fs::read(dir.join("a.json")).unwrap(),
        std::fs::read(c).unwrap()
    );
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn report_and_cluster_flows() {
    let dir = tmpdir("report");
    let inst = generate(&dir, "inst.json", 2, 3);
    let sol = dir.join("sol.json");
    let st = bin()
        .args(["solve", "--instance"])
        .arg(&inst)
        .args(["--variant", "sec", "--out"])
        .arg(&sol)
        .args(["--log-dir"])
        .arg(dir.join("logs"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(dir.join("logs").join("sol.nodes.csv").exists());
    assert!(dir.join("logs").join("sol.cuts.csv").exists());

    let report = dir.join("summary.csv");
    let st = bin()
        .args(["report", "--solutions"])
        .arg(&sol)
        .args(["--out"])
        .arg(&report)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.lines().count() == 2);
    assert!(text.contains("sec"));

    let pts = dir.join("points.csv");
    std::fs::write(
        &pts,
        "commuter_id,x,y\nc1,0,0\nc2,5,5\nc3,100,100\nc4,101,99\n",
    )
    .unwrap();
    let st = bin()
        .args(["cluster", "--input"])
        .arg(&pts)
        .args(["--cap", "2", "--out"])
        .arg(dir.join("clusters.json"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let clusters = std::fs::read_to_string(dir.join("clusters.json")).unwrap();
    assert!(clusters.contains("c1") && clusters.contains("c4"));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn time_limit_exit_code_with_incumbent() {
    let dir = tmpdir("timelimit");
    // A medium instance with a one-node budget: the root produces an
    // incumbent via the rounding heuristic but cannot prove optimality.
    let out = dir.join("inst.json");
    let st = bin()
        .args([
            "generate",
            "--n",
            "5",
            "--profile",
            "medium",
            "--seed",
            "2",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let st = bin()
        .args(["solve", "--instance"])
        .arg(&out)
        .args(["--variant", "base", "--node-budget", "1", "--out"])
        .arg(dir.join("sol.json"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
    let text = std::fs::read_to_string(dir.join("sol.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["status"], "time-limit");
    assert!(
        v["chi"].is_number(),
        "time-limit run should still carry an incumbent"
    );
    let _ = std::fs::remove_dir_all(dir);
}
