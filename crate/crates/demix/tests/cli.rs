use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn demix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demix")).args(args).output().expect("binary runs")
}

fn write_problem(dir: &Path, alpha: f64) {
    // 6 × 8 operator, signal 3e₁ − 2e₅ plus a 1-sparse DCT component.
    let rows = 6;
    let cols = 8;
    let m: Vec<f64> = (0..rows * cols).map(|i| ((i * 37 % 17) as f64 - 8.0) / 5.0).collect();
    let text: String = (0..rows)
        .map(|r| (0..cols).map(|c| m[r * cols + c].to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(dir.join("M.csv"), text).unwrap();
    let x = [3.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0];
    let b: Vec<String> = (0..rows).map(|r| (0..cols).map(|c| m[r * cols + c] * x[c]).sum::<f64>().to_string()).collect();
    fs::write(dir.join("b.csv"), b.join("\n")).unwrap();
    let json = format!(
        r#"{{
            "operator": {{"kind": "dense", "path": "M.csv", "rows": {rows}, "cols": {cols}}},
            "observation": "b.csv",
            "alpha": {alpha},
            "components": [
                {{"lambda": 1.0, "name": "spikes", "set": {{"kind": "cross_polytope", "n": {cols}}}}},
                {{"lambda": 1.0, "set": {{"kind": "transformed", "q": {{"kind": "dct", "n": {cols}}},
                                          "inner": {{"kind": "cross_polytope", "n": {cols}}}}}}}
            ]
        }}"#
    );
    fs::write(dir.join("problem.json"), json).unwrap();
}

#[test]
fn solve_writes_components_and_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    write_problem(dir.path(), 0.0);
    let out = dir.path().join("out");
    let res = demix(&["solve", dir.path().join("problem.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["component_0.csv", "component_1.csv", "solution.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let coefficients = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    assert!(coefficients.starts_with("component_id,atom_descriptor,coefficient\n"));
    assert!(coefficients.lines().count() > 1);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("outer_iter,tau,lower_bound,residual_norm,gap,inner_iters\n"));
}

#[test]
fn solve_reports_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = demix(&["solve", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(4));
    fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let bad = demix(&["solve", dir.path().join("bad.json").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(4));
    assert_eq!(demix(&["phase-mn", "--trials", "x"]).status.code(), Some(1));
    assert_eq!(demix(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_csv_is_deterministic_and_parallel_safe() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let args = ["phase-mn", "--n", "40,60", "--m", "20,40", "--trials", "3", "--workers", workers, "--out", out.to_str().unwrap()];
        assert!(demix(&args).status.success());
        let strip = |text: String| -> String {
            // Drop the trailing wall-time column.
            text.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n").collect()
        };
        (fs::read(out.join("phase.csv")).unwrap(), strip(fs::read_to_string(out.join("trials.csv")).unwrap()))
    };
    let serial = run("serial", "1");
    let again = run("again", "1");
    let parallel = run("parallel", "3");
    assert_eq!(serial, again);
    assert_eq!(serial, parallel);
    let phase = String::from_utf8(serial.0).unwrap();
    assert!(phase.starts_with("n,m,k,s,trials,successes,success_rate,curve_m\n"));
    assert_eq!(phase.lines().count(), 5);
}

#[test]
fn noise_sweep_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("noise");
    let res = demix(&["noise-sweep", "--alpha", "0.1,0.3", "--trials", "2", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let text = fs::read_to_string(out.join("noise.csv")).unwrap();
    assert!(text.starts_with("alpha,mean_maxerr,std_maxerr,trials\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn scene_writes_pgm_and_scale_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sg");
    let res = demix(&["star-galaxy", "--size", "16", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let pgm = fs::read(out.join("recovered_sparse.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    let table = fs::read_to_string(out.join("components.csv")).unwrap();
    assert!(table.starts_with("component,image,relative_error,pgm_offset,pgm_scale\n"));
}
