use std::path::Path;
use std::process::{Command, Output};

fn mhcov(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhcov")).arg("--out").arg(dir).args(args).output().expect("spawn mhcov")
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("# generated-unix:")).collect::<Vec<_>>().join("\n")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn reruns_are_byte_identical_apart_from_timestamp() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--steps", "2000", "--replicates", "2", "--seed", "5", "counterexample", "--c", "0.5"];
    assert!(mhcov(a.path(), &args).status.success());
    assert!(mhcov(b.path(), &args).status.success());
    let (x, y) = (read(a.path(), "counterexample.csv"), read(b.path(), "counterexample.csv"));
    assert_eq!(without_timestamp(&x), without_timestamp(&y));

    let other = ["--steps", "2000", "--replicates", "2", "--seed", "6", "counterexample", "--c", "0.5"];
    assert!(mhcov(b.path(), &other).status.success());
    assert_ne!(without_timestamp(&x), without_timestamp(&read(b.path(), "counterexample.csv")));
}

#[test]
fn csv_header_declares_schema_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = mhcov(dir.path(), &["theory-cov", "--target", "gauss:mu=0,scale=1", "--kernel", "rw-gauss:sigma=1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "theory_cov.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema: mhcov/theory-cov/v1");
    let hash = lines[1].strip_prefix("# config-sha256: ").unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(lines[2].starts_with("# generated-unix: "));
    assert_eq!(lines[3], "target,kernel,formula,cov,est_error");
    assert_eq!(lines.len(), 4 + 3);
}

#[test]
fn design_json_has_the_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    assert!(mhcov(dir.path(), &["design", "--target", "gauss:mu=5,scale=1"]).status.success());
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "design.json")).unwrap();
    for key in ["y_star", "x_star", "w_max", "cov_infimum", "sigma_pi2", "unique", "foc_residual"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let y = v["y_star"].as_f64().unwrap();
    assert!((v["x_star"].as_f64().unwrap() - 2.0 * y).abs() < 1e-15);
    assert!((y - 1.19).abs() < 0.01);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    // bad descriptor: configuration error
    let out = mhcov(dir.path(), &["design", "--target", "gauss:mu=0,scale=-1"]);
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["class"], "config");
    assert_eq!(rec["exit_code"], 2);

    // unknown flag is rejected by the argument parser
    assert_eq!(mhcov(dir.path(), &["design", "--nope"]).status.code(), Some(2));

    // atomic increment without opt-in
    let out = mhcov(dir.path(), &["--steps", "10", "sample", "--target", "gauss", "--kernel", "rw-twopoint:xstar=2"]);
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"], "atomic_measure");

    // start outside the support of a custom target: numeric error
    let grid = dir.path().join("grid.csv");
    std::fs::write(&grid, "x,logpdf\n-1,-1\n0,0\n1,-1\n").unwrap();
    let target = format!("custom:file={},symmetric=true", grid.display());
    let out = mhcov(dir.path(), &["--steps", "10", "sample", "--target", &target, "--kernel", "rw-gauss:sigma=1", "--init", "4"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // quadrature that cannot meet its tolerance: numeric error
    let out = mhcov(dir.path(), &["theory-cov", "--target", "gauss", "--kernel", "rw-gauss:sigma=1", "--abs-tol", "1e-30", "--rel-tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invariant_violation_exits_with_four() {
    // away from the origin the flip kernel proposes into the far tail, the
    // chain rarely moves and the lag-1 covariance is positive
    let dir = tempfile::tempdir().unwrap();
    let out = mhcov(dir.path(), &["--steps", "2000", "--replicates", "1", "counterexample", "--target", "gauss:mu=3,scale=1", "--c", "0.5"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["class"], "invariant");
    assert!(dir.path().join("counterexample.csv").exists());
}

#[test]
fn sample_writes_matching_csv_and_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = mhcov(dir.path(), &["--steps", "300", "sample", "--target", "logistic:mu=3,scale=1", "--kernel", "rw-bimodal:xstar=4.4,sigma=1.7"]);
    assert!(out.status.success());
    let csv = read(dir.path(), "chain.csv");
    let (states, flags) = mhcov::sampler::read_binary(std::fs::File::open(dir.path().join("chain.bin")).unwrap()).unwrap();
    assert_eq!(states.len(), 300);
    for (line, (s, a)) in csv.lines().skip(1).zip(states.iter().zip(&flags)) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), *s);
        assert_eq!(f[2] == "1", *a);
    }
}
