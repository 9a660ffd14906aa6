use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stsep"))
        .args(args)
        .env_remove("STSEP_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup(dir: &Path) -> (String, String) {
    let pattern = dir.join("p.csv");
    let window = dir.join("w.txt");
    fs::write(&window, "rect 0 1 0 1 0 1\n").unwrap();
    let out = stsep(&["simulate", "burst", "--case", "iii", "--gamma", "50", "--target-n", "200", "--seed", "3", "-o", s(&pattern)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (s(&pattern).to_string(), s(&window).to_string())
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = setup(dir.path());
    let first = fs::read_to_string(&p).unwrap();
    assert!(first.starts_with("x,y,t\n"));
    assert!(first.lines().count() > 100);
    setup(dir.path());
    assert_eq!(fs::read_to_string(&p).unwrap(), first);
    assert!(Path::new(&format!("{p}.manifest.json")).exists());
}

#[test]
fn lgcp_simulation_runs() {
    let out = stsep(&["simulate", "lgcp", "--grid", "8,8,8", "--seed", "2"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("x,y,t\n"));
}

#[test]
fn chisq_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let (p, w) = setup(dir.path());
    let out = stsep(&["test", "chisq", "--cells", "3,3,3", &p, &w]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["test"], "chisq");
    assert_eq!(v["chisq"]["df"], 16);
    assert!(v["p_value"].as_f64().unwrap() <= 1.0);
}

#[test]
fn permutation_test_writes_grids_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (p, w) = setup(dir.path());
    let run = |name: &str, threads: &str| {
        let out_dir = dir.path().join(name);
        let out = stsep(&[
            "test", "perm", "--nperm", "19", "--grid", "10,10,8", "--bw-space", "0.1", "--bw-time", "0.1", "--seed", "5",
            "--threads", threads, "-o", s(&out_dir), &p, &w,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a", "1");
    let b = run("b", "2");
    for f in ["result.json", "data.csv", "low.csv", "upp.csv", "exitcode.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["statistic"], "S");
    assert_eq!(v["grid"], serde_json::json!([10, 10, 8]));
    let n = v["envelope"]["data"].as_array().unwrap().len();
    assert_eq!(v["envelope"]["exit_codes"].as_array().unwrap().len(), n);
    let csv = fs::read_to_string(a.join("data.csv")).unwrap();
    assert!(csv.starts_with("x,y,t,value\n"));
    assert_eq!(csv.lines().count(), n + 1);
    assert!(a.join("manifest.json").exists());
}

#[test]
fn malformed_pattern_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    let w = dir.path().join("w.txt");
    fs::write(&p, "x,y,t\n0.5,0.5\n").unwrap();
    fs::write(&w, "rect 0 1 0 1 0 1\n").unwrap();
    let out = stsep(&["test", "chisq", s(&p), s(&w)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn outside_point_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    let w = dir.path().join("w.txt");
    fs::write(&p, "x,y,t\n0.5,0.5,0.5\n2,0.5,0.5\n").unwrap();
    fs::write(&w, "rect 0 1 0 1 0 1\n").unwrap();
    let out = stsep(&["test", "chisq", s(&p), s(&w)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(stsep(&[]).status.code(), Some(1));
    assert_eq!(stsep(&["test", "perm", "--stat", "Q", "a", "b"]).status.code(), Some(1));
    assert_eq!(stsep(&["--help"]).status.code(), Some(0));
}

#[test]
fn estimate_exports_long_grids() {
    let dir = tempfile::tempdir().unwrap();
    let (p, w) = setup(dir.path());
    let out_dir = dir.path().join("est");
    let out = stsep(&["estimate", "--grid", "10,10,5", "--bw", "auto", "-o", s(&out_dir), &p, &w]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let st = fs::read_to_string(out_dir.join("rho_st.csv")).unwrap();
    assert_eq!(st.lines().count(), 501);
    let time = fs::read_to_string(out_dir.join("rho_time.csv")).unwrap();
    assert!(time.lines().nth(1).unwrap().starts_with(",,"));
}

const RECON: &str = "w_k = 1.0\nw_dk = 10.0\nw_delta = 0.001\nt_k = 0.2\nr_k = 0.2\nt_d = 0.1\nr_d = 0.1\nk_max = 2\nmax_iter = 200\nmax_consecutive_rejects = 50\ngrid = [8, 8, 8]\n";

#[test]
fn reconstruct_writes_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let (p, w) = setup(dir.path());
    let cfg = dir.path().join("recon.toml");
    fs::write(&cfg, RECON).unwrap();
    let out_dir = dir.path().join("rec");
    let out = stsep(&["reconstruct", "--config", s(&cfg), "-n", "2", "--bw-space", "0.1", "--bw-time", "0.1", "-o", s(&out_dir), &p, &w]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let n = fs::read_to_string(&p).unwrap().lines().count();
    for f in ["recon_0000.csv", "recon_0001.csv"] {
        assert_eq!(fs::read_to_string(out_dir.join(f)).unwrap().lines().count(), n);
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn recon_config_unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (p, w) = setup(dir.path());
    let cfg = dir.path().join("recon.toml");
    fs::write(&cfg, format!("{RECON}temperature = 1.0\n")).unwrap();
    let out = stsep(&["reconstruct", "--config", s(&cfg), "-o", s(&dir.path().join("r")), &p, &w]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recon_test_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (p, w) = setup(dir.path());
    let cfg = dir.path().join("recon.toml");
    fs::write(&cfg, RECON).unwrap();
    let out = stsep(&[
        "test", "recon", "--config", s(&cfg), "-n", "19", "--grid", "8,8,6", "--bw-space", "0.1", "--bw-time", "0.1", &p, &w,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["test"], "recon");
    assert_eq!(v["replicates"], 19);
}

#[test]
fn experiment_with_zero_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "gammas = [0.0]\nrepetitions = 0\nn_perm = 19\nalpha = 0.05\ngrid = [10, 10, 8]\nstatistics = [\"S\"]\nseed = 1\n\n[model]\nkind = \"burst\"\ncase = \"i\"\ntarget_n = 100.0\n\n[bandwidths]\nmethod = \"rule-of-thumb\"\n",
    )
    .unwrap();
    let out = stsep(&["experiment", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

#[test]
fn experiment_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "gammas = [0.0, 50.0]\nrepetitions = 2\nn_perm = 19\nalpha = 0.05\ngrid = [10, 10, 8]\nstatistics = [\"S\", \"Sd\"]\nchisq_cells = [2, 2, 2]\nseed = 1\n\n[model]\nkind = \"burst\"\ncase = \"ii\"\ntarget_n = 150.0\n\n[bandwidths]\nmethod = \"rule-of-thumb\"\n",
    )
    .unwrap();
    let json = dir.path().join("table.json");
    let out = stsep(&["experiment", s(&cfg), "-o", s(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["model", "gamma", "n_bar", "scale", "S", "Sd", "chisq"]);
    assert_eq!(text.lines().count(), 3);
    assert!(json.exists());
}
