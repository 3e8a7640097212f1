use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tsvc::sim::{generate_scenario, ScenarioConfig};

fn tsvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsvc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scenario_csv(dir: &Path, s_dgp: usize, n: usize) -> std::path::PathBuf {
    let cfg = ScenarioConfig::new(1, s_dgp, n).unwrap();
    let draw = generate_scenario::<f64>(&cfg, 0).unwrap();
    let path = dir.join("train.csv");
    tsvc::io::write_dataset(&draw.train, "y", fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn fit_selects_planted_split_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 1, 400);
    let run = |tag: &str| {
        let model = dir.path().join(format!("model{tag}.json"));
        let report = dir.path().join(format!("report{tag}.csv"));
        let out = tsvc(&[
            "fit",
            "--input",
            path_str(&input),
            "--dof",
            "mfp",
            "--model-out",
            path_str(&model),
            "--report-out",
            path_str(&report),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (stdout(&out), fs::read(model).unwrap(), fs::read(report).unwrap())
    };
    let (text, model, report) = run("a");
    assert!(text.starts_with("selected s = 1 "), "{text}");
    let doc = tsvc::ModelDocument::<f64>::from_json(std::str::from_utf8(&model).unwrap()).unwrap();
    assert_eq!(doc.s, 1);
    let report = String::from_utf8(report).unwrap();
    assert!(report.starts_with("s,dof,loglik,bic,selected\n"));
    assert_eq!(report.lines().count(), 7);
    let (_, model2, report2) = run("b");
    assert_eq!(model, model2);
    assert_eq!(report.as_bytes(), report2.as_slice());
}

#[test]
fn constant_response_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    let mut text = String::from("y,a,b\n");
    for i in 0..40 {
        text.push_str(&format!("3,{},{}\n", i, (i * 7) % 11));
    }
    fs::write(&path, text).unwrap();
    let out = tsvc(&["fit", "--input", path_str(&path)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 0, 100);
    let out = tsvc(&["fit", "--input", path_str(&input), "--response", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tsvc(&["fit", "--input", path_str(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = tsvc(&["fit", "--input", path_str(&input), "--dof", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tsvc(&["mc-dof", "--n", "100", "--p", "2", "--m", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tsvc(&["simulate", "--scenario", "1", "--s-dgp", "5", "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tsvc(&["simulate", "--scenario", "4", "--s-dgp", "2", "--n", "400"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_dof_minimal_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = tsvc(&[
            "mc-dof", "--n", "100", "--p", "2", "--smax", "1", "--m", "2", "-R", "1", "--seed", "9", "--out",
            path_str(out),
        ]);
        assert!(o.status.success());
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("p,n,s,dof,se\n2,100,1,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn custom_mc_table_feeds_fit() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("mc.csv");
    let o = tsvc(&[
        "mc-dof", "--n", "100", "--p", "2", "--smax", "2", "--m", "5", "-R", "2", "--out",
        path_str(&table),
    ]);
    assert!(o.status.success());
    let input = scenario_csv(dir.path(), 0, 100);
    let o = tsvc(&["fit", "--input", path_str(&input), "--smax", "2", "--dof", "mc", "--mc-table", path_str(&table)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("approach mc"));
    // s = 3 is absent from the table
    let o = tsvc(&["fit", "--input", path_str(&input), "--smax", "3", "--dof", "mc", "--mc-table", path_str(&table)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn derive_formula_from_shipped_and_exact_tables() {
    let o = tsvc(&["derive-formula"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let r2: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("R^2 = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(r2 >= 0.95, "{text}");

    let dir = tempfile::tempdir().unwrap();
    let exact = dir.path().join("exact.csv");
    let mut csv = String::from("p,n,s,dof\n");
    for p in [2, 4, 6, 8, 10] {
        for n in [100, 400, 700, 1000] {
            for s in 1..=5 {
                let (sf, pf, nf) = (s as f64, p as f64, n as f64);
                let dof = 2.13 + 2.02 * sf + 1.26 * pf + 0.61 * pf * sf + 0.00016 * pf * sf * nf;
                csv.push_str(&format!("{p},{n},{s},{dof}\n"));
            }
        }
    }
    fs::write(&exact, csv).unwrap();
    let json = dir.path().join("fit.json");
    let o = tsvc(&["derive-formula", "--table", path_str(&exact), "--out", path_str(&json)]);
    assert!(o.status.success());
    let fit: tsvc::MfpFit<f64> = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    for (c, e) in fit.coefficients().iter().zip([2.13, 2.02, 1.26, 0.61, 0.00016]) {
        assert!((c - e).abs() < 1e-6, "{c} vs {e}");
    }

    let short = dir.path().join("short.csv");
    fs::write(&short, "p,n,s,dof\n2,100,1,7\n2,100,2,11\n2,100,3,14\n").unwrap();
    assert_eq!(tsvc(&["derive-formula", "--table", path_str(&short)]).status.code(), Some(2));
    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "a,b\n1,2\n").unwrap();
    assert_eq!(tsvc(&["derive-formula", "--table", path_str(&broken)]).status.code(), Some(2));
}

#[test]
fn simulate_writes_summary_and_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sum.csv");
    let raw = dir.path().join("raw.csv");
    let o = tsvc(&[
        "simulate", "--scenario", "1", "--s-dgp", "0", "--n", "400", "--reps", "25", "--dof", "naive,mfp",
        "--out", path_str(&out), "--raw-out", path_str(&raw),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mfp = text.lines().find(|l| l.contains(",mfp,")).unwrap();
    let fields: Vec<&str> = mfp.split(',').collect();
    assert_eq!(fields[5], "0.0");
    assert_eq!(fs::read_to_string(&raw).unwrap().lines().count(), 51);

    let o = tsvc(&["simulate", "--scenario", "3", "--s-dgp", "0", "--n", "100", "--reps", "1", "--dof", "naive"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains(",naive,1,5.0,0.0,"), "{text}");
}

#[test]
fn dof_command_and_thread_flag() {
    let o = tsvc(&["--threads", "2", "dof", "--s", "5", "--p", "10", "--n", "1000"]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 63.33).abs() < 1e-9);
    let o = tsvc(&["dof", "--s", "3", "--p", "6", "--n", "400", "--dof", "table"]);
    assert_eq!(stdout(&o).trim(), "31.66");
    let o = tsvc(&["dof", "--s", "0", "--p", "4", "--n", "2985", "--dof", "naive"]);
    assert_eq!(stdout(&o).trim(), "5");
    let o = Command::new(env!("CARGO_BIN_EXE_tsvc"))
        .env("TSVC_THREADS", "1")
        .args(["dof", "--s", "1", "--p", "2", "--n", "100"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = tsvc(&["dof", "--s", "2", "--p", "5", "--n", "500", "--dof", "table"]);
    assert_eq!(o.status.code(), Some(2));
}
