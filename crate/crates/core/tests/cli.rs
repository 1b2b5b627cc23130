use serde_json::Value;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sln-raresim"))
}

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn model_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn json_without_timing(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("wall_seconds");
    obj.remove("wnrv");
    v
}

#[test]
fn same_seed_same_json() {
    let m = model_file(r#"{"equicorrelated":{"d":4,"rho":0.5,"s2":0.25}}"#);
    let path = m.path().to_str().unwrap();
    let args = ["estimate", "--model", path, "--quantity", "right-tail", "--gamma", "12", "--n", "2e4", "--json"];
    let a = run(&args);
    let b = run(&[&args[..], &["--threads", "1"]].concat());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let (va, vb) = (json_without_timing(&stdout(&a)), json_without_timing(&stdout(&b)));
    assert_eq!(va, vb);
    assert_eq!(va["schema"], "sln-raresim/1");
    assert_eq!(va["strata"].as_array().unwrap().len(), 4);

    let c = run(&[&args[..7], &["--n", "2e4", "--json", "--seed", "2"]].concat());
    assert_ne!(json_without_timing(&stdout(&c))["estimate"], va["estimate"]);
}

#[test]
fn exit_codes() {
    let bad_model = model_file(r#"{"nu":[0,0],"Sigma":[[1,2],[2,1]]}"#);
    let o = run(&["estimate", "--model", bad_model.path().to_str().unwrap(), "--quantity", "cdf", "--gamma", "1"]);
    assert_eq!(o.status.code(), Some(3));

    let bad_json = model_file(r#"{"nu":[0,"#);
    let o = run(&["estimate", "--model", bad_json.path().to_str().unwrap(), "--quantity", "cdf", "--gamma", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let iid = models_dir().join("iid5.json");
    let iid = iid.to_str().unwrap();
    assert_eq!(run(&["estimate", "--model", iid, "--quantity", "cdf", "--gamma", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--model", iid, "--quantity", "cdf"]).status.code(), Some(2));
    assert_eq!(run(&["table", "--table", "nope"]).status.code(), Some(2));

    let corr = models_dir().join("equi30.json");
    let o = run(&["estimate", "--model", corr.to_str().unwrap(), "--quantity", "right-tail", "--gamma", "40", "--estimator", "ak", "--n", "1000"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn estimate_output_formats() {
    let iid = models_dir().join("iid5.json");
    let iid = iid.to_str().unwrap();
    let text = run(&["estimate", "--model", iid, "--quantity", "cdf", "--gamma", "3", "--n", "1e4"]);
    assert!(text.status.success());
    assert!(stdout(&text).contains("RE%"));

    let csv = run(&["estimate", "--model", iid, "--quantity", "pdf", "--gamma", "3", "--n", "1e4", "--csv"]);
    let out = stdout(&csv);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("quantity,estimator,gamma"));
    assert!(lines.next().unwrap().starts_with("pdf,new,3"));

    let sobol = run(&[
        "estimate", "--model", iid, "--quantity", "cdf", "--gamma", "3", "--n", "4096", "--stream", "sobol", "--shifts", "8", "--json",
    ]);
    let v: Value = serde_json::from_str(&stdout(&sobol)).unwrap();
    assert_eq!(v["stream"], "sobol");
    assert_eq!(v["n"], 4096);
}

#[test]
fn paths_header_only_for_zero_paths() {
    let o = run(&["paths", "--bs", "X0=50,r=0.07,sigma=0.25,T=0.3333,d=12", "--strike", "30", "--paths", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let data: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1, "{out}");
    assert!(data[0].starts_with("x1,"));
}

#[test]
fn paths_respect_the_strike() {
    let o = run(&["paths", "--bs", "X0=50,r=0.07,sigma=0.25,T=0.3333,d=12", "--strike", "45", "--paths", "20", "--seed", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("acceptance_rate"));
    let rows: Vec<Vec<f64>> = out
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    for r in rows {
        assert_eq!(r.len(), 12);
        assert!((50.0 + r.iter().sum::<f64>()) / 13.0 <= 45.0);
    }
}

#[test]
fn table3_asymptotic_column_is_seed_free() {
    let a = stdout(&run(&["table", "--table", "3", "--n", "2000", "--seed", "1"]));
    let b = stdout(&run(&["table", "--table", "3", "--n", "2000", "--seed", "9"]));
    let col = |s: &str| -> Vec<String> { s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect() };
    assert_eq!(col(&a), col(&b));
    assert_eq!(col(&a)[0], "1.21e-26");
}

#[test]
fn tilt_command_reports_json() {
    let m = models_dir().join("table1.json");
    let o = run(&["tilt", "--model", m.to_str().unwrap(), "--gamma", "12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "sln-raresim/1");
}
