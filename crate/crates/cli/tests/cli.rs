use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survmoments")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_fit_and_km() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&["simulate", "--n", "25", "--seed", "4", "--out-dir", p(d)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data = d.join("data.csv");
    assert!(fs::read_to_string(&data).unwrap().starts_with("time,event\n"));

    let cfg = d.join("cfg.json");
    fs::write(&cfg, r#"{"chain": {"iterations": 400, "burn_in": 100, "seed": 1}, "grid": {"points": 20}}"#).unwrap();
    let fit_dir = d.join("fit");
    let args = [
        "fit", "--data", p(&data), "--config", p(&cfg), "--out-dir", p(&fit_dir), "--seed", "9", "--truth-shape", "2",
        "--truth-scale", "2",
    ];
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["summary.csv", "median.json", "diagnostics.json", "km.svg", "intervals.svg", "posterior.svg"] {
        assert!(fit_dir.join(name).exists(), "{name}");
    }
    let summary = fs::read_to_string(fit_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 21);
    // --seed overrides the config file
    let first = summary.clone();
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(fs::read_to_string(fit_dir.join("summary.csv")).unwrap(), first);
    let mut other = args.to_vec();
    other[8] = "10";
    assert_eq!(code(&run(&other)), 0);
    assert_ne!(fs::read_to_string(fit_dir.join("summary.csv")).unwrap(), first);

    let out = run(&["km", "--data", p(&data), "--out-dir", p(d)]);
    assert_eq!(code(&out), 0);
    let km = fs::read_to_string(d.join("km.csv")).unwrap();
    assert!(km.starts_with("time,survival\n0,1\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("empirical median"));
}

#[test]
fn approx_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = d.join("m.csv");
    // 0.5·Beta(3,5) + 0.5·Beta(10,3), first four moments
    let moments = [
        0.5 * (3.0 / 8.0) + 0.5 * (10.0 / 13.0),
        0.5 * (12.0 / 72.0) + 0.5 * (110.0 / 182.0),
        0.5 * (60.0 / 720.0) + 0.5 * (1320.0 / 2730.0),
        0.5 * (360.0 / 7920.0) + 0.5 * (17160.0 / 43680.0),
    ];
    let text: String = std::iter::once("moment".to_string()).chain(moments.iter().map(|v| v.to_string())).collect::<Vec<_>>().join("\n");
    fs::write(&m, text + "\n").unwrap();
    let args = ["approx", p(&m), "--out-dir", p(d), "--out-prefix", "mix", "--n-sim", "500", "--grid-size", "50", "--seed", "3"];
    assert_eq!(code(&run(&args)), 0);
    let first = fs::read(d.join("mix_sample.csv")).unwrap();
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(fs::read(d.join("mix_sample.csv")).unwrap(), first);
    let dens = fs::read_to_string(d.join("mix_density.csv")).unwrap();
    assert!(dens.starts_with("x,f\n"));
    assert_eq!(dens.lines().count(), 51);
    assert_eq!(fs::read_to_string(d.join("mix_sample.csv")).unwrap().lines().count(), 501);
    assert!(d.join("mix_density.svg").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // validation: nonpositive time
    let bad = d.join("bad.csv");
    fs::write(&bad, "time,event\n-1,1\n").unwrap();
    let out = run(&["fit", "--data", p(&bad), "--out-dir", p(d)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    // validation: a single moment
    let one = d.join("one.csv");
    fs::write(&one, "moment\n0.5\n").unwrap();
    assert_eq!(code(&run(&["approx", p(&one), "--out-dir", p(d)])), 2);
    // numerical failure: zero variance cannot be matched by a weight
    let flat = d.join("flat.csv");
    fs::write(&flat, "moment\n0.5\n0.25\n").unwrap();
    assert_eq!(code(&run(&["approx", p(&flat), "--out-dir", p(d)])), 3);
    // i/o
    assert_eq!(code(&run(&["km", "--data", p(&d.join("missing.csv"))])), 4);
    // usage
    assert_eq!(code(&run(&["fit", "--bogus"])), 2);
}
