use std::path::Path;
use std::process::{Command, Output};

use uphes::data::{load_scenarios, save_scenarios, PriceScenario, ScheduleFile};
use uphes::mip::read_model;

fn uphes(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uphes"))
        .args(args)
        .current_dir(dir)
        .env_remove("UPHES_MIP_SOLVER")
        .env_remove("UPHES_MIP_SOLVER_ARGS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = uphes(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    uphes(dir, args).status.code().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

const SMALL: &str = "[experiment]\nvariants = 1\nnoise_levels = [0.3]\n\n[train]\nepochs = 2\n";

#[test]
fn pipeline_from_samples_to_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();

    ok(d, &["gen-data", "--out", "samples.csv"]);
    let fit = ok(d, &["fit-upc", "--samples", "samples.csv", "--out", "model.json"]);
    for line in fit.lines() {
        let r2: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(r2 > 0.99, "{line}");
    }

    ok(d, &["gen-prices", "--days", "40", "--out", "prices.csv"]);
    ok(d, &["cluster", "--prices", "prices.csv", "--k", "4", "--out", "D"]);
    let scen = load_scenarios(&d.join("D/scenarios.csv")).unwrap();
    assert_eq!(scen.len(), 4);
    assert_eq!(scen.iter().map(|s| s.weight).sum::<f64>(), 40.0);
    let assign = csv_rows(&d.join("D/assignment.csv"));
    assert_eq!(assign.len(), 40);
    assert!(assign.iter().all(|r| scen.iter().any(|s| s.id == r[1])));

    let id = scen[1].id.clone();
    let out = ok(d, &["schedule", "--model", "model.json", "--prices", "D", "--scenario", &id, "--method", "dp", "--out", "s.json"]);
    let s = ScheduleFile::load(&d.join("s.json")).unwrap();
    assert_eq!(s.scenario, id);
    assert_eq!(s.p_mw.len(), 24);
    assert!(s.profit.profit > 0.0);
    assert!(out.contains(&format!("{:.6}", s.profit.profit)));

    ok(d, &["train", "--config", "small.toml", "--model", "model.json", "--scenarios", "D", "--out", "T"]);
    assert_eq!(csv_rows(&d.join("T/train_log.csv")).len(), 2);
    assert!(d.join("T/checkpoint.json").is_file() && d.join("T/config.toml").is_file());

    ok(d, &["schedule", "--model", "model.json", "--prices", "D", "--method", "dfl", "--checkpoint", "T", "--out", "dfl.json"]);
    assert_eq!(ScheduleFile::load(&d.join("dfl.json")).unwrap().method, "dfl");

    let args = ["evaluate", "--config", "small.toml", "--model", "model.json", "--scenarios", "D", "--methods", "raw,dfl", "--checkpoint", "T", "--out", "R"];
    ok(d, &args);
    let methods = csv_rows(&d.join("R/methods.csv"));
    assert_eq!(methods.iter().map(|r| r[0].to_string()).collect::<Vec<_>>(), ["raw", "dfl"]);
    assert_eq!(csv_rows(&d.join("R/cases.csv")).len(), 2 * 4);
    assert_eq!(csv_rows(&d.join("R/noise_curve.csv")).len(), 2);
}

#[test]
fn flat_prices_leave_the_plant_idle() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let flat = PriceScenario { id: "flat".into(), prices: vec![55.0; 24], weight: 1.0 };
    save_scenarios(&d.join("flat.csv"), &[flat]).unwrap();
    ok(d, &["schedule", "--prices", "flat.csv", "--method", "dp", "--out", "s.json"]);
    let s = ScheduleFile::load(&d.join("s.json")).unwrap();
    assert!(s.p_mw.iter().all(|&p| p == 0.0));
    assert_eq!(s.profit.profit, 0.0);
}

#[test]
fn exported_models_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-prices", "--days", "3", "--out", "prices.csv"]);
    for (f, sos) in [("gl", false), ("pw", true)] {
        let out = format!("{f}.mps");
        ok(d, &["export-mip", "--formulation", f, "--prices", "prices.csv", "--out", &out]);
        let m = read_model(&d.join(&out)).unwrap();
        assert_eq!(!m.sos2.is_empty(), sos);
        assert!(m.n_vars() > 24);
    }
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["no-such-command"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["schedule", "--prices", "missing.csv", "--method", "dp", "--out", "s.json"]), 2);
    assert_eq!(code(d, &["schedule", "--prices", "missing.csv", "--method", "bogus", "--out", "s.json"]), 1);
    std::fs::write(d.join("bad.toml"), "[grids]\nnot_a_key = 1\n").unwrap();
    assert_eq!(code(d, &["gen-prices", "--config", "bad.toml", "--out", "p.csv"]), 1);
    ok(d, &["gen-prices", "--days", "2", "--out", "prices.csv"]);
    // 24 hourly binaries exceed the built-in enumeration
    assert_eq!(code(d, &["schedule", "--prices", "prices.csv", "--method", "gl-mps", "--out", "s.json"]), 3);
}
