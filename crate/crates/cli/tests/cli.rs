use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monospinner"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Calibrates `config` into `dir` and returns the calibration path.
fn calibrate(config: &str, dir: &Path) -> PathBuf {
    let cfg = configs().join(config);
    let o = run(&["calibrate", "--config", p(&cfg), "--out", p(dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("calibration.json")
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn calibrate_writes_weight_and_resistance() {
    let tmp = TempDir::new().unwrap();
    let cal = read_json(&calibrate("config1.toml", tmp.path()));
    assert!((cal["total_weight"].as_f64().unwrap() - 1.8201).abs() < 1e-4);
    assert!((cal["R_m"].as_f64().unwrap() - 1.002).abs() < 1e-3);
    let manifest = read_json(&tmp.path().join("calibrate.manifest.json"));
    assert_eq!(manifest["command"], "calibrate");
    assert_eq!(manifest["outputs"][0], "calibration.json");
    let sha = manifest["config_sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    assert!(sha.bytes().all(|b| b.is_ascii_hexdigit()));
    assert!(manifest["timestamp"].as_str().unwrap().ends_with('Z'));
}

#[test]
fn calibrate_zero_current_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("config1.toml")).unwrap().replace("i = 0.25", "i = 0.0");
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, text).unwrap();
    let o = run(&["calibrate", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("current is zero"), "{}", stderr(&o));
}

#[test]
fn calibrate_needs_published_block() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("config1.toml")).unwrap();
    let cut = text.find("[published]").unwrap();
    let end = text.find("[space]").unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, format!("{}{}", &text[..cut], &text[end..])).unwrap();
    let o = run(&["calibrate", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("[published]"));
}

#[test]
fn hover_reproduces_coaxial_solution() {
    let tmp = TempDir::new().unwrap();
    let cal = calibrate("config1.toml", tmp.path());
    let cfg = configs().join("config1.toml");
    let o = run(&["hover", "--config", p(&cfg), "--calibration", p(&cal), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let h = read_json(&tmp.path().join("hover.json"));
    assert_eq!(printed, h);
    let keys: Vec<&String> = h.as_object().unwrap().keys().collect();
    let mut expected = vec!["i", "V_m", "omega_p", "p", "q", "r", "n_x", "n_y", "n_z", "P_s", "residual_norm"];
    expected.sort();
    let mut got: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
    got.sort();
    assert_eq!(got, expected);
    let f = |k: &str| h[k].as_f64().unwrap();
    assert!(rel(f("omega_p"), 471.48) < 0.02);
    assert!(rel(f("r"), -104.52) < 0.02);
    assert!(rel(f("i"), 0.25) < 0.05);
    assert!(rel(f("V_m"), 9.68) < 0.02);
    assert!(rel(f("P_s"), 1.3296) < 0.03);
    assert_eq!((f("n_x"), f("n_y"), f("n_z")), (0.0, 0.0, 1.0));
    let manifest = read_json(&tmp.path().join("hover.manifest.json"));
    assert_eq!(manifest["variant"], "quadratic");
    assert!(manifest["calibration"]["R_m"].is_number());
}

#[test]
fn malformed_config_reports_key_and_line() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("config1.toml"))
        .unwrap()
        .replace("rho = 1.225", "rho = \"thick\"");
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, &text).unwrap();
    let line = text.lines().position(|l| l.starts_with("rho")).unwrap() + 1;
    let o = run(&["hover", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains(&format!("line {line}")), "{err}");
    assert!(err.contains("rho"), "{err}");
}

#[test]
fn infeasible_design_exits_2_with_reason() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("config1.toml");
    let o = run(&["hover", "--config", p(&cfg), "--design", "10,10,1.05,1.75,1.5,0", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("did not converge"), "{}", stderr(&o));
    let o = run(&["hover", "--config", p(&cfg), "--design", "12,10,1.05,1.75,0,0", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alpha_p"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    let cfg = configs().join("config1.toml");
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["hover"])), 1);
    assert_eq!(code(&run(&["sweep", "--config", p(&cfg), "--figure", "3"])), 1);
    assert_eq!(code(&run(&["hover", "--config", p(&cfg), "--variant", "cubic"])), 1);
    assert_eq!(code(&run(&["hover", "--config", p(&cfg), "--design", "1,2,3"])), 1);
    assert_eq!(code(&run(&["hover", "--config", "/nonexistent/config.toml"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn sweep_figure_7_is_symmetric_with_centre_minimum() {
    let tmp = TempDir::new().unwrap();
    let cal = calibrate("config2.toml", tmp.path());
    let cfg = configs().join("config2.toml");
    let o = run(&["sweep", "--config", p(&cfg), "--calibration", p(&cal), "--figure", "7", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("sweep_fig7.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("offset_ratio,P_s,feasible"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            assert_eq!(c[2], "1");
            (c[0].parse().unwrap(), c[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 81);
    for k in 0..81 {
        assert_eq!(rows[k].1, rows[80 - k].1);
    }
    let min = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(min.0, 0.0);
    let meta = read_json(&tmp.path().join("sweep_fig7.meta.json"));
    assert_eq!(meta["manifest"], "sweep_fig7.manifest.json");
    assert_eq!(meta["frozen"]["delta"]["value"], 0.0);
    assert_eq!(meta["frozen"]["alpha_p"]["radians"].as_f64().unwrap(), 10f64.to_radians());
    assert!(meta["mass_model"].as_str().unwrap().contains("fixed"));
    assert_eq!(meta["variant"], "quadratic");
}

#[test]
fn sweep_from_config_space() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("config1.toml");
    // config-1 [space] frees four variables: too many for a sweep
    let o = run(&["sweep", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("1 or 2 free variables"), "{}", stderr(&o));
}

#[test]
fn sweep_with_no_feasible_cell_exits_2() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("config1.toml")).unwrap();
    let cut = text.find("[space]").unwrap();
    let cfg = tmp.path().join("steep.toml");
    fs::write(
        &cfg,
        format!("{}[space]\ndelta = {{ lower = 1.45, upper = 1.55, points = 3 }}\n", &text[..cut]),
    )
    .unwrap();
    let o = run(&["sweep", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn optimize_local_search_from_published_start() {
    let tmp = TempDir::new().unwrap();
    let cal = calibrate("config2.toml", tmp.path());
    let cfg = configs().join("config2.toml");
    let o = run(&[
        "optimize", "--config", p(&cfg), "--calibration", p(&cal), "--from", "10,10,1,5,0,0", "--out", p(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&tmp.path().join("optimize.json"));
    assert_eq!(r["mode"], "local");
    assert!(r["x"]["delta"].as_f64().unwrap() > 0.0);
    let p_s = r["P_s"].as_f64().unwrap();
    assert!(p_s > 0.0 && p_s <= 0.20);
    assert!(p_s <= r["start_P_s"].as_f64().unwrap());
}

#[test]
fn optimize_infeasible_start_exits_2() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("config1.toml")).unwrap();
    let cut = text.find("[space]").unwrap();
    let cfg = tmp.path().join("steep.toml");
    fs::write(
        &cfg,
        format!("{}[space]\ndelta = {{ lower = 1.4, upper = 1.57 }}\n", &text[..cut]),
    )
    .unwrap();
    let o = run(&["optimize", "--config", p(&cfg), "--from", "10,10,1.05,1.75,1.5,0", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn optimize_grid_mode_writes_grid() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("config1.toml")).unwrap();
    let cut = text.find("[space]").unwrap();
    let cfg = tmp.path().join("angles.toml");
    fs::write(
        &cfg,
        format!(
            "{}[space]\nalpha_p = {{ lower = 0.0, upper = 10.0, points = 6 }}\nalpha_B = {{ lower = 0.0, upper = 10.0, points = 6 }}\n",
            &text[..cut]
        ),
    )
    .unwrap();
    let o = run(&["optimize", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&tmp.path().join("optimize.json"));
    assert_eq!(r["mode"], "grid");
    assert_eq!(r["x"]["alpha_p"], 10.0);
    assert_eq!(r["x"]["alpha_B"], 10.0);
    let grid = fs::read_to_string(tmp.path().join("optimize_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 37);
}

#[test]
fn simulate_from_hover_holds_equilibrium() {
    let tmp = TempDir::new().unwrap();
    let cal = calibrate("config1.toml", tmp.path());
    let cfg = configs().join("config1.toml");
    let o = run(&["hover", "--config", p(&cfg), "--calibration", p(&cal), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0);
    let hover = tmp.path().join("hover.json");
    let o = run(&[
        "simulate", "--config", p(&cfg), "--calibration", p(&cal), "--from", p(&hover), "--t", "10", "--out", p(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&tmp.path().join("simulate.json"));
    assert!(r["max_relative_drift_r"].as_f64().unwrap() < 0.01);
    let csv = fs::read_to_string(tmp.path().join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,p,q,r,omega_p,i,n_x,n_y,n_z,d_x,d_y,d_z"));
    assert_eq!(csv.lines().count(), 1 + 1 + 1000);
}

#[test]
fn simulate_divergence_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("config1.toml");
    let o = run(&["hover", "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0);
    let mut h = read_json(&tmp.path().join("hover.json"));
    h["i"] = 3.0.into();
    let start = tmp.path().join("kicked.json");
    fs::write(&start, serde_json::to_string(&h).unwrap()).unwrap();
    // a current kick with a step far beyond the motor time constant blows up
    let o = run(&[
        "simulate", "--config", p(&cfg), "--from", p(&start), "--t", "1", "--dt", "0.05", "--out", p(tmp.path()),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
}

#[test]
fn printed_variant_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("config1.toml");
    let o = run(&["hover", "--config", p(&cfg), "--variant", "printed", "--out", p(tmp.path())]);
    // the printed cubic terms may or may not admit a hover; either way the
    // run must end cleanly with a documented code
    assert!([0, 2].contains(&code(&o)), "{}", stderr(&o));
    if code(&o) == 0 {
        assert_eq!(read_json(&tmp.path().join("hover.manifest.json"))["variant"], "printed");
    }
}

#[test]
fn outputs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = configs().join("config2.toml");
    for dir in [a.path(), b.path()] {
        let cal = calibrate("config2.toml", dir);
        for args in [
            vec!["hover"],
            vec!["sweep", "--figure", "7"],
            vec!["optimize", "--from", "10,10,1,5,0,0"],
        ] {
            let mut full = args.clone();
            full.extend(["--config", p(&cfg), "--calibration", p(&cal), "--out", p(dir)]);
            let o = run(&full);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
        }
    }
    for name in ["calibration.json", "hover.json", "sweep_fig7.csv", "sweep_fig7.meta.json", "optimize.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
