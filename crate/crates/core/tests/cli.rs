use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_parisian-dividends");

fn m_cl_config() -> Value {
    json!({
        "model": {"mu": 1.0, "sigma": 0.0, "lambda": 0.5, "weights": [1.0], "alphas": [1.0]},
        "params": {"q": 0.1, "p": 0.5, "beta": 0.2},
        "seed": 11,
        "simulate": {"n_paths": 20000}
    })
}

fn run(cmd: &str, cfg: &Value, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join(format!("{cmd}-config.json"));
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    let out = dir.join("out");
    Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_solution_and_value_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &m_cl_config(), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sol = read_json(&dir.path().join("out/solution.json"));
    for key in ["identity", "stationarity", "xi"] {
        assert!(sol["residuals"][key].as_f64().unwrap().abs() <= 1e-9);
    }
    assert_eq!(sol["boundary_case"], json!(true));
    assert!((sol["b_star"].as_f64().unwrap() - 2.526302142).abs() < 1e-8);
    let csv = fs::read_to_string(dir.path().join("out/value.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,v_star,v_prime");
    assert_eq!(lines.len(), 501);
    assert!(!csv.contains('\r'));
    for line in &lines[1..] {
        for cell in line.split(',') {
            let x: f64 = cell.parse().unwrap();
            assert_eq!(format!("{x:?}"), cell);
        }
    }
}

#[test]
fn negative_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["params"]["beta"] = json!(-0.2);
    let o = run("solve", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["simulate"]["n_pathz"] = json!(3);
    let o = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_pathz"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = m_cl_config();
    let mut snapshots = Vec::new();
    for workers in ["1", "4", "1"] {
        let sub = dir.path().join(format!("w{workers}-{}", snapshots.len()));
        fs::create_dir_all(&sub).unwrap();
        for cmd in ["solve", "simulate"] {
            let o = run(cmd, &cfg, &sub, &["--workers", workers]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        }
        let files: Vec<Vec<u8>> = ["solution.json", "value.csv", "mc.json"]
            .iter()
            .map(|f| fs::read(sub.join("out").join(f)).unwrap())
            .collect();
        snapshots.push(files);
    }
    assert!(snapshots.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn seed_flag_changes_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = m_cl_config();
    let a = run("simulate", &cfg, dir.path(), &["--paths", "2000"]);
    assert_eq!(a.status.code(), Some(0));
    let first = read_json(&dir.path().join("out/mc.json"));
    run("simulate", &cfg, dir.path(), &["--paths", "2000", "--seed", "12"]);
    let second = read_json(&dir.path().join("out/mc.json"));
    assert_eq!(second["seed"], json!(12));
    assert_ne!(first["entries"][1]["mean"], second["entries"][1]["mean"]);
}

#[test]
fn verify_passes_for_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("verify", &m_cl_config(), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let gaps = read_json(&dir.path().join("out/gaps.json"));
    assert_eq!(gaps["passes"], json!(true));
    assert!(dir.path().join("out/convexity.json").exists());
    let hjb = fs::read_to_string(dir.path().join("out/hjb.csv")).unwrap();
    assert!(hjb.starts_with("x,residual,regime\n"));
    assert_eq!(hjb.lines().count(), 251);
}

#[test]
fn verify_flags_an_injected_suboptimal_pair() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["verify"] = json!({"policy_override": {"a": 0.0, "b": 3.026302142027718}});
    let o = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("smooth fit"));
    let gaps = read_json(&dir.path().join("out/gaps.json"));
    assert!(gaps["smooth_fit"].as_f64().unwrap() > 1e-4);
    assert!(dir.path().join("out/hjb.csv").exists());
}

#[test]
fn verify_handles_pure_brownian_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["model"] = json!({"mu": 0.0, "sigma": std::f64::consts::SQRT_2, "lambda": 0.0, "weights": [], "alphas": []});
    let o = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let conv = read_json(&dir.path().join("out/convexity.json"));
    assert_eq!(conv["levy_tail"]["vacuous"], json!(true));
}

#[test]
fn simulate_detects_a_wrong_analytic_beta() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    let o = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mc = read_json(&dir.path().join("out/mc.json"));
    assert_eq!(mc["entries"].as_array().unwrap().len(), 4);
    assert!(mc["entries"][0]["x0"].as_f64().unwrap() < 0.0);

    cfg["simulate"]["analytic_beta"] = json!(0.5);
    let o = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    let mc = read_json(&dir.path().join("out/mc.json"));
    assert_eq!(mc["passes"], json!(false));
}

#[test]
fn simulate_writes_per_path_csv_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["simulate"]["x0"] = json!([1.0]);
    let o = run("simulate", &cfg, dir.path(), &["--paths", "50", "--write-paths"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/paths_0.csv")).unwrap();
    assert!(csv.starts_with("path_index,payout,ruined,ruin_time"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn simulate_rejects_bad_scheme_settings() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("simulate", &m_cl_config(), dir.path(), &["--scheme", "euler", "--dt", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dt"));
    let o = run("simulate", &m_cl_config(), dir.path(), &["--scheme", "milstein"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_orders_coefficients_and_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["sweep"] = json!({"beta": [0.4, 0.1, 0.2]});
    let o = run("sweep", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let coeff: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(coeff[0] > coeff[1] && coeff[1] > coeff[2]);
    assert_eq!(rows[2][8], "true");

    cfg["sweep"] = json!({"beta": [0.2]});
    run("sweep", &cfg, dir.path(), &[]);
    run("solve", &cfg, dir.path(), &[]);
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let sol = read_json(&dir.path().join("out/solution.json"));
    assert_eq!(row[3].parse::<f64>().unwrap(), sol["a_star"].as_f64().unwrap());
    assert_eq!(row[4].parse::<f64>().unwrap(), sol["b_star"].as_f64().unwrap());
    assert_eq!(row[6].parse::<f64>().unwrap(), sol["coeff"].as_f64().unwrap());
}

#[test]
fn empty_sweep_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = m_cl_config();
    cfg["sweep"] = json!({"beta": []});
    let o = run("sweep", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweep.beta"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = Command::new(BIN)
        .args(["solve", "--config", "/nonexistent/config.json", "--out", "/tmp"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
