use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_merglift"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn csv_rows(dir: &Path, name: &str) -> Vec<Vec<String>> {
    read(dir, name)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn check_domain_disc_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 disc 0 0 0.7\"", &["check-domain"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path(), "hypotheses.json");
    let m = report[0]["report"]["path_bound"].as_f64().unwrap();
    assert!((m - 1.4).abs() < 1e-12);
}

#[test]
fn check_domain_annulus_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 annulus 0 0 0.5 1\"", &["check-domain"]);
    assert_eq!(out.status.code(), Some(4));
    let report = json(dir.path(), "hypotheses.json");
    assert_eq!(report[0]["report"]["complement_connected"], false);
}

#[test]
fn check_domain_sine_comb_passes_with_note() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 sinecomb\"", &["check-domain", "--resolution", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(dir.path(), "hypotheses.json");
    assert!(!report[0]["report"]["note"].as_str().unwrap().is_empty());
    let m = report[0]["report"]["path_bound"].as_f64().unwrap();
    assert!(m > 5.0 && m < 7.0, "{m}");
}

const EXP_SUM: &str = r#"
domain = """
z1 disc 0 0 0.5
z2 disc 0 0 0.5
"""
function = "exp(z1+z2)"
[lift]
n = 1
epsilon = 1e-3
"#;

#[test]
fn lift_exp_sum() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), EXP_SUM, &["lift"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(dir.path(), "alpha_errors.csv");
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap() < 1e-3, "{r:?}");
    }
    let report = json(dir.path(), "report.json");
    assert!(report["identity"]["deviation"].as_f64().unwrap() < 1e-8);
    let poly = merglift::poly::read_json(&read(dir.path(), "poly.json")).unwrap();
    assert!(poly.len() > 4);
    assert!(read(dir.path(), "error_vs_degree.csv").lines().count() > 2);
}

#[test]
fn lift_polynomial_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let config = "domain = \"z1 disc 1 0 2\"\nfunction = \"3*z1^3 - z1 + 2i\"\n[lift]\nn = 2\nepsilon = 1e-8\n";
    let out = run(dir.path(), config, &["lift"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let poly = merglift::poly::read_json(&read(dir.path(), "poly.json")).unwrap();
    let expect = merglift::CPoly::from_expr(&merglift::expr::parse("3*z1^3 - z1 + 2i").unwrap()).unwrap();
    assert!(poly.relative_distance(&expect) < 1e-12);
    for r in csv_rows(dir.path(), "alpha_errors.csv") {
        assert!(r[1].parse::<f64>().unwrap() <= 1e-10);
    }
}

#[test]
fn lift_unreachable_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = "domain = \"z1 disc 0 0 0.5\"\nfunction = \"exp(z1)\"\n[lift]\nn = 1\nepsilon = 1e-15\n";
    let out = run(dir.path(), config, &["lift"]);
    assert_eq!(out.status.code(), Some(2));
    // The best-achieved table is still written.
    assert_eq!(csv_rows(dir.path(), "alpha_errors.csv").len(), 2);
    let report = json(dir.path(), "report.json");
    assert_eq!(report["success"], false);
}

#[test]
fn lift_series_reduces_first() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[series]
template = "exp(z_n/10^n) - 1"
bound = "geometric 2 0.1"
horizon = 10
factor = "disc 0 0 1"
[lift]
n = 1
epsilon = 0.05
"#;
    let out = run(dir.path(), config, &["lift"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path(), "report.json");
    assert_eq!(report["tail"]["support"], serde_json::json!(["z1", "z2"]));
    assert!(report["tail"]["tail_bound"].as_f64().unwrap() < 0.05);
}

#[test]
fn lift_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(d.path(), EXP_SUM, &["lift", "--seed", "11"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["poly.json", "report.json", "alpha_errors.csv", "ledger.csv", "error_vs_degree.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 disc 0 0 1\"\nfunction = \"z2\"", &["lift"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(dir.path(), "domain = \"z1 blob 0\"\nfunction = \"z1\"", &["lift"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(dir.path(), "function = \"z1 +* 2\"", &["lift"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(dir.path(), "domain = \"z1 sinecomb\"\nfunction = \"z1\"", &["chordal"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn lift_on_annulus_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 annulus 0 0 0.5 1\"\nfunction = \"z1\"", &["lift", "--resolution", "0.05"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn chordal_pole_on_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 disc 0 0 1\"\nfunction = \"1/(1 - z1)\"", &["chordal"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let chi: Vec<f64> = csv_rows(dir.path(), "chordal.csv").iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(chi.windows(2).all(|w| w[1] < w[0]), "{chi:?}");
    assert!(*chi.last().unwrap() < 0.05);
    assert!(dir.path().join("out/P_5.json").exists());
}

#[test]
fn chordal_constant_infinity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "[chordal]\ninfinity = true\nsteps = 10", &["chordal"]);
    assert_eq!(out.status.code(), Some(0));
    for (k, r) in csv_rows(dir.path(), "chordal.csv").iter().enumerate() {
        let n = (k + 1) as f64;
        assert_eq!(r[6].parse::<f64>().unwrap(), 1.0 / (1.0 + n * n).sqrt());
    }
}

#[test]
fn chordal_constant_five() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "domain = \"z1 disc 0 0 1\"\nfunction = \"5\"\n[chordal]\nsteps = 3", &["chordal"]);
    assert_eq!(out.status.code(), Some(0));
    for r in csv_rows(dir.path(), "chordal.csv") {
        assert_eq!(r[6].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn counterexample_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_merglift"))
        .args(["counterexample", "--m", "1,10,10000", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(dir.path(), "counterexample.csv");
    let v: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(v[0], 1.0);
    assert!((v[1] - 2.354).abs() < 1e-3);
    assert!(v[2] > 8.0);
}
