use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn small_config(sigma_star: f64, t_end: f64, kappa: f64) -> String {
    format!(
        r#"
[basis]
dims = 2
order = 2

[field]
kernel = "squared_exponential"
variance = 25.0
length_scale = 0.2

[material]
e = 100.0
sigma_star = {sigma_star}
kappa0 = {kappa}
kappa1 = {kappa}
sensitivity = {{ kind = "linear", factor = 0.02 }}

[grid]
cells = 64
t_end = {t_end}

[output]
prefix = "t"
"#
    )
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.toml"), config).unwrap();
        Case { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn out(&self) -> PathBuf {
        self.path("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sgcontrol"))
            .arg("--config")
            .arg(self.path("config.toml"))
            .arg("--out")
            .arg(self.out())
            .args(args)
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn cert_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .to_string()
}

#[test]
fn kl_writes_eigen_tables() {
    let mut cfg = small_config(70.0, 1.0, 0.9);
    cfg = cfg.replace("dims = 2\norder = 2", "dims = 4\norder = 1");
    let case = Case::new(&cfg);
    let o = case.run(&["kl"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("explained variance ratio"));

    let values = data_rows(&case.read("t_kl_eigenvalues.txt"));
    assert_eq!(values.len(), 4);
    assert!(values.windows(2).all(|w| w[0][1] >= w[1][1]));

    let funcs = case.read("t_kl_eigenfunctions.txt");
    assert!(funcs.contains("# L = 1") && funcs.contains("# M = 4") && funcs.contains("squared_exponential"));
    let rows = data_rows(&funcs);
    assert!(rows.iter().all(|r| r.len() == 5));

    let var = case.read("t_kl_variance.txt");
    let total: f64 = var.lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(total > 0.9 && total < 1.0, "{total}");
}

#[test]
fn kl_without_field_block_is_a_validation_error() {
    let cfg = small_config(70.0, 1.0, 0.9);
    let start = cfg.find("[field]").unwrap();
    let end = cfg.find("[material]").unwrap();
    let case = Case::new(&format!("{}{}", &cfg[..start], &cfg[end..]));
    let o = case.run(&["kl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("field"));
}

#[test]
fn kl_rank_shortfall_names_achievable_modes() {
    let cfg = small_config(70.0, 1.0, 0.9)
        .replace("dims = 2\norder = 2", "dims = 40\norder = 1")
        .replace("length_scale = 0.2", "length_scale = 0.2\nn_quad = 160");
    let case = Case::new(&cfg);
    let o = case.run(&["kl"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("only 17"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected() {
    let case = Case::new(&small_config(70.0, 1.0, 0.9).replace("cells = 64", "cells = 64\ncels = 3"));
    let o = case.run(&["certify"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cels"));
}

#[test]
fn invalid_field_value_names_the_field() {
    let case = Case::new(&small_config(70.0, 1.0, 0.9).replace("t_end = 1", "cfl = 1.5\nt_end = 1"));
    let o = case.run(&["certify"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("grid.cfl"));
}

#[test]
fn missing_config_is_a_validation_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_sgcontrol")).arg("certify").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn certify_exit_codes() {
    let stable = Case::new(&small_config(30.0, 1.0, 0.9));
    let o = stable.run(&["certify"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = stable.read("t_certificate.txt");
    assert_eq!(cert_value(&report, "hyperbolic"), "true");
    assert_eq!(cert_value(&report, "valid"), "true");
    assert!(cert_value(&report, "mu").parse::<f64>().unwrap() > 0.0);
    assert!(cert_value(&report, "h_eigen_max").parse::<f64>().unwrap() <= 0.0);

    let unstable = Case::new(&small_config(100.0, 1.0, 0.9));
    let o = unstable.run(&["certify"]);
    assert_eq!(code(&o), 4);
    let report = unstable.read("t_certificate.txt");
    assert_eq!(cert_value(&report, "valid"), "true");
    assert!(cert_value(&report, "mu").parse::<f64>().unwrap() < 0.0);

    let loud = Case::new(&small_config(30.0, 1.0, 1.1));
    let o = loud.run(&["certify"]);
    assert_eq!(code(&o), 4);
    let report = loud.read("t_certificate.txt");
    assert_eq!(cert_value(&report, "valid"), "false");
    assert!(cert_value(&report, "b_hat_norm").parse::<f64>().unwrap() > 1.0);
}

#[test]
fn simulate_writes_series_with_envelope() {
    let case = Case::new(&small_config(30.0, 1.0, 0.9));
    let o = case.run(&["simulate", "--no-timestamp"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("final L_normalized"));

    let series = case.read("t_series.txt");
    assert!(series.lines().next().unwrap().contains("envelope"));
    let rows = data_rows(&series);
    let cells = 64;
    assert!(rows.iter().all(|r| r.len() == 4 + 2 * cells + 2));
    assert!(rows.len() > 2);
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert!(last[2] < rows[0][2]);
    for r in &rows {
        assert!(r[2] <= r[3] * (1.0 + 1e-6));
    }

    let meta = case.read("t_meta.toml");
    assert!(!meta.contains("created"));
    assert!(meta.contains("# certificate"));
}

#[test]
fn unstable_simulation_reports_no_guarantee() {
    let case = Case::new(&small_config(100.0, 0.5, 0.9));
    let o = case.run(&["simulate"]);
    assert_eq!(code(&o), 4);
    let rows = data_rows(&case.read("t_series.txt"));
    assert!(rows.iter().all(|r| r.len() == 3 + 2 * 64 + 2));
}

#[test]
fn zero_horizon_gives_one_row() {
    let case = Case::new(&small_config(30.0, 0.0, 0.9));
    let o = case.run(&["simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(data_rows(&case.read("t_series.txt")).len(), 1);
}

#[test]
fn metadata_reruns_as_config() {
    let case = Case::new(&small_config(30.0, 0.2, 0.9));
    assert_eq!(code(&case.run(&["simulate"])), 0);
    let meta_path = case.out().join("t_meta.toml");
    let meta = fs::read_to_string(&meta_path).unwrap();
    assert!(meta.starts_with("# created = "));

    let o = Command::new(env!("CARGO_BIN_EXE_sgcontrol"))
        .arg("--config")
        .arg(&meta_path)
        .arg("--out")
        .arg(case.path("again"))
        .args(["simulate", "--no-timestamp"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(case.path("again").join("t_series.txt")).unwrap(),
        case.read("t_series.txt")
    );
}

#[test]
fn outputs_are_deterministic() {
    let a = Case::new(&small_config(30.0, 0.3, 0.9));
    let b = Case::new(&small_config(30.0, 0.3, 0.9));
    for c in [&a, &b] {
        assert_eq!(code(&c.run(&["simulate", "--no-timestamp"])), 0);
    }
    for f in ["t_series.txt", "t_meta.toml"] {
        assert_eq!(a.read(f), b.read(f), "{f}");
    }
}

fn summary(case: &Case, param: &str) -> Vec<Vec<String>> {
    case.read(&format!("t_sweep_{param}.txt"))
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_desired_stress_orders_rates() {
    let case = Case::new(&small_config(70.0, 0.2, 0.9));
    let o = case.run(&["sweep", "--param", "sigma_star", "--values", "50,70,100", "--workers", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = summary(&case, "sigma_star");
    assert_eq!(rows.len(), 3);
    let mu: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(mu[0] > mu[1] && mu[1] > mu[2], "{mu:?}");
    for i in 0..3 {
        assert!(case.out().join(format!("t_sweep_sigma_star_{i}_series.txt")).exists());
    }
}

#[test]
fn sweep_feedback_gain() {
    let case = Case::new(&small_config(30.0, 0.2, 0.9));
    let o = case.run(&["sweep", "--param", "kappa", "--values", "0.5,0.9,1.1", "-j", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = summary(&case, "kappa");
    let margins: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(margins[0] > 0.0 && margins[1] > 0.0 && margins[2] < 0.0, "{margins:?}");
    assert!(rows.iter().all(|r| r[4] == "ok"));
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let one = Case::new(&small_config(30.0, 0.1, 0.9));
    let four = Case::new(&small_config(30.0, 0.1, 0.9));
    let args = ["sweep", "--param", "mu_hat", "--values", "0,0.25,0.5"];
    assert_eq!(code(&one.run(&[&args[..], &["-j", "1"]].concat())), 0);
    assert_eq!(code(&four.run(&[&args[..], &["-j", "4"]].concat())), 0);
    assert_eq!(one.read("t_sweep_mu_hat.txt"), four.read("t_sweep_mu_hat.txt"));
}

#[test]
fn sweep_validation() {
    let case = Case::new(&small_config(30.0, 0.1, 0.9));
    assert_eq!(code(&case.run(&["sweep", "--param", "kappa", "--values"])), 2);
    assert_eq!(code(&case.run(&["sweep", "--param", "nonsense", "--values", "1"])), 2);
    assert_eq!(code(&case.run(&["sweep", "--param", "cfl", "--values", "0.5,2"])), 2);
    assert_eq!(code(&case.run(&["sweep", "--param", "kappa", "--values", "1", "-j", "0"])), 2);
    assert!(!Path::new(&case.out().join("t_sweep_cfl.txt")).exists());
}
