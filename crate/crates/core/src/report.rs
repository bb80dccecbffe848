//! Plain-text reports shared by the command line tools.

use std::fmt::Write as _;

use crate::config::{ExperimentConfig, Experiment};
use crate::randfield::{ExplainedVariance, KLExpansion};

pub fn kl_eigenvalues(kl: &KLExpansion) -> String {
    let mut s = format!("# kernel: {}\n# k d_k\n", kl.kernel);
    for (k, d) in kl.eigenvalues.iter().enumerate() {
        let _ = writeln!(s, "{} {d}", k + 1);
    }
    s
}

/// One row per KL node: x, ψ_1(x), …, ψ_M(x).
pub fn kl_eigenfunctions(kl: &KLExpansion) -> String {
    let mut s = format!("# L = {}\n# M = {}\n# kernel: {}\n# x", kl.length, kl.m(), kl.kernel);
    for k in 1..=kl.m() {
        let _ = write!(s, " psi_{k}");
    }
    s.push('\n');
    for (i, x) in kl.nodes.iter().enumerate() {
        let _ = write!(s, "{x}");
        for f in &kl.eigenfunctions {
            let _ = write!(s, " {}", f[i]);
        }
        s.push('\n');
    }
    s
}

pub fn explained_variance(ev: &ExplainedVariance) -> String {
    let mut s = format!("# total_ratio = {}\n# x pointwise_ratio\n", ev.total);
    for (x, r) in ev.nodes.iter().zip(&ev.pointwise) {
        let _ = writeln!(s, "{x} {r}");
    }
    s
}

/// Hyperbolicity verdict followed by the certificate fields, `key = value` per line.
pub fn certificate(exp: &Experiment) -> String {
    let h = &exp.system.hyperbolicity;
    let mut s = String::new();
    let _ = writeln!(s, "hyperbolic = {}", h.pass);
    let _ = writeln!(s, "speed_plus_range = [{}, {}]", h.plus_min, h.plus_max);
    let _ = writeln!(s, "speed_minus_range = [{}, {}]", h.minus_min, h.minus_max);
    let _ = writeln!(s, "basis_size = {}", exp.basis.len());
    let _ = writeln!(s, "cells = {}", exp.system.n_cells());
    s.push_str(&exp.certificate.to_text());
    s
}

/// Metadata companion of a time series: commented timestamp and certificate,
/// then the configuration echo, so the whole file parses as a configuration.
pub fn metadata(config: &ExperimentConfig, certificate_text: &str, timestamp: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(t) = timestamp {
        let _ = writeln!(s, "# created = {t}");
    }
    s.push_str("# certificate\n");
    for line in certificate_text.lines() {
        let _ = writeln!(s, "#   {line}");
    }
    s.push_str("# configuration\n");
    s.push_str(&config.to_toml());
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub margin: Option<f64>,
    pub mu: Option<f64>,
    pub final_normalized: Option<f64>,
    pub error: Option<String>,
}

pub fn sweep_summary(parameter: &str, rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
    let mut s = format!("# {parameter} margin mu final_L_normalized status\n");
    for r in rows {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("error: {}", e.replace('\n', " ")),
        };
        let _ = writeln!(
            s,
            "{} {} {} {} {status}",
            r.value,
            opt(r.margin),
            opt(r.mu),
            opt(r.final_normalized)
        );
    }
    s
}
