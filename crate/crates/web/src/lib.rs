//! Browser bindings: certificate check, KL spectrum and a small controlled simulation.
//!
//! Each exported function returns a JSON string so the page can stay plain JavaScript.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sgcontrol::config::{Experiment, ExperimentConfig};
use sgcontrol::material::kappa_for_rate;
use sgcontrol::randfield::{explained_variance, kl_decompose, CovarianceKernel, KernelKind};
use sgcontrol::solver::simulate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setup {
    pub sigma_star: f64,
    pub factor: f64,
    pub kappa: f64,
    pub mu_hat: f64,
    pub modes: usize,
    pub cells: usize,
}

impl Setup {
    pub fn config(&self, t_end: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::reference(self.sigma_star);
        c.basis.dims = self.modes;
        c.basis.order = self.modes;
        c.material.kappa0 = self.kappa;
        c.material.kappa1 = self.kappa;
        c.material.sensitivity = sgcontrol::material::Sensitivity::Linear { factor: self.factor };
        c.stability.mu_hat = self.mu_hat;
        c.grid.cells = Some(self.cells);
        c.grid.t_end = t_end;
        c
    }
}

#[derive(Debug, Serialize)]
pub struct CertificateView {
    pub basis_size: usize,
    pub b_hat_norm: f64,
    pub margin: f64,
    pub valid: bool,
    pub mu: f64,
    pub mu_scaled: f64,
    pub decay_guaranteed: bool,
    pub source_mean: f64,
    pub kappa_plus: f64,
    pub kappa_plus_passes: bool,
    pub kappa_minus: f64,
    pub kappa_minus_passes: bool,
}

pub fn certificate_view(setup: &Setup) -> sgcontrol::Result<CertificateView> {
    let exp = Experiment::prepare(&setup.config(0.0))?;
    let c = &exp.certificate;
    let source_mean = setup.factor * setup.sigma_star;
    let k = kappa_for_rate(source_mean, exp.config.material.elastic_modulus, exp.config.grid.length)?;
    Ok(CertificateView {
        basis_size: exp.basis.len(),
        b_hat_norm: c.b_hat_norm,
        margin: c.margin(),
        valid: c.valid(),
        mu: c.mu(),
        mu_scaled: c.rate.mu_scaled,
        decay_guaranteed: c.guarantees_decay(),
        source_mean,
        kappa_plus: k.kappa_plus,
        kappa_plus_passes: k.plus.pass,
        kappa_minus: k.kappa_minus,
        kappa_minus_passes: k.minus.pass,
    })
}

#[derive(Debug, Serialize)]
pub struct SpectrumView {
    pub eigenvalues: Vec<f64>,
    pub explained: f64,
    pub nodes: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
}

pub fn spectrum_view(kernel: &str, variance: f64, length_scale: f64, nu: f64, modes: usize) -> sgcontrol::Result<SpectrumView> {
    let kind = match kernel {
        "exponential" => KernelKind::Exponential,
        "squared_exponential" => KernelKind::SquaredExponential,
        "matern" => KernelKind::Matern,
        other => {
            return Err(sgcontrol::Error::Config(format!(
                "unknown kernel `{other}` (exponential, squared_exponential, matern)"
            )))
        }
    };
    let cov = CovarianceKernel::new(kind, variance, length_scale, nu)?;
    let kl = kl_decompose(&cov, 1.0, modes, 256)?;
    let ev = explained_variance(&kl, &cov);
    let stride = 4;
    let nodes = kl.nodes.iter().step_by(stride).copied().collect();
    let eigenfunctions = kl
        .eigenfunctions
        .iter()
        .map(|f| f.iter().step_by(stride).copied().collect())
        .collect();
    Ok(SpectrumView {
        eigenvalues: kl.eigenvalues,
        explained: ev.total,
        nodes,
        eigenfunctions,
    })
}

#[derive(Debug, Serialize)]
pub struct RunView {
    pub mu: f64,
    pub decay_guaranteed: bool,
    pub t: Vec<f64>,
    pub normalized: Vec<f64>,
    pub envelope: Option<Vec<f64>>,
    pub max_variance: Vec<f64>,
    pub centers: Vec<f64>,
    pub final_mean_sigma: Vec<f64>,
    pub final_var_sigma: Vec<f64>,
}

pub fn run_view(setup: &Setup, t_end: f64) -> sgcontrol::Result<RunView> {
    let exp = Experiment::prepare(&setup.config(t_end))?;
    let series = simulate(&exp.system, exp.initial_state()?, &exp.simulation_setup()?)?;
    let t: Vec<f64> = series.samples.iter().map(|s| s.t).collect();
    let last = series.last();
    Ok(RunView {
        mu: exp.certificate.mu(),
        decay_guaranteed: exp.certificate.guarantees_decay(),
        envelope: series.envelope_rate.map(|mu| t.iter().map(|t| (-mu * t).exp()).collect()),
        normalized: series.samples.iter().map(|s| s.normalized).collect(),
        max_variance: series.samples.iter().map(|s| s.max_var_sigma()).collect(),
        final_mean_sigma: last.moments.mean_sigma.clone(),
        final_var_sigma: last.moments.var_sigma.clone(),
        centers: series.centers.clone(),
        t,
    })
}

fn to_js<T: Serialize>(r: sgcontrol::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn setup(sigma_star: f64, factor: f64, kappa: f64, mu_hat: f64, modes: u32, cells: u32) -> Setup {
    Setup {
        sigma_star,
        factor,
        kappa,
        mu_hat,
        modes: modes as usize,
        cells: cells as usize,
    }
}

/// Dissipativity margin, decay rate and the two closed-form gain candidates.
#[wasm_bindgen]
pub fn certify(sigma_star: f64, factor: f64, kappa: f64, mu_hat: f64, modes: u32, cells: u32) -> Result<String, JsError> {
    to_js(certificate_view(&setup(sigma_star, factor, kappa, mu_hat, modes, cells)))
}

/// Leading KL eigenvalues and eigenfunctions of a covariance kernel on [0, 1].
#[wasm_bindgen]
pub fn kl_spectrum(kernel: &str, variance: f64, length_scale: f64, nu: f64, modes: u32) -> Result<String, JsError> {
    to_js(spectrum_view(kernel, variance, length_scale, nu, modes as usize))
}

/// Controlled run from R± = cos(2πx): normalized Lyapunov function and variance over time.
#[wasm_bindgen]
pub fn run(sigma_star: f64, factor: f64, kappa: f64, mu_hat: f64, modes: u32, cells: u32, t_end: f64) -> Result<String, JsError> {
    to_js(run_view(&setup(sigma_star, factor, kappa, mu_hat, modes, cells), t_end))
}
