//! Gaussian random fields on an interval: covariance kernels, kriging,
//! Karhunen-Loève decomposition and the degree-one gPC embedding.
//!
//! Kernels are stationary and isotropic. Sample paths of the exponential
//! kernel are not Lipschitz continuous; using such fields as characteristic
//! speeds is allowed here but not covered by the hyperbolicity theory.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::gpc::GpcBasis;
use crate::linalg::{interp_linear, sym_eigen, trapezoid_weights};
use crate::{Error, Result};

/// Relative eigenvalue threshold, scaled by σ²·L, below which a KL mode is dropped.
const RANK_TOL: f64 = 1e-12;

/// Above this size the KL eigenproblem is solved by subspace iteration.
const DENSE_EIGEN_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Exponential,
    SquaredExponential,
    Matern,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceKernel {
    pub kind: KernelKind,
    pub variance: f64,
    pub length_scale: f64,
    /// Smoothness, only read for the Matérn kind.
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_nu() -> f64 {
    1.5
}

impl CovarianceKernel {
    pub fn exponential(variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelKind::Exponential, variance, length_scale, 0.5)
    }

    pub fn squared_exponential(variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelKind::SquaredExponential, variance, length_scale, f64::INFINITY)
    }

    pub fn matern(nu: f64, variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelKind::Matern, variance, length_scale, nu)
    }

    pub fn new(kind: KernelKind, variance: f64, length_scale: f64, nu: f64) -> Result<Self> {
        let k = CovarianceKernel {
            kind,
            variance,
            length_scale,
            nu,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid("variance", format!("must be positive, got {}", self.variance)));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid(
                "length_scale",
                format!("must be positive, got {}", self.length_scale),
            ));
        }
        if self.kind == KernelKind::Matern && !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu", format!("must be positive, got {}", self.nu)));
        }
        Ok(())
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let r = (x1 - x2).abs() / self.length_scale;
        let s2 = self.variance;
        match self.kind {
            KernelKind::Exponential => s2 * (-r).exp(),
            KernelKind::SquaredExponential => s2 * (-0.5 * r * r).exp(),
            KernelKind::Matern => s2 * matern_correlation(self.nu, r),
        }
    }
}

impl fmt::Display for CovarianceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Exponential => write!(f, "exponential")?,
            KernelKind::SquaredExponential => write!(f, "squared_exponential")?,
            KernelKind::Matern => write!(f, "matern nu={}", self.nu)?,
        }
        write!(f, " variance={} length_scale={}", self.variance, self.length_scale)
    }
}

pub fn kernel_eval(kernel: &CovarianceKernel, x1: f64, x2: f64) -> f64 {
    kernel.eval(x1, x2)
}

/// Matérn correlation at scaled distance r = |x−y|/λ_s.
fn matern_correlation(nu: f64, r: f64) -> f64 {
    if nu == 0.5 {
        return (-r).exp();
    }
    if nu == 1.5 {
        let a = 3f64.sqrt() * r;
        return (1.0 + a) * (-a).exp();
    }
    if nu == 2.5 {
        let a = 5f64.sqrt() * r;
        return (1.0 + a + a * a / 3.0) * (-a).exp();
    }
    matern_correlation_general(nu, r)
}

/// 2^{1−ν}/Γ(ν) z^ν K_ν(z) with z = √(2ν) r.
fn matern_correlation_general(nu: f64, r: f64) -> f64 {
    let z = (2.0 * nu).sqrt() * r;
    if z < 1e-12 {
        return 1.0;
    }
    let log_pref = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * z.ln();
    bessel_k_weighted(nu, z, log_pref).min(1.0)
}

/// e^{c} K_ν(z) = ∫₀^∞ exp(c − z cosh t) cosh(νt) dt by the trapezoid rule,
/// which converges geometrically for this analytic, rapidly decaying integrand.
fn bessel_k_weighted(nu: f64, z: f64, c: f64) -> f64 {
    let exponent = |t: f64| c - z * t.cosh() + nu * t;
    let integrand = |t: f64| exponent(t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
    let peak = exponent((nu / z).asinh());
    let mut t_max = 1.0;
    while exponent(t_max) > peak.min(0.0) - 50.0 || t_max < (nu / z).asinh() {
        t_max *= 1.5;
    }
    let h = 0.05_f64.min(t_max / 200.0);
    let n = (t_max / h).ceil() as usize;
    let h = t_max / n as f64;
    let mut s = 0.5 * (integrand(0.0) + integrand(t_max));
    for i in 1..n {
        s += integrand(i as f64 * h);
    }
    s * h
}

/// Anything that provides a mean and covariance function on the line.
pub trait Covariance: Send + Sync {
    fn covariance(&self, x: f64, y: f64) -> f64;

    fn mean(&self, _x: f64) -> f64 {
        0.0
    }

    /// Prior variance scale σ², used for relative tolerances.
    fn variance_scale(&self) -> f64;

    fn describe(&self) -> String;
}

impl Covariance for CovarianceKernel {
    fn covariance(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y)
    }

    fn variance_scale(&self) -> f64 {
        self.variance
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

pub type MeanFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant_mean(value: f64) -> MeanFn {
    Arc::new(move |_| value)
}

/// Gaussian process conditioned on exact point measurements.
#[derive(Clone)]
pub struct ConditionedField {
    prior_mean: MeanFn,
    kernel: CovarianceKernel,
    locations: Vec<f64>,
    values: Vec<f64>,
    gram: Option<Cholesky<f64, Dyn>>,
    /// K⁻¹ (z* − μ(x*)).
    alpha: DVector<f64>,
}

impl fmt::Debug for ConditionedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConditionedField")
            .field("kernel", &self.kernel)
            .field("locations", &self.locations)
            .field("values", &self.values)
            .finish()
    }
}

pub fn condition(prior_mean: MeanFn, kernel: CovarianceKernel, locations: &[f64], values: &[f64]) -> Result<ConditionedField> {
    kernel.validate()?;
    if locations.len() != values.len() {
        return Err(Error::invalid(
            "measurements",
            format!("{} locations but {} values", locations.len(), values.len()),
        ));
    }
    if let Some(bad) = locations.iter().chain(values).find(|v| !v.is_finite()) {
        return Err(Error::invalid("measurements", format!("non-finite entry {bad}")));
    }
    let m = locations.len();
    for i in 0..m {
        for j in 0..i {
            if locations[i] == locations[j] {
                return Err(Error::SingularMeasurements);
            }
        }
    }
    let (gram, alpha) = if m == 0 {
        (None, DVector::zeros(0))
    } else {
        let k = DMatrix::from_fn(m, m, |i, j| kernel.eval(locations[i], locations[j]));
        let chol = Cholesky::new(k).ok_or(Error::SingularMeasurements)?;
        let resid = DVector::from_iterator(m, locations.iter().zip(values).map(|(&x, &z)| z - prior_mean(x)));
        let alpha = chol.solve(&resid);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMeasurements);
        }
        (Some(chol), alpha)
    };
    Ok(ConditionedField {
        prior_mean,
        kernel,
        locations: locations.to_vec(),
        values: values.to_vec(),
        gram,
        alpha,
    })
}

impl ConditionedField {
    pub fn kernel(&self) -> &CovarianceKernel {
        &self.kernel
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cross(&self, x: f64) -> DVector<f64> {
        DVector::from_iterator(self.locations.len(), self.locations.iter().map(|&s| self.kernel.eval(x, s)))
    }

    pub fn posterior_mean(&self, x: f64) -> f64 {
        (self.prior_mean)(x) + self.cross(x).dot(&self.alpha)
    }

    pub fn posterior_covariance(&self, x: f64, y: f64) -> f64 {
        let prior = self.kernel.eval(x, y);
        match &self.gram {
            None => prior,
            Some(chol) => {
                let kx = self.cross(x);
                let ky = self.cross(y);
                prior - kx.dot(&chol.solve(&ky))
            }
        }
    }

    pub fn posterior_variance(&self, x: f64) -> f64 {
        self.posterior_covariance(x, x)
    }

    /// Half-width of the pointwise 95% band.
    pub fn confidence_halfwidth(&self, x: f64) -> f64 {
        1.959_963_984_540_054 * self.posterior_variance(x).max(0.0).sqrt()
    }
}

impl Covariance for ConditionedField {
    fn covariance(&self, x: f64, y: f64) -> f64 {
        self.posterior_covariance(x, y)
    }

    fn mean(&self, x: f64) -> f64 {
        self.posterior_mean(x)
    }

    fn variance_scale(&self) -> f64 {
        self.kernel.variance
    }

    fn describe(&self) -> String {
        format!("{} conditioned on {} measurements", self.kernel, self.locations.len())
    }
}

/// Truncated Karhunen-Loève expansion with eigenfunctions sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KLExpansion {
    pub length: f64,
    /// d₁ ≥ … ≥ d_M > 0.
    pub eigenvalues: Vec<f64>,
    pub nodes: Vec<f64>,
    /// `eigenfunctions[k][i]` = ψ_{k+1}(nodes[i]).
    pub eigenfunctions: Vec<Vec<f64>>,
    pub kernel: String,
}

impl KLExpansion {
    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    /// ψ_{k+1}(x) by linear interpolation.
    pub fn eigenfunction(&self, k: usize, x: f64) -> f64 {
        interp_linear(&self.nodes, &self.eigenfunctions[k], x)
    }

    /// Σ_k d_k ψ_k(x)².
    pub fn variance_at(&self, x: f64) -> f64 {
        (0..self.m())
            .map(|k| self.eigenvalues[k] * self.eigenfunction(k, x).powi(2))
            .sum()
    }

    /// Truncated covariance Σ_k d_k ψ_k(x) ψ_k(y).
    pub fn covariance_at(&self, x: f64, y: f64) -> f64 {
        (0..self.m())
            .map(|k| self.eigenvalues[k] * self.eigenfunction(k, x) * self.eigenfunction(k, y))
            .sum()
    }

    /// Keeps the leading `m` modes.
    pub fn truncated(&self, m: usize) -> KLExpansion {
        let m = m.min(self.m());
        KLExpansion {
            length: self.length,
            eigenvalues: self.eigenvalues[..m].to_vec(),
            nodes: self.nodes.clone(),
            eigenfunctions: self.eigenfunctions[..m].to_vec(),
            kernel: self.kernel.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# kl-expansion\n");
        s.push_str(&format!("# length = {}\n", self.length));
        s.push_str(&format!("# modes = {}\n", self.m()));
        s.push_str(&format!("# kernel = {}\n", self.kernel));
        s.push_str("# eigenvalues =");
        for d in &self.eigenvalues {
            s.push_str(&format!(" {d}"));
        }
        s.push('\n');
        s.push_str("# x");
        for k in 1..=self.m() {
            s.push_str(&format!(" psi_{k}"));
        }
        s.push('\n');
        for (i, x) in self.nodes.iter().enumerate() {
            s.push_str(&x.to_string());
            for f in &self.eigenfunctions {
                s.push(' ');
                s.push_str(&f[i].to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("KL table: {msg}"));
        let mut length = None;
        let mut modes = None;
        let mut kernel = String::new();
        let mut eigenvalues = Vec::new();
        let mut nodes = Vec::new();
        let mut eigenfunctions: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let Some((key, value)) = h.split_once('=') else { continue };
                let value = value.trim();
                match key.trim() {
                    "length" => length = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                    "modes" => modes = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                    "kernel" => kernel = value.to_string(),
                    "eigenvalues" => {
                        eigenvalues = value
                            .split_whitespace()
                            .map(|v| v.parse::<f64>().map_err(|e| bad(e.to_string())))
                            .collect::<Result<_>>()?
                    }
                    _ => {}
                }
                continue;
            }
            let m = modes.ok_or_else(|| bad("data row before the modes header".into()))?;
            if eigenfunctions.is_empty() {
                eigenfunctions = vec![Vec::new(); m];
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            if row.len() != m + 1 {
                return Err(bad(format!("expected {} columns, found {}", m + 1, row.len())));
            }
            nodes.push(row[0]);
            for k in 0..m {
                eigenfunctions[k].push(row[k + 1]);
            }
        }
        let length = length.ok_or_else(|| bad("missing length".into()))?;
        let m = modes.ok_or_else(|| bad("missing modes".into()))?;
        if eigenvalues.len() != m {
            return Err(bad(format!("{} eigenvalues for {m} modes", eigenvalues.len())));
        }
        if m > 0 && nodes.len() < 2 {
            return Err(bad("need at least two grid rows".into()));
        }
        Ok(KLExpansion {
            length,
            eigenvalues,
            nodes,
            eigenfunctions,
            kernel,
        })
    }
}

/// Nyström discretization of the Fredholm equation on `n_quad` uniform nodes
/// with trapezoid weights; returns the leading `m` eigenpairs.
pub fn kl_decompose(cov: &dyn Covariance, length: f64, m: usize, n_quad: usize) -> Result<KLExpansion> {
    if m == 0 {
        return Err(Error::invalid("modes", "at least one KL mode is required"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid("length", format!("must be positive, got {length}")));
    }
    if n_quad < 4 * m {
        return Err(Error::invalid(
            "n_quad",
            format!("{n_quad} nodes cannot resolve {m} modes, need at least {}", 4 * m),
        ));
    }
    let nodes: Vec<f64> = (0..n_quad).map(|i| length * i as f64 / (n_quad - 1) as f64).collect();
    let w = trapezoid_weights(&nodes);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut s = DMatrix::zeros(n_quad, n_quad);
    for j in 0..n_quad {
        for i in j..n_quad {
            let v = sw[i] * cov.covariance(nodes[i], nodes[j]) * sw[j];
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let floor = RANK_TOL * cov.variance_scale() * length;
    let (values, vectors) = if n_quad <= DENSE_EIGEN_LIMIT {
        let eig = sym_eigen(&s, "Nyström Gram matrix")?;
        let n = eig.values.len();
        let achievable = eig.values.iter().filter(|&&d| d > floor).count();
        if achievable < m {
            return Err(Error::InsufficientRank { requested: m, achievable });
        }
        let vals: Vec<f64> = (0..m).map(|k| eig.values[n - 1 - k]).collect();
        let vecs: Vec<DVector<f64>> = (0..m).map(|k| eig.vectors.column(n - 1 - k).into_owned()).collect();
        (vals, vecs)
    } else {
        top_eigenpairs(&s, m, floor)?
    };

    let eigenfunctions = vectors
        .iter()
        .map(|v| {
            let mut psi: Vec<f64> = v.iter().zip(&sw).map(|(a, b)| a / b).collect();
            let scale = psi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let pivot = if psi[0].abs() > 1e-10 * scale {
                psi[0]
            } else {
                psi.iter().copied().find(|p| p.abs() > 1e-10 * scale).unwrap_or(1.0)
            };
            if pivot < 0.0 {
                psi.iter_mut().for_each(|p| *p = -*p);
            }
            psi
        })
        .collect();
    Ok(KLExpansion {
        length,
        eigenvalues: values,
        nodes,
        eigenfunctions,
        kernel: cov.describe(),
    })
}

/// Leading eigenpairs of a symmetric positive semidefinite matrix by block
/// subspace iteration with Rayleigh–Ritz projection.
fn top_eigenpairs(s: &DMatrix<f64>, m: usize, floor: f64) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let n = s.nrows();
    let block = (2 * m + 16).min(n);
    // deterministic start: low-frequency cosines span the leading modes well
    let mut x = DMatrix::from_fn(n, block, |i, j| {
        let t = (i as f64 + 0.5) / n as f64;
        (std::f64::consts::PI * j as f64 * t).cos() + 1e-3 * ((i * 7 + j * 13) % 17) as f64
    });
    let mut prev = vec![0.0; m];
    for _ in 0..500 {
        let q = x.clone().qr().q();
        let y = s * &q;
        let h = q.transpose() * &y;
        let eig = sym_eigen(&h, "Nyström Rayleigh-Ritz block")?;
        let ritz = &q * &eig.vectors;
        let vals: Vec<f64> = (0..block).rev().map(|k| eig.values[k]).collect();
        let converged = vals[..m]
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * vals[0].abs());
        prev = vals[..m].to_vec();
        x = s * &ritz;
        if converged {
            let achievable = vals.iter().filter(|&&d| d > floor).count();
            if achievable < m {
                return Err(Error::InsufficientRank { requested: m, achievable });
            }
            let vecs = (0..m).map(|k| ritz.column(block - 1 - k).into_owned()).collect();
            return Ok((prev, vecs));
        }
    }
    Err(Error::EigenFailure {
        context: "Nyström subspace iteration did not converge".into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainedVariance {
    pub total: f64,
    pub nodes: Vec<f64>,
    pub pointwise: Vec<f64>,
}

impl ExplainedVariance {
    pub fn pointwise_at(&self, x: f64) -> f64 {
        interp_linear(&self.nodes, &self.pointwise, x)
    }
}

pub fn explained_variance(kl: &KLExpansion, cov: &dyn Covariance) -> ExplainedVariance {
    let w = trapezoid_weights(&kl.nodes);
    let total_var: f64 = kl.nodes.iter().zip(&w).map(|(&x, w)| w * cov.covariance(x, x)).sum();
    let total = kl.eigenvalues.iter().sum::<f64>() / total_var;
    let pointwise = kl
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cov.covariance(x, x);
            let v: f64 = kl
                .eigenvalues
                .iter()
                .zip(&kl.eigenfunctions)
                .map(|(d, psi)| d * psi[i] * psi[i])
                .sum();
            if c > 0.0 {
                v / c
            } else {
                1.0
            }
        })
        .collect();
    ExplainedVariance {
        total,
        nodes: kl.nodes.clone(),
        pointwise,
    }
}

/// mean(x) + Σ √d_k ψ_k(x) ξ_k on the KL nodes.
pub fn sample_path(kl: &KLExpansion, mean: &dyn Fn(f64) -> f64, xi: &[f64]) -> Result<Vec<f64>> {
    sample_path_on(kl, mean, xi, &kl.nodes)
}

/// Same as [`sample_path`] on an arbitrary grid, interpolating the eigenfunctions.
pub fn sample_path_on(kl: &KLExpansion, mean: &dyn Fn(f64) -> f64, xi: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != kl.m() {
        return Err(Error::invalid("xi", format!("draw has {} entries for {} modes", xi.len(), kl.m())));
    }
    Ok(grid
        .iter()
        .map(|&x| {
            mean(x)
                + (0..kl.m())
                    .map(|k| kl.eigenvalues[k].sqrt() * kl.eigenfunction(k, x) * xi[k])
                    .sum::<f64>()
        })
        .collect())
}

/// Degree-one Hermite embedding: `result[i]` holds the gPC modes at `grid[i]`,
/// with mode 0 the mean and mode e_k equal to √d_k ψ_k.
pub fn kl_to_gpc(kl: &KLExpansion, mean: &dyn Fn(f64) -> f64, basis: &GpcBasis, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if !basis.is_hermite() {
        return Err(Error::BasisMismatch(
            "KL coordinates are standard Gaussian, a Hermite basis is required".into(),
        ));
    }
    if basis.dims() != kl.m() {
        return Err(Error::BasisMismatch(format!(
            "basis has {} random dimensions, KL expansion has {} modes",
            basis.dims(),
            kl.m()
        )));
    }
    let set = basis.index_set();
    if set.order() < 1 {
        return Err(Error::BasisMismatch("order 0 cannot represent the KL modes".into()));
    }
    let positions: Vec<usize> = (0..kl.m())
        .map(|k| set.unit_position(k).expect("unit index present for order ≥ 1"))
        .collect();
    Ok(grid
        .iter()
        .map(|&x| {
            let mut modes = vec![0.0; basis.len()];
            modes[0] = mean(x);
            for (k, &p) in positions.iter().enumerate() {
                modes[p] = kl.eigenvalues[k].sqrt() * kl.eigenfunction(k, x);
            }
            modes
        })
        .collect())
}
