//! Weighted L² Lyapunov certificates for the Galerkin system.
//!
//! The weights are w⁺_k(x) = h⁺_k/D̂⁺_k(x) · exp(−μ̂∫₀ˣ 1/D̂⁺_k) and
//! w⁻_k(x) = h⁻_k/|D̂⁻_k(x)| · exp(−μ̂∫ₓᴸ 1/|D̂⁻_k|). A certificate is valid
//! when the dissipativity margin δ = 1 − e^{μ̂L/(2λ_min)}‖𝒟B̂𝒟⁻¹‖₂ is
//! nonnegative, and then guarantees decay at rate
//! μ = μ̂ + min_x σ_min(WQ̂ + Q̂ᵀW).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::galerkin::{check_hyperbolicity, grid_derivative, GalerkinSystem};
use crate::gpc::GpcBasis;
use crate::linalg::{spectral_norm, sym_eigenvalues};
use crate::{Error, Result};

/// Floating point slack on the dissipativity margin.
pub const MARGIN_TOL: f64 = 1e-12;

/// Diagonal weight matrices W(x) = diag(W⁺, W⁻) at the cell centers and both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub cells: Vec<f64>,
    pub at_cells: Vec<DVector<f64>>,
    pub at_left: DVector<f64>,
    pub at_right: DVector<f64>,
}

impl WeightField {
    pub fn min_entry(&self) -> f64 {
        self.at_cells
            .iter()
            .chain([&self.at_left, &self.at_right])
            .map(|w| w.min())
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_weight_inputs(mu_hat: f64, h_plus: &[f64], h_minus: &[f64], p: usize) -> Result<()> {
    if !(mu_hat >= 0.0 && mu_hat.is_finite()) {
        return Err(Error::invalid("mu_hat", format!("must be nonnegative, got {mu_hat}")));
    }
    if h_plus.len() != p || h_minus.len() != p {
        return Err(Error::invalid("h", format!("need {p} weights per family")));
    }
    if let Some(h) = h_plus.iter().chain(h_minus).find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("h", format!("weights must be positive, got {h}")));
    }
    Ok(())
}

/// Weights from the diagonal speed field, integrating 1/D̂ with the
/// trapezoid rule on [0, cell centers, L].
pub fn continuous_weights_from(
    length: f64,
    cells: &[f64],
    d_plus: &[&DVector<f64>],
    d_minus: &[&DVector<f64>],
    mu_hat: f64,
    h_plus: &[f64],
    h_minus: &[f64],
) -> Result<WeightField> {
    let n = cells.len();
    let p = d_plus[0].len();
    check_weight_inputs(mu_hat, h_plus, h_minus, p)?;
    let mut nodes = Vec::with_capacity(n + 2);
    nodes.push(0.0);
    nodes.extend_from_slice(cells);
    nodes.push(length);
    let speed = |field: &[&DVector<f64>], j: usize, k: usize| field[j.saturating_sub(1).min(n - 1)][k].abs();

    let mut out = vec![DVector::zeros(2 * p); n + 2];
    for k in 0..p {
        let mut ip = 0.0;
        let mut im = vec![0.0; n + 2];
        for j in 1..n + 2 {
            let dx = nodes[j] - nodes[j - 1];
            im[j] = im[j - 1] + 0.5 * dx * (1.0 / speed(d_minus, j - 1, k) + 1.0 / speed(d_minus, j, k));
        }
        let total_minus = im[n + 1];
        for j in 0..n + 2 {
            if j > 0 {
                let dx = nodes[j] - nodes[j - 1];
                ip += 0.5 * dx * (1.0 / speed(d_plus, j - 1, k) + 1.0 / speed(d_plus, j, k));
            }
            out[j][k] = h_plus[k] / speed(d_plus, j, k) * (-mu_hat * ip).exp();
            out[j][p + k] = h_minus[k] / speed(d_minus, j, k) * (-mu_hat * (total_minus - im[j])).exp();
        }
    }
    let at_right = out.pop().expect("n + 2 nodes");
    let at_left = out.remove(0);
    Ok(WeightField {
        cells: cells.to_vec(),
        at_cells: out,
        at_left,
        at_right,
    })
}

pub fn continuous_weights(sys: &GalerkinSystem, mu_hat: f64, h_plus: &[f64], h_minus: &[f64]) -> Result<WeightField> {
    let dp: Vec<&DVector<f64>> = sys.speeds.iter().map(|s| &s.d_plus).collect();
    let dm: Vec<&DVector<f64>> = sys.speeds.iter().map(|s| &s.d_minus).collect();
    continuous_weights_from(sys.length, &sys.cells, &dp, &dm, mu_hat, h_plus, h_minus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipativity {
    /// e^{μ̂L/(2λ_min)}.
    pub factor: f64,
    /// ‖𝒟B̂𝒟⁻¹‖₂.
    pub scaled_norm: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Margin δ = 1 − e^{μ̂L/(2λ_min)}‖𝒟B̂𝒟⁻¹‖₂; `scaling` is the diagonal of 𝒟 (identity if absent).
pub fn dissipativity_check(
    b_hat: &DMatrix<f64>,
    mu_hat: f64,
    length: f64,
    lambda_min: f64,
    scaling: Option<&DVector<f64>>,
) -> Dissipativity {
    let scaled_norm = match scaling {
        None => spectral_norm(b_hat),
        Some(d) => spectral_norm(&scale_similarity(b_hat, d)),
    };
    dissipativity_from_norm(scaled_norm, mu_hat, length, lambda_min)
}

fn dissipativity_from_norm(scaled_norm: f64, mu_hat: f64, length: f64, lambda_min: f64) -> Dissipativity {
    let factor = (mu_hat * length / (2.0 * lambda_min)).exp();
    let product = if scaled_norm == 0.0 { 0.0 } else { factor * scaled_norm };
    let margin = 1.0 - product;
    Dissipativity {
        factor,
        scaled_norm,
        margin,
        pass: margin >= -MARGIN_TOL,
    }
}

/// 𝒟 B 𝒟⁻¹ for a positive diagonal 𝒟.
pub fn scale_similarity(b: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| d[i] * b[(i, j)] / d[j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientBound {
    pub lambda_min: f64,
    pub dissipativity: Dissipativity,
    pub hyperbolic: bool,
}

impl SufficientBound {
    pub fn pass(&self) -> bool {
        self.hyperbolic && self.dissipativity.pass
    }
}

/// Sufficient condition e^{μ̂L/(2λ_min)}‖B‖₂ ≤ 1 with λ_min taken from the
/// projected speeds at the quadrature nodes; needs no Galerkin assembly.
pub fn sufficient_bound(
    b: &Matrix2<f64>,
    lambda_plus: &[Vec<f64>],
    lambda_minus: &[Vec<f64>],
    basis: &GpcBasis,
    mu_hat: f64,
    length: f64,
) -> SufficientBound {
    let report = check_hyperbolicity(lambda_plus, lambda_minus, basis);
    let norm = b.singular_values().max();
    SufficientBound {
        lambda_min: report.lambda_min,
        dissipativity: dissipativity_from_norm(norm, mu_hat, length, report.lambda_min),
        hyperbolic: report.pass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRate {
    /// μ̂ + min_x σ_min(WQ̂ + Q̂ᵀW).
    pub mu: f64,
    /// μ̂ + min_x σ_min(W^{-1/2}(WQ̂ + Q̂ᵀW)W^{-1/2}), the rate of L itself.
    pub mu_scaled: f64,
    /// Cell where the minimum of the first rate is attained.
    pub argmin_cell: usize,
}

pub fn decay_rate(w: &WeightField, q_hat: &[DMatrix<f64>], mu_hat: f64) -> Result<DecayRate> {
    let mut best = (f64::INFINITY, 0usize);
    let mut best_scaled = f64::INFINITY;
    let mut prev: Option<(&DVector<f64>, &DMatrix<f64>)> = None;
    for (i, (wi, q)) in w.at_cells.iter().zip(q_hat).enumerate() {
        if prev == Some((wi, q)) {
            continue;
        }
        prev = Some((wi, q));
        let wq = DMatrix::from_fn(q.nrows(), q.ncols(), |r, c| wi[r] * q[(r, c)]);
        let sym = &wq + wq.transpose();
        let s = sym_eigenvalues(&sym, "decay rate matrix")?[0];
        if s < best.0 {
            best = (s, i);
        }
        let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |r, c| sym[(r, c)] / (wi[r] * wi[c]).sqrt());
        best_scaled = best_scaled.min(sym_eigenvalues(&scaled, "scaled decay rate matrix")?[0]);
    }
    Ok(DecayRate {
        mu: mu_hat + best.0,
        mu_scaled: mu_hat + best_scaled,
        argmin_cell: best.1,
    })
}

/// H = B̂ᵀ diag(W⁺(0)D̂⁺(0), W⁻(L)|D̂⁻(L)|) B̂ − diag(W⁺(L)D̂⁺(L), W⁻(0)|D̂⁻(0)|)
/// with D̂ at the ends taken from the nearest cell; eigenvalues ascending.
pub fn boundary_matrix_h(b_hat: &DMatrix<f64>, w: &WeightField, sys: &GalerkinSystem) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = sys.size;
    let first = &sys.speeds[0];
    let last = &sys.speeds[sys.n_cells() - 1];
    let inflow = DVector::from_fn(2 * p, |i, _| {
        if i < p {
            w.at_left[i] * first.d_plus[i]
        } else {
            w.at_right[i] * last.d_minus[i - p].abs()
        }
    });
    let outflow = DVector::from_fn(2 * p, |i, _| {
        if i < p {
            w.at_right[i] * last.d_plus[i]
        } else {
            w.at_left[i] * first.d_minus[i - p].abs()
        }
    });
    let scaled = DMatrix::from_fn(2 * p, 2 * p, |i, j| inflow[i] * b_hat[(i, j)]);
    let mut h = b_hat.transpose() * scaled;
    for i in 0..2 * p {
        h[(i, i)] -= outflow[i];
    }
    let eig = sym_eigenvalues(&h, "boundary matrix H")?;
    Ok((h, eig))
}

/// M(x) = −∂ₓ(W D̂) + WQ̂ + Q̂ᵀW at every cell.
pub fn m_matrix_field(w: &WeightField, sys: &GalerkinSystem) -> Vec<DMatrix<f64>> {
    let wd: Vec<DMatrix<f64>> = w
        .at_cells
        .iter()
        .zip(&sys.speeds)
        .map(|(wi, s)| DMatrix::from_diagonal(&wi.component_mul(&s.d())))
        .collect();
    let refs: Vec<&DMatrix<f64>> = wd.iter().collect();
    let deriv = grid_derivative(&sys.cells, &refs);
    w.at_cells
        .iter()
        .zip(&sys.q_hat)
        .zip(deriv)
        .map(|((wi, q), d)| {
            let wq = DMatrix::from_fn(q.nrows(), q.ncols(), |r, c| wi[r] * q[(r, c)]);
            -d + &wq + wq.transpose()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rho2 {
    pub value: f64,
    /// Diagonal of the best 𝒟 found, normalized so its first entry is one.
    pub scaling: DVector<f64>,
    pub converged: bool,
}

/// inf over positive diagonal 𝒟 of ‖𝒟B𝒟⁻¹‖₂ by cyclic coordinate descent
/// with golden-section line searches on log 𝒟.
pub fn rho2(b: &DMatrix<f64>) -> Rho2 {
    assert!(b.is_square(), "rho2 needs a square matrix");
    let n = b.nrows();
    let objective = |logd: &[f64]| {
        let d = DVector::from_iterator(n, logd.iter().map(|v| v.exp()));
        spectral_norm(&scale_similarity(b, &d))
    };
    let mut logd = vec![0.0; n];
    let mut value = objective(&logd);
    let mut converged = n <= 1;
    for _sweep in 0..200 {
        if converged {
            break;
        }
        let before = value;
        for i in 1..n {
            let f = |t: f64| {
                let mut trial = logd.clone();
                trial[i] = t;
                objective(&trial)
            };
            let (t, v) = golden_section(f, logd[i] - 8.0, logd[i] + 8.0, 1e-10);
            if v < value {
                value = v;
                logd[i] = t;
            }
        }
        if before - value <= 1e-13 * before.max(1e-300) {
            converged = true;
        }
    }
    Rho2 {
        value,
        scaling: DVector::from_iterator(n, logd.iter().map(|v| v.exp())),
        converged,
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    let ft = f(t);
    if ft <= fc.min(fd) {
        (t, ft)
    } else if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateOptions {
    pub mu_hat: f64,
    /// Per-mode weights h⁺ (all ones when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_plus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_minus: Option<Vec<f64>>,
    /// Try the 𝒟 proposed by rho2 on the 2×2 boundary matrix and keep it if it improves the margin.
    #[serde(default)]
    pub optimize_scaling: bool,
}

impl CertificateOptions {
    pub fn new(mu_hat: f64) -> Self {
        CertificateOptions {
            mu_hat,
            h_plus: None,
            h_minus: None,
            optimize_scaling: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub mu_hat: f64,
    pub h_plus: Vec<f64>,
    pub h_minus: Vec<f64>,
    pub weights: WeightField,
    pub lambda_min: f64,
    pub b_hat_norm: f64,
    pub dissipativity: Dissipativity,
    pub rate: DecayRate,
    pub h_eigen_min: f64,
    pub h_eigen_max: f64,
    /// Scalings (d⁺, d⁻) proposed by rho2 on the 2×2 matrix B, if requested.
    pub proposed_scaling: Option<(f64, f64)>,
    pub scaling_used: bool,
}

impl StabilityCertificate {
    pub fn valid(&self) -> bool {
        self.dissipativity.pass
    }

    pub fn mu(&self) -> f64 {
        self.rate.mu
    }

    pub fn margin(&self) -> f64 {
        self.dissipativity.margin
    }

    /// Valid and with a positive guaranteed rate.
    pub fn guarantees_decay(&self) -> bool {
        self.valid() && self.rate.mu > 0.0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mu_hat = {}", self.mu_hat);
        let _ = writeln!(s, "lambda_min = {}", self.lambda_min);
        let _ = writeln!(s, "b_hat_norm = {}", self.b_hat_norm);
        let _ = writeln!(s, "scaled_norm = {}", self.dissipativity.scaled_norm);
        let _ = writeln!(s, "exp_factor = {}", self.dissipativity.factor);
        let _ = writeln!(s, "margin = {}", self.dissipativity.margin);
        let _ = writeln!(s, "valid = {}", self.valid());
        let _ = writeln!(s, "mu = {}", self.rate.mu);
        let _ = writeln!(s, "mu_scaled = {}", self.rate.mu_scaled);
        let _ = writeln!(s, "decay_guaranteed = {}", self.guarantees_decay());
        let _ = writeln!(s, "h_eigen_min = {}", self.h_eigen_min);
        let _ = writeln!(s, "h_eigen_max = {}", self.h_eigen_max);
        if let Some((dp, dm)) = self.proposed_scaling {
            let _ = writeln!(s, "proposed_scaling = [{dp}, {dm}]");
            let _ = writeln!(s, "scaling_used = {}", self.scaling_used);
        }
        s
    }
}

pub fn certify(sys: &GalerkinSystem, opts: &CertificateOptions) -> Result<StabilityCertificate> {
    let p = sys.size;
    let mut h_plus = opts.h_plus.clone().unwrap_or_else(|| vec![1.0; p]);
    let mut h_minus = opts.h_minus.clone().unwrap_or_else(|| vec![1.0; p]);
    check_weight_inputs(opts.mu_hat, &h_plus, &h_minus, p)?;

    // the quadratic form of H involves √h, so 𝒟 = diag(√h⁺, √h⁻)
    let sqrt_h = |hp: &[f64], hm: &[f64]| DVector::from_iterator(2 * p, hp.iter().chain(hm).map(|h| h.sqrt()));
    let mut diss = dissipativity_check(&sys.b_hat, opts.mu_hat, sys.length, sys.lambda_min, Some(&sqrt_h(&h_plus, &h_minus)));

    let mut proposed = None;
    let mut used = false;
    if opts.optimize_scaling {
        let b2 = DMatrix::from_row_slice(2, 2, sys.boundary.as_slice()).transpose();
        let r = rho2(&b2);
        let (dp, dm) = (r.scaling[0], r.scaling[1]);
        proposed = Some((dp, dm));
        let hp: Vec<f64> = h_plus.iter().map(|h| h * dp * dp).collect();
        let hm: Vec<f64> = h_minus.iter().map(|h| h * dm * dm).collect();
        let trial = dissipativity_check(&sys.b_hat, opts.mu_hat, sys.length, sys.lambda_min, Some(&sqrt_h(&hp, &hm)));
        if trial.margin > diss.margin {
            diss = trial;
            h_plus = hp;
            h_minus = hm;
            used = true;
        }
    }

    let weights = continuous_weights(sys, opts.mu_hat, &h_plus, &h_minus)?;
    let rate = decay_rate(&weights, &sys.q_hat, opts.mu_hat)?;
    let (_, h_eig) = boundary_matrix_h(&sys.b_hat, &weights, sys)?;
    Ok(StabilityCertificate {
        mu_hat: opts.mu_hat,
        h_plus,
        h_minus,
        weights,
        lambda_min: sys.lambda_min,
        b_hat_norm: sys.b_hat_norm(),
        dissipativity: diss,
        rate,
        h_eigen_min: h_eig[0],
        h_eigen_max: h_eig[h_eig.len() - 1],
        proposed_scaling: proposed,
        scaling_used: used,
    })
}
