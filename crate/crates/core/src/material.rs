//! Viscoplastic material models and the boundary feedback law.
//!
//! The Bergström model integrates a dislocation density ODE in the strain
//! variable and maps it to a flow stress; the DRX model softens that curve
//! once the strain passes a critical value. Near a desired stress σ* the
//! plastic strain is linearized, which gives the linear 2×2 balance law for
//! (Δv, Δσ) that the rest of the crate stabilizes.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::linalg::interp_linear;
use crate::lyapunov::{dissipativity_check, Dissipativity};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BergstromParams {
    pub u0: f64,
    pub temperature: f64,
    pub omega0: f64,
    pub c: f64,
    pub m: f64,
    pub q: f64,
    pub r: f64,
    pub strain_rate: f64,
    pub sigma0: f64,
    pub alpha: f64,
    pub g: f64,
    pub b: f64,
    pub rho_init: f64,
}

impl BergstromParams {
    /// A hardening parameter set with stresses between 25 and 94 MPa.
    pub fn example() -> Self {
        BergstromParams {
            u0: 1.9e11,
            temperature: 1273.0,
            omega0: 5.0,
            c: 1000.0,
            m: 0.2,
            q: 2.8e5,
            r: 8.314,
            strain_rate: 1.0,
            sigma0: 20.0,
            alpha: 0.5,
            g: 4.0e4,
            b: 2.5e-10,
            rho_init: 1.0e12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("u0", self.u0),
            ("temperature", self.temperature),
            ("omega0", self.omega0),
            ("c", self.c),
            ("m", self.m),
            ("q", self.q),
            ("r", self.r),
            ("strain_rate", self.strain_rate),
            ("sigma0", self.sigma0),
            ("alpha", self.alpha),
            ("g", self.g),
            ("b", self.b),
            ("rho_init", self.rho_init),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Hardening coefficient ε̇U₀/T.
    fn hardening(&self) -> f64 {
        self.strain_rate * self.u0 / self.temperature
    }

    /// Recovery coefficient Ω₀ + C exp(−mQ/(RT)) ε̇^{−m}.
    fn recovery(&self) -> f64 {
        self.omega0 + self.c * (-self.m * self.q / (self.r * self.temperature)).exp() * self.strain_rate.powf(-self.m)
    }

    fn drho(&self, rho: f64) -> f64 {
        self.hardening() * rho.max(0.0).sqrt() - self.recovery() * rho
    }

    pub fn stress_from_density(&self, rho: f64) -> f64 {
        self.sigma0 + self.alpha * self.g * self.b * rho.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrxParams {
    pub base: BergstromParams,
    pub eps_c: f64,
    pub eps_s: f64,
    pub kappa: f64,
    pub q: f64,
}

impl DrxParams {
    pub fn example() -> Self {
        DrxParams {
            base: BergstromParams::example(),
            eps_c: 0.3,
            eps_s: 1.0,
            kappa: 2.0,
            q: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.eps_c > 0.0 && self.eps_s > self.eps_c) {
            return Err(Error::invalid(
                "eps_c",
                format!("need 0 < eps_c < eps_s, got {} and {}", self.eps_c, self.eps_s),
            ));
        }
        if !(self.kappa > 0.0 && self.q > 0.0) {
            return Err(Error::invalid("kappa", "DRX shape parameters must be positive"));
        }
        Ok(())
    }

    /// Recrystallized fraction X(ε).
    pub fn fraction(&self, eps: f64) -> f64 {
        if eps <= self.eps_c {
            return 0.0;
        }
        let s = (eps - self.eps_c) / (self.eps_s - self.eps_c);
        1.0 - (-self.kappa * s.powf(self.q)).exp()
    }

    /// X′(ε).
    pub fn fraction_rate(&self, eps: f64) -> f64 {
        if eps <= self.eps_c {
            return 0.0;
        }
        let w = self.eps_s - self.eps_c;
        let s = (eps - self.eps_c) / w;
        self.kappa * self.q * s.powf(self.q - 1.0) / w * (-self.kappa * s.powf(self.q)).exp()
    }
}

/// Sampled stress-strain relation.
#[derive(Debug, Clone, PartialEq)]
pub struct StressStrainCurve {
    pub strain: Vec<f64>,
    pub stress: Vec<f64>,
}

impl StressStrainCurve {
    pub fn stress_at(&self, eps: f64) -> f64 {
        interp_linear(&self.strain, &self.stress, eps)
    }

    /// Two-column table (ε, σ).
    pub fn to_text(&self) -> String {
        let mut s = String::from("# strain stress\n");
        for (e, v) in self.strain.iter().zip(&self.stress) {
            let _ = writeln!(s, "{e} {v}");
        }
        s
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("strain grid", "need at least two points"));
    }
    if grid[0] != 0.0 {
        return Err(Error::invalid("strain grid", "must start at zero"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("strain grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Dislocation density on the grid by the classical fourth order Runge–Kutta
/// method, using `substeps` steps per grid interval.
pub fn bergstrom_density(grid: &[f64], p: &BergstromParams, substeps: usize) -> Result<Vec<f64>> {
    p.validate()?;
    check_grid(grid)?;
    let substeps = substeps.max(1);
    let mut rho = p.rho_init;
    let mut out = Vec::with_capacity(grid.len());
    out.push(rho);
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for _ in 0..substeps {
            let k1 = p.drho(rho);
            let k2 = p.drho(rho + 0.5 * h * k1);
            let k3 = p.drho(rho + 0.5 * h * k2);
            let k4 = p.drho(rho + h * k3);
            rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Material(format!(
                    "dislocation density left the positive range near strain {}",
                    w[1]
                )));
            }
        }
        out.push(rho);
    }
    Ok(out)
}

pub const DEFAULT_SUBSTEPS: usize = 8;

pub fn bergstrom_stress(grid: &[f64], p: &BergstromParams) -> Result<StressStrainCurve> {
    bergstrom_stress_substeps(grid, p, DEFAULT_SUBSTEPS)
}

pub fn bergstrom_stress_substeps(grid: &[f64], p: &BergstromParams, substeps: usize) -> Result<StressStrainCurve> {
    let rho = bergstrom_density(grid, p, substeps)?;
    Ok(StressStrainCurve {
        strain: grid.to_vec(),
        stress: rho.iter().map(|&r| p.stress_from_density(r)).collect(),
    })
}

/// DRX curve: Bergström up to ε_c, then σ(ε_c)(1 − X) + ∫_{ε_c}^{ε} X′(s) σ(s − ε_c) ds
/// with the integral accumulated by the trapezoid rule on the grid.
pub fn drx_stress(grid: &[f64], p: &DrxParams) -> Result<StressStrainCurve> {
    p.validate()?;
    let base = bergstrom_stress(grid, &p.base)?;
    let last = *grid.last().expect("grid checked");
    if p.eps_c > last {
        return Err(Error::invalid(
            "eps_c",
            format!("critical strain {} lies beyond the grid end {last}", p.eps_c),
        ));
    }
    let sigma_c = base.stress_at(p.eps_c);
    let integrand = |s: f64| p.fraction_rate(s) * base.stress_at(s - p.eps_c);
    let mut stress = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    for (i, &e) in grid.iter().enumerate() {
        if e <= p.eps_c {
            stress.push(base.stress[i]);
            continue;
        }
        let from = prev.unwrap_or(p.eps_c);
        acc += 0.5 * (e - from) * (integrand(from) + integrand(e));
        prev = Some(e);
        stress.push(sigma_c * (1.0 - p.fraction(e)) + acc);
    }
    Ok(StressStrainCurve {
        strain: grid.to_vec(),
        stress,
    })
}

/// How the plastic sensitivity ε̄ᵖ_σ(σ*) is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sensitivity {
    /// ε̄ᵖ_σ(σ*) = factor · σ*.
    Linear { factor: f64 },
    /// Slope of the inverse of a Bergström curve.
    Bergstrom {
        params: BergstromParams,
        strain_max: f64,
        points: usize,
    },
    /// Slope of the inverse of a DRX curve on its increasing branch.
    Drx {
        params: DrxParams,
        strain_max: f64,
        points: usize,
    },
}

impl Sensitivity {
    pub fn evaluate(&self, sigma_star: f64) -> Result<f64> {
        match self {
            Sensitivity::Linear { factor } => Ok(factor * sigma_star),
            Sensitivity::Bergstrom {
                params,
                strain_max,
                points,
            } => {
                let grid = uniform_grid(*strain_max, *points)?;
                let curve = bergstrom_stress(&grid, params)?;
                linearize_curve(&curve, sigma_star)
            }
            Sensitivity::Drx {
                params,
                strain_max,
                points,
            } => {
                let grid = uniform_grid(*strain_max, *points)?;
                let curve = drx_stress(&grid, params)?;
                linearize_curve(&curve, sigma_star)
            }
        }
    }
}

/// Sensitivity map ready for repeated evaluation at nearby stresses.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedSensitivity {
    Linear(f64),
    /// Increasing branch of σ(ε) around the reference stress.
    Branch { stress: Vec<f64>, strain: Vec<f64> },
}

impl PreparedSensitivity {
    /// ε̄ᵖ_σ at `sigma`; stresses beyond the branch use the slope at its nearest end.
    pub fn eval(&self, sigma: f64) -> f64 {
        match self {
            PreparedSensitivity::Linear(f) => f * sigma,
            PreparedSensitivity::Branch { stress, strain } => {
                let n = stress.len();
                let lo = 0.5 * (stress[0] + stress[1]);
                let hi = 0.5 * (stress[n - 2] + stress[n - 1]);
                linearize_plastic(stress, strain, sigma.clamp(lo, hi)).expect("branch validated when prepared")
            }
        }
    }
}

impl Sensitivity {
    /// Resolve the curve once, keeping the increasing branch that contains `sigma_ref`.
    pub fn prepare(&self, sigma_ref: f64) -> Result<PreparedSensitivity> {
        let curve = match self {
            Sensitivity::Linear { factor } => return Ok(PreparedSensitivity::Linear(*factor)),
            Sensitivity::Bergstrom {
                params,
                strain_max,
                points,
            } => bergstrom_stress(&uniform_grid(*strain_max, *points)?, params)?,
            Sensitivity::Drx {
                params,
                strain_max,
                points,
            } => drx_stress(&uniform_grid(*strain_max, *points)?, params)?,
        };
        linearize_curve(&curve, sigma_ref)?;
        let (start, end) = increasing_branch(&curve.stress, sigma_ref).expect("checked by linearize_curve");
        Ok(PreparedSensitivity::Branch {
            stress: curve.stress[start..end].to_vec(),
            strain: curve.strain[start..end].to_vec(),
        })
    }
}

fn uniform_grid(max: f64, points: usize) -> Result<Vec<f64>> {
    if !(max > 0.0) || points < 3 {
        return Err(Error::invalid("strain grid", "need strain_max > 0 and at least 3 points"));
    }
    Ok((0..points).map(|i| max * i as f64 / (points - 1) as f64).collect())
}

/// Central difference slope of ε(σ) at σ*, where the table maps stress to plastic strain.
pub fn linearize_plastic(stress: &[f64], plastic_strain: &[f64], sigma_star: f64) -> Result<f64> {
    if stress.len() != plastic_strain.len() || stress.len() < 2 {
        return Err(Error::Material("stress and strain tables must match and have two rows".into()));
    }
    if stress.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Material("stress table must be strictly increasing".into()));
    }
    let (lo, hi) = (stress[0], stress[stress.len() - 1]);
    if !(sigma_star > lo && sigma_star < hi) {
        return Err(Error::Material(format!(
            "desired stress {sigma_star} outside the model range ({lo}, {hi})"
        )));
    }
    // half the local table spacing, clipped to stay inside the table
    let j = stress.partition_point(|&s| s <= sigma_star).clamp(1, stress.len() - 1);
    let h = (0.5 * (stress[j] - stress[j - 1]))
        .min(sigma_star - lo)
        .min(hi - sigma_star);
    let up = interp_linear(stress, plastic_strain, sigma_star + h);
    let down = interp_linear(stress, plastic_strain, sigma_star - h);
    Ok((up - down) / (2.0 * h))
}

fn increasing_branch(s: &[f64], sigma_star: f64) -> Option<(usize, usize)> {
    let mut start = 0;
    for i in 1..s.len() {
        if s[i] <= s[i - 1] {
            if s[i - 1] > sigma_star && s[start] < sigma_star {
                break;
            }
            start = i;
        }
    }
    let mut end = start + 1;
    while end < s.len() && s[end] > s[end - 1] {
        end += 1;
    }
    (end - start >= 2 && s[start] < sigma_star && sigma_star < s[end - 1]).then_some((start, end))
}

/// Slope of the inverse of σ(ε) on the strictly increasing branch containing σ*.
pub fn linearize_curve(curve: &StressStrainCurve, sigma_star: f64) -> Result<f64> {
    let (start, end) = increasing_branch(&curve.stress, sigma_star).ok_or_else(|| {
        Error::Material(format!(
            "desired stress {sigma_star} is not on a strictly increasing branch of the curve"
        ))
    })?;
    linearize_plastic(&curve.stress[start..end], &curve.strain[start..end], sigma_star)
}

/// Diagonalization of A = [[0, −1], [−E, 0]] and the linearized source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannTransform {
    pub t: Matrix2<f64>,
    pub t_inv: Matrix2<f64>,
    pub lambda: Matrix2<f64>,
}

impl RiemannTransform {
    pub fn new(e: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::invalid("E", format!("must be positive, got {e}")));
        }
        let s = e.sqrt();
        Ok(RiemannTransform {
            t: Matrix2::new(-1.0, 1.0, s, s),
            t_inv: Matrix2::new(-0.5, 0.5 / s, 0.5, 0.5 / s),
            lambda: Matrix2::new(s, 0.0, 0.0, -s),
        })
    }

    pub fn jacobian(e: f64) -> Matrix2<f64> {
        Matrix2::new(0.0, -1.0, -e, 0.0)
    }

    /// C = T⁻¹ S T = −(ε̄ᵖ_σ/2) [[1, 1], [1, 1]].
    pub fn source(&self, sensitivity: f64) -> Matrix2<f64> {
        Matrix2::from_element(-0.5 * sensitivity)
    }

    /// (R⁺, R⁻) = T⁻¹ (Δv, Δσ).
    pub fn to_riemann(&self, dv: f64, dsigma: f64) -> (f64, f64) {
        let r = self.t_inv * nalgebra::Vector2::new(dv, dsigma);
        (r[0], r[1])
    }

    /// (Δv, Δσ) = T (R⁺, R⁻).
    pub fn to_physical(&self, rp: f64, rm: f64) -> (f64, f64) {
        let y = self.t * nalgebra::Vector2::new(rp, rm);
        (y[0], y[1])
    }
}

pub fn riemann_transform(e: f64, sensitivity: &[f64]) -> Result<(RiemannTransform, Vec<Matrix2<f64>>)> {
    let t = RiemannTransform::new(e)?;
    let c = sensitivity.iter().map(|&s| t.source(s)).collect();
    Ok((t, c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackGains {
    /// Riemann-coordinate boundary matrix, antidiagonal (κ₀, κ₁).
    pub b: Matrix2<f64>,
    /// Physical control: v − v* = B_y (σ − σ*) at x = 0 and x = L.
    pub b_y: Matrix2<f64>,
}

impl FeedbackGains {
    pub fn left_velocity(&self, v_star: f64, sigma: f64, sigma_star: f64) -> f64 {
        v_star + self.b_y[(0, 0)] * (sigma - sigma_star)
    }

    pub fn right_velocity(&self, v_star: f64, sigma: f64, sigma_star: f64) -> f64 {
        v_star + self.b_y[(1, 1)] * (sigma - sigma_star)
    }
}

pub fn feedback_gains(kappa0: f64, kappa1: f64, e: f64) -> Result<FeedbackGains> {
    if !(e > 0.0) {
        return Err(Error::invalid("E", format!("must be positive, got {e}")));
    }
    if kappa0 == -1.0 || kappa1 == -1.0 {
        return Err(Error::invalid("kappa", "gains of −1 make the physical control singular"));
    }
    let s = e.sqrt();
    Ok(FeedbackGains {
        b: Matrix2::new(0.0, kappa0, kappa1, 0.0),
        b_y: Matrix2::new((1.0 - kappa0) / ((1.0 + kappa0) * s), 0.0, 0.0, (kappa1 - 1.0) / ((1.0 + kappa1) * s)),
    })
}

/// The two candidate gains tied to the rate ansatz μ̂ = 2|ε̄ᵖ_σ|, each
/// checked against the dissipativity condition with λ_min = √E.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaCandidates {
    pub mu_hat: f64,
    /// e^{+(L/√E)|ε̄ᵖ_σ|}.
    pub kappa_plus: f64,
    /// e^{−(L/√E)|ε̄ᵖ_σ|}.
    pub kappa_minus: f64,
    pub plus: Dissipativity,
    pub minus: Dissipativity,
}

pub fn kappa_for_rate(sensitivity: f64, e: f64, length: f64) -> Result<KappaCandidates> {
    if !(e > 0.0 && length > 0.0) {
        return Err(Error::invalid("E", "E and L must be positive"));
    }
    let a = sensitivity.abs();
    let mu_hat = 2.0 * a;
    let s = e.sqrt();
    let kappa_plus = (length / s * a).exp();
    let kappa_minus = (-length / s * a).exp();
    let check = |k: f64| {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, k, k, 0.0]);
        dissipativity_check(&b, mu_hat, length, s, None)
    };
    Ok(KappaCandidates {
        mu_hat,
        kappa_plus,
        kappa_minus,
        plus: check(kappa_plus),
        minus: check(kappa_minus),
    })
}
