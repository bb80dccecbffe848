//! Stochastic Galerkin projection of a random 2×2 system in Riemann coordinates.
//!
//! The modes R̂± of the Riemann invariants satisfy ∂ₜR̂ + Â∂ₓR̂ = −ĈR̂ with
//! Â± = Σ_k λ̂±_k G^k. Diagonalizing Â± = T̂± D̂± (T̂±)ᵀ and setting ζ̂ = T̂ᵀR̂
//! gives ∂ₜζ̂ + D̂∂ₓζ̂ = −Q̂ζ̂ with boundary coupling (ζ̂⁺(0), ζ̂⁻(L)) = B̂ (ζ̂⁺(L), ζ̂⁻(0)).

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::gpc::{GpcBasis, TripleProductTensor};
use crate::linalg::{spectral_norm, sym_eigen};
use crate::{Error, Result};

/// Input of the Galerkin assembly: gPC mode fields sampled at cell centers.
#[derive(Debug, Clone)]
pub struct RandomSystemSpec {
    pub length: f64,
    pub cells: Vec<f64>,
    /// `lambda_plus[i]` holds the modes of λ⁺ at cell i.
    pub lambda_plus: Vec<Vec<f64>>,
    pub lambda_minus: Vec<Vec<f64>>,
    /// Modes of the source entries (C₁₁, C₁₂, C₂₁, C₂₂) at each cell.
    pub source: Vec<[Vec<f64>; 4]>,
    /// Boundary matrix in Riemann coordinates.
    pub boundary: Matrix2<f64>,
}

impl RandomSystemSpec {
    fn validate(&self, size: usize) -> Result<()> {
        let n = self.cells.len();
        if n < 3 {
            return Err(Error::invalid("cells", "at least three cells are required"));
        }
        if self.lambda_plus.len() != n || self.lambda_minus.len() != n || self.source.len() != n {
            return Err(Error::BasisMismatch("mode fields must have one entry per cell".into()));
        }
        let bad = self
            .lambda_plus
            .iter()
            .chain(&self.lambda_minus)
            .chain(self.source.iter().flat_map(|c| c.iter()))
            .any(|m| m.len() != size);
        if bad {
            return Err(Error::BasisMismatch(format!("every mode vector must have {size} entries")));
        }
        Ok(())
    }
}

/// Â(x) = Σ_k λ̂_k(x) G^k for every cell.
pub fn assemble_advection(modes: &[Vec<f64>], tensor: &TripleProductTensor) -> Vec<DMatrix<f64>> {
    modes.iter().map(|m| tensor.weighted_sum(m)).collect()
}

/// Orthogonal eigendecomposition with ascending eigenvalues and the
/// largest-magnitude component of each eigenvector positive. A matrix that
/// is already diagonal keeps T̂ = I and its diagonal in place.
pub fn diagonalize(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows();
    if (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0)) {
        return Ok((DMatrix::identity(n, n), a.diagonal()));
    }
    let eig = sym_eigen(a, "Galerkin advection matrix")?;
    Ok((eig.vectors, eig.values))
}

/// Q̂ = T̂ᵀĈT̂ + D̂T̂ᵀ∂ₓT̂ for block matrices T̂ = blockdiag(T̂⁺, T̂⁻).
pub fn assemble_q(
    t_plus: &DMatrix<f64>,
    t_minus: &DMatrix<f64>,
    d_plus: &DVector<f64>,
    d_minus: &DVector<f64>,
    c_hat: &DMatrix<f64>,
    dt_plus: Option<&DMatrix<f64>>,
    dt_minus: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let p = t_plus.nrows();
    let t = block_diag(t_plus, t_minus);
    let mut q = t.transpose() * c_hat * &t;
    if let (Some(dp), Some(dm)) = (dt_plus, dt_minus) {
        let tp = t_plus.transpose() * dp;
        let tm = t_minus.transpose() * dm;
        for i in 0..p {
            for j in 0..p {
                q[(i, j)] += d_plus[i] * tp[(i, j)];
                q[(p + i, p + j)] += d_minus[i] * tm[(i, j)];
            }
        }
    }
    q
}

/// B̂ = blockdiag(T̂⁺(0), T̂⁻(L))ᵀ (B ⊗ 𝕀) blockdiag(T̂⁺(L), T̂⁻(0)).
pub fn transform_boundary(
    b: &Matrix2<f64>,
    t_plus_0: &DMatrix<f64>,
    t_plus_l: &DMatrix<f64>,
    t_minus_0: &DMatrix<f64>,
    t_minus_l: &DMatrix<f64>,
) -> DMatrix<f64> {
    let p = t_plus_0.nrows();
    let id = DMatrix::<f64>::identity(p, p);
    let mut kron = DMatrix::zeros(2 * p, 2 * p);
    for bi in 0..2 {
        for bj in 0..2 {
            kron.view_mut((bi * p, bj * p), (p, p)).copy_from(&(&id * b[(bi, bj)]));
        }
    }
    let left = block_diag(t_plus_0, t_minus_l);
    let right = block_diag(t_plus_l, t_minus_0);
    left.transpose() * kron * right
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = DMatrix::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

/// Realizations of the projected speeds at the tensorized quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicityReport {
    pub plus_min: f64,
    pub plus_max: f64,
    pub minus_min: f64,
    pub minus_max: f64,
    /// min over cells and nodes of {λ⁺, |λ⁻|}.
    pub lambda_min: f64,
    pub pass: bool,
    /// First (cell, quadrature node) with a wrongly signed speed.
    pub violation: Option<(usize, Vec<f64>)>,
}

pub fn check_hyperbolicity(lambda_plus: &[Vec<f64>], lambda_minus: &[Vec<f64>], basis: &GpcBasis) -> HyperbolicityReport {
    let mut r = HyperbolicityReport {
        plus_min: f64::INFINITY,
        plus_max: f64::NEG_INFINITY,
        minus_min: f64::INFINITY,
        minus_max: f64::NEG_INFINITY,
        lambda_min: f64::INFINITY,
        pass: true,
        violation: None,
    };
    let mut nodes: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(basis.tensor_node_count());
    basis.for_each_node(|xi, _, phi| nodes.push((xi.to_vec(), phi.to_vec())));
    let mut prev: Option<(&Vec<f64>, &Vec<f64>)> = None;
    for (cell, (lp, lm)) in lambda_plus.iter().zip(lambda_minus).enumerate() {
        if prev == Some((lp, lm)) {
            continue;
        }
        prev = Some((lp, lm));
        for (xi, phi) in &nodes {
            let vp: f64 = lp.iter().zip(phi).map(|(a, b)| a * b).sum();
            let vm: f64 = lm.iter().zip(phi).map(|(a, b)| a * b).sum();
            r.plus_min = r.plus_min.min(vp);
            r.plus_max = r.plus_max.max(vp);
            r.minus_min = r.minus_min.min(vm);
            r.minus_max = r.minus_max.max(vm);
            if !(vp > 0.0 && vm < 0.0) && r.violation.is_none() {
                r.pass = false;
                r.violation = Some((cell, xi.clone()));
            }
        }
    }
    r.lambda_min = r.plus_min.min(-r.minus_max);
    r
}

/// Diagonalized advection blocks of one cell.
#[derive(Debug, Clone)]
pub struct SpeedBlocks {
    pub a_plus: DMatrix<f64>,
    pub a_minus: DMatrix<f64>,
    pub t_plus: DMatrix<f64>,
    pub t_minus: DMatrix<f64>,
    pub d_plus: DVector<f64>,
    pub d_minus: DVector<f64>,
}

impl SpeedBlocks {
    fn new(a_plus: DMatrix<f64>, a_minus: DMatrix<f64>) -> Result<Self> {
        let (t_plus, d_plus) = diagonalize(&a_plus)?;
        let (t_minus, d_minus) = diagonalize(&a_minus)?;
        Ok(SpeedBlocks {
            a_plus,
            a_minus,
            t_plus,
            t_minus,
            d_plus,
            d_minus,
        })
    }

    /// Diagonal of D̂ = blockdiag(D̂⁺, D̂⁻).
    pub fn d(&self) -> DVector<f64> {
        let p = self.d_plus.len();
        DVector::from_fn(2 * p, |i, _| if i < p { self.d_plus[i] } else { self.d_minus[i - p] })
    }

    pub fn t(&self) -> DMatrix<f64> {
        block_diag(&self.t_plus, &self.t_minus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Diagonalize once when the speed modes agree in every cell.
    pub share_constant_speeds: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            share_constant_speeds: true,
        }
    }
}

/// The assembled deterministic system for ζ̂ on the cell grid.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub length: f64,
    pub cells: Vec<f64>,
    pub size: usize,
    pub speeds: Vec<Arc<SpeedBlocks>>,
    pub c_hat: Vec<DMatrix<f64>>,
    pub q_hat: Vec<DMatrix<f64>>,
    pub boundary: Matrix2<f64>,
    pub b_hat: DMatrix<f64>,
    pub lambda_min: f64,
    pub hyperbolicity: HyperbolicityReport,
    pub constant_speeds: bool,
}

impl GalerkinSystem {
    pub fn assemble(spec: &RandomSystemSpec, basis: &GpcBasis, tensor: &TripleProductTensor) -> Result<Self> {
        Self::assemble_with(spec, basis, tensor, AssemblyOptions::default())
    }

    pub fn assemble_with(
        spec: &RandomSystemSpec,
        basis: &GpcBasis,
        tensor: &TripleProductTensor,
        opts: AssemblyOptions,
    ) -> Result<Self> {
        let p = basis.len();
        if tensor.size() != p {
            return Err(Error::BasisMismatch(format!(
                "triple product tensor of size {} for a basis of {p} functions",
                tensor.size()
            )));
        }
        spec.validate(p)?;
        let report = check_hyperbolicity(&spec.lambda_plus, &spec.lambda_minus, basis);
        if !report.pass {
            let (cell, node) = report.violation.clone().unwrap_or_default();
            return Err(Error::NotHyperbolic(format!(
                "projected speed changes sign at cell {cell}, quadrature node {node:?}"
            )));
        }

        let n = spec.cells.len();
        let constant = spec.lambda_plus.iter().all(|m| m == &spec.lambda_plus[0])
            && spec.lambda_minus.iter().all(|m| m == &spec.lambda_minus[0]);
        let speeds: Vec<Arc<SpeedBlocks>> = if constant && opts.share_constant_speeds {
            let blocks = Arc::new(SpeedBlocks::new(
                tensor.weighted_sum(&spec.lambda_plus[0]),
                tensor.weighted_sum(&spec.lambda_minus[0]),
            )?);
            vec![blocks; n]
        } else {
            let ap = assemble_advection(&spec.lambda_plus, tensor);
            let am = assemble_advection(&spec.lambda_minus, tensor);
            ap.into_iter()
                .zip(am)
                .map(|(a, b)| SpeedBlocks::new(a, b).map(Arc::new))
                .collect::<Result<_>>()?
        };

        let mut lambda_min = f64::INFINITY;
        for (cell, s) in speeds.iter().enumerate() {
            let dp = s.d_plus.min();
            let dm = s.d_minus.max();
            if !(dp > 0.0 && dm < 0.0) {
                return Err(Error::NotHyperbolic(format!(
                    "Galerkin eigenvalues at cell {cell} are not strictly signed ({dp}, {dm})"
                )));
            }
            lambda_min = lambda_min.min(dp).min(-dm);
        }

        let c_hat: Vec<DMatrix<f64>> = spec
            .source
            .iter()
            .map(|c| {
                let mut m = DMatrix::zeros(2 * p, 2 * p);
                for (b, modes) in c.iter().enumerate() {
                    let (bi, bj) = (b / 2, b % 2);
                    m.view_mut((bi * p, bj * p), (p, p)).copy_from(&tensor.weighted_sum(modes));
                }
                m
            })
            .collect();

        let shared = Arc::ptr_eq(&speeds[0], &speeds[n - 1]) && speeds.iter().all(|s| Arc::ptr_eq(s, &speeds[0]));
        let derivs: Option<Vec<(DMatrix<f64>, DMatrix<f64>)>> = if shared {
            None
        } else {
            let tp: Vec<&DMatrix<f64>> = speeds.iter().map(|s| &s.t_plus).collect();
            let tm: Vec<&DMatrix<f64>> = speeds.iter().map(|s| &s.t_minus).collect();
            let dp = grid_derivative(&spec.cells, &tp);
            let dm = grid_derivative(&spec.cells, &tm);
            Some(dp.into_iter().zip(dm).collect())
        };
        let q_hat = (0..n)
            .map(|i| {
                let s = &speeds[i];
                let (dtp, dtm) = match &derivs {
                    Some(d) => (Some(&d[i].0), Some(&d[i].1)),
                    None => (None, None),
                };
                assemble_q(&s.t_plus, &s.t_minus, &s.d_plus, &s.d_minus, &c_hat[i], dtp, dtm)
            })
            .collect();

        let first = &speeds[0];
        let last = &speeds[n - 1];
        let b_hat = transform_boundary(&spec.boundary, &first.t_plus, &last.t_plus, &first.t_minus, &last.t_minus);

        Ok(GalerkinSystem {
            length: spec.length,
            cells: spec.cells.clone(),
            size: p,
            speeds,
            c_hat,
            q_hat,
            boundary: spec.boundary,
            b_hat,
            lambda_min,
            hyperbolicity: report,
            constant_speeds: constant,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Largest characteristic speed magnitude over all cells.
    pub fn lambda_max(&self) -> f64 {
        self.speeds
            .iter()
            .map(|s| s.d_plus.max().max(-s.d_minus.min()))
            .fold(0.0, f64::max)
    }

    pub fn b_hat_norm(&self) -> f64 {
        spectral_norm(&self.b_hat)
    }

    /// Plain-text system summary.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# galerkin-system");
        let _ = writeln!(s, "length = {}", self.length);
        let _ = writeln!(s, "cells = {}", self.n_cells());
        let _ = writeln!(s, "basis_size = {}", self.size);
        let _ = writeln!(s, "constant_speeds = {}", self.constant_speeds);
        let _ = writeln!(s, "lambda_min = {}", self.lambda_min);
        let _ = writeln!(s, "lambda_max = {}", self.lambda_max());
        let _ = writeln!(s, "b_hat_norm = {}", self.b_hat_norm());
        let h = &self.hyperbolicity;
        let _ = writeln!(s, "hyperbolic = {}", h.pass);
        let _ = writeln!(s, "node_speed_plus = [{}, {}]", h.plus_min, h.plus_max);
        let _ = writeln!(s, "node_speed_minus = [{}, {}]", h.minus_min, h.minus_max);
        let _ = writeln!(s, "# x d_plus_min d_plus_max d_minus_min d_minus_max");
        for (x, sp) in self.cells.iter().zip(&self.speeds) {
            let _ = writeln!(
                s,
                "{x} {} {} {} {}",
                sp.d_plus.min(),
                sp.d_plus.max(),
                sp.d_minus.min(),
                sp.d_minus.max()
            );
        }
        s
    }
}

/// ∂ₓ of a matrix field on a (possibly nonuniform) grid: centered in the
/// interior, one-sided second order at both ends.
pub fn grid_derivative(x: &[f64], field: &[&DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = x.len();
    assert!(n >= 3 && field.len() == n);
    let mut out = Vec::with_capacity(n);
    // three-point Lagrange derivative weights at node `at` from nodes a, b, c
    let weights = |a: f64, b: f64, c: f64, at: f64| {
        let wa = ((at - b) + (at - c)) / ((a - b) * (a - c));
        let wc = ((at - a) + (at - b)) / ((c - a) * (c - b));
        (wa, -wa - wc, wc)
    };
    // wb = −wa − wc, so a field that does not vary differentiates to exactly zero
    let stencil = |a: usize, b: usize, c: usize, at: usize| {
        let (wa, _, wc) = weights(x[a], x[b], x[c], x[at]);
        (field[a] - field[b]) * wa + (field[c] - field[b]) * wc
    };
    out.push(stencil(0, 1, 2, 0));
    for i in 1..n - 1 {
        out.push(stencil(i - 1, i, i + 1, i));
    }
    out.push(stencil(n - 3, n - 2, n - 1, n - 1));
    out
}
