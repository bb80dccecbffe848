//! Generalized polynomial chaos: orthogonal polynomial families, multi-index
//! sets, Gaussian quadrature and Galerkin triple products.
//!
//! Every basis built here is orthonormal with respect to the probability
//! measure of its family, so the mean of an expansion is mode 0 and its
//! variance is the sum of squares of the remaining modes.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::sym_eigen;
use crate::{Error, Result};

/// Default upper bound on the size of a multi-index set.
pub const DEFAULT_INDEX_CAP: usize = 1_000_000;

/// Below this magnitude a one-dimensional triple product is a structural zero.
const TRIPLE_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolynomialFamily {
    /// Probabilists' Hermite polynomials, ξ ~ N(0, 1).
    Hermite,
    /// Legendre polynomials, ξ ~ U(-1, 1) with density 1/2.
    Legendre,
}

impl PolynomialFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolynomialFamily::Hermite => "hermite",
            PolynomialFamily::Legendre => "legendre",
        }
    }

    /// Probability density of the underlying random variable.
    pub fn density(self, xi: f64) -> f64 {
        match self {
            PolynomialFamily::Hermite => (-0.5 * xi * xi).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            PolynomialFamily::Legendre => {
                if (-1.0..=1.0).contains(&xi) {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Squared norm ‖φ_k‖² of the unnormalized polynomial.
    pub fn norm_sq(self, k: usize) -> f64 {
        match self {
            PolynomialFamily::Hermite => (1..=k).map(|j| j as f64).product(),
            PolynomialFamily::Legendre => 1.0 / (2 * k + 1) as f64,
        }
    }

    /// Coefficients (a_k, b_k) of φ_{k+1} = a_k ξ φ_k − b_k φ_{k−1}.
    fn recurrence(self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        match self {
            PolynomialFamily::Hermite => (1.0, kf),
            PolynomialFamily::Legendre => ((2.0 * kf + 1.0) / (kf + 1.0), kf / (kf + 1.0)),
        }
    }

    /// Off-diagonal entry of the symmetric Jacobi matrix, coupling the
    /// orthonormal polynomials of degree k−1 and k.
    fn jacobi_offdiag(self, k: usize) -> f64 {
        let kf = k as f64;
        match self {
            PolynomialFamily::Hermite => kf.sqrt(),
            PolynomialFamily::Legendre => kf / (4.0 * kf * kf - 1.0).sqrt(),
        }
    }

    /// Orthonormal values ψ_0(ξ), …, ψ_{max_degree}(ξ).
    pub fn eval_normalized_all(self, max_degree: usize, xi: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(max_degree + 1);
        out.push(1.0);
        if max_degree == 0 {
            return out;
        }
        out.push(xi / self.jacobi_offdiag(1));
        for k in 1..max_degree {
            let next = (xi * out[k] - self.jacobi_offdiag(k) * out[k - 1]) / self.jacobi_offdiag(k + 1);
            out.push(next);
        }
        out
    }
}

impl fmt::Display for PolynomialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unnormalized recurrence polynomial φ_k(ξ) with φ_0 = 1, φ_1 = ξ.
pub fn eval_poly(family: PolynomialFamily, k: usize, xi: f64) -> f64 {
    eval_poly_with_derivative(family, k, xi).0
}

fn eval_poly_with_derivative(family: PolynomialFamily, k: usize, xi: f64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut d_prev) = (1.0, 0.0);
    let (mut p, mut d) = (xi, 1.0);
    for j in 1..k {
        let (a, b) = family.recurrence(j);
        let p_next = a * xi * p - b * p_prev;
        let d_next = a * (p + xi * d) - b * d_prev;
        p_prev = p;
        d_prev = d;
        p = p_next;
        d = d_next;
    }
    (p, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexSetKind {
    /// Every component at most K.
    Total,
    /// Component sum at most K.
    Sparse,
}

impl IndexSetKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexSetKind::Total => "total",
            IndexSetKind::Sparse => "sparse",
        }
    }

    /// Closed-form cardinality of the set.
    pub fn cardinality(self, dims: usize, order: usize) -> u128 {
        match self {
            IndexSetKind::Total => (order as u128 + 1).saturating_pow(dims as u32),
            IndexSetKind::Sparse => {
                // (M+K)! / (M! K!) computed incrementally to stay exact
                let mut c: u128 = 1;
                for j in 1..=dims.min(order) as u128 {
                    let n = (dims.max(order) as u128) + j;
                    c = c.saturating_mul(n) / j;
                }
                c
            }
        }
    }
}

/// Ordered set of multi-indices.
///
/// Indices are stored in graded lexicographic order: by total degree, and
/// within one degree in descending lexicographic order, so the zero index is
/// first and the unit indices e_1, …, e_M follow in that order.
#[derive(Debug, Clone)]
pub struct MultiIndexSet {
    dims: usize,
    order: usize,
    kind: IndexSetKind,
    indices: Vec<Vec<usize>>,
    positions: HashMap<Vec<usize>, usize>,
}

impl MultiIndexSet {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> IndexSetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn position(&self, index: &[usize]) -> Option<usize> {
        self.positions.get(index).copied()
    }

    /// Position of the unit index e_dim (zero based dimension).
    pub fn unit_position(&self, dim: usize) -> Option<usize> {
        let mut e = vec![0; self.dims];
        e[dim] = 1;
        self.position(&e)
    }

    /// Largest single-component degree in the set.
    pub fn max_degree(&self) -> usize {
        self.order
    }
}

pub fn build_index_set(dims: usize, order: usize, kind: IndexSetKind) -> Result<MultiIndexSet> {
    build_index_set_with_cap(dims, order, kind, DEFAULT_INDEX_CAP)
}

pub fn build_index_set_with_cap(
    dims: usize,
    order: usize,
    kind: IndexSetKind,
    cap: usize,
) -> Result<MultiIndexSet> {
    if dims == 0 {
        return Err(Error::invalid(
            "dims",
            "at least one random dimension is required (use dims = 1, order = 0 for a deterministic problem)",
        ));
    }
    let cardinality = kind.cardinality(dims, order);
    if cardinality > cap as u128 {
        return Err(Error::IndexSetTooLarge {
            dims,
            order,
            cardinality,
            cap,
        });
    }

    let mut indices = Vec::with_capacity(cardinality as usize);
    for degree in 0..=match kind {
        IndexSetKind::Total => dims * order,
        IndexSetKind::Sparse => order,
    } {
        let mut current = vec![0; dims];
        push_degree(&mut indices, &mut current, 0, degree, order);
    }
    debug_assert_eq!(indices.len() as u128, cardinality);

    let positions = indices
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect();
    Ok(MultiIndexSet {
        dims,
        order,
        kind,
        indices,
        positions,
    })
}

/// Emits all indices of the given total degree with components ≤ `max_comp`,
/// first component descending.
fn push_degree(out: &mut Vec<Vec<usize>>, current: &mut [usize], pos: usize, remaining: usize, max_comp: usize) {
    if pos == current.len() - 1 {
        if remaining <= max_comp {
            current[pos] = remaining;
            out.push(current.to_vec());
        }
        return;
    }
    for v in (0..=remaining.min(max_comp)).rev() {
        current[pos] = v;
        push_degree(out, current, pos + 1, remaining - v, max_comp);
    }
    current[pos] = 0;
}

/// Gauss quadrature rule for a probability measure: weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Golub–Welsch nodes, polished by Newton steps on the recurrence, with
/// Christoffel weights.
pub fn gauss_quadrature(family: PolynomialFamily, n: usize) -> Result<Quadrature> {
    if n == 0 {
        return Err(Error::invalid("quadrature nodes", "need at least one node"));
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = family.jacobi_offdiag(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = sym_eigen(&jacobi, &format!("{family} Jacobi matrix with {n} nodes"))?;
    let mut nodes: Vec<f64> = eig.values.iter().copied().collect();

    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d) = eval_poly_with_derivative(family, n, *x);
            if d == 0.0 {
                break;
            }
            let step = p / d;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // both families are symmetric about the origin
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let s: f64 = family.eval_normalized_all(n - 1, x).iter().map(|v| v * v).sum();
            1.0 / s
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Quadrature { nodes, weights })
}

/// Per-dimension node count that integrates all triple products of degree ≤ 3K exactly.
pub fn default_quad_nodes(order: usize) -> usize {
    (3 * (order + 1)).div_ceil(2)
}

/// Plain-text basis descriptor, used as the `[basis]` block of experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisDescriptor {
    pub family: PolynomialFamily,
    pub dims: usize,
    pub order: usize,
    pub set: IndexSetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<usize>,
}

impl BasisDescriptor {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("basis descriptor serializes")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<GpcBasis> {
        let set = build_index_set(self.dims, self.order, self.set)?;
        GpcBasis::new(self.family, set, self.quad_nodes)
    }
}

/// Orthonormal tensor-product gPC basis with its quadrature rule.
#[derive(Debug, Clone)]
pub struct GpcBasis {
    families: Vec<PolynomialFamily>,
    index_set: MultiIndexSet,
    quadratures: Vec<Quadrature>,
    /// `tables[d][q][k]` = ψ_k at node q of dimension d.
    tables: Vec<Vec<Vec<f64>>>,
}

impl GpcBasis {
    /// Same family in every dimension. `quad_nodes` defaults to ⌈3(K+1)/2⌉.
    pub fn new(family: PolynomialFamily, index_set: MultiIndexSet, quad_nodes: Option<usize>) -> Result<Self> {
        let families = vec![family; index_set.dims()];
        Self::with_families(families, index_set, quad_nodes)
    }

    pub fn with_families(
        families: Vec<PolynomialFamily>,
        index_set: MultiIndexSet,
        quad_nodes: Option<usize>,
    ) -> Result<Self> {
        if families.len() != index_set.dims() {
            return Err(Error::BasisMismatch(format!(
                "{} families for {} dimensions",
                families.len(),
                index_set.dims()
            )));
        }
        let q = quad_nodes.unwrap_or_else(|| default_quad_nodes(index_set.order()));
        if q == 0 {
            return Err(Error::invalid("quad_nodes", "need at least one node"));
        }
        let kmax = index_set.max_degree();
        let mut quadratures = Vec::with_capacity(families.len());
        let mut tables = Vec::with_capacity(families.len());
        for &fam in &families {
            let rule = gauss_quadrature(fam, q)?;
            tables.push(rule.nodes.iter().map(|&x| fam.eval_normalized_all(kmax, x)).collect());
            quadratures.push(rule);
        }
        Ok(GpcBasis {
            families,
            index_set,
            quadratures,
            tables,
        })
    }

    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.index_set.dims()
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    pub fn families(&self) -> &[PolynomialFamily] {
        &self.families
    }

    pub fn quadrature(&self, dim: usize) -> &Quadrature {
        &self.quadratures[dim]
    }

    pub fn quad_nodes(&self) -> usize {
        self.quadratures[0].len()
    }

    /// Whether the rule integrates every triple product exactly.
    pub fn triple_products_exact(&self) -> bool {
        2 * self.quad_nodes() >= 3 * self.index_set.order() + 1
    }

    pub fn is_hermite(&self) -> bool {
        self.families.iter().all(|&f| f == PolynomialFamily::Hermite)
    }

    /// ψ_k(ξ) for the multi-index at position `k`.
    pub fn eval(&self, k: usize, xi: &[f64]) -> f64 {
        let idx = self.index_set.get(k);
        idx.iter()
            .zip(&self.families)
            .zip(xi)
            .map(|((&deg, fam), &x)| fam.eval_normalized_all(deg, x)[deg])
            .product()
    }

    /// All basis functions at ξ.
    pub fn eval_all(&self, xi: &[f64]) -> Vec<f64> {
        let kmax = self.index_set.max_degree();
        let per_dim: Vec<Vec<f64>> = self
            .families
            .iter()
            .zip(xi)
            .map(|(fam, &x)| fam.eval_normalized_all(kmax, x))
            .collect();
        self.index_set
            .indices()
            .iter()
            .map(|idx| idx.iter().enumerate().map(|(d, &deg)| per_dim[d][deg]).product())
            .collect()
    }

    /// Σ_k modes_k ψ_k(ξ).
    pub fn evaluate(&self, modes: &[f64], xi: &[f64]) -> f64 {
        self.eval_all(xi).iter().zip(modes).map(|(p, c)| p * c).sum()
    }

    /// Number of tensorized quadrature nodes.
    pub fn tensor_node_count(&self) -> usize {
        self.quadratures.iter().map(Quadrature::len).product()
    }

    /// Visits every tensorized node with its weight and the basis values there.
    pub fn for_each_node(&self, mut f: impl FnMut(&[f64], f64, &[f64])) {
        let dims = self.dims();
        let mut counter = vec![0usize; dims];
        let mut xi = vec![0.0; dims];
        let mut values = vec![0.0; self.len()];
        loop {
            let mut w = 1.0;
            for d in 0..dims {
                xi[d] = self.quadratures[d].nodes[counter[d]];
                w *= self.quadratures[d].weights[counter[d]];
            }
            for (v, idx) in values.iter_mut().zip(self.index_set.indices()) {
                *v = idx.iter().enumerate().map(|(d, &deg)| self.tables[d][counter[d]][deg]).product();
            }
            f(&xi, w, &values);

            let mut d = 0;
            loop {
                if d == dims {
                    return;
                }
                counter[d] += 1;
                if counter[d] < self.quadratures[d].len() {
                    break;
                }
                counter[d] = 0;
                d += 1;
            }
        }
    }

    /// Mean and variance of an expansion.
    pub fn moments(modes: &[f64]) -> (f64, f64) {
        let mean = modes.first().copied().unwrap_or(0.0);
        let var = modes.iter().skip(1).map(|m| m * m).sum();
        (mean, var)
    }
}

/// Galerkin triple products G^k_{ij} = ⟨ψ_k, ψ_i ψ_j⟩.
#[derive(Debug, Clone)]
pub struct TripleProductTensor {
    size: usize,
    /// For each k, the nonzero (i, j, value) entries, both orientations stored.
    entries: Vec<Vec<(u32, u32, f64)>>,
}

impl TripleProductTensor {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self, k: usize) -> &[(u32, u32, f64)] {
        &self.entries[k]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.entries[k]
            .iter()
            .find(|&&(a, b, _)| a as usize == i && b as usize == j)
            .map_or(0.0, |e| e.2)
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for &(i, j, v) in &self.entries[k] {
            m[(i as usize, j as usize)] = v;
        }
        m
    }

    /// Galerkin matrix Σ_k c_k G^k of a field with modes `coeffs`.
    pub fn weighted_sum(&self, coeffs: &[f64]) -> DMatrix<f64> {
        assert_eq!(coeffs.len(), self.size, "mode count must match the basis");
        let mut m = DMatrix::zeros(self.size, self.size);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for &(i, j, v) in &self.entries[k] {
                m[(i as usize, j as usize)] += c * v;
            }
        }
        m
    }
}

pub fn triple_product_tensor(basis: &GpcBasis) -> TripleProductTensor {
    let kmax = basis.index_set().max_degree();
    // one-dimensional tables t[d][a][b][c]
    let one_d: Vec<Vec<f64>> = (0..basis.dims())
        .map(|d| {
            let rule = basis.quadrature(d);
            let n = kmax + 1;
            let mut t = vec![0.0; n * n * n];
            for (q, &w) in rule.weights.iter().enumerate() {
                let p = &basis.tables[d][q];
                for a in 0..n {
                    for b in 0..n {
                        let ab = w * p[a] * p[b];
                        for c in 0..n {
                            t[(a * n + b) * n + c] += ab * p[c];
                        }
                    }
                }
            }
            t.iter_mut().for_each(|v| {
                if v.abs() < TRIPLE_ZERO {
                    *v = 0.0
                }
            });
            t
        })
        .collect();
    let n = kmax + 1;
    let idx = basis.index_set().indices();
    let size = idx.len();
    let mut entries = vec![Vec::new(); size];
    for (k, kk) in idx.iter().enumerate() {
        for (i, ii) in idx.iter().enumerate() {
            'pair: for (j, jj) in idx.iter().enumerate().skip(i) {
                let mut v = 1.0;
                for d in 0..kk.len() {
                    let t = one_d[d][(kk[d] * n + ii[d]) * n + jj[d]];
                    if t == 0.0 {
                        continue 'pair;
                    }
                    v *= t;
                }
                entries[k].push((i as u32, j as u32, v));
                if i != j {
                    entries[k].push((j as u32, i as u32, v));
                }
            }
        }
    }
    TripleProductTensor { size, entries }
}

/// Orthogonal projection of f onto the basis by tensorized quadrature.
pub fn project_function(f: impl Fn(&[f64]) -> f64, basis: &GpcBasis) -> Result<Vec<f64>> {
    let mut modes = vec![0.0; basis.len()];
    let mut bad: Option<Vec<f64>> = None;
    basis.for_each_node(|xi, w, phi| {
        if bad.is_some() {
            return;
        }
        let v = f(xi);
        if !v.is_finite() {
            bad = Some(xi.to_vec());
            return;
        }
        for (m, p) in modes.iter_mut().zip(phi) {
            *m += w * v * p;
        }
    });
    match bad {
        Some(node) => Err(Error::NonFiniteProjection { node }),
        None => Ok(modes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn index_set_examples() {
        assert_eq!(build_index_set(4, 4, IndexSetKind::Sparse).unwrap().len(), 70);
        assert_eq!(build_index_set(2, 1, IndexSetKind::Total).unwrap().len(), 4);
        for kind in [IndexSetKind::Total, IndexSetKind::Sparse] {
            let s = build_index_set(1, 0, kind).unwrap();
            assert_eq!(s.indices(), &[vec![0]]);
        }
    }

    #[test]
    fn index_set_cardinalities_exhaustive() {
        for m in 1..=6 {
            for k in 0..=6 {
                for kind in [IndexSetKind::Total, IndexSetKind::Sparse] {
                    let s = build_index_set(m, k, kind).unwrap();
                    assert_eq!(s.len() as u128, kind.cardinality(m, k), "{m} {k} {kind:?}");
                    assert!(s.get(0).iter().all(|&c| c == 0));
                    for idx in s.indices() {
                        match kind {
                            IndexSetKind::Total => assert!(idx.iter().all(|&c| c <= k)),
                            IndexSetKind::Sparse => assert!(idx.iter().sum::<usize>() <= k),
                        }
                    }
                }
            }
        }
        // closed forms, independently
        assert_eq!(IndexSetKind::Sparse.cardinality(6, 6), 924);
        assert_eq!(IndexSetKind::Total.cardinality(3, 4), 125);
    }

    #[test]
    fn index_set_order_is_graded_with_units_first() {
        let s = build_index_set(3, 2, IndexSetKind::Sparse).unwrap();
        assert_eq!(s.get(1), &[1, 0, 0]);
        assert_eq!(s.get(2), &[0, 1, 0]);
        assert_eq!(s.get(3), &[0, 0, 1]);
        assert_eq!(s.unit_position(2), Some(3));
        let degrees: Vec<usize> = s.indices().iter().map(|i| i.iter().sum()).collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn index_set_cap() {
        let err = build_index_set_with_cap(10, 10, IndexSetKind::Total, 1000).unwrap_err();
        assert!(matches!(err, Error::IndexSetTooLarge { .. }));
        assert!(build_index_set(0, 3, IndexSetKind::Sparse).is_err());
    }

    #[test]
    fn poly_examples() {
        assert_eq!(eval_poly(PolynomialFamily::Hermite, 2, 0.0), -1.0);
        assert_eq!(eval_poly(PolynomialFamily::Legendre, 2, 1.0), 1.0);
        for fam in [PolynomialFamily::Hermite, PolynomialFamily::Legendre] {
            assert_eq!(eval_poly(fam, 0, 3.7), 1.0);
            assert_eq!(eval_poly(fam, 1, 3.7), 3.7);
        }
        // He_3 = ξ³ − 3ξ, P_3 = (5ξ³ − 3ξ)/2
        assert_abs_diff_eq!(eval_poly(PolynomialFamily::Hermite, 3, 2.0), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eval_poly(PolynomialFamily::Legendre, 3, 0.5), -0.4375, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_examples() {
        let h1 = gauss_quadrature(PolynomialFamily::Hermite, 1).unwrap();
        assert_abs_diff_eq!(h1.nodes[0], 0.0);
        assert_abs_diff_eq!(h1.weights[0], 1.0);

        let l2 = gauss_quadrature(PolynomialFamily::Legendre, 2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(l2.nodes[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(l2.nodes[1], r, epsilon = 1e-15);
        assert_abs_diff_eq!(l2.weights[0], 0.5, epsilon = 1e-15);

        assert_eq!(default_quad_nodes(4), 8);
        assert!(gauss_quadrature(PolynomialFamily::Hermite, 0).is_err());
    }

    #[test]
    fn quadrature_exactness() {
        // Gaussian moments E[ξ^{2m}] = (2m−1)!!, uniform moments 1/(2m+1)
        for n in 1..=12 {
            let h = gauss_quadrature(PolynomialFamily::Hermite, n).unwrap();
            let l = gauss_quadrature(PolynomialFamily::Legendre, n).unwrap();
            assert_abs_diff_eq!(h.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for p in 0..2 * n {
                let he = h.integrate(|x| x.powi(p as i32));
                let le = l.integrate(|x| x.powi(p as i32));
                let (h_exact, l_exact) = if p % 2 == 1 {
                    (0.0, 0.0)
                } else {
                    let df: f64 = (1..p).step_by(2).map(|j| j as f64).product();
                    (df, 1.0 / (p as f64 + 1.0))
                };
                let scale = h.integrate(|x| x.abs().powi(p as i32));
                assert!((he - h_exact).abs() <= 1e-13 * scale.max(1.0), "hermite n={n} p={p}");
                assert!((le - l_exact).abs() <= 1e-13, "legendre n={n} p={p}");
            }
        }
    }

    #[test]
    fn orthonormality() {
        for fam in [PolynomialFamily::Hermite, PolynomialFamily::Legendre] {
            let set = build_index_set(2, 5, IndexSetKind::Total).unwrap();
            let basis = GpcBasis::new(fam, set, None).unwrap();
            let n = basis.len();
            let mut gram = DMatrix::<f64>::zeros(n, n);
            basis.for_each_node(|_, w, phi| {
                for i in 0..n {
                    for j in 0..n {
                        gram[(i, j)] += w * phi[i] * phi[j];
                    }
                }
            });
            assert!((gram - DMatrix::identity(n, n)).amax() < 1e-12, "{fam}");
        }
    }

    #[test]
    fn unnormalized_norms() {
        let q = gauss_quadrature(PolynomialFamily::Hermite, 10).unwrap();
        for k in 0..6 {
            let n2 = q.integrate(|x| eval_poly(PolynomialFamily::Hermite, k, x).powi(2));
            assert_abs_diff_eq!(n2, PolynomialFamily::Hermite.norm_sq(k), epsilon = 1e-10);
        }
        let q = gauss_quadrature(PolynomialFamily::Legendre, 10).unwrap();
        for k in 0..6 {
            let n2 = q.integrate(|x| eval_poly(PolynomialFamily::Legendre, k, x).powi(2));
            assert_abs_diff_eq!(n2, PolynomialFamily::Legendre.norm_sq(k), epsilon = 1e-13);
        }
    }

    #[test]
    fn triple_products() {
        let set = build_index_set(1, 4, IndexSetKind::Total).unwrap();
        let basis = GpcBasis::new(PolynomialFamily::Hermite, set, None).unwrap();
        let g = triple_product_tensor(&basis);
        assert!((g.matrix(0) - DMatrix::identity(5, 5)).amax() < 1e-13);
        // brute force with a 40 node rule: ⟨ψ1 ψ1 ψ2⟩
        let rule = gauss_quadrature(PolynomialFamily::Hermite, 40).unwrap();
        let brute = rule.integrate(|x| x * x * (x * x - 1.0) / 2f64.sqrt());
        assert_abs_diff_eq!(brute, 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.get(2, 1, 1), brute, epsilon = 1e-12);

        let set = build_index_set(3, 3, IndexSetKind::Sparse).unwrap();
        let basis = GpcBasis::new(PolynomialFamily::Legendre, set, None).unwrap();
        let g = triple_product_tensor(&basis);
        let n = basis.len();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let v = g.get(k, i, j);
                    assert_eq!(v, g.get(k, j, i));
                    assert_abs_diff_eq!(v, g.get(i, k, j), epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let set = build_index_set(3, 2, IndexSetKind::Sparse).unwrap();
        let basis = GpcBasis::new(PolynomialFamily::Hermite, set, None).unwrap();
        let c = project_function(|_| 4.5, &basis).unwrap();
        assert_abs_diff_eq!(c[0], 4.5, epsilon = 1e-13);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-13));

        let lin = project_function(|xi| xi[0], &basis).unwrap();
        for (k, v) in lin.iter().enumerate() {
            let expect = if k == basis.index_set().unit_position(0).unwrap() { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-13);
        }

        let set = build_index_set(1, 4, IndexSetKind::Total).unwrap();
        let basis = GpcBasis::new(PolynomialFamily::Hermite, set, None).unwrap();
        let sq = project_function(|xi| xi[0] * xi[0], &basis).unwrap();
        let expect = [1.0, 0.0, 2f64.sqrt(), 0.0, 0.0];
        for (a, b) in sq.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-13);
        }

        let err = project_function(|xi| xi[0].ln(), &basis).unwrap_err();
        assert!(matches!(err, Error::NonFiniteProjection { .. }));
    }

    #[test]
    fn descriptor_roundtrip() {
        let d = BasisDescriptor {
            family: PolynomialFamily::Hermite,
            dims: 4,
            order: 4,
            set: IndexSetKind::Sparse,
            quad_nodes: Some(8),
        };
        let text = d.to_text();
        assert!(text.contains("family = \"hermite\""));
        assert_eq!(BasisDescriptor::from_text(&text).unwrap(), d);
        assert_eq!(d.build().unwrap().len(), 70);
    }
}
