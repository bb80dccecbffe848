use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;

use sgcontrol::config::{ExperimentConfig, Measurements};
use sgcontrol::galerkin::{check_hyperbolicity, GalerkinSystem, RandomSystemSpec};
use sgcontrol::gpc::{build_index_set, project_function, triple_product_tensor, GpcBasis, IndexSetKind, PolynomialFamily};
use sgcontrol::lyapunov::{boundary_matrix_h, certify, sufficient_bound, dissipativity_check, CertificateOptions};
use sgcontrol::material::{feedback_gains, RiemannTransform};
use sgcontrol::randfield::{condition, constant_mean, kl_decompose, kl_to_gpc, CovarianceKernel, KernelKind};
use sgcontrol::report::metadata;
use sgcontrol::solver::{cell_centers, discrete_weights_from};

fn family() -> impl Strategy<Value = PolynomialFamily> {
    prop_oneof![Just(PolynomialFamily::Hermite), Just(PolynomialFamily::Legendre)]
}

fn kind() -> impl Strategy<Value = IndexSetKind> {
    prop_oneof![Just(IndexSetKind::Total), Just(IndexSetKind::Sparse)]
}

fn kernel_kind() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Exponential),
        Just(KernelKind::SquaredExponential),
        Just(KernelKind::Matern)
    ]
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

#[test]
fn index_set_cardinalities() {
    for m in 1..=6 {
        for k in 0..=6 {
            let total = build_index_set(m, k, IndexSetKind::Total).unwrap();
            assert_eq!(total.len() as u128, (k as u128 + 1).pow(m as u32));
            let sparse = build_index_set(m, k, IndexSetKind::Sparse).unwrap();
            assert_eq!(sparse.len() as u128, factorial(m + k) / (factorial(m) * factorial(k)));
            assert!(sparse.get(0).iter().all(|&d| d == 0));
        }
    }
}

fn basis_for(family: PolynomialFamily, m: usize, k: usize, kind: IndexSetKind) -> GpcBasis {
    GpcBasis::new(family, build_index_set(m, k, kind).unwrap(), None).unwrap()
}

/// Hermite basis with a random speed field λ⁺ = mean + Σ ξ-modes, λ⁻ = −λ⁺.
fn speed_system(mean: f64, spread: f64, kappa: f64, eps: f64, n: usize) -> (GpcBasis, GalerkinSystem, Vec<Vec<f64>>) {
    let basis = basis_for(PolynomialFamily::Hermite, 2, 2, IndexSetKind::Sparse);
    let kernel = CovarianceKernel::squared_exponential(spread * spread, 0.3).unwrap();
    let kl = kl_decompose(&kernel, 1.0, 2, 64).unwrap();
    let cells = cell_centers(1.0, n);
    let lp = kl_to_gpc(&kl, &|x| mean + 0.5 * x, &basis, &cells).unwrap();
    let lm: Vec<Vec<f64>> = lp.iter().map(|m| m.iter().map(|v| -v).collect()).collect();
    let p = basis.len();
    let mut c = vec![0.0; p];
    c[0] = -0.5 * eps;
    let spec = RandomSystemSpec {
        length: 1.0,
        cells,
        lambda_plus: lp.clone(),
        lambda_minus: lm,
        source: vec![[c.clone(), c.clone(), c.clone(), c]; n],
        boundary: Matrix2::new(0.0, kappa, kappa, 0.0),
    };
    let sys = GalerkinSystem::assemble(&spec, &basis, &triple_product_tensor(&basis)).unwrap();
    (basis, sys, lp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn basis_is_orthonormal(f in family(), m in 1usize..=3, k in 0usize..=4, kd in kind()) {
        let basis = basis_for(f, m, k, kd);
        let p = basis.len();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        basis.for_each_node(|_, w, phi| {
            for i in 0..p {
                for j in 0..p {
                    gram[(i, j)] += w * phi[i] * phi[j];
                }
            }
        });
        prop_assert!((gram - DMatrix::identity(p, p)).amax() < 1e-12);
    }

    #[test]
    fn projection_recovers_polynomials(f in family(), m in 1usize..=2, k in 1usize..=4,
                                       coeffs in prop::collection::vec(-2.0f64..2.0, 15)) {
        let basis = basis_for(f, m, k, IndexSetKind::Sparse);
        let p = basis.len();
        let c = &coeffs[..p.min(coeffs.len())];
        let poly = |xi: &[f64]| c.iter().enumerate().map(|(i, a)| a * basis.eval(i, xi)).sum::<f64>();
        let modes = project_function(poly, &basis).unwrap();
        for (i, a) in c.iter().enumerate() {
            prop_assert!((modes[i] - a).abs() < 1e-11);
        }
        let (mean, var) = GpcBasis::moments(&modes);
        let (mut q_mean, mut q_sq) = (0.0, 0.0);
        basis.for_each_node(|xi, w, _| {
            let v = poly(xi);
            q_mean += w * v;
            q_sq += w * v * v;
        });
        prop_assert!((mean - q_mean).abs() < 1e-11);
        prop_assert!((var - (q_sq - q_mean * q_mean)).abs() < 1e-10);
    }

    #[test]
    fn triple_products_totally_symmetric(f in family(), m in 1usize..=2, k in 0usize..=3, kd in kind()) {
        let basis = basis_for(f, m, k, kd);
        let t = triple_product_tensor(&basis);
        let p = basis.len();
        for a in 0..p {
            for b in 0..p {
                let delta = if a == b { 1.0 } else { 0.0 };
                prop_assert!((t.get(0, a, b) - delta).abs() < 1e-12);
                for c in 0..p {
                    let v = t.get(a, b, c);
                    prop_assert!((v - t.get(a, c, b)).abs() < 1e-12);
                    prop_assert!((v - t.get(b, a, c)).abs() < 1e-12);
                    prop_assert!((v - t.get(c, b, a)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mercer_truncation_improves_monotonically(kk in kernel_kind(), ls in 0.1f64..0.6) {
        let kernel = CovarianceKernel::new(kk, 1.0, ls, 1.5).unwrap();
        let n = 128;
        let kl = kl_decompose(&kernel, 1.0, 8, n).unwrap();
        let nodes = &kl.nodes;
        let exact = DMatrix::from_fn(n, n, |i, j| kernel.eval(nodes[i], nodes[j]));
        let mut prev = f64::INFINITY;
        for m in 1..=8 {
            let mut approx = DMatrix::zeros(n, n);
            for k in 0..m {
                let psi = DVector::from_column_slice(&kl.eigenfunctions[k]);
                approx += kl.eigenvalues[k] * &psi * psi.transpose();
            }
            let residual = &exact - approx;
            let trace_norm: f64 = nalgebra::SymmetricEigen::new(residual).eigenvalues.iter().map(|v| v.abs()).sum();
            prop_assert!(trace_norm <= prev * (1.0 + 1e-9), "m = {m}: {trace_norm} > {prev}");
            prev = trace_norm;
        }
    }

    #[test]
    fn conditioning_contracts_variance(kk in kernel_kind(), ls in 0.1f64..0.5,
                                       locs in prop::collection::btree_set(0u32..=20, 1..5),
                                       vals in prop::collection::vec(-3.0f64..3.0, 5)) {
        let kernel = CovarianceKernel::new(kk, 2.0, ls, 2.5).unwrap();
        let x: Vec<f64> = locs.iter().map(|&i| i as f64 / 20.0).collect();
        let z = &vals[..x.len()];
        let post = condition(constant_mean(0.5), kernel, &x, z).unwrap();
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            prop_assert!(post.posterior_variance(t) <= kernel.eval(t, t) + 1e-12);
        }
    }

    #[test]
    fn gershgorin_predicate_implies_definiteness(mean in 2.0f64..6.0, sd in 0.1f64..3.0, m in 1usize..=4) {
        // degree-one basis, where Â⁺ is the (M+1)×(M+1) arrow matrix
        let basis = basis_for(PolynomialFamily::Hermite, m, 1, IndexSetKind::Sparse);
        let kernel = CovarianceKernel::squared_exponential(sd * sd, 0.25).unwrap();
        let kl = kl_decompose(&kernel, 1.0, m, 64).unwrap();
        let cells = cell_centers(1.0, 6);
        let modes = kl_to_gpc(&kl, &|_| mean, &basis, &cells).unwrap();
        let tensor = triple_product_tensor(&basis);
        for (x, m) in cells.iter().zip(&modes) {
            let spread: f64 = (0..kl.m()).map(|k| (kl.eigenvalues[k].sqrt() * kl.eigenfunction(k, *x)).abs()).sum();
            if mean > spread {
                let a = tensor.weighted_sum(m);
                let min = nalgebra::SymmetricEigen::new(a).eigenvalues.min();
                prop_assert!(min > 0.0);
                let cv = kl.variance_at(*x).sqrt() / mean;
                prop_assert!(cv < 1.0);
            }
        }
    }

    #[test]
    fn galerkin_product_matches_quadrature(a0 in 1.0f64..5.0, a1 in -1.0f64..1.0, a2 in -1.0f64..1.0,
                                           y in prop::collection::vec(-1.0f64..1.0, 10)) {
        // λ(ξ) = a0 + a1 ξ₁ + a2 ξ₂ is represented exactly for K ≥ 1
        let basis = basis_for(PolynomialFamily::Hermite, 2, 3, IndexSetKind::Sparse);
        let p = basis.len();
        let lam = |xi: &[f64]| a0 + a1 * xi[0] + a2 * xi[1];
        let lam_modes = project_function(lam, &basis).unwrap();
        let a = triple_product_tensor(&basis).weighted_sum(&lam_modes);
        let yv = DVector::from_column_slice(&y[..p]);
        let lhs = &a * &yv;
        let rhs = project_function(|xi| lam(xi) * basis.evaluate(yv.as_slice(), xi), &basis).unwrap();
        for i in 0..p {
            prop_assert!((lhs[i] - rhs[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn hyperbolicity_check_implies_definite_blocks(mean in 0.5f64..6.0, spread in 0.05f64..2.0) {
        let basis = basis_for(PolynomialFamily::Hermite, 2, 2, IndexSetKind::Sparse);
        let kernel = CovarianceKernel::squared_exponential(spread * spread, 0.3).unwrap();
        let kl = kl_decompose(&kernel, 1.0, 2, 64).unwrap();
        let cells = cell_centers(1.0, 6);
        let lp = kl_to_gpc(&kl, &|_| mean, &basis, &cells).unwrap();
        let lm: Vec<Vec<f64>> = lp.iter().map(|m| m.iter().map(|v| -v).collect()).collect();
        if check_hyperbolicity(&lp, &lm, &basis).pass {
            let tensor = triple_product_tensor(&basis);
            for (mp, mm) in lp.iter().zip(&lm) {
                prop_assert!(nalgebra::SymmetricEigen::new(tensor.weighted_sum(mp)).eigenvalues.min() > 0.0);
                prop_assert!(nalgebra::SymmetricEigen::new(tensor.weighted_sum(mm)).eigenvalues.max() < 0.0);
            }
        }
    }

    #[test]
    fn mean_square_equivalence(mean in 6.0f64..9.0, spread in 0.1f64..1.0,
                               r in prop::collection::vec(-1.0f64..1.0, 6 * 12)) {
        let (_, sys, _) = speed_system(mean, spread, 0.5, 0.0, 6);
        let p = sys.size;
        let mut norm_r = 0.0;
        let mut norm_z = 0.0;
        for (i, sp) in sys.speeds.iter().enumerate() {
            let rp = DVector::from_column_slice(&r[i * 2 * p..i * 2 * p + p]);
            let rm = DVector::from_column_slice(&r[i * 2 * p + p..(i + 1) * 2 * p]);
            let zp = sp.t_plus.transpose() * &rp;
            let zm = sp.t_minus.transpose() * &rm;
            norm_r += rp.norm_squared() + rm.norm_squared();
            norm_z += zp.norm_squared() + zm.norm_squared();
        }
        prop_assert!((norm_r - norm_z).abs() < 1e-10 * norm_r.max(1.0));
    }

    #[test]
    fn sufficient_bound_implies_dissipativity(entries in prop::collection::vec(-1.0f64..1.0, 4),
                                       mu_hat in 0.0f64..1.0, mean in 2.0f64..6.0) {
        let mut b = Matrix2::from_row_slice(&entries);
        let norm = b.singular_values().max();
        if norm > 1.0 {
            b /= norm;
        }
        let basis = basis_for(PolynomialFamily::Hermite, 2, 2, IndexSetKind::Sparse);
        let kernel = CovarianceKernel::squared_exponential(0.09, 0.3).unwrap();
        let kl = kl_decompose(&kernel, 1.0, 2, 64).unwrap();
        let cells = cell_centers(1.0, 5);
        let lp = kl_to_gpc(&kl, &|_| mean, &basis, &cells).unwrap();
        let lm: Vec<Vec<f64>> = lp.iter().map(|m| m.iter().map(|v| -v).collect()).collect();
        let cb = sufficient_bound(&b, &lp, &lm, &basis, mu_hat, 1.0);
        if cb.pass() {
            let p = basis.len();
            let zero = vec![0.0; p];
            let spec = RandomSystemSpec {
                length: 1.0,
                cells: cells.clone(),
                lambda_plus: lp.clone(),
                lambda_minus: lm.clone(),
                source: vec![[zero.clone(), zero.clone(), zero.clone(), zero]; cells.len()],
                boundary: b,
            };
            let sys = GalerkinSystem::assemble(&spec, &basis, &triple_product_tensor(&basis)).unwrap();
            let d = dissipativity_check(&sys.b_hat, mu_hat, 1.0, sys.lambda_min, None);
            prop_assert!(d.pass, "sufficient-bound margin {} but dissipativity margin {}", cb.dissipativity.margin, d.margin);
        }
    }

    #[test]
    fn boundary_matrix_sign_matches_quadratic_forms(kappa in 0.1f64..1.2, mu_hat in 0.0f64..2.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let (_, sys, _) = speed_system(10.0, 0.2, kappa, 0.0, 8);
        let p = sys.size;
        let cert = certify(&sys, &CertificateOptions::new(mu_hat)).unwrap();
        let (h, eig) = boundary_matrix_h(&sys.b_hat, &cert.weights, &sys).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nsd = eig[eig.len() - 1] <= 1e-8;
        let mut max_form = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let v = DVector::<f64>::from_fn(2 * p, |_, _| rng.random_range(-1.0..1.0));
            let v = &v / v.norm();
            max_form = max_form.max((v.transpose() * &h * &v)[0]);
        }
        if nsd {
            prop_assert!(max_form <= 1e-8);
        } else {
            let top = nalgebra::SymmetricEigen::new(h.clone());
            let i = top.eigenvalues.imax();
            let v = top.eigenvectors.column(i);
            prop_assert!((v.transpose() * &h * v)[0] > 1e-8);
        }
        if cert.valid() {
            prop_assert!(nsd, "dissipative but H has eigenvalue {}", eig[eig.len() - 1]);
        }
    }

    #[test]
    fn discrete_weight_derivative_matches(mu_hat in 0.0f64..3.0, speed in 1.0f64..20.0, n in 16usize..128) {
        let dx = 1.0 / n as f64;
        let dp = DVector::from_element(1, speed);
        let dm = DVector::from_element(1, -speed);
        let w = discrete_weights_from(dx, &vec![&dp; n], &vec![&dm; n], mu_hat, &[1.0], &[1.0]).unwrap();
        for i in 1..n {
            let lhs = (w[i][0] * speed - w[i - 1][0] * speed) / dx;
            prop_assert!((lhs + mu_hat * w[i - 1][0]).abs() < 1e-10);
            let lhs = (w[i][1] * speed - w[i - 1][1] * speed) / dx;
            prop_assert!((lhs - mu_hat * w[i][1]).abs() < 1e-10);
        }
    }

    #[test]
    fn riemann_transform_identity(e in 1.0f64..1e4, dv in -10.0f64..10.0, ds in -100.0f64..100.0) {
        let t = RiemannTransform::new(e).unwrap();
        prop_assert!((t.t_inv * t.t - Matrix2::identity()).amax() < 1e-12);
        let (rp, rm) = t.to_riemann(dv, ds);
        let s = e.sqrt();
        prop_assert!((rp - 0.5 * (ds / s - dv)).abs() < 1e-12 * (1.0 + ds.abs()));
        prop_assert!((rm - 0.5 * (ds / s + dv)).abs() < 1e-12 * (1.0 + ds.abs()));
        let a = t.t * t.lambda * t.t_inv;
        prop_assert!((a - RiemannTransform::jacobian(e)).amax() < 1e-12 * e);
    }

    #[test]
    fn feedback_law_round_trip(e in 1.0f64..1e3, k0 in -0.95f64..2.0, k1 in -0.95f64..2.0,
                               out_p in -1.0f64..1.0, out_m in -1.0f64..1.0) {
        let t = RiemannTransform::new(e).unwrap();
        let g = feedback_gains(k0, k1, e).unwrap();
        let incoming = g.b * Vector2::new(out_p, out_m);
        let (dv0, ds0) = t.to_physical(incoming[0], out_m);
        let (dvl, dsl) = t.to_physical(out_p, incoming[1]);
        prop_assert!((dv0 - g.b_y[(0, 0)] * ds0).abs() < 1e-12);
        prop_assert!((dvl - g.b_y[(1, 1)] * dsl).abs() < 1e-12);
    }

    #[test]
    fn config_echo_round_trips(sigma_star in 10.0f64..150.0, kappa in 0.0f64..1.5, mu_hat in 0.0f64..2.0,
                               cells in 8usize..512, measured in any::<bool>()) {
        let mut c = ExperimentConfig::reference(sigma_star);
        c.material.kappa0 = kappa;
        c.material.kappa1 = kappa * 0.5;
        c.stability.mu_hat = mu_hat;
        c.grid.cells = Some(cells);
        if measured {
            c.field.as_mut().unwrap().measurements = Some(Measurements {
                locations: vec![0.0, 0.5, 1.0],
                values: vec![sigma_star, sigma_star + 1.5, sigma_star - 0.25],
            });
        }
        let text = metadata(&c, "valid = true", Some("2026-10-15T00:00:00Z"));
        prop_assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }
}
