//! Experiment configuration (TOML) and the end-to-end pipeline from a
//! configuration to an assembled, certified Galerkin system.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::galerkin::{GalerkinSystem, RandomSystemSpec};
use crate::gpc::{build_index_set, triple_product_tensor, GpcBasis, IndexSetKind, PolynomialFamily};
use crate::lyapunov::{certify, CertificateOptions, StabilityCertificate};
use crate::material::{feedback_gains, FeedbackGains, PreparedSensitivity, RiemannTransform, Sensitivity};
use crate::randfield::{
    condition, constant_mean, kl_decompose, kl_to_gpc, Covariance, CovarianceKernel, KLExpansion, KernelKind, MeanFn,
};
use crate::solver::{cell_centers, discrete_weights, SimulationSetup, SolverState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldConfig>,
    pub material: MaterialConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub family: PolynomialFamily,
    /// Number of random dimensions M.
    pub dims: usize,
    /// Truncation order K.
    pub order: usize,
    pub set: IndexSetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<usize>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            family: PolynomialFamily::Hermite,
            dims: 4,
            order: 4,
            set: IndexSetKind::Sparse,
            quad_nodes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kernel: KernelKind,
    pub variance: f64,
    pub length_scale: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements: Option<Measurements>,
}

fn default_nu() -> f64 {
    1.5
}

fn default_n_quad() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurements {
    pub locations: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(rename = "e")]
    pub elastic_modulus: f64,
    pub sigma_star: f64,
    #[serde(default)]
    pub v_star: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub sensitivity: Sensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub mu_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_plus: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_minus: Option<Vec<f64>>,
    #[serde(default)]
    pub optimize_scaling: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            mu_hat: 0.25,
            h_plus: None,
            h_minus: None,
            optimize_scaling: false,
        }
    }
}

const DEFAULT_CELLS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    pub cfl: f64,
    pub t_end: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            length: 1.0,
            cells: Some(DEFAULT_CELLS),
            dx: None,
            cfl: 0.99,
            t_end: 5.0,
        }
    }
}

impl GridConfig {
    pub fn n_cells(&self) -> Result<usize> {
        match (self.cells, self.dx) {
            (Some(n), None) => Ok(n),
            (None, Some(dx)) => {
                let n = (self.length / dx).round();
                if !(n >= 1.0) || ((n * dx - self.length).abs() > 1e-9 * self.length) {
                    return Err(Error::Config(format!(
                        "grid.dx = {dx} does not divide grid.length = {}",
                        self.length
                    )));
                }
                Ok(n as usize)
            }
            (Some(_), Some(_)) => Err(Error::Config("grid: give either cells or dx, not both".into())),
            (None, None) => Ok(DEFAULT_CELLS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinates {
    /// Profiles give (R⁺, R⁻).
    Riemann,
    /// Profiles give (Δv, Δσ), mapped through T⁻¹.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cos,
    Sin,
    Constant,
}

/// amplitude · shape(2π · wavenumber · x / L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub shape: Shape,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub wavenumber: f64,
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        let arg = 2.0 * PI * self.wavenumber * x / length;
        self.amplitude
            * match self.shape {
                Shape::Cos => arg.cos(),
                Shape::Sin => arg.sin(),
                Shape::Constant => 1.0,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub coordinates: Coordinates,
    pub first: Profile,
    pub second: Profile,
}

impl Default for InitialConfig {
    fn default() -> Self {
        let cos = Profile {
            shape: Shape::Cos,
            amplitude: 1.0,
            wavenumber: 1.0,
        };
        InitialConfig {
            coordinates: Coordinates::Riemann,
            first: cos,
            second: cos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: ".".into(),
            prefix: "run".into(),
            sample_every: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The stress-strain experiment with the relation ε̄ᵖ_σ = 0.02σ* and a
    /// squared-exponential stress field of variance 25 and length scale 0.2.
    pub fn reference(sigma_star: f64) -> Self {
        ExperimentConfig {
            basis: BasisConfig::default(),
            field: Some(FieldConfig {
                kernel: KernelKind::SquaredExponential,
                variance: 25.0,
                length_scale: 0.2,
                nu: default_nu(),
                n_quad: default_n_quad(),
                measurements: None,
            }),
            material: MaterialConfig {
                elastic_modulus: 100.0,
                sigma_star,
                v_star: 0.0,
                kappa0: 0.9,
                kappa1: 0.9,
                sensitivity: Sensitivity::Linear { factor: 0.02 },
            },
            stability: StabilityConfig::default(),
            grid: GridConfig::default(),
            initial: InitialConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.basis;
        if b.dims == 0 {
            return Err(Error::Config("basis.dims must be at least 1".into()));
        }
        if let Some(q) = b.quad_nodes {
            if q == 0 {
                return Err(Error::Config("basis.quad_nodes must be at least 1".into()));
            }
        }
        if let Some(f) = &self.field {
            positive("field.variance", f.variance)?;
            positive("field.length_scale", f.length_scale)?;
            positive("field.nu", f.nu)?;
            if f.n_quad < 2 {
                return Err(Error::Config("field.n_quad must be at least 2".into()));
            }
            if b.family != PolynomialFamily::Hermite {
                return Err(Error::Config("basis.family must be hermite when a [field] block is present".into()));
            }
            if b.order == 0 {
                return Err(Error::Config("basis.order must be at least 1 when a [field] block is present".into()));
            }
            if let Some(m) = &f.measurements {
                if m.locations.len() != m.values.len() {
                    return Err(Error::Config(format!(
                        "field.measurements: {} locations but {} values",
                        m.locations.len(),
                        m.values.len()
                    )));
                }
                if let Some(x) = m.locations.iter().find(|&&x| !(0.0..=self.grid.length).contains(&x)) {
                    return Err(Error::Config(format!("field.measurements location {x} outside [0, L]")));
                }
            }
        }
        let m = &self.material;
        positive("material.e", m.elastic_modulus)?;
        if !m.sigma_star.is_finite() || !m.v_star.is_finite() {
            return Err(Error::Config("material.sigma_star and material.v_star must be finite".into()));
        }
        for (name, k) in [("material.kappa0", m.kappa0), ("material.kappa1", m.kappa1)] {
            if !k.is_finite() || k == -1.0 {
                return Err(Error::Config(format!("{name} must be finite and different from -1, got {k}")));
            }
        }
        if let Sensitivity::Linear { factor } = m.sensitivity {
            if !factor.is_finite() {
                return Err(Error::Config("material.sensitivity.factor must be finite".into()));
            }
        }
        let s = &self.stability;
        if !(s.mu_hat >= 0.0 && s.mu_hat.is_finite()) {
            return Err(Error::Config(format!("stability.mu_hat must be non-negative, got {}", s.mu_hat)));
        }
        for (name, h) in [("stability.h_plus", &s.h_plus), ("stability.h_minus", &s.h_minus)] {
            if let Some(h) = h {
                if h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::Config(format!("{name} entries must be positive")));
                }
            }
        }
        let g = &self.grid;
        positive("grid.length", g.length)?;
        if !(g.cfl > 0.0 && g.cfl <= 1.0) {
            return Err(Error::Config(format!("grid.cfl must lie in (0, 1], got {}", g.cfl)));
        }
        if !(g.t_end >= 0.0 && g.t_end.is_finite()) {
            return Err(Error::Config(format!("grid.t_end must be non-negative, got {}", g.t_end)));
        }
        if g.n_cells()? == 0 {
            return Err(Error::Config("grid.cells must be at least 1".into()));
        }
        if self.output.sample_every == Some(0) {
            return Err(Error::Config("output.sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Copy with one scalar parameter replaced, for sweeps.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match name {
            "sigma_star" => c.material.sigma_star = value,
            "v_star" => c.material.v_star = value,
            "e" => c.material.elastic_modulus = value,
            "kappa" => {
                c.material.kappa0 = value;
                c.material.kappa1 = value;
            }
            "kappa0" => c.material.kappa0 = value,
            "kappa1" => c.material.kappa1 = value,
            "factor" => match &mut c.material.sensitivity {
                Sensitivity::Linear { factor } => *factor = value,
                _ => return Err(Error::Config("cannot sweep factor: sensitivity is not linear".into())),
            },
            "mu_hat" => c.stability.mu_hat = value,
            "cfl" => c.grid.cfl = value,
            "t_end" => c.grid.t_end = value,
            "length" => c.grid.length = value,
            "cells" => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("cells must be a positive integer, got {value}")));
                }
                c.grid.cells = Some(value as usize);
                c.grid.dx = None;
            }
            "variance" | "length_scale" => {
                let f = c
                    .field
                    .as_mut()
                    .ok_or_else(|| Error::Config(format!("cannot sweep {name}: no [field] block")))?;
                if name == "variance" {
                    f.variance = value;
                } else {
                    f.length_scale = value;
                }
            }
            other => return Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
        c.validate()?;
        Ok(c)
    }
}

/// Names accepted by [`ExperimentConfig::with_parameter`].
pub const SWEEP_PARAMETERS: &[&str] = &[
    "sigma_star",
    "v_star",
    "e",
    "kappa",
    "kappa0",
    "kappa1",
    "factor",
    "mu_hat",
    "cfl",
    "t_end",
    "length",
    "cells",
    "variance",
    "length_scale",
];

pub fn build_basis(cfg: &BasisConfig) -> Result<GpcBasis> {
    let set = build_index_set(cfg.dims, cfg.order, cfg.set)?;
    GpcBasis::new(cfg.family, set, cfg.quad_nodes)
}

/// Prior kernel of the stress field, or its posterior when measurements are configured.
pub fn field_covariance(cfg: &FieldConfig, sigma_star: f64) -> Result<Arc<dyn Covariance>> {
    let kernel = CovarianceKernel::new(cfg.kernel, cfg.variance, cfg.length_scale, cfg.nu)?;
    Ok(match &cfg.measurements {
        Some(meas) if !meas.locations.is_empty() => {
            Arc::new(condition(constant_mean(sigma_star), kernel, &meas.locations, &meas.values)?)
        }
        _ => Arc::new(kernel),
    })
}

/// KL decomposition of the configured stress field, with its mean function.
pub fn build_field(cfg: &FieldConfig, sigma_star: f64, length: f64, m: usize) -> Result<(KLExpansion, MeanFn)> {
    let cov = field_covariance(cfg, sigma_star)?;
    let kl = kl_decompose(cov.as_ref(), length, m, cfg.n_quad)?;
    let conditioned = cfg.measurements.as_ref().is_some_and(|meas| !meas.locations.is_empty());
    let mean: MeanFn = if conditioned {
        Arc::new(move |x| cov.mean(x))
    } else {
        constant_mean(sigma_star)
    };
    Ok((kl, mean))
}

/// All derived objects of one configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub basis: GpcBasis,
    pub kl: Option<KLExpansion>,
    /// gPC modes of ε̄ᵖ_σ per cell.
    pub sensitivity: Vec<Vec<f64>>,
    pub transform: RiemannTransform,
    pub gains: FeedbackGains,
    pub system: GalerkinSystem,
    pub certificate: StabilityCertificate,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let basis = build_basis(&config.basis)?;
        let tensor = triple_product_tensor(&basis);
        let p = basis.len();
        let n = config.grid.n_cells()?;
        let length = config.grid.length;
        let cells = cell_centers(length, n);
        let mat = &config.material;

        let (kl, stress_modes) = match &config.field {
            Some(f) => {
                let (kl, mean) = build_field(f, mat.sigma_star, length, basis.dims())?;
                let modes = kl_to_gpc(&kl, mean.as_ref(), &basis, &cells)?;
                (Some(kl), modes)
            }
            None => {
                let mut m = vec![0.0; p];
                m[0] = mat.sigma_star;
                (None, vec![m; n])
            }
        };
        let sens = mat.sensitivity.prepare(mat.sigma_star)?;
        let sensitivity: Vec<Vec<f64>> = match sens {
            PreparedSensitivity::Linear(f) => stress_modes.iter().map(|m| m.iter().map(|v| f * v).collect()).collect(),
            ref branch => stress_modes
                .iter()
                .map(|m| {
                    if m[1..].iter().all(|&v| v == 0.0) {
                        let mut out = vec![0.0; p];
                        out[0] = branch.eval(m[0]);
                        Ok(out)
                    } else {
                        crate::gpc::project_function(|xi| branch.eval(basis.evaluate(m, xi)), &basis)
                    }
                })
                .collect::<Result<_>>()?,
        };

        let transform = RiemannTransform::new(mat.elastic_modulus)?;
        let gains = feedback_gains(mat.kappa0, mat.kappa1, mat.elastic_modulus)?;
        let speed = mat.elastic_modulus.sqrt();
        let constant = |v: f64| {
            let mut m = vec![0.0; p];
            m[0] = v;
            m
        };
        let source = sensitivity
            .iter()
            .map(|s| {
                let c: Vec<f64> = s.iter().map(|v| -0.5 * v).collect();
                [c.clone(), c.clone(), c.clone(), c]
            })
            .collect();
        let spec = RandomSystemSpec {
            length,
            cells,
            lambda_plus: vec![constant(speed); n],
            lambda_minus: vec![constant(-speed); n],
            source,
            boundary: gains.b,
        };
        let system = GalerkinSystem::assemble(&spec, &basis, &tensor)?;
        let st = &config.stability;
        let certificate = certify(
            &system,
            &CertificateOptions {
                mu_hat: st.mu_hat,
                h_plus: st.h_plus.clone(),
                h_minus: st.h_minus.clone(),
                optimize_scaling: st.optimize_scaling,
            },
        )?;
        Ok(Experiment {
            config: config.clone(),
            basis,
            kl,
            sensitivity,
            transform,
            gains,
            system,
            certificate,
        })
    }

    pub fn initial_state(&self) -> Result<SolverState> {
        let p = self.basis.len();
        let init = &self.config.initial;
        let length = self.config.grid.length;
        let t = self.transform;
        SolverState::from_riemann(&self.system, |x| {
            let (a, b) = (init.first.eval(x, length), init.second.eval(x, length));
            let (rp, rm) = match init.coordinates {
                Coordinates::Riemann => (a, b),
                Coordinates::Physical => t.to_riemann(a, b),
            };
            let mut vp = vec![0.0; p];
            let mut vm = vec![0.0; p];
            vp[0] = rp;
            vm[0] = rm;
            (vp, vm)
        })
    }

    pub fn simulation_setup(&self) -> Result<SimulationSetup> {
        let c = &self.certificate;
        let weights = discrete_weights(&self.system, c.mu_hat, &c.h_plus, &c.h_minus)?;
        Ok(SimulationSetup {
            t_end: self.config.grid.t_end,
            cfl: self.config.grid.cfl,
            sample_every: self.config.output.sample_every,
            weights,
            t_phys: self.transform.t,
            desired: (self.config.material.v_star, self.config.material.sigma_star),
            envelope_rate: c.guarantees_decay().then_some(c.mu()),
        })
    }

    /// Physical boundary matrix of the feedback law.
    pub fn physical_gains(&self) -> Matrix2<f64> {
        self.gains.b_y
    }

    /// Largest sensitivity mode magnitude per cell, for reports.
    pub fn sensitivity_mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.sensitivity.len(), self.sensitivity.iter().map(|m| m[0]))
    }
}
