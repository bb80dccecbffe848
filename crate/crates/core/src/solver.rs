//! Upwind / explicit Euler integration of the diagonalized Galerkin system.
//!
//! The state holds cell averages of ζ̂ = (ζ̂⁺, ζ̂⁻) on N interior cells plus
//! the two ghost blocks that carry the boundary feedback. Right-moving modes
//! use left-sided differences, left-moving modes right-sided ones, and the
//! source Q̂ enters through an explicit Euler term.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::galerkin::GalerkinSystem;
use crate::linalg::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub n: usize,
    pub dx: f64,
    pub cfl: f64,
    pub dt: f64,
}

impl Grid {
    pub fn new(length: f64, n: usize, cfl: f64, lambda_max: f64) -> Result<Self> {
        if !(length > 0.0) || n == 0 {
            return Err(Error::invalid("grid", "need L > 0 and at least one cell"));
        }
        let dx = length / n as f64;
        let dt = timestep(dx, cfl, lambda_max)?;
        Ok(Grid {
            length,
            n,
            dx,
            cfl,
            dt,
        })
    }

    pub fn centers(&self) -> Vec<f64> {
        cell_centers(self.length, self.n)
    }
}

pub fn cell_centers(length: f64, n: usize) -> Vec<f64> {
    let dx = length / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * dx).collect()
}

fn timestep(dx: f64, cfl: f64, lambda_max: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::invalid("cfl", format!("must lie in (0, 1], got {cfl}")));
    }
    if !(dx > 0.0) {
        return Err(Error::invalid("dx", format!("must be positive, got {dx}")));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::invalid("speeds", "all characteristic speeds vanish"));
    }
    Ok(cfl * dx / lambda_max)
}

/// Δt = CFL·Δx / max |D̂±|.
pub fn cfl_timestep(sys: &GalerkinSystem, dx: f64, cfl: f64) -> Result<f64> {
    timestep(dx, cfl, sys.lambda_max())
}

/// Discrete weights per cell, 2P entries each:
/// w⁺ᵢ = h⁺/D̂⁺(xᵢ) Π_{ℓ<i} (1 − Δx μ̂/D̂⁺(x_ℓ)),
/// w⁻ᵢ = h⁻/|D̂⁻(xᵢ)| Π_{ℓ>i} (1 + Δx μ̂/D̂⁻(x_ℓ)).
pub fn discrete_weights_from(
    dx: f64,
    d_plus: &[&DVector<f64>],
    d_minus: &[&DVector<f64>],
    mu_hat: f64,
    h_plus: &[f64],
    h_minus: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let n = d_plus.len();
    let p = h_plus.len();
    if d_minus.len() != n || h_minus.len() != p || d_plus.iter().chain(d_minus).any(|d| d.len() != p) {
        return Err(Error::invalid("weights", "speed and h dimensions disagree"));
    }
    if !(mu_hat >= 0.0) {
        return Err(Error::invalid("mu_hat", format!("must be non-negative, got {mu_hat}")));
    }
    let mut w = vec![DVector::zeros(2 * p); n];
    for k in 0..p {
        let mut prod = 1.0;
        for i in 0..n {
            let d = d_plus[i][k];
            w[i][k] = h_plus[k] / d * prod;
            let f = 1.0 - dx * mu_hat / d;
            if !(f > 0.0) {
                return Err(Error::WeightPositivity { cell: i, mode: k });
            }
            prod *= f;
        }
        let mut prod = 1.0;
        for i in (0..n).rev() {
            let d = d_minus[i][k];
            w[i][p + k] = h_minus[k] / d.abs() * prod;
            let f = 1.0 + dx * mu_hat / d;
            if !(f > 0.0) {
                return Err(Error::WeightPositivity { cell: i, mode: p + k });
            }
            prod *= f;
        }
    }
    Ok(w)
}

pub fn discrete_weights(sys: &GalerkinSystem, mu_hat: f64, h_plus: &[f64], h_minus: &[f64]) -> Result<Vec<DVector<f64>>> {
    let dp: Vec<&DVector<f64>> = sys.speeds.iter().map(|s| &s.d_plus).collect();
    let dm: Vec<&DVector<f64>> = sys.speeds.iter().map(|s| &s.d_minus).collect();
    discrete_weights_from(sys.length / sys.n_cells() as f64, &dp, &dm, mu_hat, h_plus, h_minus)
}

/// Cell averages of ζ̂ and the ghost blocks ζ̂₀⁺ and ζ̂_{N+1}⁻.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub step: usize,
    pub time: f64,
    pub dx: f64,
    p: usize,
    n: usize,
    data: Vec<f64>,
    pub ghost_left: Vec<f64>,
    pub ghost_right: Vec<f64>,
}

impl SolverState {
    pub fn zeros(n: usize, p: usize, dx: f64) -> Self {
        SolverState {
            step: 0,
            time: 0.0,
            dx,
            p,
            n,
            data: vec![0.0; n * 2 * p],
            ghost_left: vec![0.0; p],
            ghost_right: vec![0.0; p],
        }
    }

    /// Build from per-cell ζ̂ vectors and set the ghosts from B̂.
    pub fn from_cells(cells: &[DVector<f64>], dx: f64, b_hat: &DMatrix<f64>) -> Result<Self> {
        let n = cells.len();
        if n == 0 || cells[0].len() % 2 != 0 {
            return Err(Error::invalid("initial state", "need at least one cell of even length"));
        }
        let p = cells[0].len() / 2;
        let mut s = Self::zeros(n, p, dx);
        for (i, c) in cells.iter().enumerate() {
            if c.len() != 2 * p {
                return Err(Error::invalid("initial state", "cell vectors differ in length"));
            }
            s.cell_mut(i).copy_from_slice(c.as_slice());
        }
        s.refresh_ghosts(b_hat);
        Ok(s)
    }

    /// Initial data in Riemann coordinates: R̂±(xᵢ) is mapped to ζ̂ = T̂ᵀR̂ cell by cell.
    pub fn from_riemann(sys: &GalerkinSystem, riemann: impl Fn(f64) -> (Vec<f64>, Vec<f64>)) -> Result<Self> {
        let p = sys.size;
        let mut cells = Vec::with_capacity(sys.n_cells());
        for (x, sp) in sys.cells.iter().zip(&sys.speeds) {
            let (rp, rm) = riemann(*x);
            if rp.len() != p || rm.len() != p {
                return Err(Error::invalid("initial state", format!("expected {p} modes per family")));
            }
            let zp = sp.t_plus.transpose() * DVector::from_vec(rp);
            let zm = sp.t_minus.transpose() * DVector::from_vec(rm);
            cells.push(DVector::from_iterator(2 * p, zp.iter().chain(zm.iter()).copied()));
        }
        Self::from_cells(&cells, sys.length / sys.n_cells() as f64, &sys.b_hat)
    }

    pub fn modes(&self) -> usize {
        self.p
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * 2 * self.p..(i + 1) * 2 * self.p]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        let w = 2 * self.p;
        &mut self.data[i * w..(i + 1) * w]
    }

    /// (ζ̂₀⁺, ζ̂_{N+1}⁻) = B̂ (ζ̂_N⁺, ζ̂₁⁻).
    pub fn refresh_ghosts(&mut self, b_hat: &DMatrix<f64>) {
        let p = self.p;
        let w = 2 * p;
        let last = (self.n - 1) * w;
        for r in 0..w {
            let mut acc = 0.0;
            for c in 0..p {
                acc += b_hat[(r, c)] * self.data[last + c] + b_hat[(r, p + c)] * self.data[p + c];
            }
            if r < p {
                self.ghost_left[r] = acc;
            } else {
                self.ghost_right[r - p] = acc;
            }
        }
    }

    /// Δx Σ ‖ζ̂ᵢ‖².
    pub fn l2_sq(&self) -> f64 {
        self.dx * self.data.iter().map(|v| v * v).sum::<f64>()
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Precomputed operator for repeated steps on one system.
#[derive(Debug, Clone)]
pub struct Stepper {
    dx: f64,
    p: usize,
    d: Vec<Arc<DVector<f64>>>,
    q: Vec<Arc<CsrMatrix>>,
    b_hat: DMatrix<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(sys: &GalerkinSystem) -> Self {
        let mut d: Vec<Arc<DVector<f64>>> = Vec::with_capacity(sys.n_cells());
        for (i, s) in sys.speeds.iter().enumerate() {
            if i > 0 && Arc::ptr_eq(s, &sys.speeds[i - 1]) {
                let prev = Arc::clone(&d[i - 1]);
                d.push(prev);
            } else {
                d.push(Arc::new(s.d()));
            }
        }
        let mut q: Vec<Arc<CsrMatrix>> = Vec::with_capacity(sys.n_cells());
        for (i, m) in sys.q_hat.iter().enumerate() {
            if i > 0 && sys.q_hat[i - 1] == *m {
                let prev = Arc::clone(&q[i - 1]);
                q.push(prev);
            } else {
                q.push(Arc::new(CsrMatrix::from_dense(m)));
            }
        }
        Stepper {
            dx: sys.length / sys.n_cells() as f64,
            p: sys.size,
            d,
            q,
            b_hat: sys.b_hat.clone(),
            scratch: Vec::new(),
        }
    }

    /// Replace the boundary matrix, keeping the interior operator.
    pub fn with_boundary(mut self, b_hat: DMatrix<f64>) -> Self {
        self.b_hat = b_hat;
        self
    }

    /// Replace the source by zero.
    pub fn without_source(mut self) -> Self {
        let zero = Arc::new(CsrMatrix::from_dense(&DMatrix::zeros(2 * self.p, 2 * self.p)));
        self.q = vec![zero; self.q.len()];
        self
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    /// One upwind / Euler step of length `dt`, then ghost refresh.
    pub fn step(&mut self, state: &mut SolverState, dt: f64) -> Result<()> {
        let p = self.p;
        let w = 2 * p;
        let n = state.n;
        let r = dt / self.dx;
        self.scratch.clear();
        self.scratch.extend_from_slice(&state.data);
        let old = &self.scratch;
        for i in 0..n {
            let d = &self.d[i];
            let base = i * w;
            let out = &mut state.data[base..base + w];
            for k in 0..p {
                let left = if i == 0 { state.ghost_left[k] } else { old[base - w + k] };
                out[k] -= r * d[k] * (old[base + k] - left);
                let right = if i + 1 == n { state.ghost_right[k] } else { old[base + w + p + k] };
                out[p + k] -= r * d[p + k] * (right - old[base + p + k]);
            }
            self.q[i].mul_add(-dt, &old[base..base + w], out);
        }
        state.refresh_ghosts(&self.b_hat);
        state.step += 1;
        state.time += dt;
        if !state.is_finite() {
            return Err(Error::NonFiniteState { step: state.step });
        }
        Ok(())
    }
}

/// Single step without a reusable operator.
pub fn step(state: &mut SolverState, sys: &GalerkinSystem, b_hat: &DMatrix<f64>, dt: f64) -> Result<()> {
    Stepper::new(sys).with_boundary(b_hat.clone()).step(state, dt)
}

/// ℒᵏ = Δx Σᵢ ζ̂ᵢᵀ Wᵢ ζ̂ᵢ.
pub fn discrete_lyapunov(state: &SolverState, weights: &[DVector<f64>]) -> f64 {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate().take(state.n) {
        acc += state.cell(i).iter().zip(w.iter()).map(|(z, w)| w * z * z).sum::<f64>();
    }
    state.dx * acc
}

/// Mean and variance of the physical deviations per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean_v: Vec<f64>,
    pub var_v: Vec<f64>,
    pub mean_sigma: Vec<f64>,
    pub var_sigma: Vec<f64>,
}

/// R̂ = T̂ζ̂ per cell, then Δŷ = (T ⊗ I) R̂. The means include the desired
/// state (v*, σ*); variances sum the squared non-constant modes.
pub fn moments(state: &SolverState, sys: &GalerkinSystem, t_phys: &Matrix2<f64>, desired: (f64, f64)) -> Moments {
    let p = state.p;
    let n = state.n;
    let mut m = Moments {
        mean_v: Vec::with_capacity(n),
        var_v: Vec::with_capacity(n),
        mean_sigma: Vec::with_capacity(n),
        var_sigma: Vec::with_capacity(n),
    };
    for i in 0..n {
        let c = state.cell(i);
        let sp = &sys.speeds[i];
        let rp = &sp.t_plus * DVector::from_column_slice(&c[..p]);
        let rm = &sp.t_minus * DVector::from_column_slice(&c[p..]);
        let (mut vv, mut vs) = (0.0, 0.0);
        let (mut m0, mut s0) = (0.0, 0.0);
        for k in 0..p {
            let dv = t_phys[(0, 0)] * rp[k] + t_phys[(0, 1)] * rm[k];
            let ds = t_phys[(1, 0)] * rp[k] + t_phys[(1, 1)] * rm[k];
            if k == 0 {
                m0 = dv;
                s0 = ds;
            } else {
                vv += dv * dv;
                vs += ds * ds;
            }
        }
        m.mean_v.push(desired.0 + m0);
        m.var_v.push(vv);
        m.mean_sigma.push(desired.1 + s0);
        m.var_sigma.push(vs);
    }
    m
}

/// Mean physical deviation Δv at x = 0 and x = L from the ghost and the adjacent cell.
pub fn boundary_actuation(state: &SolverState, sys: &GalerkinSystem, t_phys: &Matrix2<f64>) -> (f64, f64) {
    let p = state.p;
    let n = state.n;
    let first = &sys.speeds[0];
    let last = &sys.speeds[n - 1];
    let mode0 = |t: &DMatrix<f64>, v: &[f64]| (0..p).map(|j| t[(0, j)] * v[j]).sum::<f64>();
    let left = t_phys[(0, 0)] * mode0(&first.t_plus, &state.ghost_left) + t_phys[(0, 1)] * mode0(&first.t_minus, &state.cell(0)[p..]);
    let right =
        t_phys[(0, 0)] * mode0(&last.t_plus, &state.cell(n - 1)[..p]) + t_phys[(0, 1)] * mode0(&last.t_minus, &state.ghost_right);
    (left, right)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub lyapunov: f64,
    pub normalized: f64,
    pub moments: Moments,
    pub actuation_left: f64,
    pub actuation_right: f64,
}

impl Sample {
    pub fn max_var_sigma(&self) -> f64 {
        self.moments.var_sigma.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub centers: Vec<f64>,
    pub dx: f64,
    pub dt: f64,
    /// Rate for the e^{−μt} envelope column, present only when positive.
    pub envelope_rate: Option<f64>,
    pub samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a series has at least the initial sample")
    }

    /// Sample whose time is closest to `t`.
    pub fn sample_near(&self, t: f64) -> &Sample {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("non-empty series")
    }

    pub fn peak_max_variance(&self) -> f64 {
        self.samples.iter().map(Sample::max_var_sigma).fold(0.0, f64::max)
    }

    /// Whitespace-separated table with a commented header.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# t L L_normalized");
        if self.envelope_rate.is_some() {
            s.push_str(" envelope");
        }
        for i in 1..=self.centers.len() {
            let _ = write!(s, " mean_sigma_{i}");
        }
        for i in 1..=self.centers.len() {
            let _ = write!(s, " var_sigma_{i}");
        }
        s.push_str(" actuation_left actuation_right\n");
        for smp in &self.samples {
            let _ = write!(s, "{} {} {}", smp.t, smp.lyapunov, smp.normalized);
            if let Some(mu) = self.envelope_rate {
                let _ = write!(s, " {}", (-mu * smp.t).exp());
            }
            for v in smp.moments.mean_sigma.iter().chain(&smp.moments.var_sigma) {
                let _ = write!(s, " {v}");
            }
            let _ = writeln!(s, " {} {}", smp.actuation_left, smp.actuation_right);
        }
        s
    }
}

/// Everything needed to integrate one prepared system.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub t_end: f64,
    pub cfl: f64,
    pub sample_every: Option<usize>,
    pub weights: Vec<DVector<f64>>,
    pub t_phys: Matrix2<f64>,
    pub desired: (f64, f64),
    pub envelope_rate: Option<f64>,
}

/// Default sampling cadence ⌈1/(50Δt)⌉.
pub fn default_cadence(dt: f64) -> usize {
    ((1.0 / (50.0 * dt)).ceil() as usize).max(1)
}

/// Integrate to `t_end`; the final step is shortened to land on it exactly.
pub fn simulate(sys: &GalerkinSystem, initial: SolverState, setup: &SimulationSetup) -> Result<TimeSeries> {
    simulate_with(Stepper::new(sys), sys, initial, setup)
}

pub fn simulate_with(mut stepper: Stepper, sys: &GalerkinSystem, initial: SolverState, setup: &SimulationSetup) -> Result<TimeSeries> {
    if !(setup.t_end >= 0.0 && setup.t_end.is_finite()) {
        return Err(Error::invalid("t_end", format!("must be non-negative, got {}", setup.t_end)));
    }
    let dt = cfl_timestep(sys, initial.dx, setup.cfl)?;
    let every = setup.sample_every.unwrap_or_else(|| default_cadence(dt)).max(1);
    let steps = if setup.t_end == 0.0 {
        0
    } else {
        ((setup.t_end / dt) * (1.0 - 1e-12)).ceil() as usize
    };

    let mut state = initial;
    let l0 = discrete_lyapunov(&state, &setup.weights);
    let record = |state: &SolverState| {
        let l = discrete_lyapunov(state, &setup.weights);
        let (al, ar) = boundary_actuation(state, sys, &setup.t_phys);
        Sample {
            step: state.step,
            t: state.time,
            lyapunov: l,
            normalized: if l0 > 0.0 { l / l0 } else { 1.0 },
            moments: moments(state, sys, &setup.t_phys, setup.desired),
            actuation_left: al,
            actuation_right: ar,
        }
    };
    let mut samples = vec![record(&state)];
    for k in 1..=steps {
        let h = if k == steps { setup.t_end - (k - 1) as f64 * dt } else { dt };
        stepper.step(&mut state, h)?;
        if k == steps {
            state.time = setup.t_end;
        }
        if k % every == 0 || k == steps {
            samples.push(record(&state));
        }
    }
    Ok(TimeSeries {
        centers: sys.cells.clone(),
        dx: state.dx,
        dt,
        envelope_rate: setup.envelope_rate,
        samples,
    })
}

/// Output of one configured run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiment: crate::config::Experiment,
    pub series: TimeSeries,
}

/// Configuration to time series: basis, field, Galerkin system, certificate, integration.
pub fn run(config: &crate::config::ExperimentConfig) -> Result<RunOutput> {
    let experiment = crate::config::Experiment::prepare(config)?;
    let setup = experiment.simulation_setup()?;
    let initial = experiment.initial_state()?;
    let series = simulate(&experiment.system, initial, &setup)?;
    Ok(RunOutput { experiment, series })
}
