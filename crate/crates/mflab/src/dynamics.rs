//! Seeded stochastic simulation of the interacting particle system, the
//! reduced barycenter diffusion, and a deterministic finite-volume solver for
//! the 1-D mean-field Fokker–Planck equation.
//!
//! The two interaction models are
//!
//! * barycenter interaction: `dX_i = −(∇V(X̄) + κX_i)dt + √2 dB_i`, whose
//!   barycenter solves the closed SDE `dX̄ = −∇V_κ(X̄)dt + √(2/N) dB̃`;
//! * pairwise (Curie–Weiss): `dX_i = −(V'(X_i) − κX̄)dt + √2 dB_i` (1-D).

use crate::measures::{self, Density1D};
use crate::potentials::{Kind, PotentialSpec};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const MODULE: &str = "dynamics";
/// Hard cap on any state coordinate before the run is declared divergent.
const BLOWUP: f64 = 1e8;

/// Which interaction couples the particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Drift through the empirical barycenter only.
    Toy,
    /// Pairwise Curie–Weiss coupling (requires d = 1).
    CurieWeiss,
}

/// Initial condition for a simulation.
#[derive(Debug, Clone)]
pub enum Init {
    /// Explicit particle cloud (one vector per particle; all of dimension d).
    Points(Vec<DVector<f64>>),
    /// I.i.d. isotropic Gaussian draws from the replica stream.
    Gaussian { mean: DVector<f64>, s2: f64 },
    /// CSV file: one row per particle, one column per coordinate.
    File(std::path::PathBuf),
}

/// Full description of one stochastic run.  The RNG stream is a pure function
/// of `(seed, replica_id)`, so a config reproduces bitwise identically no
/// matter how replicas are scheduled.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: PotentialSpec,
    pub model: Model,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub replica_id: u64,
    pub init: Init,
    /// Debug switch: `false` zeroes the Brownian increments.
    pub noise: bool,
    /// Store every k-th state; `None` uses ⌈0.1/dt⌉.
    pub thin_every: Option<usize>,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        const OP: &str = "SimConfig";
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::input(MODULE, OP, "dt must be positive"));
        }
        if self.n == 0 {
            return Err(Error::input(MODULE, OP, "need at least one particle"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::input(MODULE, OP, "horizon must be positive"));
        }
        if self.model == Model::CurieWeiss && self.spec.d != 1 {
            return Err(Error::input(MODULE, OP, "pairwise coupling requires d = 1"));
        }
        Ok(())
    }

    fn thin(&self) -> usize {
        self.thin_every
            .unwrap_or_else(|| ((0.1 / self.dt).ceil() as usize).max(1))
    }
}

/// A discrete event observed during a run (hitting/exit records).
#[derive(Debug, Clone)]
pub struct Event {
    pub replica_id: u64,
    pub label: String,
    pub time: f64,
    pub payload: f64,
}

/// Output of a simulation: thinned states, events, terminal moments.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    /// Times of the stored frames.
    pub times: Vec<f64>,
    /// Stored frames: flattened column-major d×N state (d entries for the
    /// reduced barycenter runs).
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    /// Per-coordinate empirical mean over particles at the final step.
    pub terminal_mean: DVector<f64>,
    /// Per-coordinate empirical variance over particles at the final step.
    pub terminal_variance: DVector<f64>,
}

fn load_cloud_csv(path: &std::path::Path, d: usize) -> Result<Vec<DVector<f64>>> {
    const OP: &str = "load_cloud_csv";
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::input(MODULE, OP, format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::input(MODULE, OP, e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::input(MODULE, OP, format!("bad number: {e}")))?;
        if row.len() != d {
            return Err(Error::input(MODULE, OP, "row dimension mismatch"));
        }
        out.push(DVector::from_vec(row));
    }
    Ok(out)
}

/// Stepping engine for the full N-particle system.
pub struct ParticleSim {
    cfg: SimConfig,
    /// d × N state, one particle per column.
    state: DMatrix<f64>,
    rng: ChaCha8Rng,
    step_index: usize,
    /// Per-coordinate sum of the raw standard-normal draws of the last step.
    last_increment_sum: DVector<f64>,
}

fn replica_rng(seed: u64, replica_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica_id);
    rng
}

impl ParticleSim {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.spec.d;
        let mut rng = replica_rng(cfg.seed, cfg.replica_id);
        let state = match &cfg.init {
            Init::Points(points) => {
                if points.len() != cfg.n || points.iter().any(|p| p.len() != d) {
                    return Err(Error::input(
                        MODULE,
                        "ParticleSim",
                        "initial cloud must be N points of dimension d",
                    ));
                }
                DMatrix::from_fn(d, cfg.n, |r, c| points[c][r])
            }
            Init::Gaussian { mean, s2 } => {
                if mean.len() != d || !(*s2 >= 0.0) {
                    return Err(Error::input(
                        MODULE,
                        "ParticleSim",
                        "Gaussian init needs a d-dimensional mean and s2 >= 0",
                    ));
                }
                // Filled below, once the struct owns the rng, so draws happen
                // in particle order.
                DMatrix::zeros(d, cfg.n)
            }
            Init::File(path) => {
                let points = load_cloud_csv(path, d)?;
                if points.len() != cfg.n {
                    return Err(Error::input(
                        MODULE,
                        "ParticleSim",
                        "file cloud size differs from configured N",
                    ));
                }
                DMatrix::from_fn(d, cfg.n, |r, c| points[c][r])
            }
        };
        let mut state = state;
        if let Init::Gaussian { mean, s2 } = &cfg.init {
            let sd = s2.sqrt();
            for c in 0..cfg.n {
                for r in 0..d {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    state[(r, c)] = mean[r] + sd * z;
                }
            }
        }
        Ok(ParticleSim {
            last_increment_sum: DVector::zeros(d),
            state,
            rng,
            step_index: 0,
            cfg,
        })
    }

    pub fn t(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    pub fn barycenter(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.cfg.spec.d);
        for c in 0..self.cfg.n {
            m += self.state.column(c);
        }
        m / self.cfg.n as f64
    }

    /// Per-coordinate sum of the raw N(0,1) draws used by the latest step
    /// (the shared driving noise of the barycenter reduction).
    pub fn last_increment_sum(&self) -> &DVector<f64> {
        &self.last_increment_sum
    }

    /// One Euler–Maruyama step; increments are drawn in particle order.
    pub fn step(&mut self) -> Result<()> {
        let d = self.cfg.spec.d;
        let n = self.cfg.n;
        let dt = self.cfg.dt;
        let noise_scale = if self.cfg.noise { (2.0 * dt).sqrt() } else { 0.0 };
        let xbar = self.barycenter();
        self.last_increment_sum.fill(0.0);
        match self.cfg.model {
            Model::Toy => {
                let gv = self.cfg.spec.grad_v(&xbar);
                for c in 0..n {
                    for r in 0..d {
                        let z: f64 = rand_distr::StandardNormal.sample(&mut self.rng);
                        self.last_increment_sum[r] += z;
                        let x = self.state[(r, c)];
                        self.state[(r, c)] =
                            x - (gv[r] + self.cfg.spec.kappa * x) * dt + noise_scale * z;
                    }
                }
            }
            Model::CurieWeiss => {
                let m = xbar[0];
                for c in 0..n {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut self.rng);
                    self.last_increment_sum[0] += z;
                    let x = self.state[(0, c)];
                    let drift = self.cfg.spec.dv_scalar(x) - self.cfg.spec.kappa * m;
                    self.state[(0, c)] = x - drift * dt + noise_scale * z;
                }
            }
        }
        self.step_index += 1;
        if self.state.amax() > BLOWUP {
            return Err(Error::numeric(
                MODULE,
                "ParticleSim::step",
                format!("state diverged (|x| > 1e8) at step {}", self.step_index),
            ));
        }
        Ok(())
    }
}

/// Stepping engine for the reduced barycenter diffusion
/// `dX̄ = −∇V_κ(X̄)dt + √(2/N) dB̃` (barycenter-interaction model only).
pub struct BarycenterSim {
    cfg: SimConfig,
    state: DVector<f64>,
    rng: ChaCha8Rng,
    step_index: usize,
}

impl BarycenterSim {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.model != Model::Toy {
            return Err(Error::input(
                MODULE,
                "BarycenterSim",
                "the pairwise model has no autonomous barycenter",
            ));
        }
        let d = cfg.spec.d;
        let mut rng = replica_rng(cfg.seed, cfg.replica_id);
        let state = match &cfg.init {
            Init::Points(points) => {
                if points.len() != 1 || points[0].len() != d {
                    return Err(Error::input(
                        MODULE,
                        "BarycenterSim",
                        "reduced runs take a single d-dimensional initial point",
                    ));
                }
                points[0].clone()
            }
            Init::Gaussian { mean, s2 } => {
                if mean.len() != d || !(*s2 >= 0.0) {
                    return Err(Error::input(
                        MODULE,
                        "BarycenterSim",
                        "Gaussian init needs a d-dimensional mean and s2 >= 0",
                    ));
                }
                let sd = s2.sqrt();
                DVector::from_fn(d, |r, _| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    mean[r] + sd * z
                })
            }
            Init::File(path) => {
                let points = load_cloud_csv(path, d)?;
                if points.len() != 1 {
                    return Err(Error::input(
                        MODULE,
                        "BarycenterSim",
                        "reduced runs take a single-row file",
                    ));
                }
                points[0].clone()
            }
        };
        Ok(BarycenterSim { state, rng, step_index: 0, cfg })
    }

    pub fn t(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// One Euler–Maruyama step with externally supplied standard-normal
    /// increments (used for shared-noise coupling experiments).
    pub fn step_with_increments(&mut self, z: &DVector<f64>) -> Result<()> {
        let dt = self.cfg.dt;
        let noise_scale = if self.cfg.noise {
            (2.0 * dt / self.cfg.n as f64).sqrt()
        } else {
            0.0
        };
        let g = self.cfg.spec.grad_v_kappa(&self.state);
        self.state -= g * dt;
        self.state += z * noise_scale;
        self.step_index += 1;
        if self.state.amax() > BLOWUP {
            return Err(Error::numeric(
                MODULE,
                "BarycenterSim::step",
                format!("state diverged (|x| > 1e8) at step {}", self.step_index),
            ));
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        let z = DVector::from_fn(self.cfg.spec.d, |_, _| {
            rand_distr::StandardNormal.sample(&mut self.rng)
        });
        self.step_with_increments(&z)
    }
}

fn run_to_batch(
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    terminal: &DMatrix<f64>,
) -> TrajectoryBatch {
    let d = terminal.nrows();
    let n = terminal.ncols() as f64;
    let mut mean = DVector::zeros(d);
    for c in 0..terminal.ncols() {
        mean += terminal.column(c);
    }
    mean /= n;
    let mut var = DVector::zeros(d);
    for c in 0..terminal.ncols() {
        for r in 0..d {
            let dx = terminal[(r, c)] - mean[r];
            var[r] += dx * dx;
        }
    }
    var /= n;
    TrajectoryBatch {
        times,
        states,
        events: Vec::new(),
        terminal_mean: mean,
        terminal_variance: var,
    }
}

/// Run the full particle system to the horizon, storing thinned frames.
pub fn simulate_particles(cfg: SimConfig) -> Result<TrajectoryBatch> {
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let thin = cfg.thin();
    let mut sim = ParticleSim::new(cfg)?;
    let mut times = vec![0.0];
    let mut states = vec![sim.state.as_slice().to_vec()];
    for k in 1..=steps {
        sim.step()?;
        if k % thin == 0 || k == steps {
            times.push(sim.t());
            states.push(sim.state.as_slice().to_vec());
        }
    }
    Ok(run_to_batch(times, states, &sim.state))
}

/// Run the reduced barycenter diffusion to the horizon.
pub fn simulate_barycenter(cfg: SimConfig) -> Result<TrajectoryBatch> {
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let thin = cfg.thin();
    let mut sim = BarycenterSim::new(cfg)?;
    let mut times = vec![0.0];
    let mut states = vec![sim.state.as_slice().to_vec()];
    for k in 1..=steps {
        sim.step()?;
        if k % thin == 0 || k == steps {
            times.push(sim.t());
            states.push(sim.state.as_slice().to_vec());
        }
    }
    let terminal = DMatrix::from_column_slice(sim.state.len(), 1, sim.state.as_slice());
    Ok(run_to_batch(times, states, &terminal))
}

/// Options of the finite-volume Fokker–Planck solver.
#[derive(Debug, Clone)]
pub struct PdeOptions {
    /// Number of cells of the uniform grid.
    pub n_cells: usize,
    /// Time spacing of stored frames.
    pub store_every: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions { n_cells: 400, store_every: 0.1 }
    }
}

/// Stored snapshot of the PDE flow with its diagnostics.
#[derive(Debug, Clone)]
pub struct PdeFrame {
    pub t: f64,
    pub density: Density1D,
    /// Barycenter m_t.
    pub mean: f64,
    pub variance: f64,
    /// Free energy F(ρ_t).
    pub free_energy: f64,
}

/// Full result of a PDE run.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub frames: Vec<PdeFrame>,
    pub box_half: f64,
    pub h: f64,
    /// Worst per-step mass drift observed.
    pub mass_drift: f64,
}

/// Bernoulli function w/(e^w − 1) of the exponential-fitting flux.
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-12 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

/// Solve the 1-D mean-field Fokker–Planck equation
/// `∂_t ρ = ∂_x(ρ b_ρ) + ∂²_x ρ` by an exponentially fitted (Scharfetter–
/// Gummel) finite-volume scheme with no-flux boundaries and explicit Euler
/// time stepping.  The drift is `b = ∇V(m_t) + κx` (barycenter interaction)
/// or `b = V'(x) − κm_t` (pairwise model).
pub fn solve_mckean_vlasov_1d(
    spec: &PotentialSpec,
    rho0: &Density1D,
    dt: f64,
    horizon: f64,
    opts: &PdeOptions,
) -> Result<PdeSolution> {
    const OP: &str = "solve_mckean_vlasov_1d";
    if spec.d != 1 {
        return Err(Error::input(MODULE, OP, "solver is one-dimensional"));
    }
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::input(MODULE, OP, "dt and horizon must be positive"));
    }
    // The barycenter stays within reach of the 1-D critical points of V_κ and
    // the initial mean; everything drift-related is bounded through this.
    let crit_extent = {
        let mut worst = 0.0f64;
        let mut prev = spec.dv_kappa_scalar(-8.0);
        for i in 1..=1600 {
            let x = -8.0 + 16.0 * i as f64 / 1600.0;
            let g = spec.dv_kappa_scalar(x);
            if prev * g <= 0.0 {
                worst = worst.max(x.abs());
            }
            prev = g;
        }
        worst
    };
    let m_bound = crit_extent.max(rho0.mean().abs()) + 0.5;

    // Box: tails of both e^{−V_κ} and of every reachable quasi-stationary
    // profile (Gaussian N(m, 1/κ) tilts for the barycenter model, e^{−V+ξx}
    // tilts for the pairwise model) at least e^{−40} below their peak.
    let vmin = (0..4001)
        .map(|i| spec.v_kappa_scalar(-8.0 + 16.0 * i as f64 / 4000.0))
        .fold(f64::INFINITY, f64::min);
    let mut box_half = 1.0f64;
    let confined = |l: f64| -> bool {
        let v_ok = spec.v_kappa_scalar(l) - vmin >= 40.0 && spec.v_kappa_scalar(-l) - vmin >= 40.0;
        let tilt_ok = match &spec.kind {
            Kind::CurieWeiss { .. } => {
                spec.v_scalar(l) - vmin - spec.kappa * m_bound * l >= 40.0
                    && spec.v_scalar(-l) - vmin - spec.kappa * m_bound * l >= 40.0
            }
            _ => 0.5 * spec.kappa * (l - m_bound).powi(2) >= 40.0,
        };
        v_ok && tilt_ok
    };
    while !confined(box_half) {
        box_half += 0.25;
        if box_half > 80.0 {
            return Err(Error::numeric(MODULE, OP, "could not find a confining box"));
        }
    }
    // Effective support: ignore grid regions whose density is negligible.
    let peak = rho0.values.iter().cloned().fold(0.0f64, f64::max);
    let support = rho0
        .grid
        .iter()
        .zip(&rho0.values)
        .filter(|(_, &v)| v > 1e-10 * peak)
        .map(|(&x, _)| x.abs())
        .fold(0.0f64, f64::max);
    box_half = box_half.max(support);

    let n = opts.n_cells;
    let h = 2.0 * box_half / n as f64;
    // Cell centers.
    let xs: Vec<f64> = (0..n).map(|j| -box_half + (j as f64 + 0.5) * h).collect();
    // CFL bound for the explicit step: dt (2 + max|b| h) / h² ≤ 1, with the
    // drift maximized over the box in x and over |m| ≤ m_bound in the mean.
    let grad_over_means = (0..81)
        .map(|i| spec.dv_scalar(-m_bound + 2.0 * m_bound * i as f64 / 80.0).abs())
        .fold(0.0f64, f64::max);
    let max_drift = match &spec.kind {
        Kind::CurieWeiss { .. } => {
            let g = (0..=2 * n)
                .map(|j| spec.dv_scalar(-box_half + box_half * j as f64 / n as f64).abs())
                .fold(0.0f64, f64::max);
            g + spec.kappa * m_bound
        }
        _ => grad_over_means + spec.kappa * box_half,
    };
    let dt_max = h * h / (2.0 + max_drift * h);
    if dt > dt_max {
        return Err(Error::Config(format!(
            "PDE step dt = {dt:.3e} violates the stability bound {dt_max:.3e} \
             for {n} cells on [-{box_half}, {box_half}]; use dt <= {:.3e}",
            0.9 * dt_max
        )));
    }

    // Initialize cell averages from the tabulated density and renormalize so
    // the discrete mass is exactly 1.
    let mut rho: Vec<f64> = {
        let levels_grid: Vec<f64> = xs.clone();
        // Evaluate the trapezoidal interpolant of rho0 at cell centers.
        let mut vals = vec![0.0; n];
        for (j, &x) in levels_grid.iter().enumerate() {
            vals[j] = interp_linear(&rho0.grid, &rho0.values, x).max(0.0);
        }
        vals
    };
    let mass0: f64 = rho.iter().sum::<f64>() * h;
    if !(mass0 > 0.0) {
        return Err(Error::input(MODULE, OP, "initial density has no mass inside the box"));
    }
    for v in rho.iter_mut() {
        *v /= mass0;
    }

    let steps = (horizon / dt).round() as usize;
    let store_every = ((opts.store_every / dt).round() as usize).max(1);
    let mut frames: Vec<PdeFrame> = Vec::new();
    let mut mass_drift = 0.0f64;
    let mut flux = vec![0.0f64; n + 1];

    let snapshot = |t: f64, rho: &[f64]| -> Result<PdeFrame> {
        let density = Density1D::new(xs.clone(), rho.to_vec())?;
        let mean = density.mean();
        let variance = density.variance();
        let free_energy = measures::free_energy_density(&density, spec)?;
        Ok(PdeFrame { t, density, mean, variance, free_energy })
    };
    frames.push(snapshot(0.0, &rho)?);

    let mut mass_prev: f64 = rho.iter().sum::<f64>() * h;
    for k in 1..=steps {
        // Current barycenter (first moment of the cell averages).
        let m: f64 = xs.iter().zip(&rho).map(|(&x, &r)| x * r).sum::<f64>() * h;
        if m.abs() > m_bound {
            return Err(Error::numeric(
                MODULE,
                OP,
                format!("barycenter left its a-priori bound at step {k} (|{m:.3}| > {m_bound:.3})"),
            ));
        }
        // Drift at interior faces.
        let b_at = |x: f64| -> f64 {
            match &spec.kind {
                Kind::CurieWeiss { .. } => spec.dv_scalar(x) - spec.kappa * m,
                _ => spec.dv_scalar(m) + spec.kappa * x,
            }
        };
        for j in 1..n {
            let x_face = -box_half + j as f64 * h;
            let w = b_at(x_face) * h;
            // Zero-flux equilibrium of this face: ρ_j+1/ρ_j = e^{−w}.
            flux[j] = (bernoulli(-w) * rho[j] - bernoulli(w) * rho[j - 1]) / h;
        }
        flux[0] = 0.0;
        flux[n] = 0.0;
        for j in 0..n {
            rho[j] += dt * (flux[j + 1] - flux[j]) / h;
        }
        let mass: f64 = rho.iter().sum::<f64>() * h;
        mass_drift = mass_drift.max((mass - mass_prev).abs());
        mass_prev = mass;
        if k % store_every == 0 || k == steps {
            frames.push(snapshot(k as f64 * dt, &rho)?);
        }
    }
    Ok(PdeSolution { frames, box_half, h, mass_drift })
}

fn interp_linear(grid: &[f64], vals: &[f64], x: f64) -> f64 {
    if x <= grid[0] || x >= grid[grid.len() - 1] {
        return 0.0;
    }
    let j = grid.partition_point(|&g| g < x).max(1);
    let (x0, x1) = (grid[j - 1], grid[j]);
    let t = (x - x0) / (x1 - x0);
    vals[j - 1] + t * (vals[j] - vals[j - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::GaussianSpec;
    use approx::assert_relative_eq;

    fn point(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn toy_cfg(spec: PotentialSpec, n: usize) -> SimConfig {
        SimConfig {
            spec,
            model: Model::Toy,
            n,
            dt: 1e-2,
            horizon: 1.0,
            seed: 42,
            replica_id: 0,
            init: Init::Gaussian { mean: DVector::zeros(1), s2: 1.0 },
            noise: true,
            thin_every: None,
        }
    }

    #[test]
    fn bitwise_deterministic_reruns() {
        let cfg = toy_cfg(PotentialSpec::quartic1d(1.0).unwrap(), 32);
        let a = simulate_particles(cfg.clone()).unwrap();
        let b = simulate_particles(cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times, b.times);
        assert_eq!(a.terminal_mean, b.terminal_mean);
    }

    #[test]
    fn replica_streams_differ() {
        let cfg = toy_cfg(PotentialSpec::quartic1d(1.0).unwrap(), 8);
        let mut cfg2 = cfg.clone();
        cfg2.replica_id = 1;
        let a = simulate_particles(cfg).unwrap();
        let b = simulate_particles(cfg2).unwrap();
        assert_ne!(a.states.last(), b.states.last());
    }

    #[test]
    fn noiseless_run_is_gradient_descent() {
        // With the noise off, the particle update is explicit Euler on
        // U_N(x) = N·V(x̄) + (κ/2)Σ|x_i|².
        let spec = PotentialSpec::quartic1d(0.7).unwrap();
        let n = 5;
        let pts: Vec<DVector<f64>> = (0..n).map(|i| point(-1.0 + 0.4 * i as f64)).collect();
        let mut cfg = toy_cfg(spec.clone(), n);
        cfg.noise = false;
        cfg.init = Init::Points(pts.clone());
        cfg.dt = 0.05;
        cfg.horizon = 0.5;
        let batch = simulate_particles(cfg).unwrap();

        // Independent replay of the descent recursion.
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        for _ in 0..10 {
            let m = xs.iter().sum::<f64>() / n as f64;
            let gv = spec.dv_scalar(m);
            for x in xs.iter_mut() {
                *x -= (gv + spec.kappa * *x) * 0.05;
            }
        }
        let last = batch.states.last().unwrap();
        for (a, b) in last.iter().zip(&xs) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn ou_stationary_variance() {
        // V = 0, κ = 1: independent OU particles with stationary variance 1.
        let mut cfg = toy_cfg(PotentialSpec::quadratic(1.0, 1).unwrap(), 4096);
        cfg.horizon = 10.0;
        let batch = simulate_particles(cfg).unwrap();
        let v = batch.terminal_variance[0];
        // 3 MC standard errors of a variance estimate from 4096 draws.
        let se = 3.0 * (2.0f64 / 4095.0).sqrt();
        assert!((v - 1.0).abs() < se, "variance {v} outside 1 ± {se}");
    }

    #[test]
    fn centered_coordinates_variance_deficit() {
        // Centered particles X_i − X̄ are OU with rate κ and stationary
        // per-coordinate variance (1 − 1/N)/κ.
        let n = 64;
        let kappa = 1.0;
        let mut cfg = toy_cfg(PotentialSpec::quadratic(kappa, 1).unwrap(), n);
        cfg.horizon = 60.0;
        cfg.dt = 5e-3;
        let steps = (cfg.horizon / cfg.dt).round() as usize;
        let mut sim = ParticleSim::new(cfg).unwrap();
        let mut acc = 0.0f64;
        let mut frames = 0usize;
        for k in 1..=steps {
            sim.step().unwrap();
            if k % 20 == 0 && sim.t() > 10.0 {
                let m = sim.barycenter()[0];
                let var = (0..n)
                    .map(|c| (sim.state()[(0, c)] - m).powi(2))
                    .sum::<f64>()
                    / n as f64;
                acc += var;
                frames += 1;
            }
        }
        let mean_var = acc / frames as f64;
        let target = (1.0 - 1.0 / n as f64) / kappa;
        // ~3 standard errors for the time-averaged estimate (correlation time
        // 1/κ across the ~50 effective independent frames of 64 particles).
        let tol = 3.0 * target * (2.0 / (n as f64 - 1.0) / 50.0f64).sqrt();
        assert!(
            (mean_var - target).abs() < tol,
            "centered variance {mean_var} vs {target} ± {tol}"
        );
    }

    #[test]
    fn shared_increments_reproduce_barycenter() {
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let n = 16;
        let mut cfg = toy_cfg(spec.clone(), n);
        cfg.init = Init::Points((0..n).map(|i| point(0.1 * i as f64 - 0.8)).collect());
        cfg.dt = 1e-2;
        let mut full = ParticleSim::new(cfg.clone()).unwrap();
        let mut reduced = BarycenterSim::new(SimConfig {
            init: Init::Points(vec![full.barycenter()]),
            ..cfg
        })
        .unwrap();
        for _ in 0..200 {
            full.step().unwrap();
            let z = full.last_increment_sum() / (n as f64).sqrt();
            reduced.step_with_increments(&z).unwrap();
            let gap = (full.barycenter() - reduced.state()).norm();
            assert!(gap <= 1e-12, "coupling gap {gap}");
        }
    }

    #[test]
    fn noiseless_barycenter_matches_ode() {
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let dt = 1e-3;
        let mut cfg = toy_cfg(spec.clone(), 64);
        cfg.noise = false;
        cfg.init = Init::Points(vec![point(0.3)]);
        cfg.dt = dt;
        cfg.horizon = 5.0;
        let batch = simulate_barycenter(cfg).unwrap();
        // High-accuracy reference: RK4 with a much smaller step.
        let f = |x: f64| -spec.dv_kappa_scalar(x);
        let mut x = 0.3f64;
        let hs = dt / 10.0;
        let mut refs = vec![(0.0, x)];
        for k in 1..=(5.0 / hs).round() as usize {
            let k1 = f(x);
            let k2 = f(x + 0.5 * hs * k1);
            let k3 = f(x + 0.5 * hs * k2);
            let k4 = f(x + hs * k3);
            x += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            refs.push((k as f64 * hs, x));
        }
        for (t, s) in batch.times.iter().zip(&batch.states) {
            let idx = (t / hs).round() as usize;
            let err = (s[0] - refs[idx].1).abs();
            assert!(err < 5.0 * dt, "ODE gap {err} at t = {t}");
        }
    }

    #[test]
    fn quartic_left_well_is_metastable() {
        // From X̄₀ = −1 at N = 64 the reduced diffusion stays in the left well
        // for horizon 10 in at least 99 of 100 replicas.
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let mut stayed = 0;
        for replica in 0..100u64 {
            let cfg = SimConfig {
                spec: spec.clone(),
                model: Model::Toy,
                n: 64,
                dt: 1e-2,
                horizon: 10.0,
                seed: 1234,
                replica_id: replica,
                init: Init::Points(vec![point(-1.0)]),
                noise: true,
                thin_every: Some(usize::MAX),
            };
            let mut sim = BarycenterSim::new(cfg).unwrap();
            let mut ok = true;
            for _ in 0..1000 {
                sim.step().unwrap();
                if sim.state()[0] > 0.0 {
                    ok = false;
                    break;
                }
            }
            if ok {
                stayed += 1;
            }
        }
        assert!(stayed >= 99, "stayed in well only {stayed}/100 times");
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        // Gradient ascent on an inverted potential diverges; the error names
        // the offending step.
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let cfg = SimConfig {
            spec,
            model: Model::Toy,
            n: 1,
            dt: 10.0, // wildly unstable explicit step
            horizon: 1e4,
            seed: 0,
            replica_id: 0,
            init: Init::Points(vec![point(2.0)]),
            noise: false,
            thin_every: None,
        };
        let err = simulate_particles(cfg).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("diverged") && msg.contains("step"), "{msg}");
    }

    #[test]
    fn ou_cloud_empirical_w2_shrinks_with_n() {
        // Stationary OU clouds: the worst empirical 1-D W2 to the stationary
        // law over t ≤ 3 ln N decreases with N (median over 20 seeds).
        let kappa = 1.0;
        let spec = PotentialSpec::quadratic(kappa, 1).unwrap();
        let gamma0 = GaussianSpec::new(DVector::zeros(1), 1.0 / kappa).unwrap();
        let mut medians = Vec::new();
        for &n in &[64usize, 256, 1024] {
            let mut worsts = Vec::new();
            for seed in 0..20u64 {
                let cfg = SimConfig {
                    spec: spec.clone(),
                    model: Model::Toy,
                    n,
                    dt: 2e-2,
                    horizon: 3.0 * (n as f64).ln(),
                    seed: 777,
                    replica_id: seed,
                    init: Init::Gaussian { mean: DVector::zeros(1), s2: 1.0 / kappa },
                    noise: true,
                    thin_every: None,
                };
                let steps = (cfg.horizon / cfg.dt).round() as usize;
                let thin = cfg.thin();
                let mut sim = ParticleSim::new(cfg).unwrap();
                let mut worst = 0.0f64;
                for k in 1..=steps {
                    sim.step().unwrap();
                    if k % thin == 0 {
                        let xs: Vec<f64> = (0..n).map(|c| sim.state()[(0, c)]).collect();
                        let d = measures::w2_samples_gaussian_1d(&xs, &gamma0).unwrap();
                        worst = worst.max(d);
                    }
                }
                worsts.push(worst);
            }
            worsts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(0.5 * (worsts[9] + worsts[10]));
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians not decreasing: {medians:?}"
        );
    }

    #[test]
    fn pde_rejects_unstable_steps() {
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let rho0 = measures::gaussian_density_1d(
            &GaussianSpec::new(point(-0.5), 0.25).unwrap(),
            501,
        )
        .unwrap();
        let err = solve_mckean_vlasov_1d(&spec, &rho0, 0.1, 1.0, &PdeOptions::default());
        match err {
            Err(Error::Config(msg)) => assert!(msg.contains("use dt <="), "{msg}"),
            other => panic!("expected a configuration error, got {other:?}"),
        }
    }

    #[test]
    fn pde_mean_follows_reduced_ode() {
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let rho0 = measures::gaussian_density_1d(
            &GaussianSpec::new(point(-0.5), 0.25).unwrap(),
            2001,
        )
        .unwrap();
        let dt = 1e-4;
        let sol = solve_mckean_vlasov_1d(&spec, &rho0, dt, 3.0, &PdeOptions::default()).unwrap();
        // Reference mean flow ṁ = −V_κ'(m) by RK4.
        let f = |x: f64| -spec.dv_kappa_scalar(x);
        let hs = 1e-4f64;
        let mut x = sol.frames[0].mean;
        let mut path = vec![x];
        for _ in 0..(3.0 / hs).round() as usize {
            let k1 = f(x);
            let k2 = f(x + 0.5 * hs * k1);
            let k3 = f(x + 0.5 * hs * k2);
            let k4 = f(x + hs * k3);
            x += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            path.push(x);
        }
        let mut sup = 0.0f64;
        for fr in &sol.frames {
            let idx = (fr.t / hs).round() as usize;
            sup = sup.max((fr.mean - path[idx]).abs());
        }
        assert!(sup <= 5.0 * dt, "mean-flow sup error {sup} > {}", 5.0 * dt);
        // Mass conservation and free-energy dissipation along the way.
        assert!(sol.mass_drift < 1e-12, "mass drift {}", sol.mass_drift);
        for w in sol.frames.windows(2) {
            assert!(
                w[1].free_energy <= w[0].free_energy + 1e-8,
                "free energy increased: {} -> {}",
                w[0].free_energy,
                w[1].free_energy
            );
        }
    }

    #[test]
    fn pde_gaussian_variance_law() {
        // Pure OU flow: N(m₀, s₀²) stays Gaussian with
        // s_t² = e^{−2κt}s₀² + κ⁻¹(1 − e^{−2κt}).
        let kappa = 1.0;
        let spec = PotentialSpec::quadratic(kappa, 1).unwrap();
        let rho0 = measures::gaussian_density_1d(
            &GaussianSpec::new(point(0.8), 0.25).unwrap(),
            2001,
        )
        .unwrap();
        let dt = 2e-4;
        let sol = solve_mckean_vlasov_1d(&spec, &rho0, dt, 2.0, &PdeOptions::default()).unwrap();
        for fr in &sol.frames {
            let s2 = (-2.0 * kappa * fr.t).exp() * 0.25
                + (1.0 - (-2.0 * kappa * fr.t).exp()) / kappa;
            let m = 0.8 * (-kappa * fr.t).exp();
            assert!(
                (fr.variance - s2).abs() < 20.0 * sol.h * sol.h + 5.0 * dt,
                "variance {} vs {s2} at t = {}",
                fr.variance,
                fr.t
            );
            assert!((fr.mean - m).abs() < 5.0 * dt + 10.0 * sol.h * sol.h, "mean at t = {}", fr.t);
        }
    }

    #[test]
    fn pde_curie_weiss_converges_to_gibbs() {
        // σ² = 1, κ₀ = 1: supercritical temperature, unique stationary state
        // ρ* ∝ e^{−V}.
        let spec = PotentialSpec::curie_weiss(1.0, 1.0).unwrap();
        let rho0 = measures::gaussian_density_1d(
            &GaussianSpec::new(point(0.6), 0.5).unwrap(),
            2001,
        )
        .unwrap();
        let opts = PdeOptions { n_cells: 400, store_every: 5.0 };
        let dt = 1e-4;
        let sol = solve_mckean_vlasov_1d(&spec, &rho0, dt, 50.0, &opts).unwrap();
        let rho_star = Density1D::from_fn(-sol.box_half, sol.box_half, 4001, |x| {
            (-spec.v_scalar(x)).exp()
        })
        .unwrap();
        let last = sol.frames.last().unwrap();
        let d = measures::w2_density(&last.density, &rho_star);
        assert!(d <= 1e-3, "W2 to the stationary state: {d}");
    }
}
