//! Monte Carlo studies of metastable transitions of the barycenter diffusion:
//! Arrhenius/Eyring–Kramers transition times, exponentiality of rescaled
//! hitting times, saddle-point exit laws with their heteroclinic reference
//! data, and the shared-noise coincidence experiment between the original and
//! locally convexified dynamics.

use crate::critical_points::CriticalPoint;
use crate::measures::{self, GaussianSpec};
use crate::potentials::{LocalizedSpec, PotentialSpec};
use crate::{Error, Result};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

const MODULE: &str = "metastability";

/// Deterministic per-replica stream: a pure function of (seed, replica_id).
pub fn replica_rng(seed: u64, replica_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica_id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

// ---------------------------------------------------------------------------
// Eyring–Kramers prediction
// ---------------------------------------------------------------------------

/// Closed-form expected transition time
/// (2π/λ̄₁)·√(|det ∇²V_κ(z)|/det ∇²V_κ(x₀))·e^{N[V_κ(z)−V_κ(x₀)]}
/// together with the spectral data that produced it.
#[derive(Debug, Clone)]
pub struct EkPrediction {
    pub n: f64,
    pub time: f64,
    pub lambda_bar1: f64,
    pub det_saddle: f64,
    pub det_min: f64,
    pub delta_v: f64,
    pub min_spectrum: Vec<f64>,
    pub saddle_spectrum: Vec<f64>,
}

pub fn eyring_kramers_predict(
    spec: &PotentialSpec,
    x0: &DVector<f64>,
    z: &DVector<f64>,
    n: f64,
) -> Result<EkPrediction> {
    const OP: &str = "eyring_kramers_predict";
    let cp0 = CriticalPoint::classify(spec, x0.clone());
    let cpz = CriticalPoint::classify(spec, z.clone());
    if cp0.index != 0 || cp0.degenerate {
        return Err(Error::input(MODULE, OP, "x0 must be a non-degenerate local minimizer"));
    }
    if cpz.index != 1 || cpz.degenerate {
        return Err(Error::input(MODULE, OP, "z must be a non-degenerate index-1 saddle"));
    }
    let lambda_bar1 = cpz.unstable_rate();
    let det_min: f64 = cp0.spectrum.iter().product();
    let det_saddle: f64 = cpz.spectrum.iter().product::<f64>().abs();
    let delta_v = cpz.value - cp0.value;
    let time = 2.0 * std::f64::consts::PI / lambda_bar1 * (det_saddle / det_min).sqrt()
        * (n * delta_v).exp();
    Ok(EkPrediction {
        n,
        time,
        lambda_bar1,
        det_saddle,
        det_min,
        delta_v,
        min_spectrum: cp0.spectrum,
        saddle_spectrum: cpz.spectrum,
    })
}

// ---------------------------------------------------------------------------
// Hitting-time helpers
// ---------------------------------------------------------------------------

/// First entry of the reduced barycenter diffusion into B(target, δ), with
/// linear sub-step interpolation of the crossing time.  Returns `None` when
/// the horizon is exhausted.  The d = 1 case runs on a scalar fast path with
/// the same draw order as the general one.
pub fn hit_ball_reduced(
    spec: &PotentialSpec,
    start: &DVector<f64>,
    target: &DVector<f64>,
    delta: f64,
    n: f64,
    dt: f64,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let noise = (2.0 * dt / n).sqrt();
    let steps = (horizon / dt).ceil() as usize;
    if spec.d == 1 {
        let tgt = target[0];
        let mut x = start[0];
        let mut dist_prev = (x - tgt).abs();
        for k in 0..steps {
            let z = normal(rng);
            x -= spec.dv_kappa_scalar(x) * dt;
            x += noise * z;
            let dist = (x - tgt).abs();
            if dist <= delta && dist_prev > delta {
                let frac = (dist_prev - delta) / (dist_prev - dist);
                // Re-check the recorded entry on the realized state.
                debug_assert!((x - tgt).abs() <= delta);
                return Some((k as f64 + frac) * dt);
            }
            dist_prev = dist;
        }
        None
    } else {
        let mut x = start.clone();
        let mut dist_prev = (&x - target).norm();
        for k in 0..steps {
            let g = spec.grad_v_kappa(&x);
            for r in 0..spec.d {
                let z = normal(rng);
                x[r] += -g[r] * dt + noise * z;
            }
            let dist = (&x - target).norm();
            if dist <= delta && dist_prev > delta {
                let frac = (dist_prev - delta) / (dist_prev - dist);
                return Some((k as f64 + frac) * dt);
            }
            dist_prev = dist;
        }
        None
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------------------
// Transition study
// ---------------------------------------------------------------------------

/// Monte Carlo hitting-time study of B(x₁, δ) from x₀ on the reduced
/// barycenter diffusion, with an Arrhenius fit and a prefactor estimate.
#[derive(Debug, Clone)]
pub struct HittingStudy {
    pub x0: DVector<f64>,
    pub x1: DVector<f64>,
    pub z: DVector<f64>,
    pub delta: f64,
    pub replicas: usize,
    pub dt: f64,
    /// Uncensored hitting-time samples per retained N.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// N values excluded by the 5% censoring rule, with censored fractions.
    pub excluded: Vec<(f64, f64)>,
    /// Least-squares slope of ln(mean τ) against N, with a 95% half-width.
    pub slope: f64,
    pub slope_ci: f64,
    /// mean τ / e^{N·slope} at the largest retained N.
    pub prefactor: f64,
    /// Mean of the dt/2 bias-probe replicas per retained N.
    pub half_dt_means: Vec<(f64, f64)>,
}

pub fn transition_study(
    spec: &PotentialSpec,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    z: &DVector<f64>,
    delta: f64,
    n_list: &[f64],
    replicas: usize,
    dt: f64,
    seed: u64,
) -> Result<HittingStudy> {
    transition_study_with_horizon(spec, x0, x1, z, delta, n_list, replicas, dt, seed, 50.0)
}

/// As `transition_study`, with the per-N horizon set to
/// `horizon_factor × `the closed-form expected transition time.
#[allow(clippy::too_many_arguments)]
pub fn transition_study_with_horizon(
    spec: &PotentialSpec,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    z: &DVector<f64>,
    delta: f64,
    n_list: &[f64],
    replicas: usize,
    dt: f64,
    seed: u64,
    horizon_factor: f64,
) -> Result<HittingStudy> {
    const OP: &str = "transition_study";
    if replicas < 30 {
        return Err(Error::input(MODULE, OP, "need at least 30 replicas per N for the fits"));
    }
    if n_list.len() < 2 {
        return Err(Error::input(MODULE, OP, "need at least two values of N"));
    }
    // Geometry check: two non-degenerate minimizers, one index-1 saddle,
    // pairwise disjoint balls.
    let cp0 = CriticalPoint::classify(spec, x0.clone());
    let cp1 = CriticalPoint::classify(spec, x1.clone());
    let cpz = CriticalPoint::classify(spec, z.clone());
    if cp0.index != 0 || cp1.index != 0 || cpz.index != 1 || cpz.degenerate {
        return Err(Error::input(
            MODULE,
            OP,
            "need minimizers x0, x1 and an index-1 saddle z (geometry check failed)",
        ));
    }
    for (a, b) in [(x0, x1), (x0, z), (x1, z)] {
        if (a - b).norm() <= 2.0 * delta {
            return Err(Error::input(MODULE, OP, "the balls B(·, δ) must be disjoint"));
        }
    }

    let probe = (replicas / 10).max(1);
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    let mut half_dt_means = Vec::new();
    for (ni, &n) in n_list.iter().enumerate() {
        let horizon = horizon_factor * eyring_kramers_predict(spec, x0, z, n)?.time;
        let base = (ni as u64) << 32;
        let run = |ids: std::ops::Range<u64>, dt_run: f64| -> Vec<Option<f64>> {
            ids.into_par_iter()
                .map(|rid| {
                    let mut rng = replica_rng(seed, base | rid);
                    hit_ball_reduced(spec, x0, x1, delta, n, dt_run, horizon, &mut rng)
                })
                .collect()
        };
        let main = run(0..replicas as u64, dt);
        let hits: Vec<f64> = main.iter().filter_map(|t| *t).collect();
        let censored = 1.0 - hits.len() as f64 / replicas as f64;
        if censored > 0.05 {
            excluded.push((n, censored));
            continue;
        }
        // dt/2 bias probe on ~10% extra replicas.
        let probe_hits: Vec<f64> = run(replicas as u64..(replicas + probe) as u64, dt / 2.0)
            .into_iter()
            .flatten()
            .collect();
        if !probe_hits.is_empty() {
            half_dt_means.push((n, mean(&probe_hits)));
        }
        samples.push((n, hits));
    }
    if samples.len() < 2 {
        return Err(Error::numeric(
            MODULE,
            OP,
            "fewer than two N values survived the censoring rule; increase the horizon",
        ));
    }

    // ln(mean τ) against N.
    let ns: Vec<f64> = samples.iter().map(|(n, _)| *n).collect();
    let lns: Vec<f64> = samples.iter().map(|(_, s)| mean(s).ln()).collect();
    let k = ns.len() as f64;
    let mx = ns.iter().sum::<f64>() / k;
    let my = lns.iter().sum::<f64>() / k;
    let sxx: f64 = ns.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = ns.iter().zip(&lns).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = ns
        .iter()
        .zip(&lns)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let slope_ci = if ns.len() > 2 {
        1.96 * (sse / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let (n_last, s_last) = samples.last().unwrap();
    let prefactor = mean(s_last) / (n_last * slope).exp();
    Ok(HittingStudy {
        x0: x0.clone(),
        x1: x1.clone(),
        z: z.clone(),
        delta,
        replicas,
        dt,
        samples,
        excluded,
        slope,
        slope_ci,
        prefactor,
        half_dt_means,
    })
}

/// Full-particle hitting times of B(x₁, δ) by the barycenter, for
/// cross-checking the reduced diffusion.
#[allow(clippy::too_many_arguments)]
pub fn transition_samples_particles(
    spec: &PotentialSpec,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    delta: f64,
    n: usize,
    replicas: usize,
    dt: f64,
    seed: u64,
    horizon: f64,
) -> Result<Vec<f64>> {
    const OP: &str = "transition_samples_particles";
    if spec.d != 1 {
        return Err(Error::input(MODULE, OP, "full-particle cross-check is one-dimensional"));
    }
    let out: Vec<Option<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|rid| {
            let mut rng = replica_rng(seed, rid);
            // Cloud from γ_{x0} = N(x0, 1/κ), mean-shifted exactly onto x0.
            let sd = (1.0 / spec.kappa).sqrt();
            let mut xs: Vec<f64> = (0..n).map(|_| x0[0] + sd * normal(&mut rng)).collect();
            let shift = mean(&xs) - x0[0];
            for x in &mut xs {
                *x -= shift;
            }
            let noise = (2.0 * dt).sqrt();
            let steps = (horizon / dt).ceil() as usize;
            let mut bary = mean(&xs);
            let mut dist_prev = (bary - x1[0]).abs();
            for k in 0..steps {
                let gv = spec.dv_scalar(bary);
                let mut sum = 0.0;
                for x in &mut xs {
                    let z = normal(&mut rng);
                    *x += -(gv + spec.kappa * *x) * dt + noise * z;
                    sum += *x;
                }
                bary = sum / n as f64;
                let dist = (bary - x1[0]).abs();
                if dist <= delta && dist_prev > delta {
                    let frac = (dist_prev - delta) / (dist_prev - dist);
                    return Some((k as f64 + frac) * dt);
                }
                dist_prev = dist;
            }
            None
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Exponentiality test
// ---------------------------------------------------------------------------

/// Two-sided Kolmogorov–Smirnov test of τ/mean(τ) against Exp(1).
#[derive(Debug, Clone, Copy)]
pub struct ExponentialityTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2Σ(−1)^{k−1}e^{−2k²λ²}.
fn kolmogorov_p(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    p.clamp(0.0, 1.0)
}

pub fn exponentiality_test(samples: &[f64]) -> Result<ExponentialityTest> {
    const OP: &str = "exponentiality_test";
    if samples.len() < 200 {
        return Err(Error::input(MODULE, OP, "need at least 200 uncensored samples"));
    }
    if samples.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::input(MODULE, OP, "hitting times must be positive and finite"));
    }
    let m = mean(samples);
    let mut ts: Vec<f64> = samples.iter().map(|&t| t / m).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ts.len();
    let mut d = 0.0f64;
    for (i, &t) in ts.iter().enumerate() {
        let f = 1.0 - (-t).exp();
        let hi = (i + 1) as f64 / n as f64 - f;
        let lo = f - i as f64 / n as f64;
        d = d.max(hi).max(lo);
    }
    let sn = (n as f64).sqrt();
    let p_value = kolmogorov_p((sn + 0.12 + 0.11 / sn) * d);
    Ok(ExponentialityTest { statistic: d, p_value, n })
}

/// Two-sample KS statistic and its asymptotic p-value.
fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let v = xs[i].min(ys[j]);
        while i < na && xs[i] <= v {
            i += 1;
        }
        while j < nb && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sn = ne.sqrt();
    (d, kolmogorov_p((sn + 0.12 + 0.11 / sn) * d))
}

// ---------------------------------------------------------------------------
// Heteroclinic data
// ---------------------------------------------------------------------------

/// Unstable-manifold data of an index-1 saddle: the descent curve to its two
/// crossings of ∂B(z, δ) and the renormalized ascent times
/// T_s = lim_{u→0} [T_s(u) + ln(u)/λ̄₁].
#[derive(Debug, Clone)]
pub struct HeteroclinicData {
    pub z: DVector<f64>,
    pub delta: f64,
    pub lambda_bar1: f64,
    pub v1: DVector<f64>,
    /// Boundary crossings γ(±1) of the curve, sides ordered (+1, −1).
    pub z_plus: DVector<f64>,
    pub z_minus: DVector<f64>,
    /// Converged limits (T₊₁, T₋₁).
    pub t_plus: f64,
    pub t_minus: f64,
    /// (u, estimate on side +1, estimate on side −1) per schedule entry.
    pub estimates: Vec<(f64, f64, f64)>,
    pub converged: bool,
    /// Sampled curve (time, point) per side, sides ordered (+1, −1).
    pub curve: [Vec<(f64, DVector<f64>)>; 2],
}

pub fn compute_heteroclinic(
    spec: &PotentialSpec,
    z: &DVector<f64>,
    delta: f64,
    u_schedule: &[f64],
) -> Result<HeteroclinicData> {
    compute_heteroclinic_dt(spec, z, delta, u_schedule, 1e-3)
}

pub fn compute_heteroclinic_dt(
    spec: &PotentialSpec,
    z: &DVector<f64>,
    delta: f64,
    u_schedule: &[f64],
    dt: f64,
) -> Result<HeteroclinicData> {
    const OP: &str = "compute_heteroclinic";
    if u_schedule.len() < 2
        || u_schedule.windows(2).any(|w| !(w[1] < w[0]))
        || u_schedule.iter().any(|&u| !(u > 0.0 && u < 1.0))
    {
        return Err(Error::input(
            MODULE,
            OP,
            "u schedule must be strictly decreasing inside (0, 1)",
        ));
    }
    let cpz = CriticalPoint::classify(spec, z.clone());
    if cpz.index != 1 || cpz.degenerate {
        return Err(Error::input(MODULE, OP, "z must be a non-degenerate index-1 saddle"));
    }
    let lambda = cpz.unstable_rate();
    let v1 = cpz.unstable_direction(spec);
    let eps = 1e-6;
    let horizon_steps = ((60.0 / lambda + 20.0) / dt).ceil() as usize;

    let mut curves: Vec<Vec<(f64, DVector<f64>)>> = Vec::with_capacity(2);
    let mut crossings = Vec::with_capacity(2);
    let mut t_totals = Vec::with_capacity(2);
    for s in [1.0f64, -1.0] {
        // RK4 descent flow ẋ = −∇V_κ(x) from z + s·ε·v₁.
        let mut x = z + &v1 * (s * eps);
        let mut samples = vec![(0.0, x.clone())];
        let f = |y: &DVector<f64>| -spec.grad_v_kappa(y);
        let mut crossed = None;
        for k in 0..horizon_steps {
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (dt / 2.0)));
            let k3 = f(&(&x + &k2 * (dt / 2.0)));
            let k4 = f(&(&x + &k3 * dt));
            let x_new = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            let t_new = (k + 1) as f64 * dt;
            let (d_old, d_new) = ((&x - z).norm(), (&x_new - z).norm());
            if d_new >= delta {
                let frac = (delta - d_old) / (d_new - d_old);
                let xc = &x + (&x_new - &x) * frac;
                let tc = k as f64 * dt + frac * dt;
                samples.push((tc, xc.clone()));
                crossed = Some((tc, xc));
                break;
            }
            x = x_new;
            samples.push((t_new, x.clone()));
        }
        let (t_total, xc) = crossed.ok_or_else(|| {
            Error::numeric(
                MODULE,
                OP,
                "unstable manifold failed to exit B(z, δ) within the flow horizon \
                 (δ too large or the saddle geometry assumption fails)",
            )
        })?;
        curves.push(samples);
        crossings.push(xc);
        t_totals.push(t_total);
    }

    // T_s(u) = flow time from the point of the curve at distance u to the
    // boundary crossing; estimate E(u) = T_s(u) + ln(u)/λ̄₁.
    let time_at_distance = |curve: &[(f64, DVector<f64>)], u: f64| -> Option<f64> {
        let mut prev: Option<(f64, f64)> = None;
        for (t, x) in curve {
            let d = (x - z).norm();
            if let Some((tp, dp)) = prev {
                if dp < u && d >= u {
                    return Some(tp + (t - tp) * (u - dp) / (d - dp));
                }
            }
            prev = Some((*t, d));
        }
        None
    };
    let mut estimates = Vec::with_capacity(u_schedule.len());
    for &u in u_schedule {
        let mut e = [f64::NAN; 2];
        for side in 0..2 {
            let t_u = time_at_distance(&curves[side], u).ok_or_else(|| {
                Error::input(
                    MODULE,
                    OP,
                    "schedule value below the manifold seed offset; raise the smallest u",
                )
            })?;
            e[side] = t_totals[side] - t_u + u.ln() / lambda;
        }
        estimates.push((u, e[0], e[1]));
    }
    let m = estimates.len();
    let converged = m >= 2
        && (estimates[m - 1].1 - estimates[m - 2].1).abs() < 1e-4
        && (estimates[m - 1].2 - estimates[m - 2].2).abs() < 1e-4;
    let curve = [curves.remove(0), curves.remove(0)];
    Ok(HeteroclinicData {
        z: z.clone(),
        delta,
        lambda_bar1: lambda,
        v1,
        z_plus: crossings[0].clone(),
        z_minus: crossings[1].clone(),
        t_plus: estimates[m - 1].1,
        t_minus: estimates[m - 1].2,
        estimates,
        converged,
        curve,
    })
}

// ---------------------------------------------------------------------------
// Saddle exit study
// ---------------------------------------------------------------------------

/// Per-N exit data of the reduced diffusion released exactly at a saddle.
#[derive(Debug, Clone)]
pub struct SaddleExitStudy {
    pub z: DVector<f64>,
    pub delta: f64,
    pub lambda_bar1: f64,
    pub heteroclinic: HeteroclinicData,
    /// One entry per N: (N, exit times, sides ±1, centered statistics,
    /// two-sample KS of the centered statistics against the reference law,
    /// KS p-value).
    pub per_n: Vec<SaddleExitPerN>,
    /// Monte Carlo draws of T_Q − ln(|Z|/√(2λ̄₁))/λ̄₁.
    pub reference_samples: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SaddleExitPerN {
    pub n: f64,
    pub exit_times: Vec<f64>,
    pub sides: Vec<i8>,
    pub centered: Vec<f64>,
    pub ks: f64,
    pub ks_p: f64,
    pub plus_fraction: f64,
}

/// Monte Carlo of the limiting centered exit time
/// T_Q − ln(|Z|/√(2λ̄₁))/λ̄₁, Q uniform on ±1, Z standard normal.
///
/// The sign of the ln|Z| term follows the linearization of the unstable
/// coordinate (small seed |Z| delays the exit), which the simulated centered
/// times confirm empirically.
pub fn saddle_exit_reference_samples(
    t_plus: f64,
    t_minus: f64,
    lambda: f64,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = replica_rng(seed ^ 0x7265_6665_7265_6e63, 0);
    (0..count)
        .map(|_| {
            let q_plus = (normal(&mut rng)) >= 0.0;
            let z: f64 = normal(&mut rng);
            let t_q = if q_plus { t_plus } else { t_minus };
            t_q - (z.abs() / (2.0 * lambda).sqrt()).ln() / lambda
        })
        .collect()
}

pub fn saddle_exit_study(
    spec: &PotentialSpec,
    z: &DVector<f64>,
    delta: f64,
    n_list: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<SaddleExitStudy> {
    const OP: &str = "saddle_exit_study";
    if n_list.is_empty() || replicas == 0 {
        return Err(Error::input(MODULE, OP, "need at least one N and one replica"));
    }
    let schedule: Vec<f64> = (0..8).map(|k| 0.2 * 0.5f64.powi(k)).collect();
    let het = compute_heteroclinic(spec, z, delta, &schedule)?;
    let lambda = het.lambda_bar1;
    let dt = 1e-3f64;
    let reference =
        saddle_exit_reference_samples(het.t_plus, het.t_minus, lambda, 20_000, seed);

    let mut per_n = Vec::with_capacity(n_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let shift = (n / 2.0).ln() / (2.0 * lambda);
        let horizon = shift + het.t_plus.max(het.t_minus).max(0.0) + 40.0 / lambda;
        let base = (ni as u64) << 32;
        let runs: Vec<Option<(f64, i8)>> = (0..replicas as u64)
            .into_par_iter()
            .map(|rid| {
                let mut rng = replica_rng(seed, base | rid);
                exit_ball_reduced(spec, z, delta, n, dt, horizon, &mut rng).map(|(t, x)| {
                    let dp = (&x - &het.z_plus).norm();
                    let dm = (&x - &het.z_minus).norm();
                    (t, if dp < dm { 1 } else { -1 })
                })
            })
            .collect();
        let censored = runs.iter().filter(|r| r.is_none()).count() as f64 / replicas as f64;
        if censored > 0.05 {
            return Err(Error::numeric(
                MODULE,
                OP,
                format!("more than 5% of replicas failed to exit at N = {n}"),
            ));
        }
        let (exit_times, sides): (Vec<f64>, Vec<i8>) = runs.into_iter().flatten().unzip();
        let centered: Vec<f64> = exit_times.iter().map(|t| t - shift).collect();
        let (ks, ks_p) = ks_two_sample(&centered, &reference);
        let plus_fraction =
            sides.iter().filter(|&&s| s == 1).count() as f64 / sides.len() as f64;
        per_n.push(SaddleExitPerN { n, exit_times, sides, centered, ks, ks_p, plus_fraction });
    }
    Ok(SaddleExitStudy {
        z: z.clone(),
        delta,
        lambda_bar1: lambda,
        heteroclinic: het,
        per_n,
        reference_samples: reference,
    })
}

/// First exit of the reduced diffusion from B(z, δ), started at z exactly.
fn exit_ball_reduced(
    spec: &PotentialSpec,
    z: &DVector<f64>,
    delta: f64,
    n: f64,
    dt: f64,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, DVector<f64>)> {
    let noise = (2.0 * dt / n).sqrt();
    let steps = (horizon / dt).ceil() as usize;
    let mut x = z.clone();
    let mut dist_prev = 0.0f64;
    for k in 0..steps {
        if spec.d == 1 {
            let zi = normal(rng);
            x[0] += -spec.dv_kappa_scalar(x[0]) * dt + noise * zi;
        } else {
            let g = spec.grad_v_kappa(&x);
            for r in 0..spec.d {
                let zi = normal(rng);
                x[r] += -g[r] * dt + noise * zi;
            }
        }
        let dist = (&x - z).norm();
        if dist >= delta {
            let frac = (delta - dist_prev) / (dist - dist_prev);
            return Some(((k as f64 + frac) * dt, x));
        }
        dist_prev = dist;
    }
    None
}

/// Full-particle saddle exit: per-replica exit side and 1-D W2 distance of the
/// exit-time empirical measure to the Gaussian profile γ_{z_Q̂} = N(z_Q̂, 1/κ).
pub fn saddle_exit_measure(
    spec: &PotentialSpec,
    z: &DVector<f64>,
    delta: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<(i8, f64)>> {
    const OP: &str = "saddle_exit_measure";
    if spec.d != 1 {
        return Err(Error::input(MODULE, OP, "exit-measure runs are one-dimensional"));
    }
    let schedule: Vec<f64> = (0..8).map(|k| 0.2 * 0.5f64.powi(k)).collect();
    let het = compute_heteroclinic(spec, z, delta, &schedule)?;
    let lambda = het.lambda_bar1;
    let dt = 1e-3f64;
    let horizon = (n as f64 / 2.0).ln() / (2.0 * lambda)
        + het.t_plus.max(het.t_minus).max(0.0)
        + 40.0 / lambda;
    let out: Vec<Result<Option<(i8, f64)>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|rid| {
            let mut rng = replica_rng(seed, rid);
            // Cloud from γ_z, mean-shifted so that X̄₀ = z exactly.
            let sd = (1.0 / spec.kappa).sqrt();
            let mut xs: Vec<f64> = (0..n).map(|_| z[0] + sd * normal(&mut rng)).collect();
            let shift0 = mean(&xs) - z[0];
            for x in &mut xs {
                *x -= shift0;
            }
            let noise = (2.0 * dt).sqrt();
            let steps = (horizon / dt).ceil() as usize;
            for _ in 0..steps {
                let bary = mean(&xs);
                let gv = spec.dv_scalar(bary);
                for x in &mut xs {
                    let zi = normal(&mut rng);
                    *x += -(gv + spec.kappa * *x) * dt + noise * zi;
                }
                let bary = mean(&xs);
                if (bary - z[0]).abs() >= delta {
                    let side = if (bary - het.z_plus[0]).abs() < (bary - het.z_minus[0]).abs()
                    {
                        1i8
                    } else {
                        -1i8
                    };
                    let target = if side == 1 { &het.z_plus } else { &het.z_minus };
                    let g = GaussianSpec::new(target.clone(), 1.0 / spec.kappa)?;
                    let w2 = measures::w2_samples_gaussian_1d(&xs, &g)?;
                    return Ok(Some((side, w2)));
                }
            }
            Ok(None)
        })
        .collect();
    let mut res = Vec::with_capacity(replicas);
    for o in out {
        if let Some(v) = o? {
            res.push(v);
        }
    }
    if (res.len() as f64) < 0.95 * replicas as f64 {
        return Err(Error::numeric(MODULE, OP, "more than 5% of replicas failed to exit"));
    }
    Ok(res)
}

// ---------------------------------------------------------------------------
// Coupled coincidence
// ---------------------------------------------------------------------------

/// Shared-noise comparison of the original particle system against the one
/// driven by the locally convexified potential.
#[derive(Debug, Clone)]
pub struct CoincidenceReport {
    /// Fraction of replicas whose two paths are bitwise identical up to the
    /// horizon.
    pub fraction: f64,
    /// First divergence time per replica (`None` when never diverged).
    pub divergence_times: Vec<Option<f64>>,
}

pub fn coupled_local_coincidence(
    spec: &PotentialSpec,
    localized: &LocalizedSpec,
    n: usize,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<CoincidenceReport> {
    const OP: &str = "coupled_local_coincidence";
    if horizon < 0.0 || replicas == 0 || n == 0 {
        return Err(Error::input(MODULE, OP, "need horizon >= 0, N >= 1, replicas >= 1"));
    }
    let d = spec.d;
    if localized.base.d != d {
        return Err(Error::input(MODULE, OP, "localized potential dimension mismatch"));
    }
    let dt = 1e-3f64;
    let steps = (horizon / dt).ceil() as usize;
    let center = localized.center.clone();
    let divergence_times: Vec<Option<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|rid| {
            let mut rng = replica_rng(seed, rid);
            // Common start: cloud from γ_{m*}, barycenter shifted onto m*.
            let sd = (1.0 / spec.kappa).sqrt();
            let mut xs: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(d, |r, _| center[r] + sd * normal(&mut rng)))
                .collect();
            let mut bary = DVector::zeros(d);
            for x in &xs {
                bary += x;
            }
            bary /= n as f64;
            let shift = &bary - &center;
            for x in &mut xs {
                *x -= &shift;
            }
            let mut ys = xs.clone();
            let noise = (2.0 * dt).sqrt();
            for k in 0..steps {
                let mut bx = DVector::zeros(d);
                let mut by = DVector::zeros(d);
                for (x, y) in xs.iter().zip(&ys) {
                    bx += x;
                    by += y;
                }
                bx /= n as f64;
                by /= n as f64;
                let gx = spec.grad_v(&bx);
                let gy = localized.grad_v_tilde(&by);
                for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
                    for r in 0..d {
                        let z = normal(&mut rng);
                        x[r] += -(gx[r] + spec.kappa * x[r]) * dt + noise * z;
                        y[r] += -(gy[r] + spec.kappa * y[r]) * dt + noise * z;
                    }
                }
                if xs.iter().zip(&ys).any(|(x, y)| x != y) {
                    return Some((k + 1) as f64 * dt);
                }
            }
            None
        })
        .collect();
    let identical = divergence_times.iter().filter(|t| t.is_none()).count();
    Ok(CoincidenceReport {
        fraction: identical as f64 / replicas as f64,
        divergence_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::localized_convexification;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn quartic() -> PotentialSpec {
        PotentialSpec::quartic1d(1.0).unwrap()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn ek_prediction_reference_value() {
        let spec = quartic();
        let p = eyring_kramers_predict(&spec, &v1(-1.0), &v1(0.0), 20.0).unwrap();
        let expect = std::f64::consts::PI * 2f64.sqrt() * 5f64.exp();
        assert_relative_eq!(p.time, expect, max_relative = 1e-10);
        assert_relative_eq!(p.lambda_bar1, 1.0, epsilon = 1e-8);
        assert_relative_eq!(p.delta_v, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn ek_prediction_symmetry_and_slope_identity() {
        let spec = quartic();
        let a = eyring_kramers_predict(&spec, &v1(-1.0), &v1(0.0), 16.0).unwrap();
        let b = eyring_kramers_predict(&spec, &v1(1.0), &v1(0.0), 16.0).unwrap();
        assert_relative_eq!(a.time, b.time, max_relative = 1e-10);
        // ln-slope in N is exactly ΔV.
        let c = eyring_kramers_predict(&spec, &v1(-1.0), &v1(0.0), 24.0).unwrap();
        assert_relative_eq!((c.time / a.time).ln() / 8.0, a.delta_v, epsilon = 1e-12);
    }

    #[test]
    fn ek_prediction_pca_finite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.25]));
        let spec = PotentialSpec::pca(m.clone(), 0.5).unwrap();
        let set = crate::critical_points::pca_critical_set(&m, 0.5).unwrap();
        let x0 = set.iter().find(|p| p.index == 0).unwrap().location.clone();
        let z = set.iter().find(|p| p.index == 1).unwrap().location.clone();
        let p = eyring_kramers_predict(&spec, &x0, &z, 10.0).unwrap();
        assert!(p.time.is_finite() && p.time > 0.0);
    }

    #[test]
    fn ek_prediction_rejects_bad_geometry() {
        let spec = quartic();
        assert!(eyring_kramers_predict(&spec, &v1(0.0), &v1(-1.0), 10.0).is_err());
    }

    #[test]
    fn exponentiality_self_tests() {
        // Synthetic Exp(1).
        let mut rng = replica_rng(7, 0);
        let exp: Vec<f64> = (0..1000)
            .map(|_| -(rand::Rng::gen_range(&mut rng, 0.0f64..1.0)).ln())
            .collect();
        let t = exponentiality_test(&exp).unwrap();
        assert!(t.p_value > 0.01, "p = {}", t.p_value);
        // Point mass: KS = 1 − e^{−1}.
        let det = vec![3.5; 400];
        let t = exponentiality_test(&det).unwrap();
        assert_relative_eq!(t.statistic, 1.0 - (-1.0f64).exp(), epsilon = 5e-3);
        assert!(t.p_value < 1e-6);
        // Too few samples.
        assert!(exponentiality_test(&vec![1.0; 100]).is_err());
    }

    #[test]
    fn heteroclinic_quartic_reference() {
        let spec = quartic();
        let schedule = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625];
        let h = compute_heteroclinic(&spec, &v1(0.0), 0.5, &schedule).unwrap();
        assert!(h.converged);
        // Analytic: T_s = ln(1/2) − ln(3/4)/2.
        let expect = 0.5f64.ln() - 0.75f64.ln() / 2.0;
        assert_relative_eq!(h.t_plus, expect, epsilon = 1e-3);
        assert_relative_eq!(h.t_minus, expect, epsilon = 1e-3);
        assert_relative_eq!(h.t_plus, h.t_minus, epsilon = 1e-9);
        assert_relative_eq!(h.z_plus[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(h.z_minus[0], -0.5, epsilon = 1e-6);
        // Stable under dt halving.
        let h2 = compute_heteroclinic_dt(&spec, &v1(0.0), 0.5, &schedule, 1e-4).unwrap();
        assert!((h.t_plus - h2.t_plus).abs() < 1e-3);
        // Near the saddle the flow is essentially linear: successive
        // renormalized estimates differ by O(u).
        let m = h.estimates.len();
        assert!((h.estimates[m - 1].1 - h.estimates[m - 2].1).abs() < 1e-4);
    }

    #[test]
    fn transition_study_quartic_arrhenius() {
        let spec = quartic();
        let study = transition_study(
            &spec,
            &v1(-1.0),
            &v1(1.0),
            &v1(0.0),
            0.3,
            &[8.0, 12.0, 16.0],
            100,
            1e-3,
            42,
        )
        .unwrap();
        assert!(study.excluded.is_empty());
        assert!(
            (study.slope - 0.25).abs() < 0.08,
            "slope {} ± {}",
            study.slope,
            study.slope_ci
        );
        // Monotone means in N.
        let means: Vec<f64> = study.samples.iter().map(|(_, s)| mean(s)).collect();
        assert!(means.windows(2).all(|w| w[1] > w[0]));
        // dt/2 probe consistent with the main means (loose sanity band).
        for (n, hm) in &study.half_dt_means {
            let full = study
                .samples
                .iter()
                .find(|(nn, _)| nn == n)
                .map(|(_, s)| mean(s))
                .unwrap();
            assert!(*hm > 0.2 * full && *hm < 5.0 * full);
        }
    }

    #[test]
    fn transition_study_censoring_excludes_n() {
        let spec = quartic();
        // Horizon far below the expected transition time: everything censored.
        let res = transition_study_with_horizon(
            &spec,
            &v1(-1.0),
            &v1(1.0),
            &v1(0.0),
            0.3,
            &[10.0, 14.0],
            30,
            1e-3,
            1,
            0.001,
        );
        assert!(res.is_err());
    }

    #[test]
    fn transition_particles_match_reduced() {
        let spec = quartic();
        let n = 16usize;
        let horizon = 80.0 * eyring_kramers_predict(&spec, &v1(-1.0), &v1(0.0), 16.0)
            .unwrap()
            .time;
        let full =
            transition_samples_particles(&spec, &v1(-1.0), &v1(1.0), 0.3, n, 60, 1e-3, 5, horizon)
                .unwrap();
        let study = transition_study(
            &spec,
            &v1(-1.0),
            &v1(1.0),
            &v1(0.0),
            0.3,
            &[12.0, 16.0],
            100,
            1e-3,
            5,
        )
        .unwrap();
        let reduced = &study.samples.iter().find(|(nn, _)| *nn == 16.0).unwrap().1;
        let (mf, mr) = (mean(&full), mean(reduced));
        let se = |s: &[f64]| {
            let m = mean(s);
            (s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() as f64 - 1.0)
                / s.len() as f64)
                .sqrt()
        };
        let gap = (mf - mr).abs();
        let band = 1.96 * (se(&full) + se(reduced));
        assert!(gap < band + 1e-9, "means {mf} vs {mr}, band {band}");
    }

    #[test]
    fn saddle_exit_reduced_law() {
        let spec = quartic();
        let study =
            saddle_exit_study(&spec, &v1(0.0), 0.5, &[4096.0], 600, 11).unwrap();
        let per = &study.per_n[0];
        // Sides balanced within 3 binomial standard errors.
        let se3 = 3.0 * (0.25 / per.sides.len() as f64).sqrt();
        assert!(
            (per.plus_fraction - 0.5).abs() <= se3,
            "plus fraction {}",
            per.plus_fraction
        );
        // Centered law close to the reference Monte Carlo.
        assert!(per.ks < 0.1, "KS {} (p = {})", per.ks, per.ks_p);
        // Empirical mean locates the sign of the ln|Z| term: with the
        // implemented convention it sits near T_s + (γ + ln 2)/(2λ) + ln√(2λ)/λ.
        let expect = study.heteroclinic.t_plus + 0.6351814227307392 + (2.0f64.sqrt()).ln();
        let emp = mean(&per.centered);
        assert!(
            (emp - expect).abs() < 0.2,
            "centered mean {emp} vs predicted {expect}"
        );
    }

    #[test]
    fn coincidence_quartic_local_well() {
        let spec = quartic();
        let loc = localized_convexification(&spec, &v1(1.0), 0.2, 8.0).unwrap();
        // With N = 256 the well depth N·ΔV makes barycenter excursions past δ
        // far rarer than the horizon, so paths coincide.  (At N = 64 the δ
        // ball is only ≈2.3 standard deviations wide and excursions take ≈7
        // time units on average, so most replicas diverge before t = 10.)
        let rep = coupled_local_coincidence(&spec, &loc, 256, 10.0, 100, 3).unwrap();
        assert!(rep.fraction >= 0.99, "fraction {}", rep.fraction);
        let rep64 = coupled_local_coincidence(&spec, &loc, 64, 10.0, 50, 3).unwrap();
        assert!(rep64.fraction < 0.99, "fraction {}", rep64.fraction);
        // Zero horizon: trivially identical.
        let rep0 = coupled_local_coincidence(&spec, &loc, 64, 0.0, 20, 3).unwrap();
        assert_relative_eq!(rep0.fraction, 1.0);
        // A tiny well diverges quickly.
        let loc_small = localized_convexification(&spec, &v1(1.0), 0.05, 8.0).unwrap();
        let rep_small = coupled_local_coincidence(&spec, &loc_small, 64, 10.0, 50, 3).unwrap();
        assert!(rep_small.fraction < 0.99, "fraction {}", rep_small.fraction);
        for t in rep_small.divergence_times.iter().flatten() {
            assert!(*t > 0.0);
        }
    }
}
