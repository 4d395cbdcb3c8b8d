//! Functional-inequality profiles and constants for the confined potential:
//! Łojasiewicz/coercivity tabulations Θ₁/Φ₁ with small-r exponent fits, grid
//! PL constants, closed-form log-Sobolev constant bundles for polynomially
//! degenerate minimizers, quadrature Poincaré lower bounds for `ν_N ∝ e^{−Nu}`,
//! and the Curie–Weiss critical-temperature suite.

use crate::critical_points::{self, CriticalPoint};
use crate::gibbs;
use crate::potentials::{Kind, PotentialSpec};
use crate::{Error, Result};
use nalgebra::DVector;

const MODULE: &str = "inequalities";

/// Least-squares slope of ln(y) against ln(x); returns (slope, rms residual).
fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let res = (pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, res)
}

/// Fit over the smallest resolved decade with at least 8 points.
fn small_r_exponent(r: &[f64], y: &[f64]) -> (f64, f64) {
    let positive: Vec<(f64, f64)> = r
        .iter()
        .zip(y)
        .filter(|(&r, &y)| r > 0.0 && y > 0.0)
        .map(|(&r, &y)| (r, y))
        .collect();
    if positive.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let r0 = positive[0].0;
    let decade: Vec<(f64, f64)> = positive
        .iter()
        .cloned()
        .filter(|(r, _)| *r <= 10.0 * r0 * (1.0 + 1e-12))
        .collect();
    let use_pts = if decade.len() >= 8 { decade } else { positive };
    let (xs, ys): (Vec<f64>, Vec<f64>) = use_pts.into_iter().unzip();
    loglog_fit(&xs, &ys)
}

/// Direction set for ray probing: ± coordinate axes, structured directions
/// for the encoder potential (eigen-aligned (v, ±v)/√2), and a few fixed
/// pseudo-random unit vectors.
fn ray_directions(spec: &PotentialSpec) -> Vec<DVector<f64>> {
    let d = spec.d;
    let mut dirs = Vec::new();
    for i in 0..d {
        for s in [1.0f64, -1.0] {
            let mut v = DVector::zeros(d);
            v[i] = s;
            dirs.push(v);
        }
    }
    if let Kind::Pca(mat) = &spec.kind {
        let n = mat.nrows();
        let eig = mat.clone().symmetric_eigen();
        for i in 0..n {
            let v = eig.eigenvectors.column(i);
            for (s0, s1) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut u = DVector::zeros(d);
                for k in 0..n {
                    u[k] = s0 * v[k] / 2f64.sqrt();
                    u[n + k] = s1 * v[k] / 2f64.sqrt();
                }
                dirs.push(u);
            }
        }
    }
    if d > 1 {
        // Deterministic pseudo-random directions (LCG), normalized.
        let mut s = 0x243f_6a88_85a3_08d3u64;
        for _ in 0..16 {
            let mut v = DVector::zeros(d);
            for k in 0..d {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v[k] = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            }
            let n = v.norm();
            if n > 1e-3 {
                dirs.push(v / n);
            }
        }
    }
    dirs
}

/// Łojasiewicz/coercivity tabulation of a potential.
#[derive(Debug, Clone)]
pub struct InequalityProfile {
    pub r: Vec<f64>,
    /// Θ₁(r) = sup { V̄_κ(m) : |∇V_κ(m)|² ≤ r }.
    pub theta1: Vec<f64>,
    /// Φ₁(r) = inf { V̄_κ(m) : κ·dist(m, minimizers)² ≥ 2r }.
    pub phi1: Vec<f64>,
    /// Θ̃(r) = sup_{s≤r} [Θ₁(s) + (r−s)/(2κ)] (tensorized profile).
    pub theta_tilde: Vec<f64>,
    pub theta_exponent: f64,
    pub theta_fit_residual: f64,
    pub phi_exponent: f64,
    pub phi_fit_residual: f64,
    /// Θ₁(0⁺): max of V̄_κ over detected critical points.
    pub theta_at_zero: f64,
    /// True when every detected critical point is a global minimizer.
    pub tight: bool,
    /// True when additionally no global minimizer is degenerate, so
    /// 2V̄_κ/|∇V_κ|² stays bounded.
    pub pl_holds: bool,
}

struct Candidate {
    grad2: f64,
    vbar: f64,
    dist2: f64,
}

/// Extra Newton polish of a minimizer location. The general search accepts a
/// gradient residual that leaves a degenerate (quartic-flat) minimizer only
/// ~1e-3 accurate in position, which is far too coarse to anchor the
/// small-radius end of Φ₁; eigen-decomposed steps with a clamped spectrum
/// still contract along flat directions.
fn polish_minimizer(spec: &PotentialSpec, start: &DVector<f64>) -> DVector<f64> {
    let mut m = start.clone();
    for _ in 0..200 {
        let g = spec.grad_v_kappa(&m);
        let h = spec.hess_v_kappa(&m);
        let eig = h.symmetric_eigen();
        let lmax = eig.eigenvalues.amax().max(1.0);
        let gq = eig.eigenvectors.transpose() * &g;
        let step_q = DVector::from_fn(m.len(), |i, _| {
            gq[i] / eig.eigenvalues[i].max(1e-14 * lmax)
        });
        let step = &eig.eigenvectors * step_q;
        let n = step.norm();
        if !n.is_finite() || n > 1.0 {
            break;
        }
        m -= &step;
        if n <= 1e-12 * (1.0 + m.norm()) {
            break;
        }
    }
    m
}

fn global_minimizers(points: &[CriticalPoint]) -> (f64, Vec<&CriticalPoint>) {
    let vmin = points.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let mins = points
        .iter()
        .filter(|p| p.value <= vmin + 1e-9 * (1.0 + vmin.abs()))
        .collect();
    (vmin, mins)
}

/// Tabulate Θ₁ and Φ₁ over `r_grid` by a box grid scan refined with
/// constraint-active ray probes from every global minimizer.
pub fn lojasiewicz_profile(
    spec: &PotentialSpec,
    box_half: f64,
    grid_per_axis: usize,
    r_grid: &[f64],
) -> Result<InequalityProfile> {
    const OP: &str = "lojasiewicz_profile";
    if r_grid.is_empty() || r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid[0] < 0.0 {
        return Err(Error::input(MODULE, OP, "r grid must be strictly increasing and nonnegative"));
    }
    let search = critical_points::find_critical_points(spec, box_half, grid_per_axis.max(5))?;
    if search.points.is_empty() {
        return Err(Error::numeric(MODULE, OP, "no critical point found; enlarge the search box"));
    }
    let (vmin, minimizers) = global_minimizers(&search.points);
    if minimizers.iter().all(|p| p.index != 0) {
        return Err(Error::numeric(MODULE, OP, "no global minimizer detected"));
    }
    let min_locs: Vec<DVector<f64>> = minimizers
        .iter()
        .map(|p| polish_minimizer(spec, &p.location))
        .collect();
    let vmin = min_locs
        .iter()
        .map(|m| spec.v_kappa(m))
        .fold(vmin, f64::min);
    let dist2 = |m: &DVector<f64>| -> f64 {
        min_locs
            .iter()
            .map(|c| (m - c).norm_squared())
            .fold(f64::INFINITY, f64::min)
    };
    let vbar = |m: &DVector<f64>| spec.v_kappa(m) - vmin;
    let grad2 = |m: &DVector<f64>| spec.grad_v_kappa(m).norm_squared();

    // Box grid candidates.
    let d = spec.d;
    let n = grid_per_axis.max(3);
    let mut cands: Vec<Candidate> = Vec::new();
    let mut idx = vec![0usize; d];
    'grid: loop {
        let m = DVector::from_fn(d, |k, _| {
            -box_half + 2.0 * box_half * idx[k] as f64 / (n - 1) as f64
        });
        cands.push(Candidate { grad2: grad2(&m), vbar: vbar(&m), dist2: dist2(&m) });
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                break 'grid;
            }
        }
    }

    let dirs = ray_directions(spec);
    let smax = box_half * (d as f64).sqrt();

    // Θ₁: prefix sup over grid candidates sorted by |∇V_κ|², improved by ray
    // points where the gradient constraint is exactly active.
    cands.sort_by(|a, b| a.grad2.partial_cmp(&b.grad2).unwrap());
    let theta_at_zero = search
        .points
        .iter()
        .map(|p| p.value - vmin)
        .fold(0.0f64, f64::max);
    let mut theta1 = Vec::with_capacity(r_grid.len());
    let mut phi1 = Vec::with_capacity(r_grid.len());
    let mut ci = 0usize;
    let mut running = theta_at_zero;
    // Φ₁ suffix minima over the distance-sorted candidates.
    let mut by_dist: Vec<(f64, f64)> = cands.iter().map(|c| (c.dist2, c.vbar)).collect();
    by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut suffix_min = vec![f64::INFINITY; by_dist.len() + 1];
    for i in (0..by_dist.len()).rev() {
        suffix_min[i] = suffix_min[i + 1].min(by_dist[i].1);
    }

    for &r in r_grid {
        // Grid part of Θ₁.
        while ci < cands.len() && cands[ci].grad2 <= r {
            running = running.max(cands[ci].vbar);
            ci += 1;
        }
        let mut th = running;
        // Ray part: from each minimizer, walk outward to the first point with
        // |∇V_κ|² = r, then bisect the crossing.
        if r > 0.0 {
            for m0 in &min_locs {
                for u in &dirs {
                    let a_of = |s: f64| grad2(&(m0 + u * s));
                    let mut s_prev = 0.0f64;
                    let mut a_prev = 0.0f64;
                    let mut bracket = None;
                    for j in 1..=160 {
                        let s = smax * (j as f64 / 160.0).powi(3);
                        let a = a_of(s);
                        if a >= r {
                            bracket = Some((s_prev, s));
                            break;
                        }
                        s_prev = s;
                        a_prev = a;
                    }
                    let _ = a_prev;
                    if let Some((mut lo, mut hi)) = bracket {
                        for _ in 0..80 {
                            let mid = 0.5 * (lo + hi);
                            if a_of(mid) >= r {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        th = th.max(vbar(&(m0 + u * (0.5 * (lo + hi)))));
                    }
                }
            }
        }
        theta1.push(th);

        // Φ₁: grid suffix minimum over dist² ≥ 2r/κ …
        let target = 2.0 * r / spec.kappa;
        let pos = by_dist.partition_point(|&(d2, _)| d2 < target);
        let mut ph = suffix_min[pos];
        // … improved by ray points at the exactly active distance.
        let s_active = target.sqrt();
        if s_active <= smax {
            for m0 in &min_locs {
                for u in &dirs {
                    let m = m0 + u * s_active;
                    if dist2(&m) >= target * (1.0 - 1e-12) {
                        ph = ph.min(vbar(&m));
                    }
                }
            }
        }
        if !ph.is_finite() {
            ph = *theta1.last().unwrap(); // no admissible point: vacuous level
        }
        phi1.push(ph.max(0.0));
    }
    // Enforce monotonicity against roundoff.
    for i in 1..theta1.len() {
        theta1[i] = theta1[i].max(theta1[i - 1]);
        phi1[i] = phi1[i].max(phi1[i - 1]);
    }

    // Tensorized Θ̃ on the same grid.
    let theta_tilde: Vec<f64> = r_grid
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut best = theta_at_zero + r / (2.0 * spec.kappa);
            for j in 0..=i {
                best = best.max(theta1[j] + (r - r_grid[j]) / (2.0 * spec.kappa));
            }
            best
        })
        .collect();

    let tight = theta_at_zero <= 1e-9;
    let degenerate_min = minimizers.iter().any(|p| p.degenerate);
    let (theta_exponent, theta_fit_residual) = small_r_exponent(r_grid, &theta1);
    let (phi_exponent, phi_fit_residual) = small_r_exponent(r_grid, &phi1);
    Ok(InequalityProfile {
        r: r_grid.to_vec(),
        theta1,
        phi1,
        theta_tilde,
        theta_exponent,
        theta_fit_residual,
        phi_exponent,
        phi_fit_residual,
        theta_at_zero,
        tight,
        pl_holds: tight && !degenerate_min,
    })
}

/// Grid estimate of the PL constant `C_PL = sup 2V̄_κ/|∇V_κ|²`.
#[derive(Debug, Clone, Copy)]
pub struct PlConstant {
    pub value: f64,
    /// True when the sup keeps growing under grid refinement (no PL constant,
    /// e.g. a saddle above the global minimum).
    pub divergent: bool,
}

pub fn pl_constant(spec: &PotentialSpec, box_half: f64, grid_per_axis: usize) -> Result<PlConstant> {
    const OP: &str = "pl_constant";
    let search = critical_points::find_critical_points(spec, box_half, grid_per_axis.max(5))?;
    if search.points.is_empty() {
        return Err(Error::numeric(MODULE, OP, "no critical point found"));
    }
    let (vmin, _) = global_minimizers(&search.points);
    let sup_on = |n: usize| -> f64 {
        let d = spec.d;
        let mut idx = vec![0usize; d];
        let mut sup = 0.0f64;
        loop {
            let m = DVector::from_fn(d, |k, _| {
                -box_half + 2.0 * box_half * idx[k] as f64 / (n - 1) as f64
            });
            let g2 = spec.grad_v_kappa(&m).norm_squared();
            if g2 >= 1e-14 {
                sup = sup.max(2.0 * (spec.v_kappa(&m) - vmin) / g2);
            }
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == d {
                    return sup;
                }
            }
        }
    };
    let n = grid_per_axis.max(5);
    let coarse = sup_on(n);
    let fine = sup_on(2 * n - 1);
    let divergent = fine > 1.25 * coarse + 1e-12;
    Ok(PlConstant { value: fine, divergent })
}

/// Closed-form constants of the degenerate log-Sobolev machinery for
/// `ν_N ∝ e^{−Nu}` with `∇²u ≥ min(c₁, c₂|x − x*|^{β−2})`.
#[derive(Debug, Clone, Copy)]
pub struct LsiConstantBundle {
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
    pub d: usize,
    pub kappa: f64,
    pub n: f64,
    pub r_radius: f64,
    /// Tight LSI constant 2e(Nc₂)^{−2/β} (valid for N ≥ 1/c₂).
    pub upper_tight: f64,
    /// ρ_R = min(c₁, c₂(R/2)^{β−2})/3.
    pub rho_r: f64,
    /// Defective LSI: H ≤ A·I + B with A = 12/ρ.
    pub defective_a: f64,
    pub defective_b: f64,
    pub c3: f64,
    /// Coefficient C of the degenerate profile Θ(r) = C·max(r, r^{β/(2β−2)}).
    pub degenerate_c: f64,
    /// Coefficient C' of the transport profile ξ(r) = C'·max(r, r^{2/β}).
    pub talagrand_c: f64,
}

impl LsiConstantBundle {
    /// Θ(r) = C·max(r, r^{β/(2β−2)}).
    pub fn degenerate_theta(&self, r: f64) -> f64 {
        self.degenerate_c * r.max(r.powf(self.beta / (2.0 * self.beta - 2.0)))
    }

    /// Θ̃(r) = sup_{s ≤ r} [Θ(s) + (r − s)/(2κ)].
    pub fn tensorized_theta(&self, r: f64) -> f64 {
        let mut best = self.degenerate_theta(0.0) + r / (2.0 * self.kappa);
        for j in 0..=256 {
            let s = r * j as f64 / 256.0;
            best = best.max(self.degenerate_theta(s) + (r - s) / (2.0 * self.kappa));
        }
        best
    }

    /// Closed-form g for Θ(r) = c·max(r, r^{β/(2β−2)}):
    /// g(r) = βc^{(β−1)/β} r^{1/β} for r ≤ c, (β−2)c + 2√(cr) beyond.
    fn g_closed(&self, r: f64) -> f64 {
        let c = self.degenerate_c + 1.0 / (2.0 * self.kappa);
        let beta = self.beta;
        if r <= c {
            beta * c.powf((beta - 1.0) / beta) * r.powf(1.0 / beta)
        } else {
            (beta - 2.0) * c + 2.0 * (c * r).sqrt()
        }
    }

    /// ξ(r) = C'·max(r, r^{2/β}).
    pub fn talagrand_xi(&self, r: f64) -> f64 {
        self.talagrand_c * r.max(r.powf(2.0 / self.beta))
    }
}

pub fn lsi_constant_bundle(
    c1: f64,
    c2: f64,
    beta: f64,
    d: usize,
    kappa: f64,
    n: f64,
    r_radius: f64,
) -> Result<LsiConstantBundle> {
    const OP: &str = "lsi_constant_bundle";
    if !(c2 > 0.0) || c1 < c2 {
        return Err(Error::input(MODULE, OP, "hypothesis c1 >= c2 > 0 violated"));
    }
    if beta < 2.0 {
        return Err(Error::input(MODULE, OP, "hypothesis beta >= 2 violated"));
    }
    if n < 1.0 {
        return Err(Error::input(MODULE, OP, "hypothesis N >= 1 violated"));
    }
    if n < 1.0 / c2 {
        return Err(Error::input(
            MODULE,
            OP,
            "hypothesis N >= 1/c2 (validity of the tight constant) violated",
        ));
    }
    if !(r_radius > 0.0) || !(kappa > 0.0) {
        return Err(Error::input(MODULE, OP, "need R > 0 and kappa > 0"));
    }
    let upper_tight = 2.0 * std::f64::consts::E * (n * c2).powf(-2.0 / beta);
    let rho_r = c1.min(c2 * (r_radius / 2.0).powf(beta - 2.0)) / 3.0;
    let defective_a = 12.0 / rho_r;
    let rr2 = 2.0 * rho_r * r_radius * r_radius;
    let defective_b =
        6.0 * (1.0 + 4.0 * d as f64 + rr2).ln() + 0.75 * (1.0 + 4.0 * d as f64).max(rr2);
    let c3 = 3.0 * (1.0 + 4.0 * d as f64) / (2f64.powf(3.0 - beta) * c2);
    let degenerate_c = [
        2f64.powf(beta + 4.0) / c2,
        2f64.powf(4.0 - beta) * c2,
        std::f64::consts::E * c2.powf(-2.0 / beta) * c3.powf((beta - 2.0) / beta),
        36.0 / c2 + 2f64.powf(8.0 - 2.0 * beta) * c2 / 3.0,
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let mut bundle = LsiConstantBundle {
        c1,
        c2,
        beta,
        d,
        kappa,
        n,
        r_radius,
        upper_tight,
        rho_r,
        defective_a,
        defective_b,
        c3,
        degenerate_c,
        talagrand_c: 0.0,
    };
    // C' as the tightest coefficient with g(r)² ≤ C'·max(r, r^{2/β}) over a
    // wide logarithmic range.
    let mut cp = 0.0f64;
    for j in 0..=320 {
        let r = 10f64.powf(-8.0 + 16.0 * j as f64 / 320.0);
        let bound = r.max(r.powf(2.0 / beta));
        cp = cp.max(bundle.g_closed(r).powi(2) / bound);
    }
    bundle.talagrand_c = cp;
    Ok(bundle)
}

/// Per-N Poincaré lower bounds on `C_LS(ν_N)` for `ν_N ∝ e^{−Nu}`, by the
/// variance of the first coordinate (linear test function, unit Dirichlet
/// energy), with a log-log fit of the N-exponent.
#[derive(Debug, Clone)]
pub struct PoincareLowerBound {
    pub n_list: Vec<f64>,
    pub bounds: Vec<f64>,
    pub exponent: f64,
    pub fit_residual: f64,
}

pub fn poincare_lower_bound(
    u: impl Fn(f64) -> f64 + Clone + 'static,
    n_list: &[f64],
) -> Result<PoincareLowerBound> {
    const OP: &str = "poincare_lower_bound";
    if n_list.is_empty() || n_list.iter().any(|&n| !(n >= 1.0)) {
        return Err(Error::input(MODULE, OP, "need a nonempty list of N >= 1"));
    }
    let mut bounds = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let uc = u.clone();
        let measure = gibbs::ExpMeasure1d::build(move |x| n * uc(x), OP)?;
        bounds.push(measure.variance());
    }
    let (exponent, fit_residual) = loglog_fit(n_list, &bounds);
    Ok(PoincareLowerBound { n_list: n_list.to_vec(), bounds, exponent, fit_residual })
}

/// Tabulated transport profile derived from a Łojasiewicz profile Θ:
/// g(r) = ∫₀^r Θ⁻¹(u)^{−1/2} du and Φ with Φ(κr²/2) = g⁻¹(r).
#[derive(Debug, Clone)]
pub struct TransportProfile {
    /// Argument grid of g (free-energy levels).
    pub u: Vec<f64>,
    pub g: Vec<f64>,
    pub kappa: f64,
}

impl TransportProfile {
    pub fn g_at(&self, x: f64) -> f64 {
        interp_monotone(&self.u, &self.g, x)
    }

    /// Inverse of g by monotone interpolation.
    pub fn g_inv(&self, s: f64) -> f64 {
        interp_monotone(&self.g, &self.u, s)
    }

    /// Φ(x) with Φ(κr²/2) = g⁻¹(r).
    pub fn phi(&self, x: f64) -> f64 {
        let r = (2.0 * x / self.kappa).sqrt();
        self.g_inv(r)
    }
}

fn interp_monotone(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        // Power-law extrapolation through the first two points.
        if xs[0] > 0.0 && x > 0.0 && ys[0] > 0.0 && ys[1] > 0.0 {
            let p = (ys[1] / ys[0]).ln() / (xs[1] / xs[0]).ln();
            return ys[0] * (x / xs[0]).powf(p);
        }
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&g| g < x).max(1);
    let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + t * (ys[j] - ys[j - 1])
}

/// Build the transport profile from a tabulated nondecreasing Θ.
///
/// Integrability at 0 is checked through the small-r power fit of Θ: the
/// integrand Θ⁻¹(u)^{−1/2} is integrable iff the exponent exceeds 1/2, which
/// is automatic for admissible profiles (Θ(r) ≥ r/(2κ) would fail otherwise).
pub fn g_and_phi_from_theta(r: &[f64], theta: &[f64], kappa: f64) -> Result<TransportProfile> {
    const OP: &str = "g_and_phi_from_theta";
    if r.len() != theta.len() || r.len() < 4 {
        return Err(Error::input(MODULE, OP, "need matching grids with >= 4 points"));
    }
    if theta.windows(2).any(|w| w[1] < w[0] - 1e-14) {
        return Err(Error::input(MODULE, OP, "theta must be nondecreasing"));
    }
    let (p, _) = small_r_exponent(r, theta);
    if !(p > 0.5) {
        return Err(Error::numeric(
            MODULE,
            OP,
            format!(
                "theta exponent {p:.3} at 0 makes the transport integral diverge \
                 (inconsistent data: any admissible profile dominates r/(2kappa))"
            ),
        ));
    }
    // Θ⁻¹ tabulated by swapping axes; small-u closed form from the power fit.
    let first_pos = r
        .iter()
        .zip(theta)
        .find(|(_, &t)| t > 0.0)
        .map(|(&r0, &t0)| (r0, t0))
        .ok_or_else(|| Error::input(MODULE, OP, "theta vanishes identically"))?;
    let (r0, t0) = first_pos;
    let a_coef = t0 / r0.powf(p); // Θ(r) ≈ a·r^p near 0
    let theta_inv = |u: f64| -> f64 {
        if u <= t0 {
            (u / a_coef).powf(1.0 / p)
        } else {
            interp_monotone(theta, r, u)
        }
    };
    // g on a logarithmic grid of free-energy levels up to max Θ.
    let u_max = theta[theta.len() - 1];
    let n_grid = 400usize;
    let mut us = Vec::with_capacity(n_grid + 1);
    for j in 0..=n_grid {
        us.push(u_max * 10f64.powf(-10.0 * (1.0 - j as f64 / n_grid as f64)));
    }
    // Singular head [0, us[0]] in closed form via the power fit:
    // ∫₀^{u} (s/a)^{−1/(2p)} ds = a^{1/(2p)} u^{1−1/(2p)} / (1 − 1/(2p)).
    let head = |u: f64| -> f64 {
        a_coef.powf(1.0 / (2.0 * p)) * u.powf(1.0 - 1.0 / (2.0 * p)) / (1.0 - 1.0 / (2.0 * p))
    };
    let mut g = Vec::with_capacity(us.len());
    let mut acc = head(us[0].min(t0));
    if us[0] > t0 {
        // Rare: tabulated range starts above the fitted head; integrate the rest.
        acc += trapz_integral(&theta_inv, t0, us[0]);
    }
    g.push(acc);
    for w in 0..n_grid {
        let (lo, hi) = (us[w], us[w + 1]);
        acc += trapz_integral(&theta_inv, lo, hi);
        g.push(acc);
    }
    Ok(TransportProfile { u: us, g, kappa })
}

fn trapz_integral(theta_inv: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let steps = 64;
    let h = (hi - lo) / steps as f64;
    let f = |u: f64| theta_inv(u).powf(-0.5);
    let mut s = 0.5 * (f(lo) + f(hi));
    for j in 1..steps {
        s += f(lo + j as f64 * h);
    }
    s * h
}

/// Aggregated Curie–Weiss critical-temperature report.
#[derive(Debug, Clone)]
pub struct CurieWeissSuite {
    pub kappa0: f64,
    pub sigma2_c: f64,
    /// Fitted N-exponent of the lower bound N·∫x̄² dμ_∞^N on C_LS at σ_c².
    pub lsi_lower_exponent: f64,
    pub lsi_lower_bounds: Vec<(f64, f64)>,
    /// Fitted slope of H(ρ*^⊗N | μ_∞^N) against ln N at σ_c².
    pub entropy_slope: f64,
    /// ω''(0) at σ_c² (should vanish) and ω⁗(0) (should be positive).
    pub omega_second_at_zero: f64,
    pub omega_fourth_at_zero: f64,
    /// True when ω''(ξ) > 0 for all probed ξ ≠ 0.
    pub omega_positive_off_zero: bool,
    /// Small-r Łojasiewicz exponent of the effective potential ω at σ_c².
    pub theta_exponent: f64,
}

pub fn curie_weiss_suite(kappa0: f64, n_list: &[f64]) -> Result<CurieWeissSuite> {
    const OP: &str = "curie_weiss_suite";
    if n_list.len() < 2 {
        return Err(Error::input(MODULE, OP, "need at least two values of N for the fits"));
    }
    let sigma2_c = critical_points::critical_temperature(kappa0)?;
    let spec = PotentialSpec::curie_weiss(sigma2_c, kappa0)?;

    // C_LS lower bound N·∫x̄² dμ_∞^N at the critical temperature.
    let mut lsi_lower_bounds = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let var = gibbs::gibbs_barycenter_variance(n, sigma2_c, kappa0)?;
        lsi_lower_bounds.push((n, n * var));
    }
    let (lsi_lower_exponent, _) = loglog_fit(
        &lsi_lower_bounds.iter().map(|p| p.0).collect::<Vec<_>>(),
        &lsi_lower_bounds.iter().map(|p| p.1).collect::<Vec<_>>(),
    );

    // Stationary-entropy slope against ln N.
    let hs: Vec<f64> = n_list
        .iter()
        .map(|&n| gibbs::stationary_entropy_curie_weiss(n, sigma2_c, kappa0))
        .collect::<Result<_>>()?;
    let lnn: Vec<f64> = n_list.iter().map(|&n| n.ln()).collect();
    let entropy_slope = {
        let n = lnn.len() as f64;
        let mx = lnn.iter().sum::<f64>() / n;
        let my = hs.iter().sum::<f64>() / n;
        let sxx: f64 = lnn.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = lnn.iter().zip(&hs).map(|(x, y)| (x - mx) * (y - my)).sum();
        sxy / sxx
    };

    // ω degeneracy at σ_c².
    let eff = gibbs::EffectivePotential::tabulate(&spec, 3.0, 601)?;
    let c = eff.center_index();
    let omega_second_at_zero = eff.omega_second(c);
    let omega_fourth_at_zero = eff.omega_fourth(c);
    let mut omega_positive_off_zero = true;
    for i in 2..eff.xi.len() - 2 {
        let xi = eff.xi[i];
        if xi.abs() > 0.05 && eff.omega_second(i) <= 0.0 {
            omega_positive_off_zero = false;
        }
    }

    // Łojasiewicz exponent of ω: along ξ > 0, solve |ω'(ξ)|² = r and record
    // ω(ξ) − ω(0); fit the smallest resolved decade.
    let kappa = spec.kappa;
    let omega_bar = |xi: f64| -> Result<f64> {
        Ok(gibbs::EffectivePotential::omega_at(&spec, xi)?
            - gibbs::EffectivePotential::omega_at(&spec, 0.0)?)
    };
    let omega_prime = |xi: f64| -> Result<f64> {
        let t = gibbs::tilted_measure(&spec, xi)?;
        Ok(xi / kappa - t.mean)
    };
    let r_grid: Vec<f64> = (0..12).map(|j| 1e-8 * 10f64.powf(j as f64 / 4.0)).collect();
    let mut thetas = Vec::with_capacity(r_grid.len());
    for &r in &r_grid {
        let target = r.sqrt();
        let (mut lo, mut hi) = (0.0f64, 3.0f64);
        if omega_prime(hi)?.abs() < target {
            thetas.push(f64::NAN);
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if omega_prime(mid)?.abs() >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        thetas.push(omega_bar(0.5 * (lo + hi))?);
    }
    let valid: Vec<(f64, f64)> = r_grid
        .iter()
        .zip(&thetas)
        .filter(|(_, t)| t.is_finite())
        .map(|(&r, &t)| (r, t))
        .collect();
    let (theta_exponent, _) = small_r_exponent(
        &valid.iter().map(|p| p.0).collect::<Vec<_>>(),
        &valid.iter().map(|p| p.1).collect::<Vec<_>>(),
    );

    Ok(CurieWeissSuite {
        kappa0,
        sigma2_c,
        lsi_lower_exponent,
        lsi_lower_bounds,
        entropy_slope,
        omega_second_at_zero,
        omega_fourth_at_zero,
        omega_positive_off_zero,
        theta_exponent,
    })
}
