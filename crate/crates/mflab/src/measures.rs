//! Metrics between probability measures and free-energy evaluation.
//!
//! Gaussian relative entropy / Fisher information in closed form, exact
//! Wasserstein-2 for isotropic Gaussians, 1-D samples and tabulated densities
//! (and small multi-dimensional sample sets via optimal assignment), plus the
//! free energy `F(μ) = energy + entropy` on the Gaussian family and on
//! tabulated 1-D densities.

use crate::potentials::{Kind, PotentialSpec};
use crate::quadrature::CompositeRule;
use crate::{critical_points, Error, Result};
use nalgebra::DVector;

const MODULE: &str = "measures";

/// Number of quantile cells used when comparing quantile functions.
const QUANTILE_CELLS: usize = 1 << 15;

/// Isotropic Gaussian `N(m, s2·I)`.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub s2: f64,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, s2: f64) -> Result<Self> {
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(Error::input(MODULE, "GaussianSpec", "variance must be positive and finite"));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::input(MODULE, "GaussianSpec", "mean must be finite"));
        }
        Ok(GaussianSpec { mean, s2 })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// Standard-normal quantile, mapped to this Gaussian (1-D only).
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert_eq!(self.d(), 1);
        self.mean[0] + self.s2.sqrt() * standard_normal_quantile(u)
    }
}

/// Inverse CDF of N(0,1): Acklam's rational initial guess polished with one
/// Halley step against the erfc-based CDF (absolute error below 1e-14).
pub fn standard_normal_quantile(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "quantile argument must lie in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if u < p_low {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - p_low {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };
    // One Halley step: e = Φ(x) − u, Φ via erfc for tail accuracy.
    for _ in 0..2 {
        let cdf = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let e = cdf - u;
        let du = e / pdf;
        x -= du / (1.0 + 0.5 * x * du);
    }
    x
}

/// A nonnegative density tabulated on a (sorted, not necessarily uniform)
/// grid, interpreted by trapezoidal interpolation.
#[derive(Debug, Clone)]
pub struct Density1D {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// True when construction had to rescale the values to integrate to 1.
    pub renormalized: bool,
}

impl Density1D {
    /// Build from grid/values; negative values (beyond −1e-12 tolerance) are
    /// rejected, and the density is renormalized when its trapezoidal mass
    /// differs from 1 by more than 1e-8 (recorded in `renormalized`).
    pub fn new(grid: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        const OP: &str = "Density1D";
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::input(MODULE, OP, "need matching grid/value arrays with >= 2 nodes"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input(MODULE, OP, "grid must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < -1e-12) {
            return Err(Error::input(MODULE, OP, "density values must be finite and nonnegative"));
        }
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass = trapezoid(&grid, &values);
        if !(mass > 0.0) {
            return Err(Error::input(MODULE, OP, "density has zero mass"));
        }
        let renormalized = (mass - 1.0).abs() > 1e-8;
        if renormalized {
            for v in values.iter_mut() {
                *v /= mass;
            }
        }
        Ok(Density1D { grid, values, renormalized })
    }

    /// Tabulate a (possibly unnormalized) density function on a uniform grid.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        Density1D::new(grid, values)
    }

    /// ∫ f(x) ρ(x) dx by the trapezoid rule on the stored grid.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let weighted: Vec<f64> = self.grid.iter().zip(&self.values).map(|(&x, &v)| v * f(x)).collect();
        trapezoid(&self.grid, &weighted)
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    /// Differential entropy term ∫ ρ ln ρ, with the integrand extended by 0
    /// where ρ vanishes (guard inside the logarithm).
    pub fn entropy_integral(&self) -> f64 {
        let vals: Vec<f64> = self
            .values
            .iter()
            .map(|&v| if v > 0.0 { v * v.max(1e-300).ln() } else { 0.0 })
            .collect();
        trapezoid(&self.grid, &vals)
    }

    /// Quantile function at level u ∈ (0, 1) by inverting the piecewise-linear
    /// CDF of the trapezoidal interpolant.
    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        // Cumulative trapezoidal mass at each grid node.
        let n = self.grid.len();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1]
                + 0.5 * (self.values[i - 1] + self.values[i]) * (self.grid[i] - self.grid[i - 1]);
        }
        let total = cdf[n - 1];
        let mut out = Vec::with_capacity(levels.len());
        let mut j = 1usize;
        for &u in levels {
            let target = u * total;
            while j < n - 1 && cdf[j] < target {
                j += 1;
            }
            let (c0, c1) = (cdf[j - 1], cdf[j]);
            let t = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
            out.push(self.grid[j - 1] + t * (self.grid[j] - self.grid[j - 1]));
        }
        out
    }
}

fn trapezoid(grid: &[f64], vals: &[f64]) -> f64 {
    grid.windows(2)
        .zip(vals.windows(2))
        .map(|(x, v)| 0.5 * (v[0] + v[1]) * (x[1] - x[0]))
        .sum()
}

/// Relative entropy and relative Fisher information of one isotropic Gaussian
/// with respect to another.
#[derive(Debug, Clone, Copy)]
pub struct EntropyFisher {
    pub h: f64,
    pub i: f64,
}

/// H(μ|ρ) and I(μ|ρ) for μ = N(m, σ²I), ρ = N(m*, κ⁻¹I):
///   H = (d/2)[σ²κ − 1 − ln(κσ²)] + (κ/2)|m − m*|²,
///   I = dσ²(κ − σ⁻²)² + κ²|m − m*|².
pub fn gaussian_entropy_fisher(mu: &GaussianSpec, rho: &GaussianSpec) -> Result<EntropyFisher> {
    const OP: &str = "gaussian_entropy_fisher";
    if mu.d() != rho.d() {
        return Err(Error::input(MODULE, OP, "dimension mismatch"));
    }
    let d = mu.d() as f64;
    let kappa = 1.0 / rho.s2;
    let s2 = mu.s2;
    let dm2 = (&mu.mean - &rho.mean).norm_squared();
    let h = 0.5 * d * (s2 * kappa - 1.0 - (kappa * s2).ln()) + 0.5 * kappa * dm2;
    let i = d * s2 * (kappa - 1.0 / s2).powi(2) + kappa * kappa * dm2;
    Ok(EntropyFisher { h, i })
}

/// W2 between two isotropic Gaussians: √(|m−m'|² + d(σ − σ')²).
pub fn w2_gaussian(a: &GaussianSpec, b: &GaussianSpec) -> Result<f64> {
    if a.d() != b.d() {
        return Err(Error::input(MODULE, "w2_gaussian", "dimension mismatch"));
    }
    let dm2 = (&a.mean - &b.mean).norm_squared();
    let ds = a.s2.sqrt() - b.s2.sqrt();
    Ok((dm2 + a.d() as f64 * ds * ds).sqrt())
}

/// Exact W2 between two equal-size 1-D sample sets (sorted coupling).
pub fn w2_samples_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    const OP: &str = "w2_samples_1d";
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::input(MODULE, OP, "need equal-size nonempty sample sets"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let cost: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((cost / a.len() as f64).sqrt())
}

/// Exact W2 between equal-size d-dimensional sample sets via optimal
/// assignment with squared-distance cost (O(n³); capacity-limited to n ≤ 512).
pub fn w2_samples(xs: &[DVector<f64>], ys: &[DVector<f64>]) -> Result<f64> {
    const OP: &str = "w2_samples";
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::input(MODULE, OP, "need equal-size nonempty sample sets"));
    }
    let d = xs[0].len();
    if xs.iter().chain(ys.iter()).any(|v| v.len() != d) {
        return Err(Error::input(MODULE, OP, "dimension mismatch within sample sets"));
    }
    if d == 1 {
        let a: Vec<f64> = xs.iter().map(|v| v[0]).collect();
        let b: Vec<f64> = ys.iter().map(|v| v[0]).collect();
        return w2_samples_1d(&a, &b);
    }
    let n = xs.len();
    if n > 512 {
        return Err(Error::input(
            MODULE,
            OP,
            "assignment-based transport is limited to 512 samples per side; subsample first",
        ));
    }
    let cost = |i: usize, j: usize| (&xs[i] - &ys[j]).norm_squared();
    let total = assignment_cost(n, cost);
    Ok((total / n as f64).sqrt())
}

/// Minimum-cost perfect matching on an n×n cost matrix (Hungarian algorithm
/// with potentials, O(n³)); returns the total cost.
fn assignment_cost(n: usize, cost: impl Fn(usize, usize) -> f64) -> f64 {
    const INF: f64 = f64::INFINITY;
    // 1-based arrays with a virtual 0 row/column, per the classical scheme.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost(p[j] - 1, j - 1)).sum()
}

/// W2 between two tabulated 1-D densities by the quantile transform.
pub fn w2_density(a: &Density1D, b: &Density1D) -> f64 {
    let levels: Vec<f64> = (0..QUANTILE_CELLS)
        .map(|j| (j as f64 + 0.5) / QUANTILE_CELLS as f64)
        .collect();
    let qa = a.quantiles(&levels);
    let qb = b.quantiles(&levels);
    let cost: f64 = qa.iter().zip(&qb).map(|(x, y)| (x - y) * (x - y)).sum();
    (cost / QUANTILE_CELLS as f64).sqrt()
}

/// W2 between a 1-D sample set and a 1-D Gaussian, integrating the squared
/// quantile gap exactly over each sample's quantile cell (5-node rule).
pub fn w2_samples_gaussian_1d(xs: &[f64], g: &GaussianSpec) -> Result<f64> {
    const OP: &str = "w2_samples_gaussian_1d";
    if g.d() != 1 {
        return Err(Error::input(MODULE, OP, "Gaussian must be one-dimensional"));
    }
    if xs.is_empty() {
        return Err(Error::input(MODULE, OP, "empty sample set"));
    }
    let mut a = xs.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = a.len();
    let (nodes, weights) = crate::quadrature::gauss_legendre(5);
    let mut cost = 0.0;
    for (i, &x) in a.iter().enumerate() {
        let (u0, u1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
        let mid = 0.5 * (u0 + u1);
        let half = 0.5 * (u1 - u0);
        for (&t, &w) in nodes.iter().zip(&weights) {
            let q = g.quantile(mid + half * t);
            cost += half * w * (x - q) * (x - q);
        }
    }
    Ok(cost.sqrt())
}

/// W2 between a tabulated density and a 1-D Gaussian (quantile transform).
pub fn w2_density_gaussian(a: &Density1D, g: &GaussianSpec) -> Result<f64> {
    if g.d() != 1 {
        return Err(Error::input(MODULE, "w2_density_gaussian", "Gaussian must be one-dimensional"));
    }
    let levels: Vec<f64> = (0..QUANTILE_CELLS)
        .map(|j| (j as f64 + 0.5) / QUANTILE_CELLS as f64)
        .collect();
    let qa = a.quantiles(&levels);
    let cost: f64 = levels
        .iter()
        .zip(&qa)
        .map(|(&u, &x)| {
            let q = g.quantile(u);
            (x - q) * (x - q)
        })
        .sum();
    Ok((cost / QUANTILE_CELLS as f64).sqrt())
}

/// Free energy F(μ) of an isotropic Gaussian under the given interaction.
///
/// For mean-interaction potentials (the barycenter family):
///   F = V(m) + (κ/2)(|m|² + dσ²) − (d/2)(1 + ln(2πσ²)).
/// For the Curie–Weiss pairwise model (d = 1):
///   F = E[V(X)] − (κ/2)m² + Gaussian entropy, with E[V] in moment closed form.
pub fn free_energy_gaussian(mu: &GaussianSpec, spec: &PotentialSpec) -> Result<f64> {
    const OP: &str = "free_energy_gaussian";
    if mu.d() != spec.d {
        return Err(Error::input(MODULE, OP, "dimension mismatch"));
    }
    let d = mu.d() as f64;
    let s2 = mu.s2;
    let neg_entropy = -0.5 * d * (1.0 + (2.0 * std::f64::consts::PI * s2).ln());
    match &spec.kind {
        Kind::CurieWeiss { sigma2, kappa0 } => {
            let m = mu.mean[0];
            // E X² = m² + s², E X⁴ = m⁴ + 6m²s² + 3s⁴ for X ~ N(m, s²).
            let ex2 = m * m + s2;
            let ex4 = m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2;
            let ev = (ex4 / 4.0 - ex2 / 2.0 + kappa0 * ex2 / 2.0) / sigma2;
            Ok(ev - 0.5 * spec.kappa * m * m + neg_entropy)
        }
        _ => {
            let energy = spec.v(&mu.mean)
                + 0.5 * spec.kappa * (mu.mean.norm_squared() + d * s2);
            Ok(energy + neg_entropy)
        }
    }
}

/// Free energy of a tabulated 1-D density under a 1-D interaction.
pub fn free_energy_density(rho: &Density1D, spec: &PotentialSpec) -> Result<f64> {
    const OP: &str = "free_energy_density";
    if spec.d != 1 {
        return Err(Error::input(MODULE, OP, "tabulated densities require a one-dimensional model"));
    }
    let entropy = rho.entropy_integral();
    match &spec.kind {
        Kind::CurieWeiss { .. } => {
            let m = rho.mean();
            let ev = rho.expect(|x| spec.v_scalar(x));
            Ok(ev - 0.5 * spec.kappa * m * m + entropy)
        }
        _ => {
            let m = rho.mean();
            let second = rho.expect(|x| x * x);
            Ok(spec.v_scalar(m) + 0.5 * spec.kappa * second + entropy)
        }
    }
}

/// Result of the Gaussian-family PL-ratio scan.
#[derive(Debug, Clone)]
pub struct PlScan {
    /// sup over the scanned family of 2·(F(μ) − min F)/I(μ|Γ(μ)).
    pub sup: f64,
    pub argmax_mean: DVector<f64>,
    pub argmax_s2: f64,
    /// True when the model has several minimizers on the scan box, so no PL
    /// constant exists and `sup` is only the finite-grid value.
    pub non_pl: bool,
}

/// Scan 2F̄/I over the isotropic Gaussian family N(m, σ²I).
///
/// Uses I(N(m,σ²I) | Γ) = dσ²(κ − σ⁻²)² + |∇V_κ(m)|² (the proximal Gibbs
/// measure of a mean-interaction model is N(−∇V(m)/κ, κ⁻¹I)) and the
/// closed-form free energy; min F is taken over the critical points of V_κ.
pub fn pl_ratio_gaussian_scan(
    spec: &PotentialSpec,
    m_grid: &[DVector<f64>],
    s2_grid: &[f64],
) -> Result<PlScan> {
    const OP: &str = "pl_ratio_gaussian_scan";
    if matches!(spec.kind, Kind::CurieWeiss { .. }) {
        return Err(Error::input(MODULE, OP, "scan applies to mean-interaction models only"));
    }
    if m_grid.is_empty() || s2_grid.is_empty() {
        return Err(Error::input(MODULE, OP, "empty scan grid"));
    }
    let search = critical_points::find_critical_points(spec, 3.0, 9)?;
    if search.points.is_empty() {
        return Err(Error::numeric(MODULE, OP, "no critical point found on the search box"));
    }
    let minimizers = search.points.iter().filter(|p| p.index == 0).count();
    let f_min = search
        .points
        .iter()
        .map(|p| {
            free_energy_gaussian(
                &GaussianSpec::new(p.location.clone(), 1.0 / spec.kappa).unwrap(),
                spec,
            )
            .unwrap()
        })
        .fold(f64::INFINITY, f64::min);

    let d = spec.d as f64;
    let mut sup = 0.0f64;
    let mut argmax_mean = m_grid[0].clone();
    let mut argmax_s2 = s2_grid[0];
    for m in m_grid {
        if m.len() != spec.d {
            return Err(Error::input(MODULE, OP, "scan mean has wrong dimension"));
        }
        let grad2 = spec.grad_v_kappa(m).norm_squared();
        for &s2 in s2_grid {
            if !(s2 > 0.0) {
                return Err(Error::input(MODULE, OP, "scan variances must be positive"));
            }
            let mu = GaussianSpec::new(m.clone(), s2)?;
            let f_bar = free_energy_gaussian(&mu, spec)? - f_min;
            let fisher = d * s2 * (spec.kappa - 1.0 / s2).powi(2) + grad2;
            if fisher < 1e-14 {
                continue; // at a minimizer; ratio is 0/0 with limit ≤ sup
            }
            let ratio = 2.0 * f_bar.max(0.0) / fisher;
            if ratio > sup {
                sup = ratio;
                argmax_mean = m.clone();
                argmax_s2 = s2;
            }
        }
    }
    Ok(PlScan {
        sup,
        argmax_mean,
        argmax_s2,
        non_pl: minimizers > 1,
    })
}

/// Tabulate an isotropic 1-D Gaussian as a Density1D (testing aid and PDE
/// initial condition).
pub fn gaussian_density_1d(g: &GaussianSpec, n: usize) -> Result<Density1D> {
    if g.d() != 1 {
        return Err(Error::input(MODULE, "gaussian_density_1d", "requires d = 1"));
    }
    let s = g.s2.sqrt();
    let (a, b) = (g.mean[0] - 10.0 * s, g.mean[0] + 10.0 * s);
    let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    Density1D::from_fn(a, b, n, |x| {
        norm * (-0.5 * (x - g.mean[0]).powi(2) / g.s2).exp()
    })
}

/// H(μ|ρ) and I(μ|ρ) by direct quadrature of two tabulated Gaussians —
/// the oracle for the closed forms (1-D).
pub fn entropy_fisher_quadrature_1d(mu: &GaussianSpec, rho: &GaussianSpec) -> Result<EntropyFisher> {
    const OP: &str = "entropy_fisher_quadrature_1d";
    if mu.d() != 1 || rho.d() != 1 {
        return Err(Error::input(MODULE, OP, "requires d = 1"));
    }
    let (m, s2) = (mu.mean[0], mu.s2);
    let (mr, s2r) = (rho.mean[0], rho.s2);
    let lo = (m - 12.0 * s2.sqrt()).min(mr - 12.0 * s2r.sqrt());
    let hi = (m + 12.0 * s2.sqrt()).max(mr + 12.0 * s2r.sqrt());
    let rule = CompositeRule::new(lo, hi, &[m, mr], 64, (hi - lo) / 16.0);
    let log_mu = |x: f64| {
        -0.5 * (x - m).powi(2) / s2 - 0.5 * (2.0 * std::f64::consts::PI * s2).ln()
    };
    let log_rho = |x: f64| {
        -0.5 * (x - mr).powi(2) / s2r - 0.5 * (2.0 * std::f64::consts::PI * s2r).ln()
    };
    let h = rule.integrate(|x| log_mu(x).exp() * (log_mu(x) - log_rho(x)));
    let i = rule.integrate(|x| {
        let score = -(x - m) / s2 + (x - mr) / s2r;
        log_mu(x).exp() * score * score
    });
    Ok(EntropyFisher { h, i })
}
