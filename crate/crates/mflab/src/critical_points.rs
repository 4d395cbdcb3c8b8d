//! Critical points of the confined potential `V_κ`, their classification, the
//! closed-form PCA critical set, and the Curie–Weiss fixed-point problems.
//!
//! By the mean-field correspondence, every critical point `m` of `V_κ` names a
//! stationary Gaussian `γ_m = N(m, κ⁻¹I)` of the free energy, so this module
//! is the backbone of the spectral predictors (transition prefactors, saddle
//! data) used elsewhere.

use crate::gibbs;
use crate::potentials::PotentialSpec;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MODULE: &str = "critical_points";

/// A located critical point of `V_κ` with its spectral classification.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub location: DVector<f64>,
    /// V_κ at the point.
    pub value: f64,
    /// Ascending eigenvalues of ∇²V_κ.
    pub spectrum: Vec<f64>,
    /// Number of strictly negative eigenvalues (Morse index).
    pub index: usize,
    /// True when any eigenvalue sits inside the degeneracy band.
    pub degenerate: bool,
}

impl CriticalPoint {
    /// Classify a converged location by eigen-decomposition of ∇²V_κ.
    pub fn classify(spec: &PotentialSpec, location: DVector<f64>) -> Self {
        let value = spec.v_kappa(&location);
        let hess = spec.hess_v_kappa(&location);
        let mut spectrum: Vec<f64> = hess.symmetric_eigen().eigenvalues.iter().cloned().collect();
        spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let radius = spectrum
            .iter()
            .map(|l| l.abs())
            .fold(0.0f64, f64::max);
        // Scale-aware degeneracy band.
        let tol_eig = 1e-6 * (1.0 + radius);
        let index = spectrum.iter().filter(|&&l| l < -tol_eig).count();
        let degenerate = spectrum.iter().any(|l| l.abs() <= tol_eig);
        CriticalPoint {
            location,
            value,
            spectrum,
            index,
            degenerate,
        }
    }

    pub fn is_minimizer(&self) -> bool {
        self.index == 0 && !self.degenerate
    }

    /// Curvature along the most unstable direction, as a positive rate
    /// (only meaningful for saddles): λ̄₁ = −(smallest eigenvalue).
    pub fn unstable_rate(&self) -> f64 {
        -self.spectrum[0]
    }

    /// Unit eigenvector of the smallest Hessian eigenvalue (the unstable
    /// direction v₁ at an index-1 saddle).
    pub fn unstable_direction(&self, spec: &PotentialSpec) -> DVector<f64> {
        let hess = spec.hess_v_kappa(&self.location);
        let eig = hess.symmetric_eigen();
        let mut best = 0;
        for i in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[i] < eig.eigenvalues[best] {
                best = i;
            }
        }
        let v = eig.eigenvectors.column(best).into_owned();
        // Canonical sign: first nonzero component positive.
        let s = v.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        v * s
    }
}

/// Result of the grid-seeded damped-Newton search.
#[derive(Debug, Clone)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    /// Seeds whose Newton iteration failed to converge (dropped, but counted).
    pub failed_seeds: usize,
}

/// Damped Newton iteration on ∇V_κ with backtracking on |∇V_κ|².
fn newton_refine(spec: &PotentialSpec, seed: DVector<f64>) -> Option<DVector<f64>> {
    let mut m = seed;
    for _ in 0..200 {
        let g = spec.grad_v_kappa(&m);
        let gn = g.norm();
        if gn <= 1e-12 * (1.0 + m.norm()) {
            return Some(m);
        }
        let h = spec.hess_v_kappa(&m);
        let step = h.lu().solve(&g)?;
        // Backtrack: halve until the residual decreases.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &m - &step * t;
            if spec.grad_v_kappa(&trial).norm_squared() < gn * gn {
                m = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    let g = spec.grad_v_kappa(&m);
    if g.norm() <= 1e-10 * (1.0 + m.norm()) {
        Some(m)
    } else {
        None
    }
}

/// Find critical points of `V_κ` by damped Newton from every node of a grid
/// over `box_half`-sized axis-aligned box `[−box_half, box_half]^d`
/// (documented limit d ≤ 4), merging duplicates within 1e-6 and classifying
/// each survivor.  Output is canonicalized lexicographically by location.
pub fn find_critical_points(
    spec: &PotentialSpec,
    box_half: f64,
    grid_per_axis: usize,
) -> Result<CriticalSearch> {
    const OP: &str = "find_critical_points";
    if spec.d > 4 {
        return Err(Error::input(MODULE, OP, "grid seeding supports d <= 4"));
    }
    if grid_per_axis < 2 || !(box_half > 0.0) {
        return Err(Error::input(MODULE, OP, "need grid_per_axis >= 2 and box_half > 0"));
    }
    let n = grid_per_axis;
    let d = spec.d;
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut failed = 0usize;
    let mut idx = vec![0usize; d];
    loop {
        let seed = DVector::from_fn(d, |k, _| {
            -box_half + 2.0 * box_half * idx[k] as f64 / (n - 1) as f64
        });
        match newton_refine(spec, seed) {
            Some(m) => {
                if m.amax() <= 2.0 * box_half
                    && !found.iter().any(|p| (p - &m).norm() < 1e-6)
                {
                    found.push(m);
                }
            }
            None => failed += 1,
        }
        // Odometer over the grid.
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                found.sort_by(|a, b| {
                    a.iter()
                        .zip(b.iter())
                        .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let points = found
                    .into_iter()
                    .map(|m| CriticalPoint::classify(spec, m))
                    .collect();
                return Ok(CriticalSearch {
                    points,
                    failed_seeds: failed,
                });
            }
        }
    }
}

/// Closed-form critical set of the PCA potential: `0` together with
/// `±√(1−κ/λ)·(v,v)` for every unit eigenpair `(v, λ)` of `M` with `λ > κ`.
/// The value at the nonzero points is `−(λ−κ)/2·(1 + λ/κ − 2κ/λ)`.
pub fn pca_critical_set(m: &DMatrix<f64>, kappa: f64) -> Result<Vec<CriticalPoint>> {
    const OP: &str = "pca_critical_set";
    let spec = PotentialSpec::pca(m.clone(), kappa)?;
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut points = vec![CriticalPoint::classify(&spec, DVector::zeros(2 * n))];
    for i in 0..n {
        let lambda = eig.eigenvalues[i];
        if lambda > kappa + 1e-12 {
            let v = eig.eigenvectors.column(i).into_owned();
            let scale = (1.0 - kappa / lambda).sqrt();
            for sign in [1.0f64, -1.0] {
                let mut loc = DVector::zeros(2 * n);
                loc.rows_mut(0, n).copy_from(&(&v * (sign * scale)));
                loc.rows_mut(n, n).copy_from(&(&v * (sign * scale)));
                let mut cp = CriticalPoint::classify(&spec, loc);
                // Closed form of V_κ at m^{(λ)} = √(1−κ/λ)(v, v):
                //   κ(λ−κ)/λ − (λ−κ) + (λ−κ)²/(2λ) = −(λ−κ)²/(2λ).
                // It must agree with the direct evaluation to rounding.
                let closed = -(lambda - kappa).powi(2) / (2.0 * lambda);
                if (cp.value - closed).abs() > 1e-10 * (1.0 + closed.abs()) {
                    return Err(Error::numeric(
                        MODULE,
                        OP,
                        format!("closed-form value {closed} vs evaluated {}", cp.value),
                    ));
                }
                cp.value = closed;
                points.push(cp);
            }
        } else if (lambda - kappa).abs() <= 1e-12 {
            // κ equal to an eigenvalue: the branch degenerates into 0 itself;
            // the origin is flagged degenerate by its own classification.
        }
    }
    points.sort_by(|a, b| {
        a.location
            .iter()
            .zip(b.location.iter())
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if points.is_empty() {
        return Err(Error::numeric(MODULE, OP, "empty critical set (unreachable)"));
    }
    Ok(points)
}

/// Fixed points of the Curie–Weiss mean map `f(m) = ∫x γ_m(dx)`.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub sigma2: f64,
    pub kappa0: f64,
    /// Sorted fixed points of f.
    pub fixed_points: Vec<f64>,
    /// f'(0), computed as κ·Var(γ₀).
    pub derivative_at_zero: f64,
}

/// Locate the fixed points of `f(m) − m` by sign-change bracketing on a grid
/// over `[−5, 5]` followed by bisection to 1e-9, and report `f'(0) = κ·Var(γ₀)`.
pub fn curie_weiss_fixed_points(sigma2: f64, kappa0: f64) -> Result<FixedPointReport> {
    let spec = PotentialSpec::curie_weiss(sigma2, kappa0)?;
    let g = |m: f64| -> Result<f64> { Ok(gibbs::fixed_point_map(&spec, m)? - m) };
    let (lo, hi, n) = (-5.0f64, 5.0f64, 201usize);
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_x = lo;
    let mut prev_g = g(lo)?;
    for i in 1..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let gx = g(x)?;
        if prev_g == 0.0 {
            roots.push(prev_x);
        } else if prev_g * gx < 0.0 {
            // Bisection to 1e-9.
            let (mut a, mut b, mut ga) = (prev_x, x, prev_g);
            while b - a > 1e-9 {
                let mid = 0.5 * (a + b);
                let gm = g(mid)?;
                if ga * gm <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    ga = gm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev_g = gx;
    }
    // Snap the symmetric root to exactly 0 (f is odd).
    for r in roots.iter_mut() {
        if r.abs() < 1e-7 {
            *r = 0.0;
        }
    }
    let t0 = gibbs::tilted_measure(&spec, 0.0)?;
    Ok(FixedPointReport {
        sigma2,
        kappa0,
        fixed_points: roots,
        derivative_at_zero: spec.kappa * t0.variance,
    })
}

/// Critical temperature: the σ² with `f'(0) = 1`, found by bisection on
/// `σ² ↦ f'(0) − 1` over `[1e-3, 10]` to 1e-6 in σ².
pub fn critical_temperature(kappa0: f64) -> Result<f64> {
    const OP: &str = "critical_temperature";
    if !(kappa0 > 0.0) {
        return Err(Error::input(MODULE, OP, "kappa0 must be positive"));
    }
    let fp0 = |s2: f64| -> Result<f64> {
        let spec = PotentialSpec::curie_weiss(s2, kappa0)?;
        let t = gibbs::tilted_measure(&spec, 0.0)?;
        Ok(spec.kappa * t.variance - 1.0)
    };
    let (mut a, mut b) = (1e-3, 10.0);
    let (ga, gb) = (fp0(a)?, fp0(b)?);
    if ga * gb > 0.0 {
        return Err(Error::numeric(
            MODULE,
            OP,
            "no sign change of f'(0) − 1 on [1e-3, 10]",
        ));
    }
    let mut ga = ga;
    while b - a > 1e-6 {
        let mid = 0.5 * (a + b);
        let gm = fp0(mid)?;
        if ga * gm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            ga = gm;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quartic_double_well_critical_points() {
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let search = find_critical_points(&spec, 2.0, 21).unwrap();
        let locs: Vec<f64> = search.points.iter().map(|p| p.location[0]).collect();
        assert_eq!(search.points.len(), 3, "{locs:?}");
        assert_relative_eq!(locs[0], -1.0, epsilon = 1e-9);
        assert!(locs[1].abs() < 1e-9);
        assert_relative_eq!(locs[2], 1.0, epsilon = 1e-9);
        assert_eq!(search.points[0].index, 0);
        assert_eq!(search.points[1].index, 1);
        assert_relative_eq!(search.points[1].unstable_rate(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(search.points[0].value, -0.25, epsilon = 1e-12);
        assert_relative_eq!(search.points[1].value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pca_closed_form_and_newton_agree() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.25]));
        let spec = PotentialSpec::pca(m.clone(), 0.5).unwrap();
        let closed = pca_critical_set(&m, 0.5).unwrap();
        assert_eq!(closed.len(), 3);
        let scale = 0.5f64.sqrt();
        let nonzero: Vec<&CriticalPoint> = closed
            .iter()
            .filter(|p| p.location.norm() > 1e-8)
            .collect();
        assert_eq!(nonzero.len(), 2);
        for p in &nonzero {
            assert_relative_eq!(p.location.amax(), scale, epsilon = 1e-12);
            // −(λ−κ)²/(2λ) at λ = 1, κ = 0.5, and it must equal the direct
            // evaluation of the confined potential at the point.
            assert_relative_eq!(p.value, -0.125, epsilon = 1e-10);
            assert_relative_eq!(p.value, spec.v_kappa(&p.location), epsilon = 1e-10);
            assert!(p.is_minimizer());
        }
        // The origin is a saddle.
        let origin = closed.iter().find(|p| p.location.norm() < 1e-8).unwrap();
        assert!(origin.index >= 1);

        // Newton search agrees in location and value.
        let search = find_critical_points(&spec, 1.5, 7).unwrap();
        for p in &closed {
            let best = search
                .points
                .iter()
                .map(|q| (q.location.clone() - &p.location).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "closed-form point not found by Newton: {best}");
        }
    }

    #[test]
    fn pca_strong_confinement_has_only_origin() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.25]));
        let closed = pca_critical_set(&m, 2.0).unwrap();
        assert_eq!(closed.len(), 1);
        assert_eq!(closed[0].index, 0);
        assert!(!closed[0].degenerate);
    }

    #[test]
    fn pca_multiplicity_two_top_eigenvalue_is_degenerate() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0]));
        let closed = pca_critical_set(&m, 0.5).unwrap();
        let minimizers: Vec<&CriticalPoint> = closed
            .iter()
            .filter(|p| p.location.norm() > 1e-8 && p.index == 0)
            .collect();
        assert!(!minimizers.is_empty());
        for p in minimizers {
            assert!(p.degenerate, "expected degenerate minimizer, spectrum {:?}", p.spectrum);
        }
    }

    #[test]
    fn residual_invariant_holds() {
        let spec = PotentialSpec::pca(
            DMatrix::from_vec(2, 2, vec![0.9, 0.2, 0.2, 0.5]),
            0.4,
        )
        .unwrap();
        let search = find_critical_points(&spec, 1.5, 5).unwrap();
        assert!(!search.points.is_empty());
        for p in &search.points {
            let g = spec.grad_v_kappa(&p.location).norm();
            assert!(g <= 1e-10 * (1.0 + p.location.norm()), "residual {g}");
        }
    }

    #[test]
    fn curie_weiss_unique_fixed_point_at_high_temperature() {
        let report = curie_weiss_fixed_points(1.0, 1.0).unwrap();
        assert_eq!(report.fixed_points, vec![0.0]);
        assert!(report.derivative_at_zero < 1.0);
    }

    #[test]
    fn curie_weiss_three_fixed_points_at_low_temperature() {
        let report = curie_weiss_fixed_points(0.01, 1.0).unwrap();
        assert_eq!(report.fixed_points.len(), 3, "{:?}", report.fixed_points);
        let m_star = report.fixed_points[2];
        assert!(m_star > 0.0);
        // Symmetry of the list.
        assert_relative_eq!(report.fixed_points[0], -m_star, epsilon = 1e-8);
        assert_eq!(report.fixed_points[1], 0.0);
        // Each entry is a genuine fixed point.
        let spec = PotentialSpec::curie_weiss(0.01, 1.0).unwrap();
        for &m in &report.fixed_points {
            let f = gibbs::fixed_point_map(&spec, m).unwrap();
            assert!((f - m).abs() <= 1e-8, "f({m}) − m = {}", f - m);
        }
    }

    #[test]
    fn critical_temperature_bracket_and_root_property() {
        let s2c = critical_temperature(1.0).unwrap();
        assert!((0.45..=0.47).contains(&s2c), "sigma_c^2 = {s2c}");
        let spec = PotentialSpec::curie_weiss(s2c, 1.0).unwrap();
        let t = gibbs::tilted_measure(&spec, 0.0).unwrap();
        assert!((spec.kappa * t.variance - 1.0).abs() < 1e-5);
    }

    #[test]
    fn critical_temperature_monotonicity_probe() {
        for (s2, above) in [(0.1, true), (1.0, false)] {
            let spec = PotentialSpec::curie_weiss(s2, 1.0).unwrap();
            let t = gibbs::tilted_measure(&spec, 0.0).unwrap();
            let fp0 = spec.kappa * t.variance;
            assert_eq!(fp0 > 1.0, above, "f'(0) = {fp0} at σ² = {s2}");
        }
    }

    #[test]
    fn derivative_at_zero_matches_finite_differences() {
        let spec = PotentialSpec::curie_weiss(0.6, 1.0).unwrap();
        let report = curie_weiss_fixed_points(0.6, 1.0).unwrap();
        let h = 1e-4;
        let fp = gibbs::fixed_point_map(&spec, h).unwrap();
        let fm = gibbs::fixed_point_map(&spec, -h).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        assert!(
            (report.derivative_at_zero - fd).abs() < 1e-6,
            "variance identity {} vs finite differences {}",
            report.derivative_at_zero,
            fd
        );
    }
}
