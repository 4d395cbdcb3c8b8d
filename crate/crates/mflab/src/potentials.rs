//! The potential family `V` and its confined version `V_κ(m) = V(m) + (κ/2)|m|²`.
//!
//! Four kinds are supported, all with analytic gradients and Hessians:
//!
//! * `quadratic` — `V = 0`; `V_κ` is the pure confinement `(κ/2)|m|²`.
//! * `quartic1d` — 1-D benchmark parameterized so that
//!   `V_κ(x) = x⁴/4 − x²/2` exactly (the canonical symmetric double well);
//!   the bare `V` absorbs `−(1+κ)x²/2`.
//! * `pca` — encoder/decoder quadratic-quartic potential on `R^{2n}`,
//!   `V(m₀,m₁) = −m₁ᵀMm₀ + (1/2)|m₁|²·m₀ᵀMm₀` for a symmetric
//!   positive-semidefinite `M`.
//! * `curie_weiss` — 1-D double well at temperature σ²,
//!   `V(x) = σ⁻²(x⁴/4 − x²/2 + κ₀x²/2)` with confinement `κ = κ₀/σ²`.
//!
//! [`LocalizedSpec`] builds a strongly convex modification that coincides with
//! `V_κ` on a ball, used by the coupled-coincidence experiment.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MODULE: &str = "potentials";

/// Which member of the potential family.
#[derive(Debug, Clone)]
pub enum Kind {
    Quadratic,
    Quartic1d,
    /// Symmetric PSD matrix M; the ambient dimension is 2·n where n = M.nrows().
    Pca(DMatrix<f64>),
    /// (σ², κ₀): temperature and interaction strength.
    CurieWeiss { sigma2: f64, kappa0: f64 },
}

/// Descriptor of (V, κ, d) with analytic evaluators.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub kind: Kind,
    /// Confinement strength κ > 0.
    pub kappa: f64,
    /// Ambient dimension (2n for pca, 1 for quartic1d/curie_weiss).
    pub d: usize,
}

/// Value, gradient and Hessian of `V_κ` at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl PotentialSpec {
    pub fn quadratic(kappa: f64, d: usize) -> Result<Self> {
        check_kappa(kappa, "quadratic")?;
        if d == 0 {
            return Err(Error::input(MODULE, "quadratic", "dimension must be >= 1"));
        }
        Ok(PotentialSpec {
            kind: Kind::Quadratic,
            kappa,
            d,
        })
    }

    pub fn quartic1d(kappa: f64) -> Result<Self> {
        check_kappa(kappa, "quartic1d")?;
        Ok(PotentialSpec {
            kind: Kind::Quartic1d,
            kappa,
            d: 1,
        })
    }

    /// PCA-type potential; `m` must be symmetric with nonnegative eigenvalues.
    pub fn pca(m: DMatrix<f64>, kappa: f64) -> Result<Self> {
        check_kappa(kappa, "pca")?;
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::input(MODULE, "pca", "M must be square and nonempty"));
        }
        let sym_err = (&m - m.transpose()).abs().max();
        if sym_err > 1e-12 * (1.0 + m.abs().max()) {
            return Err(Error::input(MODULE, "pca", "M must be symmetric"));
        }
        let eig = m.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
            return Err(Error::input(
                MODULE,
                "pca",
                "M must have nonnegative eigenvalues",
            ));
        }
        let d = 2 * m.nrows();
        Ok(PotentialSpec {
            kind: Kind::Pca(m),
            kappa,
            d,
        })
    }

    pub fn curie_weiss(sigma2: f64, kappa0: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !(kappa0 > 0.0) {
            return Err(Error::input(
                MODULE,
                "curie_weiss",
                "sigma2 and kappa0 must be positive",
            ));
        }
        Ok(PotentialSpec {
            kind: Kind::CurieWeiss { sigma2, kappa0 },
            kappa: kappa0 / sigma2,
            d: 1,
        })
    }

    fn check_dim(&self, m: &DVector<f64>, op: &'static str) -> Result<()> {
        if m.len() != self.d {
            return Err(Error::input(
                MODULE,
                op,
                format!("point has dimension {}, spec has d={}", m.len(), self.d),
            ));
        }
        Ok(())
    }

    /// Bare potential V(m).
    pub fn v(&self, m: &DVector<f64>) -> f64 {
        match &self.kind {
            Kind::Quadratic => 0.0,
            Kind::Quartic1d => {
                let x = m[0];
                x.powi(4) / 4.0 - (1.0 + self.kappa) * x * x / 2.0
            }
            Kind::Pca(mat) => {
                let n = mat.nrows();
                let m0 = m.rows(0, n).into_owned();
                let m1 = m.rows(n, n).into_owned();
                let mm0 = mat * &m0;
                -m1.dot(&mm0) + 0.5 * m1.norm_squared() * m0.dot(&mm0)
            }
            Kind::CurieWeiss { sigma2, kappa0 } => {
                let x = m[0];
                (x.powi(4) / 4.0 - x * x / 2.0 + kappa0 * x * x / 2.0) / sigma2
            }
        }
    }

    /// Analytic gradient ∇V(m).
    pub fn grad_v(&self, m: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            Kind::Quadratic => DVector::zeros(self.d),
            Kind::Quartic1d => {
                let x = m[0];
                DVector::from_element(1, x.powi(3) - (1.0 + self.kappa) * x)
            }
            Kind::Pca(mat) => {
                let n = mat.nrows();
                let m0 = m.rows(0, n).into_owned();
                let m1 = m.rows(n, n).into_owned();
                let mm0 = mat * &m0;
                let mm1 = mat * &m1;
                let mut g = DVector::zeros(2 * n);
                // ∂/∂m₀: −M m₁ + |m₁|² M m₀
                let g0 = -&mm1 + &mm0 * m1.norm_squared();
                // ∂/∂m₁: −M m₀ + (m₀ᵀM m₀) m₁
                let g1 = -&mm0 + &m1 * m0.dot(&mm0);
                g.rows_mut(0, n).copy_from(&g0);
                g.rows_mut(n, n).copy_from(&g1);
                g
            }
            Kind::CurieWeiss { sigma2, kappa0 } => {
                let x = m[0];
                DVector::from_element(1, (x.powi(3) - x + kappa0 * x) / sigma2)
            }
        }
    }

    /// Analytic Hessian ∇²V(m).
    pub fn hess_v(&self, m: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            Kind::Quadratic => DMatrix::zeros(self.d, self.d),
            Kind::Quartic1d => {
                let x = m[0];
                DMatrix::from_element(1, 1, 3.0 * x * x - (1.0 + self.kappa))
            }
            Kind::Pca(mat) => {
                let n = mat.nrows();
                let m0 = m.rows(0, n).into_owned();
                let m1 = m.rows(n, n).into_owned();
                let mm0 = mat * &m0;
                let mut h = DMatrix::zeros(2 * n, 2 * n);
                // ∂²/∂m₀² = |m₁|² M
                h.view_mut((0, 0), (n, n)).copy_from(&(mat * m1.norm_squared()));
                // ∂²/∂m₁² = (m₀ᵀM m₀) I
                let q = m0.dot(&mm0);
                h.view_mut((n, n), (n, n))
                    .copy_from(&(DMatrix::identity(n, n) * q));
                // ∂²/∂m₀∂m₁ = ∂(∇_{m₀}V)/∂m₁ = −M + 2 (M m₀) m₁ᵀ.
                let c01 = -mat + 2.0 * &mm0 * m1.transpose();
                h.view_mut((0, n), (n, n)).copy_from(&c01);
                h.view_mut((n, 0), (n, n)).copy_from(&c01.transpose());
                h
            }
            Kind::CurieWeiss { sigma2, kappa0 } => {
                let x = m[0];
                DMatrix::from_element(1, 1, (3.0 * x * x - 1.0 + kappa0) / sigma2)
            }
        }
    }

    /// Confined value V_κ(m) = V(m) + (κ/2)|m|².
    pub fn v_kappa(&self, m: &DVector<f64>) -> f64 {
        self.v(m) + 0.5 * self.kappa * m.norm_squared()
    }

    /// ∇V_κ(m) = ∇V(m) + κm.
    pub fn grad_v_kappa(&self, m: &DVector<f64>) -> DVector<f64> {
        self.grad_v(m) + m * self.kappa
    }

    /// ∇²V_κ(m) = ∇²V(m) + κI.
    pub fn hess_v_kappa(&self, m: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.hess_v(m);
        for i in 0..self.d {
            h[(i, i)] += self.kappa;
        }
        h
    }

    /// Scalar fast path for 1-D kinds: V(x), V'(x) of the bare potential.
    /// Panics if d != 1 (internal hot-loop helper).
    pub fn dv_scalar(&self, x: f64) -> f64 {
        debug_assert_eq!(self.d, 1);
        match &self.kind {
            Kind::Quadratic => 0.0,
            Kind::Quartic1d => x.powi(3) - (1.0 + self.kappa) * x,
            Kind::CurieWeiss { sigma2, kappa0 } => (x.powi(3) - x + kappa0 * x) / sigma2,
            Kind::Pca(_) => unreachable!("pca potential is never 1-D"),
        }
    }

    /// Scalar V(x) for 1-D kinds.
    pub fn v_scalar(&self, x: f64) -> f64 {
        debug_assert_eq!(self.d, 1);
        match &self.kind {
            Kind::Quadratic => 0.0,
            Kind::Quartic1d => x.powi(4) / 4.0 - (1.0 + self.kappa) * x * x / 2.0,
            Kind::CurieWeiss { sigma2, kappa0 } => {
                (x.powi(4) / 4.0 - x * x / 2.0 + kappa0 * x * x / 2.0) / sigma2
            }
            Kind::Pca(_) => unreachable!("pca potential is never 1-D"),
        }
    }

    /// Scalar V_κ'(x) for 1-D kinds.
    pub fn dv_kappa_scalar(&self, x: f64) -> f64 {
        self.dv_scalar(x) + self.kappa * x
    }

    /// Scalar V_κ(x) for 1-D kinds.
    pub fn v_kappa_scalar(&self, x: f64) -> f64 {
        self.v_scalar(x) + 0.5 * self.kappa * x * x
    }

    /// Full evaluation of the confined potential at a point.
    pub fn evaluate(&self, m: &DVector<f64>) -> Result<Evaluation> {
        self.check_dim(m, "evaluate")?;
        Ok(Evaluation {
            value: self.v_kappa(m),
            gradient: self.grad_v_kappa(m),
            hessian: self.hess_v_kappa(m),
        })
    }

    /// Cheap falsification of coercivity: V_κ must increase along the ±axis
    /// directions and a fixed set of pseudo-random directions.
    pub fn coercivity_probe(&self) -> bool {
        let dirs = probe_directions(self.d);
        dirs.iter().all(|u| {
            let near = self.v_kappa(&(u * 10.0));
            let far = self.v_kappa(&(u * 100.0));
            far > near && far > self.v_kappa(&DVector::zeros(self.d)) + 1.0
        })
    }
}

fn check_kappa(kappa: f64, op: &'static str) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(Error::input(MODULE, op, "kappa must be positive"));
    }
    Ok(())
}

/// ±axis directions plus 8 fixed pseudo-random unit directions.
pub(crate) fn probe_directions(d: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    // Deterministic "random" directions from a small LCG; direction quality
    // is irrelevant, only genericity.
    let mut state = 0x9e3779b97f4a7c15u64;
    for _ in 0..8 {
        let mut v = DVector::zeros(d);
        for i in 0..d {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            v[i] = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        if v.norm() > 1e-8 {
            dirs.push(v.normalize());
        }
    }
    dirs
}

/// Strongly convex localization of `V_κ` around a non-degenerate minimizer.
///
/// The modified confined potential is
/// `W(m) = χ(|m−m*|)·V_κ(m) + L·((|m−m*|² − δ²)₊)²`
/// with a polynomial cutoff χ that is exactly 1 on `B(m*, δ)` and 0 outside
/// `B(m*, 2δ)`.  Inside `B(m*, δ)` every evaluator short-circuits to the base
/// potential's code path, so coupled simulations agree bitwise there.
///
/// With `stiffness == 0` the localization is the identity (no modification);
/// this is the natural encoding of "the base is already strongly convex".
#[derive(Debug, Clone)]
pub struct LocalizedSpec {
    pub base: PotentialSpec,
    pub center: DVector<f64>,
    pub delta: f64,
    pub stiffness: f64,
    /// Strong-convexity constant achieved on the scan box (min Hessian
    /// eigenvalue found by the grid scan in `localized_convexification`).
    pub lambda: f64,
}

/// Cutoff profile value and first two radial derivatives at radius r.
fn bump(r: f64, delta: f64) -> (f64, f64, f64) {
    if r <= delta {
        (1.0, 0.0, 0.0)
    } else if r >= 2.0 * delta {
        (0.0, 0.0, 0.0)
    } else {
        // χ = (1 − t²)³ on the transition shell, t = (r−δ)/δ ∈ (0,1).
        let t = (r - delta) / delta;
        let s = 1.0 - t * t;
        let chi = s * s * s;
        let d1 = -6.0 * t * s * s / delta;
        let d2 = (-6.0 * s * s + 24.0 * t * t * s) / (delta * delta);
        (chi, d1, d2)
    }
}

impl LocalizedSpec {
    fn is_identity(&self) -> bool {
        self.stiffness == 0.0
    }

    /// Modified confined potential W(m).
    pub fn w(&self, m: &DVector<f64>) -> f64 {
        if self.is_identity() {
            return self.base.v_kappa(m);
        }
        let diff = m - &self.center;
        let r = diff.norm();
        if r <= self.delta {
            return self.base.v_kappa(m);
        }
        let (chi, _, _) = bump(r, self.delta);
        let excess = (r * r - self.delta * self.delta).max(0.0);
        chi * self.base.v_kappa(m) + self.stiffness * excess * excess
    }

    /// ∇W(m).
    pub fn grad_w(&self, m: &DVector<f64>) -> DVector<f64> {
        if self.is_identity() {
            return self.base.grad_v_kappa(m);
        }
        let diff = m - &self.center;
        let r = diff.norm();
        if r <= self.delta {
            return self.base.grad_v_kappa(m);
        }
        let (chi, dchi, _) = bump(r, self.delta);
        let e = &diff / r;
        let excess = (r * r - self.delta * self.delta).max(0.0);
        let vk = self.base.v_kappa(m);
        let gvk = self.base.grad_v_kappa(m);
        &e * (dchi * vk) + gvk * chi + diff * (4.0 * self.stiffness * excess)
    }

    /// ∇²W(m), assembled from the analytic pieces.
    pub fn hess_w(&self, m: &DVector<f64>) -> DMatrix<f64> {
        if self.is_identity() {
            return self.base.hess_v_kappa(m);
        }
        let d = self.base.d;
        let diff = m - &self.center;
        let r = diff.norm();
        if r <= self.delta {
            return self.base.hess_v_kappa(m);
        }
        let (chi, dchi, d2chi) = bump(r, self.delta);
        let e = &diff / r;
        let eet = &e * e.transpose();
        let id = DMatrix::<f64>::identity(d, d);
        let vk = self.base.v_kappa(m);
        let gvk = self.base.grad_v_kappa(m);
        let hvk = self.base.hess_v_kappa(m);
        // ∇²χ = χ'' eeᵀ + (χ'/r)(I − eeᵀ)
        let hess_chi = &eet * d2chi + (&id - &eet) * (dchi / r);
        let grad_chi = &e * dchi;
        let excess = (r * r - self.delta * self.delta).max(0.0);
        let active = if r * r > self.delta * self.delta { 1.0 } else { 0.0 };
        let hess_pen = &id * (4.0 * self.stiffness * excess)
            + (&diff * diff.transpose()) * (8.0 * self.stiffness * active);
        hess_chi * vk + &grad_chi * gvk.transpose() + gvk * grad_chi.transpose() + hvk * chi
            + hess_pen
    }

    /// Modified bare potential Ṽ(m) = W(m) − (κ/2)|m|².  Inside the ball it
    /// short-circuits to the base `V` so that particle drifts computed from
    /// either spec are bitwise identical there.
    pub fn v_tilde(&self, m: &DVector<f64>) -> f64 {
        if self.is_identity() {
            return self.base.v(m);
        }
        let r = (m - &self.center).norm();
        if r <= self.delta {
            self.base.v(m)
        } else {
            self.w(m) - 0.5 * self.base.kappa * m.norm_squared()
        }
    }

    /// ∇Ṽ(m); bitwise equal to the base ∇V on `B(m*, δ)`.
    pub fn grad_v_tilde(&self, m: &DVector<f64>) -> DVector<f64> {
        if self.is_identity() {
            return self.base.grad_v(m);
        }
        let r = (m - &self.center).norm();
        if r <= self.delta {
            self.base.grad_v(m)
        } else {
            self.grad_w(m) - m * self.base.kappa
        }
    }

    /// Minimum Hessian eigenvalue of W over an axis grid on
    /// `[m* − 2.5δ, m* + 2.5δ]^d` (the penalty dominates outside).
    pub fn min_hessian_eigenvalue(&self, points_per_axis: usize) -> f64 {
        let d = self.base.d;
        let mut min_eig = f64::INFINITY;
        let n = points_per_axis.max(2);
        let mut idx = vec![0usize; d];
        loop {
            let mut m = self.center.clone();
            for (k, &i) in idx.iter().enumerate() {
                m[k] += -2.5 * self.delta + 5.0 * self.delta * i as f64 / (n - 1) as f64;
            }
            let h = self.hess_w(&m);
            let eig = h.symmetric_eigen();
            let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            min_eig = min_eig.min(lo);
            // Odometer increment over the d-dimensional grid.
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == d {
                    return min_eig;
                }
            }
        }
    }
}

/// Build a strongly convex localization of `base`'s confined potential around
/// the non-degenerate minimizer `center`.
///
/// Preconditions (checked): ∇²V_κ is positive definite at `center` and on a
/// radial grid covering `B(center, 2δ)`.  If the supplied stiffness does not
/// yield a positive minimum Hessian eigenvalue, the stiffness is doubled up
/// to a cap of 1e6 before giving up with a construction error.
pub fn localized_convexification(
    base: &PotentialSpec,
    center: &DVector<f64>,
    delta: f64,
    stiffness: f64,
) -> Result<LocalizedSpec> {
    const OP: &str = "localized_convexification";
    if center.len() != base.d {
        return Err(Error::input(MODULE, OP, "center dimension mismatch"));
    }
    if !(delta > 0.0) || stiffness < 0.0 {
        return Err(Error::input(MODULE, OP, "delta must be > 0 and stiffness >= 0"));
    }
    // Positive definiteness on B(center, 2δ): radial grid scan.
    for u in probe_directions(base.d) {
        for k in 0..=8 {
            let m = center + &u * (2.0 * delta * k as f64 / 8.0);
            let h = base.hess_v_kappa(&m);
            let lo = h
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if lo <= 0.0 {
                return Err(Error::input(
                    MODULE,
                    OP,
                    format!(
                        "∇²V_κ is not positive definite on B(center, 2δ): min eigenvalue {lo:.3e} at radius {:.3e}",
                        (2.0 * delta * k as f64 / 8.0)
                    ),
                ));
            }
        }
    }
    let mut stiff = stiffness;
    loop {
        let spec = LocalizedSpec {
            base: base.clone(),
            center: center.clone(),
            delta,
            stiffness: stiff,
            lambda: 0.0,
        };
        let lambda = spec.min_hessian_eigenvalue(41);
        if lambda > 0.0 {
            return Ok(LocalizedSpec { lambda, ..spec });
        }
        if stiff == 0.0 || stiff >= 1e6 {
            return Err(Error::construction(
                MODULE,
                OP,
                format!("no stiffness up to 1e6 yields strong convexity (last min eigenvalue {lambda:.3e})"),
            ));
        }
        stiff *= 2.0;
    }
}
