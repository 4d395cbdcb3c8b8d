//! Python bindings for the mean-field Langevin laboratory: potentials,
//! critical points, Gibbs quadrature, particle simulation, transition-time
//! predictions and functional-inequality profiles.

use mflab::{
    critical_points, dynamics, gibbs, inequalities, metastability,
    potentials::PotentialSpec,
};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: mflab::Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// A confined interaction potential V_κ = V + (κ/2)|·|².
#[pyclass(name = "Potential")]
#[derive(Clone)]
struct PyPotential {
    spec: PotentialSpec,
}

#[pymethods]
impl PyPotential {
    /// V = 0 up to confinement: V_κ(x) = (κ/2)|x|².
    #[staticmethod]
    fn quadratic(kappa: f64, d: usize) -> PyResult<Self> {
        Ok(Self { spec: PotentialSpec::quadratic(kappa, d).map_err(err)? })
    }

    /// Symmetric double well with V_κ(x) = x⁴/4 − x²/2.
    #[staticmethod]
    fn quartic1d(kappa: f64) -> PyResult<Self> {
        Ok(Self { spec: PotentialSpec::quartic1d(kappa).map_err(err)? })
    }

    /// Two-block encoder potential on m = (m₀, m₁):
    /// V(m) = −m₁ᵀMm₀ + (1/2)|m₁|²·m₀ᵀMm₀ for a symmetric PSD matrix M
    /// (row-major nested lists).
    #[staticmethod]
    fn pca(matrix: Vec<Vec<f64>>, kappa: f64) -> PyResult<Self> {
        let n = matrix.len();
        if n == 0 || matrix.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
        Ok(Self { spec: PotentialSpec::pca(m, kappa).map_err(err)? })
    }

    /// Pairwise Curie–Weiss model at temperature sigma2 with coupling kappa0.
    #[staticmethod]
    fn curie_weiss(sigma2: f64, kappa0: f64) -> PyResult<Self> {
        Ok(Self { spec: PotentialSpec::curie_weiss(sigma2, kappa0).map_err(err)? })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.spec.kappa
    }

    #[getter]
    fn d(&self) -> usize {
        self.spec.d
    }

    fn v(&self, m: Vec<f64>) -> f64 {
        self.spec.v(&dv(&m))
    }

    fn v_kappa(&self, m: Vec<f64>) -> f64 {
        self.spec.v_kappa(&dv(&m))
    }

    fn grad_v_kappa(&self, m: Vec<f64>) -> Vec<f64> {
        self.spec.grad_v_kappa(&dv(&m)).iter().copied().collect()
    }

    fn hess_v_kappa(&self, m: Vec<f64>) -> Vec<Vec<f64>> {
        let h = self.spec.hess_v_kappa(&dv(&m));
        (0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h[(i, j)]).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Potential(d={}, kappa={})", self.spec.d, self.spec.kappa)
    }
}

/// Critical points of V_κ as (location, value, morse_index, degenerate).
#[pyfunction]
#[pyo3(name = "critical_points")]
fn find_critical_points(
    pot: &PyPotential,
    box_half: f64,
    grid_per_axis: usize,
) -> PyResult<Vec<(Vec<f64>, f64, usize, bool)>> {
    let search =
        critical_points::find_critical_points(&pot.spec, box_half, grid_per_axis).map_err(err)?;
    Ok(search
        .points
        .into_iter()
        .map(|c| (c.location.iter().copied().collect(), c.value, c.index, c.degenerate))
        .collect())
}

/// Tilted one-dimensional Gibbs measure ∝ e^{−V(x)+ξx}: (log_z, mean, variance).
#[pyfunction]
fn tilted_measure(pot: &PyPotential, xi: f64) -> PyResult<(f64, f64, f64)> {
    let t = gibbs::tilted_measure(&pot.spec, xi).map_err(err)?;
    Ok((t.log_z, t.mean, t.variance))
}

/// Run the interacting particle system from an isotropic Gaussian cloud and
/// return (terminal_mean, terminal_variance) per coordinate.
#[pyfunction]
#[pyo3(signature = (pot, model, n, dt, horizon, seed, replica=0, init_mean=None, init_s2=1.0))]
#[allow(clippy::too_many_arguments)]
fn simulate_terminal(
    pot: &PyPotential,
    model: &str,
    n: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
    replica: u64,
    init_mean: Option<Vec<f64>>,
    init_s2: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let model = match model {
        "toy" => dynamics::Model::Toy,
        "curie-weiss" => dynamics::Model::CurieWeiss,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown model '{other}' (expected toy or curie-weiss)"
            )))
        }
    };
    let mean = match init_mean {
        Some(v) if v.len() == pot.spec.d => dv(&v),
        Some(_) => return Err(PyValueError::new_err("init_mean has the wrong dimension")),
        None => DVector::zeros(pot.spec.d),
    };
    let batch = dynamics::simulate_particles(dynamics::SimConfig {
        spec: pot.spec.clone(),
        model,
        n,
        dt,
        horizon,
        seed,
        replica_id: replica,
        init: dynamics::Init::Gaussian { mean, s2: init_s2 },
        noise: true,
        thin_every: None,
    })
    .map_err(err)?;
    Ok((
        batch.terminal_mean.iter().copied().collect(),
        batch.terminal_variance.iter().copied().collect(),
    ))
}

/// Closed-form expected transition time (sharp prefactor times e^{NΔV}) from
/// minimizer x0 through saddle z at particle count n.
#[pyfunction]
fn expected_transition_time(
    pot: &PyPotential,
    x0: Vec<f64>,
    z: Vec<f64>,
    n: f64,
) -> PyResult<f64> {
    let p = metastability::eyring_kramers_predict(&pot.spec, &dv(&x0), &dv(&z), n).map_err(err)?;
    Ok(p.time)
}

/// Critical temperature σ_c² of the Curie–Weiss model at coupling kappa0.
#[pyfunction]
fn curie_weiss_critical_sigma2(kappa0: f64) -> PyResult<f64> {
    critical_points::critical_temperature(kappa0).map_err(err)
}

/// Small-r exponents (theta, phi) of the Łojasiewicz-type profiles, plus the
/// tightness flag.
#[pyfunction]
#[pyo3(signature = (pot, box_half=3.0, grid_per_axis=9, r_min=1e-8, r_max=1e-2, per_decade=8))]
fn lojasiewicz_exponents(
    pot: &PyPotential,
    box_half: f64,
    grid_per_axis: usize,
    r_min: f64,
    r_max: f64,
    per_decade: usize,
) -> PyResult<(f64, f64, bool)> {
    let decades = (r_max / r_min).log10();
    let count = ((decades * per_decade as f64).round() as usize).max(2);
    let grid: Vec<f64> = (0..=count)
        .map(|i| r_min * (r_max / r_min).powf(i as f64 / count as f64))
        .collect();
    let p = inequalities::lojasiewicz_profile(&pot.spec, box_half, grid_per_axis, &grid)
        .map_err(err)?;
    Ok((p.theta_exponent, p.phi_exponent, p.tight))
}

#[pymodule]
fn mflab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_function(wrap_pyfunction!(find_critical_points, m)?)?;
    m.add_function(wrap_pyfunction!(tilted_measure, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_terminal, m)?)?;
    m.add_function(wrap_pyfunction!(expected_transition_time, m)?)?;
    m.add_function(wrap_pyfunction!(curie_weiss_critical_sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(lojasiewicz_exponents, m)?)?;
    Ok(())
}
