//! Numerical laboratory for mean-field Langevin dynamics.
//!
//! The crate revolves around a confined potential `V_κ(m) = V(m) + (κ/2)|m|²`
//! whose critical points are in one-to-one correspondence with the stationary
//! states of a mean-field particle system.  Modules:
//!
//! * [`potentials`] — the potential family (quadratic, quartic double well,
//!   PCA-type encoder potential, Curie–Weiss) with analytic derivatives.
//! * [`quadrature`] — composite Gauss–Legendre panels for 1-D integrals.
//! * [`gibbs`] — tilted 1-D Gibbs measures, partition functions, the effective
//!   potential ω and Laplace-method moment scalings.
//! * [`critical_points`] — Newton search / closed-form critical sets, the
//!   Curie–Weiss fixed-point map and critical temperature.
//! * [`measures`] — Gaussian relative entropy/Fisher information, Wasserstein-2
//!   distances, free-energy evaluation.
//! * [`dynamics`] — seeded Euler–Maruyama particle / barycenter simulation and
//!   a finite-volume mean-field Fokker–Planck solver.
//! * [`inequalities`] — Łojasiewicz/coercivity profiles, PL constants,
//!   log-Sobolev constant bundles, Poincaré lower bounds.
//! * [`metastability`] — transition-time, exponentiality and saddle-exit
//!   Monte Carlo studies with closed-form predictors.
//! * [`config`] / [`runner`] — JSON experiment configs and the CLI entry point.

pub mod config;
pub mod critical_points;
pub mod dynamics;
pub mod gibbs;
pub mod inequalities;
pub mod measures;
pub mod metastability;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod runner;

/// Crate-wide error type.  Every constructor names the module and operation
/// that produced it so CLI error messages are self-locating.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input shape/validity errors (dimension mismatch, bad parameters).
    #[error("{module}::{op}: invalid input: {msg}")]
    Input {
        module: &'static str,
        op: &'static str,
        msg: String,
    },
    /// A construction failed (e.g. no admissible convexification).
    #[error("{module}::{op}: construction failed: {msg}")]
    Construction {
        module: &'static str,
        op: &'static str,
        msg: String,
    },
    /// Numeric failure (quadrature tail mass, divergence, non-convergence).
    #[error("{module}::{op}: numeric error: {msg}")]
    Numeric {
        module: &'static str,
        op: &'static str,
        msg: String,
    },
    /// Configuration errors (bad config file, CFL violation, unknown keys).
    #[error("config error: {0}")]
    Config(String),
    /// I/O errors while writing reports.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(module: &'static str, op: &'static str, msg: impl Into<String>) -> Self {
        Error::Input {
            module,
            op,
            msg: msg.into(),
        }
    }
    pub fn construction(module: &'static str, op: &'static str, msg: impl Into<String>) -> Self {
        Error::Construction {
            module,
            op,
            msg: msg.into(),
        }
    }
    pub fn numeric(module: &'static str, op: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric {
            module,
            op,
            msg: msg.into(),
        }
    }

    /// Process exit code mandated for this error class: 2 for configuration
    /// problems, 3 for numeric failures (and everything else at run time).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
