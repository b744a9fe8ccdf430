//! Quasi-static electrostatic breakdown engine.
//!
//! `solve_poisson` produces a [`FieldSolution`] at one reverse bias;
//! [`ramp_breakdown`] steps the bias adaptively and extracts the breakdown
//! voltage by the fast (peak field reaches E_crit) or full (ionization
//! integral reaches 1) criterion. `calibrate_alpha` pins the ionization
//! exponent so the ideal 1D diode's full-mode BV hits a target anchor.

mod analytic;
mod export;
mod ionization;
mod linear;
mod poisson;
mod ramp;

pub use analytic::{analytic_1d, bias_for_peak_field, Analytic1d};
pub use export::export_field;
pub use ionization::{calibrate_alpha, ionization_integral, max_probe_integral, IonizationPath};
pub use poisson::{solve_poisson, NewtonOptions, PoissonProblem};
pub use ramp::{ramp_breakdown, BiasPoint, RampOptions, RampReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DesignVector;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Newton diverged at bias {bias_v} V after {iterations} iterations")]
    NewtonDiverged { bias_v: f64, iterations: usize },
    #[error("calibration bracket could not be established: {0}")]
    CalibrationUnreachable(String),
    #[error("cut depth {y_um} µm outside the domain")]
    CutOutOfDomain { y_um: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Converged electrostatic state at one bias.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub bias_v: f64,
    /// Potential per node (V), index ix*ny + iy.
    pub psi_v: Vec<f64>,
    /// Field magnitude per node (V/cm), consistent with the discrete
    /// potential gradient.
    pub e_v_per_cm: Vec<f64>,
    /// max over nodes of `e_v_per_cm` and its location.
    pub peak_field_v_per_cm: f64,
    pub peak_ix: usize,
    pub peak_iy: usize,
    pub newton_iterations: usize,
    /// Floating quasi-Fermi level per guard ring (V).
    pub ring_levels_v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreakdownMode {
    Fast,
    Full,
}

impl std::fmt::Display for BreakdownMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BreakdownMode::Fast => write!(f, "fast"),
            BreakdownMode::Full => write!(f, "full"),
        }
    }
}

impl std::str::FromStr for BreakdownMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(BreakdownMode::Fast),
            "full" => Ok(BreakdownMode::Full),
            other => Err(format!("unknown mode '{other}' (expected fast|full)")),
        }
    }
}

/// Per-design simulation outcome. Non-convergence is data, not an error:
/// ramps that stall below any criterion emit `converged = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRecord {
    pub id: usize,
    pub design: DesignVector,
    pub mode: BreakdownMode,
    /// Present iff converged.
    pub bv_v: Option<f64>,
    pub converged: bool,
    pub wall_s: f64,
    pub bias_steps: usize,
    /// Hash of the pipeline config that produced this record (carried in
    /// memory and in the manifest; not a CSV column).
    #[serde(default)]
    pub config_hash: String,
}
