//! Breakdown-voltage design pipeline for a guard-ring-terminated vertical
//! GaN p-n diode.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`device`] — design vector, geometry, grid and doping-map construction,
//!   plus the ideal 1D diode used as the theoretical-limit anchor.
//! - [`solver`] — quasi-static nonlinear Poisson breakdown engine with the
//!   fast (peak-field) and full (ionization-integral) breakdown criteria,
//!   impact-ionization calibration, and field export.
//! - [`stats`] — fast→full linear calibration, Student-t prediction
//!   intervals, and screening-threshold / screening-gain reports.
//! - [`sweep`] — deterministic design sampling and the parallel campaign
//!   executor.
//! - [`surrogate`] — from-scratch MLP regressor (batch norm, L2, Adam)
//!   mapping designs to fast-model breakdown voltage.
//! - [`optimize`] — bounded differential evolution and surrogate-driven
//!   inverse design with full-model verification.
//! - [`config`] / [`io`] — run configuration, profiles, and all on-disk
//!   formats (records CSV, fit/model/manifest JSON, figure CSV exports).

pub mod config;
pub mod device;
pub mod io;
pub mod mesh;
pub mod optimize;
pub mod solver;
pub mod stats;
pub mod surrogate;
pub mod sweep;

/// Physical constants (CGS-flavored device units: cm, V, F/cm).
pub mod constants {
    /// Elementary charge (C).
    pub const Q_C: f64 = 1.602176634e-19;
    /// Vacuum permittivity (F/cm).
    pub const EPS0_F_PER_CM: f64 = 8.8541878128e-14;
    /// Boltzmann constant (J/K).
    pub const KB_J_PER_K: f64 = 1.380649e-23;
    /// Micrometers → centimeters.
    pub const UM_TO_CM: f64 = 1.0e-4;
}

pub use config::PipelineConfig;
pub use device::{DesignVector, DeviceGeometry, DopingMap, MaterialConfig};
pub use solver::{BreakdownMode, BreakdownRecord, FieldSolution};
pub use stats::LinearFit;
pub use surrogate::MlpSurrogate;
