//! Depletion-approximation closed forms for the abrupt one-sided p⁺/n
//! junction — the independent oracle the discrete solver is validated
//! against.
//!
//! Non-punch-through: W = √(2εV/qN_D), E_peak = 2V/W.
//! Punch-through (W would exceed the drift): trapezoidal field,
//! E_peak = V/W_d + qN_D·W_d/(2ε).

use crate::constants::{Q_C, UM_TO_CM};
use crate::device::MaterialConfig;

#[derive(Debug, Clone, Copy)]
pub struct Analytic1d {
    pub depletion_width_um: f64,
    pub peak_field_v_per_cm: f64,
    pub punch_through: bool,
    /// d|E|/dy in the depleted drift: q·N_D/ε (V/cm per cm).
    pub field_slope_v_per_cm2: f64,
}

impl Analytic1d {
    /// Field magnitude at depth `y_um` below the junction.
    pub fn field_at_depth_um(&self, y_um: f64) -> f64 {
        let e = self.peak_field_v_per_cm - self.field_slope_v_per_cm2 * y_um * UM_TO_CM;
        e.max(0.0)
    }
}

pub fn analytic_1d(
    mat: &MaterialConfig,
    n_d_per_cm3: f64,
    drift_um: f64,
    bias_v: f64,
) -> Analytic1d {
    let eps = mat.eps_f_per_cm();
    let qn = Q_C * n_d_per_cm3;
    let slope = qn / eps;
    let drift_cm = drift_um * UM_TO_CM;
    let w_cm = (2.0 * eps * bias_v / qn).sqrt();
    if w_cm <= drift_cm {
        Analytic1d {
            depletion_width_um: w_cm / UM_TO_CM,
            peak_field_v_per_cm: if w_cm > 0.0 { 2.0 * bias_v / w_cm } else { 0.0 },
            punch_through: false,
            field_slope_v_per_cm2: slope,
        }
    } else {
        Analytic1d {
            depletion_width_um: drift_um,
            peak_field_v_per_cm: bias_v / drift_cm + 0.5 * slope * drift_cm,
            punch_through: true,
            field_slope_v_per_cm2: slope,
        }
    }
}

/// Bias at which the junction peak field reaches `e_v_per_cm`.
/// Punch-through branch: V = E·W_d − qN_D·W_d²/(2ε).
pub fn bias_for_peak_field(
    mat: &MaterialConfig,
    n_d_per_cm3: f64,
    drift_um: f64,
    e_v_per_cm: f64,
) -> f64 {
    let eps = mat.eps_f_per_cm();
    let qn = Q_C * n_d_per_cm3;
    let drift_cm = drift_um * UM_TO_CM;
    // Depletion width the field would need without the drift limit.
    let w_unbounded = eps * e_v_per_cm / qn;
    if w_unbounded <= drift_cm {
        0.5 * eps * e_v_per_cm * e_v_per_cm / qn
    } else {
        e_v_per_cm * drift_cm - 0.5 * qn * drift_cm * drift_cm / eps
    }
}
