//! Adaptive reverse-bias ramp with breakdown extraction.
//!
//! Steps start at `initial_step_v`, grow 1.5x on success (capped), halve on
//! Newton failure, and the ramp aborts once the step falls below
//! `min_step_v`. Breakdown is linearly interpolated between the bracketing
//! bias points: peak field crossing E_crit (fast) or the maximum probe-path
//! ionization integral crossing 1 (full). Both criteria are tracked from the
//! same bias ladder in full mode.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::device::{DesignVector, DeviceGeometry, DopingMap, MaterialConfig};

use super::ionization::max_probe_integral;
use super::poisson::{NewtonOptions, PoissonProblem};
use super::{BreakdownMode, BreakdownRecord, FieldSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampOptions {
    pub initial_step_v: f64,
    pub step_growth: f64,
    pub max_step_v: f64,
    pub step_shrink: f64,
    pub min_step_v: f64,
    /// Safety cap; ramps that reach it emit converged = false.
    pub max_bias_v: f64,
    pub newton_tol_v: f64,
    pub newton_max_iter: usize,
    pub ring_level_tol_v: f64,
    pub ring_level_max_iter: usize,
    /// Full-mode grids are refined by this factor (spacings divided by it):
    /// the expensive fidelity resolves the fields the integral sees.
    pub full_grid_refine: f64,
}

impl Default for RampOptions {
    fn default() -> Self {
        Self {
            initial_step_v: 5.0,
            step_growth: 1.5,
            max_step_v: 50.0,
            step_shrink: 0.5,
            min_step_v: 0.1,
            max_bias_v: 5000.0,
            newton_tol_v: 1.0e-6,
            newton_max_iter: 50,
            ring_level_tol_v: 1.0e-4,
            ring_level_max_iter: 30,
            full_grid_refine: 2.0,
        }
    }
}

impl RampOptions {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol_v: self.newton_tol_v,
            max_iter: self.newton_max_iter,
            ring_tol_v: self.ring_level_tol_v,
            ring_max_iter: self.ring_level_max_iter,
        }
    }
}

/// One accepted bias step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BiasPoint {
    pub bias_v: f64,
    pub peak_field_v_per_cm: f64,
    /// Max probe-path ionization integral; evaluated in full mode only.
    pub ionization_integral: Option<f64>,
    pub newton_iterations: usize,
}

/// Ramp outcome: the breakdown record plus both criterion crossings and the
/// accepted-bias trace, for diagnostics and cross-criterion checks.
#[derive(Debug)]
pub struct RampReport {
    pub record: BreakdownRecord,
    pub bv_fast_v: Option<f64>,
    pub bv_full_v: Option<f64>,
    pub trace: Vec<BiasPoint>,
    pub final_solution: Option<FieldSolution>,
}

fn interpolate(b0: f64, v0: f64, b1: f64, v1: f64, target: f64) -> f64 {
    if v1 == v0 {
        return b1;
    }
    b0 + (target - v0) * (b1 - b0) / (v1 - v0)
}

/// Ramp the structure to breakdown. Non-convergence (step underflow or the
/// bias cap) is reported in the record rather than as an error.
pub fn ramp_breakdown(
    design: &DesignVector,
    geom: &DeviceGeometry,
    doping: &DopingMap,
    mat: &MaterialConfig,
    mode: BreakdownMode,
    opts: &RampOptions,
) -> RampReport {
    let t0 = Instant::now();
    let newton = opts.newton();
    let mut problem = PoissonProblem::new(geom, doping, mat);
    let e_crit = mat.e_crit_v_per_cm;

    let mut trace: Vec<BiasPoint> = Vec::new();
    let mut bv_fast = None;
    let mut bv_full = None;
    let mut bias_steps = 0usize;
    let mut final_solution: Option<FieldSolution>;

    let evaluate = |problem: &PoissonProblem, sol: &FieldSolution, iters: usize| -> BiasPoint {
        let integral = match mode {
            BreakdownMode::Full => Some(max_probe_integral(problem, &doping.tags, sol, mat)),
            BreakdownMode::Fast => None,
        };
        BiasPoint {
            bias_v: sol.bias_v,
            peak_field_v_per_cm: sol.peak_field_v_per_cm,
            ionization_integral: integral,
            newton_iterations: iters,
        }
    };

    // Equilibrium solve anchors the ladder and the interpolation bracket.
    match problem.solve_with_continuation(0.0, None, &newton) {
        Ok((psi, levels, iters)) => {
            let sol = problem.solution_from(0.0, psi, levels, iters);
            bias_steps += 1;
            trace.push(evaluate(&problem, &sol, iters));
            final_solution = Some(sol);
        }
        Err(_) => {
            let wall_s = t0.elapsed().as_secs_f64().max(1e-9);
            return RampReport {
                record: BreakdownRecord {
                    id: 0,
                    design: *design,
                    mode,
                    bv_v: None,
                    converged: false,
                    wall_s,
                    bias_steps: 0,
                    config_hash: String::new(),
                },
                bv_fast_v: None,
                bv_full_v: None,
                trace,
                final_solution: None,
            };
        }
    }

    let mut bias = 0.0;
    let mut step = opts.initial_step_v;
    loop {
        if step < opts.min_step_v {
            break;
        }
        let next = bias + step;
        if next > opts.max_bias_v {
            break;
        }
        let warm = final_solution
            .as_ref()
            .map(|s| (s.psi_v.as_slice(), s.ring_levels_v.as_slice()));
        match problem.solve_at_bias(next, warm, &newton) {
            Err(_) => {
                step *= opts.step_shrink;
                continue;
            }
            Ok((psi, levels, iters)) => {
                bias = next;
                bias_steps += 1;
                let sol = problem.solution_from(next, psi, levels, iters);
                let point = evaluate(&problem, &sol, iters);
                let prev = *trace.last().expect("trace holds the equilibrium point");
                trace.push(point);
                final_solution = Some(sol);

                if bv_fast.is_none() && point.peak_field_v_per_cm >= e_crit {
                    bv_fast = Some(interpolate(
                        prev.bias_v,
                        prev.peak_field_v_per_cm,
                        point.bias_v,
                        point.peak_field_v_per_cm,
                        e_crit,
                    ));
                }
                if let (Some(cur_i), None) = (point.ionization_integral, bv_full) {
                    if cur_i >= 1.0 {
                        let prev_i = prev.ionization_integral.unwrap_or(0.0);
                        bv_full = Some(interpolate(
                            prev.bias_v,
                            prev_i,
                            point.bias_v,
                            cur_i,
                            1.0,
                        ));
                    }
                }
                let done = match mode {
                    BreakdownMode::Fast => bv_fast.is_some(),
                    BreakdownMode::Full => bv_full.is_some(),
                };
                if done {
                    break;
                }
                step = (step * opts.step_growth).min(opts.max_step_v);
            }
        }
    }

    let bv = match mode {
        BreakdownMode::Fast => bv_fast,
        BreakdownMode::Full => bv_full,
    };
    let wall_s = t0.elapsed().as_secs_f64().max(1e-9);
    RampReport {
        record: BreakdownRecord {
            id: 0,
            design: *design,
            mode,
            bv_v: bv,
            converged: bv.is_some(),
            wall_s,
            bias_steps,
            config_hash: String::new(),
        },
        bv_fast_v: bv_fast,
        bv_full_v: bv_full,
        trace,
        final_solution,
    }
}
