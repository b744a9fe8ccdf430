//! Bounded differential evolution (rand/1/bin) and surrogate-driven inverse
//! design for a target fast-model BV, with full-model verification against
//! the calibrated expected range.
//!
//! Integer-masked dimensions (the ring count) evolve as continuous genes and
//! are rounded to the nearest integer before every objective evaluation.
//! Trial vectors are generated and evaluated for the whole generation, then
//! selection is applied as one deterministic batch step, so results do not
//! depend on evaluation order. Ties in selection go to the trial vector.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DeSection, PipelineConfig};
use crate::device::DesignVector;
use crate::stats::{prediction_interval, LinearFit, StatsError};
use crate::surrogate::MlpSurrogate;
use crate::sweep::{simulate_design, DesignBounds, SweepError};
use crate::solver::BreakdownMode;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("objective returned a non-finite value at {0:?}")]
    NonFiniteObjective(Vec<f64>),
    #[error("invalid DE configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population: usize,
    /// Mutation factor F ∈ (0, 2].
    pub mutation_factor: f64,
    /// Crossover rate CR ∈ [0, 1].
    pub crossover_rate: f64,
    pub max_generations: usize,
    /// Stop when (max − min) population objective ≤ tol·max(1, |mean|).
    pub tol: f64,
    pub seed: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Dimensions rounded to integers at evaluation time.
    pub integer_mask: Vec<bool>,
}

impl DeConfig {
    pub fn for_design_space(de: &DeSection, bounds: &DesignBounds) -> Self {
        let (lo, hi, mask) = bounds.as_arrays();
        Self {
            population: (de.pop_per_dim * lo.len()).max(4),
            mutation_factor: de.mutation_factor,
            crossover_rate: de.crossover_rate,
            max_generations: de.max_generations,
            tol: de.tol,
            seed: de.seed,
            lower: lo.to_vec(),
            upper: hi.to_vec(),
            integer_mask: mask.to_vec(),
        }
    }

    fn validate(&self) -> Result<(), OptimizeError> {
        if self.population < 4 {
            return Err(OptimizeError::BadConfig(format!(
                "population {} < 4",
                self.population
            )));
        }
        if !(self.mutation_factor > 0.0 && self.mutation_factor <= 2.0) {
            return Err(OptimizeError::BadConfig(format!(
                "mutation factor {} outside (0, 2]",
                self.mutation_factor
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(OptimizeError::BadConfig(format!(
                "crossover rate {} outside [0, 1]",
                self.crossover_rate
            )));
        }
        if self.lower.len() != self.upper.len() || self.lower.len() != self.integer_mask.len() {
            return Err(OptimizeError::BadConfig("bound lengths differ".into()));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo < hi) {
                return Err(OptimizeError::BadConfig(format!("bad bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DeResult {
    /// Best point with integer dimensions rounded (evaluation form).
    pub best: Vec<f64>,
    pub best_objective: f64,
    pub generations_used: usize,
    /// Per-generation best objective (non-increasing).
    pub trace: Vec<f64>,
}

fn u01(rng: &mut ChaCha8Rng) -> f64 {
    use rand_chacha::rand_core::RngCore;
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn uint(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((u01(rng) * n as f64) as usize).min(n - 1)
}

/// Round integer-masked dimensions to the evaluation form.
fn eval_form(x: &[f64], mask: &[bool]) -> Vec<f64> {
    x.iter()
        .zip(mask)
        .map(|(&v, &int)| if int { v.round() } else { v })
        .collect()
}

/// Classic rand/1/bin differential evolution with bound clipping and batch
/// selection. Deterministic for a fixed seed.
pub fn differential_evolution<F>(objective: F, cfg: &DeConfig) -> Result<DeResult, OptimizeError>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let dim = cfg.lower.len();
    let np = cfg.population;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let evaluate = |x: &[f64]| -> Result<f64, OptimizeError> {
        let form = eval_form(x, &cfg.integer_mask);
        let v = objective(&form);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OptimizeError::NonFiniteObjective(form))
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..dim)
                .map(|d| cfg.lower[d] + u01(&mut rng) * (cfg.upper[d] - cfg.lower[d]))
                .collect()
        })
        .collect();
    let mut fitness: Vec<f64> = Vec::with_capacity(np);
    for x in &pop {
        fitness.push(evaluate(x)?);
    }

    let mut trace = Vec::with_capacity(cfg.max_generations + 1);
    let best_of = |fit: &[f64]| {
        fit.iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };
    trace.push(best_of(&fitness));

    let mut generations_used = 0;
    for gen in 0..cfg.max_generations {
        generations_used = gen + 1;
        // Build every trial first (fixed RNG order), then evaluate and apply
        // selection as a batch.
        let mut trials: Vec<Vec<f64>> = Vec::with_capacity(np);
        for i in 0..np {
            let mut pick = || loop {
                let r = uint(&mut rng, np);
                if r != i {
                    return r;
                }
            };
            let a = pick();
            let b = loop {
                let r = pick();
                if r != a {
                    break r;
                }
            };
            let c = loop {
                let r = pick();
                if r != a && r != b {
                    break r;
                }
            };
            let j_rand = uint(&mut rng, dim);
            let mut trial = pop[i].clone();
            for d in 0..dim {
                let crossed = u01(&mut rng) < cfg.crossover_rate;
                if crossed || d == j_rand {
                    let v = pop[a][d] + cfg.mutation_factor * (pop[b][d] - pop[c][d]);
                    trial[d] = v.clamp(cfg.lower[d], cfg.upper[d]);
                }
            }
            trials.push(trial);
        }
        let mut trial_fit = Vec::with_capacity(np);
        for t in &trials {
            trial_fit.push(evaluate(t)?);
        }
        for i in 0..np {
            if trial_fit[i] <= fitness[i] {
                pop[i] = trials[i].clone();
                fitness[i] = trial_fit[i];
            }
        }
        trace.push(best_of(&fitness));

        let max = fitness.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = best_of(&fitness);
        let mean = fitness.iter().sum::<f64>() / np as f64;
        if cfg.tol > 0.0 && (max - min) <= cfg.tol * mean.abs().max(1.0) {
            break;
        }
    }

    let (best_idx, &best_fit) = fitness
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("non-empty population");
    Ok(DeResult {
        best: eval_form(&pop[best_idx], &cfg.integer_mask),
        best_objective: best_fit,
        generations_used,
        trace,
    })
}

// ---------------------------------------------------------------------------
// Inverse design
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverseDesignResult {
    pub design: DesignVector,
    pub surrogate_bv_v: f64,
    /// |surrogate_bv − v_target|.
    pub objective_residual_v: f64,
    pub generations_used: usize,
    pub v_target_v: f64,
}

/// Find a design whose surrogate-predicted fast-model BV matches `v_target`
/// by minimizing |f(S, W, D, N, σ) − V_target| with differential evolution.
pub fn inverse_design(
    model: &MlpSurrogate,
    v_target: f64,
    de: &DeSection,
    bounds: &DesignBounds,
) -> Result<InverseDesignResult, OptimizeError> {
    assert!(v_target >= 0.0, "target BV must be non-negative");
    let cfg = DeConfig::for_design_space(de, bounds);
    let objective = |x: &[f64]| {
        let dv = DesignVector::from_array([x[0], x[1], x[2], x[3], x[4]]);
        (model.predict(&dv).bv_v - v_target).abs()
    };
    let result = differential_evolution(objective, &cfg)?;
    let design = DesignVector::from_array([
        result.best[0],
        result.best[1],
        result.best[2],
        result.best[3],
        result.best[4],
    ]);
    // Surrogate consistency: the reported BV is exactly predict(design).
    let surrogate_bv = model.predict(&design).bv_v;
    Ok(InverseDesignResult {
        design,
        surrogate_bv_v: surrogate_bv,
        objective_residual_v: (surrogate_bv - v_target).abs(),
        generations_used: result.generations_used,
        v_target_v: v_target,
    })
}

// ---------------------------------------------------------------------------
// Full-model verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub design: DesignVector,
    pub v_target_v: f64,
    /// Absent when the full-model ramp did not converge (record unverified).
    pub full_bv_v: Option<f64>,
    /// 95%-level prediction interval of the calibration fit at x = v_target.
    pub expected_lo_v: f64,
    pub expected_hi_v: f64,
    /// full_bv ∈ [expected_lo, expected_hi]; false when unverified.
    pub in_expected_range: bool,
    pub converged: bool,
}

/// Run the full-mode ramp on a designed structure and place the outcome
/// against the expected range from the fast→full calibration fit.
pub fn verify_design(
    result: &InverseDesignResult,
    fit: &LinearFit,
    cfg: &PipelineConfig,
    level: f64,
) -> Result<VerificationRecord, OptimizeError> {
    let (lo, hi) = prediction_interval(fit, result.v_target_v, level)?;
    let report = simulate_design(&result.design, cfg, BreakdownMode::Full)?;
    let full_bv = report.bv_full_v;
    let in_range = full_bv.map(|bv| bv >= lo && bv <= hi).unwrap_or(false);
    Ok(VerificationRecord {
        design: result.design,
        v_target_v: result.v_target_v,
        full_bv_v: full_bv,
        expected_lo_v: lo,
        expected_hi_v: hi,
        in_expected_range: in_range,
        converged: full_bv.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere_cfg(seed: u64) -> DeConfig {
        DeConfig {
            population: 50,
            mutation_factor: 0.8,
            crossover_rate: 0.9,
            max_generations: 200,
            tol: 0.0,
            seed,
            lower: vec![-5.0; 5],
            upper: vec![5.0; 5],
            integer_mask: vec![false; 5],
        }
    }

    #[test]
    fn sphere_to_global_optimum() {
        let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let r = differential_evolution(sphere, &sphere_cfg(42)).unwrap();
        assert!(r.best_objective < 1e-6, "best {}", r.best_objective);
        assert!(r.generations_used <= 200);
    }

    #[test]
    fn rastrigin_matches_grid_oracle() {
        let rastrigin = |x: &[f64]| {
            10.0 * x.len() as f64
                + x.iter()
                    .map(|&v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                    .sum::<f64>()
        };
        // Dense grid search oracle over [−5.12, 5.12]².
        let mut grid_best = f64::INFINITY;
        let n = 257;
        for i in 0..n {
            for j in 0..n {
                let x = -5.12 + 10.24 * i as f64 / (n - 1) as f64;
                let y = -5.12 + 10.24 * j as f64 / (n - 1) as f64;
                grid_best = grid_best.min(rastrigin(&[x, y]));
            }
        }
        let cfg = DeConfig {
            population: 40,
            max_generations: 400,
            lower: vec![-5.12; 2],
            upper: vec![5.12; 2],
            integer_mask: vec![false; 2],
            ..sphere_cfg(7)
        };
        let r = differential_evolution(rastrigin, &cfg).unwrap();
        assert!(
            (r.best_objective - grid_best).abs() < 1e-3,
            "de {} vs grid {}",
            r.best_objective,
            grid_best
        );
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let rosen = |x: &[f64]| {
            (0..x.len() - 1)
                .map(|i| 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2))
                .sum::<f64>()
        };
        let cfg = DeConfig {
            max_generations: 80,
            lower: vec![-2.0; 3],
            upper: vec![2.0; 3],
            integer_mask: vec![false; 3],
            ..sphere_cfg(9)
        };
        let r1 = differential_evolution(rosen, &cfg).unwrap();
        let r2 = differential_evolution(rosen, &cfg).unwrap();
        assert_eq!(r1.best, r2.best);
        for w in r1.trace.windows(2) {
            assert!(w[1] <= w[0], "per-generation best must be non-increasing");
        }
    }

    #[test]
    fn integer_dims_integral_and_in_bounds() {
        use std::cell::RefCell;
        let seen = RefCell::new(Vec::new());
        let cfg = DeConfig {
            population: 20,
            max_generations: 25,
            lower: vec![0.25, 0.0],
            upper: vec![5.0, 32.0],
            integer_mask: vec![false, true],
            ..sphere_cfg(3)
        };
        let obj = |x: &[f64]| {
            seen.borrow_mut().push(x.to_vec());
            (x[0] - 2.0).powi(2) + (x[1] - 7.0).powi(2)
        };
        differential_evolution(obj, &cfg).unwrap();
        for x in seen.borrow().iter() {
            assert!(x[0] >= 0.25 && x[0] <= 5.0);
            assert!(x[1] >= 0.0 && x[1] <= 32.0);
            assert_eq!(x[1], x[1].round(), "integer dim must be integral");
        }
    }

    #[test]
    fn non_finite_objective_reported() {
        let cfg = DeConfig {
            population: 8,
            max_generations: 5,
            lower: vec![-1.0],
            upper: vec![1.0],
            integer_mask: vec![false],
            ..sphere_cfg(1)
        };
        let r = differential_evolution(|x| 1.0 / x[0].abs().min(0.0), &cfg);
        assert!(matches!(r, Err(OptimizeError::NonFiniteObjective(_))));
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = sphere_cfg(1);
        cfg.population = 3;
        assert!(differential_evolution(|_| 0.0, &cfg).is_err());
        let mut cfg = sphere_cfg(1);
        cfg.mutation_factor = 2.5;
        assert!(differential_evolution(|_| 0.0, &cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        /// All evaluated points stay in bounds and integral in masked dims,
        /// for arbitrary seeds.
        #[test]
        fn candidates_always_feasible(seed in 0u64..1000) {
            use std::cell::RefCell;
            let evals = RefCell::new(0usize);
            let violations = RefCell::new(0usize);
            let cfg = DeConfig {
                population: 12,
                max_generations: 10,
                lower: vec![0.0, -3.0],
                upper: vec![8.0, 3.0],
                integer_mask: vec![true, false],
                ..sphere_cfg(seed)
            };
            let obj = |x: &[f64]| {
                *evals.borrow_mut() += 1;
                let ok = x[0] >= 0.0 && x[0] <= 8.0 && x[0] == x[0].round()
                    && x[1] >= -3.0 && x[1] <= 3.0;
                if !ok {
                    *violations.borrow_mut() += 1;
                }
                x[0] + x[1].abs()
            };
            let res = differential_evolution(obj, &cfg);
            prop_assert!(res.is_ok());
            prop_assert!(*evals.borrow() > 0);
            prop_assert_eq!(*violations.borrow(), 0usize);
        }
    }
}
