//! Cross-fidelity statistics: ordinary least squares linking fast-model BV
//! to full-model BV, Student-t prediction intervals, and the screening
//! threshold / screening-gain report.
//!
//! The t quantile is computed by numeric inversion of the Student-t CDF via
//! the regularized incomplete beta function (continued fraction), bisected to
//! 1e-10. No normal approximation is used at any sample size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("all x values are equal; slope is undefined")]
    DegenerateX,
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("fit slope must be positive for screening, got {0}")]
    NonPositiveSlope(f64),
    #[error("no fast-model value in the search range reaches the high-BV bound {high_bv} V")]
    NotReachable { high_bv: f64 },
    #[error("screened candidates missing full-model verification: ids {0:?}")]
    MissingVerification(Vec<usize>),
}

/// Ordinary-least-squares line y = slope·x + intercept with the summary
/// statistics needed for prediction intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    /// Volts.
    pub intercept: f64,
    pub n_points: usize,
    pub x_mean: f64,
    /// Σ(x − x̄)², V².
    pub s_xx: f64,
    /// Residual standard deviation with the n−2 denominator, V.
    pub resid_std: f64,
}

/// Fit y = slope·x + intercept by ordinary least squares.
pub fn fit_linear(pairs: &[(f64, f64)]) -> Result<LinearFit, StatsError> {
    let n = pairs.len();
    if n < 2 {
        return Err(StatsError::InsufficientPoints { needed: 2, got: n });
    }
    let nf = n as f64;
    let x_mean = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let y_mean = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut s_xx = 0.0;
    let mut s_xy = 0.0;
    for &(x, y) in pairs {
        s_xx += (x - x_mean) * (x - x_mean);
        s_xy += (x - x_mean) * (y - y_mean);
    }
    if s_xx == 0.0 {
        return Err(StatsError::DegenerateX);
    }
    let slope = s_xy / s_xx;
    let intercept = y_mean - slope * x_mean;
    let resid_std = if n > 2 {
        let sse: f64 = pairs
            .iter()
            .map(|&(x, y)| {
                let r = y - (slope * x + intercept);
                r * r
            })
            .sum();
        (sse / (nf - 2.0)).max(0.0).sqrt()
    } else {
        0.0 // two points interpolate exactly; interval use is rejected below
    };
    Ok(LinearFit {
        slope,
        intercept,
        n_points: n,
        x_mean,
        s_xx,
        resid_std,
    })
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Two-sided prediction interval for a single new observation at `x`:
/// ŷ ± t·s·√(1 + 1/n + (x−x̄)²/s_xx).
pub fn prediction_interval(
    fit: &LinearFit,
    x: f64,
    level: f64,
) -> Result<(f64, f64), StatsError> {
    if fit.n_points < 3 {
        return Err(StatsError::InsufficientPoints {
            needed: 3,
            got: fit.n_points,
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let df = (fit.n_points - 2) as f64;
    let t = t_quantile(0.5 * (1.0 + level), df);
    let half = t
        * fit.resid_std
        * (1.0 + 1.0 / fit.n_points as f64 + (x - fit.x_mean).powi(2) / fit.s_xx).sqrt();
    let y = fit.predict(x);
    Ok((y - half, y + half))
}

/// Smallest fast-model BV whose upper prediction bound reaches `high_bv`.
///
/// The upper bound is monotone in x for a positive slope over the search
/// range, so the crossing is bisected. The search starts on
/// x̄ ± 4·sample-std-of-x and extends left if the bound already qualifies
/// at the left end.
pub fn screening_threshold(
    fit: &LinearFit,
    high_bv: f64,
    level: f64,
) -> Result<f64, StatsError> {
    if fit.slope <= 0.0 {
        return Err(StatsError::NonPositiveSlope(fit.slope));
    }
    // Degenerate interval (numerically zero residuals): the bound is the
    // line itself.
    if fit.resid_std <= 1e-12 * high_bv.abs().max(1.0) {
        return Ok((high_bv - fit.intercept) / fit.slope);
    }
    if fit.n_points < 3 {
        return Err(StatsError::InsufficientPoints {
            needed: 3,
            got: fit.n_points,
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    let upper = |x: f64| prediction_interval(fit, x, level).map(|(_, hi)| hi);

    let spread = (fit.s_xx / (fit.n_points as f64 - 1.0)).sqrt();
    let mut lo = fit.x_mean - 4.0 * spread;
    let mut hi = fit.x_mean + 4.0 * spread;
    if upper(hi)? < high_bv {
        return Err(StatsError::NotReachable { high_bv });
    }
    let mut ext = 4.0 * spread;
    for _ in 0..64 {
        if upper(lo)? < high_bv {
            break;
        }
        ext *= 2.0;
        lo -= ext;
    }
    if upper(lo)? >= high_bv {
        return Err(StatsError::NotReachable { high_bv });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if upper(mid)? >= high_bv {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-10 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// Screening report (Table-I analog)
// ---------------------------------------------------------------------------

/// One campaign entry for screening: a fast-model BV plus the full-model BV
/// where verification was spent.
#[derive(Debug, Clone, Copy)]
pub struct ScreeningInput {
    pub id: usize,
    pub bv_fast_v: f64,
    pub bv_full_v: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub high_bv_def_v: f64,
    pub fast_search_space_count: usize,
    pub verified_high_count: usize,
    pub full_only_count: usize,
    /// verified_high_count / full_only_count; absent when the baseline is 0.
    pub gain_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub level: f64,
    pub rows: Vec<ScreeningRow>,
}

/// Build the screening-gain report: per high-BV definition, the fast-model
/// search space above the screening threshold, how many screened candidates
/// verify high in the full model, and the gain against a stated full-only
/// baseline count.
pub fn screening_report(
    records: &[ScreeningInput],
    defs: &[f64],
    fit: &LinearFit,
    level: f64,
    full_only_baseline: &[usize],
) -> Result<ScreeningReport, StatsError> {
    assert_eq!(
        defs.len(),
        full_only_baseline.len(),
        "one baseline count per high-BV definition"
    );
    let mut rows = Vec::with_capacity(defs.len());
    for (&def, &baseline) in defs.iter().zip(full_only_baseline) {
        let threshold = match screening_threshold(fit, def, level) {
            Ok(t) => t,
            Err(StatsError::NotReachable { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let screened: Vec<&ScreeningInput> = records
            .iter()
            .filter(|r| r.bv_fast_v >= threshold)
            .collect();
        let missing: Vec<usize> = screened
            .iter()
            .filter(|r| r.bv_full_v.is_none())
            .map(|r| r.id)
            .collect();
        if !missing.is_empty() {
            return Err(StatsError::MissingVerification(missing));
        }
        let verified = screened
            .iter()
            .filter(|r| r.bv_full_v.unwrap() >= def)
            .count();
        rows.push(ScreeningRow {
            high_bv_def_v: def,
            fast_search_space_count: screened.len(),
            verified_high_count: verified,
            full_only_count: baseline,
            gain_ratio: if baseline > 0 {
                Some(verified as f64 / baseline as f64)
            } else {
                None
            },
        });
    }
    Ok(ScreeningReport { level, rows })
}

// ---------------------------------------------------------------------------
// Student-t quantile via regularized incomplete beta
// ---------------------------------------------------------------------------

/// Quantile of the Student-t distribution with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability out of range: {p}");
    assert!(df > 0.0, "degrees of freedom must be positive: {df}");
    if p == 0.5 {
        return 0.0;
    }
    let target = if p > 0.5 { p } else { 1.0 - p };
    // CDF(t) for t ≥ 0 is 1 − 0.5·I_{df/(df+t²)}(df/2, 1/2).
    let cdf = |t: f64| 1.0 - 0.5 * inc_beta(df / (df + t * t), 0.5 * df, 0.5);
    let mut hi = 1.0;
    for _ in 0..200 {
        if cdf(hi) >= target {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * (1.0 + hi) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    if p > 0.5 {
        t
    } else {
        -t
    }
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - (b * (1.0 - x).ln() + a * x.ln() - ln_beta(b, a)).exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation (g = 7, n = 9), |rel err| ≲ 2e-10.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Baked-in slope of the paper's fast→full relationship, used as a
    /// fixture constant in collinear tests.
    const FIXTURE_SLOPE: f64 = 1.5893;

    #[test]
    fn collinear_fit_recovers_slope() {
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let x = 100.0 * i as f64;
                (x, FIXTURE_SLOPE * x)
            })
            .collect();
        let fit = fit_linear(&pts).unwrap();
        assert!((fit.slope - FIXTURE_SLOPE).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-9);
        assert!(fit.resid_std < 1e-9);
    }

    #[test]
    fn two_points_interpolate_but_reject_intervals() {
        let fit = fit_linear(&[(0.0, 1.0), (2.0, 5.0)]).unwrap();
        assert_eq!(fit.slope, 2.0);
        assert_eq!(fit.resid_std, 0.0);
        assert!(matches!(
            prediction_interval(&fit, 1.0, 0.95),
            Err(StatsError::InsufficientPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn degenerate_x_rejected() {
        assert_eq!(
            fit_linear(&[(1.0, 0.0), (1.0, 2.0), (1.0, 5.0)]).unwrap_err(),
            StatsError::DegenerateX
        );
    }

    /// Independent normal-equations oracle on noisy synthetic data.
    #[test]
    fn fit_matches_normal_equations_oracle() {
        let mut pts = Vec::new();
        let mut state: u64 = 0x9E3779B97F4A7C15;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..100 {
            let x = i as f64 * 3.0 + next();
            let y = 1.7 * x + 40.0 + (next() - 0.5) * 25.0;
            pts.push((x, y));
        }
        let fit = fit_linear(&pts).unwrap();
        // Oracle: solve [n Σx; Σx Σx²]·[b; m] = [Σy; Σxy] directly.
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        let m = (n * sxy - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        assert!((fit.slope - m).abs() / m.abs() < 1e-10);
        assert!((fit.intercept - b).abs() / b.abs().max(1.0) < 1e-10);
    }

    #[test]
    fn residuals_sum_to_zero() {
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let x = i as f64;
                (x, 2.0 * x + 5.0 + ((i * 7919) % 13) as f64 - 6.0)
            })
            .collect();
        let fit = fit_linear(&pts).unwrap();
        let sum: f64 = pts.iter().map(|&(x, y)| y - fit.predict(x)).sum();
        let max_y = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        assert!(sum.abs() < 1e-9 * pts.len() as f64 * max_y);
    }

    #[test]
    fn zero_residual_gives_zero_width_interval() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 3.0 * i as f64)).collect();
        let fit = fit_linear(&pts).unwrap();
        let (lo, hi) = prediction_interval(&fit, 4.5, 0.95).unwrap();
        assert!((hi - lo).abs() < 1e-9);
        assert!((lo - fit.predict(4.5)).abs() < 1e-9);
    }

    #[test]
    fn interval_normal_limit() {
        // Large n, x = x̄, resid_std = 1 → half-width → 1.9600·√(1 + 1/n).
        let n = 100_000usize;
        let fit = LinearFit {
            slope: 1.0,
            intercept: 0.0,
            n_points: n,
            x_mean: 0.0,
            s_xx: 1.0e6,
            resid_std: 1.0,
        };
        let (lo, hi) = prediction_interval(&fit, 0.0, 0.95).unwrap();
        let half = 0.5 * (hi - lo);
        let expect = 1.9600 * (1.0 + 1.0 / n as f64).sqrt();
        assert!((half - expect).abs() < 2e-4, "half = {half}");
    }

    #[test]
    fn t_quantile_against_table() {
        // Spot values from the standard t-table.
        let cases = [
            (0.975, 1.0, 12.71),
            (0.975, 5.0, 2.571),
            (0.95, 10.0, 1.812),
            (0.975, 30.0, 2.042),
            (0.995, 3.0, 5.841),
            (0.975, 120.0, 1.980),
        ];
        for (p, df, expect) in cases {
            let t = t_quantile(p, df);
            assert!(
                (t - expect).abs() / expect < 1.5e-3,
                "t({p}, {df}) = {t}, table {expect}"
            );
        }
        // Symmetry.
        assert!((t_quantile(0.025, 7.0) + t_quantile(0.975, 7.0)).abs() < 1e-9);
    }

    fn noisy_fit() -> LinearFit {
        let mut pts = Vec::new();
        for i in 0..40 {
            let x = 50.0 + 10.0 * i as f64;
            let noise = (((i * 2654435761u64 as usize) % 97) as f64 - 48.0) / 2.0;
            pts.push((x, 1.6 * x + 30.0 + noise));
        }
        fit_linear(&pts).unwrap()
    }

    #[test]
    fn interval_nesting() {
        let fit = noisy_fit();
        for x in [60.0, 200.0, 450.0] {
            let (lo95, hi95) = prediction_interval(&fit, x, 0.95).unwrap();
            let (lo99, hi99) = prediction_interval(&fit, x, 0.99).unwrap();
            assert!(lo99 < lo95 && hi99 > hi95);
        }
    }

    #[test]
    fn threshold_degenerate_interval_is_line_inverse() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|i| (100.0 * i as f64, FIXTURE_SLOPE * 100.0 * i as f64))
            .collect();
        let fit = fit_linear(&pts).unwrap();
        let tau = screening_threshold(&fit, 1400.0, 0.95).unwrap();
        assert!((tau - 1400.0 / FIXTURE_SLOPE).abs() < 1e-9);
    }

    #[test]
    fn threshold_below_line_inverse_with_noise() {
        let fit = noisy_fit();
        let tau = screening_threshold(&fit, 700.0, 0.95).unwrap();
        // The upper bound sits above the line, so the crossing is left of the
        // line inverse.
        assert!(tau < (700.0 - fit.intercept) / fit.slope);
        // And the bound at the threshold indeed reaches the definition.
        let (_, hi) = prediction_interval(&fit, tau, 0.95).unwrap();
        assert!((hi - 700.0).abs() < 1e-6);
    }

    #[test]
    fn threshold_monotone_in_level_and_def() {
        let fit = noisy_fit();
        let t99 = screening_threshold(&fit, 700.0, 0.99).unwrap();
        let t95 = screening_threshold(&fit, 700.0, 0.95).unwrap();
        let t80 = screening_threshold(&fit, 700.0, 0.80).unwrap();
        assert!(t99 <= t95 && t95 <= t80);
        let d1 = screening_threshold(&fit, 650.0, 0.95).unwrap();
        let d2 = screening_threshold(&fit, 700.0, 0.95).unwrap();
        let d3 = screening_threshold(&fit, 760.0, 0.95).unwrap();
        assert!(d1 <= d2 && d2 <= d3);
    }

    #[test]
    fn report_counts_and_missing_verification() {
        let fit = noisy_fit();
        let mut recs: Vec<ScreeningInput> = (0..60)
            .map(|i| {
                let fast = 100.0 + 12.0 * i as f64;
                ScreeningInput {
                    id: i,
                    bv_fast_v: fast,
                    bv_full_v: Some(fit.predict(fast)),
                }
            })
            .collect();
        let report =
            screening_report(&recs, &[900.0, 800.0, 700.0], &fit, 0.95, &[2, 3, 3]).unwrap();
        assert_eq!(report.rows.len(), 3);
        for r in &report.rows {
            assert!(r.verified_high_count <= r.fast_search_space_count);
        }
        // Lowering the definition never shrinks the search space.
        assert!(report.rows[1].fast_search_space_count >= report.rows[0].fast_search_space_count);
        assert!(report.rows[2].fast_search_space_count >= report.rows[1].fast_search_space_count);

        // Unverified screened candidate → MissingVerification with its id.
        let top = recs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.bv_fast_v.partial_cmp(&b.1.bv_fast_v).unwrap())
            .unwrap()
            .0;
        recs[top].bv_full_v = None;
        match screening_report(&recs, &[900.0], &fit, 0.95, &[2]) {
            Err(StatsError::MissingVerification(ids)) => assert!(ids.contains(&recs[top].id)),
            other => panic!("expected MissingVerification, got {other:?}"),
        }
    }

    #[test]
    fn report_empty_above_all_observations() {
        let fit = noisy_fit();
        let recs: Vec<ScreeningInput> = (0..20)
            .map(|i| ScreeningInput {
                id: i,
                bv_fast_v: 100.0 + i as f64,
                bv_full_v: Some(200.0),
            })
            .collect();
        // Definition far above anything observed → empty search space
        // (or NotReachable folded to an infinite threshold).
        let report = screening_report(&recs, &[1.0e6], &fit, 0.95, &[0]).unwrap();
        assert_eq!(report.rows[0].fast_search_space_count, 0);
        assert_eq!(report.rows[0].verified_high_count, 0);
        assert!(report.rows[0].gain_ratio.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// 99% interval contains the 95% interval at arbitrary x.
        #[test]
        fn nesting_property(x in -2000.0f64..4000.0) {
            let fit = noisy_fit();
            let (lo95, hi95) = prediction_interval(&fit, x, 0.95).unwrap();
            let (lo99, hi99) = prediction_interval(&fit, x, 0.99).unwrap();
            prop_assert!(lo99 <= lo95 && hi99 >= hi95);
        }
    }
}
