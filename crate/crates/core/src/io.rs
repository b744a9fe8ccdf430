//! On-disk formats: records CSV, fit/model/manifest JSON, and the
//! figure-style CSV exports. Plain CSV everywhere — small, diff-able
//! datasets that external tools plot.
//!
//! Numeric CSV fields carry 17 significant digits so every f64 survives a
//! round trip bit-exactly. JSON round-trips are bit-exact via the shortest
//! round-trip float encoding.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::device::DesignVector;
use crate::solver::{BreakdownMode, BreakdownRecord};
use crate::stats::{LinearFit, ScreeningReport};
use crate::sweep::{SpeedupStats, SweepManifest};
use crate::optimize::VerificationRecord;

pub const RECORDS_HEADER: &str = "id,S_um,W_um,D_um,N,sigma_um,mode,bv_V,converged,wall_s,bias_steps";
pub const FIG3_HEADER: &str = "bv_fast_V,bv_full_V,fit_V,pi_lo_V,pi_hi_V";
pub const FIG4_HEADER: &str = "id,fast_wall_s,full_wall_s,speedup";
pub const FIG6_HEADER: &str =
    "v_target_V,surrogate_bv_V,full_bv_V,expected_lo_V,expected_hi_V,in_expected_range";
pub const SCREEN_HEADER: &str =
    "high_bv_V,fast_search_space,verified_high,full_only,gain_ratio";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema mismatch at {path}: {message}")]
    SchemaMismatch { path: String, message: String },
    #[error("{file}: missing column '{column}'")]
    MissingColumn { file: String, column: String },
    #[error("{file} line {line}: {message}")]
    BadRow {
        file: String,
        line: usize,
        message: String,
    },
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// JSON persistence (bit-exact round trips)
// ---------------------------------------------------------------------------

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| IoError::SchemaMismatch {
        path: String::new(),
        message: e.to_string(),
    })?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Deserialize with the offending field path reported on mismatch.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text)
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::SchemaMismatch {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn save_fit(fit: &LinearFit, path: &Path) -> Result<(), IoError> {
    save_json(fit, path)
}

pub fn load_fit(path: &Path) -> Result<LinearFit, IoError> {
    load_json(path)
}

pub fn save_manifest(manifest: &SweepManifest, path: &Path) -> Result<(), IoError> {
    save_json(manifest, path)
}

pub fn load_manifest(path: &Path) -> Result<SweepManifest, IoError> {
    load_json(path)
}

// ---------------------------------------------------------------------------
// Records CSV
// ---------------------------------------------------------------------------

/// One record as a CSV line (with trailing newline). Non-converged rows
/// leave the bv field empty.
pub fn record_csv_line(r: &BreakdownRecord) -> String {
    let mut line = String::with_capacity(160);
    let _ = write!(
        line,
        "{},{},{},{},{},{},{},{},{},{},{}\n",
        r.id,
        fmt_f64(r.design.s_um),
        fmt_f64(r.design.w_um),
        fmt_f64(r.design.d_um),
        r.design.n_rings,
        fmt_f64(r.design.sigma_um),
        r.mode,
        r.bv_v.map(fmt_f64).unwrap_or_default(),
        r.converged,
        fmt_f64(r.wall_s),
        r.bias_steps,
    );
    line
}

pub fn write_records(records: &[BreakdownRecord], path: &Path) -> Result<(), IoError> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&record_csv_line(r));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<BreakdownRecord>, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != RECORDS_HEADER {
        let missing = RECORDS_HEADER
            .split(',')
            .find(|c| !header.split(',').any(|h| h.trim() == *c))
            .unwrap_or("header")
            .to_string();
        return Err(IoError::MissingColumn {
            file,
            column: missing,
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(IoError::BadRow {
                file,
                line: line_no,
                message: format!("expected 11 fields, got {}", fields.len()),
            });
        }
        let bad = |message: String| IoError::BadRow {
            file: file.clone(),
            line: line_no,
            message,
        };
        let parse_f = |s: &str, name: &str| -> Result<f64, IoError> {
            s.parse::<f64>()
                .map_err(|e| bad(format!("{name}: {e}")))
        };
        let mode: BreakdownMode = fields[6].parse().map_err(|e: String| bad(e))?;
        let bv_v = if fields[7].is_empty() {
            None
        } else {
            Some(parse_f(fields[7], "bv_V")?)
        };
        records.push(BreakdownRecord {
            id: fields[0].parse().map_err(|e| bad(format!("id: {e}")))?,
            design: DesignVector {
                s_um: parse_f(fields[1], "S_um")?,
                w_um: parse_f(fields[2], "W_um")?,
                d_um: parse_f(fields[3], "D_um")?,
                n_rings: fields[4].parse().map_err(|e| bad(format!("N: {e}")))?,
                sigma_um: parse_f(fields[5], "sigma_um")?,
            },
            mode,
            bv_v,
            converged: fields[8]
                .parse()
                .map_err(|e| bad(format!("converged: {e}")))?,
            wall_s: parse_f(fields[9], "wall_s")?,
            bias_steps: fields[10]
                .parse()
                .map_err(|e| bad(format!("bias_steps: {e}")))?,
            config_hash: String::new(),
        });
    }
    Ok(records)
}

/// Pair fast/full records by id from a mixed or split record set.
pub fn pair_records(records: &[BreakdownRecord]) -> Vec<(BreakdownRecord, BreakdownRecord)> {
    let mut pairs = Vec::new();
    for f in records.iter().filter(|r| r.mode == BreakdownMode::Fast) {
        if let Some(g) = records
            .iter()
            .find(|r| r.mode == BreakdownMode::Full && r.id == f.id)
        {
            pairs.push((f.clone(), g.clone()));
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Figure-style exports
// ---------------------------------------------------------------------------

/// Fast-vs-full scatter with the fitted line and prediction band.
pub fn export_fig3(
    pairs: &[(f64, f64)],
    fit: &LinearFit,
    level: f64,
    path: &Path,
) -> Result<(), IoError> {
    let mut out = String::from(FIG3_HEADER);
    out.push('\n');
    for &(fast, full) in pairs {
        let (lo, hi) = crate::stats::prediction_interval(fit, fast, level)
            .map_err(|e| IoError::SchemaMismatch {
                path: "fit".into(),
                message: e.to_string(),
            })?;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(fast),
            fmt_f64(full),
            fmt_f64(fit.predict(fast)),
            fmt_f64(lo),
            fmt_f64(hi)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Wall-time scatter, one row per paired record.
pub fn export_fig4(stats: &SpeedupStats, path: &Path) -> Result<(), IoError> {
    let mut out = String::from(FIG4_HEADER);
    out.push('\n');
    for r in &stats.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.id,
            fmt_f64(r.fast_wall_s),
            fmt_f64(r.full_wall_s),
            fmt_f64(r.ratio)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn fig6_row(v: &VerificationRecord, surrogate_bv_v: f64) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        fmt_f64(v.v_target_v),
        fmt_f64(surrogate_bv_v),
        v.full_bv_v.map(fmt_f64).unwrap_or_default(),
        fmt_f64(v.expected_lo_v),
        fmt_f64(v.expected_hi_v),
        v.in_expected_range
    )
}

/// Target-vs-verified-BV table with the expected band; appends, creating the
/// file (with header) on first use so verification campaigns accumulate.
pub fn append_fig6(
    v: &VerificationRecord,
    surrogate_bv_v: f64,
    path: &Path,
) -> Result<(), IoError> {
    let mut text = if path.exists() {
        std::fs::read_to_string(path)?
    } else {
        format!("{FIG6_HEADER}\n")
    };
    text.push_str(&fig6_row(v, surrogate_bv_v));
    std::fs::write(path, text)?;
    Ok(())
}

pub fn export_screening(report: &ScreeningReport, path: &Path) -> Result<(), IoError> {
    let mut out = String::from(SCREEN_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.high_bv_def_v),
            r.fast_search_space_count,
            r.verified_high_count,
            r.full_only_count,
            r.gain_ratio.map(fmt_f64).unwrap_or_default()
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: usize, bv: Option<f64>) -> BreakdownRecord {
        BreakdownRecord {
            id,
            design: DesignVector::new(1.385, 3.49, 0.85, 30, 0.097),
            mode: BreakdownMode::Fast,
            bv_v: bv,
            converged: bv.is_some(),
            wall_s: 2.5,
            bias_steps: 17,
            config_hash: String::new(),
        }
    }

    #[test]
    fn records_round_trip() {
        let dir = std::env::temp_dir().join("bvforge_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("records.csv");
        let recs = vec![record(0, Some(1234.5678901234567)), record(1, None)];
        write_records(&recs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(RECORDS_HEADER));
        let back = read_records(&path).unwrap();
        assert_eq!(back, recs);
        // Non-converged row: converged=false, bv empty.
        assert!(!back[1].converged);
        assert_eq!(back[1].bv_v, None);
        let line2 = text.lines().nth(2).unwrap();
        assert!(line2.contains(",,"), "empty bv field expected: {line2}");
    }

    #[test]
    fn header_mismatch_reports_missing_column() {
        let dir = std::env::temp_dir().join("bvforge_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "id,S_um,W_um\n").unwrap();
        match read_records(&path) {
            Err(IoError::MissingColumn { column, .. }) => assert_eq!(column, "D_um"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn fit_json_round_trip_bit_exact() {
        let dir = std::env::temp_dir().join("bvforge_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fit.json");
        let fit = LinearFit {
            slope: 1.5893,
            intercept: -12.345678901234567,
            n_points: 57,
            x_mean: 833.3333333333334,
            s_xx: 1.2345678901234567e8,
            resid_std: 45.678901234567895,
        };
        save_fit(&fit, &path).unwrap();
        let back = load_fit(&path).unwrap();
        assert_eq!(fit, back);
    }

    #[test]
    fn schema_mismatch_names_the_path() {
        let err = parse_json::<LinearFit>(r#"{"slope": "oops"}"#).unwrap_err();
        match err {
            IoError::SchemaMismatch { path, .. } => assert!(path.contains("slope")),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// 17-significant-digit CSV fields reproduce any finite f64.
        #[test]
        fn f64_fields_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits());
        }
    }
}
