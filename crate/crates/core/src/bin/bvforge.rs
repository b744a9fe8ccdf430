//! Pipeline driver. Each subcommand fronts one library operation; all
//! science-affecting settings come from the JSON config (or a bundled
//! profile) plus explicit seed flags, never from the environment.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bvforge::config::PipelineConfig;
use bvforge::device::{build_structure, DesignVector};
use bvforge::io;
use bvforge::optimize::{inverse_design, verify_design, InverseDesignResult, VerificationRecord};
use bvforge::solver::{
    analytic_1d, bias_for_peak_field, calibrate_alpha, export_field, solve_poisson,
    BreakdownMode,
};
use bvforge::stats::{fit_linear, screening_report, ScreeningInput};
use bvforge::surrogate::{cross_validate, normalize_dataset, train, tune_lambda, MlpSurrogate};
use bvforge::sweep::{geometry_for_mode, run_sweep, sample_designs, speedup_stats};

#[derive(Parser)]
#[command(name = "bvforge", version, about = "Guard-ring GaN diode BV design pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; overrides the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled profile when no config file is given.
    #[arg(long, default_value = "desk")]
    profile: String,
}

#[derive(Subcommand)]
enum Command {
    /// Sample designs and run a breakdown campaign.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short = 'n')]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "fast")]
        mode: BreakdownMode,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bisect the ionization exponent to a target 1D full-mode BV.
    CalibrateAlpha {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 2100.0)]
        target: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the fast→full linear relationship from paired records.
    Fit {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Optional scatter+band export (fig3-style CSV).
        #[arg(long)]
        fig3: Option<PathBuf>,
        /// Optional wall-time scatter export (fig4-style CSV).
        #[arg(long)]
        fig4: Option<PathBuf>,
    },
    /// Screening-gain report for one or more high-BV definitions.
    Screen {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, num_args = 1.., value_name = "V")]
        high_bv: Vec<f64>,
        /// Full-only baseline count per definition (defaults to the count of
        /// full-mode records at or above each definition).
        #[arg(long, num_args = 0..)]
        baseline: Vec<usize>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the MLP surrogate on fast-model records.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Tune λ over {1e-5, 1e-4, 1e-3} by cross-validation first.
        #[arg(long)]
        tune: bool,
    },
    /// Cross-validate the surrogate (k folds × repeats + final 80/20 test).
    Cv {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse-design a structure for a target fast-model BV.
    Invert {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify an inverse-designed structure with the full model.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        design: PathBuf,
        /// Append the outcome to a fig6-style CSV.
        #[arg(long)]
        fig6_append: Option<PathBuf>,
    },
    /// Solve one structure at a bias and export the field map + cut line.
    ExportField {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Design as S,W,D,N,sigma (alternatively --design).
        #[arg(long, value_delimiter = ',', num_args = 5, allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        bias: f64,
        /// Cut depth in µm; defaults to the anode junction bottom.
        #[arg(long)]
        cut_depth: Option<f64>,
        #[arg(long, default_value = "fast")]
        mode: BreakdownMode,
        /// Output prefix; writes <prefix>_grid.csv and <prefix>_cut.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Depletion-approximation closed forms for the ideal 1D diode.
    Oracle1d {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        bias: f64,
    },
}

// ---------------------------------------------------------------------------
// Error plumbing: exit code 2 = missing file, 3 = schema, 4 = domain.
// ---------------------------------------------------------------------------

struct CliError {
    kind: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    fn missing_file(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            kind: "missing-file",
            message: format!("{}: {e}", path.display()),
            code: 2,
        }
    }
    fn schema(message: String) -> Self {
        Self {
            kind: "schema",
            message,
            code: 3,
        }
    }
    fn domain(message: String) -> Self {
        Self {
            kind: "domain",
            message,
            code: 4,
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        match e {
            io::IoError::Io(inner) => Self {
                kind: "missing-file",
                message: inner.to_string(),
                code: 2,
            },
            io::IoError::SchemaMismatch { .. }
            | io::IoError::MissingColumn { .. }
            | io::IoError::BadRow { .. } => Self::schema(e.to_string()),
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, CliError> {
    let cfg = match &args.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::missing_file(path, "no such file"));
            }
            io::load_json::<PipelineConfig>(path)?
        }
        None => PipelineConfig::by_profile(&args.profile)
            .ok_or_else(|| CliError::domain(format!("unknown profile '{}'", args.profile)))?,
    };
    cfg.validate().map_err(CliError::domain)?;
    Ok(cfg)
}

/// Inverse-design output file: the result plus everything verification
/// needs (config echo, calibration fit, accumulated verifications).
#[derive(Serialize, Deserialize)]
struct DesignFile {
    result: InverseDesignResult,
    fit: bvforge::stats::LinearFit,
    level: f64,
    de: bvforge::config::DeSection,
    bounds: bvforge::sweep::DesignBounds,
    config_hash: String,
    #[serde(default)]
    verifications: Vec<VerificationRecord>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error {}",
                serde_json::json!({ "kind": e.kind, "message": e.message })
            );
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Sweep {
            cfg,
            n,
            seed,
            mode,
            workers,
            out,
        } => {
            let config = load_config(&cfg)?;
            let count = n.unwrap_or(config.sweep.count);
            let seed = seed.unwrap_or(config.sweep.seed);
            let workers = workers.unwrap_or(config.sweep.workers);
            std::fs::create_dir_all(&out).map_err(|e| CliError::missing_file(&out, e))?;
            let designs = sample_designs(&config.sweep.bounds, count, seed);
            let stream = out.join("records.partial.csv");
            let output = run_sweep(&designs, mode, workers, &config, seed, Some(&stream))
                .map_err(|e| CliError::domain(e.to_string()))?;
            io::write_records(&output.records, &out.join("records.csv"))?;
            io::save_manifest(&output.manifest, &out.join("manifest.json"))?;
            let converged = output.records.iter().filter(|r| r.converged).count();
            println!(
                "sweep: {count} designs, mode {mode}, {converged} converged ({:.1}%), out {}",
                100.0 * converged as f64 / count.max(1) as f64,
                out.display()
            );
            Ok(())
        }
        Command::CalibrateAlpha { cfg, target, out } => {
            let config = load_config(&cfg)?;
            let geom = geometry_for_mode(
                &config.geometry,
                BreakdownMode::Full,
                config.ramp.full_grid_refine,
            );
            let calibrated = calibrate_alpha(&config.material, target, &geom, &config.ramp)
                .map_err(|e| CliError::domain(e.to_string()))?;
            io::save_json(&calibrated, &out)?;
            println!(
                "calibrate-alpha: target {target} V -> alpha_b = {:.6e} V/cm ({})",
                calibrated.alpha_b_v_per_cm,
                out.display()
            );
            Ok(())
        }
        Command::Fit {
            records,
            out,
            level,
            fig3,
            fig4,
        } => {
            let recs = io::read_records(&records)?;
            let pairs_rec = io::pair_records(&recs);
            let pairs: Vec<(f64, f64)> = pairs_rec
                .iter()
                .filter_map(|(f, g)| match (f.bv_v, g.bv_v) {
                    (Some(a), Some(b)) => Some((a, b)),
                    _ => None,
                })
                .collect();
            if pairs.len() < 2 {
                return Err(CliError::domain(format!(
                    "need ≥ 2 converged fast/full pairs, got {}",
                    pairs.len()
                )));
            }
            let fit = fit_linear(&pairs).map_err(|e| CliError::domain(e.to_string()))?;
            io::save_fit(&fit, &out)?;
            println!(
                "fit: n = {}, slope = {:.4}, intercept = {:.2} V, resid_std = {:.2} V",
                fit.n_points, fit.slope, fit.intercept, fit.resid_std
            );
            if let Some(p) = fig3 {
                io::export_fig3(&pairs, &fit, level, &p)?;
            }
            if let Some(p) = fig4 {
                let fast: Vec<_> = pairs_rec.iter().map(|(f, _)| f.clone()).collect();
                let full: Vec<_> = pairs_rec.iter().map(|(_, g)| g.clone()).collect();
                let stats =
                    speedup_stats(&fast, &full).map_err(|e| CliError::domain(e.to_string()))?;
                io::export_fig4(&stats, &p)?;
            }
            Ok(())
        }
        Command::Screen {
            fit,
            records,
            high_bv,
            baseline,
            level,
            out,
        } => {
            if high_bv.is_empty() {
                return Err(CliError::domain("at least one --high-bv required".into()));
            }
            let fit = io::load_fit(&fit)?;
            let recs = io::read_records(&records)?;
            let inputs: Vec<ScreeningInput> = recs
                .iter()
                .filter(|r| r.mode == BreakdownMode::Fast && r.bv_v.is_some())
                .map(|f| ScreeningInput {
                    id: f.id,
                    bv_fast_v: f.bv_v.unwrap(),
                    bv_full_v: recs
                        .iter()
                        .find(|r| r.mode == BreakdownMode::Full && r.id == f.id)
                        .and_then(|r| r.bv_v),
                })
                .collect();
            let baselines: Vec<usize> = if baseline.is_empty() {
                high_bv
                    .iter()
                    .map(|&def| {
                        recs.iter()
                            .filter(|r| r.mode == BreakdownMode::Full)
                            .filter(|r| r.bv_v.map(|bv| bv >= def).unwrap_or(false))
                            .count()
                    })
                    .collect()
            } else if baseline.len() == high_bv.len() {
                baseline
            } else {
                return Err(CliError::domain(
                    "--baseline must match --high-bv in length".into(),
                ));
            };
            let report = screening_report(&inputs, &high_bv, &fit, level, &baselines)
                .map_err(|e| CliError::domain(e.to_string()))?;
            io::export_screening(&report, &out)?;
            for r in &report.rows {
                println!(
                    "screen: def {} V -> search space {}, verified {}, baseline {}, gain {}",
                    r.high_bv_def_v,
                    r.fast_search_space_count,
                    r.verified_high_count,
                    r.full_only_count,
                    r.gain_ratio
                        .map(|g| format!("{g:.2}x"))
                        .unwrap_or_else(|| "n/a".into())
                );
            }
            Ok(())
        }
        Command::Train {
            cfg,
            records,
            out,
            tune,
        } => {
            let config = load_config(&cfg)?;
            let recs: Vec<_> = io::read_records(&records)?
                .into_iter()
                .filter(|r| r.mode == BreakdownMode::Fast)
                .collect();
            let dataset =
                normalize_dataset(&recs).map_err(|e| CliError::domain(e.to_string()))?;
            let mut tc = config.training;
            if tune {
                let (best, grid) = tune_lambda(&dataset, &tc, &[1e-5, 1e-4, 1e-3])
                    .map_err(|e| CliError::domain(e.to_string()))?;
                for (l, score) in &grid {
                    println!("train: lambda {l:.0e} -> mean CV R² {score:.4}");
                }
                tc.lambda = best;
            }
            let model = train(&dataset, &tc).map_err(|e| CliError::domain(e.to_string()))?;
            io::save_json(&model, &out)?;
            println!(
                "train: {} usable records ({} non-converged dropped), lambda {:.0e}, model {}",
                dataset.len(),
                dataset.dropped_non_converged,
                tc.lambda,
                out.display()
            );
            Ok(())
        }
        Command::Cv { cfg, records, out } => {
            let config = load_config(&cfg)?;
            let recs: Vec<_> = io::read_records(&records)?
                .into_iter()
                .filter(|r| r.mode == BreakdownMode::Fast)
                .collect();
            let dataset =
                normalize_dataset(&recs).map_err(|e| CliError::domain(e.to_string()))?;
            let report = cross_validate(&dataset, &config.training)
                .map_err(|e| CliError::domain(e.to_string()))?;
            io::save_json(&report, &out)?;
            println!(
                "cv: {} scores, mean R² {:.4} ± {:.4}, final test R² {:.4}",
                report.fold_scores.len(),
                report.mean,
                report.std,
                report.final_test_r2
            );
            Ok(())
        }
        Command::Invert {
            cfg,
            model,
            fit,
            target,
            level,
            out,
        } => {
            let config = load_config(&cfg)?;
            let model: MlpSurrogate = io::load_json(&model)?;
            let fit = io::load_fit(&fit)?;
            let result = inverse_design(&model, target, &config.de, &config.sweep.bounds)
                .map_err(|e| CliError::domain(e.to_string()))?;
            println!(
                "invert: target {target} V -> (S {:.3}, W {:.3}, D {:.3}, N {}, sigma {:.4}), surrogate {:.1} V, residual {:.2} V",
                result.design.s_um,
                result.design.w_um,
                result.design.d_um,
                result.design.n_rings,
                result.design.sigma_um,
                result.surrogate_bv_v,
                result.objective_residual_v
            );
            let file = DesignFile {
                result,
                fit,
                level,
                de: config.de,
                bounds: config.sweep.bounds,
                config_hash: config.hash(),
                verifications: Vec::new(),
            };
            io::save_json(&file, &out)?;
            Ok(())
        }
        Command::Verify {
            cfg,
            design,
            fig6_append,
        } => {
            let config = load_config(&cfg)?;
            let mut file: DesignFile = io::load_json(&design)?;
            let record = verify_design(&file.result, &file.fit, &config, file.level)
                .map_err(|e| CliError::domain(e.to_string()))?;
            println!(
                "verify: target {} V, full BV {}, expected [{:.1}, {:.1}] V, in range: {}",
                record.v_target_v,
                record
                    .full_bv_v
                    .map(|v| format!("{v:.1} V"))
                    .unwrap_or_else(|| "unconverged".into()),
                record.expected_lo_v,
                record.expected_hi_v,
                record.in_expected_range
            );
            if let Some(p) = fig6_append {
                io::append_fig6(&record, file.result.surrogate_bv_v, &p)?;
            }
            file.verifications.push(record);
            io::save_json(&file, &design)?;
            Ok(())
        }
        Command::ExportField {
            cfg,
            params,
            design,
            bias,
            cut_depth,
            mode,
            out,
        } => {
            let config = load_config(&cfg)?;
            let dv = match (params, design) {
                (Some(p), None) => DesignVector::new(
                    p[0],
                    p[1],
                    p[2],
                    p[3].round().max(0.0) as u32,
                    p[4],
                ),
                (None, Some(path)) => {
                    let file: DesignFile = io::load_json(&path)?;
                    file.result.design
                }
                _ => {
                    return Err(CliError::domain(
                        "provide exactly one of --params or --design".into(),
                    ))
                }
            };
            bvforge::device::validate_design(&dv)
                .map_err(|e| CliError::domain(e.to_string()))?;
            let geom_opts =
                geometry_for_mode(&config.geometry, mode, config.ramp.full_grid_refine);
            let (geom, doping) = build_structure(&dv, &geom_opts)
                .map_err(|e| CliError::domain(e.to_string()))?;
            let newton = config.ramp.newton();
            let solution = solve_poisson(&geom, &doping, &config.material, bias, None, &newton)
                .map_err(|e| CliError::domain(e.to_string()))?;
            let cut = cut_depth.unwrap_or(config.geometry.anode_depth_um);
            let grid_path = out.with_file_name(format!(
                "{}_grid.csv",
                out.file_name().unwrap_or_default().to_string_lossy()
            ));
            let cut_path = out.with_file_name(format!(
                "{}_cut.csv",
                out.file_name().unwrap_or_default().to_string_lossy()
            ));
            export_field(&geom, &solution, cut, &grid_path, &cut_path)
                .map_err(|e| CliError::domain(e.to_string()))?;
            println!(
                "export-field: bias {bias} V, peak |E| {:.3e} V/cm at ({:.2}, {:.2}) µm -> {} + {}",
                solution.peak_field_v_per_cm,
                geom.xs_um[solution.peak_ix],
                geom.ys_um[solution.peak_iy],
                grid_path.display(),
                cut_path.display()
            );
            Ok(())
        }
        Command::Oracle1d { cfg, bias } => {
            let config = load_config(&cfg)?;
            let nd = config.geometry.drift_doping_per_cm3;
            let drift = config.geometry.drift_thickness_um;
            let a = analytic_1d(&config.material, nd, drift, bias);
            let bv_fast = bias_for_peak_field(
                &config.material,
                nd,
                drift,
                config.material.e_crit_v_per_cm,
            );
            println!(
                "oracle1d: bias {bias} V -> depletion width {:.4} um, peak field {:.4e} V/cm, punch_through {}",
                a.depletion_width_um, a.peak_field_v_per_cm, a.punch_through
            );
            println!(
                "oracle1d: fast-criterion BV (peak field = E_crit) = {bv_fast:.1} V"
            );
            Ok(())
        }
    }
}
