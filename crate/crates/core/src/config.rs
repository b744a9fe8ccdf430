//! Pipeline configuration: material, geometry, ramp, sweep, training, and
//! differential-evolution sections, with two bundled profiles.
//!
//! `desk` is CI-scale (ring count capped at 8, grid at the invariant limits);
//! `full` covers the complete design bounds on a finer grid. Unknown keys in
//! a config file are rejected, and every run output embeds the resolved
//! config hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{GeometryOptions, GridOptions, MaterialConfig};
use crate::solver::RampOptions;
use crate::surrogate::TrainConfig;
use crate::sweep::DesignBounds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub bounds: DesignBounds,
    pub count: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeSection {
    /// Population size = this × dimension count.
    pub pop_per_dim: usize,
    pub mutation_factor: f64,
    pub crossover_rate: f64,
    pub max_generations: usize,
    /// Convergence tolerance on the normalized population objective spread.
    pub tol: f64,
    pub seed: u64,
}

impl Default for DeSection {
    fn default() -> Self {
        Self {
            pop_per_dim: 15,
            mutation_factor: 0.8,
            crossover_rate: 0.9,
            max_generations: 300,
            tol: 1.0e-3,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub profile: String,
    pub material: MaterialConfig,
    pub geometry: GeometryOptions,
    pub ramp: RampOptions,
    pub sweep: SweepSection,
    pub training: TrainConfig,
    pub de: DeSection,
}

impl PipelineConfig {
    /// CI-scale profile: ring count capped at 8, grid at the invariant
    /// bounds (0.05 µm junction windows, 1 µm cap).
    pub fn desk() -> Self {
        Self {
            profile: "desk".to_string(),
            material: MaterialConfig::default(),
            geometry: GeometryOptions::default(),
            ramp: RampOptions::default(),
            sweep: SweepSection {
                bounds: DesignBounds::desk(),
                count: 300,
                seed: 42,
                workers: 1,
            },
            training: TrainConfig::default(),
            de: DeSection::default(),
        }
    }

    /// Paper-scale bounds on a finer grid. Campaigns at this profile are
    /// multi-hour; it exists for real runs, not the test suite.
    pub fn full() -> Self {
        let mut cfg = Self::desk();
        cfg.profile = "full".to_string();
        cfg.sweep.bounds = DesignBounds::default();
        cfg.sweep.count = 3530;
        cfg.geometry.grid = GridOptions {
            fine_spacing_um: 0.025,
            max_spacing_um: 0.5,
            growth_ratio: 1.2,
        };
        cfg
    }

    pub fn by_profile(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    /// SHA-256 of the canonical JSON serialization; embedded in manifests
    /// and records so any output traces back to its exact configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        self.material.validate()?;
        if !(self.ramp.initial_step_v > 0.0 && self.ramp.min_step_v > 0.0) {
            return Err("ramp step sizes must be positive".into());
        }
        if self.ramp.full_grid_refine < 1.0 {
            return Err("ramp.full_grid_refine must be ≥ 1".into());
        }
        if self.sweep.workers == 0 {
            return Err("sweep.workers must be ≥ 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_hash_stably() {
        let desk = PipelineConfig::desk();
        let full = PipelineConfig::full();
        desk.validate().unwrap();
        full.validate().unwrap();
        assert_eq!(desk.hash(), PipelineConfig::desk().hash());
        assert_ne!(desk.hash(), full.hash());
        assert_eq!(desk.hash().len(), 64);
    }

    #[test]
    fn json_round_trip() {
        let cfg = PipelineConfig::desk();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value =
            serde_json::to_value(PipelineConfig::desk()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        let res: Result<PipelineConfig, _> = serde_json::from_value(v);
        assert!(res.is_err());
    }
}
