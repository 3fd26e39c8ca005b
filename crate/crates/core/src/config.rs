//! Experiment configuration file: TOML with one table per module.
//!
//! ```toml
//! [dataset]
//! n_ur = 100
//!
//! [trainer]
//! n_iter = 300
//! alpha_reg = 0.1
//! ```
//!
//! Every key is optional and defaults to the library default; unknown keys
//! and tables are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::GeneratorConfig;
use crate::error::{FtlError, Result};
use crate::evaluation::{CenterMethod, CenterStudyConfig, FeatureSpace, DEFAULT_SUBSET_SIZES};
use crate::network::{LossWeights, NetworkConfig};
use crate::trainer::TrainConfig;
use crate::transfer::TransferConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub pretrain_iters: usize,
    pub n_iter: usize,
    pub total_alternations: usize,
    pub batch_size: usize,
    pub lr_pretrain: f64,
    pub lr_alternate: f64,
    pub pretrain_min_drop: f64,
    pub alpha_sfmx: f64,
    pub alpha_recon: f64,
    pub alpha_reg: f64,
    pub seed: u64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainerSection {
            pretrain_iters: t.pretrain_iters,
            n_iter: t.n_iter,
            total_alternations: t.total_alternations,
            batch_size: t.batch_size,
            lr_pretrain: t.lr_pretrain,
            lr_alternate: t.lr_alternate,
            pretrain_min_drop: t.pretrain_min_drop,
            alpha_sfmx: t.loss_weights.alpha_sfmx,
            alpha_recon: t.loss_weights.alpha_recon,
            alpha_reg: t.loss_weights.alpha_reg,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub space: FeatureSpace,
    pub subset_sizes: Vec<usize>,
    pub methods: Vec<CenterMethod>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            space: FeatureSpace::default(),
            subset_sizes: DEFAULT_SUBSET_SIZES.to_vec(),
            methods: CenterMethod::ALL.to_vec(),
            repetitions: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: GeneratorConfig,
    pub network: NetworkConfig,
    pub transfer: TransferConfig,
    pub trainer: TrainerSection,
    pub evaluation: EvaluationSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| FtlError::ConfigInvalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FtlError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            FtlError::ConfigInvalid(m) => FtlError::ConfigInvalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train_config().validate()?;
        self.center_study_config(1).validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.trainer;
        TrainConfig {
            pretrain_iters: t.pretrain_iters,
            n_iter: t.n_iter,
            total_alternations: t.total_alternations,
            batch_size: t.batch_size,
            lr_pretrain: t.lr_pretrain,
            lr_alternate: t.lr_alternate,
            pretrain_min_drop: t.pretrain_min_drop,
            loss_weights: LossWeights::new(t.alpha_sfmx, t.alpha_recon, t.alpha_reg),
            network: self.network.clone(),
            transfer: self.transfer.clone(),
            seed: t.seed,
        }
    }

    pub fn center_study_config(&self, jobs: usize) -> CenterStudyConfig {
        let e = &self.evaluation;
        CenterStudyConfig {
            subset_sizes: e.subset_sizes.clone(),
            methods: e.methods.clone(),
            repetitions: e.repetitions,
            seed: e.seed,
            transfer: self.transfer.clone(),
            jobs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.train_config(), TrainConfig::default());
    }

    #[test]
    fn partial_sections_override() {
        let cfg = ExperimentConfig::parse("[dataset]\nn_ur = 7\n[trainer]\nalpha_reg = 0.5\n").unwrap();
        assert_eq!(cfg.dataset.n_ur, 7);
        assert_eq!(cfg.train_config().loss_weights.alpha_reg, 0.5);
        assert_eq!(cfg.dataset.n_regular, GeneratorConfig::default().n_regular);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[dataset]\nn_urr = 3\n", "[bogus]\n", "seed = 1\n"] {
            assert!(matches!(ExperimentConfig::parse(text), Err(FtlError::ConfigInvalid(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::parse("[trainer]\nbatch_size = 0\n").is_err());
        assert!(ExperimentConfig::parse("[transfer]\nenergy = 1.5\n").is_err());
        assert!(ExperimentConfig::parse("[dataset]\nsamples_per_ur = 30\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.trainer.lr_alternate = 3e-5;
        cfg.transfer.k_override = Some(4);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
