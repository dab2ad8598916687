use std::path::{Path, PathBuf};

use dlm_core::mappings::{Learning, Optimizer, TrainConfig};
use dlm_core::probe::{ProbeTarget, DEFAULT_SHRINKAGE, MIN_CELL_TOKENS};
use dlm_core::production::{ProductionConfig, WeaveLimits};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    /// Letter n-gram size, 3 or 4.
    pub gram_size: usize,
    pub learning: Learning,
    /// Seeds the split and the network.
    pub seed: u64,
    pub split: SplitSpec,
    pub mapping: MappingConfig,
    pub evaluation: EvaluationConfig,
    pub comprehension: ComprehensionConfig,
    pub network: NetworkConfig,
    pub production: ProductionSettings,
    pub probe: ProbeConfig,
    pub productivity: ProductivityConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            paths: Paths::default(),
            gram_size: 3,
            learning: Learning::Eol,
            seed: 1,
            split: SplitSpec::default(),
            mapping: MappingConfig::default(),
            evaluation: EvaluationConfig::default(),
            comprehension: ComprehensionConfig::default(),
            network: NetworkConfig::default(),
            production: ProductionSettings::default(),
            probe: ProbeConfig::default(),
            productivity: ProductivityConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: PathBuf,
    pub embeddings: PathBuf,
    pub lemma_frequencies: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            lexicon: PathBuf::from("lexicon.csv"),
            embeddings: PathBuf::from("embeddings.vec"),
            lemma_frequencies: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Forms with frequency above the threshold train, the rest test.
    Frequency { threshold: u64 },
    /// Random hold-out keeping every lexeme, case and number in training.
    Constrained { fraction: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Constrained { fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub ridge: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig { ridge: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub k: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { k: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComprehensionConfig {
    /// Run EOL and FIL with both gram sizes instead of the configured pair.
    pub grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        NetworkConfig {
            hidden: t.hidden,
            epochs: t.epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
        }
    }
}

impl NetworkConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden.clone(),
            epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed,
        }
    }
}

/// Which what-system predicts the cue supports fed to the weaver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhatSource {
    /// The deep network.
    Network,
    /// A linear production mapping estimated with the top-level `learning`.
    Linear,
    /// The words' own binary form vectors.
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluateOn {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductionSettings {
    pub what: WhatSource,
    /// Estimation of the comprehension mapping used for synthesis-by-analysis.
    pub feedback: Learning,
    pub evaluate_on: EvaluateOn,
    pub threshold: f64,
    pub max_length: usize,
    pub max_candidates: usize,
    pub max_expansions: usize,
}

impl Default for ProductionSettings {
    fn default() -> Self {
        let p = ProductionConfig::default();
        ProductionSettings {
            what: WhatSource::Network,
            feedback: Learning::Eol,
            evaluate_on: EvaluateOn::Test,
            threshold: p.threshold,
            max_length: p.limits.max_length,
            max_candidates: p.limits.max_candidates,
            max_expansions: p.limits.max_expansions,
        }
    }
}

impl ProductionSettings {
    pub fn production_config(&self) -> ProductionConfig {
        ProductionConfig {
            threshold: self.threshold,
            limits: WeaveLimits {
                max_length: self.max_length,
                max_candidates: self.max_candidates,
                max_expansions: self.max_expansions,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub shrinkage: f64,
    pub targets: Vec<ProbeTarget>,
    pub loocv: bool,
    pub shift_vectors: bool,
    pub by_cell: bool,
    pub min_cell_tokens: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            shrinkage: DEFAULT_SHRINKAGE,
            targets: vec![
                ProbeTarget::Class,
                ProbeTarget::Case,
                ProbeTarget::Number,
                ProbeTarget::CaseNumber,
            ],
            loocv: true,
            shift_vectors: true,
            by_cell: true,
            min_cell_tokens: MIN_CELL_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductivityConfig {
    /// Classes with fewer lexemes are left out of the measures.
    pub min_types: u64,
}

impl Default for ProductivityConfig {
    fn default() -> Self {
        ProductivityConfig { min_types: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    ComprehensionTrain,
    ComprehensionTest,
    Production,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub source: ReportSource,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            source: ReportSource::ComprehensionTrain,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Resolve relative input paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.lexicon);
        fix(&mut self.paths.embeddings);
        if let Some(p) = self.paths.lemma_frequencies.as_mut() {
            fix(p);
        }
        fix(&mut self.paths.output);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !matches!(self.gram_size, 3 | 4) {
            return bad(format!("gram_size must be 3 or 4, got {}", self.gram_size));
        }
        if let SplitSpec::Constrained { fraction } = self.split {
            if !(fraction > 0.0 && fraction < 1.0) {
                return bad(format!(
                    "split fraction must lie strictly between 0 and 1, got {fraction}"
                ));
            }
        }
        if !(self.mapping.ridge >= 0.0 && self.mapping.ridge.is_finite()) {
            return bad(format!(
                "ridge must be finite and non-negative, got {}",
                self.mapping.ridge
            ));
        }
        if self.evaluation.k == 0 {
            return bad("evaluation.k must be at least 1".into());
        }
        let n = &self.network;
        if n.hidden.contains(&0) || n.batch_size == 0 || n.epochs == 0 {
            return bad("network needs non-zero hidden sizes, epochs and batch size".into());
        }
        if !(0.0..1.0).contains(&n.validation_fraction) {
            return bad(format!(
                "validation_fraction must lie in [0, 1), got {}",
                n.validation_fraction
            ));
        }
        if !(n.learning_rate > 0.0 && n.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", n.learning_rate));
        }
        if self.production.max_length == 0 || self.production.max_candidates == 0 {
            return bad("production max_length and max_candidates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.probe.shrinkage) {
            return bad(format!(
                "probe shrinkage must lie in [0, 1], got {}",
                self.probe.shrinkage
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            split: SplitSpec::Frequency { threshold: 5 },
            learning: Learning::Fil,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"gram": 3}"#).is_err());
    }

    #[test]
    fn bad_gram_size() {
        let cfg = ExperimentConfig {
            gram_size: 5,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
