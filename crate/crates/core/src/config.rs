//! Experiment configuration, read from a TOML file.
//!
//! Every section is optional and falls back to the defaults below; unknown
//! keys anywhere are rejected. [`ExperimentConfig::validate`] runs before any
//! work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{ModelConfig, RunOptions, ScenarioSpec};
use crate::features::{FeatureExtractor, FeatureKind, FeatureParams};
use crate::manifest::QualityFilter;
use crate::models::{MlpGrid, ModelFamily, SvmGrid};
use crate::preprocess::SegmenterConfig;
use crate::synth::SynthConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub svm: SvmGrid,
    pub mlp: MlpGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
    /// Canonical rate every clip is resampled to.
    pub sample_rate: u32,
    /// Manifest CSVs; relative paths resolve against the config file.
    pub manifests: Vec<PathBuf>,
    /// Generated two-class corpus, added to the manifest data when present.
    pub synthetic: Option<SynthConfig>,
    pub feature_kinds: Vec<FeatureKind>,
    pub model_families: Vec<ModelFamily>,
    /// Scenario ids 1-6.
    pub scenarios: Vec<u8>,
    pub split_fraction: f64,
    pub quality: QualityFilter,
    pub segmenter: SegmenterConfig,
    pub features: FeatureParams,
    pub options: RunOptions,
    pub models: ModelConfig,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            jobs: 0,
            sample_rate: crate::CANONICAL_SAMPLE_RATE,
            manifests: Vec::new(),
            synthetic: None,
            feature_kinds: FeatureKind::ALL.to_vec(),
            model_families: ModelFamily::ALL.to_vec(),
            scenarios: (1..=6).collect(),
            split_fraction: 0.8,
            quality: QualityFilter::default(),
            segmenter: SegmenterConfig::default(),
            features: FeatureParams::default(),
            options: RunOptions::default(),
            models: ModelConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and validates a config file, resolving manifest paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for m in &mut cfg.manifests {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 {
            return err("sample_rate must be positive".into());
        }
        if self.feature_kinds.is_empty() {
            return err("feature_kinds is empty".into());
        }
        if self.model_families.is_empty() {
            return err("model_families is empty".into());
        }
        if self.scenarios.is_empty() {
            return err("scenarios is empty".into());
        }
        for &id in &self.scenarios {
            ScenarioSpec::standard(id, self.seed).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return err(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.manifests.is_empty() && self.synthetic.is_none() {
            return err("no data source: give manifests or a [synthetic] section".into());
        }
        self.segmenter.validate().map_err(Error::Config)?;
        if let Some(s) = &self.synthetic {
            s.validate().map_err(Error::Config)?;
        }
        FeatureExtractor::new(&self.features, self.sample_rate).map_err(|e| Error::Config(e.to_string()))?;
        self.models.mlp.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.models.svm.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Scenario specs in the configured order, sharing the experiment seed.
    pub fn scenario_specs(&self) -> Vec<ScenarioSpec> {
        self.scenarios
            .iter()
            .map(|&id| ScenarioSpec {
                split_fraction: self.split_fraction,
                ..ScenarioSpec::standard(id, self.seed).expect("validated")
            })
            .collect()
    }

    /// Synthetic corpus settings with the experiment's sample rate.
    pub fn synth_config(&self) -> Option<SynthConfig> {
        self.synthetic.clone().map(|s| SynthConfig {
            sample_rate: self.sample_rate,
            ..s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig {
            synthetic: Some(SynthConfig::default()),
            ..ExperimentConfig::default()
        };
        let text = cfg.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_kinds_rejected() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[segmenter]\nk_onn = 2.0").is_err());
        assert!(ExperimentConfig::from_toml_str("feature_kinds = [\"mfcc\", \"zcr\"]").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let base = ExperimentConfig {
            synthetic: Some(SynthConfig::default()),
            ..ExperimentConfig::default()
        };
        assert!(ExperimentConfig { scenarios: vec![7], ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { split_fraction: 1.0, ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { synthetic: None, ..base.clone() }.validate().is_err());
        let mut bad = base;
        bad.features.n_fft = 1000;
        assert!(bad.validate().is_err());
    }
}
