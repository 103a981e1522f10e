use std::path::Path;

use serde::{Deserialize, Serialize};

use satneuro_cnn::SgdHyper;
use satneuro_core::encoding::{Encoder, PreprocessParams, TemParams};
use satneuro_snn::TrainHyper;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { samples: 4000, seed: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnConfig {
    pub encoder: Encoder,
    /// Simulation steps T.
    pub steps: usize,
    pub preprocess: PreprocessParams,
    pub init_gain: f64,
    pub init_seed: u64,
    /// Rate-encoder stream of sample `i` is seeded with `encode_seed ^ i`.
    pub encode_seed: u64,
    pub train: TrainHyper,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            encoder: Encoder::Tem(TemParams::default()),
            steps: 8,
            preprocess: PreprocessParams { percentile: 99.0, ds: 32 },
            init_gain: 1.0,
            init_seed: 1,
            encode_seed: 0,
            train: TrainHyper::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub preprocess: PreprocessParams,
    pub init_seed: u64,
    pub train: SgdHyper,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self { preprocess: PreprocessParams { percentile: 99.0, ds: 3 }, init_seed: 1, train: SgdHyper::default() }
    }
}

/// Every hyperparameter of a run. Missing keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub snn: SnnConfig,
    pub cnn: CnnConfig,
}

impl RunConfig {
    /// TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let c: RunConfig = toml::from_str(
            r#"
            [snn]
            steps = 32
            [snn.encoder]
            kind = "rate"
            [cnn.train]
            epochs = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.snn.steps, 32);
        assert_eq!(c.snn.encoder, Encoder::Rate);
        assert_eq!(c.snn.train, TrainHyper::default());
        assert_eq!(c.cnn.train.epochs, 3);
        assert_eq!(c.cnn.train.batch_size, 128);
        assert_eq!(c.data, DataConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[snn]\nstep = 3").is_err());
    }
}
