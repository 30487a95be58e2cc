use std::path::Path;

use ampgen_core::conditioning::PropertyRanges;
use ampgen_core::diffusion::DenoiserTrainConfig;
use ampgen_core::evaluation::{DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use ampgen_core::features::DEFAULT_EMA_ALPHA;
use ampgen_core::{CadsConfig, ToyConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every tunable parameter, one TOML section per module.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub features: FeatureSettings,
    pub negatives: NegativeSettings,
    pub ranges: PropertyRanges,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub denoiser: ToyConfig,
    pub denoiser_train: DenoiserTrainConfig,
    pub cads: CadsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSettings {
    pub ema_alpha: f64,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            ema_alpha: DEFAULT_EMA_ALPHA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NegativeSettings {
    /// Full-scale count per synthetic source.
    pub per_source: usize,
    /// Desk-scale factor applied to `per_source`.
    pub scale: f64,
}

impl Default for NegativeSettings {
    fn default() -> Self {
        NegativeSettings {
            per_source: 100_000,
            scale: 0.01,
        }
    }
}

impl NegativeSettings {
    pub fn count(&self) -> Result<usize, CliError> {
        let n = (self.per_source as f64 * self.scale).round();
        if !(n >= 1.0 && n.is_finite()) {
            return Err(CliError::Runtime(format!(
                "negatives.per_source * negatives.scale must be at least 1, got {n}"
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Runtime(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let c: PipelineConfig = toml::from_str(
            "[train]\nmax_estimators = 7\n[cads]\nenabled = false\n[ranges]\nlength = { lo = 5, hi = 9 }\n",
        )
        .unwrap();
        assert_eq!(c.train.max_estimators, 7);
        assert_eq!(c.train.max_depth, TrainConfig::default().max_depth);
        assert!(!c.cads.enabled);
        assert_eq!(c.ranges.length.unwrap().hi, 9);
        assert!(toml::from_str::<PipelineConfig>("[train]\nmax_trees = 7\n").is_err());
        assert!(toml::from_str::<PipelineConfig>("[bogus]\n").is_err());
    }

    #[test]
    fn desk_scale_negative_count() {
        assert_eq!(NegativeSettings::default().count().unwrap(), 1000);
    }
}
