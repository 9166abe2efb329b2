use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::AugmentationConfig;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::model::ModelConfig;
use crate::numerics::AdamWConfig;

/// Everything a pretraining run depends on besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub feature: FeatureSpec,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub base_lr: f64,
    #[serde(default)]
    pub min_lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    /// Global-norm gradient clip; off when absent.
    #[serde(default)]
    pub clip_grad: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub deterministic: bool,
    /// Save a checkpoint every this many steps (0: only at the end).
    #[serde(default)]
    pub checkpoint_interval: usize,
    /// Estimate per-channel input standardization from the training scenes
    /// when the model config does not fix one.
    #[serde(default = "default_true")]
    pub normalize_inputs: bool,
}

fn default_epochs() -> usize {
    50
}

fn default_batch() -> usize {
    8
}

fn default_lr() -> f64 {
    1.5e-4
}

fn default_warmup() -> usize {
    10
}

fn default_true() -> bool {
    true
}

impl PretrainConfig {
    /// Defaults around `model` and `feature`.
    pub fn new(model: ModelConfig, feature: FeatureSpec) -> Self {
        let augmentation = AugmentationConfig {
            output_size: model.image_size,
            ..AugmentationConfig::default()
        };
        let mut cfg = Self {
            model,
            feature,
            augmentation,
            epochs: default_epochs(),
            batch_size: default_batch(),
            base_lr: default_lr(),
            min_lr: 0.0,
            warmup_epochs: default_warmup(),
            optimizer: AdamWConfig::default(),
            clip_grad: None,
            seed: 0,
            deterministic: true,
            checkpoint_interval: 0,
            normalize_inputs: true,
        };
        cfg.resolve_heads().expect("feature spec valid for model");
        cfg
    }

    /// Parses a config; a missing crop `output_size` follows the model's
    /// image size.
    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Config(format!("pretrain config: {e}"));
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        let size = v.pointer("/model/image_size").cloned();
        if let (Some(obj), Some(size)) = (v.as_object_mut(), size) {
            let aug = obj.entry("augmentation").or_insert_with(|| serde_json::json!({}));
            if let Some(aug) = aug.as_object_mut() {
                aug.entry("output_size").or_insert(size);
            }
        }
        let mut cfg: Self = serde_json::from_value(v).map_err(bad)?;
        cfg.resolve_heads()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Fills empty head widths from the feature spec, or checks given ones.
    pub fn resolve_heads(&mut self) -> Result<()> {
        let widths = self
            .feature
            .head_widths(self.model.in_channels, self.model.patch_size)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.model.head_widths.is_empty() {
            self.model.head_widths = widths;
        } else if self.model.head_widths != widths {
            return Err(Error::Config(format!(
                "head widths {:?} do not match {} targets ({widths:?})",
                self.model.head_widths,
                self.feature.name()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.augmentation.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config(format!(
                "warmup epochs {} exceed epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.augmentation.output_size != self.model.image_size {
            return Err(Error::Config(format!(
                "augmentation output {} differs from model input {}",
                self.augmentation.output_size, self.model.image_size
            )));
        }
        if !(self.base_lr >= 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.base_lr) {
            return Err(Error::Config("need 0 <= min_lr <= base_lr".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex.
    pub fn digest(&self) -> String {
        config_digest(self)
    }
}

/// SHA-256 of a value's JSON serialization, hex.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PretrainConfig {
        PretrainConfig::new(ModelConfig::tiny(32, 8, 2, vec![]), FeatureSpec::hog())
    }

    #[test]
    fn heads_resolve_from_feature() {
        assert_eq!(base().model.head_widths, vec![18]);
    }

    #[test]
    fn crop_size_defaults_to_model_size() {
        let mut v = serde_json::to_value(base()).unwrap();
        v.as_object_mut().unwrap().remove("augmentation");
        let cfg = PretrainConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(cfg.augmentation.output_size, 32);
        v["augmentation"] = serde_json::json!({"output_size": 64});
        assert!(PretrainConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = base();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PretrainConfig::from_json(&text).unwrap(), cfg);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["bogus"] = 1.into();
        assert!(matches!(PretrainConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn digest_tracks_content() {
        let a = base();
        let mut b = base();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn validation() {
        let mut c = base();
        c.warmup_epochs = c.epochs + 1;
        assert!(c.validate().is_err());
        let mut c = base();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.augmentation.output_size = 64;
        assert!(c.validate().is_err());
    }
}
