use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder/decoder hyperparameters. Widths follow the usual ViT naming:
/// `enc_dim` is K_en, `dec_dim` is K_de, `head_widths` the K_out of each head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub in_channels: usize,
    pub enc_dim: usize,
    pub enc_depth: usize,
    pub enc_heads: usize,
    pub dec_dim: usize,
    pub dec_depth: usize,
    pub dec_heads: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default = "default_mask_ratio")]
    pub mask_ratio: f64,
    /// One entry per prediction head; two for HOG+NDI. Left empty in a
    /// config file, it is filled in from the feature spec.
    #[serde(default)]
    pub head_widths: Vec<usize>,
    /// Loss weight per head; empty means all 1.
    #[serde(default)]
    pub loss_weights: Vec<f64>,
    /// Per-channel standardization applied to encoder inputs only (targets
    /// are always computed from the unnormalized image).
    #[serde(default)]
    pub input_norm: Option<InputNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn default_mlp_ratio() -> usize {
    4
}

fn default_mask_ratio() -> f64 {
    0.7
}

/// Named encoder sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Base,
    Large,
    Huge,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Small, Preset::Base, Preset::Large, Preset::Huge];

    /// `(width, depth, heads)` of the encoder.
    pub fn encoder(self) -> (usize, usize, usize) {
        match self {
            Preset::Small => (384, 12, 6),
            Preset::Base => (768, 12, 12),
            Preset::Large => (1024, 24, 16),
            Preset::Huge => (1280, 32, 16),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Small => "vit-s",
            Preset::Base => "vit-b",
            Preset::Large => "vit-l",
            Preset::Huge => "vit-h",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("vit-").trim_start_matches("vit_") {
            "s" | "small" => Ok(Preset::Small),
            "b" | "base" => Ok(Preset::Base),
            "l" | "large" => Ok(Preset::Large),
            "h" | "huge" => Ok(Preset::Huge),
            _ => Err(Error::Config(format!("unknown model preset {s:?}"))),
        }
    }
}

impl ModelConfig {
    /// A preset encoder with the desk-scale decoder (256 wide, 2 deep, 8 heads).
    pub fn preset(p: Preset, image_size: usize, in_channels: usize, head_widths: Vec<usize>) -> Self {
        let (enc_dim, enc_depth, enc_heads) = p.encoder();
        Self {
            image_size,
            patch_size: 16,
            in_channels,
            enc_dim,
            enc_depth,
            enc_heads,
            dec_dim: 256,
            dec_depth: 2,
            dec_heads: 8,
            mlp_ratio: 4,
            mask_ratio: 0.7,
            head_widths,
            loss_weights: Vec::new(),
            input_norm: None,
        }
    }

    /// A very small model for tests and quick experiments.
    pub fn tiny(image_size: usize, patch_size: usize, in_channels: usize, head_widths: Vec<usize>) -> Self {
        Self {
            image_size,
            patch_size,
            in_channels,
            enc_dim: 32,
            enc_depth: 1,
            enc_heads: 2,
            dec_dim: 32,
            dec_depth: 1,
            dec_heads: 2,
            mlp_ratio: 2,
            mask_ratio: 0.75,
            head_widths,
            loss_weights: Vec::new(),
            input_norm: None,
        }
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patch count L.
    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    /// Flattened patch length `p²·C`.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.in_channels
    }

    pub fn loss_weight(&self, head: usize) -> f64 {
        self.loss_weights.get(head).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.in_channels == 0 {
            return bad("in_channels must be positive".into());
        }
        for (what, dim, heads) in [
            ("encoder", self.enc_dim, self.enc_heads),
            ("decoder", self.dec_dim, self.dec_heads),
        ] {
            if heads == 0 || dim == 0 || dim % heads != 0 {
                return bad(format!("{what} width {dim} is not divisible by {heads} heads"));
            }
            if dim % 4 != 0 {
                return bad(format!("{what} width {dim} must be a multiple of 4 for 2-D sin-cos embeddings"));
            }
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive".into());
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad(format!("masking ratio {} outside [0, 1)", self.mask_ratio));
        }
        if self.head_widths.is_empty() || self.head_widths.len() > 2 || self.head_widths.contains(&0) {
            return bad(format!("need one or two positive head widths, got {:?}", self.head_widths));
        }
        if !self.loss_weights.is_empty() && self.loss_weights.len() != self.head_widths.len() {
            return bad("loss_weights must have one entry per head".into());
        }
        if let Some(n) = &self.input_norm {
            if n.mean.len() != self.in_channels || n.std.len() != self.in_channels {
                return bad(format!("input_norm needs {} means and stds", self.in_channels));
            }
            if n.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) || n.mean.iter().any(|m| !m.is_finite()) {
                return bad("input_norm stds must be positive and finite".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_geometry() {
        let c = ModelConfig::preset(Preset::Small, 224, 2, vec![72]);
        c.validate().unwrap();
        assert_eq!(c.num_patches(), 196);
        assert_eq!(c.patch_dim(), 512);
        assert_eq!("vit-h".parse::<Preset>().unwrap(), Preset::Huge);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::tiny(32, 8, 2, vec![8]);
        c.mask_ratio = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny(32, 8, 2, vec![8]);
        c.enc_heads = 3;
        assert!(c.validate().is_err());
        let c = ModelConfig::tiny(30, 8, 2, vec![8]);
        assert!(c.validate().is_err());
    }
}
