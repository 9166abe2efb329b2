//! Reconstruction-target descriptors and per-patch target assembly.

mod canny;
pub mod conv;
mod hog;
mod ndi;
mod sift;
mod targets;

use serde::{Deserialize, Serialize};

pub use canny::{compute_canny, CannyParams};
pub use hog::{compute_hog, HogParams};
pub use ndi::{compute_ndi, normalized_difference, BandMap};
pub use sift::{compute_dense_sift, SiftParams, SIFT_DIM};
pub use targets::{
    assemble_hog, assemble_ndi, assemble_normalized, assemble_sift, compute_targets, normalize_rows,
    TargetSet, TargetTensor, PATCH_NORM_EPS,
};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Which descriptor the decoder reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    RawPixels,
    CannyEdge {
        #[serde(default)]
        canny: CannyParams,
    },
    Hog {
        #[serde(default)]
        hog: HogParams,
    },
    DenseSift {
        #[serde(default)]
        sift: SiftParams,
    },
    Ndi {
        #[serde(default)]
        bands: BandMap,
    },
    /// Two heads sharing the decoder: HOG and NDI.
    HogPlusNdi {
        #[serde(default)]
        hog: HogParams,
        #[serde(default)]
        bands: BandMap,
    },
}

impl FeatureSpec {
    pub fn raw() -> Self {
        Self::RawPixels
    }

    pub fn hog() -> Self {
        Self::Hog {
            hog: HogParams::default(),
        }
    }

    pub fn canny() -> Self {
        Self::CannyEdge {
            canny: CannyParams::default(),
        }
    }

    pub fn sift() -> Self {
        Self::DenseSift {
            sift: SiftParams::default(),
        }
    }

    pub fn ndi() -> Self {
        Self::Ndi {
            bands: BandMap::default(),
        }
    }

    pub fn hog_plus_ndi() -> Self {
        Self::HogPlusNdi {
            hog: HogParams::default(),
            bands: BandMap::default(),
        }
    }

    /// Short name used in CSV tables and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Self::RawPixels => "raw",
            Self::CannyEdge { .. } => "canny",
            Self::Hog { .. } => "hog",
            Self::DenseSift { .. } => "sift",
            Self::Ndi { .. } => "ndi",
            Self::HogPlusNdi { .. } => "hog+ndi",
        }
    }

    /// Parses the short names produced by [`FeatureSpec::name`], with
    /// default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "raw" | "raw_pixels" | "pixels" => Self::raw(),
            "canny" | "canny_edge" => Self::canny(),
            "hog" => Self::hog(),
            "sift" | "dense_sift" => Self::sift(),
            "ndi" => Self::ndi(),
            "hog+ndi" | "hog_plus_ndi" => Self::hog_plus_ndi(),
            other => return Err(Error::Config(format!("unknown feature {other:?}"))),
        })
    }

    /// Output widths of the prediction head(s) for `channels`-channel input
    /// cut into `patch`×`patch` patches: one entry, or two for HOG+NDI.
    pub fn head_widths(&self, channels: usize, patch: usize) -> Result<Vec<usize>> {
        self.validate(channels, patch)?;
        let p2 = patch * patch;
        let hog_width = |h: &HogParams| channels * (patch / h.cell_size).pow(2) * h.n_bins;
        Ok(match self {
            Self::RawPixels | Self::CannyEdge { .. } => vec![p2 * channels],
            Self::Hog { hog } => vec![hog_width(hog)],
            Self::DenseSift { sift } => vec![(patch / sift.stride).pow(2) * SIFT_DIM],
            Self::Ndi { .. } => vec![p2 * 3],
            Self::HogPlusNdi { hog, .. } => vec![hog_width(hog), p2 * 3],
        })
    }

    /// Checks that the spec can produce targets for this input geometry.
    pub fn validate(&self, channels: usize, patch: usize) -> Result<()> {
        if patch == 0 || channels == 0 {
            return Err(Error::Feature("patch size and channel count must be positive".into()));
        }
        match self {
            Self::RawPixels => {}
            Self::CannyEdge { canny } => canny.validate()?,
            Self::Hog { hog } => check_hog(hog, patch)?,
            Self::DenseSift { sift } => {
                sift.validate()?;
                if patch % sift.stride != 0 || sift.support < sift.stride || (sift.support - sift.stride) % 2 != 0 {
                    return Err(Error::Feature(format!(
                        "SIFT stride {} / support {} do not tile patch size {patch}",
                        sift.stride, sift.support
                    )));
                }
            }
            Self::Ndi { bands } => bands.validate(channels)?,
            Self::HogPlusNdi { hog, bands } => {
                check_hog(hog, patch)?;
                bands.validate(channels)?;
            }
        }
        Ok(())
    }
}

fn check_hog(hog: &HogParams, patch: usize) -> Result<()> {
    hog.validate()?;
    if patch % hog.cell_size != 0 {
        return Err(Error::Feature(format!(
            "patch size {patch} not divisible by HOG cell size {}",
            hog.cell_size
        )));
    }
    Ok(())
}

/// `(B, C, H, W)` of a rank-4 image batch.
pub fn image_dims<S: Scalar>(image: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    match *image.dims() {
        [b, c, h, w] => Ok((b, c, h, w)),
        ref d => Err(Error::Feature(format!("expected a [B, C, H, W] image batch, got {d:?}"))),
    }
}

/// Channel mean, `[B, 1, H, W]`.
pub fn grayscale_reduce<S: Scalar>(image: &Tensor<S>) -> Result<Tensor<f64>> {
    let (b, c, h, w) = image_dims(image)?;
    let hw = h * w;
    let src = image.data();
    let mut out = vec![0.0f64; b * hw];
    for bi in 0..b {
        let dst = &mut out[bi * hw..(bi + 1) * hw];
        for ci in 0..c {
            let plane = &src[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for (d, v) in dst.iter_mut().zip(plane) {
                *d += v.as_f64();
            }
        }
        dst.iter_mut().for_each(|d| *d /= c as f64);
    }
    Tensor::new(vec![b, 1, h, w], out)
}
