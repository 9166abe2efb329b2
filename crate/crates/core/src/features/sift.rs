//! Dense SIFT: 4×4×8 gradient histograms on a regular grid of keypoints,
//! computed on the grayscale image, with no orientation assignment and no
//! scale pyramid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::conv::{correlate_replicate, Kernel};
use super::{grayscale_reduce, image_dims};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

pub const SIFT_DIM: usize = 128;
const SPATIAL_BINS: usize = 4;
const ORIENT_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiftParams {
    pub stride: usize,
    pub support: usize,
    pub clip: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            stride: 8,
            support: 16,
            clip: 0.2,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.support == 0 || self.support % SPATIAL_BINS != 0 {
            return Err(Error::Config(format!(
                "SIFT support {} must be a positive multiple of {SPATIAL_BINS}, stride positive",
                self.support
            )));
        }
        Ok(())
    }

    /// Grid positions along one axis of length `n`.
    pub fn grid_len(&self, n: usize) -> usize {
        if n < self.support {
            0
        } else {
            (n - self.support) / self.stride + 1
        }
    }
}

/// Descriptors `[B, G, 128]`, `G = grid_h · grid_w` in row-major grid order.
/// Keypoint `(i, j)` covers `[i·stride, i·stride + support)` in y and the
/// same in x.
pub fn compute_dense_sift<S: Scalar>(image: &Tensor<S>, p: &SiftParams) -> Result<Tensor<f64>> {
    p.validate()?;
    let (b, _, h, w) = image_dims(image)?;
    if h < p.support || w < p.support {
        return Err(Error::Feature(format!(
            "image {h}x{w} smaller than SIFT support {}",
            p.support
        )));
    }
    let gray = grayscale_reduce(image)?;
    let (gh, gw) = (p.grid_len(h), p.grid_len(w));
    let cell = p.support / SPATIAL_BINS;
    let sigma = p.support as f64 / 2.0;
    let center = p.support as f64 / 2.0;
    // Gaussian spatial weight is the same for every keypoint
    let weight: Vec<f64> = (0..p.support * p.support)
        .map(|i| {
            let dy = (i / p.support) as f64 + 0.5 - center;
            let dx = (i % p.support) as f64 + 0.5 - center;
            (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let orient_width = 2.0 * PI / ORIENT_BINS as f64;

    let mut out = Vec::with_capacity(b * gh * gw * SIFT_DIM);
    for plane in gray.data().chunks(h * w) {
        let gx = correlate_replicate(plane, h, w, &Kernel::central_dx());
        let gy = correlate_replicate(plane, h, w, &Kernel::central_dy());
        for gi in 0..gh {
            for gj in 0..gw {
                let (y0, x0) = (gi * p.stride, gj * p.stride);
                let mut desc = [0.0f64; SIFT_DIM];
                for dy in 0..p.support {
                    for dx in 0..p.support {
                        let idx = (y0 + dy) * w + (x0 + dx);
                        let mag = gx[idx].hypot(gy[idx]);
                        if mag == 0.0 {
                            continue;
                        }
                        let mut ang = gy[idx].atan2(gx[idx]);
                        if ang < 0.0 {
                            ang += 2.0 * PI;
                        }
                        let pos = ang / orient_width;
                        let lo = pos.floor();
                        let frac = pos - lo;
                        let lo = (lo as usize) % ORIENT_BINS;
                        let hi = (lo + 1) % ORIENT_BINS;
                        let v = mag * weight[dy * p.support + dx];
                        let base = ((dy / cell) * SPATIAL_BINS + dx / cell) * ORIENT_BINS;
                        desc[base + lo] += v * (1.0 - frac);
                        desc[base + hi] += v * frac;
                    }
                }
                normalize_clip(&mut desc, p.clip);
                out.extend_from_slice(&desc);
            }
        }
    }
    Tensor::new(vec![b, gh * gw, SIFT_DIM], out)
}

/// L2-normalize, clip entries at `clip`, renormalize. Zero stays zero.
fn normalize_clip(desc: &mut [f64], clip: f64) {
    const EPS: f64 = 1e-12;
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    desc.iter_mut().for_each(|v| *v = (*v / (norm + EPS)).min(clip));
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    desc.iter_mut().for_each(|v| *v /= norm + EPS);
}
