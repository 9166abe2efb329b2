//! Per-patch target vectors for the decoder heads.

use super::{
    compute_canny, compute_dense_sift, compute_hog, compute_ndi, image_dims, FeatureSpec, SiftParams, SIFT_DIM,
};
use crate::error::{Error, Result};
use crate::model::{patchify, PatchGrid};
use crate::numerics::{Scalar, Tensor};

/// Added to the per-patch standard deviation before dividing.
pub const PATCH_NORM_EPS: f64 = 1e-6;

/// `[B, L, K_out]` targets, and whether per-patch normalization was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTensor {
    pub values: Tensor<f64>,
    pub normalized: bool,
}

impl TargetTensor {
    pub fn width(&self) -> usize {
        self.values.dims()[2]
    }
}

/// Targets for one batch: one tensor per head.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub heads: Vec<TargetTensor>,
}

impl TargetSet {
    pub fn single(t: TargetTensor) -> Self {
        Self { heads: vec![t] }
    }
}

/// Extracts the features named by `spec` from `image` (`[B, C, H, W]`) and
/// cuts them into per-patch vectors. Targets are plain values: nothing
/// here is tracked for gradients.
pub fn compute_targets<S: Scalar>(image: &Tensor<S>, spec: &FeatureSpec, patch: usize) -> Result<TargetSet> {
    let (_, c, h, w) = image_dims(image)?;
    spec.validate(c, patch)?;
    PatchGrid::new(h, w, patch)?;
    Ok(match spec {
        FeatureSpec::RawPixels => TargetSet::single(assemble_normalized(&image.cast::<f64>(), patch)?),
        FeatureSpec::CannyEdge { canny } => {
            TargetSet::single(assemble_normalized(&compute_canny(image, canny)?, patch)?)
        }
        FeatureSpec::Hog { hog } => TargetSet::single(assemble_hog(&compute_hog(image, hog)?, patch, hog.cell_size)?),
        FeatureSpec::DenseSift { sift } => {
            let pad = (sift.support - sift.stride) / 2;
            let padded = pad_replicate(image, pad)?;
            let desc = compute_dense_sift(&padded, sift)?;
            TargetSet::single(assemble_sift(&desc, h, w, patch, sift)?)
        }
        FeatureSpec::Ndi { bands } => TargetSet::single(assemble_ndi(&compute_ndi(image, bands)?, patch)?),
        FeatureSpec::HogPlusNdi { hog, bands } => TargetSet {
            heads: vec![
                assemble_hog(&compute_hog(image, hog)?, patch, hog.cell_size)?,
                assemble_ndi(&compute_ndi(image, bands)?, patch)?,
            ],
        },
    })
}

/// Patchify a `[B, C, H, W]` map and standardize every patch vector:
/// `(x − μ) / (σ + 1e-6)` with the population σ.
pub fn assemble_normalized(map: &Tensor<f64>, patch: usize) -> Result<TargetTensor> {
    let mut values = patchify(map, patch)?;
    normalize_rows(&mut values);
    Ok(TargetTensor {
        values,
        normalized: true,
    })
}

/// Standardizes each last-axis row in place.
pub fn normalize_rows(t: &mut Tensor<f64>) {
    let k = *t.dims().last().expect("rank ≥ 1");
    for row in t.data_mut().chunks_mut(k) {
        if row.iter().all(|&v| v == row[0]) {
            row.fill(0.0);
            continue;
        }
        let mean = row.iter().sum::<f64>() / k as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
        let denom = var.sqrt() + PATCH_NORM_EPS;
        row.iter_mut().for_each(|v| *v = (*v - mean) / denom);
    }
}

/// NDI maps `[B, 3, H, W]` flattened per patch without normalization.
pub fn assemble_ndi(ndi: &Tensor<f64>, patch: usize) -> Result<TargetTensor> {
    Ok(TargetTensor {
        values: patchify(ndi, patch)?,
        normalized: false,
    })
}

/// HOG cells `[B, C, H/cell, W/cell, bins]` → `[B, L, C·(patch/cell)²·bins]`,
/// ordered channel, cell row, cell column, bin.
pub fn assemble_hog(hog: &Tensor<f64>, patch: usize, cell: usize) -> Result<TargetTensor> {
    let (b, c, ch, cw, nb) = match *hog.dims() {
        [b, c, ch, cw, nb] => (b, c, ch, cw, nb),
        ref d => return Err(Error::Feature(format!("expected HOG cells [B,C,h,w,bins], got {d:?}"))),
    };
    if cell == 0 || patch % cell != 0 {
        return Err(Error::Feature(format!("patch {patch} not divisible by cell {cell}")));
    }
    let q = patch / cell;
    let grid = PatchGrid::new(ch * cell, cw * cell, patch)?;
    let src = hog.data();
    let k = c * q * q * nb;
    let mut out = Vec::with_capacity(b * grid.len() * k);
    for bi in 0..b {
        for py in 0..grid.rows {
            for px in 0..grid.cols {
                for ci in 0..c {
                    for cy in 0..q {
                        let row = py * q + cy;
                        let start = ((((bi * c + ci) * ch + row) * cw) + px * q) * nb;
                        out.extend_from_slice(&src[start..start + q * nb]);
                    }
                }
            }
        }
    }
    Ok(TargetTensor {
        values: Tensor::new(vec![b, grid.len(), k], out)?,
        normalized: false,
    })
}

/// Descriptors computed on the padded image, `[B, (H/stride)·(W/stride), 128]`,
/// grouped by the patch containing each keypoint center.
pub fn assemble_sift(desc: &Tensor<f64>, h: usize, w: usize, patch: usize, p: &SiftParams) -> Result<TargetTensor> {
    let (gh, gw) = (h / p.stride, w / p.stride);
    let b = match *desc.dims() {
        [b, g, SIFT_DIM] if g == gh * gw => b,
        ref d => {
            return Err(Error::Feature(format!(
                "SIFT grid {d:?} does not match {gh}x{gw} keypoints for a {h}x{w} image"
            )))
        }
    };
    let grid = PatchGrid::new(h, w, patch)?;
    let q = patch / p.stride;
    let src = desc.data();
    let k = q * q * SIFT_DIM;
    let mut out = Vec::with_capacity(b * grid.len() * k);
    for bi in 0..b {
        for py in 0..grid.rows {
            for px in 0..grid.cols {
                for dy in 0..q {
                    let start = (bi * gh * gw + (py * q + dy) * gw + px * q) * SIFT_DIM;
                    out.extend_from_slice(&src[start..start + q * SIFT_DIM]);
                }
            }
        }
    }
    Ok(TargetTensor {
        values: Tensor::new(vec![b, grid.len(), k], out)?,
        normalized: false,
    })
}

/// Replicate-pads every plane by `pad` pixels on each side.
fn pad_replicate<S: Scalar>(image: &Tensor<S>, pad: usize) -> Result<Tensor<f64>> {
    let (b, c, h, w) = image_dims(image)?;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let src = image.data();
    let mut out = Vec::with_capacity(b * c * ph * pw);
    for plane in src.chunks(h * w) {
        for y in 0..ph {
            let sy = y.saturating_sub(pad).min(h - 1);
            for x in 0..pw {
                let sx = x.saturating_sub(pad).min(w - 1);
                out.push(plane[sy * w + sx].as_f64());
            }
        }
    }
    Tensor::new(vec![b, c, ph, pw], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::HogParams;
    use crate::numerics::SeedRng;

    fn random(seed: u64, dims: [usize; 4]) -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(dims.to_vec(), |_| rng.uniform())
    }

    #[test]
    fn constant_patch_normalizes_to_zero() {
        let img = Tensor::<f64>::full([1, 2, 16, 16], 0.7);
        let t = compute_targets(&img, &FeatureSpec::raw(), 8).unwrap();
        assert!(t.heads[0].normalized);
        assert!(t.heads[0].values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_patches_are_standardized() {
        let t = compute_targets(&random(1, [2, 2, 16, 16]), &FeatureSpec::raw(), 8).unwrap();
        for row in t.heads[0].values.data().chunks(128) {
            let mean = row.iter().sum::<f64>() / 128.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 128.0;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn sar_hog_widths() {
        let img = random(2, [2, 2, 32, 32]);
        let t = compute_targets(&img, &FeatureSpec::hog(), 16).unwrap();
        assert_eq!(t.heads[0].values.dims(), &[2, 4, 72]);
    }

    #[test]
    fn hog_patch_vectors_gather_the_right_cells() {
        let img = random(3, [1, 2, 32, 32]);
        let cells = compute_hog(&img, &HogParams::default()).unwrap();
        let t = assemble_hog(&cells, 16, 8).unwrap();
        // patch (1, 0), channel 1, cell (1, 1) within the patch → global cell (3, 1)
        let (patch_idx, ci, cy, cx) = (2, 1, 1, 1);
        let off = ((ci * 2 + cy) * 2 + cx) * 9;
        let want = &cells.data()[(((ci * 4) + 3) * 4 + 1) * 9..][..9];
        let got = &t.values.data()[patch_idx * 72 + off..][..9];
        assert_eq!(got, want);
    }

    #[test]
    fn ndi_targets_are_plain_flattened_indices() {
        let img = random(4, [1, 13, 16, 16]);
        let t = compute_targets(&img, &FeatureSpec::ndi(), 16).unwrap();
        assert!(!t.heads[0].normalized);
        assert_eq!(t.heads[0].values.dims(), &[1, 1, 768]);
        let ndi = compute_ndi(&img, &Default::default()).unwrap();
        assert_eq!(t.heads[0].values.data(), ndi.data());
    }

    #[test]
    fn sift_targets_two_by_two_descriptors_per_patch() {
        let img = random(5, [1, 1, 32, 32]);
        let t = compute_targets(&img, &FeatureSpec::sift(), 16).unwrap();
        assert_eq!(t.heads[0].values.dims(), &[1, 4, 512]);
    }

    #[test]
    fn dual_spec_gives_two_heads() {
        let img = random(6, [1, 13, 16, 16]);
        let t = compute_targets(&img, &FeatureSpec::hog_plus_ndi(), 16).unwrap();
        assert_eq!(t.heads.len(), 2);
        assert_eq!(t.heads[0].width(), 13 * 4 * 9);
        assert_eq!(t.heads[1].width(), 768);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let img = random(7, [1, 2, 24, 24]);
        assert!(matches!(compute_targets(&img, &FeatureSpec::hog(), 16), Err(Error::Feature(_))));
    }
}
