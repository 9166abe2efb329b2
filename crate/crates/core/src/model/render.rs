//! False-color renderings of predictions and inputs, written as binary PPM.

use std::f64::consts::PI;
use std::path::Path;

use super::unpatchify;
use crate::error::{Error, Result};
use crate::features::{image_dims, FeatureSpec};
use crate::numerics::{Scalar, Tensor};

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    /// Binary PPM (`P6`, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    /// `[3, H, W]` planes in `[0, 1]` quantized to bytes.
    pub fn from_planes(planes: &[f64], h: usize, w: usize) -> Self {
        let mut pixels = Vec::with_capacity(3 * h * w);
        for i in 0..h * w {
            for c in 0..3 {
                pixels.push(quantize(planes[c * h * w + i]));
            }
        }
        Self {
            width: w,
            height: h,
            pixels,
        }
    }
}

/// `[0, 1]` → `0..=255`, clamped, rounded to nearest.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// NDI value in `[−1, 1]` → byte.
pub fn ndi_to_byte(v: f64) -> u8 {
    quantize((v + 1.0) / 2.0)
}

/// `[B, 2, H, W]` (VV, VH) → `[B, 3, H, W]` composite `[VV, VH, (VV+VH)/2]`.
pub fn sar_composite<S: Scalar>(image: &Tensor<S>) -> Result<Tensor<f64>> {
    let (b, c, h, w) = image_dims(image)?;
    if c != 2 {
        return Err(Error::Feature(format!("SAR composite needs 2 channels (VV, VH), got {c}")));
    }
    let hw = h * w;
    let src = image.data();
    let mut out = Vec::with_capacity(b * 3 * hw);
    for bi in 0..b {
        let vv = &src[bi * 2 * hw..bi * 2 * hw + hw];
        let vh = &src[bi * 2 * hw + hw..(bi + 1) * 2 * hw];
        out.extend(vv.iter().map(|v| v.as_f64()));
        out.extend(vh.iter().map(|v| v.as_f64()));
        out.extend(vv.iter().zip(vh).map(|(a, b)| (a.as_f64() + b.as_f64()) / 2.0));
    }
    Tensor::new(vec![b, 3, h, w], out)
}

/// NDI predictions `[B, L, p²·3]` as `[NDVI, NDWI, NDBI]` false color.
pub fn render_ndi(pred: &Tensor<f64>, patch: usize, size: usize) -> Result<Vec<RgbImage>> {
    let img = unpatchify(pred, patch, 3, size, size)?;
    Ok(img
        .data()
        .chunks(3 * size * size)
        .map(|planes| RgbImage::from_planes(&planes.iter().map(|v| (v + 1.0) / 2.0).collect::<Vec<_>>(), size, size))
        .collect())
}

/// HOG predictions `[B, L, C·q²·bins]` as per-cell line glyphs, one line
/// per bin drawn along the edge direction (perpendicular to the gradient
/// bin) with brightness proportional to the channel-averaged bin weight.
pub fn render_hog(
    pred: &Tensor<f64>,
    patch: usize,
    cell: usize,
    bins: usize,
    channels: usize,
    size: usize,
) -> Result<Vec<RgbImage>> {
    let (b, l, k) = match *pred.dims() {
        [b, l, k] => (b, l, k),
        ref d => return Err(Error::shape("render_hog", format!("expected [B, L, K], got {d:?}"))),
    };
    let q = patch / cell;
    let side = size / patch;
    if l != side * side || k != channels * q * q * bins {
        return Err(Error::shape(
            "render_hog",
            format!("[{b}, {l}, {k}] does not match {channels} channels, patch {patch}, cell {cell}, {bins} bins"),
        ));
    }
    let mut images = Vec::with_capacity(b);
    for bi in 0..b {
        let mut canvas = vec![0.0f64; size * size];
        for pi in 0..l {
            let vec = &pred.data()[(bi * l + pi) * k..(bi * l + pi + 1) * k];
            let (py, px) = (pi / side, pi % side);
            for cy in 0..q {
                for cx in 0..q {
                    let x0 = (px * q + cx) * cell;
                    let y0 = (py * q + cy) * cell;
                    for bin in 0..bins {
                        let weight = (0..channels)
                            .map(|ci| vec[((ci * q + cy) * q + cx) * bins + bin])
                            .sum::<f64>()
                            / channels as f64;
                        if weight <= 0.0 {
                            continue;
                        }
                        draw_glyph(&mut canvas, size, x0, y0, cell, bin as f64 * PI / bins as f64 + PI / 2.0, weight);
                    }
                }
            }
        }
        let gray: Vec<u8> = canvas.iter().map(|&v| quantize(v)).collect();
        images.push(RgbImage {
            width: size,
            height: size,
            pixels: gray.iter().flat_map(|&g| [g, g, g]).collect(),
        });
    }
    Ok(images)
}

fn draw_glyph(canvas: &mut [f64], size: usize, x0: usize, y0: usize, cell: usize, angle: f64, weight: f64) {
    let c = (cell as f64 - 1.0) / 2.0;
    let steps = 2 * cell;
    let (dx, dy) = (angle.cos(), angle.sin());
    for s in 0..=steps {
        let t = (s as f64 / steps as f64 - 0.5) * (cell as f64 - 1.0);
        // image rows grow downward, so the y component is flipped
        let x = (c + t * dx).round();
        let y = (c - t * dy).round();
        if x < 0.0 || y < 0.0 || x >= cell as f64 || y >= cell as f64 {
            continue;
        }
        let i = (y0 + y as usize) * size + x0 + x as usize;
        canvas[i] = canvas[i].max(weight);
    }
}

/// Renders head predictions for `spec`. For two-head specs the NDI head
/// is rendered.
pub fn render_reconstruction(
    preds: &[Tensor<f64>],
    spec: &FeatureSpec,
    patch: usize,
    channels: usize,
    size: usize,
) -> Result<Vec<RgbImage>> {
    match spec {
        FeatureSpec::Ndi { .. } => render_ndi(first(preds)?, patch, size),
        FeatureSpec::HogPlusNdi { .. } => render_ndi(
            preds
                .get(1)
                .ok_or_else(|| Error::Feature("HOG+NDI rendering needs both head outputs".into()))?,
            patch,
            size,
        ),
        FeatureSpec::Hog { hog } => render_hog(first(preds)?, patch, hog.cell_size, hog.n_bins, channels, size),
        FeatureSpec::RawPixels if channels == 2 => {
            let img = unpatchify(first(preds)?, patch, 2, size, size)?;
            let comp = sar_composite(&img)?;
            Ok(comp.data().chunks(3 * size * size).map(|p| RgbImage::from_planes(p, size, size)).collect())
        }
        other => Err(Error::Feature(format!(
            "rendering is not supported for {} targets with {channels} channels",
            other.name()
        ))),
    }
}

fn first(preds: &[Tensor<f64>]) -> Result<&Tensor<f64>> {
    preds.first().ok_or_else(|| Error::Feature("no predictions to render".into()))
}
