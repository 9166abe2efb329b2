//! Crop/flip augmentation, mixup and channel padding.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeedRng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub output_size: usize,
    pub flip_prob: f64,
    /// Mixup Beta parameter; fine-tuning only.
    pub mixup_alpha: Option<f64>,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            scale_min: 0.2,
            scale_max: 1.0,
            ratio_min: 3.0 / 4.0,
            ratio_max: 4.0 / 3.0,
            output_size: 224,
            flip_prob: 0.5,
            mixup_alpha: None,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.scale_min && self.scale_min <= self.scale_max && self.scale_max <= 1.0) {
            return Err(Error::Config(format!(
                "crop scale range [{}, {}] must satisfy 0 < min <= max <= 1",
                self.scale_min, self.scale_max
            )));
        }
        if !(0.0 < self.ratio_min && self.ratio_min <= self.ratio_max) {
            return Err(Error::Config("crop aspect range must be positive and ordered".into()));
        }
        if self.output_size == 0 || !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config("output size must be positive and flip prob in [0, 1]".into()));
        }
        if matches!(self.mixup_alpha, Some(a) if a <= 0.0) {
            return Err(Error::Config("mixup alpha must be positive".into()));
        }
        Ok(())
    }
}

fn chw<S: Scalar>(image: &Tensor<S>) -> Result<(usize, usize, usize)> {
    match *image.dims() {
        [c, h, w] => Ok((c, h, w)),
        ref d => Err(Error::shape("augment", format!("expected [C, H, W], got {d:?}"))),
    }
}

/// Bilinear resampling with half-pixel centers and clamped borders.
pub fn resize_bilinear<S: Scalar>(image: &Tensor<S>, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    crop_resize(image, 0, 0, image.dims()[1], image.dims()[2], out_h, out_w)
}

/// Crops rows `[top, top+h)` and columns `[left, left+w)` and resamples the
/// crop to `out_h × out_w`.
pub fn crop_resize<S: Scalar>(
    image: &Tensor<S>,
    top: usize,
    left: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<S>> {
    let (c, ih, iw) = chw(image)?;
    if h == 0 || w == 0 || top + h > ih || left + w > iw || out_h == 0 || out_w == 0 {
        return Err(Error::shape(
            "crop_resize",
            format!("crop {h}x{w}+{top}+{left} of {ih}x{iw} to {out_h}x{out_w}"),
        ));
    }
    let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    let axis = |o: usize, s: f64, n: usize| {
        let p = ((o as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f64)
    };
    let ys: Vec<_> = (0..out_h).map(|o| axis(o, sy, h)).collect();
    let xs: Vec<_> = (0..out_w).map(|o| axis(o, sx, w)).collect();
    let src = image.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ci in 0..c {
        let plane = &src[ci * ih * iw..(ci + 1) * ih * iw];
        let at = |y: usize, x: usize| plane[(top + y) * iw + left + x].as_f64();
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top_row = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(S::of(top_row * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Crop box `(top, left, h, w)` with area fraction in the scale range and
/// aspect ratio in the ratio range; center crop after 10 failed tries.
pub fn sample_crop_box(h: usize, w: usize, cfg: &AugmentationConfig, rng: &mut SeedRng) -> (usize, usize, usize, usize) {
    let area = (h * w) as f64;
    let (lr0, lr1) = (cfg.ratio_min.ln(), cfg.ratio_max.ln());
    for _ in 0..10 {
        let target = area * (cfg.scale_min + (cfg.scale_max - cfg.scale_min) * rng.uniform());
        let aspect = (lr0 + (lr1 - lr0) * rng.uniform()).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if 0 < cw && cw <= w && 0 < ch && ch <= h {
            let top = rng.below(h - ch + 1);
            let left = rng.below(w - cw + 1);
            return (top, left, ch, cw);
        }
    }
    let in_ratio = w as f64 / h as f64;
    let (ch, cw) = if in_ratio < cfg.ratio_min {
        (((w as f64) / cfg.ratio_min).round() as usize, w)
    } else if in_ratio > cfg.ratio_max {
        (h, ((h as f64) * cfg.ratio_max).round() as usize)
    } else {
        (h, w)
    };
    let (ch, cw) = (ch.clamp(1, h), cw.clamp(1, w));
    ((h - ch) / 2, (w - cw) / 2, ch, cw)
}

/// Random crop resampled to `output_size²`.
pub fn random_resized_crop<S: Scalar>(image: &Tensor<S>, cfg: &AugmentationConfig, rng: &mut SeedRng) -> Result<Tensor<S>> {
    let (_, h, w) = chw(image)?;
    let (top, left, ch, cw) = sample_crop_box(h, w, cfg, rng);
    crop_resize(image, top, left, ch, cw, cfg.output_size, cfg.output_size)
}

/// Mirror along the width axis.
pub fn flip_width<S: Scalar>(image: &Tensor<S>) -> Tensor<S> {
    let w = *image.dims().last().expect("rank ≥ 1");
    let mut out = image.data().to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    Tensor::new(image.dims().to_vec(), out).expect("same shape")
}

/// Mirrors with probability `prob`. Always draws one number so the stream
/// position does not depend on the outcome.
pub fn horizontal_flip<S: Scalar>(image: &Tensor<S>, prob: f64, rng: &mut SeedRng) -> Tensor<S> {
    if rng.uniform() < prob {
        flip_width(image)
    } else {
        image.clone()
    }
}

/// Crop then flip, as used for pretraining views.
pub fn augment<S: Scalar>(image: &Tensor<S>, cfg: &AugmentationConfig, rng: &mut SeedRng) -> Result<Tensor<S>> {
    let cropped = random_resized_crop(image, cfg, rng)?;
    Ok(horizontal_flip(&cropped, cfg.flip_prob, rng))
}

/// Mixup with an explicit `λ` and partner permutation:
/// `x' = λ·x + (1−λ)·x[perm]`, labels likewise.
pub fn mixup_with<S: Scalar>(
    images: &Tensor<S>,
    labels: &Tensor<S>,
    lambda: f64,
    perm: &[usize],
) -> Result<(Tensor<S>, Tensor<S>)> {
    let b = images.dims()[0];
    if labels.dims()[0] != b || perm.len() != b {
        return Err(Error::shape("mixup", "batch sizes of images, labels and permutation differ"));
    }
    let mix = |t: &Tensor<S>| {
        let row = t.len() / b;
        let src = t.data();
        let (l, r) = (S::of(lambda), S::of(1.0 - lambda));
        let mut out = Vec::with_capacity(t.len());
        for (i, &j) in perm.iter().enumerate() {
            out.extend((0..row).map(|k| l * src[i * row + k] + r * src[j * row + k]));
        }
        Tensor::new(t.dims().to_vec(), out)
    };
    Ok((mix(images)?, mix(labels)?))
}

/// Mixup with `λ ~ Beta(α, α)` and a random partner permutation.
pub fn mixup<S: Scalar>(
    images: &Tensor<S>,
    labels: &Tensor<S>,
    alpha: f64,
    rng: &mut SeedRng,
) -> Result<(Tensor<S>, Tensor<S>, f64)> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("mixup alpha {alpha}: {e}")))?;
    let lambda = beta.sample(rng);
    let perm = rng.permutation(images.dims()[0]);
    let (x, y) = mixup_with(images, labels, lambda, &perm)?;
    Ok((x, y, lambda))
}

/// Places the `C` input channels at `positions` (default `0..C`) of a
/// `target`-channel image; every other channel is zero.
pub fn zero_pad_channels<S: Scalar>(image: &Tensor<S>, target: usize, positions: Option<&[usize]>) -> Result<Tensor<S>> {
    let (c, h, w) = chw(image)?;
    if c > target {
        return Err(Error::Feature(format!("cannot pad {c} channels down to {target}")));
    }
    let default: Vec<usize> = (0..c).collect();
    let positions = positions.unwrap_or(&default);
    if positions.len() != c || positions.iter().any(|&p| p >= target) {
        return Err(Error::Feature(format!("channel positions {positions:?} invalid for {c} -> {target}")));
    }
    let hw = h * w;
    let mut out = vec![S::zero(); target * hw];
    for (ci, &dst) in positions.iter().enumerate() {
        out[dst * hw..(dst + 1) * hw].copy_from_slice(&image.data()[ci * hw..(ci + 1) * hw]);
    }
    Tensor::new(vec![target, h, w], out)
}
