//! Histograms of oriented gradients, written as a fixed filter bank:
//! gradient filters, a soft orientation vote per bin, sum pooling over
//! cells, then per-cell L2 normalization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::conv::{correlate_replicate, Kernel};
use super::image_dims;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HogParams {
    pub n_bins: usize,
    pub cell_size: usize,
    pub eps: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            n_bins: 9,
            cell_size: 8,
            eps: 1e-10,
        }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::Config(format!("HOG needs at least 2 bins, got {}", self.n_bins)));
        }
        if self.cell_size == 0 {
            return Err(Error::Config("HOG cell size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel gradient magnitude and unsigned orientation in `[0, π)`.
pub(crate) fn gradient_field(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let gx = correlate_replicate(plane, h, w, &Kernel::central_dx());
    let gy = correlate_replicate(plane, h, w, &Kernel::central_dy());
    let mut mag = vec![0.0; h * w];
    let mut ang = vec![0.0; h * w];
    for i in 0..h * w {
        mag[i] = gx[i].hypot(gy[i]);
        let mut a = gy[i].atan2(gx[i]);
        if a < 0.0 {
            a += PI;
        }
        if a >= PI {
            a -= PI;
        }
        ang[i] = a;
    }
    (mag, ang)
}

/// Cell histograms, `[B, C, H/cell, W/cell, n_bins]`.
pub fn compute_hog<S: Scalar>(image: &Tensor<S>, p: &HogParams) -> Result<Tensor<f64>> {
    p.validate()?;
    let (b, c, h, w) = image_dims(image)?;
    if h % p.cell_size != 0 || w % p.cell_size != 0 {
        return Err(Error::Feature(format!(
            "image {h}x{w} is not divisible by HOG cell size {}",
            p.cell_size
        )));
    }
    let (ch, cw) = (h / p.cell_size, w / p.cell_size);
    let nb = p.n_bins;
    let bin_width = PI / nb as f64;
    let mut out = vec![0.0; b * c * ch * cw * nb];
    let src = image.data();
    for plane_idx in 0..b * c {
        let plane: Vec<f64> = src[plane_idx * h * w..(plane_idx + 1) * h * w]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let (mag, ang) = gradient_field(&plane, h, w);
        let hist = &mut out[plane_idx * ch * cw * nb..(plane_idx + 1) * ch * cw * nb];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if mag[i] == 0.0 {
                    continue;
                }
                // bin k is centered at k·π/n_bins; linear vote between the
                // two nearest centers, wrapping at π
                let pos = ang[i] / bin_width;
                let lo = pos.floor();
                let frac = pos - lo;
                let lo = (lo as usize) % nb;
                let hi = (lo + 1) % nb;
                let cell = ((y / p.cell_size) * cw + x / p.cell_size) * nb;
                hist[cell + lo] += mag[i] * (1.0 - frac);
                hist[cell + hi] += mag[i] * frac;
            }
        }
        for cell in hist.chunks_mut(nb) {
            let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
            cell.iter_mut().for_each(|v| *v /= norm + p.eps);
        }
    }
    Tensor::new(vec![b, c, ch, cw, nb], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeedRng;

    fn random_image(seed: u64, dims: [usize; 4]) -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(dims.to_vec(), |_| rng.uniform())
    }

    #[test]
    fn constant_image_gives_zero_histograms() {
        let img = Tensor::<f64>::full([1, 2, 16, 16], 0.37);
        let hog = compute_hog(&img, &HogParams::default()).unwrap();
        assert_eq!(hog.dims(), &[1, 2, 2, 2, 9]);
        assert!(hog.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_votes_into_zero_degree_bin() {
        // step at x = 12 crosses cell (0, 1) of a 16x16 image
        let img = Tensor::<f64>::from_fn([1, 1, 16, 16], |i| if i % 16 >= 12 { 1.0 } else { 0.0 });
        let hog = compute_hog(&img, &HogParams::default()).unwrap();
        let cell = &hog.data()[9..18];
        assert!((cell[0] - 1.0).abs() < 1e-9, "{cell:?}");
        assert!(cell[1..].iter().all(|&v| v == 0.0));
        let norm: f64 = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        // cell (0, 0) sees no gradient
        assert!(hog.data()[..9].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotation_by_quarter_turn_shifts_bins() {
        let p = HogParams {
            n_bins: 8,
            ..HogParams::default()
        };
        let n = 32;
        let img = random_image(5, [1, 1, n, n]);
        // rot90 counter-clockwise: out[y][x] = in[x][n-1-y]
        let rot = Tensor::from_fn([1, 1, n, n], |i| {
            let (y, x) = (i / n, i % n);
            img.data()[x * n + (n - 1 - y)]
        });
        let a = compute_hog(&img, &p).unwrap();
        let r = compute_hog(&rot, &p).unwrap();
        let cells = n / 8;
        for cy in 1..cells - 1 {
            for cx in 1..cells - 1 {
                // rotated cell (cy, cx) came from source cell (cx, cells-1-cy)
                let (sy, sx) = (cx, cells - 1 - cy);
                for k in 0..8 {
                    let got = r.data()[(cy * cells + cx) * 8 + (k + 4) % 8];
                    let want = a.data()[(sy * cells + sx) * 8 + k];
                    assert!((got - want).abs() < 1e-9, "cell ({cy},{cx}) bin {k}");
                }
            }
        }
    }

    #[test]
    fn invariant_to_offset_and_scale() {
        let img = random_image(9, [1, 2, 16, 16]);
        let base = compute_hog(&img, &HogParams::default()).unwrap();
        let shifted = compute_hog(&img.map(|v| v + 3.0), &HogParams::default()).unwrap();
        let scaled = compute_hog(&img.map(|v| v * 7.5), &HogParams::default()).unwrap();
        assert!(base.max_abs_diff(&shifted) < 1e-6);
        assert!(base.max_abs_diff(&scaled) < 1e-6);
    }

    #[test]
    fn indivisible_dims_are_rejected() {
        let img = Tensor::<f64>::zeros([1, 1, 12, 16]);
        assert!(matches!(compute_hog(&img, &HogParams::default()), Err(Error::Feature(_))));
    }
}
