//! Canny edge maps, one per input channel.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::conv::{correlate_replicate, Kernel};
use super::image_dims;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CannyParams {
    pub gaussian_sigma: f64,
    pub kernel_size: usize,
    /// Weak threshold as a fraction of the maximum gradient magnitude.
    pub low: f64,
    /// Strong threshold as a fraction of the maximum gradient magnitude.
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 1.4,
            kernel_size: 5,
            low: 0.1,
            high: 0.2,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low && self.low < self.high && self.high <= 1.0) {
            return Err(Error::Config(format!(
                "Canny thresholds need 0 < low < high <= 1, got {} / {}",
                self.low, self.high
            )));
        }
        if self.kernel_size % 2 == 0 || self.gaussian_sigma <= 0.0 {
            return Err(Error::Config("Canny kernel size must be odd and sigma positive".into()));
        }
        Ok(())
    }
}

/// Binary edge maps `[B, C, H, W]` with values in `{0, 1}`.
pub fn compute_canny<S: Scalar>(image: &Tensor<S>, p: &CannyParams) -> Result<Tensor<f64>> {
    p.validate()?;
    let (b, c, h, w) = image_dims(image)?;
    if h < p.kernel_size || w < p.kernel_size {
        return Err(Error::Feature(format!(
            "image {h}x{w} smaller than the {}x{} blur kernel",
            p.kernel_size, p.kernel_size
        )));
    }
    let blur = Kernel::gaussian(p.kernel_size, p.gaussian_sigma);
    let mut out = Vec::with_capacity(b * c * h * w);
    for plane in image.data().chunks(h * w) {
        let plane: Vec<f64> = plane.iter().map(|v| v.as_f64()).collect();
        out.extend(canny_plane(&plane, h, w, &blur, p));
    }
    Tensor::new(vec![b, c, h, w], out)
}

fn canny_plane(plane: &[f64], h: usize, w: usize, blur: &Kernel, p: &CannyParams) -> Vec<f64> {
    let smooth = correlate_replicate(plane, h, w, blur);
    let (gx, gy) = sobel(&smooth, h, w);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return vec![0.0; h * w];
    }

    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // thin: keep local maxima along the quantized gradient direction
    let mut thin = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (dy, dx) = direction_step(gx[i], gy[i]);
            let (yi, xi) = (y as isize, x as isize);
            if m >= at(yi + dy, xi + dx) && m >= at(yi - dy, xi - dx) {
                thin[i] = m;
            }
        }
    }

    let (low, high) = (p.low * max, p.high * max);
    let mut edges = vec![0.0; h * w];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            edges[i] = 1.0;
            queue.push_back(i);
        }
    }
    // hysteresis: grow strong edges through 8-connected weak pixels
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if edges[j] == 0.0 && thin[j] >= low {
                    edges[j] = 1.0;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}

/// Sobel responses with replicate borders, each written as
/// `(1·a + 2·b + 1·c) − (1·d + 2·e + 1·f)` so flat regions give exactly 0.
fn sobel(src: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        src[y * w + x]
    };
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let right = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1);
            let left = at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1);
            let down = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1);
            let up = at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1);
            gx[i] = right - left;
            gy[i] = down - up;
        }
    }
    (gx, gy)
}

/// Neighbor offset `(dy, dx)` along the gradient, quantized to 0/45/90/135°.
fn direction_step(gx: f64, gy: f64) -> (isize, isize) {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (0, 1)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let img = Tensor::<f64>::full([1, 1, 16, 16], 0.8);
        let e = compute_canny(&img, &CannyParams::default()).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn square_outline_is_closed_and_binary() {
        let n = 64;
        let img = Tensor::<f64>::from_fn([1, 1, n, n], |i| {
            let (y, x) = (i / n, i % n);
            if (24..40).contains(&y) && (24..40).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        let e = compute_canny(&img, &CannyParams::default()).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0 || v == 1.0));
        // edges hug the square boundary and nothing far from it fires
        for y in 0..n {
            for x in 0..n {
                if e.data()[y * n + x] == 1.0 {
                    let near = (21..43).contains(&y) && (21..43).contains(&x);
                    let inside = (27..37).contains(&y) && (27..37).contains(&x);
                    assert!(near && !inside, "stray edge at ({y},{x})");
                }
            }
        }
        // every side of the square carries edge pixels
        for &(y, x) in &[(32usize, 23usize), (32, 39), (23, 32), (39, 32)] {
            let hit = (y - 1..=y + 1).any(|yy| (x - 1..=x + 1).any(|xx| e.data()[yy * n + xx] == 1.0));
            assert!(hit, "no edge near ({y},{x})");
        }
    }

    #[test]
    fn rejects_tiny_images_and_bad_thresholds() {
        let img = Tensor::<f64>::zeros([1, 1, 4, 4]);
        assert!(matches!(compute_canny(&img, &CannyParams::default()), Err(Error::Feature(_))));
        let bad = CannyParams {
            low: 0.3,
            high: 0.2,
            ..CannyParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
