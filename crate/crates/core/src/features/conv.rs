//! Fixed-weight 2-D correlation with replicate borders. The descriptors are
//! built from these as weight-frozen filter banks.

/// Square or rectangular correlation kernel, anchored at its center.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Self {
        assert_eq!(rows * cols, weights.len());
        assert!(rows % 2 == 1 && cols % 2 == 1, "kernel sides must be odd");
        Self { rows, cols, weights }
    }

    /// `[-1, 0, 1]` along x.
    pub fn central_dx() -> Self {
        Self::new(1, 3, vec![-1.0, 0.0, 1.0])
    }

    /// `[-1, 0, 1]ᵀ` along y.
    pub fn central_dy() -> Self {
        Self::new(3, 1, vec![-1.0, 0.0, 1.0])
    }

    pub fn sobel_x() -> Self {
        Self::new(3, 3, vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0])
    }

    pub fn sobel_y() -> Self {
        Self::new(3, 3, vec![-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0])
    }

    /// Normalized `size×size` Gaussian.
    pub fn gaussian(size: usize, sigma: f64) -> Self {
        let half = (size / 2) as f64;
        let one_d: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - half;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let mut w: Vec<f64> = one_d
            .iter()
            .flat_map(|a| one_d.iter().map(move |b| a * b))
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Self::new(size, size, w)
    }
}

/// Correlates an `h×w` plane with `k`, clamping reads at the borders.
pub fn correlate_replicate(src: &[f64], h: usize, w: usize, k: &Kernel) -> Vec<f64> {
    debug_assert_eq!(src.len(), h * w);
    let (ry, rx) = ((k.rows / 2) as isize, (k.cols / 2) as isize);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..k.rows {
                let sy = clamp(y as isize + ky as isize - ry, h);
                for kx in 0..k.cols {
                    let sx = clamp(x as isize + kx as isize - rx, w);
                    acc += k.weights[ky * k.cols + kx] * src[sy * w + sx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_sums_to_one_and_is_symmetric() {
        let g = Kernel::gaussian(5, 1.4);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(g.weights[i * 5 + j], g.weights[j * 5 + i]);
            }
        }
    }

    #[test]
    fn central_difference_with_replicated_border() {
        let src = [1.0, 2.0, 4.0, 8.0];
        let out = correlate_replicate(&src, 1, 4, &Kernel::central_dx());
        assert_eq!(out, vec![1.0, 3.0, 6.0, 4.0]);
    }
}
