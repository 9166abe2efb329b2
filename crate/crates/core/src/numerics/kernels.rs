//! Slice-level kernels shared by the forward ops and their adjoints.
//!
//! Every loop here runs in a fixed order, so results are bitwise
//! reproducible for identical inputs.

use super::Scalar;

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == S::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += a_ip * bj;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
pub fn gemm_nt<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = S::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            c[i * k + p] += acc;
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub fn gemm_tn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == S::zero() {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += a_ip * bj;
            }
        }
    }
}

/// Row-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Writes `src` (shape `dims`) permuted by `axes` into `dst`; output axis `i`
/// is input axis `axes[i]`.
pub fn permute_into<S: Scalar>(src: &[S], dims: &[usize], axes: &[usize], dst: &mut [S]) {
    let rank = dims.len();
    let in_strides = strides(dims);
    let out_dims: Vec<usize> = axes.iter().map(|&a| dims[a]).collect();
    let src_step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for out in dst.iter_mut() {
        *out = src[offset];
        // odometer increment over the output index
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += src_step[ax];
            if idx[ax] < out_dims[ax] {
                break;
            }
            offset -= src_step[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

/// Inverse of an axis permutation.
pub fn invert_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Standard normal CDF via `erfc` (exact, not the tanh approximation).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        // values from tables of the error function
        let cases = [
            (0.0, 1.0),
            (0.1, 0.887_537_083_981_715_1),
            (0.5, 0.479_500_122_186_953_5),
            (1.0, 0.157_299_207_050_285_13),
            (2.0, 0.004_677_734_981_047_266),
            (3.0, 2.209_049_699_858_544e-5),
            (5.0, 1.537_459_794_428_034_8e-12),
        ];
        for (x, want) in cases {
            let got = erfc(x);
            assert!(((got - want) / want).abs() < 1e-13, "erfc({x}) = {got}, want {want}");
            assert!((erfc(-x) - (2.0 - want)).abs() < 1e-14);
        }
    }

    #[test]
    fn permute_matches_manual_transpose() {
        let src: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let mut dst = vec![0.0; 6];
        permute_into(&src, &[2, 3], &[1, 0], &mut dst);
        assert_eq!(dst, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn gemm_variants_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm_nn(&a, &b, &mut c, 2, 3, 4);
        // b transposed: 4x3
        let mut bt = vec![0.0; 12];
        permute_into(&b, &[3, 4], &[1, 0], &mut bt);
        let mut c2 = vec![0.0; 8];
        gemm_nt(&a, &bt, &mut c2, 2, 3, 4);
        assert_eq!(c, c2);
        let mut at = vec![0.0; 6];
        permute_into(&a, &[2, 3], &[1, 0], &mut at);
        let mut c3 = vec![0.0; 8];
        gemm_tn(&at, &b, &mut c3, 3, 2, 4);
        assert_eq!(c, c3);
    }
}
