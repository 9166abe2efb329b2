use std::fmt;
use std::sync::Arc;

use super::kernels;
use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major n-dimensional array.
///
/// Storage is reference counted, so cloning a tensor is cheap and a value
/// can be shared between a parameter store and a tape without copying.
/// Mutation goes through [`Tensor::data_mut`], which copies on write.
#[derive(Clone, PartialEq)]
pub struct Tensor<S = f32> {
    dims: Vec<usize>,
    data: Arc<Vec<S>>,
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<S> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("dims", &self.dims)
            .field("dtype", &S::DTYPE)
            .field("head", &preview)
            .finish()
    }
}

pub(crate) fn numel(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl<S: Scalar> Tensor<S> {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let dims = dims.into();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("zero-sized dimension in {dims:?}")));
        }
        if numel(&dims) != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("dims {dims:?} need {} elements, got {}", numel(&dims), data.len()),
            ));
        }
        Ok(Self {
            dims,
            data: Arc::new(data),
        })
    }

    /// Builds a tensor whose length has already been validated by the caller.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(numel(&dims), data.len());
        Self {
            dims,
            data: Arc::new(data),
        }
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Self {
        Self::full(dims, S::zero())
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: S) -> Self {
        let dims = dims.into();
        let n = numel(&dims);
        Self::from_parts(dims, vec![value; n])
    }

    pub fn scalar(value: S) -> Self {
        Self::from_parts(vec![], vec![value])
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> S) -> Self {
        let dims = dims.into();
        let data = (0..numel(&dims)).map(&mut f).collect();
        Self::from_parts(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<S> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() on tensor with dims {:?}", self.dims);
        self.data[0]
    }

    pub fn shares_storage(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn reshape(&self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if numel(&dims) != self.len() || dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot reshape {:?} into {dims:?}", self.dims),
            ));
        }
        Ok(Self {
            dims,
            data: Arc::clone(&self.data),
        })
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            self.dims.clone(),
            self.data.iter().map(|v| T::of(v.as_f64())).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_parts(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(
                "zip_map",
                format!("{:?} vs {:?}", self.dims, other.dims),
            ));
        }
        Ok(Self::from_parts(
            self.dims.clone(),
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> S {
        self.sum() / S::of(self.len() as f64)
    }

    pub fn l2_norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Matrix product. Accepts `[m,k]·[k,n]` and batched `[b,m,k]·[b,k,n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (batch, m, k, n) = matmul_dims(&self.dims, &other.dims)?;
        let mut out = vec![S::zero(); batch * m * n];
        for bi in 0..batch {
            kernels::gemm_nn(
                &self.data[bi * m * k..(bi + 1) * m * k],
                &other.data[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let dims = if self.rank() == 3 {
            vec![batch, m, n]
        } else {
            vec![m, n]
        };
        Ok(Self::from_parts(dims, out))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        validate_axes(axes, self.rank())?;
        let dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![S::zero(); self.len()];
        kernels::permute_into(&self.data, &self.dims, axes, &mut out);
        Ok(Self::from_parts(dims, out))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Self> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::shape("transpose", "rank < 2"));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    /// Sub-range `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        if axis >= self.rank() || len == 0 || start + len > self.dims[axis] {
            return Err(Error::shape(
                "narrow",
                format!("axis {axis} range {start}+{len} out of {:?}", self.dims),
            ));
        }
        let outer = numel(&self.dims[..axis]);
        let inner = numel(&self.dims[axis + 1..]);
        let span = self.dims[axis];
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * span + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut dims = self.dims.clone();
        dims[axis] = len;
        Ok(Self::from_parts(dims, out))
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        if axis >= first.rank() {
            return Err(Error::shape("concat", "axis out of range"));
        }
        for p in parts {
            let ok = p.rank() == first.rank()
                && p
                    .dims
                    .iter()
                    .zip(&first.dims)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} vs {:?} along axis {axis}", p.dims, first.dims),
                ));
            }
        }
        let outer = numel(&first.dims[..axis]);
        let inner = numel(&first.dims[axis + 1..]);
        let total: usize = parts.iter().map(|p| p.dims[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.dims[axis] * inner;
                out.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut dims = first.dims.clone();
        dims[axis] = total;
        Ok(Self::from_parts(dims, out))
    }

    /// Selects rows along axis 1 of a `[b, l, k]` tensor, independently per
    /// batch entry: `out[i, j, :] = self[i, index[i][j], :]`.
    pub fn gather_rows(&self, index: &[Vec<usize>]) -> Result<Self> {
        let (b, l, k) = rank3(&self.dims, "gather_rows")?;
        let n = check_row_index(index, b, l)?;
        let mut out = Vec::with_capacity(b * n * k);
        for (bi, rows) in index.iter().enumerate() {
            for &r in rows {
                let base = (bi * l + r) * k;
                out.extend_from_slice(&self.data[base..base + k]);
            }
        }
        Ok(Self::from_parts(vec![b, n, k], out))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(Error::shape("mean_axis", "axis out of range"));
        }
        let outer = numel(&self.dims[..axis]);
        let span = self.dims[axis];
        let inner = numel(&self.dims[axis + 1..]);
        let mut out = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for s in 0..span {
                let src = &self.data[(o * span + s) * inner..(o * span + s + 1) * inner];
                for (d, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        let inv = S::one() / S::of(span as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        let mut dims = self.dims.clone();
        dims.remove(axis);
        Ok(Self::from_parts(dims, out))
    }
}

pub(crate) fn validate_axes(axes: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if axes.len() != rank {
        return Err(Error::shape("permute", format!("{axes:?} for rank {rank}")));
    }
    for &a in axes {
        if a >= rank || seen[a] {
            return Err(Error::shape("permute", format!("invalid axes {axes:?}")));
        }
        seen[a] = true;
    }
    Ok(())
}

pub(crate) fn rank3(dims: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match dims {
        &[b, l, k] => Ok((b, l, k)),
        _ => Err(Error::shape(op, format!("expected rank 3, got {dims:?}"))),
    }
}

pub(crate) fn check_row_index(index: &[Vec<usize>], b: usize, l: usize) -> Result<usize> {
    if index.len() != b {
        return Err(Error::shape(
            "gather_rows",
            format!("index has {} batch entries, tensor has {b}", index.len()),
        ));
    }
    let n = index.first().map(Vec::len).unwrap_or(0);
    if n == 0 {
        return Err(Error::shape("gather_rows", "empty row selection"));
    }
    for rows in index {
        if rows.len() != n || rows.iter().any(|&r| r >= l) {
            return Err(Error::shape(
                "gather_rows",
                format!("ragged or out-of-range row index (l = {l})"),
            ));
        }
    }
    Ok(n)
}

/// `(batch, m, k, n)` for a 2-D or batched 3-D product.
pub(crate) fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match (a, b) {
        (&[m, k], &[k2, n]) if k == k2 => Ok((1, m, k, n)),
        (&[ba, m, k], &[bb, k2, n]) if ba == bb && k == k2 => Ok((ba, m, k, n)),
        _ => Err(Error::shape("matmul", format!("{a:?} x {b:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_lengths() {
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new([2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn identity_matmul() {
        let i2 = Tensor::<f64>::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::<f64>::new([2, 2], vec![3.0, -1.0, 2.5, 7.0]).unwrap();
        assert_eq!(i2.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Tensor::<f32>::zeros([2, 3]);
        let b = Tensor::<f32>::zeros([2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn narrow_and_concat_are_inverse() {
        let t = Tensor::<f32>::from_fn([2, 5, 3], |i| i as f32);
        let a = t.narrow(1, 0, 2).unwrap();
        let b = t.narrow(1, 2, 3).unwrap();
        assert_eq!(Tensor::concat(&[&a, &b], 1).unwrap(), t);
    }

    #[test]
    fn gather_rows_selects_per_batch() {
        let t = Tensor::<f32>::from_fn([2, 3, 2], |i| i as f32);
        let g = t.gather_rows(&[vec![2, 0], vec![1, 1]]).unwrap();
        assert_eq!(g.dims(), &[2, 2, 2]);
        assert_eq!(g.data(), &[4.0, 5.0, 0.0, 1.0, 8.0, 9.0, 8.0, 9.0]);
    }

    #[test]
    fn data_mut_copies_on_write() {
        let a = Tensor::<f32>::zeros([4]);
        let mut b = a.clone();
        assert!(a.shares_storage(&b));
        b.data_mut()[0] = 1.0;
        assert_eq!(a.data()[0], 0.0);
        assert!(!a.shares_storage(&b));
    }
}
