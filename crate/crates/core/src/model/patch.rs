use crate::error::{Error, Result};
use crate::features::image_dims;
use crate::numerics::{Scalar, Tensor};

/// Patch grid of one image: `side` patches per axis, `patch` pixels each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(h: usize, w: usize, patch: usize) -> Result<Self> {
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(Error::Feature(format!(
                "image {h}x{w} is not divisible into {patch}x{patch} patches"
            )));
        }
        Ok(Self {
            patch,
            rows: h / patch,
            cols: w / patch,
        })
    }

    /// Patch count `L`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `[B, C, H, W]` → `[B, L, p²·C]`. Patches in row-major order; each patch
/// vector is channel-major, then row, then column.
pub fn patchify<S: Scalar>(image: &Tensor<S>, patch: usize) -> Result<Tensor<S>> {
    let (b, c, h, w) = image_dims(image)?;
    let grid = PatchGrid::new(h, w, patch)?;
    let src = image.data();
    let k = patch * patch * c;
    let mut out = Vec::with_capacity(b * grid.len() * k);
    for bi in 0..b {
        for py in 0..grid.rows {
            for px in 0..grid.cols {
                for ci in 0..c {
                    let plane = &src[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    for y in 0..patch {
                        let row = (py * patch + y) * w + px * patch;
                        out.extend_from_slice(&plane[row..row + patch]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, grid.len(), k], out)
}

/// Inverse of [`patchify`] for `channels`-channel `h`×`w` images.
pub fn unpatchify<S: Scalar>(
    patches: &Tensor<S>,
    patch: usize,
    channels: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<S>> {
    let grid = PatchGrid::new(h, w, patch)?;
    let (b, l, k) = match *patches.dims() {
        [b, l, k] => (b, l, k),
        ref d => return Err(Error::shape("unpatchify", format!("expected [B, L, K], got {d:?}"))),
    };
    if l != grid.len() || k != patch * patch * channels {
        return Err(Error::shape(
            "unpatchify",
            format!("[{b}, {l}, {k}] does not match {channels}x{h}x{w} with patch {patch}"),
        ));
    }
    let src = patches.data();
    let mut out = vec![S::zero(); b * channels * h * w];
    for bi in 0..b {
        for (pi, vec) in src[bi * l * k..(bi + 1) * l * k].chunks(k).enumerate() {
            let (py, px) = (pi / grid.cols, pi % grid.cols);
            for ci in 0..channels {
                let plane = &mut out[(bi * channels + ci) * h * w..(bi * channels + ci + 1) * h * w];
                for y in 0..patch {
                    let row = (py * patch + y) * w + px * patch;
                    let s = (ci * patch + y) * patch;
                    plane[row..row + patch].copy_from_slice(&vec[s..s + patch]);
                }
            }
        }
    }
    Tensor::new(vec![b, channels, h, w], out)
}
