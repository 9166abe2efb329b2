use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeedRng, Tensor};

/// Per-sample split of the `L` patches into visible and masked sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub num_patches: usize,
    /// Visible patch indices, in shuffle order.
    pub ids_keep: Vec<Vec<usize>>,
    /// Masked patch indices, in shuffle order.
    pub ids_mask: Vec<Vec<usize>>,
    /// Position of each canonical patch within `ids_keep ++ ids_mask`.
    pub ids_restore: Vec<Vec<usize>>,
}

/// `floor(L·(1 − ratio))`.
pub fn keep_count(num_patches: usize, ratio: f64) -> usize {
    // tiny slack so ratios like 0.3 of 10 don't land at 2.9999999
    ((num_patches as f64) * (1.0 - ratio) + 1e-9).floor() as usize
}

impl MaskPlan {
    /// Shuffles each sample's patches by argsort of uniform noise and keeps
    /// the first `floor(L·(1 − ratio))`.
    pub fn random(batch: usize, num_patches: usize, ratio: f64, rng: &mut SeedRng) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!("masking ratio {ratio} outside [0, 1)")));
        }
        let keep = keep_count(num_patches, ratio);
        let mut plan = Self {
            num_patches,
            ids_keep: Vec::with_capacity(batch),
            ids_mask: Vec::with_capacity(batch),
            ids_restore: Vec::with_capacity(batch),
        };
        for _ in 0..batch {
            let noise: Vec<f64> = (0..num_patches).map(|_| rng.uniform()).collect();
            let mut shuffle: Vec<usize> = (0..num_patches).collect();
            shuffle.sort_by(|&a, &b| noise[a].total_cmp(&noise[b]).then(a.cmp(&b)));
            let mut restore = vec![0; num_patches];
            for (pos, &id) in shuffle.iter().enumerate() {
                restore[id] = pos;
            }
            plan.ids_mask.push(shuffle[keep..].to_vec());
            plan.ids_keep.push(shuffle[..keep].to_vec());
            plan.ids_restore.push(restore);
        }
        Ok(plan)
    }

    /// Every patch visible, canonical order.
    pub fn identity(batch: usize, num_patches: usize) -> Self {
        let ids: Vec<usize> = (0..num_patches).collect();
        Self {
            num_patches,
            ids_keep: vec![ids.clone(); batch],
            ids_mask: vec![Vec::new(); batch],
            ids_restore: vec![ids; batch],
        }
    }

    pub fn batch(&self) -> usize {
        self.ids_keep.len()
    }

    pub fn num_keep(&self) -> usize {
        self.ids_keep.first().map_or(0, Vec::len)
    }

    pub fn num_masked(&self) -> usize {
        self.num_patches - self.num_keep()
    }

    /// `ids_keep ++ ids_mask` per sample.
    pub fn shuffle(&self) -> Vec<Vec<usize>> {
        self.ids_keep
            .iter()
            .zip(&self.ids_mask)
            .map(|(k, m)| k.iter().chain(m).copied().collect())
            .collect()
    }
}

/// Splits `[B, L, K]` tokens into the visible subset and its mask plan.
pub fn random_masking<S: Scalar>(tokens: &Tensor<S>, ratio: f64, rng: &mut SeedRng) -> Result<(Tensor<S>, MaskPlan)> {
    let (b, l) = match *tokens.dims() {
        [b, l, _] => (b, l),
        ref d => return Err(Error::shape("random_masking", format!("expected [B, L, K], got {d:?}"))),
    };
    let plan = MaskPlan::random(b, l, ratio, rng)?;
    if plan.num_keep() == 0 {
        return Err(Error::InvalidArgument(format!("masking ratio {ratio} leaves no visible patch of {l}")));
    }
    Ok((tokens.gather_rows(&plan.ids_keep)?, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_count_examples() {
        assert_eq!(keep_count(196, 0.7), 58);
        assert_eq!(keep_count(196, 0.0), 196);
        assert_eq!(keep_count(10, 0.7), 3);
        assert_eq!(keep_count(4, 0.75), 1);
    }

    #[test]
    fn plan_partitions_and_restores() {
        let mut rng = SeedRng::new(4);
        let plan = MaskPlan::random(3, 196, 0.7, &mut rng).unwrap();
        assert_eq!(plan.num_keep(), 58);
        assert_eq!(plan.num_masked(), 138);
        for (bi, shuffle) in plan.shuffle().iter().enumerate() {
            let mut all = shuffle.clone();
            all.sort_unstable();
            assert_eq!(all, (0..196).collect::<Vec<_>>());
            for (id, &pos) in plan.ids_restore[bi].iter().enumerate() {
                assert_eq!(shuffle[pos], id);
            }
        }
    }

    #[test]
    fn zero_ratio_is_identity_restore() {
        let mut rng = SeedRng::new(5);
        let plan = MaskPlan::random(2, 16, 0.0, &mut rng).unwrap();
        assert_eq!(plan.num_masked(), 0);
        let shuffled = plan.shuffle();
        for bi in 0..2 {
            let restored: Vec<usize> = plan.ids_restore[bi].iter().map(|&p| shuffled[bi][p]).collect();
            assert_eq!(restored, (0..16).collect::<Vec<_>>());
        }
    }

    #[test]
    fn masking_gathers_visible_tokens() {
        let mut rng = SeedRng::new(6);
        let tokens = Tensor::<f64>::from_fn([2, 8, 3], |i| i as f64);
        let (vis, plan) = random_masking(&tokens, 0.5, &mut rng).unwrap();
        assert_eq!(vis.dims(), &[2, 4, 3]);
        for bi in 0..2 {
            for (j, &id) in plan.ids_keep[bi].iter().enumerate() {
                assert_eq!(vis.data()[(bi * 4 + j) * 3], ((bi * 8 + id) * 3) as f64);
            }
        }
    }
}
