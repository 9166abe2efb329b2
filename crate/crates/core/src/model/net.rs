use std::collections::BTreeMap;

use super::{patchify, MaskPlan, ModelConfig, ParamStore};
use crate::error::{Error, Result};
use crate::features::TargetSet;
use crate::numerics::{Scalar, SeedRng, Tape, Tensor, Var, LAYER_NORM_EPS};

/// Fixed 2-D sin-cos positional table `[side², dim]`: the first half of
/// each row encodes the patch row, the second half the column.
pub fn sincos_pos_embed(side: usize, dim: usize) -> Vec<f64> {
    let quarter = dim / 4;
    let omega: Vec<f64> = (0..quarter)
        .map(|i| 1.0 / 10000f64.powf(i as f64 / quarter as f64))
        .collect();
    let mut out = Vec::with_capacity(side * side * dim);
    for r in 0..side {
        for c in 0..side {
            for pos in [r as f64, c as f64] {
                out.extend(omega.iter().map(|w| (pos * w).sin()));
                out.extend(omega.iter().map(|w| (pos * w).cos()));
            }
        }
    }
    out
}

/// FG-MAE network: ViT encoder over visible patches, lightweight decoder
/// with a learned mask token, and one or two linear heads.
#[derive(Debug, Clone, PartialEq)]
pub struct FgMae<S: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<S>,
}

/// Parameters registered on a tape for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Binds pre-registered vars by name, e.g. inside a gradient check.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("parameter {name} not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

fn init_block<S: Scalar>(p: &mut ParamStore<S>, rng: &SeedRng, prefix: &str, dim: usize, mlp: usize) {
    p.init_ones(&format!("{prefix}.norm1.g"), &[dim]);
    p.init_zeros(&format!("{prefix}.norm1.b"), &[dim]);
    p.init_weight(rng, &format!("{prefix}.attn.qkv.w"), &[dim, 3 * dim]);
    p.init_zeros(&format!("{prefix}.attn.qkv.b"), &[3 * dim]);
    p.init_weight(rng, &format!("{prefix}.attn.proj.w"), &[dim, dim]);
    p.init_zeros(&format!("{prefix}.attn.proj.b"), &[dim]);
    p.init_ones(&format!("{prefix}.norm2.g"), &[dim]);
    p.init_zeros(&format!("{prefix}.norm2.b"), &[dim]);
    p.init_weight(rng, &format!("{prefix}.mlp.fc1.w"), &[dim, mlp]);
    p.init_zeros(&format!("{prefix}.mlp.fc1.b"), &[mlp]);
    p.init_weight(rng, &format!("{prefix}.mlp.fc2.w"), &[mlp, dim]);
    p.init_zeros(&format!("{prefix}.mlp.fc2.b"), &[dim]);
}

impl<S: Scalar> FgMae<S> {
    /// Truncated-normal weights, zero biases, unit layer-norm gains; seeded
    /// per parameter name from `rng`.
    pub fn new(config: ModelConfig, rng: &SeedRng) -> Result<Self> {
        config.validate()?;
        let rng = rng.split("init");
        let mut p = ParamStore::new();
        let (ke, kd) = (config.enc_dim, config.dec_dim);
        p.init_weight(&rng, "enc.patch_embed.w", &[config.patch_dim(), ke]);
        p.init_zeros("enc.patch_embed.b", &[ke]);
        for i in 0..config.enc_depth {
            init_block(&mut p, &rng, &format!("enc.blocks.{i}"), ke, ke * config.mlp_ratio);
        }
        p.init_ones("enc.norm.g", &[ke]);
        p.init_zeros("enc.norm.b", &[ke]);
        p.init_weight(&rng, "dec.embed.w", &[ke, kd]);
        p.init_zeros("dec.embed.b", &[kd]);
        p.init_weight(&rng, "dec.mask_token", &[kd]);
        for i in 0..config.dec_depth {
            init_block(&mut p, &rng, &format!("dec.blocks.{i}"), kd, kd * config.mlp_ratio);
        }
        p.init_ones("dec.norm.g", &[kd]);
        p.init_zeros("dec.norm.b", &[kd]);
        for (j, &k_out) in config.head_widths.iter().enumerate() {
            p.init_weight(&rng, &format!("head.{j}.w"), &[kd, k_out]);
            p.init_zeros(&format!("head.{j}.b"), &[k_out]);
        }
        Ok(Self { config, params: p })
    }

    pub fn cast<T: Scalar>(&self) -> FgMae<T> {
        FgMae {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// Zeroes every prediction-head weight and bias.
    pub fn zero_heads(&mut self) {
        for (name, t) in self.params.iter_mut() {
            if name.starts_with("head.") {
                *t = Tensor::zeros(t.dims().to_vec());
            }
        }
    }

    /// Registers every parameter on `tape`; `trainable` selects params
    /// (gradients tracked) or constants.
    pub fn bind(&self, tape: &mut Tape<S>, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone(), trainable(name))))
            .collect();
        Bound { vars }
    }

    /// Full pass: patchify, drop masked patches, encode, decode, heads.
    /// Returns one `[B, L, K_out]` prediction per head.
    pub fn forward(&self, tape: &mut Tape<S>, bound: &Bound, image: &Tensor<S>, plan: &MaskPlan) -> Result<Vec<Var>> {
        let encoded = self.encode_image(tape, bound, image, plan)?;
        let decoded = self.decode(tape, bound, encoded, plan)?;
        self.predict_heads(tape, bound, decoded)
    }

    /// Patchifies `image` and encodes the patches `plan` keeps.
    pub fn encode_image(&self, tape: &mut Tape<S>, bound: &Bound, image: &Tensor<S>, plan: &MaskPlan) -> Result<Var> {
        let c = &self.config;
        if image.dims()[1..] != [c.in_channels, c.image_size, c.image_size] {
            return Err(Error::shape(
                "encode",
                format!(
                    "image {:?} does not match model input {}x{}x{}",
                    image.dims(),
                    c.in_channels,
                    c.image_size,
                    c.image_size
                ),
            ));
        }
        let patches = match &c.input_norm {
            Some(n) => patchify(&standardize_channels(image, &n.mean, &n.std), c.patch_size)?,
            None => patchify(image, c.patch_size)?,
        };
        self.check_plan(plan, image.dims()[0])?;
        let visible = patches.gather_rows(&plan.ids_keep)?;
        let x = tape.constant(visible);
        self.encode(tape, bound, x, &plan.ids_keep)
    }

    /// Encoder over visible patch vectors `[B, N, p²·C]` located at
    /// `positions` (patch indices per sample).
    pub fn encode(&self, tape: &mut Tape<S>, bound: &Bound, tokens: Var, positions: &[Vec<usize>]) -> Result<Var> {
        let c = &self.config;
        let dims = tape.dims(tokens).to_vec();
        if dims.len() != 3 || dims[2] != c.patch_dim() {
            return Err(Error::shape(
                "encode",
                format!("tokens {dims:?} do not match patch width {}", c.patch_dim()),
            ));
        }
        let mut x = linear(tape, bound, tokens, "enc.patch_embed")?;
        let pos = gather_pos(c.grid_side(), c.enc_dim, positions)?;
        let pos = tape.constant(pos);
        x = tape.add(x, pos)?;
        for i in 0..c.enc_depth {
            x = block(tape, bound, x, &format!("enc.blocks.{i}"), c.enc_heads)?;
        }
        layer_norm(tape, bound, x, "enc.norm")
    }

    /// Decoder: project, append mask tokens, unshuffle, add positions,
    /// blocks, norm. Output `[B, L, K_de]`.
    pub fn decode(&self, tape: &mut Tape<S>, bound: &Bound, encoded: Var, plan: &MaskPlan) -> Result<Var> {
        let c = &self.config;
        let dims = tape.dims(encoded).to_vec();
        let b = dims[0];
        self.check_plan(plan, b)?;
        if dims[1] != plan.num_keep() {
            return Err(Error::shape(
                "decode",
                format!("{} encoded tokens but plan keeps {}", dims[1], plan.num_keep()),
            ));
        }
        let mut x = linear(tape, bound, encoded, "dec.embed")?;
        let masked = plan.num_masked();
        if masked > 0 {
            let tokens = tape.expand(bound.var("dec.mask_token")?, &[b, masked, c.dec_dim])?;
            x = tape.concat(&[x, tokens], 1)?;
        }
        x = tape.gather_rows(x, &plan.ids_restore)?;
        let pos = sincos_pos_embed(c.grid_side(), c.dec_dim);
        let pos = tape.constant(Tensor::new(
            vec![c.num_patches(), c.dec_dim],
            pos.into_iter().map(S::of).collect(),
        )?);
        x = tape.add_broadcast(x, pos)?;
        for i in 0..c.dec_depth {
            x = block(tape, bound, x, &format!("dec.blocks.{i}"), c.dec_heads)?;
        }
        layer_norm(tape, bound, x, "dec.norm")
    }

    /// One linear map per head, all reading the same decoder output.
    pub fn predict_heads(&self, tape: &mut Tape<S>, bound: &Bound, decoded: Var) -> Result<Vec<Var>> {
        (0..self.config.head_widths.len())
            .map(|j| linear(tape, bound, decoded, &format!("head.{j}")))
            .collect()
    }

    /// Masked L2 loss of a full forward pass against `targets`.
    pub fn loss(
        &self,
        tape: &mut Tape<S>,
        bound: &Bound,
        image: &Tensor<S>,
        targets: &TargetSet,
        plan: &MaskPlan,
    ) -> Result<Var> {
        let preds = self.forward(tape, bound, image, plan)?;
        let weights: Vec<f64> = (0..preds.len()).map(|j| self.config.loss_weight(j)).collect();
        masked_l2_loss(tape, &preds, targets, plan, &weights)
    }

    /// Encoder tokens `[B, L, K_en]` with every patch visible, in patch order.
    pub fn encoder_tokens(&self, image: &Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, |_| false);
        let plan = MaskPlan::identity(image.dims()[0], self.config.num_patches());
        let enc = self.encode_image(&mut tape, &bound, image, &plan)?;
        Ok(tape.value(enc).clone())
    }

    /// Mean-pooled encoder features `[B, K_en]` with every patch visible.
    pub fn pooled_features(&self, image: &Tensor<S>) -> Result<Tensor<S>> {
        self.encoder_tokens(image)?.mean_axis(1)
    }

    fn check_plan(&self, plan: &MaskPlan, batch: usize) -> Result<()> {
        if plan.num_patches != self.config.num_patches() || plan.batch() != batch {
            return Err(Error::shape(
                "mask plan",
                format!(
                    "plan for {}x{} patches, model has {} patches and batch {batch}",
                    plan.batch(),
                    plan.num_patches,
                    self.config.num_patches()
                ),
            ));
        }
        Ok(())
    }
}

/// `(x − mean_c) / std_c` per channel of a `[B, C, H, W]` batch.
pub fn standardize_channels<S: Scalar>(image: &Tensor<S>, mean: &[f64], std: &[f64]) -> Tensor<S> {
    let (c, hw) = (image.dims()[1], image.dims()[2] * image.dims()[3]);
    let mut out = image.clone();
    for (i, plane) in out.data_mut().chunks_mut(hw).enumerate() {
        let (m, s) = (S::of(mean[i % c]), S::of(1.0 / std[i % c]));
        plane.iter_mut().for_each(|v| *v = (*v - m) * s);
    }
    out
}

/// Weighted sum over heads of the mean squared error on masked patches only.
pub fn masked_l2_loss<S: Scalar>(
    tape: &mut Tape<S>,
    preds: &[Var],
    targets: &TargetSet,
    plan: &MaskPlan,
    weights: &[f64],
) -> Result<Var> {
    if preds.len() != targets.heads.len() || preds.len() != weights.len() {
        return Err(Error::shape(
            "masked_l2_loss",
            format!("{} predictions, {} targets, {} weights", preds.len(), targets.heads.len(), weights.len()),
        ));
    }
    if plan.num_masked() == 0 {
        return Err(Error::InvalidArgument("masked loss needs at least one masked patch".into()));
    }
    let mut total: Option<Var> = None;
    for ((&pred, target), &w) in preds.iter().zip(&targets.heads).zip(weights) {
        if tape.dims(pred) != target.values.dims() {
            return Err(Error::shape(
                "masked_l2_loss",
                format!("prediction {:?} vs target {:?}", tape.dims(pred), target.values.dims()),
            ));
        }
        let p = tape.gather_rows(pred, &plan.ids_mask)?;
        let t = tape.constant(target.values.gather_rows(&plan.ids_mask)?.cast());
        let diff = tape.sub(p, t)?;
        let sq = tape.square(diff)?;
        let mut term = tape.mean_all(sq)?;
        if w != 1.0 {
            term = tape.scale(term, S::of(w))?;
        }
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.expect("at least one head"))
}

fn gather_pos<S: Scalar>(side: usize, dim: usize, positions: &[Vec<usize>]) -> Result<Tensor<S>> {
    let table = sincos_pos_embed(side, dim);
    let n = positions.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(positions.len() * n * dim);
    for rows in positions {
        if rows.len() != n {
            return Err(Error::shape("positions", "ragged position lists"));
        }
        for &r in rows {
            if r >= side * side {
                return Err(Error::shape("positions", format!("patch {r} outside {side}x{side} grid")));
            }
            out.extend(table[r * dim..(r + 1) * dim].iter().map(|&v| S::of(v)));
        }
    }
    Tensor::new(vec![positions.len(), n, dim], out)
}

/// `x·W + b` over the last axis of a rank-3 value.
pub fn linear<S: Scalar>(tape: &mut Tape<S>, bound: &Bound, x: Var, prefix: &str) -> Result<Var> {
    let w = bound.var(&format!("{prefix}.w"))?;
    let b = bound.var(&format!("{prefix}.b"))?;
    let dims = tape.dims(x).to_vec();
    let k = *dims.last().expect("rank ≥ 1");
    let rows = dims[..dims.len() - 1].iter().product::<usize>();
    let out_dim = tape.dims(w)[1];
    let flat = tape.reshape(x, &[rows, k])?;
    let y = tape.matmul(flat, w)?;
    let y = tape.add_broadcast(y, b)?;
    let mut out_dims = dims[..dims.len() - 1].to_vec();
    out_dims.push(out_dim);
    tape.reshape(y, &out_dims)
}

fn layer_norm<S: Scalar>(tape: &mut Tape<S>, bound: &Bound, x: Var, prefix: &str) -> Result<Var> {
    let g = bound.var(&format!("{prefix}.g"))?;
    let b = bound.var(&format!("{prefix}.b"))?;
    tape.layer_norm(x, g, b, LAYER_NORM_EPS)
}

/// Pre-norm transformer block.
fn block<S: Scalar>(tape: &mut Tape<S>, bound: &Bound, x: Var, prefix: &str, heads: usize) -> Result<Var> {
    let h = layer_norm(tape, bound, x, &format!("{prefix}.norm1"))?;
    let a = attention(tape, bound, h, &format!("{prefix}.attn"), heads)?;
    let x = tape.add(x, a)?;
    let h = layer_norm(tape, bound, x, &format!("{prefix}.norm2"))?;
    let h = linear(tape, bound, h, &format!("{prefix}.mlp.fc1"))?;
    let h = tape.gelu(h)?;
    let h = linear(tape, bound, h, &format!("{prefix}.mlp.fc2"))?;
    tape.add(x, h)
}

/// Multi-head self-attention with scaled dot products.
fn attention<S: Scalar>(tape: &mut Tape<S>, bound: &Bound, x: Var, prefix: &str, heads: usize) -> Result<Var> {
    let dims = tape.dims(x).to_vec();
    let (b, n, d) = (dims[0], dims[1], dims[2]);
    let hd = d / heads;
    let qkv = linear(tape, bound, x, &format!("{prefix}.qkv"))?;
    let qkv = tape.reshape(qkv, &[b, n, 3, heads, hd])?;
    let qkv = tape.permute(qkv, &[2, 0, 3, 1, 4])?;
    let qkv = tape.reshape(qkv, &[3, b * heads, n, hd])?;
    let mut parts = Vec::with_capacity(3);
    for i in 0..3 {
        let t = tape.narrow(qkv, 0, i, 1)?;
        parts.push(tape.reshape(t, &[b * heads, n, hd])?);
    }
    let (q, k, v) = (parts[0], parts[1], parts[2]);
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, S::of(1.0 / (hd as f64).sqrt()))?;
    let attn = tape.softmax(scores)?;
    let out = tape.matmul(attn, v)?;
    let out = tape.reshape(out, &[b, heads, n, hd])?;
    let out = tape.permute(out, &[0, 2, 1, 3])?;
    let out = tape.reshape(out, &[b, n, d])?;
    linear(tape, bound, out, &format!("{prefix}.proj"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TargetTensor;

    fn tiny() -> FgMae<f64> {
        FgMae::new(ModelConfig::tiny(32, 8, 2, vec![8]), &SeedRng::new(1)).unwrap()
    }

    fn image(seed: u64, b: usize) -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn([b, 2, 32, 32], |_| rng.uniform())
    }

    #[test]
    fn sincos_table_shape_and_origin() {
        let t = sincos_pos_embed(2, 8);
        assert_eq!(t.len(), 4 * 8);
        // position (0, 0): sin terms 0, cos terms 1
        assert_eq!(&t[..8], &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn shapes_through_the_network() {
        let m = tiny();
        let mut rng = SeedRng::new(2);
        let img = image(3, 2);
        let plan = MaskPlan::random(2, 16, 0.75, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, |_| true);
        let enc = m.encode_image(&mut tape, &bound, &img, &plan).unwrap();
        assert_eq!(tape.dims(enc), &[2, 4, 32]);
        let dec = m.decode(&mut tape, &bound, enc, &plan).unwrap();
        assert_eq!(tape.dims(dec), &[2, 16, 32]);
        let heads = m.predict_heads(&mut tape, &bound, dec).unwrap();
        assert_eq!(tape.dims(heads[0]), &[2, 16, 8]);
    }

    #[test]
    fn batch_permutation_permutes_encoder_output() {
        let m = tiny();
        let img = image(4, 2);
        let swapped = Tensor::concat(&[&img.narrow(0, 1, 1).unwrap(), &img.narrow(0, 0, 1).unwrap()], 0).unwrap();
        let a = m.pooled_features(&img).unwrap();
        let b = m.pooled_features(&swapped).unwrap();
        assert_eq!(&a.data()[..32], &b.data()[32..]);
        assert_eq!(&a.data()[32..], &b.data()[..32]);
    }

    #[test]
    fn unused_mask_token_gets_zero_gradient() {
        let m = tiny();
        let img = image(5, 1);
        let plan = MaskPlan::identity(1, 16);
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, |_| true);
        let preds = m.forward(&mut tape, &bound, &img, &plan).unwrap();
        let loss = tape.mean_all(preds[0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(bound.var("dec.mask_token").unwrap());
        assert!(g.map_or(true, |g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn loss_is_delta_squared_for_constant_offset() {
        let m = tiny();
        let img = image(6, 2);
        let mut rng = SeedRng::new(7);
        let plan = MaskPlan::random(2, 16, 0.75, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, |_| false);
        let preds = m.forward(&mut tape, &bound, &img, &plan).unwrap();
        let delta = 0.3;
        let target = TargetSet::single(TargetTensor {
            values: tape.value(preds[0]).map(|v| v - delta),
            normalized: false,
        });
        let loss = masked_l2_loss(&mut tape, &preds, &target, &plan, &[1.0]).unwrap();
        assert!((tape.value(loss).item() - delta * delta).abs() < 1e-9);
    }
}
