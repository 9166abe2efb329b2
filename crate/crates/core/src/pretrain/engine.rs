use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::{LossRecord, PretrainConfig};
use crate::data::{augment, read_tensor, select_season, SceneManifest};
use crate::error::{Error, Result};
use crate::features::{compute_targets, TargetSet};
use crate::model::{uses_weight_decay, FgMae, InputNorm, MaskPlan};
use crate::numerics::optim::{clip_global_norm, global_norm};
use crate::numerics::{AdamW, LrSchedule, ParamUpdate, SeedRng, Tape, Tensor};

/// One prepared training batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub locations: Vec<String>,
    /// `[B, C, H, W]` after augmentation.
    pub images: Tensor<f32>,
    pub targets: TargetSet,
    pub plan: MaskPlan,
}

/// Pretraining state: model, optimizer, schedule and the cached scenes.
pub struct Trainer {
    pub cfg: PretrainConfig,
    pub model: FgMae<f32>,
    opt: AdamW<f32>,
    schedule: LrSchedule,
    rng: SeedRng,
    step: usize,
    history: Vec<LossRecord>,
    manifest: SceneManifest,
    locations: Vec<String>,
    cache: BTreeMap<PathBuf, Tensor<f32>>,
    digest: String,
}

/// Optimizer steps per epoch for `n` locations.
pub fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

impl Trainer {
    pub fn new(mut cfg: PretrainConfig, manifest: SceneManifest) -> Result<Self> {
        cfg.validate()?;
        let digest = cfg.digest();
        if manifest.is_empty() {
            return Err(Error::Manifest("pretraining needs a non-empty manifest".into()));
        }
        let locations: Vec<String> = manifest.locations().keys().map(|s| s.to_string()).collect();
        let mut cache = BTreeMap::new();
        for e in &manifest.entries {
            let path = manifest.resolve(e);
            let img: Tensor<f32> = read_tensor(&path)?;
            match *img.dims() {
                [c, _, _] if c == cfg.model.in_channels => {}
                ref d => {
                    return Err(Error::Feature(format!(
                        "{}: scene dims {d:?}, model expects {} channels",
                        path.display(),
                        cfg.model.in_channels
                    )))
                }
            }
            cache.insert(path, img);
        }
        if cfg.normalize_inputs && cfg.model.input_norm.is_none() {
            cfg.model.input_norm = Some(channel_stats(cache.values(), cfg.model.in_channels));
        }
        let rng = SeedRng::new(cfg.seed);
        let model = FgMae::new(cfg.model.clone(), &rng)?;
        let spe = steps_per_epoch(locations.len(), cfg.batch_size);
        let schedule = LrSchedule {
            base_lr: cfg.base_lr,
            warmup_steps: cfg.warmup_epochs * spe,
            total_steps: cfg.epochs * spe,
            min_lr: cfg.min_lr,
        };
        Ok(Self {
            opt: AdamW::new(cfg.optimizer),
            cfg,
            model,
            schedule,
            rng,
            step: 0,
            history: Vec::new(),
            manifest,
            locations,
            cache,
            digest,
        })
    }

    /// Restores a trainer from a checkpoint. Returns warnings for
    /// non-fatal inconsistencies (a differing config digest).
    pub fn resume(cfg: PretrainConfig, manifest: SceneManifest, dir: &Path) -> Result<(Self, Vec<String>)> {
        let ck = load_checkpoint(dir)?;
        let mut t = Self::new(cfg, manifest)?;
        let mut warnings = Vec::new();
        if ck.config_digest != t.digest {
            warnings.push(format!(
                "checkpoint config digest {} differs from current config {}",
                ck.config_digest, t.digest
            ));
        }
        for (name, p) in ck.model.params.iter() {
            t.model.params.assign(name, p.clone())?;
        }
        if let Some(missing) = t.model.params.names().find(|n| !ck.model.params.contains(n)) {
            return Err(Error::Checkpoint(format!("checkpoint lacks parameter {missing}")));
        }
        t.opt.restore(ck.optimizer_step, ck.moments);
        t.rng = ck.rng;
        t.step = ck.step;
        t.history = ck.loss_history;
        Ok((t, warnings))
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.schedule.total_steps
    }

    pub fn steps_per_epoch(&self) -> usize {
        steps_per_epoch(self.locations.len(), self.cfg.batch_size)
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn config_digest(&self) -> &str {
        &self.digest
    }

    /// Locations visited at `step`, in batch order.
    pub fn batch_locations(&self, step: usize) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let (epoch, pos) = (step / spe, step % spe);
        let order = self.rng.split_indexed("epoch", epoch as u64).permutation(self.locations.len());
        let start = pos * self.cfg.batch_size;
        let end = (start + self.cfg.batch_size).min(order.len());
        order[start..end].to_vec()
    }

    /// Season choice, augmentation, target extraction on the augmented view
    /// and mask sampling for `step`. Pure function of the seed and step.
    pub fn batch_at(&self, step: usize) -> Result<Batch> {
        let stream = self.rng.split_indexed("step", step as u64);
        let (mut season_rng, mut aug_rng, mut mask_rng) =
            (stream.split("season"), stream.split("augment"), stream.split("mask"));
        let mut views = Vec::new();
        let mut locations = Vec::new();
        for li in self.batch_locations(step) {
            let loc = &self.locations[li];
            let entry = select_season(&self.manifest, loc, &mut season_rng)?;
            let img = &self.cache[&self.manifest.resolve(entry)];
            let view = augment(img, &self.cfg.augmentation, &mut aug_rng)?;
            let d = view.dims().to_vec();
            views.push(view.reshape([1, d[0], d[1], d[2]])?);
            locations.push(loc.clone());
        }
        let refs: Vec<&Tensor<f32>> = views.iter().collect();
        let images = Tensor::concat(&refs, 0)?;
        let targets = compute_targets(&images, &self.cfg.feature, self.cfg.model.patch_size)?;
        let plan = MaskPlan::random(
            locations.len(),
            self.cfg.model.num_patches(),
            self.cfg.model.mask_ratio,
            &mut mask_rng,
        )?;
        Ok(Batch {
            locations,
            images,
            targets,
            plan,
        })
    }

    /// Runs one optimizer step on `batch` at the current step's lr.
    pub fn train_on(&mut self, batch: &Batch) -> Result<LossRecord> {
        let lr = self.schedule.lr_at(self.step)?;
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, |_| true);
        let loss_var = self.model.loss(&mut tape, &bound, &batch.images, &batch.targets, &batch.plan)?;
        let loss = tape.value(loss_var).item() as f64;
        let mut grads = tape.backward(loss_var)?;
        let mut named: Vec<(String, Tensor<f32>)> = Vec::with_capacity(self.model.params.len());
        for (name, var) in bound.iter() {
            let g = grads
                .take(*var)
                .unwrap_or_else(|| Tensor::zeros(tape.dims(*var).to_vec()));
            named.push((name.clone(), g));
        }
        let grad_norm = match self.cfg.clip_grad {
            Some(max) => clip_global_norm(&mut named.iter_mut().map(|(_, g)| g).collect::<Vec<_>>(), max),
            None => global_norm(named.iter().map(|(_, g)| g)),
        };
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                lr,
                grad_norm,
            });
        }
        let grads: BTreeMap<String, Tensor<f32>> = named.into_iter().collect();
        let updates = self.model.params.iter_mut().map(|(name, param)| {
            let decay = uses_weight_decay(param.dims());
            ParamUpdate {
                name: name.as_str(),
                param,
                grad: &grads[name],
                lr_scale: 1.0,
                decay,
            }
        });
        self.opt.step(lr, updates)?;
        let rec = LossRecord {
            step: self.step,
            lr,
            loss,
        };
        self.history.push(rec);
        self.step += 1;
        Ok(rec)
    }

    /// One full step: build the batch for the current step and train on it.
    pub fn train_step(&mut self) -> Result<LossRecord> {
        if self.step >= self.total_steps() {
            return Err(Error::InvalidArgument(format!("run already finished at step {}", self.step)));
        }
        let batch = self.batch_at(self.step)?;
        self.train_on(&batch)
    }

    /// Trains until `target` steps have been taken (capped at the total).
    pub fn run_to(&mut self, target: usize) -> Result<()> {
        while self.step < target.min(self.total_steps()) {
            self.train_step()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            optimizer_step: self.opt.step_count(),
            config_digest: self.digest.clone(),
            model: self.model.clone(),
            feature: self.cfg.feature,
            moments: self.opt.moments().clone(),
            rng: self.rng.clone(),
            loss_history: self.history.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(&self.checkpoint(), dir)
    }
}

/// Per-channel mean and population standard deviation over `[C, H, W]`
/// scenes, accumulated in f64 in iteration order.
pub fn channel_stats<'a>(scenes: impl IntoIterator<Item = &'a Tensor<f32>>, channels: usize) -> InputNorm {
    let (mut sum, mut sq, mut n) = (vec![0.0f64; channels], vec![0.0f64; channels], 0usize);
    for img in scenes {
        let hw = img.len() / channels;
        for (c, plane) in img.data().chunks(hw).enumerate() {
            for &v in plane {
                sum[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
        n += hw;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(1e-6))
        .collect();
    InputNorm { mean, std }
}

/// Result of a complete pretraining run.
#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    pub losses: Vec<LossRecord>,
}

/// Runs pretraining from scratch to completion. With `out`, writes
/// `out/checkpoint` (also every `checkpoint_interval` steps), `out/loss.csv`
/// and `out/epoch_loss.csv`.
pub fn pretrain_run(cfg: &PretrainConfig, manifest: &SceneManifest, out: Option<&Path>) -> Result<PretrainOutput> {
    let mut t = Trainer::new(cfg.clone(), manifest.clone())?;
    let total = t.total_steps();
    while t.step() < total {
        t.train_step()?;
        if let Some(dir) = out {
            if cfg.checkpoint_interval > 0 && t.step() % cfg.checkpoint_interval == 0 && t.step() < total {
                t.save(&dir.join("checkpoint"))?;
            }
        }
    }
    if let Some(dir) = out {
        t.save(&dir.join("checkpoint"))?;
        write_loss_csv(&dir.join("loss.csv"), t.history(), t.config_digest())?;
        write_epoch_csv(&dir.join("epoch_loss.csv"), t.history(), t.steps_per_epoch(), t.config_digest())?;
    }
    Ok(PretrainOutput {
        checkpoint: t.checkpoint(),
        losses: t.history().to_vec(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    crate::data::write_atomic(path, text.as_bytes())
}

/// `step,lr,loss` with a leading `# config sha256:` comment.
pub fn loss_csv(history: &[LossRecord], digest: &str) -> String {
    let mut buf = Vec::new();
    writeln!(buf, "# config sha256:{digest}").unwrap();
    writeln!(buf, "step,lr,loss").unwrap();
    for r in history {
        writeln!(buf, "{},{:e},{:e}", r.step, r.lr, r.loss).unwrap();
    }
    String::from_utf8(buf).unwrap()
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord], digest: &str) -> Result<()> {
    write_text(path, &loss_csv(history, digest))
}

/// Mean loss per epoch.
pub fn epoch_means(history: &[LossRecord], steps_per_epoch: usize) -> Vec<(usize, f64)> {
    history
        .chunks(steps_per_epoch.max(1))
        .enumerate()
        .map(|(e, c)| (e, c.iter().map(|r| r.loss).sum::<f64>() / c.len() as f64))
        .collect()
}

pub fn write_epoch_csv(path: &Path, history: &[LossRecord], steps_per_epoch: usize, digest: &str) -> Result<()> {
    let mut s = format!("# config sha256:{digest}\nepoch,mean_loss\n");
    for (e, m) in epoch_means(history, steps_per_epoch) {
        s.push_str(&format!("{e},{m:e}\n"));
    }
    write_text(path, &s)
}
