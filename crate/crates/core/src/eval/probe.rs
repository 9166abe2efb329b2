//! Linear probing, fine-tuning and a per-patch segmentation probe.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{metric_f1, metric_map, metric_miou, metric_oa_aa, threshold};
use super::report::{MetricsReport, TaskKind};
use crate::data::{mask_path, mixup, read_tensor, resize_bilinear, zero_pad_channels, SceneManifest};
use crate::error::{Error, Result};
use crate::model::{layer_decay_scale, linear, uses_weight_decay, Bound, FgMae, MaskPlan};
use crate::numerics::{clip_global_norm, softmax_rows, AdamW, AdamWConfig, ParamUpdate, SeedRng, Sgd, Tape, Tensor};
use crate::pretrain::load_checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub task: TaskKind,
    pub n_classes: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// SGD lr for probes, AdamW lr for fine-tuning.
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Fine-tuning only.
    #[serde(default = "default_layer_decay")]
    pub layer_decay: f64,
    /// Fine-tuning only; off when absent.
    #[serde(default)]
    pub mixup_alpha: Option<f64>,
    /// Fine-tuning only; 0 disables.
    #[serde(default)]
    pub label_smoothing: f64,
    /// Fine-tuning global-norm gradient clip; off when absent.
    #[serde(default)]
    pub clip_grad: Option<f64>,
    #[serde(default = "default_val")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Where input channels go when zero-padding to the model's channel
    /// count; leading channels by default.
    #[serde(default)]
    pub channel_positions: Option<Vec<usize>>,
}

fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_layer_decay() -> f64 {
    0.75
}
fn default_val() -> f64 {
    0.2
}

impl ProbeConfig {
    pub fn new(task: TaskKind, n_classes: usize) -> Self {
        Self {
            task,
            n_classes,
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: default_lr(),
            momentum: default_momentum(),
            weight_decay: 0.0,
            layer_decay: default_layer_decay(),
            mixup_alpha: None,
            label_smoothing: 0.0,
            clip_grad: None,
            val_fraction: default_val(),
            seed: 0,
            channel_positions: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("probe config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task == TaskKind::Segmentation {
            return Err(Error::Config("probe task must be multilabel or singlelabel".into()));
        }
        if self.n_classes < 2 && self.task == TaskKind::Singlelabel {
            return Err(Error::Config("single-label tasks need at least 2 classes".into()));
        }
        if self.n_classes == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("classes, batch size and epochs must be positive".into()));
        }
        if !(0.0 < self.val_fraction && self.val_fraction < 1.0) {
            return Err(Error::Config("validation fraction must be in (0, 1)".into()));
        }
        if !(self.lr > 0.0 && self.layer_decay > 0.0 && self.layer_decay <= 1.0) {
            return Err(Error::Config("need lr > 0 and layer decay in (0, 1]".into()));
        }
        if matches!(self.mixup_alpha, Some(a) if a <= 0.0) {
            return Err(Error::Config("mixup alpha must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config("label smoothing must be in [0, 1)".into()));
        }
        if matches!(self.clip_grad, Some(c) if c <= 0.0 || !c.is_finite()) {
            return Err(Error::Config("gradient clip must be positive".into()));
        }
        Ok(())
    }
}

/// Labeled images prepared for a model: resized, channel-padded.
#[derive(Debug, Clone)]
pub struct LabeledData {
    /// `[N, C, S, S]`.
    pub images: Tensor<f32>,
    pub labels: Vec<Vec<usize>>,
    pub locations: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Resizes to `size` and zero-pads channels up to `channels`.
fn prepare(img: &Tensor<f32>, size: usize, channels: usize, positions: Option<&[usize]>) -> Result<Tensor<f32>> {
    let (c, h, w) = match *img.dims() {
        [c, h, w] => (c, h, w),
        ref d => return Err(Error::Feature(format!("expected a [C, H, W] scene, got {d:?}"))),
    };
    let img = if (h, w) == (size, size) {
        img.clone()
    } else {
        resize_bilinear(img, size, size)?
    };
    if c == channels {
        Ok(img)
    } else if c < channels {
        zero_pad_channels(&img, channels, positions)
    } else {
        Err(Error::Feature(format!("{c}-channel input cannot feed a {channels}-channel model")))
    }
}

/// Splits locations (not scenes) into train and validation so seasons of
/// one place never straddle the split.
fn split(locations: &[String], frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut uniq: Vec<&String> = locations.iter().collect();
    uniq.sort();
    uniq.dedup();
    let order = SeedRng::new(seed).split("split").permutation(uniq.len());
    let n_val = ((uniq.len() as f64 * frac).round() as usize).clamp(1, uniq.len().saturating_sub(1).max(1));
    let val_locs: Vec<&String> = order[..n_val].iter().map(|&i| uniq[i]).collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, l) in locations.iter().enumerate() {
        if val_locs.contains(&l) {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

/// Loads every labeled scene of `manifest` for a model with the given input
/// geometry.
pub fn load_labeled(manifest: &SceneManifest, size: usize, channels: usize, cfg: &ProbeConfig) -> Result<LabeledData> {
    let mut views = Vec::new();
    let (mut labels, mut locations) = (Vec::new(), Vec::new());
    for e in &manifest.entries {
        let classes = e.classes()?;
        if classes.is_empty() {
            continue;
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= cfg.n_classes) {
            return Err(Error::Manifest(format!("label {c} out of range for {} classes", cfg.n_classes)));
        }
        let img: Tensor<f32> = read_tensor(&manifest.resolve(e))?;
        let v = prepare(&img, size, channels, cfg.channel_positions.as_deref())?;
        views.push(v.reshape([1, channels, size, size])?);
        labels.push(classes);
        locations.push(e.location_id.clone());
    }
    if views.len() < 2 {
        return Err(Error::Manifest("probing needs at least two labeled scenes".into()));
    }
    let refs: Vec<&Tensor<f32>> = views.iter().collect();
    let (train, val) = split(&locations, cfg.val_fraction, cfg.seed);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Manifest("probing needs at least two labeled locations".into()));
    }
    Ok(LabeledData {
        images: Tensor::concat(&refs, 0)?,
        labels,
        locations,
        train,
        val,
    })
}

/// Target rows: one-hot of the first class (single-label) or multi-hot.
pub fn label_targets(labels: &[Vec<usize>], task: TaskKind, k: usize) -> Tensor<f64> {
    let mut t = vec![0.0; labels.len() * k];
    for (i, l) in labels.iter().enumerate() {
        match task {
            TaskKind::Singlelabel => t[i * k + l[0]] = 1.0,
            TaskKind::Multilabel | TaskKind::Segmentation => l.iter().for_each(|&c| t[i * k + c] = 1.0),
        }
    }
    Tensor::new(vec![labels.len(), k], t).expect("consistent dims")
}

fn rows<S: crate::Scalar>(t: &Tensor<S>, idx: &[usize]) -> Tensor<S> {
    let w = t.len() / t.dims()[0];
    let mut dims = t.dims().to_vec();
    dims[0] = idx.len();
    let mut out = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        out.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
    }
    Tensor::new(dims, out).expect("consistent dims")
}

/// Pooled encoder features `[N, K_en]` in chunks.
pub fn pooled_features(model: &FgMae<f32>, images: &Tensor<f32>) -> Result<Tensor<f64>> {
    let n = images.dims()[0];
    let mut parts = Vec::new();
    for start in (0..n).step_by(16) {
        let idx: Vec<usize> = (start..(start + 16).min(n)).collect();
        parts.push(model.pooled_features(&rows(images, &idx))?.cast::<f64>());
    }
    let refs: Vec<&Tensor<f64>> = parts.iter().collect();
    Tensor::concat(&refs, 0)
}

/// Softmax or logistic classifier on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub task: TaskKind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `[K_in, n_classes]`.
    pub w: Tensor<f64>,
    pub b: Tensor<f64>,
}

impl LinearClassifier {
    fn standardize(&self, x: &Tensor<f64>) -> Tensor<f64> {
        let k = self.mean.len();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(k) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn logits(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let z = self.standardize(x).matmul(&self.w)?;
        let c = self.b.len();
        let mut z = z;
        for row in z.data_mut().chunks_mut(c) {
            row.iter_mut().zip(self.b.data()).for_each(|(v, b)| *v += b);
        }
        Ok(z)
    }

    /// Class probabilities: softmax rows or per-class sigmoids.
    pub fn scores(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let z = self.logits(x)?;
        Ok(match self.task {
            TaskKind::Multilabel => z.map(|v| 1.0 / (1.0 + (-v).exp())),
            _ => softmax_rows(&z),
        })
    }
}

/// Trains a linear classifier with momentum SGD on `x` (`[N, K]`) against
/// `targets` (`[N, n_classes]`).
pub fn train_linear(x: &Tensor<f64>, targets: &Tensor<f64>, cfg: &ProbeConfig, rng: &SeedRng) -> Result<LinearClassifier> {
    let (n, k) = (x.dims()[0], x.dims()[1]);
    let c = targets.dims()[1];
    let mut mean = vec![0.0; k];
    let mut var = vec![0.0; k];
    for row in x.data().chunks(k) {
        row.iter().enumerate().for_each(|(j, v)| mean[j] += v / n as f64);
    }
    for row in x.data().chunks(k) {
        row.iter().enumerate().for_each(|(j, v)| var[j] += (v - mean[j]).powi(2) / n as f64);
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt().max(1e-6)).collect();
    let mut clf = LinearClassifier {
        task: cfg.task,
        mean,
        std,
        w: Tensor::zeros([k, c]),
        b: Tensor::zeros([c]),
    };
    let xs = clf.standardize(x);
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);
    for epoch in 0..cfg.epochs {
        let order = rng.split_indexed("epoch", epoch as u64).permutation(n);
        for chunk in order.chunks(cfg.batch_size) {
            let mut tape = Tape::<f64>::new();
            let w = tape.param(clf.w.clone());
            let b = tape.param(clf.b.clone());
            let xb = tape.constant(rows(&xs, chunk));
            let z = tape.matmul(xb, w)?;
            let z = tape.add_broadcast(z, b)?;
            let yb = rows(targets, chunk);
            let loss = match cfg.task {
                TaskKind::Multilabel => tape.bce_with_logits(z, &yb)?,
                _ => tape.softmax_cross_entropy(z, &yb)?,
            };
            let grads = tape.backward(loss)?;
            let (gw, gb) = (grads.get(w).expect("w used").clone(), grads.get(b).expect("b used").clone());
            sgd.update("w", &mut clf.w, &gw, cfg.lr)?;
            sgd.update("b", &mut clf.b, &gb, cfg.lr)?;
        }
    }
    if !clf.w.is_finite() {
        return Err(Error::NonFinite("linear classifier weights".into()));
    }
    Ok(clf)
}

/// Metrics of predicted `scores` (`[N, K]` probabilities) against labels.
pub fn evaluate(task: TaskKind, scores: &Tensor<f64>, labels: &[Vec<usize>], k: usize) -> Result<MetricsReport> {
    let mut report = MetricsReport::new(task);
    match task {
        TaskKind::Singlelabel => {
            let pred: Vec<usize> = scores
                .data()
                .chunks(k)
                .map(|r| (0..k).fold(0, |best, j| if r[j] > r[best] { j } else { best }))
                .collect();
            let truth: Vec<usize> = labels.iter().map(|l| l[0]).collect();
            let acc = metric_oa_aa(&pred, &truth)?;
            report.set("oa", acc.oa);
            report.set("aa", acc.aa);
            for (c, r) in acc.per_class {
                report.set_class(c, "accuracy", r);
            }
        }
        TaskKind::Multilabel => {
            let truth = label_targets(labels, task, k);
            let truth: Vec<u8> = truth.data().iter().map(|&v| v as u8).collect();
            let map = metric_map(scores.data(), &truth, k)?;
            let f1 = metric_f1(&threshold(scores.data()), &truth, k)?;
            report.set("map", map.map);
            report.set("f1", f1.macro_f1);
            for c in 0..k {
                if let Some(ap) = map.per_class[c] {
                    report.set_class(c, "ap", ap);
                }
                report.set_class(c, "f1", f1.per_class[c]);
            }
        }
        TaskKind::Segmentation => {
            return Err(Error::Config("image-level evaluation of a segmentation task".into()));
        }
    }
    Ok(report)
}

/// Result of a probe: the report and the trained classifier.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub report: MetricsReport,
    pub classifier: LinearClassifier,
}

/// Frozen-encoder linear probe on mean-pooled tokens.
pub fn linear_probe(model: &FgMae<f32>, data: &LabeledData, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    cfg.validate()?;
    let feats = pooled_features(model, &data.images)?;
    let targets = label_targets(&data.labels, cfg.task, cfg.n_classes);
    let rng = SeedRng::new(cfg.seed).split("probe");
    let clf = train_linear(&rows(&feats, &data.train), &rows(&targets, &data.train), cfg, &rng)?;
    let scores = clf.scores(&rows(&feats, &data.val))?;
    let val_labels: Vec<Vec<usize>> = data.val.iter().map(|&i| data.labels[i].clone()).collect();
    let mut report = evaluate(cfg.task, &scores, &val_labels, cfg.n_classes)?;
    report.n_train = data.train.len();
    report.n_val = data.val.len();
    Ok(ProbeOutcome {
        report,
        classifier: clf,
    })
}

/// Loads a checkpoint's encoder and probes it on `manifest`.
pub fn linear_probe_train(checkpoint: &Path, manifest: &SceneManifest, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    let model = load_checkpoint(checkpoint)?.model;
    let data = load_labeled(manifest, model.config.image_size, model.config.in_channels, cfg)?;
    linear_probe(&model, &data, cfg)
}

/// Fine-tuning result: report and the updated model (with `cls.*` head).
#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub report: MetricsReport,
    pub model: FgMae<f32>,
}

fn classify(model: &FgMae<f32>, tape: &mut Tape<f32>, bound: &Bound, images: &Tensor<f32>) -> Result<crate::Var> {
    let plan = MaskPlan::identity(images.dims()[0], model.config.num_patches());
    let enc = model.encode_image(tape, bound, images, &plan)?;
    let pooled = tape.mean_axis(enc, 1)?;
    linear(tape, bound, pooled, "cls")
}

/// End-to-end fine-tuning of the encoder plus a linear head with AdamW,
/// layer-wise lr decay and optional mixup. Decoder parameters are dropped.
pub fn fine_tune(model: &FgMae<f32>, data: &LabeledData, cfg: &ProbeConfig) -> Result<FineTuneOutcome> {
    cfg.validate()?;
    let mut model = model.clone();
    let mut store = crate::model::ParamStore::new();
    for (n, t) in model.params.iter() {
        if n.starts_with("enc.") {
            store.insert(n.clone(), t.clone());
        }
    }
    let k_en = model.config.enc_dim;
    store.init_zeros("cls.w", &[k_en, cfg.n_classes]);
    store.init_zeros("cls.b", &[cfg.n_classes]);
    model.params = store;

    let depth = model.config.enc_depth;
    let eps = cfg.label_smoothing;
    let floor = match cfg.task {
        TaskKind::Multilabel => eps / 2.0,
        _ => eps / cfg.n_classes as f64,
    };
    let targets = label_targets(&data.labels, cfg.task, cfg.n_classes)
        .map(|t| t * (1.0 - eps) + floor)
        .cast::<f32>();
    let root = SeedRng::new(cfg.seed).split("finetune");
    let mut opt = AdamW::<f32>::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    for epoch in 0..cfg.epochs {
        let mut erng = root.split_indexed("epoch", epoch as u64);
        let order = erng.permutation(data.train.len());
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|&i| data.train[i]).collect();
            let (mut x, mut y) = (rows(&data.images, &idx), rows(&targets, &idx));
            if let Some(alpha) = cfg.mixup_alpha {
                let mut mrng = erng.split_indexed("mixup", bi as u64);
                let (mx, my, _) = mixup(&x, &y, alpha, &mut mrng)?;
                x = mx;
                y = my;
            }
            let mut tape = Tape::<f32>::new();
            let bound = model.bind(&mut tape, |_| true);
            let z = classify(&model, &mut tape, &bound, &x)?;
            let loss = match cfg.task {
                TaskKind::Multilabel => tape.bce_with_logits(z, &y)?,
                _ => tape.softmax_cross_entropy(z, &y)?,
            };
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("fine-tuning loss at epoch {epoch}")));
            }
            let mut grads = tape.backward(loss)?;
            let mut g: BTreeMap<String, Tensor<f32>> = bound
                .iter()
                .map(|(n, v)| {
                    let g = grads.take(*v).unwrap_or_else(|| Tensor::zeros(tape.dims(*v).to_vec()));
                    (n.clone(), g)
                })
                .collect();
            if let Some(max) = cfg.clip_grad {
                clip_global_norm(&mut g.values_mut().collect::<Vec<_>>(), max);
            }
            let updates = model.params.iter_mut().map(|(name, param)| {
                let decay = uses_weight_decay(param.dims());
                ParamUpdate {
                    name: name.as_str(),
                    param,
                    grad: &g[name],
                    lr_scale: layer_decay_scale(name, depth, cfg.layer_decay),
                    decay,
                }
            });
            opt.step(cfg.lr, updates)?;
        }
    }

    let val_x = rows(&data.images, &data.val);
    let mut logits = Vec::new();
    for chunk in data.val.chunks(16).enumerate().map(|(i, c)| (i * 16, c.len())) {
        let idx: Vec<usize> = (chunk.0..chunk.0 + chunk.1).collect();
        let mut tape = Tape::<f32>::new();
        let bound = model.bind(&mut tape, |_| false);
        let z = classify(&model, &mut tape, &bound, &rows(&val_x, &idx))?;
        logits.push(tape.value(z).cast::<f64>());
    }
    let refs: Vec<&Tensor<f64>> = logits.iter().collect();
    let z = Tensor::concat(&refs, 0)?;
    let scores = match cfg.task {
        TaskKind::Multilabel => z.map(|v| 1.0 / (1.0 + (-v).exp())),
        _ => softmax_rows(&z),
    };
    let val_labels: Vec<Vec<usize>> = data.val.iter().map(|&i| data.labels[i].clone()).collect();
    let mut report = evaluate(cfg.task, &scores, &val_labels, cfg.n_classes)?;
    report.n_train = data.train.len();
    report.n_val = data.val.len();
    Ok(FineTuneOutcome { report, model })
}

/// Per-patch class masks `[N, L]`: the majority class of each patch
/// (lowest id on ties), plus the pixel masks resized to the model input.
fn patch_labels(masks: &[Vec<usize>], size: usize, patch: usize, k: usize) -> Vec<Vec<usize>> {
    let side = size / patch;
    masks
        .iter()
        .map(|m| {
            (0..side * side)
                .map(|l| {
                    let (py, px) = (l / side, l % side);
                    let mut counts = vec![0usize; k];
                    for y in py * patch..(py + 1) * patch {
                        for x in px * patch..(px + 1) * patch {
                            counts[m[y * size + x]] += 1;
                        }
                    }
                    (0..k).fold(0, |best, c| if counts[c] > counts[best] { c } else { best })
                })
                .collect()
        })
        .collect()
}

/// Nearest-neighbour resize of a class mask.
fn resize_mask(mask: &[usize], h: usize, w: usize, size: usize) -> Vec<usize> {
    (0..size * size)
        .map(|i| {
            let (y, x) = (i / size, i % size);
            let sy = ((y as f64 + 0.5) * h as f64 / size as f64) as usize;
            let sx = ((x as f64 + 0.5) * w as f64 / size as f64) as usize;
            mask[sy.min(h - 1) * w + sx.min(w - 1)]
        })
        .collect()
}

/// Trivial segmentation probe: a linear classifier on individual encoder
/// tokens predicts each patch's majority class; predictions are painted
/// back onto pixels and scored with pixel OA/AA/mIoU on validation scenes.
/// Needs `<scene>.mask.fgmr` files next to the scenes.
pub fn patch_segmentation_probe(model: &FgMae<f32>, manifest: &SceneManifest, cfg: &ProbeConfig) -> Result<MetricsReport> {
    let mc = &model.config;
    let (size, patch, k) = (mc.image_size, mc.patch_size, cfg.n_classes);
    let mut single = cfg.clone();
    single.task = TaskKind::Singlelabel;
    let data = load_labeled(manifest, size, mc.in_channels, &single)?;
    let mut masks = Vec::new();
    for e in manifest.entries.iter().filter(|e| e.classes().map(|c| !c.is_empty()).unwrap_or(false)) {
        let m: Tensor<f32> = read_tensor(&manifest.root.join(mask_path(&e.path)))?;
        let (h, w) = match *m.dims() {
            [h, w] => (h, w),
            ref d => return Err(Error::Feature(format!("mask dims {d:?}"))),
        };
        let ids: Vec<usize> = m.data().iter().map(|&v| v as usize).collect();
        if let Some(&bad) = ids.iter().find(|&&c| c >= k) {
            return Err(Error::Manifest(format!("mask class {bad} out of range for {k} classes")));
        }
        masks.push(if (h, w) == (size, size) { ids } else { resize_mask(&ids, h, w, size) });
    }
    let plabels = patch_labels(&masks, size, patch, k);
    let l = mc.num_patches();

    let n = data.len();
    let mut toks = Vec::new();
    for start in (0..n).step_by(16) {
        let idx: Vec<usize> = (start..(start + 16).min(n)).collect();
        toks.push(model.encoder_tokens(&rows(&data.images, &idx))?.cast::<f64>());
    }
    let refs: Vec<&Tensor<f64>> = toks.iter().collect();
    let toks = Tensor::concat(&refs, 0)?;
    let toks = toks.reshape([n * l, mc.enc_dim])?;
    let expand = |imgs: &[usize]| imgs.iter().flat_map(|&i| (i * l)..(i + 1) * l).collect::<Vec<usize>>();
    let token_labels: Vec<Vec<usize>> = plabels.iter().flatten().map(|&c| vec![c]).collect();
    let targets = label_targets(&token_labels, TaskKind::Singlelabel, k);
    let (tr, va) = (expand(&data.train), expand(&data.val));
    let clf = train_linear(&rows(&toks, &tr), &rows(&targets, &tr), &single, &SeedRng::new(cfg.seed).split("seg"))?;
    let scores = clf.scores(&rows(&toks, &va))?;
    let patch_pred: Vec<usize> = scores
        .data()
        .chunks(k)
        .map(|r| (0..k).fold(0, |best, j| if r[j] > r[best] { j } else { best }))
        .collect();
    let side = size / patch;
    let (mut pred_px, mut true_px) = (Vec::new(), Vec::new());
    for (vi, &img) in data.val.iter().enumerate() {
        for y in 0..size {
            for x in 0..size {
                pred_px.push(patch_pred[vi * l + (y / patch) * side + x / patch]);
                true_px.push(masks[img][y * size + x]);
            }
        }
    }
    let seg = metric_miou(&pred_px, &true_px, k, None)?;
    let mut report = MetricsReport::new(TaskKind::Segmentation);
    report.set("oa", seg.oa);
    report.set("aa", seg.aa);
    report.set("miou", seg.miou);
    for (c, iou) in seg.iou.iter().enumerate() {
        if let Some(v) = iou {
            report.set_class(c, "iou", *v);
        }
    }
    report.n_train = data.train.len();
    report.n_val = data.val.len();
    Ok(report)
}
