use std::path::{Path, PathBuf};

use fgmae::data::{read_tensor, write_synthetic_dataset, write_tensor, Modality, SceneManifest, SyntheticDatasetConfig};
use fgmae::eval::{
    feature_ablation_study, fine_tune, linear_probe, load_labeled, metric_f1, metric_map, metric_miou, metric_oa_aa,
    patch_segmentation_probe, threshold, MetricsReport, ProbeConfig, TaskKind, RANDOM_INIT,
};
use fgmae::features::{compute_canny, compute_dense_sift, compute_hog, compute_ndi, BandMap, CannyParams, FeatureSpec, HogParams, SiftParams};
use fgmae::model::render::render_reconstruction;
use fgmae::model::MaskPlan;
use fgmae::pretrain::{config_digest, load_checkpoint, write_epoch_csv, write_loss_csv, PretrainConfig, Trainer, INDEX_FILE};
use fgmae::{Error, Result, SeedRng, Tape, Tensor};
use serde_json::Value;

use crate::io::{as_ids, env_seed, read_matrix, stamped, write_text, ConfigDoc};
use crate::{AblateArgs, Cli, Command, ExtractArgs, FeatureKind, MetricKind, MetricsArgs, PretrainArgs, ProbeArgs, RenderArgs, SynthArgs};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Pretrain(a) => pretrain(a, cli.deterministic),
        Command::Probe(a) => probe(a, false),
        Command::Finetune(a) => probe(a, true),
        Command::Ablate(a) => ablate(a, cli.deterministic),
        Command::Metrics(a) => metrics(a),
        Command::Render(a) => render(a),
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let modality: Modality = a.modality.parse()?;
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let mut cfg = SyntheticDatasetConfig::new(modality, a.n, seed);
    if let Some(l) = a.looks {
        cfg.looks = l;
    }
    if let Some(s) = a.size {
        cfg.size = s;
    }
    if let Some(s) = a.seasons {
        cfg.seasons = s;
    }
    if let Some(s) = a.structures {
        cfg.n_structures = s;
    }
    cfg.write_masks = a.masks;
    cfg.validate()?;
    let digest = config_digest(&cfg);
    let manifest = write_synthetic_dataset(&cfg, &a.out)?;
    let mut doc = serde_json::to_value(&cfg)?;
    doc["digest"] = Value::String(digest.clone());
    write_text(&a.out.join("synth.json"), &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    println!("config sha256:{digest}");
    println!("wrote {} scenes to {}", manifest.entries.len(), a.out.display());
    Ok(())
}

fn fmt_dims(d: &[usize]) -> String {
    let parts: Vec<String> = d.iter().map(usize::to_string).collect();
    format!("({})", parts.join(","))
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let img: Tensor<f64> = read_tensor(&a.input)?;
    let batched = match img.dims().len() {
        3 => false,
        4 => true,
        _ => return Err(Error::Feature(format!("expected [C, H, W] or [B, C, H, W], got {:?}", img.dims()))),
    };
    let img = if batched { img } else { img.reshape([&[1][..], img.dims()].concat())? };
    if a.band_map.is_some() && a.feature != FeatureKind::Ndi {
        eprintln!("note: --band-map only applies to ndi; ignored");
    }
    let out = match a.feature {
        FeatureKind::Hog => compute_hog(&img, &HogParams::default())?,
        FeatureKind::Canny => compute_canny(&img, &CannyParams::default())?,
        FeatureKind::Sift => compute_dense_sift(&img, &SiftParams::default())?,
        FeatureKind::Ndi => {
            let bands: BandMap = match &a.band_map {
                Some(s) => s.parse()?,
                None => BandMap::default(),
            };
            compute_ndi(&img, &bands)?
        }
    };
    let out = if batched { out } else { out.reshape(&out.dims()[1..])? };
    write_tensor(&a.out, &out)?;
    println!("dims {}", fmt_dims(out.dims()));
    Ok(())
}

fn manifest_from(flag: &Option<PathBuf>, doc: &mut ConfigDoc, key: &str) -> Result<SceneManifest> {
    let from_doc = doc.take_path(key)?;
    let path = match (flag, from_doc) {
        (Some(f), old) => {
            if let Some(o) = old.filter(|o| o != f) {
                eprintln!("note: --{key} overrides config {key} ({} -> {})", o.display(), f.display());
            }
            f.clone()
        }
        (None, Some(p)) => p,
        (None, None) => return Err(Error::Config(format!("no {key} given (flag --{key} or config key `{key}`)"))),
    };
    SceneManifest::read(&path)
}

fn pretrain(a: &PretrainArgs, deterministic: bool) -> Result<()> {
    let mut doc = ConfigDoc::load(&a.config)?;
    let manifest = manifest_from(&a.manifest, &mut doc, "manifest")?;
    doc.resolve_seed(a.seed)?;
    if let Some(e) = a.epochs {
        doc.override_field("epochs", "--epochs", e.into());
    }
    if let Some(b) = a.batch_size {
        doc.override_field("batch_size", "--batch-size", b.into());
    }
    if let Some(lr) = a.lr {
        doc.override_field("base_lr", "--lr", lr.into());
    }
    if deterministic {
        doc.override_field("deterministic", "--deterministic", true.into());
    }
    let cfg = PretrainConfig::from_json(&doc.into_value().to_string())?;

    let ckpt_dir = a.out.join("checkpoint");
    let mut trainer = if a.resume && ckpt_dir.join(INDEX_FILE).exists() {
        let (t, warnings) = Trainer::resume(cfg.clone(), manifest, &ckpt_dir)?;
        for w in warnings {
            eprintln!("warning: {}", w.replace('\n', " "));
        }
        eprintln!("note: resuming at step {}", t.step());
        t
    } else {
        Trainer::new(cfg.clone(), manifest)?
    };
    println!("config sha256:{}", trainer.config_digest());
    write_text(&a.out.join("config.json"), &format!("{}\n", serde_json::to_string_pretty(&cfg)?))?;

    let (total, spe) = (trainer.total_steps(), trainer.steps_per_epoch());
    while trainer.step() < total {
        trainer.train_step()?;
        let s = trainer.step();
        if cfg.checkpoint_interval > 0 && s % cfg.checkpoint_interval == 0 && s < total {
            trainer.save(&ckpt_dir)?;
        }
        if s % spe == 0 {
            let tail = &trainer.history()[trainer.history().len() - spe.min(trainer.history().len())..];
            let mean = tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64;
            eprintln!("epoch {}/{} mean loss {mean:.6e}", s / spe, cfg.epochs);
        }
    }
    trainer.save(&ckpt_dir)?;
    let digest = trainer.config_digest().to_string();
    write_loss_csv(&a.out.join("loss.csv"), trainer.history(), &digest)?;
    write_epoch_csv(&a.out.join("epoch_loss.csv"), trainer.history(), spe, &digest)?;
    match trainer.history().last() {
        Some(r) => println!("final step={} lr={:e} loss={:e}", r.step, r.lr, r.loss),
        None => println!("final step=0 (no steps run)"),
    }
    Ok(())
}

fn print_report(report: &MetricsReport) {
    for (k, v) in &report.metrics {
        println!("{k} {v:.6}");
    }
}

fn write_report(out: &Path, report: &MetricsReport, digest: &str, checkpoint_digest: &str) -> Result<()> {
    let head = format!("# checkpoint sha256:{checkpoint_digest}\n");
    write_text(&out.join("metrics.csv"), &stamped(digest, &(head.clone() + &report.to_csv())))?;
    write_text(&out.join("per_class.csv"), &stamped(digest, &(head + &report.per_class_csv())))
}

fn probe(a: &ProbeArgs, finetune: bool) -> Result<()> {
    let mut doc = ConfigDoc::load(&a.config)?;
    let ckpt_path = match (&a.checkpoint, doc.take_path("checkpoint")?) {
        (Some(f), _) => f.clone(),
        (None, Some(p)) => p,
        (None, None) => return Err(Error::Config("no checkpoint given (flag --checkpoint or config key `checkpoint`)".into())),
    };
    let manifest = manifest_from(&a.manifest, &mut doc, "manifest")?;
    doc.resolve_seed(a.seed)?;
    if let Some(e) = a.epochs {
        doc.override_field("epochs", "--epochs", e.into());
    }
    if let Some(lr) = a.lr {
        doc.override_field("lr", "--lr", lr.into());
    }
    let cfg: ProbeConfig = serde_json::from_value(doc.into_value()).map_err(|e| config_err(format!("probe config: {e}")))?;
    let segmentation = cfg.task == TaskKind::Segmentation;
    if segmentation {
        if finetune {
            return Err(Error::Config("fine-tuning supports multilabel and singlelabel tasks only".into()));
        }
        ProbeConfig {
            task: TaskKind::Singlelabel,
            ..cfg.clone()
        }
        .validate()?;
    } else {
        cfg.validate()?;
    }
    let digest = config_digest(&cfg);
    println!("config sha256:{digest}");

    let ck = load_checkpoint(&ckpt_path)?;
    let model = ck.model;
    let report = if segmentation {
        patch_segmentation_probe(&model, &manifest, &cfg)?
    } else {
        let data = load_labeled(&manifest, model.config.image_size, model.config.in_channels, &cfg)?;
        if finetune {
            fine_tune(&model, &data, &cfg)?.report
        } else {
            linear_probe(&model, &data, &cfg)?.report
        }
    };
    write_text(&a.out.join("config.json"), &format!("{}\n", serde_json::to_string_pretty(&cfg)?))?;
    write_report(&a.out, &report, &digest, &ck.config_digest)?;
    print_report(&report);
    Ok(())
}

const ABLATION_KEYS: [&str; 7] = ["pretrain", "probe", "features", "seeds", "pretrain_manifest", "probe_manifest", "random_baseline"];

fn ablate(a: &AblateArgs, deterministic: bool) -> Result<()> {
    let mut doc = ConfigDoc::load(&a.config)?;
    if let Some(k) = doc.map.keys().find(|k| !ABLATION_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown ablation config key `{k}`")));
    }
    let pretrain_manifest = manifest_from(&None, &mut doc, "pretrain_manifest")?;
    let probe_manifest = manifest_from(&None, &mut doc, "probe_manifest")?;
    if let Some(seeds) = &a.seeds {
        doc.override_field("seeds", "--seeds", serde_json::to_value(seeds)?);
    }
    let mut base_v = doc.map.get("pretrain").cloned().ok_or_else(|| config_err("missing `pretrain`"))?;
    if deterministic {
        base_v["deterministic"] = true.into();
    }
    let base = PretrainConfig::from_json(&base_v.to_string())?;
    let probe_cfg = ProbeConfig::from_json(&doc.map.get("probe").cloned().ok_or_else(|| config_err("missing `probe`"))?.to_string())?;
    let specs = doc
        .map
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| config_err("`features` must be an array"))?
        .iter()
        .map(|v| match v {
            Value::String(s) => FeatureSpec::from_name(s),
            other => serde_json::from_value(other.clone()).map_err(|e| config_err(format!("feature spec: {e}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = match doc.map.get("seeds") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| config_err(format!("seeds: {e}")))?,
        None => vec![base.seed],
    };
    let random_baseline = match doc.map.get("random_baseline") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(other) => return Err(config_err(format!("`random_baseline` must be a boolean, got {other}"))),
    };
    let digest = config_digest(&doc.map);
    println!("config sha256:{digest}");

    let table = feature_ablation_study(&base, &specs, &seeds, &pretrain_manifest, &probe_manifest, &probe_cfg, random_baseline)?;
    write_text(&a.out.join("ablation.csv"), &stamped(&digest, &table.to_csv()))?;
    let mut names: Vec<String> = specs.iter().map(|s| s.name().to_string()).collect();
    if random_baseline {
        names.push(RANDOM_INIT.to_string());
    }
    for n in names {
        if let Some(m) = table.mean(&n) {
            println!("{n} {} {m:.6}", probe_cfg.task.primary_metric());
        }
    }
    Ok(())
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let pred = read_matrix(&a.pred)?;
    let labels = read_matrix(&a.labels)?;
    match a.metric {
        MetricKind::Map | MetricKind::F1 => {
            let k = a.classes.unwrap_or(labels.cols);
            let flags: Vec<u8> = as_ids(&labels, "labels")?
                .into_iter()
                .map(|v| if v <= 1 { Ok(v as u8) } else { Err(config_err(format!("labels: {v} is not 0/1"))) })
                .collect::<Result<_>>()?;
            if a.metric == MetricKind::Map {
                let r = metric_map(&pred.data, &flags, k)?;
                println!("map {:.6}", r.map);
                for (c, ap) in r.per_class.iter().enumerate() {
                    if let Some(ap) = ap {
                        println!("ap[{c}] {ap:.6}");
                    }
                }
            } else {
                let r = metric_f1(&threshold(&pred.data), &flags, k)?;
                println!("f1 {:.6}", r.macro_f1);
                for (c, f) in r.per_class.iter().enumerate() {
                    println!("f1[{c}] {f:.6}");
                }
            }
        }
        MetricKind::Oa => {
            let r = metric_oa_aa(&as_ids(&pred, "pred")?, &as_ids(&labels, "labels")?)?;
            println!("oa {:.6}", r.oa);
            println!("aa {:.6}", r.aa);
            for (c, acc) in &r.per_class {
                println!("acc[{c}] {acc:.6}");
            }
        }
        MetricKind::Miou => {
            let (p, l) = (as_ids(&pred, "pred")?, as_ids(&labels, "labels")?);
            let k = match a.classes {
                Some(k) => k,
                None => p.iter().chain(&l).filter(|&&c| Some(c) != a.ignore_index).max().map_or(0, |m| m + 1),
            };
            let r = metric_miou(&p, &l, k, a.ignore_index)?;
            println!("miou {:.6}", r.miou);
            println!("oa {:.6}", r.oa);
            println!("aa {:.6}", r.aa);
            for (c, iou) in r.iou.iter().enumerate() {
                if let Some(iou) = iou {
                    println!("iou[{c}] {iou:.6}");
                }
            }
        }
    }
    Ok(())
}

fn render(a: &RenderArgs) -> Result<()> {
    let (preds, spec, patch, channels, size) = if let Some(dir) = &a.checkpoint {
        let ck = load_checkpoint(dir)?;
        let model = ck.model;
        let mc = model.config.clone();
        let scene_path = a.scene.as_ref().ok_or_else(|| config_err("--checkpoint needs --scene"))?;
        let scene: Tensor<f32> = read_tensor(scene_path)?;
        let img = match *scene.dims() {
            [c, h, w] => scene.reshape([1, c, h, w])?,
            [_, _, _, _] => scene,
            ref d => return Err(Error::Feature(format!("scene dims {d:?}"))),
        };
        let d = img.dims();
        if d[1] != mc.in_channels || d[2] != mc.image_size || d[3] != mc.image_size {
            return Err(Error::Feature(format!(
                "scene {:?} does not match model input [{}, {}, {}]",
                &d[1..],
                mc.in_channels,
                mc.image_size,
                mc.image_size
            )));
        }
        let seed = match a.seed {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        };
        let mut rng = SeedRng::new(seed);
        let plan = MaskPlan::random(d[0], mc.num_patches(), mc.mask_ratio, &mut rng)?;
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, |_| false);
        let vars = model.forward(&mut tape, &bound, &img, &plan)?;
        let preds: Vec<Tensor<f64>> = vars.into_iter().map(|v| tape.value(v).cast()).collect();
        (preds, ck.feature, mc.patch_size, mc.in_channels, mc.image_size)
    } else {
        let path = a.pred.as_ref().ok_or_else(|| config_err("need --pred or --checkpoint"))?;
        let name = a.feature.as_deref().ok_or_else(|| config_err("--pred needs --feature"))?;
        let spec = FeatureSpec::from_name(name)?;
        let t: Tensor<f64> = read_tensor(path)?;
        let t = match *t.dims() {
            [l, k] => t.reshape([1, l, k])?,
            [_, _, _] => t,
            ref d => return Err(Error::Feature(format!("prediction dims {d:?}, expected [L, K] or [B, L, K]"))),
        };
        let (l, k) = (t.dims()[1], t.dims()[2]);
        let side = (l as f64).sqrt().round() as usize;
        if side * side != l {
            return Err(Error::Feature(format!("{l} patches do not form a square grid")));
        }
        let channels = match a.channels {
            Some(c) => c,
            None => (1..=64)
                .find(|&c| spec.head_widths(c, a.patch).map(|w| w.contains(&k)).unwrap_or(false))
                .ok_or_else(|| Error::Feature(format!("width {k} does not match {} at patch {}", spec.name(), a.patch)))?,
        };
        let preds = match spec {
            // a single file holds one head; treat it as the NDI head
            FeatureSpec::HogPlusNdi { bands, .. } => return render_single(a, &[t], &FeatureSpec::Ndi { bands }, channels, side),
            _ => vec![t],
        };
        (preds, spec, a.patch, channels, side * a.patch)
    };
    let images = render_reconstruction(&preds, &spec, patch, channels, size)?;
    write_image(a, &images)
}

fn render_single(a: &RenderArgs, preds: &[Tensor<f64>], spec: &FeatureSpec, channels: usize, side: usize) -> Result<()> {
    let images = render_reconstruction(preds, spec, a.patch, channels, side * a.patch)?;
    write_image(a, &images)
}

fn write_image(a: &RenderArgs, images: &[fgmae::model::render::RgbImage]) -> Result<()> {
    let img = images
        .get(a.index)
        .ok_or_else(|| config_err(format!("--index {} out of range for {} images", a.index, images.len())))?;
    img.write_ppm(&a.out)?;
    println!("wrote {}x{} PPM to {}", img.width, img.height, a.out.display());
    Ok(())
}
