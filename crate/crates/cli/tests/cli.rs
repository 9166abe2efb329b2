use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use fgmae::data::{read_tensor, write_tensor};
use fgmae::features::FeatureSpec;
use fgmae::model::ModelConfig;
use fgmae::pretrain::PretrainConfig;
use fgmae::Tensor;
use serde_json::{json, Value};

fn fgmae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgmae"))
        .args(args)
        .env_remove("FGMAE_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "failed: {}", stderr(&o));
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
    }
    out
}

fn synth(dir: &Path, modality: &str, n: usize, extra: &[&str]) {
    let n = n.to_string();
    let mut args = vec!["synth", "--modality", modality, "--out", p(dir), "--n", &n, "--seed", "3", "--size", "32"];
    args.extend_from_slice(extra);
    ok(fgmae(&args));
}

fn pretrain_config(dir: &Path, manifest: &Path) -> std::path::PathBuf {
    let mut cfg = PretrainConfig::new(ModelConfig::tiny(32, 8, 2, Vec::new()), FeatureSpec::hog());
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.warmup_epochs = 1;
    cfg.base_lr = 1e-3;
    let mut v = serde_json::to_value(&cfg).unwrap();
    v["manifest"] = Value::String(p(manifest).into());
    v.as_object_mut().unwrap().remove("seed");
    let path = dir.join("pretrain.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn single_error_line(o: &Output, code: i32, tag: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{tag}]: ")), "{err}");
}

#[test]
fn synth_writes_seasons_and_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, "SAR", 4, &["--looks", "1"]);
    synth(&b, "SAR", 4, &["--looks", "1"]);
    let ta = tree(&a);
    assert_eq!(ta.keys().filter(|k| k.ends_with(".fgmr")).count(), 16);
    assert!(ta.contains_key("manifest.csv"));
    assert_eq!(ta, tree(&b));
    let img: Tensor<f32> = read_tensor(&a.join("loc0000_s0.fgmr")).unwrap();
    assert_eq!(img.dims(), &[2, 32, 32]);
    assert!(String::from_utf8_lossy(&ta["synth.json"]).contains("\"digest\""));
}

#[test]
fn synth_rejects_bad_flags() {
    let t = tempfile::tempdir().unwrap();
    single_error_line(&fgmae(&["synth", "--modality", "RGB", "--out", p(t.path()), "--n", "1"]), 2, "config");
    single_error_line(&fgmae(&["synth", "--modality", "SAR", "--out", p(t.path())]), 2, "config");
}

#[test]
fn extract_dims_and_feature_errors() {
    let t = tempfile::tempdir().unwrap();
    let sar = t.path().join("sar.fgmr");
    write_tensor(&sar, &Tensor::<f32>::new(vec![2, 224, 224], (0..2 * 224 * 224).map(|i| (i % 97) as f32).collect()).unwrap()).unwrap();
    let o = ok(fgmae(&["extract", "--feature", "hog", "--in", p(&sar), "--out", p(&t.path().join("h.fgmr"))]));
    assert_eq!(stdout(&o).trim(), "dims (2,28,28,9)");
    let h: Tensor<f64> = read_tensor(&t.path().join("h.fgmr")).unwrap();
    assert_eq!(h.dims(), &[2, 28, 28, 9]);

    let o = fgmae(&["extract", "--feature", "ndi", "--in", p(&sar), "--out", p(&t.path().join("n.fgmr"))]);
    single_error_line(&o, 4, "feature");

    let ms = t.path().join("ms.fgmr");
    write_tensor(&ms, &Tensor::<f32>::new(vec![13, 16, 16], (0..13 * 256).map(|i| (i % 13) as f32 + 1.0).collect()).unwrap()).unwrap();
    let o = ok(fgmae(&["extract", "--feature", "ndi", "--in", p(&ms), "--out", p(&t.path().join("n.fgmr"))]));
    assert_eq!(stdout(&o).trim(), "dims (3,16,16)");
    let o = ok(fgmae(&["extract", "--feature", "ndi", "--band-map", "0,1,2,3", "--in", p(&ms), "--out", p(&t.path().join("n2.fgmr"))]));
    assert_eq!(stdout(&o).trim(), "dims (3,16,16)");
}

#[test]
fn missing_input_is_io_error() {
    let t = tempfile::tempdir().unwrap();
    let o = fgmae(&["extract", "--feature", "hog", "--in", p(&t.path().join("nope.fgmr")), "--out", p(&t.path().join("x"))]);
    single_error_line(&o, 3, "io");
}

#[test]
fn pretrain_probe_render_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "SAR", 8, &["--seasons", "1", "--masks"]);
    let cfg = pretrain_config(t.path(), &data.join("manifest.csv"));

    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_fgmae"))
            .args(["--deterministic", "pretrain", "--config", p(&cfg), "--out", p(&t.path().join(out))])
            .env("FGMAE_SEED", "11")
            .output()
            .unwrap()
    };
    let (a, b) = (ok(run("a")), ok(run("b")));
    let last = |o: &Output| stdout(o).lines().last().unwrap().to_string();
    assert!(last(&a).starts_with("final step=3 "), "{}", stdout(&a));
    assert_eq!(last(&a), last(&b));
    assert!(stderr(&a).contains("FGMAE_SEED"));
    let digest = stdout(&a).lines().next().unwrap().trim_start_matches("config sha256:").to_string();
    assert_eq!(digest.len(), 64);
    let loss = std::fs::read_to_string(t.path().join("a/loss.csv")).unwrap();
    assert!(loss.starts_with(&format!("# config sha256:{digest}\nstep,lr,loss\n")));
    let index = std::fs::read_to_string(t.path().join("a/checkpoint/index.json")).unwrap();
    assert!(index.contains(&digest));
    assert_eq!(std::fs::read(t.path().join("a/loss.csv")).unwrap(), std::fs::read(t.path().join("b/loss.csv")).unwrap());

    // flag overrides are logged and change the run
    let o = ok(fgmae(&["pretrain", "--config", p(&cfg), "--out", p(&t.path().join("c")), "--epochs", "1", "--seed", "2"]));
    assert!(stderr(&o).contains("--epochs overrides config epochs (2 -> 1)"), "{}", stderr(&o));
    assert!(last(&o).starts_with("final step=1 "));

    // linear probe and segmentation probe
    let probe = t.path().join("probe.json");
    std::fs::write(
        &probe,
        json!({"task": "singlelabel", "n_classes": 6, "epochs": 5, "val_fraction": 0.25,
               "checkpoint": p(&t.path().join("a/checkpoint")), "manifest": p(&data.join("manifest.csv"))})
        .to_string(),
    )
    .unwrap();
    let o = ok(fgmae(&["probe", "--config", p(&probe), "--out", p(&t.path().join("pr"))]));
    assert!(stdout(&o).lines().any(|l| l.starts_with("oa ")), "{}", stdout(&o));
    let m = std::fs::read_to_string(t.path().join("pr/metrics.csv")).unwrap();
    assert!(m.starts_with("# config sha256:"));
    assert!(m.contains(&format!("# checkpoint sha256:{digest}")));

    let o = ok(fgmae(&["finetune", "--config", p(&probe), "--out", p(&t.path().join("ft")), "--epochs", "1"]));
    assert!(stdout(&o).contains("oa "));

    let seg = t.path().join("seg.json");
    std::fs::write(
        &seg,
        json!({"task": "segmentation", "n_classes": 6, "epochs": 5, "val_fraction": 0.25}).to_string(),
    )
    .unwrap();
    let o = ok(fgmae(&[
        "probe",
        "--config",
        p(&seg),
        "--checkpoint",
        p(&t.path().join("a/checkpoint")),
        "--manifest",
        p(&data.join("manifest.csv")),
        "--out",
        p(&t.path().join("seg")),
    ]));
    assert!(stdout(&o).contains("miou "));

    // reconstruction rendering straight from the checkpoint
    let ppm = t.path().join("rec.ppm");
    ok(fgmae(&[
        "render",
        "--checkpoint",
        p(&t.path().join("a/checkpoint")),
        "--scene",
        p(&data.join("loc0000_s0.fgmr")),
        "--out",
        p(&ppm),
    ]));
    assert!(std::fs::read(&ppm).unwrap().starts_with(b"P6\n32 32\n255\n"));
}

#[test]
fn pretrain_config_errors() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, "SAR", 2, &["--seasons", "1"]);
    let cfg = pretrain_config(t.path(), &data.join("manifest.csv"));
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["learning_rate"] = json!(0.1);
    let bad = t.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    single_error_line(&fgmae(&["pretrain", "--config", p(&bad), "--out", p(&t.path().join("o"))]), 2, "config");
    single_error_line(&fgmae(&["pretrain", "--config", p(&t.path().join("none.json")), "--out", p(t.path())]), 3, "io");

    // a huge learning rate overflows within a few steps
    let o = fgmae(&["pretrain", "--config", p(&cfg), "--out", p(&t.path().join("nan")), "--lr", "1e30", "--epochs", "20"]);
    single_error_line(&o, 5, "non_finite");
}

#[test]
fn render_ndi_prediction_is_224_square() {
    let t = tempfile::tempdir().unwrap();
    let pred = t.path().join("ndi.fgmr");
    let n = 196 * 768;
    write_tensor(&pred, &Tensor::<f32>::new(vec![196, 768], (0..n).map(|i| ((i % 200) as f32 - 100.0) / 100.0).collect()).unwrap()).unwrap();
    let out = t.path().join("ndi.ppm");
    let o = ok(fgmae(&["render", "--pred", p(&pred), "--feature", "ndi", "--out", p(&out)]));
    assert!(stdout(&o).contains("224x224"));
    let bytes = std::fs::read(&out).unwrap();
    let header = b"P6\n224 224\n255\n";
    assert!(bytes.starts_with(header));
    assert_eq!(bytes.len(), header.len() + 224 * 224 * 3);

    let o = fgmae(&["render", "--pred", p(&pred), "--feature", "hog", "--out", p(&out)]);
    single_error_line(&o, 4, "feature");
}

#[test]
fn metrics_hand_counts() {
    let t = tempfile::tempdir().unwrap();
    let (pred, label) = (t.path().join("pred.txt"), t.path().join("label.txt"));
    std::fs::write(&pred, "0 0\n1 1\n").unwrap();
    std::fs::write(&label, "0 1\n1 1\n").unwrap();
    let o = ok(fgmae(&["metrics", "--metric", "miou", "--pred", p(&pred), "--labels", p(&label)]));
    let miou: f64 = stdout(&o).lines().next().unwrap().trim_start_matches("miou ").parse().unwrap();
    assert!((miou - 7.0 / 12.0).abs() < 1e-6);

    // the same masks as FGMR tensors
    let (pf, lf) = (t.path().join("pred.fgmr"), t.path().join("label.fgmr"));
    write_tensor(&pf, &Tensor::<f32>::new(vec![2, 2], vec![0., 0., 1., 1.]).unwrap()).unwrap();
    write_tensor(&lf, &Tensor::<f32>::new(vec![2, 2], vec![0., 1., 1., 1.]).unwrap()).unwrap();
    let o2 = ok(fgmae(&["metrics", "--metric", "miou", "--pred", p(&pf), "--labels", p(&lf)]));
    assert_eq!(stdout(&o), stdout(&o2));

    std::fs::write(&pred, "0.9,0.1\n0.8,0.7\n0.2,0.6\n").unwrap();
    std::fs::write(&label, "1,0\n0,1\n1,1\n").unwrap();
    let o = ok(fgmae(&["metrics", "--metric", "map", "--pred", p(&pred), "--labels", p(&label)]));
    assert!(stdout(&o).starts_with("map "));
    let o = ok(fgmae(&["metrics", "--metric", "f1", "--pred", p(&pred), "--labels", p(&label)]));
    assert!(stdout(&o).starts_with("f1 "));

    std::fs::write(&pred, "0\n1\n2\n2\n").unwrap();
    std::fs::write(&label, "0\n1\n1\n2\n").unwrap();
    let o = ok(fgmae(&["metrics", "--metric", "oa", "--pred", p(&pred), "--labels", p(&label)]));
    assert!(stdout(&o).starts_with("oa 0.750000\naa 0.833333\n"), "{}", stdout(&o));

    std::fs::write(&label, "0\n1\n").unwrap();
    assert_eq!(fgmae(&["metrics", "--metric", "oa", "--pred", p(&pred), "--labels", p(&label)]).status.code(), Some(1));
}

#[test]
fn ablation_from_config() {
    let t = tempfile::tempdir().unwrap();
    let (pre, lab) = (t.path().join("pre"), t.path().join("lab"));
    synth(&pre, "SAR", 4, &["--seasons", "1"]);
    synth(&lab, "SAR", 8, &["--seasons", "1"]);
    let mut cfg = PretrainConfig::new(ModelConfig::tiny(32, 8, 2, Vec::new()), FeatureSpec::hog());
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.warmup_epochs = 0;
    let doc = json!({
        "pretrain": serde_json::to_value(&cfg).unwrap(),
        "probe": {"task": "singlelabel", "n_classes": 6, "epochs": 3, "val_fraction": 0.25},
        "features": ["hog", "raw"],
        "seeds": [0],
        "pretrain_manifest": p(&pre.join("manifest.csv")),
        "probe_manifest": p(&lab.join("manifest.csv")),
        "random_baseline": true
    });
    let path = t.path().join("ablate.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = ok(fgmae(&["ablate", "--config", p(&path), "--out", p(&t.path().join("out")), "--seeds", "0,1"]));
    assert!(stderr(&o).contains("--seeds overrides"));
    let text = stdout(&o);
    for name in ["hog oa ", "raw oa ", "random_init oa "] {
        assert!(text.contains(name), "{text}");
    }
    let csv = std::fs::read_to_string(t.path().join("out/ablation.csv")).unwrap();
    assert!(csv.starts_with("# config sha256:"));
    assert_eq!(csv.lines().filter(|l| l.contains(",mean,")).count(), 3);
    assert_eq!(csv.lines().count(), 2 + 3 * 2 + 3);

    let mut bad = doc.clone();
    bad["extra"] = json!(1);
    std::fs::write(&path, bad.to_string()).unwrap();
    single_error_line(&fgmae(&["ablate", "--config", p(&path), "--out", p(t.path())]), 2, "config");
}
