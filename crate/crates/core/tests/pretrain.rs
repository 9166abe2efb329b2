use fgmae::data::{write_synthetic_dataset, Modality, SceneManifest, SyntheticDatasetConfig};
use fgmae::features::{compute_targets, FeatureSpec};
use fgmae::model::ModelConfig;
use fgmae::pretrain::{load_checkpoint, pretrain_run, read_index, PretrainConfig, Trainer};
use fgmae::Error;

fn dataset(dir: &std::path::Path, n: usize) -> SceneManifest {
    let mut d = SyntheticDatasetConfig::new(Modality::Sar, n, 11);
    d.size = 40;
    write_synthetic_dataset(&d, dir).unwrap()
}

fn config(epochs: usize, batch: usize) -> PretrainConfig {
    let mut cfg = PretrainConfig::new(ModelConfig::tiny(32, 8, 2, vec![]), FeatureSpec::hog());
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.warmup_epochs = 1;
    cfg.base_lr = 1e-3;
    cfg.seed = 3;
    cfg
}

#[test]
fn step_count_is_epochs_times_batches() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 8);
    let out = pretrain_run(&config(3, 4), &m, None).unwrap();
    assert_eq!(out.losses.len(), 6);
    let m5 = SceneManifest::new(m.root.clone(), m.entries[..20].to_vec()).unwrap();
    assert_eq!(Trainer::new(config(3, 4), m5).unwrap().total_steps(), 6);
}

#[test]
fn lr_trace_follows_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4);
    let mut t = Trainer::new(config(4, 2), m).unwrap();
    t.run_to(usize::MAX).unwrap();
    assert_eq!(t.history().len(), 8);
    for r in t.history() {
        assert_eq!(r.lr, t.schedule().lr_at(r.step).unwrap());
    }
}

#[test]
fn targets_come_from_the_augmented_view() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4);
    let t = Trainer::new(config(2, 2), m).unwrap();
    for step in 0..3 {
        let b = t.batch_at(step).unwrap();
        assert_eq!(b.images.dims(), &[2, 2, 32, 32]);
        assert_eq!(b.targets, compute_targets(&b.images, &t.cfg.feature, 8).unwrap());
    }
}

#[test]
fn zero_head_loss_is_mean_squared_masked_target() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4);
    let mut t = Trainer::new(config(1, 4), m).unwrap();
    t.model.zero_heads();
    let b = t.batch_at(0).unwrap();
    let k = b.targets.heads[0].width();
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (bi, masked) in b.plan.ids_mask.iter().enumerate() {
        for &l in masked {
            let row = &b.targets.heads[0].values.data()[(bi * 16 + l) * k..][..k];
            sum += row.iter().map(|v| v * v).sum::<f64>();
            n += k;
        }
    }
    let rec = t.train_on(&b).unwrap();
    assert!((rec.loss - sum / n as f64).abs() < 1e-5 * (sum / n as f64));
}

#[test]
fn resume_is_bitwise_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4);
    let mut full = Trainer::new(config(3, 2), m.clone()).unwrap();
    full.run_to(usize::MAX).unwrap();

    let mut a = Trainer::new(config(3, 2), m.clone()).unwrap();
    a.run_to(3).unwrap();
    let ck = dir.path().join("ck");
    a.save(&ck).unwrap();
    let (mut b, warnings) = Trainer::resume(config(3, 2), m, &ck).unwrap();
    assert!(warnings.is_empty());
    b.run_to(usize::MAX).unwrap();
    assert_eq!(b.model.params, full.model.params);
    assert_eq!(b.history(), full.history());
    assert_eq!(b.checkpoint(), full.checkpoint());
}

#[test]
fn checkpoint_round_trip_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 2);
    let mut t = Trainer::new(config(2, 2), m).unwrap();
    t.run_to(1).unwrap();
    let ck = dir.path().join("ck");
    t.save(&ck).unwrap();
    assert_eq!(load_checkpoint(&ck).unwrap(), t.checkpoint());
    let index = read_index(&ck).unwrap();
    let mut listed: Vec<&String> = index.params.iter().map(|p| &p.name).collect();
    listed.sort();
    let names: Vec<&String> = t.model.params.names().collect();
    assert_eq!(listed, names);
    // overwriting an existing checkpoint works
    t.run_to(2).unwrap();
    t.save(&ck).unwrap();
    assert_eq!(load_checkpoint(&ck).unwrap().step, 2);
}

#[test]
fn mismatched_model_names_the_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 2);
    let t = Trainer::new(config(1, 2), m.clone()).unwrap();
    let ck = dir.path().join("ck");
    t.save(&ck).unwrap();
    let mut other = config(1, 2);
    other.model.enc_dim = 48;
    other.model.enc_heads = 2;
    match Trainer::resume(other, m, &ck) {
        Err(Error::ParamShape { name, .. }) => assert!(name.starts_with("enc.") || name.starts_with("dec.")),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("mismatch accepted"),
    }
}

#[test]
fn digest_mismatch_is_only_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 2);
    let t = Trainer::new(config(2, 2), m.clone()).unwrap();
    let ck = dir.path().join("ck");
    t.save(&ck).unwrap();
    let mut other = config(2, 2);
    other.base_lr = 2e-3;
    let (_, warnings) = Trainer::resume(other, m, &ck).unwrap();
    assert_eq!(warnings.len(), 1);
}

#[test]
fn missing_tensor_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 2);
    let t = Trainer::new(config(1, 2), m).unwrap();
    let ck = dir.path().join("ck");
    t.save(&ck).unwrap();
    std::fs::remove_file(ck.join("params/enc.norm.g.fgmr")).unwrap();
    assert!(matches!(load_checkpoint(&ck), Err(Error::Io { .. })));
}

#[test]
fn run_writes_loss_logs() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4);
    let out = dir.path().join("run");
    let cfg = config(2, 2);
    pretrain_run(&cfg, &m, Some(&out)).unwrap();
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], format!("# config sha256:{}", cfg.digest()));
    assert_eq!(lines[1], "step,lr,loss");
    assert_eq!(lines.len(), 2 + 4);
    let epochs = std::fs::read_to_string(out.join("epoch_loss.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 2 + 2);
    assert!(out.join("checkpoint/index.json").exists());
}
