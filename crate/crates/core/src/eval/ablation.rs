//! Pretrain-then-probe comparison across target features and seeds.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::probe::{linear_probe, load_labeled, ProbeConfig};
use crate::data::SceneManifest;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::pretrain::{pretrain_run, PretrainConfig, Trainer};

/// Name used for the randomly initialized baseline.
pub const RANDOM_INIT: &str = "random_init";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub spec: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// `(spec, metric, mean over seeds)`, in spec order.
    pub summary: Vec<(String, String, f64)>,
}

impl AblationTable {
    pub fn value(&self, spec: &str, seed: u64) -> Option<f64> {
        self.rows.iter().find(|r| r.spec == spec && r.seed == seed).map(|r| r.value)
    }

    pub fn mean(&self, spec: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.0 == spec).map(|s| s.2)
    }

    /// `spec,seed,metric,value`; summary rows carry `mean` as the seed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("spec,seed,metric,value\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.spec, r.seed, r.metric, r.value).unwrap();
        }
        for (spec, metric, v) in &self.summary {
            writeln!(s, "{spec},mean,{metric},{v}").unwrap();
        }
        s
    }
}

/// For each (spec, seed): pretrain with `base` (feature and seed replaced)
/// on `pretrain_data`, then linear-probe on `probe_data`. With
/// `random_baseline`, also probes an untrained encoder per seed.
/// Cells run one after another.
pub fn feature_ablation_study(
    base: &PretrainConfig,
    specs: &[FeatureSpec],
    seeds: &[u64],
    pretrain_data: &SceneManifest,
    probe_data: &SceneManifest,
    probe: &ProbeConfig,
    random_baseline: bool,
) -> Result<AblationTable> {
    if specs.len() < 2 {
        return Err(Error::Config("an ablation needs at least two feature specs".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("an ablation needs at least one seed".into()));
    }
    let metric = probe.task.primary_metric().to_string();
    let data = load_labeled(probe_data, base.model.image_size, base.model.in_channels, probe)?;
    let mut rows = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for spec in specs {
        names.push(spec.name().to_string());
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.feature = *spec;
            cfg.model.head_widths.clear();
            cfg.resolve_heads()?;
            cfg.seed = seed;
            let out = pretrain_run(&cfg, pretrain_data, None)?;
            let report = linear_probe(&out.checkpoint.model, &data, probe)?.report;
            rows.push(AblationRow {
                spec: spec.name().to_string(),
                seed,
                metric: metric.clone(),
                value: report.primary(),
            });
        }
    }
    if random_baseline {
        names.push(RANDOM_INIT.to_string());
        for &seed in seeds {
            // same initialization and input statistics a pretraining run starts from
            let mut cfg = base.clone();
            cfg.seed = seed;
            let model = Trainer::new(cfg, pretrain_data.clone())?.model;
            let report = linear_probe(&model, &data, probe)?.report;
            rows.push(AblationRow {
                spec: RANDOM_INIT.to_string(),
                seed,
                metric: metric.clone(),
                value: report.primary(),
            });
        }
    }
    let summary = names
        .iter()
        .map(|n| {
            let v: Vec<f64> = rows.iter().filter(|r| &r.spec == n).map(|r| r.value).collect();
            (n.clone(), metric.clone(), v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Ok(AblationTable { rows, summary })
}
