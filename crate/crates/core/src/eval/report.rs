use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Multilabel,
    Singlelabel,
    Segmentation,
}

impl TaskKind {
    /// Metric used to rank runs: mAP, OA or mIoU.
    pub fn primary_metric(self) -> &'static str {
        match self {
            TaskKind::Multilabel => "map",
            TaskKind::Singlelabel => "oa",
            TaskKind::Segmentation => "miou",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "multilabel" => Ok(Self::Multilabel),
            "singlelabel" => Ok(Self::Singlelabel),
            "segmentation" => Ok(Self::Segmentation),
            _ => Err(crate::Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

/// Named scalar metrics plus a per-class breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskKind,
    pub metrics: BTreeMap<String, f64>,
    pub per_class: BTreeMap<usize, BTreeMap<String, f64>>,
    pub n_train: usize,
    pub n_val: usize,
}

impl MetricsReport {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            metrics: BTreeMap::new(),
            per_class: BTreeMap::new(),
            n_train: 0,
            n_val: 0,
        }
    }

    pub fn set(&mut self, metric: &str, value: f64) {
        self.metrics.insert(metric.to_string(), value);
    }

    pub fn set_class(&mut self, class: usize, metric: &str, value: f64) {
        self.per_class.entry(class).or_default().insert(metric.to_string(), value);
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).copied()
    }

    pub fn primary(&self) -> f64 {
        self.get(self.task.primary_metric()).unwrap_or(f64::NAN)
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.metrics {
            writeln!(s, "{k},{v}").unwrap();
        }
        s
    }

    /// One row per class, one column per metric.
    pub fn per_class_csv(&self) -> String {
        let cols: std::collections::BTreeSet<&String> = self.per_class.values().flat_map(|m| m.keys()).collect();
        let mut s = String::from("class");
        for c in &cols {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (class, m) in &self.per_class {
            write!(s, "{class}").unwrap();
            for c in &cols {
                match m.get(*c) {
                    Some(v) => write!(s, ",{v}").unwrap(),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}
