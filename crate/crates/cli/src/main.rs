//! `fgmae`: synthesize data, extract features, pretrain, probe, fine-tune,
//! run ablations, score predictions and render reconstructions.
//!
//! Exit codes: 0 ok, 1 internal, 2 config/flags, 3 I/O, 4 feature or
//! geometry mismatch, 5 non-finite loss. Failures print one line on stderr,
//! tagged `error[config]`, `error[io]`, `error[feature]`, `error[non_finite]`
//! or `error[internal]`.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgmae::{Error, ErrorCategory};

#[derive(Debug, Parser)]
#[command(name = "fgmae", version, about = "Feature-guided masked autoencoder toolkit")]
pub struct Cli {
    /// Force deterministic execution (single-threaded, fixed reduction order).
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset: N locations x 4 seasons plus manifest.csv.
    Synth(SynthArgs),
    /// Compute a descriptor for one FGMR image.
    Extract(ExtractArgs),
    /// Pretrain from a JSON config.
    Pretrain(PretrainArgs),
    /// Linear probe of a frozen pretrained encoder.
    Probe(ProbeArgs),
    /// Fine-tune a pretrained encoder end to end.
    Finetune(ProbeArgs),
    /// Pretrain + probe every feature spec over several seeds.
    Ablate(AblateArgs),
    /// Score predictions against labels.
    Metrics(MetricsArgs),
    /// Render a prediction as a binary PPM.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub modality: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Equivalent number of looks for SAR speckle.
    #[arg(long)]
    pub looks: Option<f64>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seasons: Option<u8>,
    #[arg(long)]
    pub structures: Option<usize>,
    /// Also write per-pixel class masks.
    #[arg(long)]
    pub masks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureKind {
    Hog,
    Ndi,
    Canny,
    Sift,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_enum)]
    pub feature: FeatureKind,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// NDI band positions as nir,red,green,swir.
    #[arg(long)]
    pub band_map: Option<String>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's `manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from `<out>/checkpoint` if it exists.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's `checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Overrides the config's `manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated seeds, overriding the config's `seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Map,
    F1,
    Oa,
    Miou,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long, value_enum)]
    pub metric: MetricKind,
    /// Scores (map, f1), class ids (oa) or a class mask (miou); FGMR or text.
    #[arg(long)]
    pub pred: PathBuf,
    /// Multi-hot rows (map, f1), class ids (oa) or a class mask (miou).
    #[arg(long)]
    pub labels: PathBuf,
    /// Number of classes; inferred from the data when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub ignore_index: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Head prediction `[L, K]` or `[B, L, K]` as FGMR.
    #[arg(long, conflicts_with = "checkpoint")]
    pub pred: Option<PathBuf>,
    /// Feature the prediction encodes (raw, hog, ndi, canny, sift, hog+ndi).
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    /// Input channel count behind raw/HOG predictions.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Reconstruct `--scene` with this checkpoint instead of reading `--pred`.
    #[arg(long, requires = "scene")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which batch element to render.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
}

fn exit_code(cat: ErrorCategory) -> u8 {
    match cat {
        ErrorCategory::Config => 2,
        ErrorCategory::Io => 3,
        ErrorCategory::Feature => 4,
        ErrorCategory::NonFinite => 5,
        ErrorCategory::Other => 1,
    }
}

fn tag(cat: ErrorCategory) -> &'static str {
    match cat {
        ErrorCategory::Config => "config",
        ErrorCategory::Io => "io",
        ErrorCategory::Feature => "feature",
        ErrorCategory::NonFinite => "non_finite",
        ErrorCategory::Other => "internal",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            eprintln!("error[config]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let cat = e.category();
    eprintln!("error[{}]: {}", tag(cat), one_line(&e.to_string()));
    ExitCode::from(exit_code(cat))
}
