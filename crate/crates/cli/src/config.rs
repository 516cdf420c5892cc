//! Flag parsing and the optional JSON config file. Flags win over the file,
//! the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NumericsArg {
    Float,
    Fixed,
}

#[derive(Debug, Parser)]
#[command(
    name = "rewind",
    version,
    about = "Performance model, explorer, simulator and benchmark for multi-layer LSTM accelerators"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Hardware profile: a built-in name or a JSON file.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Model manifest path, or `builtin:small` / `builtin:nominal`.
    #[arg(long, global = true)]
    pub manifest: Option<String>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Format of the report printed on stdout. Files are always written in both.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Timing and DSP estimate for given reuse factors.
    Estimate(ReuseArgs),
    /// Balanced design under a DSP budget plus naive and balanced frontiers.
    Explore(ExploreArgs),
    /// Cycle-level pipeline simulation.
    Simulate(SimulateArgs),
    /// Run the model on a sequence CSV.
    Infer(InferArgs),
    /// Train, score and evaluate the anomaly detector.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Default)]
pub struct ReuseArgs {
    /// Recurrent reuse factor, one value for all layers or one per layer.
    #[arg(long, value_delimiter = ',')]
    pub rh: Vec<u64>,
    /// Input reuse factor; defaults to the balanced value for each Rh.
    #[arg(long, value_delimiter = ',')]
    pub rx: Vec<u64>,
    /// Tail reuse factor.
    #[arg(long, value_delimiter = ',')]
    pub rt: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    /// DSP budget; defaults to the profile's DSP count.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Rh sweep range for the frontiers, `lo..hi` inclusive.
    #[arg(long)]
    pub sweep: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub reuse: ReuseArgs,
    #[arg(long)]
    pub inferences: Option<usize>,
    /// Cycles between input arrivals; 0 means a saturated input queue.
    #[arg(long)]
    pub arrival_gap: Option<u64>,
    #[arg(long)]
    pub gantt_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Input sequence CSV, one row per timestep.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub numerics: Option<NumericsArg>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Evaluation set CSV; generated when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_background: Option<usize>,
    #[arg(long)]
    pub n_signal: Option<usize>,
    #[arg(long)]
    pub snr: Option<f64>,
    /// Target false-positive rate for the detection threshold.
    #[arg(long)]
    pub fpr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Score the manifest's weights as they are instead of training.
    #[arg(long)]
    pub no_train: bool,
}

/// Accepts `3` as well as `[3, 4]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<u64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Contents of `--config`. Keys are the long flag names with `_` for `-`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub manifest: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub rh: Option<OneOrMany>,
    pub rx: Option<OneOrMany>,
    pub rt: Option<OneOrMany>,
    pub budget: Option<u64>,
    pub sweep: Option<String>,
    pub inferences: Option<usize>,
    pub arrival_gap: Option<u64>,
    pub gantt_width: Option<usize>,
    pub input: Option<PathBuf>,
    pub numerics: Option<NumericsArg>,
    pub dataset: Option<PathBuf>,
    pub n_train: Option<usize>,
    pub n_background: Option<usize>,
    pub n_signal: Option<usize>,
    pub snr: Option<f64>,
    pub fpr: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub no_train: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            CliError::usage(format!(
                "config {}: at `{}`: {}",
                path.display(),
                e.path(),
                e.inner()
            ))
        })
    }

    pub fn reuse(&self) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
        let v = |o: &Option<OneOrMany>| o.clone().map(OneOrMany::into_vec).unwrap_or_default();
        (v(&self.rh), v(&self.rx), v(&self.rt))
    }
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag list if given, else the file's.
pub fn pick_list(flag: &[u64], file: Vec<u64>) -> Vec<u64> {
    if flag.is_empty() {
        file
    } else {
        flag.to_vec()
    }
}

pub fn parse_range(s: &str) -> Result<(u64, u64), CliError> {
    let bad = || CliError::usage(format!("invalid range `{s}` (expected lo..hi, e.g. 1..10)"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo: u64 = a.trim().parse().map_err(|_| bad())?;
    let hi: u64 = b.trim().parse().map_err(|_| bad())?;
    if lo < 1 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}
