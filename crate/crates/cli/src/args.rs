//! Subcommand arguments. Each struct doubles as the config snapshot stored
//! in a run manifest, so everything a run depends on lives here.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Time forward and backward passes against sequence length.
    Bench(BenchArgs),
    /// Run a membrane-control or structural property check.
    Props(PropsArgs),
    /// Fit reset-based LIF neurons with a dynamic-decay bank.
    Approx(ApproxArgs),
    /// Train the toy sequential-image classifier.
    Pixel(PixelArgs),
    /// Train at one length, evaluate serially at others.
    Extrapolate(ExtrapolateArgs),
    /// FLOPs and energy of the reference convolutional network.
    Energy(EnergyArgs),
    /// Write a synthetic dataset to a tensor container file.
    GenData(GenDataArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bench(_) => "bench",
            Command::Props(_) => "props",
            Command::Approx(_) => "approx",
            Command::Pixel(_) => "pixel",
            Command::Extrapolate(_) => "extrapolate",
            Command::Energy(_) => "energy",
            Command::GenData(_) => "gen-data",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Bench(a) => Some(a.seed),
            Command::Props(a) => Some(a.seed),
            Command::Approx(a) => Some(a.seed),
            Command::Pixel(a) => Some(a.seed),
            Command::Extrapolate(a) => Some(a.seed),
            Command::GenData(a) => Some(a.seed),
            Command::Energy(_) | Command::Replay(_) => None,
        }
    }

    /// Output directory, or output file for `gen-data`.
    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::Bench(a) => Some(&a.out),
            Command::Props(a) => Some(&a.out),
            Command::Approx(a) => Some(&a.out),
            Command::Pixel(a) => Some(&a.out),
            Command::Extrapolate(a) => Some(&a.out),
            Command::Energy(a) => Some(&a.out),
            Command::GenData(a) => Some(&a.out),
            Command::Replay(_) => None,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Bench(a) => a.out = out,
            Command::Props(a) => a.out = out,
            Command::Approx(a) => a.out = out,
            Command::Pixel(a) => a.out = out,
            Command::Extrapolate(a) => a.out = out,
            Command::Energy(a) => a.out = out,
            Command::GenData(a) => a.out = out,
            Command::Replay(a) => a.out = Some(out),
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Neuron kinds: lif, psn, masked-psn, sliding-psn, dsn.
    #[arg(long, value_delimiter = ',', default_value = "dsn,psn")]
    pub neurons: Vec<String>,
    /// Ascending sequence lengths.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 512)]
    pub channels: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/bench")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    ShortControl,
    LongControl,
    ConditionsTable,
    Nonlinearity,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropsArgs {
    /// if-hard, if-soft, if-none, lif-hard, lif-soft, lif-none, dsn, psn,
    /// masked-psn or sliding-psn.
    #[arg(long)]
    pub neuron: String,
    #[arg(long, value_enum)]
    pub property: Property,
    #[arg(long, default_value_t = 4)]
    pub delta: usize,
    #[arg(long, default_value_t = spikescan::props::DEFAULT_TRIALS)]
    pub trials: usize,
    /// Input bound for long control.
    #[arg(long, default_value_t = 2.0)]
    pub c_bound: f64,
    /// Sequence length for long control and nonlinearity searches.
    #[arg(long, default_value_t = 1000)]
    pub t: usize,
    /// Constant decay of the LIF variants.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = spikescan::props::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "out/props")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxDataset {
    A,
    B,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpikeVariant {
    Binary,
    Integer,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxArgs {
    #[arg(long, value_enum, default_value = "a")]
    pub dataset: ApproxDataset,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: Scale,
    #[arg(long, value_enum, default_value = "binary")]
    pub variant: SpikeVariant,
    /// Overrides the scale's epoch count; 0 reports the untrained model.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/approx")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelArgs {
    /// lif, sliding-psn or dsn.
    #[arg(long, default_value = "dsn")]
    pub neuron: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/pixel")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolateArgs {
    /// dsn, sliding-psn, psn or masked-psn.
    #[arg(long, default_value = "dsn")]
    pub neuron: String,
    #[arg(long, default_value_t = 256)]
    pub train_t: usize,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096")]
    pub eval_t: Vec<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/extrapolate")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyArgs {
    /// all, lif, psn, sliding-psn or dsn.
    #[arg(long, default_value = "all")]
    pub neuron: String,
    /// Samples folded into the reported totals.
    #[arg(long, default_value_t = spikescan::energy::REFERENCE_SCALE)]
    pub scale: f64,
    #[arg(long, default_value = "out/energy")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    A,
    B,
    Pixel,
    Stationary,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub dataset: DataKind,
    /// Sample count; dataset b always has 800.
    #[arg(long, default_value_t = 2200)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out/data.spkn")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
