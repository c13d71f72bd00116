use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use latsep::dataset::MetricKind;
use latsep::fits::SeparationAxis;
use latsep::io::ReportFormat;
use latsep::separation::{ClassWeighting, Metric};

#[derive(Debug, Parser)]
#[command(
    name = "latsep",
    version,
    about = "Measure subgroup separation in embeddings and how subgroup performance responds to allocation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for splits, resampling and synthetic data
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory
    #[arg(long, global = true, env = "LATSEP_OUT", default_value = "latsep-out")]
    pub out: PathBuf,
    /// Report encoding; JSON copies are always written because later commands read them
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Class-conditional TV, Wasserstein-1 and Fréchet distances between subgroups
    Separation(SeparationArgs),
    /// Retrain probes across subgroup allocations at a fixed budget and fit slopes
    Sweep(SweepArgs),
    /// Correlate separation with fitted sensitivity across attributes
    Correlate(CorrelateArgs),
    /// Check observed subgroup accuracy gaps against the 4ε + |ΔAcc| bound
    Bound(BoundArgs),
    /// Write a synthetic embedding set
    Synth(SynthArgs),
    /// Re-fit a stored sweep
    Fit(FitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Tv,
    Wd,
    Fd,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Tv => Metric::Tv,
            MetricArg::Wd => Metric::Wd,
            MetricArg::Fd => Metric::Fd,
        }
    }
}

impl From<MetricArg> for SeparationAxis {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Tv => SeparationAxis::Tv,
            MetricArg::Wd => SeparationAxis::Wd,
            MetricArg::Fd => SeparationAxis::Fd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightArg {
    Empirical,
    Uniform,
}

impl From<ClassWeightArg> for ClassWeighting {
    fn from(c: ClassWeightArg) -> Self {
        match c {
            ClassWeightArg::Empirical => ClassWeighting::Empirical,
            ClassWeightArg::Uniform => ClassWeighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerfMetric {
    Loss,
    BalancedAccuracy,
    Auc,
    Accuracy,
}

impl From<PerfMetric> for MetricKind {
    fn from(m: PerfMetric) -> Self {
        match m {
            PerfMetric::Loss => MetricKind::Loss,
            PerfMetric::BalancedAccuracy => MetricKind::BalancedAccuracy,
            PerfMetric::Auc => MetricKind::Auc,
            PerfMetric::Accuracy => MetricKind::Accuracy,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeparationArgs {
    /// Embedding file: `.csv`, or binary with a `.json` header beside it
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Attribute to measure; repeat for several
    #[arg(long, required_unless_present = "all_attributes")]
    pub attribute: Vec<String>,
    /// Measure every attribute in the file
    #[arg(long, conflicts_with = "attribute")]
    pub all_attributes: bool,
    /// Fraction of variance the PCA projection keeps
    #[arg(long, default_value_t = 0.7)]
    pub variance: f64,
    /// Measure in the full embedding space
    #[arg(long)]
    pub no_pca: bool,
    /// Histogram bins per dimension
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Distances to compute
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MetricArg::Tv, MetricArg::Wd, MetricArg::Fd])]
    pub metric: Vec<MetricArg>,
    /// Weights of the per-class distances
    #[arg(long, value_enum, default_value_t = ClassWeightArg::Empirical)]
    pub class_weights: ClassWeightArg,
    /// Weight dimensions by their variance instead of equally
    #[arg(long)]
    pub variance_weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Logistic probe on the given embeddings
    Logistic,
    /// Pre-train a small tanh encoder on part of the pool, then probe its hidden layer
    Mlp,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Embedding file used as the resampling pool
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Attribute whose allocation is swept
    #[arg(long)]
    pub attribute: String,
    /// Separate evaluation file; its ids must not occur in the pool
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Fraction of the embeddings held out for evaluation when --eval is absent
    #[arg(long, default_value_t = 0.3, conflicts_with = "eval")]
    pub holdout: f64,
    /// Fine-tuning set size K at every allocation
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    /// Allocations of group 1 as start:end:step
    #[arg(long, default_value = "0:1:0.1")]
    pub grid: String,
    /// Number of seeds (offset by --seed) or a comma-separated list
    #[arg(long, default_value = "5")]
    pub seeds: String,
    /// Keep P(Y) fixed at the pool rate at every allocation
    #[arg(long)]
    pub hold_py: bool,
    /// Do not stratify each group by its own P(Y | A)
    #[arg(long)]
    pub no_hold_py_given_a: bool,
    /// Probe family
    #[arg(long, value_enum, default_value_t = ProbeKind::Logistic)]
    pub probe: ProbeKind,
    /// Weight of the separation penalty during encoder pre-training; implies --probe mlp
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fraction of the pool reserved for encoder pre-training
    #[arg(long, default_value_t = 0.35)]
    pub pretrain_fraction: f64,
    /// Encoder hidden width
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Encoder pre-training epochs
    #[arg(long, default_value_t = 60)]
    pub encoder_epochs: usize,
    /// Probe gradient-descent epochs
    #[arg(long, default_value_t = 500)]
    pub probe_epochs: usize,
    /// Probe L2 coefficient
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorrelateArgs {
    /// Separation reports (JSON), one per attribute
    #[arg(long, num_args = 1.., required = true)]
    pub separation: Vec<PathBuf>,
    /// Sensitivity fits (JSON), one per attribute
    #[arg(long, num_args = 1.., required = true)]
    pub fit: Vec<PathBuf>,
    /// Separation value on the x axis
    #[arg(long, value_enum, default_value_t = MetricArg::Tv)]
    pub axis: MetricArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    /// Sweep record (JSON)
    #[arg(long)]
    pub sweep: PathBuf,
    /// Separation report of the sweep's evaluation set (JSON)
    #[arg(long)]
    pub separation: PathBuf,
    /// Tolerance added to the bound for the slack-adjusted verdict
    #[arg(long, default_value_t = 0.0)]
    pub slack: f64,
    /// Two separations ε′,ε″ for the asymmetric form 2ε′ + 2ε″ + |ΔAcc|
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Named configuration
    #[arg(
        long,
        value_parser = ["invariant", "entangled", "graded-battery", "mnist-like"],
        required_unless_present = "config",
        conflicts_with = "config"
    )]
    pub preset: Option<String>,
    /// Generator configuration file (JSON) for a single attribute
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rows; defaults to the preset's size
    #[arg(long)]
    pub n: Option<usize>,
    /// Attributes in the graded battery
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    /// Write the binary format instead of CSV
    #[arg(long)]
    pub binary: bool,
    /// Output file; defaults to `<out>/<preset>.csv` or `.bin`
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Linear,
    Powerlaw,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Sweep record (JSON)
    #[arg(long)]
    pub sweep: PathBuf,
    /// Linear slopes, or the power law in subgroup and total size (loss only)
    #[arg(long, value_enum, default_value_t = Model::Linear)]
    pub model: Model,
    /// Metric for the linear model
    #[arg(long, value_enum, default_value_t = PerfMetric::Loss)]
    pub metric: PerfMetric,
}
