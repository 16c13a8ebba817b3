//! Argument parsing and dispatch for the `boundloop` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{self, Baseline, EvalInputs};
use crate::config::{ConfigBuilder, InitKindName};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "boundloop", version, about = "Self-training word boundary detection")]
pub struct Cli {
    /// Config file of `section.key = value` lines (a manifest works too).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `run.out`, the run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `run.workers`; falls back to BOUNDLOOP_WORKERS.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Sets any config key, `KEY=VALUE`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Vad,
    Random,
    File,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with gold alignment and a corrupted initial segmentation.
    Synth,
    /// Extract and store log-mel features.
    Features,
    /// Write the initial segmentation of every corpus.
    InitSeg {
        #[arg(long, value_enum)]
        kind: Option<InitArg>,
    },
    /// Train one predictor on the initial segmentation.
    Train,
    /// Write per-frame boundary probabilities from a checkpoint.
    Infer {
        #[arg(long)]
        model: PathBuf,
    },
    /// Fit peak-detection parameters on the dev split against the initial segmentation.
    FitPeaks {
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Turn probability tracks into segmentations.
    Segment {
        #[arg(long)]
        probs: Option<PathBuf>,
        #[arg(long)]
        peaks: Option<PathBuf>,
    },
    /// Run the full self-training loop.
    Selftrain,
    /// Score a segmentation against a gold alignment.
    Eval {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long, requires = "gold")]
        vad: Option<PathBuf>,
        #[arg(long, requires = "vad")]
        gold: Option<PathBuf>,
    },
    /// Merge per-corpus metric files into an averaged table.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Baseline average token-F1 for the improvement line.
        #[arg(long, conflicts_with = "baseline_files")]
        baseline: Option<f64>,
        /// Metric files whose average token-F1 is the baseline.
        #[arg(long, num_args = 1..)]
        baseline_files: Vec<PathBuf>,
    },
}

/// Runs a parsed command line and returns what to print.
pub fn run(cli: Cli) -> Result<String> {
    if let Command::Report { files, baseline, baseline_files } = &cli.command {
        let base = match (baseline, baseline_files.is_empty()) {
            (Some(v), _) => Baseline::Value(*v),
            (None, false) => Baseline::Files(baseline_files),
            (None, true) => Baseline::None,
        };
        return commands::cmd_report(files, base, cli.out.as_deref());
    }

    let mut b = ConfigBuilder::new();
    if let Some(path) = &cli.config {
        b = b.load_file(path)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| crate::error::Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        b = b.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        b = b.set("run.seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        b = b.set("run.out", &o.to_string_lossy())?;
    }
    if let Some(w) = cli.workers {
        b = b.set("run.workers", &w.to_string())?;
    }
    let cfg = b.build()?;

    match &cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Features => commands::cmd_features(&cfg),
        Command::InitSeg { kind } => commands::cmd_init_seg(
            &cfg,
            kind.map(|k| match k {
                InitArg::Vad => InitKindName::Vad,
                InitArg::Random => InitKindName::Random,
                InitArg::File => InitKindName::File,
            }),
        ),
        Command::Train => commands::cmd_train(&cfg),
        Command::Infer { model } => commands::cmd_infer(&cfg, model),
        Command::FitPeaks { probs } => commands::cmd_fit_peaks(&cfg, probs.as_deref()),
        Command::Segment { probs, peaks } => commands::cmd_segment(&cfg, probs.as_deref(), peaks.as_deref()),
        Command::Selftrain => commands::cmd_selftrain(&cfg),
        Command::Eval { hyp, corpus, vad, gold } => commands::cmd_eval(
            &cfg,
            &EvalInputs { hyp, corpus: corpus.as_deref(), vad: vad.as_deref(), gold: gold.as_deref() },
        ),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| crate::error::Error::Config(e.to_string()))?;
    run(cli)
}

/// The one-line error format of the binary: `error kind=<kind> msg=<message>`.
pub fn error_line(e: &crate::error::Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} msg={}", e.kind(), msg.trim())
}
