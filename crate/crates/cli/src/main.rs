use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod ablate;
mod commands;
mod config;
mod train;

use config::Settings;

const AFTER_HELP: &str = "\
Every option can also be given in a key=value config file passed with
--config; flags override file values. Keys are the flag names without the
leading dashes, except bim-* and net-* which are written bim.* and net.*
(for example `bim.sigma = 4`). Unknown keys are rejected.";

#[derive(Parser)]
#[command(name = "uvc", version, about = "Encode, decode and evaluate uvc video streams", after_help = AFTER_HELP)]
struct Cli {
    /// Log progress; repeat for more detail
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a raw 4:2:0 clip into a stream and a per-frame stats CSV.
    Encode(EncodeArgs),
    /// Decode a stream to raw 4:2:0 and optionally check frame MD5s.
    Decode(DecodeArgs),
    /// BD-rate report from a CSV of rate-distortion points.
    Metrics(MetricsArgs),
    /// Train loop-filter models on a clip and write a model directory.
    Train(TrainArgs),
    /// Encode a clip with several tool sets and report BD-rates against the anchor.
    Ablate(AblateArgs),
}

#[derive(Args, Clone, Default)]
struct ClipArgs {
    /// Raw planar 4:2:0 input file
    #[arg(long)]
    input: Option<String>,
    /// Luma width, a multiple of 64
    #[arg(long)]
    width: Option<String>,
    /// Luma height, a multiple of 64
    #[arg(long)]
    height: Option<String>,
    /// Use only the first N frames
    #[arg(long)]
    frames: Option<String>,
}

#[derive(Args, Clone, Default)]
struct CodingArgs {
    /// Picture structure: intra, ld or ra [default: ra]
    #[arg(long)]
    gop: Option<String>,
    /// Comma-separated tools: uqt, nnlf, bim, or none [default: none]
    #[arg(long)]
    tools: Option<String>,
    /// Directory of filter weight files
    #[arg(long)]
    weights: Option<String>,
    /// Turn the bim tool on or off regardless of --tools
    #[arg(long)]
    bim_enabled: Option<String>,
    /// Noise scale for block importance [default: 2/3 of the quantizer step]
    #[arg(long)]
    bim_sigma: Option<String>,
    /// Four ascending importance thresholds, comma-separated
    #[arg(long)]
    bim_thresholds: Option<String>,
    /// Partition depth budget below the 64x64 CTU [default: 4]
    #[arg(long)]
    max_depth: Option<String>,
    /// Motion search range in luma samples [default: 8]
    #[arg(long)]
    search_range: Option<String>,
}

#[derive(Args)]
struct EncodeArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    clip: ClipArgs,
    #[command(flatten)]
    coding: CodingArgs,
    /// Base QP in [0, 51] [default: 32]
    #[arg(long)]
    qp: Option<String>,
    /// Output stream
    #[arg(long)]
    out: Option<String>,
    /// Per-frame stats CSV [default: <out>.csv]
    #[arg(long)]
    stats: Option<String>,
    /// Write the reconstruction MD5 of every frame to this file
    #[arg(long)]
    md5: Option<String>,
    /// Write the reconstruction as raw 4:2:0
    #[arg(long)]
    recon: Option<String>,
}

#[derive(Args)]
struct DecodeArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input stream
    #[arg(long)]
    input: Option<String>,
    /// Output raw 4:2:0 file
    #[arg(long)]
    out: Option<String>,
    /// Directory of filter weight files
    #[arg(long)]
    weights: Option<String>,
    /// Write the MD5 of every decoded frame to this file
    #[arg(long)]
    md5: Option<String>,
    /// Fail unless the decoded frames match this MD5 list
    #[arg(long)]
    expect_md5: Option<String>,
}

#[derive(Args)]
struct MetricsArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV rows of label, component, kbps, psnr
    #[arg(long)]
    curves: Option<String>,
    /// Label of the anchor curves [default: anchor]
    #[arg(long)]
    anchor: Option<String>,
    /// Write the BD-rate table as CSV
    #[arg(long)]
    report: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    clip: ClipArgs,
    /// Picture structure used to produce training reconstructions [default: ra]
    #[arg(long)]
    gop: Option<String>,
    /// QPs to encode at; each feeds the model set of its band [default: 22,27,32,37,42]
    #[arg(long)]
    qps: Option<String>,
    /// Output directory for the weight files
    #[arg(long)]
    out: Option<String>,
    /// Training steps per model [default: 200]
    #[arg(long)]
    steps: Option<String>,
    /// Learning rate [default: 0.01]
    #[arg(long)]
    step_size: Option<String>,
    /// Patches per step [default: 4]
    #[arg(long)]
    batch: Option<String>,
    /// Patch side in samples [default: 32]
    #[arg(long)]
    patch: Option<String>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<String>,
    /// Feature channels [default: 16]
    #[arg(long)]
    net_width: Option<String>,
    /// Residual blocks [default: 4]
    #[arg(long)]
    net_blocks: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    clip: ClipArgs,
    #[command(flatten)]
    coding: CodingArgs,
    /// QP list [default: 22,27,32,37,42]
    #[arg(long)]
    qps: Option<String>,
    /// Semicolon-separated tool sets compared with the anchor
    /// [default: uqt;uqt,bim, plus uqt,bim,nnlf when --weights is given]
    #[arg(long)]
    toolsets: Option<String>,
    /// Frame rate used to convert bits to kbps [default: 30]
    #[arg(long)]
    fps: Option<String>,
    /// Write the rate-distortion points as CSV
    #[arg(long)]
    curves: Option<String>,
    /// Write the BD-rate table as CSV
    #[arg(long)]
    report: Option<String>,
}

impl ClipArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("input", self.input.as_ref()),
            ("width", self.width.as_ref()),
            ("height", self.height.as_ref()),
            ("frames", self.frames.as_ref()),
        ]
    }
}

impl CodingArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("gop", self.gop.as_ref()),
            ("tools", self.tools.as_ref()),
            ("weights", self.weights.as_ref()),
            ("bim.enabled", self.bim_enabled.as_ref()),
            ("bim.sigma", self.bim_sigma.as_ref()),
            ("bim.thresholds", self.bim_thresholds.as_ref()),
            ("max-depth", self.max_depth.as_ref()),
            ("search-range", self.search_range.as_ref()),
        ]
    }
}

fn settings(config: &Option<PathBuf>, pairs: Vec<(&str, Option<&String>)>) -> anyhow::Result<Settings> {
    Settings::load(config.as_deref(), &pairs)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode(a) => {
            let mut p = a.clip.pairs();
            p.extend(a.coding.pairs());
            p.extend([
                ("qp", a.qp.as_ref()),
                ("out", a.out.as_ref()),
                ("stats", a.stats.as_ref()),
                ("md5", a.md5.as_ref()),
                ("recon", a.recon.as_ref()),
            ]);
            commands::encode(&settings(&a.config, p)?)
        }
        Command::Decode(a) => {
            let p = vec![
                ("input", a.input.as_ref()),
                ("out", a.out.as_ref()),
                ("weights", a.weights.as_ref()),
                ("md5", a.md5.as_ref()),
                ("expect-md5", a.expect_md5.as_ref()),
            ];
            commands::decode(&settings(&a.config, p)?)
        }
        Command::Metrics(a) => {
            let p = vec![
                ("curves", a.curves.as_ref()),
                ("anchor", a.anchor.as_ref()),
                ("report", a.report.as_ref()),
            ];
            commands::metrics(&settings(&a.config, p)?)
        }
        Command::Train(a) => {
            let mut p = a.clip.pairs();
            p.extend([
                ("gop", a.gop.as_ref()),
                ("qps", a.qps.as_ref()),
                ("out", a.out.as_ref()),
                ("steps", a.steps.as_ref()),
                ("step-size", a.step_size.as_ref()),
                ("batch", a.batch.as_ref()),
                ("patch", a.patch.as_ref()),
                ("seed", a.seed.as_ref()),
                ("net.width", a.net_width.as_ref()),
                ("net.blocks", a.net_blocks.as_ref()),
            ]);
            train::train(&settings(&a.config, p)?)
        }
        Command::Ablate(a) => {
            let mut p = a.clip.pairs();
            p.extend(a.coding.pairs());
            p.extend([
                ("qps", a.qps.as_ref()),
                ("toolsets", a.toolsets.as_ref()),
                ("fps", a.fps.as_ref()),
                ("curves", a.curves.as_ref()),
                ("report", a.report.as_ref()),
            ]);
            ablate::ablate(&settings(&a.config, p)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
