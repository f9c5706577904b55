use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use embryogen::io::config::{apply_overrides, read_config_value, resolve_config};
use embryogen::pipeline::{
    run_acquire, run_full, run_make_guide, run_make_videos, run_render, run_simulate, RunOptions,
};
use embryogen::Result;

/// Deterministic semi-synthetic 3D+t fluorescence-microscopy benchmark
/// generator: agent-based nucleus dynamics guided by tracked cell positions,
/// rasterized from object videos and degraded through a light-sheet
/// acquisition model.
#[derive(Parser)]
#[command(name = "embryogen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Dotted-path config override, e.g. `--set dynamics.k=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker thread count (default: all cores). Results are identical for
    /// any value.
    #[arg(long)]
    threads: Option<usize>,
    /// Frame subrange `a..b` (half-open) for the render/acquire stages.
    #[arg(long, value_parser = parse_frame_range)]
    frames: Option<(usize, usize)>,
}

#[derive(Subcommand)]
enum Command {
    /// Run dynamics only: guide.csv, per-frame object tables, run.log.
    Simulate(CommonArgs),
    /// Rasterize existing object tables into raw and label volumes.
    Render(CommonArgs),
    /// Degrade existing raw volumes into final acquisitions.
    Acquire(CommonArgs),
    /// The whole pipeline: simulate, render, acquire, manifest.
    Full(CommonArgs),
    /// Emit guide-cell tracks (generated or re-exported) as guide.csv.
    MakeGuide(CommonArgs),
    /// Emit the object-video library as NRRD pairs.
    MakeVideos(CommonArgs),
}

fn parse_frame_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, found `{s}`"))?;
    let a = a.parse().map_err(|e| format!("bad start `{a}`: {e}"))?;
    let b = b.parse().map_err(|e| format!("bad end `{b}`: {e}"))?;
    if a >= b {
        return Err(format!("empty frame range {a}..{b}"));
    }
    Ok((a, b))
}

fn run(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Simulate(a)
        | Command::Render(a)
        | Command::Acquire(a)
        | Command::Full(a)
        | Command::MakeGuide(a)
        | Command::MakeVideos(a) => a,
    };

    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| embryogen::Error::config(format!("thread pool: {e}")))?;
    }

    let mut value = read_config_value(&args.config)?;
    apply_overrides(&mut value, &args.set)?;
    let cfg = resolve_config(value)?;

    let opts = RunOptions {
        frames: args.frames.map(|(a, b)| [a, b]),
        progress: true,
    };
    match &cli.command {
        Command::Simulate(a) => run_simulate(&cfg, &a.out, &opts),
        Command::Render(a) => run_render(&cfg, &a.out, &opts),
        Command::Acquire(a) => run_acquire(&cfg, &a.out, &opts),
        Command::Full(a) => run_full(&cfg, &a.out, &opts),
        Command::MakeGuide(a) => run_make_guide(&cfg, &a.out).map(|_| ()),
        Command::MakeVideos(a) => run_make_videos(&cfg, &a.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
