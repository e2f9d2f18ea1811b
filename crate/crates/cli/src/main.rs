//! `wrist-recon`: synthetic scenes, wrist-pose solving, condition-map
//! rendering, evaluation and conditioning-token assembly.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 numerical failure,
//! 4 infeasible scene.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wrist_recon::io::{load_manifest, RunManifest};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "wrist-recon", version, about = "Wrist-camera pose recovery and condition-map rendering")]
struct Cli {
    /// Run manifest (TOML); relative input paths resolve against its directory.
    #[arg(long, global = true, value_name = "MANIFEST")]
    config: Option<PathBuf>,
    /// Master seed; overrides the manifest and feeds scene and solver seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an oracle scene and export every pipeline input.
    Synth(commands::synth::Args),
    /// Estimate one wrist pose per correspondence file.
    SolvePose(commands::solve::Args),
    /// Render condition maps along a trajectory.
    RenderCondition(commands::render::Args),
    /// Compare poses and/or image sequences.
    Eval(commands::eval::Args),
    /// Assemble conditioning tokens from features or images.
    Tokens(commands::tokens::Args),
}

/// Resolved global settings shared by every subcommand.
pub struct Context {
    pub manifest: RunManifest,
    pub out: PathBuf,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let mut manifest = match &cli.config {
        Some(p) => load_manifest(p)?,
        None => RunManifest::default(),
    };
    if let Some(seed) = cli.seed {
        manifest.seed = seed;
    }
    if cli.seed.is_some() || cli.config.is_some() {
        manifest.scene.seed = manifest.seed;
        manifest.solver.seed = manifest.seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| manifest.output.clone())
        .ok_or_else(|| CliError::input("no output directory: pass --out or set `output` in the manifest"))?;
    Ok(Context { manifest, out })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    let ctx = context(&cli)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::input(format!("{}: {e}", ctx.out.display())))?;
    match &cli.command {
        Command::Synth(a) => commands::synth::run(&ctx, a),
        Command::SolvePose(a) => commands::solve::run(&ctx, a),
        Command::RenderCondition(a) => commands::render::run(&ctx, a),
        Command::Eval(a) => commands::eval::run(&ctx, a),
        Command::Tokens(a) => commands::tokens::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
