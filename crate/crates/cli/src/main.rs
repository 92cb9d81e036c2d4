use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tbg_core::config::{Preset, RunConfig, Study};
use tbg_core::experiments::{run_study, study_bound};

/// Tight-binding and continuum dynamics of twisted bilayer graphene.
#[derive(Parser, Debug)]
#[command(name = "tbg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, default_value = "desk")]
    preset: String,

    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Band structure along the high-symmetry path and flat-band metrics.
    Bands,
    /// Evolve the configured wavepacket on the lattice.
    PropagateTb,
    /// Evolve the configured wavepacket in the continuum model.
    PropagateBm,
    /// Snapshot comparison of both models.
    Compare,
    /// Truncation error against R with certificates.
    TruncationStudy,
    /// Discrepancy slopes against the model parameters.
    ScalingStudy,
    /// Print the truncation certificate as JSON.
    Bound,
}

impl Command {
    fn study(self) -> Study {
        match self {
            Command::Bands => Study::Bands,
            Command::PropagateTb => Study::PropagateTb,
            Command::PropagateBm => Study::PropagateBm,
            Command::Compare => Study::Compare,
            Command::TruncationStudy => Study::Truncation,
            Command::ScalingStudy => Study::Scaling,
            Command::Bound => Study::Bound,
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let preset: Preset = cli.preset.parse()?;
    let study = cli.command.study();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_text(preset, study, &text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::preset(preset, study),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.display().to_string();
    }
    if let Some(n) = cli.threads {
        cfg.threads = n;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    if let Command::Bound = cli.command {
        let report = study_bound(&cfg)?;
        println!("{}", serde_json::to_string_pretty(&report.certificate)?);
        if cli.out.is_none() && cli.config.is_none() {
            return Ok(());
        }
    }
    let dir = PathBuf::from(&cfg.output_dir);
    let manifest = run_study(&cfg, &dir)?;
    log::info!("wrote {} files and {}", manifest.files.len(), dir.join("run.json").display());
    Ok(())
}
