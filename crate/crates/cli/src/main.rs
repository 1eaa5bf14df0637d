use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use reakase_core::pipeline::{exit_code, run_all, run_stage, PipelineConfig, Stage};

/// Legal case retrieval pipeline.
#[derive(Debug, Parser)]
#[command(name = "reakase", version)]
struct Cli {
    /// One of: ingest, extract, triplets, reason, encode, index, mine, train,
    /// retrieve, eval, compare, report, plus `validate` and `all`.
    command: String,

    #[arg(long)]
    config: PathBuf,

    /// Overrides the workspace directory from the config.
    #[arg(long)]
    workspace: Option<PathBuf>,

    /// Runs per-seed stages for this seed only.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> reakase_core::Result<()> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(ws) = &cli.workspace {
        cfg.workspace = ws.clone();
    }
    let seeds: Vec<u64> = cli.seed.into_iter().collect();
    let outcomes = match cli.command.as_str() {
        "validate" => {
            cfg.check_paths().map_err(|e| reakase_core::Error::Config(e.to_string()))?;
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        "all" => run_all(&cfg, &seeds)?,
        other => run_stage(other.parse::<Stage>()?, &cfg, &seeds)?,
    };
    for o in outcomes {
        let seed = o.seed.map(|s| format!(" (seed {s})")).unwrap_or_default();
        println!("{}{seed}: {} artifact(s) in {:.2}s", o.stage, o.outputs.len(), o.duration.as_secs_f64());
        for p in &o.outputs {
            println!("  {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
