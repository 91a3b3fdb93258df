use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smlcv::workflow::{
    cmd_cv, cmd_export, cmd_report, cmd_reweight, cmd_simulate, cmd_train, StageSummary, WorkflowConfig,
};
use smlcv::{Error, Result};

#[derive(Parser)]
#[command(name = "smlcv", version, about = "Classifier-derived CVs, metadynamics on model landscapes, reweighting and export")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML workflow configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out` from the config, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key.path=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample or read labeled frames, cross-validate, and fit the model.
    Train,
    /// Cross-validation report only.
    Cv,
    /// Biased Langevin run along the trained CV or a raw coordinate.
    Simulate {
        /// Model bundle (default: model.json in the output directory).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Free-energy surface from a biased run.
    Reweight {
        /// Trajectory CSV, repeatable (default: the files written by `simulate`).
        #[arg(long = "trajectory")]
        trajectories: Vec<PathBuf>,
        #[arg(long)]
        hills: Option<PathBuf>,
    },
    /// PLUMED input for a model bundle.
    Export {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated argument labels, one per raw input.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
    },
    /// Run every benchmark criterion and write report.json.
    Report,
}

fn load_config(g: &Global) -> Result<WorkflowConfig> {
    let text = match &g.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config { path: "--config".into(), msg: format!("{}: {e}", p.display()) })?,
        None => String::new(),
    };
    let mut overrides = g.overrides.clone();
    if let Some(seed) = g.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = WorkflowConfig::from_toml(&text, &overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: Option<&WorkflowConfig>) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> Result<(StageSummary, PathBuf)> {
    let g = &cli.global;
    if let Command::Export { model, labels } = cli.command {
        let out = out_dir(g, None);
        let model = model.unwrap_or_else(|| out.join(smlcv::workflow::MODEL_FILE));
        return Ok((cmd_export(&model, labels, &out)?, out));
    }
    let cfg = load_config(g)?;
    let out = out_dir(g, Some(&cfg));
    let summary = match cli.command {
        Command::Train => cmd_train(&cfg, &out),
        Command::Cv => cmd_cv(&cfg, &out),
        Command::Simulate { model } => cmd_simulate(&cfg, &out, model.as_deref()),
        Command::Reweight { trajectories, hills } => cmd_reweight(&cfg, &out, &trajectories, hills.as_deref()),
        Command::Report => cmd_report(&cfg, &out),
        Command::Export { .. } => unreachable!("handled above"),
    }?;
    Ok((summary, out))
}

fn print_summary(s: &StageSummary, out: &Path) {
    println!("{} finished in {}", s.stage, out.display());
    for f in &s.outputs {
        println!("  wrote {f}");
    }
    for (k, v) in &s.metrics {
        println!("  {k} = {v}");
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((summary, out)) => {
            print_summary(&summary, &out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
