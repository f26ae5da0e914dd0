mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "troughcast", version, about = "Market-trough labeling, nowcasting, backtesting and causal estimation")]
#[command(after_help = config::help_table())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Signal threshold on calibrated probability.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Holding period in trading days.
    #[arg(long, global = true)]
    holding: Option<usize>,
    /// Position sizing: fixed or pyramiding.
    #[arg(long, global = true)]
    sizing: Option<String>,
    /// Comma-separated treatment feature names.
    #[arg(long, global = true)]
    treatments: Option<String>,
    /// Any config key, as key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic market: prices, option chains, bars, macro series.
    Synth,
    /// Date turning points and write trough labels.
    Label,
    /// Compute the daily indicator panel.
    Indicators,
    /// Build the scaled feature matrix.
    Features,
    /// Nested cross-validation, model selection, calibration and final refit.
    Train,
    /// Hold-out metrics, calibration, SHAP and drift diagnostics.
    Evaluate,
    /// Trade the calibrated probabilities.
    Backtest,
    /// Partially linear and average-partial-effect estimates with sensitivity.
    Causal,
    /// Render SVG plots from stage outputs.
    Report,
    /// Run every stage in order.
    All,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.set("out", &o.to_string_lossy())?;
    }
    if let Some(t) = cli.threshold {
        cfg.set("threshold", &t.to_string())?;
    }
    if let Some(h) = cli.holding {
        cfg.set("holding", &h.to_string())?;
    }
    if let Some(s) = &cli.sizing {
        cfg.set("sizing", s)?;
    }
    if let Some(t) = &cli.treatments {
        cfg.set("treatments", t)?;
    }
    cfg.seed()?;
    Ok(cfg)
}

fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Synth => commands::synth(cfg),
        Command::Label => commands::label(cfg),
        Command::Indicators => commands::indicators(cfg),
        Command::Features => commands::features(cfg),
        Command::Train => commands::train(cfg),
        Command::Evaluate => commands::evaluate(cfg),
        Command::Backtest => commands::run_backtest(cfg),
        Command::Causal => commands::run_causal(cfg),
        Command::Report => commands::report(cfg),
        Command::All => {
            for c in [
                Command::Synth,
                Command::Label,
                Command::Indicators,
                Command::Features,
                Command::Train,
                Command::Evaluate,
                Command::Backtest,
                Command::Causal,
                Command::Report,
            ] {
                run(c, cfg)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| {
        std::fs::create_dir_all(cfg.out())?;
        std::fs::write(cfg.out_file("config_resolved.txt"), cfg.dump())?;
        run(cli.command, &cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
