use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use spectrum::harness::pipeline::{self, StyleChoice};
use spectrum::harness::{BackendKind, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spectrum", version, about = "Human judgment distribution experiments")]
struct Cli {
    /// Experiment config, TOML or JSON. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config work directory.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate items, attention checks and simulated participants.
    Datagen {
        #[arg(long)]
        backend: Option<BackendKind>,
    },
    /// Sample model votes for every item.
    Collect {
        #[arg(long)]
        backend: Option<BackendKind>,
        /// base, persona or both.
        #[arg(long, default_value = "both")]
        style: StyleChoice,
    },
    /// Attention-check filtering and human vote sets.
    SurveyQc,
    /// Fit persona weights per fold.
    FitGa,
    /// Score all methods from the stored weights.
    Eval,
    /// Grid-searched classical text models.
    MlBaseline,
    /// Assemble report.json, tables and figures.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.work_dir {
        cfg.paths.work_dir = dir.clone();
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.paths.work_dir)
        .with_context(|| format!("creating work dir {}", cfg.paths.work_dir.display()))?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let cfg = load_config(&cli)?;

    match &cli.command {
        Command::Datagen { backend } => {
            let kind = backend.unwrap_or(cfg.backend.kind);
            let b = pipeline::make_backend(&cfg.backend, kind, Some(cfg.datagen.max_tokens));
            let s = pipeline::stage_datagen(&cfg, b.as_ref()).context("datagen")?;
            println!(
                "datagen: {} items, {} check items ({} checks), {} simulated participants",
                s.items, s.check_items, s.attention_checks, s.participants
            );
        }
        Command::Collect { backend, style } => {
            let kind = backend.unwrap_or(cfg.backend.kind);
            let b = pipeline::make_backend(&cfg.backend, kind, None);
            let s = pipeline::stage_collect(&cfg, b.as_ref(), *style).context("collect")?;
            println!("collect: {} items, {} records ({} new)", s.items, s.records, s.new_records);
        }
        Command::SurveyQc => {
            let s = pipeline::stage_survey_qc(&cfg).context("survey-qc")?;
            println!(
                "survey-qc: kept {} of {} participants, {} vote sets",
                s.kept, s.participants, s.vote_sets
            );
        }
        Command::FitGa => {
            let out = pipeline::stage_fit(&cfg).context("fit-ga")?;
            for w in &out.weights {
                println!(
                    "fold {}: {}/{} train {:.4} test {:.4}",
                    w.fold, w.cell.selection, w.cell.crossover, w.train_fitness, w.test_ems
                );
            }
        }
        Command::Eval => {
            let out = pipeline::stage_eval(&cfg).context("eval")?;
            for (method, v) in &out.summary.test_ems {
                println!("test EMS {method}: {v:.4}");
            }
        }
        Command::MlBaseline => {
            let out = pipeline::stage_ml(&cfg).context("ml-baseline")?;
            for r in &out.rows {
                println!("{} {} {}: {} = {:.4}", r.task, r.encoding.name(), r.family, r.best, r.mean);
            }
        }
        Command::Report => {
            pipeline::stage_report(&cfg).context("report")?;
            println!("report: {}", cfg.paths.report().display());
        }
    }
    Ok(())
}
