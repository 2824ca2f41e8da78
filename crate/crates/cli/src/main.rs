mod config;
mod failure;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::failure::Outcome;
use crate::stages::Ctx;

/// Green-skill demand pipeline: match job-posting skills to a green-skill
/// taxonomy, build monthly share series, forecast them and classify skills
/// by growth.
#[derive(Debug, Parser)]
#[command(name = "skillcast", version)]
struct Cli {
    /// TOML configuration file; relative paths inside it resolve against its
    /// directory.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set match.workers=8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    records: Option<PathBuf>,

    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,

    #[arg(long, global = true)]
    totals: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Matching worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Re-run stages even when their manifests are current.
    #[arg(long, global = true)]
    force: bool,

    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract skill records from raw postings with the chat backend.
    Extract {
        #[arg(long)]
        postings: Option<PathBuf>,
    },
    /// Clean records, merge variants and assign green-taxonomy entries.
    Match,
    /// Aggregate assignments into monthly count and share matrices.
    Build,
    /// Score forecasting models on held-out rolling origins.
    Eval,
    /// Extend every series past the last observed month.
    Forecast,
    /// Assign growth quadrants and write rankings.
    Classify,
    /// Render the quadrant chart and the run summary.
    Report,
    /// Run match through report and verify the manifest chain.
    RunAll,
    /// Validate the configuration and print it resolved.
    CheckConfig,
}

fn load(cli: &Cli) -> Outcome<Ctx> {
    let mut cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(p) = &cli.records {
        cfg.inputs.records = Some(p.clone());
    }
    if let Some(p) = &cli.taxonomy {
        cfg.inputs.taxonomy = Some(p.clone());
    }
    if let Some(p) = &cli.totals {
        cfg.inputs.totals = Some(p.clone());
    }
    if let Command::Extract { postings: Some(p) } = &cli.command {
        cfg.inputs.postings = Some(p.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.matching.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(Ctx {
        out: cfg.output_dir.clone(),
        cfg,
        force: cli.force,
    })
}

fn run(cli: &Cli) -> Outcome {
    let ctx = load(cli)?;
    match cli.command {
        Command::Extract { .. } => stages::extract(&ctx),
        Command::Match => stages::match_stage(&ctx),
        Command::Build => stages::build(&ctx),
        Command::Eval => stages::eval(&ctx),
        Command::Forecast => stages::forecast(&ctx),
        Command::Classify => stages::classify_stage(&ctx),
        Command::Report => stages::report(&ctx),
        Command::RunAll => stages::run_all(&ctx),
        Command::CheckConfig => {
            print!("{}", toml::to_string_pretty(&ctx.cfg).expect("config serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
