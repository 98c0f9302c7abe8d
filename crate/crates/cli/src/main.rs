//! `slm`: experiment recipes over `slm-core`, writing CSV artifacts plus a
//! JSON manifest per run.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Parser;

use commands::Command;
use config::Config;
use output::{RunDir, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "slm", version, about = "Bayes-optimal inference experiments for the standard linear model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Use the full-size defaults (N = 10000 where the desk default is smaller).
    #[arg(long, global = true)]
    full: bool,
    /// Print the command's keys with their defaults and exit.
    #[arg(long, global = true)]
    schema: bool,
    /// Validate the configuration, print it, and exit.
    #[arg(long, global = true)]
    dry_run: bool,
}

fn resolve(cli: &Cli) -> Result<(Config, commands::Plan)> {
    let schema = cli.command.schema();
    let mut cfg = Config::defaults(&schema, cli.full);
    if let Some(path) = &cli.config {
        cfg.apply_file(&schema, path)?;
    }
    if let Some(s) = cli.seed {
        cfg.apply_flag(&schema, "seed", s.to_string());
    }
    if let Some(t) = cli.trials {
        cfg.apply_flag(&schema, "trials", t.to_string());
    }
    if let Some(d) = &cli.out_dir {
        cfg.apply_flag(&schema, "out_dir", d.display().to_string());
    }
    if let Some(t) = cli.threads {
        cfg.apply_flag(&schema, "threads", t.to_string());
    }
    for s in &cli.sets {
        cfg.apply_set(&schema, s);
    }
    let plan = cli.command.plan(&mut cfg);
    cfg.usize("threads");
    cfg.finish()?;
    Ok((cfg, plan))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let name = cli.command.name();
    if cli.schema {
        for k in cli.command.schema() {
            let full = k.full.map(|f| format!(" (--full: {f})")).unwrap_or_default();
            println!("{:<18} {:<20} {}{}", k.name, k.default, k.doc, full);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let (mut cfg, plan) = resolve(&cli)?;
    let echo = cfg.echo();
    if cli.dry_run {
        for (k, v) in &echo {
            println!("{k} = {v}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let threads = cfg.usize("threads");
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }

    let mut dir = RunDir::create(&PathBuf::from(&echo["out_dir"]))?;
    let start = Instant::now();
    match plan(&mut dir) {
        Ok(summary) => {
            let manifest = RunManifest {
                command: name,
                version: env!("CARGO_PKG_VERSION"),
                rng: slm_core::rng::RNG_ALGORITHM,
                config: &echo,
                artifacts: &dir.artifacts,
                wall_clock_seconds: start.elapsed().as_secs_f64(),
                summary: &summary,
            };
            dir.manifest(&manifest)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("{name}: wrote {} to {}", dir.artifacts.join(", "), dir.dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            dir.fail(&e)?;
            Err(e.context(format!("{name} failed; see {}", dir.dir.join(output::FAILED).display())))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
