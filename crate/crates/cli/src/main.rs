use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cnc_core::harness::{self, verify, ExperimentConfig};
use cnc_core::optimizers::Method;
use cnc_core::Execution;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cnc", version, about = "Saddle-escaping experiments and bound checks")]
struct Cli {
    /// Run everything on the current thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method x seed experiment grid.
    Run(ConfigArgs),
    /// Measure projected stochastic-gradient moments against isotropic noise.
    Measure(ConfigArgs),
    /// Run the bound-checking property suites.
    Verify {
        /// Suite to run (repeatable); all suites when omitted.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset, e.g. halfspaces-appendix-e.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds as a list and/or ranges: `0,3,7`, `0..10`, `0..=9`.
    #[arg(long)]
    seeds: Option<String>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(a.trim().parse::<u64>()?..=b.trim().parse::<u64>()?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(a.trim().parse::<u64>()?..b.trim().parse::<u64>()?);
        } else {
            out.push(part.parse().with_context(|| format!("invalid seed {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("no seeds in {s:?}");
    }
    Ok(out)
}

fn load(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), preset) => {
            let mut text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if let Some(p) = preset {
                text = format!("preset = {p:?}\n{text}");
            }
            harness::parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(p)) => harness::preset_config(p)?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    if let Some(s) = &args.seeds {
        cfg = cfg.with_seeds(parse_seeds(s)?)?;
    }
    if let Some(out) = &args.out {
        cfg = cfg.with_output_dir(&out.to_string_lossy())?;
    }
    let dir = PathBuf::from(&cfg.output_dir);
    Ok((cfg, dir))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Run(args) => {
            let (cfg, dir) = load(&args)?;
            let out = harness::run_experiment(&cfg, &dir, exec)?;
            let grid = &out.grid;
            println!("wrote {} files to {}", out.files.len(), dir.display());
            println!("f_best = {:.6}, data resamples = {}", grid.f_best, grid.prepared.resamples);
            for spec in &cfg.methods {
                let m: Method = spec.method();
                let failed = grid.rows_for(m).filter(|r| r.status != "ok").count();
                println!(
                    "{:<8} median escape = {:>8}  escaped {}/{}  failed {}",
                    m.tag(),
                    grid.median_escape(m),
                    grid.escape_count(m),
                    cfg.seeds.len(),
                    failed
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Measure(args) => {
            let (cfg, dir) = load(&args)?;
            let (table, path) = harness::run_cnc_measurement(&cfg, &dir, exec)?;
            println!("wrote {}", path.display());
            for b in &table.blocks {
                println!(
                    "{}={:<4} dim={:<4} lambda_min={:+.4e} mu={:.4e} mu_normalized={:.4e} isotropic={:.4e}",
                    table.family.tag(),
                    b.family_value,
                    b.dim,
                    b.estimate.records[0].lambda,
                    b.estimate.records[0].mu,
                    b.estimate.records[0].mu_normalized,
                    b.isotropic[0]
                );
            }
            if let Some(s) = table.slope_isotropic {
                println!("isotropic slope = {s:.4}");
            }
            if let Some(s) = table.slope_cnc {
                println!("normalized stochastic-gradient slope = {s:.4}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suites } => {
            let known: Vec<&str> = verify::SUITES.iter().map(|(n, _)| *n).collect();
            for s in &suites {
                if !known.contains(&s.as_str()) {
                    bail!("unknown suite {s:?}; known suites: {}", known.join(", "));
                }
            }
            let reports = verify::run_suites(&suites, exec);
            for r in &reports {
                println!("{r}");
            }
            Ok(if reports.iter().all(|r| r.passed()) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
