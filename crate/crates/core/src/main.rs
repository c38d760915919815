use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delay_bsvie::config::ExperimentConfig;
use delay_bsvie::error::{Error, Result};
use delay_bsvie::harness::{run, Command};
use delay_bsvie::par;

#[derive(Parser)]
#[command(name = "bsvie", version, about = "Linear BSVIEs with time-delayed generators")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output.dir` from the config, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Reduced kernel and its resolvent.
    Resolvent,
    /// Explicit solution, norms and residuals.
    Solve,
    /// Explicit solution against the independent oracles.
    Compare,
    /// Change-of-measure statistics.
    GirsanovCheck,
    /// Z surface and its smoothness in t.
    ZSurface,
    /// Weighted norms of the explicit solution.
    Norms,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Resolvent => Command::Resolvent,
            Cmd::Solve => Command::Solve,
            Cmd::Compare => Command::Compare,
            Cmd::GirsanovCheck => Command::GirsanovCheck,
            Cmd::ZSurface => Command::ZSurface,
            Cmd::Norms => Command::Norms,
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        par::set_workers(w).map_err(Error::Config)?;
    }
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let report = run(cli.command.into(), &cfg, &out)?;
    for line in &report.summary {
        println!("{line}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
