use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedldpc::app::{self, AppError};
use fedldpc::config::{ExperimentConfig, Overrides};
use fedldpc::validate::Suite;
use fedldpc::RayonExecutor;
use fedldpc_core::fl::Mode;

#[derive(Parser)]
#[command(
    name = "fedldpc",
    version,
    about = "Federated learning over an LDPC-coded downlink with per-round decoding budgets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure BER and mean iterations per (SNR, budget) cell and write the table.
    Calibrate(RunArgs),
    /// Run federated training and write per-round records and a summary.
    Train(RunArgs),
    /// Run a property suite and report each check.
    Validate {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(Suite::NAMES))]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Evaluate the convergence bound for the configured schedule.
    Bound(RunArgs),
    /// Write the configured parity-check matrix in alist format.
    ExportAlist(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces `run.mode`.
    #[arg(long)]
    mode: Option<ModeArg>,
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Replaces `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "physical")]
    Physical,
    #[value(name = "statistical")]
    Statistical,
    #[value(name = "error_free")]
    ErrorFree,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Physical => Mode::Physical,
            ModeArg::Statistical => Mode::Statistical,
            ModeArg::ErrorFree => Mode::ErrorFree,
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, RayonExecutor), AppError> {
        let overrides = Overrides { seed: self.seed, mode: self.mode.map(Mode::from), out: self.out.clone() };
        let cfg = ExperimentConfig::load(&self.config, &overrides)?;
        Ok((cfg, executor(self.threads)?))
    }
}

fn executor(threads: usize) -> Result<RayonExecutor, AppError> {
    RayonExecutor::new(threads).map_err(|e| AppError::runtime("exec", e))
}

fn run(cli: Cli) -> Result<bool, AppError> {
    match cli.command {
        Command::Calibrate(a) => {
            let (cfg, exec) = a.load()?;
            let dir = app::calibrate(&cfg, &exec)?;
            println!("wrote {}", dir.join(app::TABLE_FILE).display());
        }
        Command::Train(a) => {
            let (cfg, exec) = a.load()?;
            let out = app::train(&cfg, &exec)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let s = &out.result.summary;
            println!(
                "final_test_acc={:.4} total_iterations={:.1} decoding_energy_j={:.6e} wrote {}",
                s.final_test_acc,
                s.total_iterations,
                s.total_decoding_energy_j,
                out.dir.join(app::SUMMARY_FILE).display()
            );
        }
        Command::Validate { suite, seed, threads } => {
            let suite = Suite::parse(&suite).expect("clap restricts the suite names");
            let checks = app::validate(suite, seed, &executor(threads)?);
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
        Command::Bound(a) => {
            let (cfg, _) = a.load()?;
            let (dir, report) = app::bound(&cfg)?;
            println!(
                "bound={:.6e} lr_condition={} wrote {}",
                report.full.total,
                report.lr_condition,
                dir.join(app::BOUND_FILE).display()
            );
        }
        Command::ExportAlist(a) => {
            let (cfg, _) = a.load()?;
            println!("wrote {}", app::export_alist(&cfg)?.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
