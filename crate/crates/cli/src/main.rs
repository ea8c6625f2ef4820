use std::path::PathBuf;
use std::process::ExitCode;

use adaptbf_cli::commands::{cmd_bench, cmd_builtin, cmd_run, RunArgs};
use adaptbf_cli::CliError;
use adaptbf_core::scenario::ControlMode;
use clap::{Args, Parser, Subcommand};

/// Adaptive token-bucket bandwidth control, simulated.
#[derive(Parser)]
#[command(name = "adaptbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Compare against this summary.csv.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Write a builtin scenario to disk and simulate it (sc1, sc2, sc3, sc4-freq).
    Builtin {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Time the allocator on random active sets.
    Bench {
        /// Active jobs per step.
        #[arg(long)]
        jobs: usize,
        /// Steps to time, each on fresh random inputs.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail when the mean step takes longer than this.
        #[arg(long)]
        assert_budget_us: Option<u64>,
    },
}

#[derive(Args)]
struct RunOpts {
    /// adaptbf, static or nobw; overrides the scenario.
    #[arg(long)]
    mode: Option<ControlMode>,
    /// Controller interval; also disables a sweep.
    #[arg(long)]
    interval_ms: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where CSV results go.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write summary.json.
    #[arg(long)]
    json: bool,
    /// Independent storage targets to simulate side by side.
    #[arg(long, default_value_t = 1)]
    parallel_osts: usize,
}

impl RunOpts {
    fn into_args(self, baseline: Option<PathBuf>) -> RunArgs {
        RunArgs {
            mode: self.mode,
            interval_ms: self.interval_ms,
            seed: self.seed,
            out_dir: self.out_dir,
            baseline,
            json: self.json,
            parallel_osts: self.parallel_osts,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            let err = CliError::usage(line.trim_start_matches("error: "));
            eprintln!("{err}");
            return ExitCode::from(err.code.exit_code() as u8);
        }
    };
    let outcome = match cli.command {
        Command::Run {
            file,
            opts,
            baseline,
        } => cmd_run(&file, &opts.into_args(baseline)),
        Command::Builtin { name, opts } => cmd_builtin(&name, &opts.into_args(None)),
        Command::Bench {
            jobs,
            trials,
            seed,
            assert_budget_us,
        } => cmd_bench(jobs, trials, seed, assert_budget_us),
    };
    match outcome {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.code.exit_code() as u8)
        }
    }
}
