use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qvec::SelectorKind;
use qvec_cli::experiment::{run_experiment, solve_command};
use qvec_cli::{parse_config, selftest, CliError, Overrides, RunConfig};

/// Multi-agent deep Q-learning with Max, Nash and Maximin selection.
#[derive(Debug, Parser)]
#[command(name = "qvec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train seeded repetitions and write run logs, the oracle and a summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Solve the configured environment exactly for every selector.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, Args)]
struct OverrideArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; run k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Selector override.
    #[arg(long)]
    selector: Option<SelectorKind>,
}

impl OverrideArgs {
    fn load(self, config: &Path) -> Result<RunConfig, CliError> {
        let mut cfg = parse_config(config)?;
        cfg.apply(&Overrides {
            output: self.out,
            seed: self.seed,
            repetitions: self.reps,
            selector: self.selector,
        });
        Ok(cfg)
    }
}

fn run(config: PathBuf, overrides: OverrideArgs) -> Result<(), CliError> {
    let cfg = overrides.load(&config)?;
    println!(
        "{}: {} runs on {} (selector {}, gamma {}, {} episodes) -> {}",
        cfg.name,
        cfg.repetitions,
        cfg.environment.kind(),
        cfg.trainer.selector,
        cfg.trainer.gamma,
        cfg.trainer.episodes,
        cfg.output.display()
    );
    let report = run_experiment(&cfg)?;
    for r in &report.runs {
        match &r.outcome {
            Ok(res) => println!(
                "run {} seed {}: first action {} {} final {} returns {:?}",
                r.run_id,
                r.seed,
                res.greedy_action,
                if res.matches_oracle {
                    "MATCH"
                } else {
                    "MISMATCH"
                },
                res.final_state,
                res.returns
            ),
            Err(diag) => println!("run {} seed {}: aborted: {diag}", r.run_id, r.seed),
        }
    }
    println!(
        "{}/{} runs match the oracle set {}",
        report.matches(),
        report.runs.len(),
        qvec::oracle::format_set(&report.oracle.initial().optimal)
    );
    report.status()
}

fn solve(config: PathBuf, overrides: OverrideArgs) -> Result<(), CliError> {
    let cfg = overrides.load(&config)?;
    let report = solve_command(&cfg)?;
    for s in &report.solutions {
        let init = s.initial();
        println!(
            "{}: {} sweeps, residual {:.1e}, initial action {} set {}",
            s.selector,
            s.iterations,
            s.residual,
            init.action,
            qvec::oracle::format_set(&init.optimal)
        );
    }
    println!("wrote {}", report.output.display());
    Ok(())
}

fn selftest_command() -> Result<(), CliError> {
    let checks = selftest::run_all();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::RunFailure(format!("{failed} self-checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Solve { config, overrides } => solve(config, overrides),
        Command::Selftest => selftest_command(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
