use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irs_d2d_harness::{
    emit_config, emit_results, parse_config, parse_override, run_sweep, verify, ConfigDoc, HarnessError,
};

#[derive(Parser)]
#[command(name = "irs-d2d", version, about = "Two-timescale IRS-aided D2D underlay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration document (TOML); built-in defaults when omitted.
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any configuration key, e.g. `--set experiment.blocks=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the sweep described by a configuration.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory (defaults to `experiment.output`).
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, short = 'j', default_value_t = 0)]
        jobs: usize,
    },
    /// Parse and validate a configuration, printing its canonical form.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Check analytic phase gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Compare the solvers with brute-force references.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        realizations: usize,
        #[arg(long, default_value_t = 1_000_000)]
        candidates: usize,
        /// Noise floor (dBm) of the oracle scenario.
        #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
        noise_dbm: f64,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

fn load(common: &Common) -> Result<irs_d2d_harness::ExperimentSpec, HarnessError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?,
        None => emit_config(&ConfigDoc::default()),
    };
    let mut overrides = common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), toml::Value::Integer(seed as i64)));
    }
    parse_config(&text, &overrides)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Check(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { common, output, jobs } => {
            let spec = load(&common)?;
            let dir = output.unwrap_or_else(|| PathBuf::from(&spec.output));
            let rows = pool(jobs)?.install(|| run_sweep(&spec));
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            for p in emit_results(&spec, &rows, &dir)? {
                println!("wrote {}", p.display());
            }
            if failed > 0 {
                eprintln!("{failed} of {} rows failed; see the error column", rows.len());
                return Err(HarnessError::Core(irs_d2d::Error::Numerical(format!("{failed} sweep rows failed"))));
            }
            Ok(())
        }
        Command::Validate { common } => {
            let spec = load(&common)?;
            print!("{}", emit_config(&spec.doc));
            Ok(())
        }
        Command::Gradcheck { seed, points } => {
            let r = verify::gradcheck(points, seed);
            println!("{}", r.line());
            r.into_result().map(|_| ())
        }
        Command::Oracle {
            seed,
            realizations,
            candidates,
            noise_dbm,
            jobs,
        } => {
            let reports = pool(jobs)?.install(|| {
                vec![
                    verify::oracle(realizations, candidates, noise_dbm, seed),
                    verify::descent(500, seed),
                    verify::honesty(10_000, seed),
                ]
            });
            let mut ok = true;
            for r in &reports {
                println!("{}", r.line());
                ok &= r.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(HarnessError::Check("one or more oracle checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
