use clap::{Args, Parser, Subcommand};
use crep::verify::{run_suite, Suite, VerifyOptions};
use crep_cli::{
    analyze, exit, parse_empirical, spec, tucker_table, AnalyzeOptions, CliError, EmpiricalRequest,
    ProblemSpec, TuckerOptions,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Condition numbers of constant-rank elimination problems.
#[derive(Parser)]
#[command(name = "crep", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Relative rank tolerance for every rank decision [default: max(rows, cols) * eps * 64]
    #[arg(long, env = "CREP_RTOL")]
    rtol: Option<f64>,
    /// Write the JSON report to this file, or to stdout with `-`
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a problem at its base point and compute its condition numbers
    Analyze {
        /// JSON problem spec
        spec: PathBuf,
        /// Seed for certificate samples and empirical estimates
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb-and-resolve estimate with N samples at the given input radius
        #[arg(long, value_name = "N:RADIUS", value_parser = parse_empirical)]
        empirical: Option<EmpiricalRequest>,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form Tucker condition numbers of a tensor's HOSVD
    Tucker {
        /// JSON tensor file: {"shape": [..], "data": [row-major entries]}
        tensor: PathBuf,
        /// Multilinear rank, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        ranks: Vec<usize>,
        /// Also report the core and the whole decomposition
        #[arg(long)]
        all_variables: bool,
        /// Compare every closed form with the general pipeline
        #[arg(long)]
        cross_validate: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance checks
    Verify {
        #[arg(long, default_value = "quick")]
        suite: Suite,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
        /// Write the check results as JSON to this file, or to stdout with `-`
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
}

fn emit<T: Serialize>(json: Option<&Path>, value: &T, text: &str) -> Result<(), CliError> {
    let stdout_json = json.is_some_and(|p| p == Path::new("-"));
    if !stdout_json {
        print!("{text}");
    }
    if let Some(path) = json {
        let body = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
        if stdout_json {
            print!("{body}");
        } else {
            std::fs::write(path, body).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze {
            spec: path,
            seed,
            empirical,
            common,
        } => {
            let problem = ProblemSpec::load(&path)?;
            let base_dir = path.parent().unwrap_or(Path::new("."));
            let opts = AnalyzeOptions {
                rtol: common.rtol,
                seed,
                empirical,
            };
            let report = analyze(&problem, base_dir, &opts)?;
            emit(common.json.as_deref(), &report, &report.summary())?;
            Ok(if report.passed() {
                exit::PASS
            } else {
                exit::CERTIFICATE_FAILED
            })
        }
        Command::Tucker {
            tensor,
            ranks,
            all_variables,
            cross_validate,
            common,
        } => {
            let t = spec::load_tensor(&tensor)?;
            let opts = TuckerOptions {
                rtol: common.rtol,
                all_variables,
                cross_validate,
            };
            let report = tucker_table(&t, &ranks, &opts)?;
            emit(common.json.as_deref(), &report, &report.table())?;
            Ok(if report.passed {
                exit::PASS
            } else {
                exit::ERROR
            })
        }
        Command::Verify {
            suite,
            seed,
            inject_fault,
            json,
        } => {
            let results = run_suite(&VerifyOptions {
                suite,
                seed,
                inject_fault,
            });
            let passed = results.iter().filter(|r| r.passed).count();
            let mut text: String = results.iter().map(|r| r.summary_line() + "\n").collect();
            text.push_str(&format!("{passed} of {} checks passed\n", results.len()));
            emit(json.as_deref(), &results, &text)?;
            Ok(if passed == results.len() {
                exit::PASS
            } else {
                exit::ERROR
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::ERROR as u8)
        }
    }
}
