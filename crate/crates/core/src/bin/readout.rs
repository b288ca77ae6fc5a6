//! Command-line front end. Exit codes: 0 success, 1 configuration error,
//! 2 runtime error, 3 failed `--check`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use register_readout::harness::{
    all_passed, cmd_bounds, cmd_run, cmd_sweep, cmd_verify_identities, write_report, Check,
    ExperimentConfig,
};
use register_readout::ReadoutError;

#[derive(Parser)]
#[command(name = "readout", version, about = "Continuous-measurement register readout experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one ensemble and write curves, first passages and a summary.
    Run(RunArgs),
    /// Asymptotic speed-up against register size for one or more policies.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated register sizes.
        #[arg(long = "n-values")]
        n_values: Option<String>,
        /// Comma-separated policy names.
        #[arg(long)]
        policies: Option<String>,
        /// Allow registers larger than 5 qubits.
        #[arg(long)]
        unsafe_large_n: bool,
    },
    /// Analytic speed-up bounds.
    Bounds {
        #[arg(long, default_value_t = 1)]
        n_min: usize,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Exact permutation-group sum identities by enumeration.
    VerifyIdentities {
        /// Comma-separated dimensions.
        #[arg(long, default_value = "4,8")]
        dims: String,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    max_time: Option<String>,
    #[arg(long)]
    curve_time: Option<String>,
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    cycle_file: Option<String>,
    /// `default`, `grid FIRST LAST PER_DECADE`, or a comma-separated list.
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long)]
    count: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Exit with code 3 unless the acceptance checks pass.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also write the report as JSON into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, ReadoutError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("n", &self.n),
            ("gamma", &self.gamma),
            ("dt", &self.dt),
            ("max_time", &self.max_time),
            ("curve_time", &self.curve_time),
            ("integrator", &self.integrator),
            ("policy", &self.policy),
            ("cycle_file", &self.cycle_file),
            ("epsilons", &self.epsilons),
            ("count", &self.count),
            ("seed", &self.seed),
            ("out", &self.out),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                config.apply_override(key, v)?;
            }
        }
        Ok(config)
    }
}

fn report_checks(checks: &[Check]) -> bool {
    for c in checks {
        eprintln!("{c}");
    }
    all_passed(checks)
}

fn emit<T: serde::Serialize>(
    args: &ReportArgs,
    name: &str,
    value: &T,
    text: String,
) -> Result<(), ReadoutError> {
    match args.format {
        Format::Text => print!("{text}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(value)?),
    }
    if let Some(out) = &args.out {
        write_report(out, name, value)?;
    }
    Ok(())
}

/// Returns whether `--check` (if requested) passed.
fn execute(cli: Cli) -> Result<bool, ReadoutError> {
    match cli.command {
        Command::Run(args) => {
            let config = args.config()?;
            let outcome = cmd_run(&config)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            Ok(!args.check || report_checks(&outcome.checks))
        }
        Command::Sweep {
            run,
            n_values,
            policies,
            unsafe_large_n,
        } => {
            let mut config = run.config()?;
            if let Some(v) = n_values {
                config.apply_override("n_values", &v)?;
            }
            if let Some(v) = policies {
                config.apply_override("policies", &v)?;
            }
            let outcome = cmd_sweep(&config, unsafe_large_n)?;
            println!("policy,n,speedup,stderr,bound_lo,bound_hi");
            for sweep in &outcome.report.sweeps {
                for p in &sweep.points {
                    let (lo, hi) = p
                        .bounds
                        .map_or((String::new(), String::new()), |b| (b.lower.to_string(), b.upper.to_string()));
                    println!("{},{},{:.4},{:.4},{lo},{hi}", sweep.policy, p.n, p.speedup.value, p.speedup.stderr);
                }
                if let Some(fit) = &sweep.fit {
                    println!(
                        "# {}: speed-up = {:.4}(±{:.4}) n + {:.4}(±{:.4})",
                        sweep.policy, fit.slope, fit.slope_stderr, fit.intercept, fit.intercept_stderr
                    );
                }
            }
            Ok(!run.check || report_checks(&outcome.checks))
        }
        Command::Bounds { n_min, n_max, report } => {
            let ns: Vec<usize> = (n_min..=n_max).collect();
            let bounds = cmd_bounds(&ns)?;
            emit(&report, "bounds.json", &bounds, bounds.render_text())?;
            Ok(!report.check || report_checks(&bounds.checks()))
        }
        Command::VerifyIdentities { dims, report } => {
            let dims: Vec<usize> = dims
                .split(',')
                .map(|d| {
                    d.trim().parse().map_err(|_| {
                        ReadoutError::InvalidParams(format!("--dims: '{d}' is not an integer"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let result = cmd_verify_identities(&dims)?;
            emit(&report, "identities.json", &result, result.render_text())?;
            Ok(!report.check || report_checks(&result.checks()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // bad flags are configuration errors; --help and --version are not
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
