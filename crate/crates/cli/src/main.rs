use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corrqec_core::experiments::{
    parse_config_text, recovery_check_csv, regime_map_csv, run_decay, run_optimize,
    run_probabilities, run_recovery_check, run_regime_map, run_scatter, run_tables,
    ExperimentConfig, ExperimentError,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Correlated-noise error-correction experiments. Results are written as CSV.
#[derive(Parser, Debug)]
#[command(name = "corrqec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Error-string probabilities over time, cross-checked for consistency.
    Probabilities(Common),
    /// Negativity and deviation of each code along a time grid.
    Decay(Common),
    /// Initial deviation and negativity rates over random code transformations.
    Scatter(Common),
    /// Regime inequality over a grid of two rates.
    RegimeMap(Common),
    /// Search for the encoding with the best objective value.
    Optimize(Common),
    /// Knill-Laflamme check of the parameterized three-qubit error set.
    RecoveryCheck(Common),
    /// Grouped probabilities at the reference time grids.
    Tables(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of physical qubits.
    #[arg(long, allow_negative_numbers = true)]
    n: Option<String>,
    /// Comma-separated rates, one per error weight.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// dephasing | bitflip
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated presets: repetition, rotated[k], anti4, random(seed).
    #[arg(long)]
    code: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    tmax: Option<String>,
    /// Number of time points, including t = 0.
    #[arg(long, allow_negative_numbers = true)]
    steps: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    samples: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    seed: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// haar | identity
    #[arg(long)]
    sampler: Option<String>,
    /// Comma-separated time list.
    #[arg(long, allow_hyphen_values = true)]
    times: Option<String>,
    /// Evaluation time of the negativity objective.
    #[arg(long, allow_negative_numbers = true)]
    tstar: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    restarts: Option<String>,
    /// negativity | delta-slope
    #[arg(long)]
    objective: Option<String>,
    #[arg(long = "max-evals", allow_negative_numbers = true)]
    max_evals: Option<String>,
    /// Two 1-based rate indices for the regime map.
    #[arg(long)]
    axes: Option<String>,
    /// min,max,points along each regime-map axis.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    qsteps: Option<String>,
}

impl Common {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        [
            ("n", &self.n),
            ("gamma", &self.gamma),
            ("kind", &self.kind),
            ("code", &self.code),
            ("tmax", &self.tmax),
            ("steps", &self.steps),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("out", &self.out),
            ("sampler", &self.sampler),
            ("times", &self.times),
            ("tstar", &self.tstar),
            ("restarts", &self.restarts),
            ("objective", &self.objective),
            ("max-evals", &self.max_evals),
            ("axes", &self.axes),
            ("grid", &self.grid),
            ("qsteps", &self.qsteps),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
        .collect()
    }

    fn resolve(&self) -> Result<ExperimentConfig, String> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            pairs = parse_config_text(&text).map_err(|e| e.to_string())?;
        }
        pairs.extend(
            self.flag_pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v)),
        );
        ExperimentConfig::from_pairs(pairs).map_err(|e| e.to_string())
    }
}

fn run(command: &Command, config: &ExperimentConfig) -> Result<String, ExperimentError> {
    Ok(match command {
        Command::Probabilities(_) => run_probabilities(config)?,
        Command::Decay(_) => run_decay(config)?.to_csv(config),
        Command::Scatter(_) => run_scatter(config)?.to_csv(config),
        Command::RegimeMap(_) => regime_map_csv(&run_regime_map(config)?, config),
        Command::Optimize(_) => run_optimize(config)?.to_csv(config),
        Command::RecoveryCheck(_) => recovery_check_csv(&run_recovery_check(config)?, config),
        Command::Tables(_) => run_tables(config)?.to_csv(config),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Probabilities(c)
        | Command::Decay(c)
        | Command::Scatter(c)
        | Command::RegimeMap(c)
        | Command::Optimize(c)
        | Command::RecoveryCheck(c)
        | Command::Tables(c) => c,
    };
    let config = match common.resolve() {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let csv = match run(&cli.command, &config) {
        Ok(csv) => csv,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                ExperimentError::Config(_) => EXIT_CONFIG,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => 1,
            };
            return ExitCode::from(code);
        }
    };
    match &config.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, csv) {
                eprintln!("error: cannot write {path}: {e}");
                return ExitCode::from(1);
            }
        }
        None => print!("{csv}"),
    }
    ExitCode::SUCCESS
}
