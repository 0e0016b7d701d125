use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qmeasure::experiments::{describe_experiments, run, ExperimentConfig, OutputFormat, ParamValue};

#[derive(Parser)]
#[command(name = "qmeasure", version, about = "Quantum measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List experiments with their parameters and defaults.
    List,
    /// Run one experiment and write its data series.
    Run(Box<RunArgs>),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment name (see `qmeasure list`).
    experiment: String,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Seed for randomized experiments.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    params: ParamArgs,
}

/// Experiment parameters. Each experiment accepts only the ones `list` shows for it.
#[derive(Args)]
#[command(next_help_heading = "Experiment parameters")]
struct ParamArgs {
    #[arg(long, allow_hyphen_values = true)]
    omega0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long = "theta-deg", allow_hyphen_values = true)]
    theta_deg: Option<String>,
    #[arg(long = "anomalous-theta-deg", allow_hyphen_values = true)]
    anomalous_theta_deg: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    strength: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long)]
    points: Option<String>,
    #[arg(long = "q-max", allow_hyphen_values = true)]
    q_max: Option<String>,
    #[arg(long = "tau-max", allow_hyphen_values = true)]
    tau_max: Option<String>,
    #[arg(long = "tau-step", allow_hyphen_values = true)]
    tau_step: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    step: Option<String>,
    #[arg(long = "total-time", allow_hyphen_values = true)]
    total_time: Option<String>,
    #[arg(long = "n-max")]
    n_max: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<String>,
    #[arg(long)]
    method: Option<String>,
}

impl ParamArgs {
    fn given(self) -> Vec<(&'static str, String)> {
        [
            ("omega0", self.omega0),
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
            ("tau", self.tau),
            ("theta-deg", self.theta_deg),
            ("anomalous-theta-deg", self.anomalous_theta_deg),
            ("delta", self.delta),
            ("strength", self.strength),
            ("trials", self.trials),
            ("sigma", self.sigma),
            ("b", self.b),
            ("points", self.points),
            ("q-max", self.q_max),
            ("tau-max", self.tau_max),
            ("tau-step", self.tau_step),
            ("step", self.step),
            ("total-time", self.total_time),
            ("n-max", self.n_max),
            ("t1", self.t1),
            ("dt", self.dt),
            ("method", self.method),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            let _ = io::stdout().lock().write_all(describe_experiments().as_bytes());
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let format = match args.format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
            let mut config = ExperimentConfig::new(&args.experiment, args.out).with_format(format);
            if let Some(seed) = args.seed {
                config = config.with_seed(seed);
            }
            for (name, value) in args.params.given() {
                config = config.with_param(name, ParamValue::Text(value));
            }
            match run(&config) {
                Ok(report) => {
                    // A closed stdout (e.g. piped into `head`) must not change the exit code.
                    let mut out = io::stdout().lock();
                    for check in &report.checks {
                        let _ = writeln!(out, "{check}");
                    }
                    for path in &report.artifacts {
                        let _ = writeln!(out, "wrote {}", path.display());
                    }
                    let _ = writeln!(
                        out,
                        "{} finished in {:.3} s",
                        report.experiment, report.wall_time
                    );
                    if report.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
