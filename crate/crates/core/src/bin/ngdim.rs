use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ngdim::bootstrap::ProjectionMode;
use ngdim::harness::{
    cmd_estimate, cmd_montecarlo, cmd_simulate, Command, GridSpec, RunConfig, Scenario,
};
use ngdim::polyspectra::TargetOrder;
use ngdim::varma::{ModelDescriptor, VarOrder};
use ngdim::Error;

#[derive(Parser)]
#[command(name = "ngdim", version, about = "Estimate the non-Gaussian dimension of SVARMA shocks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the sequential test on a CSV of observations.
    Estimate(Common),
    /// Simulate a model to CSV.
    Simulate(Common),
    /// Rejection-rate tables over simulated scenarios.
    Montecarlo(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "3")]
    order: TargetOrder,
    /// Single frequency in [0, pi].
    #[arg(long, conflicts_with = "grid")]
    freq: Option<f64>,
    /// Number of evenly spaced frequencies on [0, pi].
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 199)]
    boot: usize,
    #[arg(long, default_value_t = 100)]
    mc: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    block_prob: Option<f64>,
    /// Projection mode; repeat to compare modes in montecarlo.
    #[arg(long, default_values_t = vec![ProjectionMode::Gaussian])]
    mode: Vec<ProjectionMode>,
    /// `auto` or a fixed lag order.
    #[arg(long, default_value = "auto")]
    var_order: String,
    #[arg(long)]
    workers: Option<usize>,
    /// Sample size for simulate and montecarlo.
    #[arg(long, default_value_t = 250)]
    t: usize,
    /// Dimension of the built-in scenarios.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Built-in scenario (gaussian, mixed, mixed-mn1, full, noncausal); repeatable.
    #[arg(long)]
    scenario: Vec<String>,
    /// JSON model descriptor, used instead of a built-in scenario.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test every null instead of stopping at the first non-rejection.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long)]
    quiet: bool,
}

fn build(command: Command, a: Common) -> ngdim::Result<RunConfig> {
    let mut c = RunConfig::new(command);
    c.input = a.input;
    c.output = a.output;
    c.order = a.order;
    c.grid = match (a.freq, a.grid) {
        (_, Some(n)) => GridSpec::Points(n),
        (Some(l), None) => GridSpec::Single(l),
        (None, None) => GridSpec::Single(0.0),
    };
    c.sample_size = a.t;
    c.mc_reps = a.mc;
    c.workers = a.workers;
    c.progress = !a.quiet;
    c.modes = a.mode.clone();
    let b = &mut c.bootstrap;
    b.replications = a.boot;
    b.alpha = a.alpha;
    b.seed = a.seed;
    b.block_prob = a.block_prob;
    b.mode = a.mode[0];
    b.exhaustive |= a.exhaustive;
    b.var_order = match a.var_order.as_str() {
        "auto" => VarOrder::default(),
        p => VarOrder::Fixed(p.parse().map_err(|_| {
            Error::Validation(format!("--var-order must be auto or an integer, got {p:?}"))
        })?),
    };
    if let Some(path) = a.model {
        let text = std::fs::read_to_string(&path)?;
        let model: ModelDescriptor = serde_json::from_str(&text)?;
        c.scenarios.push(Scenario {
            name: path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned()),
            model,
        });
    }
    let names = if a.scenario.is_empty() && c.scenarios.is_empty() {
        match command {
            Command::Montecarlo => vec!["gaussian".into(), "mixed".into(), "full".into()],
            _ => vec!["gaussian".into()],
        }
    } else {
        a.scenario
    };
    for n in names {
        c.scenarios.push(Scenario::preset(&n, a.dim)?);
    }
    Ok(c)
}

fn run(cli: Cli) -> ngdim::Result<()> {
    match cli.command {
        Cmd::Estimate(a) => {
            let report = cmd_estimate(&build(Command::Estimate, a)?)?;
            print!("{}", report.to_text());
        }
        Cmd::Simulate(a) => {
            let c = build(Command::Simulate, a)?;
            let data = cmd_simulate(&c)?;
            if c.output.is_none() {
                let headers: Vec<String> = (1..=data.dim()).map(|j| format!("y{j}")).collect();
                ngdim::harness::write_csv(std::io::stdout().lock(), &headers, &data)?;
            }
        }
        Cmd::Montecarlo(a) => {
            let table = cmd_montecarlo(&build(Command::Montecarlo, a)?)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
