//! Small rejection-rate table for the Gaussian and mixed designs in both
//! projection modes. Pass a number to change the replication count.

use ngdim::bootstrap::ProjectionMode;
use ngdim::harness::{cmd_montecarlo, Command, RunConfig, Scenario};

fn main() -> ngdim::Result<()> {
    let m = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let mut cfg = RunConfig::new(Command::Montecarlo);
    cfg.mc_reps = m;
    cfg.scenarios = vec![Scenario::preset("gaussian", 2)?, Scenario::preset("mixed", 2)?];
    cfg.modes = vec![ProjectionMode::Gaussian, ProjectionMode::Guay];
    cfg.bootstrap.seed = 2024;
    let table = cmd_montecarlo(&cfg)?;
    print!("{}", table.to_text());
    Ok(())
}
