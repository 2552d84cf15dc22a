//! Simulates the causal and non-causal default designs and checks the
//! residuals of a fitted VAR.

use ngdim::shocks::ShockDistribution;
use ngdim::varma::{fit_var, max_autocorrelation, simulate_svarma, StructuralModel, VarOrder};

fn main() -> ngdim::Result<()> {
    let shocks = vec![ShockDistribution::Exponential, ShockDistribution::Gaussian];
    for (name, model) in [
        ("causal", StructuralModel::causal_svar1(shocks.clone())?),
        ("non-causal", StructuralModel::noncausal_svar1(shocks)?),
    ] {
        let y = simulate_svarma(&model, 1000, 42)?;
        let fit = fit_var(&y, VarOrder::default())?;
        println!(
            "{name:>10}: T = {}, AR spectral radius {:.3}, VAR({}) chosen, max residual autocorrelation (lags 1-5) {:.3}",
            y.len(),
            model.ar.spectral_radius(),
            fit.order_p,
            max_autocorrelation(&fit.residuals, 5)
        );
    }
    Ok(())
}
