//! Smoothed bispectrum of VAR residuals and the target matrix at a few
//! frequencies.

use ngdim::polyspectra::{
    estimate_spectrum_with, target_at, FrequencyTuple, ResidualDfts, SmoothingConfig, TargetOrder,
};
use ngdim::shocks::ShockDistribution;
use ngdim::varma::{fit_var, simulate_svarma, StructuralModel, VarOrder};

fn main() -> ngdim::Result<()> {
    let model = StructuralModel::causal_svar1(vec![
        ShockDistribution::Exponential,
        ShockDistribution::Gaussian,
    ])?;
    let y = simulate_svarma(&model, 2000, 3)?;
    let u = fit_var(&y, VarOrder::Fixed(1))?.residuals;

    let cfg = SmoothingConfig::for_sample(u.len())?;
    let dfts = ResidualDfts::demeaned(&u, cfg.n_dft)?;
    println!(
        "n_dft = {}, span = {}, bandwidth = {:.3}",
        cfg.n_dft,
        cfg.span,
        cfg.bandwidth()
    );

    let tuple = FrequencyTuple::for_target(3, cfg.n_dft, 0.0)?;
    let g = estimate_spectrum_with(&dfts, &tuple, &cfg)?;
    println!("third-order spectrum at lambda = 0 (d^2 x d):{:.4}", g.values);

    for lambda in [0.0, 1.0, 2.0] {
        let pi = target_at(&dfts, TargetOrder::Three, lambda, &cfg)?;
        let sv = pi.singular_values();
        println!(
            "lambda = {lambda:.1}: singular values of the target {}, rank at 0.1 = {}",
            sv.iter().map(|s| format!("{s:.3e}")).collect::<Vec<_>>().join(", "),
            pi.numerical_rank(0.1)
        );
    }
    Ok(())
}
