//! Stationary-bootstrap resampling and a null-restricted draw.

use ngdim::bootstrap::{
    default_block_prob, null_projection, stationary_bootstrap, ProjectionMode,
};
use ngdim::polyspectra::{target_at, ResidualDfts, SmoothingConfig, TargetOrder};
use ngdim::rank_test::svd_split;
use ngdim::shocks::ShockDistribution;
use ngdim::varma::{fit_var, simulate_svarma, StructuralModel, VarOrder};
use ngdim::rng;

fn main() -> ngdim::Result<()> {
    let model = StructuralModel::causal_svar1(vec![
        ShockDistribution::Exponential,
        ShockDistribution::Gaussian,
    ])?;
    let y = simulate_svarma(&model, 500, 5)?;
    let fit = fit_var(&y, VarOrder::default())?;
    let p = default_block_prob(fit.residuals.len());
    let resample = stationary_bootstrap(&fit.residuals, p, 1)?;
    println!("block restart probability {p:.3}; resample covariance:{:.3}", resample.covariance());

    let cfg = SmoothingConfig::for_sample(fit.residuals.len())?;
    let dfts = ResidualDfts::demeaned(&fit.residuals, cfg.n_dft)?;
    let pi = target_at(&dfts, TargetOrder::Three, 0.0, &cfg)?;
    let split = svd_split(&pi.values, 1)?;
    for mode in [ProjectionMode::Gaussian, ProjectionMode::Guay] {
        let proj = null_projection(&fit.sigma_u, &split.r2, 1, mode)?;
        let draw = proj.apply(&resample, &mut rng::stream(2, &[]));
        println!("{mode} projection for rank 1:{:.3}draw covariance:{:.3}", proj.keep, draw.covariance());
    }
    Ok(())
}
