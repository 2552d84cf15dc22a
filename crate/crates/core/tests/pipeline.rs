use nalgebra::DMatrix;
use ngdim::bootstrap::{
    sequential_test, stationary_bootstrap, BootstrapConfig, ProjectionMode,
};
use ngdim::polyspectra::{target_at, ResidualDfts, SmoothingConfig, TargetOrder};
use ngdim::rank_test::WeightingScheme;
use ngdim::shocks::ShockDistribution;
use ngdim::varma::{fit_var, max_autocorrelation, rebuild_series, simulate_svarma, StructuralModel, VarOrder};
use ngdim::{Error, TimeSeriesMatrix};

fn mixed(d: usize) -> Vec<ShockDistribution> {
    let mut v = vec![ShockDistribution::Gaussian; d];
    v[0] = ShockDistribution::Exponential;
    v
}

#[test]
fn noncausal_residuals_are_nearly_white() {
    let model = StructuralModel::noncausal_svar1(mixed(2)).unwrap();
    let t = 1000;
    let seeds = 10;
    let mut total = 0.0;
    for s in 0..seeds {
        let y = simulate_svarma(&model, t, 300 + s).unwrap();
        let fit = fit_var(&y, VarOrder::default()).unwrap();
        total += max_autocorrelation(&fit.residuals, 5);
    }
    let avg = total / seeds as f64;
    assert!(avg < 3.0 / (t as f64).sqrt(), "average max autocorrelation {avg}");
}

#[test]
fn rebuilt_resample_refits_to_the_same_var() {
    let model = StructuralModel::causal_svar1(mixed(2)).unwrap();
    let y = simulate_svarma(&model, 2000, 8).unwrap();
    let fit = fit_var(&y, VarOrder::Fixed(1)).unwrap();
    let u = stationary_bootstrap(&fit.residuals, 0.1, 3).unwrap();
    let y_star = rebuild_series(&fit, &u, &fit.presample).unwrap();
    assert_eq!(y_star.len(), y.len());
    let refit = fit_var(&y_star, VarOrder::Fixed(1)).unwrap();
    let diff = (&refit.ar_hat.coefficients()[0] - &fit.ar_hat.coefficients()[0]).abs().max();
    assert!(diff < 0.15, "coefficient gap {diff}");
}

#[test]
fn target_spectrum_is_rotation_invariant() {
    let model = StructuralModel::causal_svar1(mixed(3)).unwrap();
    let y = simulate_svarma(&model, 600, 4).unwrap();
    let u = fit_var(&y, VarOrder::Fixed(1)).unwrap().residuals;
    let (c, s) = (0.6f64, 0.8f64);
    let q = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
        * DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c]);
    let rotated = TimeSeriesMatrix::new(u.as_matrix() * q.transpose());
    let cfg = SmoothingConfig::for_sample(u.len()).unwrap();
    for order in [TargetOrder::Three, TargetOrder::Four] {
        let a = target_at(&ResidualDfts::demeaned(&u, cfg.n_dft).unwrap(), order, 0.7, &cfg).unwrap();
        let b = target_at(&ResidualDfts::demeaned(&rotated, cfg.n_dft).unwrap(), order, 0.7, &cfg).unwrap();
        let (sa, sb) = (a.singular_values(), b.singular_values());
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-9 * sa[0], "{order:?}: {sa:?} vs {sb:?}");
        }
        assert!((&q * &a.values * q.transpose() - &b.values).abs().max() < 1e-9 * sa[0]);
    }
}

fn quick(seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        replications: 99,
        xi_replications: 60,
        seed,
        exhaustive: true,
        ..BootstrapConfig::default()
    }
}

#[test]
fn every_order_and_mode_runs() {
    let model = StructuralModel::causal_svar1(mixed(2)).unwrap();
    let y = simulate_svarma(&model, 400, 21).unwrap();
    for order in [TargetOrder::Three, TargetOrder::Four, TargetOrder::ThreeFour] {
        for mode in [ProjectionMode::Gaussian, ProjectionMode::Guay] {
            let cfg = BootstrapConfig { mode, ..quick(1) };
            let res = sequential_test(&y, order, &[0.0, 1.5], &cfg).unwrap();
            assert_eq!(res.steps.len(), 2);
            assert!(res.grid.contains(&res.steps[0].frequency));
            assert_eq!(res.order, order);
        }
    }
}

#[test]
fn weighting_alternatives() {
    let model = StructuralModel::causal_svar1(mixed(2)).unwrap();
    let y = simulate_svarma(&model, 400, 22).unwrap();
    for w in [WeightingScheme::PlugIn, WeightingScheme::Identity] {
        let cfg = BootstrapConfig { weighting: w, ..quick(2) };
        let res = sequential_test(&y, TargetOrder::Three, &[0.0], &cfg).unwrap();
        assert_eq!(res.steps[0].weighting, WeightingScheme::RestrictedBootstrap);
    }
    let cfg = BootstrapConfig { weighting: WeightingScheme::PlugIn, ..quick(2) };
    assert!(matches!(
        sequential_test(&y, TargetOrder::ThreeFour, &[0.0], &cfg),
        Err(Error::Config(_))
    ));
}

#[test]
fn sequential_rule_stops_at_first_acceptance() {
    let model = StructuralModel::causal_svar1(vec![ShockDistribution::Gaussian; 3]).unwrap();
    let y = simulate_svarma(&model, 300, 5).unwrap();
    let cfg = BootstrapConfig { exhaustive: false, ..quick(3) };
    let res = sequential_test(&y, TargetOrder::Three, &[0.0], &cfg).unwrap();
    let last = res.steps.last().unwrap();
    assert!(res.steps[..res.steps.len() - 1].iter().all(|s| s.rejected));
    if last.rejected {
        assert_eq!(res.estimated_rank, 3);
    } else {
        assert_eq!(res.estimated_rank, last.null_rank);
        assert_eq!(res.stopping_step, res.steps.len());
    }
}

#[test]
fn nonfinite_data_is_rejected() {
    let mut y = simulate_svarma(
        &StructuralModel::causal_svar1(mixed(2)).unwrap(),
        200,
        1,
    )
    .unwrap();
    y.as_matrix_mut()[(10, 1)] = f64::NAN;
    assert!(sequential_test(&y, TargetOrder::Three, &[0.0], &quick(1)).is_err());
}
