//! Stationary bootstrap, null-restricted resampling and the sequential test
//! for the non-Gaussian dimension.
//!
//! Every replicate draws from its own stream derived from the root seed and
//! the replicate's position (step, replicate index, retry), so results do
//! not depend on how rayon schedules the work.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::polyspectra::{
    plug_in_covariance, target_at, FrequencyTuple, ResidualDfts, SmoothingConfig, SpanRule,
    TargetMatrix, TargetOrder, WindowOverlaps,
};
use crate::rank_test::{
    estimate_xi, kp_first_step, kp_statistic, svd_split, KpStatistic, SvdSplit, WeightingScheme,
};
use crate::rng;
use crate::series::TimeSeriesMatrix;
use crate::varma::{fit_var, rebuild_series, ReducedFormFit, VarOrder};

/// Retries allowed for a failed replicate before the step is aborted.
pub const MAX_RETRIES: usize = 5;
/// Smallest sample accepted by [`sequential_test`].
pub const MIN_SAMPLE: usize = 100;

const TAG_RESTRICTED: u64 = 1;
const TAG_XI: u64 = 2;

/// How the Gaussian part of the residuals is replaced under the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// `u* = M_r u~ + S^{1/2} R_{2,r} eta` with `M_r = I - S^{1/2} R_{2,r}
    /// R_{2,r}' S^{-1/2}` and `S` the residual covariance.
    Gaussian,
    /// Keeps the projection of `u~` on the first `r` singular vectors and
    /// fills the remaining `d - r` directions with standard normal draws.
    Guay,
}

impl std::str::FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(ProjectionMode::Gaussian),
            "guay" => Ok(ProjectionMode::Guay),
            other => Err(Error::Validation(format!(
                "mode must be gaussian or guay, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProjectionMode::Gaussian => "gaussian",
            ProjectionMode::Guay => "guay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Restricted replicates per step (`B`).
    pub replications: usize,
    /// Restart probability; `None` uses `1 / ceil(T^{1/3})`.
    pub block_prob: Option<f64>,
    pub alpha: f64,
    pub mode: ProjectionMode,
    pub seed: u64,
    /// Re-estimate the VAR on every rebuilt series.
    pub refit: bool,
    /// Test every null `r = 0..d-1` even after a non-rejection.
    pub exhaustive: bool,
    /// Weighting for steps after the first.
    pub weighting: WeightingScheme,
    /// Unrestricted replicates used to estimate the weighting covariance.
    pub xi_replications: usize,
    pub var_order: VarOrder,
    pub span_rule: SpanRule,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 199,
            block_prob: None,
            alpha: 0.05,
            mode: ProjectionMode::Gaussian,
            seed: 0,
            refit: true,
            exhaustive: false,
            weighting: WeightingScheme::Bootstrap,
            xi_replications: 199,
            var_order: VarOrder::default(),
            span_rule: SpanRule::Quarter,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 99 {
            return Err(Error::Validation(format!(
                "at least 99 bootstrap replications are required, got {}",
                self.replications
            )));
        }
        if let Some(p) = self.block_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Validation(format!(
                    "block restart probability must be in (0, 1], got {p}"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.weighting == WeightingScheme::Bootstrap && self.xi_replications < 50 {
            return Err(Error::Validation(format!(
                "at least 50 replicates are needed for the weighting covariance, got {}",
                self.xi_replications
            )));
        }
        Ok(())
    }

    pub fn block_prob_for(&self, t: usize) -> f64 {
        self.block_prob.unwrap_or_else(|| default_block_prob(t))
    }
}

/// `1 / ceil(T^{1/3})`.
pub fn default_block_prob(t: usize) -> f64 {
    1.0 / (t as f64).cbrt().ceil().max(1.0)
}

/// Blocks `(start, length)` of a stationary-bootstrap draw covering `t` rows.
/// Lengths are geometric with mean `1 / p`; the last block is truncated.
pub fn stationary_blocks<R: Rng + ?Sized>(t: usize, p: f64, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Validation(format!(
            "block restart probability must be in (0, 1], got {p}"
        )));
    }
    if t == 0 {
        return Ok(Vec::new());
    }
    let geom = Geometric::new(p).map_err(|e| Error::Validation(e.to_string()))?;
    let mut blocks = Vec::new();
    let mut filled = 0;
    while filled < t {
        let start = rng.random_range(0..t);
        let len = (geom.sample(rng) as usize).saturating_add(1).min(t - filled);
        blocks.push((start, len));
        filled += len;
    }
    Ok(blocks)
}

/// Row indices of a stationary-bootstrap draw, wrapping circularly.
pub fn stationary_indices<R: Rng + ?Sized>(t: usize, p: f64, rng: &mut R) -> Result<Vec<usize>> {
    Ok(stationary_blocks(t, p, rng)?
        .into_iter()
        .flat_map(|(start, len)| (0..len).map(move |i| (start + i) % t))
        .collect())
}

pub fn stationary_bootstrap_with<R: Rng + ?Sized>(
    residuals: &TimeSeriesMatrix,
    p: f64,
    rng: &mut R,
) -> Result<TimeSeriesMatrix> {
    let idx = stationary_indices(residuals.len(), p, rng)?;
    Ok(residuals.select_rows(&idx))
}

/// Stationary bootstrap resample of the rows of `residuals`.
pub fn stationary_bootstrap(residuals: &TimeSeriesMatrix, p: f64, seed: u64) -> Result<TimeSeriesMatrix> {
    stationary_bootstrap_with(residuals, p, &mut rng::stream(seed, &[]))
}

/// The linear maps of a null-restricted draw: `u* = keep u~ + load eta`.
#[derive(Debug, Clone)]
pub struct NullProjection {
    pub mode: ProjectionMode,
    pub null_rank: usize,
    /// `M_r` in Gaussian mode, `R_{1,r} R_{1,r}'` in Guay mode.
    pub keep: DMatrix<f64>,
    /// `d x (d - r)` loading of the Gaussian draws.
    pub load: DMatrix<f64>,
}

/// Builds the projection for null rank `r` from the right singular basis
/// `r2` (`d x d`) of the target and the residual covariance.
pub fn null_projection(
    sigma_u: &DMatrix<f64>,
    r2: &DMatrix<f64>,
    r: usize,
    mode: ProjectionMode,
) -> Result<NullProjection> {
    let d = sigma_u.nrows();
    if r2.shape() != (d, d) {
        return Err(Error::Shape(format!(
            "singular basis is {:?}, expected {d}x{d}",
            r2.shape()
        )));
    }
    if r >= d {
        return Err(Error::Hypothesis(format!("null rank {r} must be below {d}")));
    }
    let head = r2.columns(0, r).into_owned();
    let tail = r2.columns(r, d - r).into_owned();
    let (keep, load) = match mode {
        ProjectionMode::Gaussian => {
            let (root, inv_root) = linalg::sym_sqrt_and_inv(sigma_u)?;
            let load = &root * &tail;
            let keep = DMatrix::identity(d, d) - &load * tail.transpose() * inv_root;
            (keep, load)
        }
        ProjectionMode::Guay => {
            // still require a usable covariance, as in Gaussian mode
            linalg::sym_sqrt_and_inv(sigma_u)?;
            (&head * head.transpose(), tail)
        }
    };
    Ok(NullProjection {
        mode,
        null_rank: r,
        keep,
        load,
    })
}

impl NullProjection {
    /// Applies the projection to `u_tilde`, drawing `eta` from `rng`.
    pub fn apply<R: Rng + ?Sized>(&self, u_tilde: &TimeSeriesMatrix, rng: &mut R) -> TimeSeriesMatrix {
        let (t, q) = (u_tilde.len(), self.load.ncols());
        let eta = DMatrix::<f64>::from_fn(t, q, |_, _| StandardNormal.sample(rng));
        let out = u_tilde.as_matrix() * self.keep.transpose() + eta * self.load.transpose();
        TimeSeriesMatrix::new(out)
    }
}

/// Restricted residual draw `u*` for null rank `r_s`.
pub fn restricted_residuals<R: Rng + ?Sized>(
    fit: &ReducedFormFit,
    split: &SvdSplit,
    r_s: usize,
    mode: ProjectionMode,
    block_prob: f64,
    rng: &mut R,
) -> Result<TimeSeriesMatrix> {
    let proj = null_projection(&fit.sigma_u, &split.r2, r_s, mode)?;
    let u_tilde = stationary_bootstrap_with(&fit.residuals, block_prob, rng)?;
    Ok(proj.apply(&u_tilde, rng))
}

/// Restricted observable draw `y*`, rebuilt through the fitted VAR.
pub fn restricted_resample<R: Rng + ?Sized>(
    fit: &ReducedFormFit,
    split: &SvdSplit,
    r_s: usize,
    config: &BootstrapConfig,
    rng: &mut R,
) -> Result<TimeSeriesMatrix> {
    let p = config.block_prob_for(fit.residuals.len());
    let u_star = restricted_residuals(fit, split, r_s, config.mode, p, rng)?;
    rebuild_series(fit, &u_star, &fit.presample)
}

/// Outcome of one null hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub null_rank: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
    /// Grid frequency attaining the maximum statistic.
    pub frequency: f64,
    pub dof: usize,
    pub weighting: WeightingScheme,
    pub singular_values: Vec<f64>,
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResult {
    pub estimated_rank: usize,
    pub steps: Vec<StepResult>,
    /// One-based step at which the sequential rule stopped.
    pub stopping_step: usize,
    pub order: TargetOrder,
    pub grid: Vec<f64>,
    pub dim: usize,
    pub sample_size: usize,
    pub var_order: usize,
    pub var_order_fallback: bool,
    pub smoothing: SmoothingConfig,
    pub bandwidth: f64,
    pub rate: f64,
    pub block_prob: f64,
    pub replications: usize,
    pub alpha: f64,
    pub mode: ProjectionMode,
    pub seed: u64,
    pub refit: bool,
}

impl SequentialResult {
    /// Rejection indicator of null rank `r`, if that null was tested.
    pub fn rejected(&self, r: usize) -> Option<bool> {
        self.steps.iter().find(|s| s.null_rank == r).map(|s| s.rejected)
    }
}

/// `(1 + #{KP* >= KP}) / (1 + B)`.
pub fn bootstrap_p_value(statistic: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&v| v >= statistic).count();
    (1 + exceed) as f64 / (1 + replicates.len()) as f64
}

struct Context<'a> {
    fit: &'a ReducedFormFit,
    order: TargetOrder,
    grid: &'a [f64],
    smoothing: SmoothingConfig,
    block_prob: f64,
    config: &'a BootstrapConfig,
}

impl Context<'_> {
    fn targets(&self, residuals: &TimeSeriesMatrix) -> Result<Vec<TargetMatrix>> {
        let dfts = ResidualDfts::demeaned(residuals, self.smoothing.n_dft)?;
        self.grid
            .iter()
            .map(|&l| target_at(&dfts, self.order, l, &self.smoothing))
            .collect()
    }

    fn restricted_targets(&self, proj: &NullProjection, path: &[u64]) -> Result<Vec<TargetMatrix>> {
        let mut rng = rng::stream(self.config.seed, path);
        let u_tilde = stationary_bootstrap_with(&self.fit.residuals, self.block_prob, &mut rng)?;
        let u_star = proj.apply(&u_tilde, &mut rng);
        let resid = if self.config.refit {
            let y_star = rebuild_series(self.fit, &u_star, &self.fit.presample)?;
            fit_var(&y_star, VarOrder::Fixed(self.fit.order_p))?.residuals
        } else {
            u_star
        };
        self.targets(&resid)
    }

    fn unrestricted_targets(&self, path: &[u64]) -> Result<Vec<TargetMatrix>> {
        let mut rng = rng::stream(self.config.seed, path);
        let u_tilde = stationary_bootstrap_with(&self.fit.residuals, self.block_prob, &mut rng)?;
        self.targets(&u_tilde)
    }

    /// Runs `count` replicates in parallel, retrying failures on fresh streams.
    fn replicate<F>(&self, count: usize, base: &[u64], draw: F) -> Result<(Vec<Vec<TargetMatrix>>, usize)>
    where
        F: Fn(&[u64]) -> Result<Vec<TargetMatrix>> + Sync,
    {
        let out: Vec<Result<(Vec<TargetMatrix>, usize)>> = (0..count)
            .into_par_iter()
            .map(|b| {
                let mut last = None;
                for attempt in 0..=MAX_RETRIES {
                    let mut path = base.to_vec();
                    path.extend_from_slice(&[b as u64, attempt as u64]);
                    match draw(&path) {
                        Ok(t) => return Ok((t, attempt)),
                        Err(e) => last = Some(e),
                    }
                }
                Err(Error::ReplicateFailure {
                    attempts: MAX_RETRIES + 1,
                    reason: last.map(|e| e.to_string()).unwrap_or_default(),
                })
            })
            .collect();
        let mut reps = Vec::with_capacity(count);
        let mut retries = 0;
        for r in out {
            let (t, a) = r?;
            retries += a;
            reps.push(t);
        }
        Ok((reps, retries))
    }
}

fn covariances(reps: &[Vec<TargetMatrix>], n_grid: usize, scale: f64) -> Result<Vec<DMatrix<f64>>> {
    (0..n_grid)
        .map(|g| {
            let vecs: Vec<Vec<f64>> = reps.iter().map(|r| r[g].vectorized()).collect();
            Ok(estimate_xi(&vecs)? * scale)
        })
        .collect()
}

fn grid_statistic(
    targets: &[TargetMatrix],
    r: usize,
    xis: &[DMatrix<f64>],
    schemes: &[WeightingScheme],
    rate: f64,
) -> Result<(KpStatistic, usize, Vec<SvdSplit>)> {
    let mut best: Option<(KpStatistic, usize)> = None;
    let mut splits = Vec::with_capacity(targets.len());
    for (g, ((pi, xi), &scheme)) in targets.iter().zip(xis).zip(schemes).enumerate() {
        let split = svd_split(&pi.values, r)?;
        let kp = if r == 0 && scheme == WeightingScheme::RestrictedBootstrap {
            kp_first_step(&split, xi, rate, pi.frequency)?
        } else {
            kp_statistic(&split, xi, rate, scheme, pi.frequency)?
        };
        if best.as_ref().is_none_or(|(b, _)| kp.value > b.value) {
            best = Some((kp, g));
        }
        splits.push(split);
    }
    let (best, at) = best.ok_or_else(|| Error::Config("empty frequency grid".into()))?;
    Ok((best, at, splits))
}

/// Sequential bootstrap test of `rank(Pi) = r` for `r = 0, 1, ...`.
pub fn sequential_test(
    data: &TimeSeriesMatrix,
    order: TargetOrder,
    grid: &[f64],
    config: &BootstrapConfig,
) -> Result<SequentialResult> {
    config.validate()?;
    data.ensure_finite()?;
    if data.len() < MIN_SAMPLE {
        return Err(Error::Validation(format!(
            "sample size {} below {MIN_SAMPLE}",
            data.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty frequency grid".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(0.0..=std::f64::consts::PI).contains(*l)) {
        return Err(Error::Validation(format!("frequency {l} outside [0, pi]")));
    }
    if config.weighting == WeightingScheme::PlugIn && order == TargetOrder::ThreeFour {
        return Err(Error::Config(
            "the plug-in weighting is only available for orders 3 and 4".into(),
        ));
    }
    let fit = fit_var(data, config.var_order)?;
    linalg::sym_sqrt_and_inv(&fit.sigma_u)?;
    let n_eff = fit.residuals.len();
    let smoothing = SmoothingConfig::with_rule(n_eff, config.span_rule)?;
    let rate = smoothing.rate(order.rate_order(), n_eff);
    let ctx = Context {
        fit: &fit,
        order,
        grid,
        smoothing,
        block_prob: config.block_prob_for(n_eff),
        config,
    };
    let d = data.dim();
    let targets = ctx.targets(&fit.residuals)?;
    let n_grid = grid.len();

    // r = 0: the restricted draw is pure Gaussian noise whatever the basis,
    // so the basis of the largest target is used
    let lead = (0..n_grid)
        .max_by(|&a, &b| targets[a].values.norm().total_cmp(&targets[b].values.norm()))
        .unwrap_or(0);
    let first_split = svd_split(&targets[lead].values, 0)?;
    let proj0 = null_projection(&fit.sigma_u, &first_split.r2, 0, config.mode)?;
    let (reps0, retries0) = ctx.replicate(config.replications, &[TAG_RESTRICTED, 0], |path| {
        ctx.restricted_targets(&proj0, path)
    })?;
    let xi0 = covariances(&reps0, n_grid, rate.powi(4))?;

    let mut steps = Vec::new();
    let mut estimated = None;
    let mut stopping = d;
    let mut xi_later: Option<Vec<DMatrix<f64>>> = None;
    for r in 0..d {
        let (xis, schemes, reps, retries) = if r == 0 {
            (
                xi0.clone(),
                vec![WeightingScheme::RestrictedBootstrap; n_grid],
                reps0.clone(),
                retries0,
            )
        } else {
            if xi_later.is_none() {
                xi_later = Some(later_weighting(&ctx, &targets, rate)?);
            }
            let base = xi_later.as_ref().expect("set above");
            // degenerate weighting at a frequency falls back to the null covariance
            let mut xis = Vec::with_capacity(n_grid);
            let mut schemes = Vec::with_capacity(n_grid);
            for g in 0..n_grid {
                let split = svd_split(&targets[g].values, r)?;
                match kp_statistic(&split, &base[g], rate, config.weighting, grid[g]) {
                    Err(Error::DegenerateWeighting(_)) => {
                        xis.push(xi0[g].clone());
                        schemes.push(WeightingScheme::RestrictedBootstrap);
                    }
                    Err(e) => return Err(e),
                    Ok(_) => {
                        xis.push(base[g].clone());
                        schemes.push(config.weighting);
                    }
                }
            }
            let (_, at, splits) = grid_statistic(&targets, r, &xis, &schemes, rate)?;
            let proj = null_projection(&fit.sigma_u, &splits[at].r2, r, config.mode)?;
            let (reps, retries) = ctx.replicate(config.replications, &[TAG_RESTRICTED, r as u64], |path| {
                ctx.restricted_targets(&proj, path)
            })?;
            (xis, schemes, reps, retries)
        };
        let (stat, at, _) = grid_statistic(&targets, r, &xis, &schemes, rate)?;
        let star: Vec<f64> = reps
            .iter()
            .map(|rep| grid_statistic(rep, r, &xis, &schemes, rate).map(|(s, _, _)| s.value))
            .collect::<Result<_>>()?;
        let p_value = bootstrap_p_value(stat.value, &star);
        let rejected = p_value < config.alpha;
        steps.push(StepResult {
            null_rank: r,
            statistic: stat.value,
            p_value,
            rejected,
            frequency: grid[at],
            dof: stat.dof,
            weighting: stat.weighting,
            singular_values: stat.singular_values.clone(),
            retries,
        });
        if !rejected && estimated.is_none() {
            estimated = Some(r);
            stopping = r + 1;
            if !config.exhaustive {
                break;
            }
        }
    }
    Ok(SequentialResult {
        estimated_rank: estimated.unwrap_or(d),
        steps,
        stopping_step: stopping,
        order,
        grid: grid.to_vec(),
        dim: d,
        sample_size: data.len(),
        var_order: fit.order_p,
        var_order_fallback: fit.order_fallback,
        smoothing,
        bandwidth: smoothing.bandwidth(),
        rate,
        block_prob: ctx.block_prob,
        replications: config.replications,
        alpha: config.alpha,
        mode: config.mode,
        seed: config.seed,
        refit: config.refit,
    })
}

/// Weighting covariance per grid point for the steps after the first.
fn later_weighting(ctx: &Context, targets: &[TargetMatrix], rate: f64) -> Result<Vec<DMatrix<f64>>> {
    let n_grid = targets.len();
    let dim = targets[0].values.len();
    match ctx.config.weighting {
        WeightingScheme::Bootstrap => {
            let (reps, _) = ctx.replicate(ctx.config.xi_replications, &[TAG_XI], |path| {
                ctx.unrestricted_targets(path)
            })?;
            covariances(&reps, n_grid, rate * rate)
        }
        WeightingScheme::Identity => Ok(vec![DMatrix::identity(dim, dim); n_grid]),
        WeightingScheme::RestrictedBootstrap => Err(Error::Config(
            "the restricted covariance is reserved for the first step".into(),
        )),
        WeightingScheme::PlugIn => {
            let dfts = ResidualDfts::demeaned(&ctx.fit.residuals, ctx.smoothing.n_dft)?;
            let k = ctx.order.rate_order();
            ctx.grid
                .iter()
                .map(|&l| {
                    let tuple = FrequencyTuple::for_target(k, ctx.smoothing.n_dft, l)?;
                    let spec = crate::polyspectra::estimate_spectrum_with(&dfts, &tuple, &ctx.smoothing)?;
                    let overlaps = WindowOverlaps::new(&tuple, &ctx.smoothing)?;
                    Ok(plug_in_covariance(&dfts, &spec, &ctx.smoothing, &overlaps)? * (rate * rate))
                })
                .collect()
        }
    }
}
