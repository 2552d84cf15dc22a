//! SVARMA simulation, reduced-form VAR estimation and parametric rebuilds.
//!
//! The structural model is `Phi(L) y_t = Theta(L) B eps_t` with
//! `Phi(L) = I - sum Phi_j L^j` and `Theta(L) = I + sum Theta_j L^j`. Roots of
//! `det Phi(z)` may lie on either side of the unit circle; only unit roots are
//! excluded. Non-causal models are simulated through their two-sided moving
//! average representation.

use nalgebra::{Complex, DMatrix, DVector};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::series::TimeSeriesMatrix;
use crate::shocks::ShockDistribution;

/// Number of unit-circle points used by the stationarity check.
pub const UNIT_CIRCLE_POINTS: usize = 512;
/// Smallest admissible `|det Phi(z) det Theta(z)|` on the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;
/// Burn-in periods discarded by the forward recursion.
pub const BURN_IN: usize = 500;
/// Initial truncation of the two-sided moving average.
pub const DEFAULT_TRUNCATION: usize = 200;
const MAX_TRUNCATION: usize = 6400;
const PSI_TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagKind {
    /// `I - sum C_j z^j`
    Autoregressive,
    /// `I + sum C_j z^j`
    MovingAverage,
}

/// Matrix lag polynomial with its sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct LagPolynomial {
    kind: LagKind,
    dim: usize,
    coefficients: Vec<DMatrix<f64>>,
}

impl LagPolynomial {
    pub fn new(kind: LagKind, dim: usize, coefficients: Vec<DMatrix<f64>>) -> Result<Self> {
        if coefficients.iter().any(|c| c.shape() != (dim, dim)) {
            return Err(Error::Model(format!(
                "lag coefficients must all be {dim}x{dim}"
            )));
        }
        if coefficients.iter().any(|c| c.iter().any(|x| !x.is_finite())) {
            return Err(Error::Model("non-finite lag coefficient".into()));
        }
        Ok(Self {
            kind,
            dim,
            coefficients,
        })
    }

    pub fn identity(kind: LagKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            coefficients: Vec::new(),
        }
    }

    pub fn kind(&self) -> LagKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[DMatrix<f64>] {
        &self.coefficients
    }

    /// Evaluates the polynomial at complex `z`.
    pub fn at(&self, z: Complex<f64>) -> DMatrix<Complex<f64>> {
        let sign = match self.kind {
            LagKind::Autoregressive => -1.0,
            LagKind::MovingAverage => 1.0,
        };
        let mut out = DMatrix::<Complex<f64>>::identity(self.dim, self.dim);
        let mut zp = Complex::new(1.0, 0.0);
        for c in &self.coefficients {
            zp *= z;
            out += c.map(|x| Complex::new(sign * x, 0.0)) * zp;
        }
        out
    }

    /// Companion matrix of an autoregressive polynomial.
    pub fn companion(&self) -> DMatrix<f64> {
        let (d, p) = (self.dim, self.degree().max(1));
        let mut comp = DMatrix::zeros(d * p, d * p);
        for (j, c) in self.coefficients.iter().enumerate() {
            comp.view_mut((0, j * d), (d, d)).copy_from(c);
        }
        for i in d..d * p {
            comp[(i, i - d)] = 1.0;
        }
        comp
    }

    /// Largest eigenvalue modulus of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        if self.coefficients.is_empty() {
            return 0.0;
        }
        self.companion()
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        self.coefficients.iter().map(matrix_to_nested).collect()
    }
}

pub(crate) fn matrix_to_nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn nested_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(Error::Model("matrix rows must be nonempty and equal length".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Minimum of `|det Phi(z) det Theta(z)|` over the unit-circle grid.
pub fn unit_circle_min(ar: &LagPolynomial, ma: &LagPolynomial) -> f64 {
    (0..UNIT_CIRCLE_POINTS)
        .map(|i| {
            let w = 2.0 * std::f64::consts::PI * i as f64 / UNIT_CIRCLE_POINTS as f64;
            let z = Complex::from_polar(1.0, w);
            (ar.at(z).determinant() * ma.at(z).determinant()).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// A structural VARMA data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralModel {
    pub ar: LagPolynomial,
    pub ma: LagPolynomial,
    pub mixing: DMatrix<f64>,
    pub shocks: Vec<ShockDistribution>,
}

/// JSON-friendly form of [`StructuralModel`]: matrices as nested row arrays,
/// shocks by name plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    #[serde(default)]
    pub ar: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub ma: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    pub shocks: Vec<ShockDistribution>,
}

impl StructuralModel {
    pub fn new(
        ar: LagPolynomial,
        ma: LagPolynomial,
        mixing: DMatrix<f64>,
        shocks: Vec<ShockDistribution>,
    ) -> Result<Self> {
        let m = Self {
            ar,
            ma,
            mixing,
            shocks,
        };
        m.validate()?;
        Ok(m)
    }

    /// Bivariate-or-larger causal SVAR(1) used as the default simulation design.
    pub fn causal_svar1(shocks: Vec<ShockDistribution>) -> Result<Self> {
        let d = shocks.len();
        let phi = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                0.5 - 0.1 * i as f64
            } else if j == i + 1 {
                0.2
            } else if i == j + 1 {
                -0.1
            } else {
                0.0
            }
        });
        let b = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.3 / (1.0 + (i + j) as f64) });
        Self::new(
            LagPolynomial::new(LagKind::Autoregressive, d, vec![phi])?,
            LagPolynomial::identity(LagKind::MovingAverage, d),
            b,
            shocks,
        )
    }

    /// Non-causal SVAR(1) whose AR polynomial has a single root at `0.5`,
    /// inside the unit circle; the remaining roots lie outside.
    pub fn noncausal_svar1(shocks: Vec<ShockDistribution>) -> Result<Self> {
        let d = shocks.len();
        let phi = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                if i == 0 {
                    2.0
                } else {
                    0.5 - 0.1 * (i - 1) as f64
                }
            } else if i == j + 1 {
                0.3
            } else {
                0.0
            }
        });
        let b = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.3 / (1.0 + (i + j) as f64) });
        Self::new(
            LagPolynomial::new(LagKind::Autoregressive, d, vec![phi])?,
            LagPolynomial::identity(LagKind::MovingAverage, d),
            b,
            shocks,
        )
    }

    pub fn dim(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mixing.nrows();
        if d == 0 || self.mixing.ncols() != d {
            return Err(Error::Model("mixing matrix must be square and nonempty".into()));
        }
        if self.ar.dim() != d || self.ma.dim() != d {
            return Err(Error::Model("lag polynomial dimension differs from B".into()));
        }
        if self.shocks.len() != d {
            return Err(Error::Model(format!(
                "{} shock distributions given for dimension {d}",
                self.shocks.len()
            )));
        }
        if self.ar.kind() != LagKind::Autoregressive || self.ma.kind() != LagKind::MovingAverage {
            return Err(Error::Model("lag polynomial kinds are swapped".into()));
        }
        let det = self.mixing.determinant();
        let scale = self.mixing.abs().max().powi(d as i32);
        if !det.is_finite() || det.abs() <= 1e-12 * scale.max(1e-300) {
            return Err(Error::Model("mixing matrix B is not full rank".into()));
        }
        for s in &self.shocks {
            s.validate()?;
        }
        let min = unit_circle_min(&self.ar, &self.ma);
        if min < UNIT_CIRCLE_TOL {
            return Err(Error::NonStationary(format!(
                "|det Phi(z) det Theta(z)| reaches {min:e} on the unit circle"
            )));
        }
        Ok(())
    }

    /// True when every root of `det Phi(z)` lies outside the unit circle.
    pub fn is_causal(&self) -> bool {
        self.ar.spectral_radius() < 1.0
    }

    pub fn to_descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            ar: self.ar.to_nested(),
            ma: self.ma.to_nested(),
            b: matrix_to_nested(&self.mixing),
            shocks: self.shocks.clone(),
        }
    }

    pub fn from_descriptor(desc: &ModelDescriptor) -> Result<Self> {
        let b = nested_to_matrix(&desc.b)?;
        let d = b.nrows();
        let ar = desc
            .ar
            .iter()
            .map(|m| nested_to_matrix(m))
            .collect::<Result<Vec<_>>>()?;
        let ma = desc
            .ma
            .iter()
            .map(|m| nested_to_matrix(m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            LagPolynomial::new(LagKind::Autoregressive, d, ar)?,
            LagPolynomial::new(LagKind::MovingAverage, d, ma)?,
            b,
            desc.shocks.clone(),
        )
    }

    /// Two-sided moving-average weights `Psi_j`, `j = -J..=J`, of
    /// `Phi(L)^{-1} Theta(L)`, together with the truncation `J` actually used.
    pub fn two_sided_weights(&self) -> Result<(usize, Vec<DMatrix<f64>>)> {
        let d = self.dim();
        let mut trunc = DEFAULT_TRUNCATION;
        loop {
            let n = (8 * trunc).next_power_of_two();
            let mut planner = FftPlanner::<f64>::new();
            let ifft = planner.plan_fft_inverse(n);
            // entry (a, b) of the transfer function on the FFT grid
            let mut buffers = vec![vec![Complex::new(0.0, 0.0); n]; d * d];
            for i in 0..n {
                let w = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let z = Complex::from_polar(1.0, -w);
                let inv = self.ar.at(z).try_inverse().ok_or_else(|| {
                    Error::NonStationary("Phi(z) singular on the unit circle".into())
                })?;
                let h = inv * self.ma.at(z);
                for a in 0..d {
                    for b in 0..d {
                        buffers[a * d + b][i] = h[(a, b)];
                    }
                }
            }
            for buf in &mut buffers {
                ifft.process(buf);
            }
            let weight = |j: isize| -> DMatrix<f64> {
                let idx = j.rem_euclid(n as isize) as usize;
                DMatrix::from_fn(d, d, |a, b| buffers[a * d + b][idx].re / n as f64)
            };
            let tail = weight(trunc as isize)
                .abs()
                .max()
                .max(weight(-(trunc as isize)).abs().max());
            if tail < PSI_TAIL_TOL {
                let ws = (-(trunc as isize)..=trunc as isize).map(weight).collect();
                return Ok((trunc, ws));
            }
            if trunc >= MAX_TRUNCATION {
                return Err(Error::NonStationary(format!(
                    "moving-average weights decay too slowly (|Psi_J| = {tail:e} at J = {trunc})"
                )));
            }
            trunc *= 2;
        }
    }
}

/// Simulates `t` periods from `model`, deterministically in `seed`.
pub fn simulate_svarma(model: &StructuralModel, t: usize, seed: u64) -> Result<TimeSeriesMatrix> {
    model.validate()?;
    if t < 50 {
        return Err(Error::Validation(format!("sample size {t} below 50")));
    }
    let d = model.dim();
    let samplers = model
        .shocks
        .iter()
        .map(|s| s.sampler())
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng::stream(seed, &[]);
    let mut draw = |n: usize| -> DMatrix<f64> {
        // rows are periods, e_t = B eps_t
        let mut eps = DMatrix::zeros(n, d);
        for i in 0..n {
            for (j, s) in samplers.iter().enumerate() {
                eps[(i, j)] = s.sample(&mut rng);
            }
        }
        eps * model.mixing.transpose()
    };

    let out = if model.is_causal() {
        let p = model.ar.degree();
        let q = model.ma.degree();
        let n = t + BURN_IN;
        let e = draw(n);
        let mut y = DMatrix::<f64>::zeros(n, d);
        for s in 0..n {
            let mut row = e.row(s).transpose();
            for (j, phi) in model.ar.coefficients().iter().enumerate() {
                if s > j {
                    row += phi * y.row(s - j - 1).transpose();
                }
            }
            for (j, theta) in model.ma.coefficients().iter().enumerate() {
                if s > j {
                    row += theta * e.row(s - j - 1).transpose();
                }
            }
            y.set_row(s, &row.transpose());
        }
        let _ = (p, q);
        y.rows(BURN_IN, t).into_owned()
    } else {
        let (trunc, weights) = model.two_sided_weights()?;
        let e = draw(t + 2 * trunc);
        let mut y = DMatrix::<f64>::zeros(t, d);
        // y_s = sum_{j=-J..J} Psi_j e_{s-j}; e row offset by J
        for s in 0..t {
            let mut acc = DVector::<f64>::zeros(d);
            for (w, psi) in weights.iter().enumerate() {
                let j = w as isize - trunc as isize;
                let row = (s as isize + trunc as isize - j) as usize;
                acc += psi * e.row(row).transpose();
            }
            y.set_row(s, &acc.transpose());
        }
        y
    };
    let panel = TimeSeriesMatrix::new(out);
    if !panel.is_finite() {
        return Err(Error::Propagation("simulation produced non-finite values".into()));
    }
    Ok(panel)
}

/// Lag-order choice for [`fit_var`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarOrder {
    /// AIC over `1..=max`.
    Auto { max: usize },
    Fixed(usize),
}

impl Default for VarOrder {
    fn default() -> Self {
        VarOrder::Auto { max: 8 }
    }
}

/// Least-squares VAR(p) with intercept.
#[derive(Debug, Clone)]
pub struct ReducedFormFit {
    pub ar_hat: LagPolynomial,
    pub intercept: DVector<f64>,
    /// Residuals for periods `p+1..T` (`T - p` rows).
    pub residuals: TimeSeriesMatrix,
    /// `(1 / (T - p)) sum u_t u_t'`
    pub sigma_u: DMatrix<f64>,
    pub order_p: usize,
    /// Set when automatic order selection failed and `p = 1` was used.
    pub order_fallback: bool,
    /// The first `p` observations, used to initialize rebuilds.
    pub presample: TimeSeriesMatrix,
}

impl ReducedFormFit {
    pub fn is_stable(&self) -> bool {
        self.ar_hat.spectral_radius() < 1.0
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }
}

fn ols_var(data: &DMatrix<f64>, p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (t, d) = data.shape();
    let n = t - p;
    let k = 1 + d * p;
    let mut x = DMatrix::<f64>::zeros(n, k);
    for s in 0..n {
        x[(s, 0)] = 1.0;
        for j in 0..p {
            for c in 0..d {
                x[(s, 1 + j * d + c)] = data[(s + p - j - 1, c)];
            }
        }
    }
    let y = data.rows(p, n).into_owned();
    let xtx = x.transpose() * &x;
    let chol = xtx.clone().cholesky().ok_or_else(|| {
        Error::Collinearity(format!("regressor cross-product for p = {p} is singular"))
    })?;
    let diag_max = xtx.diagonal().max();
    let l_min = chol.l().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if !(l_min > 1e-12 * diag_max) {
        return Err(Error::Collinearity(format!(
            "regressor cross-product for p = {p} is numerically singular"
        )));
    }
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = y - &x * &beta;
    Ok((beta, resid))
}

fn fit_fixed(data: &TimeSeriesMatrix, p: usize) -> Result<ReducedFormFit> {
    let d = data.dim();
    let (beta, resid) = ols_var(data.as_matrix(), p)?;
    let intercept = beta.row(0).transpose();
    let coefficients = (0..p)
        .map(|j| beta.rows(1 + j * d, d).transpose())
        .collect();
    let n = resid.nrows() as f64;
    let sigma_u = (resid.transpose() * &resid) / n;
    Ok(ReducedFormFit {
        ar_hat: LagPolynomial::new(LagKind::Autoregressive, d, coefficients)?,
        intercept,
        residuals: TimeSeriesMatrix::new(resid),
        sigma_u,
        order_p: p,
        order_fallback: false,
        presample: data.slice_rows(0, p),
    })
}

/// Fits `y_t = c + sum_j Phi_j y_{t-j} + u_t` by equation-wise least squares.
pub fn fit_var(data: &TimeSeriesMatrix, order: VarOrder) -> Result<ReducedFormFit> {
    data.ensure_finite()?;
    let (t, d) = (data.len(), data.dim());
    let feasible = |p: usize| t > d * p + d + 10;
    match order {
        VarOrder::Fixed(p) => {
            if p == 0 {
                return Err(Error::Validation("VAR order must be at least 1".into()));
            }
            if !feasible(p) {
                return Err(Error::Validation(format!(
                    "T = {t} too short for a VAR({p}) in {d} variables"
                )));
            }
            fit_fixed(data, p)
        }
        VarOrder::Auto { max } => {
            if !feasible(1) {
                return Err(Error::Validation(format!(
                    "T = {t} too short for a VAR(1) in {d} variables"
                )));
            }
            let pmax = (1..=max.max(1)).take_while(|&p| feasible(p)).last().unwrap_or(1);
            let common = data.slice_rows(0, t);
            let mut best: Option<(f64, usize)> = None;
            for p in 1..=pmax {
                // identical estimation sample for every candidate
                let sub = common.slice_rows(pmax - p, t);
                let Ok((_, resid)) = ols_var(sub.as_matrix(), p) else {
                    continue;
                };
                let n = resid.nrows() as f64;
                let det = ((resid.transpose() * &resid) / n).determinant();
                if !(det > 0.0) {
                    continue;
                }
                let aic = det.ln() + 2.0 * (p * d * d) as f64 / n;
                if best.is_none_or(|(b, _)| aic < b) {
                    best = Some((aic, p));
                }
            }
            match best {
                Some((_, p)) => fit_fixed(data, p).or_else(|_| {
                    let mut f = fit_fixed(data, 1)?;
                    f.order_fallback = true;
                    Ok(f)
                }),
                None => {
                    let mut f = fit_fixed(data, 1)?;
                    f.order_fallback = true;
                    Ok(f)
                }
            }
        }
    }
}

/// Runs the fitted recursion forward from `init` driven by `u_star`.
///
/// The output stacks the `p` initial rows followed by one row per row of
/// `u_star`.
pub fn rebuild_series(
    fit: &ReducedFormFit,
    u_star: &TimeSeriesMatrix,
    init: &TimeSeriesMatrix,
) -> Result<TimeSeriesMatrix> {
    let (p, d) = (fit.order_p, fit.dim());
    if init.len() != p || init.dim() != d || u_star.dim() != d {
        return Err(Error::Shape(format!(
            "rebuild needs {p} initial rows and {d} columns"
        )));
    }
    if !fit.is_stable() {
        return Err(Error::Propagation(format!(
            "fitted VAR is not stable (spectral radius {:.4})",
            fit.ar_hat.spectral_radius()
        )));
    }
    let n = u_star.len();
    let mut y = DMatrix::<f64>::zeros(p + n, d);
    y.rows_mut(0, p).copy_from(init.as_matrix());
    let coefs = fit.ar_hat.coefficients();
    let u = u_star.as_matrix();
    for s in p..p + n {
        for c in 0..d {
            let mut v = fit.intercept[c] + u[(s - p, c)];
            for (j, phi) in coefs.iter().enumerate() {
                let lag = s - j - 1;
                for e in 0..d {
                    v += phi[(c, e)] * y[(lag, e)];
                }
            }
            y[(s, c)] = v;
        }
    }
    let out = TimeSeriesMatrix::new(y);
    if !out.is_finite() {
        return Err(Error::Propagation("rebuilt series is not finite".into()));
    }
    Ok(out)
}

/// Sample cross-autocorrelation matrix at `lag` (biased normalization).
pub fn autocorrelation(panel: &TimeSeriesMatrix, lag: usize) -> DMatrix<f64> {
    let c = panel.demeaned();
    let x = c.as_matrix();
    let (t, d) = x.shape();
    let sd: Vec<f64> = (0..d)
        .map(|j| (x.column(j).norm_squared() / t as f64).sqrt())
        .collect();
    DMatrix::from_fn(d, d, |a, b| {
        let mut acc = 0.0;
        for s in lag..t {
            acc += x[(s, a)] * x[(s - lag, b)];
        }
        acc / t as f64 / (sd[a] * sd[b])
    })
}

/// Largest absolute cross-autocorrelation over lags `1..=max_lag`.
pub fn max_autocorrelation(panel: &TimeSeriesMatrix, max_lag: usize) -> f64 {
    (1..=max_lag)
        .map(|l| autocorrelation(panel, l).abs().max())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(d: usize) -> Vec<ShockDistribution> {
        vec![ShockDistribution::Gaussian; d]
    }

    fn var1(phi: DMatrix<f64>, shocks: Vec<ShockDistribution>) -> StructuralModel {
        let d = phi.nrows();
        StructuralModel::new(
            LagPolynomial::new(LagKind::Autoregressive, d, vec![phi]).unwrap(),
            LagPolynomial::identity(LagKind::MovingAverage, d),
            DMatrix::identity(d, d),
            shocks,
        )
        .unwrap()
    }

    #[test]
    fn white_noise_simulation() {
        let m = var1(DMatrix::zeros(2, 2), gaussian(2));
        let y = simulate_svarma(&m, 5000, 1).unwrap();
        let cov = y.covariance();
        assert!((cov - DMatrix::identity(2, 2)).abs().max() < 0.1);
    }

    #[test]
    fn ar1_autocorrelation() {
        let m = var1(DMatrix::identity(2, 2) * 0.5, gaussian(2));
        let y = simulate_svarma(&m, 5000, 2).unwrap();
        let r = autocorrelation(&y, 1);
        assert!((r[(0, 0)] - 0.5).abs() < 0.05 && (r[(1, 1)] - 0.5).abs() < 0.05);
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = StructuralModel::noncausal_svar1(vec![
            ShockDistribution::Exponential,
            ShockDistribution::Gaussian,
        ])
        .unwrap();
        let a = simulate_svarma(&m, 300, 9).unwrap();
        let b = simulate_svarma(&m, 300, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
    }

    #[test]
    fn unit_root_rejected() {
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.3]);
        let err = StructuralModel::new(
            LagPolynomial::new(LagKind::Autoregressive, 2, vec![phi]).unwrap(),
            LagPolynomial::identity(LagKind::MovingAverage, 2),
            DMatrix::identity(2, 2),
            gaussian(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonStationary(_)));
    }

    #[test]
    fn singular_mixing_rejected() {
        let err = StructuralModel::new(
            LagPolynomial::identity(LagKind::Autoregressive, 2),
            LagPolynomial::identity(LagKind::MovingAverage, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
            gaussian(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn noncausal_default_has_one_inside_root() {
        let m = StructuralModel::noncausal_svar1(gaussian(2)).unwrap();
        assert!(!m.is_causal());
        let eig = m.ar.companion().complex_eigenvalues();
        let outside: Vec<f64> = eig.iter().map(|e| e.norm()).filter(|&r| r > 1.0).collect();
        assert_eq!(outside.len(), 1);
        assert!((outside[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_sided_weights_invert_the_filter() {
        let m = StructuralModel::noncausal_svar1(gaussian(2)).unwrap();
        let (trunc, psi) = m.two_sided_weights().unwrap();
        // Phi(L) Psi(L) = I  =>  Psi_j - Phi_1 Psi_{j-1} = 1{j=0} I
        let phi = &m.ar.coefficients()[0];
        for j in -(trunc as isize) + 1..=trunc as isize {
            let cur = &psi[(j + trunc as isize) as usize];
            let prev = &psi[(j - 1 + trunc as isize) as usize];
            let lhs = cur - phi * prev;
            let rhs = if j == 0 {
                DMatrix::identity(2, 2)
            } else {
                DMatrix::zeros(2, 2)
            };
            assert!((lhs - rhs).abs().max() < 1e-9, "j = {j}");
        }
    }

    #[test]
    fn ols_recovers_coefficients() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let m = var1(phi.clone(), gaussian(2));
        let y = simulate_svarma(&m, 5000, 3).unwrap();
        let fit = fit_var(&y, VarOrder::Fixed(1)).unwrap();
        assert!((&fit.ar_hat.coefficients()[0] - phi).abs().max() < 0.05);
        assert_eq!(fit.residuals.len(), 4999);
        assert!(fit.residuals.column_means().abs().max() < 1e-8);
        assert!(fit.is_stable());
        let s = &fit.sigma_u;
        assert!((s - s.transpose()).abs().max() < 1e-12);
        assert!(s.clone().cholesky().is_some());
    }

    #[test]
    fn white_noise_fit_is_near_zero() {
        let m = var1(DMatrix::zeros(2, 2), gaussian(2));
        let y = simulate_svarma(&m, 5000, 4).unwrap();
        let fit = fit_var(&y, VarOrder::Fixed(1)).unwrap();
        assert!(fit.ar_hat.coefficients()[0].abs().max() < 0.05);
    }

    #[test]
    fn residuals_are_white_for_correct_order() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let m = var1(phi, gaussian(2));
        let y = simulate_svarma(&m, 5000, 1).unwrap();
        let fit = fit_var(&y, VarOrder::Fixed(1)).unwrap();
        let bound = 2.0 / (fit.residuals.len() as f64).sqrt();
        for lag in 1..=5 {
            let r = autocorrelation(&fit.residuals, lag);
            for j in 0..2 {
                assert!(r[(j, j)].abs() < bound, "lag {lag}, series {j}: {}", r[(j, j)]);
            }
        }
    }

    #[test]
    fn aic_picks_true_order_for_strong_ar2() {
        let phi1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.4]);
        let phi2 = DMatrix::from_row_slice(2, 2, &[-0.4, 0.0, 0.0, 0.3]);
        let m = StructuralModel::new(
            LagPolynomial::new(LagKind::Autoregressive, 2, vec![phi1, phi2]).unwrap(),
            LagPolynomial::identity(LagKind::MovingAverage, 2),
            DMatrix::identity(2, 2),
            gaussian(2),
        )
        .unwrap();
        let y = simulate_svarma(&m, 3000, 6).unwrap();
        let fit = fit_var(&y, VarOrder::default()).unwrap();
        assert_eq!(fit.order_p, 2);
        assert!(!fit.order_fallback);
    }

    #[test]
    fn collinear_data_is_reported() {
        let mut y = TimeSeriesMatrix::zeros(100, 2);
        for t in 0..100 {
            let v = (t as f64 * 0.37).sin();
            y.as_matrix_mut()[(t, 0)] = v;
            y.as_matrix_mut()[(t, 1)] = 2.0 * v;
        }
        assert!(matches!(
            fit_var(&y, VarOrder::Fixed(1)),
            Err(Error::Collinearity(_))
        ));
    }

    #[test]
    fn rebuild_inverts_residual_filter() {
        let m = StructuralModel::causal_svar1(gaussian(2)).unwrap();
        let y = simulate_svarma(&m, 400, 7).unwrap();
        let fit = fit_var(&y, VarOrder::Fixed(2)).unwrap();
        let back = rebuild_series(&fit, &fit.residuals, &fit.presample).unwrap();
        assert!((back.as_matrix() - y.as_matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn rebuild_with_zero_shocks_decays_to_mean() {
        let m = StructuralModel::causal_svar1(gaussian(2)).unwrap();
        let y = simulate_svarma(&m, 400, 8).unwrap();
        let fit = fit_var(&y, VarOrder::Fixed(1)).unwrap();
        let zeros = TimeSeriesMatrix::zeros(300, 2);
        let path = rebuild_series(&fit, &zeros, &fit.presample).unwrap();
        let phi = &fit.ar_hat.coefficients()[0];
        let mean = (DMatrix::identity(2, 2) - phi).try_inverse().unwrap() * &fit.intercept;
        let gap = |s: usize| (path.row(s) - &mean).norm();
        assert!(gap(300) < 1e-10 * gap(0).max(1.0));
        assert!(gap(50) < gap(5));
    }

    #[test]
    fn descriptor_roundtrip() {
        let m = StructuralModel::causal_svar1(vec![
            ShockDistribution::mn1(),
            ShockDistribution::Gaussian,
        ])
        .unwrap();
        let json = serde_json::to_string(&m.to_descriptor()).unwrap();
        let back: ModelDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(StructuralModel::from_descriptor(&back).unwrap(), m);
    }
}
