//! Smoothed higher-order periodograms of residual panels and the rank-target
//! matrices built from them.
//!
//! Frequencies live on the Fourier grid `2 pi f / n_dft`. A tuple of order `k`
//! stores all `k` grid indices; position `0` is the implied frequency
//! `-(f_1 + ... + f_{k-1})` and positions `1..k` are free. In a
//! [`SpectralArray`] the column index is the component attached to position
//! `0` and the row index runs over the remaining components, first one slowest.
//!
//! Smoothing uses a product Parzen window over the free offsets. Grid points
//! that fall on a proper sub-manifold (some nonempty proper subset of the
//! frequencies summing to zero) are dropped and the weights renormalized;
//! otherwise products of lower-order terms leak into the estimate, which for
//! `k = 4` does not vanish asymptotically.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cumulant::{CumulantMatrix, MultiIndex};
use crate::error::{Error, Result};
use crate::linalg;
use crate::series::TimeSeriesMatrix;

pub type C64 = Complex<f64>;

/// Relative singular-value threshold used by the rank diagnostics.
pub const DIAGNOSTIC_RANK_TOL: f64 = 1e-8;

/// Parzen lag window on `[-1, 1]`.
pub fn parzen(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0 - 6.0 * a * a + 6.0 * a * a * a
    } else if a <= 1.0 {
        2.0 * (1.0 - a).powi(3)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Parzen,
}

impl Kernel {
    fn weights(self, span: usize) -> Vec<f64> {
        let s = span as f64 + 1.0;
        (-(span as i64)..=span as i64)
            .map(|o| match self {
                Kernel::Parzen => parzen(o as f64 / s),
            })
            .collect()
    }
}

/// How the smoothing span is tied to the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SpanRule {
    /// `floor(T / 4)` Fourier indices.
    Quarter,
    /// `round(scale * T^{4/5})`, so that `H_T` shrinks like `T^{-1/5}`.
    Shrinking { scale: f64 },
    Fixed { span: usize },
}

impl Default for SpanRule {
    fn default() -> Self {
        SpanRule::Quarter
    }
}

impl SpanRule {
    pub fn span(self, t: usize) -> usize {
        match self {
            SpanRule::Quarter => t / 4,
            SpanRule::Shrinking { scale } => (scale * (t as f64).powf(0.8)).round() as usize,
            SpanRule::Fixed { span } => span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub n_dft: usize,
    pub span: usize,
    pub kernel: Kernel,
}

impl SmoothingConfig {
    /// Default configuration for a sample of `t` observations.
    pub fn for_sample(t: usize) -> Result<Self> {
        Self::with_rule(t, SpanRule::Quarter)
    }

    pub fn with_rule(t: usize, rule: SpanRule) -> Result<Self> {
        let cfg = Self {
            n_dft: t + t % 2,
            span: rule.span(t),
            kernel: Kernel::Parzen,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dft < 2 || self.n_dft % 2 != 0 {
            return Err(Error::Config(format!(
                "DFT length {} must be even and at least 2",
                self.n_dft
            )));
        }
        if 2 * self.span + 1 >= self.n_dft {
            return Err(Error::Config(format!(
                "smoothing span {} does not fit in a grid of {} frequencies",
                self.span, self.n_dft
            )));
        }
        Ok(())
    }

    /// `H_T = 2 pi span / n_dft`.
    pub fn bandwidth(&self) -> f64 {
        2.0 * PI * self.span as f64 / self.n_dft as f64
    }

    /// `a_T = sqrt(H_T^{k-1} T)`.
    pub fn rate(&self, order: usize, t: usize) -> f64 {
        (self.bandwidth().powi(order as i32 - 1) * t as f64).sqrt()
    }

    fn weights(&self) -> Vec<f64> {
        self.kernel.weights(self.span)
    }
}

/// `z(f) = sum_t x_t exp(-2 pi i f t / n_dft)` for `f = 0..n_dft`, with `x`
/// zero-padded to `n_dft`.
pub fn dft(series: &[f64], n_dft: usize) -> Result<Vec<C64>> {
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite value passed to the DFT".into()));
    }
    if n_dft < series.len() {
        return Err(Error::Config(format!(
            "DFT length {n_dft} shorter than series length {}",
            series.len()
        )));
    }
    let mut buf: Vec<C64> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(n_dft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_dft).process(&mut buf);
    Ok(buf)
}

/// A `k`-tuple of Fourier-grid indices summing to zero modulo `n_dft`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyTuple {
    n_dft: usize,
    indices: Vec<usize>,
}

impl FrequencyTuple {
    /// Builds a tuple from all `k` signed grid indices. Fails unless they sum
    /// to zero modulo `n_dft`.
    pub fn new(n_dft: usize, indices: &[i64]) -> Result<Self> {
        let n = n_dft as i64;
        if !(2..=4).contains(&indices.len()) {
            return Err(Error::UnsupportedOrder(indices.len()));
        }
        if indices.iter().sum::<i64>().rem_euclid(n) != 0 {
            return Err(Error::FrequencyConstraint(format!(
                "indices {indices:?} do not sum to zero modulo {n_dft}"
            )));
        }
        Ok(Self {
            n_dft,
            indices: indices.iter().map(|&f| f.rem_euclid(n) as usize).collect(),
        })
    }

    /// Builds a tuple from the `k - 1` free indices; the first entry is implied.
    pub fn from_free(n_dft: usize, free: &[i64]) -> Result<Self> {
        let mut all = vec![-free.iter().sum::<i64>()];
        all.extend_from_slice(free);
        Self::new(n_dft, &all)
    }

    /// The tuple `(lambda, -lambda, 0, ..., 0)` of order `k`, with `lambda`
    /// rounded to the nearest grid point. Its implied frequency is `lambda`.
    pub fn for_target(order: usize, n_dft: usize, lambda: f64) -> Result<Self> {
        if !(2..=4).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        if !lambda.is_finite() {
            return Err(Error::Config("frequency must be finite".into()));
        }
        let g = (lambda * n_dft as f64 / (2.0 * PI)).round() as i64;
        let mut free = vec![0i64; order - 1];
        free[0] = -g;
        Self::from_free(n_dft, &free)
    }

    pub fn order(&self) -> usize {
        self.indices.len()
    }

    pub fn n_dft(&self) -> usize {
        self.n_dft
    }

    /// Grid indices in `0..n_dft`.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Signed index in `(-n/2, n/2]`.
    pub fn signed(&self, pos: usize) -> i64 {
        let n = self.n_dft as i64;
        let f = self.indices[pos] as i64;
        if f > n / 2 {
            f - n
        } else {
            f
        }
    }

    /// Frequencies in radians, in `(-pi, pi]`.
    pub fn radians(&self) -> Vec<f64> {
        (0..self.order())
            .map(|p| 2.0 * PI * self.signed(p) as f64 / self.n_dft as f64)
            .collect()
    }

    /// The implied frequency (position `0`) in radians.
    pub fn target_radians(&self) -> f64 {
        self.radians()[0]
    }

    pub fn negated(&self) -> Self {
        let n = self.n_dft;
        Self {
            n_dft: n,
            indices: self.indices.iter().map(|&f| (n - f) % n).collect(),
        }
    }
}

/// DFTs of every column of a residual panel, computed once and shared.
#[derive(Debug, Clone)]
pub struct ResidualDfts {
    t: usize,
    n_dft: usize,
    columns: Vec<Vec<C64>>,
}

impl ResidualDfts {
    /// DFTs of the columns as given (no demeaning).
    pub fn raw(panel: &TimeSeriesMatrix, n_dft: usize) -> Result<Self> {
        let columns = (0..panel.dim())
            .map(|j| dft(&panel.column(j), n_dft))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t: panel.len(),
            n_dft,
            columns,
        })
    }

    /// DFTs of the demeaned columns.
    pub fn demeaned(panel: &TimeSeriesMatrix, n_dft: usize) -> Result<Self> {
        panel.ensure_finite()?;
        Self::raw(&panel.demeaned(), n_dft)
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn n_dft(&self) -> usize {
        self.n_dft
    }

    #[inline]
    pub fn at(&self, component: usize, f: i64) -> C64 {
        self.columns[component][f.rem_euclid(self.n_dft as i64) as usize]
    }
}

/// `(2 pi)^{-(k-1)} T^{-1} prod_j z_{c_j}(f_j)`.
pub fn periodogram_k(dfts: &ResidualDfts, c: &MultiIndex, freqs: &FrequencyTuple) -> Result<C64> {
    check_tuple(dfts, freqs)?;
    let k = freqs.order();
    if c.order() != k || c.entries().iter().any(|&a| a >= dfts.dim()) {
        return Err(Error::Shape(format!(
            "multi-index {:?} does not match order {k} and dimension {}",
            c.entries(),
            dfts.dim()
        )));
    }
    let mut prod = Complex::new(1.0, 0.0);
    for (pos, &a) in c.entries().iter().enumerate() {
        prod *= dfts.at(a, freqs.indices()[pos] as i64);
    }
    Ok(prod * norm_const(k, dfts.len()))
}

fn norm_const(k: usize, t: usize) -> f64 {
    (2.0 * PI).powi(-(k as i32 - 1)) / t as f64
}

fn check_tuple(dfts: &ResidualDfts, freqs: &FrequencyTuple) -> Result<()> {
    if freqs.n_dft() != dfts.n_dft() {
        return Err(Error::FrequencyConstraint(format!(
            "tuple on a grid of {} points, DFTs on {}",
            freqs.n_dft(),
            dfts.n_dft()
        )));
    }
    Ok(())
}

/// Smoothed estimate of the order-`k` cumulant spectrum at one tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralArray {
    pub order: usize,
    pub frequency: FrequencyTuple,
    /// `d^{k-1} x d`; the column is the component at the implied frequency.
    pub values: DMatrix<C64>,
    /// `sqrt(H_T^{k-1} T)`
    pub rate: f64,
}

impl SpectralArray {
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Column-major vectorization, indexed like a [`MultiIndex`] whose first
    /// entry is the column.
    pub fn vectorized(&self) -> Vec<C64> {
        self.values.as_slice().to_vec()
    }

    pub fn get(&self, idx: &MultiIndex) -> C64 {
        self.values.as_slice()[idx.linear_index(self.dim())]
    }
}

/// Estimates the order-`k` spectrum of `residuals` (demeaned first) at `freqs`.
pub fn estimate_spectrum(
    residuals: &TimeSeriesMatrix,
    freqs: &FrequencyTuple,
    config: &SmoothingConfig,
) -> Result<SpectralArray> {
    config.validate()?;
    let dfts = ResidualDfts::demeaned(residuals, config.n_dft)?;
    estimate_spectrum_with(&dfts, freqs, config)
}

/// Visits every admissible smoothing point around `freqs`.
///
/// The callback receives the full signed index tuple and its weight. Used by
/// the brute-force oracle in tests and by the plug-in covariance.
pub(crate) fn for_each_grid_point(
    freqs: &FrequencyTuple,
    config: &SmoothingConfig,
    mut visit: impl FnMut(&[i64], f64),
) {
    let k = freqs.order();
    let n = config.n_dft as i64;
    let s = config.span as i64;
    let w = config.weights();
    let centers: Vec<i64> = (0..k).map(|p| freqs.signed(p)).collect();
    let mut offsets = vec![-s; k - 1];
    let mut f = vec![0i64; k];
    loop {
        let mut weight = 1.0;
        for m in 1..k {
            f[m] = centers[m] + offsets[m - 1];
            weight *= w[(offsets[m - 1] + s) as usize];
        }
        f[0] = -f[1..].iter().sum::<i64>();
        if !on_submanifold(&f[1..], n) && weight > 0.0 {
            visit(&f, weight);
        }
        // odometer over the free offsets
        let mut m = 0;
        loop {
            if m == k - 1 {
                return;
            }
            offsets[m] += 1;
            if offsets[m] <= s {
                break;
            }
            offsets[m] = -s;
            m += 1;
        }
    }
}

fn on_submanifold(free: &[i64], n: i64) -> bool {
    let q = free.len();
    (1u32..(1 << q)).any(|mask| {
        let s: i64 = (0..q).filter(|&j| mask >> j & 1 == 1).map(|j| free[j]).sum();
        s.rem_euclid(n) == 0
    })
}

/// As [`estimate_spectrum`] with precomputed DFTs.
///
/// The sum over the last free offset is cached as a function of the running
/// sum of the other offsets, so the cost is `O(S^{k-2} d^k)` rather than
/// `O(S^{k-1} d^k)`.
pub fn estimate_spectrum_with(
    dfts: &ResidualDfts,
    freqs: &FrequencyTuple,
    config: &SmoothingConfig,
) -> Result<SpectralArray> {
    config.validate()?;
    check_tuple(dfts, freqs)?;
    let k = freqs.order();
    let d = dfts.dim();
    if d == 0 || dfts.is_empty() {
        return Err(Error::Shape("empty residual panel".into()));
    }
    let n = config.n_dft as i64;
    let s = config.span as i64;
    let w = config.weights();
    let g: Vec<i64> = (0..k).map(|p| freqs.signed(p)).collect();
    let last = k - 1;
    let n_prefix = k - 2;

    // inner[sigma][a0 * d + al] = sum_o w(o) z_a0(g0 - sigma - o) z_al(g_last + o)
    let sig_max = n_prefix as i64 * s;
    let n_sig = (2 * sig_max + 1) as usize;
    let mut inner = vec![Complex::new(0.0, 0.0); n_sig * d * d];
    let mut inner_w = vec![0.0; n_sig];
    for (si, sigma) in (-sig_max..=sig_max).enumerate() {
        let block = &mut inner[si * d * d..(si + 1) * d * d];
        for o in -s..=s {
            let wo = w[(o + s) as usize];
            if wo == 0.0 {
                continue;
            }
            inner_w[si] += wo;
            let f0 = g[0] - sigma - o;
            let fl = g[last] + o;
            for a0 in 0..d {
                let z0 = dfts.at(a0, f0) * wo;
                for al in 0..d {
                    block[a0 * d + al] += z0 * dfts.at(al, fl);
                }
            }
        }
    }

    let rows = d.pow(k as u32 - 1);
    let mut acc = vec![Complex::new(0.0, 0.0); rows * d];
    let mut wsum = 0.0;
    let mut offsets = vec![-s; n_prefix];
    let mut f_prefix = vec![0i64; n_prefix];
    let n_mid = d.pow(n_prefix as u32);
    let mut mid = vec![Complex::new(0.0, 0.0); n_mid];
    let mut corrected = vec![Complex::new(0.0, 0.0); d * d];
    let mut excluded: Vec<i64> = Vec::with_capacity(1 << n_prefix);
    loop {
        let mut wp = 1.0;
        let mut sigma = 0;
        for m in 0..n_prefix {
            f_prefix[m] = g[m + 1] + offsets[m];
            wp *= w[(offsets[m] + s) as usize];
            sigma += offsets[m];
        }
        let skip = wp == 0.0 || (n_prefix > 0 && on_submanifold(&f_prefix, n));
        if !skip {
            // last offsets o that complete a zero-sum subset with the prefix
            excluded.clear();
            for mask in 0u32..(1 << n_prefix) {
                let part: i64 = (0..n_prefix)
                    .filter(|&j| mask >> j & 1 == 1)
                    .map(|j| f_prefix[j])
                    .sum();
                let target = (-g[last] - part).rem_euclid(n);
                // representative of target in [-s, s]; unique because 2s+1 < n
                let o = if target <= s {
                    target
                } else if target >= n - s {
                    target - n
                } else {
                    continue;
                };
                if !excluded.contains(&o) {
                    excluded.push(o);
                }
            }
            let si = (sigma + sig_max) as usize;
            corrected.copy_from_slice(&inner[si * d * d..(si + 1) * d * d]);
            let mut w_inner = inner_w[si];
            for &o in &excluded {
                let wo = w[(o + s) as usize];
                if wo == 0.0 {
                    continue;
                }
                w_inner -= wo;
                let f0 = g[0] - sigma - o;
                let fl = g[last] + o;
                for a0 in 0..d {
                    let z0 = dfts.at(a0, f0) * wo;
                    for al in 0..d {
                        corrected[a0 * d + al] -= z0 * dfts.at(al, fl);
                    }
                }
            }
            wsum += wp * w_inner;

            // products of the prefix DFTs over (a_1, ..., a_{k-2})
            for (ix, slot) in mid.iter_mut().enumerate() {
                let mut prod = Complex::new(wp, 0.0);
                let mut rem = ix;
                for m in (0..n_prefix).rev() {
                    prod *= dfts.at(rem % d, f_prefix[m]);
                    rem /= d;
                }
                *slot = prod;
            }
            // acc index: a0 * rows + (mid_ix * d + al)
            for a0 in 0..d {
                for (mi, &pm) in mid.iter().enumerate() {
                    let base = a0 * rows + mi * d;
                    for al in 0..d {
                        acc[base + al] += pm * corrected[a0 * d + al];
                    }
                }
            }
        }
        let mut m = 0;
        loop {
            if m == n_prefix {
                break;
            }
            offsets[m] += 1;
            if offsets[m] <= s {
                break;
            }
            offsets[m] = -s;
            m += 1;
        }
        if m == n_prefix {
            break;
        }
    }
    if !(wsum > 0.0) {
        return Err(Error::Config(
            "no admissible smoothing points around the requested frequencies".into(),
        ));
    }
    let scale = norm_const(k, dfts.len()) / wsum;
    let values = DMatrix::from_column_slice(rows, d, &acc).map(|v| v * scale);
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Propagation("non-finite spectral estimate".into()));
    }
    Ok(SpectralArray {
        order: k,
        frequency: freqs.clone(),
        values,
        rate: config.rate(k, dfts.len()),
    })
}

/// Order tag of a target matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetOrder {
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "34")]
    ThreeFour,
}

impl TargetOrder {
    /// The spectral orders the target is built from.
    pub fn spectral_orders(self) -> &'static [usize] {
        match self {
            TargetOrder::Three => &[3],
            TargetOrder::Four => &[4],
            TargetOrder::ThreeFour => &[3, 4],
        }
    }

    /// Order used for the convergence rate (the higher one for the stack).
    pub fn rate_order(self) -> usize {
        match self {
            TargetOrder::Three => 3,
            _ => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TargetOrder::Three => "3",
            TargetOrder::Four => "4",
            TargetOrder::ThreeFour => "34",
        }
    }
}

impl std::str::FromStr for TargetOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "3" => Ok(TargetOrder::Three),
            "4" => Ok(TargetOrder::Four),
            "34" => Ok(TargetOrder::ThreeFour),
            other => Err(Error::Validation(format!(
                "order must be 3, 4 or 34, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for TargetOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// `Pi = Re(G* G)` (`d x d`), or the `2d x d` stack for order 34.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub values: DMatrix<f64>,
    /// Implied frequency in radians.
    pub frequency: f64,
    pub order: TargetOrder,
}

impl TargetMatrix {
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn vectorized(&self) -> Vec<f64> {
        linalg::vec_of(&self.values)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .values
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Count of singular values above `rel_tol * sigma_max`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        linalg::numerical_rank(&self.values, rel_tol)
    }

    /// For single-order targets: symmetric and no eigenvalue below
    /// `-1e-8 * max`.
    pub fn is_symmetric_psd(&self) -> bool {
        let m = &self.values;
        if m.nrows() != m.ncols() {
            return false;
        }
        let scale = m.abs().max();
        if (m - m.transpose()).abs().max() > 1e-12 * scale.max(1.0) {
            return false;
        }
        let (vals, _) = linalg::sorted_symmetric_eigen(m);
        let max = vals.first().copied().unwrap_or(0.0);
        vals.iter().all(|&v| v >= -1e-8 * max.abs().max(f64::MIN_POSITIVE))
    }
}

/// `Re(G* G)` for a single-order spectrum, symmetrized.
pub fn target_matrix(spec: &SpectralArray) -> Result<TargetMatrix> {
    let order = match spec.order {
        3 => TargetOrder::Three,
        4 => TargetOrder::Four,
        k => return Err(Error::UnsupportedOrder(k)),
    };
    Ok(TargetMatrix {
        values: gram_real(&spec.values),
        frequency: spec.frequency.target_radians(),
        order,
    })
}

fn gram_real(g: &DMatrix<C64>) -> DMatrix<f64> {
    linalg::symmetrize(&(g.adjoint() * g).map(|v| v.re))
}

fn normalized(m: DMatrix<f64>) -> DMatrix<f64> {
    let top = m.clone().svd(false, false).singular_values.max();
    if top > 0.0 {
        m / top
    } else {
        m
    }
}

/// Stacks the third- and fourth-order targets, each divided by its largest
/// singular value, into a `2d x d` matrix.
pub fn stacked_target(third: &SpectralArray, fourth: &SpectralArray) -> Result<TargetMatrix> {
    if third.order != 3 || fourth.order != 4 {
        return Err(Error::Shape("stacking needs an order-3 and an order-4 spectrum".into()));
    }
    if third.dim() != fourth.dim() {
        return Err(Error::Shape(format!(
            "spectra have dimensions {} and {}",
            third.dim(),
            fourth.dim()
        )));
    }
    if third.frequency.indices()[0] != fourth.frequency.indices()[0]
        || third.frequency.n_dft() != fourth.frequency.n_dft()
    {
        return Err(Error::FrequencyConstraint(
            "stacked spectra must share the implied frequency".into(),
        ));
    }
    let d = third.dim();
    let top = normalized(gram_real(&third.values));
    let bottom = normalized(gram_real(&fourth.values));
    let mut values = DMatrix::zeros(2 * d, d);
    values.rows_mut(0, d).copy_from(&top);
    values.rows_mut(d, d).copy_from(&bottom);
    Ok(TargetMatrix {
        values,
        frequency: third.frequency.target_radians(),
        order: TargetOrder::ThreeFour,
    })
}

/// Estimates the target matrix of `order` at implied frequency `lambda`.
pub fn target_at(
    dfts: &ResidualDfts,
    order: TargetOrder,
    lambda: f64,
    config: &SmoothingConfig,
) -> Result<TargetMatrix> {
    let spec = |k: usize| -> Result<SpectralArray> {
        let tuple = FrequencyTuple::for_target(k, config.n_dft, lambda)?;
        estimate_spectrum_with(dfts, &tuple, config)
    };
    match order {
        TargetOrder::Three => target_matrix(&spec(3)?),
        TargetOrder::Four => target_matrix(&spec(4)?),
        TargetOrder::ThreeFour => stacked_target(&spec(3)?, &spec(4)?),
    }
}

/// Equispaced grid of `points` frequencies on `[0, pi]` (a single point gives
/// `{0}`).
pub fn frequency_grid(points: usize) -> Result<Vec<f64>> {
    match points {
        0 => Err(Error::Config("frequency grid must be nonempty".into())),
        1 => Ok(vec![0.0]),
        n => Ok((0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect()),
    }
}

/// Order-`k` spectrum of `u_t = B eps_t` for iid `eps_t` with independent
/// components whose marginal order-`k` cumulants are `marginals`.
pub fn population_spectrum(order: usize, marginals: &[f64], mixing: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = marginals.len();
    if mixing.shape() != (d, d) {
        return Err(Error::Shape(format!("mixing matrix must be {d}x{d}")));
    }
    let v = CumulantMatrix::from_marginals(order, marginals)?;
    let mut left = mixing.clone();
    for _ in 2..order {
        left = left.kronecker(mixing);
    }
    Ok(left * v.values() * mixing.transpose() / (2.0 * PI).powi(order as i32 - 1))
}

/// `Re(G* G)` of a real population spectrum.
pub fn population_target(order: usize, marginals: &[f64], mixing: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = population_spectrum(order, marginals, mixing)?;
    Ok(linalg::symmetrize(&(g.transpose() * g)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub order: usize,
    pub n_dft: usize,
    pub frequency: Vec<f64>,
    pub rate: f64,
    /// Row-major `[re, im]` pairs.
    pub values: Vec<Vec<[f64; 2]>>,
}

impl From<&SpectralArray> for SpectralReport {
    fn from(s: &SpectralArray) -> Self {
        Self {
            order: s.order,
            n_dft: s.frequency.n_dft(),
            frequency: s.frequency.radians(),
            rate: s.rate,
            values: (0..s.values.nrows())
                .map(|i| {
                    (0..s.values.ncols())
                        .map(|j| [s.values[(i, j)].re, s.values[(i, j)].im])
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetReport {
    pub order: TargetOrder,
    pub frequency: f64,
    pub values: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
}

impl From<&TargetMatrix> for TargetReport {
    fn from(t: &TargetMatrix) -> Self {
        Self {
            order: t.order,
            frequency: t.frequency,
            values: crate::varma::matrix_to_nested(&t.values),
            singular_values: t.singular_values(),
            numerical_rank: t.numerical_rank(DIAGNOSTIC_RANK_TOL),
        }
    }
}

/// Window overlaps of a smoothing grid with its coordinate permutations.
///
/// Depends only on the frequency tuple and the smoothing configuration, so it
/// can be computed once and reused across panels.
#[derive(Debug, Clone)]
pub struct WindowOverlaps {
    frequency: FrequencyTuple,
    perms: Vec<Vec<usize>>,
    /// Overlap with the same centres, per permutation.
    direct: Vec<f64>,
    /// Overlap with negated centres, per permutation.
    mirrored: Vec<f64>,
}

impl WindowOverlaps {
    pub fn new(freqs: &FrequencyTuple, config: &SmoothingConfig) -> Result<Self> {
        config.validate()?;
        let k = freqs.order();
        let n = config.n_dft as i64;
        let s = config.span as i64;
        let w = config.weights();
        let g: Vec<i64> = (0..k).map(|p| freqs.signed(p)).collect();
        let neg: Vec<i64> = g.iter().map(|&c| -c).collect();
        // weight of a full tuple read as a smoothing point around `centres`
        let weight_at = |f: &[i64], centres: &[i64]| -> f64 {
            let mut wt = 1.0;
            for m in 1..k {
                let diff = (f[m] - centres[m]).rem_euclid(n);
                let o = if diff <= s {
                    diff
                } else if diff >= n - s {
                    diff - n
                } else {
                    return 0.0;
                };
                wt *= w[(o + s) as usize];
            }
            wt
        };
        let perms = permutations(k);
        // a permutation contributes only if every coordinate's centre can be
        // matched within the window width
        let reachable = |perm: &[usize], centres: &[i64]| {
            (0..k).all(|j| {
                let diff = (g[j] - centres[perm[j]]).rem_euclid(n);
                diff <= 2 * s || diff >= n - 2 * s
            })
        };
        let mut points: Vec<(Vec<i64>, f64)> = Vec::new();
        let mut wsum = 0.0;
        for_each_grid_point(freqs, config, |f, wt| {
            points.push((f.to_vec(), wt));
            wsum += wt;
        });
        let mut direct = vec![0.0; perms.len()];
        let mut mirrored = vec![0.0; perms.len()];
        let mut q = vec![0i64; k];
        for (pi, perm) in perms.iter().enumerate() {
            for (out, centres) in [(&mut direct, &g), (&mut mirrored, &neg)] {
                if !reachable(perm, centres) {
                    continue;
                }
                let mut acc = 0.0;
                for (f, wt) in &points {
                    for j in 0..k {
                        q[perm[j]] = f[j];
                    }
                    acc += wt * weight_at(&q, centres);
                }
                out[pi] = acc / (wsum * wsum);
            }
        }
        Ok(Self {
            frequency: freqs.clone(),
            perms,
            direct,
            mirrored,
        })
    }

    pub fn frequency(&self) -> &FrequencyTuple {
        &self.frequency
    }
}

/// Experimental large-sample covariance of `[Re vec G; Im vec G]` from the
/// leading (all-pairs) term of the covariance of smoothed periodograms.
///
/// The second-order spectral density is replaced by its smoothed estimate at
/// the centre of each coordinate.
pub fn plug_in_spectrum_covariance(
    dfts: &ResidualDfts,
    spec: &SpectralArray,
    config: &SmoothingConfig,
    overlaps: &WindowOverlaps,
) -> Result<DMatrix<f64>> {
    let k = spec.order;
    if !(3..=4).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    if overlaps.frequency != spec.frequency {
        return Err(Error::FrequencyConstraint(
            "window overlaps computed for a different tuple".into(),
        ));
    }
    let d = spec.dim();
    let t = dfts.len() as f64;
    let dens: Vec<DMatrix<C64>> = (0..k)
        .map(|p| {
            let tuple = FrequencyTuple::from_free(config.n_dft, &[-spec.frequency.signed(p)])?;
            let g2 = estimate_spectrum_with(dfts, &tuple, config)?;
            // f_{ab} = G2[b, a]
            Ok(g2.values.transpose())
        })
        .collect::<Result<Vec<_>>>()?;
    let len = d.pow(k as u32);
    let pref = (2.0 * PI).powi(2 - k as i32) * t.powi(k as i32 - 2);
    let idx: Vec<Vec<usize>> = (0..len)
        .map(|l| MultiIndex::from_linear(l, d, k).entries().to_vec())
        .collect();
    let mut v = DMatrix::<f64>::zeros(2 * len, 2 * len);
    for a in 0..len {
        for b in 0..len {
            let (mut c, mut p) = (Complex::new(0.0, 0.0), Complex::new(0.0, 0.0));
            for (pi, perm) in overlaps.perms.iter().enumerate() {
                let (oc, op) = (overlaps.direct[pi], overlaps.mirrored[pi]);
                if oc == 0.0 && op == 0.0 {
                    continue;
                }
                let mut prod = Complex::new(1.0, 0.0);
                for j in 0..k {
                    prod *= dens[j][(idx[a][j], idx[b][perm[j]])];
                }
                c += prod * oc;
                p += prod * op;
            }
            let (c, p) = (c * pref, p * pref);
            v[(a, b)] = (c + p).re / 2.0;
            v[(len + a, len + b)] = (c - p).re / 2.0;
            v[(a, len + b)] = (p - c).im / 2.0;
            v[(len + b, a)] = (p - c).im / 2.0;
        }
    }
    Ok(v)
}

/// Experimental delta-method covariance of `vec(Pi)` for a single-order
/// target, built on [`plug_in_spectrum_covariance`].
///
/// The linearization degenerates where `G` has null directions, so the
/// variance of those entries is not captured at the right order.
pub fn plug_in_covariance(
    dfts: &ResidualDfts,
    spec: &SpectralArray,
    config: &SmoothingConfig,
    overlaps: &WindowOverlaps,
) -> Result<DMatrix<f64>> {
    let v = plug_in_spectrum_covariance(dfts, spec, config, overlaps)?;
    let d = spec.dim();
    let rows = spec.values.nrows();
    let len = rows * d;
    let (re, im) = (spec.values.map(|z| z.re), spec.values.map(|z| z.im));
    // d Pi_ij / d x_{ri} = x_{rj} and d Pi_ij / d x_{rj} = x_{ri}
    let mut jac = DMatrix::<f64>::zeros(d * d, 2 * len);
    for i in 0..d {
        for j in 0..d {
            let out = i + j * d;
            for r in 0..rows {
                jac[(out, r + i * rows)] += re[(r, j)];
                jac[(out, r + j * rows)] += re[(r, i)];
                jac[(out, len + r + i * rows)] += im[(r, j)];
                jac[(out, len + r + j * rows)] += im[(r, i)];
            }
        }
    }
    Ok(linalg::symmetrize(&(&jac * v * jac.transpose())))
}


fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}
