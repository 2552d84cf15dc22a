//! The KP rank statistic.
//!
//! For an estimate `Pi` (`m x n`) with SVD `R1 L R2'`, the hypothesis
//! `rank(Pi) = r` is tested through the lower-right `(m-r) x (n-r)` block of
//! `L`, weighted by the covariance of its estimate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative eigenvalue cut-off for the Moore-Penrose inverse of the weighting
/// matrix.
pub const PINV_TOL: f64 = 1e-10;
/// Minimum number of replicates for [`estimate_xi`].
pub const MIN_XI_REPLICATES: usize = 50;

/// Two-block decomposition `Pi = C_r D_r + C_perp L_r D_perp`.
#[derive(Debug, Clone)]
pub struct SvdSplit {
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub r: usize,
    pub c_r: DMatrix<f64>,
    pub d_r: DMatrix<f64>,
    pub c_perp: DMatrix<f64>,
    pub d_perp: DMatrix<f64>,
    /// `(m - r) x (n - r)` tail block.
    pub tail: DMatrix<f64>,
}

impl SvdSplit {
    /// Column-major vectorization of the tail block.
    pub fn l_r_vec(&self) -> Vec<f64> {
        linalg::vec_of(&self.tail)
    }

    /// The last `n - r` right singular vectors.
    pub fn r2_tail(&self) -> DMatrix<f64> {
        let n = self.r2.ncols();
        self.r2.columns(self.r, n - self.r).into_owned()
    }

    /// The first `r` left singular vectors.
    pub fn r1_head(&self) -> DMatrix<f64> {
        self.r1.columns(0, self.r).into_owned()
    }

    /// Quasi-diagonal `R1' Pi R2`.
    pub fn quasi_diagonal(&self) -> DMatrix<f64> {
        let (m, n) = (self.r1.nrows(), self.r2.nrows());
        let mut l = DMatrix::zeros(m, n);
        for (i, &s) in self.singular_values.iter().enumerate() {
            l[(i, i)] = s;
        }
        l
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.c_r * &self.d_r + &self.c_perp * &self.tail * &self.d_perp
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(f64::MIN_POSITIVE)
}

/// Orthonormal bases `(R1, R2)` and sorted singular values of `pi`.
///
/// Symmetric inputs go through an eigendecomposition ordered by descending
/// `|eigenvalue|`; eigenvectors are signed so that their first entry above
/// `1e-12` in magnitude is positive, and `R1` absorbs the sign of negative
/// eigenvalues.
fn bases(pi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let (m, n) = pi.shape();
    if is_symmetric(pi) {
        let (vals, vecs) = linalg::sorted_symmetric_eigen(pi);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
        let mut r2 = DMatrix::from_fn(m, m, |i, j| vecs[(i, order[j])]);
        linalg::fix_column_signs(&mut r2);
        let mut r1 = r2.clone();
        let mut sv = Vec::with_capacity(m);
        for (j, &o) in order.iter().enumerate() {
            if vals[o] < 0.0 {
                r1.column_mut(j).neg_mut();
            }
            sv.push(vals[o].abs());
        }
        return (r1, r2, sv);
    }
    let svd = pi.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V'"));
    let k = m.min(n);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut u_s = DMatrix::from_fn(m, k, |i, j| u[(i, order[j])]);
    let mut v_s = DMatrix::from_fn(n, k, |i, j| vt[(order[j], i)]);
    // sign convention on the left vectors, mirrored on the right
    for j in 0..k {
        if let Some(&first) = u_s.column(j).iter().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                u_s.column_mut(j).neg_mut();
                v_s.column_mut(j).neg_mut();
            }
        }
    }
    let sv = order.iter().map(|&o| svd.singular_values[o]).collect();
    (linalg::complete_basis(&u_s), linalg::complete_basis(&v_s), sv)
}

/// Splits `pi` at hypothesized rank `r`.
pub fn svd_split(pi: &DMatrix<f64>, r: usize) -> Result<SvdSplit> {
    let (m, n) = pi.shape();
    if r >= m.min(n) {
        return Err(Error::Hypothesis(format!(
            "null rank {r} must be below min({m}, {n})"
        )));
    }
    if pi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Propagation("non-finite target matrix".into()));
    }
    let (r1, r2, sv) = bases(pi);
    let mut l = DMatrix::zeros(m, n);
    for (i, &s) in sv.iter().enumerate() {
        l[(i, i)] = s;
    }
    let c_r = r1.columns(0, r).into_owned();
    let d_r = l.view((0, 0), (r, r)) * r2.columns(0, r).transpose();
    let c_perp = r1.columns(r, m - r).into_owned();
    let d_perp = r2.columns(r, n - r).transpose();
    // the tail as C_perp' Pi D_perp' keeps off-diagonal rounding visible
    let tail = c_perp.transpose() * pi * d_perp.transpose();
    Ok(SvdSplit {
        r1,
        r2,
        singular_values: sv,
        r,
        c_r,
        d_r,
        c_perp,
        d_perp,
        tail,
    })
}

/// Source of the weighting covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    /// Covariance of unrestricted stationary-bootstrap replicates.
    Bootstrap,
    /// Covariance of replicates generated under the joint Gaussian null.
    RestrictedBootstrap,
    /// Experimental large-sample plug-in.
    PlugIn,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpStatistic {
    pub value: f64,
    pub r: usize,
    pub rate: f64,
    /// 2 for the general statistic, 4 for the first step.
    pub rate_power: i32,
    pub weighting: WeightingScheme,
    pub pinv_tolerance: f64,
    /// Retained rank of the weighting matrix.
    pub dof: usize,
    /// Implied frequency in radians.
    pub frequency: f64,
    pub singular_values: Vec<f64>,
}

/// `a^p l' [A Xi A']^+ l` with `A = D_perp (x) C_perp'`.
fn quadratic_form(split: &SvdSplit, xi: &DMatrix<f64>, factor: f64) -> Result<(f64, usize)> {
    let (m, n) = (split.r1.nrows(), split.r2.nrows());
    if xi.shape() != (m * n, m * n) {
        return Err(Error::Shape(format!(
            "weighting covariance is {:?}, expected {}x{}",
            xi.shape(),
            m * n,
            m * n
        )));
    }
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Propagation("non-finite weighting covariance".into()));
    }
    let a = split.d_perp.kronecker(&split.c_perp.transpose());
    let w = linalg::symmetrize(&(&a * xi * a.transpose()));
    let (inv, kept, max) = linalg::pinv_symmetric(&w, PINV_TOL);
    if !(max > 0.0) {
        return Err(Error::DegenerateWeighting(max));
    }
    let l = nalgebra::DVector::from_vec(split.l_r_vec());
    let value = factor * (l.transpose() * inv * &l)[(0, 0)];
    Ok((value.max(0.0), kept))
}

/// The KP statistic for null rank `split.r`.
pub fn kp_statistic(
    split: &SvdSplit,
    xi: &DMatrix<f64>,
    rate: f64,
    weighting: WeightingScheme,
    frequency: f64,
) -> Result<KpStatistic> {
    let (value, dof) = quadratic_form(split, xi, rate * rate)?;
    Ok(KpStatistic {
        value,
        r: split.r,
        rate,
        rate_power: 2,
        weighting,
        pinv_tolerance: PINV_TOL,
        dof,
        frequency,
        singular_values: split.singular_values.clone(),
    })
}

/// First-step statistic for the joint Gaussian null (`r = 0`) with rate
/// `a^4`; `q_cov` is the covariance of `vec(Pi)` under that null.
pub fn kp_first_step(
    split: &SvdSplit,
    q_cov: &DMatrix<f64>,
    rate: f64,
    frequency: f64,
) -> Result<KpStatistic> {
    if split.r != 0 {
        return Err(Error::Hypothesis(format!(
            "first-step statistic needs r = 0, got {}",
            split.r
        )));
    }
    let (value, dof) = quadratic_form(split, q_cov, rate.powi(4))?;
    Ok(KpStatistic {
        value,
        r: 0,
        rate,
        rate_power: 4,
        weighting: WeightingScheme::RestrictedBootstrap,
        pinv_tolerance: PINV_TOL,
        dof,
        frequency,
        singular_values: split.singular_values.clone(),
    })
}

/// Maximum over a frequency grid.
pub fn max_statistic(stats: &[KpStatistic]) -> Result<KpStatistic> {
    let first = stats
        .first()
        .ok_or_else(|| Error::Config("empty frequency grid".into()))?;
    if stats
        .iter()
        .any(|s| s.r != first.r || s.weighting != first.weighting)
    {
        return Err(Error::Config(
            "grid statistics must share the null rank and weighting".into(),
        ));
    }
    let best = stats
        .iter()
        .fold(first, |b, s| if s.value > b.value { s } else { b });
    Ok(best.clone())
}

/// Sample covariance (divisor `n - 1`) of replicate vectors, symmetrized.
pub fn estimate_xi(replicates: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if replicates.len() < MIN_XI_REPLICATES {
        return Err(Error::InsufficientReplicates {
            got: replicates.len(),
            need: MIN_XI_REPLICATES,
        });
    }
    let p = replicates[0].len();
    if replicates.iter().any(|r| r.len() != p) {
        return Err(Error::Shape("replicate vectors differ in length".into()));
    }
    let n = replicates.len();
    let x = DMatrix::from_fn(n, p, |i, j| replicates[i][j]);
    let mean = x.row_mean();
    let mut c = x;
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / (n - 1) as f64;
    Ok(linalg::symmetrize(&cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, &[]);
        DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut r))
    }

    #[test]
    fn exact_low_rank_has_zero_tail() {
        let pi = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 0.0]));
        let s = svd_split(&pi, 1).unwrap();
        assert_eq!(s.l_r_vec().len(), 1);
        assert!(s.l_r_vec()[0].abs() < 1e-15);
    }

    #[test]
    fn identity_tail_at_rank_zero() {
        let s = svd_split(&DMatrix::identity(3, 3), 0).unwrap();
        assert_eq!(s.l_r_vec().len(), 9);
        assert!((&s.tail - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn random_psd_reconstruction() {
        let a = random_matrix(3, 3, 1);
        let pi = &a * a.transpose();
        for r in 0..3 {
            let s = svd_split(&pi, r).unwrap();
            assert!((s.reconstruct() - &pi).abs().max() < 1e-10);
            let l = s.r1.transpose() * &pi * &s.r2;
            assert!((l - s.quasi_diagonal()).abs().max() < 1e-10);
            let cross = s.c_perp.transpose() * &s.c_r;
            assert!(cross.abs().max() < 1e-10);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn symmetric_indefinite_split() {
        let pi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -3.0]);
        let s = svd_split(&pi, 1).unwrap();
        assert!((s.reconstruct() - &pi).abs().max() < 1e-12);
        assert!(s.singular_values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rectangular_split() {
        let pi = random_matrix(4, 2, 2);
        for r in 0..2 {
            let s = svd_split(&pi, r).unwrap();
            assert_eq!(s.tail.shape(), (4 - r, 2 - r));
            assert!((s.reconstruct() - &pi).abs().max() < 1e-10);
            assert!((s.r1.transpose() * &s.r1 - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn rank_out_of_range() {
        assert!(matches!(
            svd_split(&DMatrix::identity(2, 2), 2),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn kp_zero_when_tail_zero() {
        let pi = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 0.0]));
        let s = svd_split(&pi, 1).unwrap();
        let kp = kp_statistic(&s, &DMatrix::identity(4, 4), 5.0, WeightingScheme::Identity, 0.0).unwrap();
        assert_eq!(kp.value, 0.0);
    }

    #[test]
    fn identity_weighting_is_squared_norm() {
        let a = random_matrix(3, 3, 3);
        let pi = &a * a.transpose();
        let s = svd_split(&pi, 1).unwrap();
        let rate = 2.5;
        let kp = kp_statistic(&s, &DMatrix::identity(9, 9), rate, WeightingScheme::Identity, 0.0).unwrap();
        let norm2: f64 = s.l_r_vec().iter().map(|x| x * x).sum();
        assert!((kp.value - rate * rate * norm2).abs() < 1e-10 * kp.value);
        assert_eq!(kp.dof, 4);
    }

    #[test]
    fn zero_weighting_is_degenerate() {
        let s = svd_split(&DMatrix::identity(2, 2), 0).unwrap();
        assert!(matches!(
            kp_statistic(&s, &DMatrix::zeros(4, 4), 1.0, WeightingScheme::Bootstrap, 0.0),
            Err(Error::DegenerateWeighting(_))
        ));
    }

    #[test]
    fn first_step_requires_rank_zero() {
        let s = svd_split(&DMatrix::identity(2, 2), 1).unwrap();
        assert!(kp_first_step(&s, &DMatrix::identity(4, 4), 1.0, 0.0).is_err());
        let z = svd_split(&DMatrix::zeros(2, 2), 0).unwrap();
        let kp = kp_first_step(&z, &DMatrix::identity(4, 4), 3.0, 0.0).unwrap();
        assert_eq!(kp.value, 0.0);
    }

    #[test]
    fn max_over_grid() {
        let s = svd_split(&DMatrix::identity(2, 2), 0).unwrap();
        let stats: Vec<KpStatistic> = [1.0, 7.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &rate)| {
                kp_statistic(&s, &DMatrix::identity(4, 4), rate, WeightingScheme::Identity, i as f64).unwrap()
            })
            .collect();
        let m = max_statistic(&stats).unwrap();
        assert_eq!(m.frequency, 1.0);
        assert_eq!(max_statistic(&stats[..1]).unwrap().value, stats[0].value);
        assert!(matches!(max_statistic(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn xi_estimates() {
        let same = vec![vec![1.0, 2.0]; 60];
        assert_eq!(estimate_xi(&same).unwrap(), DMatrix::zeros(2, 2));
        assert!(matches!(
            estimate_xi(&same[..10]),
            Err(Error::InsufficientReplicates { got: 10, need: 50 })
        ));
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, -0.3, 0.2, 0.7]);
        let v = &l * l.transpose();
        let mut r = rng::stream(4, &[]);
        let reps: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let z = nalgebra::DVector::from_fn(3, |_, _| StandardNormal.sample(&mut r));
                (&l * z).iter().copied().collect()
            })
            .collect();
        let est = estimate_xi(&reps).unwrap();
        assert!((&est - &v).norm() < 0.2 * v.norm());
        assert!(linalg::sorted_symmetric_eigen(&est).0.iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn kp_invariant_to_complement_basis() {
        let a = random_matrix(3, 3, 5);
        let pi = &a * a.transpose();
        let xi = {
            let b = random_matrix(9, 9, 6);
            &b * b.transpose()
        };
        let s = svd_split(&pi, 1).unwrap();
        let base = kp_statistic(&s, &xi, 1.0, WeightingScheme::Bootstrap, 0.0).unwrap().value;
        let (c, sn) = (0.6f64, 0.8f64);
        let q = DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
        let mut rotated = s.clone();
        rotated.c_perp = &s.c_perp * &q;
        rotated.tail = rotated.c_perp.transpose() * &pi * rotated.d_perp.transpose();
        let other = kp_statistic(&rotated, &xi, 1.0, WeightingScheme::Bootstrap, 0.0).unwrap().value;
        assert!((base - other).abs() < 1e-8 * base.max(1.0));
    }

    #[test]
    fn chi_square_calibration() {
        let (m, n, r) = (3, 4, 1);
        let mut rg = rng::stream(7, &[]);
        let u = random_matrix(m, 1, 8);
        let v = random_matrix(1, n, 9);
        let pi = &u * &v * 2.0;
        let lxi = random_matrix(m * n, m * n, 10);
        let xi = &lxi * lxi.transpose() / (m * n) as f64;
        let rate = 1e3;
        let draws = 2000;
        let mut values = Vec::with_capacity(draws);
        let mut dof = 0;
        for _ in 0..draws {
            let z = nalgebra::DVector::from_fn(m * n, |_, _| StandardNormal.sample(&mut rg));
            let e = &lxi * z / ((m * n) as f64).sqrt() / rate;
            let est = &pi + DMatrix::from_column_slice(m, n, e.as_slice());
            let s = svd_split(&est, r).unwrap();
            let kp = kp_statistic(&s, &xi, rate, WeightingScheme::Bootstrap, 0.0).unwrap();
            dof = kp.dof;
            values.push(kp.value);
        }
        assert_eq!(dof, (m - r) * (n - r));
        values.sort_by(f64::total_cmp);
        let chi = ChiSquared::new(dof as f64).unwrap();
        let ks = values
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = chi.cdf(x);
                (f - i as f64 / draws as f64).abs().max(((i + 1) as f64 / draws as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.08, "KS distance {ks}");
    }

    proptest! {
        #[test]
        fn reconstruction_holds(vals in proptest::collection::vec(-5.0f64..5.0, 12), r in 0usize..3, sym in any::<bool>()) {
            let a = DMatrix::from_column_slice(4, 3, &vals);
            let pi = if sym { a.transpose() * &a } else { a };
            let s = svd_split(&pi, r).unwrap();
            prop_assert!((s.reconstruct() - &pi).abs().max() < 1e-10 * pi.abs().max().max(1.0));
        }

        #[test]
        fn identity_weighted_kp_decreases_in_rank(vals in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let a = DMatrix::from_column_slice(3, 3, &vals);
            let pi = &a * a.transpose();
            let mut prev = f64::INFINITY;
            for r in 0..3 {
                let s = svd_split(&pi, r).unwrap();
                let kp = kp_statistic(&s, &DMatrix::identity(9, 9), 1.0, WeightingScheme::Identity, 0.0).unwrap();
                prop_assert!(kp.value <= prev * (1.0 + 1e-12) + 1e-12);
                prev = kp.value;
            }
        }
    }
}
