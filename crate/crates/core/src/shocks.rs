//! Standardized structural-shock distributions.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marginal law of one structural shock, always rescaled to mean 0 and
/// variance 1 before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ShockDistribution {
    Gaussian,
    /// `E - 1` with `E ~ Exp(1)`: skewness 2, excess kurtosis 6.
    Exponential,
    /// Finite Gaussian mixture; `variances` are component variances.
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// Fleishman power transform `a + bZ + cZ^2 + dZ^3` of a standard normal
    /// matching the requested skewness and excess kurtosis.
    Moments { skewness: f64, excess_kurtosis: f64 },
}

impl ShockDistribution {
    /// The skewed two-component mixture built from `N(10, 0.75)` and
    /// `N(-2, 4)`, weighted 0.2 / 0.8 so that its skewness is positive.
    pub fn mn1() -> Self {
        ShockDistribution::Mixture {
            weights: vec![0.2, 0.8],
            means: vec![10.0, -2.0],
            variances: vec![0.75, 4.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ShockDistribution::Gaussian | ShockDistribution::Exponential => Ok(()),
            ShockDistribution::Mixture {
                weights,
                means,
                variances,
            } => {
                if weights.is_empty()
                    || weights.len() != means.len()
                    || weights.len() != variances.len()
                {
                    return Err(Error::Model("mixture parameter lengths differ".into()));
                }
                if weights.iter().any(|w| !(*w > 0.0)) || variances.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Model(
                        "mixture weights and variances must be positive".into(),
                    ));
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::Model("mixture weights must sum to one".into()));
                }
                Ok(())
            }
            ShockDistribution::Moments {
                skewness,
                excess_kurtosis,
            } => fleishman_coefficients(*skewness, *excess_kurtosis).map(|_| ()),
        }
    }

    fn mixture_central_moments(weights: &[f64], means: &[f64], variances: &[f64]) -> [f64; 4] {
        let mu: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
        let mut m = [mu, 0.0, 0.0, 0.0];
        for ((w, mean), v) in weights.iter().zip(means).zip(variances) {
            let dm = mean - mu;
            m[1] += w * (dm * dm + v);
            m[2] += w * (dm.powi(3) + 3.0 * dm * v);
            m[3] += w * (dm.powi(4) + 6.0 * dm * dm * v + 3.0 * v * v);
        }
        m
    }

    /// Population skewness (third cumulant of the standardized law).
    pub fn skewness(&self) -> f64 {
        match self {
            ShockDistribution::Gaussian => 0.0,
            ShockDistribution::Exponential => 2.0,
            ShockDistribution::Mixture {
                weights,
                means,
                variances,
            } => {
                let m = Self::mixture_central_moments(weights, means, variances);
                m[2] / m[1].powf(1.5)
            }
            ShockDistribution::Moments { skewness, .. } => *skewness,
        }
    }

    /// Population excess kurtosis (fourth cumulant of the standardized law).
    pub fn excess_kurtosis(&self) -> f64 {
        match self {
            ShockDistribution::Gaussian => 0.0,
            ShockDistribution::Exponential => 6.0,
            ShockDistribution::Mixture {
                weights,
                means,
                variances,
            } => {
                let m = Self::mixture_central_moments(weights, means, variances);
                m[3] / (m[1] * m[1]) - 3.0
            }
            ShockDistribution::Moments {
                excess_kurtosis, ..
            } => *excess_kurtosis,
        }
    }

    /// Returns a sampler with all standardization constants precomputed.
    pub fn sampler(&self) -> Result<ShockSampler> {
        self.validate()?;
        Ok(match self {
            ShockDistribution::Gaussian => ShockSampler::Gaussian,
            ShockDistribution::Exponential => ShockSampler::Exponential,
            ShockDistribution::Mixture {
                weights,
                means,
                variances,
            } => {
                let m = Self::mixture_central_moments(weights, means, variances);
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in weights {
                    acc += w;
                    cumulative.push(acc);
                }
                ShockSampler::Mixture {
                    cumulative,
                    means: means.clone(),
                    sds: variances.iter().map(|v| v.sqrt()).collect(),
                    center: m[0],
                    scale: m[1].sqrt(),
                }
            }
            ShockDistribution::Moments {
                skewness,
                excess_kurtosis,
            } => {
                let [b, c, d] = fleishman_coefficients(*skewness, *excess_kurtosis)?;
                ShockSampler::Fleishman { b, c, d }
            }
        })
    }
}

/// Draws standardized variates from a [`ShockDistribution`].
#[derive(Debug, Clone)]
pub enum ShockSampler {
    Gaussian,
    Exponential,
    Mixture {
        cumulative: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
        center: f64,
        scale: f64,
    },
    Fleishman {
        b: f64,
        c: f64,
        d: f64,
    },
}

impl ShockSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ShockSampler::Gaussian => StandardNormal.sample(rng),
            ShockSampler::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            ShockSampler::Mixture {
                cumulative,
                means,
                sds,
                center,
                scale,
            } => {
                let u: f64 = rng.random();
                let comp = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(cumulative.len() - 1);
                let z: f64 = StandardNormal.sample(rng);
                (means[comp] + sds[comp] * z - center) / scale
            }
            ShockSampler::Fleishman { b, c, d } => {
                let z: f64 = StandardNormal.sample(rng);
                -c + b * z + c * z * z + d * z * z * z
            }
        }
    }
}

fn fleishman_residual(b: f64, c: f64, d: f64, skew: f64, kurt: f64) -> [f64; 3] {
    [
        b * b + 6.0 * b * d + 2.0 * c * c + 15.0 * d * d - 1.0,
        2.0 * c * (b * b + 24.0 * b * d + 105.0 * d * d + 2.0) - skew,
        24.0 * (b * d
            + c * c * (1.0 + b * b + 28.0 * b * d)
            + d * d * (12.0 + 48.0 * b * d + 141.0 * c * c + 225.0 * d * d))
            - kurt,
    ]
}

/// Solves the Fleishman moment equations by damped Newton iteration.
pub fn fleishman_coefficients(skew: f64, kurt: f64) -> Result<[f64; 3]> {
    if !skew.is_finite() || !kurt.is_finite() {
        return Err(Error::Model("non-finite target moments".into()));
    }
    // Feasibility bound for any distribution: kurt >= skew^2 - 2.
    if kurt < skew * skew - 2.0 {
        return Err(Error::Model(format!(
            "no distribution has skewness {skew} and excess kurtosis {kurt}"
        )));
    }
    let mut x = [1.0, 0.0, 0.0];
    for _ in 0..200 {
        let f = fleishman_residual(x[0], x[1], x[2], skew, kurt);
        let norm = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm < 1e-12 {
            return Ok(x);
        }
        let mut jac = nalgebra::Matrix3::zeros();
        for j in 0..3 {
            let h = 1e-7;
            let mut xp = x;
            xp[j] += h;
            let fp = fleishman_residual(xp[0], xp[1], xp[2], skew, kurt);
            for i in 0..3 {
                jac[(i, j)] = (fp[i] - f[i]) / h;
            }
        }
        let rhs = nalgebra::Vector3::new(-f[0], -f[1], -f[2]);
        let step = match jac.lu().solve(&rhs) {
            Some(s) => s,
            None => break,
        };
        let mut lambda = 1.0;
        loop {
            let cand = [x[0] + lambda * step[0], x[1] + lambda * step[1], x[2] + lambda * step[2]];
            let fc = fleishman_residual(cand[0], cand[1], cand[2], skew, kurt);
            let nc = fc.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if nc < norm || lambda < 1e-6 {
                x = cand;
                break;
            }
            lambda *= 0.5;
        }
    }
    let f = fleishman_residual(x[0], x[1], x[2], skew, kurt);
    if f.iter().all(|v| v.abs() < 1e-9) {
        Ok(x)
    } else {
        Err(Error::Model(format!(
            "power-transform moments (skewness {skew}, excess kurtosis {kurt}) are not attainable"
        )))
    }
}
