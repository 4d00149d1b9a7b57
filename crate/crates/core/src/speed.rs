//! User speed distributions.
//!
//! Speeds are in meters per second. Configuration files speak km/h; use
//! [`kmph`] to convert on the way in.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Converts km/h to m/s.
pub fn kmph(v: f64) -> f64 {
    v / 3.6
}

/// Distribution of a user's (constant) speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedModel {
    Uniform {
        min: f64,
        max: f64,
    },
    /// A Gaussian conditioned on landing inside `[min, max]`.
    TruncatedGaussian {
        min: f64,
        max: f64,
        mean: f64,
        variance: f64,
    },
    /// Every user travels at the same speed.
    Fixed {
        speed: f64,
    },
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

impl SpeedModel {
    pub fn uniform(min: f64, max: f64) -> Result<Self> {
        let m = SpeedModel::Uniform { min, max };
        m.validate()?;
        Ok(m)
    }

    pub fn truncated_gaussian(min: f64, max: f64, mean: f64, variance: f64) -> Result<Self> {
        let m = SpeedModel::TruncatedGaussian {
            min,
            max,
            mean,
            variance,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn fixed(speed: f64) -> Result<Self> {
        let m = SpeedModel::Fixed { speed };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SpeedModel::Uniform { min, max } => check_range(min, max),
            SpeedModel::TruncatedGaussian {
                min,
                max,
                mean,
                variance,
            } => {
                check_range(min, max)?;
                if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
                    return Err(Error::invalid(format!(
                        "SpeedModel: truncated Gaussian needs finite mean and positive variance, got mean {mean}, variance {variance}"
                    )));
                }
                if self.gaussian_mass() < 1e-9 {
                    return Err(Error::invalid(
                        "SpeedModel: truncated Gaussian puts no mass on [v_min, v_max]",
                    ));
                }
                Ok(())
            }
            SpeedModel::Fixed { speed } => {
                if speed > 0.0 && speed.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "SpeedModel: speed must be positive and finite, got {speed}"
                    )))
                }
            }
        }
    }

    /// `(v_min, v_max)`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            SpeedModel::Uniform { min, max } | SpeedModel::TruncatedGaussian { min, max, .. } => (min, max),
            SpeedModel::Fixed { speed } => (speed, speed),
        }
    }

    fn gaussian_mass(&self) -> f64 {
        match *self {
            SpeedModel::TruncatedGaussian {
                min,
                max,
                mean,
                variance,
            } => {
                let s = variance.sqrt();
                std_normal_cdf((max - mean) / s) - std_normal_cdf((min - mean) / s)
            }
            _ => 1.0,
        }
    }

    /// Density on the support. Not defined for `Fixed`, which returns 0.
    pub fn pdf(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if v < lo || v > hi {
            return 0.0;
        }
        match *self {
            SpeedModel::Uniform { min, max } => 1.0 / (max - min),
            SpeedModel::TruncatedGaussian { mean, variance, .. } => {
                let s = variance.sqrt();
                std_normal_pdf((v - mean) / s) / (s * self.gaussian_mass())
            }
            SpeedModel::Fixed { .. } => 0.0,
        }
    }

    /// `P(a <= V <= b)`.
    pub fn probability(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        match *self {
            SpeedModel::Fixed { speed } => {
                if a <= speed && speed <= b {
                    1.0
                } else {
                    0.0
                }
            }
            _ if b <= a => 0.0,
            SpeedModel::Uniform { min, max } => (b - a) / (max - min),
            SpeedModel::TruncatedGaussian { mean, variance, .. } => {
                let s = variance.sqrt();
                (std_normal_cdf((b - mean) / s) - std_normal_cdf((a - mean) / s)) / self.gaussian_mass()
            }
        }
    }

    /// `∫_a^b f(v) p_V(v) dv` (the partial expectation over `[a, b]`).
    pub fn partial_expectation<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        match *self {
            SpeedModel::Fixed { speed } => {
                if a <= speed && speed <= b {
                    f(speed)
                } else {
                    0.0
                }
            }
            _ if b <= a => 0.0,
            _ => quad::integrate(a, b, |v| f(v) * self.pdf(v)),
        }
    }

    /// `E[f(V)]`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, f: F) -> f64 {
        let (lo, hi) = self.support();
        self.partial_expectation(lo, hi, f)
    }

    /// `E[V]`.
    pub fn mean_speed(&self) -> f64 {
        match *self {
            SpeedModel::Uniform { min, max } => 0.5 * (min + max),
            SpeedModel::TruncatedGaussian {
                min,
                max,
                mean,
                variance,
            } => {
                let s = variance.sqrt();
                let (a, b) = ((min - mean) / s, (max - mean) / s);
                mean + s * (std_normal_pdf(a) - std_normal_pdf(b)) / self.gaussian_mass()
            }
            SpeedModel::Fixed { speed } => speed,
        }
    }

    /// `E[1/V]`.
    pub fn mean_inverse(&self) -> f64 {
        match *self {
            SpeedModel::Uniform { min, max } => (max / min).ln() / (max - min),
            SpeedModel::Fixed { speed } => 1.0 / speed,
            SpeedModel::TruncatedGaussian { .. } => self.expect(|v| 1.0 / v),
        }
    }

    /// `E[1/V | a <= V <= b]`.
    pub fn conditional_mean_inverse(&self, a: f64, b: f64) -> f64 {
        match *self {
            SpeedModel::Uniform { .. } => {
                let (lo, hi) = self.support();
                let (a, b) = (a.max(lo), b.min(hi));
                if b - a <= 1e-12 * b {
                    1.0 / a
                } else {
                    (b / a).ln() / (b - a)
                }
            }
            SpeedModel::Fixed { speed } => 1.0 / speed,
            SpeedModel::TruncatedGaussian { .. } => {
                let p = self.probability(a, b);
                self.partial_expectation(a, b, |v| 1.0 / v) / p
            }
        }
    }

    /// Draws one speed. Truncated Gaussians are sampled by rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SpeedModel::Uniform { min, max } => rng.gen_range(min..=max),
            SpeedModel::Fixed { speed } => speed,
            SpeedModel::TruncatedGaussian {
                min,
                max,
                mean,
                variance,
            } => {
                let normal = Normal::new(mean, variance.sqrt()).expect("validated variance");
                loop {
                    let v = normal.sample(rng);
                    if (min..=max).contains(&v) {
                        return v;
                    }
                }
            }
        }
    }
}

fn check_range(min: f64, max: f64) -> Result<()> {
    if !(min > 0.0 && min < max && max.is_finite()) {
        return Err(Error::invalid(format!(
            "SpeedModel: need 0 < v_min < v_max < inf, got [{min}, {max}]"
        )));
    }
    Ok(())
}
