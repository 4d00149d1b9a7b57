//! Power policies: maps from user speed to normalized transmit power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speed::SpeedModel;

/// Speed classes `ℐ_1..ℐ_I` with their probabilities and conditional
/// inverse speeds `Υ_i = E[1/V | V ∈ ℐ_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedClasses {
    edges: Vec<f64>,
    probs: Vec<f64>,
    cond_inv_speed: Vec<f64>,
}

impl SpeedClasses {
    /// Splits the support of `speed` at `edges` (which must start at `v_min`
    /// and end at `v_max`, strictly increasing).
    pub fn from_edges(speed: &SpeedModel, edges: Vec<f64>) -> Result<Self> {
        let (lo, hi) = speed.support();
        if edges.len() < 2 {
            return Err(Error::invalid("SpeedClasses: need at least one interval"));
        }
        if (edges[0] - lo).abs() > 1e-12 * hi || (edges[edges.len() - 1] - hi).abs() > 1e-12 * hi {
            return Err(Error::invalid(format!(
                "SpeedClasses: edges must cover [{lo}, {hi}], got [{}, {}]",
                edges[0],
                edges[edges.len() - 1]
            )));
        }
        if matches!(speed, SpeedModel::Fixed { .. }) {
            if edges.len() != 2 {
                return Err(Error::invalid("SpeedClasses: a fixed speed supports a single class"));
            }
        } else if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("SpeedClasses: edges must be strictly increasing"));
        }
        let probs: Vec<f64> = edges.windows(2).map(|w| speed.probability(w[0], w[1])).collect();
        let cond_inv_speed = edges
            .windows(2)
            .map(|w| speed.conditional_mean_inverse(w[0], w[1]))
            .collect();
        Self::new(edges, probs, cond_inv_speed)
    }

    /// `count` intervals of equal width over the support.
    pub fn uniform(speed: &SpeedModel, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("SpeedClasses: class count must be positive"));
        }
        let (lo, hi) = speed.support();
        if matches!(speed, SpeedModel::Fixed { .. }) {
            if count != 1 {
                return Err(Error::invalid("SpeedClasses: a fixed speed supports a single class"));
            }
            return Self::from_edges(speed, vec![lo, hi]);
        }
        let edges = (0..=count)
            .map(|i| {
                if i == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / count as f64
                }
            })
            .collect();
        Self::from_edges(speed, edges)
    }

    /// Builds classes from precomputed parts.
    pub fn new(edges: Vec<f64>, probs: Vec<f64>, cond_inv_speed: Vec<f64>) -> Result<Self> {
        let count = probs.len();
        if count == 0 || cond_inv_speed.len() != count || edges.len() != count + 1 {
            return Err(Error::invalid("SpeedClasses: inconsistent lengths"));
        }
        if probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid(format!(
                "SpeedClasses: every class needs positive probability, got {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "SpeedClasses: probabilities sum to {total}, not 1"
            )));
        }
        if cond_inv_speed.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            return Err(Error::invalid(
                "SpeedClasses: conditional inverse speeds must be positive",
            ));
        }
        Ok(SpeedClasses {
            edges,
            probs,
            cond_inv_speed,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cond_inv_speed(&self) -> &[f64] {
        &self.cond_inv_speed
    }

    /// `Σ p_i Υ_i`, which equals `E[1/V]` of the underlying model.
    pub fn mixture_mean_inverse(&self) -> f64 {
        self.probs.iter().zip(&self.cond_inv_speed).map(|(p, u)| p * u).sum()
    }

    /// Index of the class containing `v`; speeds outside the support map to
    /// the nearest end class.
    pub fn class_of(&self, v: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= v)
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }
}

/// A rule assigning transmit power to a user of speed `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerPolicy {
    /// Everybody transmits at `pbar`.
    Equal { pbar: f64 },
    /// Class `i` transmits at `powers[i]`.
    Discrete { classes: SpeedClasses, powers: Vec<f64> },
    /// `P(v) = pbar + slope·(v − mean_speed)`.
    Linear { pbar: f64, slope: f64, mean_speed: f64 },
    /// `P(v) = α·pbar + (1 − α)·pbar·v / mean_speed`.
    AlphaRule { pbar: f64, alpha: f64, mean_speed: f64 },
    /// `P(v) = scale·v^exponent`.
    Monomial { scale: f64, exponent: f64 },
}

impl PowerPolicy {
    pub fn equal(pbar: f64) -> Self {
        PowerPolicy::Equal { pbar }
    }

    pub fn alpha_rule(pbar: f64, alpha: f64, speed: &SpeedModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(PowerPolicy::AlphaRule {
            pbar,
            alpha,
            mean_speed: speed.mean_speed(),
        })
    }

    /// `scale·v^exponent` with `scale` chosen so that `E[P(V)] = pbar`.
    pub fn monomial(pbar: f64, exponent: f64, speed: &SpeedModel) -> Self {
        let moment = speed.expect(|v| v.powf(exponent));
        PowerPolicy::Monomial {
            scale: pbar / moment,
            exponent,
        }
    }

    pub fn evaluate(&self, v: f64) -> f64 {
        match self {
            PowerPolicy::Equal { pbar } => *pbar,
            PowerPolicy::Discrete { classes, powers } => powers[classes.class_of(v)],
            PowerPolicy::Linear {
                pbar,
                slope,
                mean_speed,
            } => pbar + slope * (v - mean_speed),
            PowerPolicy::AlphaRule {
                pbar,
                alpha,
                mean_speed,
            } => alpha * pbar + (1.0 - alpha) * pbar * v / mean_speed,
            PowerPolicy::Monomial { scale, exponent } => scale * v.powf(*exponent),
        }
    }

    /// `E[P(V)]` under `speed`.
    pub fn average_power(&self, speed: &SpeedModel) -> f64 {
        match self {
            PowerPolicy::Equal { pbar } => *pbar,
            PowerPolicy::Discrete { classes, powers } => classes.probs().iter().zip(powers).map(|(p, q)| p * q).sum(),
            PowerPolicy::Linear {
                pbar,
                slope,
                mean_speed,
            } => pbar + slope * (speed.mean_speed() - mean_speed),
            PowerPolicy::AlphaRule {
                pbar,
                alpha,
                mean_speed,
            } => alpha * pbar + (1.0 - alpha) * pbar * speed.mean_speed() / mean_speed,
            PowerPolicy::Monomial { .. } => speed.expect(|v| self.evaluate(v)),
        }
    }

    /// Checks `P(v) > 0` over the support of `speed`.
    pub fn check_positive(&self, speed: &SpeedModel) -> Result<()> {
        let (lo, hi) = speed.support();
        let worst = match self {
            PowerPolicy::Discrete { powers, .. } => powers.iter().cloned().fold(f64::INFINITY, f64::min),
            _ => self.evaluate(lo).min(self.evaluate(hi)),
        };
        if worst > 0.0 && worst.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "power policy allocates non-positive power {worst} on [{lo}, {hi}]"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_is_equal_power() {
        let s = SpeedModel::uniform(5.0, 25.0).unwrap();
        let p = PowerPolicy::alpha_rule(0.75, 1.0, &s).unwrap();
        for v in [5.0, 12.0, 25.0] {
            assert_eq!(p.evaluate(v), 0.75);
        }
        assert!(PowerPolicy::alpha_rule(0.75, 1.2, &s).is_err());
    }

    #[test]
    fn average_power_budgets() {
        let s = SpeedModel::uniform(5.0, 25.0).unwrap();
        for alpha in [0.0, 0.3, 0.7] {
            let p = PowerPolicy::alpha_rule(0.7, alpha, &s).unwrap();
            assert!((p.average_power(&s) - 0.7).abs() < 1e-15);
        }
        for k in [-2.5, 0.5, 2.0] {
            let p = PowerPolicy::monomial(0.7, k, &s);
            assert!((p.average_power(&s) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn class_lookup() {
        let s = SpeedModel::uniform(10.0, 20.0).unwrap();
        let c = SpeedClasses::uniform(&s, 4).unwrap();
        assert_eq!(c.class_of(10.0), 0);
        assert_eq!(c.class_of(12.49), 0);
        assert_eq!(c.class_of(12.5), 1);
        assert_eq!(c.class_of(20.0), 3);
        assert!((c.mixture_mean_inverse() - s.mean_inverse()).abs() < 1e-14);
        assert!(c.cond_inv_speed().windows(2).all(|w| w[1] < w[0]));
    }
}
