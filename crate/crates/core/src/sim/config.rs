use serde::{Deserialize, Serialize};

use crate::analytic::{CellGeometry, TrafficModel};
use crate::error::{Error, Result};
use crate::policy::PowerPolicy;
use crate::speed::SpeedModel;

/// How a user's transmission rate is chosen each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateScheme {
    /// The capacity at the far edge of the user's rate region, for the user's
    /// own power (the analytic model's rate structure).
    Regions,
    /// The largest rate of a common, strictly decreasing set that does not
    /// exceed the user's SNR (or SINR).
    Common(Vec<f64>),
}

impl RateScheme {
    pub fn validate(&self) -> Result<()> {
        if let RateScheme::Common(rates) = self {
            if rates.is_empty() {
                return Err(Error::config("rate set is empty"));
            }
            if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return Err(Error::config(format!("rate set has non-positive entries: {rates:?}")));
            }
            if rates.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::config("rate set must be strictly decreasing"));
            }
        }
        Ok(())
    }
}

/// Which users of other cells interfere with a tagged user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceScope {
    /// Only users holding the same server (channel) index in their own cell.
    #[default]
    SameChannel,
    /// Every in-service user of every other cell.
    AllUsers,
}

/// Everything one simulator run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Towers on the ring; the road leaving the last cell enters the first.
    pub towers: usize,
    /// Time step δ, seconds.
    pub dt: f64,
    pub geom: CellGeometry,
    /// A cell receives `traffic.lambda · L` new calls per second.
    pub traffic: TrafficModel,
    pub speed: SpeedModel,
    pub policy: PowerPolicy,
    pub rates: RateScheme,
    /// Noise variance dividing the interference term.
    pub sigma2: Option<f64>,
    pub interference: bool,
    pub scope: InterferenceScope,
    pub seed: u64,
    /// Events before this time are not counted.
    pub warmup: f64,
    pub horizon: f64,
    /// Number of batch-means batches covering `[warmup, horizon)`.
    pub batches: usize,
}

/// Minimum batch count for trustworthy confidence intervals.
pub const MIN_BATCHES: usize = 30;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.towers == 0 {
            return Err(Error::config("need at least one tower"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("δ must be positive, got {}", self.dt)));
        }
        self.speed.validate().map_err(|e| Error::config(e.to_string()))?;
        if self.traffic.regions() != self.geom.regions() {
            return Err(Error::config(format!(
                "arrival distribution covers {} regions but the cell has {}",
                self.traffic.regions(),
                self.geom.regions()
            )));
        }
        let (_, vmax) = self.speed.support();
        let region = self.geom.half_length() / self.geom.regions() as f64;
        if !(vmax * self.dt < region / 4.0) {
            return Err(Error::config(format!(
                "δ = {} moves a {vmax} m/s user {} m per step; must stay below (L/N)/4 = {}",
                self.dt,
                vmax * self.dt,
                region / 4.0
            )));
        }
        self.rates.validate()?;
        self.policy
            .check_positive(&self.speed)
            .map_err(|e| Error::config(e.to_string()))?;
        if self.interference {
            match self.sigma2 {
                Some(s) if s > 0.0 && s.is_finite() => {}
                _ => return Err(Error::config("interference needs a positive noise variance σ²")),
            }
        }
        if !(self.warmup > 0.0 && self.horizon > self.warmup && self.horizon.is_finite()) {
            return Err(Error::config(format!(
                "need horizon > warmup > 0, got warmup {} and horizon {}",
                self.warmup, self.horizon
            )));
        }
        if self.batches < 2 {
            return Err(Error::config("need at least two batches"));
        }
        Ok(())
    }

    /// Ring circumference, meters.
    pub fn ring_length(&self) -> f64 {
        2.0 * self.geom.half_length() * self.towers as f64
    }

    /// New calls per second over the whole ring.
    pub fn system_arrival_rate(&self) -> f64 {
        self.traffic.lambda * self.geom.half_length() * self.towers as f64
    }

    /// Warmup of `max(10% of horizon, 200 cell crossing times)`.
    pub fn default_warmup(geom: &CellGeometry, speed: &SpeedModel, horizon: f64) -> f64 {
        let crossing = 2.0 * geom.half_length() * speed.mean_inverse();
        (0.1 * horizon).max(200.0 * crossing)
    }
}
