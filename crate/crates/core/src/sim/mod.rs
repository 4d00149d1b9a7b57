//! Time-stepped Monte-Carlo simulator of a ring of small cells.
//!
//! Cars drive one way around a ring of `n` cells of length `2L`, each with a
//! tower at its center and `K` servers. Each step spawns Poisson arrivals,
//! moves every car, hands calls over at cell edges (adding `s_h` bytes, or
//! dropping the call when the next cell is full), then serves every active
//! call at a rate picked from its SNR or SINR.

mod config;
mod engine;
mod report;

pub use config::{InterferenceScope, RateScheme, SimConfig, MIN_BATCHES};
pub use engine::{run, run_replications, select_rate, sinr, Origin, Simulator, UserState};
pub use report::{BatchTally, Counts, Estimate, MetricsReport};

use crate::error::Result;

/// Simulated handover probabilities and mean cell sojourn times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intermediate {
    pub p_e_ho: Estimate,
    pub p_h_ho: Estimate,
    pub b_e: Estimate,
    pub b_h: Estimate,
    pub insufficient_data: bool,
}

impl From<&MetricsReport> for Intermediate {
    fn from(r: &MetricsReport) -> Self {
        Intermediate {
            p_e_ho: r.p_e_ho,
            p_h_ho: r.p_h_ho,
            b_e: r.b_e,
            b_h: r.b_h,
            insufficient_data: r.insufficient_data,
        }
    }
}

/// Runs `config` and keeps the intermediate metrics.
pub fn estimate_intermediate(config: &SimConfig) -> Result<Intermediate> {
    Ok(Intermediate::from(&run(config)?))
}
