use serde::Serialize;

use super::config::MIN_BATCHES;

const Z_95: f64 = 1.96;

/// A ratio estimate with its 95% batch-means half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.half_width
    }
}

/// Counters of one batch. Every call counted here was admitted after warmup.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchTally {
    /// New calls that arrived (admitted or blocked).
    pub arrivals: u64,
    pub blocked: u64,
    pub admitted: u64,
    pub handover_attempts: u64,
    pub drops: u64,
    pub completions: u64,
    /// Cell visits that began with a new call, and how many of them ended at
    /// the cell edge.
    pub new_visits: u64,
    pub new_visits_handed_over: u64,
    pub new_visit_time: f64,
    /// Cell visits that began with a handover.
    pub ho_visits: u64,
    pub ho_visits_handed_over: u64,
    pub ho_visit_time: f64,
}

impl BatchTally {
    fn absorb(&mut self, o: &BatchTally) {
        self.arrivals += o.arrivals;
        self.blocked += o.blocked;
        self.admitted += o.admitted;
        self.handover_attempts += o.handover_attempts;
        self.drops += o.drops;
        self.completions += o.completions;
        self.new_visits += o.new_visits;
        self.new_visits_handed_over += o.new_visits_handed_over;
        self.new_visit_time += o.new_visit_time;
        self.ho_visits += o.ho_visits;
        self.ho_visits_handed_over += o.ho_visits_handed_over;
        self.ho_visit_time += o.ho_visit_time;
    }
}

/// Whole-run totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counts {
    pub arrivals: u64,
    pub blocked: u64,
    pub admitted: u64,
    pub handover_attempts: u64,
    pub drops: u64,
    pub completions: u64,
    /// Counted calls still active when the horizon was reached.
    pub in_flight: u64,
    /// Successful handover arrivals per cell, counted calls only.
    pub handover_arrivals_per_cell: Vec<u64>,
}

/// Simulator output: estimates, totals and the per-batch tallies they came
/// from (kept so replications can be pooled).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub p_busy: Estimate,
    pub p_drop: Estimate,
    pub p_e_ho: Estimate,
    pub p_h_ho: Estimate,
    pub b_e: Estimate,
    pub b_h: Estimate,
    pub counts: Counts,
    /// Observed time after warmup, summed over replications.
    pub observed_time: f64,
    pub seeds: Vec<u64>,
    /// Fewer than 30 batches, or fewer than 30 batches saw an admission.
    pub insufficient_data: bool,
    pub batches: Vec<BatchTally>,
}

/// Ratio estimator `Σnum / Σden` with the batch-means delta-method interval.
fn ratio<N, D>(batches: &[BatchTally], num: N, den: D) -> Estimate
where
    N: Fn(&BatchTally) -> f64,
    D: Fn(&BatchTally) -> f64,
{
    let b = batches.len() as f64;
    let total_num: f64 = batches.iter().map(&num).sum();
    let total_den: f64 = batches.iter().map(&den).sum();
    if total_den <= 0.0 {
        return Estimate {
            value: 0.0,
            half_width: 0.0,
        };
    }
    let r = total_num / total_den;
    if batches.len() < 2 {
        return Estimate {
            value: r,
            half_width: f64::INFINITY,
        };
    }
    let ss: f64 = batches
        .iter()
        .map(|t| {
            let e = num(t) - r * den(t);
            e * e
        })
        .sum();
    let half_width = Z_95 * (ss / (b - 1.0)).sqrt() / (b.sqrt() * total_den / b);
    Estimate { value: r, half_width }
}

impl MetricsReport {
    pub(crate) fn from_batches(
        batches: Vec<BatchTally>,
        in_flight: u64,
        handover_arrivals_per_cell: Vec<u64>,
        observed_time: f64,
        seeds: Vec<u64>,
    ) -> Self {
        let mut total = BatchTally::default();
        for t in &batches {
            total.absorb(t);
        }
        let busy_batches = batches.iter().filter(|t| t.admitted > 0).count();
        MetricsReport {
            p_busy: ratio(&batches, |t| t.blocked as f64, |t| t.arrivals as f64),
            p_drop: ratio(&batches, |t| t.drops as f64, |t| t.admitted as f64),
            p_e_ho: ratio(&batches, |t| t.new_visits_handed_over as f64, |t| t.new_visits as f64),
            p_h_ho: ratio(&batches, |t| t.ho_visits_handed_over as f64, |t| t.ho_visits as f64),
            b_e: ratio(&batches, |t| t.new_visit_time, |t| t.new_visits as f64),
            b_h: ratio(&batches, |t| t.ho_visit_time, |t| t.ho_visits as f64),
            counts: Counts {
                arrivals: total.arrivals,
                blocked: total.blocked,
                admitted: total.admitted,
                handover_attempts: total.handover_attempts,
                drops: total.drops,
                completions: total.completions,
                in_flight,
                handover_arrivals_per_cell,
            },
            observed_time,
            seeds,
            insufficient_data: batches.len() < MIN_BATCHES || busy_batches < MIN_BATCHES,
            batches,
        }
    }

    /// Pools replications into one report. Inputs are ordered by seed first,
    /// so the result does not depend on the order runs finished in.
    pub fn merge(mut reports: Vec<MetricsReport>) -> Option<MetricsReport> {
        reports.sort_by_key(|r| r.seeds.first().copied().unwrap_or(0));
        let first = reports.first()?;
        let mut per_cell = vec![0; first.counts.handover_arrivals_per_cell.len()];
        let mut batches = Vec::new();
        let mut in_flight = 0;
        let mut observed = 0.0;
        let mut seeds = Vec::new();
        for r in &reports {
            for (acc, x) in per_cell.iter_mut().zip(&r.counts.handover_arrivals_per_cell) {
                *acc += x;
            }
            batches.extend(r.batches.iter().cloned());
            in_flight += r.counts.in_flight;
            observed += r.observed_time;
            seeds.extend(&r.seeds);
        }
        Some(MetricsReport::from_batches(
            batches, in_flight, per_cell, observed, seeds,
        ))
    }

    /// Handover arrival rate per cell, averaged over cells.
    pub fn handover_rate(&self) -> f64 {
        let cells = self.counts.handover_arrivals_per_cell.len().max(1) as f64;
        let total: u64 = self.counts.handover_arrivals_per_cell.iter().sum();
        if self.observed_time > 0.0 {
            total as f64 / (cells * self.observed_time)
        } else {
            0.0
        }
    }
}
