use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp, Poisson};
use rand_pcg::Pcg64;

use super::config::{InterferenceScope, RateScheme, SimConfig};
use super::report::{BatchTally, MetricsReport};
use crate::error::{Error, Result};
use crate::policy::PowerPolicy;

/// Whether the current cell visit began with a new call or a handover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    New,
    Handover,
}

/// An active call.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub id: u64,
    /// Meters along the ring, in `[0, 2L·n)`.
    pub position: f64,
    pub speed: f64,
    pub remaining_bytes: f64,
    pub assigned_power: f64,
    pub serving_tower: usize,
    /// Server index held in the serving cell.
    pub channel: usize,
    pub origin: Origin,
    visit_start: f64,
    counted: bool,
}

/// Largest rate in the decreasing set `rates` not above `x`, or 0.
pub fn select_rate(x: f64, rates: &[f64]) -> f64 {
    let i = rates.partition_point(|&r| r > x);
    rates.get(i).copied().unwrap_or(0.0)
}

fn ring_distance(a: f64, b: f64, ring: f64) -> f64 {
    let d = (a - b).abs();
    d.min(ring - d)
}

fn tower_position(cell: usize, half_length: f64) -> f64 {
    (2 * cell + 1) as f64 * half_length
}

/// Path gain of the cell geometry, with integer exponents evaluated by
/// repeated multiplication.
#[derive(Debug, Clone, Copy)]
struct PathGain {
    d0: f64,
    r0: f64,
    beta: f64,
    whole: Option<i32>,
}

impl PathGain {
    fn new(config: &SimConfig) -> Self {
        let beta = config.geom.beta();
        PathGain {
            d0: config.geom.d0(),
            r0: config.geom.r0(),
            beta,
            whole: (beta.fract() == 0.0 && beta <= 16.0).then_some(beta as i32),
        }
    }

    fn at(&self, d: f64) -> f64 {
        if d <= self.d0 {
            return 1.0;
        }
        match self.whole {
            Some(2) => self.r0 / (d * d),
            Some(3) => self.r0 / (d * d * d),
            Some(4) => self.r0 / ((d * d) * (d * d)),
            Some(k) => self.r0 / d.powi(k),
            None => self.r0 * d.powf(-self.beta),
        }
    }
}

/// Transmit power of the interferers, laid out per cell or per channel slot.
enum Field<'a> {
    Quiet,
    PerCell(&'a [f64]),
    /// `slots[c·K + k]` is the power on channel `k` of cell `c`, 0 when free.
    PerChannel(&'a [f64], usize),
}

/// Signal and `1 + 𝓘/σ²` for `tagged`.
fn signal_terms(tagged: &UserState, field: &Field, gain: PathGain, config: &SimConfig) -> (f64, f64) {
    let l = config.geom.half_length();
    let ring = config.ring_length();
    let d = (tagged.position - tower_position(tagged.serving_tower, l)).abs();
    let signal = tagged.assigned_power * gain.at(d);
    let sigma2 = match (config.interference, config.sigma2) {
        (true, Some(s)) => s,
        _ => return (signal, 1.0),
    };
    let serving = tagged.serving_tower;
    let x = tagged.position;
    let from_cell = |c: usize, power: f64| {
        if c == serving || power == 0.0 {
            0.0
        } else {
            power * gain.at(ring_distance(tower_position(c, l), x, ring))
        }
    };
    let interference: f64 = match field {
        Field::Quiet => 0.0,
        Field::PerCell(loads) => loads.iter().enumerate().map(|(c, &p)| from_cell(c, p)).sum(),
        Field::PerChannel(slots, k) => slots[tagged.channel..]
            .iter()
            .step_by(*k)
            .enumerate()
            .map(|(c, &p)| from_cell(c, p))
            .sum(),
    };
    (signal, 1.0 + interference / sigma2)
}

/// SINR of `tagged` against the users in `others`, each transmitting from its
/// serving tower. With interference disabled this is the SNR.
pub fn sinr(tagged: &UserState, others: &[UserState], config: &SimConfig) -> f64 {
    let gain = PathGain::new(config);
    let k = config.traffic.servers as usize;
    let mut loads = vec![0.0; config.towers];
    let mut slots = vec![0.0; config.towers * k];
    for u in others.iter().filter(|u| u.id != tagged.id) {
        loads[u.serving_tower] += u.assigned_power;
        if u.channel < k {
            slots[u.serving_tower * k + u.channel] += u.assigned_power;
        }
    }
    let field = match config.scope {
        InterferenceScope::AllUsers => Field::PerCell(&loads),
        InterferenceScope::SameChannel => Field::PerChannel(&slots, k),
    };
    let (signal, divisor) = signal_terms(tagged, &field, gain, config);
    signal / divisor
}

/// Upper bound on `1 + 𝓘/σ²`: every other cell transmits at full power from
/// the point of its tower nearest to any spot of the tagged cell.
fn divisor_bound(config: &SimConfig) -> Option<f64> {
    let sigma2 = match (config.interference, config.sigma2) {
        (true, Some(s)) => s,
        _ => return None,
    };
    let (lo, hi) = config.speed.support();
    let peak = match &config.policy {
        PowerPolicy::Discrete { powers, .. } => powers.iter().cloned().fold(0.0, f64::max),
        p => p.evaluate(lo).max(p.evaluate(hi)),
    };
    let per_cell = match config.scope {
        InterferenceScope::SameChannel => peak,
        InterferenceScope::AllUsers => peak * config.traffic.servers as f64,
    };
    let gain = PathGain::new(config);
    let l = config.geom.half_length();
    let n = config.towers;
    let worst: f64 = (1..n).map(|j| gain.at((2 * j.min(n - j) - 1) as f64 * l)).sum();
    Some((1.0 + per_cell * worst / sigma2) * (1.0 + 1e-9))
}

struct Recorder<'a> {
    warmup: f64,
    batch_len: f64,
    tallies: Vec<BatchTally>,
    per_cell: Vec<u64>,
    trace: Option<&'a mut dyn Write>,
    trace_error: Option<std::io::Error>,
}

impl Recorder<'_> {
    fn batch(&mut self, t: f64) -> &mut BatchTally {
        let b = ((t - self.warmup) / self.batch_len).floor().max(0.0) as usize;
        let last = self.tallies.len() - 1;
        &mut self.tallies[b.min(last)]
    }

    fn event(&mut self, t: f64, kind: &str, user: u64, cell: usize, value: f64) {
        if let Some(w) = self.trace.as_mut() {
            if self.trace_error.is_none() {
                if let Err(e) = writeln!(w, "{t:.6},{kind},{user},{cell},{value}") {
                    self.trace_error = Some(e);
                }
            }
        }
    }

    fn end_visit(&mut self, u: &UserState, t: f64, handed_over: bool) {
        if !u.counted {
            return;
        }
        let time = t - u.visit_start;
        let b = self.batch(t);
        match u.origin {
            Origin::New => {
                b.new_visits += 1;
                b.new_visits_handed_over += handed_over as u64;
                b.new_visit_time += time;
            }
            Origin::Handover => {
                b.ho_visits += 1;
                b.ho_visits_handed_over += handed_over as u64;
                b.ho_visit_time += time;
            }
        }
    }
}

/// One simulation world. Advance it with [`Simulator::step`] or run it to the
/// horizon with [`Simulator::finish`].
pub struct Simulator<'a> {
    config: SimConfig,
    rng: Pcg64,
    job: Option<Exp<f64>>,
    arrivals: Option<Poisson<f64>>,
    gain: PathGain,
    region_gain: Vec<f64>,
    /// Largest possible `1 + 𝓘/σ²`, when interference is on.
    divisor_bound: Option<f64>,
    pi_cumulative: Vec<f64>,
    users: Vec<UserState>,
    cells: Cells,
    next_id: u64,
    step_index: u64,
    recorder: Recorder<'a>,
}

/// Server bookkeeping: busy count per cell and the power on every channel.
struct Cells {
    servers: usize,
    busy: Vec<u32>,
    slots: Vec<f64>,
}

impl Cells {
    /// Takes the lowest free channel of `cell`.
    fn seize(&mut self, cell: usize, power: f64) -> Option<usize> {
        let row = &mut self.slots[cell * self.servers..(cell + 1) * self.servers];
        let k = row.iter().position(|&p| p == 0.0)?;
        row[k] = power;
        self.busy[cell] += 1;
        Some(k)
    }

    fn release(&mut self, cell: usize, channel: usize) {
        self.slots[cell * self.servers + channel] = 0.0;
        self.busy[cell] -= 1;
    }
}

impl<'a> Simulator<'a> {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let l = config.geom.half_length();
        let beta = config.geom.beta();
        let r0 = config.geom.r0();
        let region_gain = config.geom.phi().iter().map(|p| r0 * (p * l).powf(-beta)).collect();
        let mut acc = 0.0;
        let pi_cumulative = config
            .traffic
            .pi()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let job = if config.traffic.mu > 0.0 {
            Some(Exp::new(config.traffic.mu).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        let mean = config.system_arrival_rate() * config.dt;
        let arrivals = if mean > 0.0 {
            Some(Poisson::new(mean).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        let servers = config.traffic.servers as usize;
        let batch_len = (config.horizon - config.warmup) / config.batches as f64;
        Ok(Simulator {
            rng: Pcg64::seed_from_u64(config.seed),
            job,
            arrivals,
            gain: PathGain::new(&config),
            region_gain,
            divisor_bound: divisor_bound(&config),
            pi_cumulative,
            users: Vec::new(),
            cells: Cells {
                servers,
                busy: vec![0; config.towers],
                slots: vec![0.0; config.towers * servers],
            },
            next_id: 0,
            step_index: 0,
            recorder: Recorder {
                warmup: config.warmup,
                batch_len,
                tallies: vec![BatchTally::default(); config.batches],
                per_cell: vec![0; config.towers],
                trace: None,
                trace_error: None,
            },
            config,
        })
    }

    /// Streams every event as `time,event,user,cell,value` to `sink`.
    pub fn with_trace(mut self, sink: &'a mut dyn Write) -> Self {
        self.recorder.trace = Some(sink);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    /// Busy servers per cell.
    pub fn occupancy(&self) -> &[u32] {
        &self.cells.busy
    }

    /// Start time of the next step.
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt
    }

    /// Places a new call `offset` meters into `cell` (`offset` may equal `2L`,
    /// the right edge), bypassing the arrival process. Returns its id, or
    /// `None` when the cell is full.
    pub fn inject(&mut self, cell: usize, offset: f64, speed: f64, bytes: f64) -> Option<u64> {
        let width = 2.0 * self.config.geom.half_length();
        assert!(cell < self.config.towers && (0.0..=width).contains(&offset));
        let t = self.time();
        self.admit_new(t, cell, width * cell as f64 + offset, speed, bytes)
    }

    fn admit_new(&mut self, t: f64, cell: usize, position: f64, speed: f64, bytes: f64) -> Option<u64> {
        let counted = t >= self.config.warmup;
        let id = self.next_id;
        self.next_id += 1;
        if counted {
            self.recorder.batch(t).arrivals += 1;
        }
        self.recorder.event(t, "arrival", id, cell, speed);
        let power = self.config.policy.evaluate(speed);
        let Some(channel) = self.cells.seize(cell, power) else {
            if counted {
                self.recorder.batch(t).blocked += 1;
            }
            self.recorder.event(t, "blocked", id, cell, 0.0);
            return None;
        };
        if counted {
            self.recorder.batch(t).admitted += 1;
        }
        self.users.push(UserState {
            id,
            position,
            speed,
            remaining_bytes: bytes,
            assigned_power: power,
            serving_tower: cell,
            channel,
            origin: Origin::New,
            visit_start: t,
            counted,
        });
        Some(id)
    }

    fn spawn(&mut self, t: f64) {
        let Some(arrivals) = self.arrivals else { return };
        let count = arrivals.sample(&mut self.rng) as u64;
        let l = self.config.geom.half_length();
        let big_n = self.config.geom.regions();
        for _ in 0..count {
            let cell = self.rng.gen_range(0..self.config.towers);
            let u = self.rng.gen::<f64>() * self.pi_cumulative[2 * big_n - 1];
            let slot = self.pi_cumulative.partition_point(|&c| c <= u).min(2 * big_n - 1);
            let phi = self.config.geom.phi();
            // slots run over regions -N..-1, 1..N
            let (lo, hi) = if slot < big_n {
                let k = big_n - slot;
                (-phi[k - 1], if k == 1 { 0.0 } else { -phi[k - 2] })
            } else {
                let k = slot - big_n + 1;
                (if k == 1 { 0.0 } else { phi[k - 2] }, phi[k - 1])
            };
            let offset = l * (lo + (hi - lo) * self.rng.gen::<f64>());
            let speed = self.config.speed.sample(&mut self.rng);
            let bytes = match &self.job {
                Some(e) => e.sample(&mut self.rng),
                None => f64::INFINITY,
            };
            self.admit_new(t, cell, tower_position(cell, l) + offset, speed, bytes);
        }
    }

    fn rate_of(&self, u: &UserState, field: &Field) -> f64 {
        match &self.config.rates {
            RateScheme::Common(rates) => {
                // the rate is a step function of the SINR; when the whole
                // admissible SINR range maps to one rate, skip the interferer sum
                if let Some(bound) = self.divisor_bound {
                    let (signal, _) = signal_terms(u, &Field::Quiet, self.gain, &self.config);
                    let best = select_rate(signal, rates);
                    if select_rate(signal / bound, rates) == best {
                        return best;
                    }
                }
                let (signal, divisor) = signal_terms(u, field, self.gain, &self.config);
                select_rate(signal / divisor, rates)
            }
            RateScheme::Regions => {
                let (_, divisor) = signal_terms(u, field, self.gain, &self.config);
                let l = self.config.geom.half_length();
                let offset = u.position - tower_position(u.serving_tower, l);
                let k = self.config.geom.region_of(offset).unsigned_abs() as usize;
                u.assigned_power * self.region_gain[k - 1] / divisor
            }
        }
    }

    /// Advances the world by one time step: arrivals, movement, handovers,
    /// service, completions.
    pub fn step(&mut self) {
        let dt = self.config.dt;
        let t = self.time();
        let l = self.config.geom.half_length();
        let ring = self.config.ring_length();
        let towers = self.config.towers;
        let s_h = self.config.traffic.s_h;

        self.spawn(t);

        for u in &mut self.users {
            u.position += u.speed * dt;
        }

        let Simulator {
            users, cells, recorder, ..
        } = self;
        users.retain_mut(|u| {
            let edge = 2.0 * l * (u.serving_tower + 1) as f64;
            if u.position < edge {
                return true;
            }
            let crossed_at = t + (edge - (u.position - u.speed * dt)) / u.speed;
            recorder.end_visit(u, crossed_at, true);
            cells.release(u.serving_tower, u.channel);
            let next = (u.serving_tower + 1) % towers;
            if next == 0 {
                u.position -= ring;
            }
            u.remaining_bytes += s_h;
            if u.counted {
                recorder.batch(crossed_at).handover_attempts += 1;
            }
            let Some(channel) = cells.seize(next, u.assigned_power) else {
                if u.counted {
                    recorder.batch(crossed_at).drops += 1;
                }
                recorder.event(crossed_at, "drop", u.id, next, u.remaining_bytes);
                return false;
            };
            u.serving_tower = next;
            u.channel = channel;
            u.origin = Origin::Handover;
            u.visit_start = crossed_at;
            if u.counted {
                recorder.per_cell[next] += 1;
            }
            recorder.event(crossed_at, "handover", u.id, next, u.remaining_bytes);
            true
        });

        let loads = match (self.config.interference, self.config.scope) {
            (true, InterferenceScope::AllUsers) => {
                let mut loads = vec![0.0; towers];
                for u in &self.users {
                    loads[u.serving_tower] += u.assigned_power;
                }
                Some(loads)
            }
            _ => None,
        };
        let field = match (self.config.interference, &loads) {
            (false, _) => Field::Quiet,
            (true, Some(loads)) => Field::PerCell(loads),
            (true, None) => Field::PerChannel(&self.cells.slots, self.cells.servers),
        };
        let rates: Vec<f64> = self.users.iter().map(|u| self.rate_of(u, &field)).collect();

        let Simulator {
            users, cells, recorder, ..
        } = self;
        let mut i = 0;
        users.retain_mut(|u| {
            let work = rates[i] * dt;
            i += 1;
            if work < u.remaining_bytes {
                u.remaining_bytes -= work;
                return true;
            }
            let done_at = t + dt * (u.remaining_bytes / work);
            u.remaining_bytes = 0.0;
            recorder.end_visit(u, done_at, false);
            cells.release(u.serving_tower, u.channel);
            if u.counted {
                recorder.batch(done_at).completions += 1;
            }
            recorder.event(done_at, "complete", u.id, u.serving_tower, 0.0);
            false
        });

        debug_assert!(self
            .users
            .iter()
            .all(|u| u.remaining_bytes >= 0.0 && (0.0..ring).contains(&u.position)));
        debug_assert_eq!(
            self.cells.busy.iter().map(|&k| k as usize).sum::<usize>(),
            self.users.len()
        );
        self.step_index += 1;
    }

    /// Runs to the horizon and summarizes.
    pub fn finish(mut self) -> Result<MetricsReport> {
        let steps = (self.config.horizon / self.config.dt).round() as u64;
        while self.step_index < steps {
            self.step();
        }
        if let Some(e) = self.recorder.trace_error.take() {
            return Err(Error::config(format!("writing trace: {e}")));
        }
        if let Some(w) = self.recorder.trace.as_mut() {
            w.flush().map_err(|e| Error::config(format!("writing trace: {e}")))?;
        }
        let in_flight = self.users.iter().filter(|u| u.counted).count() as u64;
        Ok(MetricsReport::from_batches(
            self.recorder.tallies,
            in_flight,
            self.recorder.per_cell,
            self.config.horizon - self.config.warmup,
            vec![self.config.seed],
        ))
    }
}

/// Runs one replication.
pub fn run(config: &SimConfig) -> Result<MetricsReport> {
    Simulator::new(config.clone())?.finish()
}

/// Runs one replication per seed on the rayon pool and pools the results.
pub fn run_replications(config: &SimConfig, seeds: &[u64]) -> Result<MetricsReport> {
    use rayon::prelude::*;
    if seeds.is_empty() {
        return Err(Error::config("no seeds given"));
    }
    let reports = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            run(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::merge(reports).expect("at least one report"))
}
