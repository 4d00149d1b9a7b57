//! Closed-form performance chain of a single cell on a straight road.
//!
//! A cell `[-L, L]` is split into `2N` rate regions `𝒜_n`, `n ∈ 𝒩 =
//! {-N..-1, 1..N}`. A user in `𝒜_n` is served at the low-SNR capacity of the
//! region's far edge, so the rate `r_n` depends on power, cell size and path
//! loss. From the rates follow the probabilities that new and handed-over
//! calls leave the cell unfinished, the mean service times, the handover
//! arrival rate, the load factor `ρ` and finally the Erlang-B busy
//! probability.
//!
//! All inputs use meters, seconds and normalized power (transmit power over
//! noise variance).

use log::warn;

use crate::error::{Error, Result};
use crate::policy::PowerPolicy;
use crate::quad;
use crate::speed::SpeedModel;

/// Half-length, rate-region partition and propagation parameters of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    half_length: f64,
    phi: Vec<f64>,
    d0: f64,
    beta: f64,
    r0: f64,
}

impl CellGeometry {
    /// `phi` lists `φ_1 < … < φ_N = 1`.
    pub fn new(half_length: f64, phi: Vec<f64>, d0: f64, beta: f64) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::invalid("CellGeometry: need at least one region"));
        }
        if !(phi[0] > 0.0) || phi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "CellGeometry: need 0 < φ_1 < … < φ_N, got {phi:?}"
            )));
        }
        if (phi[phi.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("CellGeometry: φ_N must equal 1"));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::invalid(format!("CellGeometry: d0 must be positive, got {d0}")));
        }
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("CellGeometry: β must exceed 1, got {beta}")));
        }
        let n = phi.len() as f64;
        if !(half_length > n * d0 && half_length.is_finite()) {
            return Err(Error::invalid(format!(
                "CellGeometry: need L > N·d0 = {}, got L = {half_length}",
                n * d0
            )));
        }
        let r0 = d0.powf(beta);
        Ok(CellGeometry {
            half_length,
            phi,
            d0,
            beta,
            r0,
        })
    }

    /// Equal-length regions, `φ_n = n / N`.
    pub fn uniform(half_length: f64, regions: usize, d0: f64, beta: f64) -> Result<Self> {
        let phi = (1..=regions)
            .map(|n| if n == regions { 1.0 } else { n as f64 / regions as f64 })
            .collect();
        Self::new(half_length, phi, d0, beta)
    }

    /// Same partition and propagation, different half-length.
    pub fn with_half_length(&self, half_length: f64) -> Result<Self> {
        Self::new(half_length, self.phi.clone(), self.d0, self.beta)
    }

    /// Same partition and cell size, different path-loss exponent.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.half_length, self.phi.clone(), self.d0, beta)
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn regions(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `r0 = d0^β`.
    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// `φ_n` for `n ∈ 𝒩`, with `φ_{-n} = -φ_n`.
    pub fn signed_phi(&self, n: i32) -> f64 {
        let v = self.phi[n.unsigned_abs() as usize - 1];
        if n < 0 {
            -v
        } else {
            v
        }
    }

    /// Path gain: 1 inside the lossless radius, `(d/d0)^-β` beyond it.
    pub fn attenuation(&self, d: f64) -> f64 {
        if d <= self.d0 {
            1.0
        } else {
            self.r0 * d.powf(-self.beta)
        }
    }

    /// Region index `n ∈ 𝒩` of a signed offset from the tower.
    pub fn region_of(&self, offset: f64) -> i32 {
        let d = offset.abs() / self.half_length;
        let k = self.phi.partition_point(|&p| p < d).min(self.phi.len() - 1) as i32 + 1;
        if offset < 0.0 {
            -k
        } else {
            k
        }
    }
}

/// Iterates `𝒩 = {-N, …, -1, 1, …, N}` in increasing order.
pub fn region_indices(regions: usize) -> impl Iterator<Item = i32> + Clone {
    let n = regions as i32;
    (-n..=n).filter(|&m| m != 0)
}

/// Slot of region `n` in a `2N`-long vector ordered like [`region_indices`].
pub fn region_slot(n: i32, regions: usize) -> usize {
    let big = regions as i32;
    if n < 0 {
        (n + big) as usize
    } else {
        (n + big - 1) as usize
    }
}

/// External traffic: arrival intensity, job sizes, handover overhead,
/// servers and the arrival-position distribution `π` over `𝒩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    /// Arrivals per second per unit half-length: a cell of half-length `L`
    /// receives `λ·L` new calls per second.
    pub lambda: f64,
    /// Job sizes are `Exp(μ)` bytes.
    pub mu: f64,
    /// Extra bytes exchanged at every handover.
    pub s_h: f64,
    pub servers: u32,
    pi: Vec<f64>,
}

impl TrafficModel {
    /// `pi` is ordered `-N..-1, 1..N`.
    pub fn new(lambda: f64, mu: f64, s_h: f64, servers: u32, pi: Vec<f64>) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("TrafficModel: λ must be >= 0, got {lambda}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("TrafficModel: μ must be >= 0, got {mu}")));
        }
        if !(s_h >= 0.0 && s_h.is_finite()) {
            return Err(Error::invalid(format!("TrafficModel: s_h must be >= 0, got {s_h}")));
        }
        if servers == 0 {
            return Err(Error::invalid("TrafficModel: K must be at least 1"));
        }
        if pi.is_empty() || pi.len() % 2 != 0 {
            return Err(Error::invalid("TrafficModel: π needs 2N entries"));
        }
        if pi.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("TrafficModel: π entries must be non-negative"));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("TrafficModel: π sums to {total}, not 1")));
        }
        if mu * s_h > 0.2 {
            warn!("μ·s_h = {} is not small; handover formulas lose accuracy", mu * s_h);
        }
        Ok(TrafficModel {
            lambda,
            mu,
            s_h,
            servers,
            pi,
        })
    }

    /// Uniform arrival positions over `2N` regions.
    pub fn uniform_pi(regions: usize) -> Vec<f64> {
        vec![1.0 / (2 * regions) as f64; 2 * regions]
    }

    /// All arrivals land in region `n`.
    pub fn point_pi(regions: usize, n: i32) -> Vec<f64> {
        let mut pi = vec![0.0; 2 * regions];
        pi[region_slot(n, regions)] = 1.0;
        pi
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn regions(&self) -> usize {
        self.pi.len() / 2
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        TrafficModel { lambda, ..self.clone() }
    }

    pub fn with_s_h(&self, s_h: f64) -> Self {
        TrafficModel { s_h, ..self.clone() }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        TrafficModel { mu, ..self.clone() }
    }

    pub(crate) fn check_against(&self, geom: &CellGeometry) -> Result<()> {
        if self.regions() != geom.regions() {
            return Err(Error::invalid(format!(
                "π covers {} regions but the geometry has {}",
                self.regions(),
                geom.regions()
            )));
        }
        Ok(())
    }
}

/// Handover and service-time constants `C_e,ho`, `C_h,ho`, `C_b,e`, `C_b,h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoConstants {
    pub c_e_ho: f64,
    pub c_h_ho: f64,
    pub c_b_e: f64,
    pub c_b_h: f64,
}

impl HoConstants {
    /// `C_ρ,1 = C_b,e − C_b,h·C_e,ho / C_h,ho`.
    pub fn c_rho_1(&self) -> f64 {
        self.c_b_e - self.c_b_h * self.c_e_ho / self.c_h_ho
    }

    /// `C_ρ,2 = C_b,h·(1 − μ·s_h·C_e,ho / C_h,ho)`.
    pub fn c_rho_2(&self, mu_s_h: f64) -> f64 {
        self.c_b_h * (1.0 - mu_s_h * self.c_e_ho / self.c_h_ho)
    }
}

/// Low-SNR capacity at distance `d` for normalized power `power`.
pub fn capacity_rate(d: f64, power: f64, geom: &CellGeometry) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::invalid(format!("distance must be >= 0, got {d}")));
    }
    if !(power > 0.0) {
        return Err(Error::invalid(format!("power must be positive, got {power}")));
    }
    Ok(power * geom.attenuation(d))
}

/// `r_n = r0·P·L^-β·φ_n^-β`, `n = 1..N`.
pub fn region_rates(geom: &CellGeometry, power: f64) -> Vec<f64> {
    let scale = geom.r0 * power * geom.half_length.powf(-geom.beta);
    geom.phi.iter().map(|p| scale * p.powf(-geom.beta)).collect()
}

/// Linearized probability `ψ_n` that a call starting in `𝒜_n` finishes before
/// the right cell edge. Clamped to `[0, 1]` with a warning.
pub fn completion_prob(n: i32, geom: &CellGeometry, power: f64, speed: &SpeedModel, mu: f64) -> Result<f64> {
    let big = geom.regions() as i32;
    if n == 0 || n.abs() > big {
        return Err(Error::invalid(format!("region index {n} is not in 𝒩 (N = {big})")));
    }
    let rates = region_rates(geom, power);
    let traversed: f64 = region_indices(geom.regions())
        .filter(|&m| m >= n)
        .map(|m| rates[m.unsigned_abs() as usize - 1])
        .sum();
    let psi = mu * geom.half_length / big as f64 * traversed * speed.mean_inverse();
    if psi > 0.3 {
        warn!("ψ_{n} = {psi}: the small-exponent linearization is inaccurate here");
    }
    if psi > 1.0 {
        warn!("ψ_{n} = {psi} clamped to 1");
    }
    Ok(psi.clamp(0.0, 1.0))
}

/// Derives the handover constants from partition, propagation and traffic.
pub fn ho_constants(geom: &CellGeometry, traffic: &TrafficModel) -> Result<HoConstants> {
    traffic.check_against(geom)?;
    let big = geom.regions();
    let weights: Vec<f64> = geom.phi.iter().map(|p| p.powf(-geom.beta)).collect();
    let scale = traffic.mu / big as f64 * geom.r0;

    // tail[m] = Σ_{k ≥ m, k ∈ 𝒩} φ_|k|^-β, over slots
    let indices: Vec<i32> = region_indices(big).collect();
    let mut tail = vec![0.0; indices.len()];
    let mut acc = 0.0;
    for (slot, &m) in indices.iter().enumerate().rev() {
        acc += weights[m.unsigned_abs() as usize - 1];
        tail[slot] = acc;
    }
    let c_e_ho = scale
        * indices
            .iter()
            .enumerate()
            .map(|(slot, _)| traffic.pi[slot] * tail[slot])
            .sum::<f64>();
    let c_h_ho = scale * 2.0 * weights.iter().sum::<f64>();
    let c_b_e = indices
        .iter()
        .enumerate()
        .map(|(slot, &m)| traffic.pi[slot] * (1.0 - geom.signed_phi(m)))
        .sum();
    Ok(HoConstants {
        c_e_ho,
        c_h_ho,
        c_b_e,
        c_b_h: 2.0,
    })
}

/// `δ = P·L^(1-β)·E[1/V]`.
fn delta(geom: &CellGeometry, power: f64, inv_speed: f64) -> f64 {
    power * geom.half_length.powf(1.0 - geom.beta) * inv_speed
}

/// `(P_e,ho, P_h,ho)`: probabilities that a new / handed-over call is handed
/// over again.
pub fn ho_probabilities(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    power: f64,
    speed: &SpeedModel,
) -> Result<(f64, f64)> {
    let c = ho_constants(geom, traffic)?;
    let d = delta(geom, power, speed.mean_inverse());
    let p_e = 1.0 - d * c.c_e_ho;
    let p_h = 1.0 - (c.c_h_ho * d - traffic.mu * traffic.s_h);
    for (quantity, value) in [("P_e,ho", p_e), ("P_h,ho", p_h)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::RegimeViolation { quantity, value });
        }
    }
    Ok((p_e, p_h))
}

/// Mean service times `(b_e, b_h)` of new and handed-over calls, seconds.
pub fn service_times(geom: &CellGeometry, traffic: &TrafficModel, speed: &SpeedModel) -> Result<(f64, f64)> {
    let c = ho_constants(geom, traffic)?;
    let base = geom.half_length * speed.mean_inverse();
    Ok((c.c_b_e * base, c.c_b_h * base))
}

fn unsupportable(inv_speed: f64, denom: f64) -> Error {
    Error::UnsupportableVelocity {
        speed: 1.0 / inv_speed,
        detail: format!(
            "handover completion term P·L^(1-β)·Υ·C_h,ho − μ·s_h = {denom} is not positive; \
             the speed exceeds the velocity limit for this power"
        ),
    }
}

/// Handover arrival rate `λ_h;L` (per second) solving
/// `λ_h = λ_L·P_e,ho + λ_h·P_h,ho`.
pub fn ho_rate(geom: &CellGeometry, traffic: &TrafficModel, power: f64, speed: &SpeedModel) -> Result<f64> {
    let c = ho_constants(geom, traffic)?;
    let inv = speed.mean_inverse();
    let d = delta(geom, power, inv);
    let denom = d * c.c_h_ho - traffic.mu * traffic.s_h;
    if !(denom > 0.0) {
        return Err(unsupportable(inv, denom));
    }
    Ok(traffic.lambda * geom.half_length * (1.0 - d * c.c_e_ho) / denom)
}

/// Load-factor summand for one speed class (or one speed, `inv_speed = 1/v`),
/// without the `λ·L²/K` prefactor: `Υ·(C_b,e + C_b,h·(1 − δC_e)/(δC_h − μs_h))`.
fn class_term(c: &HoConstants, geom: &CellGeometry, traffic: &TrafficModel, power: f64, inv_speed: f64) -> Result<f64> {
    let d = delta(geom, power, inv_speed);
    let denom = d * c.c_h_ho - traffic.mu * traffic.s_h;
    if !(denom > 0.0) {
        return Err(unsupportable(inv_speed, denom));
    }
    Ok(inv_speed * (c.c_b_e + c.c_b_h * (1.0 - d * c.c_e_ho) / denom))
}

fn prefactor(geom: &CellGeometry, traffic: &TrafficModel) -> f64 {
    traffic.lambda * geom.half_length * geom.half_length / traffic.servers as f64
}

/// Load factor `ρ` with every user at power `power`.
pub fn load_factor(geom: &CellGeometry, traffic: &TrafficModel, power: f64, speed: &SpeedModel) -> Result<f64> {
    let c = ho_constants(geom, traffic)?;
    Ok(prefactor(geom, traffic) * class_term(&c, geom, traffic, power, speed.mean_inverse())?)
}

/// One speed class in [`load_factor_classes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassLoad {
    pub prob: f64,
    pub cond_inv_speed: f64,
    pub power: f64,
}

/// Load factor when class `i` (probability `p_i`, conditional inverse speed
/// `Υ_i`) transmits at `P_i`.
pub fn load_factor_classes(geom: &CellGeometry, traffic: &TrafficModel, classes: &[ClassLoad]) -> Result<f64> {
    let c = ho_constants(geom, traffic)?;
    let mut sum = 0.0;
    for (i, cl) in classes.iter().enumerate() {
        let term = class_term(&c, geom, traffic, cl.power, cl.cond_inv_speed).map_err(|e| match e {
            Error::UnsupportableVelocity { speed, detail } => Error::UnsupportableVelocity {
                speed,
                detail: format!("class {}: {detail}", i + 1),
            },
            other => other,
        })?;
        sum += cl.prob * term;
    }
    Ok(prefactor(geom, traffic) * sum)
}

/// Load factor under a speed-dependent policy, by quadrature over the speed
/// density.
pub fn load_factor_continuous(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    policy: &PowerPolicy,
    speed: &SpeedModel,
) -> Result<f64> {
    let c = ho_constants(geom, traffic)?;
    let (lo, hi) = speed.support();
    if let SpeedModel::Fixed { speed: v } = *speed {
        return Ok(prefactor(geom, traffic) * class_term(&c, geom, traffic, policy.evaluate(v), 1.0 / v)?);
    }
    let mut probe = quad::nodes(lo, hi);
    probe.push(lo);
    probe.push(hi);
    for v in probe {
        class_term(&c, geom, traffic, policy.evaluate(v), 1.0 / v)?;
    }
    let integral = quad::integrate(lo, hi, |v| {
        let term = class_term(&c, geom, traffic, policy.evaluate(v), 1.0 / v).expect("checked at every node");
        term * speed.pdf(v)
    });
    Ok(prefactor(geom, traffic) * integral)
}

/// Erlang-B blocking probability for offered load `rho` on `servers` servers.
pub fn erlang_b(rho: f64, servers: u32) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::invalid(format!("ρ must be >= 0, got {rho}")));
    }
    if servers == 0 {
        return Err(Error::invalid("Erlang-B needs at least one server"));
    }
    let mut b = 1.0;
    for k in 1..=servers {
        b = rho * b / (k as f64 + rho * b);
    }
    Ok(b)
}

/// Every analytic metric for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticReport {
    pub p_e_ho: f64,
    pub p_h_ho: f64,
    pub b_e: f64,
    pub b_h: f64,
    pub ho_rate: f64,
    pub rho: f64,
    pub p_busy: f64,
}

/// Runs the whole chain for equal power `power`.
pub fn evaluate(geom: &CellGeometry, traffic: &TrafficModel, power: f64, speed: &SpeedModel) -> Result<AnalyticReport> {
    let (p_e_ho, p_h_ho) = ho_probabilities(geom, traffic, power, speed)?;
    let (b_e, b_h) = service_times(geom, traffic, speed)?;
    let ho_rate = ho_rate(geom, traffic, power, speed)?;
    let rho = load_factor(geom, traffic, power, speed)?;
    let p_busy = erlang_b(rho, traffic.servers)?;
    Ok(AnalyticReport {
        p_e_ho,
        p_h_ho,
        b_e,
        b_h,
        ho_rate,
        rho,
        p_busy,
    })
}
