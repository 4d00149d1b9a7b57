//! Cell size under beta+ power scaling.
//!
//! The average-power budget grows with the cell as `P̄ = P̃·L^(β+γ)`. The
//! joint cost adds a power penalty to the optimal-law load factor:
//!
//! ```text
//! ℏ(L) = ρ*(L; P̃ L^(β+γ)) + ω_P P̃ L^(β+γ−1)
//!      = C1 L² + C2 L² / (L^(γ+1) − C3) + C4 L^(β+γ−1)
//! ```

use serde::{Deserialize, Serialize};

use crate::analytic::{ho_constants, CellGeometry, TrafficModel};
use crate::error::{Error, Result};
use crate::power_opt::rho_at_optimum;
use crate::speed::SpeedModel;

/// Beta+ scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub p_tilde: f64,
    pub gamma: f64,
    pub omega_p: f64,
}

impl ScalingSpec {
    pub fn new(p_tilde: f64, gamma: f64, omega_p: f64) -> Result<Self> {
        if !(p_tilde > 0.0 && p_tilde.is_finite()) {
            return Err(Error::invalid(format!(
                "ScalingSpec: P̃ must be positive, got {p_tilde}"
            )));
        }
        if !(omega_p >= 0.0 && omega_p.is_finite()) {
            return Err(Error::invalid(format!("ScalingSpec: ω_P must be >= 0, got {omega_p}")));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid("ScalingSpec: γ must be finite"));
        }
        Ok(ScalingSpec {
            p_tilde,
            gamma,
            omega_p,
        })
    }

    /// `P̄ = P̃·L^(β+γ)`.
    pub fn budget(&self, half_length: f64, beta: f64) -> f64 {
        self.p_tilde * half_length.powf(beta + self.gamma)
    }
}

/// The four `L`-independent coefficients of the joint cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointCostConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

pub fn joint_cost_constants(
    template: &CellGeometry,
    traffic: &TrafficModel,
    speed: &SpeedModel,
    scaling: &ScalingSpec,
) -> Result<JointCostConstants> {
    let c = ho_constants(template, traffic)?;
    let mu_s_h = traffic.mu * traffic.s_h;
    let per_server = traffic.lambda / traffic.servers as f64;
    Ok(JointCostConstants {
        c1: per_server * c.c_rho_1() * speed.mean_inverse(),
        c2: per_server * c.c_rho_2(mu_s_h) / (scaling.p_tilde * c.c_h_ho),
        c3: speed.mean_speed() * mu_s_h / (scaling.p_tilde * c.c_h_ho),
        c4: scaling.omega_p * scaling.p_tilde,
    })
}

impl JointCostConstants {
    /// Evaluates the rational form of `ℏ(L)`.
    pub fn evaluate(&self, half_length: f64, beta: f64, gamma: f64) -> f64 {
        let l2 = half_length * half_length;
        self.c1 * l2
            + self.c2 * l2 / (half_length.powf(gamma + 1.0) - self.c3)
            + self.c4 * half_length.powf(beta + gamma - 1.0)
    }
}

fn smallest_cell(template: &CellGeometry) -> f64 {
    template.regions() as f64 * template.d0()
}

/// `ℏ(L)` assembled from the optimal-law load factor.
pub fn joint_cost(
    half_length: f64,
    template: &CellGeometry,
    traffic: &TrafficModel,
    speed: &SpeedModel,
    scaling: &ScalingSpec,
) -> Result<f64> {
    if !(half_length > smallest_cell(template)) {
        return Err(Error::invalid(format!(
            "joint cost needs L > N·d0 = {}, got {half_length}",
            smallest_cell(template)
        )));
    }
    let geom = template.with_half_length(half_length)?;
    let pbar = scaling.budget(half_length, geom.beta());
    let rho = rho_at_optimum(&geom, traffic, speed, pbar)?;
    Ok(rho + scaling.omega_p * scaling.p_tilde * half_length.powf(geom.beta() + scaling.gamma - 1.0))
}

/// Minimizer of `ℏ` for `β = 2`, `γ = 1`, valid when `C_ρ,1 > 0`.
pub fn optimal_cell_size_closed_form(
    template: &CellGeometry,
    traffic: &TrafficModel,
    speed: &SpeedModel,
    scaling: &ScalingSpec,
) -> Result<f64> {
    if template.beta() != 2.0 {
        return Err(Error::Precondition(format!(
            "closed-form cell size needs β = 2, got {}",
            template.beta()
        )));
    }
    if scaling.gamma != 1.0 {
        return Err(Error::Precondition(format!(
            "closed-form cell size needs γ = 1, got {}",
            scaling.gamma
        )));
    }
    let c = ho_constants(template, traffic)?;
    let c_rho_1 = c.c_rho_1();
    if !(c_rho_1 > 0.0) {
        return Err(Error::Precondition(format!(
            "closed-form cell size needs C_ρ,1 > 0, got {c_rho_1}"
        )));
    }
    if !(traffic.lambda > 0.0) {
        return Err(Error::Precondition("closed-form cell size needs λ > 0".into()));
    }
    let mu_s_h = traffic.mu * traffic.s_h;
    let ev = speed.mean_speed();
    let inner = c.c_rho_2(mu_s_h)
        / (c_rho_1 * speed.mean_inverse()
            + scaling.omega_p * scaling.p_tilde * traffic.servers as f64 / traffic.lambda);
    let l2 = (mu_s_h * ev).sqrt() / (scaling.p_tilde * c.c_h_ho) * (inner.sqrt() + (ev * mu_s_h).sqrt());
    Ok(l2.sqrt())
}

/// Outcome of the numeric cell-size search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSizeOptimum {
    pub half_length: f64,
    pub cost: f64,
    /// The minimizer sits on an end of the bracket.
    pub at_boundary: bool,
    /// The coarse scan found more than one local minimum.
    pub multimodal: bool,
}

/// Default search bracket `[1.01·N·d0, 50·N·d0]`.
pub fn default_bracket(template: &CellGeometry) -> (f64, f64) {
    let base = smallest_cell(template);
    (1.01 * base, 50.0 * base)
}

const SCAN_POINTS: usize = 100;
const GOLDEN_RTOL: f64 = 1e-6;

/// Minimizes `ℏ` over `bracket`: a 100-point scan picks the best neighborhood,
/// then golden-section search refines it to relative tolerance 1e-6.
pub fn optimal_cell_size_numeric(
    template: &CellGeometry,
    traffic: &TrafficModel,
    speed: &SpeedModel,
    scaling: &ScalingSpec,
    bracket: (f64, f64),
) -> Result<CellSizeOptimum> {
    let (lo, hi) = bracket;
    if !(lo > smallest_cell(template) && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "bracket [{lo}, {hi}] must lie inside (N·d0, ∞) = ({}, ∞)",
            smallest_cell(template)
        )));
    }
    // cells too small for the budget to carry the slowest handover overhead
    // are infeasible rather than errors
    let cost = |l: f64| match joint_cost(l, template, traffic, speed, scaling) {
        Err(Error::UnsupportableVelocity { .. }) => Ok(f64::INFINITY),
        other => other,
    };
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let values = grid.iter().map(|&l| cost(l)).collect::<Result<Vec<f64>>>()?;
    if values.iter().all(|v| v.is_infinite()) {
        return Err(Error::UnsupportableVelocity {
            speed: speed.mean_speed(),
            detail: format!("no cell size in [{lo}, {hi}] carries the handover overhead"),
        });
    }
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < values[b] { i } else { b });
    let local_minima = (0..SCAN_POINTS)
        .filter(|&i| {
            let left = i == 0 || values[i] < values[i - 1];
            let right = i + 1 == SCAN_POINTS || values[i] <= values[i + 1];
            left && right
        })
        .count();

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(SCAN_POINTS - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = cost(x1)?;
    let mut f2 = cost(x2)?;
    while (b - a) > GOLDEN_RTOL * 0.5 * (a + b) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = cost(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = cost(x2)?;
        }
    }
    let mut candidate = 0.5 * (a + b);
    let mut value = cost(candidate)?;
    if values[best] < value {
        candidate = grid[best];
        value = values[best];
    }
    let tol = GOLDEN_RTOL * candidate;
    Ok(CellSizeOptimum {
        half_length: candidate,
        cost: value,
        at_boundary: (candidate - lo).abs() <= tol || (hi - candidate).abs() <= tol,
        multimodal: local_minima > 1,
    })
}
