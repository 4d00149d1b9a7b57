//! Optimal speed-based power laws under an average-power budget.
//!
//! With `I` speed classes the load factor is separable in the class powers,
//! and minimizing it on the budget hyperplane `Σ p_i P_i = P̄` gives
//!
//! ```text
//! P_i* = P̄ + (μ s_h L^(β-1) / C_h,ho) · (1/Υ_i − Σ_j p_j / Υ_j)
//! ```
//!
//! Letting the classes shrink to single speeds turns `1/Υ_i` into `v`, and the
//! optimum becomes affine in speed:
//! `P*(v) = P̄ + (μ s_h L^(β-1) / C_h,ho) · (v − E[V])`.
//!
//! [`oracle_minimize_discrete`] is an exhaustive grid search over the budget
//! simplex, kept as an independent check of the closed form.

use rayon::prelude::*;

use crate::analytic::{ho_constants, load_factor_classes, CellGeometry, ClassLoad, TrafficModel};
use crate::error::{Error, Result};
use crate::policy::PowerPolicy;
pub use crate::policy::SpeedClasses;
use crate::speed::SpeedModel;

/// Default margin by which every class power must clear its velocity floor.
pub const DEFAULT_FLOOR_MARGIN: f64 = 0.05;

/// The `(I−1)×(I−1)` Hessian shape matrix `𝒫_V[i][j] = p_i·1{i=j} + p_i p_j / p_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PvMatrix {
    pub entries: Vec<Vec<f64>>,
    pub positive_definite: bool,
}

pub fn pv_matrix(probs: &[f64]) -> Result<PvMatrix> {
    if probs.is_empty() {
        return Err(Error::invalid("pv_matrix: need at least one class"));
    }
    if let Some(p) = probs.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::invalid(format!(
            "pv_matrix: class probability {p} is not positive"
        )));
    }
    let last = probs[probs.len() - 1];
    let m = probs.len() - 1;
    let entries: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let diag = if i == j { probs[i] } else { 0.0 };
                    diag + probs[i] * probs[j] / last
                })
                .collect()
        })
        .collect();
    let positive_definite = cholesky_succeeds(&entries);
    Ok(PvMatrix {
        entries,
        positive_definite,
    })
}

fn cholesky_succeeds(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return false;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

/// `μ s_h L^(β-1) / C_h,ho`: the slope of the optimal law in speed.
pub fn optimal_slope(geom: &CellGeometry, traffic: &TrafficModel) -> Result<f64> {
    let c = ho_constants(geom, traffic)?;
    Ok(traffic.mu * traffic.s_h * geom.half_length().powf(geom.beta() - 1.0) / c.c_h_ho)
}

/// Power below which a user of speed `v` cannot move `s_h` bytes through a
/// cell of this size.
pub fn velocity_floor(geom: &CellGeometry, traffic: &TrafficModel, v: f64) -> Result<f64> {
    Ok(optimal_slope(geom, traffic)? * v)
}

fn check_handover_hypothesis(geom: &CellGeometry, traffic: &TrafficModel) -> Result<()> {
    let c = ho_constants(geom, traffic)?;
    let gap = c.c_h_ho - traffic.mu * traffic.s_h * c.c_e_ho;
    if !(gap > 0.0) {
        return Err(Error::Precondition(format!(
            "C_h,ho − μ·s_h·C_e,ho = {gap} must be positive"
        )));
    }
    Ok(())
}

/// Closed-form optimal class powers, checked against the per-class velocity
/// floor with the given relative margin.
pub fn discrete_optimal_power_with_margin(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    classes: &SpeedClasses,
    pbar: f64,
    margin: f64,
) -> Result<Vec<f64>> {
    if !(pbar > 0.0) {
        return Err(Error::invalid(format!("P̄ must be positive, got {pbar}")));
    }
    check_handover_hypothesis(geom, traffic)?;
    let ups = classes.cond_inv_speed();
    let powers = if ups.iter().all(|&u| u == ups[0]) {
        vec![pbar; classes.len()]
    } else {
        if !pv_matrix(classes.probs())?.positive_definite {
            return Err(Error::Precondition(
                "class probability matrix 𝒫_V is not positive definite".into(),
            ));
        }
        let slope = optimal_slope(geom, traffic)?;
        let mean_speed_proxy: f64 = classes.probs().iter().zip(ups).map(|(p, u)| p / u).sum();
        ups.iter()
            .map(|u| pbar + slope * (1.0 / u - mean_speed_proxy))
            .collect()
    };
    let edges = classes.edges();
    for (i, &p) in powers.iter().enumerate() {
        let floor = velocity_floor(geom, traffic, edges[i + 1])? * (1.0 + margin);
        if !(p > 0.0) || p < floor {
            return Err(Error::InsufficientPowerBudget {
                class: i + 1,
                power: p,
                floor,
            });
        }
    }
    Ok(powers)
}

/// Closed-form optimal class powers with the default 5% floor margin.
pub fn discrete_optimal_power(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    classes: &SpeedClasses,
    pbar: f64,
) -> Result<Vec<f64>> {
    discrete_optimal_power_with_margin(geom, traffic, classes, pbar, DEFAULT_FLOOR_MARGIN)
}

/// The affine optimal law `P*(v)`.
pub fn continuous_optimal_power(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    speed: &SpeedModel,
    pbar: f64,
) -> Result<PowerPolicy> {
    if !(pbar > 0.0) {
        return Err(Error::invalid(format!("P̄ must be positive, got {pbar}")));
    }
    check_handover_hypothesis(geom, traffic)?;
    let slope = optimal_slope(geom, traffic)?;
    let policy = PowerPolicy::Linear {
        pbar,
        slope,
        mean_speed: speed.mean_speed(),
    };
    let (vmin, _) = speed.support();
    let at_min = policy.evaluate(vmin);
    if !(at_min > 0.0) {
        return Err(Error::InsufficientPowerBudget {
            class: 1,
            power: at_min,
            floor: 0.0,
        });
    }
    Ok(policy)
}

/// Load factor under the optimal affine law, in closed form.
pub fn rho_at_optimum(geom: &CellGeometry, traffic: &TrafficModel, speed: &SpeedModel, pbar: f64) -> Result<f64> {
    let c = ho_constants(geom, traffic)?;
    let l = geom.half_length();
    let mu_s_h = traffic.mu * traffic.s_h;
    let denom = pbar * l.powf(1.0 - geom.beta()) * c.c_h_ho - speed.mean_speed() * mu_s_h;
    if !(denom > 0.0) {
        return Err(Error::UnsupportableVelocity {
            speed: speed.mean_speed(),
            detail: format!("P̄·L^(1-β)·C_h,ho − E[V]·μ·s_h = {denom} is not positive"),
        });
    }
    let pre = traffic.lambda * l * l / traffic.servers as f64;
    Ok(pre * (c.c_rho_1() * speed.mean_inverse() + c.c_rho_2(mu_s_h) / denom))
}

/// Largest speed at which a user at power `power` can still move `s_h` bytes
/// through the smallest admissible cell (`L = N·d0`). Infinite when `s_h = 0`.
pub fn velocity_limit(geom: &CellGeometry, traffic: &TrafficModel, power: f64) -> Result<f64> {
    if traffic.s_h == 0.0 {
        return Ok(f64::INFINITY);
    }
    if traffic.mu == 0.0 {
        return Err(Error::invalid("velocity limit is undefined for μ = 0"));
    }
    let c = ho_constants(geom, traffic)?;
    let smallest = geom.regions() as f64 * geom.d0();
    // g(L) = C_h,ho·P·L^(1-β) / (μ V) = s_h
    Ok(c.c_h_ho * power * smallest.powf(1.0 - geom.beta()) / (traffic.mu * traffic.s_h))
}

/// Result of the exhaustive grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub powers: Vec<f64>,
    pub rho: f64,
    /// Largest change of `ρ` between the argmin and a grid neighbor.
    pub cell_spread: f64,
}

/// Exhaustive search over `{Σ p_i P_i = P̄, P_i ≥ floor_i}` on a grid of step
/// `resolution` for the first `I−1` powers (the last one absorbs the budget).
/// Ties go to the lowest grid index.
pub fn oracle_minimize_discrete(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    classes: &SpeedClasses,
    pbar: f64,
    resolution: f64,
) -> Result<GridOptimum> {
    let count = classes.len();
    if count > 3 {
        return Err(Error::UnsupportedDimension(count));
    }
    if !(resolution > 0.0) {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let probs = classes.probs();
    let ups = classes.cond_inv_speed();
    let eval = |powers: &[f64]| -> Option<f64> {
        let loads: Vec<ClassLoad> = (0..count)
            .map(|i| ClassLoad {
                prob: probs[i],
                cond_inv_speed: ups[i],
                power: powers[i],
            })
            .collect();
        load_factor_classes(geom, traffic, &loads).ok()
    };
    if count == 1 {
        let rho = eval(&[pbar]).ok_or_else(|| Error::Precondition("P̄ is not supportable".into()))?;
        return Ok(GridOptimum {
            powers: vec![pbar],
            rho,
            cell_spread: 0.0,
        });
    }
    let c = ho_constants(geom, traffic)?;
    let l1b = geom.half_length().powf(1.0 - geom.beta());
    let mu_s_h = traffic.mu * traffic.s_h;
    let pre = traffic.lambda * geom.half_length().powi(2) / traffic.servers as f64;
    // per-class summand p_i·Υ_i·(C_b,e + C_b,h(1−δC_e)/(δC_h−μs_h)); None if infeasible
    let term = |i: usize, p: f64| -> Option<f64> {
        let d = p * ups[i] * l1b;
        let denom = d * c.c_h_ho - mu_s_h;
        (p > 0.0 && denom > 0.0).then(|| probs[i] * ups[i] * (c.c_b_e + c.c_b_h * (1.0 - d * c.c_e_ho) / denom))
    };
    let last = count - 1;
    let axis = |i: usize| -> Vec<f64> {
        let hi = pbar / probs[i];
        let steps = (hi / resolution).floor() as usize;
        (1..=steps).map(|k| k as f64 * resolution).collect()
    };
    let remainder = |used: f64| (pbar - used) / probs[last];
    let grids: Vec<Vec<f64>> = (0..last).map(axis).collect();
    let cached: Vec<Vec<Option<f64>>> = grids
        .iter()
        .enumerate()
        .map(|(i, g)| g.iter().map(|&p| term(i, p)).collect())
        .collect();

    // total summand at grid index (a, b); b ignored when I = 2
    let total = |a: usize, b: usize| -> Option<f64> {
        let mut used = probs[0] * grids[0][a];
        let mut sum = cached[0][a]?;
        if last == 2 {
            used += probs[1] * grids[1][b];
            sum += cached[1][b]?;
        }
        Some(sum + term(last, remainder(used))?)
    };
    let outer = grids[0].len();
    let inner = if last == 2 { grids[1].len() } else { 1 };
    let best = (0..outer)
        .into_par_iter()
        .filter_map(|a| {
            let mut row_best: Option<(f64, usize, usize)> = None;
            for b in 0..inner {
                if let Some(v) = total(a, b) {
                    if row_best.map_or(true, |(bv, _, _)| v < bv) {
                        row_best = Some((v, a, b));
                    }
                }
            }
            row_best
        })
        .reduce_with(|x, y| {
            if y.0 < x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) {
                y
            } else {
                x
            }
        })
        .ok_or_else(|| Error::Precondition("no feasible grid point on the power simplex".into()))?;
    let (value, a, b) = best;
    let mut spread: f64 = 0.0;
    for (da, db) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        if last == 1 && db != 0 {
            continue;
        }
        let (na, nb) = (a as i64 + da, b as i64 + db);
        if na < 0 || nb < 0 || na as usize >= outer || nb as usize >= inner {
            continue;
        }
        if let Some(v) = total(na as usize, nb as usize) {
            spread = spread.max((v - value).abs());
        }
    }
    let mut powers = vec![grids[0][a]];
    let mut used = probs[0] * grids[0][a];
    if last == 2 {
        powers.push(grids[1][b]);
        used += probs[1] * grids[1][b];
    }
    powers.push(remainder(used));
    Ok(GridOptimum {
        powers,
        rho: pre * value,
        cell_spread: pre * spread,
    })
}

/// `∂ρ/∂P_i` along the budget hyperplane (eliminating `P_I`), by central
/// differences. Used to check first-order conditions when `I > 3`.
pub fn budget_gradient(
    geom: &CellGeometry,
    traffic: &TrafficModel,
    classes: &SpeedClasses,
    powers: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let count = classes.len();
    let probs = classes.probs();
    let rho = |p: &[f64]| -> Result<f64> {
        let loads: Vec<ClassLoad> = (0..count)
            .map(|i| ClassLoad {
                prob: probs[i],
                cond_inv_speed: classes.cond_inv_speed()[i],
                power: p[i],
            })
            .collect();
        load_factor_classes(geom, traffic, &loads)
    };
    let last = count - 1;
    (0..last)
        .map(|i| {
            let mut up = powers.to_vec();
            let mut down = powers.to_vec();
            up[i] += step;
            up[last] -= step * probs[i] / probs[last];
            down[i] -= step;
            down[last] += step * probs[i] / probs[last];
            Ok((rho(&up)? - rho(&down)?) / (2.0 * step))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::kmph;

    fn setup() -> (CellGeometry, TrafficModel, SpeedModel) {
        let g = CellGeometry::uniform(70.0, 5, 10.0, 2.5).unwrap();
        let t = TrafficModel::new(0.01, 0.2, 0.4, 20, TrafficModel::uniform_pi(5)).unwrap();
        let s = SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap();
        (g, t, s)
    }

    #[test]
    fn pv_matrix_two_halves() {
        let m = pv_matrix(&[0.5, 0.5]).unwrap();
        assert_eq!(m.entries, vec![vec![1.0]]);
        assert!(m.positive_definite);
        assert!(pv_matrix(&[0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn pv_matrix_uniform_classes() {
        for i in 2..=10 {
            let p = vec![1.0 / i as f64; i];
            assert!(pv_matrix(&p).unwrap().positive_definite, "I = {i}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(!cholesky_succeeds(&[vec![1.0, 2.0], vec![2.0, 1.0]]));
        assert!(cholesky_succeeds(&[vec![2.0, 1.0], vec![1.0, 2.0]]));
    }

    #[test]
    fn single_class_gets_budget() {
        let (g, t, s) = setup();
        let c = SpeedClasses::uniform(&s, 1).unwrap();
        assert_eq!(discrete_optimal_power(&g, &t, &c, 0.7).unwrap(), vec![0.7]);
        let o = oracle_minimize_discrete(&g, &t, &c, 0.7, 1e-3).unwrap();
        assert_eq!(o.powers, vec![0.7]);
    }

    #[test]
    fn identical_classes_get_equal_power() {
        let (g, t, _) = setup();
        let c = SpeedClasses::new(vec![5.0, 7.0, 9.0], vec![0.5, 0.5], vec![0.15, 0.15]).unwrap();
        assert_eq!(discrete_optimal_power(&g, &t, &c, 0.7).unwrap(), vec![0.7, 0.7]);
        let o = oracle_minimize_discrete(&g, &t, &c, 0.7, 1e-4).unwrap();
        assert!((o.powers[0] - 0.7).abs() <= 1e-4 && (o.powers[1] - 0.7).abs() <= 1e-4);
    }

    #[test]
    fn powers_increase_with_speed() {
        let (g, t, s) = setup();
        let c = SpeedClasses::uniform(&s, 4).unwrap();
        let p = discrete_optimal_power(&g, &t, &c, 0.7).unwrap();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
        let avg: f64 = c.probs().iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((avg - 0.7).abs() < 1e-12);
    }

    #[test]
    fn budget_too_small() {
        let (g, t, s) = setup();
        let c = SpeedClasses::uniform(&s, 2).unwrap();
        assert!(matches!(
            discrete_optimal_power(&g, &t, &c, 1e-3),
            Err(Error::InsufficientPowerBudget { .. })
        ));
    }

    #[test]
    fn linear_law_at_mean_and_without_overhead() {
        let (g, t, s) = setup();
        let p = continuous_optimal_power(&g, &t, &s, 0.7).unwrap();
        assert!((p.evaluate(s.mean_speed()) - 0.7).abs() < 1e-15);
        let t0 = TrafficModel::new(0.01, 0.2, 0.0, 20, TrafficModel::uniform_pi(5)).unwrap();
        let p0 = continuous_optimal_power(&g, &t0, &s, 0.7).unwrap();
        for v in [s.support().0, s.mean_speed(), s.support().1] {
            assert_eq!(p0.evaluate(v), 0.7);
        }
    }

    #[test]
    fn velocity_limit_scaling() {
        let (g, t, _) = setup();
        let v1 = velocity_limit(&g, &t, 0.7).unwrap();
        let v2 = velocity_limit(&g, &t, 1.4).unwrap();
        assert!((v2 / v1 - 2.0).abs() < 1e-12);
        let half = t.with_s_h(0.2);
        assert!((velocity_limit(&g, &half, 0.7).unwrap() / v1 - 2.0).abs() < 1e-12);
        let none = t.with_s_h(0.0);
        assert!(velocity_limit(&g, &none, 0.7).unwrap().is_infinite());
    }

    #[test]
    fn oracle_dimension_cap() {
        let (g, t, s) = setup();
        let c = SpeedClasses::uniform(&s, 4).unwrap();
        assert!(matches!(
            oracle_minimize_discrete(&g, &t, &c, 0.7, 1e-3),
            Err(Error::UnsupportedDimension(4))
        ));
    }

    #[test]
    fn first_order_conditions_for_many_classes() {
        let (g, t, s) = setup();
        let c = SpeedClasses::uniform(&s, 8).unwrap();
        let p = discrete_optimal_power(&g, &t, &c, 0.7).unwrap();
        let grad = budget_gradient(&g, &t, &c, &p, 1e-5).unwrap();
        let rho = load_factor_classes(
            &g,
            &t,
            &c.probs()
                .iter()
                .zip(c.cond_inv_speed())
                .zip(&p)
                .map(|((&prob, &u), &power)| ClassLoad {
                    prob,
                    cond_inv_speed: u,
                    power,
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        for gi in grad {
            assert!(gi.abs() < 1e-6 * rho, "gradient {gi} vs ρ {rho}");
        }
    }
}
