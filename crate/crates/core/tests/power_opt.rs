mod common;

use common::{class_loads, random_case, random_split, rng, simpson};
use proptest::prelude::*;
use smallcell::analytic::{ho_constants, load_factor_classes, load_factor_continuous, CellGeometry, TrafficModel};
use smallcell::policy::{PowerPolicy, SpeedClasses};
use smallcell::power_opt::{
    budget_gradient, continuous_optimal_power, discrete_optimal_power, optimal_slope, oracle_minimize_discrete,
    pv_matrix, rho_at_optimum, velocity_limit,
};
use smallcell::speed::{kmph, SpeedModel};
use smallcell::Error;

fn two_class_reference() -> (CellGeometry, TrafficModel, SpeedClasses) {
    let geom = CellGeometry::uniform(70.0, 5, 10.0, 2.5).unwrap();
    let traffic = TrafficModel::new(0.01, 0.2, 0.4, 20, TrafficModel::uniform_pi(5)).unwrap();
    let speed = SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap();
    let classes = SpeedClasses::from_edges(&speed, vec![kmph(20.0), kmph(30.0), kmph(40.0)]).unwrap();
    (geom, traffic, classes)
}

#[test]
fn pv_matrix_three_classes_matches_eigen_decomposition() {
    let m = pv_matrix(&[0.2, 0.3, 0.5]).unwrap();
    let want = [[0.28, 0.12], [0.12, 0.48]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((m.entries[i][j] - want[i][j]).abs() < 1e-15);
        }
    }
    // eigenvalues of a symmetric 2×2: trace/2 ± sqrt((trace/2)² − det)
    let (a, b, d) = (want[0][0], want[0][1], want[1][1]);
    let half = 0.5 * (a + d);
    let disc = (half * half - (a * d - b * b)).sqrt();
    assert!(half - disc > 0.0);
    assert!(m.positive_definite);
}

#[test]
fn pv_matrix_uniform_classes_are_positive_definite() {
    for count in 2..=10 {
        let p = vec![1.0 / count as f64; count];
        assert!(pv_matrix(&p).unwrap().positive_definite, "I = {count}");
    }
    let half = pv_matrix(&[0.5, 0.5]).unwrap();
    assert!((half.entries[0][0] - 1.0).abs() < 1e-15);
    assert!(pv_matrix(&[0.5, 0.0, 0.5]).is_err());
}

#[test]
fn single_class_gets_the_budget() {
    let (geom, traffic, _) = two_class_reference();
    let speed = SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap();
    let one = SpeedClasses::uniform(&speed, 1).unwrap();
    assert_eq!(discrete_optimal_power(&geom, &traffic, &one, 0.7).unwrap(), vec![0.7]);
}

#[test]
fn reference_two_class_optimum_matches_grid() {
    let (geom, traffic, classes) = two_class_reference();
    let powers = discrete_optimal_power(&geom, &traffic, &classes, 0.7).unwrap();
    assert!(powers[1] > powers[0]);
    let grid = oracle_minimize_discrete(&geom, &traffic, &classes, 0.7, 1e-4).unwrap();
    assert!((powers[0] - grid.powers[0]).abs() <= 1e-4 + 1e-12);
    let rho = load_factor_classes(&geom, &traffic, &class_loads(&classes, &powers)).unwrap();
    assert!(rho <= grid.rho + 1e-12);
    assert!(grid.rho - rho <= grid.cell_spread);
}

#[test]
fn oracle_refuses_four_classes() {
    let (geom, traffic, _) = two_class_reference();
    let speed = SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap();
    let four = SpeedClasses::uniform(&speed, 4).unwrap();
    assert_eq!(
        oracle_minimize_discrete(&geom, &traffic, &four, 0.7, 1e-3),
        Err(Error::UnsupportedDimension(4))
    );
}

#[test]
fn first_order_conditions_hold_for_many_classes() {
    let mut r = rng(7);
    for _ in 0..10 {
        let case = random_case(&mut r, (2.0, 6.0));
        let classes = SpeedClasses::uniform(&case.speed, 8).unwrap();
        let powers = discrete_optimal_power(&case.geom, &case.traffic, &classes, case.pbar).unwrap();
        let grad = budget_gradient(&case.geom, &case.traffic, &classes, &powers, 1e-5).unwrap();
        let rho = load_factor_classes(&case.geom, &case.traffic, &class_loads(&classes, &powers)).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-6 * rho / case.pbar, "gradient {g} at ρ = {rho}");
        }
    }
}

#[test]
fn velocity_limit_solves_the_defining_equation() {
    // transferable bytes over the smallest cell: C_h·P·(N d0)^(1−β) / (μ V), summed directly
    let geom = CellGeometry::uniform(70.0, 5, 10.0, 2.5).unwrap();
    let traffic = TrafficModel::new(0.01, 0.2, 0.4, 20, TrafficModel::uniform_pi(5)).unwrap();
    let r0 = 10f64.powf(2.5);
    let ch = 0.2 / 5.0 * r0 * 2.0 * (1..=5).map(|k| (k as f64 / 5.0).powf(-2.5)).sum::<f64>();
    let g = |v: f64| ch * 0.7 * 50f64.powf(-1.5) / (0.2 * v);
    let (mut lo, mut hi) = (1e-6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = velocity_limit(&geom, &traffic, 0.7).unwrap();
    assert!((v - lo).abs() < 1e-9 * v);

    let doubled = velocity_limit(&geom, &traffic, 1.4).unwrap();
    assert!((doubled - 2.0 * v).abs() < 1e-12 * v);
    let halved = velocity_limit(&geom, &traffic.with_s_h(0.2), 0.7).unwrap();
    assert!((halved - 2.0 * v).abs() < 1e-12 * v);
    assert_eq!(
        velocity_limit(&geom, &traffic.with_s_h(0.0), 0.7).unwrap(),
        f64::INFINITY
    );
}

#[test]
fn zero_overhead_means_equal_power() {
    let (geom, traffic, classes) = two_class_reference();
    let speed = SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap();
    let free = traffic.with_s_h(0.0);
    let policy = continuous_optimal_power(&geom, &free, &speed, 0.7).unwrap();
    assert_eq!(policy.evaluate(kmph(20.0)), 0.7);
    assert_eq!(policy.evaluate(kmph(40.0)), 0.7);
    assert_eq!(
        discrete_optimal_power(&geom, &free, &classes, 0.7).unwrap(),
        vec![0.7, 0.7]
    );
}

#[test]
fn starved_budget_is_reported() {
    let (geom, traffic, classes) = two_class_reference();
    let err = discrete_optimal_power(&geom, &traffic, &classes, 1e-4).unwrap_err();
    assert!(matches!(err, Error::InsufficientPowerBudget { .. }), "{err:?}");
}

#[test]
fn closed_form_rho_matches_quadrature() {
    let mut r = rng(11);
    for _ in 0..20 {
        let case = random_case(&mut r, (1.5, 6.0));
        let policy = continuous_optimal_power(&case.geom, &case.traffic, &case.speed, case.pbar).unwrap();
        let closed = rho_at_optimum(&case.geom, &case.traffic, &case.speed, case.pbar).unwrap();
        let quad = load_factor_continuous(&case.geom, &case.traffic, &policy, &case.speed).unwrap();
        assert!((closed - quad).abs() < 1e-8 * closed, "{closed} vs {quad}");
    }
    let case = random_case(&mut r, (2.0, 3.0));
    let idle = case.traffic.with_lambda(0.0);
    assert_eq!(rho_at_optimum(&case.geom, &idle, &case.speed, case.pbar).unwrap(), 0.0);
}

#[test]
fn overloaded_handover_is_unsupportable() {
    let (geom, traffic, _) = two_class_reference();
    let speed = SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap();
    let err = rho_at_optimum(&geom, &traffic.with_s_h(1e4), &speed, 0.7).unwrap_err();
    assert!(matches!(err, Error::UnsupportableVelocity { .. }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_budget_is_exact(seed in any::<u64>(), count in 1usize..12) {
        let mut r = rng(seed);
        let case = random_case(&mut r, (2.0, 6.0));
        let classes = SpeedClasses::uniform(&case.speed, count).unwrap();
        let powers = discrete_optimal_power(&case.geom, &case.traffic, &classes, case.pbar).unwrap();
        let spent: f64 = classes.probs().iter().zip(&powers).map(|(p, q)| p * q).sum();
        prop_assert!((spent - case.pbar).abs() <= 1e-12 * case.pbar);
        prop_assert!(powers.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn linear_law_averages_to_budget(seed in any::<u64>()) {
        let mut r = rng(seed);
        let case = random_case(&mut r, (1.5, 6.0));
        let policy = continuous_optimal_power(&case.geom, &case.traffic, &case.speed, case.pbar).unwrap();
        let (a, b) = case.speed.support();
        let mean = simpson(a, b, 2, |v| policy.evaluate(v) / (b - a));
        prop_assert!((mean - case.pbar).abs() <= 1e-12 * case.pbar);
        prop_assert!((policy.evaluate(case.speed.mean_speed()) - case.pbar).abs() <= 1e-12 * case.pbar);
    }

    #[test]
    fn slope_grows_with_overhead(seed in any::<u64>(), scale in 1.01..4.0f64) {
        let mut r = rng(seed);
        let case = random_case(&mut r, (2.0, 6.0));
        let base = optimal_slope(&case.geom, &case.traffic).unwrap();
        let more = optimal_slope(&case.geom, &case.traffic.with_s_h(case.traffic.s_h * scale)).unwrap();
        prop_assert!(more > base && base >= 0.0);
    }

    #[test]
    fn class_probabilities_recover_mean_inverse(seed in any::<u64>(), count in 1usize..16) {
        let mut r = rng(seed);
        let case = random_case(&mut r, (2.0, 6.0));
        let classes = SpeedClasses::uniform(&case.speed, count).unwrap();
        let total: f64 = classes.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(classes.cond_inv_speed().windows(2).all(|w| w[1] < w[0]));
        let mixed = classes.mixture_mean_inverse();
        prop_assert!((mixed - case.speed.mean_inverse()).abs() < 1e-10 * mixed);
    }

    #[test]
    fn two_class_closed_form_beats_grid(seed in any::<u64>()) {
        let mut r = rng(seed);
        let case = random_case(&mut r, (2.0, 6.0));
        let classes = random_split(&mut r, &case.speed);
        let powers = discrete_optimal_power(&case.geom, &case.traffic, &classes, case.pbar).unwrap();
        let rho = load_factor_classes(&case.geom, &case.traffic, &class_loads(&classes, &powers)).unwrap();
        let grid = oracle_minimize_discrete(&case.geom, &case.traffic, &classes, case.pbar, 1e-3).unwrap();
        prop_assert!(rho <= grid.rho * (1.0 + 1e-12));
        prop_assert!(grid.rho - rho <= grid.cell_spread);
    }
}

#[test]
fn equal_power_never_beats_the_linear_law() {
    let mut r = rng(5);
    for _ in 0..20 {
        let case = random_case(&mut r, (1.5, 6.0));
        let linear = rho_at_optimum(&case.geom, &case.traffic, &case.speed, case.pbar).unwrap();
        let equal = load_factor_continuous(&case.geom, &case.traffic, &PowerPolicy::equal(case.pbar), &case.speed);
        if let Ok(equal) = equal {
            assert!(linear < equal);
        }
        let c = ho_constants(&case.geom, &case.traffic).unwrap();
        assert!(c.c_h_ho > 0.0);
    }
}

#[test]
fn optimal_load_matches_hand_evaluation() {
    // ten-cell ring setting: N = 5, uniform arrivals, β = 3.5, U[20, 100] km/h
    let geom = CellGeometry::uniform(70.0, 5, 10.0, 3.5).unwrap();
    let traffic = TrafficModel::new(0.68 / 70.0, 0.2, 0.4, 60, TrafficModel::uniform_pi(5)).unwrap();
    let (a, b) = (kmph(20.0), kmph(100.0));
    let speed = SpeedModel::uniform(a, b).unwrap();
    let pbar: f64 = 0.75;

    let r0 = 10f64.powf(3.5);
    let inv: Vec<f64> = (1..=5).map(|k| (k as f64 / 5.0).powf(-3.5)).collect();
    let total: f64 = inv.iter().sum();
    // from region −n a user still crosses −n..−1 and the whole right half;
    // from region +n only n..N
    let mut ahead = 0.0;
    for n in 1..=5usize {
        ahead += inv[..n].iter().sum::<f64>() + total;
        ahead += inv[n - 1..].iter().sum::<f64>();
    }
    let ce = 0.2 / 5.0 * r0 * ahead / 10.0;
    let ch = 0.2 / 5.0 * r0 * 2.0 * total;
    let cbe = 1.0;
    let (cbh, mu_sh) = (2.0, 0.2 * 0.4);
    let c1 = cbe - cbh * ce / ch;
    let c2 = cbh * (1.0 - mu_sh * ce / ch);
    let ev = 0.5 * (a + b);
    let einv = (b / a).ln() / (b - a);
    let l: f64 = 70.0;
    let want = 0.68 / 70.0 * l * l / 60.0 * (c1 * einv + c2 / (pbar * l.powf(-2.5) * ch - ev * mu_sh));

    let got = rho_at_optimum(&geom, &traffic, &speed, pbar).unwrap();
    assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
}
