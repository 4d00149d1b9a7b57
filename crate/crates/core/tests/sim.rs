use smallcell::analytic::{service_times, CellGeometry, TrafficModel};
use smallcell::policy::PowerPolicy;
use smallcell::sim::{
    estimate_intermediate, run, run_replications, select_rate, sinr, InterferenceScope, RateScheme, SimConfig,
    Simulator,
};
use smallcell::speed::{kmph, SpeedModel};

fn base(lambda: f64, mu: f64, servers: u32) -> SimConfig {
    let geom = CellGeometry::uniform(70.0, 5, 10.0, 2.5).unwrap();
    SimConfig {
        towers: 6,
        dt: 0.05,
        traffic: TrafficModel::new(lambda, mu, 0.4, servers, TrafficModel::uniform_pi(5)).unwrap(),
        speed: SpeedModel::uniform(kmph(20.0), kmph(40.0)).unwrap(),
        policy: PowerPolicy::equal(1.0),
        rates: RateScheme::Regions,
        sigma2: None,
        interference: false,
        scope: InterferenceScope::SameChannel,
        seed: 1,
        warmup: 100.0,
        horizon: 2000.0,
        batches: 30,
        geom,
    }
}

fn busy() -> SimConfig {
    let mut c = base(0.08, 0.05, 8);
    c.rates = RateScheme::Common(vec![0.5, 0.05, 0.0005]);
    c
}

#[test]
fn rate_selection_examples() {
    assert_eq!(select_rate(0.05, &[0.6, 0.001]), 0.001);
    assert_eq!(select_rate(0.7, &[0.6, 0.001]), 0.6);
    assert_eq!(select_rate(0.0005, &[0.6, 0.001]), 0.0);
    assert_eq!(select_rate(0.6, &[0.6, 0.001]), 0.6);
}

#[test]
fn no_arrivals_means_empty_counters() {
    let r = run(&base(0.0, 0.05, 10)).unwrap();
    assert_eq!(r.counts.arrivals, 0);
    assert_eq!(r.counts.admitted + r.counts.handover_attempts + r.counts.completions, 0);
    assert_eq!((r.p_busy.value, r.p_drop.value), (0.0, 0.0));
}

#[test]
fn ample_servers_never_block() {
    let r = run(&base(0.001, 0.05, 200)).unwrap();
    assert!(r.counts.arrivals > 0);
    assert_eq!((r.counts.blocked, r.counts.drops), (0, 0));
    assert_eq!((r.p_busy.value, r.p_drop.value), (0.0, 0.0));
}

#[test]
fn crossing_time_is_cell_length_over_speed() {
    let cfg = base(0.0, 0.05, 10);
    let dt = cfg.dt;
    let mut sim = Simulator::new(cfg).unwrap();
    let v = 9.0;
    sim.inject(2, 0.0, v, f64::INFINITY).unwrap();
    let start = sim.time();
    while sim.users()[0].serving_tower == 2 {
        sim.step();
    }
    let elapsed = sim.time() - start;
    assert!((elapsed - 140.0 / v).abs() <= dt + 1e-9, "{elapsed}");
}

#[test]
fn handover_precedes_service_at_the_edge() {
    let cfg = base(0.0, 0.05, 10);
    let (dt, s_h) = (cfg.dt, cfg.traffic.s_h);
    let r0 = cfg.geom.r0();
    let mut sim = Simulator::new(cfg).unwrap();
    sim.inject(0, 140.0, 8.0, 5.0).unwrap();
    sim.step();
    let u = &sim.users()[0];
    assert_eq!(u.serving_tower, 1);
    // served from the far region −N of the new cell: r0·L^−β at unit power
    let rate = r0 * 70f64.powf(-2.5);
    assert!((u.remaining_bytes - (5.0 + s_h - rate * dt)).abs() < 1e-12);
    assert_eq!(sim.occupancy(), &[0, 1, 0, 0, 0, 0]);
}

#[test]
fn ring_wraps_from_last_cell_to_first() {
    let cfg = base(0.0, 0.05, 10);
    let mut sim = Simulator::new(cfg).unwrap();
    sim.inject(5, 140.0, 8.0, f64::INFINITY).unwrap();
    sim.step();
    let u = &sim.users()[0];
    assert_eq!(u.serving_tower, 0);
    assert!(u.position < 1.0);
}

#[test]
fn full_cell_drops_the_handover() {
    let cfg = base(0.0, 0.05, 1);
    let mut sim = Simulator::new(cfg).unwrap();
    sim.inject(1, 70.0, 8.0, f64::INFINITY).unwrap();
    assert_eq!(sim.inject(1, 10.0, 8.0, 1.0), None, "one server per cell");
    sim.inject(0, 140.0, 8.0, f64::INFINITY).unwrap();
    sim.step();
    assert_eq!(sim.users().len(), 1);
    assert_eq!(sim.occupancy(), &[0, 1, 0, 0, 0, 0]);
}

#[test]
fn sinr_matches_hand_evaluation() {
    let mut cfg = base(0.0, 0.05, 4);
    cfg.interference = true;
    cfg.sigma2 = Some(0.5);
    let mut sim = Simulator::new(cfg.clone()).unwrap();
    // tagged user 30 m right of tower 0 (at 70 m); interferer in cell 1 on the same channel
    sim.inject(0, 100.0, 8.0, 1.0).unwrap();
    sim.inject(1, 50.0, 8.0, 1.0).unwrap();
    let users = sim.users().to_vec();
    let (tagged, other) = (&users[0], &users[1]);
    assert_eq!((tagged.channel, other.channel), (0, 0));

    let signal = 1.0 * (30f64 / 10.0).powf(-2.5);
    // tower 1 sits at 210 m, the tagged user at 100 m
    let interference = 1.0 * (110f64 / 10.0).powf(-2.5);
    let want = signal / (1.0 + interference / 0.5);
    assert!((sinr(tagged, &users, &cfg) - want).abs() < 1e-12 * want);

    assert!((sinr(tagged, &users[..1], &cfg) - signal).abs() < 1e-12 * signal);
    let mut loud = cfg.clone();
    loud.sigma2 = Some(1e300);
    assert!((sinr(tagged, &users, &loud) - signal).abs() < 1e-12 * signal);
    let mut quiet = cfg.clone();
    quiet.interference = false;
    assert!((sinr(tagged, &users, &quiet) - signal).abs() < 1e-12 * signal);
}

#[test]
fn other_channels_do_not_interfere_in_channel_mode() {
    let mut cfg = base(0.0, 0.05, 4);
    cfg.interference = true;
    cfg.sigma2 = Some(0.5);
    let mut sim = Simulator::new(cfg.clone()).unwrap();
    sim.inject(0, 100.0, 8.0, 1.0).unwrap();
    sim.inject(1, 50.0, 8.0, 1.0).unwrap();
    sim.inject(1, 60.0, 8.0, 1.0).unwrap();
    let users = sim.users().to_vec();
    let same_channel = sinr(&users[0], &users, &cfg);
    assert_eq!(same_channel, sinr(&users[0], &users[..2], &cfg));

    let mut everyone = cfg.clone();
    everyone.scope = InterferenceScope::AllUsers;
    assert!(sinr(&users[0], &users, &everyone) < same_channel);
}

#[test]
fn same_seed_same_report() {
    let cfg = busy();
    for seed in [1, 2, 3] {
        let mut c = cfg.clone();
        c.seed = seed;
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
    }
    let mut other = cfg.clone();
    other.seed = 99;
    assert_ne!(run(&cfg).unwrap().counts, run(&other).unwrap().counts);
}

#[test]
fn calls_are_conserved() {
    let r = run(&busy()).unwrap();
    let c = &r.counts;
    assert!(c.drops > 0 && c.blocked > 0, "config should contend: {c:?}");
    assert_eq!(c.admitted, c.completions + c.drops + c.in_flight);
    assert_eq!(c.arrivals, c.admitted + c.blocked);
    assert!((r.p_busy.value - c.blocked as f64 / c.arrivals as f64).abs() < 1e-12);
    assert!((r.p_drop.value - c.drops as f64 / c.admitted as f64).abs() < 1e-12);
}

#[test]
fn replications_merge_independent_of_order() {
    let cfg = busy();
    let a = run_replications(&cfg, &[4, 5, 6]).unwrap();
    let b = run_replications(&cfg, &[6, 4, 5]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seeds, vec![4, 5, 6]);
}

#[test]
fn cells_see_equal_handover_traffic() {
    let mut cfg = base(0.02, 0.05, 40);
    cfg.horizon = 6000.0;
    let r = run(&cfg).unwrap();
    let per_cell = &r.counts.handover_arrivals_per_cell;
    let mean = per_cell.iter().sum::<u64>() as f64 / per_cell.len() as f64;
    assert!(mean > 500.0);
    for &k in per_cell {
        // Poisson-like spread; four standard deviations
        assert!((k as f64 - mean).abs() < 4.0 * mean.sqrt(), "{per_cell:?}");
    }
}

#[test]
fn endless_jobs_always_hand_over() {
    let mut cfg = base(0.02, 1e-9, 60);
    cfg.speed = SpeedModel::fixed(8.0).unwrap();
    cfg.horizon = 3000.0;
    let m = estimate_intermediate(&cfg).unwrap();
    assert!(m.p_e_ho.value > 0.999 && m.p_h_ho.value > 0.999, "{m:?}");
    let crossing = 140.0 / 8.0;
    assert!((m.b_h.value - crossing).abs() < m.b_h.half_width + 0.01 * crossing);
}

#[test]
fn handover_sojourn_matches_model_for_long_calls() {
    let mut cfg = base(0.02, 0.002, 60);
    cfg.horizon = 4000.0;
    let m = estimate_intermediate(&cfg).unwrap();
    let (_, b_h) = service_times(&cfg.geom, &cfg.traffic, &cfg.speed).unwrap();
    assert!(
        (m.b_h.value - b_h).abs() < m.b_h.half_width + 0.02 * b_h,
        "{} vs {b_h}",
        m.b_h.value
    );
}

#[test]
fn short_runs_flag_insufficient_data() {
    let mut cfg = base(0.0005, 0.05, 10);
    cfg.horizon = 150.0;
    cfg.warmup = 100.0;
    assert!(run(&cfg).unwrap().insufficient_data);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = base(0.01, 0.05, 10);
    c.dt = 1.0;
    assert!(run(&c).is_err(), "a car would skip regions");
    let mut c = base(0.01, 0.05, 10);
    c.rates = RateScheme::Common(vec![0.1, 0.2]);
    assert!(run(&c).is_err());
    let mut c = base(0.01, 0.05, 10);
    c.interference = true;
    assert!(run(&c).is_err(), "interference needs σ²");
    let mut c = base(0.01, 0.05, 10);
    c.warmup = 3000.0;
    assert!(run(&c).is_err());
}

#[test]
fn halving_the_step_keeps_the_drop_rate() {
    let mut coarse = busy();
    coarse.horizon = 8000.0;
    coarse.dt = 0.1;
    let mut fine = coarse.clone();
    fine.dt = 0.05;
    let a = run_replications(&coarse, &[1, 2]).unwrap();
    let b = run_replications(&fine, &[1, 2]).unwrap();
    let hw = a.p_drop.half_width.hypot(b.p_drop.half_width);
    assert!(
        (a.p_drop.value - b.p_drop.value).abs() < hw,
        "{:?} vs {:?}",
        a.p_drop,
        b.p_drop
    );
}
