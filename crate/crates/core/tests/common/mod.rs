#![allow(dead_code)]

use rand::Rng;
use rand_pcg::Pcg64;
use smallcell::analytic::{ho_constants, CellGeometry, ClassLoad, TrafficModel};
use smallcell::policy::SpeedClasses;
use smallcell::speed::SpeedModel;

pub fn rng(seed: u64) -> Pcg64 {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// A configuration where the optimal laws are well posed.
#[derive(Debug, Clone)]
pub struct OptCase {
    pub geom: CellGeometry,
    pub traffic: TrafficModel,
    pub speed: SpeedModel,
    pub pbar: f64,
}

/// Random geometry and traffic; `s_h` is solved for so that `P̄` sits
/// `headroom` times above the power needed by the fastest user.
pub fn random_case(rng: &mut Pcg64, headroom: (f64, f64)) -> OptCase {
    loop {
        let l = rng.gen_range(40.0..150.0);
        let n = rng.gen_range(2..7usize);
        let d0 = rng.gen_range(0.3..0.9) * l / n as f64;
        let beta = rng.gen_range(2.0..4.0);
        let geom = CellGeometry::uniform(l, n, d0, beta).unwrap();
        let lambda = rng.gen_range(0.005..0.05);
        let mu = rng.gen_range(0.01..0.3);
        let servers = rng.gen_range(10..60u32);
        let vmin = rng.gen_range(4.0..15.0);
        let speed = SpeedModel::uniform(vmin, vmin * rng.gen_range(1.5..4.0)).unwrap();
        let pbar = rng.gen_range(0.5..1.5);
        let probe = TrafficModel::new(lambda, mu, 1.0, servers, TrafficModel::uniform_pi(n)).unwrap();
        let c = ho_constants(&geom, &probe).unwrap();
        let unit_slope = mu * l.powf(beta - 1.0) / c.c_h_ho;
        let s_h = pbar / (rng.gen_range(headroom.0..headroom.1) * unit_slope * speed.support().1);
        if !(s_h > 0.0 && s_h < 5.0) || c.c_h_ho <= mu * s_h * c.c_e_ho {
            continue;
        }
        let traffic = probe.with_s_h(s_h);
        return OptCase {
            geom,
            traffic,
            speed,
            pbar,
        };
    }
}

/// Two classes split at a random interior speed.
pub fn random_split(rng: &mut Pcg64, speed: &SpeedModel) -> SpeedClasses {
    let (lo, hi) = speed.support();
    let cut = lo + (hi - lo) * rng.gen_range(0.2..0.8);
    SpeedClasses::from_edges(speed, vec![lo, cut, hi]).unwrap()
}

pub fn class_loads(classes: &SpeedClasses, powers: &[f64]) -> Vec<ClassLoad> {
    (0..classes.len())
        .map(|i| ClassLoad {
            prob: classes.probs()[i],
            cond_inv_speed: classes.cond_inv_speed()[i],
            power: powers[i],
        })
        .collect()
}

/// A configuration for the closed-form cell size (`β = 2`, `C_ρ,1 > 0`).
#[derive(Debug, Clone)]
pub struct SizeCase {
    pub geom: CellGeometry,
    pub traffic: TrafficModel,
    pub speed: SpeedModel,
    pub p_tilde: f64,
    pub omega_p: f64,
}

pub fn random_size_case(rng: &mut Pcg64) -> SizeCase {
    loop {
        let n = rng.gen_range(3..7usize);
        let d0 = rng.gen_range(5.0..15.0);
        let geom = CellGeometry::uniform(2.0 * n as f64 * d0, n, d0, 2.0).unwrap();
        // arrivals ahead of the tower but short of the edge keep C_ρ,1 positive
        let mut pi = vec![0.0; 2 * n];
        for w in pi.iter_mut().skip(n + 1).take(n - 2) {
            *w = rng.gen_range(0.2..1.0);
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|w| *w /= total);
        let traffic = TrafficModel::new(
            rng.gen_range(0.005..0.05),
            rng.gen_range(0.01..0.2),
            rng.gen_range(0.1..1.0),
            rng.gen_range(10..60u32),
            pi,
        )
        .unwrap();
        let vmin = rng.gen_range(4.0..15.0);
        let speed = SpeedModel::uniform(vmin, vmin * rng.gen_range(1.5..4.0)).unwrap();
        let c = ho_constants(&geom, &traffic).unwrap();
        if c.c_rho_1() <= 0.0 {
            continue;
        }
        return SizeCase {
            geom,
            traffic,
            speed,
            p_tilde: 10f64.powf(rng.gen_range(-7.0..-4.0)),
            omega_p: rng.gen_range(0.1..5.0),
        };
    }
}
