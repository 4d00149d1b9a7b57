//! The JSON experiment document and its validation.
//!
//! Speeds are written in km/h and converted to m/s on load. The
//! truncated-Gaussian `variance` is in (m/s)², the simulator's own unit.

use serde::{Deserialize, Serialize};

use crate::analytic::{region_slot, CellGeometry, TrafficModel};
use crate::cell_sizing::{default_bracket, ScalingSpec};
use crate::error::{Error, Result};
use crate::policy::{PowerPolicy, SpeedClasses};
use crate::power_opt::{continuous_optimal_power, discrete_optimal_power_with_margin, DEFAULT_FLOOR_MARGIN};
use crate::sim::{InterferenceScope, RateScheme, SimConfig, MIN_BATCHES};
use crate::speed::{kmph, SpeedModel};

use super::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub geometry: GeometryDoc,
    pub traffic: TrafficDoc,
    pub speed: SpeedDoc,
    pub power: PowerDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_size: Option<CellSizeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDoc {
    /// Cell half-length `L`, meters.
    pub half_length: f64,
    pub regions: usize,
    pub d0: f64,
    pub beta: f64,
    /// Region edges as fractions of `L`; equal widths when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
}

/// Exactly one of the three arrival-rate fields must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficDoc {
    /// Arrivals per meter per second; a cell sees `λ·L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// New calls per second into one cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_arrival_rate: Option<f64>,
    /// New calls per second over the whole ring of `simulation.towers` cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_arrival_rate: Option<f64>,
    pub mu: f64,
    pub s_h: f64,
    pub servers: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<PiDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiDoc {
    /// `"uniform"`.
    Named(String),
    /// Weights over regions `-N..-1, 1..N`.
    Weights(Vec<f64>),
    /// Equal weight over the listed signed region indices.
    Over { equal_over: Vec<i32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedDoc {
    Uniform {
        min_kmph: f64,
        max_kmph: f64,
    },
    TruncatedGaussian {
        min_kmph: f64,
        max_kmph: f64,
        /// Midpoint of the support when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_kmph: Option<f64>,
        /// (m/s)².
        variance: f64,
    },
    Fixed {
        speed_kmph: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Equal,
    Alpha,
    LinearOptimal,
    DiscreteOptimal,
    Monomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerDoc {
    pub pbar: f64,
    #[serde(default = "default_rule")]
    pub rule: Rule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

fn default_rule() -> Rule {
    Rule::Equal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateItem {
    Value(f64),
    /// A number or `start:step:stop`.
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatesDoc {
    /// `"regions"`, or comma-separated numbers and ranges.
    Text(String),
    List(Vec<RateItem>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDoc {
    pub towers: usize,
    pub dt: f64,
    pub rates: RatesDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub interference: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interference_scope: Option<InterferenceScope>,
    /// Defaults to `max(10% of horizon, 200 cell crossing times)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeDoc {
    /// Equal-width speed classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    /// Explicit class edges; overrides `classes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges_kmph: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSizeDoc {
    pub p_tilde: f64,
    pub gamma: f64,
    pub omega_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

/// Expands rate notation: comma-separated numbers and inclusive
/// `start:step:stop` ranges, e.g. `"0.8:-0.035:0.03, 0.011:-0.004:0.003"`.
pub fn parse_rates(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        expand_item(item, &mut out)?;
    }
    Ok(out)
}

fn number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::config(format!("`{s}` is not a number")))
}

fn expand_item(item: &str, out: &mut Vec<f64>) -> Result<()> {
    let parts: Vec<&str> = item.split(':').collect();
    match parts.as_slice() {
        [x] => out.push(number(x)?),
        [start, step, stop] => {
            let (start, step, stop) = (number(start)?, number(step)?, number(stop)?);
            if step == 0.0 || !step.is_finite() || (stop - start) * step < 0.0 {
                return Err(Error::config(format!("range `{item}` never reaches its end")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // rounding keeps 0.8 - 22·0.035 equal to the written 0.03
            out.extend((0..=count).map(|i| ((start + step * i as f64) * 1e12).round() / 1e12));
        }
        _ => {
            return Err(Error::config(format!(
                "`{item}` is neither a number nor start:step:stop"
            )))
        }
    }
    Ok(())
}

/// 1-based line of the first occurrence of `"key"` in `src`.
fn line_of(src: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    src.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Everything the experiment modes need, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geom: CellGeometry,
    pub traffic: TrafficModel,
    pub speed: SpeedModel,
    pub pbar: f64,
    pub policy: PowerPolicy,
    pub sim: Option<SimConfig>,
    pub classes: Option<SpeedClasses>,
    pub floor_margin: f64,
    pub scaling: Option<ScalingSpec>,
    pub bracket: Option<(f64, f64)>,
    pub alphas: Vec<f64>,
    pub pbars: Vec<f64>,
    pub betas: Vec<f64>,
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn fail(&self, key: &str, path: &str, msg: impl std::fmt::Display) -> Error {
        match line_of(self.src, key) {
            Some(line) => Error::Config(format!("line {line}: {path}: {msg}")),
            None => Error::Config(format!("{path}: {msg}")),
        }
    }
}

fn speed_model(doc: &SpeedDoc, ctx: &Ctx) -> Result<SpeedModel> {
    let wrap = |e: Error| ctx.fail("kind", "speed", e);
    match *doc {
        SpeedDoc::Uniform { min_kmph, max_kmph } => SpeedModel::uniform(kmph(min_kmph), kmph(max_kmph)).map_err(wrap),
        SpeedDoc::TruncatedGaussian {
            min_kmph,
            max_kmph,
            mean_kmph,
            variance,
        } => SpeedModel::truncated_gaussian(
            kmph(min_kmph),
            kmph(max_kmph),
            kmph(mean_kmph.unwrap_or(0.5 * (min_kmph + max_kmph))),
            variance,
        )
        .map_err(wrap),
        SpeedDoc::Fixed { speed_kmph } => SpeedModel::fixed(kmph(speed_kmph)).map_err(wrap),
    }
}

fn arrival_pi(doc: &Option<PiDoc>, regions: usize, ctx: &Ctx) -> Result<Vec<f64>> {
    match doc {
        None => Ok(TrafficModel::uniform_pi(regions)),
        Some(PiDoc::Named(name)) if name == "uniform" => Ok(TrafficModel::uniform_pi(regions)),
        Some(PiDoc::Named(name)) => Err(ctx.fail("pi", "traffic.pi", format!("unknown distribution `{name}`"))),
        Some(PiDoc::Weights(w)) => Ok(w.clone()),
        Some(PiDoc::Over { equal_over }) => {
            let mut pi = vec![0.0; 2 * regions];
            for &n in equal_over {
                if n == 0 || n.unsigned_abs() as usize > regions {
                    return Err(ctx.fail("equal_over", "traffic.pi.equal_over", format!("no region {n}")));
                }
                pi[region_slot(n, regions)] += 1.0 / equal_over.len() as f64;
            }
            Ok(pi)
        }
    }
}

fn rate_scheme(doc: &RatesDoc, ctx: &Ctx) -> Result<RateScheme> {
    let wrap = |e: Error| ctx.fail("rates", "simulation.rates", e);
    let rates = match doc {
        RatesDoc::Text(t) if t.trim() == "regions" => return Ok(RateScheme::Regions),
        RatesDoc::Text(t) => parse_rates(t).map_err(wrap)?,
        RatesDoc::List(items) => {
            let mut out = Vec::new();
            for item in items {
                match item {
                    RateItem::Value(x) => out.push(*x),
                    RateItem::Text(t) => out.extend(parse_rates(t).map_err(wrap)?),
                }
            }
            out
        }
    };
    let scheme = RateScheme::Common(rates);
    scheme.validate().map_err(wrap)?;
    Ok(scheme)
}

fn policy(
    doc: &PowerDoc,
    geom: &CellGeometry,
    traffic: &TrafficModel,
    speed: &SpeedModel,
    classes: Option<&SpeedClasses>,
    margin: f64,
    ctx: &Ctx,
) -> Result<PowerPolicy> {
    let need = |field: Option<f64>, name: &str| {
        field.ok_or_else(|| ctx.fail("rule", "power", format!("rule {:?} needs `{name}`", doc.rule)))
    };
    let p = match doc.rule {
        Rule::Equal => PowerPolicy::equal(doc.pbar),
        Rule::Alpha => PowerPolicy::alpha_rule(doc.pbar, need(doc.alpha, "alpha")?, speed)
            .map_err(|e| ctx.fail("alpha", "power.alpha", e))?,
        Rule::Monomial => PowerPolicy::monomial(doc.pbar, need(doc.exponent, "exponent")?, speed),
        Rule::LinearOptimal => continuous_optimal_power(geom, traffic, speed, doc.pbar)?,
        Rule::DiscreteOptimal => {
            let classes = classes
                .ok_or_else(|| ctx.fail("rule", "power", "rule discrete_optimal needs an `optimize` section"))?;
            PowerPolicy::Discrete {
                classes: classes.clone(),
                powers: discrete_optimal_power_with_margin(geom, traffic, classes, doc.pbar, margin)?,
            }
        }
    };
    Ok(p)
}

fn sweep_axis(values: Option<&Vec<f64>>, default: f64, key: &str, ctx: &Ctx) -> Result<Vec<f64>> {
    match values {
        None => Ok(vec![default]),
        Some(v) if v.is_empty() => Err(ctx.fail(key, &format!("sweep.{key}"), "sweep axis is empty")),
        Some(v) => Ok(v.clone()),
    }
}

/// Resolves seeds: the explicit list, extended with consecutive values up to
/// `replications`. Defaults to the single seed 1.
pub fn resolve_seeds(seeds: Option<&[u64]>, replications: Option<usize>) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = seeds.map(<[u64]>::to_vec).unwrap_or_else(|| vec![1]);
    let mut sorted = out.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config(format!("seeds must be distinct, got {out:?}")));
    }
    if let Some(k) = replications {
        if k == 0 {
            return Err(Error::config("replications must be positive"));
        }
        if k < out.len() {
            return Err(Error::config(format!(
                "{} seeds given but only {k} replications requested",
                out.len()
            )));
        }
        let mut next = sorted.last().copied().unwrap_or(0);
        while out.len() < k {
            next += 1;
            out.push(next);
        }
    }
    Ok(out)
}

pub(crate) fn build(doc: &ConfigDoc, src: &str) -> Result<Scenario> {
    let ctx = Ctx { src };
    let g = &doc.geometry;
    let geom = match &g.phi {
        Some(phi) => CellGeometry::new(g.half_length, phi.clone(), g.d0, g.beta),
        None => CellGeometry::uniform(g.half_length, g.regions, g.d0, g.beta),
    }
    .map_err(|e| ctx.fail("geometry", "geometry", e))?;
    if geom.regions() != g.regions {
        return Err(ctx.fail(
            "phi",
            "geometry.phi",
            format!("has {} entries but regions is {}", geom.regions(), g.regions),
        ));
    }

    let speed = speed_model(&doc.speed, &ctx)?;

    let t = &doc.traffic;
    let towers = doc.simulation.as_ref().map(|s| s.towers);
    let lambda = match (t.lambda, t.cell_arrival_rate, t.system_arrival_rate) {
        (Some(l), None, None) => l,
        (None, Some(c), None) => c / geom.half_length(),
        (None, None, Some(s)) => match towers {
            Some(n) if n > 0 => s / (n as f64 * geom.half_length()),
            _ => {
                return Err(ctx.fail(
                    "system_arrival_rate",
                    "traffic.system_arrival_rate",
                    "needs simulation.towers",
                ))
            }
        },
        _ => {
            return Err(ctx.fail(
                "traffic",
                "traffic",
                "give exactly one of lambda, cell_arrival_rate, system_arrival_rate",
            ))
        }
    };
    let pi = arrival_pi(&t.pi, geom.regions(), &ctx)?;
    let traffic =
        TrafficModel::new(lambda, t.mu, t.s_h, t.servers, pi).map_err(|e| ctx.fail("traffic", "traffic", e))?;
    traffic
        .check_against(&geom)
        .map_err(|e| ctx.fail("pi", "traffic.pi", e))?;

    let floor_margin = doc
        .optimize
        .as_ref()
        .and_then(|o| o.floor_margin)
        .unwrap_or(DEFAULT_FLOOR_MARGIN);
    if !(floor_margin >= 0.0) {
        return Err(ctx.fail("floor_margin", "optimize.floor_margin", "must be >= 0"));
    }
    let classes = match &doc.optimize {
        None => None,
        Some(o) => Some(
            match (&o.edges_kmph, o.classes) {
                (Some(edges), _) => SpeedClasses::from_edges(&speed, edges.iter().map(|&v| kmph(v)).collect()),
                (None, Some(count)) => SpeedClasses::uniform(&speed, count),
                (None, None) => SpeedClasses::uniform(&speed, 1),
            }
            .map_err(|e| ctx.fail("optimize", "optimize", e))?,
        ),
    };

    let p = &doc.power;
    if !(p.pbar > 0.0 && p.pbar.is_finite()) {
        return Err(ctx.fail("pbar", "power.pbar", format!("must be positive, got {}", p.pbar)));
    }
    let policy = policy(p, &geom, &traffic, &speed, classes.as_ref(), floor_margin, &ctx)?;
    policy
        .check_positive(&speed)
        .map_err(|e| ctx.fail("power", "power", e))?;

    let sim = match &doc.simulation {
        None => None,
        Some(s) => {
            let rates = rate_scheme(&s.rates, &ctx)?;
            let config = SimConfig {
                towers: s.towers,
                dt: s.dt,
                geom: geom.clone(),
                traffic: traffic.clone(),
                speed,
                policy: policy.clone(),
                rates,
                sigma2: s.sigma2,
                interference: s.interference,
                scope: s.interference_scope.unwrap_or_default(),
                seed: 1,
                warmup: s
                    .warmup
                    .unwrap_or_else(|| SimConfig::default_warmup(&geom, &speed, s.horizon)),
                horizon: s.horizon,
                batches: s.batches.unwrap_or(MIN_BATCHES),
            };
            config.validate().map_err(|e| ctx.fail("simulation", "simulation", e))?;
            Some(config)
        }
    };

    let scaling = match &doc.cell_size {
        None => None,
        Some(c) => {
            Some(ScalingSpec::new(c.p_tilde, c.gamma, c.omega_p).map_err(|e| ctx.fail("cell_size", "cell_size", e))?)
        }
    };
    let bracket = doc
        .cell_size
        .as_ref()
        .map(|c| c.bracket.map(|[a, b]| (a, b)).unwrap_or_else(|| default_bracket(&geom)));

    let sweep = doc.sweep.as_ref();
    let alphas = sweep_axis(
        sweep.and_then(|s| s.alpha.as_ref()),
        p.alpha.unwrap_or(1.0),
        "alpha",
        &ctx,
    )?;
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(ctx.fail("alpha", "sweep.alpha", format!("{a} lies outside [0, 1]")));
    }
    let pbars = sweep_axis(sweep.and_then(|s| s.pbar.as_ref()), p.pbar, "pbar", &ctx)?;
    if let Some(x) = pbars.iter().find(|x| !(**x > 0.0)) {
        return Err(ctx.fail("pbar", "sweep.pbar", format!("{x} is not positive")));
    }
    let betas = sweep_axis(sweep.and_then(|s| s.beta.as_ref()), geom.beta(), "beta", &ctx)?;

    Ok(Scenario {
        geom,
        traffic,
        speed,
        pbar: p.pbar,
        policy,
        sim,
        classes,
        floor_margin,
        scaling,
        bracket,
        alphas,
        pbars,
        betas,
    })
}
