//! Experiment orchestration: loads a JSON experiment document, runs one of
//! six modes and returns a [`ResultTable`].

mod config;
mod table;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    parse_rates, resolve_seeds, CellSizeDoc, ConfigDoc, GeometryDoc, OptimizeDoc, PiDoc, PowerDoc, RateItem, RatesDoc,
    Rule, Scenario, SimulationDoc, SpeedDoc, SweepDoc, TrafficDoc,
};
pub use table::{percent_improvement, ResultTable, Value, CSV_SCHEMA_VERSION};

use crate::analytic;
use crate::cell_sizing::{optimal_cell_size_closed_form, optimal_cell_size_numeric};
use crate::error::{Error, Result};
use crate::policy::PowerPolicy;
use crate::power_opt::{continuous_optimal_power, discrete_optimal_power_with_margin, rho_at_optimum};
use crate::sim::{run_replications, MetricsReport, SimConfig, Simulator};
use crate::speed::SpeedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analytic,
    OptimizePower,
    CellSize,
    Simulate,
    SweepAlpha,
    Validate,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Analytic,
        Mode::OptimizePower,
        Mode::CellSize,
        Mode::Simulate,
        Mode::SweepAlpha,
        Mode::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::OptimizePower => "optimize-power",
            Mode::CellSize => "cell-size",
            Mode::Simulate => "simulate",
            Mode::SweepAlpha => "sweep-alpha",
            Mode::Validate => "validate",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mode `{s}`")))
    }
}

/// A loaded, validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub doc: ConfigDoc,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    /// Parses and validates a JSON document. `mode` overrides the document's
    /// own `mode` field.
    pub fn from_json(src: &str, mode: Option<Mode>) -> Result<Self> {
        let doc: ConfigDoc = serde_json::from_str(src)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        let mode = mode
            .or(doc.mode)
            .ok_or_else(|| Error::config("no mode given on the command line or in the document"))?;
        let scenario = config::build(&doc, src)?;
        let needs = |present: bool, section: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(format!("mode {mode} needs a `{section}` section")))
            }
        };
        match mode {
            Mode::Simulate | Mode::SweepAlpha | Mode::Validate => needs(scenario.sim.is_some(), "simulation")?,
            Mode::CellSize => needs(scenario.scaling.is_some(), "cell_size")?,
            Mode::Analytic | Mode::OptimizePower => {}
        }
        let seeds = resolve_seeds(doc.seeds.as_deref(), doc.replications)?;
        Ok(ExperimentSpec {
            mode,
            doc,
            scenario,
            seeds,
        })
    }

    pub fn load(path: &Path, mode: Option<Mode>) -> Result<Self> {
        let src =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&src, mode).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The document as pretty JSON; loading it back gives an equal spec.
    pub fn to_json(&self) -> String {
        let mut doc = self.doc.clone();
        doc.mode = Some(self.mode);
        serde_json::to_string_pretty(&doc).expect("documents always serialize")
    }

    /// Replaces the seed list (command-line override).
    pub fn with_seeds(mut self, seeds: Option<&[u64]>, replications: Option<usize>) -> Result<Self> {
        if seeds.is_some() || replications.is_some() {
            let base = seeds.or(self.doc.seeds.as_deref());
            self.seeds = resolve_seeds(
                base,
                replications.or(if seeds.is_some() { None } else { self.doc.replications }),
            )?;
        }
        Ok(self)
    }
}

/// A finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: ResultTable,
    /// Some simulated estimate rests on fewer than 30 usable batches.
    pub insufficient_data: bool,
}

/// Process exit code for an error: 2 configuration, 3 regime violation or
/// unsupportable velocity, 4 insufficient data.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::RegimeViolation { .. } | Error::UnsupportableVelocity { .. } | Error::InsufficientPowerBudget { .. } => {
            3
        }
        Error::InsufficientData(_) => 4,
        _ => 2,
    }
}

fn at_grid_point(label: String) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(m) => Error::Config(format!("{label}: {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{label}: {m}")),
        Error::Precondition(m) => Error::Precondition(format!("{label}: {m}")),
        Error::UnsupportableVelocity { speed, detail } => Error::UnsupportableVelocity {
            speed,
            detail: format!("{label}: {detail}"),
        },
        other => {
            log::error!("{label}: {other}");
            other
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    run_experiment_traced(spec, None)
}

/// Like [`run_experiment`]; in simulate mode the replication of the first
/// seed also streams its events to `trace`.
pub fn run_experiment_traced(spec: &ExperimentSpec, trace: Option<&mut dyn Write>) -> Result<Outcome> {
    if trace.is_some() && spec.mode != Mode::Simulate {
        log::warn!("event tracing only applies to simulate; ignored for {}", spec.mode);
    }
    match spec.mode {
        Mode::Analytic => analytic_mode(&spec.scenario),
        Mode::OptimizePower => optimize_mode(&spec.scenario),
        Mode::CellSize => cell_size_mode(&spec.scenario),
        Mode::Simulate => simulate_mode(spec, trace),
        Mode::SweepAlpha => sweep_alpha_mode(spec),
        Mode::Validate => validate_mode(spec),
    }
}

fn done(table: ResultTable) -> Result<Outcome> {
    Ok(Outcome {
        table,
        insufficient_data: false,
    })
}

fn analytic_mode(s: &Scenario) -> Result<Outcome> {
    let mut table = ResultTable::new(
        "analytic",
        &[
            "pbar", "beta", "p_e_ho", "p_h_ho", "b_e", "b_h", "ho_rate", "rho", "p_busy",
        ],
    );
    let grid: Vec<(f64, f64)> = s
        .betas
        .iter()
        .flat_map(|&b| s.pbars.iter().map(move |&p| (p, b)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(pbar, beta)| {
            let geom = s.geom.with_beta(beta)?;
            analytic::evaluate(&geom, &s.traffic, pbar, &s.speed)
                .map_err(at_grid_point(format!("pbar={pbar}, beta={beta}")))
        })
        .collect::<Result<Vec<_>>>()?;
    for (&(pbar, beta), r) in grid.iter().zip(rows) {
        table.push(vec![
            pbar.into(),
            beta.into(),
            r.p_e_ho.into(),
            r.p_h_ho.into(),
            r.b_e.into(),
            r.b_h.into(),
            r.ho_rate.into(),
            r.rho.into(),
            r.p_busy.into(),
        ]);
    }
    done(table)
}

fn optimize_mode(s: &Scenario) -> Result<Outcome> {
    let classes = match &s.classes {
        Some(c) => c.clone(),
        None => crate::policy::SpeedClasses::uniform(&s.speed, 1)?,
    };
    let powers = discrete_optimal_power_with_margin(&s.geom, &s.traffic, &classes, s.pbar, s.floor_margin)?;
    let linear = continuous_optimal_power(&s.geom, &s.traffic, &s.speed, s.pbar).ok();
    let loads: Vec<analytic::ClassLoad> = (0..classes.len())
        .map(|i| analytic::ClassLoad {
            prob: classes.probs()[i],
            cond_inv_speed: classes.cond_inv_speed()[i],
            power: powers[i],
        })
        .collect();
    let rho = analytic::load_factor_classes(&s.geom, &s.traffic, &loads)?;
    let rho_linear = rho_at_optimum(&s.geom, &s.traffic, &s.speed, s.pbar).ok();
    let mut table = ResultTable::new(
        "optimize-power",
        &[
            "class",
            "v_lo_kmph",
            "v_hi_kmph",
            "prob",
            "cond_inv_speed",
            "power",
            "linear_power_at_mid",
            "rho_discrete",
            "rho_linear",
        ],
    );
    for i in 0..classes.len() {
        table.push(vec![
            (i + 1).into(),
            (classes.edges()[i] * 3.6).into(),
            (classes.edges()[i + 1] * 3.6).into(),
            classes.probs()[i].into(),
            classes.cond_inv_speed()[i].into(),
            powers[i].into(),
            linear.as_ref().map(|p| p.evaluate(classes.midpoint(i))).into(),
            rho.into(),
            rho_linear.into(),
        ]);
    }
    done(table)
}

fn cell_size_mode(s: &Scenario) -> Result<Outcome> {
    let scaling = s.scaling.expect("checked on load");
    let bracket = s.bracket.expect("checked on load");
    let mut table = ResultTable::new(
        "cell-size",
        &["method", "half_length", "cost", "at_boundary", "multimodal"],
    );
    let numeric = optimal_cell_size_numeric(&s.geom, &s.traffic, &s.speed, &scaling, bracket)?;
    table.push(vec![
        "numeric".into(),
        numeric.half_length.into(),
        numeric.cost.into(),
        numeric.at_boundary.into(),
        numeric.multimodal.into(),
    ]);
    match optimal_cell_size_closed_form(&s.geom, &s.traffic, &s.speed, &scaling) {
        Ok(l) => {
            // the closed form can land below N·d0, where the cost is undefined
            let cost = crate::cell_sizing::joint_cost(l, &s.geom, &s.traffic, &s.speed, &scaling).ok();
            table.push(vec![
                "closed_form".into(),
                l.into(),
                cost.into(),
                Value::Empty,
                Value::Empty,
            ]);
        }
        Err(Error::Precondition(why)) => log::info!("closed-form cell size skipped: {why}"),
        Err(e) => return Err(e),
    }
    done(table)
}

const METRIC_COLUMNS: [&str; 15] = [
    "p_busy",
    "p_busy_hw",
    "p_drop",
    "p_drop_hw",
    "p_e_ho",
    "p_e_ho_hw",
    "p_h_ho",
    "p_h_ho_hw",
    "b_e",
    "b_e_hw",
    "b_h",
    "b_h_hw",
    "admitted",
    "drops",
    "replications",
];

fn metric_values(r: &MetricsReport) -> Vec<Value> {
    vec![
        r.p_busy.value.into(),
        r.p_busy.half_width.into(),
        r.p_drop.value.into(),
        r.p_drop.half_width.into(),
        r.p_e_ho.value.into(),
        r.p_e_ho.half_width.into(),
        r.p_h_ho.value.into(),
        r.p_h_ho.half_width.into(),
        r.b_e.value.into(),
        r.b_e.half_width.into(),
        r.b_h.value.into(),
        r.b_h.half_width.into(),
        r.counts.admitted.into(),
        r.counts.drops.into(),
        r.seeds.len().into(),
    ]
}

fn policy_label(p: &PowerPolicy) -> String {
    match p {
        PowerPolicy::Equal { .. } => "equal".into(),
        PowerPolicy::AlphaRule { alpha, .. } => format!("alpha={alpha}"),
        PowerPolicy::Linear { .. } => "linear_optimal".into(),
        PowerPolicy::Discrete { powers, .. } => format!("discrete_optimal[{}]", powers.len()),
        PowerPolicy::Monomial { exponent, .. } => format!("monomial^{exponent}"),
    }
}

fn sim_config(spec: &ExperimentSpec) -> &SimConfig {
    spec.scenario.sim.as_ref().expect("checked on load")
}

/// Simulates one configuration over all seeds of `spec`.
pub fn simulate(spec: &ExperimentSpec, config: &SimConfig) -> Result<MetricsReport> {
    run_replications(config, &spec.seeds)
}

fn simulate_mode(spec: &ExperimentSpec, trace: Option<&mut dyn Write>) -> Result<Outcome> {
    let config = sim_config(spec);
    let report = match trace {
        None => simulate(spec, config)?,
        Some(sink) => {
            let mut first = config.clone();
            first.seed = spec.seeds[0];
            let traced = Simulator::new(first)?.with_trace(sink).finish()?;
            let mut reports = vec![traced];
            if spec.seeds.len() > 1 {
                reports.push(run_replications(config, &spec.seeds[1..])?);
            }
            MetricsReport::merge(reports).expect("at least one report")
        }
    };
    let mut columns = vec!["policy"];
    columns.extend(METRIC_COLUMNS);
    let mut table = ResultTable::new("simulate", &columns);
    let mut row = vec![Value::from(policy_label(&config.policy))];
    row.extend(metric_values(&report));
    table.push(row);
    Ok(Outcome {
        table,
        insufficient_data: report.insufficient_data,
    })
}

fn sweep_alpha_mode(spec: &ExperimentSpec) -> Result<Outcome> {
    let base = sim_config(spec);
    let s = &spec.scenario;
    let reports = s
        .alphas
        .par_iter()
        .map(|&alpha| {
            let mut config = base.clone();
            config.policy = alpha_policy(s.pbar, alpha, &s.speed)?;
            simulate(spec, &config).map_err(at_grid_point(format!("alpha={alpha}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline = s.alphas.iter().position(|&a| a == 1.0).map(|i| reports[i].p_drop.value);
    let mut columns = vec!["alpha"];
    columns.extend(METRIC_COLUMNS);
    columns.push("p_drop_improvement_pct");
    let mut table = ResultTable::new("sweep-alpha", &columns);
    for (&alpha, r) in s.alphas.iter().zip(&reports) {
        let mut row = vec![Value::from(alpha)];
        row.extend(metric_values(r));
        row.push(baseline.and_then(|b| percent_improvement(b, r.p_drop.value)).into());
        table.push(row);
    }
    Ok(Outcome {
        table,
        insufficient_data: reports.iter().any(|r| r.insufficient_data),
    })
}

/// The α-rule; `α = 1` is exactly equal power.
fn alpha_policy(pbar: f64, alpha: f64, speed: &SpeedModel) -> Result<PowerPolicy> {
    if alpha == 1.0 {
        Ok(PowerPolicy::equal(pbar))
    } else {
        PowerPolicy::alpha_rule(pbar, alpha, speed)
    }
}

fn validate_mode(spec: &ExperimentSpec) -> Result<Outcome> {
    let config = sim_config(spec);
    let s = &spec.scenario;
    let PowerPolicy::Equal { pbar } = config.policy else {
        return Err(Error::config(
            "validate compares against the equal-power model; set power.rule to equal",
        ));
    };
    if !matches!(config.rates, crate::sim::RateScheme::Regions) {
        return Err(Error::config(
            "validate needs simulation.rates = \"regions\" to match the model's rates",
        ));
    }
    let model = analytic::evaluate(&s.geom, &s.traffic, pbar, &s.speed)?;
    let report = simulate(spec, config)?;
    let mut table = ResultTable::new(
        "validate",
        &[
            "metric",
            "theory",
            "simulation",
            "simulation_hw",
            "normalized_difference_pct",
        ],
    );
    let sim_rate = report.handover_rate();
    let rows = [
        ("b_e", model.b_e, report.b_e.value, report.b_e.half_width),
        ("b_h", model.b_h, report.b_h.value, report.b_h.half_width),
        ("p_e_ho", model.p_e_ho, report.p_e_ho.value, report.p_e_ho.half_width),
        ("p_h_ho", model.p_h_ho, report.p_h_ho.value, report.p_h_ho.half_width),
        ("ho_rate", model.ho_rate, sim_rate, f64::NAN),
    ];
    for (name, theory, sim, hw) in rows {
        table.push(vec![
            name.into(),
            theory.into(),
            sim.into(),
            if hw.is_nan() { Value::Empty } else { hw.into() },
            normalized_difference(theory, sim).into(),
        ]);
    }
    Ok(Outcome {
        table,
        insufficient_data: report.insufficient_data,
    })
}

/// `100·|simulation − theory| / theory`.
pub fn normalized_difference(theory: f64, simulation: f64) -> Option<f64> {
    (theory != 0.0).then(|| 100.0 * (simulation - theory).abs() / theory.abs())
}
