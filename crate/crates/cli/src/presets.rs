//! Bundled experiments, one per figure, each with the properties it must show.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::*;
use crate::error::CliError;
use crate::experiments;
use crate::output::{Metrics, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    Const(f64),
    /// Another metric of the same run.
    Metric(String),
}

/// `metric op bound`, read against a run's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Expect {
    pub metric: String,
    pub op: Op,
    pub bound: Bound,
}

impl Expect {
    fn new(metric: &str, op: Op, bound: Bound) -> Self {
        Self { metric: metric.into(), op, bound }
    }
    pub fn lt(metric: &str, v: f64) -> Self {
        Self::new(metric, Op::Lt, Bound::Const(v))
    }
    pub fn le(metric: &str, v: f64) -> Self {
        Self::new(metric, Op::Le, Bound::Const(v))
    }
    pub fn gt(metric: &str, v: f64) -> Self {
        Self::new(metric, Op::Gt, Bound::Const(v))
    }
    pub fn ge(metric: &str, v: f64) -> Self {
        Self::new(metric, Op::Ge, Bound::Const(v))
    }
    pub fn lt_metric(metric: &str, other: &str) -> Self {
        Self::new(metric, Op::Lt, Bound::Metric(other.into()))
    }

    /// The metric's value and whether it satisfies the bound; a missing or NaN
    /// value fails.
    pub fn check(&self, m: &Metrics) -> (f64, bool) {
        let v = m.get(&self.metric).copied().unwrap_or(f64::NAN);
        let b = match &self.bound {
            Bound::Const(c) => *c,
            Bound::Metric(k) => m.get(k).copied().unwrap_or(f64::NAN),
        };
        let ok = match self.op {
            Op::Lt => v < b,
            Op::Le => v <= b,
            Op::Gt => v > b,
            Op::Ge => v >= b,
        };
        (v, ok)
    }
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        };
        match &self.bound {
            Bound::Const(c) => write!(f, "{} {op} {c}", self.metric),
            Bound::Metric(k) => write!(f, "{} {op} {k}", self.metric),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FigurePreset {
    pub id: &'static str,
    /// What the figure shows.
    pub figure: &'static str,
    pub config: ExperimentConfig,
    pub expects: Vec<Expect>,
}

pub const PRESET_IDS: &[&str] = &[
    "fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13", "fig14", "fig15", "fig16",
    "fig17", "plim-linear",
];

/// Alternative names.
const ALIASES: &[(&str, &str)] = &[("artstein-dae", "fig6"), ("pta-x2", "fig11"), ("lorenz-symmetry", "fig15")];

fn cfg(system: &str, seed: u64, method: Method) -> ExperimentConfig {
    ExperimentConfig { system: system.into(), seed, output_dir: PathBuf::from("out"), method }
}

fn oscillatory_average(ics: Vec<Vec<f64>>) -> AverageParams {
    let omega = 5e-5;
    let period = 2.0 * std::f64::consts::PI / omega;
    AverageParams {
        epsilon: omega,
        ics,
        t1: period,
        taus: vec![5000.0],
        observables: ["x", "y", "z", "L"].map(String::from).to_vec(),
        output_every: period / 400.0,
        track: vec![["x".into(), "L".into()]],
        point: vec!["y".into(), "z".into()],
        ..AverageParams::default()
    }
}

fn criteria(n_pairs: usize) -> Method {
    Method::Criteria(CriteriaParams { n_pairs, ..CriteriaParams::default() })
}

pub fn preset(id: &str) -> Option<FigurePreset> {
    let id = ALIASES.iter().find(|(a, _)| *a == id).map_or(id, |(_, t)| *t);
    let id = *PRESET_IDS.iter().find(|p| **p == id)?;
    let (figure, config, expects) = match id {
        "fig1" => (
            "Lorenz against the monotonically loaded Lorenz system from the same state",
            cfg(
                "forced-monotone-lorenz",
                0,
                Method::Simulate(SimulateParams { ic: vec![1.0, 1.0, 20.0, 0.0], t1: 200.0, unforced_reference: true, ..SimulateParams::default() }),
            ),
            vec![
                Expect::gt("forced_x_drift", 10.0),
                Expect::ge("y_range_ratio", 0.7),
                Expect::le("y_range_ratio", 1.4),
                Expect::ge("z_range_ratio", 0.7),
                Expect::le("z_range_ratio", 1.4),
            ],
        ),
        "fig2" => (
            "x(t) and its running averages over windows 5, 20 and 50 on the loaded Lorenz system",
            cfg(
                "forced-monotone-lorenz",
                0,
                Method::Average(AverageParams { taus: vec![5.0, 20.0, 50.0], ..AverageParams::default() }),
            ),
            vec![Expect::lt_metric("x_bar_tau20_max_rate", "x_bar_tau5_max_rate"), Expect::lt_metric("x_bar_tau50_max_rate", "x_bar_tau20_max_rate")],
        ),
        "fig3" => (
            "coarse evolution of x̄ on the relaxed slow manifold against the fine ensemble, for coarse-to-fine step ratios 10, 1e3 and 1e4",
            cfg("forced-monotone-lorenz", 7, Method::Plim(PlimParams::default())),
            vec![Expect::le("rel_l2_ratio10000", 0.2)],
        ),
        "fig4" => (
            "x̄(t) of the loaded Lorenz system from unrelated initial states",
            cfg(
                "forced-monotone-lorenz",
                0,
                Method::Average(AverageParams {
                    ics: vec![
                        vec![1.0, 1.0, 20.0, 0.0],
                        vec![-10.0, 5.0, 30.0, 0.0],
                        vec![12.0, -8.0, 15.0, 0.0],
                        vec![3.0, 15.0, 40.0, 0.0],
                        vec![-6.0, -12.0, 8.0, 0.0],
                    ],
                    output_every: 0.5,
                    ..AverageParams::default()
                }),
            ),
            vec![Expect::gt("x_bar_tau50_min_rise", 3.0)],
        ),
        "fig5" => (
            "upper Artstein branch: fast relaxation cycles around the equilibrium profile while x drifts",
            cfg(
                "artstein",
                0,
                Method::Simulate(SimulateParams {
                    epsilon: 1e-3,
                    t1: 1500.0,
                    integrator: coarsekit::IntegratorConfig::rk4(1e-3).record_every(20),
                    ..SimulateParams::default()
                }),
            ),
            vec![Expect::gt("samples", 1000.0)],
        ),
        "fig6" => (
            "window averages of y1 against the DAE graph on the upper Artstein branch, up to the fold",
            cfg("artstein", 0, Method::Dae(DaeParams::Artstein(ArtsteinDaeParams::default()))),
            vec![Expect::le("fine_gap", 0.05), Expect::le("fold_gap", 0.01), Expect::ge("reached_fold", 1.0)],
        ),
        "fig7" => (
            "fine x, y, z on a slow sinusoidal load and their window averages over one load period",
            cfg("oscillatory-forced-lorenz", 0, Method::Average(oscillatory_average(Vec::new()))),
            vec![
                Expect::le("track_x_L_tau5000", 0.5),
                Expect::lt("point_spread_tau5000", 0.1),
                Expect::ge("z_bar_tau5000_mean", 18.6),
                Expect::le("z_bar_tau5000_mean", 22.6),
            ],
        ),
        "fig8" => (
            "window averages on the sinusoidal load from several initial states",
            cfg(
                "oscillatory-forced-lorenz",
                0,
                Method::Average(oscillatory_average(vec![
                    vec![1.0, 1.0, 20.0, 0.0, 20.0],
                    vec![-10.0, 5.0, 30.0, 0.0, 20.0],
                    vec![12.0, -8.0, 15.0, 0.0, 20.0],
                ])),
            ),
            vec![Expect::lt("x_bar_tau5000_ic_spread", 1.0), Expect::lt("z_bar_tau5000_ic_spread", 1.0)],
        ),
        "fig9" => (
            "DAE runs from the fast equilibria and from the window averages against the fine averages on the sinusoidal load",
            cfg("oscillatory-forced-lorenz", 0, Method::Dae(DaeParams::OscillatoryLorenz(OscillatoryDaeParams::default()))),
            vec![Expect::le("from_averages_gap", 0.5), Expect::gt("min_ep_mismatch", 0.5)],
        ),
        "fig10" => (
            "projective time-averaged steps of ȳ1 on the upper Artstein branch against the equilibrium graph",
            cfg("artstein", 0, Method::Pta(PtaParams::Projective(ProjectivePtaParams::default()))),
            vec![Expect::le("graph_gap", 0.05)],
        ),
        "fig11" => (
            "x̄ and x̄² from the per-step time average against the fine run over one load period",
            cfg("oscillatory-forced-lorenz", 0, Method::Pta(PtaParams::Alternative(AlternativePtaParams::default()))),
            vec![Expect::le("rel_sup_x", 0.05), Expect::le("rel_sup_x2", 0.05)],
        ),
        "fig12" => (
            "the instantaneous x carried on the slow time scale against its running average",
            cfg("oscillatory-forced-lorenz", 0, Method::Pta(PtaParams::Instantaneous(InstantaneousParams::default()))),
            vec![Expect::ge("amplitude_ratio", 10.0)],
        ),
        "fig13" => (
            "a Lorenz trajectory and its projection on (x, z), which crosses itself with different rates",
            cfg(
                "lorenz",
                0,
                Method::Simulate(SimulateParams { t1: 20.0, coarse_pair: vec![0, 2], coarse_radius: 0.5, ..SimulateParams::default() }),
            ),
            vec![Expect::gt("coarse_close_pairs", 0.0), Expect::gt("coarse_rate_spread", 1.0)],
        ),
        "fig14" => (
            "least-squares coarse function on the Lorenz mesh and one of its level sets",
            cfg("lorenz", 1, Method::FindCoarse(FindCoarseParams::default())),
            vec![
                Expect::le("asymmetry", 1e-10),
                Expect::ge("min_rayleigh", -1e-12),
                Expect::le("symmetry_defect", 1e-10),
                Expect::ge("normalized_variance", 0.1),
                Expect::gt("level_cells", 0.0),
            ],
        ),
        "fig15" => (
            "Lorenz: coarse values of mirrored trajectories, and constrained against random pairs over a short horizon",
            cfg("lorenz", 1, criteria(24)),
            vec![Expect::le("symmetric_gap", 1e-10), Expect::ge("short_factor", 3.0), Expect::ge("pairs", 20.0)],
        ),
        "fig16" => (
            "coupled oscillators: coarse values of mirrored trajectories under all three sign maps, and constrained against random pairs",
            cfg("hald", 1, criteria(24)),
            vec![Expect::le("symmetric_gap", 1e-10), Expect::ge("short_factor", 3.0), Expect::ge("pairs", 20.0)],
        ),
        "fig17" => (
            "Lorenz: coarse gap against fine gap of constrained pairs over the long horizon",
            cfg("lorenz", 1, criteria(24)),
            vec![Expect::lt("median_ratio", 0.5), Expect::ge("pairs", 20.0)],
        ),
        "plim-linear" => (
            "relaxed slow manifold of the linear relaxation system against y = L − ε",
            cfg("linear-relaxation", 0, Method::Plim(PlimParams::default())),
            vec![Expect::le("max_graph_error", 1e-3), Expect::ge("converged", 1.0)],
        ),
        _ => return None,
    };
    Some(FigurePreset { id, figure, config, expects })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub expect: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct PresetOutcome {
    pub id: &'static str,
    pub output: RunOutput,
    pub checks: Vec<CheckResult>,
}

impl PresetOutcome {
    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {} (got {})", self.id, c.expect, c.value)).collect()
    }

    pub fn into_result(self) -> Result<Self, CliError> {
        let f = self.failures();
        if f.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Property(f))
        }
    }
}

/// Run a preset into `out` (default `out/<id>`) and evaluate its checks.
pub fn reproduce(id: &str, out: Option<&Path>, seed: Option<u64>, quiet: bool) -> Result<PresetOutcome, CliError> {
    let p = preset(id).ok_or_else(|| CliError::Usage(format!("unknown preset `{id}` (known: {})", PRESET_IDS.join(", "))))?;
    let mut config = p.config;
    config.output_dir = out.map_or_else(|| PathBuf::from("out").join(p.id), Path::to_path_buf);
    if let Some(s) = seed {
        config.seed = s;
    }
    let mut output = experiments::run(&config, quiet)?;
    let checks: Vec<CheckResult> = p
        .expects
        .iter()
        .map(|e| {
            let (value, pass) = e.check(&output.metrics);
            CheckResult { expect: e.to_string(), value, pass }
        })
        .collect();
    let mut report = String::new();
    for c in &checks {
        let line = format!("{} {} (got {})", if c.pass { "PASS" } else { "FAIL" }, c.expect, c.value);
        output.stage(&line);
        report.push_str(&line);
        report.push('\n');
    }
    output.text("checks.txt", &report)?;
    Ok(PresetOutcome { id: p.id, output, checks })
}
