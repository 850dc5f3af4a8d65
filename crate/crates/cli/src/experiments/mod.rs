mod average;
mod coarse;
mod dae;
mod plim;
mod pta;
mod simulate;

use coarsekit::averaging::CumulativeRecorder;
use coarsekit::catalog::{self, Branch};
use coarsekit::integrate::Observer;
use coarsekit::{Observable, SystemSpec};

pub use coarse::{build_field, FieldBuild};

use crate::config::{ExperimentConfig, Method};
use crate::error::CliError;
use crate::output::RunOutput;

/// Run one experiment, writing its artifacts under `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig, quiet: bool) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let mut out = RunOutput::new(&cfg.output_dir, quiet)?;
    out.text("config.toml", &cfg.to_toml())?;
    match &cfg.method {
        Method::Simulate(p) => simulate::run(cfg, p, &mut out)?,
        Method::Average(p) => average::run(cfg, p, &mut out)?,
        Method::Plim(p) => plim::run(cfg, p, &mut out)?,
        Method::Dae(p) => dae::run(cfg, p, &mut out)?,
        Method::Pta(p) => pta::run(cfg, p, &mut out)?,
        Method::FindCoarse(p) => coarse::run_find(cfg, p, &mut out)?,
        Method::Criteria(p) => coarse::run_criteria(cfg, p, &mut out)?,
    }
    out.finish()?;
    Ok(out)
}

/// Fast-time system by name; `artstein` is the upper branch.
pub(crate) fn system(name: &str, epsilon: f64) -> Result<SystemSpec, CliError> {
    let name = if name == "artstein" { "artstein-upper" } else { name };
    Ok(catalog::by_name(name, epsilon)?)
}

pub(crate) fn default_ic(name: &str) -> Result<Vec<f64>, CliError> {
    Ok(match name {
        "lorenz" => vec![1.0, 1.0, 20.0],
        "forced-monotone-lorenz" => vec![1.0, 1.0, 20.0, 0.0],
        "oscillatory-forced-lorenz" => vec![1.0, 1.0, 20.0, 0.0, 20.0],
        "hald" => vec![1.0, 0.0, 1.0, 0.0],
        "artstein" | "artstein-upper" => vec![Branch::Upper.root(-1.875)? + 0.1, 0.0, -1.875],
        "artstein-lower" => vec![Branch::Lower.root(1.875)? - 0.1, 0.0, 1.875],
        "linear-relaxation" => vec![1.0, 0.0],
        "harmonic" => vec![1.0, 0.0],
        other => return Err(CliError::Usage(format!("no default initial state for `{other}`"))),
    })
}

/// Observables from component names, `name^2` squaring a component.
pub(crate) fn named_observable(sys: &SystemSpec, names: &[String]) -> Result<Observable, CliError> {
    let mut idx = Vec::new();
    for n in names {
        let (base, square) = match n.strip_suffix("^2") {
            Some(b) => (b, true),
            None => (n.as_str(), false),
        };
        let j = sys
            .component_names
            .iter()
            .position(|c| c == base)
            .ok_or_else(|| CliError::Usage(format!("unknown observable `{n}` for {} (components {:?})", sys.name, sys.component_names)))?;
        idx.push((j, square));
    }
    Ok(Observable::new(names.join("+"), idx.len(), move |u, out| {
        for (k, &(j, sq)) in idx.iter().enumerate() {
            out[k] = if sq { u[j] * u[j] } else { u[j] };
        }
    }))
}

/// Cumulative integrals of an observable plus the state, every `stride` steps.
pub(crate) struct Sampler {
    pub rec: CumulativeRecorder,
    stride: usize,
    count: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    keep_states: bool,
}

impl Sampler {
    pub fn new(obs: Observable, stride: usize, keep_states: bool) -> Self {
        Self { rec: CumulativeRecorder::new(obs, stride), stride: stride.max(1), count: 0, times: Vec::new(), states: Vec::new(), keep_states }
    }

    /// Recorded state nearest to `t`.
    pub fn state_near(&self, t: f64) -> &[f64] {
        let j = self.times.partition_point(|&s| s < t).min(self.times.len() - 1);
        if j > 0 && (self.times[j - 1] - t).abs() < (self.times[j] - t).abs() {
            &self.states[j - 1]
        } else {
            &self.states[j]
        }
    }
}

impl Observer for Sampler {
    fn observe(&mut self, t: f64, state: &[f64]) -> coarsekit::Result<()> {
        self.rec.observe(t, state)?;
        if self.keep_states && self.count % self.stride == 0 {
            self.times.push(t);
            self.states.push(state.to_vec());
        }
        self.count += 1;
        Ok(())
    }
}

pub(crate) fn sup_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0f64, |m, x| m.max(x.abs()))
}
