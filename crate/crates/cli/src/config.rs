//! Experiment configuration files.
//!
//! A config names a system, a seed, an output directory and exactly one method
//! table, for example
//!
//! ```toml
//! system = "lorenz"
//! seed = 7
//! output_dir = "out"
//!
//! [method.simulate]
//! t1 = 50.0
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use coarsekit::coarse::{SolveMethod, ALPHA_SWEEP};
use coarsekit::plim::PlimConfig;
use coarsekit::tikhonov::DaeConfig;
use coarsekit::IntegratorConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub method: Method,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Simulate(SimulateParams),
    Average(AverageParams),
    Plim(PlimParams),
    Dae(DaeParams),
    Pta(PtaParams),
    FindCoarse(FindCoarseParams),
    Criteria(CriteriaParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Simulate(_) => "simulate",
            Method::Average(_) => "average",
            Method::Plim(_) => "plim",
            Method::Dae(_) => "dae",
            Method::Pta(_) => "pta",
            Method::FindCoarse(_) => "find-coarse",
            Method::Criteria(_) => "criteria",
        }
    }
}

fn rk4_1e3() -> IntegratorConfig {
    IntegratorConfig::rk4(1e-3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateParams {
    /// ε of the slow-fast systems, ω for the oscillatory load.
    pub epsilon: f64,
    /// Initial state; the system default when empty.
    pub ic: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub integrator: IntegratorConfig,
    /// Report the drift of the coupled-oscillator energy.
    pub energy: bool,
    /// Integrate the unloaded Lorenz system from `(x − L, y, z)` alongside and
    /// compare the drift in `x` and the ranges of `y` and `z`.
    pub unforced_reference: bool,
    /// Two components read as a coarse pair; reports how far apart the rates of
    /// nearly coincident coarse states get.
    pub coarse_pair: Vec<usize>,
    /// Coarse states closer than this count as coincident.
    pub coarse_radius: f64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            ic: Vec::new(),
            t0: 0.0,
            t1: 50.0,
            integrator: rk4_1e3().record_every(10),
            energy: false,
            unforced_reference: false,
            coarse_pair: Vec::new(),
            coarse_radius: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AverageParams {
    pub epsilon: f64,
    /// One fine run per initial state; the system default when empty.
    pub ics: Vec<Vec<f64>>,
    /// Window starts cover `[0, t1]`.
    pub t1: f64,
    /// Averaging windows `τ` in fast time.
    pub taus: Vec<f64>,
    /// Component names, or `name^2` for squares.
    pub observables: Vec<String>,
    /// Spacing of the reported window starts.
    pub output_every: f64,
    pub integrator: IntegratorConfig,
    /// Pairs `[a, b]`: report `sup |ā − b̄|`.
    pub track: Vec<[String; 2]>,
    /// Observables read as one point: report its largest excursion from the
    /// mean point relative to the mean point's norm.
    pub point: Vec<String>,
    /// Skip this much fast time before the first window.
    pub burn_in: f64,
}

impl Default for AverageParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            ics: Vec::new(),
            t1: 50.0,
            taus: vec![50.0],
            observables: vec!["x".into()],
            output_every: 0.1,
            integrator: rk4_1e3(),
            track: Vec::new(),
            point: Vec::new(),
            burn_in: 0.0,
        }
    }
}

/// Coarse grid; when empty, `[-6, 22] × [0, 10]` with 40 × 40 nodes for the
/// forced Lorenz system and `[0, 2]` with 41 nodes for the linear relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Default for GridParams {
    /// Empty: the per-system grid.
    fn default() -> Self {
        Self { lo: Vec::new(), hi: Vec::new(), shape: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedingParams {
    pub n_bursts: usize,
    pub burst_length: f64,
    pub ic_lo: Vec<f64>,
    pub ic_hi: Vec<f64>,
    pub stride: usize,
    pub integrator: IntegratorConfig,
    /// Extra bursts start at `(±8 + L0 + d, ±8, 24, L0)` for every offset `d` and
    /// load `L0` listed, next to the fast equilibria.
    pub equilibrium_offsets: Vec<f64>,
    pub equilibrium_loads: Vec<f64>,
}

impl Default for SeedingParams {
    fn default() -> Self {
        Self {
            n_bursts: 24,
            burst_length: 110.0,
            ic_lo: vec![-20.0, -25.0, 0.0, 0.0],
            ic_hi: vec![20.0, 25.0, 50.0, 0.0],
            stride: 10,
            integrator: rk4_1e3(),
            equilibrium_offsets: vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            equilibrium_loads: vec![0.0, 2.0, 4.0, 6.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlimParams {
    /// ε of the linear relaxation system.
    pub epsilon: f64,
    /// Averaging window of the augmented system.
    pub tau: f64,
    pub grid: GridParams,
    pub seeding: SeedingParams,
    pub solver: PlimConfig,
    /// Coarse steps compared with the fine ensemble.
    pub coarse_dts: Vec<f64>,
    pub horizon: f64,
    /// Fine step used for the reference and for the step ratios.
    pub fine_dt: f64,
    pub reference_members: usize,
}

impl Default for PlimParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            tau: 50.0,
            grid: GridParams::default(),
            seeding: SeedingParams::default(),
            solver: PlimConfig { pseudo_dt: 5e-3, max_iters: 20_000, tol: 1e-6, ..PlimConfig::default() },
            coarse_dts: vec![1e-2, 1.0, 10.0],
            horizon: 50.0,
            fine_dt: 1e-3,
            reference_members: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaeParams {
    Artstein(ArtsteinDaeParams),
    OscillatoryLorenz(OscillatoryDaeParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtsteinDaeParams {
    pub x0: f64,
    pub y_hat0: Vec<f64>,
    pub s1: f64,
    pub dae: DaeConfig,
    /// Fine comparison run on the upper branch; skipped when zero.
    pub fine_epsilon: f64,
    pub fine_tau: f64,
    pub fine_dt: f64,
    /// Offset of the fine start from the branch in `y1`.
    pub fine_kick: f64,
    pub window_spacing: f64,
    pub compare_lo: f64,
    pub compare_hi: f64,
}

impl Default for ArtsteinDaeParams {
    fn default() -> Self {
        Self {
            x0: -1.875,
            y_hat0: vec![1.5, 0.0],
            s1: 10.0,
            dae: DaeConfig::default(),
            fine_epsilon: 1e-3,
            fine_tau: 400.0,
            fine_dt: 1e-3,
            fine_kick: 0.1,
            window_spacing: 10.0,
            compare_lo: -1.8,
            compare_hi: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatoryDaeParams {
    pub omega: f64,
    pub amplitude: f64,
    /// Fast-time window.
    pub tau: f64,
    pub fine_ic: Vec<f64>,
    pub fine_dt: f64,
    /// Windows per load period.
    pub n_windows: usize,
    pub equilibria: Vec<Vec<f64>>,
    pub dae: DaeConfig,
}

impl Default for OscillatoryDaeParams {
    fn default() -> Self {
        Self {
            omega: 5e-5,
            amplitude: 20.0,
            tau: 5000.0,
            fine_ic: vec![1.0, 1.0, 20.0],
            fine_dt: 1e-3,
            n_windows: 400,
            equilibria: vec![vec![8.0, 8.0, 24.0], vec![-8.0, -8.0, 24.0], vec![0.0, 0.0, 0.0]],
            dae: DaeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PtaParams {
    /// Per-step window averages with the slow state frozen, against a fine run.
    Alternative(AlternativePtaParams),
    /// Projective stepping of a window average with `T/λ` extrapolation.
    Projective(ProjectivePtaParams),
    /// Instantaneous `x` on the slow time scale against its running average.
    Instantaneous(InstantaneousParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Freeze {
    Start,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlternativePtaParams {
    pub omega: f64,
    pub amplitude: f64,
    pub tau: f64,
    /// Coarse steps per load period.
    pub n_steps: usize,
    pub burn_in: f64,
    pub dt: f64,
    pub fine_ic: Vec<f64>,
    pub start_ic: Vec<f64>,
    pub freeze_at: Freeze,
}

impl Default for AlternativePtaParams {
    fn default() -> Self {
        Self {
            omega: 5e-5,
            amplitude: 20.0,
            tau: 5000.0,
            n_steps: 50,
            burn_in: 50.0,
            dt: 1e-3,
            fine_ic: vec![1.0, 1.0, 20.0],
            start_ic: vec![5.0, 5.0, 20.0],
            freeze_at: Freeze::Midpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectivePtaParams {
    pub epsilon: f64,
    pub x0: f64,
    /// Coarse step `T` and window `λ` in slow time.
    pub coarse_step: f64,
    pub window: f64,
    pub m_samples: usize,
    pub burn_in: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub kick: f64,
}

impl Default for ProjectivePtaParams {
    fn default() -> Self {
        Self { epsilon: 1e-3, x0: -1.875, coarse_step: 0.1, window: 0.02, m_samples: 400_000, burn_in: 20.0, dt: 1e-2, n_steps: 15, kick: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstantaneousParams {
    pub omega: f64,
    pub amplitude: f64,
    /// Window `λ` in slow time, also the width of the amplitude filter.
    pub kappa: f64,
    /// Fast-time step; the slow step is `ω·dt`.
    pub dt: f64,
    pub record_every: usize,
    pub ic: Vec<f64>,
}

impl Default for InstantaneousParams {
    fn default() -> Self {
        Self { omega: 0.01, amplitude: 20.0, kappa: 0.25, dt: 1e-3, record_every: 10, ic: vec![1.0, 1.0, 20.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FindCoarseParams {
    /// Nodes per axis; 15 for Lorenz, 8 for the oscillators when zero.
    pub mesh_n: usize,
    pub quad: usize,
    pub a: f64,
    pub b: f64,
    pub rank_tol: f64,
    pub solver: SolveMethod,
    /// Relative magnitudes of the null-space sweep.
    pub sweep: Vec<f64>,
    pub max_dirs: usize,
    pub floor: f64,
    pub symmetrize: bool,
    /// Level for the level-set export; mid-range when absent.
    pub level: Option<f64>,
    /// Random vectors used for the quadratic-form check of `K`.
    pub psd_probes: usize,
}

impl Default for FindCoarseParams {
    fn default() -> Self {
        Self {
            mesh_n: 0,
            quad: 2,
            a: 1.0,
            b: 0.0,
            rank_tol: 1e-10,
            solver: SolveMethod::Dense,
            sweep: ALPHA_SWEEP.to_vec(),
            max_dirs: 3,
            floor: 0.1,
            symmetrize: true,
            level: None,
            psd_probes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriteriaParams {
    /// A saved field; built from `find` when absent.
    pub field: Option<PathBuf>,
    pub find: FindCoarseParams,
    pub n_pairs: usize,
    pub horizon: f64,
    /// Zero picks 0.3 for Lorenz and 0.4 for the oscillators.
    pub short_horizon: f64,
    pub symmetry_horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Initial-state box; the system default when empty.
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    /// Upper bound on the oscillator energy of sampled states; zero keeps the
    /// system default (2 for the oscillators, none for Lorenz).
    pub energy_cap: f64,
    pub random_pairs: bool,
}

impl Default for CriteriaParams {
    fn default() -> Self {
        Self {
            field: None,
            find: FindCoarseParams::default(),
            n_pairs: 24,
            horizon: 2.0,
            short_horizon: 0.0,
            symmetry_horizon: 5.0,
            dt: 1e-3,
            record_every: 10,
            domain_lo: Vec::new(),
            domain_hi: Vec::new(),
            energy_cap: 0.0,
            random_pairs: true,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message().trim())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Usage(format!("invalid `{key}`: {why}")));
        if !coarsekit::catalog::SYSTEM_NAMES.contains(&self.system.as_str()) && self.system != "artstein" {
            return bad("system", &format!("unknown system `{}`", self.system));
        }
        let sys = self.system.as_str();
        match &self.method {
            Method::Simulate(p) => {
                if !(p.t1 > p.t0) {
                    return bad("method.simulate.t1", "must exceed t0");
                }
                if p.integrator.validate().is_err() {
                    return bad("method.simulate.integrator", "invalid integrator settings");
                }
                if !p.coarse_pair.is_empty() && p.coarse_pair.len() != 2 {
                    return bad("method.simulate.coarse_pair", "needs exactly two components");
                }
            }
            Method::Average(p) => {
                if p.taus.is_empty() || p.taus.iter().any(|&t| !(t > 0.0)) {
                    return bad("method.average.taus", "need at least one positive window");
                }
                if !(p.output_every > 0.0) || !(p.t1 >= 0.0) {
                    return bad("method.average.output_every", "must be positive");
                }
                if p.observables.is_empty() {
                    return bad("method.average.observables", "need at least one observable");
                }
                for pair in &p.track {
                    for name in pair {
                        if !p.observables.contains(name) {
                            return bad("method.average.track", &format!("`{name}` is not listed in observables"));
                        }
                    }
                }
                for name in &p.point {
                    if !p.observables.contains(name) {
                        return bad("method.average.point", &format!("`{name}` is not listed in observables"));
                    }
                }
            }
            Method::Plim(p) => {
                if sys != "forced-monotone-lorenz" && sys != "linear-relaxation" {
                    return bad("system", "plim runs on forced-monotone-lorenz or linear-relaxation");
                }
                if p.solver.validate().is_err() {
                    return bad("method.plim.solver", "invalid solver settings");
                }
                if p.grid.lo.len() != p.grid.hi.len() || p.grid.lo.len() != p.grid.shape.len() {
                    return bad("method.plim.grid", "lo, hi and shape must have equal length");
                }
            }
            Method::Dae(DaeParams::Artstein(p)) => {
                if sys != "artstein" {
                    return bad("system", "the artstein DAE table needs system = \"artstein\"");
                }
                if p.dae.validate().is_err() {
                    return bad("method.dae.artstein.dae", "invalid DAE settings");
                }
            }
            Method::Dae(DaeParams::OscillatoryLorenz(p)) => {
                if sys != "oscillatory-forced-lorenz" {
                    return bad("system", "needs system = \"oscillatory-forced-lorenz\"");
                }
                if !(p.omega > 0.0 && p.tau > 0.0) || p.n_windows == 0 {
                    return bad("method.dae.oscillatory-lorenz", "omega, tau and n_windows must be positive");
                }
            }
            Method::Pta(PtaParams::Projective(p)) => {
                if sys != "artstein" {
                    return bad("system", "projective PTA runs on system = \"artstein\"");
                }
                if !(p.window > 0.0 && p.coarse_step >= p.window) {
                    return bad("method.pta.projective.window", "need 0 < window <= coarse_step");
                }
            }
            Method::Pta(PtaParams::Alternative(p)) => {
                if sys != "oscillatory-forced-lorenz" {
                    return bad("system", "needs system = \"oscillatory-forced-lorenz\"");
                }
                if p.n_steps == 0 || !(p.tau > 0.0 && p.omega > 0.0) {
                    return bad("method.pta.alternative", "omega, tau and n_steps must be positive");
                }
            }
            Method::Pta(PtaParams::Instantaneous(p)) => {
                if sys != "oscillatory-forced-lorenz" {
                    return bad("system", "needs system = \"oscillatory-forced-lorenz\"");
                }
                if !(p.omega > 0.0 && p.kappa > 0.0 && p.dt > 0.0) {
                    return bad("method.pta.instantaneous", "omega, kappa and dt must be positive");
                }
            }
            Method::FindCoarse(p) => {
                if sys != "lorenz" && sys != "hald" {
                    return bad("system", "find-coarse runs on lorenz or hald");
                }
                validate_find(p, "method.find-coarse")?;
            }
            Method::Criteria(p) => {
                if sys != "lorenz" && sys != "hald" {
                    return bad("system", "criteria run on lorenz or hald");
                }
                validate_find(&p.find, "method.criteria.find")?;
                if p.n_pairs == 0 || !(p.horizon > 0.0) {
                    return bad("method.criteria.n_pairs", "need pairs and a positive horizon");
                }
            }
        }
        Ok(())
    }
}

fn validate_find(p: &FindCoarseParams, key: &str) -> Result<(), CliError> {
    if p.mesh_n == 1 || p.quad == 0 || p.quad > 3 {
        return Err(CliError::Usage(format!("invalid `{key}`: mesh_n must be 0 or >= 2 and quad in 1..=3")));
    }
    if !(p.floor >= 0.0 && p.floor < 1.0) {
        return Err(CliError::Usage(format!("invalid `{key}.floor`: must lie in [0, 1)")));
    }
    Ok(())
}
