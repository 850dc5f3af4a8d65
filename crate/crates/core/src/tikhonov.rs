//! Slow-fast systems and their ε → 0 differential-algebraic limit.
//!
//! On the slow time `s = εt` the fine system reads `ε df/ds = H(f, I)`,
//! `dI/ds = L(f, I)`. Setting ε = 0 leaves the constraint `H(f̂, I) = 0` and the
//! induced flow `df̂/ds = −(∂H/∂f̂)⁻¹ (∂H/∂I) L`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Rk4;
use crate::system::SystemSpec;
use crate::trajectory::Trajectory;

/// The scale separation: a positive value or the singular limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Value(f64),
    Limit,
}

impl Epsilon {
    pub fn value(self) -> Option<f64> {
        match self {
            Epsilon::Value(e) => Some(e),
            Epsilon::Limit => None,
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Epsilon::Value(e) => s.serialize_f64(*e),
            Epsilon::Limit => s.serialize_str("limit"),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(e) if e > 0.0 => Ok(Epsilon::Value(e)),
            Raw::Num(e) => Err(serde::de::Error::custom(format!("epsilon must be positive, got {e}"))),
            Raw::Word(w) if w == "limit" => Ok(Epsilon::Limit),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected a number or \"limit\", got {w:?}"))),
        }
    }
}

/// A system in split form: `base` returns `(H(f, I), L(f, I))` stacked.
#[derive(Debug, Clone)]
pub struct SlowFastSpec {
    pub base: SystemSpec,
    pub epsilon: Epsilon,
}

impl SlowFastSpec {
    pub fn new(base: SystemSpec, epsilon: Epsilon) -> Self {
        Self { base, epsilon }
    }

    pub fn dim_fast(&self) -> usize {
        self.base.dim_fast
    }

    pub fn dim_slow(&self) -> usize {
        self.base.dim_slow
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn scaled(&self, name: String, fast_scale: f64, slow_scale: f64) -> SystemSpec {
        let field = self.base.field_fn();
        let nf = self.dim_fast();
        let mut sys = SystemSpec::new(name, self.dim_fast(), self.dim_slow(), move |u, d| {
            field(u, d)?;
            d[..nf].iter_mut().for_each(|v| *v *= fast_scale);
            d[nf..].iter_mut().for_each(|v| *v *= slow_scale);
            Ok(())
        });
        if let Some(jac) = self.base.jacobian_fn() {
            sys = sys.with_jacobian(move |u, m| {
                jac(u, m)?;
                for i in 0..m.nrows() {
                    let s = if i < nf { fast_scale } else { slow_scale };
                    m.row_mut(i).iter_mut().for_each(|v| *v *= s);
                }
                Ok(())
            });
        }
        sys.params = self.base.params.clone();
        sys.component_names = self.base.component_names.clone();
        sys
    }

    fn require_epsilon(&self) -> Result<f64> {
        self.epsilon
            .value()
            .ok_or_else(|| Error::InvalidArgument("a fine system needs a finite epsilon".into()))
    }

    /// `df/dt = H`, `dI/dt = ε L`.
    pub fn fast_time_system(&self) -> Result<SystemSpec> {
        let eps = self.require_epsilon()?;
        let mut sys = self.scaled(self.base.name.clone(), 1.0, eps);
        sys.params.insert("epsilon".into(), eps);
        Ok(sys)
    }

    /// `df/ds = H/ε`, `dI/ds = L`.
    pub fn slow_time_system(&self) -> Result<SystemSpec> {
        let eps = self.require_epsilon()?;
        let mut sys = self.scaled(format!("{}-slow-time", self.base.name), 1.0 / eps, 1.0);
        sys.params.insert("epsilon".into(), eps);
        Ok(sys)
    }

    /// The fast flow with `I` held fixed.
    pub fn frozen_fast_system(&self) -> SystemSpec {
        self.base.frozen()
    }

    fn stacked(&self, f: &[f64], slow: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.dim_fast() {
            return Err(Error::DimensionMismatch { expected: self.dim_fast(), got: f.len() });
        }
        if slow.len() != self.dim_slow() {
            return Err(Error::DimensionMismatch { expected: self.dim_slow(), got: slow.len() });
        }
        Ok(f.iter().chain(slow).copied().collect())
    }

    /// `(H, L)` at `(f, I)`.
    pub fn split_field(&self, f: &[f64], slow: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.stacked(f, slow)?;
        let mut d = self.base.eval_field(&u)?;
        let l = d.split_off(self.dim_fast());
        Ok((d, l))
    }

    /// `(∂H/∂f, ∂H/∂I)`.
    pub fn split_jacobian(&self, f: &[f64], slow: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let u = self.stacked(f, slow)?;
        let j = self.base.jacobian(&u)?;
        let nf = self.dim_fast();
        let ns = self.dim_slow();
        Ok((j.view((0, 0), (nf, nf)).into_owned(), j.view((0, nf), (nf, ns)).into_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaeConfig {
    /// Limit on the 1-norm condition number of `∂H/∂f̂`.
    pub cond_threshold: f64,
    pub newton_tol: f64,
    pub stop_on_fold: bool,
    /// Slow-time RK4 step; halved (down to `ds_min`) when a step hits the fold.
    pub ds: f64,
    pub ds_min: f64,
    /// Keep the iterate on `H = 0`. Without it the right side is integrated as a
    /// plain ODE from an arbitrary start.
    pub project: bool,
    pub record_every: usize,
}

impl Default for DaeConfig {
    fn default() -> Self {
        Self { cond_threshold: 1e8, newton_tol: 1e-10, stop_on_fold: true, ds: 1e-3, ds_min: 1e-12, project: true, record_every: 1 }
    }
}

impl DaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cond_threshold > 1.0) {
            return Err(Error::InvalidArgument("cond_threshold must exceed 1".into()));
        }
        if !(self.newton_tol > 0.0 && self.ds > 0.0 && self.ds_min > 0.0 && self.ds_min <= self.ds) {
            return Err(Error::InvalidArgument("newton_tol, ds, ds_min must be positive with ds_min <= ds".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `κ₁(J) = ‖J‖₁ ‖J⁻¹‖₁`, infinite when `J` is singular.
pub fn condition_1norm(j: &DMatrix<f64>) -> f64 {
    match j.clone().lu().try_inverse() {
        Some(inv) => {
            let c = one_norm(j) * one_norm(&inv);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

/// Newton on `H(f̂, I) = 0` over the fast block, with residual backtracking.
///
/// `guess` holds the fast components only. Fails after 50 iterations with the
/// residual history.
pub fn project_to_equilibrium(spec: &SlowFastSpec, slow: &[f64], guess: &[f64], newton_tol: f64) -> Result<Vec<f64>> {
    newton(spec, slow, guess, newton_tol, 50)
}

fn newton(spec: &SlowFastSpec, slow: &[f64], guess: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let mut f = guess.to_vec();
    let (mut h, _) = spec.split_field(&f, slow)?;
    let mut res = inf_norm(&h);
    let mut history = vec![res];
    for _ in 0..max_iter {
        if res < tol {
            return Ok(f);
        }
        let (jf, _) = spec.split_jacobian(&f, slow)?;
        let rhs = DVector::from_column_slice(&h);
        let Some(delta) = jf.col_piv_qr().solve(&rhs) else {
            break;
        };
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = f.iter().zip(delta.iter()).map(|(a, d)| a - step * d).collect();
            let ok = spec.split_field(&trial, slow).ok().map(|(ht, _)| (inf_norm(&ht), ht, trial));
            match ok {
                Some((r, ht, trial)) if r.is_finite() && (r < res || step < 1.0 / 64.0) => {
                    f = trial;
                    h = ht;
                    res = r;
                    break;
                }
                _ if step < 1.0 / 64.0 => {
                    return Err(Error::NewtonFailed { iterations: history.len(), residuals: history });
                }
                _ => step *= 0.5,
            }
        }
        history.push(res);
    }
    if res < tol {
        Ok(f)
    } else {
        Err(Error::NewtonFailed { iterations: history.len() - 1, residuals: history })
    }
}

/// `(df̂/ds, dI/ds)` together with the condition estimate of `∂H/∂f̂`.
pub fn dae_rhs_with_cond(spec: &SlowFastSpec, f_hat: &[f64], slow: &[f64], cfg: &DaeConfig) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (_, l) = spec.split_field(f_hat, slow)?;
    let (jf, ji) = spec.split_jacobian(f_hat, slow)?;
    let cond = condition_1norm(&jf);
    if !(cond < cfg.cond_threshold) {
        let state = f_hat.iter().chain(slow).copied().collect();
        return Err(Error::Fold { state, cond });
    }
    let forcing = &ji * DVector::from_column_slice(&l);
    let sol = jf.col_piv_qr().solve(&forcing).ok_or_else(|| Error::Fold {
        state: f_hat.iter().chain(slow).copied().collect(),
        cond: f64::INFINITY,
    })?;
    Ok((sol.iter().map(|v| -v).collect(), l, cond))
}

pub fn dae_rhs(spec: &SlowFastSpec, f_hat: &[f64], slow: &[f64], cfg: &DaeConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    dae_rhs_with_cond(spec, f_hat, slow, cfg).map(|(df, di, _)| (df, di))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    Fold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeSidecar {
    pub reason: Termination,
    pub s_final: f64,
    pub cond_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct DaeRun {
    /// Columns: fast components then slow components, against `s`.
    pub trajectory: Trajectory,
    pub sidecar: DaeSidecar,
    /// Largest `‖H‖∞` met at a recorded step.
    pub max_constraint_residual: f64,
}

/// RK4 on the DAE right side with re-projection onto `H = 0` after every step.
///
/// A step that runs into the fold is retried with half the step size; once the
/// step falls below `ds_min` the run ends with [`Termination::Fold`] (or the fold
/// error when `stop_on_fold` is off).
pub fn integrate_dae(spec: &SlowFastSpec, f_hat0: &[f64], slow0: &[f64], s1: f64, cfg: &DaeConfig) -> Result<DaeRun> {
    cfg.validate()?;
    let nf = spec.dim_fast();
    let mut f0 = f_hat0.to_vec();
    if cfg.project {
        let (h, _) = spec.split_field(&f0, slow0)?;
        if inf_norm(&h) >= cfg.newton_tol {
            f0 = project_to_equilibrium(spec, slow0, &f0, cfg.newton_tol)?;
        }
    } else {
        spec.split_field(&f0, slow0)?;
    }
    let mut y: Vec<f64> = f0.iter().chain(slow0).copied().collect();
    let mut trajectory = Trajectory::new(spec.dim(), spec.base.component_names.clone());
    trajectory.push(0.0, &y)?;
    let residual_of = |y: &[f64]| -> Result<f64> { Ok(inf_norm(&spec.split_field(&y[..nf], &y[nf..])?.0)) };
    let mut max_res = if cfg.project { residual_of(&y)? } else { 0.0 };
    let rhs = |u: &[f64], d: &mut [f64]| -> Result<()> {
        let (df, di) = dae_rhs(spec, &u[..nf], &u[nf..], cfg)?;
        d[..nf].copy_from_slice(&df);
        d[nf..].copy_from_slice(&di);
        Ok(())
    };
    let mut rk = Rk4::new(y.len());
    let mut s = 0.0;
    let mut ds = cfg.ds;
    let mut steps = 0usize;
    let mut last_cond = dae_rhs_with_cond(spec, &y[..nf], &y[nf..], cfg).map(|r| r.2);
    let mut reason = Termination::Completed;
    while s < s1 {
        let h = ds.min(s1 - s);
        let mut trial = y.clone();
        let attempt = rk.step(rhs, &mut trial, h).and_then(|_| {
            if cfg.project {
                let fixed = newton(spec, &trial[nf..], &trial[..nf], cfg.newton_tol, 10)?;
                trial[..nf].copy_from_slice(&fixed);
            }
            dae_rhs_with_cond(spec, &trial[..nf], &trial[nf..], cfg).map(|r| r.2)
        });
        match attempt {
            Ok(cond) => {
                y = trial;
                s = if h == s1 - s { s1 } else { s + h };
                last_cond = Ok(cond);
                steps += 1;
                if steps % cfg.record_every == 0 || s >= s1 {
                    trajectory.push(s, &y)?;
                    if cfg.project {
                        max_res = max_res.max(residual_of(&y)?);
                    }
                }
            }
            Err(e @ (Error::Fold { .. } | Error::NewtonFailed { .. } | Error::BranchInvalid { .. })) => {
                if ds * 0.5 >= cfg.ds_min {
                    ds *= 0.5;
                    continue;
                }
                if !cfg.stop_on_fold {
                    return Err(e);
                }
                reason = Termination::Fold;
                if let Error::Fold { cond, .. } = e {
                    last_cond = Ok(cond);
                }
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if trajectory.last_time() < s {
        trajectory.push(s, &y)?;
    }
    let cond_estimate = match last_cond {
        Ok(c) => c,
        Err(Error::Fold { cond, .. }) => cond,
        Err(_) => f64::NAN,
    };
    Ok(DaeRun { trajectory, sidecar: DaeSidecar { reason, s_final: s, cond_estimate }, max_constraint_residual: max_res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn epsilon_serde() {
        let e: Epsilon = serde_json::from_str("\"limit\"").unwrap();
        assert_eq!(e, Epsilon::Limit);
        let e: Epsilon = serde_json::from_str("0.001").unwrap();
        assert_eq!(e, Epsilon::Value(0.001));
        assert!(serde_json::from_str::<Epsilon>("-1.0").is_err());
        assert_eq!(serde_json::to_string(&Epsilon::Limit).unwrap(), "\"limit\"");
    }

    #[test]
    fn lorenz_equilibrium_from_nearby_guess() {
        let spec = catalog::oscillatory_forced_lorenz_slow_fast(Epsilon::Limit);
        let f = project_to_equilibrium(&spec, &[0.0, 1.0], &[7.0, 7.0, 20.0], 1e-10).unwrap();
        for (a, b) in f.iter().zip([8.0, 8.0, 24.0]) {
            assert!((a - b).abs() < 1e-9, "{f:?}");
        }
    }

    #[test]
    fn equilibrium_guess_is_returned_unchanged() {
        let spec = catalog::oscillatory_forced_lorenz_slow_fast(Epsilon::Limit);
        let f = project_to_equilibrium(&spec, &[0.0, 1.0], &[8.0, 8.0, 24.0], 1e-10).unwrap();
        assert_eq!(f, vec![8.0, 8.0, 24.0]);
    }

    #[test]
    fn artstein_constraint_root() {
        let spec = catalog::artstein_dae();
        let f = project_to_equilibrium(&spec, &[-1.875], &[1.4, 0.1], 1e-12).unwrap();
        assert!((f[0] - 1.5).abs() < 1e-10 && f[1].abs() < 1e-12, "{f:?}");
    }

    #[test]
    fn newton_failure_carries_history() {
        // x² + 1 = 0 has no real root.
        let base = SystemSpec::new("noroot", 1, 1, |u, d| {
            d[0] = u[0] * u[0] + 1.0 + 0.0 * u[1];
            d[1] = 0.0;
            Ok(())
        });
        let spec = SlowFastSpec::new(base, Epsilon::Limit);
        match project_to_equilibrium(&spec, &[0.0], &[0.5], 1e-10) {
            Err(Error::NewtonFailed { residuals, .. }) => assert!(!residuals.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oscillatory_lorenz_limit_rhs() {
        let spec = catalog::oscillatory_forced_lorenz_slow_fast(Epsilon::Limit);
        let cfg = DaeConfig::default();
        for (l, g) in [(0.0, 1.0), (0.6, -0.8), (-3.0, 2.5)] {
            let f = project_to_equilibrium(&spec, &[l, g], &[8.0 + l, 8.0, 24.0], 1e-11).unwrap();
            let (df, di) = dae_rhs(&spec, &f, &[l, g], &cfg).unwrap();
            assert!((df[0] - g).abs() < 1e-9 && df[1].abs() < 1e-9 && df[2].abs() < 1e-9, "{df:?}");
            assert_eq!(di, vec![g, -l]);
        }
    }

    #[test]
    fn load_independent_field_has_still_dae() {
        let base = SystemSpec::new("decoupled", 1, 1, |u, d| {
            d[0] = -u[0];
            d[1] = 1.0;
            Ok(())
        });
        let spec = SlowFastSpec::new(base, Epsilon::Limit);
        let (df, _) = dae_rhs(&spec, &[0.0], &[3.0], &DaeConfig::default()).unwrap();
        assert_eq!(df, vec![0.0]);
    }

    #[test]
    fn fold_is_reported_with_state() {
        let spec = catalog::artstein_dae();
        let y = catalog::fold_y();
        match dae_rhs(&spec, &[y, 0.0], &[catalog::fold_x()], &DaeConfig::default()) {
            Err(Error::Fold { state, cond }) => {
                assert_eq!(state.len(), 3);
                assert!(cond >= 1e8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn artstein_upper_branch_runs_to_fold() {
        let spec = catalog::artstein_dae();
        let cfg = DaeConfig { ds: 1e-3, ..DaeConfig::default() };
        let run = integrate_dae(&spec, &[1.5, 0.0], &[-1.875], 10.0, &cfg).unwrap();
        assert_eq!(run.sidecar.reason, Termination::Fold);
        let last = run.trajectory.last_state();
        assert!((last[2] - catalog::fold_x()).abs() < 0.01, "{last:?}");
        assert!((last[0] - catalog::fold_y()).abs() < 0.05, "{last:?}");
        assert!(run.trajectory.states().all(|s| s[1].abs() < 1e-12));
        assert!(run.max_constraint_residual <= 10.0 * cfg.newton_tol);
    }

    #[test]
    fn artstein_lower_branch_drifts_left() {
        let spec = catalog::artstein_dae();
        let run = integrate_dae(&spec, &[-1.5, 0.0], &[1.875], 0.5, &DaeConfig::default()).unwrap();
        assert_eq!(run.sidecar.reason, Termination::Completed);
        let xs = run.trajectory.component(2);
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
        assert!(run.trajectory.states().all(|s| s[1].abs() < 1e-12));
    }

    #[test]
    fn scaled_forms() {
        let spec = catalog::linear_relaxation(0.1);
        let fast = spec.fast_time_system().unwrap().eval_field(&[0.0, 1.0]).unwrap();
        let slow = spec.slow_time_system().unwrap().eval_field(&[0.0, 1.0]).unwrap();
        assert_eq!(fast, vec![1.0, 0.1]);
        assert!((slow[0] - 10.0).abs() < 1e-12 && slow[1] == 1.0);
        assert!(SlowFastSpec::new(spec.base.clone(), Epsilon::Limit).fast_time_system().is_err());
    }
}
