//! Running time averages, the delay-augmented system and burst averages of the
//! frozen fast flow.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_fn, integrate_observed, IntegratorConfig};
use crate::system::SystemSpec;
use crate::trajectory::Trajectory;

pub type ObservableFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A phase function `Λ: state → ℝ^m`, evaluated on the full `(f, I)` state.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub dim_out: usize,
    eval: Arc<ObservableFn>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).field("dim_out", &self.dim_out).finish()
    }
}

impl Observable {
    pub fn new<F>(name: impl Into<String>, dim_out: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { name: name.into(), dim_out, eval: Arc::new(eval) }
    }

    /// `Λ(u) = u_j`.
    pub fn component(name: impl Into<String>, j: usize) -> Self {
        Self::new(name, 1, move |u, out| out[0] = u[j])
    }

    /// `Λ(u) = u_j²`.
    pub fn component_squared(name: impl Into<String>, j: usize) -> Self {
        Self::new(name, 1, move |u, out| out[0] = u[j] * u[j])
    }

    /// `Λ(u) = (u_j)_{j ∈ idx}`.
    pub fn components(name: impl Into<String>, idx: Vec<usize>) -> Self {
        let m = idx.len();
        Self::new(name, m, move |u, out| {
            for (o, &j) in out.iter_mut().zip(&idx) {
                *o = u[j];
            }
        })
    }

    pub fn constant(name: impl Into<String>, value: Vec<f64>) -> Self {
        let m = value.len();
        Self::new(name, m, move |_, out| out.copy_from_slice(&value))
    }

    pub fn zero(m: usize) -> Self {
        Self::constant("zero", vec![0.0; m])
    }

    #[inline]
    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) {
        (self.eval)(state, out)
    }

    pub fn eval(&self, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out];
        (self.eval)(state, &mut out);
        out
    }

    /// Same observable reading its input from `state[offset..]`.
    pub fn shifted(&self, offset: usize) -> Observable {
        let inner = Arc::clone(&self.eval);
        Observable::new(self.name.clone(), self.dim_out, move |u, out| inner(&u[offset..], out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingConfig {
    /// Window on the fast time scale.
    pub tau: f64,
    /// Window on the slow time scale, `λ = ε τ`.
    pub lambda: f64,
    pub kappa: f64,
}

impl AveragingConfig {
    /// `τ = κ/ε`, `λ = κ`.
    pub fn from_kappa(kappa: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self { tau: kappa / epsilon, lambda: kappa, kappa };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.lambda > 0.0) {
            return Err(Error::InvalidArgument("averaging windows must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        Ok(())
    }
}

fn span_tolerance(a: f64, b: f64) -> f64 {
    1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// `(1/(b − a)) ∫_a^b Λ(f(p)) dp` by the trapezoidal rule on the recorded samples,
/// with linear interpolation at window ends that fall between samples.
pub fn window_average(traj: &Trajectory, obs: &Observable, a: f64, b: f64) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::WindowOutOfRange { t0: a, t1: b, available: f64::NEG_INFINITY });
    }
    let (first, last) = (traj.first_time(), traj.last_time());
    let tol = span_tolerance(a, b);
    if a < first - tol || b > last + tol {
        return Err(Error::WindowOutOfRange { t0: a, t1: b, available: last });
    }
    if !(b > a) {
        return Err(Error::InvalidArgument("window must have positive length".into()));
    }
    let (a, b) = (a.max(first), b.min(last));
    let m = obs.dim_out;
    let times = traj.times();
    let lam_at = |t: f64| obs.eval(&traj.sample(t));
    let mut acc = vec![0.0; m];
    let i0 = times.partition_point(|&t| t <= a);
    let i1 = times.partition_point(|&t| t < b);
    let mut t_prev = a;
    let mut v_prev = lam_at(a);
    let mut v = vec![0.0; m];
    for i in i0..i1 {
        obs.eval_into(traj.state(i), &mut v);
        let h = times[i] - t_prev;
        for k in 0..m {
            acc[k] += 0.5 * h * (v_prev[k] + v[k]);
        }
        t_prev = times[i];
        v_prev.copy_from_slice(&v);
    }
    let v_end = lam_at(b);
    let h = b - t_prev;
    for k in 0..m {
        acc[k] += 0.5 * h * (v_prev[k] + v_end[k]);
        acc[k] /= b - a;
    }
    Ok(acc)
}

/// `c(t) = (1/τ) ∫_t^{t+τ} Λ(f(p)) dp`.
pub fn running_average(traj: &Trajectory, obs: &Observable, tau: f64, t: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    window_average(traj, obs, t, t + tau)
}

/// Cumulative trapezoidal integral `C(t_i) = ∫_{t_0}^{t_i} Λ` at every sample.
pub fn cumulative_integral(traj: &Trajectory, obs: &Observable) -> Vec<Vec<f64>> {
    let m = obs.dim_out;
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = vec![0.0; m];
    let mut prev = obs.eval(traj.state(0));
    out.push(acc.clone());
    let mut v = vec![0.0; m];
    for i in 1..traj.len() {
        obs.eval_into(traj.state(i), &mut v);
        let h = traj.times()[i] - traj.times()[i - 1];
        for k in 0..m {
            acc[k] += 0.5 * h * (prev[k] + v[k]);
        }
        out.push(acc.clone());
        prev.copy_from_slice(&v);
    }
    out
}

/// The running average at every sample `t_i` with `t_i + τ` inside the record.
///
/// Window ends are located by linear interpolation of the cumulative integral,
/// which is exact when `τ` is a multiple of a uniform sample spacing.
pub fn running_average_series(traj: &Trajectory, obs: &Observable, tau: f64) -> Result<Trajectory> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let times = traj.times();
    let last = traj.last_time();
    if traj.first_time() + tau > last + span_tolerance(tau, last) {
        return Err(Error::WindowOutOfRange { t0: traj.first_time(), t1: traj.first_time() + tau, available: last });
    }
    let cum = cumulative_integral(traj, obs);
    let m = obs.dim_out;
    let names = if m == 1 { vec![format!("{}_bar", obs.name)] } else { (0..m).map(|k| format!("{}_bar{k}", obs.name)).collect() };
    let mut out = Trajectory::new(m, names);
    let cum_at = |t: f64, k: usize| -> f64 {
        let j = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
        let w = ((t - times[j - 1]) / (times[j] - times[j - 1])).clamp(0.0, 1.0);
        cum[j - 1][k] + w * (cum[j][k] - cum[j - 1][k])
    };
    let mut row = vec![0.0; m];
    for (i, &t) in times.iter().enumerate() {
        let end = t + tau;
        if end > last + span_tolerance(end, last) {
            break;
        }
        for (k, r) in row.iter_mut().enumerate() {
            *r = (cum_at(end.min(last), k) - cum[i][k]) / tau;
        }
        out.push(t, &row)?;
    }
    Ok(out)
}

/// Streams cumulative integrals of `Λ` during an integration, keeping one
/// record every `stride` steps (plus the first and last).
#[derive(Debug, Clone)]
pub struct CumulativeRecorder {
    obs: Observable,
    stride: usize,
    count: usize,
    acc: Vec<f64>,
    prev_t: f64,
    prev_v: Vec<f64>,
    cur: Vec<f64>,
    pending: Option<(f64, Vec<f64>)>,
    pub times: Vec<f64>,
    pub integrals: Vec<Vec<f64>>,
}

impl CumulativeRecorder {
    pub fn new(obs: Observable, stride: usize) -> Self {
        let m = obs.dim_out;
        Self {
            obs,
            stride: stride.max(1),
            count: 0,
            acc: vec![0.0; m],
            prev_t: f64::NAN,
            prev_v: vec![0.0; m],
            cur: vec![0.0; m],
            pending: None,
            times: Vec::new(),
            integrals: Vec::new(),
        }
    }

    /// Push the trailing sample if the last step fell between strides.
    pub fn finish(&mut self) {
        if let Some((t, c)) = self.pending.take() {
            self.times.push(t);
            self.integrals.push(c);
        }
    }

    /// Average over `[a, b]` from the records (linear interpolation between them).
    pub fn average(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let n = self.times.len();
        if n < 2 {
            return Err(Error::WindowOutOfRange { t0: a, t1: b, available: self.times.last().copied().unwrap_or(f64::NAN) });
        }
        let last = self.times[n - 1];
        let tol = span_tolerance(a, b);
        if a < self.times[0] - tol || b > last + tol || !(b > a) {
            return Err(Error::WindowOutOfRange { t0: a, t1: b, available: last });
        }
        let at = |t: f64| -> Vec<f64> {
            let j = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
            let w = ((t - self.times[j - 1]) / (self.times[j] - self.times[j - 1])).clamp(0.0, 1.0);
            self.integrals[j - 1].iter().zip(&self.integrals[j]).map(|(p, q)| p + w * (q - p)).collect()
        };
        let (ca, cb) = (at(a), at(b));
        Ok(ca.iter().zip(&cb).map(|(p, q)| (q - p) / (b - a)).collect())
    }
}

impl crate::integrate::Observer for CumulativeRecorder {
    fn observe(&mut self, t: f64, state: &[f64]) -> Result<()> {
        self.obs.eval_into(state, &mut self.cur);
        if self.count > 0 {
            let h = t - self.prev_t;
            for k in 0..self.acc.len() {
                self.acc[k] += 0.5 * h * (self.prev_v[k] + self.cur[k]);
            }
        }
        self.prev_t = t;
        self.prev_v.copy_from_slice(&self.cur);
        if self.count % self.stride == 0 {
            self.times.push(t);
            self.integrals.push(self.acc.clone());
            self.pending = None;
        } else {
            self.pending = Some((t, self.acc.clone()));
        }
        self.count += 1;
        Ok(())
    }
}

/// The delay-augmented system with state `(f_f, f, I_f, I, c)`.
///
/// `f_f` and `I_f` follow the fine flow a window `τ` ahead of `f`, `I`, and
/// `dc/dt = (Λ(f_f, I_f) − Λ(f, I))/τ` keeps `c` equal to the running average.
/// `dim_fast = 2N`, `dim_slow = 2n + m`.
pub fn build_augmented(system: &SystemSpec, obs: &Observable, tau: f64) -> Result<SystemSpec> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    let (nf, ns, m) = (system.dim_fast, system.dim_slow, obs.dim_out);
    let d = nf + ns;
    if d > 32 || m > 32 {
        return Err(Error::InvalidArgument("augmented systems support at most 32 base components".into()));
    }
    let field = system.field_fn();
    let lam = obs.clone();
    let layout = AugmentedLayout { nf, ns, m };
    let aug = SystemSpec::new(format!("{}-augmented", system.name), 2 * nf, 2 * ns + m, move |u, out| {
        let mut ahead = [0.0f64; 32];
        let mut now = [0.0f64; 32];
        let mut d_ahead = [0.0f64; 32];
        let mut d_now = [0.0f64; 32];
        layout.split(u, &mut ahead[..d], &mut now[..d]);
        field(&ahead[..d], &mut d_ahead[..d])?;
        field(&now[..d], &mut d_now[..d])?;
        out[..nf].copy_from_slice(&d_ahead[..nf]);
        out[nf..2 * nf].copy_from_slice(&d_now[..nf]);
        out[2 * nf..2 * nf + ns].copy_from_slice(&d_ahead[nf..d]);
        out[2 * nf + ns..2 * nf + 2 * ns].copy_from_slice(&d_now[nf..d]);
        let mut la = [0.0f64; 32];
        let mut ln = [0.0f64; 32];
        lam.eval_into(&ahead[..d], &mut la[..m]);
        lam.eval_into(&now[..d], &mut ln[..m]);
        for k in 0..m {
            out[2 * nf + 2 * ns + k] = (la[k] - ln[k]) / tau;
        }
        Ok(())
    });
    let mut names = Vec::with_capacity(2 * d + m);
    let cn = &system.component_names;
    names.extend(cn[..nf].iter().map(|n| format!("{n}_f")));
    names.extend(cn[..nf].iter().cloned());
    names.extend(cn[nf..].iter().map(|n| format!("{n}_f")));
    names.extend(cn[nf..].iter().cloned());
    names.extend((0..m).map(|k| if m == 1 { "c".to_string() } else { format!("c{k}") }));
    let mut aug = aug.with_names(&names);
    aug.params = system.params.clone();
    aug.params.insert("tau".into(), tau);
    Ok(aug)
}

/// Index bookkeeping for `(f_f, f, I_f, I, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedLayout {
    pub nf: usize,
    pub ns: usize,
    pub m: usize,
}

impl AugmentedLayout {
    pub fn of(system: &SystemSpec, obs: &Observable) -> Self {
        Self { nf: system.dim_fast, ns: system.dim_slow, m: obs.dim_out }
    }

    pub fn dim(&self) -> usize {
        2 * self.nf + 2 * self.ns + self.m
    }

    /// Base states `(f_f, I_f)` and `(f, I)`.
    pub fn split(&self, u: &[f64], ahead: &mut [f64], now: &mut [f64]) {
        let (nf, ns) = (self.nf, self.ns);
        ahead[..nf].copy_from_slice(&u[..nf]);
        ahead[nf..nf + ns].copy_from_slice(&u[2 * nf..2 * nf + ns]);
        now[..nf].copy_from_slice(&u[nf..2 * nf]);
        now[nf..nf + ns].copy_from_slice(&u[2 * nf + ns..2 * nf + 2 * ns]);
    }

    pub fn join(&self, ahead: &[f64], now: &[f64], c: &[f64]) -> Vec<f64> {
        let (nf, ns) = (self.nf, self.ns);
        let mut u = Vec::with_capacity(self.dim());
        u.extend_from_slice(&ahead[..nf]);
        u.extend_from_slice(&now[..nf]);
        u.extend_from_slice(&ahead[nf..nf + ns]);
        u.extend_from_slice(&now[nf..nf + ns]);
        u.extend_from_slice(c);
        u
    }

    pub fn c_range(&self) -> std::ops::Range<usize> {
        let s = 2 * self.nf + 2 * self.ns;
        s..s + self.m
    }

    pub fn now_range_fast(&self) -> std::ops::Range<usize> {
        self.nf..2 * self.nf
    }
}

/// Initial augmented state consistent with the running average: integrates the
/// fine flow over `[0, τ]` from `state0`, sets `(f_f, I_f)` to the end point and
/// `c` to the trapezoidal window average.
pub fn augmented_initial_state(
    system: &SystemSpec,
    obs: &Observable,
    tau: f64,
    state0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let mut rec = CumulativeRecorder::new(obs.clone(), 1);
    let end = integrate_observed(system, state0, 0.0, tau, cfg, &mut rec)?;
    let c = rec.average(0.0, tau)?;
    Ok(AugmentedLayout::of(system, obs).join(&end, state0, &c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasureSummary {
    pub mean: Vec<f64>,
    pub m_samples: usize,
    pub burn_in: f64,
    pub converged: bool,
    pub half_vs_full_delta: f64,
    /// The declared tolerance: `rel_tol · max(1, ‖mean‖∞)`.
    pub tolerance: f64,
    /// Fast state at the end of the burst.
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    /// Fast-time spacing of the Dirac samples.
    pub sample_dt: f64,
    pub rel_tol: f64,
    /// Guard radius is `bound_factor·‖state0‖ + bound_offset`.
    pub bound_factor: f64,
    pub bound_offset: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { sample_dt: 0.01, rel_tol: 1e-3, bound_factor: 10.0, bound_offset: 100.0 }
    }
}

/// Default burn-in for a burst of the given length: 20%.
pub fn default_burn_in(burst: f64) -> f64 {
    0.2 * burst
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Average of `Λ` over `M` samples of the frozen fast flow after a burn-in.
///
/// The slow components of the state are fixed at `frozen_slow`; `f0` gives the
/// fast components. Samples are spaced `mcfg.sample_dt` apart in fast time.
#[allow(clippy::too_many_arguments)]
pub fn empirical_measure_average(
    system: &SystemSpec,
    frozen_slow: &[f64],
    f0: &[f64],
    m_samples: usize,
    burn_in: f64,
    cfg: &IntegratorConfig,
    obs: &Observable,
    mcfg: &MeasureConfig,
) -> Result<EmpiricalMeasureSummary> {
    if m_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if f0.len() != system.dim_fast || frozen_slow.len() != system.dim_slow {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: f0.len() + frozen_slow.len() });
    }
    if !(burn_in >= 0.0 && mcfg.sample_dt > 0.0) {
        return Err(Error::InvalidArgument("burn_in must be >= 0 and sample_dt > 0".into()));
    }
    let frozen = system.frozen();
    let field = frozen.field_fn();
    let mut state: Vec<f64> = f0.iter().chain(frozen_slow).copied().collect();
    let bound = mcfg.bound_factor * euclid(&state) + mcfg.bound_offset;
    let mut guard = |t: f64, s: &[f64]| -> Result<()> {
        let n = euclid(s);
        if n > bound {
            return Err(Error::UnboundedFastFlow { t, norm: n, bound });
        }
        Ok(())
    };
    let rhs = |u: &[f64], d: &mut [f64]| field(u, d);
    if burn_in > 0.0 {
        state = integrate_fn(rhs, &state, 0.0, burn_in, cfg, &mut guard)?;
    }
    let m = obs.dim_out;
    let mut sum = vec![0.0; m];
    let mut half_sum = vec![0.0; m];
    let mut v = vec![0.0; m];
    let half_start = m_samples - m_samples / 2;
    let mut t = burn_in;
    for i in 0..m_samples {
        if i > 0 {
            state = integrate_fn(rhs, &state, t, t + mcfg.sample_dt, cfg, &mut guard)?;
            t += mcfg.sample_dt;
        }
        obs.eval_into(&state, &mut v);
        for k in 0..m {
            sum[k] += v[k];
            if i >= half_start {
                half_sum[k] += v[k];
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / m_samples as f64).collect();
    let half: Vec<f64> = half_sum.iter().map(|s| s / (m_samples / 2) as f64).collect();
    let delta = inf_norm(&mean.iter().zip(&half).map(|(a, b)| a - b).collect::<Vec<_>>());
    let tolerance = mcfg.rel_tol * inf_norm(&mean).max(1.0);
    let converged = delta < tolerance;
    if !converged {
        log::warn!("measure average not converged: half-vs-full delta {delta:.3e} >= {tolerance:.3e}");
    }
    Ok(EmpiricalMeasureSummary {
        mean,
        m_samples,
        burn_in,
        converged,
        half_vs_full_delta: delta,
        tolerance,
        final_state: state[..system.dim_fast].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::integrate::integrate;

    fn sine_traj(dt: f64, t1: f64) -> Trajectory {
        let n = (t1 / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let states: Vec<Vec<f64>> = times.iter().map(|t| vec![(2.0 * std::f64::consts::PI * t).sin()]).collect();
        Trajectory::from_rows(times, &states, vec!["f".into()]).unwrap()
    }

    #[test]
    fn constant_signal_average() {
        let tr = Trajectory::from_rows(vec![0.0, 0.3, 1.0, 2.5], &vec![vec![4.25]; 4], vec!["f".into()]).unwrap();
        for (tau, t) in [(0.1, 0.0), (1.0, 0.7), (2.5, 0.0)] {
            assert!((running_average(&tr, &Observable::component("f", 0), tau, t).unwrap()[0] - 4.25).abs() < 1e-14);
        }
    }

    #[test]
    fn full_period_sine_average() {
        let tr = sine_traj(1e-3, 2.0);
        let v = running_average(&tr, &Observable::component("f", 0), 1.0, 0.0).unwrap();
        assert!(v[0].abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn window_past_end_names_extension() {
        let tr = sine_traj(0.01, 1.0);
        match running_average(&tr, &Observable::component("f", 0), 1.0, 0.5) {
            Err(e @ Error::WindowOutOfRange { .. }) => assert!(e.to_string().contains("extend integration by 0.5")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn series_matches_pointwise_average() {
        let tr = sine_traj(1e-3, 3.0);
        let obs = Observable::component_squared("f2", 0);
        let series = running_average_series(&tr, &obs, 0.5).unwrap();
        for i in [0, 100, 1700, series.len() - 1] {
            let t = series.times()[i];
            let direct = running_average(&tr, &obs, 0.5, t).unwrap()[0];
            assert!((series.state(i)[0] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn lorenz_running_mean_of_x_is_small() {
        let sys = catalog::lorenz_default();
        let tr = integrate(&sys, &[1.0, 1.0, 20.0], 0.0, 150.0, &IntegratorConfig::rk4(1e-3).record_every(4)).unwrap();
        let obs = Observable::component("x", 0);
        let xmax = tr.states().map(|s| s[0].abs()).fold(0.0, f64::max);
        // Window placed after the transient.
        let xbar = running_average(&tr, &obs, 50.0, 20.0).unwrap()[0];
        assert!(xbar.abs() <= 0.1 * xmax, "x̄ = {xbar}, max |x| = {xmax}");
    }

    #[test]
    fn augmented_dimension() {
        let sys = catalog::forced_monotone_lorenz(10.0, 8.0 / 3.0, 25.0);
        let aug = build_augmented(&sys, &Observable::component("x", 0), 50.0).unwrap();
        assert_eq!(aug.dim(), 9);
        assert_eq!(aug.component_names[8], "c");
    }

    #[test]
    fn zero_observable_keeps_c() {
        let sys = catalog::lorenz_default();
        let obs = Observable::zero(1);
        let cfg = IntegratorConfig::rk4(1e-3);
        let u0 = augmented_initial_state(&sys, &obs, 1.0, &[1.0, 2.0, 3.0], &cfg).unwrap();
        let mut u0 = u0;
        u0[6] = 0.625;
        let aug = build_augmented(&sys, &obs, 1.0).unwrap();
        let tr = integrate(&aug, &u0, 0.0, 2.0, &cfg).unwrap();
        assert!(tr.states().all(|s| s[6] == 0.625));
    }

    #[test]
    fn augmented_c_matches_direct_quadrature_short() {
        let sys = catalog::forced_monotone_lorenz(10.0, 8.0 / 3.0, 25.0);
        let obs = Observable::component("x", 0);
        let tau = 5.0;
        let cfg = IntegratorConfig::rk4(1e-3);
        let x0 = [1.0, 1.0, 20.0, 0.0];
        let fine = integrate(&sys, &x0, 0.0, 10.0, &cfg).unwrap();
        let aug = build_augmented(&sys, &obs, tau).unwrap();
        let u0 = augmented_initial_state(&sys, &obs, tau, &x0, &cfg).unwrap();
        let atr = integrate(&aug, &u0, 0.0, 5.0, &cfg.clone().record_every(500)).unwrap();
        for (i, t) in atr.times().iter().enumerate() {
            let direct = running_average(&fine, &obs, tau, *t).unwrap()[0];
            assert!((atr.state(i)[8] - direct).abs() < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn measure_average_at_attracting_equilibrium() {
        let spec = catalog::linear_relaxation(0.1);
        let obs = Observable::component("y", 0);
        let s = empirical_measure_average(
            &spec.base,
            &[2.0],
            &[-1.0],
            200,
            40.0,
            &IntegratorConfig::rk4(0.01),
            &obs,
            &MeasureConfig::default(),
        )
        .unwrap();
        assert!((s.mean[0] - 2.0).abs() < 1e-6);
        assert!(s.converged);
    }

    #[test]
    fn measure_average_harmonic_circle() {
        let obs = Observable::component("y1", 0);
        let mcfg = MeasureConfig { sample_dt: 0.01, ..MeasureConfig::default() };
        // 100 full periods sampled uniformly.
        let m = (200.0 * std::f64::consts::PI / 0.01).round() as usize;
        let s = empirical_measure_average(&catalog::harmonic(), &[], &[1.0, 0.0], m, 3.0, &IntegratorConfig::rk4(0.01), &obs, &mcfg)
            .unwrap();
        assert!(s.mean[0].abs() < 1e-4, "{:?}", s.mean);
    }

    #[test]
    fn measure_average_unbounded_flow() {
        let sys = SystemSpec::new("growth", 1, 0, |u, d| {
            d[0] = u[0];
            Ok(())
        });
        let r = empirical_measure_average(
            &sys,
            &[],
            &[1.0],
            10,
            20.0,
            &IntegratorConfig::rk4(0.01),
            &Observable::component("u", 0),
            &MeasureConfig::default(),
        );
        assert!(matches!(r, Err(Error::UnboundedFastFlow { .. })));
    }
}
