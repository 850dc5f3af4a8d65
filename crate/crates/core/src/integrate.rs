//! Fixed-step RK4 and adaptive Dormand–Prince 5(4).
//!
//! [`integrate_observed`] streams every accepted step to an [`Observer`] so that
//! long runs can accumulate statistics without storing the path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::SystemSpec;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step for `rk4-fixed`; initial step for `rk45-adaptive`.
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_dt_max() -> f64 {
    1.0
}
fn default_record() -> usize {
    1
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            dt,
            abs_tol: default_tol(),
            rel_tol: default_tol(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            record_every: 1,
        }
    }

    pub fn rk45(tol: f64) -> Self {
        Self { method: Method::Rk45Adaptive, dt: 1e-3, abs_tol: tol, rel_tol: tol, ..Self::rk4(1e-3) }
    }

    /// The default for Lorenz-family systems.
    pub fn lorenz_default() -> Self {
        Self::rk4(1e-3)
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("integrator: {what}")));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if self.method == Method::Rk45Adaptive {
            if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
                return bad("tolerances must be positive");
            }
            if !(self.dt_min > 0.0 && self.dt_max >= self.dt_min) {
                return bad("need 0 < dt_min <= dt_max");
            }
        }
        Ok(())
    }
}

/// Receives `(t, state)` at the initial point and after every accepted step.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &[f64]) -> Result<()>;
}

impl<F: FnMut(f64, &[f64]) -> Result<()>> Observer for F {
    fn observe(&mut self, t: f64, state: &[f64]) -> Result<()> {
        self(t, state)
    }
}

/// Classic fourth-order Runge–Kutta with preallocated stages.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    #[inline]
    pub fn step<F>(&mut self, mut f: F, y: &mut [f64], h: f64) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        f(y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau; the nodes c_i are not needed for autonomous fields.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand–Prince stepper with first-same-as-last reuse.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(dim: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim], y_new: vec![0.0; dim], fsal_valid: false }
    }

    /// Attempt one step; on acceptance `y` is advanced. Returns the scaled error norm.
    pub fn try_step<F>(&mut self, f: &mut F, y: &mut [f64], h: f64, atol: f64, rtol: f64) -> Result<f64>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        if !self.fsal_valid {
            f(y, &mut self.k[0])?;
        }
        macro_rules! stage {
            ($dst:expr, $($a:expr => $ki:expr),+) => {{
                for i in 0..n {
                    self.tmp[i] = y[i] + h * (0.0 $(+ $a * self.k[$ki][i])+);
                }
                let (tmp, k) = (&self.tmp, &mut self.k[$dst]);
                f(tmp, k)?;
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (B1 * self.k[0][i] + B3 * self.k[2][i] + B4 * self.k[3][i] + B5 * self.k[4][i] + B6 * self.k[5][i]);
        }
        let (y_new, k6) = (&self.y_new, &mut self.k[6]);
        f(y_new, k6)?;
        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * self.k[0][i] + E3 * self.k[2][i] + E4 * self.k[3][i] + E5 * self.k[4][i] + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sc = atol + rtol * y[i].abs().max(self.y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if err <= 1.0 {
            y.copy_from_slice(&self.y_new);
            self.k.swap(0, 6);
        }
        // On rejection k[0] is still f(y).
        self.fsal_valid = true;
        Ok(err)
    }
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t, last_state: y.to_vec() })
    }
}

/// Integrate an arbitrary autonomous right side, streaming to `observer`. Returns the final state.
pub fn integrate_fn<F, O>(mut f: F, state0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig, observer: &mut O) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    O: Observer + ?Sized,
{
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(format!("need t1 > t0 (got {t0} .. {t1})")));
    }
    let mut y = state0.to_vec();
    check_finite(t0, &y)?;
    observer.observe(t0, &y)?;
    match cfg.method {
        Method::Rk4Fixed => {
            let span = t1 - t0;
            let n = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as u64;
            let mut rk = Rk4::new(y.len());
            let mut t = t0;
            for k in 1..=n {
                let t_next = if k == n { t1 } else { t0 + k as f64 * cfg.dt };
                rk.step(&mut f, &mut y, t_next - t)?;
                t = t_next;
                check_finite(t, &y)?;
                observer.observe(t, &y)?;
            }
        }
        Method::Rk45Adaptive => {
            let mut dp = Dopri5::new(y.len());
            let mut t = t0;
            let mut h = cfg.dt.min(cfg.dt_max).min(t1 - t0);
            while t < t1 {
                let last = t + h >= t1;
                let h_try = if last { t1 - t } else { h };
                if h_try < cfg.dt_min && !last || t + h_try == t {
                    return Err(Error::StepUnderflow { t, dt: h_try, last_state: y });
                }
                let err = dp.try_step(&mut f, &mut y, h_try, cfg.abs_tol, cfg.rel_tol)?;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    t = if last { t1 } else { t + h_try };
                    check_finite(t, &y)?;
                    observer.observe(t, &y)?;
                    h = (h_try * factor).min(cfg.dt_max);
                } else {
                    h = h_try * factor.min(1.0);
                    if h < cfg.dt_min {
                        return Err(Error::StepUnderflow { t, dt: h, last_state: y });
                    }
                }
            }
        }
    }
    Ok(y)
}

pub fn integrate_observed<O: Observer + ?Sized>(
    system: &SystemSpec,
    state0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    observer: &mut O,
) -> Result<Vec<f64>> {
    system.check_dim(state0)?;
    let field = system.field_fn();
    integrate_fn(|u: &[f64], d: &mut [f64]| field(u, d), state0, t0, t1, cfg, observer)
}

/// Integrate and record every `record_every`-th step (the final state is always kept).
pub fn integrate(system: &SystemSpec, state0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let mut tr = Trajectory::new(system.dim(), system.component_names.clone());
    let mut count = 0usize;
    let mut last = (t0, state0.to_vec());
    let mut rec = |t: f64, s: &[f64]| -> Result<()> {
        if count % cfg.record_every == 0 {
            tr.push(t, s)?;
        }
        count += 1;
        last.0 = t;
        last.1.copy_from_slice(s);
        Ok(())
    };
    integrate_observed(system, state0, t0, t1, cfg, &mut rec)?;
    if tr.last_time() < last.0 {
        tr.push(last.0, &last.1)?;
    }
    Ok(tr)
}
