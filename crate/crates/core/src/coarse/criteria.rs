use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::PiField;
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig};
use crate::system::SystemSpec;
use crate::trajectory::Trajectory;

/// `c(t) = Π(f(t))`; points outside the mesh are clamped (logged once).
pub fn coarse_trajectory(field: &PiField, traj: &Trajectory) -> Trajectory {
    let mut warned = false;
    let mut out = Trajectory::new(1, vec!["c".into()]);
    for (i, &t) in traj.times().iter().enumerate() {
        let (v, _, clamped) = field.eval_grad(traj.state(i));
        if clamped && !warned {
            log::warn!("trajectory leaves the mesh at t = {t}; evaluating clamped");
            warned = true;
        }
        out.push(t, &[v]).expect("times come from a trajectory");
    }
    out
}

/// Rate of `Π` along the flow, `∇Π(f)·H(f)`.
pub fn coarse_rate(field: &PiField, system: &SystemSpec, f: &[f64]) -> Result<f64> {
    let h = system.eval_field(f)?;
    Ok(field.gradient(f).iter().zip(&h).map(|(g, v)| g * v).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffMetrics {
    pub delta_f: f64,
    pub delta_c: f64,
    pub horizon: f64,
}

fn time_mean(times: &[f64], v: &[f64]) -> f64 {
    let span = times[times.len() - 1] - times[0];
    let s: f64 = (1..times.len()).map(|i| 0.5 * (times[i] - times[i - 1]) * (v[i] + v[i - 1])).sum();
    s / span
}

fn relative_difference(times: &[f64], a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let zero = vec![0.0; a.dim()];
    let n = times.len();
    let d: Vec<f64> = (0..n).map(|i| dist(a.state(i), b.state(i))).collect();
    let na: Vec<f64> = (0..n).map(|i| dist(a.state(i), &zero)).collect();
    let nb: Vec<f64> = (0..n).map(|i| dist(b.state(i), &zero)).collect();
    let den = 0.5 * (time_mean(times, &na) + time_mean(times, &nb));
    let num = time_mean(times, &d);
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DegenerateMetric);
    }
    Ok(num / den)
}

/// Time-mean distance over the mean of the time-mean norms, for fine and coarse series.
pub fn metrics(f1: &Trajectory, f2: &Trajectory, c1: &Trajectory, c2: &Trajectory) -> Result<DiffMetrics> {
    let times = f1.times();
    let same = |t: &Trajectory| t.len() == times.len() && t.times().iter().zip(times).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    if !(same(f2) && same(c1) && same(c2)) || f1.dim() != f2.dim() || times.len() < 2 {
        return Err(Error::InvalidArgument("metrics need series on identical time stamps".into()));
    }
    let fine_zero = f1.states().chain(f2.states()).all(|s| s.iter().all(|v| *v == 0.0));
    let coarse_zero = c1.states().chain(c2.states()).all(|s| s.iter().all(|v| *v == 0.0));
    if fine_zero && coarse_zero {
        return Err(Error::DegenerateMetric);
    }
    Ok(DiffMetrics {
        delta_f: relative_difference(times, f1, f2)?,
        delta_c: relative_difference(times, c1, c2)?,
        horizon: times[times.len() - 1] - times[0],
    })
}

pub type Accept = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Box of admissible fine initial states, optionally restricted by a predicate.
#[derive(Clone)]
pub struct IcDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub accept: Option<Accept>,
}

impl std::fmt::Debug for IcDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IcDomain").field("lo", &self.lo).field("hi", &self.hi).field("restricted", &self.accept.is_some()).finish()
    }
}

impl IcDomain {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi, accept: None }
    }

    pub fn with_accept<F: Fn(&[f64]) -> bool + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.accept = Some(Arc::new(f));
        self
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn admits(&self, f: &[f64]) -> bool {
        f.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v <= self.hi[k]) && self.accept.as_ref().map_or(true, |a| a(f))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let f: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(&a, &b)| rng.gen_range(a..b)).collect();
            if self.admits(&f) {
                return f;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// Pairs abandoned after 100 failed projections.
    pub skipped: usize,
}

/// Residuals of the two matching constraints for the pair `(f1, f2)`.
pub fn constraint_residual(field: &PiField, system: &SystemSpec, f1: &[f64], f2: &[f64]) -> Result<[f64; 2]> {
    Ok([field.eval(f2) - field.eval(f1), coarse_rate(field, system, f2)? - coarse_rate(field, system, f1)?])
}

const PAIR_TOL: f64 = 1e-8;

/// Newton (minimum-norm steps) moving `f2` onto `Π(f2) = p`, `∇Π·H(f2) = q`.
fn project(field: &PiField, system: &SystemSpec, target: [f64; 2], mut f: Vec<f64>, scale: &[f64]) -> Result<Option<Vec<f64>>> {
    let d = f.len();
    let g_of = |x: &[f64]| -> Result<[f64; 2]> { Ok([field.eval(x) - target[0], coarse_rate(field, system, x)? - target[1]]) };
    let mut g = g_of(&f)?;
    for _ in 0..50 {
        let gn = g[0].abs().max(g[1].abs());
        if gn <= 0.1 * PAIR_TOL {
            return Ok(Some(f));
        }
        let row0 = field.gradient(&f);
        let mut row1 = vec![0.0; d];
        for k in 0..d {
            let hk = 1e-7 * scale[k];
            let mut p = f.clone();
            let mut m = f.clone();
            p[k] += hk;
            m[k] -= hk;
            row1[k] = (coarse_rate(field, system, &p)? - coarse_rate(field, system, &m)?) / (2.0 * hk);
        }
        // Minimum-norm solution of the 2×d system J δ = −g.
        let a11: f64 = row0.iter().map(|v| v * v).sum();
        let a12: f64 = row0.iter().zip(&row1).map(|(a, b)| a * b).sum();
        let a22: f64 = row1.iter().map(|v| v * v).sum();
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > 1e-14 * (a11 * a22).max(f64::MIN_POSITIVE)) {
            return Ok(None);
        }
        let y0 = (-g[0] * a22 + g[1] * a12) / det;
        let y1 = (g[0] * a12 - g[1] * a11) / det;
        let step: Vec<f64> = (0..d).map(|k| y0 * row0[k] + y1 * row1[k]).collect();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = f.iter().zip(&step).map(|(x, s)| x + lambda * s).collect();
            let gt = g_of(&trial)?;
            if gt[0].abs().max(gt[1].abs()) < gn {
                f = trial;
                g = gt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Fine-state pairs sharing `Π` and its rate, at least `0.2·diameter` apart.
/// Pair `i` draws from its own stream of the seeded generator.
pub fn constrained_ic_pairs(field: &PiField, system: &SystemSpec, domain: &IcDomain, n_pairs: usize, seed: u64) -> Result<PairSet> {
    let min_sep = 0.2 * domain.diameter();
    let scale: Vec<f64> = domain.lo.iter().zip(&domain.hi).map(|(a, b)| b - a).collect();
    let results = (0..n_pairs)
        .into_par_iter()
        .map(|i| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for _ in 0..100 {
                let f1 = domain.sample(&mut rng);
                let target = [field.eval(&f1), coarse_rate(field, system, &f1)?];
                let guess = domain.sample(&mut rng);
                if let Some(f2) = project(field, system, target, guess, &scale)? {
                    let sep = f1.iter().zip(&f2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let r = constraint_residual(field, system, &f1, &f2)?;
                    if sep >= min_sep && domain.admits(&f2) && r[0].abs() <= PAIR_TOL && r[1].abs() <= PAIR_TOL {
                        return Ok(Some((f1, f2)));
                    }
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} of {n_pairs} constrained pairs could not be projected and were skipped");
    }
    Ok(PairSet { pairs: results.into_iter().flatten().collect(), skipped })
}

/// Pairs drawn independently from the domain, at least `0.2·diameter` apart.
pub fn random_pairs(domain: &IcDomain, n_pairs: usize, seed: u64) -> PairSet {
    let min_sep = 0.2 * domain.diameter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let f1 = domain.sample(&mut rng);
        let f2 = domain.sample(&mut rng);
        let sep = f1.iter().zip(&f2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if sep >= min_sep {
            pairs.push((f1, f2));
        }
    }
    PairSet { pairs, skipped: 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub delta_f: f64,
    pub delta_c: f64,
    /// Median of the per-pair ratios `Δc/Δf`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub criterion: String,
    pub pairs: usize,
    pub skipped: usize,
    pub horizon: f64,
    pub delta_f: Vec<f64>,
    pub delta_c: Vec<f64>,
    pub medians: Medians,
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Integrate every pair over `[0, horizon]` and collect `Δf`, `Δc`.
pub fn pair_battery(
    label: &str,
    field: &PiField,
    system: &SystemSpec,
    pairs: &PairSet,
    horizon: f64,
    integrator: &IntegratorConfig,
) -> Result<CriteriaReport> {
    let m = pairs
        .pairs
        .par_iter()
        .map(|(f1, f2)| {
            let t1 = integrate(system, f1, 0.0, horizon, integrator)?;
            let t2 = integrate(system, f2, 0.0, horizon, integrator)?;
            metrics(&t1, &t2, &coarse_trajectory(field, &t1), &coarse_trajectory(field, &t2))
        })
        .collect::<Result<Vec<_>>>()?;
    let delta_f: Vec<f64> = m.iter().map(|d| d.delta_f).collect();
    let delta_c: Vec<f64> = m.iter().map(|d| d.delta_c).collect();
    let ratios: Vec<f64> = m.iter().map(|d| d.delta_c / d.delta_f).collect();
    Ok(CriteriaReport {
        criterion: label.to_string(),
        pairs: m.len(),
        skipped: pairs.skipped,
        horizon,
        medians: Medians { delta_f: median(&delta_f), delta_c: median(&delta_c), ratio: median(&ratios) },
        delta_f,
        delta_c,
    })
}

/// Largest `|Π(f(t)) − Π(g(t))|` where `g` starts from the mirrored state `S f(0)`.
pub fn symmetric_series_gap(field: &PiField, system: &SystemSpec, f0: &[f64], signs: &[f64], horizon: f64, integrator: &IntegratorConfig) -> Result<f64> {
    let g0: Vec<f64> = f0.iter().zip(signs).map(|(a, s)| a * s).collect();
    let t1 = integrate(system, f0, 0.0, horizon, integrator)?;
    let t2 = integrate(system, &g0, 0.0, horizon, integrator)?;
    let c1 = coarse_trajectory(field, &t1);
    let c2 = coarse_trajectory(field, &t2);
    Ok(c1.states().zip(c2.states()).map(|(a, b)| (a[0] - b[0]).abs()).fold(0.0, f64::max))
}
