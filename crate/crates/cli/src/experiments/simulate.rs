use coarsekit::catalog;
use coarsekit::integrate;

use super::{default_ic, system};
use crate::config::{ExperimentConfig, SimulateParams};
use crate::error::CliError;
use crate::output::RunOutput;

pub(super) fn run(cfg: &ExperimentConfig, p: &SimulateParams, out: &mut RunOutput) -> Result<(), CliError> {
    let sys = system(&cfg.system, p.epsilon)?;
    let ic = if p.ic.is_empty() { default_ic(&cfg.system)? } else { p.ic.clone() };
    let tr = integrate(&sys, &ic, p.t0, p.t1, &p.integrator)?;
    out.csv("trajectory.csv", &tr)?;
    out.metric("samples", tr.len() as f64);
    out.stage(format!("simulate {}: {} samples on [{}, {}]", sys.name, tr.len(), p.t0, tr.last_time()));

    if p.energy {
        let e0 = catalog::hald_energy(&ic);
        let drift = super::sup_abs(tr.states().map(|s| catalog::hald_energy(s) - e0));
        out.metric("energy_drift", drift);
        out.stage(format!("energy drift {drift:.3e}"));
    }

    if p.unforced_reference {
        if cfg.system != "forced-monotone-lorenz" {
            return Err(CliError::Usage("unforced_reference needs system = \"forced-monotone-lorenz\"".into()));
        }
        let lor = catalog::lorenz_default();
        let x0 = [ic[0] - ic[3], ic[1], ic[2]];
        let plain = integrate(&lor, &x0, p.t0, p.t1, &p.integrator)?;
        out.csv("unforced.csv", &plain)?;
        let (xf, xu) = (end_drift(&tr.component(0)), end_drift(&plain.component(0)));
        let (yr, zr) = (range(&tr.component(1)) / range(&plain.component(1)), range(&tr.component(2)) / range(&plain.component(2)));
        out.metric("forced_x_drift", xf);
        out.metric("unforced_x_drift", xu);
        out.metric("y_range_ratio", yr);
        out.metric("z_range_ratio", zr);
        out.stage(format!("x drift forced {xf:.3} vs unforced {xu:.3}; y, z range ratios {yr:.3}, {zr:.3}"));
    }

    if !p.coarse_pair.is_empty() {
        let (a, b) = (p.coarse_pair[0], p.coarse_pair[1]);
        if a.max(b) >= sys.dim() {
            return Err(CliError::Usage("coarse_pair index out of range".into()));
        }
        let mut pts = Vec::with_capacity(tr.len());
        for s in tr.states() {
            let d = sys.eval_field(s)?;
            pts.push([s[a], s[b], d[a], d[b]]);
        }
        let times = tr.times();
        let mut spread: f64 = 0.0;
        let mut close = 0usize;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if times[j] - times[i] < 1.0 {
                    continue;
                }
                let dc = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                if dc < p.coarse_radius {
                    close += 1;
                    let dr = ((pts[i][2] - pts[j][2]).powi(2) + (pts[i][3] - pts[j][3]).powi(2)).sqrt();
                    spread = spread.max(dr);
                }
            }
        }
        out.metric("coarse_close_pairs", close as f64);
        out.metric("coarse_rate_spread", spread);
        out.stage(format!("coarse pair ({a},{b}): {close} near-coincident states, rate spread {spread:.3}"));
    }
    Ok(())
}

/// Mean over the last tenth minus mean over the first tenth.
fn end_drift(v: &[f64]) -> f64 {
    let k = (v.len() / 10).max(1);
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    mean(&v[v.len() - k..]) - mean(&v[..k])
}

fn range(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
}
