use coarsekit::integrate_observed;

use super::{default_ic, named_observable, system, Sampler};
use crate::config::{AverageParams, ExperimentConfig};
use crate::error::CliError;
use crate::output::{key, RunOutput};

/// Window averages `ā(t) = (1/τ)∫_t^{t+τ} a` for every observable, window and
/// initial state.
pub(super) fn run(cfg: &ExperimentConfig, p: &AverageParams, out: &mut RunOutput) -> Result<(), CliError> {
    let sys = system(&cfg.system, p.epsilon)?;
    let obs = named_observable(&sys, &p.observables)?;
    let ics = if p.ics.is_empty() { vec![default_ic(&cfg.system)?] } else { p.ics.clone() };
    let tau_max = p.taus.iter().cloned().fold(0.0, f64::max);
    let n_out = (p.t1 / p.output_every + 1e-9).floor() as usize + 1;
    let starts: Vec<f64> = (0..n_out).map(|k| p.burn_in + k as f64 * p.output_every).collect();
    let t_end = p.burn_in + p.t1 + tau_max;
    let stride = ((p.output_every / p.integrator.dt).round() as usize).max(1);
    let m = p.observables.len();

    // bars[ic][tau][obs][k]
    let mut bars = Vec::with_capacity(ics.len());
    for (i, ic) in ics.iter().enumerate() {
        let mut s = Sampler::new(obs.clone(), stride, true);
        integrate_observed(&sys, ic, 0.0, t_end, &p.integrator, &mut s)?;
        s.rec.finish();
        let mut per_tau = Vec::with_capacity(p.taus.len());
        for &tau in &p.taus {
            let mut cols = vec![Vec::with_capacity(n_out); m];
            for &t in &starts {
                let a = s.rec.average(t, t + tau)?;
                for (c, v) in cols.iter_mut().zip(a) {
                    c.push(v);
                }
            }
            per_tau.push(cols);
        }
        let mut header = vec!["t".to_string()];
        let mut cols: Vec<Vec<f64>> = vec![starts.clone()];
        for (o, name) in p.observables.iter().enumerate() {
            header.push(name.clone());
            cols.push(starts.iter().map(|&t| obs.eval(s.state_near(t))[o]).collect());
            for (ti, &tau) in p.taus.iter().enumerate() {
                header.push(format!("{name}_bar_tau{}", key(tau)));
                cols.push(per_tau[ti][o].clone());
            }
        }
        let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let c: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
        out.table(&format!("average_ic{i}.csv"), &h, &c)?;
        bars.push(per_tau);
    }

    for (ti, &tau) in p.taus.iter().enumerate() {
        let tk = key(tau);
        for (o, name) in p.observables.iter().enumerate() {
            let mut max_rate: f64 = 0.0;
            let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
            for b in &bars {
                let v = &b[ti][o];
                for w in v.windows(2) {
                    max_rate = max_rate.max((w[1] - w[0]).abs() / p.output_every);
                }
                for &x in v {
                    lo = lo.min(x);
                    hi = hi.max(x);
                    sum += x;
                    n += 1;
                }
            }
            out.metric(format!("{name}_bar_tau{tk}_max_rate"), max_rate);
            out.metric(format!("{name}_bar_tau{tk}_mean"), sum / n as f64);
            out.metric(format!("{name}_bar_tau{tk}_range"), hi - lo);
            if bars.len() > 1 {
                let spread = (0..n_out)
                    .map(|k| {
                        let vals = bars.iter().map(|b| b[ti][o][k]);
                        vals.clone().fold(f64::NEG_INFINITY, f64::max) - vals.fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max);
                out.metric(format!("{name}_bar_tau{tk}_ic_spread"), spread);
            }
            let rise = bars.iter().map(|b| b[ti][o][n_out - 1] - b[ti][o][0]).fold(f64::INFINITY, f64::min);
            out.metric(format!("{name}_bar_tau{tk}_min_rise"), rise);
            out.stage(format!("{name} τ={tk}: mean {:.4}, range {:.4}, max rate {max_rate:.4}", sum / n as f64, hi - lo));
        }
        for [a, b] in &p.track {
            let ia = p.observables.iter().position(|x| x == a).expect("validated");
            let ib = p.observables.iter().position(|x| x == b).expect("validated");
            let gap = bars
                .iter()
                .flat_map(|bb| bb[ti][ia].iter().zip(&bb[ti][ib]).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max);
            out.metric(format!("track_{a}_{b}_tau{tk}"), gap);
            out.stage(format!("sup |{a}̄ − {b}̄| at τ={tk}: {gap:.4}"));
        }
        if !p.point.is_empty() {
            let idx: Vec<usize> = p.point.iter().map(|n| p.observables.iter().position(|x| x == n).expect("validated")).collect();
            let mut worst: f64 = 0.0;
            for bb in &bars {
                let mean: Vec<f64> = idx.iter().map(|&o| bb[ti][o].iter().sum::<f64>() / n_out as f64).collect();
                let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
                for k in 0..n_out {
                    let d = idx.iter().zip(&mean).map(|(&o, mu)| (bb[ti][o][k] - mu).powi(2)).sum::<f64>().sqrt();
                    worst = worst.max(d / norm);
                }
            }
            out.metric(format!("point_spread_tau{tk}"), worst);
            out.stage(format!("point ({}) at τ={tk}: largest excursion {:.2}% of its mean", p.point.join(","), 100.0 * worst));
        }
    }
    Ok(())
}
