use std::f64::consts::PI;

use coarsekit::averaging::CumulativeRecorder;
use coarsekit::catalog::{self, Branch};
use coarsekit::tikhonov::{integrate_dae, DaeConfig, Termination};
use coarsekit::{integrate_observed, Epsilon, IntegratorConfig, Observable};

use crate::config::{ArtsteinDaeParams, DaeParams, ExperimentConfig, OscillatoryDaeParams};
use crate::error::CliError;
use crate::output::RunOutput;

pub(super) fn run(_cfg: &ExperimentConfig, p: &DaeParams, out: &mut RunOutput) -> Result<(), CliError> {
    match p {
        DaeParams::Artstein(a) => artstein(a, out),
        DaeParams::OscillatoryLorenz(o) => oscillatory(o, out),
    }
}

fn artstein(p: &ArtsteinDaeParams, out: &mut RunOutput) -> Result<(), CliError> {
    let dae = catalog::artstein_dae();
    let run = integrate_dae(&dae, &p.y_hat0, &[p.x0], p.s1, &p.dae)?;
    let x_end = run.trajectory.last_state()[2];
    let reached = run.sidecar.reason == Termination::Fold;
    out.csv("dae.csv", &run.trajectory)?;
    out.json("dae_sidecar.json", &run.sidecar)?;
    out.flag("reached_fold", reached);
    out.metric("s_final", run.sidecar.s_final);
    out.metric("fold_gap", (x_end - catalog::fold_x()).abs());
    out.metric("max_constraint_residual", run.max_constraint_residual);
    out.stage(format!(
        "artstein DAE: {:?} at s = {:.4}, x = {x_end:.5} (fold {:.5}), max |H| {:.2e}",
        run.sidecar.reason,
        run.sidecar.s_final,
        catalog::fold_x(),
        run.max_constraint_residual
    ));
    if p.fine_epsilon <= 0.0 {
        return Ok(());
    }

    // Fine run on the upper branch until x passes the comparison range; window
    // means of y1 against window means of the graph z(x) over the same window.
    let sys = catalog::artstein_slow_fast(Branch::Upper, p.fine_epsilon).fast_time_system()?;
    let obs = Observable::new("y1,x,graph", 3, |u, o| {
        o[0] = u[0];
        o[1] = u[2];
        o[2] = Branch::Upper.root(u[2]).unwrap_or(f64::NAN);
    });
    let mut rec = CumulativeRecorder::new(obs, 100);
    let cfg = IntegratorConfig::rk4(p.fine_dt);
    let mut state = vec![Branch::Upper.root(p.x0)? + p.fine_kick, 0.0, p.x0];
    let chunk = 100.0;
    let t_cap = 100.0 * (catalog::fold_x() - p.x0) / p.fine_epsilon;
    let mut t = 0.0;
    while state[2] < p.compare_hi + 0.1 && state[2] < catalog::fold_x() && t < t_cap {
        state = integrate_observed(&sys, &state, t, t + chunk, &cfg, &mut rec)?;
        t += chunk;
    }
    rec.finish();
    let (mut ts, mut xs, mut ys, mut gs) = (vec![], vec![], vec![], vec![]);
    let mut worst: f64 = 0.0;
    let mut k = 0.0;
    while k + p.fine_tau <= t {
        let a = rec.average(k, k + p.fine_tau)?;
        if (p.compare_lo..=p.compare_hi).contains(&a[1]) {
            worst = worst.max((a[0] - a[2]).abs());
        }
        ts.push(k);
        ys.push(a[0]);
        xs.push(a[1]);
        gs.push(a[2]);
        k += p.window_spacing;
    }
    out.table("fine_average.csv", &["t", "x_bar", "y1_bar", "graph_bar"], &[&ts, &xs, &ys, &gs])?;
    out.metric("fine_gap", worst);
    out.stage(format!(
        "fine ε={}: sup |ȳ1 − mean z(x)| over windows with x̄ in [{}, {}] is {worst:.4}",
        p.fine_epsilon, p.compare_lo, p.compare_hi
    ));
    Ok(())
}

fn oscillatory(p: &OscillatoryDaeParams, out: &mut RunOutput) -> Result<(), CliError> {
    let (omega, tau, amp) = (p.omega, p.tau, p.amplitude);
    let sys = catalog::oscillatory_forced_lorenz(omega);
    let period = 2.0 * PI / omega;
    let mut rec = CumulativeRecorder::new(Observable::components("xyzL", vec![0, 1, 2, 3]), 100);
    let s0 = [p.fine_ic.as_slice(), &[0.0, amp]].concat();
    integrate_observed(&sys, &s0, 0.0, period + tau, &IntegratorConfig::rk4(p.fine_dt), &mut rec)?;
    rec.finish();

    let n = p.n_windows;
    let mut rows = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = period * i as f64 / n as f64;
        rows.push((t, rec.average(t, t + tau)?));
    }
    let col = |j: usize| rows.iter().map(|r| r.1[j]).collect::<Vec<f64>>();
    let (xb, yb, zb, lb) = (col(0), col(1), col(2), col(3));
    let ts: Vec<f64> = rows.iter().map(|r| r.0).collect();
    out.table("averages.csv", &["t", "x_bar", "y_bar", "z_bar", "L_bar"], &[&ts, &xb, &yb, &zb, &lb])?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let range = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    let track = super::sup_abs(xb.iter().zip(&lb).map(|(x, l)| x - l));
    let (ym, zm) = (mean(&yb), mean(&zb));
    let norm = (ym * ym + zm * zm).sqrt();
    let spread = yb.iter().zip(&zb).map(|(y, z)| ((y - ym).powi(2) + (z - zm).powi(2)).sqrt()).fold(0.0, f64::max) / norm;
    out.metric("track_x_load", track);
    out.metric("point_spread", spread);
    out.metric("y_mean", ym);
    out.metric("z_mean", zm);
    out.metric("z_range_rel", range(&zb) / zm.abs());
    out.stage(format!("sup |x̄ − L̄| {track:.4}; (ȳ, z̄) mean ({ym:.3}, {zm:.3}), largest excursion {:.2}%", 100.0 * spread));

    // DAE started from the first window's averages at that window's midpoint.
    let spec = catalog::oscillatory_forced_lorenz_slow_fast(Epsilon::Limit);
    let smid = omega * 0.5 * tau;
    let from_avg = DaeConfig { project: false, ..p.dae.clone() };
    let run = integrate_dae(&spec, &rows[0].1[..3], &[amp * smid.sin(), amp * smid.cos()], smid + 2.0 * PI, &from_avg)?;
    let gap = rows
        .iter()
        .map(|(t, a)| (run.trajectory.sample(omega * (t + 0.5 * tau) - smid)[0] - a[0]).abs())
        .fold(0.0, f64::max);
    out.csv("dae_from_averages.csv", &run.trajectory)?;
    out.metric("from_averages_gap", gap);
    out.stage(format!("DAE from window averages: sup |x̂ − x̄| {gap:.4}"));

    let mut min_mis = f64::INFINITY;
    for (k, ep) in p.equilibria.iter().enumerate() {
        let run = integrate_dae(&spec, ep, &[0.0, amp], 2.0 * PI, &p.dae)?;
        let mut w: f64 = 0.0;
        for (t, a) in &rows {
            let s = omega * (t + 0.5 * tau);
            if s > run.sidecar.s_final {
                continue;
            }
            let st = run.trajectory.sample(s);
            for j in 0..3 {
                w = w.max((st[j] - a[j]).abs());
            }
        }
        min_mis = min_mis.min(w);
        out.csv(&format!("dae_ep{k}.csv"), &run.trajectory)?;
        out.metric(format!("ep{k}_mismatch"), w);
        out.stage(format!("DAE from equilibrium {ep:?}: {:?} at s = {:.3}, sup mismatch {w:.3}", run.sidecar.reason, run.sidecar.s_final));
    }
    if !p.equilibria.is_empty() {
        out.metric("min_ep_mismatch", min_mis);
    }
    Ok(())
}
