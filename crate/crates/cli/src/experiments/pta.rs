use std::f64::consts::PI;

use coarsekit::averaging::{empirical_measure_average, running_average_series, CumulativeRecorder, MeasureConfig};
use coarsekit::catalog::{self, Branch};
use coarsekit::pta::{
    alternative_trajectory, nonorthogonal_evolution, oscillation_amplitude, pta_trajectory, AlternativeConfig, FreezeAt, PtaConfig,
    ReconstructionStrategy, SlowUpdate,
};
use coarsekit::{integrate, integrate_observed, Epsilon, IntegratorConfig, Observable};

use crate::config::{AlternativePtaParams, ExperimentConfig, Freeze, InstantaneousParams, ProjectivePtaParams, PtaParams};
use crate::error::CliError;
use crate::output::RunOutput;

pub(super) fn run(_cfg: &ExperimentConfig, p: &PtaParams, out: &mut RunOutput) -> Result<(), CliError> {
    match p {
        PtaParams::Alternative(a) => alternative(a, out),
        PtaParams::Projective(a) => projective(a, out),
        PtaParams::Instantaneous(a) => instantaneous(a, out),
    }
}

fn x_and_square() -> Observable {
    Observable::new("x,x^2", 2, |u, o| {
        o[0] = u[0];
        o[1] = u[0] * u[0];
    })
}

/// Per-step averages with the load frozen, against window averages of one fine
/// run over a full load period.
fn alternative(p: &AlternativePtaParams, out: &mut RunOutput) -> Result<(), CliError> {
    let (omega, tau, amp) = (p.omega, p.tau, p.amplitude);
    let obs = x_and_square();
    let integ = IntegratorConfig::rk4(p.dt);
    let period = 2.0 * PI / omega;
    let mut rec = CumulativeRecorder::new(obs.clone(), 100);
    let fine0 = [p.fine_ic.as_slice(), &[0.0, amp]].concat();
    integrate_observed(&catalog::oscillatory_forced_lorenz(omega), &fine0, 0.0, period + tau, &integ, &mut rec)?;
    rec.finish();

    let spec = catalog::oscillatory_forced_lorenz_slow_fast(Epsilon::Value(omega));
    let s_grid: Vec<f64> = (0..=p.n_steps).map(|i| 2.0 * PI * i as f64 / p.n_steps as f64).collect();
    let acfg = AlternativeConfig {
        tau,
        burn_in: p.burn_in,
        lambda: omega * tau,
        freeze_at: match p.freeze_at {
            Freeze::Start => FreezeAt::Start,
            Freeze::Midpoint => FreezeAt::Midpoint,
        },
        integrator: integ,
        measure: MeasureConfig::default(),
    };
    let alt = alternative_trajectory(&spec, &obs, &[0.0, amp], &p.start_ic, &s_grid, &acfg)?;
    out.csv("alternative.csv", &alt)?;

    let mut fine = [Vec::new(), Vec::new()];
    let (mut d, mut m) = ([0.0f64; 2], [0.0f64; 2]);
    for (i, &s) in s_grid.iter().enumerate() {
        let a = rec.average(s / omega, s / omega + tau)?;
        let q = alt.state(i);
        for k in 0..2 {
            d[k] = d[k].max((q[k] - a[k]).abs());
            m[k] = m[k].max(a[k].abs());
            fine[k].push(a[k]);
        }
    }
    out.table("fine_average.csv", &["s", "x_bar", "x2_bar"], &[&s_grid, &fine[0], &fine[1]])?;
    out.metric("rel_sup_x", d[0] / m[0]);
    out.metric("rel_sup_x2", d[1] / m[1]);
    out.stage(format!("alternative PTA vs fine: x̄ {:.2}%, x̄² {:.2}% of the fine sup", 100.0 * d[0] / m[0], 100.0 * d[1] / m[1]));
    Ok(())
}

/// Projective steps of the window mean of `y1` on the upper Artstein branch,
/// compared with the branch graph at the coarse slow state.
fn projective(p: &ProjectivePtaParams, out: &mut RunOutput) -> Result<(), CliError> {
    let spec = catalog::artstein_slow_fast(Branch::Upper, p.epsilon);
    let obs = Observable::component("y1", 0);
    let f0 = vec![Branch::Upper.root(p.x0)? + p.kick, 0.0];
    let cfg = PtaConfig {
        coarse_step: p.coarse_step,
        window: p.window,
        m_samples: p.m_samples,
        burn_in: p.burn_in,
        measure: MeasureConfig::default(),
        integrator: IntegratorConfig::rk4(p.dt),
        reconstruction: ReconstructionStrategy::carry_last_state(),
        slow_update: SlowUpdate::MeasureAveraged,
    };
    let start = empirical_measure_average(&spec.base, &[p.x0], &f0, p.m_samples, p.burn_in, &cfg.integrator, &obs, &cfg.measure)?;
    let run = pta_trajectory(&spec, &obs, &start.mean, &[p.x0], &start.final_state, 0.0, p.n_steps, &cfg)?;
    out.csv("pta.csv", &run.trajectory)?;
    out.json("pta_sidecar.json", &run.sidecar)?;

    let mut gap: f64 = 0.0;
    let mut compared = 0usize;
    for st in run.trajectory.states() {
        if let Ok(z) = Branch::Upper.root(st[1]) {
            gap = gap.max((st[0] - z).abs());
            compared += 1;
        }
    }
    let x_end = run.trajectory.last_state()[1];
    out.metric("graph_gap", gap);
    out.metric("compared_steps", compared as f64);
    out.metric("x_final", x_end);
    out.stage(format!("projective PTA: {} steps to x = {x_end:.4}, sup |c − z(x)| {gap:.4}", p.n_steps));
    Ok(())
}

/// The instantaneous value of `x` carried on the slow time scale, against its
/// running average over `λ = κ`.
fn instantaneous(p: &InstantaneousParams, out: &mut RunOutput) -> Result<(), CliError> {
    let spec = catalog::oscillatory_forced_lorenz_slow_fast(Epsilon::Value(p.omega));
    let a = Observable::component("x", 0);
    let sys = nonorthogonal_evolution(&spec, &a, None)?;
    let ds = p.omega * p.dt;
    let cfg = IntegratorConfig::rk4(ds).record_every(p.record_every);
    let x0 = [p.ic.as_slice(), &[0.0, p.amplitude, p.ic[0]]].concat();
    let tr = integrate(&sys, &x0, 0.0, 2.0 * PI, &cfg)?;
    let bar = running_average_series(&tr, &a, p.kappa)?;
    let av = bar.component(0);
    let inst: Vec<f64> = tr.component(sys.dim() - 1)[..av.len()].to_vec();
    let width = (p.kappa / (ds * p.record_every as f64)).round() as usize;
    let (ai, ab) = (oscillation_amplitude(&inst, width), oscillation_amplitude(&av, width));
    let s: Vec<f64> = bar.times().to_vec();
    out.table("instantaneous.csv", &["s", "x_inst", "x_bar"], &[&s, &inst, &av])?;
    out.metric("amplitude_instantaneous", ai);
    out.metric("amplitude_average", ab);
    out.metric("amplitude_ratio", ai / ab);
    out.stage(format!("oscillation amplitude: instantaneous {ai:.3}, averaged {ab:.4}, ratio {:.1}", ai / ab));
    Ok(())
}
