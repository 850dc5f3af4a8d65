use coarsekit::averaging::running_average_series;
use coarsekit::catalog;
use coarsekit::plim::{coarse_evolve, invariance_residual, seed_from_fine, seed_from_states, solve_invariance, CoarseGrid, PlimProblem, SeedConfig};
use coarsekit::{integrate, IntegratorConfig, Observable};

use crate::config::{ExperimentConfig, GridParams, PlimParams};
use crate::error::CliError;
use crate::output::{key, RunOutput};

pub(super) fn run(cfg: &ExperimentConfig, p: &PlimParams, out: &mut RunOutput) -> Result<(), CliError> {
    if cfg.system == "linear-relaxation" {
        linear(p, out)
    } else {
        forced_lorenz(cfg, p, out)
    }
}

/// Slow manifold of `ε dy/ds = −(y − L)`, seeded from a fine run that starts
/// off the manifold upstream of the grid.
fn linear(p: &PlimParams, out: &mut RunOutput) -> Result<(), CliError> {
    let eps = p.epsilon;
    let sys = catalog::linear_relaxation(eps).fast_time_system()?;
    let problem = PlimProblem::new(sys.clone(), vec![1], vec![0])?;
    let (lo, hi, shape) = if p.grid.shape.is_empty() {
        (vec![0.0], vec![2.0], vec![41])
    } else {
        (p.grid.lo.clone(), p.grid.hi.clone(), p.grid.shape.clone())
    };
    let grid = CoarseGrid::new(lo.clone(), hi.clone(), shape)?;
    let span = hi[0] - lo[0];
    let fine = integrate(&sys, &[lo[0] + 1.0, lo[0] - 1.0], 0.0, (span + 1.5) / eps, &IntegratorConfig::rk4(p.fine_dt).record_every(10))?;
    let states: Vec<Vec<f64>> = fine.states().map(|s| s.to_vec()).collect();
    let seeded = seed_from_states(&problem, &grid, &states)?;
    let solved = solve_invariance(&problem, &seeded, &p.solver)?;
    let err = (0..grid.len()).map(|i| (solved.fields[0][i] - (grid.node(i)[0] - eps)).abs()).fold(0.0, f64::max);
    solved.save(&out.dir.join("manifold.plim"))?;
    out.files.push("manifold.plim".into());
    out.metric("residual", solved.residual_inf);
    out.flag("converged", solved.converged);
    out.metric("iterations", solved.iterations as f64);
    out.metric("max_graph_error", err);
    out.metric("graph_error_bound", 10.0 * eps * eps);
    out.stage(format!(
        "plim linear relaxation ε={eps}: residual {:.3e} after {} iterations, max |G − (L − ε)| = {err:.3e}",
        solved.residual_inf, solved.iterations
    ));
    Ok(())
}

fn forced_lorenz(cfg: &ExperimentConfig, p: &PlimParams, out: &mut RunOutput) -> Result<(), CliError> {
    let sys = catalog::forced_monotone_lorenz(catalog::LORENZ_SIGMA, catalog::LORENZ_BETA, catalog::LORENZ_GAMMA);
    let obs = Observable::component("x", 0);
    let problem = PlimProblem::augmented(&sys, &obs, p.tau)?;
    let g = if p.grid.shape.is_empty() { GridParams { lo: vec![-6.0, 0.0], hi: vec![22.0, 10.0], shape: vec![40, 40] } } else { p.grid.clone() };
    let grid = CoarseGrid::new(g.lo, g.hi, g.shape)?;
    let s = &p.seeding;
    let mut extra = Vec::new();
    for &l0 in &s.equilibrium_loads {
        for &d in &s.equilibrium_offsets {
            for sgn in [1.0, -1.0] {
                extra.push(vec![sgn * 8.0 + l0 + d, sgn * 8.0, 24.0, l0]);
            }
        }
    }
    let scfg = SeedConfig {
        n_bursts: s.n_bursts,
        burst_length: s.burst_length,
        ic_lo: s.ic_lo.clone(),
        ic_hi: s.ic_hi.clone(),
        seed: cfg.seed,
        integrator: s.integrator.clone(),
        stride: s.stride,
        extra_ics: extra,
    };
    let seeded = seed_from_fine(&problem, &sys, &obs, &grid, &scfg)?;
    let visited = seeded.visit_counts.as_ref().map_or(0, |v| v.iter().filter(|&&c| c > 0).count());
    let r0 = invariance_residual(&problem, &seeded)?;
    out.metric("visited_fraction", visited as f64 / grid.len() as f64);
    out.metric("initial_residual", r0);
    out.stage(format!("plim seeding: {visited}/{} nodes visited, residual {r0:.3e}", grid.len()));

    let solved = solve_invariance(&problem, &seeded, &p.solver)?;
    solved.save(&out.dir.join("manifold.plim"))?;
    out.files.push("manifold.plim".into());
    out.metric("residual", solved.residual_inf);
    out.flag("converged", solved.converged);
    out.metric("iterations", solved.iterations as f64);
    out.stage(format!("plim relaxation: residual {:.3e} after {} iterations (converged: {})", solved.residual_inf, solved.iterations, solved.converged));

    // Fine reference: mean x̄ of an ensemble started on the attractor at L = 0.
    let lor = catalog::lorenz_default();
    let fine = IntegratorConfig::rk4(p.fine_dt);
    let base = integrate(&lor, &[1.0, 1.0, 20.0], 0.0, 20.0, &fine)?.last_state().to_vec();
    let members: Vec<_> = (0..p.reference_members)
        .map(|k| -> Result<_, CliError> {
            let s = integrate(&lor, &base, 0.0, 0.37 * k as f64 + 0.01, &fine)?.last_state().to_vec();
            let tr = integrate(&sys, &[s[0], s[1], s[2], 0.0], 0.0, p.horizon + p.tau, &fine.clone().record_every(10))?;
            Ok(running_average_series(&tr, &obs, p.tau)?)
        })
        .collect::<Result<_, _>>()?;
    let n_t = p.horizon.floor() as usize;
    let ts: Vec<f64> = (0..=n_t).map(|i| i as f64).collect();
    let mean: Vec<f64> = ts.iter().map(|&t| members.iter().map(|r| r.sample(t)[0]).sum::<f64>() / members.len() as f64).collect();
    out.table("fine_reference.csv", &["t", "x_bar"], &[&ts, &mean])?;

    for &cdt in &p.coarse_dts {
        let ratio = (cdt / p.fine_dt).round();
        let run = coarse_evolve(&problem, &solved, &[mean[0], 0.0], p.horizon, cdt)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &t) in ts.iter().enumerate() {
            if t > run.trajectory.last_time() + 1e-9 {
                break;
            }
            let c = run.trajectory.sample(t)[0];
            num += (c - mean[i]).powi(2);
            den += mean[i].powi(2);
        }
        let rel = if run.exited { f64::INFINITY } else { (num / den).sqrt() };
        let rk = key(ratio);
        out.csv(&format!("coarse_ratio{rk}.csv"), &run.trajectory)?;
        out.metric(format!("rel_l2_ratio{rk}"), rel);
        out.flag(format!("exited_ratio{rk}"), run.exited);
        out.stage(format!("coarse step {cdt} (ratio {rk}): relative L2 deviation from fine x̄ {rel:.4}{}", if run.exited { " (left the grid)" } else { "" }));
    }
    Ok(())
}
