use coarsekit::averaging::MeasureConfig;
use coarsekit::catalog;
use coarsekit::pta::{pta_step, pta_trajectory, PtaConfig, ReconstructionStrategy, SlowUpdate};
use coarsekit::tikhonov::integrate_dae;
use coarsekit::{DaeConfig, IntegratorConfig, Observable};
use proptest::prelude::*;

fn relaxation_cfg(step: f64, window: f64, reconstruction: ReconstructionStrategy) -> PtaConfig {
    PtaConfig {
        coarse_step: step,
        window,
        m_samples: 200,
        burn_in: 30.0,
        measure: MeasureConfig::default(),
        integrator: IntegratorConfig::rk4(1e-2),
        reconstruction,
        slow_update: SlowUpdate::FrozenFast,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn increment_scales_with_the_coarse_step(
        window in 0.01..0.2f64,
        factor in 2.0..10.0f64,
        y0 in -2.0..2.0f64,
        l0 in -1.0..1.0f64,
    ) {
        let spec = catalog::linear_relaxation(0.05);
        let obs = Observable::component("y", 0);
        let step = factor * window;
        let strategy = ReconstructionStrategy::carry_last_state;
        let a = pta_step(&spec, &obs, &[0.0], &[l0], &[y0], &relaxation_cfg(step, window, strategy())).unwrap();
        let b = pta_step(&spec, &obs, &[0.0], &[l0], &[y0], &relaxation_cfg(step / 2.0, window, strategy())).unwrap();
        prop_assert!((a.increment[0] - 2.0 * b.increment[0]).abs() <= 1e-12 * a.increment[0].abs().max(1e-300));
    }

    #[test]
    fn dae_stays_on_the_constraint(x0 in -1.8..0.2f64, kick in -0.05..0.05f64) {
        let spec = catalog::artstein_dae();
        let y = catalog::Branch::Upper.root(x0).unwrap();
        let cfg = DaeConfig::default();
        let run = integrate_dae(&spec, &[y + kick, 0.0], &[x0], 0.5, &cfg).unwrap();
        prop_assert!(run.max_constraint_residual <= 10.0 * cfg.newton_tol, "{}", run.max_constraint_residual);
    }
}

// The fast flow relaxes to one point whatever its start, so the increments
// cannot depend on how the next fast state is built.
#[test]
fn increments_do_not_depend_on_reconstruction_when_the_measure_is_unique() {
    let spec = catalog::linear_relaxation(0.05);
    let obs = Observable::component("y", 0);
    let variants = [
        ReconstructionStrategy::carry_last_state(),
        ReconstructionStrategy::shift_first_component(1e-12),
        ReconstructionStrategy::custom(f64::INFINITY, |f, _, _| vec![f[0] + 0.5]),
        ReconstructionStrategy::custom(f64::INFINITY, |f, _, _| vec![f[0] - 3.0]),
        ReconstructionStrategy::custom(f64::INFINITY, |f, _, _| vec![2.0 * f[0]]),
    ];
    let finals: Vec<f64> = variants
        .into_iter()
        .map(|r| {
            let run = pta_trajectory(&spec, &obs, &[0.9], &[1.0], &[0.9], 0.0, 4, &relaxation_cfg(0.2, 0.05, r)).unwrap();
            run.trajectory.last_state()[0]
        })
        .collect();
    let spread = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - finals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-2, "{finals:?}");
}
