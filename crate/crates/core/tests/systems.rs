use coarsekit::catalog::{self, Branch};
use coarsekit::{integrate, jacobian_check, IntegratorConfig};
use proptest::prelude::*;

fn lorenz_state() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorenz_field_commutes_with_the_sign_flip(f in lorenz_state()) {
        let sys = catalog::lorenz_default();
        let h = sys.eval_field(&f).unwrap();
        let hs = sys.eval_field(&[-f[0], -f[1], f[2]]).unwrap();
        prop_assert!((hs[0] + h[0]).abs() < 1e-12 * (1.0 + h[0].abs()));
        prop_assert!((hs[1] + h[1]).abs() < 1e-12 * (1.0 + h[1].abs()));
        prop_assert!((hs[2] - h[2]).abs() < 1e-12 * (1.0 + h[2].abs()));
    }

    #[test]
    fn hald_field_commutes_with_its_sign_maps(f in prop::collection::vec(-2.0..2.0f64, 4)) {
        let sys = catalog::hald();
        let h = sys.eval_field(&f).unwrap();
        for s in coarsekit::coarse::hald_symmetries() {
            let sf: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a * b).collect();
            let hs = sys.eval_field(&sf).unwrap();
            for k in 0..4 {
                prop_assert!((hs[k] - s[k] * h[k]).abs() < 1e-12 * (1.0 + h[k].abs()));
            }
        }
    }

    #[test]
    fn analytic_jacobians_agree_with_central_differences(
        f in prop::collection::vec(-5.0..5.0f64, 4),
        l in 0.0..20.0f64,
    ) {
        let lor = catalog::lorenz_default();
        prop_assert!(jacobian_check(&lor, &f[..3]).unwrap() < 1e-5);
        let forced = catalog::forced_monotone_lorenz(catalog::LORENZ_SIGMA, catalog::LORENZ_BETA, catalog::LORENZ_GAMMA);
        prop_assert!(jacobian_check(&forced, &[f[0], f[1], f[2], l]).unwrap() < 1e-5);
        prop_assert!(jacobian_check(&catalog::hald(), &f).unwrap() < 1e-5);
    }

    #[test]
    fn artstein_jacobian_agrees_with_central_differences(
        y1 in -2.0..2.0f64,
        y2 in -2.0..2.0f64,
        x in -1.8..0.3f64,
    ) {
        let sys = catalog::artstein_split(Branch::Upper);
        prop_assert!(jacobian_check(&sys, &[y1, y2, x]).unwrap() < 1e-5);
    }

    #[test]
    fn trajectories_have_increasing_times_and_full_states(
        f in lorenz_state(),
        every in 1usize..7,
    ) {
        let sys = catalog::lorenz_default();
        let tr = integrate(&sys, &f, 0.0, 0.5, &IntegratorConfig::rk4(1e-3).record_every(every)).unwrap();
        prop_assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(tr.states().all(|s| s.len() == 3));
    }
}

#[test]
fn forced_form_minus_load_is_plain_lorenz() {
    let forced = catalog::forced_monotone_lorenz(catalog::LORENZ_SIGMA, catalog::LORENZ_BETA, catalog::LORENZ_GAMMA);
    let plain = catalog::lorenz_default();
    let cfg = IntegratorConfig::rk4(1e-4).record_every(100);
    let a = integrate(&forced, &[1.0, 1.0, 20.0, 0.0], 0.0, 10.0, &cfg).unwrap();
    let b = integrate(&plain, &[1.0, 1.0, 20.0], 0.0, 10.0, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for (sa, sb) in a.states().zip(b.states()) {
        worst = worst.max((sa[0] - sa[3] - sb[0]).abs());
        worst = worst.max((sa[1] - sb[1]).abs()).max((sa[2] - sb[2]).abs());
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn hald_energy_holds_over_a_hundred_time_units() {
    let sys = catalog::hald();
    let f0 = [0.3, -0.2, 0.5, 0.1];
    let tr = integrate(&sys, &f0, 0.0, 100.0, &IntegratorConfig::rk45(1e-10)).unwrap();
    let e0 = catalog::hald_energy(&f0);
    let drift = tr.states().map(|s| (catalog::hald_energy(s) - e0).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-6, "{drift}");
}

#[test]
fn rk4_error_drops_sixteenfold_when_dt_halves() {
    // Harmonic oscillator, exact solution (cos t, −sin t).
    let sys = catalog::harmonic();
    let err = |dt: f64| {
        let tr = integrate(&sys, &[1.0, 0.0], 0.0, 2.0, &IntegratorConfig::rk4(dt)).unwrap();
        let s = tr.last_state();
        ((s[0] - 2f64.cos()).powi(2) + (s[1] + 2f64.sin()).powi(2)).sqrt()
    };
    let ratio = err(0.02) / err(0.01);
    assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
}
