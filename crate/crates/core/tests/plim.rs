use coarsekit::catalog;
use coarsekit::plim::{coarse_evolve, seed_from_fine, solve_invariance, CoarseGrid, PlimConfig, PlimProblem, SeedConfig};
use coarsekit::{IntegratorConfig, Observable};

#[test]
fn nearby_coarse_starts_stay_close_on_the_forced_lorenz_family() {
    let sys = catalog::forced_monotone_lorenz(catalog::LORENZ_SIGMA, catalog::LORENZ_BETA, catalog::LORENZ_GAMMA);
    let obs = Observable::component("x", 0);
    let problem = PlimProblem::augmented(&sys, &obs, 50.0).unwrap();
    let grid = CoarseGrid::new(vec![-6.0, 0.0], vec![22.0, 10.0], vec![40, 40]).unwrap();
    let mut extra = Vec::new();
    for l0 in [0.0, 2.0, 4.0, 6.0, 8.0] {
        for d in [0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0] {
            for s in [1.0, -1.0] {
                extra.push(vec![s * 8.0 + l0 + d, s * 8.0, 24.0, l0]);
            }
        }
    }
    let scfg = SeedConfig {
        n_bursts: 24,
        burst_length: 110.0,
        ic_lo: vec![-20.0, -25.0, 0.0, 0.0],
        ic_hi: vec![20.0, 25.0, 50.0, 0.0],
        seed: 7,
        integrator: IntegratorConfig::rk4(1e-3),
        stride: 10,
        extra_ics: extra,
    };
    let seeded = seed_from_fine(&problem, &sys, &obs, &grid, &scfg).unwrap();
    let cfg = PlimConfig { pseudo_dt: 5e-3, max_iters: 20_000, tol: 1e-6, ..PlimConfig::default() };
    let fam = solve_invariance(&problem, &seeded, &cfg).unwrap();

    let a = coarse_evolve(&problem, &fam, &[0.5, 0.0], 50.0, 0.01).unwrap();
    let b = coarse_evolve(&problem, &fam, &[0.5 + 9e-4, 0.0], 50.0, 0.01).unwrap();
    let end = a.trajectory.last_time().min(b.trajectory.last_time());
    assert!(end > 10.0, "runs left the grid at {end}");
    let mut worst: f64 = 0.0;
    let mut t = 0.0;
    while t <= end {
        let (ca, cb) = (a.trajectory.sample(t), b.trajectory.sample(t));
        worst = worst.max((ca[0] - cb[0]).abs()).max((ca[1] - cb[1]).abs());
        t += 0.5;
    }
    assert!(worst < 1e-2, "largest coarse gap {worst} up to t = {end}");
}
