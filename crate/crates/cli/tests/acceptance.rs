//! One PASS/FAIL line per acceptance criterion. Known misses are listed in
//! `KNOWN_FAILURES` and do not fail the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use coarsekit::averaging::{augmented_initial_state, build_augmented, running_average};
use coarsekit::catalog;
use coarsekit::coarse::{assemble, svd_solve, PhaseMesh};
use coarsekit::equilibria::find_equilibria;
use coarsekit::{integrate, IntegratorConfig, Observable, SystemSpec};
use coarsekit_cli::{preset, run, ExperimentConfig, Metrics};

/// Criteria that fail with the shipped defaults; see the README.
const KNOWN_FAILURES: &[&str] = &["8d"];

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

struct Runs {
    root: PathBuf,
    cache: BTreeMap<&'static str, Metrics>,
}

impl Runs {
    /// Metrics of a preset's configuration, run once into `<root>/<id>`.
    fn metrics(&mut self, id: &'static str) -> Metrics {
        if let Some(m) = self.cache.get(id) {
            return m.clone();
        }
        let mut cfg = preset(id).expect("known preset").config;
        cfg.output_dir = self.root.join(id);
        let out = run(&cfg, true).unwrap_or_else(|e| panic!("{id}: {e}"));
        self.cache.insert(id, out.metrics.clone());
        out.metrics
    }

    /// Evaluate every check of `id` on the metrics of `from`.
    fn checks(&mut self, id: &'static str, from: &'static str) -> (bool, Vec<String>) {
        let m = self.metrics(from);
        let mut ok = true;
        let mut notes = Vec::new();
        for e in preset(id).unwrap().expects {
            let (v, pass) = e.check(&m);
            ok &= pass;
            notes.push(format!("{e} [{v:.4e}]"));
        }
        (ok, notes)
    }
}

fn get(m: &Metrics, k: &str) -> f64 {
    *m.get(k).unwrap_or_else(|| panic!("missing metric {k}"))
}

fn timed(budget: Duration, f: impl FnOnce() -> (bool, String)) -> (bool, String) {
    let t = Instant::now();
    let (pass, detail) = f();
    let el = t.elapsed();
    let in_time = el <= budget;
    (pass && in_time, format!("{detail}; {:.1}s of {}s{}", el.as_secs_f64(), budget.as_secs(), if in_time { "" } else { " (over budget)" }))
}

fn equilibria() -> (bool, String) {
    let sys = catalog::lorenz_default();
    let seeds = vec![vec![7.0, 7.5, 23.0], vec![-7.5, -7.0, 25.0], vec![0.3, -0.2, 0.4]];
    let found = find_equilibria(&sys, &[], &seeds).unwrap().found;
    let want = [[-8.0, -8.0, 24.0], [0.0, 0.0, 0.0], [8.0, 8.0, 24.0]];
    let err = if found.len() == 3 {
        found.iter().zip(&want).flat_map(|(f, w)| f.iter().zip(w).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    (err <= 1e-10, format!("{} equilibria, max error {err:.2e}", found.len()))
}

fn conservation() -> (bool, String) {
    let f0 = [0.3, -0.2, 0.5, 0.1];
    let tr = integrate(&catalog::hald(), &f0, 0.0, 100.0, &IntegratorConfig::rk45(1e-10)).unwrap();
    let e0 = catalog::hald_energy(&f0);
    let drift = tr.states().map(|s| (catalog::hald_energy(s) - e0).abs()).fold(0.0, f64::max);
    (drift < 1e-6, format!("energy drift {drift:.2e}"))
}

fn augmented() -> (bool, String) {
    let sys = catalog::forced_monotone_lorenz(catalog::LORENZ_SIGMA, catalog::LORENZ_BETA, catalog::LORENZ_GAMMA);
    let obs = Observable::component("x", 0);
    let tau = 50.0;
    let cfg = IntegratorConfig::rk4(1e-3).record_every(10);
    let f0 = [1.0, 1.0, 20.0, 0.0];
    let aug = build_augmented(&sys, &obs, tau).unwrap();
    let u0 = augmented_initial_state(&sys, &obs, tau, &f0, &IntegratorConfig::rk4(1e-3)).unwrap();
    let a = integrate(&aug, &u0, 0.0, 20.0, &cfg).unwrap();
    let direct = integrate(&sys, &f0, 0.0, 20.0 + tau, &IntegratorConfig::rk4(1e-3)).unwrap();
    let mut worst: f64 = 0.0;
    for (t, u) in a.times().iter().zip(a.states()) {
        let want = running_average(&direct, &obs, tau, *t).unwrap()[0];
        worst = worst.max((u[u.len() - 1] - want).abs());
    }
    (worst <= 1e-5, format!("max |c − quadrature| {worst:.2e} over [0, 20]"))
}

fn one_dimensional_analog() -> (bool, f64) {
    // dΠ/df = 1 + Π with Π(0) = 0 has Π = e^f − 1.
    let sys = SystemSpec::new("unit-drift", 1, 0, |_, d: &mut [f64]| {
        d[0] = 1.0;
        Ok(())
    });
    let mesh = PhaseMesh::new(vec![0.0], vec![1.0], vec![64]).unwrap();
    let ls = assemble(&mesh, &sys, 1.0, 1.0).unwrap().pin(0, 0.0).unwrap();
    let sol = svd_solve(&ls, 1e-12).unwrap();
    let worst = (1..64)
        .map(|i| {
            let exact = mesh.node(i)[0].exp() - 1.0;
            (sol.x_part[i] - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    (worst <= 0.01, worst)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .filter(|(n, _)| n != "config.toml")
        .collect();
    v.sort();
    v
}

fn determinism(runs: &mut Runs, ids: &[&'static str]) -> (bool, String) {
    let mut bad = Vec::new();
    for &id in ids {
        runs.metrics(id);
        let mut cfg: ExperimentConfig = preset(id).unwrap().config;
        cfg.output_dir = runs.root.join(format!("{id}-again"));
        run(&cfg, true).unwrap();
        if dir_bytes(&runs.root.join(id)) != dir_bytes(&cfg.output_dir) {
            bad.push(id);
        }
    }
    (bad.is_empty(), if bad.is_empty() { format!("{} presets byte-identical", ids.len()) } else { format!("differ: {}", bad.join(", ")) })
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Runs { root: tmp.path().to_path_buf(), cache: BTreeMap::new() };
    let secs = Duration::from_secs;
    let mut lines = Vec::new();
    let mut push = |id: &'static str, (pass, detail): (bool, String)| {
        println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        lines.push(Line { id, pass, detail });
    };

    push("1", timed(secs(1), equilibria));
    push("2", timed(secs(5), conservation));
    push("3", timed(secs(10), augmented));
    push(
        "4",
        timed(secs(300), || {
            let (a, na) = runs.checks("plim-linear", "plim-linear");
            let (b, nb) = runs.checks("fig3", "fig3");
            (a && b, [na, nb].concat().join(", "))
        }),
    );
    push("5", timed(secs(120), || {
        let (ok, n) = runs.checks("fig6", "fig6");
        (ok, n.join(", "))
    }));
    push(
        "6",
        timed(secs(120), || {
            let m = runs.metrics("fig7");
            let track = get(&m, "track_x_L_tau5000");
            let spread = get(&m, "point_spread_tau5000");
            let z_mean = get(&m, "z_bar_tau5000_mean");
            let z_rel = get(&m, "z_bar_tau5000_range") / z_mean;
            let (dae, nd) = runs.checks("fig9", "fig9");
            let pass = track <= 0.5 && spread < 0.1 && z_rel < 0.1 && (z_mean - 20.6).abs() <= 2.0 && dae;
            (pass, format!("track {track:.3}, (ȳ,z̄) excursion {spread:.3}, z̄ range/mean {z_rel:.3}, mean z̄ {z_mean:.2}, {}", nd.join(", ")))
        }),
    );
    push(
        "7",
        timed(secs(180), || {
            let (a, na) = runs.checks("fig11", "fig11");
            let (b, nb) = runs.checks("fig12", "fig12");
            (a && b, [na, nb].concat().join(", "))
        }),
    );

    let t8 = Instant::now();
    let f = runs.metrics("fig14");
    let a = get(&f, "asymmetry") <= 1e-12 && get(&f, "min_rayleigh") >= -1e-10;
    push("8a", (a, format!("asymmetry {:.1e}, min Rayleigh quotient / ‖K‖ {:.1e}", get(&f, "asymmetry"), get(&f, "min_rayleigh"))));
    let (b, err) = one_dimensional_analog();
    push("8b", (b, format!("largest relative nodal error {err:.2e}")));
    let lor = runs.metrics("fig15");
    let hald = runs.metrics("fig16");
    let gl = get(&lor, "symmetric_gap");
    let gh = get(&hald, "symmetric_gap");
    push("8c", (gl <= 1e-10 && gh <= 1e-10, format!("Lorenz gap {gl:.1e}, oscillators (three maps) {gh:.1e}")));
    let (rl, rh) = (get(&lor, "median_ratio"), get(&hald, "median_ratio"));
    let enough = get(&lor, "pairs") >= 20.0 && get(&hald, "pairs") >= 20.0;
    push("8d", (rl < 0.5 && rh < 0.5 && enough, format!("median Δc/Δf Lorenz {rl:.4}, oscillators {rh:.4} (bound 0.5)")));
    let (sl, sh) = (get(&lor, "short_factor"), get(&hald, "short_factor"));
    let el = t8.elapsed();
    let in_time = el <= secs(900);
    push(
        "8e",
        (sl >= 3.0 && sh >= 3.0 && in_time, format!("random/constrained short-horizon Δc Lorenz {sl:.2}, oscillators {sh:.2}; battery {:.1}s of 900s", el.as_secs_f64())),
    );
    push("9", determinism(&mut runs, &["fig1", "fig2", "fig6", "fig12", "fig13", "fig15", "plim-linear"]));

    let mut unexpected = 0;
    for l in &lines {
        let known = KNOWN_FAILURES.contains(&l.id);
        match (l.pass, known) {
            (false, false) => unexpected += 1,
            (false, true) => println!("note: criterion {} is a known failure ({})", l.id, l.detail),
            (true, true) => println!("note: criterion {} passed although listed as a known failure", l.id),
            _ => {}
        }
    }
    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} passed, {unexpected} unexpected failures", lines.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
