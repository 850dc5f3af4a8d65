//! Equilibria of the fast flow at a frozen slow state.

use crate::error::{Error, Result};
use crate::system::SystemSpec;
use crate::tikhonov::{project_to_equilibrium, Epsilon, SlowFastSpec};

#[derive(Debug, Clone, Default)]
pub struct EquilibriumReport {
    /// Distinct equilibria (fast components), sorted lexicographically.
    pub found: Vec<Vec<f64>>,
    /// Seeds whose Newton iteration failed, with the residual history.
    pub dropped: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Newton from every seed; converged points with `‖H‖∞ < 1e-10` are kept and
/// duplicates within `1e-8` merged.
pub fn find_equilibria(system: &SystemSpec, frozen_slow: &[f64], seeds: &[Vec<f64>]) -> Result<EquilibriumReport> {
    if frozen_slow.len() != system.dim_slow {
        return Err(Error::DimensionMismatch { expected: system.dim_slow, got: frozen_slow.len() });
    }
    let spec = SlowFastSpec::new(system.clone(), Epsilon::Limit);
    let mut report = EquilibriumReport::default();
    for seed in seeds {
        if seed.len() != system.dim_fast {
            return Err(Error::DimensionMismatch { expected: system.dim_fast, got: seed.len() });
        }
        match project_to_equilibrium(&spec, frozen_slow, seed, 1e-12) {
            Ok(f) => {
                let dup = report.found.iter().any(|g| g.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-8));
                if !dup {
                    report.found.push(f);
                }
            }
            Err(Error::NewtonFailed { residuals, .. }) => report.dropped.push((seed.clone(), residuals)),
            Err(Error::BranchInvalid { .. }) => report.dropped.push((seed.clone(), Vec::new())),
            Err(e) => return Err(e),
        }
    }
    report.found.sort_by(|a, b| a.partial_cmp(b).expect("finite equilibria"));
    if !report.dropped.is_empty() {
        log::debug!("{} of {} seeds did not converge", report.dropped.len(), seeds.len());
    }
    Ok(report)
}

/// Tensor grid of `n` points per axis over `[lo_i, hi_i]`.
pub fn seed_grid(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    assert_eq!(lo.len(), hi.len());
    assert!(n >= 2);
    let d = lo.len();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|i| {
                    let j = k % n;
                    k /= n;
                    lo[i] + (hi[i] - lo[i]) * j as f64 / (n - 1) as f64
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn lorenz_three_equilibria() {
        let seeds = seed_grid(&[-15.0, -15.0, 0.0], &[15.0, 15.0, 40.0], 5);
        let rep = find_equilibria(&catalog::lorenz_default(), &[], &seeds).unwrap();
        let expect = [[-8.0, -8.0, 24.0], [0.0, 0.0, 0.0], [8.0, 8.0, 24.0]];
        assert_eq!(rep.found.len(), 3, "{:?}", rep.found);
        for (f, e) in rep.found.iter().zip(expect) {
            for (a, b) in f.iter().zip(e) {
                assert!((a - b).abs() < 1e-10);
            }
            let h = catalog::lorenz_default().eval_field(f).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn seed_grid_shape() {
        let g = seed_grid(&[0.0, 1.0], &[1.0, 2.0], 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, 1.0]);
        assert_eq!(g[8], vec![1.0, 2.0]);
    }
}
