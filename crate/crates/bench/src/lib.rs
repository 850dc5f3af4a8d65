//! Shared fixtures for the benchmarks.

use coarsekit::plim::{CoarseGrid, ManifoldFamily, PlimProblem};
use coarsekit::{catalog, Result};

/// Linear relaxation problem with a flat initial guess on `n` nodes.
pub fn linear_plim(n: usize) -> Result<(PlimProblem, ManifoldFamily)> {
    let sys = catalog::linear_relaxation(0.01).fast_time_system()?;
    let problem = PlimProblem::new(sys, vec![1], vec![0])?;
    let grid = CoarseGrid::new(vec![0.0], vec![2.0], vec![n])?;
    let fam = ManifoldFamily::constant(grid, &problem, &[1.0]);
    Ok((problem, fam))
}
