//! Least-squares construction of instantaneous coarse functions `Π` on phase
//! space satisfying `∇Π·H = a + bΠ`, and the tests used to select among them.

mod criteria;
mod lsq;
mod mesh;

pub use criteria::{
    coarse_rate, coarse_trajectory, constrained_ic_pairs, constraint_residual, median, metrics, pair_battery, random_pairs,
    symmetric_series_gap, Accept, CriteriaReport, DiffMetrics, IcDomain, Medians, PairSet,
};
pub use lsq::{
    assemble, blend, node_permutation, select_alpha, solve_with, svd_solve, symmetrize, symmetry_defect, LsqSystem, ALPHA_SWEEP,
    PiSolutionFamily, Selection, SolveMethod, SweepEntry,
};
pub use mesh::{level_set, level_set_sheets, LevelCell, PhaseMesh, PiField};

/// Sign map of the Lorenz system: `(x, y, z) ↦ (−x, −y, z)`.
pub fn lorenz_symmetry() -> Vec<f64> {
    vec![-1.0, -1.0, 1.0]
}

/// The three sign maps of the coupled oscillators.
pub fn hald_symmetries() -> Vec<Vec<f64>> {
    vec![vec![1.0, 1.0, -1.0, -1.0], vec![-1.0, -1.0, -1.0, -1.0], vec![-1.0, -1.0, 1.0, 1.0]]
}

pub fn lorenz_mesh(n: usize) -> crate::Result<PhaseMesh> {
    PhaseMesh::new(vec![-20.0, -25.0, 0.0], vec![20.0, 25.0, 50.0], vec![n; 3])
}

pub fn hald_mesh(n: usize) -> crate::Result<PhaseMesh> {
    PhaseMesh::cube(4, -2.0, 2.0, n)
}

#[cfg(test)]
mod tests;
