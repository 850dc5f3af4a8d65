use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::catalog;
use crate::system::SystemSpec;
use crate::trajectory::Trajectory;
use crate::IntegratorConfig;

fn from_dense(k: &DMatrix<f64>, b: &[f64]) -> LsqSystem {
    let n = k.nrows();
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        for j in 0..n {
            if k[(i, j)] != 0.0 {
                coo.push(i, j, k[(i, j)]);
            }
        }
    }
    LsqSystem { mesh: PhaseMesh::new(vec![0.0], vec![1.0], vec![n]).unwrap(), k: CsrMatrix::from(&coo), b_vec: b.to_vec(), a_coef: 0.0, b_coef: 0.0 }
}

fn rank_deficient(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> (DMatrix<f64>, Vec<f64>) {
    let m = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
    let k = m.transpose() * &m;
    let b = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (k, b)
}

#[test]
fn zero_field_gives_zero_system() {
    let sys = SystemSpec::new("zero", 2, 0, |_, out: &mut [f64]| {
        out.fill(0.0);
        Ok(())
    });
    let mesh = PhaseMesh::cube(2, -1.0, 1.0, 4).unwrap();
    let ls = assemble(&mesh, &sys, 1.0, 0.0).unwrap();
    assert!(ls.k.values().iter().all(|v| *v == 0.0));
    assert!(ls.b_vec.iter().all(|v| *v == 0.0));
    assert!(matches!(svd_solve(&ls, 1e-10), Err(crate::Error::NullSystem { .. })));
}

#[test]
fn one_dimensional_exponential() {
    let sys = SystemSpec::new("unit", 1, 0, |_, out: &mut [f64]| {
        out[0] = 1.0;
        Ok(())
    });
    let mesh = PhaseMesh::new(vec![0.0], vec![1.0], vec![64]).unwrap();
    let ls = assemble(&mesh, &sys, 1.0, 1.0).unwrap().pin(0, 0.0).unwrap();
    let sol = svd_solve(&ls, 1e-12).unwrap();
    for i in 0..64 {
        let f = mesh.node(i)[0];
        let exact = f.exp() - 1.0;
        assert!((sol.x_part[i] - exact).abs() <= 0.01 * exact.abs() + 1e-9, "node {i}: {} vs {exact}", sol.x_part[i]);
    }
}

#[test]
fn lorenz_stiffness_is_symmetric_and_semidefinite() {
    let mesh = lorenz_mesh(5).unwrap();
    let ls = assemble(&mesh, &catalog::lorenz_default(), 1.0, 0.0).unwrap();
    assert!(ls.asymmetry() < 1e-12);
    let eig = nalgebra::SymmetricEigen::new(ls.to_dense());
    let kn = ls.frobenius();
    assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * kn));
}

#[test]
fn hand_computed_pseudoinverse() {
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let sol = svd_solve(&from_dense(&k, &[2.0, 0.0]), 1e-10).unwrap();
    assert!((sol.x_part[0] - 2.0).abs() < 1e-14 && sol.x_part[1].abs() < 1e-14);
    assert_eq!(sol.null_basis.len(), 1);
    assert!((sol.null_basis[0][1].abs() - 1.0).abs() < 1e-14 && sol.null_basis[0][0].abs() < 1e-14);
}

#[test]
fn matches_dense_pseudoinverse_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..5 {
        let (k, b) = rank_deficient(&mut rng, 20, 12 + trial);
        let sol = svd_solve(&from_dense(&k, &b), 1e-10).unwrap();
        let svd = k.clone().svd(true, true);
        let cut = 1e-10 * svd.singular_values.max();
        let oracle = svd.pseudo_inverse(cut).unwrap() * DVector::from_column_slice(&b);
        for i in 0..20 {
            assert!((sol.x_part[i] - oracle[i]).abs() < 1e-8);
        }
        assert_eq!(sol.null_basis.len(), 20 - (12 + trial));
        assert!(sol.orthogonality_defect() < 1e-8);
        let ls = from_dense(&k, &b);
        let r = ls.residual(&sol.x_part);
        let oracle_r = (&k * &oracle - DVector::from_column_slice(&b)).norm();
        assert!((r - oracle_r).abs() < 1e-10);
        for _ in 0..100 {
            let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert!(r <= ls.residual(&y) + 1e-12);
        }
        let kn = ls.frobenius();
        for v in &sol.null_basis {
            let kv: f64 = ls.mul(v).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(kv <= 1e-10 * kn);
        }
    }
}

#[test]
fn iterative_path_agrees_with_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (k, b) = rank_deficient(&mut rng, 30, 24);
    let ls = from_dense(&k, &b);
    let dense = svd_solve(&ls, 1e-10).unwrap();
    let it = solve_with(&ls, 1e-10, SolveMethod::Iterative { max_iters: 500, tol: 1e-14, probes: 10, seed: 1 }).unwrap();
    assert_eq!(it.null_basis.len(), 6);
    let err = dense.x_part.iter().zip(&it.x_part).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn blend_with_zero_alpha_is_particular_part() {
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let sol = svd_solve(&from_dense(&k, &[2.0, 0.0]), 1e-10).unwrap();
    assert_eq!(blend(&sol, &[0.0]).unwrap().values, sol.x_part);
    assert!(blend(&sol, &[0.0, 1.0]).is_err());
}

#[test]
fn evaluator_reproduces_multilinear_functions_and_gradients() {
    let mesh = PhaseMesh::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 4.0], vec![4, 5, 3]).unwrap();
    let f = |p: &[f64]| 0.5 + p[0] - 2.0 * p[1] * p[2] + 0.3 * p[0] * p[1] * p[2];
    let field = PiField::from_fn(mesh, f);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let p = vec![rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0), rng.gen_range(2.0..4.0)];
        let (v, g, clamped) = field.eval_grad(&p);
        assert!(!clamped);
        assert!((v - f(&p)).abs() < 1e-12);
        for k in 0..3 {
            let h = 1e-6;
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (field.eval(&a) - field.eval(&b)) / (2.0 * h);
            assert!((g[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }
}

#[test]
fn coarse_series_of_simple_fields() {
    let mesh = lorenz_mesh(5).unwrap();
    let tr = crate::integrate(&catalog::lorenz_default(), &[1.0, 1.0, 20.0], 0.0, 2.0, &IntegratorConfig::rk4(1e-3).record_every(50)).unwrap();
    let c = coarse_trajectory(&PiField::from_fn(mesh.clone(), |_| 3.0), &tr);
    assert!(c.states().all(|s| (s[0] - 3.0).abs() < 1e-12));
    let c = coarse_trajectory(&PiField::from_fn(mesh, |p| p[0]), &tr);
    for (a, b) in c.states().zip(tr.states()) {
        assert!((a[0] - b[0]).abs() < 1e-12);
    }
}

#[test]
fn metrics_basic_cases() {
    let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
    let rows: Vec<Vec<f64>> = times.iter().map(|t| vec![1.0 + t, t.sin()]).collect();
    let neg: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let f1 = Trajectory::from_rows(times.clone(), &rows, vec!["a".into(), "b".into()]).unwrap();
    let f2 = Trajectory::from_rows(times.clone(), &neg, vec!["a".into(), "b".into()]).unwrap();
    let c = Trajectory::from_rows(times.clone(), &rows.iter().map(|r| vec![r[0]]).collect::<Vec<_>>(), vec!["c".into()]).unwrap();
    let m = metrics(&f1, &f1, &c, &c).unwrap();
    assert_eq!((m.delta_f, m.delta_c), (0.0, 0.0));
    let m = metrics(&f1, &f2, &c, &c).unwrap();
    assert!((m.delta_f - 2.0).abs() < 1e-12);
    let z = Trajectory::from_rows(times.clone(), &vec![vec![0.0, 0.0]; 11], vec!["a".into(), "b".into()]).unwrap();
    let zc = Trajectory::from_rows(times, &vec![vec![0.0]; 11], vec!["c".into()]).unwrap();
    assert!(metrics(&z, &z, &zc, &zc).is_err());
}

#[test]
fn constraint_pairs() {
    let sys = catalog::lorenz_default();
    let mesh = lorenz_mesh(7).unwrap();
    let field = PiField::from_fn(mesh.clone(), |p| p[0] * p[0] - 0.1 * p[1] * p[0] + 0.3 * p[2]);
    let f = [3.0, -2.0, 20.0];
    assert_eq!(constraint_residual(&field, &sys, &f, &f).unwrap(), [0.0, 0.0]);
    let sf = [-3.0, 2.0, 20.0];
    let r = constraint_residual(&field, &sys, &f, &sf).unwrap();
    assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-10, "{r:?}");
    let domain = IcDomain::boxed(vec![-15.0, -20.0, 5.0], vec![15.0, 20.0, 45.0]);
    let set = constrained_ic_pairs(&field, &sys, &domain, 6, 9).unwrap();
    assert_eq!(set.pairs.len() + set.skipped, 6);
    assert!(set.pairs.len() >= 4);
    for (a, b) in &set.pairs {
        let r = constraint_residual(&field, &sys, a, b).unwrap();
        assert!(r[0].abs() <= 1e-8 && r[1].abs() <= 1e-8);
        let sep: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(sep >= 0.2 * domain.diameter());
    }
    let again = constrained_ic_pairs(&field, &sys, &domain, 6, 9).unwrap();
    assert_eq!(again.pairs, set.pairs);
}

#[test]
fn level_sets() {
    let mesh = PhaseMesh::cube(3, -1.0, 1.0, 5).unwrap();
    let lin = PiField::from_fn(mesh.clone(), |p| p[0]);
    let cells = level_set(&lin, 0.0);
    // Node plane x = 0 touches the 2·16 cells on either side.
    assert_eq!(cells.len(), 32);
    assert!(cells.iter().flat_map(|c| &c.crossings).all(|p| p[0].abs() < 1e-12));
    assert!(level_set(&PiField::from_fn(mesh.clone(), |_| 1.0), 0.5).is_empty());
    let two = PiField::from_fn(mesh.clone(), |p| p[0] * p[0]);
    let cells = level_set(&two, 0.3);
    assert_eq!(level_set_sheets(&mesh, &cells), 2);
}

#[test]
fn symmetrized_values_are_invariant() {
    let mesh = hald_mesh(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = symmetrize(&mesh, &v, &hald_symmetries()).unwrap();
    for m in hald_symmetries() {
        assert!(symmetry_defect(&mesh, &v, &m).unwrap() > 0.1);
        assert_eq!(symmetry_defect(&mesh, &s, &m).unwrap(), 0.0);
    }
    assert!(node_permutation(&lorenz_mesh(5).unwrap(), &[1.0, 1.0, -1.0]).is_err());
}

#[test]
fn selection_respects_variance_floor() {
    let k = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    let sol = svd_solve(&from_dense(&k, &[1.0, 0.0, 0.0]), 1e-10).unwrap();
    let sel = select_alpha(&sol, &[-10.0, -1.0, 1.0, 10.0], 4, 0.1).unwrap();
    let chosen = &sel.entries[sel.chosen];
    assert!(chosen.normalized_variance >= 0.1);
    assert!(sel.entries.iter().filter(|e| e.normalized_variance >= 0.1).all(|e| e.roughness >= chosen.roughness * (1.0 - 1e-12)));
    assert!(select_alpha(&sol, &[1.0], 1, 1.1).is_err());
}

#[test]
fn field_round_trips() {
    let mesh = PhaseMesh::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![3, 4]).unwrap();
    let f = PiField::from_fn(mesh, |p| p[0] * 0.1 + p[1]);
    let mut buf = Vec::new();
    f.write(&mut buf).unwrap();
    assert_eq!(PiField::read(&buf[..]).unwrap(), f);
}
