use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::{gauss01, nodal_roughness, normalized_variance, shape_functions, PhaseMesh, PiField};
use crate::error::{Error, Result};
use crate::system::SystemSpec;

/// Normal equations `K x = b` of the least-squares residual of `∇Π·H = a + bΠ`.
#[derive(Debug, Clone)]
pub struct LsqSystem {
    pub mesh: PhaseMesh,
    pub k: CsrMatrix<f64>,
    pub b_vec: Vec<f64>,
    pub a_coef: f64,
    pub b_coef: f64,
}

/// Assemble `k_AB = ∫ψ_A ψ_B` and `b_A = ∫a ψ_A` with `ψ_A = ∇φ_A·H − bφ_A`.
pub fn assemble(mesh: &PhaseMesh, system: &SystemSpec, a_coef: f64, b_coef: f64) -> Result<LsqSystem> {
    mesh.validate()?;
    if system.dim() != mesh.dim() {
        return Err(Error::DimensionMismatch { expected: mesh.dim(), got: system.dim() });
    }
    let d = mesh.dim();
    let nc = 1usize << d;
    let h = mesh.spacing();
    let (qp, qw) = gauss01(mesh.quad)?;
    let nq = mesh.quad.pow(d as u32);
    let vol: f64 = h.iter().product();
    let field = system.field_fn();
    let elements = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
            let nodes = mesh.element_nodes(e);
            let corner = mesh.node(nodes[0]);
            let mut ke = vec![0.0; nc * nc];
            let mut be = vec![0.0; nc];
            let mut u = vec![0.0; d];
            let mut f = vec![0.0; d];
            let mut hf = vec![0.0; d];
            let mut phi = [0.0; 64];
            let mut grad = [0.0; 64 * 6];
            let mut psi = [0.0; 64];
            for q in 0..nq {
                let mut w = vol;
                let mut r = q;
                for k in (0..d).rev() {
                    let i = r % mesh.quad;
                    r /= mesh.quad;
                    u[k] = qp[i];
                    w *= qw[i];
                    f[k] = corner[k] + qp[i] * h[k];
                }
                field(&f, &mut hf)?;
                shape_functions(&u, &h, &mut phi, &mut grad);
                for c in 0..nc {
                    let mut s = -b_coef * phi[c];
                    for k in 0..d {
                        s += grad[c * d + k] * hf[k];
                    }
                    psi[c] = s;
                }
                for i in 0..nc {
                    be[i] += w * a_coef * psi[i];
                    for j in 0..nc {
                        ke[i * nc + j] += w * psi[i] * psi[j];
                    }
                }
            }
            Ok((nodes, ke, be))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = mesh.n_nodes();
    let mut coo = CooMatrix::new(n, n);
    let mut b_vec = vec![0.0; n];
    for (nodes, ke, be) in &elements {
        for i in 0..nc {
            b_vec[nodes[i]] += be[i];
            for j in 0..nc {
                coo.push(nodes[i], nodes[j], ke[i * nc + j]);
            }
        }
    }
    Ok(LsqSystem { mesh: mesh.clone(), k: CsrMatrix::from(&coo), b_vec, a_coef, b_coef })
}

impl LsqSystem {
    pub fn n(&self) -> usize {
        self.b_vec.len()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        for (i, row) in self.k.row_iter().enumerate() {
            y[i] = row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum();
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n(), self.n());
        for (i, j, v) in self.k.triplet_iter() {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest `|K_ij − K_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let d = self.to_dense();
        let scale = d.amax().max(f64::MIN_POSITIVE);
        (&d - d.transpose()).amax() / scale
    }

    pub fn frobenius(&self) -> f64 {
        self.k.values().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(&self.b_vec).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    /// Fix node `node` to `value` by eliminating it from the system.
    pub fn pin(&self, node: usize, value: f64) -> Result<LsqSystem> {
        if node >= self.n() {
            return Err(Error::InvalidArgument(format!("node {node} out of range")));
        }
        let mut b_vec = self.b_vec.clone();
        let mut coo = CooMatrix::new(self.n(), self.n());
        for (i, j, v) in self.k.triplet_iter() {
            if i == node || j == node {
                if j == node && i != node {
                    b_vec[i] -= v * value;
                }
                continue;
            }
            coo.push(i, j, *v);
        }
        let diag = self.k.triplet_iter().filter(|(i, j, _)| i == j).map(|(_, _, v)| v.abs()).fold(0.0, f64::max).max(1.0);
        coo.push(node, node, diag);
        b_vec[node] = diag * value;
        Ok(LsqSystem { mesh: self.mesh.clone(), k: CsrMatrix::from(&coo), b_vec, a_coef: self.a_coef, b_coef: self.b_coef })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SolveMethod {
    /// Dense symmetric eigendecomposition.
    Dense,
    /// Least-squares conjugate gradients; the nullspace comes from projecting
    /// `probes` random vectors off the range of `K`.
    Iterative { max_iters: usize, tol: f64, probes: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct PiSolutionFamily {
    pub mesh: PhaseMesh,
    pub x_part: Vec<f64>,
    pub null_basis: Vec<Vec<f64>>,
    pub rank_tol: f64,
    /// Singular values in decreasing order (dense path only).
    pub singular_values: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimum-norm least-squares solution and numerical nullspace of `K`.
///
/// Singular values below `rank_tol·σ_max` are discarded.
pub fn svd_solve(sys: &LsqSystem, rank_tol: f64) -> Result<PiSolutionFamily> {
    solve_with(sys, rank_tol, SolveMethod::Dense)
}

pub fn solve_with(sys: &LsqSystem, rank_tol: f64, method: SolveMethod) -> Result<PiSolutionFamily> {
    if sys.k.values().iter().chain(&sys.b_vec).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("least-squares system has non-finite entries".into()));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument("rank_tol must be positive".into()));
    }
    match method {
        SolveMethod::Dense => dense_solve(sys, rank_tol),
        SolveMethod::Iterative { max_iters, tol, probes, seed } => iterative_solve(sys, rank_tol, max_iters, tol, probes, seed),
    }
}

fn dense_solve(sys: &LsqSystem, rank_tol: f64) -> Result<PiSolutionFamily> {
    let n = sys.n();
    let mut a = faer::Mat::<f64>::zeros(n, n);
    for (i, j, v) in sys.k.triplet_iter() {
        a.write(i, j, a.read(i, j) + v);
    }
    let evd = a.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    let lam: Vec<f64> = (0..n).map(|i| s.read(i)).collect();
    let smax = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = rank_tol * smax;
    if smax == 0.0 {
        return Err(Error::NullSystem { cutoff: cut });
    }
    let mut x = vec![0.0; n];
    let mut null_basis = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lam[j].abs().total_cmp(&lam[i].abs()));
    for &i in &order {
        let v: Vec<f64> = (0..n).map(|r| u.read(r, i)).collect();
        if lam[i].abs() <= cut {
            null_basis.push(v);
        } else {
            let coef = dot(&v, &sys.b_vec) / lam[i];
            for r in 0..n {
                x[r] += coef * v[r];
            }
        }
    }
    if null_basis.len() == n {
        return Err(Error::NullSystem { cutoff: cut });
    }
    Ok(PiSolutionFamily {
        mesh: sys.mesh.clone(),
        x_part: x,
        null_basis,
        rank_tol,
        singular_values: order.iter().map(|&i| lam[i].abs()).collect(),
    })
}

/// CG on a consistent system `K x = rhs` (rhs in the range of `K`) from zero,
/// kept orthogonal to `deflate`; the iterate stays in the range of `K`.
fn cg(sys: &LsqSystem, rhs: &[f64], deflate: &[Vec<f64>], max_iters: usize, tol: f64) -> Vec<f64> {
    let n = sys.n();
    let project = |v: &mut Vec<f64>| {
        for q in deflate {
            let c = dot(v, q);
            for i in 0..n {
                v[i] -= c * q[i];
            }
        }
    };
    let mut r = rhs.to_vec();
    project(&mut r);
    let mut x = vec![0.0; n];
    let mut p = r.clone();
    let r0 = norm(&r).max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol * r0 {
            break;
        }
        let kp = sys.mul(&p);
        let denom = dot(&p, &kp);
        if denom <= 0.0 {
            break;
        }
        let alpha = rr / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        project(&mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

fn iterative_solve(sys: &LsqSystem, rank_tol: f64, max_iters: usize, tol: f64, probes: usize, seed: u64) -> Result<PiSolutionFamily> {
    use rand::{Rng, SeedableRng};
    let n = sys.n();
    let knorm = sys.frobenius();
    if knorm == 0.0 {
        return Err(Error::NullSystem { cutoff: 0.0 });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut null_basis: Vec<Vec<f64>> = Vec::new();
    for _ in 0..probes {
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // r minus its range component lies in the nullspace.
        let y = cg(sys, &sys.mul(&r), &null_basis, max_iters, tol);
        let mut v: Vec<f64> = r.iter().zip(&y).map(|(a, b)| a - b).collect();
        for _ in 0..2 {
            for q in &null_basis {
                let c = dot(&v, q);
                for i in 0..n {
                    v[i] -= c * q[i];
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 * norm(&r) {
            v.iter_mut().for_each(|a| *a /= nv);
            if norm(&sys.mul(&v)) <= rank_tol * knorm {
                null_basis.push(v);
            }
        }
    }
    if null_basis.len() == n {
        return Err(Error::NullSystem { cutoff: rank_tol * knorm });
    }
    let x = cg(sys, &sys.b_vec, &null_basis, max_iters, tol);
    Ok(PiSolutionFamily { mesh: sys.mesh.clone(), x_part: x, null_basis, rank_tol, singular_values: Vec::new() })
}

impl PiSolutionFamily {
    pub fn blend(&self, alpha: &[f64]) -> Result<PiField> {
        if alpha.len() != self.null_basis.len() {
            return Err(Error::DimensionMismatch { expected: self.null_basis.len(), got: alpha.len() });
        }
        let mut v = self.x_part.clone();
        for (a, q) in alpha.iter().zip(&self.null_basis) {
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi += a * qi;
            }
        }
        PiField::new(self.mesh.clone(), v)
    }

    /// Largest `|⟨x_part, v⟩| / (‖x_part‖‖v‖)` over the null basis.
    pub fn orthogonality_defect(&self) -> f64 {
        let nx = norm(&self.x_part).max(f64::MIN_POSITIVE);
        self.null_basis.iter().map(|q| dot(&self.x_part, q).abs() / (nx * norm(q))).fold(0.0, f64::max)
    }
}

pub fn blend(family: &PiSolutionFamily, alpha: &[f64]) -> Result<PiField> {
    family.blend(alpha)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub alpha: Vec<f64>,
    pub roughness: f64,
    pub normalized_variance: f64,
    /// Variance over mean of the nodal values.
    pub variance_to_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub entries: Vec<SweepEntry>,
    /// Index into `entries`.
    pub chosen: usize,
}

/// Sweep `α = s·‖x_part‖·e_i` over the first `max_dirs` null vectors and the
/// given relative magnitudes `s`, then pick the least rough candidate whose
/// normalized variance is at least `floor`. Ties (within 1e-9) keep the
/// earlier candidate, so `α = 0` wins when the sweep leaves roughness flat.
pub fn select_alpha(family: &PiSolutionFamily, magnitudes: &[f64], max_dirs: usize, floor: f64) -> Result<Selection> {
    let k = family.null_basis.len();
    let unit = norm(&family.x_part).max(f64::MIN_POSITIVE);
    let mut alphas = vec![vec![0.0; k]];
    for i in 0..k.min(max_dirs) {
        for &s in magnitudes {
            if s != 0.0 {
                let mut a = vec![0.0; k];
                a[i] = s * unit;
                alphas.push(a);
            }
        }
    }
    let entries: Vec<SweepEntry> = alphas
        .into_iter()
        .map(|alpha| {
            let field = family.blend(&alpha).expect("sized");
            let n = field.values.len() as f64;
            let mean = field.values.iter().sum::<f64>() / n;
            let var = field.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            SweepEntry {
                roughness: nodal_roughness(&field.mesh, &field.values),
                normalized_variance: normalized_variance(&field.values),
                variance_to_mean: if mean != 0.0 { var / mean.abs() } else { f64::INFINITY },
                alpha,
            }
        })
        .collect();
    let mut chosen: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if e.normalized_variance < floor {
            continue;
        }
        let better = match chosen {
            None => true,
            Some(j) => e.roughness < entries[j].roughness * (1.0 - 1e-9),
        };
        if better {
            chosen = Some(i);
        }
    }
    let chosen = chosen.ok_or_else(|| Error::InvalidArgument(format!("no candidate reaches normalized variance {floor}")))?;
    Ok(Selection { entries, chosen })
}

/// Default relative sweep for [`select_alpha`].
pub const ALPHA_SWEEP: [f64; 12] = [-2.9, -2.0, -1.0, -0.5, -0.25, -0.1, 0.1, 0.25, 0.5, 1.0, 2.0, 2.9];

/// Node permutation induced by a sign map `f ↦ diag(signs) f` on a mesh that is
/// symmetric under it.
pub fn node_permutation(mesh: &PhaseMesh, signs: &[f64]) -> Result<Vec<usize>> {
    let d = mesh.dim();
    if signs.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: signs.len() });
    }
    for k in 0..d {
        if signs[k] < 0.0 && (mesh.lo[k] + mesh.hi[k]).abs() > 1e-12 * (mesh.hi[k] - mesh.lo[k]) {
            return Err(Error::InvalidArgument(format!("mesh is not symmetric about 0 along axis {k}")));
        }
    }
    let strides = mesh.strides();
    Ok((0..mesh.n_nodes())
        .map(|node| {
            mesh.node_index(node)
                .iter()
                .enumerate()
                .map(|(k, &i)| if signs[k] < 0.0 { mesh.shape[k] - 1 - i } else { i } * strides[k])
                .sum()
        })
        .collect())
}

/// Average of `values` over the group generated by the sign maps.
pub fn symmetrize(mesh: &PhaseMesh, values: &[f64], maps: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = mesh.dim();
    let mut group: Vec<Vec<f64>> = vec![vec![1.0; d]];
    let mut i = 0;
    while i < group.len() {
        for m in maps {
            let g: Vec<f64> = group[i].iter().zip(m).map(|(a, b)| a * b).collect();
            if !group.contains(&g) {
                group.push(g);
            }
        }
        i += 1;
    }
    let mut out = vec![0.0; values.len()];
    for g in &group {
        let p = node_permutation(mesh, g)?;
        for (o, &j) in out.iter_mut().zip(&p) {
            *o += values[j];
        }
    }
    let m = group.len() as f64;
    out.iter_mut().for_each(|v| *v /= m);
    Ok(out)
}

/// `max |x − x∘S| / max |x|` for one sign map.
pub fn symmetry_defect(mesh: &PhaseMesh, values: &[f64], signs: &[f64]) -> Result<f64> {
    let p = node_permutation(mesh, signs)?;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    Ok(values.iter().zip(&p).map(|(v, &j)| (v - values[j]).abs()).fold(0.0, f64::max) / scale)
}
