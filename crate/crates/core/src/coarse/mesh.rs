use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plim::{parse_list, read_f64s, read_header};

/// Tensor-product mesh of multilinear elements over a box in phase space.
/// Nodes are numbered row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMesh {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
    /// Gauss points per axis.
    pub quad: usize,
}

/// Gauss-Legendre points and weights on `[0, 1]`.
pub(crate) fn gauss01(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (p, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = 0.6f64.sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        _ => return Err(Error::InvalidArgument(format!("{n} Gauss points per axis not supported (1 to 3)"))),
    };
    Ok((p.iter().map(|x| 0.5 * (x + 1.0)).collect(), w.iter().map(|x| 0.5 * x).collect()))
}

impl PhaseMesh {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let m = Self { lo, hi, shape, quad: 2 };
        m.validate()?;
        Ok(m)
    }

    pub fn with_quad(mut self, quad: usize) -> Result<Self> {
        gauss01(quad)?;
        self.quad = quad;
        Ok(self)
    }

    /// Uniform mesh over a cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![n; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || self.hi.len() != d || self.shape.len() != d {
            return Err(Error::InvalidArgument("mesh bounds and shape differ in dimension".into()));
        }
        if d > 6 {
            return Err(Error::InvalidArgument("meshes above 6 dimensions are not supported".into()));
        }
        for k in 0..d {
            if self.shape[k] < 2 || !(self.hi[k] > self.lo[k]) {
                return Err(Error::InvalidArgument(format!("axis {k}: need at least 2 nodes and hi > lo")));
            }
        }
        gauss01(self.quad).map(|_| ())
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn n_elements(&self) -> usize {
        self.shape.iter().map(|n| n - 1).product()
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| (self.hi[k] - self.lo[k]) / (self.shape[k] - 1) as f64).collect()
    }

    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim() - 1).rev() {
            s[k] = s[k + 1] * self.shape[k + 1];
        }
        s
    }

    pub fn node_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.node_index(flat).iter().enumerate().map(|(k, &i)| self.lo[k] + i as f64 * h[k]).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    /// Lower-corner multi-index of element `e`.
    pub fn element_index(&self, mut e: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = e % (self.shape[k] - 1);
            e /= self.shape[k] - 1;
        }
        idx
    }

    /// Global node numbers of the element corners; bit `k` of the local index
    /// selects the upper node along axis `k`.
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        let idx = self.element_index(e);
        let strides = self.strides();
        let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        (0..1usize << self.dim())
            .map(|c| base + (0..self.dim()).filter(|&k| c >> k & 1 == 1).map(|k| strides[k]).sum::<usize>())
            .collect()
    }

    pub fn contains(&self, f: &[f64]) -> bool {
        f.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v <= self.hi[k])
    }

    /// Element, local coordinates in `[0, 1]^d` and whether `f` had to be clamped.
    pub fn locate(&self, f: &[f64]) -> (usize, Vec<f64>, bool) {
        let h = self.spacing();
        let mut e = 0usize;
        let mut u = vec![0.0; self.dim()];
        let mut clamped = false;
        for k in 0..self.dim() {
            let mut s = (f[k] - self.lo[k]) / h[k];
            let top = (self.shape[k] - 1) as f64;
            if !(s >= 0.0 && s <= top) {
                clamped = true;
                s = if s.is_nan() { 0.0 } else { s.clamp(0.0, top) };
            }
            let i = (s.floor() as usize).min(self.shape[k] - 2);
            u[k] = s - i as f64;
            e = e * (self.shape[k] - 1) + i;
        }
        (e, u, clamped)
    }
}

/// Shape function values and gradients (in physical units) at local point `u`.
pub(crate) fn shape_functions(u: &[f64], h: &[f64], phi: &mut [f64], grad: &mut [f64]) {
    let d = u.len();
    for c in 0..1usize << d {
        let mut v = 1.0;
        for k in 0..d {
            v *= if c >> k & 1 == 1 { u[k] } else { 1.0 - u[k] };
        }
        phi[c] = v;
        for k in 0..d {
            let mut g = if c >> k & 1 == 1 { 1.0 } else { -1.0 } / h[k];
            for j in 0..d {
                if j != k {
                    g *= if c >> j & 1 == 1 { u[j] } else { 1.0 - u[j] };
                }
            }
            grad[c * d + k] = g;
        }
    }
}

/// A scalar function on phase space given by nodal values on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PiField {
    pub mesh: PhaseMesh,
    pub values: Vec<f64>,
}

impl PiField {
    pub fn new(mesh: PhaseMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::DimensionMismatch { expected: mesh.n_nodes(), got: values.len() });
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(mesh: PhaseMesh, f: F) -> Self {
        let values = (0..mesh.n_nodes()).map(|i| f(&mesh.node(i))).collect();
        Self { mesh, values }
    }

    /// Value and gradient; points outside the mesh are clamped to it.
    pub fn eval_grad(&self, f: &[f64]) -> (f64, Vec<f64>, bool) {
        let d = self.mesh.dim();
        let (e, u, clamped) = self.mesh.locate(f);
        let nodes = self.mesh.element_nodes(e);
        let mut phi = [0.0; 64];
        let mut grad = [0.0; 64 * 6];
        shape_functions(&u, &self.mesh.spacing(), &mut phi, &mut grad);
        let mut v = 0.0;
        let mut g = vec![0.0; d];
        for (c, &n) in nodes.iter().enumerate() {
            let x = self.values[n];
            v += phi[c] * x;
            for k in 0..d {
                g[k] += grad[c * d + k] * x;
            }
        }
        (v, g, clamped)
    }

    pub fn eval(&self, f: &[f64]) -> f64 {
        self.eval_grad(f).0
    }

    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        self.eval_grad(f).1
    }

    /// Mean squared magnitude of the nodal gradient (central differences inside,
    /// one-sided on the boundary).
    pub fn roughness(&self) -> f64 {
        nodal_roughness(&self.mesh, &self.values)
    }

    /// `var / (var + mean²)` of the nodal values; 1 for zero-mean fields, 0 for constants.
    pub fn normalized_variance(&self) -> f64 {
        normalized_variance(&self.values)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "coarsekit-field 1")?;
        writeln!(w, "shape {}", self.mesh.shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "))?;
        writeln!(w, "lo {}", join(&self.mesh.lo))?;
        writeln!(w, "hi {}", join(&self.mesh.hi))?;
        writeln!(w, "quad {}", self.mesh.quad)?;
        writeln!(w, "order row-major f64-le")?;
        writeln!(w, "end")?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let header = read_header(&mut r, "coarsekit-field 1")?;
        let get = |k: &str| header.iter().find(|(a, _)| a == k).map(|(_, b)| b.clone()).ok_or_else(|| Error::Format(format!("missing header key `{k}`")));
        let mesh = PhaseMesh {
            lo: parse_list(&get("lo")?)?,
            hi: parse_list(&get("hi")?)?,
            shape: parse_list(&get("shape")?)?,
            quad: get("quad")?.parse().map_err(|_| Error::Format("bad quad".into()))?,
        };
        mesh.validate().map_err(|e| Error::Format(e.to_string()))?;
        let values = read_f64s(&mut r, mesh.n_nodes())?;
        Ok(Self { mesh, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

pub(crate) fn nodal_roughness(mesh: &PhaseMesh, values: &[f64]) -> f64 {
    let d = mesh.dim();
    let h = mesh.spacing();
    let strides = mesh.strides();
    let n = mesh.n_nodes();
    let mut acc = 0.0;
    for node in 0..n {
        let idx = mesh.node_index(node);
        for k in 0..d {
            let (a, b, w) = if idx[k] == 0 {
                (node, node + strides[k], h[k])
            } else if idx[k] + 1 == mesh.shape[k] {
                (node - strides[k], node, h[k])
            } else {
                (node - strides[k], node + strides[k], 2.0 * h[k])
            };
            let g = (values[b] - values[a]) / w;
            acc += g * g;
        }
    }
    acc / n as f64
}

pub(crate) fn normalized_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var + mean * mean == 0.0 {
        0.0
    } else {
        var / (var + mean * mean)
    }
}

/// Mesh cell straddling a level `c`, with the points where `Π = c` on its edges.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCell {
    pub element: usize,
    pub crossings: Vec<Vec<f64>>,
}

/// Cells whose nodal range contains `c`.
pub fn level_set(field: &PiField, c: f64) -> Vec<LevelCell> {
    let mesh = &field.mesh;
    let d = mesh.dim();
    let mut out = Vec::new();
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        let vals: Vec<f64> = nodes.iter().map(|&n| field.values[n]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo <= c && c <= hi) {
            continue;
        }
        let mut crossings = Vec::new();
        for a in 0..nodes.len() {
            for k in 0..d {
                if a >> k & 1 == 1 {
                    continue;
                }
                let b = a | 1 << k;
                let (va, vb) = (vals[a], vals[b]);
                if (va - c) * (vb - c) <= 0.0 && va != vb {
                    let s = (c - va) / (vb - va);
                    let pa = mesh.node(nodes[a]);
                    let pb = mesh.node(nodes[b]);
                    crossings.push(pa.iter().zip(&pb).map(|(x, y)| x + s * (y - x)).collect());
                }
            }
        }
        out.push(LevelCell { element: e, crossings });
    }
    out
}

/// Number of face-connected groups of level-set cells.
pub fn level_set_sheets(mesh: &PhaseMesh, cells: &[LevelCell]) -> usize {
    let ne = mesh.n_elements();
    let mut member = vec![usize::MAX; ne];
    for (i, c) in cells.iter().enumerate() {
        member[c.element] = i;
    }
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let d = mesh.dim();
    let mut estride = vec![1usize; d];
    for k in (0..d - 1).rev() {
        estride[k] = estride[k + 1] * (mesh.shape[k + 1] - 1);
    }
    for (i, c) in cells.iter().enumerate() {
        let idx = mesh.element_index(c.element);
        for k in 0..d {
            if idx[k] + 2 < mesh.shape[k] {
                let j = member[c.element + estride[k]];
                if j != usize::MAX {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }
    (0..cells.len()).filter(|&i| find(&mut parent, i) == i).count()
}
