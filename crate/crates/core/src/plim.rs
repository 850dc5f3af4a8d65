//! Graphs of fine states over coarse variables that are invariant under the
//! fine flow, and the closed coarse theory they induce.
//!
//! The unknown graph `G(x)` maps coarse coordinates `x` to the remaining
//! components of the (usually augmented) state. Invariance means
//! `Σ_j a_j(x, G) ∂G/∂x_j = H(x, G)` where `a_j` is the rate of coordinate `j`.
//! It is solved by pseudo-time relaxation with first-order upwinding; nodes whose
//! upwind neighbour lies outside the grid are inflow nodes and keep their seed.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{build_augmented, AugmentedLayout, CumulativeRecorder, Observable};
use crate::error::{Error, Result};
use crate::integrate::{integrate_observed, IntegratorConfig, Observer, Rk4};
use crate::system::SystemSpec;
use crate::trajectory::Trajectory;

/// Tensor grid over a box in coarse space, row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
}

impl CoarseGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let g = Self { lo, hi, shape };
        g.validate()?;
        if g.shape.iter().any(|&n| n < 3) {
            return Err(Error::InvalidArgument("a coarse grid needs at least 3 nodes per axis".into()));
        }
        Ok(g)
    }

    /// A one-node grid at `point`; only meaningful for seeding.
    pub fn single_node(point: Vec<f64>) -> Self {
        let d = point.len();
        Self { lo: point.clone(), hi: point, shape: vec![1; d] }
    }

    fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if self.hi.len() != d || self.shape.len() != d || d == 0 {
            return Err(Error::InvalidArgument("grid bounds and shape differ in dimension".into()));
        }
        for k in 0..d {
            if self.shape[k] == 0 || (self.shape[k] > 1 && !(self.hi[k] > self.lo[k])) {
                return Err(Error::InvalidArgument(format!("axis {k}: need hi > lo and a positive node count")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| if self.shape[k] > 1 { (self.hi[k] - self.lo[k]) / (self.shape[k] - 1) as f64 } else { 0.0 })
            .collect()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.shape[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(flat).iter().enumerate().map(|(k, &i)| self.lo[k] + i as f64 * h[k]).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(k, &v)| {
            let tol = 1e-12 * (1.0 + self.hi[k].abs().max(self.lo[k].abs()));
            v >= self.lo[k] - tol && v <= self.hi[k] + tol
        })
    }

    /// Nearest node and its scaled distance (in units of the spacing).
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let h = self.spacing();
        let mut idx = vec![0; self.dim()];
        let mut d2 = 0.0;
        for k in 0..self.dim() {
            if self.shape[k] == 1 {
                let r = x[k] - self.lo[k];
                d2 += r * r;
                continue;
            }
            let u = ((x[k] - self.lo[k]) / h[k]).round().clamp(0.0, (self.shape[k] - 1) as f64);
            idx[k] = u as usize;
            let r = (x[k] - (self.lo[k] + u * h[k])) / h[k];
            d2 += r * r;
        }
        (self.flat_index(&idx), d2.sqrt())
    }

    /// Multilinear interpolation of a nodal array; `None` outside the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        if !self.contains(x) {
            return None;
        }
        let d = self.dim();
        let h = self.spacing();
        let strides = self.strides();
        let mut base = 0usize;
        let mut frac = vec![0.0; d];
        let mut active = Vec::with_capacity(d);
        for k in 0..d {
            if self.shape[k] == 1 {
                continue;
            }
            let u = ((x[k] - self.lo[k]) / h[k]).clamp(0.0, (self.shape[k] - 1) as f64);
            let i = (u.floor() as usize).min(self.shape[k] - 2);
            frac[k] = u - i as f64;
            base += i * strides[k];
            active.push(k);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << active.len()) {
            let mut w = 1.0;
            let mut off = 0;
            for (b, &k) in active.iter().enumerate() {
                if corner >> b & 1 == 1 {
                    w *= frac[k];
                    off += strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * values[base + off];
            }
        }
        Some(acc)
    }
}

/// Which state components are coarse coordinates and which are unknowns.
#[derive(Debug, Clone)]
pub struct PlimProblem {
    pub system: SystemSpec,
    pub coord_idx: Vec<usize>,
    pub unknown_idx: Vec<usize>,
    /// Averaging window of the augmented system, if any.
    pub tau: Option<f64>,
}

impl PlimProblem {
    pub fn new(system: SystemSpec, coord_idx: Vec<usize>, unknown_idx: Vec<usize>) -> Result<Self> {
        let d = system.dim();
        let mut seen = vec![false; d];
        for &i in coord_idx.iter().chain(&unknown_idx) {
            if i >= d || seen[i] {
                return Err(Error::InvalidArgument(format!("component {i} out of range or listed twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("every state component must be a coordinate or an unknown".into()));
        }
        Ok(Self { system, coord_idx, unknown_idx, tau: None })
    }

    /// The augmented problem: coordinates `(c, I)`, unknowns `(f_f, f, I_f)`.
    pub fn augmented(system: &SystemSpec, obs: &Observable, tau: f64) -> Result<Self> {
        let aug = build_augmented(system, obs, tau)?;
        let lay = AugmentedLayout::of(system, obs);
        let (nf, ns) = (lay.nf, lay.ns);
        let mut coord_idx: Vec<usize> = lay.c_range().collect();
        coord_idx.extend(2 * nf + ns..2 * nf + 2 * ns);
        let mut unknown_idx: Vec<usize> = (0..2 * nf).collect();
        unknown_idx.extend(2 * nf..2 * nf + ns);
        let mut p = Self::new(aug, coord_idx, unknown_idx)?;
        p.tau = Some(tau);
        Ok(p)
    }

    pub fn assemble(&self, coords: &[f64], unknowns: &[f64], out: &mut [f64]) {
        for (&i, &v) in self.coord_idx.iter().zip(coords) {
            out[i] = v;
        }
        for (&i, &v) in self.unknown_idx.iter().zip(unknowns) {
            out[i] = v;
        }
    }

    pub fn unknown_names(&self) -> Vec<String> {
        self.unknown_idx.iter().map(|&i| self.system.component_names[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldFamily {
    pub grid: CoarseGrid,
    pub names: Vec<String>,
    /// One nodal array per unknown.
    pub fields: Vec<Vec<f64>>,
    pub residual_inf: f64,
    pub converged: bool,
    pub iterations: usize,
    pub visit_counts: Option<Vec<u32>>,
    pub tau: Option<f64>,
    pub system_name: String,
}

impl ManifoldFamily {
    pub fn constant(grid: CoarseGrid, problem: &PlimProblem, values: &[f64]) -> Self {
        let n = grid.len();
        Self {
            fields: values.iter().map(|&v| vec![v; n]).collect(),
            names: problem.unknown_names(),
            grid,
            residual_inf: f64::NAN,
            converged: false,
            iterations: 0,
            visit_counts: None,
            tau: problem.tau,
            system_name: problem.system.name.clone(),
        }
    }

    /// Unknowns at one node.
    pub fn at_node(&self, flat: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f[flat]).collect()
    }

    pub fn interpolate(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.fields.iter().map(|f| self.grid.interpolate(f, x)).collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "coarsekit-manifold 1")?;
        writeln!(w, "system {}", self.system_name)?;
        writeln!(w, "tau {}", self.tau.map(|t| format!("{t:e}")).unwrap_or_else(|| "none".into()))?;
        writeln!(w, "shape {}", self.grid.shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "))?;
        writeln!(w, "lo {}", join(&self.grid.lo))?;
        writeln!(w, "hi {}", join(&self.grid.hi))?;
        writeln!(w, "fields {}", self.names.join(" "))?;
        writeln!(w, "residual_inf {:e}", self.residual_inf)?;
        writeln!(w, "converged {}", self.converged)?;
        writeln!(w, "iterations {}", self.iterations)?;
        writeln!(w, "visits {}", self.visit_counts.is_some())?;
        writeln!(w, "order row-major f64-le")?;
        writeln!(w, "end")?;
        for f in &self.fields {
            for v in f {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        if let Some(vc) = &self.visit_counts {
            for &c in vc {
                w.write_all(&(c as f64).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let header = read_header(&mut r, "coarsekit-manifold 1")?;
        let get = |k: &str| header.iter().find(|(a, _)| a == k).map(|(_, b)| b.clone()).ok_or_else(|| Error::Format(format!("missing header key `{k}`")));
        let shape: Vec<usize> = parse_list(&get("shape")?)?;
        let grid = CoarseGrid { lo: parse_list(&get("lo")?)?, hi: parse_list(&get("hi")?)?, shape };
        grid.validate().map_err(|e| Error::Format(e.to_string()))?;
        let names: Vec<String> = get("fields")?.split_whitespace().map(str::to_string).collect();
        let n = grid.len();
        let mut fields = Vec::with_capacity(names.len());
        for _ in 0..names.len() {
            fields.push(read_f64s(&mut r, n)?);
        }
        let has_visits = get("visits")? == "true";
        let visit_counts = if has_visits { Some(read_f64s(&mut r, n)?.into_iter().map(|v| v as u32).collect()) } else { None };
        let tau = match get("tau")?.as_str() {
            "none" => None,
            t => Some(t.parse().map_err(|_| Error::Format("bad tau".into()))?),
        };
        Ok(Self {
            grid,
            names,
            fields,
            residual_inf: get("residual_inf")?.parse().map_err(|_| Error::Format("bad residual".into()))?,
            converged: get("converged")? == "true",
            iterations: get("iterations")?.parse().map_err(|_| Error::Format("bad iterations".into()))?,
            visit_counts,
            tau,
            system_name: get("system")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

pub(crate) fn read_header<R: BufRead>(r: &mut R, magic: &str) -> Result<Vec<(String, String)>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != magic {
        return Err(Error::Format(format!("expected `{magic}` header")));
    }
    let mut out = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("header not terminated".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            return Ok(out);
        }
        let (k, v) = l.split_once(' ').unwrap_or((l, ""));
        out.push((k.to_string(), v.to_string()));
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace().map(|t| t.parse::<T>().map_err(|_| Error::Format(format!("cannot parse `{t}`")))).collect()
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated data block: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub n_bursts: usize,
    /// Fast time of each burst; the coarse image exists on `[0, length − τ]`.
    pub burst_length: f64,
    /// Initial states are drawn uniformly from this box.
    pub ic_lo: Vec<f64>,
    pub ic_hi: Vec<f64>,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Keep one sample every this many steps.
    pub stride: usize,
    /// Initial states used in addition to the random draws.
    #[serde(default)]
    pub extra_ics: Vec<Vec<f64>>,
}

/// Per-node record of the sample nearest the node.
#[derive(Debug, Clone)]
struct Best {
    dist: f64,
    unknowns: Vec<f64>,
}

/// Fill a family from fine bursts: every grid node takes the unknowns of the
/// sample whose coarse image fell nearest to it; unvisited nodes copy their
/// nearest visited node.
pub fn seed_from_fine(problem: &PlimProblem, base: &SystemSpec, obs: &Observable, grid: &CoarseGrid, cfg: &SeedConfig) -> Result<ManifoldFamily> {
    let tau = problem.tau.ok_or_else(|| Error::InvalidArgument("seeding needs an augmented problem".into()))?;
    if cfg.ic_lo.len() != base.dim() || cfg.ic_hi.len() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), got: cfg.ic_lo.len() });
    }
    if !(cfg.burst_length > tau) || cfg.n_bursts + cfg.extra_ics.len() == 0 || cfg.stride == 0 {
        return Err(Error::InvalidArgument("need n_bursts > 0, stride > 0 and burst_length > tau".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ics: Vec<Vec<f64>> = (0..cfg.n_bursts)
        .map(|_| cfg.ic_lo.iter().zip(&cfg.ic_hi).map(|(&a, &b)| if b > a { rng.gen_range(a..b) } else { a }).collect())
        .collect();
    for ic in &cfg.extra_ics {
        base.check_dim(ic)?;
        ics.push(ic.clone());
    }
    let samples = ics
        .par_iter()
        .map(|ic| burst_samples(base, obs, tau, ic, cfg))
        .collect::<Result<Vec<_>>>()?;
    seed_from_samples(problem, grid, samples.iter().flatten())
}

/// `(coords, unknowns)` pairs along one fine burst.
fn burst_samples(base: &SystemSpec, obs: &Observable, tau: f64, ic: &[f64], cfg: &SeedConfig) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    struct Rec {
        stride: usize,
        count: usize,
        traj: Trajectory,
        cum: CumulativeRecorder,
    }
    impl Observer for Rec {
        fn observe(&mut self, t: f64, s: &[f64]) -> Result<()> {
            if self.count % self.stride == 0 {
                self.traj.push(t, s)?;
            }
            self.count += 1;
            self.cum.observe(t, s)
        }
    }
    let mut rec = Rec {
        stride: cfg.stride,
        count: 0,
        traj: Trajectory::with_default_names(base.dim()),
        cum: CumulativeRecorder::new(obs.clone(), cfg.stride),
    };
    integrate_observed(base, ic, 0.0, cfg.burst_length, &cfg.integrator, &mut rec)?;
    rec.cum.finish();
    let tr = rec.traj;
    let lay = AugmentedLayout::of(base, obs);
    let mut out = Vec::new();
    for (i, &t) in tr.times().iter().enumerate() {
        if t + tau > tr.last_time() + 1e-9 {
            break;
        }
        let c = rec.cum.average(t, t + tau)?;
        out.push((lay.join(&tr.sample(t + tau), tr.state(i), &c), Vec::new()));
    }
    Ok(out)
}

fn seed_from_samples<'a, I>(problem: &PlimProblem, grid: &CoarseGrid, samples: I) -> Result<ManifoldFamily>
where
    I: Iterator<Item = &'a (Vec<f64>, Vec<f64>)>,
{
    let n = grid.len();
    let mut best: Vec<Option<Best>> = vec![None; n];
    let mut visits = vec![0u32; n];
    for (u, _) in samples {
        let coords: Vec<f64> = problem.coord_idx.iter().map(|&i| u[i]).collect();
        if !grid.contains_padded(&coords) {
            continue;
        }
        let (node, dist) = grid.nearest(&coords);
        if dist > 0.5 * (grid.dim() as f64).sqrt() + 1e-12 {
            continue;
        }
        visits[node] += 1;
        let better = best[node].as_ref().map_or(true, |b| dist < b.dist);
        if better {
            best[node] = Some(Best { dist, unknowns: problem.unknown_idx.iter().map(|&i| u[i]).collect() });
        }
    }
    finish_seed(problem, grid, best, visits)
}

impl CoarseGrid {
    /// Inside the box grown by half a cell on every side.
    fn contains_padded(&self, x: &[f64]) -> bool {
        let h = self.spacing();
        x.iter().enumerate().all(|(k, &v)| v >= self.lo[k] - 0.5 * h[k] && v <= self.hi[k] + 0.5 * h[k])
    }
}

fn finish_seed(problem: &PlimProblem, grid: &CoarseGrid, best: Vec<Option<Best>>, visits: Vec<u32>) -> Result<ManifoldFamily> {
    let n = grid.len();
    let visited: Vec<usize> = (0..n).filter(|&i| best[i].is_some()).collect();
    if visited.is_empty() || 2 * visited.len() < n {
        return Err(Error::InsufficientCoverage { visited: visited.len(), total: n });
    }
    let nu = problem.unknown_idx.len();
    let mut fields = vec![vec![0.0; n]; nu];
    let h = grid.spacing();
    let scaled = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).enumerate().map(|(k, (x, y))| if h[k] > 0.0 { ((x - y) / h[k]).powi(2) } else { 0.0 }).sum()
    };
    let visited_nodes: Vec<Vec<f64>> = visited.iter().map(|&i| grid.node(i)).collect();
    for node in 0..n {
        let src = match &best[node] {
            Some(b) => &b.unknowns,
            None => {
                let x = grid.node(node);
                let (k, _) = visited_nodes
                    .iter()
                    .enumerate()
                    .map(|(k, y)| (k, scaled(&x, y)))
                    .fold((0, f64::INFINITY), |acc, (k, d)| if d < acc.1 { (k, d) } else { acc });
                &best[visited[k]].as_ref().expect("visited").unknowns
            }
        };
        for (f, v) in fields.iter_mut().zip(src) {
            f[node] = *v;
        }
    }
    Ok(ManifoldFamily {
        grid: grid.clone(),
        names: problem.unknown_names(),
        fields,
        residual_inf: f64::NAN,
        converged: false,
        iterations: 0,
        visit_counts: Some(visits),
        tau: problem.tau,
        system_name: problem.system.name.clone(),
    })
}

/// Seed directly from a set of full (augmented) states.
pub fn seed_from_states(problem: &PlimProblem, grid: &CoarseGrid, states: &[Vec<f64>]) -> Result<ManifoldFamily> {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = states.iter().map(|u| (u.clone(), Vec::new())).collect();
    seed_from_samples(problem, grid, pairs.iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpwindOrder {
    #[serde(rename = "1")]
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlimConfig {
    pub pseudo_dt: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub upwind_order: UpwindOrder,
}

impl Default for PlimConfig {
    fn default() -> Self {
        Self { pseudo_dt: 1e-3, max_iters: 20_000, tol: 1e-8, upwind_order: UpwindOrder::First }
    }
}

impl PlimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pseudo_dt > 0.0 && self.tol > 0.0) {
            return Err(Error::InvalidArgument("pseudo_dt and tol must be positive".into()));
        }
        Ok(())
    }
}

/// Discrete residual `Σ_j a_j D_j G − H(G)` at every node; `None` at inflow nodes.
fn node_residuals(problem: &PlimProblem, family: &ManifoldFamily) -> Result<Vec<Option<Vec<f64>>>> {
    let grid = &family.grid;
    let h = grid.spacing();
    let strides = grid.strides();
    let d = problem.system.dim();
    let nu = problem.unknown_idx.len();
    let field = problem.system.field_fn();
    (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let idx = grid.multi_index(node);
            let coords = grid.node(node);
            let unknowns = family.at_node(node);
            let mut u = vec![0.0; d];
            problem.assemble(&coords, &unknowns, &mut u);
            let mut du = vec![0.0; d];
            field(&u, &mut du)?;
            let mut r: Vec<f64> = problem.unknown_idx.iter().map(|&i| -du[i]).collect();
            for (j, &ci) in problem.coord_idx.iter().enumerate() {
                let a = du[ci];
                if a == 0.0 || grid.shape[j] == 1 {
                    continue;
                }
                let nb = if a > 0.0 {
                    if idx[j] == 0 {
                        return Ok(None);
                    }
                    node - strides[j]
                } else {
                    if idx[j] + 1 == grid.shape[j] {
                        return Ok(None);
                    }
                    node + strides[j]
                };
                for k in 0..nu {
                    let g = &family.fields[k];
                    let deriv = if a > 0.0 { (g[node] - g[nb]) / h[j] } else { (g[nb] - g[node]) / h[j] };
                    r[k] += a * deriv;
                }
            }
            Ok(Some(r))
        })
        .collect()
}

fn residual_max(res: &[Option<Vec<f64>>]) -> f64 {
    res.iter().flatten().flat_map(|r| r.iter()).fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Max-norm discrete invariance residual over non-inflow nodes.
pub fn invariance_residual(problem: &PlimProblem, family: &ManifoldFamily) -> Result<f64> {
    Ok(residual_max(&node_residuals(problem, family)?))
}

/// Pseudo-time relaxation `G ← G − Δ(a·∇G − H(G))` with a double-buffered update.
///
/// Returns the converged family, or the best iterate with `converged = false`
/// when `max_iters` is reached. A residual that grows tenfold over 100
/// iterations is reported as divergence.
pub fn solve_invariance(problem: &PlimProblem, family0: &ManifoldFamily, cfg: &PlimConfig) -> Result<ManifoldFamily> {
    cfg.validate()?;
    if family0.fields.len() != problem.unknown_idx.len() {
        return Err(Error::DimensionMismatch { expected: problem.unknown_idx.len(), got: family0.fields.len() });
    }
    if family0.fields.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial family is not finite".into()));
    }
    if family0.grid.shape.iter().any(|&n| n < 3) {
        return Err(Error::InvalidArgument("relaxation needs at least 3 nodes per axis".into()));
    }
    let mut fam = family0.clone();
    let mut best = fam.clone();
    let mut history: Vec<f64> = Vec::new();
    for it in 0..=cfg.max_iters {
        let res = node_residuals(problem, &fam)?;
        let r = residual_max(&res);
        history.push(r);
        if !r.is_finite() {
            return Err(Error::Divergence { iteration: it, history });
        }
        if r < best.residual_inf || it == 0 {
            best = fam.clone();
            best.residual_inf = r;
            best.iterations = it;
        }
        if r <= cfg.tol {
            fam.residual_inf = r;
            fam.converged = true;
            fam.iterations = it;
            return Ok(fam);
        }
        if it >= 100 && r > 10.0 * history[it - 100] {
            return Err(Error::Divergence { iteration: it, history });
        }
        if it == cfg.max_iters {
            break;
        }
        for (k, g) in fam.fields.iter_mut().enumerate() {
            for (node, r) in res.iter().enumerate() {
                if let Some(r) = r {
                    g[node] -= cfg.pseudo_dt * r[k];
                }
            }
        }
    }
    log::warn!("invariance solver stopped at {} iterations with residual {:.3e}", cfg.max_iters, best.residual_inf);
    best.converged = false;
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct CoarseRun {
    /// Columns are the coarse coordinates.
    pub trajectory: Trajectory,
    /// True when the run stopped because the state left the grid.
    pub exited: bool,
}

/// RK4 on the coarse theory `dx/dt = a(x, G(x))` with `G` interpolated multilinearly.
pub fn coarse_evolve(problem: &PlimProblem, family: &ManifoldFamily, x0: &[f64], t1: f64, coarse_dt: f64) -> Result<CoarseRun> {
    if x0.len() != problem.coord_idx.len() {
        return Err(Error::DimensionMismatch { expected: problem.coord_idx.len(), got: x0.len() });
    }
    if !family.grid.contains(x0) {
        return Err(Error::OutsideGrid { state: x0.to_vec() });
    }
    if !(coarse_dt > 0.0 && t1 > 0.0) {
        return Err(Error::InvalidArgument("need coarse_dt > 0 and t1 > 0".into()));
    }
    let d = problem.system.dim();
    let field = problem.system.field_fn();
    let rhs = |x: &[f64], out: &mut [f64]| -> Result<()> {
        let g = family.interpolate(x).ok_or_else(|| Error::OutsideGrid { state: x.to_vec() })?;
        let mut u = vec![0.0; d];
        problem.assemble(x, &g, &mut u);
        let mut du = vec![0.0; d];
        field(&u, &mut du)?;
        for (o, &ci) in out.iter_mut().zip(&problem.coord_idx) {
            *o = du[ci];
        }
        Ok(())
    };
    let names: Vec<String> = problem.coord_idx.iter().map(|&i| problem.system.component_names[i].clone()).collect();
    let mut tr = Trajectory::new(x0.len(), names);
    tr.push(0.0, x0)?;
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let n = (t1 / coarse_dt - 1e-9).ceil().max(1.0) as usize;
    let mut t = 0.0;
    for k in 1..=n {
        let t_next = if k == n { t1 } else { k as f64 * coarse_dt };
        let mut trial = x.clone();
        match rk.step(rhs, &mut trial, t_next - t) {
            Ok(()) if family.grid.contains(&trial) => {
                x = trial;
                t = t_next;
                tr.push(t, &x)?;
            }
            Ok(()) | Err(Error::OutsideGrid { .. }) => return Ok(CoarseRun { trajectory: tr, exited: true }),
            Err(e) => return Err(e),
        }
    }
    Ok(CoarseRun { trajectory: tr, exited: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn linear_problem(eps: f64) -> PlimProblem {
        let sys = catalog::linear_relaxation(eps).fast_time_system().unwrap();
        PlimProblem::new(sys, vec![1], vec![0]).unwrap()
    }

    #[test]
    fn interpolation_reproduces_nodes_and_multilinear_functions() {
        let g = CoarseGrid::new(vec![0.0, -1.0], vec![2.0, 1.0], vec![5, 4]).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        let vals: Vec<f64> = (0..g.len()).map(|i| f(&g.node(i))).collect();
        for i in 0..g.len() {
            assert_eq!(g.interpolate(&vals, &g.node(i)).unwrap(), vals[i]);
        }
        for p in [[0.3, 0.2], [1.99, -0.95], [1.0, 0.7]] {
            assert!((g.interpolate(&vals, &p).unwrap() - f(&p)).abs() < 1e-12);
        }
        assert!(g.interpolate(&vals, &[2.5, 0.0]).is_none());
    }

    #[test]
    fn grid_needs_three_nodes() {
        assert!(CoarseGrid::new(vec![0.0], vec![1.0], vec![2]).is_err());
    }

    #[test]
    fn single_node_seed_carries_sample() {
        let p = linear_problem(0.01);
        let grid = CoarseGrid::single_node(vec![0.5]);
        let fam = seed_from_states(&p, &grid, &[vec![0.25, 0.5]]).unwrap();
        assert_eq!(fam.at_node(0), vec![0.25]);
        assert_eq!(fam.visit_counts, Some(vec![1]));
    }

    #[test]
    fn seeded_visited_node_reproduces_sample() {
        let p = linear_problem(0.01);
        let grid = CoarseGrid::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let fam = seed_from_states(&p, &grid, &[vec![0.11, 0.5], vec![0.2, 0.0], vec![0.3, 0.9]]).unwrap();
        assert_eq!(fam.at_node(1), vec![0.11]);
        assert_eq!(fam.at_node(0), vec![0.2]);
        assert_eq!(fam.at_node(2), vec![0.3]);
    }

    #[test]
    fn poor_coverage_is_an_error() {
        let p = linear_problem(0.01);
        let grid = CoarseGrid::new(vec![0.0], vec![1.0], vec![11]).unwrap();
        assert!(matches!(seed_from_states(&p, &grid, &[vec![0.0, 0.5]]), Err(Error::InsufficientCoverage { visited: 1, total: 11 })));
    }

    #[test]
    fn equilibrium_family_is_stationary() {
        let sys = catalog::lorenz_default();
        let obs = Observable::component("x", 0);
        let p = PlimProblem::augmented(&sys, &obs, 50.0).unwrap();
        // Coordinates (c); unknowns (f_f, f).
        let grid = CoarseGrid::new(vec![7.0], vec![9.0], vec![5]).unwrap();
        let fam = ManifoldFamily::constant(grid, &p, &[8.0, 8.0, 24.0, 8.0, 8.0, 24.0]);
        let out = solve_invariance(&p, &fam, &PlimConfig::default()).unwrap();
        assert_eq!(out.residual_inf, 0.0);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.fields, fam.fields);
    }

    #[test]
    fn linear_slow_manifold() {
        let eps = 0.01;
        let p = linear_problem(eps);
        let grid = CoarseGrid::new(vec![0.0], vec![2.0], vec![41]).unwrap();
        // Seed away from the manifold to exercise the relaxation.
        let states: Vec<Vec<f64>> = (0..41).map(|i| vec![0.3 * (i as f64 * 0.7).sin(), i as f64 * 0.05]).collect();
        let mut fam = seed_from_states(&p, &grid, &states).unwrap();
        fam.fields[0][0] = -eps;
        let cfg = PlimConfig { pseudo_dt: 0.5, max_iters: 5000, tol: 1e-12, ..PlimConfig::default() };
        let out = solve_invariance(&p, &fam, &cfg).unwrap();
        assert!(out.converged, "{}", out.residual_inf);
        for i in 0..grid.len() {
            let l = grid.node(i)[0];
            assert!((out.fields[0][i] - (l - eps)).abs() < 10.0 * eps * eps, "L = {l}");
        }
        let again = invariance_residual(&p, &out).unwrap();
        assert!((again - out.residual_inf).abs() < 1e-12);
    }

    #[test]
    fn coarse_load_follows_closed_form() {
        let sys = catalog::forced_monotone_lorenz(10.0, 8.0 / 3.0, 25.0);
        let obs = Observable::component("x", 0);
        let p = PlimProblem::augmented(&sys, &obs, 50.0).unwrap();
        let grid = CoarseGrid::new(vec![-20.0, 0.0], vec![30.0, 10.0], vec![6, 6]).unwrap();
        // G_f ≡ G in x, so c stays put.
        let fam = ManifoldFamily::constant(grid, &p, &[3.0, 1.0, 20.0, 3.0, 1.0, 20.0, 5.0]);
        let run = coarse_evolve(&p, &fam, &[1.5, 0.0], 4.0, 1e-3).unwrap();
        let last = run.trajectory.last_state();
        assert!((last[1] - 2.0).abs() < 1e-6);
        assert!(run.trajectory.states().all(|s| s[0] == 1.5));
        assert!(!run.exited);
    }

    #[test]
    fn coarse_start_outside_grid() {
        let p = linear_problem(0.01);
        let grid = CoarseGrid::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let fam = ManifoldFamily::constant(grid, &p, &[0.0]);
        assert!(matches!(coarse_evolve(&p, &fam, &[2.0], 1.0, 0.1), Err(Error::OutsideGrid { .. })));
    }

    #[test]
    fn coarse_exit_is_flagged() {
        let p = linear_problem(0.5);
        let grid = CoarseGrid::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let fam = ManifoldFamily::constant(grid, &p, &[0.0]);
        let run = coarse_evolve(&p, &fam, &[0.5], 10.0, 0.1).unwrap();
        assert!(run.exited);
        assert!(run.trajectory.last_state()[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn family_round_trips_through_file_format() {
        let p = linear_problem(0.01);
        let grid = CoarseGrid::new(vec![0.0], vec![1.0], vec![3]).unwrap();
        let mut fam = seed_from_states(&p, &grid, &[vec![0.11, 0.5], vec![0.2, 0.0], vec![0.3, 0.9]]).unwrap();
        fam.residual_inf = 1.5e-3;
        let mut buf = Vec::new();
        fam.write(&mut buf).unwrap();
        let back = ManifoldFamily::read(&buf[..]).unwrap();
        assert_eq!(back, fam);
    }
}
