use coarsekit::catalog;
use coarsekit::coarse::{
    assemble, constrained_ic_pairs, hald_mesh, hald_symmetries, level_set, level_set_sheets, lorenz_mesh, lorenz_symmetry, pair_battery,
    random_pairs, select_alpha, solve_with, symmetric_series_gap, symmetrize, symmetry_defect, IcDomain, PiField, PiSolutionFamily,
    Selection,
};
use coarsekit::{IntegratorConfig, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CriteriaParams, ExperimentConfig, FindCoarseParams};
use crate::error::CliError;
use crate::output::RunOutput;

/// A coarse field together with what was learned while building it.
pub struct FieldBuild {
    pub field: PiField,
    pub family: PiSolutionFamily,
    pub selection: Selection,
    /// Relative `max |K − Kᵀ|`.
    pub asymmetry: f64,
    /// Smallest `vᵀKv / (vᵀv ‖K‖_F)` over random probes.
    pub min_rayleigh: f64,
    /// Symmetry defect of the chosen field, one per sign map.
    pub defects: Vec<f64>,
}

fn symmetry_maps(system: &str) -> Vec<Vec<f64>> {
    if system == "lorenz" {
        vec![lorenz_symmetry()]
    } else {
        hald_symmetries()
    }
}

/// Assemble, solve, optionally symmetrize and pick a member of the solution family.
pub fn build_field(system: &str, p: &FindCoarseParams, seed: u64) -> Result<FieldBuild, CliError> {
    let sys = super::system(system, 0.0)?;
    let mesh = match system {
        "lorenz" => lorenz_mesh(if p.mesh_n == 0 { 15 } else { p.mesh_n })?,
        _ => hald_mesh(if p.mesh_n == 0 { 8 } else { p.mesh_n })?,
    }
    .with_quad(p.quad)?;
    let ls = assemble(&mesh, &sys, p.a, p.b)?;
    let asymmetry = ls.asymmetry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = ls.frobenius();
    let mut min_rayleigh = f64::INFINITY;
    for _ in 0..p.psd_probes {
        let v: Vec<f64> = (0..ls.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kv = ls.mul(&v);
        let q: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        min_rayleigh = min_rayleigh.min(q / (vv * scale));
    }
    let mut family = solve_with(&ls, p.rank_tol, p.solver)?;
    let maps = symmetry_maps(system);
    if p.symmetrize {
        family.x_part = symmetrize(&mesh, &family.x_part, &maps)?;
    }
    let selection = select_alpha(&family, &p.sweep, p.max_dirs, p.floor)?;
    let field = family.blend(&selection.entries[selection.chosen].alpha)?;
    let defects = maps.iter().map(|m| symmetry_defect(&mesh, &field.values, m)).collect::<Result<Vec<_>, _>>()?;
    Ok(FieldBuild { field, family, selection, asymmetry, min_rayleigh, defects })
}

pub(super) fn run_find(cfg: &ExperimentConfig, p: &FindCoarseParams, out: &mut RunOutput) -> Result<(), CliError> {
    let b = build_field(&cfg.system, p, cfg.seed)?;
    let mesh = &b.field.mesh;
    let chosen = &b.selection.entries[b.selection.chosen];
    b.field.save(&out.dir.join("field.pifield"))?;
    out.files.push("field.pifield".into());
    out.json("selection.json", &b.selection)?;
    let idx: Vec<f64> = (0..b.family.singular_values.len()).map(|i| i as f64).collect();
    out.table("singular_values.csv", &["index", "sigma"], &[&idx, &b.family.singular_values])?;

    let vmin = b.field.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = b.field.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let level = p.level.unwrap_or(0.5 * (vmin + vmax));
    let cells = level_set(&b.field, level);
    let sheets = level_set_sheets(mesh, &cells);
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); mesh.dim() + 1];
    for c in &cells {
        for x in &c.crossings {
            rows[0].push(c.element as f64);
            for (j, v) in x.iter().enumerate() {
                rows[j + 1].push(*v);
            }
        }
    }
    let mut header = vec!["element".to_string()];
    header.extend((0..mesh.dim()).map(|j| format!("f{j}")));
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let c: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
    out.table("level_set.csv", &h, &c)?;

    out.metric("nodes", mesh.n_nodes() as f64);
    out.metric("asymmetry", b.asymmetry);
    out.metric("min_rayleigh", b.min_rayleigh);
    out.metric("null_dim", b.family.null_basis.len() as f64);
    out.metric("symmetry_defect", b.defects.iter().cloned().fold(0.0, f64::max));
    out.metric("normalized_variance", chosen.normalized_variance);
    out.metric("roughness", chosen.roughness);
    out.metric("variance_to_mean", chosen.variance_to_mean);
    out.metric("field_min", vmin);
    out.metric("field_max", vmax);
    out.metric("level", level);
    out.metric("level_cells", cells.len() as f64);
    out.metric("level_sheets", sheets as f64);
    out.stage(format!(
        "find-coarse {}: {} nodes, null space {}, |K − Kᵀ| {:.1e}, chosen α {:?} (normalized variance {:.3})",
        cfg.system,
        mesh.n_nodes(),
        b.family.null_basis.len(),
        b.asymmetry,
        chosen.alpha,
        chosen.normalized_variance
    ));
    out.stage(format!("level set Π = {level:.4}: {} cells in {sheets} sheet(s)", cells.len()));
    Ok(())
}

fn domain(system: &str, p: &CriteriaParams) -> IcDomain {
    let (lo, hi) = if !p.domain_lo.is_empty() {
        (p.domain_lo.clone(), p.domain_hi.clone())
    } else if system == "lorenz" {
        (vec![-15.0, -20.0, 5.0], vec![15.0, 20.0, 45.0])
    } else {
        (vec![-2.0; 4], vec![2.0; 4])
    };
    let d = IcDomain::boxed(lo, hi);
    let cap = if p.energy_cap > 0.0 {
        p.energy_cap
    } else if system == "hald" {
        2.0
    } else {
        return d;
    };
    d.with_accept(move |f| catalog::hald_energy(f) <= cap)
}

pub(super) fn run_criteria(cfg: &ExperimentConfig, p: &CriteriaParams, out: &mut RunOutput) -> Result<(), CliError> {
    let field = match &p.field {
        Some(path) => PiField::load(path)?,
        None => build_field(&cfg.system, &p.find, cfg.seed)?.field,
    };
    let sys: SystemSpec = super::system(&cfg.system, 0.0)?;
    if field.mesh.dim() != sys.dim() {
        return Err(CliError::Usage(format!("field has dimension {}, {} has {}", field.mesh.dim(), cfg.system, sys.dim())));
    }
    let dom = domain(&cfg.system, p);
    let integ = IntegratorConfig::rk4(p.dt).record_every(p.record_every);
    let short = if p.short_horizon > 0.0 { p.short_horizon } else if cfg.system == "lorenz" { 0.3 } else { 0.4 };

    let pairs = constrained_ic_pairs(&field, &sys, &dom, p.n_pairs, cfg.seed)?;
    if pairs.pairs.is_empty() {
        return Err(CliError::Numerical(format!("no constrained pairs found ({} skipped)", pairs.skipped)));
    }
    let d = sys.dim();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 2 * d];
    for (a, b) in &pairs.pairs {
        for j in 0..d {
            cols[j].push(a[j]);
            cols[d + j].push(b[j]);
        }
    }
    let mut header: Vec<String> = (0..d).map(|j| format!("f1_{j}")).collect();
    header.extend((0..d).map(|j| format!("f2_{j}")));
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let c: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
    out.table("pairs.csv", &h, &c)?;

    let long = pair_battery("constrained", &field, &sys, &pairs, p.horizon, &integ)?;
    out.json("criteria_constrained.json", &long)?;
    out.metric("pairs", long.pairs as f64);
    out.metric("skipped", pairs.skipped as f64);
    out.metric("median_ratio", long.medians.ratio);
    out.metric("median_delta_c", long.medians.delta_c);
    out.metric("median_delta_f", long.medians.delta_f);
    out.stage(format!(
        "{} constrained pairs ({} skipped) over T = {}: median Δc/Δf {:.4}",
        long.pairs, pairs.skipped, p.horizon, long.medians.ratio
    ));

    let sc = pair_battery("short-constrained", &field, &sys, &pairs, short, &integ)?;
    out.json("criteria_short.json", &sc)?;
    out.metric("short_constrained_delta_c", sc.medians.delta_c);
    if p.random_pairs {
        let rnd = random_pairs(&dom, p.n_pairs, cfg.seed.wrapping_add(1));
        let rl = pair_battery("random", &field, &sys, &rnd, p.horizon, &integ)?;
        let rs = pair_battery("short-random", &field, &sys, &rnd, short, &integ)?;
        out.json("criteria_random.json", &rl)?;
        out.json("criteria_short_random.json", &rs)?;
        out.metric("random_median_ratio", rl.medians.ratio);
        out.metric("short_random_delta_c", rs.medians.delta_c);
        out.metric("short_factor", rs.medians.delta_c / sc.medians.delta_c);
        out.stage(format!("random pairs: median Δc/Δf {:.4} over T = {}", rl.medians.ratio, p.horizon));
        out.stage(format!(
            "T = {short}: median Δc constrained {:.4} vs random {:.4} (factor {:.2})",
            sc.medians.delta_c,
            rs.medians.delta_c,
            rs.medians.delta_c / sc.medians.delta_c
        ));
    }

    let mut gap: f64 = 0.0;
    for m in symmetry_maps(&cfg.system) {
        gap = gap.max(symmetric_series_gap(&field, &sys, &pairs.pairs[0].0, &m, p.symmetry_horizon, &integ)?);
    }
    out.metric("symmetric_gap", gap);
    out.stage(format!("mirrored start: largest |Π(f) − Π(Sf)| {gap:.2e}"));
    Ok(())
}
