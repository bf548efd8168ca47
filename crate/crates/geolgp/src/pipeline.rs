//! End-to-end orchestration: a validated configuration in, solved artifacts and a report out.
//!
//! Stage order: boundary measure → atom discretization → cost matrix → optimal plan (simplex
//! and non-crossing) → ray tracing → density rasterization → potential extension → flow assembly
//! → solution reconstruction. Artifacts stream to the output directory as stages complete, so a
//! failure after planning still leaves the plan and a report on disk; the report records every
//! check that had run by then together with the error.
//!
//! Determinism: every stage is deterministic given the configuration (ordered maps, serial
//! deposition, fixed-format writers), so re-running a config byte-reproduces all artifacts.
//!
//! Checks (configurable, see [`CheckKind`]):
//!
//! * `mass_balance` — `∮ f = 0` and mass conservation of the rasterized density against the
//!   traced transport cost.
//! * `duality` — plan cost against the dual value from the optimal simplex multipliers.
//! * `noncrossing` — traced rays have no interior crossings, and the uncrossed plan keeps the
//!   simplex cost.
//! * `divergence` — weak divergence residual of the weighted flow against the trace derivative.
//! * `dual_field` — admissibility and boundary pairing of the rotated potential gradient.
//! * `lp_ratio` — density-to-data norm ratios at the configured exponents.

use crate::config::{config_hash, CheckKind, Config, Instance};
use crate::density::{assemble_density, assemble_flow, divergence_residual};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::ScalarGrid;
use crate::metric::{fmm, MetricOpts};
use crate::reconstruct::{flow_to_u, Anchor};
use crate::transport::{
    atoms_on_boundary, cost_matrix, crossing_count, solve_noncrossing, solve_simplex,
    potential_from_duals, trace_flows, Atom, NoncrossingPlan, Ray, SimplexResult,
};
use crate::verify::check_dual_equivalence;
use crate::weight::ConformalWeight;
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Outcome of one configured check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    /// Free-form context: which parts were skipped and why, or the failure detail.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Instance facts recorded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub domain: String,
    pub weight: String,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Actual atom counts after discretization (intrinsic jumps included).
    pub n_source: usize,
    pub n_target: usize,
    pub seed: u64,
    pub tau_split: f64,
}

/// The machine-readable run report, also written as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub instance: InstanceSummary,
    pub config_hash: String,
    pub checks: Vec<CheckResult>,
    pub all_pass: bool,
    /// Present when a stage failed after planning; the checks above are those that completed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run the full pipeline for a parsed configuration.
///
/// `raw` is the configuration text (hashed into the report), `base_dir` resolves relative paths
/// inside the config, and `out_override` replaces the config's output directory. On success the
/// report is returned and written to `<out>/report.json`; on a post-planning failure the partial
/// report (with the error recorded) is still written before the error propagates.
pub fn run(
    config: &Config,
    raw: &str,
    base_dir: &Path,
    out_override: Option<&Path>,
) -> Result<Report> {
    let inst = config.build(base_dir)?;
    let out_dir: PathBuf =
        out_override.map(Path::to_path_buf).unwrap_or_else(|| config.out_dir.clone());
    std::fs::create_dir_all(&out_dir)?;

    // Planning. Failures up to here abort without artifacts: there is nothing to report yet.
    let f = inst.datum.tangential_derivative(&inst.domain);
    let (fp, fm) = f.split();
    let mass_scale = fp.positive_mass().max(fm.positive_mass());
    if !(mass_scale > 1e-12) {
        return Err(Error::InvalidInput(
            "the boundary trace is constant: there is no mass to transport".into(),
        ));
    }
    let src = atoms_on_boundary(&inst.domain, &fp.discretize(&inst.domain, config.atoms.n_source)?);
    let tgt = atoms_on_boundary(&inst.domain, &fm.discretize(&inst.domain, config.atoms.n_target)?);
    let opts = MetricOpts::for_domain(&inst.domain);
    let costs = cost_matrix(&inst.weight, &inst.domain, &src, &tgt, &opts)?;
    let supply: Vec<f64> = src.iter().map(|a| a.mass).collect();
    let demand: Vec<f64> = tgt.iter().map(|a| a.mass).collect();
    let simplex = solve_simplex(&costs, &supply, &demand)?;
    let plan = solve_noncrossing(&costs, &src, &tgt)?;

    let summary = InstanceSummary {
        domain: describe_domain(config),
        weight: describe_weight(config),
        nx: inst.spec.nx,
        ny: inst.spec.ny,
        h: inst.spec.h,
        n_source: src.len(),
        n_target: tgt.len(),
        seed: config.seed,
        tau_split: inst.split.value(),
    };

    let mut checks: Vec<CheckResult> = Vec::new();
    let enabled = |k: CheckKind| inst.checks.contains(&k);

    // Artifact stages. Each writes as soon as its data exists so failures keep partial output.
    let staged = (|checks: &mut Vec<CheckResult>| -> Result<()> {
        write_plan(&out_dir, &src, &tgt, &plan)?;
        if enabled(CheckKind::Duality) {
            checks.push(duality_check(&simplex, &supply, &demand));
        }

        let rays = trace_flows(&inst.weight, &inst.domain, &src, &tgt, &plan.flows, &opts)?;
        write_rays(&out_dir, &rays)?;
        if enabled(CheckKind::Noncrossing) {
            checks.push(noncrossing_check(&rays, &plan, &simplex, &inst));
        }

        let (sigma, sigma_plus, sigma_minus) = assemble_density(&rays, inst.spec, inst.split)?;
        sigma.write_csv(&out_dir.join("sigma.csv"))?;
        sigma.write_pgm(&out_dir.join("sigma.pgm"))?;
        sigma_plus.write_csv(&out_dir.join("sigma_plus.csv"))?;
        sigma_minus.write_csv(&out_dir.join("sigma_minus.csv"))?;
        if enabled(CheckKind::MassBalance) {
            checks.push(mass_balance_check(&f, &sigma, &rays, &plan, mass_scale));
        }
        if enabled(CheckKind::LpRatio) {
            checks.push(lp_ratio_check(&sigma, &f, &inst, &config.p_values));
        }

        let (_, psi_dst) = potential_from_duals(&simplex);
        let psi = build_potential(&inst, &tgt, &psi_dst)?;
        psi.write_csv(&out_dir.join("psi.csv"))?;
        if enabled(CheckKind::DualField) {
            checks.push(dual_field_check(&psi, &inst, plan.cost));
        }

        let v_raw = assemble_flow(&rays, &psi, inst.spec)?;
        if enabled(CheckKind::Divergence) {
            let rep = divergence_residual(&v_raw, &inst.weight, &f, &inst.domain);
            let mut metrics = BTreeMap::new();
            metrics.insert("residual".into(), rep.residual);
            metrics.insert("mass_balance".into(), rep.mass_balance);
            checks.push(CheckResult {
                name: CheckKind::Divergence.name().into(),
                pass: rep.residual <= 0.25,
                metrics,
                note: None,
            });
        }

        // The reconstruction consumes the weighted flow `v/k`, whose magnitude is the
        // weight-invariant density of the minimal-flow formulation.
        let k_min = inst.weight.k_min();
        let beck = v_raw.map_cells(|c, val| {
            val * (1.0 / inst.weight.value(c).unwrap_or(k_min))
        });
        let u_field = flow_to_u(&beck, &inst.datum, Anchor::MeanTrace, &inst.domain)?;
        u_field.u.write_csv(&out_dir.join("u.csv"))?;
        write_shifted_pgm(&u_field.u, &out_dir.join("u.pgm"))?;
        Ok(())
    })(&mut checks);

    let error = staged.as_ref().err().map(|e| e.to_string());
    let all_pass = error.is_none() && checks.iter().all(|c| c.pass);
    let report =
        Report { instance: summary, config_hash: config_hash(raw), checks, all_pass, error };
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    std::fs::write(out_dir.join("report.json"), bytes)?;
    staged.map(|()| report)
}

fn describe_domain(config: &Config) -> String {
    match &config.domain {
        crate::config::DomainConfig::Circle { radius } => format!("circle radius {radius}"),
        crate::config::DomainConfig::Ellipse { a, b } => format!("ellipse {a} x {b}"),
    }
}

fn describe_weight(config: &Config) -> String {
    match &config.weight {
        crate::config::WeightConfig::Constant { a } => format!("constant {a}"),
        crate::config::WeightConfig::RadialBump { a, b, center, width } => {
            format!("radial bump {a}+{b} at ({}, {}) width {width}", center[0], center[1])
        }
        crate::config::WeightConfig::Bilinear { csv_path } => {
            format!("bilinear samples {}", csv_path.display())
        }
    }
}

fn duality_check(simplex: &SimplexResult, supply: &[f64], demand: &[f64]) -> CheckResult {
    let dual_value: f64 = supply.iter().zip(&simplex.u).map(|(s, u)| s * u).sum::<f64>()
        + demand.iter().zip(&simplex.v).map(|(d, v)| d * v).sum::<f64>();
    let gap_rel = (simplex.cost - dual_value).abs() / simplex.cost.abs().max(1e-30);
    let mut metrics = BTreeMap::new();
    metrics.insert("primal_cost".into(), simplex.cost);
    metrics.insert("dual_value".into(), dual_value);
    metrics.insert("gap_rel".into(), gap_rel);
    metrics.insert("iterations".into(), simplex.iterations as f64);
    CheckResult {
        name: CheckKind::Duality.name().into(),
        pass: gap_rel <= 1e-6,
        metrics,
        note: None,
    }
}

fn noncrossing_check(
    rays: &[Ray],
    plan: &NoncrossingPlan,
    simplex: &SimplexResult,
    inst: &Instance,
) -> CheckResult {
    let crossings = crossing_count(rays, inst.domain.diameter());
    let scale = simplex.cost.abs().max(1e-30);
    let cost_rel_gap = (plan.cost - simplex.cost).abs() / scale;
    let ray_cost = crate::transport::cost_of_rays(rays);
    let mut metrics = BTreeMap::new();
    metrics.insert("crossings".into(), crossings as f64);
    metrics.insert("cost_rel_gap".into(), cost_rel_gap);
    metrics.insert("ray_cost_rel_gap".into(), (ray_cost - plan.cost).abs() / scale);
    CheckResult {
        name: CheckKind::Noncrossing.name().into(),
        pass: crossings == 0 && cost_rel_gap <= 1e-9,
        metrics,
        note: None,
    }
}

fn mass_balance_check(
    f: &crate::boundary::BoundaryMeasure,
    sigma: &ScalarGrid,
    rays: &[Ray],
    plan: &NoncrossingPlan,
    mass_scale: f64,
) -> CheckResult {
    let f_total_abs = f.total().abs();
    let sigma_mass = sigma.integral();
    let ray_cost = crate::transport::cost_of_rays(rays);
    let conservation_gap = (sigma_mass - ray_cost).abs() / ray_cost.abs().max(1e-30);
    let mut metrics = BTreeMap::new();
    metrics.insert("f_total_abs".into(), f_total_abs);
    metrics.insert("sigma_mass".into(), sigma_mass);
    metrics.insert("plan_cost".into(), plan.cost);
    metrics.insert("conservation_rel_gap".into(), conservation_gap);
    CheckResult {
        name: CheckKind::MassBalance.name().into(),
        pass: f_total_abs <= 1e-9 * mass_scale.max(1.0) && conservation_gap <= 1e-6,
        metrics,
        note: None,
    }
}

fn lp_ratio_check(
    sigma: &ScalarGrid,
    f: &crate::boundary::BoundaryMeasure,
    inst: &Instance,
    p_values: &[f64],
) -> CheckResult {
    let mut metrics = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut pass = true;
    for &p in p_values {
        match crate::verify::check_lp_ratio(sigma, f, &inst.domain, p) {
            Ok(ratio) => {
                pass &= ratio.is_finite();
                metrics.insert(format!("ratio_p{p}"), ratio);
            }
            Err(_) => skipped.push(format!("p={p}")),
        }
    }
    let note = if skipped.is_empty() {
        None
    } else {
        Some(format!("no density norm for {} (atomic data)", skipped.join(", ")))
    };
    CheckResult { name: CheckKind::LpRatio.name().into(), pass, metrics, note }
}

fn dual_field_check(psi: &ScalarGrid, inst: &Instance, cost: f64) -> CheckResult {
    match check_dual_equivalence(psi, &inst.datum, &inst.weight, &inst.domain, cost) {
        Ok(rep) => {
            let mut metrics = BTreeMap::new();
            metrics.insert("cost".into(), rep.cost);
            metrics.insert("pairing_flux".into(), rep.pairing_flux);
            metrics.insert("pairing_potential".into(), rep.pairing_potential);
            metrics.insert("gap_rel".into(), rep.gap_rel);
            metrics.insert("max_ratio".into(), rep.max_ratio);
            metrics.insert("violation_fraction".into(), rep.violation_fraction);
            metrics.insert("max_interior_divergence".into(), rep.max_interior_divergence);
            metrics.insert("deep_cells".into(), rep.deep_cells as f64);
            CheckResult {
                name: CheckKind::DualField.name().into(),
                pass: rep.pass,
                metrics,
                note: None,
            }
        }
        Err(e) => CheckResult {
            name: CheckKind::DualField.name().into(),
            pass: false,
            metrics: BTreeMap::new(),
            note: Some(e.to_string()),
        },
    }
}

/// Extend the target potential values to the raster: `ψ(x) = min_j (ψ_j + d_k(x, y_j))`.
///
/// Constant weights admit the exact cone formula (chords of a convex domain stay inside);
/// variable weights use multi-seeded fast marching, O(h) accurate.
fn build_potential(inst: &Instance, tgt: &[Atom], psi_dst: &[f64]) -> Result<ScalarGrid> {
    if let ConformalWeight::Constant { a } = inst.weight {
        let spec = inst.spec;
        let mut psi = ScalarGrid::zeros(spec);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let c = spec.center(i, j);
                let val = if inst.domain.contains(c) {
                    tgt.iter()
                        .zip(psi_dst.iter())
                        .map(|(atom, &off)| off + a * c.dist(atom.position))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    f64::NAN
                };
                psi.set(i, j, val);
            }
        }
        return Ok(psi);
    }
    let seeds: Vec<(Vec2, f64)> =
        tgt.iter().zip(psi_dst.iter()).map(|(atom, &off)| (atom.position, off)).collect();
    fmm::fast_march(&inst.weight, &inst.domain, &seeds, &inst.spec)
}

fn write_plan(out_dir: &Path, src: &[Atom], tgt: &[Atom], plan: &NoncrossingPlan) -> Result<()> {
    let atom_json = |a: &Atom| {
        json!({"theta": a.theta, "mass": a.mass, "position": [a.position.x, a.position.y]})
    };
    let doc = json!({
        "cost": plan.cost,
        "cut_theta": plan.cut_theta,
        "sources": src.iter().map(atom_json).collect::<Vec<_>>(),
        "targets": tgt.iter().map(atom_json).collect::<Vec<_>>(),
        "flows": plan.flows.iter().map(|&(i, j, m)| json!([i, j, m])).collect::<Vec<_>>(),
        "levels": plan.levels.iter().map(|&(lo, hi)| json!([lo, hi])).collect::<Vec<_>>(),
    });
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    std::fs::write(out_dir.join("plan.json"), bytes)?;
    Ok(())
}

fn write_rays(out_dir: &Path, rays: &[Ray]) -> Result<()> {
    let doc: Vec<serde_json::Value> = rays
        .iter()
        .map(|r| {
            json!({
                "src": r.src,
                "dst": r.dst,
                "mass": r.mass,
                "weighted_length": r.geodesic.weighted_length,
                "points": r.geodesic.points.iter().map(|p| json!([p.x, p.y])).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut bytes = serde_json::to_vec(&doc)?;
    bytes.push(b'\n');
    std::fs::write(out_dir.join("rays.json"), bytes)?;
    Ok(())
}

/// PGM rendering of a field that may be negative: shifted so its minimum maps to black.
fn write_shifted_pgm(u: &ScalarGrid, path: &Path) -> Result<()> {
    let min = u.values.iter().cloned().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let shift = if min.is_finite() && min < 0.0 { -min } else { 0.0 };
    let mut shifted = u.clone();
    for val in shifted.values.iter_mut() {
        if val.is_finite() {
            *val += shift;
        }
    }
    shifted.write_pgm(path)
}
