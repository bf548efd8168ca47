//! Recover the solution function from the flow and, independently, from the ray structure.
//!
//! The flow route inverts the rotation identity: the gradient of the solution is the
//! quarter-turn of the (weight-normalized) flow, so the function is the least-squares solution
//! of a masked discrete gradient equation — a graph Poisson problem over the interior cells,
//! solved by conjugate gradients. The additive constant left free by the gradient equation is
//! fixed by matching the mean boundary trace to the mean of the boundary datum.
//!
//! The ray route uses only the plan structure: every ray is a level curve carrying a band of
//! function values (its plan slab shifted by the datum value at the plan's cut angle), with the
//! function below the band on one side and above it on the other. Interior cells are grouped
//! into connected components separated by the rasterized rays, each component's value is pinned
//! by the band constraints of the rays it touches — bands of adjacent rays tile the value axis,
//! so the lower and upper constraints of a component agree — and ray cells themselves take the
//! top of their band (superlevel-set convention: a jump's interface belongs to the upper side).
//!
//! The two routes share no machinery, which is what makes their agreement a meaningful check.

use crate::boundary::BoundaryDatum;
use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{GridSpec, ScalarGrid, VectorGrid};
use crate::transport::{crossing_count, NoncrossingPlan, Ray};

use std::collections::BTreeMap;
use std::collections::VecDeque;

/// How the free additive constant of the gradient equation is fixed.
#[derive(Debug, Clone, Copy)]
pub enum Anchor {
    /// Match the arclength-weighted mean of the near-boundary trace to the mean of the datum.
    MeanTrace,
    /// Add the given constant to the mean-zero least-squares solution.
    Constant(f64),
}

/// A reconstructed solution: grid values (NaN outside the domain) plus its near-boundary
/// trace sampled as `(θ, value)` pairs.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub u: ScalarGrid,
    pub trace: Vec<(f64, f64)>,
}

/// Number of boundary sample angles for traces and mean anchoring.
const TRACE_SAMPLES: usize = 1024;

/// Sample the grid just inside the boundary: `(θ, value)` at uniform angles, skipping angles
/// where no finite value is within reach.
fn sample_trace(u: &ScalarGrid, domain: &DomainBoundary) -> Vec<(f64, f64)> {
    let h = u.spec.h;
    let mut out = Vec::with_capacity(TRACE_SAMPLES);
    for i in 0..TRACE_SAMPLES {
        let theta = i as f64 / TRACE_SAMPLES as f64 * std::f64::consts::TAU;
        let p = domain.point(theta) + domain.inward_normal(theta) * (0.75 * h);
        let value = u.sample_bilinear(p).or_else(|| u.sample_nearest_finite(p, 3));
        if let Some(value) = value {
            out.push((theta, value));
        }
    }
    out
}

/// Arclength-weighted mean of the datum over the trace sample angles.
fn datum_mean(g: &BoundaryDatum, domain: &DomainBoundary) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..TRACE_SAMPLES {
        let theta = i as f64 / TRACE_SAMPLES as f64 * std::f64::consts::TAU;
        let w = domain.speed(theta);
        num += w * g.value(domain, theta);
        den += w;
    }
    num / den
}

/// Least-squares reconstruction: solve `∇u = rot_cw(v)` over the interior cells in the
/// least-squares sense (graph Poisson problem, conjugate gradients), then shift by the anchor.
/// `v` must already be the weight-normalized flow — the field whose quarter-turn is the
/// gradient, invariant under scaling the weight by a constant.
pub fn flow_to_u(
    v: &VectorGrid,
    g: &BoundaryDatum,
    anchor: Anchor,
    domain: &DomainBoundary,
) -> Result<SolutionField> {
    let spec = v.spec;
    // Interior mask and unknown numbering.
    let mut unknown = vec![usize::MAX; spec.len()];
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            if domain.contains(spec.center(i, j)) {
                unknown[spec.index(i, j)] = cells.len();
                cells.push((i, j));
            }
        }
    }
    let n = cells.len();
    if n == 0 {
        return Err(Error::InvalidInput("grid has no cells inside the domain".into()));
    }

    // Faces between interior cells with their gradient targets `h·(rot_cw v̄)·e_face`.
    // Face (p → q) contributes the residual (u_q − u_p − t); the normal equations are the
    // graph Laplacian with the discrete divergence of the targets as right-hand side.
    let mut faces: Vec<(usize, usize, f64)> = Vec::new();
    for &(i, j) in &cells {
        let p = unknown[spec.index(i, j)];
        if i + 1 < spec.nx && unknown[spec.index(i + 1, j)] != usize::MAX {
            let q = unknown[spec.index(i + 1, j)];
            let grad = (v.get(i, j).rot_cw() + v.get(i + 1, j).rot_cw()) * 0.5;
            faces.push((p, q, spec.h * grad.x));
        }
        if j + 1 < spec.ny && unknown[spec.index(i, j + 1)] != usize::MAX {
            let q = unknown[spec.index(i, j + 1)];
            let grad = (v.get(i, j).rot_cw() + v.get(i, j + 1).rot_cw()) * 0.5;
            faces.push((p, q, spec.h * grad.y));
        }
    }

    let mut b = vec![0.0f64; n];
    for &(p, q, t) in &faces {
        b[p] -= t;
        b[q] += t;
    }
    // Compatibility projection: the Laplacian annihilates constants.
    let mean = b.iter().sum::<f64>() / n as f64;
    for x in &mut b {
        *x -= mean;
    }

    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(p, q, _) in &faces {
            let d = x[p] - x[q];
            out[p] += d;
            out[q] -= d;
        }
    };

    // Conjugate gradients on the (semi-definite, mean-zero-compatible) system.
    let mut u = vec![0.0f64; n];
    let mut r = b.clone();
    let mut d = r.clone();
    let mut ap = vec![0.0f64; n];
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let mut converged = rr.sqrt() <= 1e-12 * b_norm;
    for _ in 0..40_000 {
        if converged {
            break;
        }
        apply(&d, &mut ap);
        let dad: f64 = d.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if dad <= 0.0 {
            break;
        }
        let alpha = rr / dad;
        for k in 0..n {
            u[k] += alpha * d[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new: f64 = r.iter().map(|x| x * x).sum();
        if rr_new.sqrt() <= 1e-12 * b_norm {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            d[k] = r[k] + beta * d[k];
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "least-squares gradient inversion".into(),
            miss: rr.sqrt() / b_norm,
            length: n as f64,
        });
    }

    // Mean-zero solution onto the grid, NaN outside.
    let shift0 = u.iter().sum::<f64>() / n as f64;
    let mut field = ScalarGrid::filled(spec, f64::NAN);
    for (k, &(i, j)) in cells.iter().enumerate() {
        field.set(i, j, u[k] - shift0);
    }
    let shift = match anchor {
        Anchor::Constant(c) => c,
        Anchor::MeanTrace => {
            let trace = sample_trace(&field, domain);
            if trace.is_empty() {
                return Err(Error::Solver("no finite trace samples for anchoring".into()));
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &(theta, value) in &trace {
                let w = domain.speed(theta);
                num += w * value;
                den += w;
            }
            datum_mean(g, domain) - num / den
        }
    };
    for value in &mut field.values {
        *value += shift;
    }
    Ok(SolutionField { trace: sample_trace(&field, domain), u: field })
}

/// Structure-based reconstruction from the plan: rays are rasterized as walls carrying value
/// bands, interior components take the value pinned by the bands they touch, and ray cells
/// take their band's upper value.
pub fn ray_sweep_u(
    rays: &[Ray],
    plan: &NoncrossingPlan,
    g: &BoundaryDatum,
    domain: &DomainBoundary,
    spec: GridSpec,
) -> Result<SolutionField> {
    if rays.len() != plan.levels.len() {
        return Err(Error::InvalidInput(format!(
            "{} rays but {} plan level bands",
            rays.len(),
            plan.levels.len()
        )));
    }
    if crossing_count(rays, domain.diameter()) > 0 {
        return Err(Error::Solver(
            "transport rays cross at an interior point; the plan is not monotone".into(),
        ));
    }

    let mut field = ScalarGrid::filled(spec, f64::NAN);
    if rays.is_empty() {
        // No transport: the datum is constant and so is the solution.
        let value = datum_mean(g, domain);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                if domain.contains(spec.center(i, j)) {
                    field.set(i, j, value);
                }
            }
        }
        return Ok(SolutionField { trace: sample_trace(&field, domain), u: field });
    }

    // Value band of each ray: plan slab shifted to the datum value at the cut angle.
    let g_cut = g.value(domain, plan.cut_theta);
    let bands: Vec<(f64, f64)> =
        plan.levels.iter().map(|&(lo, hi)| (g_cut + lo, g_cut + hi)).collect();
    let span = bands
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.0), hi.max(b.1)));
    let tol = 1e-6 * (span.1 - span.0).max(1e-6);

    // Rasterize rays into wall cells, remembering each wall cell's rays and local directions.
    let mut wall: Vec<Vec<(usize, Vec2)>> = vec![Vec::new(); spec.len()];
    for (rid, ray) in rays.iter().enumerate() {
        for seg in ray.geodesic.points.windows(2) {
            let dir = seg[1] - seg[0];
            if dir.norm() == 0.0 {
                continue;
            }
            crate::density::traverse_segment(&spec, seg[0], seg[1], |i, j, _, _| {
                let cell = &mut wall[spec.index(i, j)];
                if cell.last().map(|&(r, _)| r) != Some(rid) {
                    cell.push((rid, dir));
                } else if let Some(last) = cell.last_mut() {
                    last.1 = dir;
                }
            })?;
        }
    }

    // Connected components of interior non-wall cells (4-connectivity).
    const OUTSIDE: i64 = -2;
    const WALL: i64 = -1;
    const FREE: i64 = -3;
    let mut comp = vec![FREE; spec.len()];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let idx = spec.index(i, j);
            if !domain.contains(spec.center(i, j)) {
                comp[idx] = OUTSIDE;
            } else if !wall[idx].is_empty() {
                comp[idx] = WALL;
            }
        }
    }
    let mut n_comp = 0i64;
    for j0 in 0..spec.ny {
        for i0 in 0..spec.nx {
            if comp[spec.index(i0, j0)] != FREE {
                continue;
            }
            let id = n_comp;
            n_comp += 1;
            let mut queue = VecDeque::from([(i0, j0)]);
            comp[spec.index(i0, j0)] = id;
            while let Some((i, j)) = queue.pop_front() {
                let mut push = |ii: usize, jj: usize, queue: &mut VecDeque<(usize, usize)>| {
                    let idx = spec.index(ii, jj);
                    if comp[idx] == FREE {
                        comp[idx] = id;
                        queue.push_back((ii, jj));
                    }
                };
                if i > 0 {
                    push(i - 1, j, &mut queue);
                }
                if i + 1 < spec.nx {
                    push(i + 1, j, &mut queue);
                }
                if j > 0 {
                    push(i, j - 1, &mut queue);
                }
                if j + 1 < spec.ny {
                    push(i, j + 1, &mut queue);
                }
            }
        }
    }

    // Side votes: for every wall-cell/ray pair and each neighboring component, accumulate the
    // cross product of the ray's local direction with the offset to the neighbor. Positive
    // total: the component is left of the ray (below its band); negative: right (above).
    let mut votes: BTreeMap<(i64, usize), f64> = BTreeMap::new();
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let idx = spec.index(i, j);
            if wall[idx].is_empty() {
                continue;
            }
            let center = spec.center(i, j);
            let mut neighbors: Vec<(usize, usize)> = Vec::new();
            if i > 0 {
                neighbors.push((i - 1, j));
            }
            if i + 1 < spec.nx {
                neighbors.push((i + 1, j));
            }
            if j > 0 {
                neighbors.push((i, j - 1));
            }
            if j + 1 < spec.ny {
                neighbors.push((i, j + 1));
            }
            for (ni, nj) in neighbors {
                let c = comp[spec.index(ni, nj)];
                if c < 0 {
                    continue;
                }
                let offset = spec.center(ni, nj) - center;
                for &(rid, dir) in &wall[idx] {
                    *votes.entry((c, rid)).or_insert(0.0) += dir.cross(offset);
                }
            }
        }
    }

    // Resolve each component's value from its band constraints.
    let mut lower = vec![f64::NEG_INFINITY; n_comp as usize];
    let mut upper = vec![f64::INFINITY; n_comp as usize];
    for (&(c, rid), &vote) in &votes {
        if vote > 1e-12 {
            // Left of the ray: the function sits at or below the band.
            upper[c as usize] = upper[c as usize].min(bands[rid].0);
        } else if vote < -1e-12 {
            lower[c as usize] = lower[c as usize].max(bands[rid].1);
        }
    }
    let mut value = vec![f64::NAN; n_comp as usize];
    for c in 0..n_comp as usize {
        value[c] = match (lower[c].is_finite(), upper[c].is_finite()) {
            (true, true) => {
                if lower[c] > upper[c] + tol {
                    return Err(Error::Solver(format!(
                        "inconsistent ray bands around a region: lower {:.6e} exceeds upper {:.6e}",
                        lower[c], upper[c]
                    )));
                }
                lower[c]
            }
            (true, false) => lower[c],
            (false, true) => upper[c],
            (false, false) => {
                return Err(Error::Solver(
                    "a region touches no ray; cannot assign a value".into(),
                ));
            }
        };
    }

    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let idx = spec.index(i, j);
            if comp[idx] >= 0 {
                field.set(i, j, value[comp[idx] as usize]);
            } else if comp[idx] == WALL {
                // Superlevel-set convention: the interface carries the upper value.
                let hi = wall[idx].iter().map(|&(r, _)| bands[r].1).fold(f64::NEG_INFINITY, f64::max);
                field.set(i, j, hi);
            }
        }
    }
    Ok(SolutionField { trace: sample_trace(&field, domain), u: field })
}

/// `‖u‖_p + ‖σ‖_p`: the function norm plus the gradient norm, the latter taken from the
/// transport density (the gradient magnitude of the solution, up to the weight).
pub fn w1p_norm(u: &ScalarGrid, sigma: &ScalarGrid, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("Sobolev exponent must be ≥ 1, got {p}")));
    }
    Ok(u.lp_norm(p) + sigma.lp_norm(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{Piece, PieceKind};
    use crate::density::{assemble_density, assemble_flow, SplitParameter};
    use crate::geom::v;
    use crate::metric::Geodesic;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn disk() -> DomainBoundary {
        DomainBoundary::circle(1.0).unwrap()
    }

    fn disk_grid(h: f64) -> GridSpec {
        GridSpec::cover(disk().bbox(), h, 2).unwrap()
    }

    fn chord_ray(a: Vec2, b: Vec2, mass: f64) -> Ray {
        let n = 256usize;
        let points: Vec<Vec2> =
            (0..n).map(|i| a + (b - a) * (i as f64 / (n - 1) as f64)).collect();
        Ray {
            src: 0,
            dst: 0,
            mass,
            geodesic: Geodesic {
                points,
                weighted_length: (b - a).norm(),
                init_dir: (b - a).normalized(),
            },
        }
    }

    fn upper_indicator_datum() -> BoundaryDatum {
        BoundaryDatum::new(vec![
            Piece { theta_a: 0.0, theta_b: PI, kind: PieceKind::Constant { value: 1.0 } },
            Piece { theta_a: PI, theta_b: TAU, kind: PieceKind::Constant { value: 0.0 } },
        ])
        .unwrap()
    }

    #[test]
    fn zero_flow_constant_datum_gives_constant_solution() {
        let spec = disk_grid(0.05);
        let domain = disk();
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Constant { value: 3.0 },
        }])
        .unwrap();
        let sol =
            flow_to_u(&VectorGrid::zeros(spec), &g, Anchor::MeanTrace, &domain).unwrap();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let value = sol.u.get(i, j);
                if value.is_finite() {
                    assert_relative_eq!(value, 3.0, epsilon = 1e-9);
                }
            }
        }
        assert!(!sol.trace.is_empty());
    }

    /// The flow of the upper-indicator datum on the unit disk: one unit-mass diameter.
    fn upper_indicator_flow(spec: GridSpec) -> VectorGrid {
        let ray = chord_ray(v(1.0, 0.0), v(-1.0, 0.0), 1.0);
        let psi = ScalarGrid::zeros(spec);
        assemble_flow(&[ray], &psi, spec).unwrap()
    }

    #[test]
    fn jump_datum_reconstructs_the_half_disk_indicator() {
        let h = 0.02;
        let spec = disk_grid(h);
        let domain = disk();
        let g = upper_indicator_datum();
        let sol = flow_to_u(&upper_indicator_flow(spec), &g, Anchor::MeanTrace, &domain)
            .unwrap();
        // L¹ distance to the exact indicator of the upper half disk.
        let mut l1 = 0.0;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let value = sol.u.get(i, j);
                if !value.is_finite() {
                    continue;
                }
                let exact = if spec.center(i, j).y > 0.0 { 1.0 } else { 0.0 };
                l1 += (value - exact).abs() * spec.cell_area();
            }
        }
        assert!(l1 <= 4.0 * h * 2.0, "L¹ error {l1} exceeds {}", 4.0 * h * 2.0);
    }

    #[test]
    fn flow_trace_follows_the_datum() {
        let h = 0.02;
        let spec = disk_grid(h);
        let domain = disk();
        let g = upper_indicator_datum();
        let sol = flow_to_u(&upper_indicator_flow(spec), &g, Anchor::MeanTrace, &domain)
            .unwrap();
        // L¹(∂Ω) distance between trace and datum: only the two jump neighborhoods and the
        // smoothing width h contribute, so the budget is a few h times the number of jumps.
        let mut l1 = 0.0;
        for &(theta, value) in &sol.trace {
            l1 += (value - g.value(&domain, theta)).abs() * domain.speed(theta) * TAU
                / TRACE_SAMPLES as f64;
        }
        assert!(l1 <= 20.0 * h, "trace L¹ distance {l1}");
    }

    #[test]
    fn grid_outside_domain_is_rejected() {
        let spec = GridSpec { nx: 8, ny: 8, h: 0.1, origin: v(50.0, 50.0) };
        let domain = disk();
        let g = upper_indicator_datum();
        assert!(flow_to_u(&VectorGrid::zeros(spec), &g, Anchor::MeanTrace, &domain).is_err());
    }

    /// One-ray plan for the upper-indicator datum: slab [0, 1], cut at the lower semicircle.
    fn upper_indicator_plan() -> NoncrossingPlan {
        NoncrossingPlan {
            flows: vec![(0, 0, 1.0)],
            cost: 2.0,
            cut_theta: 1.5 * PI,
            levels: vec![(0.0, 1.0)],
        }
    }

    #[test]
    fn ray_sweep_recovers_the_two_valued_solution() {
        let h = 0.02;
        let spec = disk_grid(h);
        let domain = disk();
        let g = upper_indicator_datum();
        let ray = chord_ray(v(1.0, 0.0), v(-1.0, 0.0), 1.0);
        let sol = ray_sweep_u(&[ray], &upper_indicator_plan(), &g, &domain, spec).unwrap();
        let mut l1 = 0.0;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let value = sol.u.get(i, j);
                if !value.is_finite() {
                    continue;
                }
                assert!(value == 0.0 || value == 1.0, "unexpected level {value}");
                let exact = if spec.center(i, j).y > 0.0 { 1.0 } else { 0.0 };
                l1 += (value - exact).abs() * spec.cell_area();
            }
        }
        // Only the one-cell-wide wall row differs from the exact indicator.
        assert!(l1 <= 3.0 * h * 2.0, "L¹ error {l1}");
    }

    #[test]
    fn ray_sweep_rejects_crossing_rays() {
        let spec = disk_grid(0.05);
        let domain = disk();
        let g = upper_indicator_datum();
        let rays = vec![
            chord_ray(v(1.0, 0.0), v(-1.0, 0.0), 0.5),
            chord_ray(v(0.0, 1.0), v(0.0, -1.0), 0.5),
        ];
        let plan = NoncrossingPlan {
            flows: vec![(0, 0, 0.5), (1, 1, 0.5)],
            cost: 2.0,
            cut_theta: 1.5 * PI,
            levels: vec![(0.0, 0.5), (0.5, 1.0)],
        };
        let err = ray_sweep_u(&rays, &plan, &g, &domain, spec).unwrap_err();
        assert!(matches!(err, Error::Solver(_)));
    }

    #[test]
    fn no_rays_fill_with_the_constant_datum() {
        let spec = disk_grid(0.05);
        let domain = disk();
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Constant { value: -2.5 },
        }])
        .unwrap();
        let plan = NoncrossingPlan {
            flows: vec![],
            cost: 0.0,
            cut_theta: 0.0,
            levels: vec![],
        };
        let sol = ray_sweep_u(&[], &plan, &g, &domain, spec).unwrap();
        let mut seen = 0usize;
        for value in &sol.u.values {
            if value.is_finite() {
                assert_relative_eq!(*value, -2.5, epsilon = 1e-12);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    /// Sinusoid datum on the disk: symmetric equal-mass atoms, horizontal-chord plan in
    /// nested order, value bands tiling [-1, 1].
    fn sine_instance(n: usize) -> (BoundaryDatum, Vec<Ray>, NoncrossingPlan) {
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Sinusoid { amp: 1.0, omega: 1.0, phase: 0.0, offset: 0.0 },
        }])
        .unwrap();
        // Equal-mass bins of f⁺ = cos θ dθ on (−π/2, π/2): bin edges at asin(-1 + 2k/n).
        let masses = 2.0 / n as f64;
        let mut rays = Vec::new();
        let mut flows = Vec::new();
        let mut levels = Vec::new();
        for k in 0..n {
            let lo = -1.0 + 2.0 * k as f64 / n as f64;
            let hi = lo + masses;
            // Mass barycenter of sin θ over the bin, then its mirror partner.
            let a0 = lo.asin();
            let a1 = hi.asin();
            let bary = (a1 * hi - a0 * lo - (a0.cos() - a1.cos())) / masses;
            let src = v(bary.cos(), bary.sin());
            let dst = v(-bary.cos(), bary.sin());
            rays.push(chord_ray(src, dst, masses));
            flows.push((k, k, masses));
            levels.push((1.0 + lo, 1.0 + hi));
        }
        // Cut in the gap below θ = −π/2 where g(cut) = −1: bands are [-1+G] shifted by it.
        let plan = NoncrossingPlan {
            flows,
            cost: rays.iter().map(|r| r.mass * r.geodesic.weighted_length).sum(),
            cut_theta: 1.5 * PI,
            levels,
        };
        (g, rays, plan)
    }

    #[test]
    fn sine_datum_methods_agree_and_depend_on_one_coordinate() {
        let h = 0.025;
        let n = 128usize;
        let spec = disk_grid(h);
        let domain = disk();
        let (g, rays, plan) = sine_instance(n);
        let swept = ray_sweep_u(&rays, &plan, &g, &domain, spec).unwrap();
        let psi = ScalarGrid::zeros(spec);
        let flow = assemble_flow(&rays, &psi, spec).unwrap();
        let poisson = flow_to_u(&flow, &g, Anchor::MeanTrace, &domain).unwrap();
        let mut l1 = 0.0;
        let mut l1_exact = 0.0;
        let mut area = 0.0;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let a = swept.u.get(i, j);
                let b = poisson.u.get(i, j);
                if a.is_finite() && b.is_finite() {
                    l1 += (a - b).abs() * spec.cell_area();
                    area += spec.cell_area();
                }
                if a.is_finite() {
                    // The exact solution is the vertical coordinate itself.
                    l1_exact += (a - spec.center(i, j).y).abs() * spec.cell_area();
                }
            }
        }
        assert!(area > 2.5);
        assert!(l1 <= 5.0 * h, "cross-method L¹ difference {l1} exceeds {}", 5.0 * h);
        assert!(l1_exact <= 5.0 * h, "distance to exact solution {l1_exact}");
    }

    #[test]
    fn half_disk_w11_norm_matches_coarea() {
        let h = 0.01;
        let spec = disk_grid(h);
        let domain = disk();
        let g = upper_indicator_datum();
        let ray = chord_ray(v(1.0, 0.0), v(-1.0, 0.0), 1.0);
        let (sigma, _, _) =
            assemble_density(&[ray.clone()], spec, SplitParameter::default()).unwrap();
        let sol = ray_sweep_u(&[ray], &upper_indicator_plan(), &g, &domain, spec).unwrap();
        // ‖u‖₁ = area of the upper half disk, ‖∇u‖₁ = chord length.
        let total = w1p_norm(&sol.u, &sigma, 1.0).unwrap();
        assert_relative_eq!(total, PI / 2.0 + 2.0, max_relative = 1e-2);
        assert!(w1p_norm(&sol.u, &sigma, 0.5).is_err());
    }
}
