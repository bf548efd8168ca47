//! Geodesics and distance fields of the conformal metric `k²(dx² + dy²)`.
//!
//! Geodesics are computed by integrating the ray form of the geodesic equation in Euclidean
//! arclength, `d/ds (k γ′) = ∇k`, equivalently `γ″ = (∇k − (∇k·γ′)γ′)/k` for a unit tangent —
//! the same equation as light rays in a medium of refractive index `k`. A fourth-order
//! Runge–Kutta trace with tangent renormalization and bisected boundary landing gives
//! initial-value solutions ([`shoot`]); two-point problems ([`connect`]) are solved by a shooting
//! method on the launch angle: bracket a sign change of the signed lateral miss at the closest
//! approach to the target, then refine by the Illinois variant of regula falsi. Launch angles are
//! seeded by the straight chord and, when that fails to bracket, by a 16-direction grid-graph
//! Dijkstra shortest path ([`dijkstra`]), which also provides length upper bounds.
//!
//! Weighted length is accumulated with per-step Simpson quadrature of `k` along the trace, so its
//! error is dominated by the O(ds²) trace error, well below the 1e-4 relative tolerance targeted
//! by [`connect`]. Returned [`Geodesic`]s are resampled to constant weighted-arclength parameter:
//! the parameter `t ∈ [0, 1]` moves at constant metric speed, which is the normalization every
//! downstream quadrature assumes.
//!
//! Distance fields `ψ(z) = dist_k(z, seeds)` solve the eikonal equation `|∇ψ| = k` by first-order
//! fast marching ([`fmm`]), O(h) accurate, monotone, and usable with per-seed additive offsets
//! (which is how Kantorovich potentials are extended off the atom set).
//!
//! [`jacobian_fan`] assembles the family `γ_s(t)` of geodesics from an arclength-sampled boundary
//! arc to one target and differentiates it with centered finite differences in `(s, t)` to give
//! the area Jacobian `det[∂_s γ, ∂_t γ]`, together with the launch data (initial direction ν,
//! inward normal n, weighted length τ, boundary weight k) that its lower bound is phrased in.

pub mod dijkstra;
pub mod fmm;

use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{GridSpec, ScalarGrid};
use crate::weight::ConformalWeight;
pub use dijkstra::DijkstraField;

use std::cmp::Ordering;

/// Min-heap entry ordering floats by `total_cmp`, ties by index for determinism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HeapItem {
    pub val: f64,
    pub idx: u32,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.val.total_cmp(&other.val).then(self.idx.cmp(&other.idx))
    }
}

/// Tuning knobs for the geodesic tracer and the two-point solver.
#[derive(Debug, Clone)]
pub struct MetricOpts {
    /// Euclidean arclength step of the Runge–Kutta trace.
    pub step: f64,
    /// Hard cap on trace steps before reporting no convergence.
    pub max_steps: usize,
    /// Sample count of returned geodesics (constant weighted-arclength parameter).
    pub n_samples: usize,
    /// Relative closest-approach tolerance of the two-point solver.
    pub rel_tol: f64,
    /// Grid resolution (cells per axis) of lazily computed Dijkstra seed fields.
    pub seed_cells: usize,
    /// On detecting two comparable-length connecting geodesics: error out (`true`) or pick the
    /// shorter deterministically (`false`).
    pub error_on_multi: bool,
    /// Domain diameter, cached for tolerance scales.
    diameter: f64,
}

impl MetricOpts {
    pub fn for_domain(domain: &DomainBoundary) -> Self {
        let d = domain.diameter();
        MetricOpts {
            step: d / 512.0,
            max_steps: 40_000,
            n_samples: 256,
            rel_tol: 1e-4,
            seed_cells: 96,
            error_on_multi: true,
            diameter: d,
        }
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

/// Geodesic sampled at constant weighted-arclength parameter `t ∈ [0, 1]`.
///
/// A zero-length geodesic (coincident endpoints) is the single-point curve with
/// `weighted_length = 0`.
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub points: Vec<Vec2>,
    pub weighted_length: f64,
    /// Unit launch direction at the first point (undefined-but-zero for single-point curves).
    pub init_dir: Vec2,
}

impl Geodesic {
    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn is_degenerate(&self) -> bool {
        self.points.len() < 2
    }

    /// Position at parameter `t ∈ [0, 1]` by linear interpolation between samples.
    pub fn point_at(&self, t: f64) -> Vec2 {
        let n = self.points.len();
        if n == 1 {
            return self.points[0];
        }
        let x = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        self.points[i].lerp(self.points[i + 1], x - i as f64)
    }

    /// Final unit direction (into the endpoint).
    pub fn final_dir(&self) -> Vec2 {
        let n = self.points.len();
        if n < 2 {
            return Vec2::ZERO;
        }
        (self.points[n - 1] - self.points[n - 2]).normalized()
    }
}

/// Raw Runge–Kutta trace before resampling.
#[derive(Debug, Clone)]
struct RawTrace {
    pts: Vec<Vec2>,
    /// Cumulative weighted length at each point.
    cum_w: Vec<f64>,
    /// Weight value at each point.
    k_at: Vec<f64>,
    hit_boundary: bool,
    /// Whether the trace ever slid along the boundary after a grazing exit.
    slid: bool,
}

fn ode_rhs(w: &ConformalWeight, p: Vec2, d: Vec2) -> Result<(Vec2, Vec2, f64)> {
    let (k, g) = w.eval(p)?;
    let dd = (g - d * g.dot(d)) / k;
    Ok((d, dd, k))
}

/// One RK4 step of size `ds`; returns the new state, the tangent renormalized, and the average
/// mid-stage weight (for Simpson accumulation of weighted length).
fn rk4_step(w: &ConformalWeight, p: Vec2, d: Vec2, ds: f64) -> Result<(Vec2, Vec2, f64)> {
    let (dp1, dd1, _) = ode_rhs(w, p, d)?;
    let (dp2, dd2, k2) = ode_rhs(w, p + dp1 * (0.5 * ds), d + dd1 * (0.5 * ds))?;
    let (dp3, dd3, k3) = ode_rhs(w, p + dp2 * (0.5 * ds), d + dd2 * (0.5 * ds))?;
    let (dp4, dd4, _) = ode_rhs(w, p + dp3 * ds, d + dd3 * ds)?;
    let pn = p + (dp1 + dp2 * 2.0 + dp3 * 2.0 + dp4) * (ds / 6.0);
    let dn = (d + (dd1 + dd2 * 2.0 + dd3 * 2.0 + dd4) * (ds / 6.0)).normalized();
    Ok((pn, dn, 0.5 * (k2 + k3)))
}

/// Integrate the ray ODE from `x` in direction `dir` until the first boundary crossing, the
/// length budget, or (optionally) well past the closest approach to a target point. With
/// `slide`, grazing boundary exits re-enter tangentially instead of terminating: the
/// constrained geodesic of a closed domain may run along the boundary where interior detours
/// are costlier, and without sliding the two-point miss function jumps discontinuously as
/// neighboring launch angles get truncated at the graze.
fn trace_ray(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    dir: Vec2,
    opts: &MetricOpts,
    length_budget: f64,
    near_target: Option<(Vec2, f64)>,
    slide: bool,
) -> Result<RawTrace> {
    let ds = opts.step;
    let mut p = x;
    let mut d = dir.normalized();
    if d == Vec2::ZERO {
        return Err(Error::InvalidInput("zero shooting direction".into()));
    }
    let mut k_here = w.value(p)?;
    let mut pts = vec![p];
    let mut cum_w = vec![0.0];
    let mut k_at = vec![k_here];
    let mut travelled = 0.0;
    let mut min_target_dist = near_target.map(|(y, _)| p.dist(y));
    let mut hit_boundary = false;
    let mut slid = false;

    for step_idx in 0..opts.max_steps {
        let f_here = domain.implicit(p);
        let (pn, dn, k_mid) = rk4_step(w, p, d, ds)?;
        if domain.implicit(pn) > 0.0 {
            if f_here >= 0.0 && step_idx == 0 {
                // Launched outward from a boundary point: terminate immediately at the start.
                // This applies even when sliding — a tangential launch allowed to slide would
                // circle the rim and pass every boundary target at the re-entry depth, putting
                // a spurious near-miss plateau (and a sign jump with no zero) into the sweep.
                hit_boundary = true;
                pts.push(p);
                cum_w.push(*cum_w.last().unwrap());
                k_at.push(k_here);
                break;
            }
            // Bisect the step size to land on the boundary.
            let (mut lo, mut hi) = (0.0f64, ds);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (pm, _, _) = rk4_step(w, p, d, mid)?;
                if domain.implicit(pm) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let (pb, db, km) = rk4_step(w, p, d, hi)?;
            let kb = w.value(pb).unwrap_or(k_here);
            let seg = p.dist(pb);
            cum_w.push(cum_w.last().unwrap() + seg / 6.0 * (k_here + 4.0 * km + kb));
            pts.push(pb);
            k_at.push(kb);
            let n_out = domain.implicit_gradient(pb).normalized();
            let tang = db - n_out * db.dot(n_out);
            if slide && db.normalized().dot(n_out) <= 0.2 && tang.norm() > 1e-12 {
                // Grazing exit: re-enter tangentially a fraction of a step inside and keep
                // integrating. Transversal exits terminate below as usual.
                slid = true;
                travelled += seg;
                p = pb - n_out * (0.05 * ds);
                d = tang.normalized();
                k_here = w.value(p).unwrap_or(kb);
                pts.push(p);
                cum_w.push(*cum_w.last().unwrap());
                k_at.push(k_here);
                if travelled > length_budget {
                    break;
                }
                continue;
            }
            hit_boundary = true;
            break;
        }
        let kn = w.value(pn)?;
        let seg = p.dist(pn);
        cum_w.push(cum_w.last().unwrap() + seg / 6.0 * (k_here + 4.0 * k_mid + kn));
        pts.push(pn);
        k_at.push(kn);
        travelled += seg;
        p = pn;
        d = dn;
        k_here = kn;
        if let Some((y, give_up)) = near_target {
            let dist = p.dist(y);
            let m = min_target_dist.unwrap();
            if dist < m {
                min_target_dist = Some(dist);
            } else if dist > m + give_up {
                break;
            }
        }
        if travelled > length_budget {
            break;
        }
        if step_idx + 1 == opts.max_steps {
            return Err(Error::NoConvergence {
                what: "geodesic trace (step cap reached before boundary)".into(),
                miss: domain.implicit(p).abs(),
                length: *cum_w.last().unwrap(),
            });
        }
    }
    Ok(RawTrace { pts, cum_w, k_at, hit_boundary, slid })
}

/// Resample a traced polyline at `n` constant weighted-arclength parameters.
fn resample(trace_pts: &[Vec2], cum_w: &[f64], n: usize, init_dir: Vec2) -> Geodesic {
    let total = *cum_w.last().unwrap();
    if total <= 0.0 || trace_pts.len() < 2 {
        return Geodesic { points: vec![trace_pts[0]], weighted_length: 0.0, init_dir };
    }
    let mut points = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < cum_w.len() - 1 && cum_w[seg + 1] < target {
            seg += 1;
        }
        let (w0, w1) = (cum_w[seg], cum_w[seg + 1]);
        let t = if w1 > w0 { ((target - w0) / (w1 - w0)).clamp(0.0, 1.0) } else { 0.0 };
        points.push(trace_pts[seg].lerp(trace_pts[seg + 1], t));
    }
    Geodesic { points, weighted_length: total, init_dir }
}

/// Initial-value geodesic: integrate from `x` in `direction` until the boundary.
pub fn shoot(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    direction: Vec2,
    opts: &MetricOpts,
) -> Result<Geodesic> {
    let trace = trace_ray(w, domain, x, direction, opts, f64::INFINITY, None, false)?;
    if !trace.hit_boundary {
        return Err(Error::NoConvergence {
            what: "shoot (budget exhausted before boundary)".into(),
            miss: domain.implicit(*trace.pts.last().unwrap()).abs(),
            length: *trace.cum_w.last().unwrap(),
        });
    }
    Ok(resample(&trace.pts, &trace.cum_w, opts.n_samples, direction.normalized()))
}

/// Closest approach of a polyline to a point: segment index, point on the segment, distance, and
/// the signed lateral offset (positive when the target lies counterclockwise of the direction of
/// travel).
fn closest_approach(pts: &[Vec2], y: Vec2) -> (usize, Vec2, f64, f64) {
    if pts.len() == 1 {
        return (0, pts[0], pts[0].dist(y), 0.0);
    }
    let mut best = (0usize, pts[0], f64::INFINITY, 0.0);
    for i in 0..pts.len() - 1 {
        let (a, b) = (pts[i], pts[i + 1]);
        let dvec = b - a;
        let n2 = dvec.norm2();
        let t = if n2 > 0.0 { ((y - a).dot(dvec) / n2).clamp(0.0, 1.0) } else { 0.0 };
        let proj = a + dvec * t;
        let dist = proj.dist(y);
        if dist < best.2 {
            let signed = dvec.normalized().cross(y - proj);
            best = (i, proj, dist, signed);
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Shot {
    phi: f64,
    trace: RawTrace,
    seg: usize,
    proj: Vec2,
    closest: f64,
    signed: f64,
}

fn fire(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    y: Vec2,
    phi: f64,
    opts: &MetricOpts,
    budget: f64,
) -> Result<Shot> {
    let give_up = (0.2 * x.dist(y)).max(20.0 * opts.step);
    let trace =
        trace_ray(w, domain, x, Vec2::from_angle(phi), opts, budget, Some((y, give_up)), true)?;
    let (seg, proj, closest, signed) = closest_approach(&trace.pts, y);
    Ok(Shot { phi, trace, seg, proj, closest, signed })
}

/// Truncate a converged shot at its closest approach and append the exact endpoint.
fn finish_shot(shot: &Shot, y: Vec2, w: &ConformalWeight, opts: &MetricOpts) -> Result<Geodesic> {
    let t = &shot.trace;
    let mut pts: Vec<Vec2> = t.pts[..=shot.seg].to_vec();
    let mut cum = t.cum_w[..=shot.seg].to_vec();
    let k_seg = t.k_at[shot.seg];
    let k_proj = w.value(shot.proj).unwrap_or(k_seg);
    let step_w = 0.5 * (k_seg + k_proj) * pts.last().unwrap().dist(shot.proj);
    pts.push(shot.proj);
    cum.push(cum.last().unwrap() + step_w);
    let k_y = w.value(y).unwrap_or(k_proj);
    let gap_w = 0.5 * (k_proj + k_y) * shot.proj.dist(y);
    pts.push(y);
    cum.push(cum.last().unwrap() + gap_w);
    let init_dir = if pts.len() >= 2 { (pts[1] - pts[0]).normalized() } else { Vec2::ZERO };
    Ok(resample(&pts, &cum, opts.n_samples, init_dir))
}

/// Two-point geodesic by angle shooting, optionally seeded by a Dijkstra field rooted at `y`.
///
/// Coincident endpoints give the zero-length single-point geodesic. If two launch angles yield
/// connecting geodesics of relative length difference below 1e-3, the connection is ambiguous:
/// with `opts.error_on_multi` the call fails, otherwise the shorter geodesic is returned.
pub fn connect_seeded(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    y: Vec2,
    seed: Option<&DijkstraField>,
    opts: &MetricOpts,
) -> Result<Geodesic> {
    let scale = opts.diameter();
    if x.dist(y) <= 1e-13 * scale {
        return Ok(Geodesic { points: vec![x], weighted_length: 0.0, init_dir: Vec2::ZERO });
    }
    for (name, p) in [("start", x), ("end", y)] {
        if domain.boundary_distance(p) > 1e-7 * scale {
            return Err(Error::InvalidInput(format!(
                "connect: {name} point ({}, {}) lies outside the domain",
                p.x, p.y
            )));
        }
    }
    let straight = (y - x).angle();
    let mut seed_angles = vec![straight];
    let mut budget = 3.0 * x.dist(y) + 30.0 * opts.step;
    if let Some(field) = seed {
        if let Some(dir) = field.seed_direction(x, 0.15 * x.dist(y)) {
            seed_angles.push(dir.angle());
        }
        if let Some(est) = field.distance_at(x) {
            budget = budget.max(1.6 * est / w.k_min() + 30.0 * opts.step);
        }
    }
    match connect_attempt(w, domain, x, y, &seed_angles, budget, opts) {
        Ok(g) => Ok(g),
        Err(e @ Error::MultiGeodesic(..)) => Err(e),
        Err(first_err) => {
            if seed.is_some() {
                return Err(first_err);
            }
            // The chord seed failed; fall back to a grid shortest path for a global seed.
            let field = dijkstra::dijkstra_field(w, domain, y, opts.seed_cells)?;
            let mut angles = Vec::new();
            if let Some(dir) = field.seed_direction(x, 0.15 * x.dist(y)) {
                angles.push(dir.angle());
            }
            angles.push(straight);
            let budget = field
                .distance_at(x)
                .map(|est| 1.6 * est / w.k_min() + 30.0 * opts.step)
                .unwrap_or(budget)
                .max(budget);
            connect_attempt(w, domain, x, y, &angles, budget, opts).map_err(|_| first_err)
        }
    }
}

fn refine_bracket(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    y: Vec2,
    mut lo: Shot,
    mut hi: Shot,
    budget: f64,
    tol: f64,
    opts: &MetricOpts,
) -> Result<Shot> {
    let mut best = if lo.closest < hi.closest { lo.clone() } else { hi.clone() };
    let (mut m_lo, mut m_hi) = (lo.signed, hi.signed);
    // A trace that slid along the boundary passes a boundary target at the fixed re-entry
    // depth, so its approach distance is quantized there; accept at that scale instead of
    // grinding the bracket to a tolerance the path cannot reach.
    let eff_tol = |s: &Shot| if s.trace.slid { tol.max(0.1 * opts.step) } else { tol };
    for _ in 0..80 {
        if best.closest <= eff_tol(&best) {
            break;
        }
        let denom = m_hi - m_lo;
        let phi_new = if denom.abs() > 1e-300 {
            hi.phi - m_hi * (hi.phi - lo.phi) / denom
        } else {
            0.5 * (lo.phi + hi.phi)
        };
        // Guard against stalling at an endpoint.
        let phi_new = if (phi_new - lo.phi).abs() < 1e-16 || (phi_new - hi.phi).abs() < 1e-16 {
            0.5 * (lo.phi + hi.phi)
        } else {
            phi_new
        };
        let shot = fire(w, domain, x, y, phi_new, opts, budget)?;
        if shot.closest < best.closest {
            best = shot.clone();
        }
        if (hi.phi - lo.phi).abs() < 1e-15 {
            break;
        }
        if shot.signed * m_hi < 0.0 {
            lo = hi;
            m_lo = m_hi;
            hi = shot;
            m_hi = hi.signed;
        } else {
            hi = shot;
            m_hi = hi.signed;
            // Illinois damping of the stale endpoint keeps superlinear convergence.
            m_lo *= 0.5;
        }
    }
    Ok(best)
}

fn connect_attempt(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    y: Vec2,
    seed_angles: &[f64],
    budget: f64,
    opts: &MetricOpts,
) -> Result<Geodesic> {
    let tol = (opts.rel_tol * x.dist(y)).max(1e-10 * opts.diameter());
    let mut shots: Vec<Shot> = Vec::new();
    let push_sorted = |shots: &mut Vec<Shot>, s: Shot| {
        let pos = shots.partition_point(|e| e.phi < s.phi);
        shots.insert(pos, s);
    };
    for &phi in seed_angles {
        push_sorted(&mut shots, fire(w, domain, x, y, phi, opts, budget)?);
    }
    let center = shots
        .iter()
        .min_by(|a, b| a.closest.total_cmp(&b.closest))
        .map(|s| s.phi)
        .unwrap();

    // Slid traces cannot approach a boundary target closer than the sliding re-entry depth,
    // so they are accepted at that scale (see `refine_bracket`).
    let eff_tol = |s: &Shot| if s.trace.slid { tol.max(0.1 * opts.step) } else { tol };
    let direct_hits = |shots: &[Shot]| -> Vec<Shot> {
        shots.iter().filter(|s| s.closest <= eff_tol(s)).cloned().collect()
    };
    let mut brackets: Vec<(Shot, Shot)> = Vec::new();
    let scan_brackets = |shots: &[Shot]| -> Vec<(Shot, Shot)> {
        let mut out = Vec::new();
        for w in shots.windows(2) {
            if w[0].signed * w[1].signed < 0.0 {
                out.push((w[0].clone(), w[1].clone()));
            }
        }
        out
    };
    // A seed can land inside tolerance outright (straight chords in flat regions do); such
    // shots are accepted without a bracket. The sweep still runs far enough to spot a second,
    // angularly distinct connection when ambiguity detection is on.
    let mut converged: Vec<Shot> = direct_hits(&shots);
    if converged.is_empty() || opts.error_on_multi {
        for delta in [0.03, 0.07, 0.15, 0.3, 0.6, 1.1, 1.9, 2.7, std::f64::consts::PI] {
            for phi in [center - delta, center + delta] {
                push_sorted(&mut shots, fire(w, domain, x, y, phi, opts, budget)?);
            }
            brackets = scan_brackets(&shots);
            let found = !brackets.is_empty() || !direct_hits(&shots).is_empty();
            if found && delta >= 0.15 {
                break;
            }
            if brackets.len() >= 2 {
                break;
            }
        }
        converged = direct_hits(&shots);
    }
    if brackets.is_empty() && converged.is_empty() {
        brackets = scan_brackets(&shots);
    }
    if brackets.is_empty() && converged.is_empty() {
        // Local zoom: the sign change of the miss function can hide between sweep samples
        // when the geodesic clears a strong weight bump by a narrow angular margin.
        // Contract the sampling window around the best miss until a bracket appears.
        let mut window = 0.06f64;
        for _ in 0..40 {
            let best_phi =
                shots.iter().min_by(|a, b| a.closest.total_cmp(&b.closest)).unwrap().phi;
            for q in 1..=4 {
                let off = window * q as f64 / 4.0;
                for phi in [best_phi - off, best_phi + off] {
                    push_sorted(&mut shots, fire(w, domain, x, y, phi, opts, budget)?);
                }
            }
            brackets = scan_brackets(&shots);
            converged = direct_hits(&shots);
            if !brackets.is_empty() || !converged.is_empty() {
                break;
            }
            window /= 4.0;
        }
    }
    if brackets.is_empty() && converged.is_empty() {
        let best = shots.iter().min_by(|a, b| a.closest.total_cmp(&b.closest)).unwrap();
        return Err(Error::NoConvergence {
            what: "connect (no bracketing launch angle)".into(),
            miss: best.closest,
            length: *best.trace.cum_w.last().unwrap(),
        });
    }

    for (lo, hi) in brackets {
        let best = refine_bracket(w, domain, x, y, lo, hi, budget, tol, opts)?;
        if best.closest <= eff_tol(&best).max(1e-9 * opts.diameter()) {
            converged.push(best);
        }
    }
    if converged.is_empty() {
        let best = shots.iter().min_by(|a, b| a.closest.total_cmp(&b.closest)).unwrap();
        return Err(Error::NoConvergence {
            what: "connect (no bracket converged; geodesic may leave the domain)".into(),
            miss: best.closest,
            length: *best.trace.cum_w.last().unwrap(),
        });
    }
    let geos: Vec<Geodesic> = converged
        .iter()
        .map(|s| finish_shot(s, y, w, opts))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..geos.len()).collect();
    order.sort_by(|&a, &b| geos[a].weighted_length.total_cmp(&geos[b].weighted_length));
    if order.len() >= 2 {
        let (l0, l1) = (geos[order[0]].weighted_length, geos[order[1]].weighted_length);
        let distinct_angle =
            (converged[order[0]].phi - converged[order[1]].phi).abs() > 50.0 * opts.rel_tol;
        // Paths that slid along the boundary are exempt: sliding collapses an interval of
        // launch angles onto the same constrained path, so a separated launch angle no
        // longer indicates a genuinely distinct geodesic.
        let both_interior =
            !converged[order[0]].trace.slid && !converged[order[1]].trace.slid;
        if distinct_angle && both_interior && (l1 - l0) <= 1e-3 * l0 && opts.error_on_multi {
            return Err(Error::MultiGeodesic(l0, l1));
        }
    }
    Ok(geos[order[0]].clone())
}

/// Two-point geodesic with automatic seeding.
pub fn connect(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    y: Vec2,
    opts: &MetricOpts,
) -> Result<Geodesic> {
    connect_seeded(w, domain, x, y, None, opts)
}

/// Geodesic distance `d_k(x, y)`.
pub fn distance(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    x: Vec2,
    y: Vec2,
    opts: &MetricOpts,
) -> Result<f64> {
    Ok(connect(w, domain, x, y, opts)?.weighted_length)
}

/// Eikonal distance field from a single point: `ψ(z) = d_k(z, y)`, O(h) accurate, `NaN` outside
/// the domain mask.
pub fn distance_field(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    y: Vec2,
    spec: &GridSpec,
) -> Result<ScalarGrid> {
    fmm::fast_march(w, domain, &[(y, 0.0)], spec)
}

/// Family of geodesics from an arclength-sampled boundary arc to one target, with the area
/// Jacobian of the map `(s, t) ↦ γ_s(t)` by centered finite differences.
#[derive(Debug, Clone)]
pub struct GeodesicFan {
    /// Arclength parameters of the boundary samples.
    pub s_values: Vec<f64>,
    /// Geodesic parameters in [0, 1] (constant metric speed).
    pub t_values: Vec<f64>,
    pub target: Vec2,
    /// Sample positions, s-major: index `is * t_values.len() + it`.
    pub points: Vec<Vec2>,
    /// `det[∂γ/∂s, ∂γ/∂t]`, same layout as `points`.
    pub jacobian: Vec<f64>,
    /// Unit launch direction of each geodesic.
    pub nu: Vec<Vec2>,
    /// Inward unit normal at each boundary sample.
    pub inward: Vec<Vec2>,
    /// Weighted length of each geodesic.
    pub tau: Vec<f64>,
    /// Weight value at each boundary sample.
    pub k_base: Vec<f64>,
}

impl GeodesicFan {
    pub fn at(&self, is: usize, it: usize) -> Vec2 {
        self.points[is * self.t_values.len() + it]
    }

    pub fn jac(&self, is: usize, it: usize) -> f64 {
        self.jacobian[is * self.t_values.len() + it]
    }
}

/// Build the fan over the counterclockwise arc from `theta_range.0` to `theta_range.1`.
///
/// The arc must stay clear of the target: a boundary sample within 1e-6·diameter of the target
/// makes the family degenerate and is rejected.
pub fn jacobian_fan(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    theta_range: (f64, f64),
    target: Vec2,
    ns: usize,
    nt: usize,
    opts: &MetricOpts,
) -> Result<GeodesicFan> {
    if ns < 5 || nt < 5 {
        return Err(Error::InvalidInput(format!(
            "jacobian fan needs at least 5 samples per axis, got ({ns}, {nt})"
        )));
    }
    let s_a = domain.arclength(theta_range.0);
    let mut arc_len = domain.arclength(theta_range.1) - s_a;
    if arc_len <= 0.0 {
        arc_len += domain.perimeter();
    }
    let s_values: Vec<f64> =
        (0..ns).map(|i| s_a + arc_len * i as f64 / (ns - 1) as f64).collect();
    let thetas: Vec<f64> = s_values.iter().map(|&s| domain.theta_at_arclength(s)).collect();
    for &th in &thetas {
        if domain.point(th).dist(target) < 1e-6 * opts.diameter() {
            return Err(Error::InvalidInput(
                "jacobian fan: boundary sample coincides with the target".into(),
            ));
        }
    }
    let field = dijkstra::dijkstra_field(w, domain, target, opts.seed_cells)?;
    let geos: Vec<Geodesic> = {
        use rayon::prelude::*;
        thetas
            .par_iter()
            .map(|&th| connect_seeded(w, domain, domain.point(th), target, Some(&field), opts))
            .collect::<Result<_>>()?
    };
    let t_values: Vec<f64> = (0..nt).map(|i| i as f64 / (nt - 1) as f64).collect();
    let mut points = Vec::with_capacity(ns * nt);
    for g in &geos {
        for &t in &t_values {
            points.push(g.point_at(t));
        }
    }
    let ds = arc_len / (ns - 1) as f64;
    let dt = 1.0 / (nt - 1) as f64;
    let at = |is: usize, it: usize| points[is * nt + it];
    let mut jacobian = vec![0.0; ns * nt];
    for is in 0..ns {
        for it in 0..nt {
            // Centered differences inside, second-order one-sided at the edges.
            let dgds = if is == 0 {
                (at(1, it) - at(0, it)) * (4.0 / (2.0 * ds))
                    - (at(2, it) - at(0, it)) * (1.0 / (2.0 * ds))
            } else if is == ns - 1 {
                (at(ns - 1, it) - at(ns - 2, it)) * (4.0 / (2.0 * ds))
                    - (at(ns - 1, it) - at(ns - 3, it)) * (1.0 / (2.0 * ds))
            } else {
                (at(is + 1, it) - at(is - 1, it)) / (2.0 * ds)
            };
            let dgdt = if it == 0 {
                (at(is, 1) - at(is, 0)) * (4.0 / (2.0 * dt))
                    - (at(is, 2) - at(is, 0)) * (1.0 / (2.0 * dt))
            } else if it == nt - 1 {
                (at(is, nt - 1) - at(is, nt - 2)) * (4.0 / (2.0 * dt))
                    - (at(is, nt - 1) - at(is, nt - 3)) * (1.0 / (2.0 * dt))
            } else {
                (at(is, it + 1) - at(is, it - 1)) / (2.0 * dt)
            };
            jacobian[is * nt + it] = dgds.cross(dgdt);
        }
    }
    let nu: Vec<Vec2> = geos.iter().map(|g| g.init_dir).collect();
    let inward: Vec<Vec2> = thetas.iter().map(|&th| domain.inward_normal(th)).collect();
    let tau: Vec<f64> = geos.iter().map(|g| g.weighted_length).collect();
    let k_base: Vec<f64> =
        thetas.iter().map(|&th| w.value(domain.point(th))).collect::<Result<_>>()?;
    Ok(GeodesicFan {
        s_values,
        t_values,
        target,
        points,
        jacobian,
        nu,
        inward,
        tau,
        k_base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainBoundary;
    use crate::geom::{v, BBox};
    use approx::assert_relative_eq;

    fn disk() -> DomainBoundary {
        DomainBoundary::circle(1.0).unwrap()
    }

    fn unit_weight() -> ConformalWeight {
        ConformalWeight::constant(1.0).unwrap()
    }

    #[test]
    fn euclidean_shoot_is_straight() {
        let (d, w) = (disk(), unit_weight());
        let opts = MetricOpts::for_domain(&d);
        let g = shoot(&w, &d, Vec2::ZERO, v(1.0, 0.0), &opts).unwrap();
        // From the center along +x: the ray is the radius, length 1.
        assert_relative_eq!(g.weighted_length, 1.0, max_relative = 1e-6);
        for p in &g.points {
            assert!(p.y.abs() < 1e-9, "ray bent off the axis: {p:?}");
        }
        assert_relative_eq!(g.end().x, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn euclidean_connect_is_the_chord() {
        let (d, w) = (disk(), unit_weight());
        let opts = MetricOpts::for_domain(&d);
        let x = v(1.0, 0.0);
        let y = v(-(0.5f64).sqrt(), (0.5f64).sqrt());
        let g = connect(&w, &d, x, y, &opts).unwrap();
        assert_relative_eq!(g.weighted_length, x.dist(y), max_relative = 1e-6);
        // Every sample lies on the chord.
        for p in &g.points {
            let dist = crate::geom::point_segment_distance(*p, x, y);
            assert!(dist < 1e-6, "chord deviation {dist}");
        }
    }

    #[test]
    fn coincident_endpoints_give_zero_length() {
        let (d, w) = (disk(), unit_weight());
        let opts = MetricOpts::for_domain(&d);
        let g = connect(&w, &d, v(0.3, 0.2), v(0.3, 0.2), &opts).unwrap();
        assert!(g.is_degenerate());
        assert_eq!(g.weighted_length, 0.0);
    }

    #[test]
    fn connect_rejects_outside_points() {
        let (d, w) = (disk(), unit_weight());
        let opts = MetricOpts::for_domain(&d);
        assert!(connect(&w, &d, v(1.5, 0.0), v(0.0, 0.0), &opts).is_err());
    }

    #[test]
    fn constant_speed_parametrization() {
        let d = disk();
        let w = ConformalWeight::radial_bump(1.0, 2.0, v(0.2, 0.0), 0.5).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let g = connect(&w, &d, v(1.0, 0.0), v(-1.0, 0.0), &opts).unwrap();
        // Consecutive samples carry equal weighted length.
        let mut seg_w = Vec::new();
        for i in 0..g.points.len() - 1 {
            let (a, b) = (g.points[i], g.points[i + 1]);
            let ka = w.value(a).unwrap();
            let kb = w.value(b).unwrap();
            seg_w.push(0.5 * (ka + kb) * a.dist(b));
        }
        let mean: f64 = seg_w.iter().sum::<f64>() / seg_w.len() as f64;
        for s in &seg_w {
            assert!((s - mean).abs() < 0.05 * mean, "non-uniform metric speed: {s} vs {mean}");
        }
    }

    #[test]
    fn distance_is_symmetric() {
        let d = disk();
        let w = ConformalWeight::radial_bump(1.0, 1.5, v(0.1, -0.1), 0.45).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let x = v(0.8, 0.3);
        let y = v(-0.5, -0.6);
        let dxy = distance(&w, &d, x, y, &opts).unwrap();
        let dyx = distance(&w, &d, y, x, &opts).unwrap();
        assert_relative_eq!(dxy, dyx, max_relative = 2e-4);
    }

    #[test]
    fn weighted_length_dominates_k_min_chord() {
        let d = disk();
        let w = ConformalWeight::radial_bump(1.0, 3.0, Vec2::ZERO, 0.4).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let x = v(1.0, 0.0);
        let y = v(0.0, 1.0);
        let g = connect(&w, &d, x, y, &opts).unwrap();
        assert!(g.weighted_length >= w.k_min() * x.dist(y) * (1.0 - 1e-9));
        // A central bump pushes the geodesic off the chord.
        let mid = g.point_at(0.5);
        assert!(
            crate::geom::point_segment_distance(mid, x, y) > 0.01,
            "geodesic did not detour around the bump"
        );
        // And its length beats the straight chord's weighted length.
        let chord_w: f64 = (0..256)
            .map(|i| {
                let t0 = i as f64 / 256.0;
                let t1 = (i + 1) as f64 / 256.0;
                let (a, b) = (x.lerp(y, t0), x.lerp(y, t1));
                0.5 * (w.value(a).unwrap() + w.value(b).unwrap()) * a.dist(b)
            })
            .sum();
        assert!(g.weighted_length < chord_w);
    }

    #[test]
    fn distance_field_matches_pointwise_distance() {
        let d = disk();
        let w = ConformalWeight::radial_bump(1.0, 1.0, Vec2::ZERO, 0.6).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let h = 2.0 / 128.0;
        let spec = GridSpec::cover(BBox { lo: v(-1.0, -1.0), hi: v(1.0, 1.0) }, h, 2).unwrap();
        let y = v(0.9, 0.0);
        let field = distance_field(&w, &d, y, &spec).unwrap();
        // Cross-validate at a deterministic spread of interior nodes.
        let mut checked = 0;
        for q in 0..20 {
            let ang = q as f64 * 0.31 + 0.05;
            let rad = 0.15 + 0.035 * q as f64;
            let p = v(rad * ang.cos(), rad * ang.sin());
            if !d.contains(p) {
                continue;
            }
            let Some(grid_val) = field.sample_bilinear(p) else { continue };
            let exact = distance(&w, &d, p, y, &opts).unwrap();
            assert!(
                (grid_val - exact).abs() <= 3.0 * h * w.k_max(),
                "field {grid_val} vs geodesic {exact} at {p:?}"
            );
            checked += 1;
        }
        assert!(checked >= 12, "too few interior validation nodes: {checked}");
        // Monotone non-negative.
        for val in field.values.iter().filter(|x| x.is_finite()) {
            assert!(*val >= 0.0);
        }
    }

    #[test]
    fn euclidean_fan_jacobian_is_exact_cone() {
        let (d, w) = (disk(), unit_weight());
        let opts = MetricOpts::for_domain(&d);
        let target = v(-1.0, 0.0);
        // Arc well away from the target.
        let fan = jacobian_fan(&w, &d, (-1.1, 1.1), target, 17, 21, &opts).unwrap();
        // Cone map: γ_s(t) = α(s) + t(x₀ − α(s)), so det = (1−t)·τ(s)·(ν·n).
        for is in 0..17 {
            let base = fan.tau[is] * fan.nu[is].dot(fan.inward[is]);
            assert!(base > 0.0);
            for (it, &t) in fan.t_values.iter().enumerate() {
                let expected = (1.0 - t) * base;
                let got = fan.jac(is, it);
                assert!(
                    (got - expected).abs() <= 0.02 * base.max(1e-12),
                    "J({is},{it}) = {got}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn fan_identity_at_launch() {
        // J(s, 0) = k⁻¹(s)·τ(s)·(ν·n) holds for any weight; verify on a bump.
        let d = disk();
        let w = ConformalWeight::radial_bump(1.0, 1.0, v(0.1, 0.1), 0.6).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let fan = jacobian_fan(&w, &d, (0.8, 2.6), v(1.0, 0.0), 15, 21, &opts).unwrap();
        for is in 0..15 {
            let expected = fan.tau[is] * fan.nu[is].dot(fan.inward[is]) / fan.k_base[is];
            let got = fan.jac(is, 0);
            assert!(
                (got - expected).abs() <= 0.03 * expected.abs().max(1e-9),
                "launch identity violated at {is}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn fan_rejects_degenerate_target() {
        let (d, w) = (disk(), unit_weight());
        let opts = MetricOpts::for_domain(&d);
        assert!(jacobian_fan(&w, &d, (0.0, 2.0), d.point(1.0), 9, 9, &opts).is_err());
    }

    #[test]
    fn triangle_inequality_on_samples() {
        let d = disk();
        let w = ConformalWeight::radial_bump(1.0, 1.0, Vec2::ZERO, 0.5).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let pts = [v(0.9, 0.0), v(0.0, 0.85), v(-0.6, -0.5)];
        let d01 = distance(&w, &d, pts[0], pts[1], &opts).unwrap();
        let d12 = distance(&w, &d, pts[1], pts[2], &opts).unwrap();
        let d02 = distance(&w, &d, pts[0], pts[2], &opts).unwrap();
        assert!(d02 <= d01 + d12 + 1e-4 * (d01 + d12));
    }
}
