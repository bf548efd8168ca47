//! Transport density, partial densities, Beckmann flow, and the weak divergence check.
//!
//! Every traced ray is a polyline at constant metric speed carrying a mass. Rasterization
//! clips each polyline segment against the grid cells it crosses (Amanatides–Woo traversal)
//! and deposits `mass × weighted length of the clip` into each cell; cell values are divided
//! by the cell area at the end, so the grid integral of the density equals the total weighted
//! length carried by the rays to rounding. Because the curves are parametrized at constant
//! metric speed, the weighted length of a clip is the segment's share of the curve's total
//! weighted length times the clipped fraction — no weight evaluations are needed during
//! deposition and mass is conserved exactly.
//!
//! The partial densities split every ray at a common curve parameter: the first part of each
//! curve feeds `σ⁺`, the rest `σ⁻`, and `σ` is formed as their cellwise sum so the identity
//! `σ = σ⁺ + σ⁻` holds bit-for-bit.
//!
//! The flow is the vector-valued deposit of the same clips, oriented along decreasing
//! potential. Its defining property — the weak identity `div[k⁻¹v] = f⁺ − f⁻` — is checked
//! against a fixed family of tensor-product sinusoids: for each test function the volume term
//! `∫∇φ·(k⁻¹v)` must cancel the boundary term `∫φ d(f⁺−f⁻)` up to rasterization error.

use crate::boundary::BoundaryMeasure;
use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{GridSpec, ScalarGrid, VectorGrid};
use crate::transport::Ray;
use crate::weight::ConformalWeight;

use std::f64::consts::PI;

/// Common curve parameter at which every ray is split into its `σ⁺` and `σ⁻` halves.
#[derive(Debug, Clone, Copy)]
pub struct SplitParameter(f64);

impl SplitParameter {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidInput(format!(
                "split parameter must lie in [0, 1], got {tau}"
            )));
        }
        Ok(SplitParameter(tau))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for SplitParameter {
    fn default() -> Self {
        SplitParameter(0.5)
    }
}

/// Walk the segment `p → q` through the cells of `spec`, calling `visit(i, j, a, b)` with the
/// clipped sub-segment `[a, b]` inside each crossed cell. Errors if the segment leaves the
/// grid.
pub(crate) fn traverse_segment<F: FnMut(usize, usize, Vec2, Vec2)>(
    spec: &GridSpec,
    p: Vec2,
    q: Vec2,
    mut visit: F,
) -> Result<()> {
    let outside = |r: Vec2| {
        Error::Solver(format!("ray leaves the grid at ({:.6}, {:.6})", r.x, r.y))
    };
    let (mut i, mut j) = spec.cell_of(p).ok_or_else(|| outside(p))?;
    spec.cell_of(q).ok_or_else(|| outside(q))?;
    let d = q - p;
    if d.x == 0.0 && d.y == 0.0 {
        return Ok(());
    }
    let mut t0 = 0.0f64;
    loop {
        // Parameter at which the segment crosses the next vertical / horizontal cell face.
        let tx = if d.x > 0.0 {
            (spec.origin.x + (i as f64 + 1.0) * spec.h - p.x) / d.x
        } else if d.x < 0.0 {
            (spec.origin.x + i as f64 * spec.h - p.x) / d.x
        } else {
            f64::INFINITY
        };
        let ty = if d.y > 0.0 {
            (spec.origin.y + (j as f64 + 1.0) * spec.h - p.y) / d.y
        } else if d.y < 0.0 {
            (spec.origin.y + j as f64 * spec.h - p.y) / d.y
        } else {
            f64::INFINITY
        };
        let t1 = tx.min(ty).min(1.0).max(t0);
        visit(i, j, p + d * t0, p + d * t1);
        if t1 >= 1.0 {
            return Ok(());
        }
        if tx <= t1 {
            if d.x > 0.0 {
                i += 1;
                if i >= spec.nx {
                    return Err(outside(q));
                }
            } else {
                if i == 0 {
                    return Err(outside(q));
                }
                i -= 1;
            }
        }
        if ty <= t1 {
            if d.y > 0.0 {
                j += 1;
                if j >= spec.ny {
                    return Err(outside(q));
                }
            } else {
                if j == 0 {
                    return Err(outside(q));
                }
                j -= 1;
            }
        }
        t0 = t1;
    }
}

/// Deposit one straight segment carrying weighted length `wl` (times `mass`) into `grid`.
fn deposit_segment(grid: &mut ScalarGrid, p: Vec2, q: Vec2, wl: f64, mass: f64) -> Result<()> {
    let len = (q - p).norm();
    if len == 0.0 || wl == 0.0 {
        return Ok(());
    }
    let spec = grid.spec;
    traverse_segment(&spec, p, q, |i, j, a, b| {
        let frac = (b - a).norm() / len;
        let cell = grid.get(i, j);
        grid.set(i, j, cell + mass * wl * frac);
    })
}

/// Rasterize the rays into the transport density and its two halves. Each ray deposits its
/// mass times the weighted length of every cell crossing; `σ⁺` collects curve parameters up to
/// the split, `σ⁻` the rest, and `σ = σ⁺ + σ⁻` cellwise exactly. The polyline segment
/// containing the split is divided at the interpolated cut point with its weighted length
/// shared in proportion, so both halves carry exactly their parameter share of the mass.
pub fn assemble_density(
    rays: &[Ray],
    spec: GridSpec,
    split: SplitParameter,
) -> Result<(ScalarGrid, ScalarGrid, ScalarGrid)> {
    let tau = split.value();
    let mut plus = ScalarGrid::zeros(spec);
    let mut minus = ScalarGrid::zeros(spec);
    for ray in rays {
        let pts = &ray.geodesic.points;
        let n = pts.len();
        if n < 2 {
            continue;
        }
        let seg_wl = ray.geodesic.weighted_length / (n - 1) as f64;
        let pos = tau * (n - 1) as f64;
        let idx = (pos.floor() as usize).min(n - 2);
        let frac = pos - idx as f64;
        for s in 0..n - 1 {
            if s < idx {
                deposit_segment(&mut plus, pts[s], pts[s + 1], seg_wl, ray.mass)?;
            } else if s > idx {
                deposit_segment(&mut minus, pts[s], pts[s + 1], seg_wl, ray.mass)?;
            } else {
                let cut = pts[s] + (pts[s + 1] - pts[s]) * frac;
                deposit_segment(&mut plus, pts[s], cut, seg_wl * frac, ray.mass)?;
                deposit_segment(&mut minus, cut, pts[s + 1], seg_wl * (1.0 - frac), ray.mass)?;
            }
        }
    }
    let area = spec.cell_area();
    let mut sigma = ScalarGrid::zeros(spec);
    for jj in 0..spec.ny {
        for ii in 0..spec.nx {
            let a = plus.get(ii, jj) / area;
            let b = minus.get(ii, jj) / area;
            plus.set(ii, jj, a);
            minus.set(ii, jj, b);
            sigma.set(ii, jj, a + b);
        }
    }
    Ok((sigma, plus, minus))
}

/// Rasterize the rays into the Beckmann flow: the vector deposit of every cell crossing,
/// oriented along decreasing potential. A ray whose potential trend increases along its stored
/// direction is deposited reversed; rays with no usable potential samples keep their stored
/// orientation (the tracer already orients them source → target).
pub fn assemble_flow(rays: &[Ray], psi: &ScalarGrid, spec: GridSpec) -> Result<VectorGrid> {
    let mut flow = VectorGrid::zeros(spec);
    for ray in rays {
        let pts = &ray.geodesic.points;
        if pts.len() < 2 {
            continue;
        }
        let wl = ray.geodesic.weighted_length;
        let seg_wl = wl / (pts.len() - 1) as f64;
        // Potential trend along the curve, from samples at the quarter points.
        let n = pts.len();
        let a = psi.sample_nearest_finite(pts[n / 4], 3);
        let b = psi.sample_nearest_finite(pts[(3 * n) / 4], 3);
        let orient = match (a, b) {
            (Some(pa), Some(pb)) if pb > pa => -1.0,
            _ => 1.0,
        };
        for seg in pts.windows(2) {
            let (p, q) = (seg[0], seg[1]);
            let len = (q - p).norm();
            if len == 0.0 {
                continue;
            }
            let dir = (q - p) * (orient / len);
            traverse_segment(&spec, p, q, |i, j, ca, cb| {
                let clip = (cb - ca).norm();
                let cell = flow.get(i, j);
                flow.set(i, j, cell + dir * (ray.mass * seg_wl * clip / len));
            })?;
        }
    }
    let area = spec.cell_area();
    Ok(flow.map_cells(|_, v| v * (1.0 / area)))
}

/// Weak divergence defect of the flow against the boundary data.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceReport {
    /// Worst normalized defect `|∫∇φ·(k⁻¹v) + ∫φ df|/(Lip(φ)·‖f⁺‖)` over the nonconstant
    /// members of the test family.
    pub residual: f64,
    /// Defect of the constant test function: the net mass of the boundary data.
    pub mass_balance: f64,
}

/// Check `div[k⁻¹v] = f⁺ − f⁻` weakly against tensor sinusoids `cos(mπx̃)cos(nπỹ)` for
/// `m, n ∈ 0..5`, where `(x̃, ỹ)` are grid-box coordinates in `[0, 1]²`. For each member the
/// volume term is cell-center quadrature and the boundary term integrates the signed measure
/// exactly; their sum is normalized by the test function's Lipschitz bound times the
/// transported mass.
pub fn divergence_residual(
    v: &VectorGrid,
    w: &ConformalWeight,
    f: &BoundaryMeasure,
    domain: &DomainBoundary,
) -> DivergenceReport {
    let spec = v.spec;
    let lx = spec.nx as f64 * spec.h;
    let ly = spec.ny as f64 * spec.h;
    let mass = f.positive_mass().max(1e-300);
    let mut residual = 0.0f64;
    for m in 0..5usize {
        for n in 0..5usize {
            if m == 0 && n == 0 {
                continue;
            }
            let (km, kn) = (m as f64 * PI / lx, n as f64 * PI / ly);
            let phi = |p: Vec2| {
                let xt = (p.x - spec.origin.x) / lx;
                let yt = (p.y - spec.origin.y) / ly;
                (m as f64 * PI * xt).cos() * (n as f64 * PI * yt).cos()
            };
            let grad_phi = |p: Vec2| {
                let xt = (p.x - spec.origin.x) / lx;
                let yt = (p.y - spec.origin.y) / ly;
                let (ax, ay) = (m as f64 * PI * xt, n as f64 * PI * yt);
                Vec2 { x: -km * ax.sin() * ay.cos(), y: -kn * ax.cos() * ay.sin() }
            };
            let lip = (km * km + kn * kn).sqrt();
            let mut volume = 0.0f64;
            for j in 0..spec.ny {
                for i in 0..spec.nx {
                    let vel = v.get(i, j);
                    if vel.x == 0.0 && vel.y == 0.0 {
                        continue;
                    }
                    let c = spec.center(i, j);
                    // Boundary-straddling cells can fall just outside a sampled weight's
                    // rectangle; the weight's lower bound stands in there.
                    let k = w.value(c).unwrap_or_else(|_| w.k_min());
                    volume += grad_phi(c).dot(vel) / k;
                }
            }
            volume *= spec.cell_area();
            let boundary = f.integrate(domain, |theta| phi(domain.point(theta)));
            residual = residual.max((volume + boundary).abs() / (lip * mass));
        }
    }
    DivergenceReport { residual, mass_balance: f.total().abs() }
}

/// Discrete L^p norm of a density together with the mass it carries near the boundary.
#[derive(Debug, Clone, Copy)]
pub struct LpReport {
    pub norm: f64,
    /// Mass (integral of the density) over cells whose center lies within the collar width of
    /// the boundary, on either side.
    pub collar_mass: f64,
}

/// `‖σ‖_p` by cell quadrature (`p = ∞` gives the max) plus the mass inside the boundary
/// collar of the given width.
pub fn lp_norm(
    sigma: &ScalarGrid,
    p: f64,
    collar_width: f64,
    domain: &DomainBoundary,
) -> Result<LpReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("Lp exponent must be ≥ 1, got {p}")));
    }
    let spec = sigma.spec;
    let mut collar = 0.0f64;
    if collar_width > 0.0 {
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let value = sigma.get(i, j);
                if value == 0.0 {
                    continue;
                }
                if domain.boundary_distance(spec.center(i, j)).abs() < collar_width {
                    collar += value;
                }
            }
        }
    }
    Ok(LpReport { norm: sigma.lp_norm(p), collar_mass: collar * spec.cell_area() })
}
