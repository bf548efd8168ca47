//! Boundary curves of the computational domain.
//!
//! A [`DomainBoundary`] is a smooth closed curve traversed counterclockwise, star-shaped with
//! respect to the origin: a circle, an axis-aligned ellipse, or a polar graph `ρ = r(θ)` with the
//! radius given by uniform samples interpolated by a periodic cubic spline. The struct owns a
//! dense arclength table (composite Simpson on the parametric speed) so that parameter ↔
//! arclength conversions are cheap, monotone, and reproducible; every consumer goes through the
//! same table, which keeps mass bookkeeping between modules consistent to rounding.
//!
//! The signed implicit function [`DomainBoundary::implicit`] is negative inside. It is exact for
//! the circle and, for the other shapes, a smooth level function whose gradient-normalized value
//! [`DomainBoundary::boundary_distance`] estimates the Euclidean distance to the boundary — the
//! estimate degrades away from the boundary, where no caller needs it.

use crate::error::{Error, Result};
use crate::geom::{v, wrap_angle, BBox, Vec2};
use std::f64::consts::TAU;

/// Number of arclength table intervals. 4096 keeps parameter↔arclength round trips below 1e-6
/// relative error for all supported curve smoothness classes.
const ARC_SAMPLES: usize = 4096;

#[derive(Debug, Clone)]
enum Curve {
    Circle { r: f64 },
    Ellipse { a: f64, b: f64 },
    SmoothPolar { spline: PeriodicSpline },
}

/// Closed counterclockwise boundary curve with a precomputed arclength table.
#[derive(Debug, Clone)]
pub struct DomainBoundary {
    curve: Curve,
    /// Cumulative arclength at parameters `i·2π/ARC_SAMPLES`, length `ARC_SAMPLES + 1`.
    cum_arc: Vec<f64>,
    r_max: f64,
}

impl DomainBoundary {
    pub fn circle(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("circle radius must be positive, got {r}")));
        }
        Ok(Self::build(Curve::Circle { r }))
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ellipse semi-axes must be positive, got ({a}, {b})"
            )));
        }
        Ok(Self::build(Curve::Ellipse { a, b }))
    }

    /// Polar graph through uniform radius samples `r(2πi/n)`, interpolated C² by a periodic cubic
    /// spline. At least 8 samples, all strictly positive.
    pub fn smooth_polar(radii: &[f64]) -> Result<Self> {
        if radii.len() < 8 {
            return Err(Error::InvalidInput(format!(
                "smooth-polar needs at least 8 radius samples, got {}",
                radii.len()
            )));
        }
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidInput(
                "smooth-polar radius samples must be positive and finite".into(),
            ));
        }
        let spline = PeriodicSpline::fit(radii)?;
        // The spline can overshoot below the sample minimum; reject radii that dip to zero.
        let mut rmin = f64::INFINITY;
        for i in 0..4096 {
            rmin = rmin.min(spline.eval(TAU * i as f64 / 4096.0).0);
        }
        if rmin <= 0.0 {
            return Err(Error::InvalidInput(
                "smooth-polar spline dips to non-positive radius".into(),
            ));
        }
        Ok(Self::build(Curve::SmoothPolar { spline }))
    }

    fn build(curve: Curve) -> Self {
        let mut d = DomainBoundary {
            curve,
            cum_arc: Vec::new(),
            r_max: 0.0,
        };
        let n = ARC_SAMPLES;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let dth = TAU / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let t0 = i as f64 * dth;
            let s0 = d.speed(t0);
            let sm = d.speed(t0 + 0.5 * dth);
            let s1 = d.speed(t0 + dth);
            acc += dth / 6.0 * (s0 + 4.0 * sm + s1);
            cum.push(acc);
        }
        d.cum_arc = cum;
        let mut r_max: f64 = 0.0;
        for i in 0..n {
            r_max = r_max.max(d.point(i as f64 * dth).norm());
        }
        d.r_max = r_max;
        d
    }

    /// Position at parameter θ (radians, counterclockwise).
    pub fn point(&self, theta: f64) -> Vec2 {
        match &self.curve {
            Curve::Circle { r } => v(r * theta.cos(), r * theta.sin()),
            Curve::Ellipse { a, b } => v(a * theta.cos(), b * theta.sin()),
            Curve::SmoothPolar { spline } => {
                let (r, _) = spline.eval(theta);
                v(r * theta.cos(), r * theta.sin())
            }
        }
    }

    /// Parametric velocity dγ/dθ.
    pub fn velocity(&self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        match &self.curve {
            Curve::Circle { r } => v(-r * s, r * c),
            Curve::Ellipse { a, b } => v(-a * s, b * c),
            Curve::SmoothPolar { spline } => {
                let (r, dr) = spline.eval(theta);
                v(dr * c - r * s, dr * s + r * c)
            }
        }
    }

    /// Parametric speed |dγ/dθ|.
    pub fn speed(&self, theta: f64) -> f64 {
        self.velocity(theta).norm()
    }

    /// Unit tangent in the direction of increasing θ (counterclockwise).
    pub fn tangent(&self, theta: f64) -> Vec2 {
        self.velocity(theta).normalized()
    }

    /// Unit normal pointing into the domain (counterclockwise quarter turn of the tangent).
    pub fn inward_normal(&self, theta: f64) -> Vec2 {
        self.tangent(theta).rot_ccw()
    }

    pub fn outward_normal(&self, theta: f64) -> Vec2 {
        -self.inward_normal(theta)
    }

    pub fn perimeter(&self) -> f64 {
        *self.cum_arc.last().unwrap()
    }

    /// Cumulative arclength from parameter 0 to θ (θ wrapped into [0, 2π)).
    pub fn arclength(&self, theta: f64) -> f64 {
        let t = wrap_angle(theta);
        let x = t / TAU * ARC_SAMPLES as f64;
        let i = (x.floor() as usize).min(ARC_SAMPLES - 1);
        let frac = x - i as f64;
        self.cum_arc[i] + (self.cum_arc[i + 1] - self.cum_arc[i]) * frac
    }

    /// Inverse of [`arclength`]: the parameter whose cumulative arclength is `s` (s wrapped
    /// modulo perimeter).
    pub fn theta_at_arclength(&self, s: f64) -> f64 {
        let p = self.perimeter();
        let mut sw = s % p;
        if sw < 0.0 {
            sw += p;
        }
        // cum_arc is strictly increasing; binary search for the containing interval.
        let mut lo = 0usize;
        let mut hi = ARC_SAMPLES;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum_arc[mid] <= sw {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg = self.cum_arc[lo + 1] - self.cum_arc[lo];
        let frac = if seg > 0.0 { (sw - self.cum_arc[lo]) / seg } else { 0.0 };
        (lo as f64 + frac) * TAU / ARC_SAMPLES as f64
    }

    /// Signed level function: negative inside the domain, zero on the boundary.
    pub fn implicit(&self, p: Vec2) -> f64 {
        match &self.curve {
            Curve::Circle { r } => p.norm() - r,
            Curve::Ellipse { a, b } => (p.x / a).powi(2) + (p.y / b).powi(2) - 1.0,
            Curve::SmoothPolar { spline } => {
                let theta = p.y.atan2(p.x);
                p.norm() - spline.eval(theta).0
            }
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.implicit(p) < 0.0
    }

    /// Gradient of [`Self::implicit`]: points outward, not normalized.
    pub fn implicit_gradient(&self, p: Vec2) -> Vec2 {
        match &self.curve {
            Curve::Circle { .. } => {
                let n = p.norm();
                if n == 0.0 {
                    v(1.0, 0.0)
                } else {
                    p * (1.0 / n)
                }
            }
            Curve::Ellipse { a, b } => v(2.0 * p.x / (a * a), 2.0 * p.y / (b * b)),
            Curve::SmoothPolar { spline } => {
                let rho = p.norm();
                if rho == 0.0 {
                    return v(1.0, 0.0);
                }
                let theta = p.y.atan2(p.x);
                let (_, dr) = spline.eval(theta);
                // ∇(|p| − ρ(θ)) = p̂ − ρ′(θ)∇θ with ∇θ = (−y, x)/|p|².
                p * (1.0 / rho) - v(-p.y, p.x) * (dr / (rho * rho))
            }
        }
    }

    /// Gradient-normalized implicit value: an estimate of the Euclidean distance to the boundary,
    /// accurate near the boundary (positive outside, negative inside).
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        match &self.curve {
            Curve::Circle { .. } => self.implicit(p),
            Curve::Ellipse { a, b } => {
                let g = v(2.0 * p.x / (a * a), 2.0 * p.y / (b * b)).norm();
                if g == 0.0 {
                    -b.min(*a)
                } else {
                    self.implicit(p) / g
                }
            }
            Curve::SmoothPolar { spline } => {
                let rho = p.norm();
                if rho == 0.0 {
                    return -spline.eval(0.0).0;
                }
                let theta = p.y.atan2(p.x);
                let (_, dr) = spline.eval(theta);
                let g = (1.0 + (dr / rho).powi(2)).sqrt();
                self.implicit(p) / g
            }
        }
    }

    /// Axis-aligned bounding box of the curve.
    pub fn bbox(&self) -> BBox {
        match &self.curve {
            Curve::Circle { r } => BBox { lo: v(-r, -r), hi: v(*r, *r) },
            Curve::Ellipse { a, b } => BBox { lo: v(-a, -b), hi: v(*a, *b) },
            Curve::SmoothPolar { .. } => BBox {
                lo: v(-self.r_max, -self.r_max),
                hi: v(self.r_max, self.r_max),
            },
        }
    }

    /// Upper bound on the Euclidean diameter of the domain.
    pub fn diameter(&self) -> f64 {
        2.0 * self.r_max
    }
}

/// Periodic cubic spline on uniform knots over [0, 2π).
#[derive(Debug, Clone)]
struct PeriodicSpline {
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
    /// Knot spacing.
    h: f64,
}

impl PeriodicSpline {
    fn fit(y: &[f64]) -> Result<Self> {
        let n = y.len();
        let h = TAU / n as f64;
        // Natural periodic spline conditions: m[i-1] + 4 m[i] + m[i+1] = 6 (y[i-1] - 2y[i] + y[i+1]) / h²,
        // indices cyclic. Solve the cyclic tridiagonal system by Sherman–Morrison.
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let ym = y[(i + n - 1) % n];
                let yp = y[(i + 1) % n];
                6.0 * (ym - 2.0 * y[i] + yp) / (h * h)
            })
            .collect();
        let m = solve_cyclic_tridiagonal(1.0, 4.0, 1.0, &rhs)?;
        Ok(PeriodicSpline { y: y.to_vec(), m, h })
    }

    /// Value and first derivative with respect to θ.
    fn eval(&self, theta: f64) -> (f64, f64) {
        let n = self.y.len();
        let t = wrap_angle(theta);
        let x = t / self.h;
        let i = (x.floor() as usize).min(n - 1);
        let s = (x - i as f64) * self.h;
        let j = (i + 1) % n;
        let (yi, yj, mi, mj, h) = (self.y[i], self.y[j], self.m[i], self.m[j], self.h);
        let b = (yj - yi) / h - h * (2.0 * mi + mj) / 6.0;
        let c = mi / 2.0;
        let d = (mj - mi) / (6.0 * h);
        let val = yi + s * (b + s * (c + s * d));
        let der = b + s * (2.0 * c + 3.0 * s * d);
        (val, der)
    }
}

/// Solve the cyclic tridiagonal system with constant bands (sub, diag, sup) and corner entries
/// equal to the off-diagonal bands.
fn solve_cyclic_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if n < 3 {
        return Err(Error::InvalidInput("cyclic tridiagonal system needs n >= 3".into()));
    }
    let gamma = -diag;
    // Modified tridiagonal matrix B: corners folded into the first and last diagonal entries.
    let mut b = vec![diag; n];
    b[0] = diag - gamma;
    b[n - 1] = diag - sub * sup / gamma;
    let solve_tri = |r: &[f64]| -> Vec<f64> {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = sup / b[0];
        dp[0] = r[0] / b[0];
        for i in 1..n {
            let m = b[i] - sub * cp[i - 1];
            cp[i] = sup / m;
            dp[i] = (r[i] - sub * dp[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    };
    let y = solve_tri(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = sup;
    let z = solve_tri(&u);
    // v = (1, 0, …, 0, sub/gamma)
    let vy = y[0] + sub / gamma * y[n - 1];
    let vz = z[0] + sub / gamma * z[n - 1];
    let denom = 1.0 + vz;
    if denom.abs() < 1e-300 {
        return Err(Error::Solver("singular cyclic tridiagonal system".into()));
    }
    let factor = vy / denom;
    Ok((0..n).map(|i| y[i] - factor * z[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn circle_arclength_is_exact() {
        let d = DomainBoundary::circle(2.0).unwrap();
        assert_relative_eq!(d.perimeter(), 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(d.arclength(PI), 2.0 * PI, max_relative = 1e-10);
        assert_relative_eq!(d.theta_at_arclength(2.0 * PI), PI, max_relative = 1e-9);
    }

    #[test]
    fn circle_normals_point_inward() {
        let d = DomainBoundary::circle(1.0).unwrap();
        for k in 0..8 {
            let th = k as f64 * PI / 4.0;
            let n = d.inward_normal(th);
            // Inward normal of a centered circle is −position.
            assert_relative_eq!(n.x, -th.cos(), epsilon = 1e-12);
            assert_relative_eq!(n.y, -th.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ellipse_perimeter_matches_independent_quadrature() {
        let (a, b) = (1.2, 0.8);
        let d = DomainBoundary::ellipse(a, b).unwrap();
        // Independent composite trapezoid on a 10x finer grid with Richardson check.
        let quad = |n: usize| {
            let dth = TAU / n as f64;
            (0..n)
                .map(|i| {
                    let t = i as f64 * dth;
                    (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt() * dth
                })
                .sum::<f64>()
        };
        let p1 = quad(40_960);
        let p2 = quad(81_920);
        assert!((p1 - p2).abs() < 1e-9, "independent quadrature did not converge");
        assert_relative_eq!(d.perimeter(), p2, max_relative = 1e-8);
    }

    #[test]
    fn arclength_inverse_round_trips() {
        let d = DomainBoundary::ellipse(1.2, 0.8).unwrap();
        for k in 0..32 {
            let th = k as f64 * TAU / 32.0;
            let back = d.theta_at_arclength(d.arclength(th));
            assert_relative_eq!(back, th, epsilon = 1e-6);
        }
    }

    #[test]
    fn polar_constant_radius_reduces_to_circle() {
        let radii = vec![1.5; 16];
        let d = DomainBoundary::smooth_polar(&radii).unwrap();
        assert_relative_eq!(d.perimeter(), 3.0 * PI, max_relative = 1e-10);
        assert_relative_eq!(d.point(1.0).norm(), 1.5, epsilon = 1e-12);
        assert!(d.contains(v(0.0, 1.49)));
        assert!(!d.contains(v(0.0, 1.51)));
    }

    #[test]
    fn polar_spline_interpolates_samples() {
        let n = 16;
        let radii: Vec<f64> =
            (0..n).map(|i| 1.0 + 0.2 * (2.0 * TAU * i as f64 / n as f64).cos()).collect();
        let d = DomainBoundary::smooth_polar(&radii).unwrap();
        for (i, r) in radii.iter().enumerate() {
            let th = TAU * i as f64 / n as f64;
            assert_relative_eq!(d.point(th).norm(), *r, epsilon = 1e-12);
        }
    }

    #[test]
    fn implicit_sign_and_distance_estimate() {
        let d = DomainBoundary::ellipse(1.2, 0.8).unwrap();
        assert!(d.implicit(v(0.0, 0.0)) < 0.0);
        assert!(d.implicit(v(1.3, 0.0)) > 0.0);
        // Near-boundary distance estimate: point 0.01 inside along the minor axis.
        let est = d.boundary_distance(v(0.0, 0.79));
        assert_relative_eq!(est, -0.01, epsilon = 1e-3);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(DomainBoundary::circle(0.0).is_err());
        assert!(DomainBoundary::ellipse(1.0, -1.0).is_err());
        assert!(DomainBoundary::smooth_polar(&[1.0; 4]).is_err());
        assert!(DomainBoundary::smooth_polar(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn tangent_is_counterclockwise() {
        let d = DomainBoundary::ellipse(1.2, 0.8).unwrap();
        let mut area = 0.0;
        let n = 256;
        for i in 0..n {
            let th = TAU * i as f64 / n as f64;
            area += d.point(th).cross(d.velocity(th)) * TAU / n as f64;
        }
        // Shoelace integral is +2·area for counterclockwise orientation.
        assert!(area > 0.0);
        assert_relative_eq!(area / 2.0, PI * 1.2 * 0.8, max_relative = 1e-3);
    }
}
