//! Boundary trace data and its tangential derivative measure.
//!
//! The trace `g` is given piecewise on angular intervals covering the boundary circle once.
//! Four piece kinds cover the regularity classes the solver is exercised on: constants, affine
//! ramps in arclength (uniform derivative density), sinusoids in the boundary angle (smooth
//! data), and centered power laws `B + A·|θ − θ₀|^q` (Hölder cusps of exponent `q`). Pieces may
//! disagree at interval ends; each mismatch is a jump of `g` and contributes an atom to the
//! derivative.
//!
//! The tangential derivative `f = ∂g/∂τ` (counterclockwise orientation) is kept as an exact
//! signed measure: jump atoms plus, per region where `g` is strictly monotone, the continuous
//! part with its analytic mass `g(b) − g(a)`. Monotone regions are found from closed-form zeros
//! of `g′`, never numerically, so splitting into positive and negative parts `f = f⁺ − f⁻` is
//! exact and `∮ f = 0` holds to rounding.
//!
//! Discretization collapses each positive measure to `n` weighted atoms: intrinsic jump atoms
//! are kept verbatim and each monotone region is cut into equal-mass bins by inverting its own
//! cumulative function (bisection on the closed-form `g`), placing one atom per bin at the bin's
//! mass barycenter. Equal-mass binning at barycenters drives the 1-Wasserstein distance to the
//! continuous measure down at rate O(1/n), which is what the plan-stability ladder measures.
//!
//! [`convexity_certificate`] samples boundary pairs and checks that connecting geodesics launch
//! strictly inward, estimating the uniform geodesic convexity ratio `c = min (ν·n)/τ` that the
//! density estimates are conditioned on.

use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::geom::wrap_angle;
use crate::metric::{self, MetricOpts};
use crate::weight::ConformalWeight;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Functional form of the trace on one angular interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceKind {
    /// `g ≡ value`.
    Constant { value: f64 },
    /// Linear in boundary arclength from `from` at the interval start to `to` at the end.
    Affine { from: f64, to: f64 },
    /// `g(θ) = amp·sin(omega·θ + phase) + offset`.
    Sinusoid { amp: f64, omega: f64, phase: f64, offset: f64 },
    /// `g(θ) = offset + amp·|θ − theta0|^exponent` (angular difference wrapped to (−π, π]).
    Power { offset: f64, amp: f64, theta0: f64, exponent: f64 },
}

/// One trace piece: the angular interval `[theta_a, theta_b)` and the function on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub theta_a: f64,
    pub theta_b: f64,
    #[serde(flatten)]
    pub kind: PieceKind,
}

impl Piece {
    /// Trace value at `theta`, which must lie in `[theta_a, theta_b]` (unwrapped coordinates).
    fn value(&self, domain: &DomainBoundary, theta: f64) -> f64 {
        match &self.kind {
            PieceKind::Constant { value } => *value,
            PieceKind::Affine { from, to } => {
                let s_a = arclength_unwrapped(domain, self.theta_a);
                let s_b = arclength_unwrapped(domain, self.theta_b);
                let s = arclength_unwrapped(domain, theta);
                if s_b > s_a {
                    from + (to - from) * ((s - s_a) / (s_b - s_a)).clamp(0.0, 1.0)
                } else {
                    *from
                }
            }
            PieceKind::Sinusoid { amp, omega, phase, offset } => {
                amp * (omega * theta + phase).sin() + offset
            }
            PieceKind::Power { offset, amp, theta0, exponent } => {
                offset + amp * (theta - theta0).abs().powf(*exponent)
            }
        }
    }

    /// `dg/dθ` at `theta` (one-sided limits agree except at power centers).
    fn derivative(&self, domain: &DomainBoundary, theta: f64) -> f64 {
        match &self.kind {
            PieceKind::Constant { .. } => 0.0,
            PieceKind::Affine { from, to } => {
                let s_a = arclength_unwrapped(domain, self.theta_a);
                let s_b = arclength_unwrapped(domain, self.theta_b);
                if s_b > s_a {
                    (to - from) / (s_b - s_a) * domain.speed(theta)
                } else {
                    0.0
                }
            }
            PieceKind::Sinusoid { amp, omega, phase, .. } => {
                amp * omega * (omega * theta + phase).cos()
            }
            PieceKind::Power { amp, theta0, exponent, .. } => {
                let d = theta - theta0;
                if d == 0.0 {
                    0.0
                } else {
                    amp * exponent * d.abs().powf(exponent - 1.0) * d.signum()
                }
            }
        }
    }

    /// Interior zeros of `g′` in `(a, b)`, in increasing order, from closed forms.
    fn derivative_zeros(&self) -> Vec<f64> {
        let (a, b) = (self.theta_a, self.theta_b);
        match &self.kind {
            PieceKind::Constant { .. } | PieceKind::Affine { .. } => Vec::new(),
            PieceKind::Sinusoid { amp, omega, phase, .. } => {
                if *amp == 0.0 || *omega == 0.0 {
                    return Vec::new();
                }
                // cos(ωθ + φ) = 0 at ωθ + φ = π/2 + mπ.
                let mut out = Vec::new();
                let m_lo = ((omega * a + phase - PI / 2.0) / PI).floor() as i64 - 1;
                let m_hi = ((omega * b + phase - PI / 2.0) / PI).ceil() as i64 + 1;
                for m in m_lo..=m_hi {
                    let theta = (PI / 2.0 + m as f64 * PI - phase) / omega;
                    if theta > a + 1e-12 && theta < b - 1e-12 {
                        out.push(theta);
                    }
                }
                out.sort_by(f64::total_cmp);
                out
            }
            PieceKind::Power { amp, theta0, exponent, .. } => {
                if *amp == 0.0 || *exponent == 0.0 {
                    return Vec::new();
                }
                if *theta0 > a + 1e-12 && *theta0 < b - 1e-12 {
                    vec![*theta0]
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// Arclength that respects unwrapped angles beyond 2π (pieces near the seam use them).
fn arclength_unwrapped(domain: &DomainBoundary, theta: f64) -> f64 {
    let wraps = (theta / TAU).floor();
    domain.arclength(theta - wraps * TAU) + wraps * domain.perimeter()
}

/// 8-point Gauss–Legendre nodes and weights on [-1, 1].
const GL8_X: [f64; 8] = [
    -0.960289856497536,
    -0.796666477413627,
    -0.525532409916329,
    -0.183434642495650,
    0.183434642495650,
    0.525532409916329,
    0.796666477413627,
    0.960289856497536,
];
const GL8_W: [f64; 8] = [
    0.101228536290376,
    0.222381034453374,
    0.313706645877887,
    0.362683783378362,
    0.362683783378362,
    0.313706645877887,
    0.222381034453374,
    0.101228536290376,
];

/// Piecewise boundary trace covering the circle once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryDatum {
    pieces: Vec<Piece>,
}

impl BoundaryDatum {
    /// Validate contiguous full coverage: intervals must be nonempty, consecutive (each end is
    /// the next start), and sum to one full turn. Power pieces must stay within half a turn of
    /// their center so the wrapped distance is smooth on the interval.
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Schema("boundary trace needs at least one piece".into()));
        }
        let mut total = 0.0;
        for (i, p) in pieces.iter().enumerate() {
            if !(p.theta_b > p.theta_a) {
                return Err(Error::Schema(format!(
                    "piece {i}: empty or reversed interval [{}, {}]",
                    p.theta_a, p.theta_b
                )));
            }
            total += p.theta_b - p.theta_a;
            let next = &pieces[(i + 1) % pieces.len()];
            let gap = if i + 1 == pieces.len() {
                (next.theta_a + TAU - p.theta_b).abs()
            } else {
                (next.theta_a - p.theta_b).abs()
            };
            if gap > 1e-9 {
                return Err(Error::Schema(format!(
                    "piece {i} ends at {} but the next starts at {}",
                    p.theta_b, next.theta_a
                )));
            }
            if let PieceKind::Power { theta0, exponent, .. } = &p.kind {
                if !(*exponent > 0.0) {
                    return Err(Error::Schema(format!(
                        "piece {i}: power exponent must be positive, got {exponent}"
                    )));
                }
                if p.theta_a - theta0 < -PI - 1e-12 || p.theta_b - theta0 > PI + 1e-12 {
                    return Err(Error::Schema(format!(
                        "piece {i}: power interval extends beyond half a turn from its center"
                    )));
                }
            }
        }
        if (total - TAU).abs() > 1e-9 {
            return Err(Error::Schema(format!(
                "piece intervals cover {total} radians, expected a full turn"
            )));
        }
        Ok(BoundaryDatum { pieces })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Map `theta` into the covered window `[θ₀, θ₀ + 2π)` and locate its piece.
    fn locate(&self, theta: f64) -> (usize, f64) {
        let start = self.pieces[0].theta_a;
        let mut t = start + wrap_angle(theta - start);
        // Guard the right edge: wrap_angle may round up to a full turn.
        if t >= self.pieces.last().unwrap().theta_b {
            t = start;
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if t < p.theta_b {
                return (i, t);
            }
        }
        (self.pieces.len() - 1, t)
    }

    /// Trace value `g(θ)` (right-continuous at piece joints).
    pub fn value(&self, domain: &DomainBoundary, theta: f64) -> f64 {
        let (i, t) = self.locate(theta);
        self.pieces[i].value(domain, t)
    }

    /// Jumps of the trace at piece joints: `(θ, g(θ⁺) − g(θ⁻))`, negligible mismatches dropped.
    pub fn jumps(&self, domain: &DomainBoundary) -> Vec<(f64, f64)> {
        let scale = self.oscillation_estimate(domain).max(1e-30);
        let m = self.pieces.len();
        let mut out = Vec::new();
        for i in 0..m {
            let left = &self.pieces[(i + m - 1) % m];
            let right = &self.pieces[i];
            let g_minus = left.value(domain, left.theta_b);
            let g_plus = right.value(domain, right.theta_a);
            let jump = g_plus - g_minus;
            if jump.abs() > 1e-12 * scale {
                out.push((wrap_angle(right.theta_a), jump));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// Oscillation `max g − min g` from dense sampling plus piece joints.
    pub fn oscillation_estimate(&self, domain: &DomainBoundary) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let start = self.pieces[0].theta_a;
        for q in 0..4096 {
            let v = self.value(domain, start + TAU * q as f64 / 4096.0);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for p in &self.pieces {
            for t in [p.theta_a, p.theta_b - 1e-12 * TAU] {
                let v = p.value(domain, t);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (hi - lo).max(0.0)
    }

    /// The signed measure `f = ∂g/∂τ`: jump atoms plus monotone continuous regions with
    /// analytic masses.
    pub fn tangential_derivative(&self, domain: &DomainBoundary) -> BoundaryMeasure {
        let scale = self.oscillation_estimate(domain).max(1e-30);
        let atoms = self
            .jumps(domain)
            .iter()
            .map(|&(theta, mass)| MeasureAtom { theta, mass })
            .collect();
        let mut segs = Vec::new();
        for p in &self.pieces {
            let mut cuts = vec![p.theta_a];
            cuts.extend(p.derivative_zeros());
            cuts.push(p.theta_b);
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let mass_signed = p.value(domain, b) - p.value(domain, a);
                if mass_signed.abs() <= 1e-13 * scale {
                    continue;
                }
                segs.push(Seg {
                    a,
                    b,
                    mass: mass_signed.abs(),
                    sign: mass_signed.signum(),
                    piece: p.clone(),
                });
            }
        }
        BoundaryMeasure { atoms, segs }
    }
}

/// A point mass of the derivative measure, in boundary-angle coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureAtom {
    pub theta: f64,
    pub mass: f64,
}

/// Monotone region of the continuous part: `g` strictly monotone on `[a, b]` with total
/// unsigned mass `mass` and direction `sign`.
#[derive(Debug, Clone)]
struct Seg {
    a: f64,
    b: f64,
    mass: f64,
    sign: f64,
    piece: Piece,
}

impl Seg {
    /// Direction of `g` across the region: `+1` increasing, `−1` decreasing. Derived from the
    /// endpoint values rather than stored, because `sign` is the sign of the *measure*, which
    /// flips to positive when a decreasing region moves into the negative part of a split.
    fn g_direction(&self, domain: &DomainBoundary) -> f64 {
        (self.piece.value(domain, self.b) - self.piece.value(domain, self.a)).signum()
    }

    /// Unsigned cumulative mass of `[a, θ]`, increasing from 0 to `mass`.
    fn cum(&self, domain: &DomainBoundary, theta: f64) -> f64 {
        self.g_direction(domain)
            * (self.piece.value(domain, theta) - self.piece.value(domain, self.a))
    }

    /// Invert the cumulative function by bisection (the region is strictly monotone).
    fn invert(&self, domain: &DomainBoundary, target: f64) -> f64 {
        let (mut lo, mut hi) = (self.a, self.b);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cum(domain, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Mass barycenter of the sub-interval `[t0, t1]`: `(∫θ dg) / (∫dg)` via integration by
    /// parts, `∫θ dg = [θg] − ∫g dθ`, with Gauss–Legendre for the remaining integral.
    fn barycenter(&self, domain: &DomainBoundary, t0: f64, t1: f64) -> f64 {
        let dir = self.g_direction(domain);
        let g0 = self.piece.value(domain, t0);
        let g1 = self.piece.value(domain, t1);
        let dm = dir * (g1 - g0);
        if dm <= 0.0 {
            return 0.5 * (t0 + t1);
        }
        let half = 0.5 * (t1 - t0);
        let mid = 0.5 * (t0 + t1);
        let int_g: f64 = GL8_X
            .iter()
            .zip(GL8_W.iter())
            .map(|(&x, &w)| w * self.piece.value(domain, mid + half * x))
            .sum::<f64>()
            * half;
        let int_theta_dg = t1 * g1 - t0 * g0 - int_g;
        (dir * int_theta_dg) / dm
    }
}

/// Signed measure on the boundary: atoms plus monotone continuous regions.
#[derive(Debug, Clone)]
pub struct BoundaryMeasure {
    pub atoms: Vec<MeasureAtom>,
    segs: Vec<Seg>,
}

impl BoundaryMeasure {
    /// Total signed mass; zero (to rounding) for a tangential derivative.
    pub fn total(&self) -> f64 {
        let a: f64 = self.atoms.iter().map(|at| at.mass).sum();
        let s: f64 = self.segs.iter().map(|sg| sg.sign * sg.mass).sum();
        a + s
    }

    /// Mass of the positive part.
    pub fn positive_mass(&self) -> f64 {
        let a: f64 = self.atoms.iter().map(|at| at.mass.max(0.0)).sum();
        let s: f64 =
            self.segs.iter().filter(|sg| sg.sign > 0.0).map(|sg| sg.mass).sum();
        a + s
    }

    /// Mass of the negative part (as a positive number).
    pub fn negative_mass(&self) -> f64 {
        let a: f64 = self.atoms.iter().map(|at| (-at.mass).max(0.0)).sum();
        let s: f64 =
            self.segs.iter().filter(|sg| sg.sign < 0.0).map(|sg| sg.mass).sum();
        a + s
    }

    /// Split into positive and negative parts, both returned as positive measures.
    pub fn split(&self) -> (BoundaryMeasure, BoundaryMeasure) {
        let plus_atoms =
            self.atoms.iter().filter(|a| a.mass > 0.0).cloned().collect::<Vec<_>>();
        let minus_atoms = self
            .atoms
            .iter()
            .filter(|a| a.mass < 0.0)
            .map(|a| MeasureAtom { theta: a.theta, mass: -a.mass })
            .collect::<Vec<_>>();
        let plus_segs: Vec<Seg> =
            self.segs.iter().filter(|s| s.sign > 0.0).cloned().collect();
        let minus_segs: Vec<Seg> = self
            .segs
            .iter()
            .filter(|s| s.sign < 0.0)
            .map(|s| Seg { sign: 1.0, ..s.clone() })
            .collect();
        (
            BoundaryMeasure { atoms: plus_atoms, segs: plus_segs },
            BoundaryMeasure { atoms: minus_atoms, segs: minus_segs },
        )
    }

    /// Density with respect to arclength of the continuous part at `theta` (0 off the regions).
    pub fn density_per_arclength(&self, domain: &DomainBoundary, theta: f64) -> f64 {
        let start = self.segs.first().map(|s| s.a).unwrap_or(0.0);
        let t = start + wrap_angle(theta - start);
        for s in &self.segs {
            if t >= s.a && t < s.b {
                let speed = domain.speed(t);
                if speed > 0.0 {
                    return s.piece.derivative(domain, t) / speed;
                }
            }
        }
        0.0
    }

    /// Signed mass of the counterclockwise angular interval `(theta1, theta2]`.
    pub fn interval_mass(&self, domain: &DomainBoundary, theta1: f64, theta2: f64) -> f64 {
        let span = wrap_angle(theta2 - theta1);
        let in_interval = |theta: f64| -> bool {
            let d = wrap_angle(theta - theta1);
            d > 1e-15 && d <= span + 1e-15
        };
        let mut total = 0.0;
        for a in &self.atoms {
            if in_interval(a.theta) {
                total += a.mass;
            }
        }
        for s in &self.segs {
            // Work in interval coordinates: the segment starts at `offset` past theta1 and the
            // interval is [0, span]. Clip and convert the clipped ends back to θ on the segment.
            let offset = wrap_angle(s.a - theta1);
            let seg_len = s.b - s.a;
            let clip_lo = 0.0f64.max(offset) - offset;
            let clip_hi = span.min(offset + seg_len) - offset;
            if clip_hi > clip_lo {
                let t0 = s.a + clip_lo;
                let t1 = s.a + clip_hi;
                total += s.sign * (s.cum(domain, t1) - s.cum(domain, t0));
            }
            // A segment can also re-enter the interval after wrapping past 2π.
            let offset2 = offset - TAU;
            let clip_lo2 = 0.0f64.max(offset2) - offset2;
            let clip_hi2 = span.min(offset2 + seg_len) - offset2;
            if clip_hi2 > clip_lo2 && clip_hi2 <= seg_len + 1e-15 {
                let t0 = s.a + clip_lo2;
                let t1 = s.a + clip_hi2.min(seg_len);
                total += s.sign * (s.cum(domain, t1) - s.cum(domain, t0));
            }
        }
        total
    }

    /// Integral `∫ φ dμ` of a test function given on the angular parameter. Atoms contribute
    /// `φ(θ)·mass`; each monotone region contributes `∫ φ(θ) g′(θ) dθ` by panelled
    /// Gauss–Legendre quadrature (panel width ≤ 2π/128).
    pub fn integrate<F: Fn(f64) -> f64>(&self, domain: &DomainBoundary, phi: F) -> f64 {
        let mut total: f64 = self.atoms.iter().map(|a| a.mass * phi(a.theta)).sum();
        for s in &self.segs {
            // `sign · direction` is +1 on an unsplit measure and restores the positive
            // orientation on the negative part of a split, where the two disagree.
            let orient = s.sign * s.g_direction(domain);
            let panels = (((s.b - s.a) / (TAU / 128.0)).ceil() as usize).max(1);
            let dt = (s.b - s.a) / panels as f64;
            for p in 0..panels {
                let half = 0.5 * dt;
                let mid = s.a + (p as f64 + 0.5) * dt;
                total += half
                    * orient
                    * GL8_X
                        .iter()
                        .zip(GL8_W.iter())
                        .map(|(&x, &w)| {
                            let theta = mid + half * x;
                            w * phi(theta) * s.piece.derivative(domain, theta)
                        })
                        .sum::<f64>();
            }
        }
        total
    }

    /// `L^p` norm of the measure with respect to arclength, `(∫ |dμ/ds|^p ds)^{1/p}`, by
    /// panelled Gauss–Legendre quadrature over the monotone regions. At `p = 1` atoms
    /// contribute their absolute mass; for `p > 1` a measure with atoms has no density and the
    /// call is rejected.
    pub fn lp_norm(&self, domain: &DomainBoundary, p: f64) -> Result<f64> {
        if !(p >= 1.0) || p.is_infinite() {
            return Err(Error::InvalidInput(format!(
                "measure norm exponent must be finite and ≥ 1, got {p}"
            )));
        }
        if p > 1.0 && self.atoms.iter().any(|a| a.mass != 0.0) {
            return Err(Error::InvalidInput(
                "measure has atoms: no L^p density for p > 1".into(),
            ));
        }
        let mut total: f64 = if p == 1.0 {
            self.atoms.iter().map(|a| a.mass.abs()).sum()
        } else {
            0.0
        };
        // ∫ |g′(s)|^p ds = ∫ |g′(θ)|^p · speed(θ)^{1−p} dθ on each monotone region.
        for s in &self.segs {
            let panels = (((s.b - s.a) / (TAU / 128.0)).ceil() as usize).max(1);
            let dt = (s.b - s.a) / panels as f64;
            for q in 0..panels {
                let half = 0.5 * dt;
                let mid = s.a + (q as f64 + 0.5) * dt;
                total += half
                    * GL8_X
                        .iter()
                        .zip(GL8_W.iter())
                        .map(|(&x, &w)| {
                            let theta = mid + half * x;
                            let speed = domain.speed(theta);
                            w * (s.piece.derivative(domain, theta) / speed).abs().powf(p)
                                * speed
                        })
                        .sum::<f64>();
            }
        }
        Ok(total.powf(1.0 / p))
    }

    /// Collapse a positive measure to at most `n` weighted atoms: intrinsic atoms verbatim,
    /// plus equal-mass bins of each monotone region at their barycenters. Bin counts per region
    /// are proportional to region mass (largest remainder), at least one per region.
    ///
    /// Returns `(θ, mass)` sorted by angle. Fails when `n` cannot accommodate the intrinsic
    /// atoms and one bin per region.
    pub fn discretize(&self, domain: &DomainBoundary, n: usize) -> Result<Vec<(f64, f64)>> {
        if self.atoms.iter().any(|a| a.mass < 0.0) || self.segs.iter().any(|s| s.sign < 0.0) {
            return Err(Error::InvalidInput(
                "discretize expects a positive measure; split first".into(),
            ));
        }
        let continuous: f64 = self.segs.iter().map(|s| s.mass).sum();
        let budget = n as i64 - self.atoms.len() as i64;
        if budget < 0 || (continuous > 0.0 && (budget as usize) < self.segs.len()) {
            return Err(Error::InvalidInput(format!(
                "atom budget {n} too small: {} intrinsic atoms plus {} continuous regions",
                self.atoms.len(),
                self.segs.len()
            )));
        }
        let mut out: Vec<(f64, f64)> =
            self.atoms.iter().map(|a| (wrap_angle(a.theta), a.mass)).collect();
        if continuous > 0.0 {
            let budget = budget as usize;
            // Largest-remainder apportionment of bins to regions.
            let raw: Vec<f64> =
                self.segs.iter().map(|s| s.mass / continuous * budget as f64).collect();
            let mut counts: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();
            let mut assigned: usize = counts.iter().sum();
            let mut order: Vec<usize> = (0..self.segs.len()).collect();
            order.sort_by(|&i, &j| {
                (raw[j] - raw[j].floor()).total_cmp(&(raw[i] - raw[i].floor())).then(i.cmp(&j))
            });
            let mut cursor = 0usize;
            while assigned < budget {
                counts[order[cursor % order.len()]] += 1;
                assigned += 1;
                cursor += 1;
            }
            while assigned > budget {
                // Over-assignment can only come from the max(1) floor; shave the largest counts.
                let i = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
                if counts[i] <= 1 {
                    break;
                }
                counts[i] -= 1;
                assigned -= 1;
            }
            for (s, &m) in self.segs.iter().zip(counts.iter()) {
                let bin_mass = s.mass / m as f64;
                let mut t_prev = s.a;
                for b in 0..m {
                    let t_next = if b + 1 == m {
                        s.b
                    } else {
                        s.invert(domain, bin_mass * (b + 1) as f64)
                    };
                    let bc = s.barycenter(domain, t_prev, t_next);
                    out.push((wrap_angle(bc), bin_mass));
                    t_prev = t_next;
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Ok(out)
    }
}

/// Result of sampling geodesic launch angles over random boundary pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub n_pairs: usize,
    /// Smallest inward component `ν·n` of any sampled launch direction.
    pub min_nu_dot_n: f64,
    /// Smallest ratio `(ν·n)/τ` — the uniform geodesic convexity constant estimate.
    pub min_ratio: f64,
    /// Largest ratio, for symmetry diagnostics.
    pub max_ratio: f64,
    /// Sampled launches that failed to point strictly inward.
    pub violations: usize,
    /// Pairs whose connecting geodesic could not be found.
    pub failures: usize,
    /// Set when the estimated constant is too close to zero to trust downstream bounds.
    pub near_degenerate: bool,
}

impl ConvexityCertificate {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.failures == 0 && !self.near_degenerate
    }
}

/// Estimate the uniform geodesic convexity of `(Ω, k)` from `n_pairs` seeded random boundary
/// pairs: connect each pair and record the inward component of the launch direction at both
/// endpoints, normalized by geodesic length.
pub fn convexity_certificate(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    n_pairs: usize,
    seed: u64,
    opts: &MetricOpts,
) -> Result<ConvexityCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cert = ConvexityCertificate {
        n_pairs: 0,
        min_nu_dot_n: f64::INFINITY,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        violations: 0,
        failures: 0,
        near_degenerate: false,
    };
    let mut opts = opts.clone();
    opts.error_on_multi = false;
    while cert.n_pairs < n_pairs {
        let t1 = rng.gen_range(0.0..TAU);
        let t2 = rng.gen_range(0.0..TAU);
        let sep = wrap_angle(t2 - t1).min(wrap_angle(t1 - t2));
        if sep < 0.1 {
            continue;
        }
        cert.n_pairs += 1;
        let (x, y) = (domain.point(t1), domain.point(t2));
        match metric::connect(w, domain, x, y, &opts) {
            Ok(g) if !g.is_degenerate() => {
                let tau = g.weighted_length;
                for (nu, theta) in [(g.init_dir, t1), (-g.final_dir(), t2)] {
                    let dot = nu.dot(domain.inward_normal(theta));
                    cert.min_nu_dot_n = cert.min_nu_dot_n.min(dot);
                    if dot <= 1e-12 {
                        cert.violations += 1;
                    }
                    if tau > 0.0 {
                        let ratio = dot / tau;
                        cert.min_ratio = cert.min_ratio.min(ratio);
                        cert.max_ratio = cert.max_ratio.max(ratio);
                    }
                }
            }
            Ok(_) => cert.failures += 1,
            Err(_) => cert.failures += 1,
        }
    }
    cert.near_degenerate = !cert.min_ratio.is_finite() || cert.min_ratio < 1e-3;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn circle() -> DomainBoundary {
        DomainBoundary::circle(1.0).unwrap()
    }

    fn upper_indicator() -> BoundaryDatum {
        BoundaryDatum::new(vec![
            Piece { theta_a: 0.0, theta_b: PI, kind: PieceKind::Constant { value: 1.0 } },
            Piece { theta_a: PI, theta_b: TAU, kind: PieceKind::Constant { value: 0.0 } },
        ])
        .unwrap()
    }

    #[test]
    fn indicator_gives_unit_atoms_at_the_jumps() {
        let d = circle();
        let f = upper_indicator().tangential_derivative(&d);
        assert_eq!(f.atoms.len(), 2);
        assert_relative_eq!(f.atoms[0].theta, 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.atoms[0].mass, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.atoms[1].theta, PI, epsilon = 1e-12);
        assert_relative_eq!(f.atoms[1].mass, -1.0, epsilon = 1e-12);
        assert!(f.total().abs() < 1e-12);
        assert_relative_eq!(f.positive_mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.negative_mass(), 1.0, epsilon = 1e-12);
        let (fp, fm) = f.split();
        assert_eq!(fp.atoms.len(), 1);
        assert_eq!(fm.atoms.len(), 1);
        assert_relative_eq!(fm.atoms[0].mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sine_trace_has_cosine_density() {
        let d = circle();
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Sinusoid { amp: 1.0, omega: 1.0, phase: 0.0, offset: 0.0 },
        }])
        .unwrap();
        let f = g.tangential_derivative(&d);
        assert!(f.atoms.is_empty(), "smooth trace should have no atoms: {:?}", f.atoms);
        // On the unit circle arclength equals angle, so the density is cos θ.
        for theta in [0.1, 1.0, 2.0, 4.0, 5.5] {
            assert_relative_eq!(
                f.density_per_arclength(&d, theta),
                theta.cos(),
                epsilon = 1e-10
            );
        }
        // Positive part: rising on [0, π/2] ∪ [3π/2, 2π], total mass 2.
        assert_relative_eq!(f.positive_mass(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.negative_mass(), 2.0, epsilon = 1e-12);
        assert!(f.total().abs() < 1e-12);
    }

    #[test]
    fn uniform_ramp_discretizes_to_equal_mass_bins() {
        // g rises linearly from 0 to 1 over the upper semicircle, stays 1, drops at θ = 0:
        // f⁺ is the uniform measure of mass 1 on [0, π]. Four equal-mass bins on the unit
        // circle sit at the bin midpoints π/8, 3π/8, 5π/8, 7π/8 with mass 1/4.
        let d = circle();
        let g = BoundaryDatum::new(vec![
            Piece { theta_a: 0.0, theta_b: PI, kind: PieceKind::Affine { from: 0.0, to: 1.0 } },
            Piece { theta_a: PI, theta_b: TAU, kind: PieceKind::Constant { value: 1.0 } },
        ])
        .unwrap();
        let f = g.tangential_derivative(&d);
        let (fp, fm) = f.split();
        assert_relative_eq!(fp.positive_mass(), 1.0, epsilon = 1e-12);
        assert_eq!(fm.atoms.len(), 1, "the wrap jump is the negative part");
        let atoms = fp.discretize(&d, 4).unwrap();
        assert_eq!(atoms.len(), 4);
        let expected = [PI / 8.0, 3.0 * PI / 8.0, 5.0 * PI / 8.0, 7.0 * PI / 8.0];
        for ((theta, mass), exp) in atoms.iter().zip(expected.iter()) {
            assert_relative_eq!(*theta, *exp, epsilon = 1e-9);
            assert_relative_eq!(*mass, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn sine_positive_part_discretization_is_equal_mass() {
        let d = circle();
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Sinusoid { amp: 1.0, omega: 1.0, phase: 0.0, offset: 0.0 },
        }])
        .unwrap();
        let (fp, _) = g.tangential_derivative(&d).split();
        let atoms = fp.discretize(&d, 8).unwrap();
        assert_eq!(atoms.len(), 8);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-12);
        for (theta, mass) in &atoms {
            assert_relative_eq!(*mass, 0.25, epsilon = 1e-12);
            // Atoms stay inside the rising regions.
            let in_first = *theta < PI / 2.0;
            let in_second = *theta > 3.0 * PI / 2.0;
            assert!(in_first || in_second, "atom at {theta} outside the rising regions");
        }
        // Bin barycenter oracle for the first bin of sin on [0, π/2] with 4 bins there:
        // edges at sin θ = 1/4 → θ₁ = asin(1/4); barycenter = (θ₁ sin θ₁ + cos θ₁ − 1)/(1/4).
        let t1 = 0.25f64.asin();
        let bc = (t1 * t1.sin() + t1.cos() - 1.0) / 0.25;
        assert_relative_eq!(atoms[0].0, bc, epsilon = 1e-8);
    }

    #[test]
    fn wasserstein_gap_of_discretization_shrinks_linearly() {
        // 1-Wasserstein distance on the θ-line between the uniform measure on [0, π] and its
        // n-bin barycenter discretization: each bin contributes ∫|F_μ − F_ν| = w²/(4·π) with
        // w = π/n the bin width, so the total is π/(4n). Check the computed atoms reproduce it.
        let d = circle();
        let g = BoundaryDatum::new(vec![
            Piece { theta_a: 0.0, theta_b: PI, kind: PieceKind::Affine { from: 0.0, to: 1.0 } },
            Piece { theta_a: PI, theta_b: TAU, kind: PieceKind::Constant { value: 1.0 } },
        ])
        .unwrap();
        let (fp, _) = g.tangential_derivative(&d).split();
        let w1_for = |n: usize| -> f64 {
            let atoms = fp.discretize(&d, n).unwrap();
            // CDF distance on a fine grid over [0, π].
            let m = 40_000;
            let mut acc = 0.0;
            for q in 0..m {
                let theta = PI * (q as f64 + 0.5) / m as f64;
                let f_cont = theta / PI;
                let f_disc: f64 =
                    atoms.iter().filter(|(t, _)| *t <= theta).map(|(_, mass)| mass).sum();
                acc += (f_cont - f_disc).abs() * (PI / m as f64);
            }
            acc
        };
        let w8 = w1_for(8);
        let w16 = w1_for(16);
        assert_relative_eq!(w8, PI / 32.0, max_relative = 1e-3);
        assert_relative_eq!(w16, PI / 64.0, max_relative = 1e-3);
        assert!(w16 < 0.6 * w8, "discretization gap must shrink linearly: {w8} -> {w16}");
    }

    #[test]
    fn falling_region_bins_stay_inside_the_region_after_split() {
        // The split flips the measure sign of a decreasing region to positive while g itself
        // still decreases across it. Bin edges must follow the unsigned cumulative mass, so
        // the atoms spread over the region interior instead of collapsing onto its endpoint.
        let d = circle();
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Sinusoid { amp: 0.8, omega: 2.0, phase: 0.4, offset: 0.0 },
        }])
        .unwrap();
        let f = g.tangential_derivative(&d);
        let (_, fm) = f.split();
        let atoms = fm.discretize(&d, 16).unwrap();
        assert_eq!(atoms.len(), 16);
        for (theta, mass) in &atoms {
            // Two falling regions of mass 1.6 each, eight bins apiece: every bin carries 0.2.
            assert_relative_eq!(*mass, 0.2, epsilon = 1e-9);
            assert!(
                f.density_per_arclength(&d, *theta) < -1e-2,
                "atom at {theta} is not strictly inside a falling region"
            );
        }
        for pair in atoms.windows(2) {
            assert!(
                (pair[1].0 - pair[0].0).abs() > 1e-3,
                "coincident atoms at {} and {}",
                pair[0].0,
                pair[1].0
            );
        }
    }

    #[test]
    fn interval_mass_is_additive_and_closes_to_zero() {
        let d = circle();
        let g = BoundaryDatum::new(vec![
            Piece {
                theta_a: 0.0,
                theta_b: PI,
                kind: PieceKind::Sinusoid { amp: 0.7, omega: 2.0, phase: 0.3, offset: 0.1 },
            },
            Piece { theta_a: PI, theta_b: TAU, kind: PieceKind::Affine { from: 0.2, to: 0.9 } },
        ])
        .unwrap();
        let f = g.tangential_derivative(&d);
        // Full turn closes to zero.
        assert!(f.total().abs() < 1e-12, "total {} not zero", f.total());
        // Additivity over a partition.
        let cuts = [0.3, 1.1, 2.9, 4.0, 5.7];
        let mut sum = f.interval_mass(&d, *cuts.last().unwrap(), cuts[0]);
        for w in cuts.windows(2) {
            sum += f.interval_mass(&d, w[0], w[1]);
        }
        assert!(sum.abs() < 1e-10, "partition masses must close the loop: {sum}");
        // Interval mass equals the trace difference across the interval (no atoms inside).
        let m = f.interval_mass(&d, 0.3, 1.1);
        assert_relative_eq!(m, g.value(&d, 1.1) - g.value(&d, 0.3), epsilon = 1e-10);
    }

    #[test]
    fn power_cusp_splits_at_its_center() {
        let d = circle();
        let g = BoundaryDatum::new(vec![
            Piece {
                theta_a: PI / 2.0,
                theta_b: 3.0 * PI / 2.0,
                kind: PieceKind::Power { offset: 0.0, amp: 1.0, theta0: PI, exponent: 0.5 },
            },
            Piece {
                theta_a: 3.0 * PI / 2.0,
                theta_b: PI / 2.0 + TAU,
                kind: PieceKind::Constant { value: (PI / 2.0f64).sqrt() },
            },
        ])
        .unwrap();
        let f = g.tangential_derivative(&d);
        // Falls on [π/2, π), rises on (π, 3π/2]: one negative and one positive region.
        let (fp, fm) = f.split();
        assert_relative_eq!(fp.positive_mass(), (PI / 2.0f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(fm.positive_mass(), (PI / 2.0f64).sqrt(), epsilon = 1e-12);
        // Density blows up toward the cusp but is finite elsewhere and has the right sign.
        assert!(f.density_per_arclength(&d, PI - 0.3) < 0.0);
        assert!(f.density_per_arclength(&d, PI + 0.3) > 0.0);
    }

    #[test]
    fn lp_norm_matches_closed_forms_on_the_circle() {
        let d = circle();
        // g = sin θ on the unit circle: density cos θ, so ‖f‖_p^p = ∫|cos θ|^p dθ.
        let g = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: TAU,
            kind: PieceKind::Sinusoid { amp: 1.0, omega: 1.0, phase: 0.0, offset: 0.0 },
        }])
        .unwrap();
        let f = g.tangential_derivative(&d);
        assert_relative_eq!(f.lp_norm(&d, 1.0).unwrap(), 4.0, epsilon = 1e-10);
        assert_relative_eq!(f.lp_norm(&d, 2.0).unwrap(), PI.sqrt(), epsilon = 1e-10);
        // ∫|cos|⁴ = 3π/4.
        assert_relative_eq!(
            f.lp_norm(&d, 4.0).unwrap(),
            (3.0 * PI / 4.0).powf(0.25),
            epsilon = 1e-10
        );
        assert!(f.lp_norm(&d, 0.5).is_err(), "exponents below one are rejected");
        assert!(f.lp_norm(&d, f64::INFINITY).is_err(), "sup norm is not defined here");
    }

    #[test]
    fn lp_norm_rejects_atoms_above_p_one() {
        let d = circle();
        let f = upper_indicator().tangential_derivative(&d);
        // Two unit jumps: L¹ mass 2, but no density for any higher exponent.
        assert_relative_eq!(f.lp_norm(&d, 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(f.lp_norm(&d, 2.0).is_err());
    }

    #[test]
    fn coverage_validation_rejects_gaps_and_overlaps() {
        let gap = BoundaryDatum::new(vec![
            Piece { theta_a: 0.0, theta_b: 3.0, kind: PieceKind::Constant { value: 0.0 } },
            Piece { theta_a: 3.2, theta_b: TAU, kind: PieceKind::Constant { value: 1.0 } },
        ]);
        assert!(gap.is_err());
        let reversed = BoundaryDatum::new(vec![Piece {
            theta_a: 1.0,
            theta_b: 0.5,
            kind: PieceKind::Constant { value: 0.0 },
        }]);
        assert!(reversed.is_err());
        let short = BoundaryDatum::new(vec![Piece {
            theta_a: 0.0,
            theta_b: 3.0,
            kind: PieceKind::Constant { value: 0.0 },
        }]);
        assert!(short.is_err());
    }

    #[test]
    fn disk_convexity_ratio_is_one_half() {
        // For chords of the unit disk the launch makes ν·n = sin β against a chord length
        // 2 sin β: the ratio is exactly 1/2 for every pair.
        let d = circle();
        let w = ConformalWeight::constant(1.0).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let cert = convexity_certificate(&w, &d, 24, 7, &opts).unwrap();
        assert_eq!(cert.failures, 0);
        assert_eq!(cert.violations, 0);
        assert!(cert.passed());
        assert_relative_eq!(cert.min_ratio, 0.5, epsilon = 1e-3);
        assert_relative_eq!(cert.max_ratio, 0.5, epsilon = 1e-3);
    }

    #[test]
    fn certificate_is_seed_deterministic() {
        let d = DomainBoundary::ellipse(1.2, 0.8).unwrap();
        let w = ConformalWeight::constant(1.0).unwrap();
        let opts = MetricOpts::for_domain(&d);
        let a = convexity_certificate(&w, &d, 10, 42, &opts).unwrap();
        let b = convexity_certificate(&w, &d, 10, 42, &opts).unwrap();
        assert_eq!(a.min_ratio, b.min_ratio);
        assert_eq!(a.min_nu_dot_n, b.min_nu_dot_n);
        assert!(a.passed());
    }

    #[test]
    fn trace_value_is_piecewise_and_wraps() {
        let d = circle();
        let g = upper_indicator();
        assert_eq!(g.value(&d, 1.0), 1.0);
        assert_eq!(g.value(&d, 4.0), 0.0);
        assert_eq!(g.value(&d, 1.0 + TAU), 1.0);
        assert_eq!(g.value(&d, -0.5), 0.0);
        assert_eq!(g.oscillation_estimate(&d), 1.0);
    }
}
