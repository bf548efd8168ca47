//! Planar vector primitives shared by every module.
//!
//! `Vec2` doubles as point and displacement. The two quarter-turn rotations are named by their
//! standard orientation (`rot_ccw` maps +x to +y); the solver's sign conventions are built on
//! them and documented where used. Serialization is as a `[x, y]` array to match the artifact
//! schemas.

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub const fn v(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub const ZERO: Vec2 = v(0.0, 0.0);

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product; positive when `o` is counterclockwise from `self`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction; the zero vector is returned unchanged.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self / n
        }
    }

    /// Counterclockwise quarter turn: (x, y) ↦ (−y, x).
    pub fn rot_ccw(self) -> Vec2 {
        v(-self.y, self.x)
    }

    /// Clockwise quarter turn: (x, y) ↦ (y, −x).
    pub fn rot_cw(self) -> Vec2 {
        v(self.y, -self.x)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_angle(phi: f64) -> Vec2 {
        v(phi.cos(), phi.sin())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        v(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        *self = *self + o;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        v(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        v(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        v(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        v(-self.x, -self.y)
    }
}

impl Serialize for Vec2 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Vec2 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V2Visitor;
        impl<'de> Visitor<'de> for V2Visitor {
            type Value = Vec2;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a [x, y] array of two numbers")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Vec2, A::Error> {
                let x = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let y = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<f64>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(v(x, y))
            }
        }
        d.deserialize_tuple(2, V2Visitor)
    }
}

/// Proper intersection of open segments (a0,a1) and (b0,b1).
///
/// Returns the barycentric parameters `(t, u)` on the two segments together with the point when
/// the segments cross transversally with both parameters strictly inside `(eps, 1−eps)`.
/// Collinear overlaps and endpoint touches are reported as no crossing: the callers count
/// transversal interior crossings, and a shared endpoint between two curves is legitimate contact.
pub fn segment_crossing(
    a0: Vec2,
    a1: Vec2,
    b0: Vec2,
    b1: Vec2,
    eps: f64,
) -> Option<(f64, f64, Vec2)> {
    let da = a1 - a0;
    let db = b1 - b0;
    let denom = da.cross(db);
    if denom == 0.0 {
        return None;
    }
    let diff = b0 - a0;
    let t = diff.cross(db) / denom;
    let u = diff.cross(da) / denom;
    if t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps {
        Some((t, u, a0 + da * t))
    } else {
        None
    }
}

/// Distance from `p` to the closed segment (a, b).
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let n2 = d.norm2();
    if n2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / n2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy)]
pub struct BBox {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.hi.x - self.lo.x
    }
    pub fn height(&self) -> f64 {
        self.hi.y - self.lo.y
    }
    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }
    pub fn expand(&self, m: f64) -> BBox {
        BBox {
            lo: self.lo - v(m, m),
            hi: self.hi + v(m, m),
        }
    }
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.lo.x && p.x <= self.hi.x && p.y >= self.lo.y && p.y <= self.hi.y
    }
}

/// Format with 17 significant digits, the fixed format of all CSV artifacts.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Normalize an angle to [0, 2π).
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta % two_pi;
    if t < 0.0 {
        t += two_pi;
    }
    // The remainder of a value just below a multiple of 2π can round up to 2π itself.
    if t >= two_pi {
        t -= two_pi;
    }
    t
}

/// Signed wrap of an angle difference into (−π, π].
pub fn wrap_signed(theta: f64) -> f64 {
    let t = wrap_angle(theta);
    if t > std::f64::consts::PI {
        t - std::f64::consts::TAU
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quarter_turns_are_inverse() {
        let p = v(0.3, -1.7);
        assert_eq!(p.rot_ccw().rot_cw(), p);
        assert_eq!(p.rot_ccw().rot_ccw(), -p);
        // rot_ccw maps +x to +y.
        assert_eq!(v(1.0, 0.0).rot_ccw(), v(0.0, 1.0));
    }

    #[test]
    fn cross_matches_rotation_pairing() {
        let a = v(0.4, 1.1);
        let b = v(-2.0, 0.7);
        assert_relative_eq!(a.rot_ccw().dot(b), a.cross(b), epsilon = 1e-15);
    }

    #[test]
    fn segment_crossing_basic() {
        let hit = segment_crossing(v(-1.0, 0.0), v(1.0, 0.0), v(0.0, -1.0), v(0.0, 1.0), 1e-12)
            .expect("crossing");
        assert_relative_eq!(hit.0, 0.5);
        assert_relative_eq!(hit.1, 0.5);
        // Endpoint touch is not a crossing.
        assert!(
            segment_crossing(v(0.0, 0.0), v(1.0, 0.0), v(0.0, 0.0), v(0.0, 1.0), 1e-12).is_none()
        );
        // Parallel disjoint.
        assert!(
            segment_crossing(v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0), v(1.0, 1.0), 1e-12).is_none()
        );
    }

    #[test]
    fn point_segment_distance_clamps() {
        assert_relative_eq!(
            point_segment_distance(v(2.0, 1.0), v(0.0, 0.0), v(1.0, 0.0)),
            2f64.sqrt()
        );
        assert_relative_eq!(point_segment_distance(v(0.5, 0.5), v(0.0, 0.0), v(1.0, 0.0)), 0.5);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(-0.1), std::f64::consts::TAU - 0.1);
        assert_relative_eq!(wrap_angle(7.0), 7.0 - std::f64::consts::TAU);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!(wrap_angle(std::f64::consts::TAU) < 1e-15);
    }

    #[test]
    fn vec2_serializes_as_array() {
        let s = serde_json::to_string(&v(1.5, -2.0)).unwrap();
        assert_eq!(s, "[1.5,-2.0]");
        let back: Vec2 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v(1.5, -2.0));
    }
}
