//! Cell-centered Cartesian grids and their artifact formats.
//!
//! Grids are cell-centered: cell `(i, j)` has its center at `origin + ((i+½)h, (j+½)h)` and
//! carries a cell-averaged value. Scalar fields use `NaN` for cells without a defined value
//! (outside the domain or unreached by a marching front); all reductions here skip `NaN`.
//!
//! Artifact formats are fixed for byte reproducibility:
//!
//! * CSV — one `x,y,value` record per cell, row-major from the grid origin (j outer, i inner),
//!   every number printed with 17 significant digits, LF line endings.
//! * PGM — binary `P5` with 16-bit samples (big-endian, per the PNM specification), row-major
//!   from the grid origin, values scaled by the maximum finite value which is stored in a JSON
//!   sidecar next to the image. Non-finite and negative cells map to 0.

use crate::error::{Error, Result};
use crate::geom::{fmt_g17, v, BBox, Vec2};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Vec2,
}

impl GridSpec {
    /// Grid of spacing `h` covering `bbox` with `margin` extra cells on every side.
    pub fn cover(bbox: BBox, h: f64, margin: usize) -> Result<GridSpec> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {h}")));
        }
        let nx = (bbox.width() / h).ceil() as usize + 2 * margin;
        let ny = (bbox.height() / h).ceil() as usize + 2 * margin;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput("grid covers no cells".into()));
        }
        Ok(GridSpec {
            nx,
            ny,
            h,
            origin: bbox.lo - v(margin as f64 * h, margin as f64 * h),
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + v((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.h;
        let fy = (p.y - self.origin.y) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        if i >= self.nx || j >= self.ny {
            None
        } else {
            Some((i, j))
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }
}

#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarGrid { values: vec![0.0; spec.len()], spec }
    }

    pub fn filled(spec: GridSpec, value: f64) -> Self {
        ScalarGrid { values: vec![value; spec.len()], spec }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = self.spec.index(i, j);
        self.values[idx] = value;
    }

    /// Σ value·h² over finite cells.
    pub fn integral(&self) -> f64 {
        let a = self.spec.cell_area();
        self.values.iter().filter(|x| x.is_finite()).sum::<f64>() * a
    }

    /// (Σ |value|^p h²)^(1/p) over finite cells; `p = ∞` gives the max of |value|.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self
                .values
                .iter()
                .filter(|x| x.is_finite())
                .fold(0.0f64, |m, x| m.max(x.abs()));
        }
        let a = self.spec.cell_area();
        let s: f64 = self
            .values
            .iter()
            .filter(|x| x.is_finite())
            .map(|x| x.abs().powf(p))
            .sum();
        (s * a).powf(1.0 / p)
    }

    /// Bilinear interpolation between the four surrounding cell centers. Returns `None` if `p`
    /// is outside the center lattice or any corner is non-finite.
    pub fn sample_bilinear(&self, p: Vec2) -> Option<f64> {
        let s = &self.spec;
        let fx = (p.x - s.origin.x) / s.h - 0.5;
        let fy = (p.y - s.origin.y) / s.h - 0.5;
        if fx < 0.0 || fy < 0.0 || fx > (s.nx - 1) as f64 || fy > (s.ny - 1) as f64 {
            return None;
        }
        let i = (fx.floor() as usize).min(s.nx - 2);
        let j = (fy.floor() as usize).min(s.ny - 2);
        let u = fx - i as f64;
        let w = fy - j as f64;
        let g = |ii, jj| self.get(ii, jj);
        let (a, b, c, d) = (g(i, j), g(i + 1, j), g(i, j + 1), g(i + 1, j + 1));
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
            return None;
        }
        Some(a * (1.0 - u) * (1.0 - w) + b * u * (1.0 - w) + c * (1.0 - u) * w + d * u * w)
    }

    /// Value of the nearest finite cell within `radius_cells` Chebyshev distance of `p`'s cell.
    pub fn sample_nearest_finite(&self, p: Vec2, radius_cells: usize) -> Option<f64> {
        let s = &self.spec;
        let fx = ((p.x - s.origin.x) / s.h - 0.5).round();
        let fy = ((p.y - s.origin.y) / s.h - 0.5).round();
        let (ci, cj) = (fx as i64, fy as i64);
        let mut best: Option<(f64, f64)> = None;
        let r = radius_cells as i64;
        for dj in -r..=r {
            for di in -r..=r {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= s.nx as i64 || j >= s.ny as i64 {
                    continue;
                }
                let val = self.get(i as usize, j as usize);
                if !val.is_finite() {
                    continue;
                }
                let d = s.center(i as usize, j as usize).dist(p);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, val));
                }
            }
        }
        best.map(|(_, v)| v)
    }

    /// Centered-difference gradient; one-sided at grid edges and next to non-finite neighbors,
    /// `NaN` where no finite stencil exists.
    pub fn gradient(&self) -> VectorGrid {
        let s = self.spec;
        let mut out = VectorGrid::zeros(s);
        let val = |i: i64, j: i64| -> f64 {
            if i < 0 || j < 0 || i >= s.nx as i64 || j >= s.ny as i64 {
                f64::NAN
            } else {
                self.get(i as usize, j as usize)
            }
        };
        let diff = |m: f64, c: f64, p: f64, h: f64| -> f64 {
            match (m.is_finite(), p.is_finite()) {
                (true, true) => (p - m) / (2.0 * h),
                (true, false) if c.is_finite() => (c - m) / h,
                (false, true) if c.is_finite() => (p - c) / h,
                _ => f64::NAN,
            }
        };
        for j in 0..s.ny {
            for i in 0..s.nx {
                let c = self.get(i, j);
                let idx = s.index(i, j);
                if !c.is_finite() {
                    out.vx[idx] = f64::NAN;
                    out.vy[idx] = f64::NAN;
                    continue;
                }
                let (i64i, i64j) = (i as i64, j as i64);
                out.vx[idx] = diff(val(i64i - 1, i64j), c, val(i64i + 1, i64j), s.h);
                out.vy[idx] = diff(val(i64i, i64j - 1), c, val(i64i, i64j + 1), s.h);
            }
        }
        out
    }

    /// Discrete total variation with forward differences: Σ |∇u| h² over cells whose forward
    /// neighbors are finite.
    pub fn total_variation(&self) -> f64 {
        let s = self.spec;
        let mut acc = 0.0;
        for j in 0..s.ny {
            for i in 0..s.nx {
                let c = self.get(i, j);
                if !c.is_finite() {
                    continue;
                }
                let gx = if i + 1 < s.nx && self.get(i + 1, j).is_finite() {
                    (self.get(i + 1, j) - c) / s.h
                } else {
                    0.0
                };
                let gy = if j + 1 < s.ny && self.get(i, j + 1).is_finite() {
                    (self.get(i, j + 1) - c) / s.h
                } else {
                    0.0
                };
                acc += (gx * gx + gy * gy).sqrt();
            }
        }
        acc * s.cell_area()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.spec.len() * 64);
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                let c = self.spec.center(i, j);
                out.extend_from_slice(fmt_g17(c.x).as_bytes());
                out.push(b',');
                out.extend_from_slice(fmt_g17(c.y).as_bytes());
                out.push(b',');
                out.extend_from_slice(fmt_g17(self.get(i, j)).as_bytes());
                out.push(b'\n');
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// 16-bit binary PGM plus a JSON sidecar `<path>.json` recording the scale.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let max = self
            .values
            .iter()
            .cloned()
            .filter(|x| x.is_finite())
            .fold(0.0f64, f64::max);
        let mut buf = Vec::with_capacity(self.spec.len() * 2 + 64);
        buf.extend_from_slice(format!("P5\n{} {}\n65535\n", self.spec.nx, self.spec.ny).as_bytes());
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                let x = self.get(i, j);
                let q = if x.is_finite() && x > 0.0 && max > 0.0 {
                    ((x / max * 65535.0).round() as i64).clamp(0, 65535) as u16
                } else {
                    0
                };
                buf.extend_from_slice(&q.to_be_bytes());
            }
        }
        std::fs::write(path, buf)?;
        let sidecar = path.with_extension(format!(
            "{}.json",
            path.extension().and_then(|e| e.to_str()).unwrap_or("pgm")
        ));
        let mut f = std::fs::File::create(sidecar)?;
        writeln!(
            f,
            "{{\n  \"max_value\": {},\n  \"nx\": {},\n  \"ny\": {},\n  \"h\": {}\n}}",
            fmt_g17(max),
            self.spec.nx,
            self.spec.ny,
            fmt_g17(self.spec.h)
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VectorGrid {
    pub spec: GridSpec,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VectorGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        VectorGrid { vx: vec![0.0; spec.len()], vy: vec![0.0; spec.len()], spec }
    }

    pub fn get(&self, i: usize, j: usize) -> Vec2 {
        let idx = self.spec.index(i, j);
        v(self.vx[idx], self.vy[idx])
    }

    pub fn set(&mut self, i: usize, j: usize, value: Vec2) {
        let idx = self.spec.index(i, j);
        self.vx[idx] = value.x;
        self.vy[idx] = value.y;
    }

    /// Cellwise magnitude field.
    pub fn magnitude(&self) -> ScalarGrid {
        let mut out = ScalarGrid::zeros(self.spec);
        for idx in 0..self.spec.len() {
            out.values[idx] = (self.vx[idx] * self.vx[idx] + self.vy[idx] * self.vy[idx]).sqrt();
        }
        out
    }

    /// Apply `f(center, value) -> value` cellwise.
    pub fn map_cells<F: Fn(Vec2, Vec2) -> Vec2>(&self, f: F) -> VectorGrid {
        let mut out = VectorGrid::zeros(self.spec);
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                out.set(i, j, f(self.spec.center(i, j), self.get(i, j)));
            }
        }
        out
    }
}

/// Marching-squares contour of the level set `{field = level}` on the cell-center lattice.
///
/// Returns the contour as a set of segments; cells touching non-finite corners are skipped.
/// Linear interpolation along lattice edges; saddle cells are split by the cell-center average
/// (the standard asymptotic decider is unnecessary at the tolerances used by the callers).
pub fn marching_squares(field: &ScalarGrid, level: f64) -> Vec<(Vec2, Vec2)> {
    let s = field.spec;
    let mut segments = Vec::new();
    if s.nx < 2 || s.ny < 2 {
        return segments;
    }
    for j in 0..s.ny - 1 {
        for i in 0..s.nx - 1 {
            let c00 = field.get(i, j);
            let c10 = field.get(i + 1, j);
            let c01 = field.get(i, j + 1);
            let c11 = field.get(i + 1, j + 1);
            if !(c00.is_finite() && c10.is_finite() && c01.is_finite() && c11.is_finite()) {
                continue;
            }
            let p00 = s.center(i, j);
            let p10 = s.center(i + 1, j);
            let p01 = s.center(i, j + 1);
            let p11 = s.center(i + 1, j + 1);
            let mut code = 0usize;
            if c00 >= level {
                code |= 1;
            }
            if c10 >= level {
                code |= 2;
            }
            if c11 >= level {
                code |= 4;
            }
            if c01 >= level {
                code |= 8;
            }
            if code == 0 || code == 15 {
                continue;
            }
            let lerp = |a: Vec2, va: f64, b: Vec2, vb: f64| -> Vec2 {
                let t = if (vb - va).abs() < 1e-300 { 0.5 } else { (level - va) / (vb - va) };
                a.lerp(b, t.clamp(0.0, 1.0))
            };
            // Edge midpoints: bottom (00-10), right (10-11), top (01-11), left (00-01).
            let eb = lerp(p00, c00, p10, c10);
            let er = lerp(p10, c10, p11, c11);
            let et = lerp(p01, c01, p11, c11);
            let el = lerp(p00, c00, p01, c01);
            match code {
                1 | 14 => segments.push((el, eb)),
                2 | 13 => segments.push((eb, er)),
                4 | 11 => segments.push((er, et)),
                8 | 7 => segments.push((et, el)),
                3 | 12 => segments.push((el, er)),
                6 | 9 => segments.push((eb, et)),
                5 | 10 => {
                    let avg = 0.25 * (c00 + c10 + c01 + c11);
                    let inside_center = avg >= level;
                    if (code == 5) == inside_center {
                        segments.push((el, et));
                        segments.push((eb, er));
                    } else {
                        segments.push((el, eb));
                        segments.push((er, et));
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_spec(n: usize) -> GridSpec {
        GridSpec::cover(BBox { lo: v(0.0, 0.0), hi: v(1.0, 1.0) }, 1.0 / n as f64, 0).unwrap()
    }

    #[test]
    fn cover_and_indexing() {
        let s = unit_spec(8);
        assert_eq!((s.nx, s.ny), (8, 8));
        assert_eq!(s.cell_of(v(0.99, 0.01)), Some((7, 0)));
        assert_eq!(s.cell_of(v(-0.01, 0.5)), None);
        assert_relative_eq!(s.center(0, 0).x, 1.0 / 16.0);
    }

    #[test]
    fn unit_field_has_unit_l2_norm() {
        // Uniform value 1 on the unit square: every L^p norm is 1, the integral is 1.
        let g = ScalarGrid::filled(unit_spec(16), 1.0);
        assert_relative_eq!(g.integral(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.lp_norm(2.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.lp_norm(1.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.lp_norm(f64::INFINITY), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nan_cells_are_skipped_in_reductions() {
        let mut g = ScalarGrid::filled(unit_spec(4), 2.0);
        g.set(1, 1, f64::NAN);
        let live = 15.0 / 16.0;
        assert_relative_eq!(g.integral(), 2.0 * live, epsilon = 1e-12);
    }

    #[test]
    fn bilinear_sampling_reproduces_linear_fields() {
        let s = unit_spec(8);
        let mut g = ScalarGrid::zeros(s);
        for j in 0..8 {
            for i in 0..8 {
                let c = s.center(i, j);
                g.set(i, j, 3.0 * c.x - 2.0 * c.y + 1.0);
            }
        }
        let p = v(0.43, 0.57);
        assert_relative_eq!(
            g.sample_bilinear(p).unwrap(),
            3.0 * p.x - 2.0 * p.y + 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let s = unit_spec(8);
        let mut g = ScalarGrid::zeros(s);
        for j in 0..8 {
            for i in 0..8 {
                let c = s.center(i, j);
                g.set(i, j, 0.5 * c.x + 2.0 * c.y);
            }
        }
        let grad = g.gradient();
        for j in 0..8 {
            for i in 0..8 {
                let gv = grad.get(i, j);
                assert_relative_eq!(gv.x, 0.5, epsilon = 1e-12);
                assert_relative_eq!(gv.y, 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn marching_squares_circle_radius() {
        let s = GridSpec::cover(BBox { lo: v(-1.0, -1.0), hi: v(1.0, 1.0) }, 2.0 / 64.0, 0).unwrap();
        let mut g = ScalarGrid::zeros(s);
        for j in 0..s.ny {
            for i in 0..s.nx {
                g.set(i, j, s.center(i, j).norm());
            }
        }
        let segs = marching_squares(&g, 0.5);
        assert!(!segs.is_empty());
        for (a, b) in &segs {
            assert!((a.norm() - 0.5).abs() < 0.05, "contour vertex off the circle: {a:?}");
            assert!((b.norm() - 0.5).abs() < 0.05);
        }
        // Total contour length approximates the circumference.
        let len: f64 = segs.iter().map(|(a, b)| a.dist(*b)).sum();
        assert_relative_eq!(len, std::f64::consts::TAU * 0.5, max_relative = 0.03);
    }

    #[test]
    fn csv_and_pgm_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = ScalarGrid::zeros(unit_spec(4));
        for (idx, val) in g.values.iter_mut().enumerate() {
            *val = (idx as f64 * 0.37).sin().abs();
        }
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        g.write_csv(&p1).unwrap();
        g.write_csv(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 16);

        let q1 = dir.path().join("a.pgm");
        g.write_pgm(&q1).unwrap();
        let bytes = std::fs::read(&q1).unwrap();
        assert!(bytes.starts_with(b"P5\n4 4\n65535\n"));
        assert_eq!(bytes.len(), "P5\n4 4\n65535\n".len() + 32);
        assert!(dir.path().join("a.pgm.json").exists());
    }
}
