//! Conformal weight families.
//!
//! The weight `k` scales the Euclidean metric to `k²(dx² + dy²)`; every geodesic, distance field,
//! and density in the crate consumes it through [`ConformalWeight::eval`], which returns the value
//! together with the gradient (the shooting ODE needs ∇k, everything else just k). Three families
//! are supported:
//!
//! * `constant(a)` — `k ≡ a`.
//! * `radial_bump(a, b, center, width)` — `k(x) = a + b·exp(−|x−center|²/width²)`; `width` is the
//!   Gaussian length scale, so the center value is `a + b`.
//! * `bilinear(...)` — arbitrary samples on a regular grid, interpolated bilinearly; the gradient
//!   is the exact gradient of the interpolant (piecewise smooth, discontinuous across cell edges).
//!
//! All families expose certified global bounds `k_min`, `k_max` and a Lipschitz bound on `k`
//! (`sup |∇k|`); the bounds are used for step-size control, cost lower bounds, and reports.

use crate::error::{Error, Result};
use crate::geom::{v, BBox, Vec2};
use std::path::Path;

#[derive(Debug, Clone)]
pub enum ConformalWeight {
    Constant { a: f64 },
    RadialBump { a: f64, b: f64, center: Vec2, width: f64 },
    Bilinear(BilinearWeight),
}

/// Weight sampled on a regular grid, bilinearly interpolated inside the sample rectangle.
#[derive(Debug, Clone)]
pub struct BilinearWeight {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    /// Row-major: index `j*nx + i` holds the sample at `(x0 + i·h, y0 + j·h)`.
    pub samples: Vec<f64>,
}

impl ConformalWeight {
    pub fn constant(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidInput(format!("constant weight must be positive, got {a}")));
        }
        Ok(ConformalWeight::Constant { a })
    }

    pub fn radial_bump(a: f64, b: f64, center: Vec2, width: f64) -> Result<Self> {
        if !(a > 0.0) || !(b >= 0.0) || !(width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "radial bump needs a > 0, b >= 0, width > 0; got a={a}, b={b}, width={width}"
            )));
        }
        Ok(ConformalWeight::RadialBump { a, b, center, width })
    }

    pub fn bilinear(nx: usize, ny: usize, x0: f64, y0: f64, h: f64, samples: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidInput("bilinear weight needs at least a 2x2 sample grid".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("bilinear sample spacing must be positive, got {h}")));
        }
        if samples.len() != nx * ny {
            return Err(Error::InvalidInput(format!(
                "bilinear weight expects {} samples, got {}",
                nx * ny,
                samples.len()
            )));
        }
        if samples.iter().any(|s| !(*s > 0.0) || !s.is_finite() ) {
            return Err(Error::InvalidInput("bilinear weight samples must be positive and finite".into()));
        }
        Ok(ConformalWeight::Bilinear(BilinearWeight { nx, ny, x0, y0, h, samples }))
    }

    /// Parse the CSV sample format: the first record holds `nx,ny,x0,y0,h`, the remaining values
    /// are the row-major samples (line breaks within the sample block are ignored). A literal
    /// header line `nx,ny,x0,y0,h` before the value record is accepted.
    pub fn bilinear_from_csv_str(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed == "nx,ny,x0,y0,h" {
                continue;
            }
            for tok in trimmed.split(',') {
                let tok = tok.trim();
                if !tok.is_empty() {
                    tokens.push(tok.to_string());
                }
            }
        }
        if tokens.len() < 5 {
            return Err(Error::Schema("bilinear CSV: missing nx,ny,x0,y0,h record".into()));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Schema(format!("bilinear CSV: bad number {s:?}")))
        };
        let nx = parse_f(&tokens[0])? as usize;
        let ny = parse_f(&tokens[1])? as usize;
        let x0 = parse_f(&tokens[2])?;
        let y0 = parse_f(&tokens[3])?;
        let h = parse_f(&tokens[4])?;
        let samples: Vec<f64> = tokens[5..]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<_>>()?;
        if samples.len() != nx * ny {
            return Err(Error::Schema(format!(
                "bilinear CSV: expected {} samples, got {}",
                nx * ny,
                samples.len()
            )));
        }
        Self::bilinear(nx, ny, x0, y0, h, samples).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn bilinear_from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read weight CSV {}: {e}", path.display())))?;
        Self::bilinear_from_csv_str(&text)
    }

    /// Weight value and gradient at `p`.
    ///
    /// Constant and radial-bump weights are defined on the whole plane; the bilinear family is
    /// only defined on its sample rectangle and returns an out-of-domain error outside it.
    pub fn eval(&self, p: Vec2) -> Result<(f64, Vec2)> {
        match self {
            ConformalWeight::Constant { a } => Ok((*a, Vec2::ZERO)),
            ConformalWeight::RadialBump { a, b, center, width } => {
                let d = p - *center;
                let w2 = width * width;
                let e = (-d.norm2() / w2).exp();
                Ok((a + b * e, d * (-2.0 * b * e / w2)))
            }
            ConformalWeight::Bilinear(g) => g.eval(p),
        }
    }

    /// Weight value only.
    pub fn value(&self, p: Vec2) -> Result<f64> {
        Ok(self.eval(p)?.0)
    }

    /// Certified lower bound of `k` over the plane (bilinear: over its sample rectangle).
    pub fn k_min(&self) -> f64 {
        match self {
            ConformalWeight::Constant { a } => *a,
            ConformalWeight::RadialBump { a, .. } => *a,
            ConformalWeight::Bilinear(g) => g.samples.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// Certified upper bound of `k`.
    pub fn k_max(&self) -> f64 {
        match self {
            ConformalWeight::Constant { a } => *a,
            ConformalWeight::RadialBump { a, b, .. } => a + b,
            ConformalWeight::Bilinear(g) => g.samples.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Bound on `sup |∇k|` (Lipschitz constant of the weight).
    ///
    /// Exact for the smooth families (`b·√2/(width·√e)` maximizes the radial-bump slope at
    /// `r = width/√2`); for bilinear samples it is the maximum interpolant slope, reached at cell
    /// corners, bounded by combining the per-axis sample differences.
    pub fn lipschitz_grad_bound(&self) -> f64 {
        match self {
            ConformalWeight::Constant { .. } => 0.0,
            ConformalWeight::RadialBump { b, width, .. } => {
                b * std::f64::consts::SQRT_2 / (width * std::f64::consts::E.sqrt())
            }
            ConformalWeight::Bilinear(g) => {
                let mut best: f64 = 0.0;
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        let s = g.samples[j * g.nx + i];
                        let gx = if i + 1 < g.nx {
                            (g.samples[j * g.nx + i + 1] - s).abs() / g.h
                        } else {
                            0.0
                        };
                        let gy = if j + 1 < g.ny {
                            (g.samples[(j + 1) * g.nx + i] - s).abs() / g.h
                        } else {
                            0.0
                        };
                        best = best.max((gx * gx + gy * gy).sqrt());
                    }
                }
                best
            }
        }
    }

    /// Sample rectangle of a bilinear weight, if any. Callers validating configurations check
    /// that it covers the domain bounding box with a one-cell margin.
    pub fn support_bbox(&self) -> Option<BBox> {
        match self {
            ConformalWeight::Bilinear(g) => Some(BBox {
                lo: v(g.x0, g.y0),
                hi: v(g.x0 + (g.nx - 1) as f64 * g.h, g.y0 + (g.ny - 1) as f64 * g.h),
            }),
            _ => None,
        }
    }
}

impl BilinearWeight {
    fn eval(&self, p: Vec2) -> Result<(f64, Vec2)> {
        let fx = (p.x - self.x0) / self.h;
        let fy = (p.y - self.y0) / self.h;
        if fx < 0.0 || fy < 0.0 || fx > (self.nx - 1) as f64 || fy > (self.ny - 1) as f64 {
            return Err(Error::OutOfDomain(format!(
                "point ({}, {}) outside bilinear weight sample rectangle",
                p.x, p.y
            )));
        }
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let u = fx - i as f64;
        let w = fy - j as f64;
        let s00 = self.samples[j * self.nx + i];
        let s10 = self.samples[j * self.nx + i + 1];
        let s01 = self.samples[(j + 1) * self.nx + i];
        let s11 = self.samples[(j + 1) * self.nx + i + 1];
        let val = s00 * (1.0 - u) * (1.0 - w)
            + s10 * u * (1.0 - w)
            + s01 * (1.0 - u) * w
            + s11 * u * w;
        let gx = ((s10 - s00) * (1.0 - w) + (s11 - s01) * w) / self.h;
        let gy = ((s01 - s00) * (1.0 - u) + (s11 - s10) * u) / self.h;
        Ok((val, v(gx, gy)))
    }
}
