//! Grid-graph shortest paths in the conformal metric, used to seed the shooting solver and as an
//! independent length oracle in tests.
//!
//! The domain is covered by a uniform grid of cell centers; centers inside the domain become
//! nodes. Edges connect each node to 16 neighbours — the 8-neighbourhood plus knight moves —
//! which caps the angular discretization error of path directions at about 8°, enough for a
//! shooting seed and for ~1% length bounds on moderate grids. Edge weights are the trapezoid
//! rule `(k(a) + k(b))/2 · |a − b|`; edges whose midpoint leaves the domain are dropped so paths
//! cannot shortcut across concavities of the weighted geometry.
//!
//! The result stores the full predecessor tree rooted at the source, so one field answers many
//! queries (every atom against a shared target), which is how the cost-matrix assembly uses it.

use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::GridSpec;
use crate::weight::ConformalWeight;

use super::HeapItem;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// The 16-direction stencil: axis moves, diagonals, and knight moves.
const OFFSETS: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

/// Shortest-path field over grid nodes, rooted at a source point.
#[derive(Debug, Clone)]
pub struct DijkstraField {
    spec: GridSpec,
    /// Weighted distance to the source per node; `INFINITY` when unreachable or outside.
    dist: Vec<f64>,
    /// Predecessor node toward the source; `u32::MAX` at the source and unreached nodes.
    prev: Vec<u32>,
    source: Vec2,
    /// Weight value at each inside node (NaN outside), cached for local corrections.
    k_at: Vec<f64>,
}

/// Locate the inside node nearest to `p`, searching outward up to `radius` rings of cells.
fn nearest_inside_node(spec: &GridSpec, inside: &[bool], p: Vec2, radius: i64) -> Option<usize> {
    let (ci, cj) = spec.cell_of(p)?;
    let mut best: Option<(f64, usize)> = None;
    for dj in -radius..=radius {
        for di in -radius..=radius {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i < 0 || j < 0 || i >= spec.nx as i64 || j >= spec.ny as i64 {
                continue;
            }
            let idx = spec.index(i as usize, j as usize);
            if !inside[idx] {
                continue;
            }
            let d = spec.center(i as usize, j as usize).dist(p);
            if best.map_or(true, |(bd, bi)| d < bd || (d == bd && idx < bi)) {
                best = Some((d, idx));
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Run Dijkstra from `source` on a grid of roughly `cells` cells per axis covering the domain.
pub fn dijkstra_field(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    source: Vec2,
    cells: usize,
) -> Result<DijkstraField> {
    let bbox = domain.bbox();
    let h = bbox.width().max(bbox.height()) / cells as f64;
    let spec = GridSpec::cover(bbox, h, 2)?;
    let n = spec.len();
    let mut inside = vec![false; n];
    let mut k_at = vec![f64::NAN; n];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let c = spec.center(i, j);
            if domain.contains(c) {
                let idx = spec.index(i, j);
                inside[idx] = true;
                k_at[idx] = w.value(c)?;
            }
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![u32::MAX; n];
    let mut heap: BinaryHeap<Reverse<HeapItem>> = BinaryHeap::new();

    let src_node = nearest_inside_node(&spec, &inside, source, 4).ok_or_else(|| {
        Error::InvalidInput(format!(
            "shortest-path source ({}, {}) has no interior grid node nearby",
            source.x, source.y
        ))
    })?;
    // Seed with the local weighted offset so distances refer to the true source point.
    let src_center = spec.center(src_node % spec.nx, src_node / spec.nx);
    let k_src = w.value(source).unwrap_or(k_at[src_node]);
    dist[src_node] = 0.5 * (k_src + k_at[src_node]) * src_center.dist(source);
    heap.push(Reverse(HeapItem { val: dist[src_node], idx: src_node as u32 }));

    while let Some(Reverse(HeapItem { val, idx })) = heap.pop() {
        let u = idx as usize;
        if val > dist[u] {
            continue;
        }
        let (ui, uj) = ((u % spec.nx) as i64, (u / spec.nx) as i64);
        let cu = spec.center(ui as usize, uj as usize);
        for (di, dj) in OFFSETS {
            let (vi, vj) = (ui + di, uj + dj);
            if vi < 0 || vj < 0 || vi >= spec.nx as i64 || vj >= spec.ny as i64 {
                continue;
            }
            let vidx = spec.index(vi as usize, vj as usize);
            if !inside[vidx] {
                continue;
            }
            let cv = spec.center(vi as usize, vj as usize);
            if !domain.contains(cu.lerp(cv, 0.5)) {
                continue;
            }
            let edge = 0.5 * (k_at[u] + k_at[vidx]) * cu.dist(cv);
            let cand = dist[u] + edge;
            if cand < dist[vidx] {
                dist[vidx] = cand;
                prev[vidx] = u as u32;
                heap.push(Reverse(HeapItem { val: cand, idx: vidx as u32 }));
            }
        }
    }
    Ok(DijkstraField { spec, dist, prev, source, k_at })
}

impl DijkstraField {
    pub fn source(&self) -> Vec2 {
        self.source
    }

    fn node_near(&self, p: Vec2) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        let (ci, cj) = self.spec.cell_of(p).or_else(|| {
            // Clamp points on the bounding box edge into range.
            let i = (((p.x - self.spec.origin.x) / self.spec.h) as i64)
                .clamp(0, self.spec.nx as i64 - 1) as usize;
            let j = (((p.y - self.spec.origin.y) / self.spec.h) as i64)
                .clamp(0, self.spec.ny as i64 - 1) as usize;
            Some((i, j))
        })?;
        for dj in -4i64..=4 {
            for di in -4i64..=4 {
                let (i, j) = (ci as i64 + di, cj as i64 + dj);
                if i < 0 || j < 0 || i >= self.spec.nx as i64 || j >= self.spec.ny as i64 {
                    continue;
                }
                let idx = self.spec.index(i as usize, j as usize);
                if !self.dist[idx].is_finite() {
                    continue;
                }
                let d = self.spec.center(i as usize, j as usize).dist(p);
                if best.map_or(true, |(bd, bi)| d < bd || (d == bd && idx < bi)) {
                    best = Some((d, idx));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Weighted path-length estimate from `p` to the source (grid value plus a local weighted
    /// correction for the offset between `p` and its node).
    pub fn distance_at(&self, p: Vec2) -> Option<f64> {
        let node = self.node_near(p)?;
        let c = self.spec.center(node % self.spec.nx, node / self.spec.nx);
        Some(self.dist[node] + self.k_at[node] * c.dist(p))
    }

    /// Unit direction of travel from `p` toward the source, read from the shortest-path tree a
    /// fixed lookahead down the path (smoothing out the grid's angular quantization).
    pub fn seed_direction(&self, p: Vec2, lookahead: f64) -> Option<Vec2> {
        let path = self.path_from(p)?;
        let target_len = lookahead.max(2.5 * self.spec.h);
        let mut acc = 0.0;
        for i in 0..path.len() - 1 {
            acc += path[i].dist(path[i + 1]);
            if acc >= target_len || i + 2 == path.len() {
                let dir = (path[i + 1] - p).normalized();
                if dir != Vec2::ZERO {
                    return Some(dir);
                }
            }
        }
        None
    }

    /// Grid polyline from `p` to the source following the predecessor tree.
    pub fn path_from(&self, p: Vec2) -> Option<Vec<Vec2>> {
        let mut node = self.node_near(p)?;
        let mut out = vec![p];
        let mut guard = 0usize;
        loop {
            out.push(self.spec.center(node % self.spec.nx, node / self.spec.nx));
            let parent = self.prev[node];
            if parent == u32::MAX {
                break;
            }
            node = parent as usize;
            guard += 1;
            if guard > self.spec.len() {
                return None;
            }
        }
        out.push(self.source);
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::v;

    #[test]
    fn euclidean_distances_are_near_straight_line() {
        let d = DomainBoundary::circle(1.0).unwrap();
        let w = ConformalWeight::constant(1.0).unwrap();
        let field = dijkstra_field(&w, &d, v(0.8, 0.0), 96).unwrap();
        for (p, exact) in [
            (v(-0.8, 0.0), 1.6),
            (v(0.0, 0.5), (0.8f64 * 0.8 + 0.25).sqrt()),
            (v(0.5, -0.5), (0.09f64 + 0.25).sqrt()),
        ] {
            let got = field.distance_at(p).unwrap();
            // Grid paths overestimate by the stencil's angular quantization, ~1%.
            assert!(got >= exact - 0.03, "{got} under {exact}");
            assert!(got <= exact * 1.02 + 0.05, "{got} over {exact}");
        }
    }

    #[test]
    fn seed_direction_points_at_source() {
        let d = DomainBoundary::circle(1.0).unwrap();
        let w = ConformalWeight::constant(1.0).unwrap();
        let source = v(0.6, 0.3);
        let field = dijkstra_field(&w, &d, source, 96).unwrap();
        let p = v(-0.7, -0.2);
        let dir = field.seed_direction(p, 0.2).unwrap();
        let exact = (source - p).normalized();
        assert!(dir.dot(exact) > 0.97, "seed {dir:?} vs {exact:?}");
    }

    #[test]
    fn path_connects_endpoints() {
        let d = DomainBoundary::ellipse(1.2, 0.8).unwrap();
        let w = ConformalWeight::radial_bump(1.0, 1.0, v(0.0, 0.0), 0.5).unwrap();
        let field = dijkstra_field(&w, &d, v(1.0, 0.0), 80).unwrap();
        let p = v(-1.0, 0.0);
        let path = field.path_from(p).unwrap();
        assert_eq!(path[0], p);
        assert_eq!(*path.last().unwrap(), v(1.0, 0.0));
        // All vertices essentially inside the domain.
        for q in &path {
            assert!(d.implicit(*q) < 1e-6, "path vertex outside: {q:?}");
        }
    }

    #[test]
    fn bump_path_detours() {
        // With a strong central bump the shortest path between antipodes avoids the center.
        let d = DomainBoundary::circle(1.0).unwrap();
        let w = ConformalWeight::radial_bump(1.0, 4.0, v(0.0, 0.0), 0.35).unwrap();
        let field = dijkstra_field(&w, &d, v(0.95, 0.0), 96).unwrap();
        let path = field.path_from(v(-0.95, 0.0)).unwrap();
        let min_center_dist =
            path.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
        assert!(min_center_dist > 0.2, "path crosses the bump: {min_center_dist}");
        // And its length exceeds the Euclidean chord but stays below any through-center path.
        let dist = field.distance_at(v(-0.95, 0.0)).unwrap();
        assert!(dist > 1.9);
    }
}
