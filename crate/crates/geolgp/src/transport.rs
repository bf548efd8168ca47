//! Discrete optimal transport between boundary atom families under the geodesic cost.
//!
//! Two independent solvers compute optimal plans and cross-validate each other:
//!
//! * [`solve_simplex`] — the classical transportation simplex on the dense cost matrix:
//!   northwest-corner initial basis, spanning-tree dual computation, entering variable by the
//!   first negative reduced cost in row-major order (Bland's rule, which keeps the pivot path
//!   stable under uniform cost scaling), leaving variable by lexicographic tie-break. It
//!   returns both the optimal flows and the dual potentials, whose feasibility certifies
//!   optimality.
//!
//! * [`solve_noncrossing`] — solves the same LP, then rewires interleaved chord pairs (flows
//!   whose endpoints alternate around the boundary) by swapping their common mass onto the
//!   parallel pairing until none remain. On a geodesically convex domain the geodesic metric
//!   satisfies the quadrilateral inequality `d(s₁,t₂) + d(s₂,t₁) ≤ d(s₁,t₁) + d(s₂,t₂)` for
//!   interleaved chords (cut both geodesics at a crossing point and exchange tails), so the
//!   rewiring never raises the cost: the plan stays optimal and the two solvers
//!   cross-validate each other to 1e-9. Atoms at equal angles share one endpoint site —
//!   chords through a common boundary point meet there rather than cross. Each final flow
//!   carries its level interval — the band of cumulative trace values its mass slab
//!   occupies — which the level-set reconstruction consumes.
//!
//! Cost matrices follow a size policy: small products of atom counts are filled with exact
//! two-point geodesic lengths (shared per-target shortest-path seeds); large products fall back
//! to per-target eikonal sweeps sampled at the atoms, after which the flows actually selected
//! are re-measured exactly ([`trace_flows`]).

use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::geom::{segment_crossing, wrap_angle, Vec2};
use crate::grid::GridSpec;
use crate::metric::{self, dijkstra, fmm, Geodesic, MetricOpts};
use crate::weight::ConformalWeight;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::TAU;

/// Pair-count threshold of the cost-matrix policy: at or below it every entry is an exact
/// two-point geodesic length, above it entries come from per-target eikonal sweeps.
pub const EXACT_PAIR_LIMIT: usize = 40_000;

/// Grid cells per axis of the eikonal fallback.
const EIKONAL_CELLS: usize = 128;

/// A weighted point mass on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: f64,
    pub position: Vec2,
    pub mass: f64,
}

/// Build atoms from `(θ, mass)` pairs placed on the boundary curve.
pub fn atoms_on_boundary(domain: &DomainBoundary, thetas: &[(f64, f64)]) -> Vec<Atom> {
    thetas
        .iter()
        .map(|&(theta, mass)| Atom { theta: wrap_angle(theta), position: domain.point(theta), mass })
        .collect()
}

/// Dense source-major cost matrix between two atom families.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub n_src: usize,
    pub n_tgt: usize,
    costs: Vec<f64>,
    /// Set when entries come from the eikonal fallback rather than exact geodesics.
    pub approximate: bool,
}

impl CostMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n_tgt + j]
    }

    pub fn from_raw(n_src: usize, n_tgt: usize, costs: Vec<f64>, approximate: bool) -> Self {
        assert_eq!(costs.len(), n_src * n_tgt);
        CostMatrix { n_src, n_tgt, costs, approximate }
    }

    pub fn max_abs(&self) -> f64 {
        self.costs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Assemble the cost matrix `c_ij = d_k(x_i, y_j)` under the size policy.
pub fn cost_matrix(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    src: &[Atom],
    tgt: &[Atom],
    opts: &MetricOpts,
) -> Result<CostMatrix> {
    let (m, n) = (src.len(), tgt.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("cost matrix needs atoms on both sides".into()));
    }
    let mut conn_opts = opts.clone();
    conn_opts.error_on_multi = false;
    if m * n <= EXACT_PAIR_LIMIT {
        let columns: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| -> Result<Vec<f64>> {
                let field =
                    dijkstra::dijkstra_field(w, domain, tgt[j].position, opts.seed_cells.min(64))?;
                src.iter()
                    .map(|s| {
                        metric::connect_seeded(
                            w,
                            domain,
                            s.position,
                            tgt[j].position,
                            Some(&field),
                            &conn_opts,
                        )
                        .map(|g| g.weighted_length)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut costs = vec![0.0; m * n];
        for (j, col) in columns.iter().enumerate() {
            for (i, &c) in col.iter().enumerate() {
                costs[i * n + j] = c;
            }
        }
        return Ok(CostMatrix { n_src: m, n_tgt: n, costs, approximate: false });
    }
    // Eikonal fallback: one sweep per target, sampled at source atoms nudged inward.
    let bbox = domain.bbox();
    let h = bbox.width().max(bbox.height()) / EIKONAL_CELLS as f64;
    let spec = GridSpec::cover(bbox, h, 2)?;
    let probes: Vec<(Vec2, Vec2, f64)> = src
        .iter()
        .map(|s| {
            let nudged = s.position + domain.inward_normal(s.theta) * (0.8 * h);
            let k_half = 0.5
                * (w.value(s.position).unwrap_or(1.0) + w.value(nudged).unwrap_or(1.0));
            (s.position, nudged, k_half)
        })
        .collect();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let field = fmm::fast_march(w, domain, &[(tgt[j].position, 0.0)], &spec)?;
            probes
                .iter()
                .map(|&(pos, nudged, k_half)| {
                    let sampled = field
                        .sample_bilinear(nudged)
                        .or_else(|| field.sample_nearest_finite(nudged, 3))
                        .ok_or_else(|| {
                            Error::Solver(format!(
                                "eikonal cost sweep left atom ({}, {}) unreached",
                                pos.x, pos.y
                            ))
                        })?;
                    Ok(sampled + k_half * pos.dist(nudged))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut costs = vec![0.0; m * n];
    for (j, col) in columns.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            costs[i * n + j] = c;
        }
    }
    Ok(CostMatrix { n_src: m, n_tgt: n, costs, approximate: true })
}

/// Optimal plan with dual potentials from the transportation simplex.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    /// Positive-mass flows `(source, target, mass)`, row-major order.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Row duals (`u`) and column duals (`v`): `u_i + v_j = c_ij` on the support,
    /// `u_i + v_j ≤ c_ij + tol` everywhere at optimality.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

impl SimplexResult {
    /// Value of the dual objective; equals `cost` up to rounding at optimality.
    pub fn dual_value(&self, supply: &[f64], demand: &[f64]) -> f64 {
        let su: f64 = supply.iter().zip(&self.u).map(|(a, u)| a * u).sum();
        let sv: f64 = demand.iter().zip(&self.v).map(|(b, v)| b * v).sum();
        su + sv
    }

    /// Worst dual-feasibility violation `max(u_i + v_j − c_ij, 0)`.
    pub fn dual_violation(&self, costs: &CostMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..costs.n_src {
            for j in 0..costs.n_tgt {
                worst = worst.max(self.u[i] + self.v[j] - costs.get(i, j));
            }
        }
        worst
    }
}

fn check_balance(supply: &[f64], demand: &[f64]) -> Result<f64> {
    if supply.is_empty() || demand.is_empty() {
        return Err(Error::InvalidInput("transport needs nonempty marginals".into()));
    }
    if supply.iter().chain(demand.iter()).any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidInput("transport masses must be nonnegative".into()));
    }
    let sa: f64 = supply.iter().sum();
    let sb: f64 = demand.iter().sum();
    let scale = sa.abs().max(sb.abs()).max(1e-300);
    let imbalance = (sa - sb).abs() / scale;
    if imbalance > 1e-9 {
        return Err(Error::MassImbalance { imbalance, tol: 1e-9 });
    }
    Ok(sa - sb)
}

/// Solve the balanced transportation problem `min Σ x_ij c_ij` with marginals
/// `Σ_j x_ij = supply_i`, `Σ_i x_ij = demand_j`. Imbalances beyond 1e-9 relative are rejected;
/// smaller ones are absorbed into the last demand.
pub fn solve_simplex(
    costs: &CostMatrix,
    supply: &[f64],
    demand: &[f64],
) -> Result<SimplexResult> {
    let (m, n) = (costs.n_src, costs.n_tgt);
    if supply.len() != m || demand.len() != n {
        return Err(Error::InvalidInput("marginal lengths do not match the cost matrix".into()));
    }
    let diff = check_balance(supply, demand)?;
    let supply = supply.to_vec();
    let mut demand = demand.to_vec();
    *demand.last_mut().unwrap() += diff;

    // Northwest-corner initial basis: exactly m + n − 1 cells forming a spanning tree.
    let mut x = vec![0.0f64; m * n];
    let mut basic: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut in_basis = vec![false; m * n];
    {
        let (mut ra, mut rb) = (supply.clone(), demand.clone());
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let q = ra[i].min(rb[j]).max(0.0);
            x[i * n + j] = q;
            basic.push((i, j));
            in_basis[i * n + j] = true;
            ra[i] -= q;
            rb[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (ra[i] <= rb[j] && i + 1 < m) || j + 1 == n {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let tol = 1e-12 * costs.max_abs().max(1e-300);
    let max_iters = 1000 + 10 * m * n;
    let mut u = vec![0.0f64; m];
    let mut v = vec![0.0f64; n];
    let mut iterations = 0usize;

    loop {
        // Duals from the spanning tree: u_i + v_j = c_ij on basic cells, u_0 = 0.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];
        for &(i, j) in &basic {
            adj[i].push((m + j, i * n + j));
            adj[m + j].push((i, i * n + j));
        }
        let mut known = vec![false; m + n];
        let mut queue = std::collections::VecDeque::new();
        u[0] = 0.0;
        known[0] = true;
        queue.push_back(0usize);
        while let Some(vx) = queue.pop_front() {
            for &(wx, cell) in &adj[vx] {
                if known[wx] {
                    continue;
                }
                let (ci, cj) = (cell / n, cell % n);
                if wx >= m {
                    v[wx - m] = costs.get(ci, cj) - u[ci];
                } else {
                    u[wx] = costs.get(ci, cj) - v[cj];
                }
                known[wx] = true;
                queue.push_back(wx);
            }
        }
        if known.iter().any(|k| !k) {
            return Err(Error::Solver("transport basis lost its spanning tree".into()));
        }

        // Entering variable. Small problems use Bland's rule (first negative reduced cost in
        // row-major order), whose pivot path is stable under uniform cost scaling; large ones
        // use the most-negative rule, which converges in far fewer full-matrix scans.
        let mut entering = None;
        if m * n <= 10_000 {
            'scan: for i in 0..m {
                for j in 0..n {
                    if in_basis[i * n + j] {
                        continue;
                    }
                    if costs.get(i, j) - u[i] - v[j] < -tol {
                        entering = Some((i, j));
                        break 'scan;
                    }
                }
            }
        } else {
            let mut best = -tol;
            for i in 0..m {
                for j in 0..n {
                    if in_basis[i * n + j] {
                        continue;
                    }
                    let r = costs.get(i, j) - u[i] - v[j];
                    if r < best {
                        best = r;
                        entering = Some((i, j));
                    }
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        iterations += 1;
        if iterations > max_iters {
            return Err(Error::Solver(format!(
                "transportation simplex exceeded {max_iters} pivots"
            )));
        }

        // The unique cycle: tree path from row ei to column ej, plus the entering cell.
        let mut parent = vec![usize::MAX; m + n];
        let mut parent_cell = vec![usize::MAX; m + n];
        let mut queue = std::collections::VecDeque::new();
        parent[ei] = ei;
        queue.push_back(ei);
        while let Some(vx) = queue.pop_front() {
            if vx == m + ej {
                break;
            }
            for &(wx, cell) in &adj[vx] {
                if parent[wx] == usize::MAX {
                    parent[wx] = vx;
                    parent_cell[wx] = cell;
                    queue.push_back(wx);
                }
            }
        }
        if parent[m + ej] == usize::MAX {
            return Err(Error::Solver("no pivot cycle found in transport basis".into()));
        }
        let mut path_cells = Vec::new();
        let mut vx = m + ej;
        while vx != ei {
            path_cells.push(parent_cell[vx]);
            vx = parent[vx];
        }
        path_cells.reverse();

        // Signs alternate around the cycle starting with + at the entering cell, so cells at
        // even positions of the path decrease. The leaving cell is the smallest decreasing
        // allocation, ties broken lexicographically by cell index.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (t, &cell) in path_cells.iter().enumerate() {
            if t % 2 == 0 {
                let val = x[cell];
                if val < theta || (val == theta && cell < leaving) {
                    theta = val;
                    leaving = cell;
                }
            }
        }
        x[ei * n + ej] += theta;
        for (t, &cell) in path_cells.iter().enumerate() {
            if t % 2 == 0 {
                x[cell] -= theta;
            } else {
                x[cell] += theta;
            }
        }
        x[leaving] = 0.0;
        in_basis[leaving] = false;
        in_basis[ei * n + ej] = true;
        basic.retain(|&(i, j)| i * n + j != leaving);
        basic.push((ei, ej));
    }

    let mut flows = Vec::new();
    let mut cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            let mass = x[i * n + j];
            if mass > 0.0 {
                flows.push((i, j, mass));
                cost += mass * costs.get(i, j);
            }
        }
    }
    Ok(SimplexResult { flows, cost, u, v, iterations })
}

/// Kantorovich potential values at the atoms, from optimal duals: `ψ(x_i) = u_i`,
/// `ψ(y_j) = −v_j`, shifted so the smallest target value is zero. On the support,
/// `ψ(x_i) − ψ(y_j) = c_ij`.
pub fn potential_from_duals(res: &SimplexResult) -> (Vec<f64>, Vec<f64>) {
    let shift = res.v.iter().fold(f64::INFINITY, |m, &vj| m.min(-vj));
    let psi_src: Vec<f64> = res.u.iter().map(|&ui| ui - shift).collect();
    let psi_dst: Vec<f64> = res.v.iter().map(|&vj| -vj - shift).collect();
    (psi_src, psi_dst)
}

/// Non-crossing plan with per-flow level intervals.
#[derive(Debug, Clone)]
pub struct NoncrossingPlan {
    /// Flows `(source, target, mass)` sorted by source then target.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Boundary angle of the chosen cut gap.
    pub cut_theta: f64,
    /// Per-flow level interval `[ℓ, ℓ + mass]`: the band of cumulative trace values (relative
    /// to the cut) occupied by the matched mass slab. Aligned with `flows`.
    pub levels: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    theta: f64,
    /// +1 source, −1 target.
    sign: f64,
    /// Index into the source or target family.
    idx: usize,
    mass: f64,
}

/// Cyclic interleaving of two chords given by event positions. Chords sharing an endpoint meet
/// only at the boundary and never interleave.
fn interleaves(a: (usize, usize), b: (usize, usize)) -> bool {
    let (a0, a1) = a;
    let (b0, b1) = b;
    if a0 == b0 || a0 == b1 || a1 == b0 || a1 == b1 {
        return false;
    }
    let inside =
        |p: usize| -> bool { if a0 < a1 { p > a0 && p < a1 } else { p > a0 || p < a1 } };
    inside(b0) != inside(b1)
}

/// Optimal non-crossing plan: transportation LP followed by uncrossing, swapping the common
/// mass of interleaved chord pairs onto the parallel pairing. The quadrilateral inequality
/// keeps the cost optimal; the final plan is verified interleaving-free before returning.
pub fn solve_noncrossing(
    costs: &CostMatrix,
    src: &[Atom],
    tgt: &[Atom],
) -> Result<NoncrossingPlan> {
    let supply: Vec<f64> = src.iter().map(|a| a.mass).collect();
    let demand: Vec<f64> = tgt.iter().map(|a| a.mass).collect();
    check_balance(&supply, &demand)?;

    let mut events: Vec<Event> = Vec::with_capacity(src.len() + tgt.len());
    for (idx, a) in src.iter().enumerate() {
        events.push(Event { theta: wrap_angle(a.theta), sign: 1.0, idx, mass: a.mass });
    }
    for (idx, a) in tgt.iter().enumerate() {
        events.push(Event { theta: wrap_angle(a.theta), sign: -1.0, idx, mass: a.mass });
    }
    events.sort_by(|a, b| {
        a.theta
            .total_cmp(&b.theta)
            .then(b.sign.total_cmp(&a.sign))
            .then(a.idx.cmp(&b.idx))
    });
    let nev = events.len();
    let mut pos_src = vec![usize::MAX; src.len()];
    let mut pos_tgt = vec![usize::MAX; tgt.len()];
    for (p, e) in events.iter().enumerate() {
        if e.sign > 0.0 {
            pos_src[e.idx] = p;
        } else {
            pos_tgt[e.idx] = p;
        }
    }

    // Coincident atoms occupy one geometric boundary point, so chords through them meet at
    // the boundary rather than cross. Group event positions into sites of equal angle
    // (including across the wrap) and treat same-site endpoints as shared.
    let mut site = vec![0usize; nev];
    for p in 1..nev {
        site[p] = if events[p].theta - events[p - 1].theta <= 1e-12 {
            site[p - 1]
        } else {
            site[p - 1] + 1
        };
    }
    if nev > 1 && site[nev - 1] > 0 && (TAU - events[nev - 1].theta) + events[0].theta <= 1e-12 {
        let last = site[nev - 1];
        for s in site.iter_mut() {
            if *s == last {
                *s = 0;
            }
        }
    }
    let interleave = |a: (usize, usize), b: (usize, usize)| -> bool {
        if site[a.0] == site[b.0]
            || site[a.0] == site[b.1]
            || site[a.1] == site[b.0]
            || site[a.1] == site[b.1]
        {
            return false;
        }
        interleaves(a, b)
    };

    #[derive(Debug, Clone, Copy)]
    struct Chord {
        s: usize,
        t: usize,
        /// Event positions of the source and target atoms.
        ps: usize,
        pt: usize,
        mass: f64,
    }

    let lp = solve_simplex(costs, &supply, &demand)?;
    let mut chords: Vec<Chord> = lp
        .flows
        .iter()
        .map(|&(i, j, q)| Chord { s: i, t: j, ps: pos_src[i], pt: pos_tgt[j], mass: q })
        .collect();
    let mut by_pair: std::collections::BTreeMap<(usize, usize), usize> =
        chords.iter().enumerate().map(|(id, c)| ((c.s, c.t), id)).collect();
    let ends = |c: &Chord| (c.ps, c.pt);
    let mut worklist: Vec<(usize, usize)> = Vec::new();
    for a in 0..chords.len() {
        for b in a + 1..chords.len() {
            if interleave(ends(&chords[a]), ends(&chords[b])) {
                worklist.push((a, b));
            }
        }
    }
    // Each swap straightens two crossing chords into a nested or parallel pair, strictly
    // shortening total chord length, so the loop terminates; the budget is a hard stop
    // against pathological mass fragmentation that fails honestly instead of spinning.
    let mut budget = 10_000 + 200 * chords.len() * chords.len();
    while let Some((a, b)) = worklist.pop() {
        if chords[a].mass <= 0.0 || chords[b].mass <= 0.0 {
            continue;
        }
        if !interleave(ends(&chords[a]), ends(&chords[b])) {
            continue;
        }
        if budget == 0 {
            return Err(Error::Solver("uncrossing failed to terminate".into()));
        }
        budget -= 1;
        let mu = chords[a].mass.min(chords[b].mass);
        let (ca, cb) = (chords[a], chords[b]);
        chords[a].mass -= mu;
        chords[b].mass -= mu;
        for id in [a, b] {
            let c = chords[id];
            if c.mass <= 0.0 && by_pair.get(&(c.s, c.t)) == Some(&id) {
                by_pair.remove(&(c.s, c.t));
            }
        }
        for (s, ps, t, pt) in [(ca.s, ca.ps, cb.t, cb.pt), (cb.s, cb.ps, ca.t, ca.pt)] {
            match by_pair.get(&(s, t)) {
                Some(&id) if chords[id].mass > 0.0 => {
                    chords[id].mass += mu;
                }
                _ => {
                    let id = chords.len();
                    chords.push(Chord { s, t, ps, pt, mass: mu });
                    by_pair.insert((s, t), id);
                    for other in 0..id {
                        if chords[other].mass > 0.0
                            && interleave(ends(&chords[id]), ends(&chords[other]))
                        {
                            worklist.push((other, id));
                        }
                    }
                }
            }
        }
    }
    let active: Vec<Chord> = chords.iter().copied().filter(|c| c.mass > 0.0).collect();
    for a in 0..active.len() {
        for b in a + 1..active.len() {
            if interleave(ends(&active[a]), ends(&active[b])) {
                return Err(Error::Solver("uncrossing left an interleaved chord pair".into()));
            }
        }
    }

    // Levels: cut at the gap before the first event, walk the cumulative trace, and hand
    // each chord its slab at its later endpoint, nested chords stacked innermost-first.
    let mut g_before = vec![0.0f64; nev];
    let mut acc = 0.0;
    for (p, e) in events.iter().enumerate() {
        g_before[p] = acc;
        acc += e.sign * e.mass;
    }
    let mut by_right: Vec<Vec<usize>> = vec![Vec::new(); nev];
    for (id, c) in active.iter().enumerate() {
        by_right[c.ps.max(c.pt)].push(id);
    }
    let mut levels = vec![(0.0f64, 0.0f64); active.len()];
    for p in 0..nev {
        let e = events[p];
        let mut ids = by_right[p].clone();
        ids.sort_by(|&x, &y| {
            let lx = active[x].ps.min(active[x].pt);
            let ly = active[y].ps.min(active[y].pt);
            ly.cmp(&lx)
        });
        let mut off = 0.0;
        for id in ids {
            let mu = active[id].mass;
            levels[id] = if e.sign > 0.0 {
                (g_before[p] + off, g_before[p] + off + mu)
            } else {
                (g_before[p] - off - mu, g_before[p] - off)
            };
            off += mu;
        }
    }
    let mut order: Vec<usize> = (0..active.len()).collect();
    order.sort_by(|&a, &b| {
        active[a]
            .s
            .cmp(&active[b].s)
            .then(active[a].t.cmp(&active[b].t))
            .then(levels[a].0.total_cmp(&levels[b].0))
    });
    let flows: Vec<(usize, usize, f64)> =
        order.iter().map(|&i| (active[i].s, active[i].t, active[i].mass)).collect();
    let levels: Vec<(f64, f64)> = order.iter().map(|&i| levels[i]).collect();
    let cost: f64 = flows.iter().map(|&(i, j, q)| q * costs.get(i, j)).sum();

    let prev = events[nev - 1].theta;
    let here = events[0].theta;
    let cut_theta = wrap_angle(prev + 0.5 * wrap_angle(here - prev));
    Ok(NoncrossingPlan { flows, cost, cut_theta, levels })
}

/// When every source sends its whole mass to a single target, return that assignment.
pub fn monge_map(flows: &[(usize, usize, f64)], n_src: usize) -> Option<Vec<usize>> {
    let mut map = vec![usize::MAX; n_src];
    for &(i, j, _) in flows {
        if map[i] != usize::MAX && map[i] != j {
            return None;
        }
        map[i] = j;
    }
    if map.iter().any(|&j| j == usize::MAX) {
        return None;
    }
    Some(map)
}

/// A transport ray: one flow together with its connecting geodesic.
#[derive(Debug, Clone)]
pub struct Ray {
    pub src: usize,
    pub dst: usize,
    pub mass: f64,
    pub geodesic: Geodesic,
}

/// Trace the geodesic of every flow with exact lengths, in the order the flows were given.
/// Each distinct target pays for one shortest-path field that seeds its connections, the same
/// policy as the exact cost matrix: the field supplies a near-optimal initial path, which
/// keeps the two-point refinement robust under strong weight gradients where blind
/// launch-angle shooting can fail to bracket.
pub fn trace_flows(
    w: &ConformalWeight,
    domain: &DomainBoundary,
    src: &[Atom],
    tgt: &[Atom],
    flows: &[(usize, usize, f64)],
    opts: &MetricOpts,
) -> Result<Vec<Ray>> {
    let mut conn_opts = opts.clone();
    conn_opts.error_on_multi = false;
    let mut by_target: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (fi, &(_, j, _)) in flows.iter().enumerate() {
        by_target.entry(j).or_default().push(fi);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_target.into_iter().collect();
    let traced: Vec<Vec<(usize, Ray)>> = groups
        .par_iter()
        .map(|(j, fis)| -> Result<Vec<(usize, Ray)>> {
            let field =
                dijkstra::dijkstra_field(w, domain, tgt[*j].position, opts.seed_cells.min(64))?;
            fis.iter()
                .map(|&fi| {
                    let (i, j, mass) = flows[fi];
                    let g = metric::connect_seeded(
                        w,
                        domain,
                        src[i].position,
                        tgt[j].position,
                        Some(&field),
                        &conn_opts,
                    )?;
                    Ok((fi, Ray { src: i, dst: j, mass, geodesic: g }))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Option<Ray>> = (0..flows.len()).map(|_| None).collect();
    for (fi, ray) in traced.into_iter().flatten() {
        out[fi] = Some(ray);
    }
    Ok(out.into_iter().map(|r| r.expect("every flow traced")).collect())
}

/// Exact plan cost from traced rays.
pub fn cost_of_rays(rays: &[Ray]) -> f64 {
    rays.iter().map(|r| r.mass * r.geodesic.weighted_length).sum()
}

/// Count ray pairs that cross transversally at an interior point. Crossings closer than
/// `1e-5·diameter` to any of the four ray endpoints are endpoint contacts, not interior
/// crossings, and are ignored.
pub fn crossing_count(rays: &[Ray], diameter: f64) -> usize {
    let guard = 1e-5 * diameter;
    let eps = 1e-9;
    // Spatial hash over segments to avoid the quartic pairwise sweep.
    let cell = (diameter / 64.0).max(1e-12);
    let key = |p: Vec2| -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    };
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<(u32, u32)>> =
        std::collections::HashMap::new();
    for (ri, ray) in rays.iter().enumerate() {
        let pts = &ray.geodesic.points;
        for si in 0..pts.len().saturating_sub(1) {
            let (a, b) = (pts[si], pts[si + 1]);
            let (k0, k1) = (key(a), key(b));
            let (ilo, ihi) = (k0.0.min(k1.0), k0.0.max(k1.0));
            let (jlo, jhi) = (k0.1.min(k1.1), k0.1.max(k1.1));
            for ii in ilo..=ihi {
                for jj in jlo..=jhi {
                    buckets.entry((ii, jj)).or_default().push((ri as u32, si as u32));
                }
            }
        }
    }
    let mut crossing_pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut seen: BTreeSet<(u32, u32, u32, u32)> = BTreeSet::new();
    for segs in buckets.values() {
        for a in 0..segs.len() {
            for b in a + 1..segs.len() {
                let (ra, sa) = segs[a];
                let (rb, sb) = segs[b];
                if ra == rb {
                    continue;
                }
                let (r1, s1, r2, s2) =
                    if ra < rb { (ra, sa, rb, sb) } else { (rb, sb, ra, sa) };
                if crossing_pairs.contains(&(r1, r2)) || !seen.insert((r1, s1, r2, s2)) {
                    continue;
                }
                let p1 = &rays[r1 as usize].geodesic.points;
                let p2 = &rays[r2 as usize].geodesic.points;
                let (a0, a1) = (p1[s1 as usize], p1[s1 as usize + 1]);
                let (b0, b1) = (p2[s2 as usize], p2[s2 as usize + 1]);
                if let Some((_, _, pt)) = segment_crossing(a0, a1, b0, b1, eps) {
                    let endpoints = [
                        rays[r1 as usize].geodesic.start(),
                        rays[r1 as usize].geodesic.end(),
                        rays[r2 as usize].geodesic.start(),
                        rays[r2 as usize].geodesic.end(),
                    ];
                    if endpoints.iter().all(|e| e.dist(pt) > guard) {
                        crossing_pairs.insert((r1, r2));
                    }
                }
            }
        }
    }
    crossing_pairs.len()
}
