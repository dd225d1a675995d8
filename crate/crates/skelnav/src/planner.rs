//! Long-horizon visitation planning: softmax belief-to-probability
//! conversion, the expected-travel objective over visit orders, greedy
//! initialization with 2-opt local search, an exact enumeration oracle for
//! small instances, frontier clustering, and grid A* with lookahead.
//!
//! The objective charges each candidate its probability times the cumulative
//! travel distance at which the tour reaches it. The agent's pose is
//! prepended as a fixed zero-probability first stop so every candidate's
//! approach cost is counted; the literal convention that leaves the first
//! leg free is available via [`PlanInstance::count_first_leg`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{dijkstra_field, Cell, Point, NEIGHBORS8, SQRT2};
use crate::mapping::{CellState, OccupancyGrid, ValueMap};

/// Hard cap for the exact enumeration oracle.
pub const BRUTE_FORCE_MAX: usize = 9;
/// Default 2-opt sweep limit.
pub const DEFAULT_MAX_SWEEPS: usize = 100;
/// Improvement threshold for accepting a 2-opt move.
const IMPROVE_EPS: f64 = 1e-12;
/// Frontier clusters smaller than this are noise.
pub const FRONTIER_MIN_SIZE: usize = 3;
/// Radius for pooling value-map beliefs around a frontier point, meters.
pub const FRONTIER_POOL_RADIUS_M: f64 = 0.5;
/// Default lookahead arc length, meters.
pub const LOOKAHEAD_M: f64 = 0.75;
/// Traversal cost multiplier for unknown cells during exploration planning.
pub const UNKNOWN_COST_MULT: f64 = 2.0;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("instance too large for exact enumeration: {n} > {BRUTE_FORCE_MAX}")]
    TooLarge { n: usize },
    #[error("invalid plan instance: {0}")]
    Invalid(String),
    #[error("no path to goal")]
    NoPath,
}

/// Convert beliefs to probabilities via temperature softmax, computed with
/// max-subtraction for stability.
pub fn softmax_probs(beliefs: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau > 0.0, "softmax temperature must be positive");
    assert!(!beliefs.is_empty(), "softmax needs at least one belief");
    let max = beliefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = beliefs.iter().map(|b| ((b - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A candidate destination with target probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub id: u64,
    pub position: Point,
}

/// Candidates, probabilities, and a symmetric distance matrix with the start
/// at row/column 0. Unreachable candidates must be dropped before
/// construction; the matrix is all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanInstance {
    pub start: Point,
    pub candidates: Vec<PlanCandidate>,
    pub probs: Vec<f64>,
    /// Count the leg from the agent to the first visited candidate.
    pub count_first_leg: bool,
    dist: Vec<f64>,
    n: usize,
}

impl PlanInstance {
    /// Validate and build. `dist` is (N+1)x(N+1), row 0 = start.
    pub fn new(
        start: Point,
        candidates: Vec<PlanCandidate>,
        probs: Vec<f64>,
        dist: Vec<Vec<f64>>,
    ) -> Result<Self, PlanError> {
        let n = candidates.len();
        if n == 0 {
            return Err(PlanError::Invalid("no candidates".into()));
        }
        if probs.len() != n {
            return Err(PlanError::Invalid("probs length mismatch".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PlanError::Invalid(format!("probs sum to {sum}, not 1")));
        }
        if probs.iter().any(|p| *p < 0.0) {
            return Err(PlanError::Invalid("negative probability".into()));
        }
        if dist.len() != n + 1 || dist.iter().any(|row| row.len() != n + 1) {
            return Err(PlanError::Invalid("distance matrix must be (N+1)^2".into()));
        }
        let mut flat = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..=n {
            for j in 0..=n {
                let d = dist[i][j];
                if !d.is_finite() {
                    return Err(PlanError::Invalid(format!("d({i},{j}) not finite")));
                }
                if (d - dist[j][i]).abs() > 1e-9 {
                    return Err(PlanError::Invalid(format!("d({i},{j}) asymmetric")));
                }
                if i == j && d.abs() > 1e-9 {
                    return Err(PlanError::Invalid(format!("d({i},{i}) nonzero")));
                }
                flat[i * (n + 1) + j] = d;
            }
        }
        Ok(Self {
            start,
            candidates,
            probs,
            count_first_leg: true,
            dist: flat,
            n,
        })
    }

    /// Instance with straight-line distances.
    pub fn euclidean(
        start: Point,
        candidates: Vec<PlanCandidate>,
        probs: Vec<f64>,
    ) -> Result<Self, PlanError> {
        let n = candidates.len();
        let mut pts = Vec::with_capacity(n + 1);
        pts.push(start);
        pts.extend(candidates.iter().map(|c| c.position));
        let dist: Vec<Vec<f64>> = (0..=n)
            .map(|i| (0..=n).map(|j| pts[i].dist(pts[j])).collect())
            .collect();
        Self::new(start, candidates, probs, dist)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Matrix lookup with 0 = start, 1..=N = candidates.
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * (self.n + 1) + j]
    }
}

/// A visit permutation with its expected travel cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitOrder {
    /// Candidate indices (0-based), each exactly once.
    pub order: Vec<usize>,
    pub expected_cost: f64,
}

/// Expected travel of a visit order: each candidate's probability times the
/// cumulative distance at which the tour reaches it.
pub fn expected_cost(instance: &PlanInstance, order: &[usize]) -> f64 {
    debug_assert_eq!(order.len(), instance.len());
    let mut e = 0.0;
    let mut prefix = 0.0;
    let mut prev = 0usize; // matrix index of the start
    for (pos, &ci) in order.iter().enumerate() {
        let mi = ci + 1;
        if pos > 0 || instance.count_first_leg {
            prefix += instance.d(prev, mi);
        }
        e += instance.probs[ci] * prefix;
        prev = mi;
    }
    e
}

/// Nearest-neighbor chain from the start; distance ties go to the lower
/// candidate index.
pub fn greedy_order(instance: &PlanInstance) -> VisitOrder {
    let n = instance.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut at = 0usize;
    while !remaining.is_empty() {
        let mut best_pos = 0usize;
        let mut best_d = f64::INFINITY;
        for (pos, &ci) in remaining.iter().enumerate() {
            let d = instance.d(at, ci + 1);
            if d < best_d - IMPROVE_EPS {
                best_d = d;
                best_pos = pos;
            }
        }
        let ci = remaining.remove(best_pos);
        at = ci + 1;
        order.push(ci);
    }
    let e = expected_cost(instance, &order);
    VisitOrder {
        order,
        expected_cost: e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoOptConfig {
    pub max_sweeps: usize,
    /// Take the best move per sweep instead of the first improving one.
    pub best_improvement: bool,
}

impl Default for TwoOptConfig {
    fn default() -> Self {
        Self {
            max_sweeps: DEFAULT_MAX_SWEEPS,
            best_improvement: false,
        }
    }
}

/// 2-opt local search over segment reversals. Scans (p, q) pairs in
/// lexicographic order; in first-improvement mode a strictly better reversal
/// is accepted immediately and the scan continues on the updated order.
/// Stops at a sweep with no improvement or at the sweep cap. The result never
/// costs more than the initial order.
pub fn two_opt(instance: &PlanInstance, init: VisitOrder, config: TwoOptConfig) -> VisitOrder {
    let n = instance.len();
    if n < 2 {
        return init;
    }
    let mut order = init.order;
    let mut cost = expected_cost(instance, &order);
    for _sweep in 0..config.max_sweeps {
        let mut improved = false;
        if config.best_improvement {
            let mut best: Option<(f64, usize, usize)> = None;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    order[p..=q].reverse();
                    let e = expected_cost(instance, &order);
                    order[p..=q].reverse();
                    if e < cost - IMPROVE_EPS && best.map_or(true, |(be, _, _)| e < be) {
                        best = Some((e, p, q));
                    }
                }
            }
            if let Some((e, p, q)) = best {
                order[p..=q].reverse();
                cost = e;
                improved = true;
            }
        } else {
            for p in 0..n - 1 {
                for q in p + 1..n {
                    order[p..=q].reverse();
                    let e = expected_cost(instance, &order);
                    if e < cost - IMPROVE_EPS {
                        cost = e;
                        improved = true;
                    } else {
                        order[p..=q].reverse();
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    VisitOrder {
        order,
        expected_cost: cost,
    }
}

/// Exact minimizer by permutation enumeration in lexicographic order; ties
/// keep the lexicographically first order.
pub fn brute_force_order(instance: &PlanInstance) -> Result<VisitOrder, PlanError> {
    let n = instance.len();
    if n > BRUTE_FORCE_MAX {
        return Err(PlanError::TooLarge { n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_e = expected_cost(instance, &perm);
    while next_permutation(&mut perm) {
        let e = expected_cost(instance, &perm);
        if e < best_e - IMPROVE_EPS {
            best_e = e;
            best = perm.clone();
        }
    }
    Ok(VisitOrder {
        order: best,
        expected_cost: best_e,
    })
}

/// Lexicographic next permutation; false once the sequence is descending.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

// ---------------------------------------------------------------------------
// Frontiers
// ---------------------------------------------------------------------------

/// Frontier points: free cells 8-adjacent to unknown space, clustered by
/// 8-connectivity, components of at least `min_size` reduced to the member
/// cell nearest the component centroid. Empty output means exploration is
/// complete.
pub fn cluster_frontiers(grid: &OccupancyGrid, min_size: usize) -> Vec<Cell> {
    let dims = grid.dims;
    let is_frontier = |c: Cell| {
        grid.is_free(c)
            && NEIGHBORS8.iter().any(|&(dx, dy, _)| {
                let n = Cell::new(c.x + dx, c.y + dy);
                dims.contains(n) && grid.is_unknown(n)
            })
    };
    let (labels, count) = crate::grid::components8(&dims, is_frontier);
    let mut members: Vec<Vec<Cell>> = vec![Vec::new(); count];
    for c in dims.iter_cells() {
        let l = labels[dims.idx(c)];
        if l != usize::MAX {
            members[l].push(c);
        }
    }
    let mut points = Vec::new();
    for cluster in members {
        if cluster.len() < min_size {
            continue;
        }
        let cx = cluster.iter().map(|c| c.x as f64).sum::<f64>() / cluster.len() as f64;
        let cy = cluster.iter().map(|c| c.y as f64).sum::<f64>() / cluster.len() as f64;
        let snapped = *cluster
            .iter()
            .min_by(|a, b| {
                let da = (a.x as f64 - cx).powi(2) + (a.y as f64 - cy).powi(2);
                let db = (b.x as f64 - cx).powi(2) + (b.y as f64 - cy).powi(2);
                da.partial_cmp(&db).unwrap().then_with(|| a.cmp(b))
            })
            .unwrap();
        points.push(snapped);
    }
    points.sort();
    points
}

/// Frontier beliefs from the value map: max value within the pooling radius,
/// counting only cells that have been observed (confidence > 0).
pub fn frontier_beliefs(vmap: &ValueMap, points: &[Cell]) -> Vec<f64> {
    let r_cells = (FRONTIER_POOL_RADIUS_M / vmap.dims.resolution).ceil() as i32;
    points
        .iter()
        .map(|&p| {
            let mut best = 0.0f64;
            for dy in -r_cells..=r_cells {
                for dx in -r_cells..=r_cells {
                    let c = Cell::new(p.x + dx, p.y + dy);
                    if !vmap.dims.contains(c) {
                        continue;
                    }
                    let center_d = vmap
                        .dims
                        .center_of(c)
                        .dist(vmap.dims.center_of(p));
                    if center_d > FRONTIER_POOL_RADIUS_M + 1e-9 {
                        continue;
                    }
                    let (v, conf) = vmap.at(c);
                    if conf > 0.0 && v > best {
                        best = v;
                    }
                }
            }
            best
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Grid A* and lookahead
// ---------------------------------------------------------------------------

/// Traversal rules for path planning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostMode {
    /// Only mapped-free cells are traversable (revisiting, target runs).
    FreeOnly,
    /// Unknown cells traversable at double cost (exploration planning).
    DiscountUnknown,
}

fn cost_mul(grid: &OccupancyGrid, mode: CostMode, c: Cell) -> Option<f64> {
    match (grid.state(c), mode) {
        (CellState::Free, _) => Some(1.0),
        (CellState::Unknown, CostMode::DiscountUnknown) => Some(UNKNOWN_COST_MULT),
        _ => None,
    }
}

#[derive(Clone, Copy, PartialEq)]
struct AStarEntry {
    f: f64,
    cell: Cell,
}

impl Eq for AStarEntry {}

impl Ord for AStarEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for AStarEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: Cell, b: Cell, resolution: f64) -> f64 {
    let dx = (a.x - b.x).abs() as f64;
    let dy = (a.y - b.y).abs() as f64;
    (dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)) * resolution
}

/// 8-connected A* from `start` to the nearest cell of `goals`. Returns the
/// full cell path including both ends.
pub fn plan_astar_to_any(
    grid: &OccupancyGrid,
    start: Cell,
    goals: &[Cell],
    mode: CostMode,
) -> Result<Vec<Cell>, PlanError> {
    let dims = grid.dims;
    if goals.is_empty() || !dims.contains(start) {
        return Err(PlanError::NoPath);
    }
    let goal_set: std::collections::BTreeSet<Cell> = goals
        .iter()
        .copied()
        .filter(|&g| dims.contains(g))
        .collect();
    if goal_set.is_empty() {
        return Err(PlanError::NoPath);
    }
    if goal_set.contains(&start) {
        return Ok(vec![start]);
    }
    if cost_mul(grid, mode, start).is_none() {
        return Err(PlanError::NoPath);
    }
    let h = |c: Cell| {
        goal_set
            .iter()
            .map(|&g| octile(c, g, dims.resolution))
            .fold(f64::INFINITY, f64::min)
    };
    let mut g_cost = vec![f64::INFINITY; dims.cell_count()];
    let mut parent: Vec<u32> = vec![u32::MAX; dims.cell_count()];
    let mut heap = std::collections::BinaryHeap::new();
    g_cost[dims.idx(start)] = 0.0;
    heap.push(AStarEntry {
        f: h(start),
        cell: start,
    });
    while let Some(AStarEntry { f, cell }) = heap.pop() {
        let g_here = g_cost[dims.idx(cell)];
        if f > g_here + h(cell) + 1e-9 {
            continue;
        }
        if goal_set.contains(&cell) {
            // Reconstruct.
            let mut path = vec![cell];
            let mut cur = cell;
            while cur != start {
                let p = parent[dims.idx(cur)];
                let px = (p % dims.width as u32) as i32;
                let py = (p / dims.width as u32) as i32;
                cur = Cell::new(px, py);
                path.push(cur);
            }
            path.reverse();
            return Ok(path);
        }
        let mul_here = match cost_mul(grid, mode, cell) {
            Some(m) => m,
            None => continue,
        };
        let mul_fn = |c: Cell| cost_mul(grid, mode, c);
        for (dx, dy, step) in NEIGHBORS8 {
            let mul_there =
                match crate::grid::step_admissible(&dims, &mul_fn, cell, dx, dy) {
                    Some(m) => m,
                    None => continue,
                };
            let n = Cell::new(cell.x + dx, cell.y + dy);
            let cand = g_here + step * dims.resolution * mul_here.max(mul_there);
            let idx = dims.idx(n);
            if cand + 1e-12 < g_cost[idx] {
                g_cost[idx] = cand;
                parent[idx] = (cell.y as u32) * dims.width as u32 + cell.x as u32;
                heap.push(AStarEntry {
                    f: cand + h(n),
                    cell: n,
                });
            }
        }
    }
    Err(PlanError::NoPath)
}

pub fn plan_astar(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    mode: CostMode,
) -> Result<Vec<Cell>, PlanError> {
    plan_astar_to_any(grid, start, &[goal], mode)
}

/// Metric length of a cell path.
pub fn path_length_m(path: &[Cell], resolution: f64) -> f64 {
    path.windows(2)
        .map(|w| crate::grid::step_cost(w[0], w[1]) * resolution)
        .sum()
}

/// The path point at arc length `d` (first point at or past it), or the final
/// point when the path is shorter.
pub fn lookahead(path: &[Cell], resolution: f64, d: f64) -> Cell {
    let mut acc = 0.0;
    for w in path.windows(2) {
        acc += crate::grid::step_cost(w[0], w[1]) * resolution;
        if acc >= d - 1e-9 {
            return w[1];
        }
    }
    *path.last().expect("lookahead needs a non-empty path")
}

/// Geodesic distance matrix over the mapped grid for a start cell and
/// candidate cells, dropping unreachable candidates. Returns the kept
/// candidate indices and the (K+1)x(K+1) matrix.
pub fn geodesic_matrix(
    grid: &OccupancyGrid,
    start: Cell,
    candidates: &[Cell],
    mode: CostMode,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let dims = grid.dims;
    let from_start = dijkstra_field(&dims, start, |c| cost_mul(grid, mode, c));
    let kept: Vec<usize> = (0..candidates.len())
        .filter(|&i| dims.contains(candidates[i]) && from_start[dims.idx(candidates[i])].is_finite())
        .collect();
    let fields: Vec<Vec<f64>> = kept
        .iter()
        .map(|&i| dijkstra_field(&dims, candidates[i], |c| cost_mul(grid, mode, c)))
        .collect();
    let k = kept.len();
    let mut matrix = vec![vec![0.0; k + 1]; k + 1];
    for (row, &i) in kept.iter().enumerate() {
        let d = from_start[dims.idx(candidates[i])];
        matrix[0][row + 1] = d;
        matrix[row + 1][0] = d;
        for (col, &j) in kept.iter().enumerate() {
            if col > row {
                let d = fields[row][dims.idx(candidates[j])];
                matrix[row + 1][col + 1] = d;
                matrix[col + 1][row + 1] = d;
            }
        }
    }
    (kept, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_instance(dists: &[f64], probs: &[f64]) -> PlanInstance {
        let candidates: Vec<PlanCandidate> = dists
            .iter()
            .enumerate()
            .map(|(i, &d)| PlanCandidate {
                id: i as u64,
                position: Point::new(d, 0.0),
            })
            .collect();
        PlanInstance::euclidean(Point::new(0.0, 0.0), candidates, probs.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let u = softmax_probs(&[0.4, 0.4, 0.4], 1.0);
        for p in &u {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = softmax_probs(&[0.0, 1.0], 1.0);
        assert!((p[0] - 0.2689).abs() < 1e-4);
        assert!((p[1] - 0.7311).abs() < 1e-4);
        let sharp = softmax_probs(&[0.2, 0.9, 0.5], 0.01);
        assert!(sharp[1] > 0.99);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax_probs(&[0.1, 0.5, 0.9], 0.7);
        let b = softmax_probs(&[10.1, 10.5, 10.9], 0.7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_cost_single_candidate() {
        let inst = line_instance(&[5.0], &[1.0]);
        assert!((expected_cost(&inst, &[0]) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn expected_cost_mass_on_first_visited() {
        // All probability on the first-visited candidate: later legs cost 0.
        let inst = line_instance(&[2.0, 7.0], &[1.0, 0.0]);
        let e = expected_cost(&inst, &[0, 1]);
        assert!((e - 2.0).abs() < 1e-9);
    }

    #[test]
    fn expected_cost_uniform_line() {
        let inst = line_instance(&[1.0, 2.0, 3.0], &[1.0 / 3.0; 3]);
        let e = expected_cost(&inst, &[0, 1, 2]);
        assert!((e - 2.0).abs() < 1e-9, "near-to-far uniform: {e}");
    }

    #[test]
    fn expected_cost_matches_cumsum_oracle() {
        // Independent evaluation: explicit cumulative-sum over the tour.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..7);
            let inst = random_instance(&mut rng, n);
            let order: Vec<usize> = (0..n).collect();
            let mut cum = 0.0;
            let mut prev = 0usize;
            let mut oracle = 0.0;
            for &ci in &order {
                cum += inst.d(prev, ci + 1);
                oracle += inst.probs[ci] * cum;
                prev = ci + 1;
            }
            let e = expected_cost(&inst, &order);
            assert!((e - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn free_first_leg_convention() {
        let mut inst = line_instance(&[5.0], &[1.0]);
        inst.count_first_leg = false;
        assert!(expected_cost(&inst, &[0]).abs() < 1e-12);
    }

    #[test]
    fn greedy_visits_nearest_first_with_index_ties() {
        let inst = line_instance(&[2.0, 1.0, 3.0], &[0.2, 0.3, 0.5]);
        let g = greedy_order(&inst);
        assert_eq!(g.order, vec![1, 0, 2]);
        // Equidistant pair: lower index first.
        let tie = PlanInstance::euclidean(
            Point::new(0.0, 0.0),
            vec![
                PlanCandidate {
                    id: 0,
                    position: Point::new(0.0, 2.0),
                },
                PlanCandidate {
                    id: 1,
                    position: Point::new(2.0, 0.0),
                },
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(greedy_order(&tie).order[0], 0);
    }

    #[test]
    fn brute_force_two_candidate_example() {
        // d(start, c0) = 5, d(start, c1) = 1, d(c0, c1) = 4.
        let dist = vec![
            vec![0.0, 5.0, 1.0],
            vec![5.0, 0.0, 4.0],
            vec![1.0, 4.0, 0.0],
        ];
        let inst = PlanInstance::new(
            Point::new(0.0, 0.0),
            vec![
                PlanCandidate {
                    id: 0,
                    position: Point::new(5.0, 0.0),
                },
                PlanCandidate {
                    id: 1,
                    position: Point::new(1.0, 0.0),
                },
            ],
            vec![0.9, 0.1],
            dist,
        )
        .unwrap();
        // High-p first: 0.9*5 + 0.1*9 = 5.4; near first: 0.1*1 + 0.9*5 = 4.6.
        assert!((expected_cost(&inst, &[0, 1]) - 5.4).abs() < 1e-9);
        assert!((expected_cost(&inst, &[1, 0]) - 4.6).abs() < 1e-9);
        let best = brute_force_order(&inst).unwrap();
        assert_eq!(best.order, vec![1, 0]);
        assert!((best.expected_cost - 4.6).abs() < 1e-9);
    }

    #[test]
    fn brute_force_rejects_large() {
        let inst = line_instance(&[1.0; 10], &[0.1; 10]);
        assert!(matches!(
            brute_force_order(&inst),
            Err(PlanError::TooLarge { n: 10 })
        ));
    }

    #[test]
    fn two_opt_degenerate_and_optimal_cases() {
        let single = line_instance(&[3.0], &[1.0]);
        let init = greedy_order(&single);
        let out = two_opt(&single, init.clone(), TwoOptConfig::default());
        assert_eq!(out, init);

        // Already optimal init stays unchanged (verified by brute force).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inst = random_instance(&mut rng, 4);
        let best = brute_force_order(&inst).unwrap();
        let refined = two_opt(&inst, best.clone(), TwoOptConfig::default());
        assert_eq!(refined.order, best.order);
    }

    #[test]
    fn two_opt_fixes_greedy_on_adversarial_instance() {
        // High-probability candidate second-nearest; greedy goes near-first,
        // 2-opt reorders.
        let dist = vec![
            vec![0.0, 1.0, 1.2, 9.0],
            vec![1.0, 0.0, 2.0, 9.5],
            vec![1.2, 2.0, 0.0, 9.0],
            vec![9.0, 9.5, 9.0, 0.0],
        ];
        let inst = PlanInstance::new(
            Point::new(0.0, 0.0),
            (0..3)
                .map(|i| PlanCandidate {
                    id: i,
                    position: Point::new(i as f64, 0.0),
                })
                .collect(),
            vec![0.02, 0.93, 0.05],
            dist,
        )
        .unwrap();
        let greedy = greedy_order(&inst);
        assert_eq!(greedy.order[0], 0, "greedy picks nearest first");
        let improved = two_opt(&inst, greedy.clone(), TwoOptConfig::default());
        assert!(improved.expected_cost < greedy.expected_cost - 1e-9);
        assert_eq!(improved.order[0], 1, "2-opt moves the likely candidate up");
    }

    pub(crate) fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> PlanInstance {
        let candidates: Vec<PlanCandidate> = (0..n)
            .map(|i| PlanCandidate {
                id: i as u64,
                position: Point::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
            })
            .collect();
        // Dirichlet(1, ..., 1) via normalized exponentials.
        let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-9..1.0f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|r| r / sum).collect();
        let start = Point::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        PlanInstance::euclidean(start, candidates, probs).unwrap()
    }

    #[test]
    fn solver_chain_dominance_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let inst = random_instance(&mut rng, n);
            let g = greedy_order(&inst);
            let t = two_opt(&inst, g.clone(), TwoOptConfig::default());
            let b = brute_force_order(&inst).unwrap();
            assert!(b.expected_cost <= t.expected_cost + 1e-9);
            assert!(t.expected_cost <= g.expected_cost + 1e-9);
        }
    }

    #[test]
    fn two_opt_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 7);
        let g = greedy_order(&inst);
        let a = two_opt(&inst, g.clone(), TwoOptConfig::default());
        let b = two_opt(&inst, g, TwoOptConfig::default());
        assert_eq!(a, b);
    }

    // ------------------------------------------------------------------
    // Frontier and A* tests
    // ------------------------------------------------------------------

    use crate::testutil::grid_from_rows;

    #[test]
    fn fully_known_grid_has_no_frontiers() {
        let grid = grid_from_rows(&["....", "....", "....", "...."]);
        assert!(cluster_frontiers(&grid, FRONTIER_MIN_SIZE).is_empty());
    }

    #[test]
    fn straight_frontier_reduces_to_middle_cell() {
        // Free strip above, unknown below: frontier along the boundary row.
        let grid = grid_from_rows(&[
            "..........",
            "..........",
            "??????????",
            "??????????",
        ]);
        let pts = cluster_frontiers(&grid, FRONTIER_MIN_SIZE);
        assert_eq!(pts.len(), 1);
        // Ten frontier cells at y = 1; centroid x = 4.5 snaps to x = 4.
        assert_eq!(pts[0], Cell::new(4, 1));
    }

    #[test]
    fn small_frontiers_are_filtered() {
        let grid = grid_from_rows(&[
            "..##..####",
            "..##..####",
            "?###?#####",
            "##########",
        ]);
        // Two frontier blobs of size <= 2.
        let pts = cluster_frontiers(&grid, 3);
        assert!(pts.is_empty(), "{pts:?}");
    }

    #[test]
    fn frontier_beliefs_pool_and_gate_on_confidence() {
        let grid = grid_from_rows(&["....", "....", "....", "...."]);
        let mut vmap = ValueMap::new(grid.dims);
        let idx = grid.dims.idx(Cell::new(1, 1));
        vmap.value[idx] = 0.9;
        vmap.confidence[idx] = 0.5;
        // High value with zero confidence should not count.
        let idx2 = grid.dims.idx(Cell::new(3, 3));
        vmap.value[idx2] = 1.0;
        vmap.confidence[idx2] = 0.0;
        let beliefs = frontier_beliefs(&vmap, &[Cell::new(1, 2), Cell::new(3, 3)]);
        assert!((beliefs[0] - 0.9).abs() < 1e-12);
        assert_eq!(beliefs[1], 0.0);
    }

    #[test]
    fn astar_straight_corridor_and_lookahead() {
        let grid = grid_from_rows(&[
            "##########",
            "#........#",
            "##########",
        ]);
        let path = plan_astar(&grid, Cell::new(1, 1), Cell::new(8, 1), CostMode::FreeOnly).unwrap();
        assert_eq!(path.len(), 8);
        assert!((path_length_m(&path, 0.25) - 7.0 * 0.25).abs() < 1e-9);
        // 0.75 m at 0.25 m cells = 3 steps ahead.
        assert_eq!(lookahead(&path, 0.25, LOOKAHEAD_M), Cell::new(4, 1));
    }

    #[test]
    fn astar_routes_through_opening_and_matches_oracle() {
        let grid = grid_from_rows(&[
            "##########",
            "#....#...#",
            "#....#...#",
            "#......#.#", // wall gap at (5..=6, 3)? opening below
            "#....#...#",
            "##########",
        ]);
        let start = Cell::new(2, 2);
        let goal = Cell::new(8, 2);
        let path = plan_astar(&grid, start, goal, CostMode::FreeOnly).unwrap();
        let cost = path_length_m(&path, grid.dims.resolution);
        let oracle = dijkstra_field(&grid.dims, start, |c| {
            if grid.is_free(c) {
                Some(1.0)
            } else {
                None
            }
        })[grid.dims.idx(goal)];
        assert!((cost - oracle).abs() < 1e-9);
    }

    #[test]
    fn astar_no_path() {
        let grid = grid_from_rows(&[
            "#########",
            "#...#...#",
            "#...#...#",
            "#########",
        ]);
        assert!(matches!(
            plan_astar(&grid, Cell::new(1, 1), Cell::new(7, 1), CostMode::FreeOnly),
            Err(PlanError::NoPath)
        ));
    }

    #[test]
    fn unknown_cells_cost_double_in_exploration_mode() {
        let grid = grid_from_rows(&[
            "#########",
            "#...??..#",
            "#########",
        ]);
        // FreeOnly cannot cross the unknown gap.
        assert!(plan_astar(&grid, Cell::new(1, 1), Cell::new(7, 1), CostMode::FreeOnly).is_err());
        let path =
            plan_astar(&grid, Cell::new(1, 1), Cell::new(7, 1), CostMode::DiscountUnknown).unwrap();
        // Crossing two unknown cells: edges into/out/in cost 2x.
        let cost: f64 = path
            .windows(2)
            .map(|w| {
                let mul = cost_mul(&grid, CostMode::DiscountUnknown, w[0])
                    .unwrap()
                    .max(cost_mul(&grid, CostMode::DiscountUnknown, w[1]).unwrap());
                crate::grid::step_cost(w[0], w[1]) * 0.25 * mul
            })
            .sum();
        let expect = 0.25 * (3.0 + 2.0 * 3.0); // 3 normal steps + 3 discounted
        assert!((cost - expect).abs() < 1e-9, "cost {cost} expect {expect}");
    }

    #[test]
    fn geodesic_matrix_drops_unreachable() {
        let grid = grid_from_rows(&[
            "#########",
            "#...#...#",
            "#...#...#",
            "#########",
        ]);
        let (kept, matrix) = geodesic_matrix(
            &grid,
            Cell::new(1, 1),
            &[Cell::new(2, 2), Cell::new(7, 1)],
            CostMode::FreeOnly,
        );
        assert_eq!(kept, vec![0]);
        assert_eq!(matrix.len(), 2);
        assert!(matrix[0][1].is_finite());
    }
}
