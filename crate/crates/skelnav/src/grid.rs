//! Shared grid primitives: cell coordinates, world/cell transforms, 8-connected
//! neighborhoods, deterministic ray traversal, and shortest-path search.
//!
//! Every raster in the system (ground-truth world, occupancy grid, value map,
//! skeleton mask) shares the same frame: row-major cells, `x` across columns,
//! `y` down rows, world coordinates in meters with the cell `(0, 0)` spanning
//! `[0, resolution) x [0, resolution)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Integer cell coordinate. Signed so neighbor arithmetic never underflows;
/// bounds checks happen at lookup time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Euclidean distance in cell units.
    pub fn dist(self, other: Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

/// 2D world point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Raster dimensions plus metric resolution shared by all map layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub width: i32,
    pub height: i32,
    /// Meters per cell.
    pub resolution: f64,
}

impl Dims {
    pub fn new(width: i32, height: i32, resolution: f64) -> Self {
        Self {
            width,
            height,
            resolution,
        }
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn idx(&self, c: Cell) -> usize {
        debug_assert!(self.contains(c));
        (c.y as usize) * (self.width as usize) + c.x as usize
    }

    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Cell containing a world point.
    pub fn cell_of(&self, p: Point) -> Cell {
        Cell::new(
            (p.x / self.resolution).floor() as i32,
            (p.y / self.resolution).floor() as i32,
        )
    }

    /// World coordinates of a cell center.
    pub fn center_of(&self, c: Cell) -> Point {
        Point::new(
            (c.x as f64 + 0.5) * self.resolution,
            (c.y as f64 + 0.5) * self.resolution,
        )
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        let h = self.height;
        (0..h).flat_map(move |y| (0..w).map(move |x| Cell::new(x, y)))
    }
}

/// The eight neighbor offsets with their unit step costs (1 for axis moves,
/// sqrt(2) for diagonals).
pub const NEIGHBORS8: [(i32, i32, f64); 8] = [
    (0, -1, 1.0),
    (1, 0, 1.0),
    (0, 1, 1.0),
    (-1, 0, 1.0),
    (1, -1, SQRT2),
    (1, 1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
];

/// Cost of one 8-connected step between adjacent cells, in cell units.
pub fn step_cost(a: Cell, b: Cell) -> f64 {
    if a.x != b.x && a.y != b.y {
        SQRT2
    } else {
        1.0
    }
}

/// Normalize an angle to `[0, 2*pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r
}

/// Normalize an angle to `(-pi, pi]`.
pub fn normalize_signed(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

/// Amortized-constant-per-cell line stepping along a ray.
///
/// Yields `(cell, entry_distance)` for every cell the ray enters, starting
/// with the origin cell at distance 0. When the ray crosses a cell corner
/// exactly, the tie resolves toward the lower-index cell (lower `y`, then
/// lower `x`), which keeps traversal deterministic.
pub struct RayWalk {
    cell: Cell,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    step_x: i32,
    step_y: i32,
    next_t: f64,
    started: bool,
}

impl RayWalk {
    pub fn new(origin: Point, angle: f64, resolution: f64) -> Self {
        let dx = angle.cos();
        let dy = angle.sin();
        let cell = Cell::new(
            (origin.x / resolution).floor() as i32,
            (origin.y / resolution).floor() as i32,
        );
        let (step_x, t_max_x, t_delta_x) = axis_init(origin.x, dx, cell.x, resolution);
        let (step_y, t_max_y, t_delta_y) = axis_init(origin.y, dy, cell.y, resolution);
        Self {
            cell,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            step_x,
            step_y,
            next_t: 0.0,
            started: false,
        }
    }
}

fn axis_init(pos: f64, dir: f64, cell: i32, res: f64) -> (i32, f64, f64) {
    if dir > 1e-12 {
        let boundary = (cell as f64 + 1.0) * res;
        (1, (boundary - pos) / dir, res / dir)
    } else if dir < -1e-12 {
        let boundary = cell as f64 * res;
        (-1, (boundary - pos) / dir, res / -dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

impl Iterator for RayWalk {
    type Item = (Cell, f64);

    fn next(&mut self) -> Option<(Cell, f64)> {
        if !self.started {
            self.started = true;
            return Some((self.cell, 0.0));
        }
        // Corner tie: both boundaries at the same distance. Step into the
        // cell with the lower raster index first.
        if (self.t_max_x - self.t_max_y).abs() < 1e-12 {
            let via_x = Cell::new(self.cell.x + self.step_x, self.cell.y);
            let via_y = Cell::new(self.cell.x, self.cell.y + self.step_y);
            let x_first = match via_x.y.cmp(&via_y.y) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => via_x.x <= via_y.x,
            };
            self.next_t = self.t_max_x;
            if x_first {
                self.cell.x += self.step_x;
                self.t_max_x += self.t_delta_x;
            } else {
                self.cell.y += self.step_y;
                self.t_max_y += self.t_delta_y;
            }
        } else if self.t_max_x < self.t_max_y {
            self.next_t = self.t_max_x;
            self.cell.x += self.step_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.next_t = self.t_max_y;
            self.cell.y += self.step_y;
            self.t_max_y += self.t_delta_y;
        }
        if !self.next_t.is_finite() {
            return None;
        }
        Some((self.cell, self.next_t))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    cell: Cell,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost; break ties by cell index so pop order is stable.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Whether a step from `a` by `(dx, dy)` is admissible under `cost_mul`:
/// the destination must be traversable, and a diagonal additionally needs
/// both orthogonal corner cells open (no corner cutting — continuous motion
/// crosses one of them).
pub fn step_admissible<F>(dims: &Dims, cost_mul: &F, a: Cell, dx: i32, dy: i32) -> Option<f64>
where
    F: Fn(Cell) -> Option<f64>,
{
    let n = Cell::new(a.x + dx, a.y + dy);
    if !dims.contains(n) {
        return None;
    }
    let mul = cost_mul(n)?;
    if dx != 0 && dy != 0 {
        cost_mul(Cell::new(a.x + dx, a.y))?;
        cost_mul(Cell::new(a.x, a.y + dy))?;
    }
    Some(mul)
}

/// Single-source shortest path over the 8-connected grid, diagonal steps at
/// sqrt(2) times the axis cost and no corner cutting. `cost_mul` returns the
/// per-cell traversal multiplier or `None` for blocked cells; an edge costs
/// `step * resolution * max(mul(a), mul(b))`.
///
/// Returns a dense distance field in meters (`f64::INFINITY` = unreachable).
pub fn dijkstra_field<F>(dims: &Dims, source: Cell, cost_mul: F) -> Vec<f64>
where
    F: Fn(Cell) -> Option<f64>,
{
    let mut dist = vec![f64::INFINITY; dims.cell_count()];
    if !dims.contains(source) || cost_mul(source).is_none() {
        return dist;
    }
    dist[dims.idx(source)] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        cost: 0.0,
        cell: source,
    });
    while let Some(HeapEntry { cost, cell }) = heap.pop() {
        if cost > dist[dims.idx(cell)] + 1e-12 {
            continue;
        }
        let mul_here = match cost_mul(cell) {
            Some(m) => m,
            None => continue,
        };
        for (dx, dy, step) in NEIGHBORS8 {
            let mul_there = match step_admissible(dims, &cost_mul, cell, dx, dy) {
                Some(m) => m,
                None => continue,
            };
            let n = Cell::new(cell.x + dx, cell.y + dy);
            let edge = step * dims.resolution * mul_here.max(mul_there);
            let cand = cost + edge;
            let idx = dims.idx(n);
            if cand + 1e-12 < dist[idx] {
                dist[idx] = cand;
                heap.push(HeapEntry { cost: cand, cell: n });
            }
        }
    }
    dist
}

/// Connected components over an arbitrary cell predicate using 8-adjacency.
/// Returns (labels, component_count); label is `usize::MAX` outside the mask.
pub fn components8<F>(dims: &Dims, in_mask: F) -> (Vec<usize>, usize)
where
    F: Fn(Cell) -> bool,
{
    let mut labels = vec![usize::MAX; dims.cell_count()];
    let mut next = 0usize;
    let mut stack = Vec::new();
    for cell in dims.iter_cells() {
        if !in_mask(cell) || labels[dims.idx(cell)] != usize::MAX {
            continue;
        }
        labels[dims.idx(cell)] = next;
        stack.push(cell);
        while let Some(c) = stack.pop() {
            for (dx, dy, _) in NEIGHBORS8 {
                let n = Cell::new(c.x + dx, c.y + dy);
                if dims.contains(n) && in_mask(n) && labels[dims.idx(n)] == usize::MAX {
                    labels[dims.idx(n)] = next;
                    stack.push(n);
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

/// Deterministic 64-bit FNV-1a hash, used wherever a stable content hash is
/// needed across runs (goal identity, cache keys, per-node noise seeds).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
