//! Deterministic 2D grid-world: agent kinematics, raycast depth sensing, and
//! ground-truth object placement.
//!
//! Everything here is a pure function of `(world, pose, action)`; the module
//! holds no mutable state, so distinct episode contexts can run concurrently.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::grid::{normalize_angle, normalize_signed, Cell, Dims, Point, RayWalk};

/// Forward step length in meters.
pub const FORWARD_STEP_M: f64 = 0.25;
/// Rotation per turn action in radians (30 degrees).
pub const TURN_STEP_RAD: f64 = std::f64::consts::PI / 6.0;
/// Depth-camera validity window, meters.
pub const MIN_SENSE_RANGE_M: f64 = 0.5;
pub const MAX_SENSE_RANGE_M: f64 = 5.0;
/// Horizontal field of view, radians (79 degrees).
pub const DEFAULT_FOV_RAD: f64 = 79.0 * std::f64::consts::PI / 180.0;
/// Success / arrival radius, meters.
pub const SUCCESS_RADIUS_M: f64 = 0.5;

/// Ground-truth cell state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GtCell {
    FreeGt,
    OccupiedGt,
}

/// A placed object with its semantic payload. Captions are the bag of
/// descriptive tokens that description-modality goals match against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub instance_id: String,
    pub category: String,
    pub centroid: Point,
    pub footprint: BTreeSet<Cell>,
    pub caption_tokens: Vec<String>,
    pub room_label: String,
}

/// Static ground-truth world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub dims: Dims,
    pub cells: Vec<GtCell>,
    pub objects: Vec<GroundTruthObject>,
}

impl WorldMap {
    pub fn cell(&self, c: Cell) -> Option<GtCell> {
        if self.dims.contains(c) {
            Some(self.cells[self.dims.idx(c)])
        } else {
            None
        }
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.cell(c) == Some(GtCell::FreeGt)
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.cell(c) == Some(GtCell::OccupiedGt)
    }

    pub fn object(&self, instance_id: &str) -> Option<&GroundTruthObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }
}

/// Agent pose: position in meters, heading in `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// One depth ray: angular offset from the heading, measured range, and
/// whether anything was hit inside the validity window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub angle: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub rays: Vec<Ray>,
    pub fov: f64,
    pub max_range: f64,
}

/// Detector surrogate output: what the paper's detection stack would extract
/// from the RGB frame, minus the pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub instance_id: String,
    pub category: String,
    pub score: f64,
    pub bearing: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub scan: DepthScan,
    pub detections: Vec<Detection>,
    pub step_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

/// Sensor configuration. Defaults follow the fixed agent geometry: 79-degree
/// fov, 0.5-5.0 m validity window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub fov: f64,
    pub n_rays: usize,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            fov: DEFAULT_FOV_RAD,
            n_rays: 96,
            max_range: MAX_SENSE_RANGE_M,
            min_range: MIN_SENSE_RANGE_M,
        }
    }
}

/// Result of applying one action: the new pose and whether a forward move was
/// blocked. Collisions are outcomes, not errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub pose: Pose,
    pub collided: bool,
}

/// Apply one action to the pose. Forward advances 0.25 m along the heading
/// unless any cell crossed by the motion segment is occupied or out of
/// bounds; turns rotate exactly 30 degrees; Stop leaves the pose unchanged.
pub fn apply_action(world: &WorldMap, pose: Pose, action: Action) -> StepResult {
    match action {
        Action::Stop => StepResult {
            pose,
            collided: false,
        },
        Action::TurnLeft => StepResult {
            pose: Pose::new(pose.x, pose.y, pose.heading + TURN_STEP_RAD),
            collided: false,
        },
        Action::TurnRight => StepResult {
            pose: Pose::new(pose.x, pose.y, pose.heading - TURN_STEP_RAD),
            collided: false,
        },
        Action::Forward => {
            let nx = pose.x + FORWARD_STEP_M * pose.heading.cos();
            let ny = pose.y + FORWARD_STEP_M * pose.heading.sin();
            if forward_blocked(world, pose, FORWARD_STEP_M) {
                StepResult {
                    pose,
                    collided: true,
                }
            } else {
                StepResult {
                    pose: Pose::new(nx, ny, pose.heading),
                    collided: false,
                }
            }
        }
    }
}

/// The cell the agent would enter first if it moved forward, when that cell
/// differs from the current one. Used for collision evidence.
pub fn forward_cell(world: &WorldMap, pose: Pose) -> Option<Cell> {
    let here = world.dims.cell_of(pose.point());
    RayWalk::new(pose.point(), pose.heading, world.dims.resolution)
        .take_while(|&(_, t)| t <= FORWARD_STEP_M + 1e-9)
        .map(|(c, _)| c)
        .find(|&c| c != here)
}

fn forward_blocked(world: &WorldMap, pose: Pose, dist: f64) -> bool {
    for (cell, t) in RayWalk::new(pose.point(), pose.heading, world.dims.resolution) {
        if t > dist + 1e-9 {
            break;
        }
        match world.cell(cell) {
            Some(GtCell::FreeGt) => {}
            _ => return true,
        }
    }
    false
}

/// Cast `n_rays` depth rays across `fov`. Each ray reports the first occupied
/// cell boundary intersection; hits nearer than the minimum sensing range are
/// reported as misses, and misses carry `range = max_range`.
pub fn raycast_scan(world: &WorldMap, pose: Pose, sensor: &SensorConfig) -> DepthScan {
    assert!(sensor.n_rays >= 2, "need at least 2 rays");
    assert!(
        sensor.fov > 0.0 && sensor.fov <= std::f64::consts::TAU,
        "fov out of range"
    );
    assert!(sensor.max_range >= world.dims.resolution);
    let mut rays = Vec::with_capacity(sensor.n_rays);
    for i in 0..sensor.n_rays {
        let offset = -sensor.fov / 2.0 + sensor.fov * (i as f64) / ((sensor.n_rays - 1) as f64);
        let (range, hit) = cast_single(world, pose, pose.heading + offset, sensor);
        rays.push(Ray {
            angle: offset,
            range,
            hit,
        });
    }
    DepthScan {
        rays,
        fov: sensor.fov,
        max_range: sensor.max_range,
    }
}

fn cast_single(world: &WorldMap, pose: Pose, angle: f64, sensor: &SensorConfig) -> (f64, bool) {
    for (cell, t) in RayWalk::new(pose.point(), angle, world.dims.resolution) {
        if t > sensor.max_range {
            break;
        }
        if !world.dims.contains(cell) {
            break;
        }
        if world.is_occupied(cell) && t > 0.0 {
            if t < sensor.min_range {
                return (sensor.max_range, false);
            }
            return (t, true);
        }
    }
    (sensor.max_range, false)
}

/// Objects visible from the pose: centroid inside the fov and validity
/// window, not occluded by occupied cells outside the object's own footprint.
/// Score is `clamp(1 - range / max_range, 0.05, 1.0)`.
pub fn detect_visible(world: &WorldMap, pose: Pose, sensor: &SensorConfig) -> Vec<Detection> {
    let mut out = Vec::new();
    for obj in &world.objects {
        let dx = obj.centroid.x - pose.x;
        let dy = obj.centroid.y - pose.y;
        let range = (dx * dx + dy * dy).sqrt();
        if range < sensor.min_range || range > sensor.max_range {
            continue;
        }
        let bearing = normalize_signed(dy.atan2(dx) - pose.heading);
        if bearing.abs() > sensor.fov / 2.0 {
            continue;
        }
        if occluded(world, pose.point(), obj, range) {
            continue;
        }
        let score = (1.0 - range / sensor.max_range).clamp(0.05, 1.0);
        out.push(Detection {
            instance_id: obj.instance_id.clone(),
            category: obj.category.clone(),
            score,
            bearing,
            range,
        });
    }
    out
}

fn occluded(world: &WorldMap, from: Point, obj: &GroundTruthObject, range: f64) -> bool {
    let angle = (obj.centroid.y - from.y).atan2(obj.centroid.x - from.x);
    for (cell, t) in RayWalk::new(from, angle, world.dims.resolution) {
        if t >= range {
            break;
        }
        if world.is_occupied(cell) && !obj.footprint.contains(&cell) {
            return true;
        }
    }
    false
}

/// Full observation at a pose: scan plus detections.
pub fn observe(world: &WorldMap, pose: Pose, sensor: &SensorConfig, step_index: u32) -> Observation {
    Observation {
        pose,
        scan: raycast_scan(world, pose, sensor),
        detections: detect_visible(world, pose, sensor),
        step_index,
    }
}

/// Ground-truth shortest path length between two poses over free cells,
/// 8-connected with sqrt(2)-cost diagonals. `None` means unreachable.
pub fn geodesic_distance(world: &WorldMap, a: Pose, b: Pose) -> Option<f64> {
    let ca = world.dims.cell_of(a.point());
    let cb = world.dims.cell_of(b.point());
    if !world.dims.contains(ca) || !world.dims.contains(cb) {
        return None;
    }
    if ca == cb {
        return Some(0.0);
    }
    let field = free_distance_field(world, ca);
    let d = field[world.dims.idx(cb)];
    if d.is_finite() {
        Some(d)
    } else {
        None
    }
}

/// Distance field over free cells from a source cell.
pub fn free_distance_field(world: &WorldMap, source: Cell) -> Vec<f64> {
    crate::grid::dijkstra_field(&world.dims, source, |c| {
        if world.is_free(c) {
            Some(1.0)
        } else {
            None
        }
    })
}

/// Geodesic distance from a pose to the nearest accessible cell of an object:
/// the footprint cell itself when free, otherwise any free cell 8-adjacent to
/// the footprint. `None` when no accessible cell is reachable.
pub fn geodesic_to_object(world: &WorldMap, from: Pose, obj: &GroundTruthObject) -> Option<f64> {
    let start = world.dims.cell_of(from.point());
    if !world.dims.contains(start) {
        return None;
    }
    let field = free_distance_field(world, start);
    let mut best = f64::INFINITY;
    for goal in accessible_cells(world, obj) {
        let d = field[world.dims.idx(goal)];
        if d < best {
            best = d;
        }
    }
    if best.is_finite() {
        Some(best)
    } else {
        None
    }
}

/// Free cells from which the object counts as reached.
pub fn accessible_cells(world: &WorldMap, obj: &GroundTruthObject) -> Vec<Cell> {
    let mut cells = BTreeSet::new();
    for &fc in &obj.footprint {
        if world.is_free(fc) {
            cells.insert(fc);
        }
        for (dx, dy, _) in crate::grid::NEIGHBORS8 {
            let n = Cell::new(fc.x + dx, fc.y + dy);
            if world.is_free(n) {
                cells.insert(n);
            }
        }
    }
    cells.into_iter().collect()
}
