//! Incremental map layers built from observations: the tri-state occupancy
//! grid, the goal-conditioned value map, and the goal-agnostic object map.
//!
//! Occupancy relabeling uses per-cell free/occupied evidence counters with a
//! majority vote; ties keep the previous label. Value fusion is the
//! confidence-weighted average with confidence accumulation
//! `c' = (c1^2 + c2^2) / (c1 + c2)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityTable;
use crate::grid::{normalize_signed, Cell, Dims, Point, RayWalk};
use crate::sim::{Observation, Pose, WorldMap};
use crate::ssmg::GoalSpec;

/// Max views retained per object record.
pub const VIEW_CAPACITY: usize = 3;
/// Bounding-box overlap needed to fuse a detection into an existing record.
pub const FUSE_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Occupancy grid as sensed: every cell starts Unknown and transitions by
/// ray evidence only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub dims: Dims,
    pub cells: Vec<CellState>,
    free_evidence: Vec<u32>,
    occ_evidence: Vec<u32>,
    /// Cells proven occupied by physical contact; ray evidence cannot
    /// overturn them (the world is static).
    contact: Vec<bool>,
    /// Bumped on every update that changes at least one label.
    pub revision: u64,
}

impl OccupancyGrid {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            cells: vec![CellState::Unknown; dims.cell_count()],
            free_evidence: vec![0; dims.cell_count()],
            occ_evidence: vec![0; dims.cell_count()],
            contact: vec![false; dims.cell_count()],
            revision: 0,
        }
    }

    /// Grid with the given labels and consistent evidence counters. Used by
    /// tests and the render path where the label field is already known.
    pub fn from_labels(dims: Dims, cells: Vec<CellState>) -> Self {
        assert_eq!(cells.len(), dims.cell_count());
        let free_evidence = cells
            .iter()
            .map(|s| u32::from(*s == CellState::Free))
            .collect();
        let occ_evidence = cells
            .iter()
            .map(|s| u32::from(*s == CellState::Occupied))
            .collect();
        Self {
            dims,
            cells,
            free_evidence,
            occ_evidence,
            contact: vec![false; dims.cell_count()],
            revision: 0,
        }
    }

    pub fn state(&self, c: Cell) -> CellState {
        if self.dims.contains(c) {
            self.cells[self.dims.idx(c)]
        } else {
            CellState::Unknown
        }
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.state(c) == CellState::Free
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.state(c) == CellState::Occupied
    }

    pub fn is_unknown(&self, c: Cell) -> bool {
        self.state(c) == CellState::Unknown
    }

    pub fn known_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|&&s| s != CellState::Unknown)
            .count()
    }

    fn add_free(&mut self, c: Cell) -> bool {
        let idx = self.dims.idx(c);
        self.free_evidence[idx] += 1;
        self.relabel(idx)
    }

    fn add_occupied(&mut self, c: Cell) -> bool {
        let idx = self.dims.idx(c);
        self.occ_evidence[idx] += 1;
        self.relabel(idx)
    }

    /// Physical-contact occupancy evidence from a blocked forward move. The
    /// cell is pinned occupied; ray evidence cannot overturn contact.
    pub fn add_collision_evidence(&mut self, c: Cell) {
        if !self.dims.contains(c) {
            return;
        }
        let idx = self.dims.idx(c);
        self.contact[idx] = true;
        if self.relabel(idx) {
            self.revision += 1;
        }
    }

    fn relabel(&mut self, idx: usize) -> bool {
        let (f, o) = (self.free_evidence[idx], self.occ_evidence[idx]);
        let new = if self.contact[idx] {
            CellState::Occupied
        } else {
            match f.cmp(&o) {
                std::cmp::Ordering::Greater => CellState::Free,
                std::cmp::Ordering::Less => CellState::Occupied,
                std::cmp::Ordering::Equal => self.cells[idx], // tie keeps previous
            }
        };
        let changed = new != self.cells[idx];
        self.cells[idx] = new;
        changed
    }
}

/// Fold one scan into the grid. Cells along a hitting ray before the hit gain
/// free evidence and the hit cell gains occupied evidence; non-hitting rays
/// free cells out to max range, stopping at the first cell currently labeled
/// Occupied (a miss cannot vouch for space behind a known wall).
pub fn update_occupancy(grid: &mut OccupancyGrid, obs: &Observation) {
    let origin = obs.pose.point();
    let mut changed = false;
    for ray in &obs.scan.rays {
        let angle = obs.pose.heading + ray.angle;
        for (cell, t) in RayWalk::new(origin, angle, grid.dims.resolution) {
            if !grid.dims.contains(cell) {
                break;
            }
            if ray.hit {
                if t >= ray.range - 1e-9 {
                    changed |= grid.add_occupied(cell);
                    break;
                }
                changed |= grid.add_free(cell);
            } else {
                if t >= ray.range - 1e-9 {
                    break;
                }
                if t > 0.0 && grid.is_occupied(cell) {
                    break;
                }
                changed |= grid.add_free(cell);
            }
        }
    }
    if changed {
        grid.revision += 1;
    }
}

// ---------------------------------------------------------------------------
// Value map
// ---------------------------------------------------------------------------

/// Per-cell goal relevance with confidence. Rebuilt for every subtask; the
/// long-lived memory lives in the object map and the skeleton graph instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMap {
    pub dims: Dims,
    pub value: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl ValueMap {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            value: vec![0.0; dims.cell_count()],
            confidence: vec![0.0; dims.cell_count()],
        }
    }

    pub fn at(&self, c: Cell) -> (f64, f64) {
        if self.dims.contains(c) {
            let i = self.dims.idx(c);
            (self.value[i], self.confidence[i])
        } else {
            (0.0, 0.0)
        }
    }
}

/// Angular confidence weight: 1 on the optical axis, 0 at the fov edge.
fn angular_weight(bearing: f64, fov: f64) -> f64 {
    let half = fov / 2.0;
    if bearing.abs() > half {
        return 0.0;
    }
    let t = bearing / half * std::f64::consts::FRAC_PI_2;
    t.cos().powi(2)
}

/// Project a relevance score onto the cells the scan actually covered,
/// weighting confidence by bearing and fusing with the stored layer.
pub fn update_value_map(vmap: &mut ValueMap, obs: &Observation, score: f64) {
    debug_assert!((0.0..=1.0).contains(&score));
    let origin = obs.pose.point();
    let mut wedge: BTreeSet<Cell> = BTreeSet::new();
    for ray in &obs.scan.rays {
        let angle = obs.pose.heading + ray.angle;
        for (cell, t) in RayWalk::new(origin, angle, vmap.dims.resolution) {
            if t >= ray.range - 1e-9 || !vmap.dims.contains(cell) {
                break;
            }
            wedge.insert(cell);
        }
    }
    for cell in wedge {
        let center = vmap.dims.center_of(cell);
        let bearing = if cell == vmap.dims.cell_of(origin) {
            0.0
        } else {
            normalize_signed((center.y - origin.y).atan2(center.x - origin.x) - obs.pose.heading)
        };
        let w = angular_weight(bearing, obs.scan.fov);
        if w <= 0.0 {
            continue;
        }
        let i = vmap.dims.idx(cell);
        let (c1, v1) = (vmap.confidence[i], vmap.value[i]);
        let (c2, v2) = (w, score);
        vmap.value[i] = (c1 * v1 + c2 * v2) / (c1 + c2);
        vmap.confidence[i] = (c1 * c1 + c2 * c2) / (c1 + c2);
    }
}

// ---------------------------------------------------------------------------
// Relevance providers
// ---------------------------------------------------------------------------

/// Scores how strongly the current observation hints at the goal; the
/// deterministic stand-in for text-image matching on the RGB frame.
pub trait RelevanceProvider {
    fn relevance(&self, obs: &Observation, goal: &GoalSpec) -> f64;
}

/// Table-driven relevance: max over visible detections of category affinity
/// blended with room affinity.
pub struct CooccurrenceRelevance {
    table: &'static AffinityTable,
    /// instance id -> room label (detector-side scene knowledge).
    rooms: BTreeMap<String, String>,
    /// instance id -> category, for resolving image goals.
    categories: BTreeMap<String, String>,
}

impl CooccurrenceRelevance {
    pub fn new(world: &WorldMap) -> Self {
        Self::with_table(world, AffinityTable::builtin())
    }

    pub fn with_table(world: &WorldMap, table: &'static AffinityTable) -> Self {
        let mut rooms = BTreeMap::new();
        let mut categories = BTreeMap::new();
        for o in &world.objects {
            rooms.insert(o.instance_id.clone(), o.room_label.clone());
            categories.insert(o.instance_id.clone(), o.category.clone());
        }
        Self {
            table,
            rooms,
            categories,
        }
    }

    /// Reduce a goal to the category key used for table lookups.
    pub fn goal_key(&self, goal: &GoalSpec) -> Option<String> {
        match goal {
            GoalSpec::Category(c) => Some(c.clone()),
            GoalSpec::Description(tokens) => tokens
                .iter()
                .find(|t| self.table.knows_category(t))
                .cloned(),
            GoalSpec::ImageRef(id) => self.categories.get(id).cloned(),
        }
    }
}

impl RelevanceProvider for CooccurrenceRelevance {
    fn relevance(&self, obs: &Observation, goal: &GoalSpec) -> f64 {
        let key = match self.goal_key(goal) {
            Some(k) => k,
            None => return self.table.floor,
        };
        let mut best = self.table.floor;
        for det in &obs.detections {
            let room = self.rooms.get(&det.instance_id).map(|s| s.as_str());
            let s = self.table.blended(&det.category, room, &key);
            if s > best {
                best = s;
            }
        }
        best
    }
}

/// Flat relevance; used when the configured belief provider has no meaningful
/// notion of per-frame relevance.
pub struct UniformRelevance(pub f64);

impl RelevanceProvider for UniformRelevance {
    fn relevance(&self, _obs: &Observation, _goal: &GoalSpec) -> f64 {
        self.0.clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// Object map
// ---------------------------------------------------------------------------

/// One retained viewpoint of an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub pose: Pose,
    pub caption: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub instance_id: String,
    pub category: String,
    pub footprint: BTreeSet<Cell>,
    pub centroid: Point,
    /// At most [`VIEW_CAPACITY`] views, sorted by descending score;
    /// `views[0]` is the best view.
    pub views: Vec<View>,
}

impl ObjectRecord {
    pub fn best_view(&self) -> &View {
        &self.views[0]
    }

    /// Token bag for description matching: caption tokens plus the category.
    pub fn tokens(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> = BTreeSet::new();
        set.insert(self.category.clone());
        for v in &self.views {
            for tok in v.caption.split_whitespace() {
                set.insert(tok.to_string());
            }
        }
        set
    }

    fn bbox(&self) -> (i32, i32, i32, i32) {
        let min_x = self.footprint.iter().map(|c| c.x).min().unwrap();
        let min_y = self.footprint.iter().map(|c| c.y).min().unwrap();
        let max_x = self.footprint.iter().map(|c| c.x).max().unwrap();
        let max_y = self.footprint.iter().map(|c| c.y).max().unwrap();
        (min_x, min_y, max_x, max_y)
    }
}

fn bbox_iou(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
    let ix = (a.2.min(b.2) - a.0.max(b.0) + 1).max(0) as f64;
    let iy = (a.3.min(b.3) - a.1.max(b.1) + 1).max(0) as f64;
    let inter = ix * iy;
    let area_a = ((a.2 - a.0 + 1) * (a.3 - a.1 + 1)) as f64;
    let area_b = ((b.2 - b.0 + 1) * (b.3 - b.1 + 1)) as f64;
    inter / (area_a + area_b - inter)
}

/// Goal-agnostic object memory keyed by instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMap {
    pub records: BTreeMap<String, ObjectRecord>,
    /// Meters per footprint cell; matches the occupancy frame.
    pub resolution: f64,
    /// Bumped whenever a record is added or a view changes.
    pub revision: u64,
}

impl ObjectMap {
    pub fn new(resolution: f64) -> Self {
        Self {
            records: BTreeMap::new(),
            resolution,
            revision: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Supplies the caption for an observed instance; the stand-in for image
/// captioning on the cropped view.
pub trait CaptionProvider {
    fn caption(&self, instance_id: &str) -> String;
}

/// Captions straight from scenario ground truth.
pub struct ScenarioCaptions {
    captions: BTreeMap<String, String>,
}

impl ScenarioCaptions {
    pub fn new(world: &WorldMap) -> Self {
        let captions = world
            .objects
            .iter()
            .map(|o| (o.instance_id.clone(), o.caption_tokens.join(" ")))
            .collect();
        Self { captions }
    }
}

impl CaptionProvider for ScenarioCaptions {
    fn caption(&self, instance_id: &str) -> String {
        self.captions
            .get(instance_id)
            .cloned()
            .unwrap_or_else(|| "object".to_string())
    }
}

/// Fuse the observation's detections into the object map. A detection joins
/// an existing record iff the categories match and footprint bounding boxes
/// overlap (IoU >= 0.3); otherwise it opens a new record. On fusion the new
/// view is inserted and the lowest-score view evicted past capacity.
pub fn update_object_map(omap: &mut ObjectMap, obs: &Observation, captions: &dyn CaptionProvider) {
    let mut changed = false;
    for det in &obs.detections {
        let angle = obs.pose.heading + det.bearing;
        let pos = Point::new(
            obs.pose.x + det.range * angle.cos(),
            obs.pose.y + det.range * angle.sin(),
        );
        let caption = captions.caption(&det.instance_id);
        changed |= fuse_detection(
            omap,
            det.instance_id.clone(),
            det.category.clone(),
            pos,
            obs.pose,
            caption,
            det.score,
        );
    }
    if changed {
        omap.revision += 1;
    }
}

fn fuse_detection(
    omap: &mut ObjectMap,
    instance_id: String,
    category: String,
    pos: Point,
    pose: Pose,
    caption: String,
    score: f64,
) -> bool {
    let resolution = omap.resolution;
    let cell = Cell::new(
        (pos.x / resolution).floor() as i32,
        (pos.y / resolution).floor() as i32,
    );
    let bbox = (cell.x, cell.y, cell.x, cell.y);
    let target = omap
        .records
        .values()
        .filter(|r| r.category == category && bbox_iou(r.bbox(), bbox) >= FUSE_IOU)
        .map(|r| r.instance_id.clone())
        .next()
        // An instance the tracker already knows never re-keys, even if its
        // recovered footprint drifted past the overlap gate.
        .or_else(|| omap.records.contains_key(&instance_id).then(|| instance_id.clone()));
    match target {
        Some(id) => {
            let rec = omap.records.get_mut(&id).unwrap();
            rec.footprint.insert(cell);
            let view = View {
                pose,
                caption,
                score,
            };
            if rec.views.contains(&view) {
                return false;
            }
            rec.views.push(view);
            rec.views
                .sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
            rec.views.truncate(VIEW_CAPACITY);
            true
        }
        None => {
            let rec = ObjectRecord {
                instance_id: instance_id.clone(),
                category,
                footprint: [cell].into_iter().collect(),
                centroid: pos,
                views: vec![View {
                    pose,
                    caption,
                    score,
                }],
            };
            omap.records.insert(instance_id, rec);
            true
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{
        apply_action, observe, Action, GtCell, SensorConfig,
    };

    fn empty_world(w: i32, h: i32) -> WorldMap {
        WorldMap {
            dims: Dims::new(w, h, 0.25),
            cells: vec![GtCell::FreeGt; (w * h) as usize],
            objects: Vec::new(),
        }
    }

    fn wall_column(mut world: WorldMap, x: i32) -> WorldMap {
        for y in 0..world.dims.height {
            let idx = world.dims.idx(Cell::new(x, y));
            world.cells[idx] = GtCell::OccupiedGt;
        }
        world
    }

    #[test]
    fn first_scan_makes_a_free_wedge() {
        let world = empty_world(60, 60);
        let pose = Pose::new(7.5, 7.5, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        let mut grid = OccupancyGrid::new(world.dims);
        update_occupancy(&mut grid, &obs);
        let mut free = 0;
        for c in world.dims.iter_cells() {
            match grid.state(c) {
                CellState::Free => {
                    free += 1;
                    let center = world.dims.center_of(c);
                    let bearing =
                        normalize_signed((center.y - pose.y).atan2(center.x - pose.x) - pose.heading);
                    let dist = center.dist(pose.point());
                    if dist > 0.3 {
                        assert!(
                            bearing.abs() <= DEFAULT_FOV_TEST / 2.0 + 0.15,
                            "free cell outside the wedge at bearing {bearing}"
                        );
                    }
                }
                CellState::Occupied => panic!("nothing to hit in an empty world"),
                CellState::Unknown => {}
            }
        }
        assert!(free > 50, "wedge should cover a meaningful area, got {free}");
    }

    const DEFAULT_FOV_TEST: f64 = crate::sim::DEFAULT_FOV_RAD;

    #[test]
    fn wall_scan_marks_hits_occupied_and_nearer_free() {
        let world = wall_column(empty_world(60, 20), 20); // wall at x = 5.0 m
        let pose = Pose::new(3.0, 2.5, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        let mut grid = OccupancyGrid::new(world.dims);
        update_occupancy(&mut grid, &obs);
        // Cells straight ahead before the wall are free; the wall cell on the
        // optical axis is occupied.
        let wall_cell = Cell::new(20, world.dims.cell_of(pose.point()).y);
        assert_eq!(grid.state(wall_cell), CellState::Occupied);
        for x in 13..20 {
            let c = Cell::new(x, wall_cell.y);
            assert_eq!(grid.state(c), CellState::Free, "cell {c:?}");
        }
    }

    #[test]
    fn repeated_scans_are_idempotent_on_labels() {
        let world = wall_column(empty_world(40, 20), 30);
        let pose = Pose::new(3.0, 2.0, 0.2);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        let mut grid = OccupancyGrid::new(world.dims);
        update_occupancy(&mut grid, &obs);
        let labels_once = grid.cells.clone();
        update_occupancy(&mut grid, &obs);
        update_occupancy(&mut grid, &obs);
        assert_eq!(grid.cells, labels_once);
    }

    #[test]
    fn known_count_is_monotone_over_a_walk() {
        let world = wall_column(empty_world(40, 20), 30);
        let sensor = SensorConfig::default();
        let mut grid = OccupancyGrid::new(world.dims);
        let mut pose = Pose::new(1.0, 2.0, 0.0);
        let mut last = 0usize;
        for step in 0..30 {
            let obs = observe(&world, pose, &sensor, step);
            update_occupancy(&mut grid, &obs);
            let now = grid.known_count();
            assert!(now >= last);
            last = now;
            let act = if step % 5 == 4 {
                Action::TurnLeft
            } else {
                Action::Forward
            };
            pose = apply_action(&world, pose, act).pose;
        }
        assert!(last > 0);
    }

    #[test]
    fn value_axis_cell_takes_score_with_full_confidence() {
        let world = empty_world(40, 40);
        // Pose on a cell center so downrange cell centers sit exactly on the
        // optical axis.
        let pose = Pose::new(2.125, 5.125, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        let mut vmap = ValueMap::new(world.dims);
        update_value_map(&mut vmap, &obs, 0.8);
        let c = world.dims.cell_of(Point::new(4.125, 5.125));
        let (v, conf) = vmap.at(c);
        assert!((v - 0.8).abs() < 1e-9);
        assert!((conf - 1.0).abs() < 1e-9, "axis confidence 1, got {conf}");
    }

    #[test]
    fn value_fuses_equal_confidence_scores_to_mean() {
        let world = empty_world(40, 40);
        let pose = Pose::new(2.125, 5.125, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        let mut vmap = ValueMap::new(world.dims);
        update_value_map(&mut vmap, &obs, 0.2);
        update_value_map(&mut vmap, &obs, 0.8);
        let c = world.dims.cell_of(Point::new(4.125, 5.125));
        let (v, _) = vmap.at(c);
        assert!((v - 0.5).abs() < 1e-9, "fused value {v}");
    }

    #[test]
    fn fov_edge_weight_is_zero() {
        assert!(angular_weight(DEFAULT_FOV_TEST / 2.0, DEFAULT_FOV_TEST) < 1e-12);
        assert!((angular_weight(0.0, DEFAULT_FOV_TEST) - 1.0).abs() < 1e-12);
    }

    fn detection(id: &str, cat: &str, score: f64) -> Detection {
        Detection {
            instance_id: id.into(),
            category: cat.into(),
            score,
            bearing: 0.0,
            range: 2.0,
        }
    }

    use crate::sim::Detection;

    struct FixedCaptions;
    impl CaptionProvider for FixedCaptions {
        fn caption(&self, _id: &str) -> String {
            "white towel bathroom".into()
        }
    }

    fn obs_with_detections(pose: Pose, detections: Vec<Detection>) -> Observation {
        Observation {
            pose,
            scan: crate::sim::DepthScan {
                rays: vec![
                    crate::sim::Ray { angle: -0.1, range: 5.0, hit: false },
                    crate::sim::Ray { angle: 0.1, range: 5.0, hit: false },
                ],
                fov: 0.2,
                max_range: 5.0,
            },
            detections,
            step_index: 0,
        }
    }

    #[test]
    fn object_views_keep_top_three_scores() {
        let mut omap = ObjectMap::new(0.25);
        // Five sightings of the same object from the same spot with varying
        // detector confidence.
        for s in [0.3, 0.5, 0.4, 0.9, 0.2] {
            let pose = Pose::new(1.0, 1.0, 0.0);
            let obs = obs_with_detections(pose, vec![detection("towel_1", "towel", s)]);
            update_object_map(&mut omap, &obs, &FixedCaptions);
        }
        assert_eq!(omap.len(), 1);
        let rec = &omap.records["towel_1"];
        let scores: Vec<f64> = rec.views.iter().map(|v| v.score).collect();
        assert_eq!(scores, vec![0.9, 0.5, 0.4]);
        assert_eq!(rec.best_view().score, 0.9);
    }

    #[test]
    fn distant_same_category_objects_stay_separate() {
        let mut omap = ObjectMap::new(0.25);
        let obs1 = obs_with_detections(
            Pose::new(1.0, 1.0, 0.0),
            vec![detection("chair_a", "chair", 0.5)],
        );
        let obs2 = obs_with_detections(
            Pose::new(1.0, 6.0, 0.0),
            vec![detection("chair_b", "chair", 0.5)],
        );
        update_object_map(&mut omap, &obs1, &FixedCaptions);
        update_object_map(&mut omap, &obs2, &FixedCaptions);
        assert_eq!(omap.len(), 2);
    }

    #[test]
    fn identical_reobservation_adds_nothing() {
        let mut omap = ObjectMap::new(0.25);
        let obs = obs_with_detections(
            Pose::new(1.0, 1.0, 0.0),
            vec![detection("towel_1", "towel", 0.5)],
        );
        update_object_map(&mut omap, &obs, &FixedCaptions);
        let rev = omap.revision;
        let snapshot = omap.clone();
        update_object_map(&mut omap, &obs, &FixedCaptions);
        assert_eq!(omap.records, snapshot.records);
        assert_eq!(omap.revision, rev);
    }

    #[test]
    fn relevance_reads_the_shipped_table() {
        let mut world = empty_world(40, 40);
        world.objects.push(crate::sim::GroundTruthObject {
            instance_id: "shower_0".into(),
            category: "shower".into(),
            centroid: Point::new(3.0, 5.0),
            footprint: [Cell::new(12, 20)].into_iter().collect(),
            caption_tokens: vec!["white".into(), "shower".into(), "bathroom".into()],
            room_label: "bathroom".into(),
        });
        let provider = CooccurrenceRelevance::new(&world);
        let goal = GoalSpec::Category("towel".into());
        let obs = obs_with_detections(
            Pose::new(1.0, 5.0, 0.0),
            vec![detection("shower_0", "shower", 0.6)],
        );
        let r = provider.relevance(&obs, &goal);
        assert!((r - 0.9).abs() < 1e-12, "towel vs shower => 0.9, got {r}");

        let empty = obs_with_detections(Pose::new(1.0, 5.0, 0.0), vec![]);
        assert!((provider.relevance(&empty, &goal) - 0.1).abs() < 1e-12);

        let self_obs = obs_with_detections(
            Pose::new(1.0, 5.0, 0.0),
            vec![detection("towel_9", "towel", 0.6)],
        );
        assert!((provider.relevance(&self_obs, &goal) - 1.0).abs() < 1e-12);
    }
}
