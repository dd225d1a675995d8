//! Four-stage navigation policy: retrieval, revisiting, exploring, and
//! waypoint navigation.
//!
//! Transition table (events are evaluated in this order every step):
//!
//! | stage       | event                                | next                |
//! |-------------|--------------------------------------|---------------------|
//! | any         | goal candidate verified              | WaypointNav(target) |
//! | Retrieval   | memory candidate verified            | WaypointNav(target) |
//! | Retrieval   | no candidate, frontiers remain       | Exploring           |
//! | Retrieval   | no candidate, no frontiers           | Revisiting (or Done when revisiting is disabled or nothing is reachable) |
//! | Exploring   | frontier set empty                   | re-enter Retrieval  |
//! | Exploring   | frontier selected                    | stays, emits motion |
//! | Revisiting  | arrived at stop                      | spin (12 rotations) |
//! | Revisiting  | spin done at junction                | endpoint sub-visits |
//! | Revisiting  | tour exhausted                       | re-enter Retrieval  |
//! | WaypointNav | arrived, purpose = target            | Done (Stop emitted) |
//! | WaypointNav | arrived, purpose = revisit stop      | Revisiting          |
//! | WaypointNav | no path                              | blacklist target, return to recorded stage |
//!
//! Every step emits exactly one action; the step budget lives with the
//! caller and decrements per action, so no stage can loop for free.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefEngine, BeliefTable};
use crate::grid::{normalize_signed, Cell, Dims};
use crate::mapping::{ObjectMap, ObjectRecord, OccupancyGrid, ValueMap};
use crate::planner::{
    cluster_frontiers, frontier_beliefs, geodesic_matrix, greedy_order, lookahead,
    path_length_m, plan_astar_to_any, softmax_probs, two_opt, CostMode, PlanCandidate,
    PlanInstance, TwoOptConfig, FRONTIER_MIN_SIZE, LOOKAHEAD_M,
};
use crate::sim::{Action, Pose, SUCCESS_RADIUS_M};
use crate::skeleton::{extract_graph, thin, PixelKind};
use crate::ssmg::{
    attach_objects, augment_edges, match_identities, query_instances, GoalSpec, NodeId, Ssmg,
};

/// Verification belief needed to accept a retrieval candidate.
pub const VERIFY_THRESHOLD: f64 = 0.6;
/// Rotations in a full spin at 30 degrees per turn.
pub const SPIN_TURNS: u8 = 12;
/// Bearing error beyond which the controller turns instead of driving.
pub const BEARING_TOL_RAD: f64 = 15.0 * std::f64::consts::PI / 180.0;

/// Which map memory the agent runs on (the ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapMode {
    /// Full skeleton-graph memory.
    Ssmg,
    /// Value-map-only frontier chasing; no memory across subtasks.
    Value,
    /// Object map only; nearest-matching-object navigation, no skeleton.
    Semantic,
}

/// Visit-order strategy (the planner ablation axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    /// Nearest-first ordering, no local search.
    Greedy,
    /// Expected-cost 2-opt ordering, revisiting stage disabled.
    LhpNoRevisit,
    /// Expected-cost 2-opt ordering with revisiting.
    Lhp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavConfig {
    pub map_mode: MapMode,
    pub planner_mode: PlannerMode,
    pub tau: f64,
    pub verify_threshold: f64,
    pub arrival_radius_m: f64,
    pub bearing_tol_rad: f64,
    pub lookahead_m: f64,
    pub frontier_min_size: usize,
    pub two_opt: TwoOptConfig,
    pub count_first_leg: bool,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            map_mode: MapMode::Ssmg,
            planner_mode: PlannerMode::Lhp,
            tau: 1.0,
            verify_threshold: VERIFY_THRESHOLD,
            arrival_radius_m: SUCCESS_RADIUS_M,
            bearing_tol_rad: BEARING_TOL_RAD,
            lookahead_m: LOOKAHEAD_M,
            frontier_min_size: FRONTIER_MIN_SIZE,
            two_opt: TwoOptConfig::default(),
            count_first_leg: true,
        }
    }
}

/// The maps, memory graph, and belief engine one agent carries through an
/// episode.
pub struct NavContext {
    pub grid: OccupancyGrid,
    pub vmap: ValueMap,
    pub omap: ObjectMap,
    pub ssmg: Ssmg,
    pub engine: BeliefEngine,
    built_for: Option<(u64, u64)>,
    /// Monotone over the whole episode, even across map resets, so belief
    /// cache keys never collide between graph generations.
    revision_counter: u64,
}

impl NavContext {
    pub fn new(dims: Dims, engine: BeliefEngine) -> Self {
        Self {
            grid: OccupancyGrid::new(dims),
            vmap: ValueMap::new(dims),
            omap: ObjectMap::new(dims.resolution),
            ssmg: empty_ssmg(dims),
            engine,
            built_for: None,
            revision_counter: 0,
        }
    }

    /// Recompute the skeleton graph and reattach objects when the underlying
    /// maps changed since the last build. Node identities are carried over by
    /// nearest-cell matching; the graph revision bumps on every rebuild.
    pub fn ensure_ssmg(&mut self) {
        let key = (self.grid.revision, self.omap.revision);
        if self.built_for == Some(key) {
            return;
        }
        let prev = std::mem::replace(&mut self.ssmg, empty_ssmg(self.grid.dims));
        let mut rebuilt = match thin(&self.grid) {
            Ok(mask) => {
                let graph = extract_graph(&mask);
                let mut ssmg = attach_objects(&graph, &self.omap);
                augment_edges(&mut ssmg);
                ssmg
            }
            Err(_) => empty_ssmg(self.grid.dims),
        };
        match_identities(&mut rebuilt, &prev);
        self.revision_counter += 1;
        rebuilt.revision = self.revision_counter;
        self.ssmg = rebuilt;
        self.built_for = Some(key);
    }

    /// Wipe everything (value-map baseline between subtasks).
    pub fn reset_all(&mut self) {
        let dims = self.grid.dims;
        self.grid = OccupancyGrid::new(dims);
        self.vmap = ValueMap::new(dims);
        self.omap = ObjectMap::new(dims.resolution);
        self.ssmg = empty_ssmg(dims);
        self.built_for = None;
    }

    /// Keep the object map, wipe geometry (semantic-map baseline).
    pub fn reset_geometry(&mut self) {
        let dims = self.grid.dims;
        self.grid = OccupancyGrid::new(dims);
        self.vmap = ValueMap::new(dims);
        self.ssmg = empty_ssmg(dims);
        self.built_for = None;
    }

    /// New subtask on persistent memory: fresh value layer, beliefs cleared.
    pub fn reset_for_subtask(&mut self) {
        self.vmap = ValueMap::new(self.grid.dims);
        self.ssmg.clear_beliefs();
    }
}

fn empty_ssmg(dims: Dims) -> Ssmg {
    let graph = crate::skeleton::SkeletonGraph {
        dims,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    attach_objects(&graph, &ObjectMap::new(dims.resolution))
}

// ---------------------------------------------------------------------------
// Stage payloads
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RevisitState {
    /// Planned junction visitation order (node ids).
    pub tour: Vec<NodeId>,
    pub tour_idx: usize,
    /// Endpoint sub-visits queued for the junction just scanned.
    pending: VecDeque<NodeId>,
    /// Remaining rotations of the current spin; 0 when not spinning.
    pub spin_remaining: u8,
    /// The stop being scanned right now.
    current_stop: Option<NodeId>,
    visited: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Purpose {
    /// Navigate to the verified goal instance and stop there.
    Target { instance_id: String },
    /// Navigate to a revisit stop, then resume the spin tour.
    RevisitStop { node_id: NodeId, revisit: RevisitState },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointState {
    pub purpose: Purpose,
    pub mode: CostMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Retrieval,
    Revisiting(RevisitState),
    Exploring,
    WaypointNav(WaypointState),
    Done,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Retrieval => "retrieval",
            Stage::Revisiting(_) => "revisiting",
            Stage::Exploring => "exploring",
            Stage::WaypointNav(_) => "waypoint",
            Stage::Done => "done",
        }
    }
}

/// Per-subtask policy driver.
pub struct Policy {
    pub config: NavConfig,
    pub goal: GoalSpec,
    pub stage: Stage,
    /// The instance accepted by verification, if any.
    pub verified: Option<String>,
    blacklist_instances: BTreeSet<String>,
    blacklist_nodes: BTreeSet<NodeId>,
    blacklist_frontiers: BTreeSet<Cell>,
    /// Cached verification verdicts per (instance, graph revision).
    verdicts: BTreeMap<(String, u64), bool>,
    /// Verification provider failures treated as rejects.
    pub verify_failures: u64,
    /// Committed frontier target; kept until it stops being a frontier or
    /// becomes unreachable. Re-solving every step with a fresh target is
    /// unstable under the 30-degree turn quantization: near-tie tours flip
    /// the first stop and the controller limit-cycles in place.
    explore_target: Option<Cell>,
}

impl Policy {
    pub fn new(goal: GoalSpec, config: NavConfig) -> Self {
        Self {
            config,
            goal,
            stage: Stage::Retrieval,
            verified: None,
            blacklist_instances: BTreeSet::new(),
            blacklist_nodes: BTreeSet::new(),
            blacklist_frontiers: BTreeSet::new(),
            verdicts: BTreeMap::new(),
            verify_failures: 0,
            explore_target: None,
        }
    }

    /// One action per call. The caller folds the observation into the maps
    /// before stepping and applies the action afterwards.
    pub fn step(&mut self, ctx: &mut NavContext, pose: Pose) -> Action {
        if matches!(self.stage, Stage::Done) {
            return Action::Stop;
        }
        // Target acquisition runs in every stage: a verified match preempts
        // whatever the agent was doing (including mid-spin).
        if self.verified.is_none() && self.try_acquire_target(ctx) {
            // stage switched to WaypointNav(Target)
        }
        let mut hops = 0u8;
        loop {
            hops += 1;
            if hops > 8 {
                return Action::TurnLeft;
            }
            match std::mem::replace(&mut self.stage, Stage::Retrieval) {
                Stage::Done => {
                    self.stage = Stage::Done;
                    return Action::Stop;
                }
                Stage::Retrieval => {
                    self.enter_retrieval_tree(ctx, pose);
                    if matches!(self.stage, Stage::Retrieval) {
                        // Retrieval must always resolve to another stage.
                        self.stage = Stage::Done;
                        return Action::Stop;
                    }
                }
                Stage::Exploring => {
                    self.stage = Stage::Exploring;
                    match self.explore_step(ctx, pose) {
                        Some(action) => return action,
                        None => {
                            // Frontier set empty: back through the decision
                            // tree.
                            self.stage = Stage::Retrieval;
                        }
                    }
                }
                Stage::Revisiting(state) => {
                    // On None the handler either moved to WaypointNav (next
                    // stop) or left Retrieval in place (tour exhausted).
                    if let Some(action) = self.revisit_step(ctx, state) {
                        return action;
                    }
                }
                Stage::WaypointNav(state) => {
                    if let Some(action) = self.waypoint_step(ctx, pose, state) {
                        return action;
                    }
                }
            }
        }
    }

    // -- retrieval ---------------------------------------------------------

    fn enter_retrieval_tree(&mut self, ctx: &mut NavContext, pose: Pose) {
        // (a) Memory retrieval: verified candidate wins.
        if self.verified.is_none() {
            self.try_acquire_target(ctx);
            if matches!(self.stage, Stage::WaypointNav(_)) {
                return;
            }
        } else {
            let id = self.verified.clone().unwrap();
            self.stage = Stage::WaypointNav(WaypointState {
                purpose: Purpose::Target { instance_id: id },
                mode: CostMode::DiscountUnknown,
            });
            return;
        }
        // (b) Unexplored space remains (and is reachable): explore.
        let frontiers = self.usable_frontiers(ctx, pose);
        if !frontiers.is_empty() {
            self.stage = Stage::Exploring;
            return;
        }
        // (c) Exploration complete: revisit for missed detections, when the
        // configuration allows it.
        if self.config.map_mode == MapMode::Ssmg
            && self.config.planner_mode == PlannerMode::Lhp
        {
            if let Some(state) = self.plan_revisit_tour(ctx, pose) {
                self.stage = Stage::Revisiting(state);
                return;
            }
        }
        self.stage = Stage::Done;
    }

    /// Frontier points that are not blacklisted and that the agent can
    /// actually path to (phantom free space behind walls produces frontiers
    /// no plan can reach).
    fn usable_frontiers(&self, ctx: &NavContext, pose: Pose) -> Vec<Cell> {
        let points: Vec<Cell> = cluster_frontiers(&ctx.grid, self.config.frontier_min_size)
            .into_iter()
            .filter(|c| !self.blacklist_frontiers.contains(c))
            .collect();
        if points.is_empty() {
            return points;
        }
        let agent_cell = ctx.grid.dims.cell_of(pose.point());
        let field = crate::grid::dijkstra_field(&ctx.grid.dims, agent_cell, |c| {
            match ctx.grid.state(c) {
                crate::mapping::CellState::Free => Some(1.0),
                crate::mapping::CellState::Unknown => Some(crate::planner::UNKNOWN_COST_MULT),
                crate::mapping::CellState::Occupied => None,
            }
        });
        points
            .into_iter()
            .filter(|c| field[ctx.grid.dims.idx(*c)].is_finite())
            .collect()
    }

    /// Scan the object memory for candidates of the current goal, verify them
    /// in retrieval order, and lock onto the first accepted one.
    fn try_acquire_target(&mut self, ctx: &mut NavContext) -> bool {
        let quick_hit = ctx
            .omap
            .records
            .values()
            .any(|r| record_matches(r, &self.goal) && !self.blacklist_instances.contains(&r.instance_id));
        if !quick_hit {
            return false;
        }
        match self.config.map_mode {
            MapMode::Ssmg => {
                ctx.ensure_ssmg();
                let revision = ctx.ssmg.revision;
                let candidates = query_instances(&ctx.ssmg, &ctx.omap, &self.goal);
                for cand in candidates {
                    if self.blacklist_instances.contains(&cand.instance_id) {
                        continue;
                    }
                    let key = (cand.instance_id.clone(), revision);
                    let accepted = match self.verdicts.get(&key) {
                        Some(&v) => v,
                        None => {
                            let v = self.verify_candidate(ctx, &cand.instance_id, cand.node_id);
                            self.verdicts.insert(key, v);
                            v
                        }
                    };
                    if accepted {
                        self.verified = Some(cand.instance_id.clone());
                        self.stage = Stage::WaypointNav(WaypointState {
                            purpose: Purpose::Target {
                                instance_id: cand.instance_id,
                            },
                            mode: CostMode::DiscountUnknown,
                        });
                        return true;
                    }
                }
                false
            }
            MapMode::Value | MapMode::Semantic => {
                // Detector-level matching without a verification model.
                let mut matches: Vec<&ObjectRecord> = ctx
                    .omap
                    .records
                    .values()
                    .filter(|r| {
                        record_matches(r, &self.goal)
                            && !self.blacklist_instances.contains(&r.instance_id)
                    })
                    .collect();
                matches.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
                if let Some(rec) = matches.first() {
                    self.verified = Some(rec.instance_id.clone());
                    self.stage = Stage::WaypointNav(WaypointState {
                        purpose: Purpose::Target {
                            instance_id: rec.instance_id.clone(),
                        },
                        mode: CostMode::DiscountUnknown,
                    });
                    return true;
                }
                false
            }
        }
    }

    /// Accept iff the provider's verification belief clears the threshold.
    /// Image goals accept on instance identity directly; provider failures
    /// reject.
    fn verify_candidate(&mut self, ctx: &mut NavContext, instance_id: &str, node_id: NodeId) -> bool {
        if let GoalSpec::ImageRef(target) = &self.goal {
            return instance_id == target;
        }
        match ctx
            .engine
            .verification_belief(&ctx.ssmg, node_id, &self.goal, &ctx.omap, &ctx.grid)
        {
            Ok(belief) => belief >= self.config.verify_threshold,
            Err(_) => {
                self.verify_failures += 1;
                false
            }
        }
    }

    // -- exploring ----------------------------------------------------------

    /// Recluster frontiers, pick (or keep) a target, and head for it.
    /// `None` means no reachable frontier remains.
    fn explore_step(&mut self, ctx: &mut NavContext, pose: Pose) -> Option<Action> {
        let frontiers = self.usable_frontiers(ctx, pose);
        if frontiers.is_empty() {
            self.explore_target = None;
            return None;
        }
        // Keep the committed target while it is still a live frontier.
        let target = match self.explore_target.filter(|t| frontiers.contains(t)) {
            Some(t) => Some(t),
            None => self.select_frontier(ctx, pose, &frontiers),
        };
        let target = match target {
            Some(t) => t,
            None => {
                self.explore_target = None;
                return None;
            }
        };
        self.explore_target = Some(target);
        let agent_cell = ctx.grid.dims.cell_of(pose.point());
        if agent_cell == target {
            // Standing on a frontier that refuses to dissolve: its unknown
            // neighbor sits inside the sensing blind spot. Give it up.
            self.blacklist_frontiers.insert(target);
            self.explore_target = None;
            return Some(Action::TurnLeft);
        }
        match plan_astar_to_any(&ctx.grid, agent_cell, &[target], CostMode::DiscountUnknown) {
            Ok(path) => Some(self.drive_along(&ctx.grid, &path, pose)),
            Err(_) => {
                self.blacklist_frontiers.insert(target);
                self.explore_target = None;
                // Re-selection happens next step; spend this one scanning.
                Some(Action::TurnLeft)
            }
        }
    }

    /// Fresh frontier choice per the configured map/planner mode.
    fn select_frontier(
        &self,
        ctx: &NavContext,
        pose: Pose,
        frontiers: &[Cell],
    ) -> Option<Cell> {
        let agent_cell = ctx.grid.dims.cell_of(pose.point());
        match self.config.map_mode {
            MapMode::Value => {
                // Highest value wins; ties to the lower raster cell.
                let beliefs = frontier_beliefs(&ctx.vmap, frontiers);
                let mut best = 0usize;
                for i in 1..frontiers.len() {
                    if beliefs[i] > beliefs[best] + 1e-12 {
                        best = i;
                    }
                }
                Some(frontiers[best])
            }
            MapMode::Ssmg => {
                let beliefs = frontier_beliefs(&ctx.vmap, frontiers);
                self.tour_first_stop(ctx, agent_cell, frontiers, &beliefs)
            }
            MapMode::Semantic => {
                // Nearest frontier by geodesic distance.
                let (kept, matrix) =
                    geodesic_matrix(&ctx.grid, agent_cell, frontiers, CostMode::DiscountUnknown);
                kept.iter()
                    .enumerate()
                    .min_by(|(r1, _), (r2, _)| {
                        matrix[0][r1 + 1].partial_cmp(&matrix[0][r2 + 1]).unwrap()
                    })
                    .map(|(_, &i)| frontiers[i])
            }
        }
    }

    /// Solve the expected-cost visit order over frontier points and return
    /// the first stop.
    fn tour_first_stop(
        &self,
        ctx: &NavContext,
        agent_cell: Cell,
        frontiers: &[Cell],
        beliefs: &[f64],
    ) -> Option<Cell> {
        let (kept, matrix) =
            geodesic_matrix(&ctx.grid, agent_cell, frontiers, CostMode::DiscountUnknown);
        if kept.is_empty() {
            return None;
        }
        let candidates: Vec<PlanCandidate> = kept
            .iter()
            .map(|&i| PlanCandidate {
                id: i as u64,
                position: ctx.grid.dims.center_of(frontiers[i]),
            })
            .collect();
        let kept_beliefs: Vec<f64> = kept.iter().map(|&i| beliefs[i]).collect();
        let probs = softmax_probs(&kept_beliefs, self.config.tau);
        let start = ctx.grid.dims.center_of(agent_cell);
        let mut instance = PlanInstance::new(start, candidates, probs, matrix).ok()?;
        instance.count_first_leg = self.config.count_first_leg;
        let init = greedy_order(&instance);
        let order = match self.config.planner_mode {
            PlannerMode::Greedy => init,
            _ => two_opt(&instance, init, self.config.two_opt),
        };
        let first = order.order[0];
        Some(frontiers[kept[first]])
    }

    // -- revisiting ---------------------------------------------------------

    /// Plan the junction spin tour by belief-weighted expected cost.
    fn plan_revisit_tour(&mut self, ctx: &mut NavContext, pose: Pose) -> Option<RevisitState> {
        ctx.ensure_ssmg();
        let junctions: Vec<NodeId> = ctx
            .ssmg
            .nodes_of_kind(PixelKind::Junction)
            .map(|n| n.id)
            .filter(|id| !self.blacklist_nodes.contains(id))
            .collect();
        let use_junctions = !junctions.is_empty();
        let node_ids: Vec<NodeId> = if use_junctions {
            junctions
        } else {
            ctx.ssmg
                .nodes_of_kind(PixelKind::Endpoint)
                .map(|n| n.id)
                .filter(|id| !self.blacklist_nodes.contains(id))
                .collect()
        };
        if node_ids.is_empty() {
            return None;
        }
        let endpoints =
            ctx.engine
                .evaluate_endpoints_lenient(&ctx.ssmg, &self.goal, &ctx.omap, &ctx.grid);
        let table: BeliefTable = if use_junctions {
            ctx.engine.propagate_to_junctions_lenient(
                &ctx.ssmg,
                &self.goal,
                &ctx.omap,
                &ctx.grid,
                &endpoints,
            )
        } else {
            endpoints
        };
        let cells: Vec<Cell> = node_ids
            .iter()
            .map(|id| ctx.ssmg.node(*id).unwrap().cell)
            .collect();
        let agent_cell = ctx.grid.dims.cell_of(pose.point());
        let (kept, matrix) = geodesic_matrix(&ctx.grid, agent_cell, &cells, CostMode::FreeOnly);
        if kept.is_empty() {
            return None;
        }
        let beliefs: Vec<f64> = kept
            .iter()
            .map(|&i| table.entries.get(&node_ids[i]).copied().unwrap_or(0.0))
            .collect();
        let candidates: Vec<PlanCandidate> = kept
            .iter()
            .map(|&i| PlanCandidate {
                id: node_ids[i],
                position: ctx.ssmg.node(node_ids[i]).unwrap().position,
            })
            .collect();
        let probs = softmax_probs(&beliefs, self.config.tau);
        let start = ctx.grid.dims.center_of(agent_cell);
        let mut instance = PlanInstance::new(start, candidates, probs, matrix).ok()?;
        instance.count_first_leg = self.config.count_first_leg;
        let init = greedy_order(&instance);
        let order = match self.config.planner_mode {
            PlannerMode::Greedy => init,
            _ => two_opt(&instance, init, self.config.two_opt),
        };
        let tour: Vec<NodeId> = order.order.iter().map(|&i| node_ids[kept[i]]).collect();
        Some(RevisitState {
            tour,
            tour_idx: 0,
            pending: VecDeque::new(),
            spin_remaining: 0,
            current_stop: None,
            visited: BTreeSet::new(),
        })
    }

    /// Spin, queue endpoint sub-visits, and travel the planned order.
    /// `None` with the stage left at Retrieval once the tour is exhausted;
    /// `None` with the stage at WaypointNav when heading to the next stop.
    fn revisit_step(&mut self, ctx: &mut NavContext, mut state: RevisitState) -> Option<Action> {
        if state.spin_remaining > 0 {
            state.spin_remaining -= 1;
            if state.spin_remaining == 0 {
                // After a junction scan, check its adjacent end nodes.
                if let Some(stop) = state.current_stop.take() {
                    if ctx.ssmg.node(stop).map(|n| n.kind) == Some(PixelKind::Junction) {
                        for ep in ctx.ssmg.linked_endpoints(stop) {
                            if !state.visited.contains(&ep)
                                && !self.blacklist_nodes.contains(&ep)
                            {
                                state.pending.push_back(ep);
                            }
                        }
                    }
                }
            }
            self.stage = Stage::Revisiting(state);
            return Some(Action::TurnLeft);
        }
        // Pick the next stop: queued endpoints first, then the next junction.
        let next = state.pending.pop_front().or_else(|| {
            while state.tour_idx < state.tour.len() {
                let id = state.tour[state.tour_idx];
                state.tour_idx += 1;
                if !state.visited.contains(&id) {
                    return Some(id);
                }
            }
            None
        });
        match next {
            Some(node_id) => {
                if ctx.ssmg.node(node_id).is_none() {
                    // Node vanished in a rebuild; skip it.
                    self.stage = Stage::Revisiting(state);
                    return Some(Action::TurnLeft);
                }
                self.stage = Stage::WaypointNav(WaypointState {
                    purpose: Purpose::RevisitStop {
                        node_id,
                        revisit: state,
                    },
                    mode: CostMode::FreeOnly,
                });
                None
            }
            None => None,
        }
    }

    // -- waypoint navigation -------------------------------------------------

    /// A*-plus-lookahead toward the purpose's goal cells. Emits Stop on
    /// arrival at a verified target, hands control back to revisiting at a
    /// stop, and blacklists unreachable targets.
    ///
    /// Target arrival is measured against mapped-free cells ringing the
    /// object; unknown ring cells are approach goals but never count as
    /// arrived (they may turn out to be wall).
    fn waypoint_step(
        &mut self,
        ctx: &mut NavContext,
        pose: Pose,
        state: WaypointState,
    ) -> Option<Action> {
        let dims = ctx.grid.dims;
        let agent_cell = dims.cell_of(pose.point());
        let (arrive_goals, approach_goals): (Vec<Cell>, Vec<Cell>) = match &state.purpose {
            Purpose::Target { instance_id } => match ctx.omap.records.get(instance_id) {
                Some(rec) => {
                    let (free, open) = target_rings(&ctx.grid, rec);
                    (free, open)
                }
                None => (Vec::new(), Vec::new()),
            },
            Purpose::RevisitStop { node_id, .. } => match ctx.ssmg.node(*node_id) {
                Some(n) => (vec![n.cell], vec![n.cell]),
                None => (Vec::new(), Vec::new()),
            },
        };
        // Prefer paths to cells where arrival can be declared; fall back to
        // approach cells while the ring is still unmapped.
        let path = if !arrive_goals.is_empty() {
            plan_astar_to_any(&ctx.grid, agent_cell, &arrive_goals, state.mode).map(|p| (p, true))
        } else {
            Err(crate::planner::PlanError::NoPath)
        }
        .or_else(|_| {
            if approach_goals.is_empty() {
                Err(crate::planner::PlanError::NoPath)
            } else {
                plan_astar_to_any(&ctx.grid, agent_cell, &approach_goals, state.mode)
                    .map(|p| (p, false))
            }
        });
        match path {
            Ok((path, arrivable)) => {
                let remaining = path_length_m(&path, dims.resolution);
                // Arrival must be provable from the map: a short, fully
                // mapped-free final approach.
                let all_free = path.iter().all(|c| ctx.grid.is_free(*c));
                if arrivable && all_free && remaining <= self.config.arrival_radius_m + 1e-9 {
                    match state.purpose {
                        Purpose::Target { .. } => {
                            self.stage = Stage::Done;
                            Some(Action::Stop)
                        }
                        Purpose::RevisitStop { node_id, mut revisit } => {
                            revisit.visited.insert(node_id);
                            revisit.current_stop = Some(node_id);
                            revisit.spin_remaining = SPIN_TURNS;
                            self.stage = Stage::Revisiting(revisit);
                            None
                        }
                    }
                } else if path.len() < 2 {
                    // Standing on an approach-only goal; scan to force map
                    // refinement around the target.
                    self.stage = Stage::WaypointNav(state);
                    Some(Action::TurnLeft)
                } else {
                    let action = self.drive_along(&ctx.grid, &path, pose);
                    self.stage = Stage::WaypointNav(state);
                    Some(action)
                }
            }
            Err(_) => {
                match state.purpose {
                    Purpose::Target { instance_id } => {
                        self.blacklist_instances.insert(instance_id);
                        self.verified = None;
                        self.stage = Stage::Retrieval;
                    }
                    Purpose::RevisitStop { node_id, revisit } => {
                        self.blacklist_nodes.insert(node_id);
                        self.stage = Stage::Revisiting(revisit);
                    }
                }
                None
            }
        }
    }

    /// Carrot-point controller: pick the farthest path point within the
    /// lookahead that the map shows a clear straight line to, turn until the
    /// bearing error is inside the tolerance, then drive. Forward is gated on
    /// the motion segment itself being clear in the map; a blocked-but-
    /// aligned pose turns left until a driveable heading comes around.
    fn drive_along(&self, grid: &OccupancyGrid, path: &[Cell], pose: Pose) -> Action {
        let carrot = visible_carrot(grid, pose, path, self.config.lookahead_m);
        let target = grid.dims.center_of(carrot);
        let err = normalize_signed((target.y - pose.y).atan2(target.x - pose.x) - pose.heading);
        if std::env::var_os("SKELNAV_TRACE").is_some() {
            eprintln!(
                "drive: pose ({:.3},{:.3},h{:.3}) path0 {:?} path1 {:?} carrot {:?} err {:.1}deg clear {}",
                pose.x,
                pose.y,
                pose.heading,
                path.first(),
                path.get(1),
                carrot,
                err.to_degrees(),
                forward_clear(grid, pose, pose.heading)
            );
        }
        let clear_now = forward_clear(grid, pose, pose.heading);
        if err.abs() <= self.config.bearing_tol_rad {
            if clear_now {
                return Action::Forward;
            }
            // Aligned but blocked: rotate toward the nearest driveable
            // heading.
            for k in [1i32, -1, 2, -2, 3, -3, 4, -4, 5, -5, 6] {
                let h = pose.heading + k as f64 * crate::sim::TURN_STEP_RAD;
                if forward_clear(grid, pose, h) {
                    return if k > 0 { Action::TurnLeft } else { Action::TurnRight };
                }
            }
            return Action::TurnLeft;
        }
        let sign = if err > 0.0 { 1.0 } else { -1.0 };
        let turned = pose.heading + sign * crate::sim::TURN_STEP_RAD;
        let err_after = normalize_signed(err - sign * crate::sim::TURN_STEP_RAD);
        // Turning is useful when the new heading is driveable or when more
        // turning is needed regardless. Otherwise the turn would strand us on
        // a blocked aligned heading; drive with the slightly-large error.
        if forward_clear(grid, pose, turned) || err_after.abs() > self.config.bearing_tol_rad {
            if sign > 0.0 {
                Action::TurnLeft
            } else {
                Action::TurnRight
            }
        } else if clear_now {
            Action::Forward
        } else if sign > 0.0 {
            Action::TurnLeft
        } else {
            Action::TurnRight
        }
    }
}

/// The 0.25 m forward motion segment along `heading` crosses no
/// mapped-occupied or out-of-bounds cell.
fn forward_clear(grid: &OccupancyGrid, pose: Pose, heading: f64) -> bool {
    for (cell, t) in crate::grid::RayWalk::new(pose.point(), heading, grid.dims.resolution) {
        if t > crate::sim::FORWARD_STEP_M + 1e-9 {
            break;
        }
        if t == 0.0 {
            continue;
        }
        if !grid.dims.contains(cell) || grid.is_occupied(cell) {
            return false;
        }
    }
    true
}

/// The farthest path point within the lookahead arc length whose straight
/// segment from the pose crosses no mapped-occupied cell; falls back to the
/// first step of the path.
fn visible_carrot(grid: &OccupancyGrid, pose: Pose, path: &[Cell], lookahead_m: f64) -> Cell {
    let resolution = grid.dims.resolution;
    let limit = lookahead(path, resolution, lookahead_m);
    let mut best = path.get(1).copied().unwrap_or(path[0]);
    let mut acc = 0.0;
    for w in path.windows(2) {
        acc += crate::grid::step_cost(w[0], w[1]) * resolution;
        let candidate = w[1];
        if segment_clear(grid, pose, candidate) {
            best = candidate;
        } else {
            break;
        }
        if candidate == limit || acc >= lookahead_m - 1e-9 {
            break;
        }
    }
    best
}

/// No mapped-occupied cell on the straight line from the pose to the cell
/// center.
fn segment_clear(grid: &OccupancyGrid, pose: Pose, to: Cell) -> bool {
    let target = grid.dims.center_of(to);
    let dist = pose.point().dist(target);
    if dist < 1e-9 {
        return true;
    }
    let angle = (target.y - pose.y).atan2(target.x - pose.x);
    for (cell, t) in crate::grid::RayWalk::new(pose.point(), angle, grid.dims.resolution) {
        if t >= dist - 1e-9 {
            break;
        }
        if grid.is_occupied(cell) {
            return false;
        }
    }
    true
}

/// Detector-level goal match used for the quick pre-check and the
/// non-graph baselines.
pub fn record_matches(record: &ObjectRecord, goal: &GoalSpec) -> bool {
    match goal {
        GoalSpec::Category(cat) => &record.category == cat,
        GoalSpec::ImageRef(id) => &record.instance_id == id,
        GoalSpec::Description(tokens) => {
            let bag: BTreeSet<String> = tokens.iter().cloned().collect();
            let toks = record.tokens();
            let inter = toks.intersection(&bag).count() as f64;
            let union = toks.union(&bag).count() as f64;
            union > 0.0 && inter / union >= crate::ssmg::DESCRIPTION_JACCARD
        }
    }
}

/// Cells ringing an object's footprint, split into (mapped-free, open).
/// Free ring cells are valid stop positions; open (free-or-unknown) cells
/// serve as approach goals while the surroundings are unmapped.
fn target_rings(grid: &OccupancyGrid, record: &ObjectRecord) -> (Vec<Cell>, Vec<Cell>) {
    let mut free = BTreeSet::new();
    let mut open = BTreeSet::new();
    let mut consider = |c: Cell| {
        if !grid.dims.contains(c) {
            return;
        }
        if grid.is_free(c) {
            free.insert(c);
            open.insert(c);
        } else if grid.is_unknown(c) {
            open.insert(c);
        }
    };
    for &fc in &record.footprint {
        consider(fc);
        for (dx, dy, _) in crate::grid::NEIGHBORS8 {
            consider(Cell::new(fc.x + dx, fc.y + dy));
        }
    }
    (free.into_iter().collect(), open.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::CooccurrenceProvider;
    use crate::mapping::{update_object_map, update_occupancy, ScenarioCaptions};
    use crate::sim::{observe, SensorConfig, WorldMap};

    fn world_from_rows(rows: &[&str]) -> WorldMap {
        let grid = crate::testutil::grid_from_rows(rows);
        let dims = grid.dims;
        let cells = dims
            .iter_cells()
            .map(|c| {
                if grid.is_free(c) {
                    crate::sim::GtCell::FreeGt
                } else {
                    crate::sim::GtCell::OccupiedGt
                }
            })
            .collect();
        WorldMap {
            dims,
            cells,
            objects: Vec::new(),
        }
    }

    fn fresh_ctx(world: &WorldMap) -> NavContext {
        NavContext::new(
            world.dims,
            BeliefEngine::new(Box::new(CooccurrenceProvider::new(world))),
        )
    }

    #[test]
    fn fresh_world_starts_exploring() {
        let world = world_from_rows(&[
            "############",
            "#..........#",
            "#..........#",
            "#..........#",
            "#..........#",
            "#..........#",
            "#..........#",
            "############",
        ]);
        let mut ctx = fresh_ctx(&world);
        let pose = Pose::new(1.0, 1.0, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        update_occupancy(&mut ctx.grid, &obs);
        let mut policy = Policy::new(GoalSpec::Category("towel".into()), NavConfig::default());
        let action = policy.step(&mut ctx, pose);
        assert_eq!(policy.stage.name(), "exploring");
        assert_ne!(action, Action::Stop);
    }

    #[test]
    fn explored_world_without_goal_revisits() {
        let world = world_from_rows(&[
            "###############",
            "#.............#",
            "#.............#",
            "#### ##########", // narrowing to create a junction-ish space
            "#.............#",
            "#.............#",
            "###############",
        ]);
        // Mark the entire grid known by copying ground truth.
        let mut ctx = fresh_ctx(&world);
        let labels = world
            .dims
            .iter_cells()
            .map(|c| {
                if world.is_free(c) {
                    crate::mapping::CellState::Free
                } else {
                    crate::mapping::CellState::Occupied
                }
            })
            .collect();
        ctx.grid = OccupancyGrid::from_labels(world.dims, labels);
        let mut policy = Policy::new(GoalSpec::Category("towel".into()), NavConfig::default());
        let pose = Pose::new(1.0, 1.25, 0.0);
        let action = policy.step(&mut ctx, pose);
        // No candidates, no frontiers: the policy plans a revisit tour (or
        // gives up if no node is reachable, which would be a bug here).
        assert_ne!(action, Action::Stop, "stage: {}", policy.stage.name());
        assert!(matches!(policy.stage, Stage::Revisiting(_) | Stage::WaypointNav(_)));
    }

    #[test]
    fn no_revisit_mode_gives_up_when_explored() {
        let world = world_from_rows(&[
            "########",
            "#......#",
            "#......#",
            "########",
        ]);
        let mut ctx = fresh_ctx(&world);
        let labels = world
            .dims
            .iter_cells()
            .map(|c| {
                if world.is_free(c) {
                    crate::mapping::CellState::Free
                } else {
                    crate::mapping::CellState::Occupied
                }
            })
            .collect();
        ctx.grid = OccupancyGrid::from_labels(world.dims, labels);
        let mut config = NavConfig::default();
        config.planner_mode = PlannerMode::LhpNoRevisit;
        let mut policy = Policy::new(GoalSpec::Category("towel".into()), config);
        let action = policy.step(&mut ctx, Pose::new(0.5, 0.5, 0.0));
        assert_eq!(action, Action::Stop);
        assert_eq!(policy.stage.name(), "done");
    }

    #[test]
    fn controller_turn_rules() {
        let policy = Policy::new(GoalSpec::Category("x".into()), NavConfig::default());
        let grid = crate::testutil::grid_from_rows(&[
            "........",
            "........",
            "........",
            "........",
        ]);
        let path = vec![Cell::new(2, 2), Cell::new(3, 2), Cell::new(4, 2), Cell::new(5, 2)];
        // Facing +x, carrot dead ahead: drive.
        let aligned = Pose::new(0.625, 0.625, 0.0);
        assert_eq!(policy.drive_along(&grid, &path, aligned), Action::Forward);
        // Facing +y (90 degrees off): turn right reduces the error.
        let off = Pose::new(0.625, 0.625, std::f64::consts::FRAC_PI_2);
        assert_eq!(policy.drive_along(&grid, &path, off), Action::TurnRight);
    }

    #[test]
    fn image_goal_verifies_by_identity() {
        let world = world_from_rows(&[
            "##########",
            "#........#",
            "#........#",
            "#........#",
            "##########",
        ]);
        let mut world = world;
        let cell = Cell::new(8, 1);
        {
            let idx = world.dims.idx(cell);
            world.cells[idx] = crate::sim::GtCell::OccupiedGt;
        }
        world.objects.push(crate::sim::GroundTruthObject {
            instance_id: "mug_7".into(),
            category: "mug".into(),
            centroid: world.dims.center_of(cell),
            footprint: [cell].into_iter().collect(),
            caption_tokens: vec!["white".into(), "mug".into(), "kitchen".into()],
            room_label: "kitchen".into(),
        });
        let mut ctx = fresh_ctx(&world);
        let pose = Pose::new(0.5, 0.375, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);
        assert!(!obs.detections.is_empty());
        update_occupancy(&mut ctx.grid, &obs);
        update_object_map(&mut ctx.omap, &obs, &ScenarioCaptions::new(&world));
        let mut policy = Policy::new(GoalSpec::ImageRef("mug_7".into()), NavConfig::default());
        policy.step(&mut ctx, pose);
        assert_eq!(policy.verified.as_deref(), Some("mug_7"));
        assert!(matches!(policy.stage, Stage::WaypointNav(_) | Stage::Done));
    }

    #[test]
    fn verification_threshold_gates_acceptance() {
        struct FixedBelief(f64);
        impl crate::belief::BeliefProvider for FixedBelief {
            fn name(&self) -> String {
                "fixed".into()
            }
            fn evaluate(
                &self,
                _artifact: &crate::belief::PromptArtifact,
            ) -> Result<f64, crate::belief::ProviderError> {
                Ok(self.0)
            }
        }
        let mut world = world_from_rows(&[
            "##########",
            "#........#",
            "#........#",
            "#........#",
            "##########",
        ]);
        let cell = Cell::new(8, 1);
        {
            let idx = world.dims.idx(cell);
            world.cells[idx] = crate::sim::GtCell::OccupiedGt;
        }
        world.objects.push(crate::sim::GroundTruthObject {
            instance_id: "mug_7".into(),
            category: "mug".into(),
            centroid: world.dims.center_of(cell),
            footprint: [cell].into_iter().collect(),
            caption_tokens: vec!["white".into(), "mug".into()],
            room_label: "kitchen".into(),
        });
        let pose = Pose::new(0.5, 0.375, 0.0);
        let obs = observe(&world, pose, &SensorConfig::default(), 0);

        for (belief, expect_verified) in [(0.3, false), (0.8, true)] {
            let mut ctx = NavContext::new(
                world.dims,
                BeliefEngine::new(Box::new(FixedBelief(belief))),
            );
            update_occupancy(&mut ctx.grid, &obs);
            update_object_map(&mut ctx.omap, &obs, &ScenarioCaptions::new(&world));
            let mut policy =
                Policy::new(GoalSpec::Category("mug".into()), NavConfig::default());
            policy.step(&mut ctx, pose);
            assert_eq!(
                policy.verified.is_some(),
                expect_verified,
                "belief {belief}"
            );
        }
    }

    #[test]
    fn spin_is_a_contiguous_block_of_twelve_turns() {
        let world = world_from_rows(&[
            "###############",
            "#......#......#",
            "#......#......#",
            "#....#### ####+",
            "#.............#",
            "#.............#",
            "###############",
        ]);
        let mut ctx = fresh_ctx(&world);
        let labels = world
            .dims
            .iter_cells()
            .map(|c| {
                if world.is_free(c) {
                    crate::mapping::CellState::Free
                } else {
                    crate::mapping::CellState::Occupied
                }
            })
            .collect();
        ctx.grid = OccupancyGrid::from_labels(world.dims, labels);
        let mut policy = Policy::new(GoalSpec::Category("towel".into()), NavConfig::default());
        let mut pose = Pose::new(1.0, 1.25, 0.0);
        let mut actions = Vec::new();
        for _ in 0..300 {
            let a = policy.step(&mut ctx, pose);
            actions.push(a);
            if a == Action::Stop {
                break;
            }
            pose = crate::sim::apply_action(&world, pose, a).pose;
        }
        // Find a spin: 12 consecutive TurnLefts somewhere in the trace.
        let mut run = 0;
        let mut best_run = 0;
        for a in &actions {
            if *a == Action::TurnLeft {
                run += 1;
                best_run = best_run.max(run);
            } else {
                run = 0;
            }
        }
        assert!(best_run >= 12, "longest turn run {best_run}; trace {actions:?}");
    }
}
