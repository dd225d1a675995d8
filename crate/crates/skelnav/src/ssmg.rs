//! The semantic skeleton memory graph: skeleton keypoints enriched with
//! attached object sets, data-driven radii, and goal-conditioned beliefs,
//! plus retrieval queries and the persistence archive.
//!
//! Attachment runs in three ordered steps, each exactly once: (1) every
//! object joins its nearest node, (2) each node's radius becomes the distance
//! to its farthest nearest-assigned object, (3) every object within a node's
//! radius also joins that node. Step 3 never grows radii.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{fnv1a, Cell, Dims, Point};
use crate::mapping::{ObjectMap, OccupancyGrid, ValueMap};
use crate::skeleton::{PixelKind, SkeletonGraph};

/// Jaccard overlap a description goal needs to count as a retrieval hit.
pub const DESCRIPTION_JACCARD: f64 = 0.2;
/// Identity matching snaps a rebuilt node to its predecessor within this
/// many cells.
pub const IDENTITY_MATCH_CELLS: f64 = 3.0;

/// Stable node identifier, preserved across skeleton recomputes by
/// nearest-cell identity matching.
pub type NodeId = u64;

/// Multimodal goal: category string, description token bag, or a reference
/// to a unique instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalSpec {
    Category(String),
    Description(Vec<String>),
    ImageRef(String),
}

impl GoalSpec {
    pub fn modality_name(&self) -> &'static str {
        match self {
            GoalSpec::Category(_) => "category",
            GoalSpec::Description(_) => "description",
            GoalSpec::ImageRef(_) => "image",
        }
    }

    /// Stable content hash used for belief cache keys.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("goal serializes");
        fnv1a(text.as_bytes())
    }

    /// One-line rendering for prompts and logs.
    pub fn render_text(&self) -> String {
        match self {
            GoalSpec::Category(c) => format!("category: {c}"),
            GoalSpec::Description(tokens) => format!("description: {}", tokens.join(" ")),
            GoalSpec::ImageRef(id) => format!("image: {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmgNode {
    pub id: NodeId,
    pub kind: PixelKind,
    pub cell: Cell,
    /// Node position in meters (cell center).
    pub position: Point,
    /// Attached object instance ids, O(n).
    pub attached: BTreeSet<String>,
    /// Data-driven radius in meters; 0 iff no nearest-assigned object.
    pub radius: f64,
    /// Goal-conditioned belief; cleared on persist/restore and goal change.
    pub belief: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Skeleton,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmgEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: EdgeKind,
    pub length_m: f64,
    /// Connector chain for skeleton edges; empty for augmented edges.
    pub chain: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ssmg {
    pub dims: Dims,
    pub nodes: Vec<SsmgNode>,
    pub edges: Vec<SsmgEdge>,
    /// instance id -> set of owning node ids (multi-membership allowed).
    pub object_index: BTreeMap<String, BTreeSet<NodeId>>,
    /// instance id -> its nearest node from attachment step 1.
    pub primary_node: BTreeMap<String, NodeId>,
    pub revision: u64,
    next_id: NodeId,
}

impl Ssmg {
    pub fn node(&self, id: NodeId) -> Option<&SsmgNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut SsmgNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn nodes_of_kind(&self, kind: PixelKind) -> impl Iterator<Item = &SsmgNode> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Endpoints linked to this junction by an augmentation edge.
    pub fn linked_endpoints(&self, junction: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Augmented)
            .filter_map(|e| {
                if e.b == junction {
                    Some(e.a)
                } else if e.a == junction {
                    Some(e.b)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn clear_beliefs(&mut self) {
        for n in &mut self.nodes {
            n.belief = None;
        }
    }
}

/// Build the memory graph from a skeleton graph and the object map:
/// nearest-node assignment, radius computation, and radius expansion, in
/// that order, each exactly once.
pub fn attach_objects(graph: &SkeletonGraph, omap: &ObjectMap) -> Ssmg {
    let mut nodes: Vec<SsmgNode> = graph
        .nodes
        .iter()
        .map(|n| SsmgNode {
            id: n.id as NodeId,
            kind: n.kind,
            cell: n.cell,
            position: graph.dims.center_of(n.cell),
            attached: BTreeSet::new(),
            radius: 0.0,
            belief: None,
        })
        .collect();
    let edges: Vec<SsmgEdge> = graph
        .edges
        .iter()
        .map(|e| SsmgEdge {
            a: e.a as NodeId,
            b: e.b as NodeId,
            kind: EdgeKind::Skeleton,
            length_m: e.length_m,
            chain: e.chain.clone(),
        })
        .collect();

    let mut primary_node = BTreeMap::new();
    if !nodes.is_empty() {
        // Step 1: nearest node per object, ties to the lower node id.
        for (id, record) in &omap.records {
            let p = record.best_view().pose.point();
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, n) in nodes.iter().enumerate() {
                let d = n.position.dist(p);
                if d < best_d - 1e-12 {
                    best = i;
                    best_d = d;
                }
            }
            nodes[best].attached.insert(id.clone());
            primary_node.insert(id.clone(), nodes[best].id);
        }
        // Step 2: radius from the farthest nearest-assigned object.
        for n in &mut nodes {
            n.radius = n
                .attached
                .iter()
                .map(|id| n.position.dist(omap.records[id].best_view().pose.point()))
                .fold(0.0, f64::max);
        }
        // Step 3: pull in every object within the radius. Radii stay fixed.
        for n in &mut nodes {
            if n.radius <= 0.0 {
                continue;
            }
            for (id, record) in &omap.records {
                let d = n.position.dist(record.best_view().pose.point());
                if d <= n.radius + 1e-12 {
                    n.attached.insert(id.clone());
                }
            }
        }
    }

    let mut object_index: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
    for n in &nodes {
        for id in &n.attached {
            object_index.entry(id.clone()).or_default().insert(n.id);
        }
    }

    let next_id = nodes.iter().map(|n| n.id + 1).max().unwrap_or(0);
    Ssmg {
        dims: graph.dims,
        nodes,
        edges,
        object_index,
        primary_node,
        revision: 0,
        next_id,
    }
}

/// Add an augmentation edge for every (endpoint, junction) pair that shares a
/// skeleton edge. Idempotent.
pub fn augment_edges(ssmg: &mut Ssmg) {
    let kind_of: BTreeMap<NodeId, PixelKind> =
        ssmg.nodes.iter().map(|n| (n.id, n.kind)).collect();
    let existing: BTreeSet<(NodeId, NodeId)> = ssmg
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Augmented)
        .map(|e| (e.a.min(e.b), e.a.max(e.b)))
        .collect();
    let mut additions = Vec::new();
    for e in &ssmg.edges {
        if e.kind != EdgeKind::Skeleton {
            continue;
        }
        let pair = match (kind_of[&e.a], kind_of[&e.b]) {
            (PixelKind::Endpoint, PixelKind::Junction) => Some((e.a, e.b)),
            (PixelKind::Junction, PixelKind::Endpoint) => Some((e.b, e.a)),
            _ => None,
        };
        if let Some((ep, jn)) = pair {
            let key = (ep.min(jn), ep.max(jn));
            if !existing.contains(&key) && !additions.iter().any(|(a, b, _)| (*a, *b) == (ep, jn))
            {
                additions.push((ep, jn, e.length_m));
            }
        }
    }
    for (ep, jn, length_m) in additions {
        ssmg.edges.push(SsmgEdge {
            a: ep,
            b: jn,
            kind: EdgeKind::Augmented,
            length_m,
            chain: Vec::new(),
        });
    }
}

/// Carry stable node identities from a previous graph: a rebuilt node within
/// 3 cells of an unclaimed predecessor inherits its id; everything else gets
/// a fresh id. Renumbering is reflected in edges and the object index.
pub fn match_identities(ssmg: &mut Ssmg, prev: &Ssmg) {
    let mut claimed: BTreeSet<NodeId> = BTreeSet::new();
    let mut remap: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut next_id = prev.next_id;
    for node in &ssmg.nodes {
        let mut best: Option<(f64, NodeId)> = None;
        for p in &prev.nodes {
            if claimed.contains(&p.id) {
                continue;
            }
            let d = node.cell.dist(p.cell);
            if d <= IDENTITY_MATCH_CELLS {
                let better = match best {
                    None => true,
                    Some((bd, bid)) => d < bd - 1e-12 || (d < bd + 1e-12 && p.id < bid),
                };
                if better {
                    best = Some((d, p.id));
                }
            }
        }
        let new_id = match best {
            Some((_, pid)) => {
                claimed.insert(pid);
                pid
            }
            None => {
                let id = next_id;
                next_id += 1;
                id
            }
        };
        remap.insert(node.id, new_id);
    }
    for node in &mut ssmg.nodes {
        node.id = remap[&node.id];
    }
    for edge in &mut ssmg.edges {
        edge.a = remap[&edge.a];
        edge.b = remap[&edge.b];
    }
    ssmg.object_index = ssmg
        .object_index
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|id| remap[id]).collect()))
        .collect();
    ssmg.primary_node = ssmg
        .primary_node
        .iter()
        .map(|(k, v)| (k.clone(), remap[v]))
        .collect();
    ssmg.next_id = next_id;
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub instance_id: String,
    pub node_id: NodeId,
    pub score: f64,
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Query the memory for goal candidates. Category goals match exactly,
/// description goals by token overlap, image goals by instance identity.
/// Ordered by score descending, ties by instance id; empty means the target
/// is absent from the current memory.
pub fn query_instances(ssmg: &Ssmg, omap: &ObjectMap, goal: &GoalSpec) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (id, record) in &omap.records {
        let node_id = match ssmg.primary_node.get(id) {
            Some(&n) => n,
            None => continue,
        };
        let score = match goal {
            GoalSpec::Category(cat) => {
                if &record.category == cat {
                    Some(1.0)
                } else {
                    None
                }
            }
            GoalSpec::Description(tokens) => {
                let bag: BTreeSet<String> = tokens.iter().cloned().collect();
                let j = jaccard(&record.tokens(), &bag);
                if j >= DESCRIPTION_JACCARD {
                    Some(j)
                } else {
                    None
                }
            }
            GoalSpec::ImageRef(target) => {
                if id == target {
                    Some(1.0)
                } else {
                    None
                }
            }
        };
        if let Some(s) = score {
            out.push(Candidate {
                instance_id: id.clone(),
                node_id,
                score: s,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.instance_id.cmp(&b.instance_id))
    });
    out
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("corrupt archive at byte offset {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error("unsupported archive version {found} (expected {ARCHIVE_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Named per-goal value layers; usually just the current subtask's.
pub type ValueMapSet = BTreeMap<String, ValueMap>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Archive {
    pub version: u32,
    pub ssmg: Ssmg,
    pub object_map: ObjectMap,
    pub occupancy: OccupancyGrid,
    pub value_maps: ValueMapSet,
}

/// Serialize the memory state. Beliefs are goal-conditioned and do not
/// persist; structure does.
pub fn persist(
    ssmg: &Ssmg,
    omap: &ObjectMap,
    grid: &OccupancyGrid,
    vmaps: &ValueMapSet,
) -> String {
    let mut cleared = ssmg.clone();
    cleared.clear_beliefs();
    let archive = Archive {
        version: ARCHIVE_VERSION,
        ssmg: cleared,
        object_map: omap.clone(),
        occupancy: grid.clone(),
        value_maps: vmaps.clone(),
    };
    serde_json::to_string(&archive).expect("archive serializes")
}

pub fn persist_to_file(
    path: &std::path::Path,
    ssmg: &Ssmg,
    omap: &ObjectMap,
    grid: &OccupancyGrid,
    vmaps: &ValueMapSet,
) -> Result<(), ArchiveError> {
    std::fs::write(path, persist(ssmg, omap, grid, vmaps))?;
    Ok(())
}

pub fn restore(text: &str) -> Result<Archive, ArchiveError> {
    let archive: Archive = serde_json::from_str(text).map_err(|e| ArchiveError::Corrupt {
        offset: byte_offset(text, e.line(), e.column()),
        reason: e.to_string(),
    })?;
    if archive.version != ARCHIVE_VERSION {
        return Err(ArchiveError::UnsupportedVersion {
            found: archive.version,
        });
    }
    let mut archive = archive;
    archive.ssmg.clear_beliefs();
    Ok(archive)
}

pub fn restore_from_file(path: &std::path::Path) -> Result<Archive, ArchiveError> {
    let text = std::fs::read_to_string(path)?;
    restore(&text)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0usize;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{ObjectRecord, View};
    use crate::sim::Pose;
    use crate::skeleton::{extract_graph, thin};
    use crate::testutil::plus_grid;

    fn record_at(id: &str, category: &str, x: f64, y: f64) -> ObjectRecord {
        ObjectRecord {
            instance_id: id.into(),
            category: category.into(),
            footprint: [Cell::new((x / 0.25) as i32, (y / 0.25) as i32)]
                .into_iter()
                .collect(),
            centroid: Point::new(x, y),
            views: vec![View {
                pose: Pose::new(x, y, 0.0),
                caption: format!("{category} here"),
                score: 0.8,
            }],
        }
    }

    fn omap_with(records: Vec<ObjectRecord>) -> ObjectMap {
        let mut omap = ObjectMap::new(0.25);
        for r in records {
            omap.records.insert(r.instance_id.clone(), r);
        }
        omap
    }

    fn two_node_graph() -> SkeletonGraph {
        // Two endpoints 4 m apart on a synthetic line skeleton.
        SkeletonGraph {
            dims: Dims::new(40, 8, 0.25),
            nodes: vec![
                crate::skeleton::SkeletonNode {
                    id: 0,
                    kind: PixelKind::Endpoint,
                    cell: Cell::new(2, 2),
                    cluster: vec![Cell::new(2, 2)],
                },
                crate::skeleton::SkeletonNode {
                    id: 1,
                    kind: PixelKind::Endpoint,
                    cell: Cell::new(18, 2),
                    cluster: vec![Cell::new(18, 2)],
                },
            ],
            edges: vec![crate::skeleton::SkeletonEdge {
                a: 0,
                b: 1,
                chain: Vec::new(),
                length_m: 4.0,
            }],
        }
    }

    #[test]
    fn singleton_attachment_sets_radius() {
        let graph = two_node_graph();
        let node_pos = graph.dims.center_of(Cell::new(2, 2));
        let omap = omap_with(vec![record_at("o1", "towel", node_pos.x + 0.5, node_pos.y)]);
        let ssmg = attach_objects(&graph, &omap);
        let n0 = ssmg.node(0).unwrap();
        assert_eq!(n0.attached.len(), 1);
        assert!((n0.radius - 0.5).abs() < 1e-9);
        assert_eq!(ssmg.primary_node["o1"], 0);
    }

    #[test]
    fn no_objects_means_zero_radii() {
        let graph = two_node_graph();
        let ssmg = attach_objects(&graph, &omap_with(vec![]));
        assert!(ssmg.nodes.iter().all(|n| n.radius == 0.0));
        assert!(ssmg.nodes.iter().all(|n| n.attached.is_empty()));
    }

    #[test]
    fn equidistant_tie_and_radius_expansion() {
        let graph = two_node_graph();
        let a = graph.dims.center_of(Cell::new(2, 2));
        let b = graph.dims.center_of(Cell::new(18, 2));
        let mid_x = (a.x + b.x) / 2.0;
        // o1 equidistant (2.0 m) from both nodes: ties to the lower id.
        // o2 sits 1.0 m from node A only.
        let omap = omap_with(vec![
            record_at("o1", "towel", mid_x, a.y),
            record_at("o2", "mug", a.x + 1.0, a.y),
        ]);
        let ssmg = attach_objects(&graph, &omap);
        let n0 = ssmg.node(0).unwrap();
        let n1 = ssmg.node(1).unwrap();
        assert_eq!(ssmg.primary_node["o1"], 0, "tie breaks to lower id");
        assert!((n0.radius - 2.0).abs() < 1e-9);
        // Step 3: o2 at 1.0 m <= r_A = 2.0 stays; node B got nothing, so its
        // radius is 0 and pulls nothing in.
        assert!(n0.attached.contains("o1") && n0.attached.contains("o2"));
        assert_eq!(n1.radius, 0.0);
        assert!(n1.attached.is_empty());
        // Closure: every object within r of a node is attached to it.
        for n in &ssmg.nodes {
            for (id, r) in &omap.records {
                let d = n.position.dist(r.best_view().pose.point());
                if d <= n.radius {
                    assert!(n.attached.contains(id));
                }
            }
        }
    }

    #[test]
    fn plus_fixture_augmentation_pairs() {
        let mask = thin(&plus_grid()).unwrap();
        let graph = extract_graph(&mask);
        let mut ssmg = attach_objects(&graph, &omap_with(vec![]));
        augment_edges(&mut ssmg);
        let augmented: Vec<_> = ssmg
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Augmented)
            .collect();
        assert_eq!(augmented.len(), 4);
        let before = ssmg.edges.len();
        augment_edges(&mut ssmg);
        assert_eq!(ssmg.edges.len(), before, "augmentation must be idempotent");
    }

    #[test]
    fn corridor_has_no_augmentation() {
        let grid = crate::testutil::grid_from_rows(&[
            "##########",
            "#........#",
            "#........#",
            "#........#",
            "##########",
        ]);
        let mask = thin(&grid).unwrap();
        let graph = extract_graph(&mask);
        let mut ssmg = attach_objects(&graph, &omap_with(vec![]));
        augment_edges(&mut ssmg);
        assert!(ssmg.edges.iter().all(|e| e.kind == EdgeKind::Skeleton));
    }

    #[test]
    fn query_category_and_image() {
        let graph = two_node_graph();
        let a = graph.dims.center_of(Cell::new(2, 2));
        let omap = omap_with(vec![record_at("towel_1", "towel", a.x + 0.5, a.y)]);
        let ssmg = attach_objects(&graph, &omap);

        let hits = query_instances(&ssmg, &omap, &GoalSpec::Category("towel".into()));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].instance_id, "towel_1");
        assert_eq!(hits[0].node_id, 0);

        let miss = query_instances(&ssmg, &omap, &GoalSpec::ImageRef("towel_9".into()));
        assert!(miss.is_empty());
    }

    #[test]
    fn query_description_jaccard() {
        let graph = two_node_graph();
        let a = graph.dims.center_of(Cell::new(2, 2));
        let mut rec = record_at("chair_1", "armchair", a.x + 0.5, a.y);
        rec.views[0].caption = "blue chair".into();
        let omap = omap_with(vec![rec]);
        let ssmg = attach_objects(&graph, &omap);
        // Record tokens {armchair, blue, chair} vs goal bag of 4:
        // intersection 2, union 5 -> 0.4.
        let goal = GoalSpec::Description(vec![
            "blue".into(),
            "chair".into(),
            "near".into(),
            "desk".into(),
        ]);
        let hits = query_instances(&ssmg, &omap, &goal);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - 0.4).abs() < 1e-12, "score {}", hits[0].score);
    }

    #[test]
    fn persist_restore_round_trip() {
        let mask = thin(&plus_grid()).unwrap();
        let graph = extract_graph(&mask);
        let center = graph.dims.center_of(Cell::new(7, 7));
        let omap = omap_with(vec![record_at("towel_1", "towel", center.x, center.y)]);
        let mut ssmg = attach_objects(&graph, &omap);
        augment_edges(&mut ssmg);
        // Beliefs are cleared by persistence.
        ssmg.nodes[0].belief = Some(0.7);
        let grid = plus_grid();
        let vmaps = ValueMapSet::new();
        let text = persist(&ssmg, &omap, &grid, &vmaps);
        let archive = restore(&text).unwrap();
        let mut expect = ssmg.clone();
        expect.clear_beliefs();
        assert_eq!(archive.ssmg, expect);
        assert_eq!(archive.object_map, omap);
        assert_eq!(archive.occupancy, grid);
    }

    #[test]
    fn truncated_archive_reports_offset() {
        let mask = thin(&plus_grid()).unwrap();
        let graph = extract_graph(&mask);
        let ssmg = attach_objects(&graph, &omap_with(vec![]));
        let text = persist(&ssmg, &ObjectMap::new(0.25), &plus_grid(), &ValueMapSet::new());
        let cut = &text[..text.len() / 2];
        match restore(cut) {
            Err(ArchiveError::Corrupt { offset, .. }) => {
                assert!(offset > 0 && offset <= cut.len());
            }
            other => panic!("expected corrupt archive, got {other:?}"),
        }
    }

    #[test]
    fn identity_matching_keeps_nearby_ids() {
        let mask = thin(&plus_grid()).unwrap();
        let graph = extract_graph(&mask);
        let prev = attach_objects(&graph, &omap_with(vec![]));
        let mut rebuilt = attach_objects(&graph, &omap_with(vec![]));
        match_identities(&mut rebuilt, &prev);
        let prev_ids: Vec<NodeId> = prev.nodes.iter().map(|n| n.id).collect();
        let new_ids: Vec<NodeId> = rebuilt.nodes.iter().map(|n| n.id).collect();
        assert_eq!(prev_ids, new_ids, "identical graphs keep identical ids");
    }
}
