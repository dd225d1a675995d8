//! Per-node multimodal prompt synthesis and target-belief evaluation through
//! pluggable providers, with bottom-up propagation from endpoints to
//! junctions.
//!
//! Endpoint prompts carry the node's object lines and a bird's-eye crop;
//! junction prompts additionally embed, for each linked endpoint, that
//! endpoint's object-class histogram and its already-evaluated belief. Only
//! junction beliefs feed the planner (endpoints serve as the fallback in
//! junction-less worlds).

use std::collections::BTreeMap;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::AffinityTable;
use crate::grid::{fnv1a, Cell, Point};
use crate::mapping::{CellState, ObjectMap, OccupancyGrid};
use crate::scenario::goal_instances;
use crate::sim::{free_distance_field, WorldMap};
use crate::skeleton::PixelKind;
use crate::ssmg::{GoalSpec, NodeId, Ssmg};

/// Belief substituted when a provider fails and the caller opts to continue.
pub const NEUTRAL_BELIEF: f64 = 0.5;
/// Floor belief for nodes with no evidence.
pub const BELIEF_FLOOR: f64 = 0.1;
/// Minimum side of the bird's-eye crop, meters.
pub const MIN_CROP_SIDE_M: f64 = 3.0;
/// Distance scale of the oracle provider's belief decay, meters. At 2 m the
/// verification threshold of 0.6 corresponds to roughly a 1 m acceptance
/// radius, which separates same-room decoys from the true instance.
pub const ORACLE_LAMBDA_M: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Error)]
#[error("provider failure at node {node_id}: {reason}")]
pub struct ProviderError {
    pub node_id: NodeId,
    pub reason: String,
}

/// One object line of the textual prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLine {
    pub object_id: String,
    pub object_class: String,
    pub object_caption: String,
}

/// Annotated bird's-eye crop centered on the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevCrop {
    pub width: i32,
    pub height: i32,
    pub resolution: f64,
    /// Occupancy shading: 0 occupied, 127 unknown, 255 free.
    pub pixels: Vec<u8>,
    /// (object_id, crop-relative cell) markers; id set equals the text block.
    pub annotations: Vec<(String, Cell)>,
}

/// Summary of one evaluated endpoint, embedded in junction prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSummary {
    pub endpoint_id: NodeId,
    pub class_histogram: BTreeMap<String, usize>,
    pub belief: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptArtifact {
    pub node_id: NodeId,
    pub node_kind: PixelKind,
    pub node_position: Point,
    pub node_cell: Cell,
    pub text_block: Vec<ObjectLine>,
    pub bev: BevCrop,
    /// Endpoint summaries; populated for junction prompts only.
    pub context: Vec<EndpointSummary>,
    pub goal: GoalSpec,
    pub goal_text: String,
    pub instruction: String,
}

/// The chain-of-thought instruction template shipped as a data file.
pub fn instruction_template() -> &'static str {
    include_str!("../data/instruction.txt")
}

/// Build the deterministic prompt artifact for a node: object lines ordered
/// by instance id, a crop of side `max(2 * r_n, 3 m)`, and, when an endpoint
/// belief table is supplied (junction prompts), per-endpoint context.
pub fn build_node_prompt(
    ssmg: &Ssmg,
    node_id: NodeId,
    goal: &GoalSpec,
    omap: &ObjectMap,
    grid: &OccupancyGrid,
    endpoint_beliefs: Option<&BeliefTable>,
) -> Result<PromptArtifact, BeliefError> {
    let node = ssmg.node(node_id).ok_or(BeliefError::UnknownNode(node_id))?;

    let mut text_block = Vec::new();
    for id in &node.attached {
        if let Some(rec) = omap.records.get(id) {
            text_block.push(ObjectLine {
                object_id: id.clone(),
                object_class: rec.category.clone(),
                object_caption: rec.best_view().caption.clone(),
            });
        }
    }

    let side_m = (2.0 * node.radius).max(MIN_CROP_SIDE_M);
    let half = (side_m / (2.0 * grid.dims.resolution)).ceil() as i32;
    let side = 2 * half + 1;
    let origin = Cell::new(node.cell.x - half, node.cell.y - half);
    let mut pixels = Vec::with_capacity((side * side) as usize);
    for y in 0..side {
        for x in 0..side {
            let c = Cell::new(origin.x + x, origin.y + y);
            pixels.push(match grid.state(c) {
                CellState::Occupied => 0u8,
                CellState::Unknown => 127,
                CellState::Free => 255,
            });
        }
    }
    let mut annotations = Vec::new();
    for line in &text_block {
        let rec = &omap.records[&line.object_id];
        let cell = Cell::new(
            (rec.centroid.x / grid.dims.resolution).floor() as i32 - origin.x,
            (rec.centroid.y / grid.dims.resolution).floor() as i32 - origin.y,
        );
        annotations.push((line.object_id.clone(), cell));
    }

    let mut context = Vec::new();
    if let Some(table) = endpoint_beliefs {
        for ep_id in ssmg.linked_endpoints(node_id) {
            let ep = ssmg.node(ep_id).ok_or(BeliefError::UnknownNode(ep_id))?;
            let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
            for oid in &ep.attached {
                if let Some(rec) = omap.records.get(oid) {
                    *histogram.entry(rec.category.clone()).or_insert(0) += 1;
                }
            }
            context.push(EndpointSummary {
                endpoint_id: ep_id,
                class_histogram: histogram,
                belief: table.entries.get(&ep_id).copied().unwrap_or(NEUTRAL_BELIEF),
            });
        }
    }

    Ok(PromptArtifact {
        node_id,
        node_kind: node.kind,
        node_position: node.position,
        node_cell: node.cell,
        text_block,
        bev: BevCrop {
            width: side,
            height: side,
            resolution: grid.dims.resolution,
            pixels,
            annotations,
        },
        context,
        goal: goal.clone(),
        goal_text: goal.render_text(),
        instruction: instruction_template().to_string(),
    })
}

/// Evaluated beliefs for one (goal, graph revision) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefTable {
    pub entries: BTreeMap<NodeId, f64>,
    pub provenance: String,
    pub goal_hash: u64,
    pub revision: u64,
}

/// Scores a prompt artifact; must be deterministic given the artifact and
/// the provider's own seed, total over all prompts, with output in [0, 1].
pub trait BeliefProvider {
    fn name(&self) -> String;
    fn evaluate(&self, artifact: &PromptArtifact) -> Result<f64, ProviderError>;
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Table-driven surrogate: max over the node's object lines of category
/// affinity blended with a room hint pulled from captions; junction prompts
/// additionally take the max over endpoint-context beliefs.
pub struct CooccurrenceProvider {
    table: &'static AffinityTable,
    /// instance id -> category, for resolving image-modality goals.
    categories: BTreeMap<String, String>,
}

impl CooccurrenceProvider {
    pub fn new(world: &WorldMap) -> Self {
        Self {
            table: AffinityTable::builtin(),
            categories: world
                .objects
                .iter()
                .map(|o| (o.instance_id.clone(), o.category.clone()))
                .collect(),
        }
    }

    fn goal_key(&self, goal: &GoalSpec) -> Option<String> {
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

/// Weight of co-occurrence context for description goals. Kept below the
/// verification threshold: context cues alone can never verify an instance,
/// only a matching description can.
pub const DESCRIPTION_CONTEXT_WEIGHT: f64 = 0.6;

impl BeliefProvider for CooccurrenceProvider {
    fn name(&self) -> String {
        "cooccurrence".into()
    }

    fn evaluate(&self, artifact: &PromptArtifact) -> Result<f64, ProviderError> {
        let key = match self.goal_key(&artifact.goal) {
            Some(k) => k,
            None => return Ok(BELIEF_FLOOR),
        };
        let description_bag: Option<std::collections::BTreeSet<&str>> = match &artifact.goal {
            GoalSpec::Description(tokens) => {
                Some(tokens.iter().map(|t| t.as_str()).collect())
            }
            _ => None,
        };
        let mut own = BELIEF_FLOOR;
        for line in &artifact.text_block {
            let room = line
                .object_caption
                .split_whitespace()
                .find(|t| self.table.is_room_label(t));
            let blend = self.table.blended(&line.object_class, room, &key);
            let s = match &description_bag {
                // For description goals, only token overlap with the line
                // itself can push past the context weight.
                Some(bag) => {
                    let mut toks: std::collections::BTreeSet<&str> =
                        line.object_caption.split_whitespace().collect();
                    toks.insert(line.object_class.as_str());
                    let inter = toks.intersection(bag).count() as f64;
                    let union = toks.union(bag).count() as f64;
                    let overlap = if union > 0.0 { inter / union } else { 0.0 };
                    overlap.max(DESCRIPTION_CONTEXT_WEIGHT * blend)
                }
                None => blend,
            };
            if s > own {
                own = s;
            }
        }
        let ctx_max = artifact
            .context
            .iter()
            .map(|c| c.belief)
            .fold(0.0f64, f64::max);
        Ok(own.max(ctx_max).clamp(0.0, 1.0))
    }
}

/// Ground-truth surrogate: belief decays exponentially with the geodesic
/// distance from the node to the nearest true goal instance, plus seeded
/// Gaussian noise. Noise is keyed per (seed, node, goal) so evaluation order
/// never matters.
pub struct OracleProvider {
    world: WorldMap,
    pub sigma: f64,
    pub lambda_m: f64,
    pub seed: u64,
}

impl OracleProvider {
    pub fn new(world: &WorldMap, sigma: f64, seed: u64) -> Self {
        Self {
            world: world.clone(),
            sigma,
            lambda_m: ORACLE_LAMBDA_M,
            seed,
        }
    }
}

impl BeliefProvider for OracleProvider {
    fn name(&self) -> String {
        format!("oracle(sigma={})", self.sigma)
    }

    fn evaluate(&self, artifact: &PromptArtifact) -> Result<f64, ProviderError> {
        let targets = goal_instances(&self.world, &artifact.goal);
        if targets.is_empty() {
            return Ok(0.0);
        }
        // A node whose object lines include a true goal instance is certain;
        // otherwise belief decays with geodesic distance to the nearest one.
        let contains_goal = artifact.text_block.iter().any(|line| {
            targets
                .iter()
                .any(|t| t.instance_id == line.object_id)
        });
        let base = if contains_goal {
            1.0
        } else {
            let field = free_distance_field(&self.world, artifact.node_cell);
            let mut best = f64::INFINITY;
            for obj in targets {
                for cell in crate::sim::accessible_cells(&self.world, obj) {
                    let d = field[self.world.dims.idx(cell)];
                    if d < best {
                        best = d;
                    }
                }
            }
            if best.is_finite() {
                (-best / self.lambda_m).exp()
            } else {
                0.0
            }
        };
        let noise = if self.sigma > 0.0 {
            let key = fnv1a(
                format!("{}/{}/{}", self.seed, artifact.node_id, artifact.goal.hash()).as_bytes(),
            );
            gaussian_from_hash(key) * self.sigma
        } else {
            0.0
        };
        Ok((base + noise).clamp(0.0, 1.0))
    }
}

/// Two uniform samples from a hash, Box-Muller transformed.
fn gaussian_from_hash(key: u64) -> f64 {
    let u1 = ((fnv1a(&key.to_le_bytes()) >> 11) as f64 + 1.0) / (((1u64 << 53) + 1) as f64);
    let u2 = ((fnv1a(&key.wrapping_add(1).to_le_bytes()) >> 11) as f64) / ((1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform pseudo-random beliefs keyed by (seed, node, goal); useful as a
/// no-knowledge baseline.
pub struct RandomProvider {
    pub seed: u64,
}

impl BeliefProvider for RandomProvider {
    fn name(&self) -> String {
        "random".into()
    }

    fn evaluate(&self, artifact: &PromptArtifact) -> Result<f64, ProviderError> {
        let key = fnv1a(
            format!("{}/{}/{}", self.seed, artifact.node_id, artifact.goal.hash()).as_bytes(),
        );
        Ok((key >> 11) as f64 / (1u64 << 53) as f64)
    }
}

/// Remote hook: posts the prompt artifact as JSON to an HTTP endpoint and
/// expects `{"belief": <number>}` back. Plain HTTP only; intended for wiring
/// a real model in, not exercised by the benchmark suite.
pub struct RemoteProvider {
    pub url: String,
    pub timeout: std::time::Duration,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    node_id: NodeId,
    goal: &'a str,
    text_block: Vec<[&'a str; 3]>,
    image_b64: String,
    instruction: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    belief: f64,
}

impl RemoteProvider {
    pub fn new(url: String, timeout: std::time::Duration) -> Self {
        Self { url, timeout }
    }

    fn post(&self, body: &str) -> Result<String, String> {
        use std::io::{Read, Write};
        let rest = self
            .url
            .strip_prefix("http://")
            .ok_or_else(|| format!("unsupported url {:?} (plain http only)", self.url))?;
        let (host_port, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        let mut stream = std::net::TcpStream::connect(host_port).map_err(|e| e.to_string())?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(|e| e.to_string())?;
        stream
            .set_write_timeout(Some(self.timeout))
            .map_err(|e| e.to_string())?;
        let request = format!(
            "POST {path} HTTP/1.1\r\nHost: {host_port}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream
            .write_all(request.as_bytes())
            .map_err(|e| e.to_string())?;
        let mut response = String::new();
        stream
            .read_to_string(&mut response)
            .map_err(|e| e.to_string())?;
        let (head, payload) = response
            .split_once("\r\n\r\n")
            .ok_or("malformed http response")?;
        let status = head.lines().next().unwrap_or_default();
        if !status.contains("200") {
            return Err(format!("http status: {status}"));
        }
        Ok(payload.to_string())
    }
}

impl BeliefProvider for RemoteProvider {
    fn name(&self) -> String {
        format!("remote({})", self.url)
    }

    fn evaluate(&self, artifact: &PromptArtifact) -> Result<f64, ProviderError> {
        let fail = |reason: String| ProviderError {
            node_id: artifact.node_id,
            reason,
        };
        let image_b64 =
            base64::engine::general_purpose::STANDARD.encode(pgm_bytes(&artifact.bev));
        let request = RemoteRequest {
            node_id: artifact.node_id,
            goal: &artifact.goal_text,
            text_block: artifact
                .text_block
                .iter()
                .map(|l| {
                    [
                        l.object_id.as_str(),
                        l.object_class.as_str(),
                        l.object_caption.as_str(),
                    ]
                })
                .collect(),
            image_b64,
            instruction: &artifact.instruction,
        };
        let body = serde_json::to_string(&request).map_err(|e| fail(e.to_string()))?;
        let payload = self.post(&body).map_err(fail)?;
        let parsed: RemoteResponse = serde_json::from_str(payload.trim())
            .map_err(|e| fail(format!("bad reply: {e}")))?;
        Ok(parsed.belief.clamp(0.0, 1.0))
    }
}

/// Binary PGM encoding of a crop (also used by the renderer).
pub fn pgm_bytes(crop: &BevCrop) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", crop.width, crop.height).into_bytes();
    out.extend_from_slice(&crop.pixels);
    out
}

// ---------------------------------------------------------------------------
// Engine: evaluation with caching
// ---------------------------------------------------------------------------

/// Drives per-node evaluation against one provider, caching results by
/// (node, goal, graph revision).
pub struct BeliefEngine {
    provider: Box<dyn BeliefProvider>,
    cache: BTreeMap<(NodeId, u64, u64), f64>,
    /// Number of provider failures replaced by the neutral belief.
    pub fallback_count: u64,
}

impl BeliefEngine {
    pub fn new(provider: Box<dyn BeliefProvider>) -> Self {
        Self {
            provider,
            cache: BTreeMap::new(),
            fallback_count: 0,
        }
    }

    pub fn provider_name(&self) -> String {
        self.provider.name()
    }

    fn evaluate_node(
        &mut self,
        ssmg: &Ssmg,
        node_id: NodeId,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
        endpoint_beliefs: Option<&BeliefTable>,
        lenient: bool,
    ) -> Result<f64, BeliefError> {
        let key = (node_id, goal.hash(), ssmg.revision);
        if let Some(&b) = self.cache.get(&key) {
            return Ok(b);
        }
        let artifact = build_node_prompt(ssmg, node_id, goal, omap, grid, endpoint_beliefs)?;
        let belief = match self.provider.evaluate(&artifact) {
            Ok(b) => b.clamp(0.0, 1.0),
            Err(e) => {
                if lenient {
                    self.fallback_count += 1;
                    NEUTRAL_BELIEF
                } else {
                    return Err(e.into());
                }
            }
        };
        self.cache.insert(key, belief);
        Ok(belief)
    }

    fn evaluate_kind(
        &mut self,
        ssmg: &Ssmg,
        kind: PixelKind,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
        endpoint_beliefs: Option<&BeliefTable>,
        lenient: bool,
    ) -> Result<BeliefTable, BeliefError> {
        let mut entries = BTreeMap::new();
        let ids: Vec<NodeId> = ssmg.nodes_of_kind(kind).map(|n| n.id).collect();
        for id in ids {
            let b =
                self.evaluate_node(ssmg, id, goal, omap, grid, endpoint_beliefs, lenient)?;
            entries.insert(id, b);
        }
        Ok(BeliefTable {
            entries,
            provenance: self.provider.name(),
            goal_hash: goal.hash(),
            revision: ssmg.revision,
        })
    }

    /// Evaluate every endpoint exactly once per (goal, revision).
    pub fn evaluate_endpoints(
        &mut self,
        ssmg: &Ssmg,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
    ) -> Result<BeliefTable, BeliefError> {
        self.evaluate_kind(ssmg, PixelKind::Endpoint, goal, omap, grid, None, false)
    }

    /// As [`evaluate_endpoints`](Self::evaluate_endpoints) but substituting
    /// the neutral belief on provider failure.
    pub fn evaluate_endpoints_lenient(
        &mut self,
        ssmg: &Ssmg,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
    ) -> BeliefTable {
        self.evaluate_kind(ssmg, PixelKind::Endpoint, goal, omap, grid, None, true)
            .expect("lenient evaluation is total")
    }

    /// Evaluate junctions with endpoint context embedded in their prompts.
    pub fn propagate_to_junctions(
        &mut self,
        ssmg: &Ssmg,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
        endpoints: &BeliefTable,
    ) -> Result<BeliefTable, BeliefError> {
        self.evaluate_kind(
            ssmg,
            PixelKind::Junction,
            goal,
            omap,
            grid,
            Some(endpoints),
            false,
        )
    }

    pub fn propagate_to_junctions_lenient(
        &mut self,
        ssmg: &Ssmg,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
        endpoints: &BeliefTable,
    ) -> BeliefTable {
        self.evaluate_kind(
            ssmg,
            PixelKind::Junction,
            goal,
            omap,
            grid,
            Some(endpoints),
            true,
        )
        .expect("lenient evaluation is total")
    }

    /// One-off verification belief for a candidate's node.
    pub fn verification_belief(
        &mut self,
        ssmg: &Ssmg,
        node_id: NodeId,
        goal: &GoalSpec,
        omap: &ObjectMap,
        grid: &OccupancyGrid,
    ) -> Result<f64, BeliefError> {
        self.evaluate_node(ssmg, node_id, goal, omap, grid, None, false)
    }
}
