//! Category/room co-occurrence table backing the deterministic relevance and
//! belief providers. Shipped as a data file so deployments can swap it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Weight of the seen-category term when blending with the room term.
pub const CATEGORY_BLEND: f64 = 0.7;
/// Weight of the room term.
pub const ROOM_BLEND: f64 = 0.3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinityTable {
    pub version: u32,
    pub self_score: f64,
    pub floor: f64,
    /// goal category -> seen category -> affinity.
    pub category_affinity: BTreeMap<String, BTreeMap<String, f64>>,
    /// goal category -> room label -> affinity.
    pub room_affinity: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(skip)]
    known: BTreeSet<String>,
}

static BUILTIN: OnceLock<AffinityTable> = OnceLock::new();

impl AffinityTable {
    /// The table shipped with the binary.
    pub fn builtin() -> &'static AffinityTable {
        BUILTIN.get_or_init(|| {
            Self::from_json(include_str!("../data/affinity.json"))
                .expect("bundled affinity table must parse")
        })
    }

    pub fn from_json(text: &str) -> Result<AffinityTable, serde_json::Error> {
        let mut table: AffinityTable = serde_json::from_str(text)?;
        for (goal, seen) in &table.category_affinity {
            table.known.insert(goal.clone());
            for s in seen.keys() {
                table.known.insert(s.clone());
            }
        }
        Ok(table)
    }

    pub fn knows_category(&self, category: &str) -> bool {
        self.known.contains(category)
    }

    /// Known room labels for a goal (used to pull room hints out of captions).
    pub fn is_room_label(&self, token: &str) -> bool {
        self.room_affinity
            .values()
            .any(|rooms| rooms.contains_key(token))
    }

    /// Blended score for one sighting: seen category plus the room it sits
    /// in. The goal category itself scores `self_score`; anything the table
    /// has never heard of falls back to `floor`.
    pub fn blended(&self, seen_category: &str, room: Option<&str>, goal_category: &str) -> f64 {
        if seen_category == goal_category {
            return self.self_score;
        }
        if !self.knows_category(goal_category) || !self.knows_category(seen_category) {
            return self.floor;
        }
        let cat = self
            .category_affinity
            .get(goal_category)
            .and_then(|m| m.get(seen_category))
            .copied()
            .unwrap_or(0.05);
        let room_aff = room
            .and_then(|r| self.room_affinity.get(goal_category).and_then(|m| m.get(r)))
            .copied()
            .unwrap_or(0.05);
        (CATEGORY_BLEND * cat + ROOM_BLEND * room_aff).max(self.floor)
    }
}
