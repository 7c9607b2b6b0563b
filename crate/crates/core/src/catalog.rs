//! Domain knowledge: object categories, structures (functional groups),
//! placements (relative arrangements) and the reward scheme.
//!
//! Catalogs are TOML documents with four sections:
//!
//! ```toml
//! domain = "indoor"            # or "blocks"
//!
//! [[categories]]
//! name = "bed"
//! footprint = [4, 5]           # width, height in cells at orientation 0
//! orientations = [0, 90, 180, 270]
//! max_count = 1
//! important = true             # optional, grants `bonus` on first placement
//! bonus = 0.2
//!
//! [[structures]]
//! name = "sleeping"
//! members = ["bed", "nightstand"]
//!
//! [[placements]]
//! structure = "sleeping"
//! anchor_rule = "against_wall"  # free | against_wall | on_ground_column
//! rotations = [0, 90, 180, 270] # whole-arrangement rotations
//! arrangement = [
//!   { category = "bed", offset = [0, 0], orientation = 0 },
//!   { category = "nightstand", offset = [4, 0], orientation = 0 },
//! ]
//!
//! [rewards]
//! complexity = [0.4, 0.1]       # r[1] for the largest complexity first
//! success_threshold = 0.9
//! required = ["bed"]
//! ```
//!
//! All cross references are by name; ids are assigned in file order.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{CategoryId, Cell, DomainKind, ObjectCategory, Orientation, PlacementId, Rect, StructureId};

#[derive(Clone, Debug, PartialEq)]
pub struct Structure {
    pub id: StructureId,
    pub name: String,
    pub members: Vec<CategoryId>,
}

impl Structure {
    /// Number of distinct categories among the members.
    pub fn complexity(&self) -> usize {
        self.members.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn contains(&self, category: CategoryId) -> bool {
        self.members.contains(&category)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    /// The row behind the arrangement's bounding box must be solid wall.
    AgainstWall,
    Free,
    /// Blocks drop onto the highest block in their column span or the ground.
    OnGroundColumn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrangementEntry {
    pub category: CategoryId,
    pub offset: Cell,
    pub orientation: Orientation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub id: PlacementId,
    pub structure: StructureId,
    pub arrangement: Vec<ArrangementEntry>,
    pub anchor_rule: AnchorRule,
    pub rotations: Vec<Orientation>,
}

impl Placement {
    pub fn entry(&self, category: CategoryId) -> Option<&ArrangementEntry> {
        self.arrangement.iter().find(|e| e.category == category)
    }

    /// Member rectangle relative to the arrangement origin in the canonical frame.
    fn canonical_rect(&self, entry: &ArrangementEntry, categories: &[ObjectCategory]) -> Rect {
        let (w, h) = categories[entry.category].footprint_at(entry.orientation);
        Rect::new(entry.offset.x, entry.offset.y, w, h)
    }

    /// Rectangle and orientation of `entry` relative to the origin after
    /// rotating the whole arrangement by `rotation`.
    pub fn member_pose(
        &self,
        entry: &ArrangementEntry,
        rotation: Orientation,
        categories: &[ObjectCategory],
    ) -> (Rect, Orientation) {
        (
            self.canonical_rect(entry, categories).rotate(rotation),
            entry.orientation.then(rotation),
        )
    }

    pub fn bounding_box(&self, categories: &[ObjectCategory]) -> Rect {
        let rects: Vec<Rect> = self
            .arrangement
            .iter()
            .map(|e| self.canonical_rect(e, categories))
            .collect();
        let x0 = rects.iter().map(|r| r.x).min().unwrap_or(0);
        let y0 = rects.iter().map(|r| r.y).min().unwrap_or(0);
        let x1 = rects.iter().map(Rect::right).max().unwrap_or(0);
        let y1 = rects.iter().map(Rect::bottom).max().unwrap_or(0);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// The strip of cells directly behind the arrangement (above its bounding
    /// box in the canonical frame), rotated, relative to the origin.
    pub fn back_strip(&self, rotation: Orientation, categories: &[ObjectCategory]) -> Rect {
        let bb = self.bounding_box(categories);
        Rect::new(bb.x, bb.y - 1, bb.w, 1).rotate(rotation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardScheme {
    /// Positive per-complexity rewards in descending order: index 0 pays for
    /// the largest complexity `l`, index `l - 1` for complexity 1.
    pub complexity_rewards: Vec<f64>,
    pub success_threshold: f64,
    pub fail_reward: f64,
    pub count_penalty: f64,
    pub no_slot_penalty: f64,
    pub success_bonus: f64,
    pub required: Vec<CategoryId>,
}

impl RewardScheme {
    pub fn max_complexity(&self) -> usize {
        self.complexity_rewards.len()
    }

    /// Reward for a placement whose resulting group has complexity `c`.
    pub fn for_complexity(&self, c: usize) -> f64 {
        let l = self.max_complexity();
        assert!(c >= 1 && c <= l, "complexity {c} outside 1..={l}");
        self.complexity_rewards[l - c]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    pub domain: DomainKind,
    pub categories: Vec<ObjectCategory>,
    pub structures: Vec<Structure>,
    pub placements: Vec<Placement>,
    pub rewards: RewardScheme,
}

impl Catalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawCatalog = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.resolve()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_id(&self, name: &str) -> Option<CategoryId> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn max_complexity(&self) -> usize {
        self.rewards.max_complexity()
    }

    pub fn placements_of(&self, structure: StructureId) -> impl Iterator<Item = &Placement> {
        self.placements.iter().filter(move |p| p.structure == structure)
    }

    pub fn smallest_footprint_area(&self) -> i32 {
        self.categories
            .iter()
            .map(|c| (c.footprint.0 * c.footprint.1) as i32)
            .min()
            .unwrap_or(1)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    domain: DomainKind,
    #[serde(default)]
    categories: Vec<RawCategory>,
    #[serde(default)]
    structures: Vec<RawStructure>,
    #[serde(default)]
    placements: Vec<RawPlacement>,
    rewards: RawRewards,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCategory {
    name: String,
    footprint: (u32, u32),
    #[serde(default = "all_orientations")]
    orientations: Vec<Orientation>,
    max_count: u32,
    #[serde(default)]
    important: bool,
    #[serde(default)]
    bonus: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStructure {
    name: String,
    members: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlacement {
    structure: String,
    anchor_rule: AnchorRule,
    #[serde(default = "identity_rotation")]
    rotations: Vec<Orientation>,
    arrangement: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    category: String,
    offset: (i32, i32),
    #[serde(default = "zero_orientation")]
    orientation: Orientation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRewards {
    complexity: Vec<f64>,
    success_threshold: f64,
    #[serde(default)]
    required: Vec<String>,
    #[serde(default = "default_fail")]
    fail_reward: f64,
    #[serde(default = "default_penalty")]
    count_penalty: f64,
    #[serde(default = "default_penalty")]
    no_slot_penalty: f64,
    #[serde(default = "default_success")]
    success_bonus: f64,
}

fn all_orientations() -> Vec<Orientation> {
    Orientation::ALL.to_vec()
}

fn identity_rotation() -> Vec<Orientation> {
    vec![Orientation::Deg0]
}

fn zero_orientation() -> Orientation {
    Orientation::Deg0
}

fn default_fail() -> f64 {
    -1.0
}

fn default_penalty() -> f64 {
    -0.1
}

fn default_success() -> f64 {
    1.0
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Catalog(msg.into())
}

impl RawCatalog {
    fn resolve(self) -> Result<Catalog> {
        if self.categories.is_empty() {
            return Err(invalid("catalog has no categories"));
        }
        let mut by_name: HashMap<&str, CategoryId> = HashMap::new();
        let mut categories = Vec::with_capacity(self.categories.len());
        for (id, c) in self.categories.iter().enumerate() {
            if by_name.insert(c.name.as_str(), id).is_some() {
                return Err(invalid(format!("category '{}' defined twice", c.name)));
            }
            if c.footprint.0 == 0 || c.footprint.1 == 0 {
                return Err(invalid(format!("category '{}' has an empty footprint", c.name)));
            }
            if c.max_count == 0 {
                return Err(invalid(format!("category '{}' has max_count 0", c.name)));
            }
            if c.orientations.is_empty() {
                return Err(invalid(format!("category '{}' allows no orientation", c.name)));
            }
            if !(0.0..=1.0).contains(&c.bonus) || c.important != (c.bonus > 0.0) {
                return Err(invalid(format!(
                    "category '{}': bonus must be in (0, 1] exactly when important",
                    c.name
                )));
            }
            categories.push(ObjectCategory {
                id,
                name: c.name.clone(),
                footprint: c.footprint,
                allowed_orientations: c.orientations.clone(),
                max_count: c.max_count,
                important: c.important,
                bonus: c.bonus,
            });
        }
        let lookup = |name: &str, ctx: &str| -> Result<CategoryId> {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| invalid(format!("{ctx} references unknown category '{name}'")))
        };

        if self.structures.is_empty() {
            return Err(invalid("catalog has no structures"));
        }
        let mut structure_ids: HashMap<&str, StructureId> = HashMap::new();
        let mut structures = Vec::with_capacity(self.structures.len());
        for (id, s) in self.structures.iter().enumerate() {
            if structure_ids.insert(s.name.as_str(), id).is_some() {
                return Err(invalid(format!("structure '{}' defined twice", s.name)));
            }
            if s.members.is_empty() {
                return Err(invalid(format!("structure '{}' has no members", s.name)));
            }
            let members = s
                .members
                .iter()
                .map(|m| lookup(m, &format!("structure '{}'", s.name)))
                .collect::<Result<Vec<_>>>()?;
            structures.push(Structure {
                id,
                name: s.name.clone(),
                members,
            });
        }

        let mut placements = Vec::with_capacity(self.placements.len());
        for (id, p) in self.placements.iter().enumerate() {
            let ctx = format!("placement #{id} ('{}')", p.structure);
            let structure = *structure_ids
                .get(p.structure.as_str())
                .ok_or_else(|| invalid(format!("{ctx} references unknown structure")))?;
            let mut arrangement = Vec::with_capacity(p.arrangement.len());
            for e in &p.arrangement {
                let category = lookup(&e.category, &ctx)?;
                if !structures[structure].contains(category) {
                    return Err(invalid(format!(
                        "{ctx}: '{}' is not a member of the structure",
                        e.category
                    )));
                }
                if arrangement.iter().any(|a: &ArrangementEntry| a.category == category) {
                    return Err(invalid(format!("{ctx}: '{}' listed twice", e.category)));
                }
                arrangement.push(ArrangementEntry {
                    category,
                    offset: Cell::new(e.offset.0, e.offset.1),
                    orientation: e.orientation,
                });
            }
            let distinct: BTreeSet<_> = structures[structure].members.iter().copied().collect();
            if distinct.len() != arrangement.len() {
                return Err(invalid(format!("{ctx}: arrangement must cover every member exactly once")));
            }
            if p.rotations.is_empty() {
                return Err(invalid(format!("{ctx}: no rotations")));
            }
            match (p.anchor_rule, self.domain) {
                (AnchorRule::OnGroundColumn, DomainKind::Indoor) | (AnchorRule::AgainstWall, DomainKind::Blocks) => {
                    return Err(invalid(format!("{ctx}: anchor rule not valid for this domain")));
                }
                _ => {}
            }
            let placement = Placement {
                id,
                structure,
                arrangement,
                anchor_rule: p.anchor_rule,
                rotations: p.rotations.clone(),
            };
            for rot in &placement.rotations {
                for e in &placement.arrangement {
                    let orientation = e.orientation.then(*rot);
                    if !categories[e.category].allows(orientation) {
                        return Err(invalid(format!(
                            "{ctx}: '{}' cannot take orientation {} under rotation {}",
                            categories[e.category].name,
                            orientation.degrees(),
                            rot.degrees()
                        )));
                    }
                }
            }
            let rects: Vec<Rect> = placement
                .arrangement
                .iter()
                .map(|e| placement.member_pose(e, Orientation::Deg0, &categories).0)
                .collect();
            for i in 0..rects.len() {
                for j in i + 1..rects.len() {
                    if rects[i].overlaps(&rects[j]) {
                        return Err(invalid(format!("{ctx}: member footprints overlap")));
                    }
                }
            }
            placements.push(placement);
        }
        for s in &structures {
            if !placements.iter().any(|p| p.structure == s.id) {
                return Err(invalid(format!("structure '{}' has no placement", s.name)));
            }
        }

        let l = structures.iter().map(Structure::complexity).max().unwrap_or(0);
        let r = &self.rewards;
        if r.complexity.len() != l {
            return Err(invalid(format!(
                "rewards.complexity has {} entries but the largest structure complexity is {l}",
                r.complexity.len()
            )));
        }
        for (i, v) in r.complexity.iter().enumerate() {
            if !(-1.0..=1.0).contains(v) {
                return Err(invalid(format!("rewards.complexity[{i}] = {v} outside [-1, 1]")));
            }
            if *v <= 0.0 {
                return Err(invalid(format!("rewards.complexity[{i}] = {v} is not positive")));
            }
        }
        for (i, w) in r.complexity.windows(2).enumerate() {
            if w[0] < w[1] {
                return Err(invalid(format!(
                    "rewards.complexity must be descending: entry {} ({}) < entry {} ({})",
                    i,
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        let max_bonus = categories.iter().map(|c| c.bonus).fold(0.0, f64::max);
        if r.complexity[0] + max_bonus > 1.0 {
            return Err(invalid("largest complexity reward plus bonus exceeds 1"));
        }
        for (name, v) in [
            ("fail_reward", r.fail_reward),
            ("count_penalty", r.count_penalty),
            ("no_slot_penalty", r.no_slot_penalty),
            ("success_bonus", r.success_bonus),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(invalid(format!("rewards.{name} = {v} outside [-1, 1]")));
            }
        }
        if !(r.success_threshold > 0.0 && r.success_threshold.is_finite()) {
            return Err(invalid("rewards.success_threshold must be positive"));
        }
        let required = r
            .required
            .iter()
            .map(|n| lookup(n, "rewards.required"))
            .collect::<Result<Vec<_>>>()?;

        Ok(Catalog {
            domain: self.domain,
            categories,
            structures,
            placements,
            rewards: RewardScheme {
                complexity_rewards: r.complexity.clone(),
                success_threshold: r.success_threshold,
                fail_reward: r.fail_reward,
                count_penalty: r.count_penalty,
                no_slot_penalty: r.no_slot_penalty,
                success_bonus: r.success_bonus,
                required,
            },
        })
    }
}
