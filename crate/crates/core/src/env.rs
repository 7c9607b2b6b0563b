//! The scene-generation MDP.
//!
//! Actions are object categories only. Positions are resolved greedily: the
//! environment looks for the highest complexity a new object can reach by
//! joining an existing group (or starting a new one), picks one of the legal
//! positions at that complexity uniformly at random, and pays the reward tied
//! to that complexity.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySpec;
use crate::catalog::{AnchorRule, Catalog};
use crate::constraints::{ConstraintSet, Layout};
use crate::error::{Error, Result};
use crate::scene::{
    CategoryId, Cell, DomainKind, GroupId, GroupInstance, ObjectInstance, Orientation, PlacementId, Rect, Scene,
    SceneBoundary, Status, StructureId,
};

/// Slack for comparing the running reward sum against the success threshold.
const CONDITION_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Step budget per episode.
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    /// Side of the square occupancy map fed to the network.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Overrides the catalog's success threshold when set.
    #[serde(default)]
    pub success_threshold: Option<f64>,
    pub boundary: BoundarySpec,
}

fn default_t_max() -> u32 {
    40
}

fn default_grid() -> usize {
    32
}

impl EnvConfig {
    pub fn new(boundary: BoundarySpec) -> Self {
        EnvConfig {
            t_max: default_t_max(),
            grid: default_grid(),
            success_threshold: None,
            boundary,
        }
    }
}

/// Network-facing observation.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEncoding {
    /// Row-major `grid x grid` map: 0 free, 0.5 blocked, 1 object.
    pub grid: Vec<f64>,
    pub existence: Vec<f64>,
    pub availability: Vec<f64>,
    /// Reward sum divided by the success threshold, clamped to [0, 1.5].
    pub condition: f64,
    pub step_onehot: Vec<f64>,
}

impl StateEncoding {
    /// `existence ‖ availability ‖ condition`.
    pub fn aux(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.existence.len() * 2 + 1);
        v.extend_from_slice(&self.existence);
        v.extend_from_slice(&self.availability);
        v.push(self.condition);
        v
    }
}

/// Shape of the observations an environment produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    pub grid: usize,
    pub n_categories: usize,
    pub t_max: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Placed { complexity: usize },
    NoSlot,
    CountPenalty,
    Success { complexity: usize },
    Failure,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        matches!(self, Outcome::Success { .. } | Outcome::Failure)
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub reward: f64,
    pub next_state: StateEncoding,
    pub done: bool,
    pub outcome: Outcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupTarget {
    Existing(GroupId),
    New {
        structure: StructureId,
        placement: PlacementId,
        rotation: Orientation,
        origin: Cell,
    },
}

/// One legal way to place an object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub target: GroupTarget,
    pub instance: ObjectInstance,
    /// Complexity of the group after placement.
    pub complexity: usize,
}

/// Catalog, constraints and episode limits: everything that decides what a
/// step does, independent of any particular scene.
#[derive(Clone, Debug)]
pub struct Rules {
    pub catalog: Arc<Catalog>,
    pub constraints: ConstraintSet,
    pub t_max: u32,
    pub grid: usize,
    pub success_threshold: f64,
}

impl Rules {
    pub fn new(catalog: Arc<Catalog>, config: &EnvConfig) -> Result<Self> {
        if config.t_max == 0 {
            return Err(Error::Config("t_max must be positive".into()));
        }
        if config.grid == 0 {
            return Err(Error::Config("grid must be positive".into()));
        }
        if config.boundary.domain() != catalog.domain {
            return Err(Error::Config("boundary kind does not match the catalog domain".into()));
        }
        let success_threshold = config
            .success_threshold
            .unwrap_or(catalog.rewards.success_threshold);
        if success_threshold.is_nan() || success_threshold <= 0.0 {
            return Err(Error::Config("success threshold must be positive".into()));
        }
        Ok(Rules {
            constraints: ConstraintSet::for_domain(catalog.domain),
            catalog,
            t_max: config.t_max,
            grid: config.grid,
            success_threshold,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.catalog.n_categories()
    }

    pub fn dims(&self) -> StateDims {
        StateDims {
            grid: self.grid,
            n_categories: self.n_actions(),
            t_max: self.t_max as usize,
        }
    }

    fn layout<'a>(&self, scene: &'a Scene) -> Layout<'a> {
        Layout::from_scene(scene, &self.catalog)
    }

    /// Positions that fit and satisfy the anchor rule, before the
    /// scene-level constraints are consulted.
    fn raw_candidates(&self, scene: &Scene, layout: &Layout, action: CategoryId, c: usize) -> Vec<Candidate> {
        let cat = &self.catalog;
        let category = &cat.categories[action];
        let mut out = Vec::new();
        if c >= 2 {
            for g in &scene.groups {
                if g.complexity() != c - 1 || g.placed.contains(&action) {
                    continue;
                }
                if !cat.structures[g.structure].contains(action) {
                    continue;
                }
                let placement = &cat.placements[g.placement];
                let Some(entry) = placement.entry(action) else { continue };
                let (rel, orientation) = placement.member_pose(entry, g.rotation, &cat.categories);
                let rect = rel.translate(g.anchor);
                if cat.domain == DomainKind::Blocks && layout.drop_row(rect.x, rect.w, rect.h) != rect.y {
                    continue;
                }
                if layout.fits(&rect) {
                    out.push(Candidate {
                        target: GroupTarget::Existing(g.id),
                        instance: ObjectInstance {
                            category: action,
                            anchor: rect.top_left(),
                            orientation,
                            group: Some(g.id),
                        },
                        complexity: c,
                    });
                }
            }
            return out;
        }

        let b = &scene.boundary;
        for structure in cat.structures.iter().filter(|s| s.contains(action)) {
            for placement in cat.placements_of(structure.id) {
                let Some(entry) = placement.entry(action) else { continue };
                for &rotation in &placement.rotations {
                    let (rel, orientation) = placement.member_pose(entry, rotation, &cat.categories);
                    if !category.allows(orientation) {
                        continue;
                    }
                    let back = placement.back_strip(rotation, &cat.categories);
                    let push = |rect: Rect, out: &mut Vec<Candidate>| {
                        let origin = Cell::new(rect.x - rel.x, rect.y - rel.y);
                        if placement.anchor_rule == AnchorRule::AgainstWall
                            && !back_against_wall(b, &back.translate(origin))
                        {
                            return;
                        }
                        out.push(Candidate {
                            target: GroupTarget::New {
                                structure: structure.id,
                                placement: placement.id,
                                rotation,
                                origin,
                            },
                            instance: ObjectInstance {
                                category: action,
                                anchor: rect.top_left(),
                                orientation,
                                group: None,
                            },
                            complexity: 1,
                        });
                    };
                    match cat.domain {
                        DomainKind::Indoor => {
                            for y in 0..=(b.height as i32 - rel.h) {
                                for x in 0..=(b.width as i32 - rel.w) {
                                    let rect = Rect::new(x, y, rel.w, rel.h);
                                    if layout.fits(&rect) {
                                        push(rect, &mut out);
                                    }
                                }
                            }
                        }
                        DomainKind::Blocks => {
                            for x in 0..=(b.width as i32 - rel.w) {
                                let y = layout.drop_row(x, rel.w, rel.h);
                                let rect = Rect::new(x, y, rel.w, rel.h);
                                if y >= 0 && layout.fits(&rect) {
                                    push(rect, &mut out);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn admitted(&self, layout: &Layout, cand: &Candidate) -> bool {
        let rect = cand.instance.rect(&self.catalog.categories[cand.instance.category]);
        self.constraints.admits(layout, &rect)
    }

    /// Every legal placement of `action` whose resulting group has
    /// complexity exactly `c`.
    pub fn search(&self, scene: &Scene, action: CategoryId, c: usize) -> Vec<Candidate> {
        assert!(
            c >= 1 && c <= self.catalog.max_complexity(),
            "complexity {c} out of range"
        );
        let layout = self.layout(scene);
        self.raw_candidates(scene, &layout, action, c)
            .into_iter()
            .filter(|cand| self.admitted(&layout, cand))
            .collect()
    }

    /// A uniformly random element of `search(scene, action, c)`.
    ///
    /// Draws a random permutation of the unconstrained positions and returns
    /// the first that passes the constraints, which avoids evaluating the
    /// expensive checks on every position.
    pub fn pick(&self, scene: &Scene, action: CategoryId, c: usize, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let layout = self.layout(scene);
        let mut raw = self.raw_candidates(scene, &layout, action, c);
        raw.shuffle(rng);
        raw.into_iter().find(|cand| self.admitted(&layout, cand))
    }

    /// Highest complexity at which `action` has a legal placement.
    pub fn best_complexity(&self, scene: &Scene, action: CategoryId) -> Option<usize> {
        let layout = self.layout(scene);
        (1..=self.catalog.max_complexity()).rev().find(|&c| {
            self.raw_candidates(scene, &layout, action, c)
                .iter()
                .any(|cand| self.admitted(&layout, cand))
        })
    }

    fn is_available(&self, scene: &Scene, action: CategoryId) -> bool {
        scene.count(action) < self.catalog.categories[action].max_count as usize
    }

    pub fn availability(&self, scene: &Scene) -> Vec<bool> {
        (0..self.n_actions()).map(|a| self.is_available(scene, a)).collect()
    }

    pub fn check_success(&self, scene: &Scene) -> bool {
        scene.condition + CONDITION_EPS >= self.success_threshold
            && self
                .catalog
                .rewards
                .required
                .iter()
                .all(|c| scene.contains_category(*c))
    }

    /// Budget exhausted, or no available category fits anywhere.
    pub fn check_failure(&self, scene: &Scene) -> bool {
        if scene.step >= self.t_max {
            return true;
        }
        let layout = self.layout(scene);
        let l = self.catalog.max_complexity();
        let feasible = (0..self.n_actions())
            .filter(|a| self.is_available(scene, *a))
            .any(|a| {
                (1..=l).any(|c| {
                    self.raw_candidates(scene, &layout, a, c)
                        .iter()
                        .any(|cand| self.admitted(&layout, cand))
                })
            });
        !feasible
    }

    fn commit(&self, scene: &mut Scene, cand: Candidate) {
        let action = cand.instance.category;
        let group = match cand.target {
            GroupTarget::Existing(id) => {
                scene.groups[id].placed.insert(action);
                id
            }
            GroupTarget::New {
                structure,
                placement,
                rotation,
                origin,
            } => {
                let id = scene.groups.len();
                scene.groups.push(GroupInstance {
                    id,
                    structure,
                    placement,
                    anchor: origin,
                    rotation,
                    placed: [action].into_iter().collect(),
                });
                id
            }
        };
        scene.instances.push(ObjectInstance {
            group: Some(group),
            ..cand.instance
        });
    }

    fn first_time_bonus(&self, scene: &Scene, action: CategoryId) -> f64 {
        let category = &self.catalog.categories[action];
        if category.important && !scene.contains_category(action) {
            category.bonus
        } else {
            0.0
        }
    }

    /// Applies one action to `scene` following the reward assignment
    /// procedure: failure check, count check, then a descending-complexity
    /// search that commits the first legal placement found.
    pub fn assign_reward_and_place(
        &self,
        scene: &mut Scene,
        action: CategoryId,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Outcome)> {
        if scene.status != Status::InProgress {
            return Err(Error::EpisodeOver);
        }
        if action >= self.n_actions() {
            return Err(Error::UnknownCategory(action));
        }
        let rewards = &self.catalog.rewards;
        let (reward, outcome) = if self.check_failure(scene) {
            scene.status = Status::Failure;
            (rewards.fail_reward, Outcome::Failure)
        } else if !self.is_available(scene, action) {
            (rewards.count_penalty, Outcome::CountPenalty)
        } else {
            let l = rewards.max_complexity();
            let found = (1..=l)
                .rev()
                .find_map(|c| self.pick(scene, action, c, rng).map(|cand| (c, cand)));
            match found {
                Some((c, cand)) => {
                    let gained = rewards.for_complexity(c) + self.first_time_bonus(scene, action);
                    self.commit(scene, cand);
                    scene.condition += gained;
                    scene.step += 1;
                    if self.check_success(scene) {
                        scene.condition += rewards.success_bonus;
                        scene.status = Status::Success;
                        return Ok((rewards.success_bonus + gained, Outcome::Success { complexity: c }));
                    }
                    return Ok((gained, Outcome::Placed { complexity: c }));
                }
                None => (rewards.no_slot_penalty, Outcome::NoSlot),
            }
        };
        scene.condition += reward;
        scene.step += 1;
        Ok((reward, outcome))
    }

    /// The reward `assign_reward_and_place` would pay for `action`, computed
    /// without touching the scene or any random state.
    pub fn hypothetical_reward(&self, scene: &Scene, action: CategoryId) -> f64 {
        let rewards = &self.catalog.rewards;
        if scene.status != Status::InProgress || self.check_failure(scene) {
            return rewards.fail_reward;
        }
        if !self.is_available(scene, action) {
            return rewards.count_penalty;
        }
        let Some(c) = self.best_complexity(scene, action) else {
            return rewards.no_slot_penalty;
        };
        let gained = rewards.for_complexity(c) + self.first_time_bonus(scene, action);
        let succeeds = scene.condition + gained + CONDITION_EPS >= self.success_threshold
            && rewards
                .required
                .iter()
                .all(|r| *r == action || scene.contains_category(*r));
        if succeeds {
            rewards.success_bonus + gained
        } else {
            gained
        }
    }

    pub fn encode(&self, scene: &Scene) -> StateEncoding {
        let g = self.grid;
        let b = &scene.boundary;
        let pool = b.width.max(b.height).div_ceil(g).max(1);
        let mut cells = vec![0.0; b.width * b.height];
        for (i, u) in b.usable.iter().enumerate() {
            if !u {
                cells[i] = 0.5;
            }
        }
        for r in scene.rects(&self.catalog) {
            for c in r.cells() {
                if let Some(i) = b.index(c) {
                    cells[i] = 1.0;
                }
            }
        }
        let mut grid = vec![0.0; g * g];
        for y in 0..b.height {
            for x in 0..b.width {
                let (gx, gy) = (x / pool, y / pool);
                if gx < g && gy < g {
                    let slot = &mut grid[gy * g + gx];
                    *slot = f64::max(*slot, cells[y * b.width + x]);
                }
            }
        }
        let n = self.n_actions();
        let existence = (0..n)
            .map(|a| if scene.contains_category(a) { 1.0 } else { 0.0 })
            .collect();
        let availability = (0..n)
            .map(|a| if self.is_available(scene, a) { 1.0 } else { 0.0 })
            .collect();
        let mut step_onehot = vec![0.0; self.t_max as usize];
        let idx = (scene.step as usize).min(step_onehot.len() - 1);
        step_onehot[idx] = 1.0;
        StateEncoding {
            grid,
            existence,
            availability,
            condition: (scene.condition / self.success_threshold).clamp(0.0, 1.5),
            step_onehot,
        }
    }
}

fn back_against_wall(b: &SceneBoundary, strip: &Rect) -> bool {
    strip
        .cells()
        .all(|c| !b.is_usable(c) && !b.doors.contains(&c))
}

/// A running environment: rules plus the current scene and its random stream.
#[derive(Clone, Debug)]
pub struct Env {
    rules: Rules,
    boundary: BoundarySpec,
    scene: Scene,
    rng: ChaCha8Rng,
}

impl Env {
    pub fn new(catalog: Arc<Catalog>, config: &EnvConfig, seed: u64) -> Result<Self> {
        let rules = Rules::new(catalog, config)?;
        config.boundary.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = Scene::new(config.boundary.sample(&mut rng)?);
        Ok(Env {
            rules,
            boundary: config.boundary.clone(),
            scene,
            rng,
        })
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn catalog(&self) -> &Catalog {
        &self.rules.catalog
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn dims(&self) -> StateDims {
        self.rules.dims()
    }

    pub fn n_actions(&self) -> usize {
        self.rules.n_actions()
    }

    /// Restarts the random stream; the next `reset` draws from it.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// Starts a new episode on a freshly sampled boundary.
    pub fn reset(&mut self) -> Result<StateEncoding> {
        let boundary = self.boundary.sample(&mut self.rng)?;
        Ok(self.reset_with(boundary))
    }

    /// Starts a new episode on the given boundary.
    pub fn reset_with(&mut self, boundary: SceneBoundary) -> StateEncoding {
        self.scene = Scene::new(boundary);
        self.encode()
    }

    /// Replaces the current scene, e.g. to continue from a constructed state.
    pub fn load_scene(&mut self, scene: Scene) {
        self.scene = scene;
    }

    pub fn encode(&self) -> StateEncoding {
        self.rules.encode(&self.scene)
    }

    pub fn step(&mut self, action: CategoryId) -> Result<StepResult> {
        let (reward, outcome) = self
            .rules
            .assign_reward_and_place(&mut self.scene, action, &mut self.rng)?;
        Ok(StepResult {
            reward,
            next_state: self.encode(),
            done: outcome.is_terminal(),
            outcome,
        })
    }

    pub fn search(&self, action: CategoryId, c: usize) -> Vec<Candidate> {
        self.rules.search(&self.scene, action, c)
    }

    pub fn check_success(&self) -> bool {
        self.rules.check_success(&self.scene)
    }

    pub fn check_failure(&self) -> bool {
        self.rules.check_failure(&self.scene)
    }

    pub fn hypothetical_reward(&self, action: CategoryId) -> f64 {
        self.rules.hypothetical_reward(&self.scene, action)
    }
}
