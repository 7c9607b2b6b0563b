//! Hard constraints. Every checker is a pure predicate over a scene layout;
//! the environment runs them before committing any placement.

use std::collections::VecDeque;
use std::fmt;

use crate::catalog::Catalog;
use crate::scene::{Cell, DomainKind, ObjectInstance, Rect, Scene, SceneBoundary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// Footprints stay on usable cells and never overlap.
    Collision,
    /// Footprints stay inside the grid.
    InBounds,
    /// All door fronting cells lie in one free connected region.
    Walkability,
    /// Every object touches a free cell reachable from a door.
    Accessibility,
    /// The cell in front of every door stays free.
    DoorBlock,
    /// Blocks rest on support and their loads balance over the contact span.
    Stability,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Collision { instance: usize },
    OutOfBounds { instance: usize },
    Unwalkable { door: Cell },
    Inaccessible { instance: usize },
    DoorBlocked { door: Cell },
    Unsupported { instance: usize },
    Unstable { instance: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Collision { instance } => write!(f, "instance {instance} collides"),
            Violation::OutOfBounds { instance } => write!(f, "instance {instance} leaves the grid"),
            Violation::Unwalkable { door } => write!(f, "door at ({}, {}) is cut off", door.x, door.y),
            Violation::Inaccessible { instance } => write!(f, "instance {instance} is not reachable"),
            Violation::DoorBlocked { door } => write!(f, "door at ({}, {}) is blocked", door.x, door.y),
            Violation::Unsupported { instance } => write!(f, "block {instance} floats"),
            Violation::Unstable { instance } => write!(f, "block {instance} topples"),
        }
    }
}

pub type Check = Result<(), Violation>;

/// Occupancy view of a scene: boundary plus the footprint rectangles of all
/// instances, in instance order.
#[derive(Clone, Debug)]
pub struct Layout<'a> {
    pub boundary: &'a SceneBoundary,
    pub rects: Vec<Rect>,
    occupied: Vec<bool>,
}

impl<'a> Layout<'a> {
    pub fn new(boundary: &'a SceneBoundary, rects: Vec<Rect>) -> Self {
        let mut occupied = vec![false; boundary.width * boundary.height];
        for r in &rects {
            for c in r.cells() {
                if let Some(i) = boundary.index(c) {
                    occupied[i] = true;
                }
            }
        }
        Layout {
            boundary,
            rects,
            occupied,
        }
    }

    pub fn from_scene(scene: &'a Scene, catalog: &Catalog) -> Self {
        Self::new(&scene.boundary, scene.rects(catalog).collect())
    }

    /// The layout after adding `rect` as the newest instance.
    pub fn with(&self, rect: Rect) -> Layout<'a> {
        let mut next = self.clone();
        for c in rect.cells() {
            if let Some(i) = next.boundary.index(c) {
                next.occupied[i] = true;
            }
        }
        next.rects.push(rect);
        next
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.boundary.index(cell).is_some_and(|i| self.occupied[i])
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.boundary
            .index(cell)
            .is_some_and(|i| self.boundary.usable[i] && !self.occupied[i])
    }

    /// True iff `rect` lies on usable, unoccupied cells.
    pub fn fits(&self, rect: &Rect) -> bool {
        rect.cells().all(|c| self.is_free(c))
    }

    /// Free cells reachable from the free door-fronting cells, 4-connected.
    fn reachable_from(&self, starts: &[Cell]) -> Vec<bool> {
        let b = self.boundary;
        let mut seen = vec![false; b.width * b.height];
        let mut queue = VecDeque::new();
        for s in starts {
            if self.is_free(*s) {
                let i = b.index(*s).unwrap();
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(*s);
                }
            }
        }
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors4() {
                if self.is_free(n) {
                    let i = b.index(n).unwrap();
                    if !seen[i] {
                        seen[i] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    fn door_fronts(&self) -> Vec<(Cell, Option<Cell>)> {
        self.boundary
            .doors
            .iter()
            .map(|d| (*d, self.boundary.fronting_cell(*d)))
            .collect()
    }

    /// Ground level for the blocks domain: one row below the grid.
    pub fn ground(&self) -> i32 {
        self.boundary.height as i32
    }

    /// Top row at which a block of size `w x h` comes to rest when dropped
    /// with its left edge at column `x`.
    pub fn drop_row(&self, x: i32, w: i32, h: i32) -> i32 {
        let mut floor = self.ground();
        for r in &self.rects {
            if r.x < x + w && x < r.right() {
                floor = floor.min(r.y);
            }
        }
        floor - h
    }
}

pub fn collision_on(layout: &Layout) -> Check {
    let b = layout.boundary;
    let mut owner: Vec<Option<usize>> = vec![None; b.width * b.height];
    for (k, r) in layout.rects.iter().enumerate() {
        for c in r.cells() {
            let Some(i) = b.index(c) else {
                return Err(Violation::Collision { instance: k });
            };
            if !b.usable[i] || owner[i].is_some() {
                return Err(Violation::Collision { instance: k });
            }
            owner[i] = Some(k);
        }
    }
    Ok(())
}

pub fn in_bounds_on(layout: &Layout) -> Check {
    for (k, r) in layout.rects.iter().enumerate() {
        if !r.cells().all(|c| layout.boundary.is_usable(c)) {
            return Err(Violation::OutOfBounds { instance: k });
        }
    }
    Ok(())
}

pub fn door_block_on(layout: &Layout) -> Check {
    for (door, front) in layout.door_fronts() {
        match front {
            Some(f) if !layout.is_occupied(f) => {}
            _ => return Err(Violation::DoorBlocked { door }),
        }
    }
    Ok(())
}

pub fn walkability_on(layout: &Layout) -> Check {
    let fronts = layout.door_fronts();
    let Some((_, Some(first))) = fronts.first().copied() else {
        return Ok(());
    };
    let seen = layout.reachable_from(&[first]);
    for (door, front) in fronts {
        let ok = front
            .and_then(|f| layout.boundary.index(f))
            .is_some_and(|i| seen[i]);
        if !ok {
            return Err(Violation::Unwalkable { door });
        }
    }
    Ok(())
}

pub fn accessibility_on(layout: &Layout) -> Check {
    if layout.boundary.doors.is_empty() || layout.rects.is_empty() {
        return Ok(());
    }
    let starts: Vec<Cell> = layout.door_fronts().into_iter().filter_map(|(_, f)| f).collect();
    let seen = layout.reachable_from(&starts);
    for (k, r) in layout.rects.iter().enumerate() {
        let reachable = r
            .border_cells()
            .into_iter()
            .any(|c| layout.boundary.index(c).is_some_and(|i| seen[i]));
        if !reachable {
            return Err(Violation::Inaccessible { instance: k });
        }
    }
    Ok(())
}

/// Quasi-static stability of a block pile.
///
/// A block's load is the block itself plus the loads of blocks that rest on
/// it and on nothing else. The load's center of mass (unit density) must lie
/// strictly inside the horizontal hull of the block's contacts with the
/// ground or with the blocks directly beneath it.
pub fn stability_on(layout: &Layout) -> Check {
    let rects = &layout.rects;
    let ground = layout.ground();
    let n = rects.len();
    let mut supporters: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut span: Vec<Option<(i32, i32)>> = vec![None; n];
    for (i, b) in rects.iter().enumerate() {
        if b.bottom() == ground {
            span[i] = Some((b.x, b.right()));
            continue;
        }
        for (j, u) in rects.iter().enumerate() {
            if i == j || u.y != b.bottom() {
                continue;
            }
            let lo = b.x.max(u.x);
            let hi = b.right().min(u.right());
            if lo < hi {
                supporters[i].push(j);
                span[i] = Some(match span[i] {
                    None => (lo, hi),
                    Some((a, z)) => (a.min(lo), z.max(hi)),
                });
            }
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, sup) in supporters.iter().enumerate() {
        if let [only] = sup[..] {
            children[only].push(i);
        }
    }
    // (mass, 2 * first moment) in exact integer arithmetic.
    fn load(i: usize, rects: &[Rect], children: &[Vec<usize>]) -> (i64, i64) {
        let r = &rects[i];
        let area = (r.w * r.h) as i64;
        let mut acc = (area, area * (2 * r.x + r.w) as i64);
        for &c in &children[i] {
            let (m, mom) = load(c, rects, children);
            acc.0 += m;
            acc.1 += mom;
        }
        acc
    }
    for (i, s) in span.iter().enumerate() {
        let Some((lo, hi)) = *s else {
            return Err(Violation::Unsupported { instance: i });
        };
        let (mass, moment2) = load(i, rects, &children);
        if !(2 * lo as i64 * mass < moment2 && moment2 < 2 * hi as i64 * mass) {
            return Err(Violation::Unstable { instance: i });
        }
    }
    Ok(())
}

pub fn check_collision(scene: &Scene, catalog: &Catalog, candidate: &ObjectInstance) -> Check {
    let layout = Layout::from_scene(scene, catalog);
    let rect = candidate.rect(&catalog.categories[candidate.category]);
    if layout.fits(&rect) {
        Ok(())
    } else {
        Err(Violation::Collision {
            instance: scene.instances.len(),
        })
    }
}

pub fn check_accessibility(scene: &Scene, catalog: &Catalog) -> Check {
    accessibility_on(&Layout::from_scene(scene, catalog))
}

pub fn check_door_block(scene: &Scene, catalog: &Catalog) -> Check {
    door_block_on(&Layout::from_scene(scene, catalog))
}

pub fn check_walkability(scene: &Scene, catalog: &Catalog) -> Check {
    walkability_on(&Layout::from_scene(scene, catalog))
}

pub fn check_stability(scene: &Scene, catalog: &Catalog) -> Check {
    stability_on(&Layout::from_scene(scene, catalog))
}

/// Ordered checkers enabled for a domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintSet {
    checks: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(checks: Vec<Constraint>) -> Self {
        assert!(!checks.is_empty(), "constraint set must not be empty");
        ConstraintSet { checks }
    }

    pub fn for_domain(domain: DomainKind) -> Self {
        match domain {
            DomainKind::Indoor => Self::new(vec![
                Constraint::Collision,
                Constraint::DoorBlock,
                Constraint::Walkability,
                Constraint::Accessibility,
            ]),
            DomainKind::Blocks => Self::new(vec![
                Constraint::InBounds,
                Constraint::Collision,
                Constraint::Stability,
            ]),
        }
    }

    pub fn checks(&self) -> &[Constraint] {
        &self.checks
    }

    pub fn check_layout(&self, layout: &Layout) -> Check {
        for c in &self.checks {
            match c {
                Constraint::Collision => collision_on(layout)?,
                Constraint::InBounds => in_bounds_on(layout)?,
                Constraint::Walkability => walkability_on(layout)?,
                Constraint::Accessibility => accessibility_on(layout)?,
                Constraint::DoorBlock => door_block_on(layout)?,
                Constraint::Stability => stability_on(layout)?,
            }
        }
        Ok(())
    }

    /// Full re-check of a scene from scratch.
    pub fn audit(&self, scene: &Scene, catalog: &Catalog) -> Check {
        self.check_layout(&Layout::from_scene(scene, catalog))
    }

    /// Whether adding `rect` to a layout that already satisfies the set keeps
    /// it satisfied. Collision is checked against the occupancy grid only, so
    /// the result matches `check_layout` on the extended layout whenever the
    /// base layout is valid.
    pub fn admits(&self, layout: &Layout, rect: &Rect) -> bool {
        if !layout.fits(rect) {
            return false;
        }
        let next = layout.with(*rect);
        self.checks.iter().all(|c| match c {
            Constraint::Collision | Constraint::InBounds => true,
            Constraint::Walkability => walkability_on(&next).is_ok(),
            Constraint::Accessibility => accessibility_on(&next).is_ok(),
            Constraint::DoorBlock => door_block_on(&next).is_ok(),
            Constraint::Stability => stability_on(&next).is_ok(),
        })
    }
}
