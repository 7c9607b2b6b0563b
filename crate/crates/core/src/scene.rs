//! Scene domain types: grid geometry, object instances, groups and the scene
//! itself.
//!
//! Coordinates are integer grid cells with `x` growing to the right and `y`
//! growing downward. An object is anchored at the top-left cell of its
//! axis-aligned bounding box.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

pub type CategoryId = usize;
pub type StructureId = usize;
pub type PlacementId = usize;
pub type GroupId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            self.offset(1, 0),
            self.offset(-1, 0),
            self.offset(0, 1),
            self.offset(0, -1),
        ]
    }
}

/// Axis-aligned quarter turn, clockwise in screen coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Orientation {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Deg0,
        Orientation::Deg90,
        Orientation::Deg180,
        Orientation::Deg270,
    ];

    pub fn degrees(self) -> u16 {
        self.quarter_turns() as u16 * 90
    }

    pub fn quarter_turns(self) -> u8 {
        match self {
            Orientation::Deg0 => 0,
            Orientation::Deg90 => 1,
            Orientation::Deg180 => 2,
            Orientation::Deg270 => 3,
        }
    }

    pub fn from_quarter_turns(turns: u8) -> Self {
        Orientation::ALL[(turns % 4) as usize]
    }

    pub fn from_degrees(degrees: u16) -> Option<Self> {
        if !degrees.is_multiple_of(90) || degrees >= 360 {
            return None;
        }
        Some(Self::from_quarter_turns((degrees / 90) as u8))
    }

    /// Composition of two rotations.
    pub fn then(self, other: Orientation) -> Self {
        Self::from_quarter_turns(self.quarter_turns() + other.quarter_turns())
    }

    pub fn swaps_axes(self) -> bool {
        self.quarter_turns() % 2 == 1
    }
}

impl TryFrom<u16> for Orientation {
    type Error = String;

    fn try_from(value: u16) -> std::result::Result<Self, Self::Error> {
        Orientation::from_degrees(value)
            .ok_or_else(|| format!("orientation must be 0, 90, 180 or 270 (got {value})"))
    }
}

impl From<Orientation> for u16 {
    fn from(value: Orientation) -> Self {
        value.degrees()
    }
}

/// Half-open cell rectangle `[x, x + w) x [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl Rect {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn top_left(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    pub fn right(&self) -> i32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i32 {
        self.y + self.h
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= self.x && cell.x < self.right() && cell.y >= self.y && cell.y < self.bottom()
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    pub fn translate(&self, by: Cell) -> Rect {
        Rect::new(self.x + by.x, self.y + by.y, self.w, self.h)
    }

    /// Rotates the rectangle about the origin by `rot` clockwise quarter turns.
    pub fn rotate(&self, rot: Orientation) -> Rect {
        let mut r = *self;
        for _ in 0..rot.quarter_turns() {
            // (x, y) -> (-y, x) maps [x0, x1) x [y0, y1) onto [-y1, -y0) x [x0, x1).
            r = Rect::new(-r.y - r.h, r.x, r.h, r.w);
        }
        r
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.y..self.bottom()).flat_map(move |y| (self.x..self.right()).map(move |x| Cell::new(x, y)))
    }

    /// Cells that share an edge with the rectangle but are not inside it.
    pub fn border_cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(2 * (self.w + self.h) as usize);
        for x in self.x..self.right() {
            out.push(Cell::new(x, self.y - 1));
            out.push(Cell::new(x, self.bottom()));
        }
        for y in self.y..self.bottom() {
            out.push(Cell::new(self.x - 1, y));
            out.push(Cell::new(self.right(), y));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Indoor,
    Blocks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectCategory {
    pub id: CategoryId,
    pub name: String,
    /// `(width, height)` at orientation 0.
    pub footprint: (u32, u32),
    pub allowed_orientations: Vec<Orientation>,
    pub max_count: u32,
    pub important: bool,
    pub bonus: f64,
}

impl ObjectCategory {
    pub fn footprint_at(&self, orientation: Orientation) -> (i32, i32) {
        let (w, h) = (self.footprint.0 as i32, self.footprint.1 as i32);
        if orientation.swaps_axes() {
            (h, w)
        } else {
            (w, h)
        }
    }

    pub fn allows(&self, orientation: Orientation) -> bool {
        self.allowed_orientations.contains(&orientation)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: CategoryId,
    pub anchor: Cell,
    pub orientation: Orientation,
    pub group: Option<GroupId>,
}

impl ObjectInstance {
    pub fn rect(&self, category: &ObjectCategory) -> Rect {
        let (w, h) = category.footprint_at(self.orientation);
        Rect::new(self.anchor.x, self.anchor.y, w, h)
    }
}

/// Grid cells covered by `instance`.
pub fn occupied_cells(instance: &ObjectInstance, categories: &[ObjectCategory]) -> Result<BTreeSet<Cell>> {
    let category = categories
        .get(instance.category)
        .ok_or(Error::UnknownCategory(instance.category))?;
    Ok(instance.rect(category).cells().collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneBoundary {
    pub width: usize,
    pub height: usize,
    /// Row-major usability mask, `true` for usable cells.
    pub usable: Vec<bool>,
    /// Wall cells holding a door; each fronts exactly one usable cell.
    pub doors: Vec<Cell>,
    pub windows: Vec<Cell>,
    pub domain: DomainKind,
}

impl SceneBoundary {
    /// Fully usable grid, as used by the blocks domain.
    pub fn open(width: usize, height: usize, domain: DomainKind) -> Self {
        SceneBoundary {
            width,
            height,
            usable: vec![true; width * height],
            doors: Vec::new(),
            windows: Vec::new(),
            domain,
        }
    }

    pub fn in_grid(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.in_grid(cell)
            .then(|| cell.y as usize * self.width + cell.x as usize)
    }

    pub fn is_usable(&self, cell: Cell) -> bool {
        self.index(cell).is_some_and(|i| self.usable[i])
    }

    pub fn usable_count(&self) -> usize {
        self.usable.iter().filter(|u| **u).count()
    }

    /// The usable cell directly in front of a door, if any.
    pub fn fronting_cell(&self, door: Cell) -> Option<Cell> {
        door.neighbors4().into_iter().find(|c| self.is_usable(*c))
    }

    /// Blocked cells that share an edge with at least one usable cell.
    pub fn perimeter(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                if !self.is_usable(c) && c.neighbors4().iter().any(|n| self.is_usable(*n)) {
                    out.push(c);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupInstance {
    pub id: GroupId,
    pub structure: StructureId,
    pub placement: PlacementId,
    /// Scene position of the arrangement origin. Equals the anchor of the
    /// first-placed member when that member sits at offset (0, 0).
    pub anchor: Cell,
    pub rotation: Orientation,
    pub placed: BTreeSet<CategoryId>,
}

impl GroupInstance {
    pub fn complexity(&self) -> usize {
        self.placed.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    InProgress,
    Success,
    Failure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub boundary: SceneBoundary,
    pub instances: Vec<ObjectInstance>,
    pub groups: Vec<GroupInstance>,
    /// Running sum of every reward granted this episode.
    pub condition: f64,
    pub step: u32,
    pub status: Status,
}

impl Scene {
    pub fn new(boundary: SceneBoundary) -> Self {
        Scene {
            boundary,
            instances: Vec::new(),
            groups: Vec::new(),
            condition: 0.0,
            step: 0,
            status: Status::InProgress,
        }
    }

    pub fn count(&self, category: CategoryId) -> usize {
        self.instances.iter().filter(|i| i.category == category).count()
    }

    pub fn contains_category(&self, category: CategoryId) -> bool {
        self.instances.iter().any(|i| i.category == category)
    }

    pub fn category_counts(&self, n_categories: usize) -> Vec<usize> {
        let mut counts = vec![0; n_categories];
        for inst in &self.instances {
            if let Some(c) = counts.get_mut(inst.category) {
                *c += 1;
            }
        }
        counts
    }

    pub fn max_group_complexity(&self) -> usize {
        self.groups.iter().map(GroupInstance::complexity).max().unwrap_or(0)
    }

    pub fn rects<'a>(&'a self, catalog: &'a Catalog) -> impl Iterator<Item = Rect> + 'a {
        self.instances
            .iter()
            .map(move |i| i.rect(&catalog.categories[i.category]))
    }
}
