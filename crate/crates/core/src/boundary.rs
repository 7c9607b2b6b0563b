//! Scene boundary generators.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Cell, DomainKind, SceneBoundary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    /// Fixed rectangular room: `width x height` interior cells surrounded by
    /// a one-cell wall, door centred on the left wall.
    Rect { width: usize, height: usize },
    /// Random rectilinear rooms on a fixed canvas of `max_side + 2` cells.
    RandomRooms {
        min_side: usize,
        max_side: usize,
        #[serde(default = "default_notches")]
        max_notches: usize,
        #[serde(default = "default_windows")]
        max_windows: usize,
    },
    /// Open side-view area for block stacking; ground lies below the last row.
    Blocks { width: usize, height: usize },
}

fn default_notches() -> usize {
    2
}

fn default_windows() -> usize {
    2
}

impl BoundarySpec {
    pub fn domain(&self) -> DomainKind {
        match self {
            BoundarySpec::Blocks { .. } => DomainKind::Blocks,
            _ => DomainKind::Indoor,
        }
    }

    /// Grid dimensions every sampled boundary shares.
    pub fn canvas(&self) -> (usize, usize) {
        match *self {
            BoundarySpec::Rect { width, height } => (width + 2, height + 2),
            BoundarySpec::RandomRooms { max_side, .. } => (max_side + 2, max_side + 2),
            BoundarySpec::Blocks { width, height } => (width, height),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundarySpec::Rect { width, height } | BoundarySpec::Blocks { width, height } => {
                if width == 0 || height == 0 {
                    return Err(Error::Config("boundary has no usable cells".into()));
                }
            }
            BoundarySpec::RandomRooms {
                min_side, max_side, ..
            } => {
                if min_side < 3 || min_side > max_side {
                    return Err(Error::Config(format!(
                        "random rooms need 3 <= min_side <= max_side (got {min_side}..{max_side})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SceneBoundary> {
        self.validate()?;
        let b = match *self {
            BoundarySpec::Rect { width, height } => {
                let mut b = walled_room(width + 2, height + 2, width, height);
                b.doors.push(Cell::new(0, 1 + height as i32 / 2));
                b.windows.push(Cell::new(1 + width as i32 / 2, 0));
                b
            }
            BoundarySpec::RandomRooms {
                min_side,
                max_side,
                max_notches,
                max_windows,
            } => random_room(rng, min_side, max_side, max_notches, max_windows),
            BoundarySpec::Blocks { width, height } => SceneBoundary::open(width, height, DomainKind::Blocks),
        };
        if b.usable_count() == 0 {
            return Err(Error::Config("boundary has no usable cells".into()));
        }
        Ok(b)
    }
}

/// Canvas of `cw x ch` with a `w x h` usable interior at (1, 1).
fn walled_room(cw: usize, ch: usize, w: usize, h: usize) -> SceneBoundary {
    let mut b = SceneBoundary::open(cw, ch, DomainKind::Indoor);
    for y in 0..ch {
        for x in 0..cw {
            b.usable[y * cw + x] = x >= 1 && y >= 1 && x <= w && y <= h;
        }
    }
    b
}

/// Wall cells with exactly one usable neighbour: straight wall segments.
fn straight_wall_cells(b: &SceneBoundary) -> Vec<Cell> {
    b.perimeter()
        .into_iter()
        .filter(|c| c.neighbors4().iter().filter(|n| b.is_usable(**n)).count() == 1)
        .filter(|c| {
            // Exclude inner corners of notches: both diagonal partners usable.
            let diag = [c.offset(1, 1), c.offset(-1, 1), c.offset(1, -1), c.offset(-1, -1)];
            diag.iter().filter(|d| b.is_usable(**d)).count() <= 2
        })
        .collect()
}

fn random_room<R: Rng + ?Sized>(
    rng: &mut R,
    min_side: usize,
    max_side: usize,
    max_notches: usize,
    max_windows: usize,
) -> SceneBoundary {
    let canvas = max_side + 2;
    let w = rng.gen_range(min_side..=max_side);
    let h = rng.gen_range(min_side..=max_side);
    let mut b = walled_room(canvas, canvas, w, h);

    let mut corners = [0usize, 1, 2, 3];
    corners.shuffle(rng);
    let notches = rng.gen_range(0..=max_notches.min(4));
    if w / 3 >= 2 && h / 3 >= 2 {
        for &corner in corners.iter().take(notches) {
            let nw = rng.gen_range(2..=w / 3) as i32;
            let nh = rng.gen_range(2..=h / 3) as i32;
            let (x0, y0) = match corner {
                0 => (1, 1),
                1 => (1 + w as i32 - nw, 1),
                2 => (1, 1 + h as i32 - nh),
                _ => (1 + w as i32 - nw, 1 + h as i32 - nh),
            };
            for y in y0..y0 + nh {
                for x in x0..x0 + nw {
                    let i = b.index(Cell::new(x, y)).unwrap();
                    b.usable[i] = false;
                }
            }
        }
    }

    let walls = straight_wall_cells(&b);
    let door = *walls.choose(rng).expect("a room always has straight walls");
    b.doors.push(door);
    let windows = rng.gen_range(0..=max_windows);
    let mut options: Vec<Cell> = walls
        .into_iter()
        .filter(|c| (c.x - door.x).abs() + (c.y - door.y).abs() > 2)
        .collect();
    for _ in 0..windows {
        let Some(&cell) = options.choose(rng) else { break };
        b.windows.push(cell);
        options.retain(|c| (c.x - cell.x).abs() + (c.y - cell.y).abs() > 2);
    }
    b
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fixed_room_is_all_free_inside() {
        let b = BoundarySpec::Rect { width: 20, height: 20 }
            .sample(&mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!((b.width, b.height), (22, 22));
        assert_eq!(b.usable_count(), 400);
        assert_eq!(b.doors.len(), 1);
        assert!(b.fronting_cell(b.doors[0]).is_some());
    }

    #[test]
    fn sampler_is_deterministic_per_seed() {
        let spec = BoundarySpec::RandomRooms {
            min_side: 12,
            max_side: 28,
            max_notches: 2,
            max_windows: 2,
        };
        for seed in 0..20 {
            let a = spec.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = spec.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.doors.len(), 1);
            assert!(a.windows.len() <= 2);
            let front = a.fronting_cell(a.doors[0]).unwrap();
            assert!(a.is_usable(front));
            assert!(!a.is_usable(a.doors[0]));
        }
    }

    #[test]
    fn blocks_area_has_no_doors() {
        let b = BoundarySpec::Blocks { width: 24, height: 14 }
            .sample(&mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert!(b.doors.is_empty() && b.windows.is_empty());
        assert_eq!(b.domain, DomainKind::Blocks);
        assert_eq!(b.usable_count(), 24 * 14);
    }

    #[test]
    fn empty_boundary_is_a_config_error() {
        let err = BoundarySpec::Rect { width: 0, height: 5 }
            .sample(&mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
