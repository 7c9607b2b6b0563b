//! Scene documents.
//!
//! A scene is stored as TOML. The boundary mask is run-length encoded one
//! row per string, e.g. `"1#16.1#"` is one blocked cell, sixteen usable cells
//! and another blocked cell.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Cell, DomainKind, GroupInstance, ObjectInstance, Orientation, Scene, SceneBoundary, Status};

const FORMAT: &str = "rlss-scene";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    format: String,
    version: u32,
    condition: f64,
    step: u32,
    status: Status,
    boundary: BoundaryDoc,
    #[serde(default)]
    instances: Vec<InstanceDoc>,
    #[serde(default)]
    groups: Vec<GroupDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDoc {
    width: usize,
    height: usize,
    domain: DomainKind,
    rows: Vec<String>,
    doors: Vec<(i32, i32)>,
    windows: Vec<(i32, i32)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    category: usize,
    anchor: (i32, i32),
    orientation: Orientation,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDoc {
    id: usize,
    structure: usize,
    placement: usize,
    anchor: (i32, i32),
    rotation: Orientation,
    placed: Vec<usize>,
}

fn pair(c: Cell) -> (i32, i32) {
    (c.x, c.y)
}

fn cell(p: (i32, i32)) -> Cell {
    Cell::new(p.0, p.1)
}

fn encode_row(row: &[bool]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < row.len() {
        let v = row[i];
        let mut j = i;
        while j < row.len() && row[j] == v {
            j += 1;
        }
        let _ = write!(out, "{}{}", j - i, if v { '.' } else { '#' });
        i = j;
    }
    out
}

fn decode_row(text: &str, width: usize, row: usize) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(width);
    let mut digits = String::new();
    for ch in text.chars() {
        match ch {
            '0'..='9' => digits.push(ch),
            '.' | '#' => {
                let n: usize = digits
                    .parse()
                    .map_err(|_| Error::Parse(format!("boundary row {row}: run without a length")))?;
                digits.clear();
                out.extend(std::iter::repeat_n(ch == '.', n));
            }
            other => {
                return Err(Error::Parse(format!("boundary row {row}: unexpected character '{other}'")));
            }
        }
    }
    if !digits.is_empty() {
        return Err(Error::Parse(format!("boundary row {row}: dangling run length")));
    }
    if out.len() != width {
        return Err(Error::Parse(format!(
            "boundary row {row}: decodes to {} cells, expected {width}",
            out.len()
        )));
    }
    Ok(out)
}

pub fn serialize_scene(scene: &Scene) -> String {
    let b = &scene.boundary;
    let doc = SceneDoc {
        format: FORMAT.to_string(),
        version: VERSION,
        condition: scene.condition,
        step: scene.step,
        status: scene.status,
        boundary: BoundaryDoc {
            width: b.width,
            height: b.height,
            domain: b.domain,
            rows: b.usable.chunks(b.width.max(1)).map(encode_row).collect(),
            doors: b.doors.iter().copied().map(pair).collect(),
            windows: b.windows.iter().copied().map(pair).collect(),
        },
        instances: scene
            .instances
            .iter()
            .map(|i| InstanceDoc {
                category: i.category,
                anchor: pair(i.anchor),
                orientation: i.orientation,
                group: i.group,
            })
            .collect(),
        groups: scene
            .groups
            .iter()
            .map(|g| GroupDoc {
                id: g.id,
                structure: g.structure,
                placement: g.placement,
                anchor: pair(g.anchor),
                rotation: g.rotation,
                placed: g.placed.iter().copied().collect(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("scene documents always serialize")
}

pub fn deserialize_scene(text: &str) -> Result<Scene> {
    let doc: SceneDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(Error::Parse(format!(
            "unsupported scene document {} v{}",
            doc.format, doc.version
        )));
    }
    let b = doc.boundary;
    if b.rows.len() != b.height {
        return Err(Error::Parse(format!(
            "boundary has {} rows, expected {}",
            b.rows.len(),
            b.height
        )));
    }
    let mut usable = Vec::with_capacity(b.width * b.height);
    for (y, row) in b.rows.iter().enumerate() {
        usable.extend(decode_row(row, b.width, y)?);
    }
    Ok(Scene {
        boundary: SceneBoundary {
            width: b.width,
            height: b.height,
            usable,
            doors: b.doors.into_iter().map(cell).collect(),
            windows: b.windows.into_iter().map(cell).collect(),
            domain: b.domain,
        },
        instances: doc
            .instances
            .into_iter()
            .map(|i| ObjectInstance {
                category: i.category,
                anchor: cell(i.anchor),
                orientation: i.orientation,
                group: i.group,
            })
            .collect(),
        groups: doc
            .groups
            .into_iter()
            .map(|g| GroupInstance {
                id: g.id,
                structure: g.structure,
                placement: g.placement,
                anchor: cell(g.anchor),
                rotation: g.rotation,
                placed: g.placed.into_iter().collect::<BTreeSet<_>>(),
            })
            .collect(),
        condition: doc.condition,
        step: doc.step,
        status: doc.status,
    })
}
