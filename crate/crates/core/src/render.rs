//! SVG 1.1 rendering of scenes.
//!
//! Indoor scenes are drawn as floor plans; block scenes as a side view with
//! the ground line under the last row.

use std::fmt::Write as _;

use crate::catalog::Catalog;
use crate::scene::{DomainKind, Scene};

const CELL: i32 = 20;

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

pub fn render_svg(scene: &Scene, catalog: &Catalog) -> String {
    let b = &scene.boundary;
    let (w, h) = (b.width as i32 * CELL, b.height as i32 * CELL);
    let ground = if b.domain == DomainKind::Blocks { CELL / 2 } else { 0 };
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{}" viewBox="0 0 {w} {}">"#,
        h + ground,
        h + ground
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w}" height="{}" fill="#ffffff"/>"##, h + ground);

    // Boundary: every unusable cell as one compound path.
    let mut path = String::new();
    for y in 0..b.height as i32 {
        for x in 0..b.width as i32 {
            if !b.is_usable(crate::scene::Cell::new(x, y)) {
                let _ = write!(path, "M{} {}h{CELL}v{CELL}h-{CELL}z", x * CELL, y * CELL);
            }
        }
    }
    if b.domain == DomainKind::Blocks {
        let _ = writeln!(
            s,
            r##"<g class="boundary"><rect x="0" y="0" width="{w}" height="{h}" fill="none" stroke="#999999"/><line x1="0" y1="{h}" x2="{w}" y2="{h}" stroke="#333333" stroke-width="{}"/></g>"##,
            ground
        );
    } else {
        let _ = writeln!(
            s,
            r##"<path class="boundary" d="{}" fill="#555555" stroke="none"/>"##,
            if path.is_empty() { "M0 0".into() } else { path }
        );
    }
    for d in &b.doors {
        let _ = writeln!(
            s,
            r##"<rect class="door" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="#8b5a2b"/>"##,
            d.x * CELL,
            d.y * CELL
        );
    }
    for win in &b.windows {
        let _ = writeln!(
            s,
            r##"<rect class="window" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="#9ecae1"/>"##,
            win.x * CELL,
            win.y * CELL
        );
    }

    for inst in &scene.instances {
        let Some(cat) = catalog.categories.get(inst.category) else { continue };
        let r = inst.rect(cat);
        let colour = PALETTE[inst.category % PALETTE.len()];
        let (x, y, rw, rh) = (r.x * CELL, r.y * CELL, r.w * CELL, r.h * CELL);
        let _ = writeln!(
            s,
            r##"<g class="object"><rect x="{x}" y="{y}" width="{rw}" height="{rh}" fill="{colour}" fill-opacity="0.8" stroke="#222222"/><text x="{}" y="{}" font-family="sans-serif" font-size="9" text-anchor="middle">{}</text></g>"##,
            x + rw / 2,
            y + rh / 2 + 3,
            escape(&cat.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
