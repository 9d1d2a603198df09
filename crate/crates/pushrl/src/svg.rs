//! Static trajectory plots.
//!
//! World point `(x, y)` maps to SVG `(m + s (x - x_min), m + s (y_max - y))`
//! with `s = SCALE` units per meter and `m = MARGIN`; the root element
//! repeats these in `data-*` attributes.

use std::fmt::Write;
use std::path::Path;

use pushrl_core::env::{Goal, Workspace};
use pushrl_core::geom::Vec2;

use crate::error::{Error, Result};
use crate::harness::EpisodeLog;

pub const SCALE: f64 = 1000.0;
pub const MARGIN: f64 = 20.0;
pub const GOAL_MARKER_RADIUS: f64 = 0.025;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub fn to_svg(ws: &Workspace, p: Vec2) -> (f64, f64) {
    (MARGIN + SCALE * (p.x - ws.x_min), MARGIN + SCALE * (ws.y_max - p.y))
}

pub fn from_svg(ws: &Workspace, u: f64, v: f64) -> Vec2 {
    Vec2::new(ws.x_min + (u - MARGIN) / SCALE, ws.y_max - (v - MARGIN) / SCALE)
}

fn polyline(out: &mut String, ws: &Workspace, pts: impl Iterator<Item = Vec2>, class: &str, style: &str) {
    let coords: Vec<String> = pts
        .map(|p| {
            let (u, v) = to_svg(ws, p);
            format!("{u:.3},{v:.3}")
        })
        .collect();
    let _ = writeln!(out, r#"  <polyline class="{class}" points="{}" fill="none" {style}/>"#, coords.join(" "));
}

/// Workspace outline, one goal disc per entry of `goals`, and per episode an
/// object-centre polyline (solid) and pusher polyline (dashed) in a shared
/// per-episode colour.
pub fn render_svg(ws: &Workspace, logs: &[EpisodeLog], goals: &[Goal]) -> String {
    let (w, h) = (SCALE * ws.width() + 2.0 * MARGIN, SCALE * ws.height() + 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}" data-scale="{SCALE}" data-margin="{MARGIN}" data-x-min="{:?}" data-y-max="{:?}">"#,
        ws.x_min, ws.y_max
    );
    let _ = writeln!(
        out,
        r##"  <rect class="workspace" x="{MARGIN:.3}" y="{MARGIN:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444" stroke-width="1"/>"##,
        SCALE * ws.width(),
        SCALE * ws.height()
    );
    for g in goals {
        let (u, v) = to_svg(ws, g.position());
        let _ = writeln!(
            out,
            r##"  <circle class="goal" cx="{u:.3}" cy="{v:.3}" r="{:.3}" fill="#2ca02c" fill-opacity="0.35" stroke="#2ca02c"/>"##,
            SCALE * GOAL_MARKER_RADIUS
        );
    }
    for (i, log) in logs.iter().enumerate() {
        if log.steps.is_empty() {
            continue;
        }
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"  <g class="episode" data-episode="{}" data-status="{}">"#, log.episode_id, log.status.as_str());
        polyline(&mut out, ws, log.steps.iter().map(|s| s.object.position()), "object", &format!(r#"stroke="{c}" stroke-width="2""#));
        polyline(
            &mut out,
            ws,
            log.steps.iter().map(|s| s.pusher.position()),
            "pusher",
            &format!(r#"stroke="{c}" stroke-width="1" stroke-dasharray="4 3""#),
        );
        out.push_str("  </g>\n");
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(path: &Path, ws: &Workspace, logs: &[EpisodeLog], goals: &[Goal]) -> Result<()> {
    std::fs::write(path, render_svg(ws, logs, goals)).map_err(|e| Error::io(path, e))
}
