//! Stroke joining on generated documents.
//!
//! Generated documents are fragmented: every stroke lives on its own patch
//! canvas and only the anchor places it globally, so consecutive strokes
//! rarely touch. Path clipping snaps the nearest endpoints of consecutive
//! strokes together; path interpolation inserts a straight connector instead.
//! A maximum-distance threshold keeps intentionally disconnected strokes
//! apart.

use serde::{Deserialize, Serialize};

use crate::svg::{CubicSegment, Point, StrokePath, VectorDocument};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostprocMode {
    None,
    Pc,
    Pi,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PostprocConfig {
    pub mode: PostprocMode,
    /// Threshold in normalized canvas units.
    pub max_dist: f64,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        PostprocConfig { mode: PostprocMode::Pc, max_dist: 8.0 / 256.0 }
    }
}

/// Endpoints closer than this count as already connected.
pub const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Start,
    End,
}

#[derive(Debug, Clone, Copy)]
pub struct EndpointMatch {
    pub a_end: End,
    pub b_end: End,
    pub dist: f64,
}

fn endpoint(path: &StrokePath, which: End) -> Point {
    match which {
        End::Start => path.start,
        End::End => path.end(),
    }
}

/// Minimum-distance endpoint pairing between two open strokes in global
/// canvas coordinates. Ties prefer (a.end, b.start), then (a.end, b.end),
/// then (a.start, b.start).
pub fn nearest_endpoints(
    a: &StrokePath,
    a_anchor: crate::svg::Anchor,
    b: &StrokePath,
    b_anchor: crate::svg::Anchor,
) -> Result<EndpointMatch> {
    if a.closed || b.closed {
        return Err(Error::invalid("endpoint matching requires open strokes"));
    }
    let (ax, ay) = a_anchor.norm();
    let (bx, by) = b_anchor.norm();
    let ga = |e: End| {
        let p = endpoint(a, e);
        Point::new(p.x + ax - 0.5, p.y + ay - 0.5)
    };
    let gb = |e: End| {
        let p = endpoint(b, e);
        Point::new(p.x + bx - 0.5, p.y + by - 0.5)
    };
    // tie-break priority order
    let candidates = [
        (End::End, End::Start),
        (End::End, End::End),
        (End::Start, End::Start),
        (End::Start, End::End),
    ];
    let mut best: Option<EndpointMatch> = None;
    for (ea, eb) in candidates {
        let dist = ga(ea).dist(&gb(eb));
        if best.map(|m| dist < m.dist).unwrap_or(true) {
            best = Some(EndpointMatch { a_end: ea, b_end: eb, dist });
        }
    }
    Ok(best.unwrap())
}

/// Translates one endpoint of a stroke by `(dx, dy)`, dragging the adjacent
/// control handle rigidly.
fn shift_endpoint(path: &mut StrokePath, which: End, dx: f64, dy: f64) {
    match which {
        End::Start => {
            path.start.x += dx;
            path.start.y += dy;
            if let Some(first) = path.segments.first_mut() {
                first.c1.x += dx;
                first.c1.y += dy;
            }
        }
        End::End => {
            if let Some(last) = path.segments.last_mut() {
                last.end.x += dx;
                last.end.y += dy;
                last.c2.x += dx;
                last.c2.y += dy;
            }
        }
    }
}

/// Path clipping: snaps the later stroke's matched endpoint onto the earlier
/// stroke's, for consecutive pairs within `(0, max_dist]`.
pub fn path_clip(doc: &VectorDocument, cfg: &PostprocConfig) -> Result<VectorDocument> {
    let mut out = doc.clone();
    for i in 1..out.strokes.len() {
        let (head, tail) = out.strokes.split_at_mut(i);
        let (prev, prev_anchor) = &head[i - 1];
        let (next, next_anchor) = &mut tail[0];
        if prev.closed || next.closed {
            continue;
        }
        let m = nearest_endpoints(prev, *prev_anchor, next, *next_anchor)?;
        if m.dist <= SNAP_EPS || m.dist > cfg.max_dist {
            continue;
        }
        let (pax, pay) = prev_anchor.norm();
        let (nax, nay) = next_anchor.norm();
        let target = endpoint(prev, m.a_end);
        let moved = endpoint(next, m.b_end);
        // offset in shared canvas units equals the patch-local offset
        let dx = (target.x + pax) - (moved.x + nax);
        let dy = (target.y + pay) - (moved.y + nay);
        shift_endpoint(next, m.b_end, dx, dy);
    }
    Ok(out)
}

/// Path interpolation: inserts a straight connector stroke between matched
/// endpoints of consecutive pairs within `(0, max_dist]`. Pairings are
/// computed on the original sequence, before any insertion.
pub fn path_interp(doc: &VectorDocument, cfg: &PostprocConfig) -> Result<VectorDocument> {
    let mut connectors: Vec<(usize, StrokePath, crate::svg::Anchor)> = Vec::new();
    for i in 1..doc.strokes.len() {
        let (prev, prev_anchor) = &doc.strokes[i - 1];
        let (next, next_anchor) = &doc.strokes[i];
        if prev.closed || next.closed {
            continue;
        }
        let m = nearest_endpoints(prev, *prev_anchor, next, *next_anchor)?;
        if m.dist <= SNAP_EPS || m.dist > cfg.max_dist {
            continue;
        }
        // connector lives on the earlier stroke's patch canvas
        let (pax, pay) = prev_anchor.norm();
        let (nax, nay) = next_anchor.norm();
        let from = endpoint(prev, m.a_end);
        let to_global = endpoint(next, m.b_end);
        let to = Point::new(to_global.x + nax - pax, to_global.y + nay - pay);
        let connector = StrokePath {
            start: from,
            segments: vec![CubicSegment::line(from, to)],
            closed: false,
            width: prev.width,
            color: prev.color,
        };
        connectors.push((i, connector, *prev_anchor));
    }
    let mut out = VectorDocument::new(doc.canvas_size);
    for (i, stroke) in doc.strokes.iter().enumerate() {
        out.strokes.push(stroke.clone());
        // connectors recorded for insertion position i go right after stroke i-1
        for (at, conn, anchor) in &connectors {
            if *at == i + 1 {
                out.strokes.push((conn.clone(), *anchor));
            }
        }
    }
    Ok(out)
}

/// Applies the configured mode.
pub fn apply(doc: &VectorDocument, cfg: &PostprocConfig) -> Result<VectorDocument> {
    match cfg.mode {
        PostprocMode::None => Ok(doc.clone()),
        PostprocMode::Pc => path_clip(doc, cfg),
        PostprocMode::Pi => path_interp(doc, cfg),
    }
}
