//! Building (patch, anchor, text) training records from raster or vector
//! sources: grid tiling, contour extraction, stroke splitting, centering,
//! anchor discretization, prompt construction, and a deterministic synthetic
//! corpus generator.

use std::collections::HashMap;
use std::io::{BufRead, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{render_document, render_stroke, RasterPatch, RenderConfig, CHANNELS, PATCH_SIZE};
use crate::svg::{Anchor, CubicSegment, Point, StrokePath, VectorDocument};
use crate::{Error, Result};

/// One training patch: the raster, its canvas anchor and, when the source is
/// vector data, the ground-truth stroke geometry in patch coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch: RasterPatchData,
    pub anchor: Anchor,
    pub source_id: String,
    pub geometry: Option<StrokePath>,
}

/// Serializable raster reference: pixels live in a PNG next to the index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterPatchData {
    #[serde(skip)]
    pub pixels: Option<RasterPatch>,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub source_id: String,
    pub prompt: String,
    pub class_label: String,
    pub patches: Vec<PatchRecord>,
}

/// Nearest-neighbor resize (used to upscale small sources to the patch size).
pub fn resize_nearest(img: &RasterPatch, height: usize, width: usize) -> RasterPatch {
    let mut out = RasterPatch::white(img.channels, height, width);
    for c in 0..img.channels {
        for y in 0..height {
            let sy = y * img.height / height;
            for x in 0..width {
                let sx = x * img.width / width;
                out.set(c, y, x, img.get(c, sy.min(img.height - 1), sx.min(img.width - 1)));
            }
        }
    }
    out
}

/// Tiles an image into a `rows x cols` grid, row-major. Each tile is placed
/// centered on a fresh white patch canvas; right/bottom remainders are
/// white-padded. The anchor is the tile center in the source image,
/// discretized to the 256 grid.
pub fn tile_grid(img: &RasterPatch, rows: usize, cols: usize, source_id: &str) -> Result<Vec<PatchRecord>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("tile grid must be at least 1x1"));
    }
    let tile_h = img.height.div_ceil(rows);
    let tile_w = img.width.div_ceil(cols);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut patch = RasterPatch::white(CHANNELS, PATCH_SIZE, PATCH_SIZE);
            let oy = (PATCH_SIZE - tile_h.min(PATCH_SIZE)) / 2;
            let ox = (PATCH_SIZE - tile_w.min(PATCH_SIZE)) / 2;
            for ty in 0..tile_h.min(PATCH_SIZE) {
                for tx in 0..tile_w.min(PATCH_SIZE) {
                    let sy = r * tile_h + ty;
                    let sx = c * tile_w + tx;
                    if sy < img.height && sx < img.width {
                        for ch in 0..CHANNELS {
                            patch.set(ch, oy + ty, ox + tx, img.get(ch.min(img.channels - 1), sy, sx));
                        }
                    }
                }
            }
            let cy = r as f64 * tile_h as f64 + (tile_h as f64 - 1.0) / 2.0;
            let cx = c as f64 * tile_w as f64 + (tile_w as f64 - 1.0) / 2.0;
            let anchor = Anchor::from_norm(
                (cx / (img.width as f64 - 1.0)).clamp(0.0, 1.0),
                (cy / (img.height as f64 - 1.0)).clamp(0.0, 1.0),
            )?;
            out.push(PatchRecord {
                patch: RasterPatchData { pixels: Some(patch), file: format!("{source_id}_{}.png", r * cols + c) },
                anchor,
                source_id: source_id.to_string(),
                geometry: None,
            });
        }
    }
    Ok(out)
}

/// Extracts iso-level outlines of the dark foreground with marching squares
/// at level 0.5 after binarizing at luma 0.5. Returns ordered polylines in
/// normalized image coordinates.
pub fn extract_contours(img: &RasterPatch) -> Vec<Vec<Point>> {
    let (h, w) = (img.height, img.width);
    let dark = |y: usize, x: usize| -> bool { img.luma(y, x) < 0.5 };
    // segment endpoints are edge midpoints; all coordinates are multiples of
    // one half pixel, so scale by two to index them exactly
    let key = |x: f64, y: f64| -> (i64, i64) { ((x * 2.0).round() as i64, (y * 2.0).round() as i64) };
    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let mask = (dark(y, x) as u8)
                | (dark(y, x + 1) as u8) << 1
                | (dark(y + 1, x + 1) as u8) << 2
                | (dark(y + 1, x) as u8) << 3;
            let (fx, fy) = (x as f64, y as f64);
            let top = (fx + 0.5, fy);
            let bottom = (fx + 0.5, fy + 1.0);
            let left = (fx, fy + 0.5);
            let right = (fx + 1.0, fy + 0.5);
            match mask {
                0 | 15 => {}
                1 | 14 => segments.push((left, top)),
                2 | 13 => segments.push((top, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, bottom)),
                6 | 9 => segments.push((top, bottom)),
                7 | 8 => segments.push((left, bottom)),
                5 => {
                    segments.push((left, top));
                    segments.push((right, bottom));
                }
                10 => {
                    segments.push((top, right));
                    segments.push((left, bottom));
                }
                _ => unreachable!(),
            }
        }
    }
    // stitch segments into chains by shared endpoints
    let mut by_end: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        by_end.entry(key(a.0, a.1)).or_default().push(i);
        by_end.entry(key(b.0, b.1)).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut contours = Vec::new();
    let norm = |p: (f64, f64)| Point::new(p.0 / (w as f64 - 1.0), p.1 / (h as f64 - 1.0));
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = vec![a, b];
        // extend forward from the tail, then backward from the head
        for forward in [true, false] {
            loop {
                let tip = if forward { *chain.last().unwrap() } else { chain[0] };
                let Some(cands) = by_end.get(&key(tip.0, tip.1)) else { break };
                let Some(&next) = cands.iter().find(|&&i| !used[i]) else { break };
                used[next] = true;
                let (na, nb) = segments[next];
                let other = if key(na.0, na.1) == key(tip.0, tip.1) { nb } else { na };
                if forward {
                    chain.push(other);
                } else {
                    chain.insert(0, other);
                }
            }
        }
        contours.push(chain.into_iter().map(norm).collect());
    }
    // outer (longer) contours first for a stable stroke order
    contours.sort_by(|a: &Vec<Point>, b: &Vec<Point>| {
        arc_length(b).partial_cmp(&arc_length(a)).unwrap_or(std::cmp::Ordering::Equal)
    });
    contours
}

pub fn arc_length(polyline: &[Point]) -> f64 {
    polyline.windows(2).map(|p| p[0].dist(&p[1])).sum()
}

/// Splits a polyline into contiguous pieces of arc length at most `max_len`
/// (normalized units). Split points fall on original vertices, inserting an
/// interpolated vertex when a single edge exceeds the budget. The pieces
/// concatenate back to the original polyline.
pub fn split_strokes(polyline: &[Point], max_len: f64) -> Result<Vec<Vec<Point>>> {
    if !(max_len > 0.0) {
        return Err(Error::invalid("split budget must be positive"));
    }
    if polyline.len() < 2 {
        return Ok(vec![polyline.to_vec()]);
    }
    let mut pieces = Vec::new();
    let mut current = vec![polyline[0]];
    let mut budget = max_len;
    let mut i = 1;
    let mut cursor = polyline[0];
    while i < polyline.len() {
        let next = polyline[i];
        let edge = cursor.dist(&next);
        if edge <= budget + 1e-12 {
            current.push(next);
            budget -= edge;
            cursor = next;
            i += 1;
        } else {
            // insert a vertex exactly at the remaining budget
            let t = budget / edge;
            let cut = Point::new(cursor.x + (next.x - cursor.x) * t, cursor.y + (next.y - cursor.y) * t);
            current.push(cut);
            pieces.push(current);
            current = vec![cut];
            budget = max_len;
            cursor = cut;
        }
        if budget <= 1e-12 && i < polyline.len() {
            pieces.push(current);
            current = vec![cursor];
            budget = max_len;
        }
    }
    if current.len() > 1 {
        pieces.push(current);
    }
    Ok(pieces)
}

/// Resamples a polyline to exactly `segments + 1` points spaced uniformly by
/// arc length, keeping the endpoints.
pub fn resample_polyline(polyline: &[Point], segments: usize) -> Vec<Point> {
    assert!(segments >= 1 && polyline.len() >= 2);
    let mut cum = vec![0.0];
    for w in polyline.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(&w[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return vec![polyline[0]; segments + 1];
    }
    let mut out = vec![polyline[0]];
    for k in 1..segments {
        let target = total * k as f64 / segments as f64;
        let j = cum.partition_point(|&c| c < target).clamp(1, cum.len() - 1);
        let (c0, c1) = (cum[j - 1], cum[j]);
        let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        let a = polyline[j - 1];
        let b = polyline[j];
        out.push(Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
    }
    out.push(*polyline.last().unwrap());
    out
}

/// A centered stroke ready for training: patch-local geometry, its raster
/// and the canvas anchor of the original bounding-box center.
#[derive(Debug, Clone)]
pub struct CenteredStroke {
    pub path: StrokePath,
    pub patch: RasterPatch,
    pub anchor: Anchor,
}

/// Safe-area fraction: strokes larger than this are shrunk to fit.
pub const SAFE_AREA: f64 = 0.9;

/// Maximum polyline segments kept per stroke after resampling.
pub const MAX_STROKE_SEGMENTS: usize = 12;

/// Centers a polyline piece on a fresh patch: the bounding-box center moves
/// to `(0.5, 0.5)` and the original center becomes the anchor. Geometry is
/// only rescaled when it exceeds the safe area. Degenerate pieces (fewer
/// than two distinct points) return `None`.
pub fn center_patch(segment: &[Point], stroke_width: f64, cfg: &RenderConfig) -> Result<Option<CenteredStroke>> {
    let mut distinct: Vec<Point> = Vec::new();
    for p in segment {
        if distinct.last().map(|q: &Point| q.dist(p) > 1e-9).unwrap_or(true) {
            distinct.push(*p);
        }
    }
    if distinct.len() < 2 {
        return Ok(None);
    }
    let (min_x, max_x) = distinct.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    let (min_y, max_y) = distinct.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    let extent = (max_x - min_x).max(max_y - min_y);
    let scale = if extent > SAFE_AREA { SAFE_AREA / extent } else { 1.0 };
    let local: Vec<Point> = distinct
        .iter()
        .map(|p| Point::new((p.x - cx) * scale + 0.5, (p.y - cy) * scale + 0.5))
        .collect();
    // keep original vertices (corners) exactly unless the piece is too dense
    let pts = if local.len() - 1 <= MAX_STROKE_SEGMENTS {
        local
    } else {
        resample_polyline(&local, MAX_STROKE_SEGMENTS)
    };
    let path = StrokePath::open(
        pts[0],
        pts.windows(2).map(|p| CubicSegment::line(p[0], p[1])).collect(),
        stroke_width,
    );
    let patch = render_stroke(&path, cfg)?;
    let anchor = Anchor::from_norm(cx.clamp(0.0, 1.0), cy.clamp(0.0, 1.0))?;
    Ok(Some(CenteredStroke { path, patch, anchor }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Fonts,
    Figr8,
    Synthetic,
}

impl std::str::FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Dataset::Mnist),
            "fonts" => Ok(Dataset::Fonts),
            "figr8" => Ok(Dataset::Figr8),
            "synthetic" => Ok(Dataset::Synthetic),
            other => Err(Error::invalid(format!("unknown dataset {other}"))),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PromptMeta {
    pub class_label: Option<String>,
    pub glyph: Option<char>,
    pub style: Option<String>,
}

/// Prompt templates per dataset: digits read "7 in black color", glyphs
/// "[capital] g in serif font", icon classes are used verbatim.
pub fn build_prompt(dataset: Dataset, meta: &PromptMeta) -> Result<String> {
    match dataset {
        Dataset::Mnist => {
            let class = meta.class_label.as_ref().ok_or_else(|| Error::invalid("mnist prompt needs a class label"))?;
            Ok(format!("{class} in black color"))
        }
        Dataset::Fonts => {
            let glyph = meta.glyph.ok_or_else(|| Error::invalid("font prompt needs a glyph"))?;
            let style = meta.style.as_ref().ok_or_else(|| Error::invalid("font prompt needs a style"))?;
            if glyph.is_ascii_uppercase() {
                Ok(format!("capital {} in {style} font", glyph.to_ascii_lowercase()))
            } else {
                Ok(format!("{glyph} in {style} font"))
            }
        }
        Dataset::Figr8 | Dataset::Synthetic => meta
            .class_label
            .clone()
            .ok_or_else(|| Error::invalid("class prompt needs a class label")),
    }
}

pub const SYNTHETIC_CLASSES: [&str; 4] = ["box", "cross", "circle", "zigzag"];

/// Default split budget for the synthetic corpus, as a fraction of the
/// canvas.
pub const SYNTHETIC_SPLIT_BUDGET: f64 = 0.35;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub stroke_width: f64,
    pub split_budget: f64,
    pub render: RenderConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            stroke_width: 0.045,
            split_budget: SYNTHETIC_SPLIT_BUDGET,
            render: RenderConfig::default(),
        }
    }
}

/// Raw polylines of one parametric glyph, before the split/center pipeline.
pub fn synthetic_glyph(class: &str, rng: &mut ChaCha8Rng) -> Vec<Vec<Point>> {
    let cx = rng.gen_range(0.35..0.65);
    let cy = rng.gen_range(0.35..0.65);
    let a = rng.gen_range(0.12..0.22); // half size
    match class {
        "box" => {
            let p = |dx: f64, dy: f64| Point::new(cx + dx * a, cy + dy * a);
            vec![vec![p(-1.0, -1.0), p(1.0, -1.0), p(1.0, 1.0), p(-1.0, 1.0), p(-1.0, -1.0)]]
        }
        "cross" => {
            vec![
                vec![Point::new(cx - a, cy), Point::new(cx + a, cy)],
                vec![Point::new(cx, cy - a), Point::new(cx, cy + a)],
            ]
        }
        "circle" => {
            let n = 32;
            let pts = (0..=n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    Point::new(cx + a * t.cos(), cy + a * t.sin())
                })
                .collect();
            vec![pts]
        }
        "zigzag" => {
            let pts = (0..5)
                .map(|i| {
                    let x = cx - a + 2.0 * a * i as f64 / 4.0;
                    let y = if i % 2 == 0 { cy + a * 0.7 } else { cy - a * 0.7 };
                    Point::new(x, y)
                })
                .collect();
            vec![pts]
        }
        _ => unreachable!("unknown synthetic class"),
    }
}

/// Deterministic class-balanced corpus of parametric glyphs, run through the
/// same split/center pipeline as real data.
pub fn generate_synthetic_corpus(n: usize, seed: u64, cfg: &SyntheticConfig) -> Result<Vec<SampleRecord>> {
    if n == 0 {
        return Err(Error::invalid("corpus size must be >= 1"));
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let class = SYNTHETIC_CLASSES[i % SYNTHETIC_CLASSES.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64));
        let polylines = synthetic_glyph(class, &mut rng);
        let source_id = format!("syn_{seed}_{i:05}");
        let mut patches = Vec::new();
        for polyline in &polylines {
            for piece in split_strokes(polyline, cfg.split_budget)? {
                if let Some(centered) = center_patch(&piece, cfg.stroke_width, &cfg.render)? {
                    let idx = patches.len();
                    patches.push(PatchRecord {
                        patch: RasterPatchData {
                            pixels: Some(centered.patch),
                            file: format!("{source_id}_{idx}.png"),
                        },
                        anchor: centered.anchor,
                        source_id: source_id.clone(),
                        geometry: Some(centered.path),
                    });
                }
            }
        }
        let prompt = build_prompt(Dataset::Synthetic, &PromptMeta { class_label: Some(class.to_string()), ..Default::default() })?;
        records.push(SampleRecord { source_id, prompt, class_label: class.to_string(), patches });
    }
    Ok(records)
}

/// Reassembles a record's strokes into a document for re-composition checks
/// and rendering.
pub fn record_document(record: &SampleRecord, canvas_size: u32) -> Result<VectorDocument> {
    let mut doc = VectorDocument::new(canvas_size);
    for p in &record.patches {
        let path = p
            .geometry
            .clone()
            .ok_or_else(|| Error::invalid(format!("patch {} has no geometry", p.patch.file)))?;
        doc.strokes.push((path, p.anchor));
    }
    Ok(doc)
}

/// Renders the document obtained by placing each patch geometry at its
/// anchor.
pub fn recompose(record: &SampleRecord, cfg: &RenderConfig) -> Result<RasterPatch> {
    render_document(&record_document(record, 256)?, cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    source_id: String,
    prompt: String,
    class_label: String,
    anchors: Vec<[u32; 2]>,
    patch_files: Vec<String>,
    geometry: Vec<Option<StrokePath>>,
}

/// Writes a corpus directory: `index.jsonl` plus one PNG per patch.
pub fn write_corpus(dir: &Path, records: &[SampleRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut index = std::io::BufWriter::new(std::fs::File::create(dir.join("index.jsonl"))?);
    for rec in records {
        let entry = IndexEntry {
            source_id: rec.source_id.clone(),
            prompt: rec.prompt.clone(),
            class_label: rec.class_label.clone(),
            anchors: rec.patches.iter().map(|p| [p.anchor.x, p.anchor.y]).collect(),
            patch_files: rec.patches.iter().map(|p| p.patch.file.clone()).collect(),
            geometry: rec.patches.iter().map(|p| p.geometry.clone()).collect(),
        };
        serde_json::to_writer(&mut index, &entry)?;
        index.write_all(b"\n")?;
        for p in &rec.patches {
            let pixels = p
                .patch
                .pixels
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("patch {} has no pixels to write", p.patch.file)))?;
            pixels.save_png(&dir.join(&p.patch.file))?;
        }
    }
    index.flush()?;
    Ok(())
}

/// Reads a corpus directory written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<Vec<SampleRecord>> {
    let index_path = dir.join("index.jsonl");
    if !index_path.exists() {
        return Err(Error::MissingArtifact(index_path));
    }
    let reader = std::io::BufReader::new(std::fs::File::open(&index_path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: IndexEntry = serde_json::from_str(&line)?;
        if entry.anchors.len() != entry.patch_files.len() || entry.anchors.len() != entry.geometry.len() {
            return Err(Error::invalid(format!("inconsistent index entry for {}", entry.source_id)));
        }
        let mut patches = Vec::new();
        for ((anchor, file), geometry) in entry.anchors.iter().zip(&entry.patch_files).zip(entry.geometry) {
            let pixels = RasterPatch::load_png(&dir.join(file))?;
            patches.push(PatchRecord {
                patch: RasterPatchData { pixels: Some(pixels), file: file.clone() },
                anchor: Anchor::new(anchor[0], anchor[1])?,
                source_id: entry.source_id.clone(),
                geometry,
            });
        }
        records.push(SampleRecord {
            source_id: entry.source_id,
            prompt: entry.prompt,
            class_label: entry.class_label,
            patches,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_image(size: usize, cx: f64, cy: f64, r: f64) -> RasterPatch {
        let mut img = RasterPatch::white(1, size, size);
        for y in 0..size {
            for x in 0..size {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d <= r {
                    img.set(0, y, x, 0.0);
                }
            }
        }
        img
    }

    #[test]
    fn tile_grid_geometry() {
        let img = RasterPatch::white(1, 128, 128);
        let tiles = tile_grid(&img, 6, 6, "t").unwrap();
        assert_eq!(tiles.len(), 36);
        // tile (0,0): 22x22, center 10.5 px -> round(10.5 * 255 / 127) = 21
        assert_eq!(tiles[0].anchor, Anchor::new(21, 21).unwrap());
        // patch index 7 is grid position (row 1, col 1): center 32.5 px ->
        // round(32.5 * 255 / 127) = 65
        assert_eq!(tiles[7].anchor, Anchor::new(65, 65).unwrap());
        // all-white input -> all-white patches
        for t in &tiles {
            let p = t.patch.pixels.as_ref().unwrap();
            assert!(p.pixels.iter().all(|&v| v == 1.0));
            assert_eq!((p.height, p.width), (PATCH_SIZE, PATCH_SIZE));
        }
    }

    #[test]
    fn contours_blank_image_empty() {
        let img = RasterPatch::white(1, 32, 32);
        assert!(extract_contours(&img).is_empty());
    }

    #[test]
    fn contour_of_disk_lies_on_circle() {
        let size = 64;
        let r = 20.0;
        let img = disk_image(size, 31.5, 31.5, r);
        let contours = extract_contours(&img);
        assert_eq!(contours.len(), 1, "expected one contour, got {}", contours.len());
        let scale = (size - 1) as f64;
        for p in &contours[0] {
            let d = ((p.x * scale - 31.5).powi(2) + (p.y * scale - 31.5).powi(2)).sqrt();
            assert!((d - r).abs() < 1.5, "contour point at radius {d}");
        }
        // closed: first equals last
        let first = contours[0][0];
        let last = *contours[0].last().unwrap();
        assert!(first.dist(&last) < 1e-9);
    }

    #[test]
    fn ring_has_two_contours() {
        let size = 64;
        let mut img = RasterPatch::white(1, size, size);
        for y in 0..size {
            for x in 0..size {
                let d = ((x as f64 - 31.5).powi(2) + (y as f64 - 31.5).powi(2)).sqrt();
                if (10.0..=20.0).contains(&d) {
                    img.set(0, y, x, 0.0);
                }
            }
        }
        let contours = extract_contours(&img);
        assert_eq!(contours.len(), 2);
        // outer contour sorted first
        assert!(arc_length(&contours[0]) > arc_length(&contours[1]));
    }

    #[test]
    fn split_short_polyline_unchanged() {
        let line = vec![Point::new(0.0, 0.0), Point::new(0.03, 0.0)];
        let pieces = split_strokes(&line, 0.04).unwrap();
        assert_eq!(pieces, vec![line]);
    }

    #[test]
    fn split_line_into_budgeted_pieces() {
        let line = vec![Point::new(0.0, 0.0), Point::new(0.10, 0.0)];
        let pieces = split_strokes(&line, 0.04).unwrap();
        assert_eq!(pieces.len(), 3);
        let lens: Vec<f64> = pieces.iter().map(|p| arc_length(p)).collect();
        for l in &lens {
            assert!(*l <= 0.04 + 1e-9, "piece length {l}");
        }
        assert!((lens.iter().sum::<f64>() - 0.10).abs() < 1e-9);
        // partition: pieces share boundary vertices and chain back together
        for pair in pieces.windows(2) {
            assert!(pair[0].last().unwrap().dist(&pair[1][0]) < 1e-12);
        }
        assert!(pieces[0][0].dist(&line[0]) < 1e-12);
        assert!(pieces.last().unwrap().last().unwrap().dist(&line[1]) < 1e-12);
    }

    #[test]
    fn split_closed_contour_partitions() {
        let square = vec![
            Point::new(0.2, 0.2),
            Point::new(0.8, 0.2),
            Point::new(0.8, 0.8),
            Point::new(0.2, 0.8),
            Point::new(0.2, 0.2),
        ];
        let pieces = split_strokes(&square, 0.5).unwrap();
        let total: f64 = pieces.iter().map(|p| arc_length(p)).sum();
        assert!((total - 2.4).abs() < 1e-9);
        // concatenation reproduces the contour point-for-point (original
        // vertices all present, in order)
        let mut merged: Vec<Point> = pieces[0].clone();
        for p in &pieces[1..] {
            merged.extend_from_slice(&p[1..]);
        }
        let mut vi = 0;
        for m in &merged {
            if vi < square.len() && m.dist(&square[vi]) < 1e-9 {
                vi += 1;
            }
        }
        assert_eq!(vi, square.len(), "original vertices missing from merged pieces");
    }

    #[test]
    fn center_patch_moves_bbox_center() {
        let cfg = RenderConfig::with_resolution(32);
        let seg = vec![Point::new(0.45, 0.5), Point::new(0.55, 0.5)];
        let c = center_patch(&seg, 0.05, &cfg).unwrap().unwrap();
        assert_eq!(c.anchor, Anchor::new(128, 128).unwrap());
        // already centered: geometry unchanged up to resampling
        assert!(c.path.start.dist(&seg[0]) < 1e-9);
        assert!(c.path.end().dist(&seg[1]) < 1e-9);
        // translated copy: identical patch geometry, different anchor
        let moved: Vec<Point> = seg.iter().map(|p| Point::new(p.x + 0.2, p.y - 0.1)).collect();
        let c2 = center_patch(&moved, 0.05, &cfg).unwrap().unwrap();
        assert!(c2.path.start.dist(&c.path.start) < 1e-9);
        assert!(c2.path.end().dist(&c.path.end()) < 1e-9);
        assert_ne!(c2.anchor, c.anchor);
        // degenerate: single distinct point
        assert!(center_patch(&[seg[0], seg[0]], 0.05, &cfg).unwrap().is_none());
    }

    #[test]
    fn prompts_follow_templates() {
        let m = |c: &str| PromptMeta { class_label: Some(c.into()), ..Default::default() };
        assert_eq!(build_prompt(Dataset::Mnist, &m("7")).unwrap(), "7 in black color");
        let f = PromptMeta { glyph: Some('A'), style: Some("regular".into()), ..Default::default() };
        assert_eq!(build_prompt(Dataset::Fonts, &f).unwrap(), "capital a in regular font");
        let f = PromptMeta { glyph: Some('g'), style: Some("serif".into()), ..Default::default() };
        assert_eq!(build_prompt(Dataset::Fonts, &f).unwrap(), "g in serif font");
        assert_eq!(build_prompt(Dataset::Figr8, &m("home")).unwrap(), "home");
        assert!(build_prompt(Dataset::Mnist, &PromptMeta::default()).is_err());
        assert!(build_prompt(Dataset::Fonts, &m("x")).is_err());
    }

    fn small_synth_cfg() -> SyntheticConfig {
        SyntheticConfig { render: RenderConfig::with_resolution(48), ..Default::default() }
    }

    #[test]
    fn synthetic_corpus_is_deterministic_and_balanced() {
        let cfg = small_synth_cfg();
        let a = generate_synthetic_corpus(8, 1, &cfg).unwrap();
        let b = generate_synthetic_corpus(8, 1, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            for (pa, pb) in ra.patches.iter().zip(&rb.patches) {
                assert_eq!(pa.patch.pixels.as_ref().unwrap().pixels, pb.patch.pixels.as_ref().unwrap().pixels);
            }
        }
        let mut counts = HashMap::new();
        for r in &a {
            *counts.entry(r.class_label.clone()).or_insert(0usize) += 1;
        }
        for class in SYNTHETIC_CLASSES {
            assert_eq!(counts[class], 2);
        }
        let c = generate_synthetic_corpus(8, 2, &cfg).unwrap();
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn synthetic_records_recompose() {
        let cfg = small_synth_cfg();
        let seed = 3;
        let records = generate_synthetic_corpus(4, seed, &cfg).unwrap();
        for (i, rec) in records.iter().enumerate() {
            assert!(!rec.patches.is_empty());
            // source render: the raw glyph polylines drawn in one document,
            // independent of the split/center pipeline
            let class = SYNTHETIC_CLASSES[i % SYNTHETIC_CLASSES.len()];
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64));
            let polylines = synthetic_glyph(class, &mut rng);
            let mut source_doc = VectorDocument::new(256);
            // an anchor at norm (ax, ay) shifts a patch by (ax - 0.5, ay - 0.5),
            // so pre-translating by the inverse keeps global coordinates exact
            let anchor = Anchor::new(128, 128).unwrap();
            let (ax, ay) = anchor.norm();
            for pl in &polylines {
                let path = StrokePath::open(
                    Point::new(pl[0].x + 0.5 - ax, pl[0].y + 0.5 - ay),
                    pl.windows(2)
                        .map(|p| {
                            let a = Point::new(p[0].x + 0.5 - ax, p[0].y + 0.5 - ay);
                            let b = Point::new(p[1].x + 0.5 - ax, p[1].y + 0.5 - ay);
                            CubicSegment::line(a, b)
                        })
                        .collect(),
                    cfg.stroke_width,
                );
                source_doc.strokes.push((path, anchor));
            }
            let source = render_document(&source_doc, &cfg.render).unwrap();
            let recomposed = recompose(rec, &cfg.render).unwrap();
            let err = source.mse(&recomposed).unwrap();
            assert!(err < 0.01, "recomposition mse {err} for {}", rec.source_id);
        }
    }

    #[test]
    fn corpus_roundtrips_through_disk() {
        let cfg = small_synth_cfg();
        let records = generate_synthetic_corpus(4, 5, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &records).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.source_id, b.source_id);
            assert_eq!(a.prompt, b.prompt);
            assert_eq!(a.patches.len(), b.patches.len());
            for (pa, pb) in a.patches.iter().zip(&b.patches) {
                assert_eq!(pa.anchor, pb.anchor);
                assert_eq!(pa.geometry.is_some(), pb.geometry.is_some());
                // pixels round-trip through 8-bit PNG
                let ia = pa.patch.pixels.as_ref().unwrap();
                let ib = pb.patch.pixels.as_ref().unwrap();
                let max_diff = ia
                    .pixels
                    .iter()
                    .zip(&ib.pixels)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f32, f32::max);
                assert!(max_diff <= 0.5 / 255.0 + 1e-4, "png roundtrip diff {max_diff}");
            }
        }
        assert!(read_corpus(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn resample_preserves_endpoints_and_spacing() {
        let line = vec![Point::new(0.0, 0.0), Point::new(0.5, 0.0), Point::new(1.0, 0.0)];
        let out = resample_polyline(&line, 4);
        assert_eq!(out.len(), 5);
        assert!(out[0].dist(&line[0]) < 1e-12);
        assert!(out[4].dist(&line[2]) < 1e-12);
        for (i, p) in out.iter().enumerate() {
            assert!((p.x - i as f64 * 0.25).abs() < 1e-9, "point {i} at {}", p.x);
        }
    }
}
