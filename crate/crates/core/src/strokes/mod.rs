//! Character database access: per-stroke outlines and medians, reference
//! rasters and skeleton-based initial trajectories.
//!
//! The database is line-delimited JSON, one character per line:
//! `{"character": "鸟", "strokes": ["M ..."], "medians": [[[x, y], ...]]}`.
//! Glyph coordinates live in a 1024-unit em square with y pointing up.

pub mod path;

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::chebyshev::{cgl_nodes, TrajectorySpec};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::raster::Canvas;

pub use path::{parse_path, Segment, Subpath};

/// Maximum chord deviation, in canvas pixels, when flattening outlines.
pub const FLATTEN_TOLERANCE: f64 = 0.25;

/// One character: stroke outlines and medians in writing order.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterEntry {
    pub character: char,
    pub stroke_paths: Vec<String>,
    pub medians: Vec<Vec<Vec2>>,
}

#[derive(Deserialize)]
struct RawEntry {
    character: String,
    strokes: Vec<String>,
    medians: Vec<Vec<[f64; 2]>>,
}

impl CharacterEntry {
    pub fn stroke_count(&self) -> usize {
        self.stroke_paths.len()
    }

    fn from_raw(raw: RawEntry) -> std::result::Result<Self, String> {
        let mut chars = raw.character.chars();
        let character = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(format!("'character' must be a single character, got {:?}", raw.character)),
        };
        if raw.strokes.is_empty() {
            return Err("entry has no strokes".into());
        }
        if raw.strokes.len() != raw.medians.len() {
            return Err(format!(
                "{} strokes but {} medians",
                raw.strokes.len(),
                raw.medians.len()
            ));
        }
        if let Some(i) = raw.medians.iter().position(|m| m.len() < 2) {
            return Err(format!("median {i} has fewer than 2 points"));
        }
        Ok(CharacterEntry {
            character,
            stroke_paths: raw.strokes,
            medians: raw
                .medians
                .into_iter()
                .map(|m| m.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
                .collect(),
        })
    }
}

/// Looks up `character` in a line-delimited database.
pub fn load_entry(database: &Path, character: char) -> Result<CharacterEntry> {
    let file = std::fs::File::open(database).map_err(|e| Error::io(database, e))?;
    find_entry(BufReader::new(file), character)
}

/// Scans records from `reader` until `character` is found.
pub fn find_entry(reader: impl BufRead, character: char) -> Result<CharacterEntry> {
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if raw.character.chars().eq(std::iter::once(character)) {
            return CharacterEntry::from_raw(raw).map_err(|message| Error::Parse {
                line: lineno,
                message,
            });
        }
    }
    Err(Error::NotFound(character))
}

/// Maps database coordinates to canvas pixels:
/// `x' = s x`, `y' = s (baseline - y)`, `s = canvas_size / em_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphTransform {
    pub scale: f64,
    pub baseline: f64,
}

impl GlyphTransform {
    pub const EM_SIZE: f64 = 1024.0;
    pub const DEFAULT_BASELINE: f64 = 900.0;

    pub fn for_canvas(canvas_size: usize) -> Self {
        GlyphTransform {
            scale: canvas_size as f64 / Self::EM_SIZE,
            baseline: Self::DEFAULT_BASELINE,
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        Vec2::new(self.scale * p.x, self.scale * (self.baseline - p.y))
    }
}

/// One stroke ready for optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeRecord {
    pub index: usize,
    /// The stroke alone, rasterized at canvas resolution.
    pub reference: Canvas,
    /// Median polyline in canvas pixels.
    pub skeleton: Vec<Vec2>,
}

impl StrokeRecord {
    /// Direction of the first non-degenerate skeleton segment.
    pub fn initial_direction(&self) -> Result<Vec2> {
        skeleton_direction(&self.skeleton)
    }

    /// Same as [`initial_trajectory`].
    pub fn initial_trajectory(&self, order: usize, z0: f64) -> Result<TrajectorySpec> {
        initial_trajectory(self, order, z0)
    }
}

pub fn skeleton_direction(skeleton: &[Vec2]) -> Result<Vec2> {
    skeleton
        .windows(2)
        .map(|w| w[1] - w[0])
        .find(|d| d.length() > 0.0)
        .map(|d| d * (1.0 / d.length()))
        .ok_or(Error::DegenerateSkeleton)
}

/// Flattened outline polygons of one stroke in canvas pixels.
pub fn stroke_polygons(entry: &CharacterEntry, index: usize, transform: &GlyphTransform) -> Result<Vec<Vec<Vec2>>> {
    let data = entry.stroke_paths.get(index).ok_or(Error::IndexOutOfRange {
        index,
        count: entry.stroke_count(),
    })?;
    Ok(parse_path(data)?
        .iter()
        .map(|sp| sp.map(|p| transform.apply(p)).flatten(FLATTEN_TOLERANCE))
        .collect())
}

pub fn rasterize_stroke(entry: &CharacterEntry, index: usize, canvas_size: usize) -> Result<StrokeRecord> {
    rasterize_stroke_with(entry, index, canvas_size, &GlyphTransform::for_canvas(canvas_size))
}

pub fn rasterize_stroke_with(
    entry: &CharacterEntry,
    index: usize,
    canvas_size: usize,
    transform: &GlyphTransform,
) -> Result<StrokeRecord> {
    let polygons = stroke_polygons(entry, index, transform)?;
    let mut reference = Canvas::square(canvas_size)?;
    reference.fill_polygons(&polygons);
    if reference.inked_pixels() == 0 {
        return Err(Error::Config(format!(
            "stroke {index} of {:?} rasterizes to an empty image",
            entry.character
        )));
    }
    let limit = canvas_size as f64;
    let skeleton = entry.medians[index]
        .iter()
        .map(|&p| {
            let q = transform.apply(p);
            Vec2::new(q.x.clamp(0.0, limit), q.y.clamp(0.0, limit))
        })
        .collect();
    Ok(StrokeRecord {
        index,
        reference,
        skeleton,
    })
}

/// All strokes of `entry`, in writing order.
pub fn extract_strokes(entry: &CharacterEntry, canvas_size: usize) -> Result<Vec<StrokeRecord>> {
    (0..entry.stroke_count())
        .map(|i| rasterize_stroke(entry, i, canvas_size))
        .collect()
}

/// The whole character: every stroke filled separately and composited.
pub fn rasterize_character(entry: &CharacterEntry, canvas_size: usize) -> Result<Canvas> {
    let transform = GlyphTransform::for_canvas(canvas_size);
    let mut canvas = Canvas::square(canvas_size)?;
    for i in 0..entry.stroke_count() {
        canvas.fill_polygons(&stroke_polygons(entry, i, &transform)?);
    }
    Ok(canvas)
}

/// Samples the skeleton by normalized arc length at the CGL parameters
/// (`t = 1` at the skeleton start), with a constant depression `z0`.
pub fn initial_trajectory(record: &StrokeRecord, order: usize, z0: f64) -> Result<TrajectorySpec> {
    let pts = &record.skeleton;
    let mut cumulative = Vec::with_capacity(pts.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in pts.windows(2) {
        total += w[0].distance(w[1]);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateSkeleton);
    }
    let nodes = cgl_nodes(order)?;
    let (mut xs, mut ys) = (Vec::with_capacity(order + 1), Vec::with_capacity(order + 1));
    for &t in &nodes {
        let p = point_at_arc_length(pts, &cumulative, total * (1.0 - t) / 2.0);
        xs.push(p.x);
        ys.push(p.y);
    }
    TrajectorySpec::new(order, xs, ys, vec![z0; order + 1])
}

fn point_at_arc_length(pts: &[Vec2], cumulative: &[f64], s: f64) -> Vec2 {
    if s <= 0.0 {
        return pts[0];
    }
    let total = *cumulative.last().expect("non-empty");
    if s >= total {
        return *pts.last().expect("non-empty");
    }
    // first segment whose end lies beyond s
    let i = cumulative.partition_point(|&c| c <= s).max(1);
    let (a, b) = (pts[i - 1], pts[i]);
    let len = cumulative[i] - cumulative[i - 1];
    let f = (s - cumulative[i - 1]) / len;
    a + (b - a) * f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with_skeleton(skeleton: Vec<Vec2>) -> StrokeRecord {
        StrokeRecord {
            index: 0,
            reference: Canvas::square(8).unwrap(),
            skeleton,
        }
    }

    #[test]
    fn straight_skeleton_maps_cgl_nodes() {
        let rec = record_with_skeleton(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]);
        let spec = initial_trajectory(&rec, 4, 0.5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [0.0, 50.0 * (1.0 - h), 50.0, 50.0 * (1.0 + h), 100.0];
        for (a, b) in spec.x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((spec.x[1] - 14.644660940672622).abs() < 1e-12);
        assert!(spec.y.iter().all(|&y| y == 0.0));
        assert_eq!(spec.z, vec![0.5; 5]);
    }

    #[test]
    fn polyline_arc_length() {
        // L-shaped skeleton, total length 20
        let rec = record_with_skeleton(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)]);
        let spec = initial_trajectory(&rec, 4, 0.2).unwrap();
        assert_eq!((spec.x[0], spec.y[0]), (0.0, 0.0));
        assert_eq!((spec.x[2], spec.y[2]), (10.0, 0.0));
        assert_eq!((spec.x[4], spec.y[4]), (10.0, 10.0));
    }

    #[test]
    fn degenerate_and_bad_order() {
        let rec = record_with_skeleton(vec![Vec2::new(3.0, 3.0), Vec2::new(3.0, 3.0)]);
        assert!(matches!(initial_trajectory(&rec, 4, 0.5), Err(Error::DegenerateSkeleton)));
        assert!(matches!(rec.initial_direction(), Err(Error::DegenerateSkeleton)));
        let rec = record_with_skeleton(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
        assert!(matches!(initial_trajectory(&rec, 2, 0.5), Err(Error::InvalidOrder(2))));
    }

    #[test]
    fn entry_lookup() {
        let db = concat!(
            r#"{"character":"一","strokes":["M 0 0 L 10 0 L 10 10 Z"],"medians":[[[0,5],[10,5]]]}"#, "\n",
            "\n",
            r#"{"character":"二","strokes":["M 0 0 L 1 1 Z","M 0 0 L 2 2 Z"],"medians":[[[0,0],[1,1]],[[0,0],[2,2]]]}"#, "\n",
        );
        let e = find_entry(db.as_bytes(), '二').unwrap();
        assert_eq!(e.stroke_count(), 2);
        assert_eq!(e.medians[1][1], Vec2::new(2.0, 2.0));
        assert!(matches!(find_entry(db.as_bytes(), '三'), Err(Error::NotFound('三'))));
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let db = concat!(
            r#"{"character":"一","strokes":["M 0 0 L 10 0 Z"],"medians":[[[0,5],[10,5]]]}"#, "\n",
            r#"{"character":"二","strokes":["M 0 0 L"#, "\n",
        );
        match find_entry(db.as_bytes(), '三') {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_medians_rejected() {
        let db = r#"{"character":"一","strokes":["M 0 0 L 10 0 Z"],"medians":[]}"#;
        assert!(matches!(find_entry(db.as_bytes(), '一'), Err(Error::Parse { line: 1, .. })));
        let db = r#"{"character":"一","strokes":["M 0 0 L 10 0 Z"],"medians":[[[0,0]]]}"#;
        assert!(matches!(find_entry(db.as_bytes(), '一'), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn rectangle_stroke_area() {
        // 400 x 200 units -> 100 x 50 px at 256
        let entry = CharacterEntry {
            character: '口',
            stroke_paths: vec!["M 100 800 L 500 800 L 500 600 L 100 600 Z".into()],
            medians: vec![vec![Vec2::new(100.0, 700.0), Vec2::new(500.0, 700.0)]],
        };
        let rec = rasterize_stroke(&entry, 0, 256).unwrap();
        let area = 100.0 * 50.0;
        assert!((rec.reference.ink() - area).abs() / area < 0.02);
        assert_eq!(rec.skeleton, vec![Vec2::new(25.0, 50.0), Vec2::new(125.0, 50.0)]);
        assert!(matches!(
            rasterize_stroke(&entry, 1, 256),
            Err(Error::IndexOutOfRange { index: 1, count: 1 })
        ));
    }
}
