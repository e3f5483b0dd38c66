//! Grayscale ink canvas and the rasterizers that write into it.
//!
//! Every shape is sampled on a 2x2 grid per pixel (sample offsets 0.25 and
//! 0.75), which yields coverage in steps of 1/4. Ink is composited with a
//! per-pixel maximum, so overlapping marks never exceed full ink. Shapes are
//! filled by horizontal spans: for every sample row the covered interval is
//! solved analytically and only the sample columns inside it are counted.

use std::io::Write;
use std::path::Path;

use crate::brush::{
    footprint_of, simple_brush_radius, step_dynamic, BrushModel, BrushState, ControlInput,
    DynamicParams, Footprint,
};
use crate::calibration::CalibrationModel;
use crate::chebyshev::{SamplingBasis, TrajectorySpec};
use crate::error::{Error, Result};
use crate::geom::Vec2;

const SUB: [f64; 2] = [0.25, 0.75];

/// Row-major ink raster, 0 = paper, 1 = full ink.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// Closed interval of x offsets (relative to a shape anchor) covered on one sample row.
type Span = Option<(f64, f64)>;

impl Canvas {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("canvas dimensions must be positive, got {width}x{height}")));
        }
        Ok(Canvas {
            width,
            height,
            pixels: vec![0.0; width * height],
        })
    }

    pub fn square(size: usize) -> Result<Self> {
        Self::new(size, size)
    }

    /// Canvas from raw values, clamped into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        let mut canvas = Self::new(width, height)?;
        for (dst, src) in canvas.pixels.iter_mut().zip(pixels) {
            *dst = if src.is_nan() { 0.0 } else { src.clamp(0.0, 1.0) };
        }
        Ok(canvas)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn clear(&mut self) {
        self.pixels.iter_mut().for_each(|p| *p = 0.0);
    }

    /// Sum of all pixel values.
    pub fn ink(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn inked_pixels(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0.0).count()
    }

    /// Ink-weighted centroid, `None` on a blank canvas.
    pub fn centroid(&self) -> Option<Vec2> {
        let total = self.ink();
        if total <= 0.0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for (idx, &p) in self.pixels.iter().enumerate() {
            sx += p * ((idx % self.width) as f64 + 0.5);
            sy += p * ((idx / self.width) as f64 + 0.5);
        }
        Some(Vec2::new(sx / total, sy / total))
    }

    /// Per-pixel maximum with `other`.
    pub fn composite_max(&mut self, other: &Canvas) -> Result<()> {
        self.check_same_size(other)?;
        for (a, &b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a = a.max(b);
        }
        Ok(())
    }

    fn check_same_size(&self, other: &Canvas) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension {
                expected: self.pixels.len(),
                actual: other.pixels.len(),
            });
        }
        Ok(())
    }

    /// Composites one pixel row covered by up to two sample-row spans.
    ///
    /// Spans are offsets relative to `anchor_x`; comparing in that frame
    /// keeps the pattern exact under integer translation.
    fn cover_row(&mut self, j: usize, anchor_x: f64, spans: [Span; 2]) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(a, b) in spans.iter().flatten() {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if lo > hi {
            return;
        }
        let first = (anchor_x + lo - 1.0).floor().max(0.0);
        let last = (anchor_x + hi + 1.0).ceil().min(self.width as f64 - 1.0);
        if !(first <= last) {
            return;
        }
        let row = &mut self.pixels[j * self.width..(j + 1) * self.width];
        for i in first as usize..=last as usize {
            let mut count = 0u32;
            for &(a, b) in spans.iter().flatten() {
                for off in SUB {
                    let c = (i as f64 + off) - anchor_x;
                    if c >= a && c <= b {
                        count += 1;
                    }
                }
            }
            if count > 0 {
                let v = count as f64 * 0.25;
                if v > row[i] {
                    row[i] = v;
                }
            }
        }
    }

    /// Pixel rows overlapping `[y0, y1]`, clipped to the canvas.
    fn row_range(&self, y0: f64, y1: f64) -> std::ops::Range<usize> {
        let first = y0.floor().max(0.0);
        let last = (y1.ceil() + 1.0).min(self.height as f64);
        if !(first < last) {
            return 0..0;
        }
        first as usize..last as usize
    }

    /// Deposits the droplet of `fp`: flat end of width `w` at the root,
    /// half-width `(w/2) sqrt(1 - s/d)` at distance `s` along the
    /// direction, tip at `s = d`.
    pub fn stamp_footprint(&mut self, fp: &Footprint) {
        let (w, d) = (fp.width, fp.drag);
        if !(w > 0.0 && d > 0.0) {
            return;
        }
        let u = fp.direction;
        let root = fp.root;
        let k = 0.25 * w * w;
        let kd = k / d;
        let half = 0.5 * w;
        // bounding box of the local rectangle [0, d] x [-w/2, w/2]
        let ext_y = u.y.abs() * d;
        let ymin = root.y + u.y.min(0.0) * d - u.x.abs() * half;
        let ymax = root.y + u.y.max(0.0) * d + u.x.abs() * half;
        debug_assert!(ymax - ymin <= ext_y + w + 1e-9);
        let a = u.y * u.y;

        for j in self.row_range(ymin, ymax) {
            let span = |off: f64| -> Span {
                let dy = (j as f64 + off) - root.y;
                let s0 = dy * u.y;
                let h0 = dy * u.x;
                let b = -2.0 * u.y * h0 + kd * u.x;
                let c = h0 * h0 + kd * s0 - k;
                let (mut lo, mut hi) = quadratic_le_zero(a, b, c)?;
                // s = u.x * dx + s0 >= 0
                if u.x > 1e-12 {
                    lo = lo.max(-s0 / u.x);
                } else if u.x < -1e-12 {
                    hi = hi.min(-s0 / u.x);
                } else if s0 < 0.0 {
                    return None;
                }
                (lo <= hi).then_some((lo, hi))
            };
            self.cover_row(j, root.x, [span(SUB[0]), span(SUB[1])]);
        }
    }

    /// Deposits a disk of `radius` around `center`.
    pub fn stamp_circle(&mut self, center: Vec2, radius: f64) {
        if !(radius > 0.0) {
            return;
        }
        let r2 = radius * radius;
        for j in self.row_range(center.y - radius, center.y + radius) {
            let span = |off: f64| -> Span {
                let dy = (j as f64 + off) - center.y;
                let rem = r2 - dy * dy;
                (rem >= 0.0).then(|| {
                    let h = rem.sqrt();
                    (-h, h)
                })
            };
            self.cover_row(j, center.x, [span(SUB[0]), span(SUB[1])]);
        }
    }

    /// Fills closed polygons with the even-odd rule.
    pub fn fill_polygons(&mut self, polygons: &[Vec<Vec2>]) {
        let edges: Vec<(Vec2, Vec2)> = polygons
            .iter()
            .filter(|p| p.len() >= 2)
            .flat_map(|p| {
                p.iter()
                    .zip(p.iter().cycle().skip(1))
                    .map(|(&a, &b)| (a, b))
                    .filter(|(a, b)| a.y != b.y)
            })
            .collect();
        if edges.is_empty() {
            return;
        }
        let ymin = edges.iter().map(|(a, b)| a.y.min(b.y)).fold(f64::INFINITY, f64::min);
        let ymax = edges.iter().map(|(a, b)| a.y.max(b.y)).fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0u8; self.width];
        let mut xs = Vec::new();
        for j in self.row_range(ymin, ymax) {
            counts.iter_mut().for_each(|c| *c = 0);
            for off in SUB {
                let y = j as f64 + off;
                xs.clear();
                for (a, b) in &edges {
                    if (a.y <= y && y < b.y) || (b.y <= y && y < a.y) {
                        xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                    }
                }
                xs.sort_by(f64::total_cmp);
                for pair in xs.chunks_exact(2) {
                    let (x0, x1) = (pair[0], pair[1]);
                    let first = (x0 - 1.0).floor().max(0.0) as usize;
                    let last = ((x1 + 1.0).ceil().max(0.0) as usize).min(self.width);
                    for (i, count) in counts.iter_mut().enumerate().take(last).skip(first) {
                        for sx in SUB {
                            let c = i as f64 + sx;
                            if c >= x0 && c < x1 {
                                *count += 1;
                            }
                        }
                    }
                }
            }
            let row = &mut self.pixels[j * self.width..(j + 1) * self.width];
            for (p, &c) in row.iter_mut().zip(&counts) {
                // even-odd: each sample is counted at most once per sample row
                let v = (c.min(4)) as f64 * 0.25;
                if v > *p {
                    *p = v;
                }
            }
        }
    }

    /// 8-bit gray, white paper: `255 * (1 - ink)`.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| to_byte(1.0 - v)).collect()
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.to_gray8());
        write_file(path, &bytes)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_gray8())
            .expect("buffer matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Interval where `a x^2 + b x + c <= 0` for `a >= 0`.
fn quadratic_le_zero(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a < 1e-18 {
        if b.abs() < 1e-300 {
            return (c <= 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY));
        }
        let root = -c / b;
        return Some(if b > 0.0 {
            (f64::NEG_INFINITY, root)
        } else {
            (root, f64::INFINITY)
        });
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let r1 = q / a;
    let r2 = if q != 0.0 { c / q } else { r1 };
    Some((r1.min(r2), r1.max(r2)))
}

/// Signed per-pixel differences `sim - reference`, row-major.
pub fn image_residuals(sim: &Canvas, reference: &Canvas) -> Result<Vec<f64>> {
    sim.check_same_size(reference)?;
    Ok(sim
        .pixels
        .iter()
        .zip(&reference.pixels)
        .map(|(s, r)| s - r)
        .collect())
}

/// Positive differences in green, negative in red, shared ink in gray.
pub fn diff_overlay_rgb(sim: &Canvas, reference: &Canvas) -> Result<Vec<u8>> {
    sim.check_same_size(reference)?;
    let mut rgb = Vec::with_capacity(sim.pixels.len() * 3);
    for (&s, &r) in sim.pixels.iter().zip(&reference.pixels) {
        let common = s.min(r);
        let pos = (s - r).max(0.0);
        let neg = (r - s).max(0.0);
        rgb.push(to_byte(1.0 - common - pos));
        rgb.push(to_byte(1.0 - common - neg));
        rgb.push(to_byte(1.0 - common - pos - neg));
    }
    Ok(rgb)
}

pub fn write_diff_png(sim: &Canvas, reference: &Canvas, path: &Path) -> Result<()> {
    let rgb = diff_overlay_rgb(sim, reference)?;
    let img = image::RgbImage::from_raw(sim.width as u32, sim.height as u32, rgb)
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// How a trajectory is turned into ink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub model: BrushModel,
    /// Dense samples per stroke.
    pub samples: usize,
    /// Disk radius per unit depression for the simple brush.
    pub simple_gain: f64,
    pub dynamics: DynamicParams,
}

impl RenderConfig {
    /// Defaults for a square canvas: four samples per pixel of side length.
    pub fn for_canvas(model: BrushModel, canvas_size: usize) -> Self {
        RenderConfig {
            model,
            samples: 4 * canvas_size,
            simple_gain: 7.0,
            dynamics: DynamicParams::default(),
        }
    }
}

/// Runs the brush along dense samples, stamping at every step; returns
/// the final brush state.
pub fn render_samples(
    samples: &[[f64; 3]],
    initial_state: &BrushState,
    calib: &CalibrationModel,
    canvas: &mut Canvas,
    cfg: &RenderConfig,
) -> BrushState {
    let Some(&[x0, y0, z0]) = samples.first() else {
        return *initial_state;
    };
    let mut state = BrushState {
        x: x0,
        y: y0,
        z: z0,
        ..*initial_state
    };
    match cfg.model {
        BrushModel::Dynamic => {
            if let Some(fp) = footprint_of(&state) {
                canvas.stamp_footprint(&fp);
            }
            for pair in samples.windows(2) {
                let u = ControlInput::between(pair[0], pair[1]);
                state = step_dynamic(&state, u, calib, cfg.dynamics);
                if let Some(fp) = footprint_of(&state) {
                    canvas.stamp_footprint(&fp);
                }
            }
        }
        BrushModel::Simple => {
            for &[x, y, z] in samples {
                // Depression saturates at the calibrated limit for both models.
                canvas.stamp_circle(Vec2::new(x, y), simple_brush_radius(z.min(calib.z_max), cfg.simple_gain));
            }
            let &[x, y, z] = samples.last().expect("non-empty");
            state.x = x;
            state.y = y;
            state.z = z;
        }
    }
    state
}

/// Renders one stroke trajectory onto `canvas`.
pub fn render_stroke(
    spec: &TrajectorySpec,
    initial_state: &BrushState,
    calib: &CalibrationModel,
    canvas: &mut Canvas,
    cfg: &RenderConfig,
) -> Result<BrushState> {
    let grid = crate::chebyshev::CglGrid::new(spec.order())?;
    let basis = SamplingBasis::new(&grid, cfg.samples)?;
    let samples = basis.sample(spec)?;
    Ok(render_samples(&samples, initial_state, calib, canvas, cfg))
}
