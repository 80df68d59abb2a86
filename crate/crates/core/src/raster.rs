//! Soft line-segment rasterizer with an exact reverse pass.
//!
//! Each segment covers a pixel center `q` with `c = (1 - ε) · relu(1 - d/τ)`
//! where `d` is the point-to-segment distance, and coverages combine by
//! soft-OR: `I = 1 - Π (1 - c)`. Per pixel, the active factors are sorted
//! before multiplying so the canvas is bit-identical under any segment order
//! and any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{bernstein, CubicBezier, CurveSet, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub height: usize,
    pub width: usize,
    /// Line segments per cubic.
    pub segments: usize,
    /// Stroke half-thickness in pixels.
    pub tau: f64,
    /// Saturation guard: a single segment never covers more than `1 - eps`.
    pub eps: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            height: 256,
            width: 256,
            segments: 16,
            tau: 1.0,
            eps: 1e-3,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RasterError {
    #[error("invalid raster config: {0}")]
    Config(String),
    #[error("mask has {got} entries, curve set has {expected} curves")]
    Mask { expected: usize, got: usize },
    #[error("gradient canvas is {got_h}x{got_w}, expected {h}x{w}")]
    Shape {
        h: usize,
        w: usize,
        got_h: usize,
        got_w: usize,
    },
}

impl RasterConfig {
    pub fn square(size: usize) -> Self {
        Self {
            height: size,
            width: size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let bad = |m: String| Err(RasterError::Config(m));
        if self.height == 0 || self.width == 0 {
            return bad(format!("canvas {}x{} is empty", self.height, self.width));
        }
        if self.segments == 0 {
            return bad("segments per curve must be >= 1".into());
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        Ok(())
    }
}

/// A polyline piece in pixel coordinates, tagged with where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub curve: usize,
    pub sample: usize,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self {
            a,
            b,
            curve: 0,
            sample: 0,
        }
    }
}

/// Row-major `h × w` grid of intensities (or of gradients, for backward).
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Canvas {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_data(h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w, "canvas data length");
        Self { h, w, data }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.w + col] = v;
    }

    /// 8-bit quantization, `v · 255` rounded half up and clamped.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Encodes as an 8-bit grayscale PNG.
    pub fn to_png(&self) -> Vec<u8> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(
                &self.to_gray8(),
                self.w as u32,
                self.h as u32,
                image::ExtendedColorType::L8,
            )
            .expect("in-memory PNG encoding");
        out
    }
}

/// Uniform samples `t_i = i / n` of a cubic with their Bernstein weights.
///
/// The weights are the exact Jacobian of each sample w.r.t. the control points.
pub fn sample_polyline(curve: &CubicBezier, n: usize) -> (Vec<Point>, Vec<[f64; 4]>) {
    assert!(n >= 1, "at least one segment");
    let basis: Vec<[f64; 4]> = (0..=n).map(|i| bernstein(i as f64 / n as f64)).collect();
    let pts = basis.iter().map(|w| eval_with(curve, w)).collect();
    (pts, basis)
}

fn eval_with(curve: &CubicBezier, w: &[f64; 4]) -> Point {
    curve.pts[0] * w[0] + curve.pts[1] * w[1] + curve.pts[2] * w[2] + curve.pts[3] * w[3]
}

/// Closest-point data for one pixel center against one segment.
#[derive(Debug, Clone, Copy)]
struct Closest {
    dist: f64,
    t: f64,
    /// `q - closest`, the unnormalized outward direction.
    offset: Point,
}

fn closest(q: Point, s: &Segment) -> Closest {
    let ab = s.b - s.a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((q - s.a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let offset = q - (s.a + ab * t);
    Closest {
        dist: offset.norm(),
        t,
        offset,
    }
}

const TILE: usize = 8;

/// Segment indices per `TILE × TILE` block, each list ascending.
struct Bins {
    tiles_x: usize,
    lists: Vec<Vec<u32>>,
}

impl Bins {
    fn new(segments: &[Segment], cfg: &RasterConfig) -> Self {
        let tiles_x = cfg.width.div_ceil(TILE);
        let tiles_y = cfg.height.div_ceil(TILE);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (i, s) in segments.iter().enumerate() {
            let Some((c0, c1, r0, r1)) = pixel_range(s, cfg) else {
                continue;
            };
            for ty in r0 / TILE..=r1 / TILE {
                for tx in c0 / TILE..=c1 / TILE {
                    lists[ty * tiles_x + tx].push(i as u32);
                }
            }
        }
        Self { tiles_x, lists }
    }

    fn for_pixel(&self, row: usize, col: usize) -> &[u32] {
        &self.lists[(row / TILE) * self.tiles_x + col / TILE]
    }
}

/// Inclusive pixel column/row ranges whose centers fall inside the segment's
/// bounding box grown by `tau`.
fn pixel_range(s: &Segment, cfg: &RasterConfig) -> Option<(usize, usize, usize, usize)> {
    let (lo_x, hi_x) = (s.a.x.min(s.b.x) - cfg.tau, s.a.x.max(s.b.x) + cfg.tau);
    let (lo_y, hi_y) = (s.a.y.min(s.b.y) - cfg.tau, s.a.y.max(s.b.y) + cfg.tau);
    let span = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let first = (lo - 0.5).ceil().max(0.0);
        let last = (hi - 0.5).floor().min(n as f64 - 1.0);
        (first <= last && last >= 0.0).then(|| (first as usize, last as usize))
    };
    let (c0, c1) = span(lo_x, hi_x, cfg.width)?;
    let (r0, r1) = span(lo_y, hi_y, cfg.height)?;
    Some((c0, c1, r0, r1))
}

fn inside_box(q: Point, s: &Segment, tau: f64) -> bool {
    q.x >= s.a.x.min(s.b.x) - tau
        && q.x <= s.a.x.max(s.b.x) + tau
        && q.y >= s.a.y.min(s.b.y) - tau
        && q.y <= s.a.y.max(s.b.y) + tau
}

/// Active `(1 - c, segment index, closest)` entries at one pixel, sorted by factor.
fn active_factors(
    q: Point,
    candidates: &[u32],
    segments: &[Segment],
    cfg: &RasterConfig,
    out: &mut Vec<(f64, usize, Closest)>,
) {
    out.clear();
    for &i in candidates {
        let s = &segments[i as usize];
        if !inside_box(q, s, cfg.tau) {
            continue;
        }
        let cl = closest(q, s);
        let c = (1.0 - cfg.eps) * (1.0 - cl.dist / cfg.tau).max(0.0);
        if c > 0.0 {
            out.push((1.0 - c, i as usize, cl));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
}

fn pixel_center(row: usize, col: usize) -> Point {
    Point::new(col as f64 + 0.5, row as f64 + 0.5)
}

/// Forward soft rasterization of pixel-space segments.
pub fn rasterize(segments: &[Segment], cfg: &RasterConfig) -> Canvas {
    let mut canvas = Canvas::zeros(cfg.height, cfg.width);
    if segments.is_empty() {
        return canvas;
    }
    let bins = Bins::new(segments, cfg);
    canvas
        .data
        .par_chunks_mut(cfg.width)
        .enumerate()
        .for_each(|(row, out)| {
            let mut factors = Vec::new();
            for (col, px) in out.iter_mut().enumerate() {
                let q = pixel_center(row, col);
                active_factors(q, bins.for_pixel(row, col), segments, cfg, &mut factors);
                if factors.is_empty() {
                    continue;
                }
                let keep = factors.iter().fold(1.0, |acc, f| acc * f.0);
                *px = 1.0 - keep;
            }
        });
    canvas
}

/// Gradient of a scalar loss w.r.t. one segment's endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentGrad {
    pub da: Point,
    pub db: Point,
}

/// Exact reverse pass of [`rasterize`] for upstream `dL/dI`.
pub fn rasterize_backward(
    segments: &[Segment],
    cfg: &RasterConfig,
    grad: &Canvas,
) -> Result<Vec<SegmentGrad>, RasterError> {
    if grad.h != cfg.height || grad.w != cfg.width {
        return Err(RasterError::Shape {
            h: cfg.height,
            w: cfg.width,
            got_h: grad.h,
            got_w: grad.w,
        });
    }
    let mut out = vec![SegmentGrad::default(); segments.len()];
    if segments.is_empty() {
        return Ok(out);
    }
    let bins = Bins::new(segments, cfg);
    let slope = (1.0 - cfg.eps) / cfg.tau;
    let per_row: Vec<Vec<(usize, SegmentGrad)>> = (0..cfg.height)
        .into_par_iter()
        .map(|row| {
            let mut contrib = Vec::new();
            let mut factors = Vec::new();
            let mut prefix = Vec::new();
            for col in 0..cfg.width {
                let g = grad.get(row, col);
                if g == 0.0 {
                    continue;
                }
                let q = pixel_center(row, col);
                active_factors(q, bins.for_pixel(row, col), segments, cfg, &mut factors);
                if factors.is_empty() {
                    continue;
                }
                // product of every other factor via prefix/suffix products
                prefix.clear();
                let mut acc = 1.0;
                for f in &factors {
                    prefix.push(acc);
                    acc *= f.0;
                }
                let mut suffix = 1.0;
                for j in (0..factors.len()).rev() {
                    let (f, seg, cl) = factors[j];
                    let others = prefix[j] * suffix;
                    suffix *= f;
                    if cl.dist <= 0.0 || cl.dist >= cfg.tau {
                        continue;
                    }
                    // dI/dc = others, dc/dd = -slope
                    let dl_dd = -g * others * slope;
                    let u = cl.offset * (1.0 / cl.dist);
                    contrib.push((
                        seg,
                        SegmentGrad {
                            da: u * (-(1.0 - cl.t) * dl_dd),
                            db: u * (-cl.t * dl_dd),
                        },
                    ));
                }
            }
            contrib
        })
        .collect();
    for (seg, sg) in per_row.into_iter().flatten() {
        out[seg].da += sg.da;
        out[seg].db += sg.db;
    }
    Ok(out)
}

/// Affine map from user units to pixels: letterboxed, centered, aspect kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewTransform {
    pub scale: f64,
    pub offset: Point,
}

impl ViewTransform {
    pub fn fit(cs: &CurveSet, cfg: &RasterConfig) -> Self {
        let vb = cs.view_box;
        let scale = (cfg.width as f64 / vb.width).min(cfg.height as f64 / vb.height);
        let offset = Point::new(
            (cfg.width as f64 - vb.width * scale) * 0.5 - vb.min_x * scale,
            (cfg.height as f64 - vb.height * scale) * 0.5 - vb.min_y * scale,
        );
        Self { scale, offset }
    }

    pub fn apply(&self, p: Point) -> Point {
        p * self.scale + self.offset
    }
}

/// Everything the reverse pass needs from a forward render.
#[derive(Debug, Clone)]
pub struct RenderContext {
    pub cfg: RasterConfig,
    pub view: ViewTransform,
    pub segments: Vec<Segment>,
    pub basis: Vec<[f64; 4]>,
    pub mask: Vec<bool>,
    pub num_curves: usize,
}

/// Samples every kept curve and rasterizes all of them in one batch.
pub fn render_curveset(
    cs: &CurveSet,
    cfg: &RasterConfig,
    mask: Option<&[bool]>,
) -> Result<(Canvas, RenderContext), RasterError> {
    cfg.validate()?;
    let num_curves = cs.num_curves();
    let mask = match mask {
        Some(m) if m.len() != num_curves => {
            return Err(RasterError::Mask {
                expected: num_curves,
                got: m.len(),
            })
        }
        Some(m) => m.to_vec(),
        None => vec![true; num_curves],
    };
    let view = ViewTransform::fit(cs, cfg);
    let n = cfg.segments;
    let basis: Vec<[f64; 4]> = (0..=n).map(|i| bernstein(i as f64 / n as f64)).collect();
    let mut segments = Vec::with_capacity(num_curves * n);
    for (ci, curve) in cs.curves().enumerate() {
        if !mask[ci] {
            continue;
        }
        let px = curve.map(|p| view.apply(p));
        let pts: Vec<Point> = basis.iter().map(|w| eval_with(&px, w)).collect();
        for (i, w) in pts.windows(2).enumerate() {
            segments.push(Segment {
                a: w[0],
                b: w[1],
                curve: ci,
                sample: i,
            });
        }
    }
    let canvas = rasterize(&segments, cfg);
    Ok((
        canvas,
        RenderContext {
            cfg: *cfg,
            view,
            segments,
            basis,
            mask,
            num_curves,
        },
    ))
}

/// Pulls `dL/dI` back to control points, laid out `8 · curve + 2 · k + axis`.
pub fn render_backward(ctx: &RenderContext, grad: &Canvas) -> Result<Vec<f64>, RasterError> {
    let seg_grads = rasterize_backward(&ctx.segments, &ctx.cfg, grad)?;
    let mut out = vec![0.0; 8 * ctx.num_curves];
    let s = ctx.view.scale;
    for (seg, g) in ctx.segments.iter().zip(&seg_grads) {
        for (sample, d) in [(seg.sample, g.da), (seg.sample + 1, g.db)] {
            let w = &ctx.basis[sample];
            let base = 8 * seg.curve;
            for k in 0..4 {
                out[base + 2 * k] += w[k] * d.x * s;
                out[base + 2 * k + 1] += w[k] * d.y * s;
            }
        }
    }
    Ok(out)
}
