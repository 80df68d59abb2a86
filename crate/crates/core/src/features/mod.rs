//! Fixed-weight convolutional feature pyramid with a hand-written reverse pass.
//!
//! Weights never change, so backward only propagates to the input canvas.
//! Convolutions run as chunked im2col + GEMM.

mod loss;
mod weights;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{content_loss, gram, style_loss, GramMatrix, LossWeights};
pub use weights::{load_weights, write_weights, ConvWeights, WeightBundle, FORMAT_VERSION, MAGIC};

use crate::raster::Canvas;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("weight file format error: {0}")]
    Format(String),
    #[error("shape mismatch in layer {layer}: {message}")]
    Shape { layer: String, message: String },
    #[error("non-finite or invalid values in layer {0}")]
    Data(String),
    #[error("input {h}x{w} too small, network needs at least {min}x{min}")]
    Size { h: usize, w: usize, min: usize },
    #[error("tap mismatch: {0}")]
    Tap(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
}

fn shape_err(layer: &str, message: impl Into<String>) -> FeatureError {
    FeatureError::Shape {
        layer: layer.to_string(),
        message: message.into(),
    }
}

/// One stage of the pyramid. Convolutions use stride 1 and "same" padding;
/// pools are 2×2 with stride 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        name: String,
        out_ch: usize,
        in_ch: usize,
        k_h: usize,
        k_w: usize,
    },
    Relu {
        name: String,
    },
    MaxPool {
        name: String,
    },
    AvgPool {
        name: String,
    },
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Conv { name, .. }
            | Layer::Relu { name }
            | Layer::MaxPool { name }
            | Layer::AvgPool { name } => name,
        }
    }

    fn is_pool(&self) -> bool {
        matches!(self, Layer::MaxPool { .. } | Layer::AvgPool { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureNetSpec {
    /// Grayscale input is replicated to this many channels.
    pub input_channels: usize,
    pub layers: Vec<Layer>,
    /// Layers whose activations feed the Gram statistics, in loss order.
    pub taps: Vec<String>,
}

impl FeatureNetSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, FeatureError> {
        let spec: Self =
            serde_json::from_slice(bytes).map_err(|e| FeatureError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.input_channels == 0 {
            return Err(FeatureError::Spec("input_channels must be >= 1".into()));
        }
        let mut channels = self.input_channels;
        let mut seen = std::collections::HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name()) {
                return Err(FeatureError::Spec(format!("duplicate layer name {}", layer.name())));
            }
            if let Layer::Conv {
                name,
                out_ch,
                in_ch,
                k_h,
                k_w,
            } = layer
            {
                if *in_ch != channels {
                    return Err(shape_err(name, format!("expects {in_ch} input channels, previous layer gives {channels}")));
                }
                if *out_ch == 0 || *k_h == 0 || *k_w == 0 {
                    return Err(shape_err(name, "zero-sized convolution"));
                }
                channels = *out_ch;
            }
        }
        if self.taps.is_empty() {
            return Err(FeatureError::Spec("no taps".into()));
        }
        for t in &self.taps {
            if !seen.contains(t.as_str()) {
                return Err(FeatureError::Tap(format!("tap {t} is not a layer")));
            }
        }
        Ok(())
    }

    fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name() == name)
    }

    /// Index one past the deepest tapped layer.
    fn depth(&self) -> usize {
        self.taps
            .iter()
            .filter_map(|t| self.layer_index(t))
            .max()
            .map_or(0, |i| i + 1)
    }

    /// Smallest square input that keeps one pixel through every pool up to the deepest tap.
    pub fn min_input(&self) -> usize {
        1 << self.layers[..self.depth()].iter().filter(|l| l.is_pool()).count()
    }
}

/// VGG19 feature layers with the first ReLU of each block tapped.
pub fn vgg19_spec() -> FeatureNetSpec {
    let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (4, 256), (4, 512), (4, 512)];
    let mut layers = Vec::new();
    let mut in_ch = 3;
    for (b, &(convs, out_ch)) in blocks.iter().enumerate() {
        for i in 1..=convs {
            layers.push(Layer::Conv {
                name: format!("conv{}_{i}", b + 1),
                out_ch,
                in_ch,
                k_h: 3,
                k_w: 3,
            });
            layers.push(Layer::Relu {
                name: format!("relu{}_{i}", b + 1),
            });
            in_ch = out_ch;
        }
        layers.push(Layer::MaxPool {
            name: format!("pool{}", b + 1),
        });
    }
    FeatureNetSpec {
        input_channels: 3,
        layers,
        taps: (1..=5).map(|b| format!("relu{b}_1")).collect(),
    }
}

/// Two convolutions with ReLUs and an average pool; small enough for exhaustive
/// finite-difference checks.
pub fn tiny_spec() -> FeatureNetSpec {
    FeatureNetSpec {
        input_channels: 3,
        layers: vec![
            Layer::Conv {
                name: "conv1".into(),
                out_ch: 8,
                in_ch: 3,
                k_h: 3,
                k_w: 3,
            },
            Layer::Relu {
                name: "relu1".into(),
            },
            Layer::AvgPool {
                name: "pool1".into(),
            },
            Layer::Conv {
                name: "conv2".into(),
                out_ch: 8,
                in_ch: 8,
                k_h: 3,
                k_w: 3,
            },
            Layer::Relu {
                name: "relu2".into(),
            },
        ],
        taps: vec!["relu1".into(), "relu2".into()],
    }
}

pub const TINY_SEED: u64 = 0x5EED_C0DE;

/// Seeded He-uniform weights for any spec.
pub fn random_weights(spec: &FeatureNetSpec, seed: u64) -> WeightBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs = spec
        .layers
        .iter()
        .filter_map(|l| match l {
            Layer::Conv {
                name,
                out_ch,
                in_ch,
                k_h,
                k_w,
            } => Some((name, *out_ch, *in_ch, *k_h, *k_w)),
            _ => None,
        })
        .map(|(name, out_ch, in_ch, k_h, k_w)| {
            let bound = (6.0 / (in_ch * k_h * k_w) as f64).sqrt() as f32;
            ConvWeights {
                name: name.clone(),
                out_ch,
                in_ch,
                k_h,
                k_w,
                weights: (0..out_ch * in_ch * k_h * k_w)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
                biases: (0..out_ch).map(|_| rng.gen_range(-0.1f32..0.1)).collect(),
            }
        })
        .collect();
    WeightBundle {
        convs,
        means: (0..spec.input_channels).map(|c| 0.05 - 0.05 * c as f32).collect(),
        stds: (0..spec.input_channels).map(|c| 0.9 + 0.1 * c as f32).collect(),
        source: format!("random:{seed:#x}"),
        version: FORMAT_VERSION,
    }
}

/// The built-in test network: [`tiny_spec`] with fixed seeded weights.
pub fn tiny_net() -> FeatureNet {
    let spec = tiny_spec();
    let mut bundle = random_weights(&spec, TINY_SEED);
    bundle.source = "builtin:tiny".into();
    FeatureNet::new(spec, &bundle).expect("builtin tiny network is consistent")
}

/// `C × H × W` activation, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Activation {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_data(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "activation data length");
        Self { c, h, w, data }
    }

    pub fn same_shape(&self, other: &Activation) -> bool {
        (self.c, self.h, self.w) == (other.c, other.h, other.w)
    }

    /// Channels × positions view.
    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.c, self.h * self.w), &self.data).expect("shape")
    }
}

#[derive(Debug, Clone)]
struct ConvOp {
    /// `(out, in · kh · kw)`
    weights: Array2<f64>,
    biases: Vec<f64>,
    in_ch: usize,
    k_h: usize,
    k_w: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Conv(ConvOp),
    Relu,
    MaxPool,
    AvgPool,
}

/// A validated spec bound to its weights. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct FeatureNet {
    spec: FeatureNetSpec,
    ops: Vec<Op>,
    means: Vec<f64>,
    stds: Vec<f64>,
    source: String,
}

/// What backward needs from each layer.
#[derive(Debug, Clone)]
enum Saved {
    Conv { h: usize, w: usize },
    Relu { output: Vec<f64> },
    MaxPool { argmax: Vec<usize>, c: usize, h: usize, w: usize },
    AvgPool { c: usize, h: usize, w: usize },
}

/// Forward output: tapped activations (in spec tap order) and the backward cache.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub taps: Vec<Activation>,
    saved: Vec<Saved>,
    input_h: usize,
    input_w: usize,
}

const GEMM_CHUNK: usize = 4096;

impl FeatureNet {
    /// Binds weights to a spec, checking every shape.
    pub fn new(spec: FeatureNetSpec, bundle: &WeightBundle) -> Result<Self, FeatureError> {
        spec.validate()?;
        let mut ops = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            ops.push(match layer {
                Layer::Conv {
                    name,
                    out_ch,
                    in_ch,
                    k_h,
                    k_w,
                } => {
                    let cw = bundle
                        .conv(name)
                        .ok_or_else(|| shape_err(name, "missing from weight bundle"))?;
                    if (cw.out_ch, cw.in_ch, cw.k_h, cw.k_w) != (*out_ch, *in_ch, *k_h, *k_w) {
                        return Err(shape_err(
                            name,
                            format!(
                                "bundle has {}x{}x{}x{}, spec wants {out_ch}x{in_ch}x{k_h}x{k_w}",
                                cw.out_ch, cw.in_ch, cw.k_h, cw.k_w
                            ),
                        ));
                    }
                    if cw.weights.len() != out_ch * in_ch * k_h * k_w || cw.biases.len() != *out_ch {
                        return Err(shape_err(name, "tensor length disagrees with declared shape"));
                    }
                    if !cw.weights.iter().chain(&cw.biases).all(|v| v.is_finite()) {
                        return Err(FeatureError::Data(name.clone()));
                    }
                    let weights = Array2::from_shape_vec(
                        (*out_ch, in_ch * k_h * k_w),
                        cw.weights.iter().map(|&v| v as f64).collect(),
                    )
                    .expect("length checked");
                    Op::Conv(ConvOp {
                        weights,
                        biases: cw.biases.iter().map(|&v| v as f64).collect(),
                        in_ch: *in_ch,
                        k_h: *k_h,
                        k_w: *k_w,
                    })
                }
                Layer::Relu { .. } => Op::Relu,
                Layer::MaxPool { .. } => Op::MaxPool,
                Layer::AvgPool { .. } => Op::AvgPool,
            });
        }
        if bundle.means.len() != spec.input_channels || bundle.stds.len() != spec.input_channels {
            return Err(shape_err(
                "normalization",
                format!(
                    "{} means / {} stds for {} input channels",
                    bundle.means.len(),
                    bundle.stds.len(),
                    spec.input_channels
                ),
            ));
        }
        if bundle.stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) || bundle.means.iter().any(|m| !m.is_finite()) {
            return Err(FeatureError::Data("normalization".into()));
        }
        Ok(Self {
            spec,
            ops,
            means: bundle.means.iter().map(|&v| v as f64).collect(),
            stds: bundle.stds.iter().map(|&v| v as f64).collect(),
            source: bundle.source.clone(),
        })
    }

    pub fn spec(&self) -> &FeatureNetSpec {
        &self.spec
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn taps(&self) -> &[String] {
        &self.spec.taps
    }

    /// Runs the canvas through the network up to the deepest tap.
    pub fn forward(&self, canvas: &Canvas) -> Result<ForwardPass, FeatureError> {
        let min = self.spec.min_input();
        if canvas.h < min || canvas.w < min {
            return Err(FeatureError::Size {
                h: canvas.h,
                w: canvas.w,
                min,
            });
        }
        let (h, w) = (canvas.h, canvas.w);
        let c = self.spec.input_channels;
        let mut x = Activation::zeros(c, h, w);
        for ch in 0..c {
            let (m, s) = (self.means[ch], self.stds[ch]);
            for (dst, &v) in x.data[ch * h * w..(ch + 1) * h * w].iter_mut().zip(&canvas.data) {
                *dst = (v - m) / s;
            }
        }

        let depth = self.spec.depth();
        let mut taps: Vec<Option<Activation>> = vec![None; self.spec.taps.len()];
        let mut saved = Vec::with_capacity(depth);
        for (li, op) in self.ops[..depth].iter().enumerate() {
            let (next, s) = match op {
                Op::Conv(conv) => (conv_forward(conv, &x), Saved::Conv { h: x.h, w: x.w }),
                Op::Relu => {
                    let mut y = x;
                    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
                    let output = y.data.clone();
                    (y, Saved::Relu { output })
                }
                Op::MaxPool => {
                    let (y, argmax) = max_pool(&x);
                    let s = Saved::MaxPool {
                        argmax,
                        c: x.c,
                        h: x.h,
                        w: x.w,
                    };
                    (y, s)
                }
                Op::AvgPool => (
                    avg_pool(&x),
                    Saved::AvgPool {
                        c: x.c,
                        h: x.h,
                        w: x.w,
                    },
                ),
            };
            x = next;
            saved.push(s);
            let name = self.spec.layers[li].name();
            for (ti, t) in self.spec.taps.iter().enumerate() {
                if t == name {
                    taps[ti] = Some(x.clone());
                }
            }
        }
        Ok(ForwardPass {
            taps: taps.into_iter().map(|t| t.expect("every tap is within depth")).collect(),
            saved,
            input_h: h,
            input_w: w,
        })
    }

    /// Gram matrices of every tap, in tap order.
    pub fn grams(&self, canvas: &Canvas) -> Result<Vec<GramMatrix>, FeatureError> {
        let pass = self.forward(canvas)?;
        Ok(self.spec.taps.iter().zip(&pass.taps).map(|(n, a)| gram(n, a)).collect())
    }

    /// Reverse pass from per-tap upstream gradients to `dL/d(canvas)`.
    pub fn backward(&self, pass: &ForwardPass, upstream: &[Activation]) -> Result<Canvas, FeatureError> {
        if upstream.len() != pass.taps.len() {
            return Err(FeatureError::Tap(format!(
                "{} upstream gradients for {} taps",
                upstream.len(),
                pass.taps.len()
            )));
        }
        for (i, (u, t)) in upstream.iter().zip(&pass.taps).enumerate() {
            if !u.same_shape(t) {
                return Err(FeatureError::Tap(format!("upstream {i} has the wrong shape")));
            }
        }
        let depth = pass.saved.len();
        let mut grad: Option<Activation> = None;
        for li in (0..depth).rev() {
            let name = self.spec.layers[li].name();
            for (ti, t) in self.spec.taps.iter().enumerate() {
                if t == name {
                    match &mut grad {
                        Some(g) => g.data.iter_mut().zip(&upstream[ti].data).for_each(|(a, b)| *a += b),
                        None => grad = Some(upstream[ti].clone()),
                    }
                }
            }
            let g = grad.take().expect("deepest layer is a tap");
            grad = Some(match (&self.ops[li], &pass.saved[li]) {
                (Op::Conv(conv), Saved::Conv { h, w }) => conv_backward(conv, &g, *h, *w),
                (Op::Relu, Saved::Relu { output }) => {
                    let mut g = g;
                    for (v, &o) in g.data.iter_mut().zip(output) {
                        if o <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    g
                }
                (Op::MaxPool, Saved::MaxPool { argmax, c, h, w }) => {
                    let mut dx = Activation::zeros(*c, *h, *w);
                    for (&src, &v) in argmax.iter().zip(&g.data) {
                        dx.data[src] += v;
                    }
                    dx
                }
                (Op::AvgPool, Saved::AvgPool { c, h, w }) => avg_pool_backward(&g, *c, *h, *w),
                _ => unreachable!("cache matches ops"),
            });
        }
        let g = grad.expect("network has at least one layer");
        let (h, w) = (pass.input_h, pass.input_w);
        let mut out = Canvas::zeros(h, w);
        for ch in 0..g.c {
            let inv = 1.0 / self.stds[ch];
            for (dst, &v) in out.data.iter_mut().zip(&g.data[ch * h * w..(ch + 1) * h * w]) {
                *dst += v * inv;
            }
        }
        Ok(out)
    }
}

/// Rows `(ci, ky, kx)` × columns `(y, x)` for output positions `[start, end)`.
fn im2col(x: &Activation, k_h: usize, k_w: usize, start: usize, end: usize) -> Array2<f64> {
    let (ph, pw) = ((k_h - 1) / 2, (k_w - 1) / 2);
    let mut cols = Array2::zeros((x.c * k_h * k_w, end - start));
    for ci in 0..x.c {
        let plane = &x.data[ci * x.h * x.w..(ci + 1) * x.h * x.w];
        for ky in 0..k_h {
            for kx in 0..k_w {
                let mut row = cols.row_mut((ci * k_h + ky) * k_w + kx);
                for (j, pos) in (start..end).enumerate() {
                    let (y, xx) = (pos / x.w, pos % x.w);
                    let sy = y as isize + ky as isize - ph as isize;
                    let sx = xx as isize + kx as isize - pw as isize;
                    if sy >= 0 && sx >= 0 && (sy as usize) < x.h && (sx as usize) < x.w {
                        row[j] = plane[sy as usize * x.w + sx as usize];
                    }
                }
            }
        }
    }
    cols
}

fn conv_forward(conv: &ConvOp, x: &Activation) -> Activation {
    let out_ch = conv.weights.nrows();
    let hw = x.h * x.w;
    let mut y = Activation::zeros(out_ch, x.h, x.w);
    let mut start = 0;
    while start < hw {
        let end = (start + GEMM_CHUNK).min(hw);
        let cols = im2col(x, conv.k_h, conv.k_w, start, end);
        let prod = conv.weights.dot(&cols);
        for o in 0..out_ch {
            let b = conv.biases[o];
            let dst = &mut y.data[o * hw + start..o * hw + end];
            for (d, &v) in dst.iter_mut().zip(prod.row(o)) {
                *d = v + b;
            }
        }
        start = end;
    }
    y
}

fn conv_backward(conv: &ConvOp, g: &Activation, h: usize, w: usize) -> Activation {
    let (k_h, k_w) = (conv.k_h, conv.k_w);
    let (ph, pw) = ((k_h - 1) / 2, (k_w - 1) / 2);
    let hw = h * w;
    let mut dx = Activation::zeros(conv.in_ch, h, w);
    let wt = conv.weights.t();
    let gm = g.as_matrix();
    let mut start = 0;
    while start < hw {
        let end = (start + GEMM_CHUNK).min(hw);
        let dcols = wt.dot(&gm.slice(ndarray::s![.., start..end]));
        for ci in 0..conv.in_ch {
            let plane = &mut dx.data[ci * hw..(ci + 1) * hw];
            for ky in 0..k_h {
                for kx in 0..k_w {
                    let row = dcols.row((ci * k_h + ky) * k_w + kx);
                    for (j, pos) in (start..end).enumerate() {
                        let (y, xx) = (pos / w, pos % w);
                        let sy = y as isize + ky as isize - ph as isize;
                        let sx = xx as isize + kx as isize - pw as isize;
                        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            plane[sy as usize * w + sx as usize] += row[j];
                        }
                    }
                }
            }
        }
        start = end;
    }
    dx
}

/// 2×2 stride-2 max pool; ties go to the first window element in row-major order.
fn max_pool(x: &Activation) -> (Activation, Vec<usize>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Activation::zeros(x.c, oh, ow);
    let mut argmax = vec![0; x.c * oh * ow];
    for c in 0..x.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = c * x.h * x.w + (2 * oy + dy) * x.w + 2 * ox + dx;
                    if best == usize::MAX || x.data[idx] > best_v {
                        best = idx;
                        best_v = x.data[idx];
                    }
                }
                let o = c * oh * ow + oy * ow + ox;
                y.data[o] = best_v;
                argmax[o] = best;
            }
        }
    }
    (y, argmax)
}

fn avg_pool(x: &Activation) -> Activation {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Activation::zeros(x.c, oh, ow);
    for c in 0..x.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let at = |dy: usize, dx: usize| x.data[c * x.h * x.w + (2 * oy + dy) * x.w + 2 * ox + dx];
                y.data[c * oh * ow + oy * ow + ox] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
            }
        }
    }
    y
}

fn avg_pool_backward(g: &Activation, c: usize, h: usize, w: usize) -> Activation {
    let mut dx = Activation::zeros(c, h, w);
    for ch in 0..c {
        for oy in 0..g.h {
            for ox in 0..g.w {
                let v = 0.25 * g.data[ch * g.h * g.w + oy * g.w + ox];
                for (dy, ddx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    dx.data[ch * h * w + (2 * oy + dy) * w + 2 * ox + ddx] += v;
                }
            }
        }
    }
    dx
}
