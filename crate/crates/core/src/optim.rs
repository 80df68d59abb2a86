//! Adam over rule parameters with per-curve render dropout.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{content_loss, style_loss, Activation, FeatureError, FeatureNet, GramMatrix, LossWeights};
use crate::geometry::CurveSet;
use crate::raster::{render_backward, render_curveset, Canvas, RasterConfig, RasterError};
use crate::rules::{apply_rules, apply_rules_value, ParamLayout, RuleConfig, RuleError, RuleParams};

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NumericalFailure { iteration: usize },
    #[error("cancelled before iteration {iteration}")]
    Cancelled { iteration: usize },
    #[error("snapshot at iteration {iteration} failed: {message}")]
    Snapshot { iteration: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub p_drop: f64,
    pub seed: u64,
    /// Emit a full render every this many iterations; 0 disables snapshots.
    pub snapshot_stride: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            p_drop: 0.1,
            seed: 0,
            snapshot_stride: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return bad("p_drop must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &OptimConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Keep decisions for one iteration; a function of `(seed, iteration)` only.
pub fn dropout_mask(num_curves: usize, p_drop: f64, seed: u64, iteration: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    loop {
        let mask: Vec<bool> = (0..num_curves).map(|_| rng.gen::<f64>() >= p_drop).collect();
        if num_curves == 0 || mask.iter().any(|&k| k) {
            return mask;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub style: f64,
    pub content: f64,
    pub reg: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.style.is_finite() && self.content.is_finite() && self.reg.is_finite()
    }
}

/// Everything fixed for one optimization: content curves, target statistics
/// and configs.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub content: &'a CurveSet,
    pub net: &'a FeatureNet,
    pub style: &'a [GramMatrix],
    pub raster: RasterConfig,
    pub rules: RuleConfig,
    pub weights: LossWeights,
    style_weights: Vec<f64>,
    content_target: Option<(usize, Activation)>,
    layout: ParamLayout,
}

impl<'a> Problem<'a> {
    pub fn new(
        content: &'a CurveSet,
        net: &'a FeatureNet,
        style: &'a [GramMatrix],
        raster: RasterConfig,
        rules: RuleConfig,
        weights: LossWeights,
    ) -> Result<Self, OptimError> {
        raster.validate()?;
        rules.validate()?;
        let taps = net.taps();
        weights.validate(taps.len())?;
        if style.len() != taps.len() || style.iter().zip(taps).any(|(g, t)| &g.layer != t) {
            return Err(FeatureError::Tap("style grams do not match the network taps".into()).into());
        }
        let content_target = if weights.content > 0.0 {
            let idx = match &weights.content_tap {
                Some(name) => taps
                    .iter()
                    .position(|t| t == name)
                    .ok_or_else(|| FeatureError::Tap(format!("content tap {name} is not a tap")))?,
                None => taps.len() - 1,
            };
            let (canvas, _) = render_curveset(content, &raster, None)?;
            let mut pass = net.forward(&canvas)?;
            Some((idx, pass.taps.swap_remove(idx)))
        } else {
            None
        };
        Ok(Self {
            content,
            net,
            style,
            raster,
            style_weights: weights.style_weights(taps.len()),
            layout: ParamLayout::new(&rules, content),
            rules,
            weights,
            content_target,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self, theta: &[f64]) -> RuleParams {
        assert_eq!(theta.len(), self.layout.len(), "theta length");
        RuleParams {
            theta: theta.to_vec(),
            layout: self.layout.clone(),
        }
    }

    pub fn edited(&self, theta: &[f64]) -> Result<CurveSet, OptimError> {
        Ok(apply_rules_value(&self.params(theta), self.content, &self.rules)?)
    }

    /// Loss without gradient.
    pub fn loss(&self, theta: &[f64], mask: Option<&[bool]>) -> Result<LossBreakdown, OptimError> {
        let edited = self.edited(theta)?;
        let (canvas, _) = render_curveset(&edited, &self.raster, mask)?;
        let pass = self.net.forward(&canvas)?;
        let (style, _) = style_loss(&pass.taps, self.style, &self.style_weights)?;
        let content = match &self.content_target {
            Some((idx, target)) => content_loss(&pass.taps[*idx], target, self.weights.content)?.0,
            None => 0.0,
        };
        Ok(self.combine(style, content, theta))
    }

    fn combine(&self, style: f64, content: f64, theta: &[f64]) -> LossBreakdown {
        let reg = self.weights.reg * theta.iter().map(|t| t * t).sum::<f64>();
        LossBreakdown {
            total: style + content + reg,
            style,
            content,
            reg,
        }
    }

    /// Loss and exact `dL/dθ`, chaining features → raster → rules.
    pub fn loss_and_grad(&self, theta: &[f64], mask: Option<&[bool]>) -> Result<(LossBreakdown, Vec<f64>), OptimError> {
        let (edited, jac) = apply_rules(&self.params(theta), self.content, &self.rules)?;
        let (canvas, ctx) = render_curveset(&edited, &self.raster, mask)?;
        let pass = self.net.forward(&canvas)?;
        let (style, mut upstream) = style_loss(&pass.taps, self.style, &self.style_weights)?;
        let mut content = 0.0;
        if let Some((idx, target)) = &self.content_target {
            let (l, g) = content_loss(&pass.taps[*idx], target, self.weights.content)?;
            content = l;
            for (u, v) in upstream[*idx].data.iter_mut().zip(&g.data) {
                *u += v;
            }
        }
        let d_canvas = self.net.backward(&pass, &upstream)?;
        let d_coords = render_backward(&ctx, &d_canvas)?;
        let mut grad = jac.transpose_mul(&d_coords);
        for (g, t) in grad.iter_mut().zip(theta) {
            *g += 2.0 * self.weights.reg * t;
        }
        Ok((self.combine(style, content, theta), grad))
    }

    /// Render of the edited curves with every curve present.
    pub fn render_full(&self, theta: &[f64]) -> Result<(CurveSet, Canvas), OptimError> {
        let edited = self.edited(theta)?;
        let (canvas, _) = render_curveset(&edited, &self.raster, None)?;
        Ok((edited, canvas))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub total: f64,
    pub style: f64,
    pub content: f64,
    pub reg: f64,
    pub active_curves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub records: Vec<IterRecord>,
    pub final_theta: Vec<f64>,
    /// Seconds per iteration. Kept apart from `records`, which must be reproducible.
    pub wall_clock: Vec<f64>,
    /// Full-render losses at θ = 0 and at the final θ.
    pub initial: LossBreakdown,
    pub last: LossBreakdown,
}

impl LossReport {
    /// One JSON object per line, one line per iteration.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

pub struct Snapshot<'s> {
    pub iteration: usize,
    pub curves: &'s CurveSet,
    pub canvas: &'s Canvas,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub styled: CurveSet,
    pub params: RuleParams,
    pub report: LossReport,
}

/// Optimizes θ from the identity edit.
///
/// Snapshots are taken at every multiple of `snapshot_stride` in
/// `0..=iterations` (state before that iteration's update) and always at the end.
pub fn run<F>(problem: &Problem<'_>, cfg: &OptimConfig, mut on_snapshot: F, cancel: Option<&AtomicBool>) -> Result<RunOutput, OptimError>
where
    F: FnMut(Snapshot<'_>) -> Result<(), String>,
{
    cfg.validate()?;
    let n = problem.layout().len();
    let num_curves = problem.content.num_curves();
    let mut theta = vec![0.0; n];
    let mut adam = Adam::new(n, cfg);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut wall_clock = Vec::with_capacity(cfg.iterations);

    let initial = problem.loss(&theta, None)?;
    if !initial.is_finite() {
        return Err(OptimError::NumericalFailure { iteration: 0 });
    }
    let mut snapshot = |iteration: usize, theta: &[f64]| -> Result<(), OptimError> {
        let (curves, canvas) = problem.render_full(theta)?;
        on_snapshot(Snapshot {
            iteration,
            curves: &curves,
            canvas: &canvas,
        })
        .map_err(|message| OptimError::Snapshot { iteration, message })
    };

    for iter in 0..cfg.iterations {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Err(OptimError::Cancelled { iteration: iter });
        }
        if cfg.snapshot_stride > 0 && iter % cfg.snapshot_stride == 0 {
            snapshot(iter, &theta)?;
        }
        let start = Instant::now();
        let mask = dropout_mask(num_curves, cfg.p_drop, cfg.seed, iter as u64);
        let (loss, grad) = problem.loss_and_grad(&theta, Some(&mask))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NumericalFailure { iteration: iter });
        }
        adam.step(&mut theta, &grad);
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(OptimError::NumericalFailure { iteration: iter });
        }
        records.push(IterRecord {
            iter,
            total: loss.total,
            style: loss.style,
            content: loss.content,
            reg: loss.reg,
            active_curves: mask.iter().filter(|&&k| k).count(),
        });
        wall_clock.push(start.elapsed().as_secs_f64());
        log::debug!("iter {iter}: loss {:.6e}", loss.total);
    }
    if cfg.snapshot_stride > 0 {
        snapshot(cfg.iterations, &theta)?;
    }

    let params = problem.params(&theta);
    let styled = if cfg.iterations == 0 {
        problem.content.clone()
    } else {
        apply_rules_value(&params, problem.content, &problem.rules)?
    };
    let last = problem.loss(&theta, None)?;
    if !last.is_finite() {
        return Err(OptimError::NumericalFailure {
            iteration: cfg.iterations,
        });
    }
    Ok(RunOutput {
        styled,
        params,
        report: LossReport {
            records,
            final_theta: theta,
            wall_clock,
            initial,
            last,
        },
    })
}
