//! Differentiable shape-editing rules.
//!
//! Rules run in the fixed order rigid → shear → curvature → smoothing →
//! cp_translate. Every stage is tracked in forward mode with sparse
//! derivative rows, so [`apply_rules`] returns the exact Jacobian of the
//! output control points with respect to the flat parameter vector.
//!
//! After each per-curve stage, welded slots are replaced by their mean so a
//! shared endpoint can never tear apart; when the slots already agree this is
//! an exact no-op.

use serde::{Deserialize, Serialize};

use crate::geometry::{CubicBezier, CurveSet, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Rigid,
    Shear,
    Curvature,
    Smoothing,
    CpTranslate,
}

impl RuleKind {
    /// Application order.
    pub const ALL: [RuleKind; 5] = [
        RuleKind::Rigid,
        RuleKind::Shear,
        RuleKind::Curvature,
        RuleKind::Smoothing,
        RuleKind::CpTranslate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Rigid => "rigid",
            RuleKind::Shear => "shear",
            RuleKind::Curvature => "curvature",
            RuleKind::Smoothing => "smoothing",
            RuleKind::CpTranslate => "cp_translate",
        }
    }

    /// Parameters per unit.
    pub fn width(self) -> usize {
        match self {
            RuleKind::Rigid => 3,
            RuleKind::Shear | RuleKind::CpTranslate => 2,
            RuleKind::Curvature | RuleKind::Smoothing => 1,
        }
    }
}

impl std::str::FromStr for RuleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One parameter set shared by the whole drawing.
    Global,
    #[default]
    PerCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Granularities {
    pub rigid: Granularity,
    pub shear: Granularity,
    pub curvature: Granularity,
    pub smoothing: Granularity,
}

impl Granularities {
    /// `None` for cp_translate, which is always per weld group.
    pub fn get(&self, rule: RuleKind) -> Option<Granularity> {
        match rule {
            RuleKind::Rigid => Some(self.rigid),
            RuleKind::Shear => Some(self.shear),
            RuleKind::Curvature => Some(self.curvature),
            RuleKind::Smoothing => Some(self.smoothing),
            RuleKind::CpTranslate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub enabled: Vec<RuleKind>,
    pub granularity: Granularities,
    /// Per-axis bound on cp_translate displacement, user units.
    pub lambda: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            enabled: vec![RuleKind::Curvature, RuleKind::CpTranslate],
            granularity: Granularities::default(),
            lambda: 2.0,
        }
    }
}

impl RuleConfig {
    pub fn with_rules(rules: &[RuleKind]) -> Self {
        Self {
            enabled: rules.to_vec(),
            ..Self::default()
        }
    }

    pub fn all() -> Self {
        Self::with_rules(&RuleKind::ALL)
    }

    pub fn is_enabled(&self, rule: RuleKind) -> bool {
        self.enabled.contains(&rule)
    }

    /// Enabled rules in application order.
    pub fn ordered(&self) -> impl Iterator<Item = RuleKind> + '_ {
        RuleKind::ALL.into_iter().filter(|k| self.is_enabled(*k))
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(RuleError::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RuleError {
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
    #[error("invalid rule config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub rule: RuleKind,
    pub offset: usize,
    pub units: usize,
    pub width: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.units * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of parameter `slot` for `unit` (a global block has one unit).
    pub fn index(&self, unit: usize, slot: usize) -> usize {
        let unit = if self.units == 1 { 0 } else { unit };
        self.offset + unit * self.width + slot
    }
}

/// Where each rule's parameters live inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
    pub num_curves: usize,
    pub num_groups: usize,
}

impl ParamLayout {
    pub fn new(cfg: &RuleConfig, cs: &CurveSet) -> Self {
        let num_curves = cs.num_curves();
        let num_groups = cs.weld_groups.num_groups();
        let mut offset = 0;
        let blocks = cfg
            .ordered()
            .map(|rule| {
                let units = match cfg.granularity.get(rule) {
                    Some(Granularity::Global) => 1,
                    Some(Granularity::PerCurve) => num_curves,
                    None => num_groups,
                };
                let b = ParamBlock {
                    rule,
                    offset,
                    units,
                    width: rule.width(),
                };
                offset += b.len();
                b
            })
            .collect();
        Self {
            blocks,
            num_curves,
            num_groups,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, rule: RuleKind) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.rule == rule)
    }

    /// `(rule, unit, slot)` of a flat index.
    pub fn describe(&self, index: usize) -> Option<(RuleKind, usize, usize)> {
        self.blocks
            .iter()
            .find(|b| index >= b.offset && index < b.offset + b.len())
            .map(|b| {
                let local = index - b.offset;
                (b.rule, local / b.width, local % b.width)
            })
    }
}

/// Flat, unconstrained rule parameters together with their layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub theta: Vec<f64>,
    pub layout: ParamLayout,
}

impl RuleParams {
    /// The identity edit.
    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            theta: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn for_curves(cfg: &RuleConfig, cs: &CurveSet) -> Self {
        Self::zeros(ParamLayout::new(cfg, cs))
    }

    pub fn get(&self, rule: RuleKind, unit: usize, slot: usize) -> Option<f64> {
        self.layout.block(rule).map(|b| self.theta[b.index(unit, slot)])
    }

    pub fn set(&mut self, rule: RuleKind, unit: usize, slot: usize, value: f64) {
        let b = *self.layout.block(rule).expect("rule not in layout");
        self.theta[b.index(unit, slot)] = value;
    }
}

/// Sparse `d(output coordinates)/d(theta)`; row `2 * slot + axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: Vec<Vec<(usize, f64)>>,
    ncols: usize,
}

impl Jacobian {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows[r]
            .binary_search_by_key(&c, |e| e.0)
            .map_or(0.0, |i| self.rows[r][i].1)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.nrows()).map(|r| self.get(r, c)).collect()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `Jᵀ g` for an upstream gradient over output coordinates.
    pub fn transpose_mul(&self, upstream: &[f64]) -> Vec<f64> {
        assert_eq!(upstream.len(), self.nrows(), "upstream length");
        let mut out = vec![0.0; self.ncols];
        for (row, &g) in self.rows.iter().zip(upstream) {
            if g == 0.0 {
                continue;
            }
            for &(c, v) in row {
                out[c] += v * g;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|(_, v)| v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Scalar rule formulas (shared by the single-rule API and the tracked pipeline)

fn cos_minus_one(phi: f64) -> f64 {
    let h = (0.5 * phi).sin();
    -2.0 * h * h
}

fn rigid_point(p: Point, c: Point, t: Point, phi: f64) -> Point {
    let (s, cm1) = (phi.sin(), cos_minus_one(phi));
    let r = p - c;
    Point::new(p.x + (cm1 * r.x - s * r.y) + t.x, p.y + (s * r.x + cm1 * r.y) + t.y)
}

fn shear_point(p: Point, c: Point, sx: f64, sy: f64) -> Point {
    Point::new(p.x + sx * (p.y - c.y), p.y + sy * (p.x - c.x))
}

const DEGENERATE_CHORD: f64 = 1e-9;

/// Indices `(a, b)` of the reference vector `pts[a] - pts[b]` whose quarter
/// turn gives the curvature offset direction, or `None` for a no-op.
fn curvature_reference(pts: &[Point; 4]) -> Option<(usize, usize)> {
    if (pts[3] - pts[0]).norm() >= DEGENERATE_CHORD {
        Some((3, 0))
    } else if (pts[1] - pts[0]).norm() >= DEGENERATE_CHORD {
        Some((1, 0))
    } else {
        None
    }
}

/// Straightening strength in `[0, 1)`; `u <= 0` gives 0.
pub fn smoothing_strength(u: f64) -> f64 {
    // 2 * (sigmoid(u) - 1/2) == tanh(u / 2)
    (0.5 * u.max(0.0)).tanh()
}

/// Right derivative at 0, so straightening can start from the identity.
fn smoothing_strength_deriv(u: f64) -> f64 {
    if u < 0.0 {
        0.0
    } else {
        let s = smoothing_strength(u);
        0.5 * (1.0 - s * s)
    }
}

fn chord_third(pts: &[Point; 4], k: f64) -> Point {
    pts[0] + (pts[3] - pts[0]) * (k / 3.0)
}

/// Rotates about the control-point centroid by `phi`, then translates.
pub fn rule_rigid(curve: &CubicBezier, tx: f64, ty: f64, phi: f64) -> CubicBezier {
    let c = curve.centroid();
    curve.map(|p| rigid_point(p, c, Point::new(tx, ty), phi))
}

/// Shears about the control-point centroid.
pub fn rule_shear(curve: &CubicBezier, sx: f64, sy: f64) -> CubicBezier {
    let c = curve.centroid();
    curve.map(|p| shear_point(p, c, sx, sy))
}

/// Pushes both interior points along the chord's left normal by `kappa · |chord|`.
pub fn rule_curvature(curve: &CubicBezier, kappa: f64) -> CubicBezier {
    let mut out = *curve;
    if let Some((a, b)) = curvature_reference(&curve.pts) {
        let off = (curve.pts[a] - curve.pts[b]).perp() * kappa;
        out.pts[1] = curve.pts[1] + off;
        out.pts[2] = curve.pts[2] + off;
    }
    out
}

/// Blends interior points toward the chord thirds.
pub fn rule_smoothing(curve: &CubicBezier, u_s: f64) -> CubicBezier {
    let s = smoothing_strength(u_s);
    let mut out = *curve;
    out.pts[1] = curve.pts[1] + (chord_third(&curve.pts, 1.0) - curve.pts[1]) * s;
    out.pts[2] = curve.pts[2] + (chord_third(&curve.pts, 2.0) - curve.pts[2]) * s;
    out
}

/// Moves every slot of weld group `g` by `lambda · tanh(u[g])` per axis.
pub fn rule_cp_translate(cs: &CurveSet, u: &[(f64, f64)], lambda: f64) -> CurveSet {
    assert_eq!(u.len(), cs.weld_groups.num_groups(), "one offset per weld group");
    let mut coords = cs.coords();
    for (g, &(ux, uy)) in u.iter().enumerate() {
        let d = Point::new(lambda * ux.tanh(), lambda * uy.tanh());
        for &slot in cs.weld_groups.members(g) {
            coords[2 * slot] += d.x;
            coords[2 * slot + 1] += d.y;
        }
    }
    cs.with_coords(&coords)
}

// ---------------------------------------------------------------------------
// Tracked pipeline

/// Value with a sparse derivative row over theta (sorted, unique columns).
#[derive(Debug, Clone, Default)]
struct Dual {
    v: f64,
    d: Vec<(usize, f64)>,
}

struct Tracker {
    enabled: bool,
    scratch: Vec<(usize, f64)>,
}

impl Tracker {
    /// Derivative row `Σ coef · term.d + Σ param entries`.
    fn combine(&mut self, terms: &[(f64, &Dual)], params: &[(usize, f64)]) -> Vec<(usize, f64)> {
        if !self.enabled {
            return Vec::new();
        }
        self.scratch.clear();
        for &(coef, t) in terms {
            if coef != 0.0 {
                self.scratch.extend(t.d.iter().map(|&(c, v)| (c, coef * v)));
            }
        }
        self.scratch.extend(params.iter().copied().filter(|e| e.1 != 0.0));
        self.scratch.sort_unstable_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.scratch.len());
        for &(c, v) in &self.scratch {
            match out.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => out.push((c, v)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
struct DualPoint {
    x: Dual,
    y: Dual,
}

impl DualPoint {
    fn value(&self) -> Point {
        Point::new(self.x.v, self.y.v)
    }
}

struct State<'a> {
    pts: Vec<DualPoint>,
    cs: &'a CurveSet,
    tracker: Tracker,
}

impl State<'_> {
    fn curve_values(&self, c: usize) -> [Point; 4] {
        std::array::from_fn(|k| self.pts[4 * c + k].value())
    }

    fn mean_of(&mut self, slots: impl Iterator<Item = usize> + Clone) -> DualPoint {
        let n = slots.clone().count() as f64;
        let w = 1.0 / n;
        let vx = slots.clone().map(|s| self.pts[s].x.v).sum::<f64>() * w;
        let vy = slots.clone().map(|s| self.pts[s].y.v).sum::<f64>() * w;
        let tx: Vec<(f64, &Dual)> = slots.clone().map(|s| (w, &self.pts[s].x)).collect();
        let dx = self.tracker.combine(&tx, &[]);
        let ty: Vec<(f64, &Dual)> = slots.map(|s| (w, &self.pts[s].y)).collect();
        let dy = self.tracker.combine(&ty, &[]);
        DualPoint {
            x: Dual { v: vx, d: dx },
            y: Dual { v: vy, d: dy },
        }
    }

    /// Pivot for a rigid/shear stage: the curve's own centroid, or the
    /// centroid of every control point for a global block.
    fn pivot(&mut self, block: &ParamBlock, curve: usize) -> DualPoint {
        if block.units == 1 && self.cs.num_curves() != 1 {
            let n = self.pts.len();
            self.mean_of(0..n)
        } else {
            self.mean_of(4 * curve..4 * curve + 4)
        }
    }

    fn weld(&mut self) {
        let cs = self.cs;
        let groups = &cs.weld_groups;
        for g in 0..groups.num_groups() {
            let members = groups.members(g);
            if members.len() < 2 {
                continue;
            }
            let first = self.pts[members[0]].value();
            let agree = members.iter().all(|&s| self.pts[s].value() == first);
            let mut mean = self.mean_of(members.iter().copied());
            if agree {
                mean.x.v = first.x;
                mean.y.v = first.y;
            }
            for &s in members {
                self.pts[s] = mean.clone();
            }
        }
    }

    fn rigid(&mut self, block: &ParamBlock, theta: &[f64]) {
        // global pivot must be taken before any point moves
        let global_pivot = (block.units == 1).then(|| self.pivot(block, 0));
        let mut next = self.pts.clone();
        for c in 0..self.cs.num_curves() {
            let (itx, ity, iphi) = (block.index(c, 0), block.index(c, 1), block.index(c, 2));
            let (tx, ty, phi) = (theta[itx], theta[ity], theta[iphi]);
            let piv = match &global_pivot {
                Some(p) => p.clone(),
                None => self.pivot(block, c),
            };
            let cv = piv.value();
            let (s, cm1) = (phi.sin(), cos_minus_one(phi));
            let cos = phi.cos();
            for k in 0..4 {
                let p = &self.pts[4 * c + k];
                let pv = p.value();
                let v = rigid_point(pv, cv, Point::new(tx, ty), phi);
                let r = pv - cv;
                let dx = self.tracker.combine(
                    &[(cos, &p.x), (-s, &p.y), (-cm1, &piv.x), (s, &piv.y)],
                    &[(itx, 1.0), (iphi, -s * r.x - cos * r.y)],
                );
                let dy = self.tracker.combine(
                    &[(s, &p.x), (cos, &p.y), (-s, &piv.x), (-cm1, &piv.y)],
                    &[(ity, 1.0), (iphi, cos * r.x - s * r.y)],
                );
                next[4 * c + k] = DualPoint {
                    x: Dual { v: v.x, d: dx },
                    y: Dual { v: v.y, d: dy },
                };
            }
        }
        self.pts = next;
    }

    fn shear(&mut self, block: &ParamBlock, theta: &[f64]) {
        let global_pivot = (block.units == 1).then(|| self.pivot(block, 0));
        let mut next = self.pts.clone();
        for c in 0..self.cs.num_curves() {
            let (isx, isy) = (block.index(c, 0), block.index(c, 1));
            let (sx, sy) = (theta[isx], theta[isy]);
            let piv = match &global_pivot {
                Some(p) => p.clone(),
                None => self.pivot(block, c),
            };
            let cv = piv.value();
            for k in 0..4 {
                let p = &self.pts[4 * c + k];
                let pv = p.value();
                let v = shear_point(pv, cv, sx, sy);
                let dx = self
                    .tracker
                    .combine(&[(1.0, &p.x), (sx, &p.y), (-sx, &piv.y)], &[(isx, pv.y - cv.y)]);
                let dy = self
                    .tracker
                    .combine(&[(1.0, &p.y), (sy, &p.x), (-sy, &piv.x)], &[(isy, pv.x - cv.x)]);
                next[4 * c + k] = DualPoint {
                    x: Dual { v: v.x, d: dx },
                    y: Dual { v: v.y, d: dy },
                };
            }
        }
        self.pts = next;
    }

    fn curvature(&mut self, block: &ParamBlock, theta: &[f64]) {
        for c in 0..self.cs.num_curves() {
            let ik = block.index(c, 0);
            let kappa = theta[ik];
            let vals = self.curve_values(c);
            let Some((a, b)) = curvature_reference(&vals) else {
                continue;
            };
            let r = vals[a] - vals[b];
            let off = r.perp() * kappa;
            let (pa, pb) = (self.pts[4 * c + a].clone(), self.pts[4 * c + b].clone());
            for k in [1, 2] {
                let p = self.pts[4 * c + k].clone();
                // off = kappa * (-(ya - yb), xa - xb); terms with k == a merge in combine
                let dx = self
                    .tracker
                    .combine(&[(1.0, &p.x), (-kappa, &pa.y), (kappa, &pb.y)], &[(ik, -r.y)]);
                let dy = self
                    .tracker
                    .combine(&[(1.0, &p.y), (kappa, &pa.x), (-kappa, &pb.x)], &[(ik, r.x)]);
                let v = p.value() + off;
                self.pts[4 * c + k] = DualPoint {
                    x: Dual { v: v.x, d: dx },
                    y: Dual { v: v.y, d: dy },
                };
            }
        }
    }

    fn smoothing(&mut self, block: &ParamBlock, theta: &[f64]) {
        for c in 0..self.cs.num_curves() {
            let iu = block.index(c, 0);
            let u = theta[iu];
            let s = smoothing_strength(u);
            let ds = smoothing_strength_deriv(u);
            let vals = self.curve_values(c);
            let (p0, p3) = (self.pts[4 * c].clone(), self.pts[4 * c + 3].clone());
            for (k, w0, w3) in [(1usize, 2.0 / 3.0, 1.0 / 3.0), (2, 1.0 / 3.0, 2.0 / 3.0)] {
                let p = self.pts[4 * c + k].clone();
                let target = chord_third(&vals, k as f64);
                let pv = p.value();
                let v = pv + (target - pv) * s;
                let dx = self.tracker.combine(
                    &[(1.0 - s, &p.x), (s * w0, &p0.x), (s * w3, &p3.x)],
                    &[(iu, ds * (target.x - pv.x))],
                );
                let dy = self.tracker.combine(
                    &[(1.0 - s, &p.y), (s * w0, &p0.y), (s * w3, &p3.y)],
                    &[(iu, ds * (target.y - pv.y))],
                );
                self.pts[4 * c + k] = DualPoint {
                    x: Dual { v: v.x, d: dx },
                    y: Dual { v: v.y, d: dy },
                };
            }
        }
    }

    fn cp_translate(&mut self, block: &ParamBlock, theta: &[f64], lambda: f64) {
        let cs = self.cs;
        let groups = &cs.weld_groups;
        for g in 0..groups.num_groups() {
            let (ix, iy) = (block.index(g, 0), block.index(g, 1));
            let (tx, ty) = (theta[ix].tanh(), theta[iy].tanh());
            let (dx, dy) = (lambda * tx, lambda * ty);
            let (gx, gy) = (lambda * (1.0 - tx * tx), lambda * (1.0 - ty * ty));
            for &s in groups.members(g) {
                let p = self.pts[s].clone();
                let rx = self.tracker.combine(&[(1.0, &p.x)], &[(ix, gx)]);
                let ry = self.tracker.combine(&[(1.0, &p.y)], &[(iy, gy)]);
                self.pts[s] = DualPoint {
                    x: Dual { v: p.x.v + dx, d: rx },
                    y: Dual { v: p.y.v + dy, d: ry },
                };
            }
        }
    }
}

fn check_layout(params: &RuleParams, cs: &CurveSet, cfg: &RuleConfig) -> Result<(), RuleError> {
    cfg.validate()?;
    let expected = ParamLayout::new(cfg, cs);
    if params.layout != expected {
        return Err(RuleError::Layout(format!(
            "params laid out for {} curves / {} groups / {} slots, curve set needs {} / {} / {}",
            params.layout.num_curves,
            params.layout.num_groups,
            params.layout.len(),
            expected.num_curves,
            expected.num_groups,
            expected.len()
        )));
    }
    if params.theta.len() != expected.len() {
        return Err(RuleError::Layout(format!(
            "theta has {} entries, layout needs {}",
            params.theta.len(),
            expected.len()
        )));
    }
    Ok(())
}

fn run(params: &RuleParams, cs: &CurveSet, cfg: &RuleConfig, track: bool) -> Result<(CurveSet, Vec<DualPoint>), RuleError> {
    check_layout(params, cs, cfg)?;
    let pts = cs
        .curves()
        .flat_map(|c| c.pts)
        .map(|p| DualPoint {
            x: Dual { v: p.x, d: Vec::new() },
            y: Dual { v: p.y, d: Vec::new() },
        })
        .collect();
    let mut st = State {
        pts,
        cs,
        tracker: Tracker {
            enabled: track,
            scratch: Vec::new(),
        },
    };
    let theta = &params.theta;
    for block in &params.layout.blocks {
        match block.rule {
            RuleKind::Rigid => st.rigid(block, theta),
            RuleKind::Shear => st.shear(block, theta),
            RuleKind::Curvature => st.curvature(block, theta),
            RuleKind::Smoothing => st.smoothing(block, theta),
            RuleKind::CpTranslate => st.cp_translate(block, theta, cfg.lambda),
        }
        if block.rule != RuleKind::CpTranslate {
            st.weld();
        }
    }
    let coords: Vec<f64> = st.pts.iter().flat_map(|p| [p.x.v, p.y.v]).collect();
    Ok((cs.with_coords(&coords), st.pts))
}

/// Applies the enabled rules and returns the edited curves with the exact
/// Jacobian of their control points.
pub fn apply_rules(params: &RuleParams, cs: &CurveSet, cfg: &RuleConfig) -> Result<(CurveSet, Jacobian), RuleError> {
    let (out, pts) = run(params, cs, cfg, true)?;
    let rows = pts.into_iter().flat_map(|p| [p.x.d, p.y.d]).collect();
    Ok((
        out,
        Jacobian {
            rows,
            ncols: params.theta.len(),
        },
    ))
}

/// [`apply_rules`] without derivative tracking.
pub fn apply_rules_value(params: &RuleParams, cs: &CurveSet, cfg: &RuleConfig) -> Result<CurveSet, RuleError> {
    run(params, cs, cfg, false).map(|r| r.0)
}
