//! Central finite-difference checks for every differentiable stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::features::{self, tiny_net, Activation, FeatureNet, LossWeights};
use crate::geometry::{CubicBezier, CurveSet, Point, Subpath, ViewBox};
use crate::optim::{OptimError, Problem};
use crate::raster::{rasterize, rasterize_backward, Canvas, RasterConfig, Segment};
use crate::rules::{apply_rules, apply_rules_value, RuleConfig, RuleKind, RuleParams};

pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` where `floor` is `1e-6` of the
/// largest numeric magnitude, so entries many orders below the gradient's
/// scale do not dominate through cancellation noise.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths");
    let scale = numeric.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-6 * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

/// One open chain of `n − 1` curves plus a lone curve, inside `[0, extent]²`.
pub fn random_scene(rng: &mut impl Rng, n: usize, extent: f64) -> CurveSet {
    let lo = 0.15 * extent;
    let hi = 0.85 * extent;
    let pt = |rng: &mut dyn rand::RngCore| Point::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    let mut chain = Vec::new();
    let mut start = pt(rng);
    for _ in 0..n.saturating_sub(1) {
        let c = CubicBezier::new(start, pt(rng), pt(rng), pt(rng));
        start = c.end();
        chain.push(c);
    }
    let mut subpaths = vec![Subpath {
        curves: chain,
        closed: false,
    }];
    if n > 0 {
        subpaths.push(Subpath {
            curves: vec![CubicBezier::new(pt(rng), pt(rng), pt(rng), pt(rng))],
            closed: false,
        });
    }
    subpaths.retain(|s| !s.curves.is_empty());
    CurveSet::new(
        subpaths,
        ViewBox {
            min_x: 0.0,
            min_y: 0.0,
            width: extent,
            height: extent,
        },
    )
}

/// Random θ away from the smoothing kink at zero.
pub fn random_theta(rng: &mut impl Rng, params: &RuleParams, scale: f64) -> Vec<f64> {
    (0..params.theta.len())
        .map(|i| match params.layout.describe(i) {
            Some((RuleKind::Smoothing, _, _)) => rng.gen_range(0.2..0.6),
            _ => rng.gen_range(-scale..scale),
        })
        .collect()
}

/// Rule Jacobian against differences of the edited coordinates.
pub fn check_rules(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cs = random_scene(&mut rng, 5, 10.0);
    let cfg = RuleConfig::all();
    let mut params = RuleParams::for_curves(&cfg, &cs);
    params.theta = random_theta(&mut rng, &params, 0.3);
    let (_, jac) = apply_rules(&params, &cs, &cfg).expect("valid rule config");
    let rows = jac.nrows();
    let h = 1e-5;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for col in 0..params.theta.len() {
        let eval = |delta: f64| {
            let mut p = params.clone();
            p.theta[col] += delta;
            apply_rules_value(&p, &cs, &cfg).expect("valid").coords()
        };
        let (up, down) = (eval(h), eval(-h));
        for r in 0..rows {
            analytic.push(jac.get(r, col));
            numeric.push((up[r] - down[r]) / (2.0 * h));
        }
    }
    CheckResult {
        name: "rules".into(),
        entries: analytic.len(),
        max_rel_error: max_rel_error(&analytic, &numeric),
    }
}

/// `Σ wᵢⱼ Iᵢⱼ` with random weights against segment endpoint perturbations.
pub fn check_raster(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RasterConfig {
        height: 24,
        width: 24,
        segments: 4,
        tau: 1.5,
        eps: 1e-3,
    };
    let segs: Vec<Segment> = (0..8)
        .map(|_| {
            Segment::new(
                Point::new(rng.gen_range(2.0..22.0), rng.gen_range(2.0..22.0)),
                Point::new(rng.gen_range(2.0..22.0), rng.gen_range(2.0..22.0)),
            )
        })
        .collect();
    let weights = Canvas::from_data(24, 24, (0..576).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let grads = rasterize_backward(&segs, &cfg, &weights).expect("shapes match");
    let analytic: Vec<f64> = grads.iter().flat_map(|g| [g.da.x, g.da.y, g.db.x, g.db.y]).collect();
    let x: Vec<f64> = segs.iter().flat_map(|s| [s.a.x, s.a.y, s.b.x, s.b.y]).collect();
    let numeric = central_diff(
        |x| {
            let segs: Vec<Segment> = x
                .chunks(4)
                .map(|c| Segment::new(Point::new(c[0], c[1]), Point::new(c[2], c[3])))
                .collect();
            let img = rasterize(&segs, &cfg);
            img.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
        },
        &x,
        1e-6,
    );
    CheckResult {
        name: "raster".into(),
        entries: analytic.len(),
        max_rel_error: max_rel_error(&analytic, &numeric),
    }
}

fn sum_sq_taps(net: &FeatureNet, canvas: &Canvas) -> f64 {
    let pass = net.forward(canvas).expect("canvas large enough");
    pass.taps.iter().flat_map(|t| &t.data).map(|v| v * v).sum()
}

/// `Σ tap²` of the tiny network against every input pixel.
pub fn check_features(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = tiny_net();
    let canvas = Canvas::from_data(8, 8, (0..64).map(|_| rng.gen_range(0.0..1.0)).collect());
    let pass = net.forward(&canvas).expect("8x8 is large enough");
    let upstream: Vec<Activation> = pass
        .taps
        .iter()
        .map(|t| Activation::from_data(t.c, t.h, t.w, t.data.iter().map(|v| 2.0 * v).collect()))
        .collect();
    let analytic = net.backward(&pass, &upstream).expect("shapes match").data;
    let numeric = central_diff(
        |x| sum_sq_taps(&net, &Canvas::from_data(8, 8, x.to_vec())),
        &canvas.data,
        1e-6,
    );
    CheckResult {
        name: "features".into(),
        entries: analytic.len(),
        max_rel_error: max_rel_error(&analytic, &numeric),
    }
}

/// Style loss of the tiny network against every pixel of a 16×16 canvas.
pub fn check_style_loss(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = tiny_net();
    let img = |rng: &mut ChaCha8Rng| Canvas::from_data(16, 16, (0..256).map(|_| rng.gen_range(0.0..1.0)).collect());
    let style = net.grams(&img(&mut rng)).expect("16x16 is large enough");
    let canvas = img(&mut rng);
    let w = LossWeights::default().style_weights(style.len());
    let loss = |c: &Canvas| {
        let pass = net.forward(c).expect("size");
        features::style_loss(&pass.taps, &style, &w).expect("taps").0
    };
    let pass = net.forward(&canvas).expect("size");
    let (_, up) = features::style_loss(&pass.taps, &style, &w).expect("taps");
    let analytic = net.backward(&pass, &up).expect("shapes").data;
    let numeric = central_diff(|x| loss(&Canvas::from_data(16, 16, x.to_vec())), &canvas.data, 1e-6);
    CheckResult {
        name: "style_loss".into(),
        entries: analytic.len(),
        max_rel_error: max_rel_error(&analytic, &numeric),
    }
}

/// Whole pipeline: 3 curves, all five rules, tiny network, 16×16 canvas.
pub fn check_pipeline(seed: u64) -> Result<CheckResult, OptimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content = random_scene(&mut rng, 3, 16.0);
    let style_scene = random_scene(&mut rng, 3, 16.0);
    let raster = RasterConfig::square(16);
    let net = tiny_net();
    let (style_canvas, _) = crate::raster::render_curveset(&style_scene, &raster, None)?;
    let style = net.grams(&style_canvas)?;
    let rules = RuleConfig::all();
    let weights = LossWeights {
        reg: 1e-3,
        ..LossWeights::default()
    };
    let problem = Problem::new(&content, &net, &style, raster, rules, weights)?;
    let params = problem.params(&vec![0.0; problem.layout().len()]);
    let theta = random_theta(&mut rng, &params, 0.1);
    let (_, analytic) = problem.loss_and_grad(&theta, None)?;
    let numeric = central_diff(|t| problem.loss(t, None).expect("valid").total, &theta, 1e-5);
    Ok(CheckResult {
        name: "pipeline".into(),
        entries: analytic.len(),
        max_rel_error: max_rel_error(&analytic, &numeric),
    })
}

pub fn run_all(seed: u64) -> Result<Vec<CheckResult>, OptimError> {
    Ok(vec![
        check_rules(seed),
        check_raster(seed),
        check_features(seed),
        check_style_loss(seed),
        check_pipeline(seed)?,
    ])
}
