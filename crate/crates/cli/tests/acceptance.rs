//! Release gates. Prints one PASS/FAIL line per gate and exits nonzero if any
//! gate fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use curvestyle::features::{gram, style_loss, tiny_net, Activation, LossWeights};
use curvestyle::geometry::{mean_turning_angle, CubicBezier, CurveSet, Point};
use curvestyle::gradcheck::{check_pipeline, random_scene};
use curvestyle::optim::{run, OptimConfig, Problem};
use curvestyle::raster::{rasterize, render_backward, render_curveset, Canvas, RasterConfig, Segment};
use curvestyle::rules::{apply_rules_value, RuleConfig, RuleParams};
use curvestyle::svg::{emit_svg, parse_path_data, parse_svg};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Gate = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn gradient_gate() -> Gate {
    let started = Instant::now();
    let r = check_pipeline(0).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(r.max_rel_error < 1e-4, format!("max relative error {:.3e}", r.max_rel_error))?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("{} entries, max rel error {:.2e}, {:.2?}", r.entries, r.max_rel_error, elapsed))
}

fn identity_gate() -> Gate {
    let bytes = std::fs::read(fixture("toy_content.svg")).map_err(|e| e.to_string())?;
    let cs = parse_svg(&bytes).map_err(|e| e.to_string())?;
    let cfg = RuleConfig::all();
    let edited = apply_rules_value(&RuleParams::for_curves(&cfg, &cs), &cs, &cfg).map_err(|e| e.to_string())?;
    let back = parse_svg(&emit_svg(&edited)).map_err(|e| e.to_string())?;
    ensure(back.num_curves() == cs.num_curves(), "curve count changed")?;
    let worst_coord = cs.coords().iter().zip(back.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(worst_coord < 1e-5, format!("round trip deviates by {worst_coord:.3e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let scene = random_scene(&mut rng, 4, 24.0);
    let raster = RasterConfig::square(24);
    let net = tiny_net();
    let (canvas, _) = render_curveset(&scene, &raster, None).map_err(|e| e.to_string())?;
    let grams = net.grams(&canvas).map_err(|e| e.to_string())?;
    let weights = LossWeights { reg: 0.0, ..LossWeights::default() };
    let problem = Problem::new(&scene, &net, &grams, raster, RuleConfig::all(), weights).map_err(|e| e.to_string())?;
    let opt = OptimConfig { iterations: 50, p_drop: 0.0, seed: 1, ..OptimConfig::default() };
    let out = run(&problem, &opt, |_| Ok(()), None).map_err(|e| e.to_string())?;
    let drift = out.report.final_theta.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    ensure(drift < 1e-6, format!("self-style theta drifted to {drift:.3e}"))?;
    Ok(format!("round trip {worst_coord:.1e}, self-style |theta|max {drift:.1e}"))
}

fn max_dev(curves: &[CubicBezier], oracle: impl Fn(usize, f64) -> Point) -> f64 {
    let mut worst = 0.0f64;
    for (i, c) in curves.iter().enumerate() {
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            worst = worst.max(c.eval(t).distance(oracle(i, t)));
        }
    }
    worst
}

/// Center and (scaled-up) radii of an SVG endpoint arc.
fn arc_oracle(p0: Point, p1: Point, rx: f64, ry: f64, phi: f64, fa: bool, fs: bool) -> (Point, f64, f64) {
    let (c, s) = (phi.cos(), phi.sin());
    let d = (p0 - p1) * 0.5;
    let x1 = c * d.x + s * d.y;
    let y1 = -s * d.x + c * d.y;
    let lam = (x1 * x1 / (rx * rx) + y1 * y1 / (ry * ry)).max(1.0).sqrt();
    let (rx, ry) = (rx * lam, ry * lam);
    let num = (rx * rx * ry * ry - rx * rx * y1 * y1 - ry * ry * x1 * x1).max(0.0);
    let mut k = (num / (rx * rx * y1 * y1 + ry * ry * x1 * x1)).sqrt();
    if fa == fs {
        k = -k;
    }
    let (cx1, cy1) = (k * rx * y1 / ry, -k * ry * x1 / rx);
    let mid = (p0 + p1) * 0.5;
    (Point::new(c * cx1 - s * cy1 + mid.x, s * cx1 + c * cy1 + mid.y), rx, ry)
}

fn homogenization_gate() -> Gate {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pt = || Point::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
    let (mut exact, mut arc) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (a, b, q) = (pt(), pt(), pt());
        let curves = parse_path_data(&format!("M{} {} L{} {}", a.x, a.y, b.x, b.y)).map_err(|e| e.to_string())?;
        exact = exact.max(max_dev(&curves[0].curves, |_, t| a.lerp(b, t)));
        let curves = parse_path_data(&format!("M{} {} Q{} {} {} {}", a.x, a.y, q.x, q.y, b.x, b.y)).map_err(|e| e.to_string())?;
        exact = exact.max(max_dev(&curves[0].curves, |_, t| a.lerp(q, t).lerp(q.lerp(b, t), t)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let p0 = Point::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let p1 = Point::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let (rx, ry) = (rng.gen_range(1.0..80.0), rng.gen_range(1.0..80.0));
        let phi_deg: f64 = rng.gen_range(-180.0..180.0);
        let (fa, fs) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
        let d = format!("M{} {} A{} {} {} {} {} {} {}", p0.x, p0.y, rx, ry, phi_deg, fa as u8, fs as u8, p1.x, p1.y);
        let curves: Vec<CubicBezier> =
            parse_path_data(&d).map_err(|e| e.to_string())?.into_iter().flat_map(|s| s.curves).collect();
        let phi = phi_deg.to_radians();
        let (centre, rx, ry) = arc_oracle(p0, p1, rx, ry, phi, fa, fs);
        let (c, s) = (phi.cos(), phi.sin());
        for curve in &curves {
            for k in 0..=100 {
                let p = curve.eval(k as f64 / 100.0) - centre;
                let u = (c * p.x + s * p.y) / rx;
                let v = (-s * p.x + c * p.y) / ry;
                // bounds the distance to the ellipse divided by the larger radius
                arc = arc.max((u.hypot(v) - 1.0).abs());
            }
        }
    }
    ensure(exact < 1e-9, format!("line/quadratic deviation {exact:.3e}"))?;
    ensure(arc <= 1e-3, format!("arc deviation {arc:.3e} of max radius"))?;
    Ok(format!("line/quad {exact:.1e}, arc {arc:.1e} of max radius"))
}

/// Direct per-pixel soft-OR with no culling.
fn raster_oracle(segs: &[Segment], cfg: &RasterConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.height * cfg.width);
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let q = Point::new(col as f64 + 0.5, row as f64 + 0.5);
            let keep: f64 = segs
                .iter()
                .map(|s| {
                    let ab = s.b - s.a;
                    let len2 = ab.dot(ab);
                    let t = if len2 == 0.0 { 0.0 } else { ((q - s.a).dot(ab) / len2).clamp(0.0, 1.0) };
                    let d = (s.a + ab * t).distance(q);
                    1.0 - (1.0 - cfg.eps) * (1.0 - d / cfg.tau).max(0.0)
                })
                .product();
            out.push(1.0 - keep);
        }
    }
    out
}

fn rasterizer_gate() -> Gate {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = RasterConfig { height: 24, width: 24, segments: 8, tau: 1.3, eps: 1e-3 };
    let seg = |rng: &mut ChaCha8Rng| {
        let mut p = || Point::new(rng.gen_range(-2.0..26.0), rng.gen_range(-2.0..26.0));
        Segment::new(p(), p())
    };
    for trial in 0..50 {
        let n = rng.gen_range(1..40);
        let segs: Vec<Segment> = (0..n).map(|_| seg(&mut rng)).collect();
        let img = rasterize(&segs, &cfg);
        ensure(img.data.iter().all(|v| (0.0..1.0).contains(v)), format!("trial {trial}: value outside [0,1)"))?;
        let mut perm = segs.clone();
        perm.reverse();
        perm.rotate_left(rng.gen_range(0..n));
        ensure(rasterize(&perm, &cfg).data == img.data, format!("trial {trial}: order changed the image"))?;
        let mut more = segs.clone();
        more.push(seg(&mut rng));
        let after = rasterize(&more, &cfg);
        ensure(img.data.iter().zip(&after.data).all(|(a, b)| b >= a), format!("trial {trial}: added segment darkened"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scene = random_scene(&mut rng, 6, 64.0);
    let big = RasterConfig::square(64);
    let (img, ctx) = render_curveset(&scene, &big, None).map_err(|e| e.to_string())?;
    let oracle_dev =
        img.data.iter().zip(raster_oracle(&ctx.segments, &big)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(oracle_dev < 1e-12, format!("oracle deviation {oracle_dev:.3e}"))?;

    let run = |threads: usize| -> Result<_, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| {
            let (img, ctx) = render_curveset(&scene, &big, None).map_err(|e| e.to_string())?;
            let g = render_backward(&ctx, &Canvas::from_data(64, 64, img.data.clone())).map_err(|e| e.to_string())?;
            Ok((img.data, g))
        })
    };
    let one = run(1)?;
    ensure(one == run(3)? && one == run(8)?, "thread count changed the output")?;
    Ok(format!("50 random scenes, 64x64 oracle {oracle_dev:.1e}, threads 1/3/8 identical"))
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn min_eigenvalue(n: usize, data: &[f64]) -> f64 {
    let mut a = data.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                off += apq * apq;
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
        if off < 1e-30 {
            break;
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}

fn gram_gate() -> Gate {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let act = |c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng| {
        Activation::from_data(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-3.0..3.0)).collect())
    };
    let (mut asym, mut min_eig, mut zero) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let (c, h, w) = (rng.gen_range(1..8), rng.gen_range(1..5), rng.gen_range(1..5));
        let a = act(c, h, w, &mut rng);
        let g = gram("x", &a);
        asym = asym.max(g.asymmetry());
        let scale = g.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        min_eig = min_eig.min(min_eigenvalue(c, &g.data) / scale);

        let (same, grad) = style_loss(std::slice::from_ref(&a), &[g.clone()], &[1.0]).map_err(|e| e.to_string())?;
        zero = zero.max(same.abs()).max(grad[0].data.iter().fold(0.0, |m, v| m.max(v.abs())));
        let b = act(c, h, w, &mut rng);
        let (diff, _) = style_loss(&[b], &[g], &[1.0]).map_err(|e| e.to_string())?;
        ensure(diff > 1e-12, format!("distinct activations gave loss {diff:.3e}"))?;
    }
    ensure(asym < 1e-9, format!("asymmetry {asym:.3e}"))?;
    ensure(min_eig >= -1e-8, format!("min eigenvalue {min_eig:.3e}"))?;
    ensure(zero <= 1e-12, format!("matched loss/grad {zero:.3e}"))?;

    let scalar = |v: f64| Activation::from_data(1, 1, 1, vec![v]);
    let (e, g) = style_loss(&[scalar(2.0)], &[gram("x", &scalar(1.0))], &[1.0]).map_err(|e| e.to_string())?;
    ensure(e == 2.25 && g[0].data == [6.0], format!("scalar case E={e}, dE/dF={:?}", g[0].data))?;
    Ok(format!("asym {asym:.1e}, min eig {min_eig:.1e}, matched {zero:.1e}, scalar E=2.25 dE/dF=6"))
}

fn bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_curvestyle")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("curvestyle exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
}

fn toy_args(out: &Path) -> Vec<String> {
    let content = fixture("toy_content.svg");
    let style = fixture("toy_style.svg");
    [
        "transfer", "--content", content.to_str().unwrap(), "--style", style.to_str().unwrap(), "--weights", "tiny",
        "--canvas", "64", "--rules", "curvature,cp_translate", "--seed", "42", "--iters", "300",
        "-o", out.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn toy_gate(out: &Path) -> Gate {
    let started = Instant::now();
    let args = toy_args(out);
    bin(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    let elapsed = started.elapsed();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let initial = summary["initial"]["style"].as_f64().ok_or("missing initial style")?;
    let last = summary["final"]["style"].as_f64().ok_or("missing final style")?;
    let ratio = last / initial;
    let content = parse_svg(&std::fs::read(fixture("toy_content.svg")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let styled: CurveSet =
        parse_svg(&std::fs::read(out.join("out.svg")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (before, after) = (mean_turning_angle(&content, 16), mean_turning_angle(&styled, 16));
    ensure(ratio <= 0.5, format!("style loss ratio {ratio:.3}"))?;
    ensure(after > before, format!("turning angle {before:.4} -> {after:.4}"))?;
    ensure(styled.connectivity_holds(), "connectivity broken")?;
    let closed_in = content.subpaths.iter().filter(|s| s.closed).count();
    let closed_out = styled.subpaths.iter().filter(|s| s.closed).count();
    ensure(closed_in == closed_out, format!("closed subpaths {closed_in} -> {closed_out}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("style ratio {ratio:.3}, turning {before:.4} -> {after:.4}, {elapsed:.2?}"))
}

fn determinism_gate(first: &Path, second: &Path) -> Gate {
    let args = toy_args(second);
    bin(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    for f in ["out.svg", "loss.jsonl"] {
        let a = std::fs::read(first.join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{f} differs"))?;
    }
    let snaps = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut v = Vec::new();
        for e in std::fs::read_dir(dir.join("snapshots")).map_err(|e| e.to_string())? {
            let e = e.map_err(|e| e.to_string())?;
            v.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(|e| e.to_string())?));
        }
        v.sort();
        Ok(v)
    };
    let (a, b) = (snaps(first)?, snaps(second)?);
    ensure(!a.is_empty() && a == b, "snapshots differ")?;
    Ok(format!("out.svg, loss.jsonl and {} snapshots byte-identical", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let (first, second) = (tmp.path().join("toy_a"), tmp.path().join("toy_b"));
    let gates: Vec<(&str, Box<dyn Fn() -> Gate>)> = vec![
        ("gradient", Box::new(gradient_gate)),
        ("identity", Box::new(identity_gate)),
        ("homogenization", Box::new(homogenization_gate)),
        ("rasterizer", Box::new(rasterizer_gate)),
        ("gram/loss", Box::new(gram_gate)),
        ("toy style transfer", Box::new(|| toy_gate(&first))),
        ("determinism", Box::new(|| determinism_gate(&first, &second))),
    ];
    let mut failed = 0;
    for (name, gate) in &gates {
        match gate() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} of {} gates passed", gates.len() - failed, gates.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
