//! Library side of the `curvestyle` command: config resolution, style
//! loading, and artifact writing.

pub mod config;
pub mod error;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use curvestyle::features::{load_weights, tiny_net, vgg19_spec, FeatureNet, FeatureNetSpec, GramMatrix, WeightBundle};
use curvestyle::optim::{run, LossBreakdown, Problem};
use curvestyle::raster::{render_curveset, Canvas, RasterConfig};
use curvestyle::svg::{emit_svg, parse_svg_with, ParseOptions};
use curvestyle::CurveSet;
use image::{imageops, ImageBuffer, Luma};
use serde::Serialize;

pub use config::RunConfig;
pub use error::CliError;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let out = |e: &dyn std::fmt::Display| CliError::Output(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| out(&e))?;
    tmp.write_all(bytes).map_err(|e| out(&e))?;
    tmp.persist(path).map_err(|e| out(&e.error))?;
    Ok(())
}

pub fn read_curves(path: &Path, strict: bool) -> Result<CurveSet, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    parse_svg_with(&bytes, ParseOptions { strict }).map_err(|e| CliError::input(path, e))
}

pub fn read_bundle(path: &Path) -> Result<WeightBundle, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    let mut bundle = load_weights(&bytes).map_err(|e| CliError::input(path, e))?;
    bundle.source = path.display().to_string();
    Ok(bundle)
}

pub fn read_spec(path: Option<&Path>) -> Result<FeatureNetSpec, CliError> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::input(p, e))?;
            FeatureNetSpec::from_json(&bytes).map_err(|e| CliError::input(p, e))
        }
        None => Ok(vgg19_spec()),
    }
}

/// `tiny` or a CNSW path with an optional spec sidecar.
pub fn load_network(weights: &str, spec: Option<&Path>) -> Result<FeatureNet, CliError> {
    if weights == "tiny" {
        return Ok(tiny_net());
    }
    let path = Path::new(weights);
    let bundle = read_bundle(path)?;
    let spec = read_spec(spec)?;
    FeatureNet::new(spec, &bundle).map_err(|e| CliError::input(path, e))
}

/// Loads a style image as a canvas with strokes high, plus its Gram matrices.
///
/// SVG styles are rendered with `raster`; PNG styles are converted to luma,
/// optionally inverted, and resized with a linear filter when their size
/// differs from the canvas.
pub fn load_style(
    path: &Path,
    raster: &RasterConfig,
    invert: bool,
    strict: bool,
    net: &FeatureNet,
) -> Result<(Canvas, Vec<GramMatrix>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    let canvas = if bytes.starts_with(PNG_MAGIC) {
        png_canvas(&bytes, raster, invert).map_err(|e| CliError::input(path, e))?
    } else if looks_like_svg(path, &bytes) {
        let cs = parse_svg_with(&bytes, ParseOptions { strict }).map_err(|e| CliError::input(path, e))?;
        render_curveset(&cs, raster, None)?.0
    } else {
        return Err(CliError::input(path, "unsupported style format (expected PNG or SVG)"));
    };
    let grams = net.grams(&canvas).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((canvas, grams))
}

fn looks_like_svg(path: &Path, bytes: &[u8]) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"))
        || bytes.trim_ascii_start().starts_with(b"<")
}

fn png_canvas(bytes: &[u8], raster: &RasterConfig, invert: bool) -> Result<Canvas, image::ImageError> {
    let luma = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_luma8();
    let (w, h) = luma.dimensions();
    let mut data: Vec<f64> = luma.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    if invert {
        data.iter_mut().for_each(|v| *v = 1.0 - *v);
    }
    if (h as usize, w as usize) == (raster.height, raster.width) {
        return Ok(Canvas::from_data(raster.height, raster.width, data));
    }
    let src: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_raw(w, h, data.iter().map(|&v| v as f32).collect()).expect("buffer matches dims");
    let dst = imageops::resize(&src, raster.width as u32, raster.height as u32, imageops::FilterType::Triangle);
    Ok(Canvas::from_data(
        raster.height,
        raster.width,
        dst.into_raw().into_iter().map(|v| (v as f64).clamp(0.0, 1.0)).collect(),
    ))
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    pub iterations: usize,
    pub weights_source: String,
    pub num_curves: usize,
    pub num_params: usize,
    pub initial: LossBreakdown,
    #[serde(rename = "final")]
    pub last: LossBreakdown,
    pub final_theta: Vec<f64>,
    pub seconds_per_iteration: Vec<f64>,
    pub total_seconds: f64,
}

/// Runs a full transfer and writes `out.svg`, `loss.jsonl`, `summary.json`
/// and `snapshots/iter_XXXX.png` into the output directory.
pub fn transfer(cfg: &RunConfig) -> Result<LossBreakdown, CliError> {
    let started = Instant::now();
    let (content_path, style_path, out_dir) = cfg.require_paths()?;
    let raster = cfg.raster();
    raster.validate()?;
    let content = read_curves(content_path, cfg.strict)?;
    let net = load_network(&cfg.weights, cfg.spec.as_deref())?;
    let (_, grams) = load_style(style_path, &raster, cfg.style_invert, cfg.strict, &net)?;
    let problem = Problem::new(&content, &net, &grams, raster, cfg.rule_config(), cfg.loss_weights())?;
    let optim = cfg.optim();
    optim.validate()?;

    let snap_dir = out_dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir).map_err(|e| CliError::Output(format!("{}: {e}", snap_dir.display())))?;
    let out = run(
        &problem,
        &optim,
        |s| {
            let path = snap_dir.join(format!("iter_{:04}.png", s.iteration));
            write_atomic(&path, &s.canvas.to_png()).map_err(|e| e.to_string())
        },
        None,
    )?;

    write_atomic(&out_dir.join("out.svg"), &emit_svg(&out.styled))?;
    write_atomic(&out_dir.join("loss.jsonl"), out.report.to_jsonl().as_bytes())?;
    let summary = Summary {
        config: cfg,
        seed: cfg.seed,
        iterations: cfg.iters,
        weights_source: net.source().to_string(),
        num_curves: content.num_curves(),
        num_params: problem.layout().len(),
        initial: out.report.initial,
        last: out.report.last,
        final_theta: out.report.final_theta.clone(),
        seconds_per_iteration: out.report.wall_clock.clone(),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out_dir.join("summary.json"), json.as_bytes())?;
    Ok(out.report.last)
}

/// Rasterizes an SVG to an 8-bit grayscale PNG.
pub fn render_to_png(input: &Path, raster: &RasterConfig, strict: bool, output: &Path) -> Result<(), CliError> {
    raster.validate()?;
    let cs = read_curves(input, strict)?;
    let (canvas, _) = render_curveset(&cs, raster, None)?;
    write_atomic(output, &canvas.to_png())
}

/// Validates a CNSW bundle against a spec sidecar (VGG19 when absent) and
/// returns a short per-layer report.
pub fn check_weights(weights: &Path, spec: Option<&Path>) -> Result<String, CliError> {
    let bundle = read_bundle(weights)?;
    let mut report = format!("{}: CNSW v{}, {} conv layers\n", weights.display(), bundle.version, bundle.convs.len());
    for c in &bundle.convs {
        report.push_str(&format!("  {} {}x{}x{}x{}\n", c.name, c.out_ch, c.in_ch, c.k_h, c.k_w));
    }
    report.push_str(&format!("  normalization: {} channels\n", bundle.means.len()));
    let net_spec = read_spec(spec)?;
    let taps = net_spec.taps.join(", ");
    FeatureNet::new(net_spec, &bundle).map_err(|e| CliError::input(weights, e))?;
    let against = spec.map_or_else(|| "builtin VGG19 spec".to_string(), |p| p.display().to_string());
    report.push_str(&format!("  shapes match {against} (taps: {taps})\n"));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png(w: u32, h: u32, px: Vec<u8>) -> Vec<u8> {
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(w, h, px).unwrap();
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn png_at_canvas_size_passes_through() {
        let px: Vec<u8> = (0..16).map(|i| (i * 16) as u8).collect();
        let c = png_canvas(&png(4, 4, px.clone()), &RasterConfig::square(4), false).unwrap();
        let expect: Vec<f64> = px.iter().map(|&v| v as f64 / 255.0).collect();
        assert_eq!(c.data, expect);
    }

    #[test]
    fn invert_flips_polarity() {
        let c = png_canvas(&png(2, 1, vec![0, 255]), &RasterConfig { height: 1, width: 2, ..RasterConfig::default() }, true).unwrap();
        assert_eq!(c.data, vec![1.0, 0.0]);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let c = png_canvas(&png(3, 5, vec![51; 15]), &RasterConfig::square(8), false).unwrap();
        assert_eq!((c.h, c.w), (8, 8));
        assert!(c.data.iter().all(|&v| (v - 0.2).abs() < 1e-6));
    }
}
