//! SVG subset reader and writer.
//!
//! Reading flattens every `path` (under nested `g` transforms) into absolute
//! cubics in user units. Writing emits one `M/C/Z` path per subpath with
//! fixed six-decimal formatting, so output bytes depend only on the geometry.

mod arc;
mod path;
mod transform;

pub use arc::{arc_to_cubics, elevate_quadratic, ArcParams};
pub use path::{parse_path_data, PathSyntaxError};
pub use transform::{parse_transform, Affine};

use crate::geometry::{CurveSet, Point, Subpath, ViewBox};

const SVG_NS: &str = "http://www.w3.org/2000/svg";

#[derive(Debug, thiserror::Error)]
pub enum SvgError {
    #[error("malformed XML at {row}:{col}: {message}")]
    Parse { row: u32, col: u32, message: String },
    #[error("unsupported element <{0}>")]
    UnsupportedElement(String),
    #[error("path #{path_index}: {source}")]
    PathSyntax {
        path_index: usize,
        #[source]
        source: PathSyntaxError,
    },
    #[error("bad transform: {0}")]
    Transform(String),
    #[error("invalid viewBox {0:?}")]
    ViewBox(String),
}

/// Reader options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Error on drawable non-path elements instead of skipping them.
    pub strict: bool,
}

/// Parses with default (lenient) options.
pub fn parse_svg(bytes: &[u8]) -> Result<CurveSet, SvgError> {
    parse_svg_with(bytes, ParseOptions::default())
}

pub fn parse_svg_with(bytes: &[u8], opts: ParseOptions) -> Result<CurveSet, SvgError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let upto = &bytes[..e.valid_up_to()];
        let row = upto.iter().filter(|&&b| b == b'\n').count() as u32 + 1;
        let col = (upto.len() - upto.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1)) as u32 + 1;
        SvgError::Parse {
            row,
            col,
            message: "invalid UTF-8".into(),
        }
    })?;
    let doc = roxmltree::Document::parse_with_options(
        text,
        roxmltree::ParsingOptions {
            allow_dtd: true,
            ..Default::default()
        },
    )
    .map_err(|e| {
        let pos = e.pos();
        SvgError::Parse {
            row: pos.row,
            col: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(SvgError::UnsupportedElement(root.tag_name().name().to_string()));
    }

    let mut walker = Walker {
        opts,
        subpaths: Vec::new(),
        path_index: 0,
    };
    for child in root.children() {
        walker.visit(child, &Affine::IDENTITY)?;
    }
    let view_box = resolve_view_box(&root, &walker.subpaths)?;
    Ok(CurveSet::new(walker.subpaths, view_box))
}

struct Walker {
    opts: ParseOptions,
    subpaths: Vec<Subpath>,
    path_index: usize,
}

/// Elements that never draw anything; skipped silently along with their subtree.
const NON_RENDERING: &[&str] = &[
    "title",
    "desc",
    "metadata",
    "defs",
    "style",
    "script",
    "symbol",
    "clipPath",
    "mask",
    "marker",
    "pattern",
    "linearGradient",
    "radialGradient",
    "filter",
];

impl Walker {
    fn visit(&mut self, node: roxmltree::Node<'_, '_>, parent: &Affine) -> Result<(), SvgError> {
        if !node.is_element() {
            return Ok(());
        }
        match node.tag_name().namespace() {
            None | Some(SVG_NS) => {}
            // editor metadata (sodipodi, inkscape, ...)
            Some(_) => return Ok(()),
        }
        let name = node.tag_name().name();
        if NON_RENDERING.contains(&name) {
            return Ok(());
        }
        let local = match node.attribute("transform") {
            Some(t) => parse_transform(t).map_err(SvgError::Transform)?,
            None => Affine::IDENTITY,
        };
        let xf = parent.compose(&local);
        match name {
            "g" => {
                for child in node.children() {
                    self.visit(child, &xf)?;
                }
            }
            "path" => {
                let index = self.path_index;
                self.path_index += 1;
                let Some(d) = node.attribute("d") else {
                    return Ok(());
                };
                let subpaths = parse_path_data(d).map_err(|source| SvgError::PathSyntax {
                    path_index: index,
                    source,
                })?;
                for mut sp in subpaths {
                    if !xf.is_identity() {
                        for c in &mut sp.curves {
                            *c = c.map(|p| xf.apply(p));
                        }
                    }
                    self.subpaths.push(sp);
                }
            }
            other => {
                if self.opts.strict {
                    return Err(SvgError::UnsupportedElement(other.to_string()));
                }
                log::warn!("skipping unsupported <{other}> element");
            }
        }
        Ok(())
    }
}

fn numbers(s: &str) -> Option<Vec<f64>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Leading number of a length attribute such as `"120px"`.
fn length(s: &str) -> Option<f64> {
    let end = s
        .trim()
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(s.trim().len());
    s.trim()[..end].parse().ok()
}

fn resolve_view_box(root: &roxmltree::Node<'_, '_>, subpaths: &[Subpath]) -> Result<ViewBox, SvgError> {
    if let Some(vb) = root.attribute("viewBox") {
        return match numbers(vb).as_deref() {
            Some(&[x, y, w, h]) if w > 0.0 && h > 0.0 => Ok(ViewBox::new(x, y, w, h)),
            _ => Err(SvgError::ViewBox(vb.to_string())),
        };
    }
    let w = root.attribute("width").and_then(length);
    let h = root.attribute("height").and_then(length);
    if let (Some(w), Some(h)) = (w, h) {
        if w > 0.0 && h > 0.0 {
            return Ok(ViewBox::new(0.0, 0.0, w, h));
        }
    }
    // fall back to the control-point bounding box
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in subpaths.iter().flat_map(|s| s.curves.iter()).flat_map(|c| c.pts) {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.x.is_finite() {
        return Ok(ViewBox::new(0.0, 0.0, 1.0, 1.0));
    }
    Ok(ViewBox::new(lo.x, lo.y, (hi.x - lo.x).max(1.0), (hi.y - lo.y).max(1.0)))
}

fn coord(out: &mut String, v: f64) {
    let s = format!("{v:.6}");
    // never print a negative zero
    if s.bytes().all(|b| matches!(b, b'-' | b'0' | b'.')) {
        out.push_str("0.000000");
    } else {
        out.push_str(&s);
    }
}

fn point(out: &mut String, p: Point) {
    coord(out, p.x);
    out.push(' ');
    coord(out, p.y);
}

/// Serializes a curve set as an SVG 1.1 document.
pub fn emit_svg(cs: &CurveSet) -> Vec<u8> {
    let vb = cs.view_box;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"");
    point(&mut out, Point::new(vb.min_x, vb.min_y));
    out.push(' ');
    point(&mut out, Point::new(vb.width, vb.height));
    out.push_str("\">\n");
    for sp in &cs.subpaths {
        let Some(first) = sp.curves.first() else { continue };
        out.push_str("  <path fill=\"none\" stroke=\"black\" d=\"M ");
        point(&mut out, first.start());
        for c in &sp.curves {
            out.push_str(" C ");
            point(&mut out, c.pts[1]);
            out.push(' ');
            point(&mut out, c.pts[2]);
            out.push(' ');
            point(&mut out, c.pts[3]);
        }
        if sp.closed {
            out.push_str(" Z");
        }
        out.push_str("\"/>\n");
    }
    out.push_str("</svg>\n");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CubicBezier;

    fn doc(body: &str) -> String {
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 10 10\">{body}</svg>")
    }

    #[test]
    fn parses_path_and_view_box() {
        let cs = parse_svg(doc("<path d=\"M 0 0 L 3 0\"/>").as_bytes()).unwrap();
        assert_eq!(cs.view_box, ViewBox::new(0.0, 0.0, 10.0, 10.0));
        assert_eq!(cs.num_curves(), 1);
        assert_eq!(
            cs.subpaths[0].curves[0],
            CubicBezier::line(Point::new(0.0, 0.0), Point::new(3.0, 0.0))
        );
    }

    #[test]
    fn nested_group_transforms_compose() {
        let body = "<g transform=\"translate(10 0)\"><g transform=\"scale(2)\">\
                    <path transform=\"translate(1 1)\" d=\"M 0 0 L 1 0\"/></g></g>";
        let cs = parse_svg(doc(body).as_bytes()).unwrap();
        let c = cs.subpaths[0].curves[0];
        assert_eq!(c.start(), Point::new(12.0, 2.0));
        assert_eq!(c.end(), Point::new(14.0, 2.0));
    }

    #[test]
    fn strictness_governs_unsupported_elements() {
        let body = "<title>x</title><rect width=\"1\" height=\"1\"/><path d=\"M0 0 L1 1\"/>";
        let lenient = parse_svg(doc(body).as_bytes()).unwrap();
        assert_eq!(lenient.num_curves(), 1);
        let strict = parse_svg_with(doc(body).as_bytes(), ParseOptions { strict: true });
        assert!(matches!(strict, Err(SvgError::UnsupportedElement(n)) if n == "rect"));
    }

    #[test]
    fn defs_content_is_not_drawn() {
        let body = "<defs><path d=\"M0 0 L1 1\"/></defs>";
        assert_eq!(parse_svg(doc(body).as_bytes()).unwrap().num_curves(), 0);
    }

    #[test]
    fn malformed_xml_reports_position() {
        let e = parse_svg(b"<svg>\n  <path d=\"M0 0\">\n</svg>").unwrap_err();
        match e {
            SvgError::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn path_errors_name_the_command() {
        let e = parse_svg(doc("<path d=\"M0 0 L 1 1 Q 3\"/>").as_bytes()).unwrap_err();
        match e {
            SvgError::PathSyntax { path_index, source } => {
                assert_eq!(path_index, 0);
                assert_eq!(source.command_index, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn view_box_fallbacks() {
        let cs = parse_svg(b"<svg width=\"20px\" height=\"30\"><path d=\"M0 0 L1 1\"/></svg>").unwrap();
        assert_eq!(cs.view_box, ViewBox::new(0.0, 0.0, 20.0, 30.0));
        let cs = parse_svg(b"<svg><path d=\"M2 3 L6 5\"/></svg>").unwrap();
        assert_eq!(cs.view_box, ViewBox::new(2.0, 3.0, 4.0, 2.0));
        assert!(parse_svg(b"<svg viewBox=\"0 0 0 5\"/>").is_err());
    }

    #[test]
    fn emit_empty_and_closed() {
        let empty = CurveSet::new(vec![], ViewBox::new(0.0, 0.0, 4.0, 4.0));
        let text = String::from_utf8(emit_svg(&empty)).unwrap();
        assert!(!text.contains("<path"));
        assert_eq!(parse_svg(text.as_bytes()).unwrap().num_curves(), 0);

        let cs = parse_svg(doc("<path d=\"M 0 0 C 0 1 1 1 1 0 Z\"/>").as_bytes()).unwrap();
        let text = String::from_utf8(emit_svg(&cs)).unwrap();
        let d = text.split("d=\"").nth(1).unwrap().split('"').next().unwrap();
        assert!(d.ends_with('Z'), "{d}");
        assert!(d.starts_with("M 0.000000 0.000000 C"));
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        let mut s = String::new();
        coord(&mut s, -0.0000001);
        assert_eq!(s, "0.000000");
    }
}
