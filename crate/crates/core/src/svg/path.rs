//! SVG path-data grammar, homogenized to absolute cubics.

use super::arc::{arc_to_cubics, elevate_quadratic, ArcParams};
use crate::geometry::{CubicBezier, Point, Subpath};

/// A path-data grammar violation at the given command (0-based count of
/// command letters seen so far).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("path syntax error at command {command_index}: {message}")]
pub struct PathSyntaxError {
    pub command_index: usize,
    pub message: String,
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_separators(&mut self) {
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_whitespace() || c == b',' {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn at_number(&mut self) -> bool {
        self.skip_separators();
        matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.')
    }

    fn number(&mut self) -> Option<f64> {
        self.skip_separators();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        if matches!(s.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let int_start = i;
        while matches!(s.get(i), Some(c) if c.is_ascii_digit()) {
            i += 1;
        }
        let mut digits = i > int_start;
        if s.get(i) == Some(&b'.') {
            i += 1;
            let frac_start = i;
            while matches!(s.get(i), Some(c) if c.is_ascii_digit()) {
                i += 1;
            }
            digits |= i > frac_start;
        }
        if !digits {
            return None;
        }
        if matches!(s.get(i), Some(b'e' | b'E')) {
            let mut j = i + 1;
            if matches!(s.get(j), Some(b'+' | b'-')) {
                j += 1;
            }
            let exp_start = j;
            while matches!(s.get(j), Some(c) if c.is_ascii_digit()) {
                j += 1;
            }
            if j > exp_start {
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).ok()?;
        let v = text.parse::<f64>().ok()?;
        self.pos = i;
        v.is_finite().then_some(v)
    }

    fn flag(&mut self) -> Option<bool> {
        self.skip_separators();
        let v = match self.peek()? {
            b'0' => false,
            b'1' => true,
            _ => return None,
        };
        self.pos += 1;
        Some(v)
    }
}

#[derive(Default)]
struct Builder {
    done: Vec<Subpath>,
    curves: Vec<CubicBezier>,
    cur: Point,
    start: Point,
    /// Second control point of the previous C/S, for S reflection.
    last_cubic_ctrl: Option<Point>,
    /// Control point of the previous Q/T, for T reflection.
    last_quad_ctrl: Option<Point>,
}

impl Builder {
    fn flush(&mut self, closed: bool) {
        if !self.curves.is_empty() {
            self.done.push(Subpath {
                curves: std::mem::take(&mut self.curves),
                closed,
            });
        }
    }

    fn push(&mut self, c: CubicBezier) {
        self.curves.push(c);
        self.cur = c.end();
    }

    fn move_to(&mut self, p: Point) {
        self.flush(false);
        self.cur = p;
        self.start = p;
    }

    fn line_to(&mut self, p: Point) {
        let c = CubicBezier::line(self.cur, p);
        self.push(c);
    }

    fn close(&mut self) {
        if !self.curves.is_empty() && self.cur != self.start {
            self.line_to(self.start);
        }
        self.flush(true);
        self.cur = self.start;
    }
}

/// Parses a `d` attribute into subpaths of absolute cubics in local user space.
///
/// A lone `M` with no drawing produces no subpath. `Z` appends a closing
/// straight cubic unless the current point already equals the subpath start.
pub fn parse_path_data(d: &str) -> Result<Vec<Subpath>, PathSyntaxError> {
    let mut cur = Cursor {
        src: d.as_bytes(),
        pos: 0,
    };
    let mut b = Builder::default();
    let mut command_count = 0usize;

    loop {
        cur.skip_separators();
        let Some(c) = cur.peek() else { break };
        if !c.is_ascii_alphabetic() {
            return Err(PathSyntaxError {
                command_index: command_count.saturating_sub(1),
                message: format!("unexpected {:?} at byte {}", c as char, cur.pos),
            });
        }
        let idx = command_count;
        command_count += 1;
        cur.pos += 1;
        let err = |message: String| PathSyntaxError {
            command_index: idx,
            message,
        };
        if idx == 0 && !matches!(c, b'M' | b'm') {
            return Err(err(format!("path must start with M, found {:?}", c as char)));
        }

        if matches!(c, b'Z' | b'z') {
            b.close();
            b.last_cubic_ctrl = None;
            b.last_quad_ctrl = None;
            continue;
        }

        let mut cmd = c;
        let mut first = true;
        while first || cur.at_number() {
            let rel = cmd.is_ascii_lowercase();
            let origin = if rel { b.cur } else { Point::ZERO };
            let mut num = |what: &str| {
                cur.number()
                    .ok_or_else(|| err(format!("expected {what} for {:?}", cmd as char)))
            };
            let mut cubic_ctrl = None;
            let mut quad_ctrl = None;
            match cmd.to_ascii_uppercase() {
                b'M' => {
                    let p = origin + Point::new(num("x")?, num("y")?);
                    b.move_to(p);
                    // subsequent pairs are implicit line-tos
                    cmd = if rel { b'l' } else { b'L' };
                }
                b'L' => {
                    let p = origin + Point::new(num("x")?, num("y")?);
                    b.line_to(p);
                }
                b'H' => {
                    let x = num("x")?;
                    let p = Point::new(if rel { b.cur.x + x } else { x }, b.cur.y);
                    b.line_to(p);
                }
                b'V' => {
                    let y = num("y")?;
                    let p = Point::new(b.cur.x, if rel { b.cur.y + y } else { y });
                    b.line_to(p);
                }
                b'C' => {
                    let p1 = origin + Point::new(num("x1")?, num("y1")?);
                    let p2 = origin + Point::new(num("x2")?, num("y2")?);
                    let p3 = origin + Point::new(num("x")?, num("y")?);
                    b.push(CubicBezier::new(b.cur, p1, p2, p3));
                    cubic_ctrl = Some(p2);
                }
                b'S' => {
                    let p2 = origin + Point::new(num("x2")?, num("y2")?);
                    let p3 = origin + Point::new(num("x")?, num("y")?);
                    let p1 = match b.last_cubic_ctrl {
                        Some(prev) => b.cur * 2.0 - prev,
                        None => b.cur,
                    };
                    b.push(CubicBezier::new(b.cur, p1, p2, p3));
                    cubic_ctrl = Some(p2);
                }
                b'Q' => {
                    let q1 = origin + Point::new(num("x1")?, num("y1")?);
                    let q2 = origin + Point::new(num("x")?, num("y")?);
                    b.push(elevate_quadratic(b.cur, q1, q2));
                    quad_ctrl = Some(q1);
                }
                b'T' => {
                    let q2 = origin + Point::new(num("x")?, num("y")?);
                    let q1 = match b.last_quad_ctrl {
                        Some(prev) => b.cur * 2.0 - prev,
                        None => b.cur,
                    };
                    b.push(elevate_quadratic(b.cur, q1, q2));
                    quad_ctrl = Some(q1);
                }
                b'A' => {
                    let rx = num("rx")?;
                    let ry = num("ry")?;
                    let rot = num("x-axis-rotation")?;
                    let large_arc = cur
                        .flag()
                        .ok_or_else(|| err("expected large-arc flag".into()))?;
                    let sweep = cur.flag().ok_or_else(|| err("expected sweep flag".into()))?;
                    let mut num = |what: &str| {
                        cur.number()
                            .ok_or_else(|| err(format!("expected {what} for arc")))
                    };
                    let to = origin + Point::new(num("x")?, num("y")?);
                    let arc = ArcParams {
                        rx,
                        ry,
                        x_axis_rotation: rot,
                        large_arc,
                        sweep,
                        to,
                    };
                    for c in arc_to_cubics(b.cur, &arc) {
                        b.push(c);
                    }
                    b.cur = to;
                }
                _ => return Err(err(format!("unknown command {:?}", c as char))),
            }
            b.last_cubic_ctrl = cubic_ctrl;
            b.last_quad_ctrl = quad_ctrl;
            first = false;
        }
    }
    b.flush(false);
    Ok(b.done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(c: &CubicBezier) -> [(f64, f64); 4] {
        c.pts.map(|p| (p.x, p.y))
    }

    #[test]
    fn line_elevates_to_thirds() {
        let sp = parse_path_data("M 0 0 L 3 0").unwrap();
        assert_eq!(sp.len(), 1);
        assert!(!sp[0].closed);
        assert_eq!(pts(&sp[0].curves[0]), [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
    }

    #[test]
    fn close_appends_straight_segment() {
        let sp = parse_path_data("M 0 0 C 0 1 1 1 1 0 Z").unwrap();
        assert_eq!(sp.len(), 1);
        assert!(sp[0].closed);
        assert_eq!(sp[0].curves.len(), 2);
        let closing = sp[0].curves[1];
        assert_eq!(closing.start(), Point::new(1.0, 0.0));
        assert_eq!(closing.end(), Point::new(0.0, 0.0));
    }

    #[test]
    fn close_at_start_adds_nothing() {
        let sp = parse_path_data("M0 0 L1 0 L1 1 L0 0 Z").unwrap();
        assert_eq!(sp[0].curves.len(), 3);
        assert!(sp[0].closed);
    }

    #[test]
    fn relative_and_implicit_commands() {
        let sp = parse_path_data("m1,1 2,0 0,2 h-2 v-2").unwrap();
        let ends: Vec<Point> = sp[0].curves.iter().map(|c| c.end()).collect();
        assert_eq!(
            ends,
            vec![
                Point::new(3.0, 1.0),
                Point::new(3.0, 3.0),
                Point::new(1.0, 3.0),
                Point::new(1.0, 1.0)
            ]
        );
    }

    #[test]
    fn compact_number_forms() {
        let sp = parse_path_data("M.5.5l1-1e0-.5.25").unwrap();
        let ends: Vec<Point> = sp[0].curves.iter().map(|c| c.end()).collect();
        assert_eq!(ends, vec![Point::new(1.5, -0.5), Point::new(1.0, -0.25)]);
    }

    #[test]
    fn smooth_cubic_reflects_previous_control() {
        let sp = parse_path_data("M0 0 C 0 1 1 1 1 0 S 2 -1 2 0").unwrap();
        let s = sp[0].curves[1];
        assert_eq!(s.pts[1], Point::new(1.0, -1.0));
        // S after a non-cubic uses the current point
        let sp = parse_path_data("M0 0 L1 0 S 2 1 3 0").unwrap();
        assert_eq!(sp[0].curves[1].pts[1], Point::new(1.0, 0.0));
    }

    #[test]
    fn smooth_quadratic_reflects_previous_control() {
        let sp = parse_path_data("M0 0 Q 1 1 2 0 T 4 0").unwrap();
        let t = sp[0].curves[1];
        // reflected control is (3,-1)
        let expect = elevate_quadratic(Point::new(2.0, 0.0), Point::new(3.0, -1.0), Point::new(4.0, 0.0));
        assert_eq!(t, expect);
    }

    #[test]
    fn compact_arc_flags() {
        let a = parse_path_data("M1 0A1 1 0 010 1").unwrap();
        assert_eq!(a[0].curves.len(), 1);
        assert_eq!(a[0].curves[0].end(), Point::new(0.0, 1.0));
    }

    #[test]
    fn move_after_close_starts_new_subpath() {
        let sp = parse_path_data("M0 0 L1 0 L1 1 Z m 5 5 l 1 0").unwrap();
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[1].curves[0].start(), Point::new(5.0, 5.0));
    }

    #[test]
    fn drawing_after_close_restarts_at_subpath_start() {
        let sp = parse_path_data("M0 0 L1 0 L1 1 Z L 0 5").unwrap();
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[1].curves[0].start(), Point::new(0.0, 0.0));
    }

    #[test]
    fn lone_move_is_empty() {
        assert!(parse_path_data("M 3 3").unwrap().is_empty());
        assert!(parse_path_data("").unwrap().is_empty());
    }

    #[test]
    fn syntax_errors_report_command_index() {
        let e = parse_path_data("M 0 0 L 1").unwrap_err();
        assert_eq!(e.command_index, 1);
        let e = parse_path_data("M 0 0 L 1 1 X 3 3").unwrap_err();
        assert_eq!(e.command_index, 2);
        let e = parse_path_data("L 1 1").unwrap_err();
        assert_eq!(e.command_index, 0);
        let e = parse_path_data("M 0 0 A 1 1 0 2 0 1 1").unwrap_err();
        assert_eq!(e.command_index, 1);
        let e = parse_path_data("M 0 0 Z 3").unwrap_err();
        assert_eq!(e.command_index, 1);
    }
}
