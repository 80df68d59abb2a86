//! Exact degree elevation and elliptical-arc approximation.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::geometry::{CubicBezier, Point};

/// Re-expresses a quadratic Bézier as the cubic tracing the same points.
pub fn elevate_quadratic(q0: Point, q1: Point, q2: Point) -> CubicBezier {
    CubicBezier::new(q0, (q0 + q1 * 2.0) * (1.0 / 3.0), (q2 + q1 * 2.0) * (1.0 / 3.0), q2)
}

/// Parameters of one SVG `A` command (endpoint parameterization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcParams {
    pub rx: f64,
    pub ry: f64,
    /// Degrees.
    pub x_axis_rotation: f64,
    pub large_arc: bool,
    pub sweep: bool,
    pub to: Point,
}

/// Converts an elliptical arc to cubics, one per sweep of at most 90°.
///
/// The first cubic starts at `from` and the last ends at `arc.to` bit-exactly,
/// and consecutive cubics share their joint point. Coincident endpoints give
/// no curves; a zero radius gives a straight segment.
pub fn arc_to_cubics(from: Point, arc: &ArcParams) -> Vec<CubicBezier> {
    let to = arc.to;
    if from == to {
        return Vec::new();
    }
    let (mut rx, mut ry) = (arc.rx.abs(), arc.ry.abs());
    if rx == 0.0 || ry == 0.0 {
        return vec![CubicBezier::line(from, to)];
    }
    let (sin_phi, cos_phi) = arc.x_axis_rotation.to_radians().sin_cos();
    let rotate = |v: Point| Point::new(cos_phi * v.x - sin_phi * v.y, sin_phi * v.x + cos_phi * v.y);

    let half = (from - to) * 0.5;
    let x1p = cos_phi * half.x + sin_phi * half.y;
    let y1p = -sin_phi * half.x + cos_phi * half.y;

    let lambda = (x1p * x1p) / (rx * rx) + (y1p * y1p) / (ry * ry);
    if lambda > 1.0 {
        let s = lambda.sqrt();
        rx *= s;
        ry *= s;
    }

    let num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p;
    let den = rx * rx * y1p * y1p + ry * ry * x1p * x1p;
    let mut coef = (num / den).max(0.0).sqrt();
    if arc.large_arc == arc.sweep {
        coef = -coef;
    }
    let cxp = coef * rx * y1p / ry;
    let cyp = -coef * ry * x1p / rx;
    let mid = (from + to) * 0.5;
    let center = rotate(Point::new(cxp, cyp)) + mid;

    let u = Point::new((x1p - cxp) / rx, (y1p - cyp) / ry);
    let v = Point::new((-x1p - cxp) / rx, (-y1p - cyp) / ry);
    let angle = |a: Point, b: Point| (a.x * b.y - a.y * b.x).atan2(a.dot(b));
    let theta1 = angle(Point::new(1.0, 0.0), u);
    let mut delta = angle(u, v) % TAU;
    if !arc.sweep && delta > 0.0 {
        delta -= TAU;
    } else if arc.sweep && delta < 0.0 {
        delta += TAU;
    }

    let n = ((delta.abs() / FRAC_PI_2) - 1e-9).ceil().max(1.0) as usize;
    let step = delta / n as f64;
    let k = 4.0 / 3.0 * (step / 4.0).tan();
    let on_ellipse = |eta: f64| center + rotate(Point::new(rx * eta.cos(), ry * eta.sin()));
    let tangent = |eta: f64| rotate(Point::new(-rx * eta.sin(), ry * eta.cos()));

    let mut out = Vec::with_capacity(n);
    let mut start = from;
    for i in 0..n {
        let eta0 = theta1 + step * i as f64;
        let eta1 = theta1 + step * (i + 1) as f64;
        let end = if i + 1 == n { to } else { on_ellipse(eta1) };
        out.push(CubicBezier::new(
            start,
            start + tangent(eta0) * k,
            end - tangent(eta1) * k,
            end,
        ));
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_eval(q: [Point; 3], t: f64) -> Point {
        let s = 1.0 - t;
        q[0] * (s * s) + q[1] * (2.0 * s * t) + q[2] * (t * t)
    }

    #[test]
    fn elevation_traces_same_points() {
        let q = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 0.0)];
        let c = elevate_quadratic(q[0], q[1], q[2]);
        assert!((c.pts[1].x - 2.0 / 3.0).abs() < 1e-15 && (c.pts[1].y - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.pts[2].x - 4.0 / 3.0).abs() < 1e-15 && (c.pts[2].y - 2.0 / 3.0).abs() < 1e-15);
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!(c.eval(t).distance(quad_eval(q, t)) < 1e-12);
        }
    }

    #[test]
    fn degenerate_quadratics() {
        let z = Point::new(0.0, 0.0);
        assert_eq!(elevate_quadratic(z, z, z).pts, [z; 4]);
        let a = Point::new(5.0, 5.0);
        assert_eq!(elevate_quadratic(a, a, a).pts, [a; 4]);
    }

    fn quarter() -> Vec<CubicBezier> {
        arc_to_cubics(
            Point::new(1.0, 0.0),
            &ArcParams {
                rx: 1.0,
                ry: 1.0,
                x_axis_rotation: 0.0,
                large_arc: false,
                sweep: true,
                to: Point::new(0.0, 1.0),
            },
        )
    }

    #[test]
    fn quarter_circle_uses_standard_handles() {
        let cs = quarter();
        assert_eq!(cs.len(), 1);
        let k = 4.0 / 3.0 * (std::f64::consts::PI / 8.0).tan();
        let c = cs[0];
        assert!(c.pts[1].distance(Point::new(1.0, k)) < 1e-12);
        assert!(c.pts[2].distance(Point::new(k, 1.0)) < 1e-12);
        for i in 0..=100 {
            let r = c.eval(i as f64 / 100.0).norm();
            assert!((r - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn half_circle_splits_in_two() {
        let cs = arc_to_cubics(
            Point::new(1.0, 0.0),
            &ArcParams {
                rx: 1.0,
                ry: 1.0,
                x_axis_rotation: 0.0,
                large_arc: false,
                sweep: true,
                to: Point::new(-1.0, 0.0),
            },
        );
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].end(), cs[1].start());
        assert_eq!(cs[1].end(), Point::new(-1.0, 0.0));
    }

    #[test]
    fn zero_radius_is_line() {
        let from = Point::new(0.0, 0.0);
        let to = Point::new(3.0, 3.0);
        let cs = arc_to_cubics(
            from,
            &ArcParams {
                rx: 0.0,
                ry: 2.0,
                x_axis_rotation: 0.0,
                large_arc: false,
                sweep: false,
                to,
            },
        );
        assert_eq!(cs, vec![CubicBezier::line(from, to)]);
    }

    #[test]
    fn coincident_endpoints_drop_arc() {
        let p = Point::new(1.0, 1.0);
        let arc = ArcParams {
            rx: 1.0,
            ry: 1.0,
            x_axis_rotation: 0.0,
            large_arc: true,
            sweep: true,
            to: p,
        };
        assert!(arc_to_cubics(p, &arc).is_empty());
    }

    #[test]
    fn undersized_radii_scale_up() {
        // radius 0.5 cannot span a chord of length 4; it is scaled to 2
        let cs = arc_to_cubics(
            Point::new(-2.0, 0.0),
            &ArcParams {
                rx: 0.5,
                ry: 0.5,
                x_axis_rotation: 0.0,
                large_arc: false,
                sweep: true,
                to: Point::new(2.0, 0.0),
            },
        );
        assert_eq!(cs.len(), 2);
        for c in &cs {
            for i in 0..=100 {
                let r = c.eval(i as f64 / 100.0).norm();
                assert!((r - 2.0).abs() <= 2e-3, "r = {r}");
            }
        }
    }
}
