//! Points, cubic Béziers and the curve-set container shared by every stage.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise quarter turn in a y-up frame: `(x, y) -> (-y, x)`.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, rhs: Point) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Cubic Bernstein weights at `t`.
pub fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicBezier {
    pub pts: [Point; 4],
}

impl CubicBezier {
    pub const fn new(p0: Point, p1: Point, p2: Point, p3: Point) -> Self {
        Self {
            pts: [p0, p1, p2, p3],
        }
    }

    /// Degree-elevated straight segment with interior points at the chord thirds.
    pub fn line(a: Point, b: Point) -> Self {
        Self::new(a, a.lerp(b, 1.0 / 3.0), a.lerp(b, 2.0 / 3.0), b)
    }

    pub fn start(&self) -> Point {
        self.pts[0]
    }

    pub fn end(&self) -> Point {
        self.pts[3]
    }

    pub fn eval(&self, t: f64) -> Point {
        let w = bernstein(t);
        self.pts
            .iter()
            .zip(w)
            .fold(Point::ZERO, |acc, (p, w)| acc + *p * w)
    }

    pub fn centroid(&self) -> Point {
        (self.pts[0] + self.pts[1] + self.pts[2] + self.pts[3]) * 0.25
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self {
            pts: self.pts.map(f),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pts.iter().all(|p| p.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Subpath {
    pub curves: Vec<CubicBezier>,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewBox {
    pub min_x: f64,
    pub min_y: f64,
    pub width: f64,
    pub height: f64,
}

impl ViewBox {
    pub const fn new(min_x: f64, min_y: f64, width: f64, height: f64) -> Self {
        Self {
            min_x,
            min_y,
            width,
            height,
        }
    }
}

/// Partition of control-point slots into groups that always share one coordinate.
///
/// Slot `4 * curve + k` is control point `k` of the `curve`-th curve in flat
/// (subpath-major) order. Group ids are assigned in order of their first slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeldGroups {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl WeldGroups {
    /// Builds the weld partition implied by subpath connectivity: consecutive
    /// endpoints and, for closed subpaths, the closing endpoint pair.
    pub fn from_subpaths(subpaths: &[Subpath]) -> Self {
        let num_slots = 4 * subpaths.iter().map(|s| s.curves.len()).sum::<usize>();
        let mut uf = UnionFind::new(num_slots);
        let mut base = 0;
        for sp in subpaths {
            let n = sp.curves.len();
            for i in 1..n {
                uf.union(4 * (base + i - 1) + 3, 4 * (base + i));
            }
            if sp.closed && n > 0 {
                uf.union(4 * (base + n - 1) + 3, 4 * base);
            }
            base += n;
        }
        let mut group_of = vec![usize::MAX; num_slots];
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut root_group = vec![usize::MAX; num_slots];
        for slot in 0..num_slots {
            let root = uf.find(slot);
            if root_group[root] == usize::MAX {
                root_group[root] = members.len();
                members.push(Vec::new());
            }
            group_of[slot] = root_group[root];
            members[root_group[root]].push(slot);
        }
        Self { group_of, members }
    }

    pub fn num_slots(&self) -> usize {
        self.group_of.len()
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, slot: usize) -> usize {
        self.group_of[slot]
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.members[group]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    /// Checks that the groups partition `0..num_slots`.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.group_of.len()];
        for (g, m) in self.members.iter().enumerate() {
            for &s in m {
                if s >= seen.len() || seen[s] || self.group_of[s] != g {
                    return false;
                }
                seen[s] = true;
            }
        }
        seen.into_iter().all(|x| x)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller slot as root so group order is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Normalized all-cubic drawing with its connectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub subpaths: Vec<Subpath>,
    pub view_box: ViewBox,
    pub weld_groups: WeldGroups,
}

impl CurveSet {
    pub fn new(subpaths: Vec<Subpath>, view_box: ViewBox) -> Self {
        let weld_groups = WeldGroups::from_subpaths(&subpaths);
        Self {
            subpaths,
            view_box,
            weld_groups,
        }
    }

    pub fn num_curves(&self) -> usize {
        self.subpaths.iter().map(|s| s.curves.len()).sum()
    }

    pub fn curves(&self) -> impl Iterator<Item = &CubicBezier> {
        self.subpaths.iter().flat_map(|s| s.curves.iter())
    }

    pub fn curves_mut(&mut self) -> impl Iterator<Item = &mut CubicBezier> {
        self.subpaths.iter_mut().flat_map(|s| s.curves.iter_mut())
    }

    /// Control points flattened as `[x, y]` pairs, slot order.
    pub fn coords(&self) -> Vec<f64> {
        self.curves()
            .flat_map(|c| c.pts.iter().flat_map(|p| [p.x, p.y]))
            .collect()
    }

    /// Overwrites every control point from a flat coordinate vector in slot order.
    pub fn set_coords(&mut self, coords: &[f64]) {
        assert_eq!(coords.len(), 8 * self.num_curves(), "coordinate count");
        for (c, chunk) in self.curves_mut().zip(coords.chunks_exact(8)) {
            for k in 0..4 {
                c.pts[k] = Point::new(chunk[2 * k], chunk[2 * k + 1]);
            }
        }
    }

    /// Same topology, new coordinates.
    pub fn with_coords(&self, coords: &[f64]) -> Self {
        let mut out = self.clone();
        out.set_coords(coords);
        out
    }

    /// True when every weld group holds one coordinate and every closed
    /// subpath ends where it starts.
    pub fn connectivity_holds(&self) -> bool {
        let coords = self.coords();
        let slot = |s: usize| (coords[2 * s], coords[2 * s + 1]);
        let welds = self
            .weld_groups
            .groups()
            .all(|m| m.iter().all(|&s| slot(s) == slot(m[0])));
        let closed = self.subpaths.iter().all(|sp| {
            !sp.closed
                || match (sp.curves.first(), sp.curves.last()) {
                    (Some(f), Some(l)) => f.start() == l.end(),
                    _ => true,
                }
        });
        welds && closed
    }

    pub fn is_finite(&self) -> bool {
        self.curves().all(CubicBezier::is_finite)
    }
}

/// Mean absolute turning angle over the interior vertices of every curve's
/// uniformly sampled polyline. Zero-length edges are skipped.
pub fn mean_turning_angle(cs: &CurveSet, segments: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for curve in cs.curves() {
        let pts: Vec<Point> = (0..=segments)
            .map(|i| curve.eval(i as f64 / segments as f64))
            .collect();
        let edges: Vec<Point> = pts
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|e| e.norm() > 1e-12)
            .collect();
        for w in edges.windows(2) {
            let cross = w[0].x * w[1].y - w[0].y * w[1].x;
            total += cross.atan2(w[0].dot(w[1])).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
