use crate::geometry::Point;

/// 2D affine map `(x, y) -> (a x + c y + e, b x + d y + f)`, SVG matrix order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        e: 0.0,
        f: 0.0,
    };

    pub fn translate(tx: f64, ty: f64) -> Self {
        Affine {
            e: tx,
            f: ty,
            ..Self::IDENTITY
        }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Affine {
            a: sx,
            d: sy,
            ..Self::IDENTITY
        }
    }

    pub fn rotate_deg(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Affine {
            a: c,
            b: s,
            c: -s,
            d: c,
            e: 0.0,
            f: 0.0,
        }
    }

    pub fn skew_x_deg(deg: f64) -> Self {
        Affine {
            c: deg.to_radians().tan(),
            ..Self::IDENTITY
        }
    }

    pub fn skew_y_deg(deg: f64) -> Self {
        Affine {
            b: deg.to_radians().tan(),
            ..Self::IDENTITY
        }
    }

    /// `self ∘ rhs`: applies `rhs` first.
    pub fn compose(&self, rhs: &Affine) -> Affine {
        Affine {
            a: self.a * rhs.a + self.c * rhs.b,
            b: self.b * rhs.a + self.d * rhs.b,
            c: self.a * rhs.c + self.c * rhs.d,
            d: self.b * rhs.c + self.d * rhs.d,
            e: self.a * rhs.e + self.c * rhs.f + self.e,
            f: self.b * rhs.e + self.d * rhs.f + self.f,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn apply(&self, p: Point) -> Point {
        if self.is_identity() {
            return p;
        }
        Point::new(
            self.a * p.x + self.c * p.y + self.e,
            self.b * p.x + self.d * p.y + self.f,
        )
    }
}

/// Parses an SVG `transform` attribute. Items compose left to right, so the
/// rightmost item is applied to coordinates first.
pub fn parse_transform(s: &str) -> Result<Affine, String> {
    let mut total = Affine::IDENTITY;
    let mut rest = s.trim_start_matches(|c: char| c.is_whitespace() || c == ',');
    while !rest.is_empty() {
        let open = rest
            .find('(')
            .ok_or_else(|| format!("expected '(' in transform {s:?}"))?;
        let name = rest[..open].trim();
        let close = rest[open..]
            .find(')')
            .map(|i| i + open)
            .ok_or_else(|| format!("unterminated transform item {name:?}"))?;
        let args: Vec<f64> = rest[open + 1..close]
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| format!("bad number {t:?} in {name}()"))
            })
            .collect::<Result<_, _>>()?;
        let item = match (name, args.as_slice()) {
            ("translate", [tx]) => Affine::translate(*tx, 0.0),
            ("translate", [tx, ty]) => Affine::translate(*tx, *ty),
            ("scale", [s]) => Affine::scale(*s, *s),
            ("scale", [sx, sy]) => Affine::scale(*sx, *sy),
            ("rotate", [a]) => Affine::rotate_deg(*a),
            ("rotate", [a, cx, cy]) => Affine::translate(*cx, *cy)
                .compose(&Affine::rotate_deg(*a))
                .compose(&Affine::translate(-cx, -cy)),
            ("matrix", [a, b, c, d, e, f]) => Affine {
                a: *a,
                b: *b,
                c: *c,
                d: *d,
                e: *e,
                f: *f,
            },
            ("skewX", [a]) => Affine::skew_x_deg(*a),
            ("skewY", [a]) => Affine::skew_y_deg(*a),
            _ => {
                return Err(format!(
                    "unsupported transform {name}() with {} arguments",
                    args.len()
                ))
            }
        };
        total = total.compose(&item);
        rest = rest[close + 1..].trim_start_matches(|c: char| c.is_whitespace() || c == ',');
    }
    Ok(total)
}
