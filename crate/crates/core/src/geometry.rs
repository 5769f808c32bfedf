//! Planar points, triangles and convex polygon clipping.

use std::ops::{Add, Mul, Neg, Sub};

/// Absolute tolerance for containment and clipping predicates (domain units).
pub const TOL_GEOM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn of_points(points: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BoundingBox { min, max }
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn inflate(self, pad: f64) -> Self {
        BoundingBox {
            min: Point::new(self.min.x - pad, self.min.y - pad),
            max: Point::new(self.max.x + pad, self.max.y + pad),
        }
    }
}

/// Twice the signed area of triangle (a, b, c); positive when counterclockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

pub fn triangle_area(tri: &[Point; 3]) -> f64 {
    0.5 * orient(tri[0], tri[1], tri[2])
}

/// Barycentric coordinates of `p` with respect to a counterclockwise triangle.
pub fn barycentric(tri: &[Point; 3], p: Point) -> [f64; 3] {
    let det = orient(tri[0], tri[1], tri[2]);
    let l0 = orient(p, tri[1], tri[2]) / det;
    let l1 = orient(tri[0], p, tri[2]) / det;
    [l0, l1, 1.0 - l0 - l1]
}

/// Signed area of a simple polygon (shoelace formula).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        twice += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * twice
}

pub fn vertex_centroid(poly: &[Point]) -> Point {
    let mut s = Point::default();
    for p in poly {
        s = s + *p;
    }
    s * (1.0 / poly.len() as f64)
}

/// True if the counterclockwise polygon is convex up to `tol` (relative to edge
/// lengths). Collinear consecutive vertices are allowed.
pub fn is_convex_ccw(poly: &[Point], tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut turning = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let e1 = b - a;
        let e2 = c - b;
        let cr = e1.cross(e2);
        if cr < -tol * (e1.norm() * e2.norm()).max(tol) {
            return false;
        }
        // exterior angle; a simple convex polygon turns exactly once
        turning += cr.atan2(e1.dot(e2));
    }
    (turning - 2.0 * std::f64::consts::PI).abs() < 1e-6
}

/// Sutherland-Hodgman clipping of a convex `subject` polygon against the
/// three half-planes of a counterclockwise triangle. Points within `TOL_GEOM`
/// of an edge line count as inside. The result may contain repeated or
/// collinear vertices and may be empty.
pub fn clip_polygon_by_triangle(subject: &[Point], tri: &[Point; 3]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    for e in 0..3 {
        if output.is_empty() {
            break;
        }
        let a = tri[e];
        let b = tri[(e + 1) % 3];
        let edge = b - a;
        let len = edge.norm();
        // signed distance to the edge line, positive on the inner side
        let dist = |p: Point| edge.cross(p - a) / len;

        let input = std::mem::take(&mut output);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let next = input[(i + 1) % n];
            let dc = dist(cur);
            let dn = dist(next);
            let cur_in = dc >= -TOL_GEOM;
            let next_in = dn >= -TOL_GEOM;
            if cur_in {
                output.push(cur);
                if !next_in && dc > 0.0 {
                    output.push(intersect(cur, next, dc, dn));
                }
            } else if next_in && dn > 0.0 {
                output.push(intersect(cur, next, dc, dn));
            }
        }
    }
    output
}

#[inline]
fn intersect(p: Point, q: Point, dp: f64, dq: f64) -> Point {
    let t = dp / (dp - dq);
    p + (q - p) * t
}

/// Affine map `x -> mat * x + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub mat: [[f64; 2]; 2],
    pub offset: Point,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        mat: [[1.0, 0.0], [0.0, 1.0]],
        offset: Point { x: 0.0, y: 0.0 },
    };

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.mat[0][0] * p.x + self.mat[0][1] * p.y + self.offset.x,
            self.mat[1][0] * p.x + self.mat[1][1] * p.y + self.offset.y,
        )
    }

    pub fn det(&self) -> f64 {
        self.mat[0][0] * self.mat[1][1] - self.mat[0][1] * self.mat[1][0]
    }

    /// Inverse map; `None` when the linear part is singular.
    pub fn inverse(&self) -> Option<AffineMap> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = self.mat;
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let o = self.offset;
        let offset = Point::new(
            -(inv[0][0] * o.x + inv[0][1] * o.y),
            -(inv[1][0] * o.x + inv[1][1] * o.y),
        );
        Some(AffineMap { mat: inv, offset })
    }
}
