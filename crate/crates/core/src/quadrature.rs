#![allow(clippy::excessive_precision)]
//! Symmetric Gauss rules on triangles and exact integration of polynomials
//! over convex polygons.

use crate::error::{Error, Result};
use crate::geometry::{is_convex_ccw, polygon_area, triangle_area, vertex_centroid, Point, TOL_GEOM};

/// Quadrature rule on a triangle in barycentric form, normalized so that
/// `integral_K f ~= |K| * sum_i w_i f(a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    fn from_orbits(degree: usize, orbits: &[Orbit]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for orbit in orbits {
            match *orbit {
                Orbit::Centroid(w) => {
                    points.push([1.0 / 3.0; 3]);
                    weights.push(w);
                }
                Orbit::Edge(a, w) => {
                    let c = 1.0 - 2.0 * a;
                    for p in [[c, a, a], [a, c, a], [a, a, c]] {
                        points.push(p);
                        weights.push(w);
                    }
                }
                Orbit::General(a, b, w) => {
                    let c = 1.0 - a - b;
                    for p in [[a, b, c], [b, a, c], [a, c, b], [c, a, b], [b, c, a], [c, b, a]] {
                        points.push(p);
                        weights.push(w);
                    }
                }
            }
        }
        TriangleRule {
            degree,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

enum Orbit {
    Centroid(f64),
    /// (a, a, 1 - 2a) and permutations, per-point weight
    Edge(f64, f64),
    /// (a, b, 1 - a - b) and permutations, per-point weight
    General(f64, f64, f64),
}

/// Smallest tabulated symmetric rule integrating polynomials of degree `d`
/// exactly: 1 point (d = 1), 3 points (d = 2), 6 points (d = 3, 4),
/// 7 points (d = 5), 12 points (d = 6).
pub fn rule_of_degree(d: usize) -> Result<TriangleRule> {
    let rule = match d {
        1 => TriangleRule::from_orbits(1, &[Orbit::Centroid(1.0)]),
        2 => TriangleRule::from_orbits(2, &[Orbit::Edge(1.0 / 6.0, 1.0 / 3.0)]),
        3 | 4 => TriangleRule::from_orbits(
            4,
            &[
                Orbit::Edge(0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_695),
                Orbit::Edge(0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_638),
            ],
        ),
        5 => seven_point_rule(),
        6 => TriangleRule::from_orbits(
            6,
            &[
                Orbit::Edge(0.249_286_745_170_910_421_29, 0.116_786_275_726_379_366_025),
                Orbit::Edge(0.063_089_014_491_502_228_34, 0.050_844_906_370_206_816_921),
                Orbit::General(
                    0.053_145_049_844_816_947_353,
                    0.310_352_451_033_784_405_417,
                    0.082_851_075_618_373_575_194,
                ),
            ],
        ),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no triangle rule for degree {d} (supported: 1..=6)"
            )))
        }
    };
    Ok(rule)
}

/// The classical seven-point rule of degree five: the centroid plus two
/// three-point orbits.
pub fn seven_point_rule() -> TriangleRule {
    let s15 = 15f64.sqrt();
    TriangleRule::from_orbits(
        5,
        &[
            Orbit::Centroid(9.0 / 40.0),
            Orbit::Edge((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0),
            Orbit::Edge((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0),
        ],
    )
}

#[inline]
pub(crate) fn map_point(tri: &[Point; 3], bary: &[f64; 3]) -> Point {
    tri[0] * bary[0] + tri[1] * bary[1] + tri[2] * bary[2]
}

/// `|K| * sum_i w_i f(a_i)` over the physical triangle `tri`.
pub fn integrate_on_triangle(
    f: impl Fn(Point) -> f64,
    tri: &[Point; 3],
    rule: &TriangleRule,
) -> Result<f64> {
    let area = triangle_area(tri).abs();
    if area <= TOL_GEOM * TOL_GEOM {
        return Err(Error::InvalidArgument("zero-area triangle".into()));
    }
    let s: f64 = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(b, w)| w * f(map_point(tri, b)))
        .sum();
    Ok(area * s)
}

/// How a convex polygon is split into triangles before quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolygonSplit {
    /// Fan around the vertex centroid.
    #[default]
    CentroidFan,
    /// Fan from the first vertex (ear clipping of a convex polygon).
    VertexFan,
}

/// Calls `visit(point, weight)` for every quadrature node of `rule` on a fan
/// triangulation of the counterclockwise convex polygon `poly`. Weights
/// include the sub-triangle areas, so summing `weight * g(point)` integrates
/// `g`. Sub-triangles of zero area are skipped.
pub fn for_each_polygon_node(
    poly: &[Point],
    rule: &TriangleRule,
    split: PolygonSplit,
    mut visit: impl FnMut(Point, f64),
) {
    let n = poly.len();
    let mut emit = |tri: [Point; 3]| {
        let area = triangle_area(&tri);
        if area <= 0.0 {
            return;
        }
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            visit(map_point(&tri, b), area * w);
        }
    };
    match split {
        PolygonSplit::CentroidFan => {
            let c = vertex_centroid(poly);
            for i in 0..n {
                emit([c, poly[i], poly[(i + 1) % n]]);
            }
        }
        PolygonSplit::VertexFan => {
            for i in 1..n - 1 {
                emit([poly[0], poly[i], poly[i + 1]]);
            }
        }
    }
}

/// Integral of a polynomial of degree `degree <= 6` over a convex
/// counterclockwise polygon; exact up to round-off.
pub fn integrate_on_convex_polygon(
    f: impl Fn(Point) -> f64,
    poly: &[Point],
    degree: usize,
) -> Result<f64> {
    check_convex_polygon(poly)?;
    let rule = rule_of_degree(degree.max(1))?;
    let mut sum = 0.0;
    for_each_polygon_node(poly, &rule, PolygonSplit::CentroidFan, |p, w| sum += w * f(p));
    Ok(sum)
}

pub(crate) fn check_convex_polygon(poly: &[Point]) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::InvalidArgument("polygon needs at least 3 vertices".into()));
    }
    if polygon_area(poly) <= TOL_GEOM * TOL_GEOM {
        return Err(Error::InvalidArgument("polygon has no positive area".into()));
    }
    if !is_convex_ccw(poly, TOL_GEOM) {
        return Err(Error::InvalidArgument(
            "polygon is not convex or self-intersects".into(),
        ));
    }
    Ok(())
}
