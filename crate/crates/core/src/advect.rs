//! Characteristic feet, the time-step guard, and the two ways of forming the
//! composite term `(phi_prev o X, psi_h)`.
//!
//! With a piecewise-linear velocity the backward-Euler foot map
//! `x -> x - dt * u_h(x)` is affine on every element `K0`. The image of `K0`
//! is a triangle; clipping it against each overlapped element `K_l` and
//! pulling the clip back gives polygons `E_l` that partition `K0` and on which
//! `(phi_prev|K_l o X) * psi|K0` is a single polynomial of degree `2k`. Those
//! polygons are integrated exactly. The quadrature variant instead samples the
//! composite at the nodes of a fixed rule on each element.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe_space::{basis_values, FeFunction, FeSpace};
use crate::geometry::{
    barycentric, clip_polygon_by_triangle, polygon_area, AffineMap, BoundingBox, Point, TOL_GEOM,
};
use crate::linalg::CsrMatrix;
use crate::mesh::Mesh;
use crate::quadrature::{for_each_polygon_node, map_point, rule_of_degree, PolygonSplit, TriangleRule};

/// Default guard constant for `dt * |u_h|_{1,inf}`.
pub const DEFAULT_D1: f64 = 0.2;

/// Admissible range of the per-element Jacobian of the foot map.
pub const JACOBIAN_RANGE: (f64, f64) = (0.5, 1.5);

/// Pieces with area at or below this are dropped as clipping slivers.
pub const SLIVER_AREA: f64 = TOL_GEOM * TOL_GEOM;

/// Outcome of a passed time-step guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestepReport {
    /// `|u_h|_{1,inf}`: max over elements of the Frobenius norm of the gradient.
    pub seminorm_w1inf: f64,
    pub product: f64,
    pub min_jacobian: f64,
    pub max_jacobian: f64,
}

/// Constant gradient `[[dux/dx, dux/dy], [duy/dx, duy/dy]]` of a P1 velocity on `e`.
fn velocity_gradient(velocity: &[FeFunction; 2], e: usize) -> [[f64; 2]; 2] {
    let c = velocity[0].space.mesh.centroid(e);
    let gx = velocity[0].eval_grad(e, c);
    let gy = velocity[1].eval_grad(e, c);
    [[gx.x, gx.y], [gy.x, gy.y]]
}

/// Checks `dt * |u_h|_{1,inf} <= d1` and that `det(I - dt grad u_h)` lies in
/// `[1/2, 3/2]` on every element.
pub fn check_timestep(velocity: &[FeFunction; 2], dt: f64, d1: f64) -> Result<TimestepReport> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(d1 > 0.0 && d1 < 1.0) {
        return Err(Error::InvalidArgument(format!("d1 must lie in (0, 1), got {d1}")));
    }
    if velocity.iter().any(|v| v.space.degree != 1) {
        return Err(Error::InvalidArgument("guard needs a P1 velocity".into()));
    }
    let mesh = &velocity[0].space.mesh;
    let mut report = TimestepReport {
        seminorm_w1inf: 0.0,
        product: 0.0,
        min_jacobian: f64::INFINITY,
        max_jacobian: f64::NEG_INFINITY,
    };
    let mut worst = 0;
    let mut jac_of_worst = 1.0;
    for e in 0..mesh.num_elements() {
        let g = velocity_gradient(velocity, e);
        let frob = (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt();
        let jac = (1.0 - dt * g[0][0]) * (1.0 - dt * g[1][1]) - dt * dt * g[0][1] * g[1][0];
        if frob > report.seminorm_w1inf {
            report.seminorm_w1inf = frob;
            worst = e;
            jac_of_worst = jac;
        }
        report.min_jacobian = report.min_jacobian.min(jac);
        report.max_jacobian = report.max_jacobian.max(jac);
        if !(JACOBIAN_RANGE.0..=JACOBIAN_RANGE.1).contains(&jac) {
            return Err(Error::TimestepViolation {
                element: e,
                product: dt * frob,
                jacobian: jac,
            });
        }
    }
    report.product = dt * report.seminorm_w1inf;
    if report.product > d1 {
        return Err(Error::TimestepViolation {
            element: worst,
            product: report.product,
            jacobian: jac_of_worst,
        });
    }
    Ok(report)
}

/// Backward-Euler foot map for a P1 velocity, validated by the guard.
#[derive(Debug, Clone)]
pub struct CharMap {
    pub velocity: [FeFunction; 2],
    pub dt: f64,
    pub seminorm_w1inf: f64,
    pub report: TimestepReport,
}

impl CharMap {
    pub fn new(velocity: [FeFunction; 2], dt: f64, d1: f64) -> Result<Self> {
        let report = check_timestep(&velocity, dt, d1)?;
        Ok(CharMap {
            velocity,
            dt,
            seminorm_w1inf: report.seminorm_w1inf,
            report,
        })
    }

    /// Wraps a velocity that has already passed [`check_timestep`].
    pub fn from_checked(velocity: [FeFunction; 2], dt: f64, report: TimestepReport) -> Self {
        CharMap {
            velocity,
            dt,
            seminorm_w1inf: report.seminorm_w1inf,
            report,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.velocity[0].space.mesh
    }

    /// `x - dt * u_h(x)` with `u_h` evaluated on `element`.
    pub fn foot(&self, x: Point, element: usize) -> Point {
        let u = Point::new(
            self.velocity[0].eval(element, x),
            self.velocity[1].eval(element, x),
        );
        x - u * self.dt
    }

    /// The foot map restricted to `element`, as an affine map.
    pub fn element_map(&self, e: usize) -> AffineMap {
        let g = velocity_gradient(&self.velocity, e);
        let dt = self.dt;
        let mat = [
            [1.0 - dt * g[0][0], -dt * g[0][1]],
            [-dt * g[1][0], 1.0 - dt * g[1][1]],
        ];
        let v0 = self.mesh().vertices[self.mesh().elements[e][0]];
        let f0 = self.foot(v0, e);
        // offset chosen so that v0 maps to its foot exactly
        let offset = Point::new(
            f0.x - (mat[0][0] * v0.x + mat[0][1] * v0.y),
            f0.y - (mat[1][0] * v0.x + mat[1][1] * v0.y),
        );
        AffineMap { mat, offset }
    }

    /// Image of the element's vertices under the foot map.
    pub fn image_triangle(&self, e: usize) -> [Point; 3] {
        let tri = self.mesh().triangle(e);
        std::array::from_fn(|i| self.foot(tri[i], e))
    }
}

/// Part of an upwind element whose image falls in one source element.
#[derive(Debug, Clone)]
pub struct Piece {
    pub source: usize,
    /// Counterclockwise polygon `E_l` in the coordinates of the upwind element.
    pub polygon: Vec<Point>,
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct ElementDecomposition {
    pub map: AffineMap,
    pub pieces: Vec<Piece>,
}

impl ElementDecomposition {
    pub fn covered_area(&self) -> f64 {
        self.pieces.iter().map(|p| p.area).sum()
    }
}

/// Per-element partition `K0 = U_l E_l` induced by the foot map.
#[derive(Debug, Clone)]
pub struct CompositeDecomposition {
    pub elements: Vec<ElementDecomposition>,
}

impl CompositeDecomposition {
    /// `|sum_l |E_l| - |K0|| / |K0|` per element. Zero up to round-off where
    /// the image stays inside the mesh; positive where it leaves the domain.
    pub fn partition_defects(&self, mesh: &Mesh) -> Vec<f64> {
        self.elements
            .iter()
            .enumerate()
            .map(|(e, d)| (d.covered_area() - mesh.area(e)).abs() / mesh.area(e))
            .collect()
    }

    pub fn num_pieces(&self) -> usize {
        self.elements.iter().map(|d| d.pieces.len()).sum()
    }

    /// One line per piece: `K0 l area v1x v1y v2x v2y ...`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (k0, d) in self.elements.iter().enumerate() {
            for p in &d.pieces {
                write!(w, "{} {} {:.16e}", k0, p.source, p.area)?;
                for v in &p.polygon {
                    write!(w, " {:.16e} {:.16e}", v.x, v.y)?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

fn drop_repeated_vertices(poly: &mut Vec<Point>) {
    let tol = 1e-14;
    poly.dedup_by(|a, b| (*a - *b).norm() <= tol);
    while poly.len() > 1 && (poly[0] - poly[poly.len() - 1]).norm() <= tol {
        poly.pop();
    }
}

fn decompose_element(mesh: &Mesh, map: &CharMap, e: usize) -> Result<ElementDecomposition> {
    let affine = map.element_map(e);
    let jac = affine.det();
    if !(JACOBIAN_RANGE.0..=JACOBIAN_RANGE.1).contains(&jac) {
        return Err(Error::DegenerateMap { element: e, jacobian: jac });
    }
    let inverse = affine
        .inverse()
        .ok_or(Error::DegenerateMap { element: e, jacobian: jac })?;
    let image = map.image_triangle(e);
    let bbox = BoundingBox::of_points(&image).inflate(TOL_GEOM);
    let mut pieces = Vec::new();
    for l in mesh.elements_overlapping_box(&bbox) {
        let clipped = clip_polygon_by_triangle(&image, &mesh.triangle(l));
        if clipped.len() < 3 || polygon_area(&clipped) <= SLIVER_AREA {
            continue;
        }
        let mut polygon: Vec<Point> = clipped.iter().map(|&q| inverse.apply(q)).collect();
        drop_repeated_vertices(&mut polygon);
        let area = polygon_area(&polygon);
        if polygon.len() < 3 || area <= SLIVER_AREA {
            continue;
        }
        pieces.push(Piece { source: l, polygon, area });
    }
    Ok(ElementDecomposition { map: affine, pieces })
}

/// Clips each element's image triangle against the overlapped elements and
/// pulls the pieces back. Parts of an image outside the mesh yield no piece.
pub fn decompose(mesh: &Mesh, map: &CharMap) -> Result<CompositeDecomposition> {
    let elements = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| decompose_element(mesh, map, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompositeDecomposition { elements })
}

/// Sparse operator `B` with `(B c)_i = integral (phi_c o X_1h) phi_i`, built
/// exactly from the decomposition with the degree-`2k` rule on each piece.
pub fn exact_transport_matrix(
    decomp: &CompositeDecomposition,
    space: &FeSpace,
    split: PolygonSplit,
) -> CsrMatrix {
    let k = space.degree;
    let nloc = space.nloc();
    let rule = rule_of_degree(2 * k).expect("degree 2k <= 4 is tabulated");
    let mesh = &space.mesh;
    let blocks: Vec<Vec<(usize, usize, f64)>> = decomp
        .elements
        .par_iter()
        .enumerate()
        .map(|(k0, d)| {
            let tri0 = mesh.triangle(k0);
            let dofs0 = space.element_dofs(k0);
            let mut out = Vec::with_capacity(d.pieces.len() * nloc * nloc);
            let mut psi = [0.0; 6];
            let mut phi = [0.0; 6];
            let mut block = [0.0; 36];
            for piece in &d.pieces {
                let tri_l = mesh.triangle(piece.source);
                block.iter_mut().for_each(|v| *v = 0.0);
                for_each_polygon_node(&piece.polygon, &rule, split, |p, w| {
                    basis_values(k, &barycentric(&tri0, p), &mut psi);
                    basis_values(k, &barycentric(&tri_l, d.map.apply(p)), &mut phi);
                    for i in 0..nloc {
                        let wi = w * psi[i];
                        for j in 0..nloc {
                            block[i * nloc + j] += wi * phi[j];
                        }
                    }
                });
                let dofs_l = space.element_dofs(piece.source);
                for i in 0..nloc {
                    for j in 0..nloc {
                        out.push((dofs0[i], dofs_l[j], block[i * nloc + j]));
                    }
                }
            }
            out
        })
        .collect();
    let triplets: Vec<_> = blocks.into_iter().flatten().collect();
    CsrMatrix::from_triplets(space.ndofs(), space.ndofs(), &triplets)
}

/// `b_i = integral_Omega (phi_prev o X_1h) phi_i`, computed exactly piece by piece.
pub fn composite_term_exact(
    decomp: &CompositeDecomposition,
    phi_prev: &FeFunction,
    space: &FeSpace,
) -> Result<Vec<f64>> {
    if phi_prev.space.degree != space.degree || phi_prev.coeffs.len() != space.ndofs() {
        return Err(Error::InvalidArgument(
            "previous solution and target space differ".into(),
        ));
    }
    Ok(exact_transport_matrix(decomp, space, PolygonSplit::CentroidFan).mul_vec(&phi_prev.coeffs))
}

/// Sparse operator of the quadrature-based composite term:
/// `(B c)_i = sum_K |K| sum_q w_q phi_c(a_q - dt u(a_q)) phi_i(a_q)`.
/// Feet that leave the mesh contribute zero.
pub fn quadrature_transport_matrix(
    space: &FeSpace,
    u: &(dyn Fn(Point) -> Point + Sync),
    dt: f64,
    rule: &TriangleRule,
) -> CsrMatrix {
    let k = space.degree;
    let nloc = space.nloc();
    let mesh = &space.mesh;
    let blocks: Vec<Vec<(usize, usize, f64)>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let tri = mesh.triangle(e);
            let area = mesh.area(e);
            let dofs = space.element_dofs(e);
            let mut psi = [0.0; 6];
            let mut phi = [0.0; 6];
            let mut out = Vec::with_capacity(rule.len() * nloc * nloc);
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let a = map_point(&tri, l);
                let foot = a - u(a) * dt;
                let Some(src) = mesh.locate(foot, e) else {
                    continue;
                };
                basis_values(k, l, &mut psi);
                basis_values(k, &barycentric(&mesh.triangle(src), foot), &mut phi);
                let dofs_src = space.element_dofs(src);
                for i in 0..nloc {
                    for j in 0..nloc {
                        out.push((dofs[i], dofs_src[j], area * w * psi[i] * phi[j]));
                    }
                }
            }
            out
        })
        .collect();
    let triplets: Vec<_> = blocks.into_iter().flatten().collect();
    CsrMatrix::from_triplets(space.ndofs(), space.ndofs(), &triplets)
}

/// `b_i = sum_K I_h[(phi_prev o X_1) phi_i; K]` with the exact-velocity foot.
pub fn composite_term_quadrature(
    space: &FeSpace,
    u: &(dyn Fn(Point) -> Point + Sync),
    dt: f64,
    phi_prev: &FeFunction,
    rule: &TriangleRule,
) -> Vec<f64> {
    quadrature_transport_matrix(space, u, dt, rule).mul_vec(&phi_prev.coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::{interpolate, interpolate_velocity_p1};
    use crate::linalg::assemble_mass;
    use crate::mesh::unit_square_mesh;
    use crate::quadrature::seven_point_rule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn p1(n: usize) -> Arc<FeSpace> {
        FeSpace::build(Arc::new(unit_square_mesh(n).unwrap()), 1).unwrap()
    }

    fn sinsin_velocity(p: Point) -> Point {
        let s = (PI * p.x).sin() * (PI * p.y).sin();
        Point::new(s, s)
    }

    #[test]
    fn zero_velocity_passes_any_dt() {
        let s = p1(4);
        let v = interpolate_velocity_p1(&s, |_| Point::default()).unwrap();
        for dt in [1e-3, 1.0, 1e6] {
            let r = check_timestep(&v, dt, DEFAULT_D1).unwrap();
            assert_eq!((r.min_jacobian, r.max_jacobian), (1.0, 1.0));
        }
    }

    #[test]
    fn rigid_rotation_guard_boundary() {
        let s = p1(4);
        let v = interpolate_velocity_p1(&s, |p| Point::new(-p.y, p.x)).unwrap();
        let dt = 0.2 / 2f64.sqrt();
        let r = check_timestep(&v, dt, 0.2).unwrap();
        assert!((r.seminorm_w1inf - 2f64.sqrt()).abs() < 1e-12);
        assert!((r.product - 0.2).abs() < 1e-12);
        let err = check_timestep(&v, 2.0 / 2f64.sqrt(), 0.2).unwrap_err();
        assert!(matches!(err, Error::TimestepViolation { product, .. } if (product - 2.0).abs() < 1e-12));
        assert!(check_timestep(&v, -1.0, 0.2).is_err());
        assert!(check_timestep(&v, 0.1, 1.5).is_err());
    }

    #[test]
    fn foot_examples() {
        let s = p1(4);
        let zero = CharMap::new(interpolate_velocity_p1(&s, |_| Point::default()).unwrap(), 0.1, 0.2).unwrap();
        let x = Point::new(0.3, 0.4);
        let e = s.mesh.locate(x, 0).unwrap();
        assert_eq!(zero.foot(x, e), x);
        let c = CharMap::new(interpolate_velocity_p1(&s, |_| Point::new(1.0, 0.0)).unwrap(), 0.1, 0.2).unwrap();
        assert!((c.foot(x, e) - Point::new(0.2, 0.4)).norm() < 1e-15);
        let dt = 0.05;
        let rot = CharMap::new(interpolate_velocity_p1(&s, |p| Point::new(-p.y, p.x)).unwrap(), dt, 0.2).unwrap();
        let x = Point::new(0.25, 0.0);
        let e = s.mesh.locate(x, 0).unwrap();
        assert!((rot.foot(x, e) - Point::new(0.25, -0.25 * dt)).norm() < 1e-15);
    }

    #[test]
    fn identity_map_decomposes_trivially() {
        let s = p1(6);
        let map = CharMap::new(interpolate_velocity_p1(&s, |_| Point::default()).unwrap(), 0.1, 0.2).unwrap();
        let d = decompose(&s.mesh, &map).unwrap();
        for (e, ed) in d.elements.iter().enumerate() {
            assert_eq!(ed.pieces.len(), 1);
            assert_eq!(ed.pieces[0].source, e);
            assert!((ed.pieces[0].area - s.mesh.area(e)).abs() < 1e-15);
        }
    }

    #[test]
    fn translation_by_one_cell() {
        // velocity (h, 0)/dt shifts every image one cell to the left; the
        // interior lower triangle [a, b, c] of cell (i, j) lands exactly on
        // the lower triangle of cell (i - 1, j)
        let n = 8;
        let s = p1(n);
        let h = 1.0 / n as f64;
        let dt = 0.01;
        // the constant field violates nothing: its gradient is zero
        let map = CharMap::new(
            interpolate_velocity_p1(&s, |_| Point::new(h / dt, 0.0)).unwrap(),
            dt,
            0.2,
        )
        .unwrap();
        let d = decompose(&s.mesh, &map).unwrap();
        let (i, j) = (3, 4);
        let e = 2 * (j * n + i);
        let target = 2 * (j * n + i - 1);
        let pieces = &d.elements[e].pieces;
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].source, target);
        assert!((pieces[0].area - s.mesh.area(e)).abs() < 1e-15);

        // half-cell shift: the image covers the lower triangle of the left
        // cell and both triangles of its own cell, in fractions 1/4, 1/4, 1/2
        let map = CharMap::new(
            interpolate_velocity_p1(&s, |_| Point::new(0.5 * h / dt, 0.0)).unwrap(),
            dt,
            0.2,
        )
        .unwrap();
        let d = decompose(&s.mesh, &map).unwrap();
        let mut got: Vec<(usize, f64)> = d.elements[e]
            .pieces
            .iter()
            .map(|p| (p.source, p.area / s.mesh.area(e)))
            .collect();
        got.sort_by_key(|g| g.0);
        let left_lower = 2 * (j * n + i - 1);
        let expected = [(left_lower, 0.25), (e, 0.25), (e + 1, 0.5)];
        assert_eq!(got.len(), 3, "{got:?}");
        for ((src, frac), (esrc, efrac)) in got.iter().zip(expected) {
            assert_eq!(*src, esrc);
            assert!((frac - efrac).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn sinsin_partition_and_containment() {
        for n in [8, 16] {
            let s = p1(n);
            let dt = 0.125 / n as f64;
            let map = CharMap::new(interpolate_velocity_p1(&s, sinsin_velocity).unwrap(), dt, 0.2).unwrap();
            let d = decompose(&s.mesh, &map).unwrap();
            for (e, defect) in d.partition_defects(&s.mesh).into_iter().enumerate() {
                assert!(defect < 1e-10, "N={n} element {e}: {defect}");
            }
            for ed in &d.elements {
                for p in &ed.pieces {
                    let tri = s.mesh.triangle(p.source);
                    for v in &p.polygon {
                        let l = barycentric(&tri, ed.map.apply(*v));
                        let scale = (tri[1] - tri[0]).norm();
                        assert!(l.iter().all(|&x| x * scale >= -1e-12), "{l:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_velocity_composite_is_mass_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [1, 2] {
            let s = FeSpace::build(Arc::new(unit_square_mesh(5).unwrap()), k).unwrap();
            let p1s = FeSpace::build(Arc::clone(&s.mesh), 1).unwrap();
            let map = CharMap::new(interpolate_velocity_p1(&p1s, |_| Point::default()).unwrap(), 0.1, 0.2).unwrap();
            let d = decompose(&s.mesh, &map).unwrap();
            let mut phi = s.zero_function();
            phi.coeffs.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
            let exact = composite_term_exact(&d, &phi, &s).unwrap();
            let quad = composite_term_quadrature(&s, &|_| Point::default(), 0.1, &phi, &rule_of_degree(2 * k).unwrap());
            let mass = assemble_mass(&s).mul_vec(&phi.coeffs);
            for i in 0..s.ndofs() {
                assert!((exact[i] - mass[i]).abs() < 1e-12);
                assert!((quad[i] - mass[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sub_triangulation_does_not_change_the_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in [1, 2] {
            let s = FeSpace::build(Arc::new(unit_square_mesh(8).unwrap()), k).unwrap();
            let p1s = FeSpace::build(Arc::clone(&s.mesh), 1).unwrap();
            let map = CharMap::new(interpolate_velocity_p1(&p1s, sinsin_velocity).unwrap(), 1.0 / 64.0, 0.2).unwrap();
            let d = decompose(&s.mesh, &map).unwrap();
            let c: Vec<f64> = (0..s.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = exact_transport_matrix(&d, &s, PolygonSplit::CentroidFan).mul_vec(&c);
            let b = exact_transport_matrix(&d, &s, PolygonSplit::VertexFan).mul_vec(&c);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn interior_patch_of_ones_integrates_to_its_area() {
        let s = p1(8);
        let map = CharMap::new(interpolate_velocity_p1(&s, sinsin_velocity).unwrap(), 1.0 / 64.0, 0.2).unwrap();
        let d = decompose(&s.mesh, &map).unwrap();
        let ones = interpolate(&s, |_| 1.0);
        let b = composite_term_exact(&d, &ones, &s).unwrap();
        // phi = 1 everywhere composes to 1, so the full sum is the domain area
        let total: f64 = b.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    /// `||phi o X_1h||^2` integrated piecewise on the decomposition.
    fn composed_l2_sq(d: &CompositeDecomposition, phi: &FeFunction) -> f64 {
        let s = &phi.space;
        let rule = rule_of_degree(2 * s.degree).unwrap();
        let mut acc = 0.0;
        for ed in &d.elements {
            for p in &ed.pieces {
                for_each_polygon_node(&p.polygon, &rule, PolygonSplit::CentroidFan, |x, w| {
                    let y = ed.map.apply(x);
                    let v = phi.eval(p.source, y);
                    acc += w * v * v;
                });
            }
        }
        acc
    }

    #[test]
    fn composition_is_nearly_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = FeSpace::build(Arc::new(unit_square_mesh(8).unwrap()), 2).unwrap();
        let p1s = FeSpace::build(Arc::clone(&s.mesh), 1).unwrap();
        let dt = 1.0 / 32.0;
        let map = CharMap::new(interpolate_velocity_p1(&p1s, sinsin_velocity).unwrap(), dt, 0.2).unwrap();
        let d = decompose(&s.mesh, &map).unwrap();
        let m = assemble_mass(&s);
        let c = 4.0 * map.seminorm_w1inf;
        for _ in 0..5 {
            let mut phi = s.zero_function();
            phi.coeffs.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let lhs = composed_l2_sq(&d, &phi).sqrt();
            let rhs = (1.0 + c * dt) * m.quadratic_form(&phi.coeffs).sqrt();
            assert!(lhs <= rhs, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn quadrature_feet_outside_are_dropped() {
        // rigid rotation pushes boundary nodes out of the unit square corners
        let s = FeSpace::build(Arc::new(unit_square_mesh(4).unwrap()), 2).unwrap();
        let u = |p: Point| Point::new(-(p.y - 0.5), p.x - 0.5) * 4.0;
        let phi = interpolate(&s, |_| 1.0);
        let b = composite_term_quadrature(&s, &u, 0.05, &phi, &seven_point_rule());
        assert!(b.iter().all(|v| v.is_finite()));
        assert!(b.iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn decomposition_dump_lists_every_piece() {
        let s = p1(2);
        let map = CharMap::new(interpolate_velocity_p1(&s, |_| Point::default()).unwrap(), 0.1, 0.2).unwrap();
        let d = decompose(&s.mesh, &map).unwrap();
        let mut buf = Vec::new();
        d.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), d.num_pieces());
        let first: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], "0");
        assert_eq!(first.len(), 3 + 2 * 3);
    }
}
