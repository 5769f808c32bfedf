//! Continuous P1/P2 Lagrange spaces with homogeneous Dirichlet constraints,
//! nodal interpolation and the Poisson (stiffness-orthogonal) projection.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{barycentric, Point};
use crate::linalg::{self, CgSettings};
use crate::mesh::{sorted_pair, Mesh};
use crate::quadrature::{map_point, rule_of_degree};

/// Local edge `j` of a triangle joins local vertices `LOCAL_EDGES[j]`; its
/// midpoint is local DOF `3 + j` in the P2 element.
pub const LOCAL_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Per-element data for evaluating barycentric-based bases.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub tri: [Point; 3],
    pub area: f64,
    pub grad_lambda: [Point; 3],
}

impl ElementGeometry {
    pub fn new(tri: [Point; 3]) -> Self {
        let twice = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
        let grad_lambda = std::array::from_fn(|i| {
            let b = tri[(i + 1) % 3];
            let c = tri[(i + 2) % 3];
            Point::new((b.y - c.y) / twice, (c.x - b.x) / twice)
        });
        ElementGeometry {
            tri,
            area: 0.5 * twice,
            grad_lambda,
        }
    }

    pub fn lambda(&self, p: Point) -> [f64; 3] {
        barycentric(&self.tri, p)
    }
}

/// Values of the local Lagrange basis of degree `k` at barycentric point `l`.
#[inline]
pub fn basis_values(k: usize, l: &[f64; 3], out: &mut [f64]) {
    match k {
        1 => out[..3].copy_from_slice(l),
        _ => {
            for i in 0..3 {
                out[i] = l[i] * (2.0 * l[i] - 1.0);
            }
            for (j, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                out[3 + j] = 4.0 * l[a] * l[b];
            }
        }
    }
}

/// Gradients of the local basis of degree `k` at barycentric point `l`.
#[inline]
pub fn basis_grads(k: usize, l: &[f64; 3], gl: &[Point; 3], out: &mut [Point]) {
    match k {
        1 => out[..3].copy_from_slice(gl),
        _ => {
            for i in 0..3 {
                out[i] = gl[i] * (4.0 * l[i] - 1.0);
            }
            for (j, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                out[3 + j] = (gl[b] * l[a] + gl[a] * l[b]) * 4.0;
            }
        }
    }
}

/// Lagrange finite-element space of degree 1 or 2 over a mesh.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    pub dof_coords: Vec<Point>,
    element_dofs: Vec<usize>,
    pub dirichlet_mask: Vec<bool>,
}

impl FeSpace {
    /// Vertex DOFs come first (numbered as the vertices), followed for k = 2
    /// by one DOF per edge in ascending order of the sorted vertex pair.
    pub fn build(mesh: Arc<Mesh>, k: usize) -> Result<Arc<Self>> {
        if k != 1 && k != 2 {
            return Err(Error::InvalidArgument(format!(
                "element degree must be 1 or 2, got {k}"
            )));
        }
        let mut dof_coords = mesh.vertices.clone();
        let mut dirichlet_mask = mesh.boundary_vertex.clone();
        let nloc = if k == 1 { 3 } else { 6 };
        let mut element_dofs = Vec::with_capacity(nloc * mesh.num_elements());

        let mut edge_dof: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        if k == 2 {
            // an edge is on the boundary iff exactly one element uses it
            let mut uses: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for t in &mesh.elements {
                for &(a, b) in &LOCAL_EDGES {
                    *uses.entry(sorted_pair(t[a], t[b])).or_default() += 1;
                }
            }
            for (&(a, b), &count) in &uses {
                edge_dof.insert((a, b), dof_coords.len());
                dof_coords.push((mesh.vertices[a] + mesh.vertices[b]) * 0.5);
                dirichlet_mask.push(count == 1);
            }
        }
        for t in &mesh.elements {
            element_dofs.extend_from_slice(t);
            if k == 2 {
                for &(a, b) in &LOCAL_EDGES {
                    element_dofs.push(edge_dof[&sorted_pair(t[a], t[b])]);
                }
            }
        }
        Ok(Arc::new(FeSpace {
            mesh,
            degree: k,
            dof_coords,
            element_dofs,
            dirichlet_mask,
        }))
    }

    pub fn ndofs(&self) -> usize {
        self.dof_coords.len()
    }

    /// Local DOFs per element: 3 for P1, 6 for P2.
    pub fn nloc(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        let n = self.nloc();
        &self.element_dofs[e * n..(e + 1) * n]
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry {
        ElementGeometry::new(self.mesh.triangle(e))
    }

    pub fn zero_function(self: &Arc<Self>) -> FeFunction {
        FeFunction {
            space: Arc::clone(self),
            coeffs: vec![0.0; self.ndofs()],
        }
    }
}

/// Coefficient vector over a space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.ndofs() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                space.ndofs(),
                coeffs.len()
            )));
        }
        Ok(FeFunction { space, coeffs })
    }

    /// Value at `p`, which the caller guarantees lies in the closed element.
    pub fn eval(&self, element: usize, p: Point) -> f64 {
        let geo = self.space.geometry(element);
        self.eval_at_lambda(element, &geo.lambda(p))
    }

    pub fn eval_at_lambda(&self, element: usize, lambda: &[f64; 3]) -> f64 {
        let mut phi = [0.0; 6];
        basis_values(self.space.degree, lambda, &mut phi);
        self.space
            .element_dofs(element)
            .iter()
            .zip(&phi)
            .map(|(&d, v)| self.coeffs[d] * v)
            .sum()
    }

    pub fn eval_grad(&self, element: usize, p: Point) -> Point {
        let geo = self.space.geometry(element);
        let mut g = [Point::default(); 6];
        basis_grads(self.space.degree, &geo.lambda(p), &geo.grad_lambda, &mut g);
        self.space
            .element_dofs(element)
            .iter()
            .zip(&g)
            .fold(Point::default(), |acc, (&d, gi)| acc + *gi * self.coeffs[d])
    }
}

/// Nodal interpolant: `coeffs[i] = g(dof_coords[i])`, boundary included.
pub fn interpolate(space: &Arc<FeSpace>, g: impl Fn(Point) -> f64) -> FeFunction {
    FeFunction {
        space: Arc::clone(space),
        coeffs: space.dof_coords.iter().map(|&p| g(p)).collect(),
    }
}

/// Componentwise P1 interpolant of a velocity field, on a P1 space.
pub fn interpolate_velocity_p1(
    p1_space: &Arc<FeSpace>,
    u: impl Fn(Point) -> Point,
) -> Result<[FeFunction; 2]> {
    if p1_space.degree != 1 {
        return Err(Error::InvalidArgument(
            "velocity interpolation needs a P1 space".into(),
        ));
    }
    let values: Vec<Point> = p1_space.dof_coords.iter().map(|&p| u(p)).collect();
    Ok([
        FeFunction {
            space: Arc::clone(p1_space),
            coeffs: values.iter().map(|v| v.x).collect(),
        },
        FeFunction {
            space: Arc::clone(p1_space),
            coeffs: values.iter().map(|v| v.y).collect(),
        },
    ])
}

/// Step for the central-difference gradient fallback.
pub const FD_GRADIENT_STEP: f64 = 1e-6;

pub fn fd_gradient(g: &dyn Fn(Point) -> f64, p: Point) -> Point {
    let h = FD_GRADIENT_STEP;
    Point::new(
        (g(Point::new(p.x + h, p.y)) - g(Point::new(p.x - h, p.y))) / (2.0 * h),
        (g(Point::new(p.x, p.y + h)) - g(Point::new(p.x, p.y - h))) / (2.0 * h),
    )
}

/// Poisson projection: the `v_h` with zero Dirichlet values such that
/// `(grad(v_h - g), grad psi_h) = 0` for all `psi_h`. The right-hand side
/// `(grad g, grad phi_i)` is integrated with the degree-`data_rule_degree`
/// rule using `grad_g`, or central differences of `g` when absent.
pub fn poisson_projection(
    space: &Arc<FeSpace>,
    g: &dyn Fn(Point) -> f64,
    grad_g: Option<&dyn Fn(Point) -> Point>,
    data_rule_degree: usize,
    cg: &CgSettings,
) -> Result<FeFunction> {
    let rule = rule_of_degree(data_rule_degree)?;
    let nloc = space.nloc();
    let mut rhs = vec![0.0; space.ndofs()];
    let mut grads = [Point::default(); 6];
    for e in 0..space.mesh.num_elements() {
        let geo = space.geometry(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let p = map_point(&geo.tri, l);
            let dg = match grad_g {
                Some(f) => f(p),
                None => fd_gradient(g, p),
            };
            basis_grads(space.degree, l, &geo.grad_lambda, &mut grads);
            for (i, &d) in space.element_dofs(e).iter().enumerate().take(nloc) {
                rhs[d] += geo.area * w * dg.dot(grads[i]);
            }
        }
    }
    let stiffness = linalg::assemble_stiffness(space);
    let (a, b) = linalg::apply_dirichlet(&stiffness, &rhs, &space.dirichlet_mask);
    let x0 = vec![0.0; space.ndofs()];
    let out = linalg::cg_solve(&a, &b, &x0, cg)?;
    FeFunction::new(Arc::clone(space), out.x)
}
