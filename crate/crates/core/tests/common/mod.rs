//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use lgfem::fe_space::{basis_values, FeFunction, FeSpace};
use lgfem::geometry::{barycentric, Point};
use lgfem::quadrature::rule_of_degree;

/// `a! b! / (a + b + 2)!`: integral of `x^a y^b` over the reference triangle.
pub fn monomial_integral(a: u32, b: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(a) * fact(b) / fact(a + b + 2)
}

/// Brute-force `(B c)_i = integral (phi_c o X_1h) phi_i` by subdividing every
/// element into `m * m` sub-triangles, refining those whose sampled feet lie
/// in different elements `max_depth` more times, and evaluating the
/// composite pointwise (foot by the element-local P1 velocity, source element
/// by point location) at the nodes of the degree-6 rule.
pub struct CompositeOracle {
    pub space: std::sync::Arc<FeSpace>,
    pub velocity: [FeFunction; 2],
    pub dt: f64,
    pub m: usize,
    pub max_depth: usize,
}

impl CompositeOracle {
    fn foot(&self, e: usize, p: Point) -> (Point, Option<usize>) {
        let u = Point::new(self.velocity[0].eval(e, p), self.velocity[1].eval(e, p));
        let f = p - u * self.dt;
        (f, self.space.mesh.locate(f, e))
    }

    /// Dense operator, `ndofs x ndofs`.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.space.ndofs();
        let mut b = vec![vec![0.0; n]; n];
        let rule = rule_of_degree(6).unwrap();
        let mesh = &self.space.mesh;
        for e in 0..mesh.num_elements() {
            let tri = mesh.triangle(e);
            let mut local: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let at = |i: usize, j: usize| {
                let (s, t) = (i as f64 / self.m as f64, j as f64 / self.m as f64);
                tri[0] + (tri[1] - tri[0]) * s + (tri[2] - tri[0]) * t
            };
            for i in 0..self.m {
                for j in 0..self.m - i {
                    self.leaf_or_split(e, [at(i, j), at(i + 1, j), at(i, j + 1)], 0, &rule, &mut local);
                    if i + j + 1 < self.m {
                        self.leaf_or_split(e, [at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)], 0, &rule, &mut local);
                    }
                }
            }
            let dofs0 = self.space.element_dofs(e);
            let nloc = self.space.nloc();
            for (l, block) in local {
                let dofs_l = self.space.element_dofs(l);
                for a in 0..nloc {
                    for c in 0..nloc {
                        b[dofs0[a]][dofs_l[c]] += block[a * nloc + c];
                    }
                }
            }
        }
        b
    }

    fn leaf_or_split(
        &self,
        e: usize,
        t: [Point; 3],
        depth: usize,
        rule: &lgfem::quadrature::TriangleRule,
        local: &mut BTreeMap<usize, Vec<f64>>,
    ) {
        let mid = |a: Point, b: Point| (a + b) * 0.5;
        let (m01, m12, m20) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[2], t[0]));
        if depth < self.max_depth {
            let centroid = (t[0] + t[1] + t[2]) * (1.0 / 3.0);
            let first = self.foot(e, t[0]).1;
            let straddles = [t[1], t[2], m01, m12, m20, centroid]
                .iter()
                .any(|&p| self.foot(e, p).1 != first);
            if straddles {
                for child in [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]] {
                    self.leaf_or_split(e, child, depth + 1, rule, local);
                }
                return;
            }
        }
        let area = 0.5 * ((t[1] - t[0]).cross(t[2] - t[0])).abs();
        let k = self.space.degree;
        let nloc = self.space.nloc();
        let tri0 = self.space.mesh.triangle(e);
        let mut psi = [0.0; 6];
        let mut phi = [0.0; 6];
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let p = t[0] * l[0] + t[1] * l[1] + t[2] * l[2];
            let (f, src) = self.foot(e, p);
            let Some(src) = src else { continue };
            basis_values(k, &barycentric(&tri0, p), &mut psi);
            basis_values(k, &barycentric(&self.space.mesh.triangle(src), f), &mut phi);
            let block = local.entry(src).or_insert_with(|| vec![0.0; nloc * nloc]);
            for a in 0..nloc {
                for c in 0..nloc {
                    block[a * nloc + c] += area * w * psi[a] * phi[c];
                }
            }
        }
    }
}

pub fn dense_mul(b: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    b.iter().map(|row| row.iter().zip(x).map(|(a, c)| a * c).sum()).collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}
