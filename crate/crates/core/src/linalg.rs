//! Compressed-row sparse matrices, finite-element assembly and a
//! Jacobi-preconditioned conjugate gradient solver.

use crate::error::{Error, Result};
use crate::fe_space::{basis_grads, basis_values, FeSpace};
use crate::geometry::Point;
use crate::quadrature::{map_point, rule_of_degree};

/// Sparse matrix in compressed-row form with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds the matrix from `(row, col, value)` triplets, summing
    /// duplicates in input order so the result is bitwise reproducible.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: duplicates keep their input order
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (r, c, v) = triplets[t];
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, &v)| (i, j, v)))
            .collect();
        CsrMatrix::from_triplets(rows.len(), n_cols, &triplets)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, w) in y[..self.n_rows].iter_mut().zip(self.row_ptr.windows(2)) {
            *yi = self.row_dot(w[0], w[1], x);
        }
    }

    #[inline]
    fn row_dot(&self, start: usize, end: usize, x: &[f64]) -> f64 {
        let cols = &self.col_idx[start..end];
        let vals = &self.values[start..end];
        cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        x[..self.n_rows]
            .iter()
            .zip(self.row_ptr.windows(2))
            .map(|(xi, w)| xi * self.row_dot(w[0], w[1], x))
            .sum()
    }

    /// `a * self + b * other`, merging sparsity patterns.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        for i in 0..self.n_rows {
            let mut p = self.row(i).peekable();
            let mut q = other.row(i).peekable();
            loop {
                let next = match (p.peek(), q.peek()) {
                    (None, None) => break,
                    (Some(&(j, v)), None) => {
                        p.next();
                        (j, a * v)
                    }
                    (None, Some(&(j, w))) => {
                        q.next();
                        (j, b * w)
                    }
                    (Some(&(j, v)), Some(&(k, w))) => {
                        if j == k {
                            p.next();
                            q.next();
                            (j, a * v + b * w)
                        } else if j < k {
                            p.next();
                            (j, a * v)
                        } else {
                            q.next();
                            (k, b * w)
                        }
                    }
                };
                col_idx.push(next.0);
                values.push(next.1);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Assembles `sum_K local(K)` with the element's DOF map, visiting elements
/// in index order.
pub fn assemble_elementwise(
    space: &FeSpace,
    mut local: impl FnMut(usize, &mut [f64]),
) -> CsrMatrix {
    let nloc = space.nloc();
    let ne = space.mesh.num_elements();
    let mut triplets = Vec::with_capacity(ne * nloc * nloc);
    let mut block = vec![0.0; nloc * nloc];
    for e in 0..ne {
        block.iter_mut().for_each(|v| *v = 0.0);
        local(e, &mut block);
        let dofs = space.element_dofs(e);
        for i in 0..nloc {
            for j in 0..nloc {
                triplets.push((dofs[i], dofs[j], block[i * nloc + j]));
            }
        }
    }
    CsrMatrix::from_triplets(space.ndofs(), space.ndofs(), &triplets)
}

/// `M_ij = (phi_i, phi_j)`, exact with the degree-2k rule.
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    let k = space.degree;
    let nloc = space.nloc();
    let rule = rule_of_degree(2 * k).expect("degree 2k <= 4 is tabulated");
    let mut phi = [0.0; 6];
    assemble_elementwise(space, |e, block| {
        let area = space.mesh.area(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            basis_values(k, l, &mut phi);
            for i in 0..nloc {
                for j in 0..nloc {
                    block[i * nloc + j] += area * w * phi[i] * phi[j];
                }
            }
        }
    })
}

/// `A_ij = (grad phi_i, grad phi_j)`, exact with the degree-(2k-2) rule.
pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix {
    let k = space.degree;
    let nloc = space.nloc();
    let rule = rule_of_degree((2 * k).saturating_sub(2).max(1)).expect("tabulated");
    let mut grads = [Point::default(); 6];
    assemble_elementwise(space, |e, block| {
        let geo = space.geometry(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            basis_grads(k, l, &geo.grad_lambda, &mut grads);
            for i in 0..nloc {
                for j in 0..nloc {
                    block[i * nloc + j] += geo.area * w * grads[i].dot(grads[j]);
                }
            }
        }
    })
}

/// Load vector `(f, phi_i)` integrated with the degree-`rule_degree` rule.
pub fn assemble_load(space: &FeSpace, f: impl Fn(Point) -> f64, rule_degree: usize) -> Result<Vec<f64>> {
    let rule = rule_of_degree(rule_degree)?;
    let k = space.degree;
    let mut phi = [0.0; 6];
    let mut b = vec![0.0; space.ndofs()];
    for e in 0..space.mesh.num_elements() {
        let tri = space.mesh.triangle(e);
        let area = space.mesh.area(e);
        let dofs = space.element_dofs(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let fv = f(map_point(&tri, l)) * area * w;
            basis_values(k, l, &mut phi);
            for (i, &d) in dofs.iter().enumerate() {
                b[d] += fv * phi[i];
            }
        }
    }
    Ok(b)
}

/// Symmetric elimination of masked DOFs: their rows and columns are zeroed,
/// the diagonal set to one and the right-hand side set to zero.
pub fn apply_dirichlet(a: &CsrMatrix, b: &[f64], mask: &[bool]) -> (CsrMatrix, Vec<f64>) {
    assert_eq!(mask.len(), a.n_rows);
    let mut out = a.clone();
    for i in 0..a.n_rows {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[k];
            if mask[i] || mask[j] {
                out.values[k] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    // masked rows without a stored diagonal get one
    let missing: Vec<usize> = (0..a.n_rows).filter(|&i| mask[i] && !has_entry(a, i, i)).collect();
    if !missing.is_empty() {
        let extra: Vec<_> = missing.iter().map(|&i| (i, i, 1.0)).collect();
        out = out.linear_combination(1.0, &CsrMatrix::from_triplets(a.n_rows, a.n_cols, &extra), 1.0);
    }
    let rhs = b
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { 0.0 } else { v })
        .collect();
    (out, rhs)
}

fn has_entry(a: &CsrMatrix, i: usize, j: usize) -> bool {
    a.col_idx[a.row_ptr[i]..a.row_ptr[i + 1]].binary_search(&j).is_ok()
}

/// Zeroes the masked entries of a vector in place.
pub fn mask_vector(v: &mut [f64], mask: &[bool]) {
    for (x, &m) in v.iter_mut().zip(mask) {
        if m {
            *x = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgSettings {
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_factor: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings {
            rel_tol: 1e-12,
            max_iter_factor: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true relative residual `||b - A x|| / ||b||`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`, stopping when
/// `||b - A x|| <= rel_tol * ||b||`. The recurrence residual is confirmed
/// against the true residual and the iteration restarted if they disagree.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], x0: &[f64], settings: &CgSettings) -> Result<CgOutcome> {
    let n = a.n_rows;
    let max_iter = settings.max_iter_factor * n.max(1);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = settings.rel_tol * bnorm;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    loop {
        a.mul_vec_into(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let true_res = dot(&r, &r).sqrt();
        if true_res <= target {
            return Ok(CgOutcome {
                x,
                iterations,
                residual: true_res / bnorm,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NonConverged {
                iterations,
                residual: true_res / bnorm,
            });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::NonConverged {
                    iterations,
                    residual: dot(&r, &r).sqrt() / bnorm,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if dot(&r, &r).sqrt() <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::fe_space::FeSpace;
    use crate::geometry::Point;
    use crate::mesh::{unit_square_mesh, Mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn single_triangle(k: usize) -> Arc<FeSpace> {
        let m = Mesh::with_derived_boundary(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        FeSpace::build(Arc::new(m), k).unwrap()
    }

    #[test]
    fn reference_mass_matrix() {
        let m = assemble_mass(&single_triangle(1));
        for i in 0..3 {
            for j in 0..3 {
                let exact = if i == j { 0.5 / 6.0 } else { 0.5 / 12.0 };
                assert!((m.get(i, j) - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_stiffness_matrix() {
        let a = assemble_stiffness(&single_triangle(1));
        let exact = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - exact[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_total_and_stiffness_kernel() {
        for k in [1, 2] {
            let s = FeSpace::build(Arc::new(unit_square_mesh(5).unwrap()), k).unwrap();
            let m = assemble_mass(&s);
            assert!((m.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let a = assemble_stiffness(&s);
            let ones = vec![1.0; s.ndofs()];
            assert!(a.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
            let tol = 1e-12 * a.max_abs();
            for i in 0..s.ndofs() {
                for (j, v) in a.row(i) {
                    assert!((v - a.get(j, i)).abs() <= tol);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let x: Vec<f64> = (0..s.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(a.quadratic_form(&x) >= -1e-12);
                assert!(m.quadratic_form(&x) > 0.0);
            }
        }
    }

    /// Smallest eigenvalue of a small symmetric matrix via cyclic Jacobi rotations.
    fn min_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        for _ in 0..100 {
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn two_element_mass_is_spd() {
        let s = FeSpace::build(Arc::new(unit_square_mesh(1).unwrap()), 1).unwrap();
        let m = assemble_mass(&s).to_dense();
        let lmin = min_eigenvalue(m);
        assert!(lmin > 0.0, "{lmin}");
    }

    /// Direct dense assembly over all quadrature nodes, no sparsity or DOF maps.
    fn dense_mass(s: &FeSpace) -> Vec<Vec<f64>> {
        let n = s.ndofs();
        let mut d = vec![vec![0.0; n]; n];
        let rule = rule_of_degree(6).unwrap();
        for e in 0..s.mesh.num_elements() {
            let area = s.mesh.area(e);
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let mut phi = [0.0; 6];
                basis_values(s.degree, l, &mut phi);
                let dofs = s.element_dofs(e);
                for i in 0..s.nloc() {
                    for j in 0..s.nloc() {
                        d[dofs[i]][dofs[j]] += area * w * phi[i] * phi[j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn sparse_matches_dense_assembly() {
        for k in [1, 2] {
            let s = FeSpace::build(Arc::new(unit_square_mesh(2).unwrap()), k).unwrap();
            let sparse = assemble_mass(&s).to_dense();
            let dense = dense_mass(&s);
            for i in 0..s.ndofs() {
                for j in 0..s.ndofs() {
                    assert!((sparse[i][j] - dense[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cg_identity_and_zero() {
        let id = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let out = cg_solve(&id, &b, &[0.0; 5], &CgSettings::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b);
        let zero = cg_solve(&id, &[0.0; 5], &[1.0; 5], &CgSettings::default()).unwrap();
        assert!(zero.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_matches_dense_solve() {
        let a = CsrMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let b = [1.0, 2.0, 3.0];
        let x = cg_solve(&a, &b, &[0.0; 3], &CgSettings::default()).unwrap().x;
        // Cramer's rule; det = 4*(6-1) - 1*(2-0) = 18
        let exact = [
            (1.0 * 5.0 - 1.0 * (4.0 - 3.0)) / 18.0,
            (4.0 * (4.0 - 3.0) - 1.0 * (2.0 - 0.0)) / 18.0,
            (4.0 * (9.0 - 2.0) - 1.0 * (3.0 - 0.0) + 1.0 * (1.0 - 0.0)) / 18.0,
        ];
        for i in 0..3 {
            assert!((x[i] - exact[i]).abs() < 1e-10, "{x:?} vs {exact:?}");
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let err = cg_solve(&a, &[1.0, 1.0], &[0.0, 0.0], &CgSettings::default());
        assert!(matches!(err, Err(Error::NonConverged { .. })));
    }

    #[test]
    fn dirichlet_elimination() {
        let a = CsrMatrix::from_dense(&[
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        let b = vec![1.0, 1.0, 1.0];
        let (all, ball) = apply_dirichlet(&a, &b, &[true; 3]);
        assert_eq!(all.to_dense(), CsrMatrix::identity(3).to_dense());
        assert_eq!(ball, vec![0.0; 3]);
        let (none, bnone) = apply_dirichlet(&a, &b, &[false; 3]);
        assert_eq!(none, a);
        assert_eq!(bnone, b);
        let mask = [true, false, false];
        let (am, bm) = apply_dirichlet(&a, &b, &mask);
        let x = cg_solve(&am, &bm, &[0.0; 3], &CgSettings::default()).unwrap().x;
        assert_eq!(x[0], 0.0);
        assert_eq!(am.get(1, 0), 0.0);
    }

    #[test]
    fn linear_combination_merges_patterns() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let b = CsrMatrix::from_dense(&[vec![0.0, 3.0], vec![4.0, 5.0]]);
        let c = a.linear_combination(2.0, &b, -1.0);
        assert_eq!(c.to_dense(), vec![vec![2.0, -3.0], vec![-4.0, -1.0]]);
    }
}
