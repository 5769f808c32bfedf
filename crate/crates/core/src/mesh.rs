//! Conforming triangulations: structured generators, adjacency, point
//! location and a background grid for candidate searches.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{barycentric, orient, BoundingBox, Point, TOL_GEOM};

/// Triangulation of a polygonal domain. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
    /// `neighbors[e][i]` is the element across the edge opposite local vertex `i`.
    pub neighbors: Vec<[Option<usize>; 3]>,
    /// Maximum over elements of the longest edge.
    pub h_max: f64,
    grid: BackgroundGrid,
}

impl Mesh {
    /// Builds a mesh from raw parts, computing adjacency. Fails on clockwise
    /// or degenerate elements and on edges shared inconsistently.
    pub fn new(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary_vertex: Vec<bool>,
    ) -> Result<Self> {
        if boundary_vertex.len() != vertices.len() {
            return Err(Error::InvalidArgument(
                "boundary flag count differs from vertex count".into(),
            ));
        }
        for (e, tri) in elements.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "element {e} references a missing vertex"
                )));
            }
            let area2 = orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area2 <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "element {e} is not counterclockwise (2*area = {area2:e})"
                )));
            }
        }
        let neighbors = build_neighbors(&elements)?;
        let h_max = elements
            .iter()
            .map(|t| {
                (0..3)
                    .map(|i| (vertices[t[(i + 1) % 3]] - vertices[t[i]]).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let grid = BackgroundGrid::build(&vertices, &elements);
        Ok(Mesh {
            vertices,
            elements,
            boundary_vertex,
            neighbors,
            h_max,
            grid,
        })
    }

    /// Like [`Mesh::new`] but flags every vertex on an unshared edge as boundary.
    pub fn with_derived_boundary(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Self> {
        let mut flags = vec![false; vertices.len()];
        let mut mesh = Mesh::new(vertices, elements, flags.clone())?;
        for (e, nb) in mesh.neighbors.iter().enumerate() {
            for i in 0..3 {
                if nb[i].is_none() {
                    let t = mesh.elements[e];
                    flags[t[(i + 1) % 3]] = true;
                    flags[t[(i + 2) % 3]] = true;
                }
            }
        }
        mesh.boundary_vertex = flags;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn triangle(&self, e: usize) -> [Point; 3] {
        let t = self.elements[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangle(e);
        0.5 * orient(a, b, c)
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.triangle(e);
        (a + b + c) * (1.0 / 3.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.area(e)).sum()
    }

    /// Edges as sorted vertex pairs, each listed once, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .elements
            .iter()
            .flat_map(|t| (0..3).map(move |i| sorted_pair(t[i], t[(i + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    fn contains(&self, e: usize, p: Point) -> bool {
        barycentric(&self.triangle(e), p)
            .iter()
            .all(|&l| l >= -TOL_GEOM)
    }

    /// Finds an element whose closed triangle contains `p`, walking through
    /// neighbors from `hint`. When several elements contain `p` (edges and
    /// vertices) the smallest index wins. Returns `None` outside the mesh.
    pub fn locate(&self, p: Point, hint: usize) -> Option<usize> {
        let found = self.walk(p, hint).or_else(|| {
            let probe = BoundingBox { min: p, max: p }.inflate(TOL_GEOM);
            self.elements_overlapping_box(&probe)
                .into_iter()
                .find(|&e| self.contains(e, p))
        })?;

        // Tie-break: the containing elements around `p` are edge-connected.
        let mut best = found;
        let mut stack = vec![found];
        let mut seen = vec![found];
        while let Some(e) = stack.pop() {
            for n in self.neighbors[e].iter().flatten() {
                if !seen.contains(n) && self.contains(*n, p) {
                    seen.push(*n);
                    stack.push(*n);
                    best = best.min(*n);
                }
            }
        }
        Some(best)
    }

    fn walk(&self, p: Point, hint: usize) -> Option<usize> {
        let mut e = hint;
        let max_steps = 4 * self.num_elements() + 16;
        for _ in 0..max_steps {
            let bc = barycentric(&self.triangle(e), p);
            let (imin, lmin) = bc
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, l)| if l < acc.1 { (i, l) } else { acc });
            if lmin >= -TOL_GEOM {
                return Some(e);
            }
            e = self.neighbors[e][imin]?;
        }
        None
    }

    /// Elements whose bounding box meets `bbox`; a superset of the elements
    /// intersecting it, sorted ascending.
    pub fn elements_overlapping_box(&self, bbox: &BoundingBox) -> Vec<usize> {
        self.grid.query(bbox, |e| {
            BoundingBox::of_points(&self.triangle(e)).intersects(bbox)
        })
    }

    /// Writes the text format: `NV NE`, then `x y b` per vertex, then `i j k`
    /// per element. Coordinates carry 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.num_vertices(), self.num_elements())?;
        for (p, &b) in self.vertices.iter().zip(&self.boundary_vertex) {
            writeln!(w, "{:.16e} {:.16e} {}", p.x, p.y, u8::from(b))?;
        }
        for t in &self.elements {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("unexpected end of file reading {what}")))?
                .map_err(Error::from)
        };
        let header = next_line("header")?;
        let counts: Vec<usize> = parse_fields(&header, 2)?;
        let (nv, ne) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next_line("vertex")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Format(format!("bad vertex line {line:?}")));
            }
            let x: f64 = f[0].parse().map_err(|_| Error::Format(line.clone()))?;
            let y: f64 = f[1].parse().map_err(|_| Error::Format(line.clone()))?;
            let b = match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(Error::Format(format!("bad boundary flag in {line:?}"))),
            };
            vertices.push(Point::new(x, y));
            flags.push(b);
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = next_line("element")?;
            let v: Vec<usize> = parse_fields(&line, 3)?;
            elements.push([v[0], v[1], v[2]]);
        }
        Mesh::new(vertices, elements, flags)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
    let v: Vec<T> = line
        .split_whitespace()
        .map(|s| s.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("cannot parse {line:?}")))?;
    if v.len() != n {
        return Err(Error::Format(format!("expected {n} fields in {line:?}")));
    }
    Ok(v)
}

#[inline]
pub(crate) fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn build_neighbors(elements: &[[usize; 3]]) -> Result<Vec<[Option<usize>; 3]>> {
    // directed edge (a, b) -> (element, local index of the opposite vertex)
    let mut half_edges: HashMap<(usize, usize), (usize, usize)> =
        HashMap::with_capacity(3 * elements.len());
    for (e, t) in elements.iter().enumerate() {
        for i in 0..3 {
            let key = (t[(i + 1) % 3], t[(i + 2) % 3]);
            if half_edges.insert(key, (e, i)).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "edge {key:?} appears twice with the same orientation"
                )));
            }
        }
    }
    let mut neighbors = vec![[None; 3]; elements.len()];
    for (&(a, b), &(e, i)) in &half_edges {
        if let Some(&(n, _)) = half_edges.get(&(b, a)) {
            neighbors[e][i] = Some(n);
        }
    }
    Ok(neighbors)
}

/// Uniform bucket grid over the mesh bounding box; each element is filed in
/// every cell its bounding box touches.
#[derive(Debug, Clone)]
struct BackgroundGrid {
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl BackgroundGrid {
    fn build(vertices: &[Point], elements: &[[usize; 3]]) -> Self {
        let bbox = BoundingBox::of_points(vertices);
        let side = ((elements.len() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (side, side);
        let mut grid = BackgroundGrid {
            bbox,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        };
        for (e, t) in elements.iter().enumerate() {
            let tb = BoundingBox::of_points(&[vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
            if let Some((i0, i1, j0, j1)) = grid.cell_range(&tb) {
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        grid.cells[j * nx + i].push(e as u32);
                    }
                }
            }
        }
        grid
    }

    fn cell_range(&self, b: &BoundingBox) -> Option<(usize, usize, usize, usize)> {
        if !b.intersects(&self.bbox) {
            return None;
        }
        let w = (self.bbox.max.x - self.bbox.min.x).max(f64::MIN_POSITIVE);
        let h = (self.bbox.max.y - self.bbox.min.y).max(f64::MIN_POSITIVE);
        let cx = |x: f64| (((x - self.bbox.min.x) / w * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = |y: f64| (((y - self.bbox.min.y) / h * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        Some((cx(b.min.x), cx(b.max.x), cy(b.min.y), cy(b.max.y)))
    }

    fn query(&self, b: &BoundingBox, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some((i0, i1, j0, j1)) = self.cell_range(b) {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    out.extend(self.cells[j * self.nx + i].iter().map(|&e| e as usize));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&e| keep(e));
        out
    }
}

/// `(N+1) x (N+1)` lattice on the unit square, each cell split along its
/// lower-left to upper-right diagonal.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("square mesh needs N >= 1".into()));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(i as f64 / n as f64, j as f64 / n as f64));
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    Mesh::new(vertices, elements, boundary)
}

/// Ring-structured triangulation of the regular `N`-gon inscribed in the unit
/// circle. Concentric rings are spaced about `2*pi/N` apart; ring `j` carries
/// roughly `N*j/R` vertices and adjacent rings are stitched by an
/// angle-ordered merge. The interior is then relaxed by Delaunay flips and
/// Laplacian smoothing; boundary vertices stay on the circle.
pub fn unit_disk_mesh(n: usize) -> Result<Mesh> {
    if n < 8 || !n.is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!(
            "disk mesh needs N >= 8 divisible by 4, got {n}"
        )));
    }
    let rings = ((n as f64 / (2.0 * PI)).round() as usize).max(1);
    let mut vertices = vec![Point::new(0.0, 0.0)];
    let mut boundary = vec![false];
    // (first vertex index, count, angle offset) per ring
    let mut ring_info = vec![(0usize, 1usize, 0.0f64)];
    for j in 1..=rings {
        let count = if j == rings {
            n
        } else {
            ((n * j) as f64 / rings as f64).round().max(3.0) as usize
        };
        let r = j as f64 / rings as f64;
        // stagger alternate rings by half a spacing
        let offset = if j % 2 == 0 || j == rings { 0.0 } else { PI / count as f64 };
        let start = vertices.len();
        for k in 0..count {
            let a = offset + 2.0 * PI * k as f64 / count as f64;
            let (s, c) = a.sin_cos();
            vertices.push(Point::new(r * c, r * s));
            boundary.push(j == rings);
        }
        ring_info.push((start, count, offset));
    }

    let mut elements = Vec::new();
    let (s1, c1, _) = ring_info[1];
    for k in 0..c1 {
        elements.push([0, s1 + k, s1 + (k + 1) % c1]);
    }
    for j in 2..=rings {
        let (si, m, oi) = ring_info[j - 1];
        let (so, nn, oo) = ring_info[j];
        let ang_in = |i: usize| oi + 2.0 * PI * i as f64 / m as f64;
        let ang_out = |k: usize| oo + 2.0 * PI * k as f64 / nn as f64;
        // start both walks at the vertices nearest angle zero
        let (mut i, mut k) = (0usize, 0usize);
        while i < m || k < nn {
            let adv_outer = if i == m {
                true
            } else if k == nn {
                false
            } else {
                ang_out(k + 1) <= ang_in(i + 1)
            };
            let vi = si + i % m;
            let vo = so + k % nn;
            if adv_outer {
                elements.push([vi, vo, so + (k + 1) % nn]);
                k += 1;
            } else {
                elements.push([vi, vo, si + (i + 1) % m]);
                i += 1;
            }
        }
    }
    // the merge may emit clockwise triples where offsets interleave; fix them
    for t in elements.iter_mut() {
        if orient(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    delaunay_flips(&vertices, &mut elements);
    smooth_interior(&mut vertices, &elements, &boundary, DISK_SMOOTHING_SWEEPS);
    delaunay_flips(&vertices, &mut elements);
    Mesh::new(vertices, elements, boundary)
}

/// Laplacian sweeps applied to the interior vertices of the disk mesh. The
/// raw ring layout is strongly aligned with the circumferential direction;
/// relaxing it gives the isotropic element shapes of an unstructured mesher.
pub const DISK_SMOOTHING_SWEEPS: usize = 10;

/// Moves each interior vertex to the mean of its edge neighbours, `sweeps`
/// times (Jacobi style, so the result does not depend on vertex order).
fn smooth_interior(vertices: &mut [Point], elements: &[[usize; 3]], boundary: &[bool], sweeps: usize) {
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for t in elements {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    for _ in 0..sweeps {
        let old = vertices.to_vec();
        for (v, nb) in adjacency.iter().enumerate() {
            if boundary[v] || nb.is_empty() {
                continue;
            }
            let sum = nb.iter().fold(Point::default(), |acc, &w| acc + old[w]);
            vertices[v] = sum * (1.0 / nb.len() as f64);
        }
    }
}

/// `> 0` when `d` lies strictly inside the circumcircle of counterclockwise `abc`.
fn in_circle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay)
}

/// Lawson flips until every interior edge is locally Delaunay. Near-cocircular
/// quadrilaterals (common between rings) are left alone.
fn delaunay_flips(vertices: &[Point], elements: &mut [[usize; 3]]) {
    loop {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, t) in elements.iter().enumerate() {
            for i in 0..3 {
                owner.insert((t[i], t[(i + 1) % 3]), e);
            }
        }
        let mut touched = vec![false; elements.len()];
        let mut flipped = false;
        for e in 0..elements.len() {
            for i in 0..3 {
                if touched[e] {
                    break;
                }
                let [a, b, c] = [elements[e][i], elements[e][(i + 1) % 3], elements[e][(i + 2) % 3]];
                let Some(&f) = owner.get(&(b, a)) else { continue };
                if touched[f] {
                    continue;
                }
                let d = elements[f].iter().copied().find(|&v| v != a && v != b).expect("triangle");
                let (pa, pb, pc, pd) = (vertices[a], vertices[b], vertices[c], vertices[d]);
                let scale = (pa - pb).norm().powi(4);
                if in_circle(pa, pb, pc, pd) <= 1e-9 * scale {
                    continue;
                }
                if orient(pc, pa, pd) <= 0.0 || orient(pd, pb, pc) <= 0.0 {
                    continue;
                }
                elements[e] = [c, a, d];
                elements[f] = [d, b, c];
                touched[e] = true;
                touched[f] = true;
                flipped = true;
            }
        }
        if !flipped {
            break;
        }
    }
}
