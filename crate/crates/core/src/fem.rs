//! Structured meshes with linear "hat" basis functions.
//!
//! Meshes are uniform subdivisions of an interval or an axis-aligned
//! rectangle; rectangle cells are split into two triangles along the
//! lower-left to upper-right diagonal so runs are deterministic. Nodes are
//! ordered lexicographically by (y, x). Element integrals for the P1 mass
//! and stiffness matrices are closed-form, no quadrature.

use std::io::Write;

use nalgebra::DVector;

use crate::linalg::SparseOperator;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("degenerate domain: zero length or area")]
    DegenerateDomain,
    #[error("cells_per_axis must be at least 1 on every axis")]
    ZeroCells,
    #[error("point {index} at ({x}, {y}) lies outside the mesh")]
    PointOutsideDomain { index: usize, x: f64, y: f64 },
    #[error("operation requires a {expected} mesh")]
    WrongMeshKind { expected: &'static str },
}

/// Computational domain: an interval or an axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Self {
        Domain::Interval { a, b }
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Domain::Rectangle { x0, x1, y0, y1 }
    }

    /// Square `[0, side]^2`.
    pub fn square(side: f64) -> Self {
        Domain::rectangle(0.0, side, 0.0, side)
    }

    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Connectivity {
    Intervals(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

/// Structured triangulation carrying node coordinates and P1 connectivity.
#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Domain,
    cells_per_axis: [usize; 2],
    nodes: Vec<[f64; 2]>,
    connectivity: Connectivity,
    h: f64,
}

/// Build a uniform mesh of the domain.
///
/// In 1D `cells_per_axis = [c]` yields `c + 1` nodes; in 2D `[cx, cy]`
/// yields `(cx + 1)(cy + 1)` nodes and `2 cx cy` triangles.
pub fn build_mesh(domain: Domain, cells_per_axis: &[usize]) -> Result<Mesh, MeshError> {
    match domain {
        Domain::Interval { a, b } => {
            if !(b > a) {
                return Err(MeshError::DegenerateDomain);
            }
            let &[c] = cells_per_axis else {
                return Err(MeshError::ZeroCells);
            };
            if c == 0 {
                return Err(MeshError::ZeroCells);
            }
            let dx = (b - a) / c as f64;
            let nodes: Vec<[f64; 2]> = (0..=c).map(|i| [a + i as f64 * dx, 0.0]).collect();
            let cells: Vec<[usize; 2]> = (0..c).map(|i| [i, i + 1]).collect();
            Ok(Mesh {
                domain,
                cells_per_axis: [c, 1],
                nodes,
                connectivity: Connectivity::Intervals(cells),
                h: dx,
            })
        }
        Domain::Rectangle { x0, x1, y0, y1 } => {
            if !(x1 > x0) || !(y1 > y0) {
                return Err(MeshError::DegenerateDomain);
            }
            let &[cx, cy] = cells_per_axis else {
                return Err(MeshError::ZeroCells);
            };
            if cx == 0 || cy == 0 {
                return Err(MeshError::ZeroCells);
            }
            let dx = (x1 - x0) / cx as f64;
            let dy = (y1 - y0) / cy as f64;
            let mut nodes = Vec::with_capacity((cx + 1) * (cy + 1));
            for j in 0..=cy {
                for i in 0..=cx {
                    nodes.push([x0 + i as f64 * dx, y0 + j as f64 * dy]);
                }
            }
            let idx = |i: usize, j: usize| j * (cx + 1) + i;
            let mut tris = Vec::with_capacity(2 * cx * cy);
            for j in 0..cy {
                for i in 0..cx {
                    let (n00, n10) = (idx(i, j), idx(i + 1, j));
                    let (n01, n11) = (idx(i, j + 1), idx(i + 1, j + 1));
                    // split along the lower-left to upper-right diagonal
                    tris.push([n00, n10, n11]);
                    tris.push([n00, n11, n01]);
                }
            }
            Ok(Mesh {
                domain,
                cells_per_axis: [cx, cy],
                nodes,
                connectivity: Connectivity::Triangles(tris),
                h: (dx * dx + dy * dy).sqrt(),
            })
        }
    }
}

impl Mesh {
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        match self.connectivity {
            Connectivity::Intervals(_) => 1,
            Connectivity::Triangles(_) => 2,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        match &self.connectivity {
            Connectivity::Intervals(c) => c.len(),
            Connectivity::Triangles(c) => c.len(),
        }
    }

    pub fn cells_per_axis(&self) -> [usize; 2] {
        self.cells_per_axis
    }

    /// Mesh parameter: maximal cell side length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn connectivity(&self) -> &Connectivity {
        &self.connectivity
    }

    /// Indices of nodes on the domain boundary.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        match self.connectivity {
            Connectivity::Intervals(_) => vec![0, self.n_nodes() - 1],
            Connectivity::Triangles(_) => {
                let [cx, cy] = self.cells_per_axis;
                let idx = |i: usize, j: usize| j * (cx + 1) + i;
                let mut out = Vec::new();
                for j in 0..=cy {
                    for i in 0..=cx {
                        if i == 0 || i == cx || j == 0 || j == cy {
                            out.push(idx(i, j));
                        }
                    }
                }
                out
            }
        }
    }

    /// Nearest mesh node to a point (pins observation locations to nodes).
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n[0] - x).powi(2) + (n[1] - y).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Columnar text format: node table then cell table.
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# nodes {} dim {}", self.n_nodes(), self.dim())?;
        writeln!(w, "# id x y")?;
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(w, "{} {} {}", i, n[0], n[1])?;
        }
        match &self.connectivity {
            Connectivity::Intervals(cells) => {
                writeln!(w, "# cells {} nodes_per_cell 2", cells.len())?;
                writeln!(w, "# id n0 n1")?;
                for (i, c) in cells.iter().enumerate() {
                    writeln!(w, "{} {} {}", i, c[0], c[1])?;
                }
            }
            Connectivity::Triangles(cells) => {
                writeln!(w, "# cells {} nodes_per_cell 3", cells.len())?;
                writeln!(w, "# id n0 n1 n2")?;
                for (i, c) in cells.iter().enumerate() {
                    writeln!(w, "{} {} {} {}", i, c[0], c[1], c[2])?;
                }
            }
        }
        Ok(())
    }
}

/// Mass matrix `M_ij = <phi_i, phi_j>`; symmetric positive definite.
pub fn assemble_mass(mesh: &Mesh) -> SparseOperator {
    let mut trips = Vec::new();
    match &mesh.connectivity {
        Connectivity::Intervals(cells) => {
            for c in cells {
                let len = mesh.nodes[c[1]][0] - mesh.nodes[c[0]][0];
                let m = len / 6.0;
                trips.push((c[0], c[0], 2.0 * m));
                trips.push((c[1], c[1], 2.0 * m));
                trips.push((c[0], c[1], m));
                trips.push((c[1], c[0], m));
            }
        }
        Connectivity::Triangles(cells) => {
            for c in cells {
                let area = triangle_area(mesh, c);
                let m = area / 12.0;
                for a in 0..3 {
                    for b in 0..3 {
                        let v = if a == b { 2.0 * m } else { m };
                        trips.push((c[a], c[b], v));
                    }
                }
            }
        }
    }
    let mut op = SparseOperator::from_triplets(mesh.n_nodes(), &trips);
    op.symmetrize();
    op
}

/// Stiffness matrix `A_ij = <grad phi_i, grad phi_j>` with unit coefficient;
/// diffusion coefficients are applied by the caller. Constants lie in the
/// null space under the natural (Neumann) boundary condition.
pub fn assemble_stiffness(mesh: &Mesh) -> SparseOperator {
    let mut trips = Vec::new();
    match &mesh.connectivity {
        Connectivity::Intervals(cells) => {
            for c in cells {
                let len = mesh.nodes[c[1]][0] - mesh.nodes[c[0]][0];
                let k = 1.0 / len;
                trips.push((c[0], c[0], k));
                trips.push((c[1], c[1], k));
                trips.push((c[0], c[1], -k));
                trips.push((c[1], c[0], -k));
            }
        }
        Connectivity::Triangles(cells) => {
            for c in cells {
                let p: Vec<[f64; 2]> = c.iter().map(|&i| mesh.nodes[i]).collect();
                let area = triangle_area(mesh, c);
                // gradient coefficients of the P1 barycentric basis
                let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
                let cc = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
                for a in 0..3 {
                    for d in 0..3 {
                        let v = (b[a] * b[d] + cc[a] * cc[d]) / (4.0 * area);
                        trips.push((c[a], c[d], v));
                    }
                }
            }
        }
    }
    let mut op = SparseOperator::from_triplets(mesh.n_nodes(), &trips);
    op.symmetrize();
    op
}

fn triangle_area(mesh: &Mesh, c: &[usize; 3]) -> f64 {
    let p0 = mesh.nodes[c[0]];
    let p1 = mesh.nodes[c[1]];
    let p2 = mesh.nodes[c[2]];
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs()
}

/// Sparse interpolation rows: one row of barycentric weights per point.
///
/// A row at a mesh node is the coordinate vector `e_j`; rows are nonnegative
/// and sum to one.
pub fn interpolation_rows(
    mesh: &Mesh,
    points: &[[f64; 2]],
) -> Result<Vec<Vec<(usize, f64)>>, MeshError> {
    let tol = 1e-9;
    let mut rows = Vec::with_capacity(points.len());
    match mesh.domain {
        Domain::Interval { a, b } => {
            let c = mesh.cells_per_axis[0];
            let dx = (b - a) / c as f64;
            for (pi, p) in points.iter().enumerate() {
                let x = p[0];
                let slack = tol * (1.0 + (b - a).abs());
                if x < a - slack || x > b + slack {
                    return Err(MeshError::PointOutsideDomain { index: pi, x, y: p[1] });
                }
                let t = ((x - a) / dx).clamp(0.0, c as f64 - 1e-12);
                let cell = (t.floor() as usize).min(c - 1);
                let xi = (((x - a) - cell as f64 * dx) / dx).clamp(0.0, 1.0);
                rows.push(weights_to_row(&[(cell, 1.0 - xi), (cell + 1, xi)]));
            }
        }
        Domain::Rectangle { x0, x1, y0, y1 } => {
            let [cx, cy] = mesh.cells_per_axis;
            let dx = (x1 - x0) / cx as f64;
            let dy = (y1 - y0) / cy as f64;
            let idx = |i: usize, j: usize| j * (cx + 1) + i;
            for (pi, p) in points.iter().enumerate() {
                let (x, y) = (p[0], p[1]);
                let sx = tol * (1.0 + (x1 - x0).abs());
                let sy = tol * (1.0 + (y1 - y0).abs());
                if x < x0 - sx || x > x1 + sx || y < y0 - sy || y > y1 + sy {
                    return Err(MeshError::PointOutsideDomain { index: pi, x, y });
                }
                let tx = ((x - x0) / dx).clamp(0.0, cx as f64 - 1e-12);
                let ty = ((y - y0) / dy).clamp(0.0, cy as f64 - 1e-12);
                let ci = (tx.floor() as usize).min(cx - 1);
                let cj = (ty.floor() as usize).min(cy - 1);
                let xi = (((x - x0) - ci as f64 * dx) / dx).clamp(0.0, 1.0);
                let eta = (((y - y0) - cj as f64 * dy) / dy).clamp(0.0, 1.0);
                let (n00, n10) = (idx(ci, cj), idx(ci + 1, cj));
                let (n01, n11) = (idx(ci, cj + 1), idx(ci + 1, cj + 1));
                let weights = if eta <= xi {
                    // lower triangle (n00, n10, n11)
                    [(n00, 1.0 - xi), (n10, xi - eta), (n11, eta)]
                } else {
                    // upper triangle (n00, n11, n01)
                    [(n00, 1.0 - eta), (n11, xi), (n01, eta - xi)]
                };
                rows.push(weights_to_row(&weights));
            }
        }
    }
    Ok(rows)
}

fn weights_to_row(weights: &[(usize, f64)]) -> Vec<(usize, f64)> {
    weights
        .iter()
        .filter(|(_, w)| w.abs() > 1e-14)
        .map(|&(i, w)| (i, w))
        .collect()
}

/// Replace boundary rows by identity rows with zero right-hand side, and
/// eliminate the matching columns so symmetry is preserved.
pub fn apply_dirichlet(
    op: &SparseOperator,
    rhs: &DVector<f64>,
    boundary_nodes: &[usize],
) -> (SparseOperator, DVector<f64>) {
    if boundary_nodes.is_empty() {
        return (op.clone(), rhs.clone());
    }
    let n = op.dim();
    let mut is_bc = vec![false; n];
    for &b in boundary_nodes {
        is_bc[b] = true;
    }
    let mut rhs_out = rhs.clone();
    let mut trips = Vec::with_capacity(op.nnz());
    for i in 0..n {
        if is_bc[i] {
            trips.push((i, i, 1.0));
            rhs_out[i] = 0.0;
            continue;
        }
        let (cols, vals) = op.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if !is_bc[j] {
                trips.push((i, j, v));
            }
            // eliminated boundary values are zero: no right-hand side shift
        }
    }
    (SparseOperator::from_triplets(n, &trips), rhs_out)
}
