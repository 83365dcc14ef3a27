//! Piecewise linear surface finite elements on flat triangles.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{geometric_operators, lift, LevelSetSurface};
use crate::mesh::{triangle_frame, MeshId, SurfaceMesh};
use crate::{Error, Result, Vec3};

/// Nodal coefficients of a P1 function on one state of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    mesh: MeshId,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::DimensionMismatch { expected: mesh.node_count(), found: values.len() });
        }
        Ok(FeFunction { mesh: mesh.id(), values })
    }

    pub fn zeros(mesh: &SurfaceMesh) -> Self {
        FeFunction { mesh: mesh.id(), values: alloc::vec![0.0; mesh.node_count()] }
    }

    pub fn constant(mesh: &SurfaceMesh, c: f64) -> Self {
        FeFunction { mesh: mesh.id(), values: alloc::vec![c; mesh.node_count()] }
    }

    pub(crate) fn from_parts(mesh: MeshId, values: Vec<f64>) -> Self {
        FeFunction { mesh, values }
    }

    pub fn mesh(&self) -> MeshId {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fails unless the function belongs to `mesh`.
    pub fn check(&self, mesh: &SurfaceMesh) -> Result<()> {
        if self.mesh != mesh.id() {
            return Err(Error::GenerationMismatch { expected: mesh.id(), found: self.mesh });
        }
        Ok(())
    }

    /// `self − other`, both on the same mesh.
    pub fn sub(&self, other: &FeFunction) -> Result<FeFunction> {
        if self.mesh != other.mesh {
            return Err(Error::GenerationMismatch { expected: self.mesh, found: other.mesh });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(FeFunction { mesh: self.mesh, values })
    }

    pub fn scale(&self, s: f64) -> FeFunction {
        FeFunction { mesh: self.mesh, values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// Constant tangential gradient of the affine interpolant of `values` on a
/// flat triangle.
pub fn element_gradient(points: &[Vec3; 3], values: [f64; 3]) -> Result<Vec3> {
    let (normal, area) = triangle_frame(points).ok_or(Error::DegenerateTriangle { triangle: None })?;
    let g = shape_gradients(points, &normal, area);
    Ok(g[0] * values[0] + g[1] * values[1] + g[2] * values[2])
}

fn shape_gradients(p: &[Vec3; 3], normal: &Vec3, area: f64) -> [Vec3; 3] {
    let s = 1.0 / (2.0 * area);
    [normal.cross(&(p[2] - p[1])) * s, normal.cross(&(p[0] - p[2])) * s, normal.cross(&(p[1] - p[0])) * s]
}

/// Area, normal and shape-function gradients of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P1Element {
    pub area: f64,
    pub normal: Vec3,
    pub gradients: [Vec3; 3],
}

impl P1Element {
    pub fn gradient(&self, values: [f64; 3]) -> Vec3 {
        self.gradients[0] * values[0] + self.gradients[1] * values[1] + self.gradients[2] * values[2]
    }

    /// `vᵀ M_T w` with the exact P1 element mass matrix.
    pub fn mass_form(&self, v: [f64; 3], w: [f64; 3]) -> f64 {
        let sv = v[0] + v[1] + v[2];
        let sw = w[0] + w[1] + w[2];
        let diag = v[0] * w[0] + v[1] * w[1] + v[2] * w[2];
        self.area / 12.0 * (sv * sw + diag)
    }
}

pub fn p1_elements(mesh: &SurfaceMesh) -> Result<Vec<P1Element>> {
    (0..mesh.triangle_count())
        .map(|t| {
            let p = mesh.triangle_points(t);
            let (normal, area) = triangle_frame(&p).ok_or(Error::DegenerateTriangle { triangle: Some(t) })?;
            Ok(P1Element { area, normal, gradients: shape_gradients(&p, &normal, area) })
        })
        .collect()
}

/// Nodal values of a P1 function on one triangle.
#[inline]
pub fn local_values(values: &[f64], tri: &[usize; 3]) -> [f64; 3] {
    [values[tri[0]], values[tri[1]], values[tri[2]]]
}

/// Symmetric sparse matrix in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    mesh: Option<MeshId>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= n || *c >= n) {
            return Err(Error::DimensionMismatch { expected: n, found: r.max(c) + 1 });
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = alloc::vec![0; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseOperator { mesh: None, row_ptr, cols, vals })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            triplets.extend(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (i, j, v)));
        }
        Self::from_triplets(n, triplets)
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mesh(&self) -> Option<MeshId> {
        self.mesh
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (yi, r) in y.iter_mut().zip(self.row_ptr.windows(2)) {
            let (cols, vals) = (&self.cols[r[0]..r[1]], &self.vals[r[0]..r[1]]);
            *yi = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = alloc::vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim()).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    /// `a·self + b·other`; both must share the sparsity pattern.
    pub fn combine(&self, a: f64, other: &SparseOperator, b: f64) -> Result<SparseOperator> {
        if self.row_ptr != other.row_ptr || self.cols != other.cols {
            return Err(Error::DimensionMismatch { expected: self.nnz(), found: other.nnz() });
        }
        let vals = self.vals.iter().zip(&other.vals).map(|(x, y)| a * x + b * y).collect();
        Ok(SparseOperator { mesh: self.mesh, row_ptr: self.row_ptr.clone(), cols: self.cols.clone(), vals })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| {
                let mut row = alloc::vec![0.0; self.dim()];
                self.row(i).for_each(|(j, v)| row[j] = v);
                row
            })
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Positions of the diagonal and of both off-diagonal entries of every edge
/// in the P1 sparsity pattern of a mesh.
struct Pattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    diagonal: Vec<usize>,
    edges: Vec<[usize; 2]>,
}

fn pattern(mesh: &SurfaceMesh) -> Pattern {
    let n = mesh.node_count();
    let edges = mesh.edges();
    let mut row_ptr = alloc::vec![0; n + 1];
    for i in 0..n {
        row_ptr[i + 1] = 1;
    }
    for e in edges {
        row_ptr[e.nodes[0] + 1] += 1;
        row_ptr[e.nodes[1] + 1] += 1;
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    // (column, owner) with owner 2e / 2e + 1 for the two entries of edge e
    let mut entries = alloc::vec![(0, usize::MAX); row_ptr[n]];
    let mut fill = row_ptr[..n].to_vec();
    let mut push = |row: usize, entry: (usize, usize)| {
        entries[fill[row]] = entry;
        fill[row] += 1;
    };
    for i in 0..n {
        push(i, (i, usize::MAX));
    }
    for (e, edge) in edges.iter().enumerate() {
        let [a, b] = edge.nodes;
        push(a, (b, 2 * e));
        push(b, (a, 2 * e + 1));
    }
    let mut diagonal = alloc::vec![0; n];
    let mut edge_pos = alloc::vec![[0; 2]; edges.len()];
    for i in 0..n {
        let row = &mut entries[row_ptr[i]..row_ptr[i + 1]];
        row.sort_unstable();
        for (k, &(_, owner)) in row.iter().enumerate() {
            let pos = row_ptr[i] + k;
            match owner {
                usize::MAX => diagonal[i] = pos,
                o => edge_pos[o / 2][o % 2] = pos,
            }
        }
    }
    Pattern { row_ptr, cols: entries.into_iter().map(|(c, _)| c).collect(), diagonal, edges: edge_pos }
}

/// Mass and stiffness matrices of the P1 space on `mesh`.
pub fn assemble(mesh: &SurfaceMesh) -> Result<(SparseOperator, SparseOperator)> {
    let elements = p1_elements(mesh)?;
    let Pattern { row_ptr, cols, diagonal, edges } = pattern(mesh);
    let mut mass = alloc::vec![0.0; cols.len()];
    let mut stiff = alloc::vec![0.0; cols.len()];
    let tris = mesh.triangles().iter().zip(mesh.triangle_edges()).zip(&elements);
    for ((tri, tri_edges), el) in tris {
        for i in 0..3 {
            mass[diagonal[tri[i]]] += el.area / 6.0;
            stiff[diagonal[tri[i]]] += el.area * el.gradients[i].norm_squared();
        }
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let a = el.area * el.gradients[i].dot(&el.gradients[j]);
            for pos in edges[tri_edges[k]] {
                mass[pos] += el.area / 12.0;
                stiff[pos] += a;
            }
        }
    }
    let id = Some(mesh.id());
    let m = SparseOperator { mesh: id, row_ptr: row_ptr.clone(), cols: cols.clone(), vals: mass };
    let a = SparseOperator { mesh: id, row_ptr, cols, vals: stiff };
    Ok((m, a))
}

/// Nodal interpolant of a field on the mesh nodes.
pub fn interpolate(mesh: &SurfaceMesh, field: impl Fn(&Vec3) -> f64) -> FeFunction {
    FeFunction { mesh: mesh.id(), values: mesh.nodes().iter().map(field).collect() }
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Relative residual at which [`backward_euler_step`] stops.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Jacobi-preconditioned conjugate gradients for an SPD matrix, starting from
/// `x`. Stops at `‖b − Ax‖ ≤ tol·‖b‖`.
pub fn cg(a: &SparseOperator, b: &[f64], x: &mut [f64], tol: f64, max_iterations: usize) -> Result<CgStats> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len().min(x.len()) });
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r: Vec<f64> = b.iter().zip(a.apply(x)).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = alloc::vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    let mut iterations = 0;
    while residual > tol {
        if iterations >= max_iterations {
            return Err(Error::SolverDivergence { iterations, residual });
        }
        a.apply_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        let (mut rz_next, mut rr) = (0.0, 0.0);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
            rz_next += r[i] * z[i];
            rr += r[i] * r[i];
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        iterations += 1;
        residual = rr.sqrt() / b_norm;
        if !residual.is_finite() {
            return Err(Error::SolverDivergence { iterations, residual });
        }
    }
    Ok(CgStats { iterations, residual })
}

fn check_operator(op: &SparseOperator, f: &FeFunction) -> Result<()> {
    if let Some(id) = op.mesh {
        if id != f.mesh {
            return Err(Error::GenerationMismatch { expected: id, found: f.mesh });
        }
    }
    if op.dim() != f.len() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: f.len() });
    }
    Ok(())
}

/// One backward Euler step: solves `(M + τA) u = M (u_prev + τ f)` with
/// `u_prev` as initial guess.
pub fn backward_euler_step(
    mass: &SparseOperator,
    stiffness: &SparseOperator,
    u_prev: &FeFunction,
    f: &FeFunction,
    tau: f64,
) -> Result<(FeFunction, CgStats)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("time step must be positive"));
    }
    check_operator(mass, u_prev)?;
    check_operator(stiffness, u_prev)?;
    check_operator(mass, f)?;
    let system = mass.combine(1.0, stiffness, tau)?;
    let data: Vec<f64> = u_prev.values.iter().zip(&f.values).map(|(u, f)| u + tau * f).collect();
    let rhs = mass.apply(&data);
    let mut u = u_prev.values.clone();
    let stats = cg(&system, &rhs, &mut u, CG_TOLERANCE, 10 * mass.dim().max(1))?;
    Ok((FeFunction { mesh: u_prev.mesh, values: u }, stats))
}

/// Barycentric quadrature rule on a triangle; weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: u32,
}

impl QuadratureRule {
    /// Edge midpoint rule, exact for quadratics.
    pub fn edge_midpoints() -> Self {
        QuadratureRule {
            points: alloc::vec![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
            weights: alloc::vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    /// Six-point rule exact for polynomials of degree 4.
    pub fn degree4() -> Self {
        let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011);
        let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322);
        QuadratureRule {
            points: alloc::vec![
                [a, a, 1.0 - 2.0 * a],
                [a, 1.0 - 2.0 * a, a],
                [1.0 - 2.0 * a, a, a],
                [b, b, 1.0 - 2.0 * b],
                [b, 1.0 - 2.0 * b, b],
                [1.0 - 2.0 * b, b, b],
            ],
            weights: alloc::vec![wa, wa, wa, wb, wb, wb],
            degree: 4,
        }
    }

    pub fn point(&self, q: usize, p: &[Vec3; 3]) -> Vec3 {
        let l = self.points[q];
        p[0] * l[0] + p[1] * l[1] + p[2] * l[2]
    }
}

/// `‖u − u_h^ℓ‖_{L²(Γ)}` and `‖∇_Γu − ∇_Γu_h^ℓ‖_{L²(Γ)}`.
///
/// Integrates over Γ_h with the degree-4 rule, weighting by μ_h and evaluating
/// `u` and `∇_Γu` at the lifted quadrature points. The discrete gradient is
/// lifted with `(I − d𝒜)⁻¹(I − ν_hνᵀ/(ν_h·ν))`.
pub fn errors_vs_exact<S: LevelSetSurface + ?Sized>(
    mesh: &SurfaceMesh,
    u_h: &FeFunction,
    surface: &S,
    exact: impl Fn(&Vec3) -> f64,
    exact_gradient: impl Fn(&Vec3) -> Vec3,
) -> Result<(f64, f64)> {
    u_h.check(mesh)?;
    let rule = QuadratureRule::degree4();
    let elements = p1_elements(mesh)?;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let el = &elements[t];
        let p = mesh.triangle_points(t);
        let v = local_values(&u_h.values, tri);
        let g = el.gradient(v);
        for q in 0..rule.weights.len() {
            let x = rule.point(q, &p);
            let l = rule.points[q];
            let ops = geometric_operators(surface, &x, &el.normal)?;
            let xl = lift(surface, &x)?;
            let w = rule.weights[q] * el.area * ops.mu_h;
            let e = exact(&xl) - (l[0] * v[0] + l[1] * v[1] + l[2] * v[2]);
            l2 += w * e * e;
            h1 += w * (exact_gradient(&xl) - ops.gradient_lift * g).norm_squared();
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// `‖u_h^ℓ‖_{L²(Γ)}`, integrated on Γ_h with μ_h weights.
pub fn lifted_l2_norm<S: LevelSetSurface + ?Sized>(mesh: &SurfaceMesh, u_h: &FeFunction, surface: &S) -> Result<f64> {
    errors_vs_exact(mesh, u_h, surface, |_| 0.0, |_| Vec3::zeros()).map(|(l2, _)| l2)
}

/// `‖u_h‖_{L²(Γ_h)}` through the exact mass matrix.
pub fn l2_norm(mesh: &SurfaceMesh, u_h: &FeFunction) -> Result<f64> {
    u_h.check(mesh)?;
    let elements = p1_elements(mesh)?;
    let s: f64 = mesh
        .triangles()
        .iter()
        .zip(&elements)
        .map(|(tri, el)| {
            let v = local_values(&u_h.values, tri);
            el.mass_form(v, v)
        })
        .sum();
    Ok(s.sqrt())
}
