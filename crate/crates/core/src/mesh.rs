//! Closed triangulated surfaces: connectivity, edge adjacency, element
//! geometry and the refinement genealogy used by coarsening.
//!
//! Triangles are stored counter-clockwise with respect to the outward normal.
//! Local edge `k` of a triangle is the edge opposite its vertex `k`; once
//! refinement edges are initialised, local edge 0 (between vertices 1 and 2)
//! is the refinement edge and vertex 0 is the newest vertex.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::refinement::Strategy;
use crate::{Error, Result, Vec3};

/// Identifies one state of a mesh. Every mutation produces a fresh id, so
/// functions bound to an outdated mesh can be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeshId(u64);

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

impl MeshId {
    pub(crate) fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Refinement tag of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tag {
    /// Part of the initial mesh.
    #[default]
    Initial,
    /// Child of a newest-vertex bisection.
    Bisection,
    /// Child of a red (1→4) subdivision.
    Red,
    /// Child of a green (1→2) closure.
    Green,
    /// Child of a blue (1→3) closure.
    Blue,
}

/// Per-triangle refinement metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TriangleInfo {
    /// Number of refinements separating the triangle from the initial mesh.
    pub generation: u32,
    pub tag: Tag,
    /// Ancestor this triangle was created from, if any.
    pub parent: Option<u64>,
    /// Position among the parent's children.
    pub child_slot: u8,
}

/// How an ancestor triangle was subdivided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Bisection of the refinement edge; two children.
    Bisection,
    /// Red subdivision through the three edge midpoints; four children.
    Red,
}

impl Split {
    pub fn child_count(self) -> usize {
        match self {
            Split::Bisection => 2,
            Split::Red => 4,
        }
    }

    /// Number of nodes the split inserts.
    pub fn created_count(self) -> usize {
        match self {
            Split::Bisection => 1,
            Split::Red => 3,
        }
    }
}

/// A triangle that has been subdivided and is no longer part of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Ancestor {
    pub vertices: [usize; 3],
    pub info: TriangleInfo,
    pub split: Split,
    pub(crate) created: [usize; 3],
    /// Index of the refinement call that performed the split.
    pub epoch: u32,
}

impl Ancestor {
    /// Nodes inserted by the split (edge midpoints).
    pub fn created(&self) -> &[usize] {
        &self.created[..self.split.created_count()]
    }
}

/// An undirected edge with its two incident triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints, smaller index first.
    pub nodes: [usize; 2],
    /// Incident triangles; `triangles[0]` (T₁) has the smaller index.
    pub triangles: [usize; 2],
    /// Local edge index of the edge inside each incident triangle.
    pub local: [u8; 2],
    /// Whether T₁ traverses the edge from `nodes[0]` to `nodes[1]`.
    pub t1_forward: bool,
}

/// Edge length and the outward in-plane co-normals of the two incident triangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGeometry {
    pub length: f64,
    pub conormals: [Vec3; 2],
}

/// Geometry of a single flat triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// Longest edge length h_T.
    pub diameter: f64,
    /// Inscribed circle radius r_T.
    pub inradius: f64,
    pub area: f64,
    /// Unit normal ν_h.
    pub normal: Vec3,
}

/// Per-element geometry and the global mesh size and quasi-uniformity.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMetrics {
    pub elements: Vec<ElementGeometry>,
    /// h = max h_T.
    pub h: f64,
    /// ρ = max h_T / r_T.
    pub rho: f64,
}

/// A closed, consistently oriented surface triangulation.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub(crate) id: MeshId,
    pub(crate) nodes: Vec<Vec3>,
    pub(crate) triangles: Vec<[usize; 3]>,
    pub(crate) info: Vec<TriangleInfo>,
    pub(crate) node_generation: Vec<u32>,
    pub(crate) edges: Vec<Edge>,
    pub(crate) triangle_edges: Vec<[usize; 3]>,
    pub(crate) history: BTreeMap<u64, Ancestor>,
    pub(crate) next_ancestor: u64,
    pub(crate) epoch: u32,
    pub(crate) strategy: Option<Strategy>,
    pub(crate) refinement_edges: bool,
    pub(crate) unlifted_from: usize,
}

/// Endpoints of local edge `k` (the edge opposite vertex `k`).
#[inline]
pub fn local_edge(tri: &[usize; 3], k: usize) -> (usize, usize) {
    (tri[(k + 1) % 3], tri[(k + 2) % 3])
}

/// Builds the edge table of a closed triangulation.
///
/// Edges are sorted by their endpoint pair. Returns the edges together with the
/// global edge id of each local edge of each triangle.
pub fn build_adjacency(triangles: &[[usize; 3]], node_count: usize) -> Result<(Vec<Edge>, Vec<[usize; 3]>)> {
    // (lo, hi, triangle, local edge, forward), bucketed by lo
    let mut start = alloc::vec![0usize; node_count + 1];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if v >= node_count {
                return Err(Error::InvalidNode { triangle: t, node: v, nodes: node_count });
            }
        }
        for k in 0..3 {
            let (a, b) = local_edge(tri, k);
            start[a.min(b) + 1] += 1;
        }
    }
    for i in 0..node_count {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut half_edges = alloc::vec![(0, 0, 0, 0u8, false); 3 * triangles.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = local_edge(tri, k);
            let (lo, hi, forward) = if a < b { (a, b, true) } else { (b, a, false) };
            half_edges[fill[lo]] = (lo, hi, t, k as u8, forward);
            fill[lo] += 1;
        }
    }
    for i in 0..node_count {
        half_edges[start[i]..start[i + 1]].sort_unstable();
    }

    let mut edges = Vec::with_capacity(half_edges.len() / 2);
    let mut triangle_edges = alloc::vec![[usize::MAX; 3]; triangles.len()];
    let mut i = 0;
    while i < half_edges.len() {
        let (lo, hi, ..) = half_edges[i];
        let mut j = i + 1;
        while j < half_edges.len() && half_edges[j].0 == lo && half_edges[j].1 == hi {
            j += 1;
        }
        if j - i != 2 {
            return Err(Error::NonManifold(lo, hi, j - i));
        }
        let (_, _, t1, l1, f1) = half_edges[i];
        let (_, _, t2, l2, f2) = half_edges[i + 1];
        if f1 == f2 {
            return Err(Error::InconsistentOrientation(lo, hi));
        }
        let id = edges.len();
        triangle_edges[t1][l1 as usize] = id;
        triangle_edges[t2][l2 as usize] = id;
        edges.push(Edge { nodes: [lo, hi], triangles: [t1, t2], local: [l1, l2], t1_forward: f1 });
        i = j;
    }
    Ok((edges, triangle_edges))
}

/// Unit normal, area and the two spanning edge vectors of a flat triangle.
pub fn triangle_frame(p: &[Vec3; 3]) -> Option<(Vec3, f64)> {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let twice_area = n.norm();
    if twice_area > 0.0 {
        Some((n / twice_area, 0.5 * twice_area))
    } else {
        None
    }
}

/// Diameter, inradius, area and normal of a flat triangle.
pub fn triangle_geometry(p: &[Vec3; 3]) -> Option<ElementGeometry> {
    let (normal, area) = triangle_frame(p)?;
    let lengths = [(p[2] - p[1]).norm(), (p[0] - p[2]).norm(), (p[1] - p[0]).norm()];
    let perimeter: f64 = lengths.iter().sum();
    let diameter = lengths.iter().cloned().fold(0.0, f64::max);
    Some(ElementGeometry { diameter, inradius: 2.0 * area / perimeter, area, normal })
}

impl SurfaceMesh {
    /// Builds a mesh from nodes and counter-clockwise triangles.
    ///
    /// Checks closedness, consistent orientation and non-degeneracy. Refinement
    /// edges are left uninitialised; see [`SurfaceMesh::init_refinement_edges`].
    pub fn new(nodes: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let (edges, triangle_edges) = build_adjacency(&triangles, nodes.len())?;
        let n_nodes = nodes.len();
        let n_tris = triangles.len();
        let mesh = SurfaceMesh {
            id: MeshId::fresh(),
            nodes,
            triangles,
            info: alloc::vec![TriangleInfo::default(); n_tris],
            node_generation: alloc::vec![0; n_nodes],
            edges,
            triangle_edges,
            history: BTreeMap::new(),
            next_ancestor: 0,
            epoch: 0,
            strategy: None,
            refinement_edges: false,
            unlifted_from: n_nodes,
        };
        mesh.check_nondegenerate()?;
        Ok(mesh)
    }

    fn check_nondegenerate(&self) -> Result<()> {
        let mut h: f64 = 0.0;
        let mut areas = Vec::with_capacity(self.triangles.len());
        for t in 0..self.triangles.len() {
            let g =
                triangle_geometry(&self.triangle_points(t)).ok_or(Error::DegenerateTriangle { triangle: Some(t) })?;
            h = h.max(g.diameter);
            areas.push(g.area);
        }
        match areas.iter().position(|&a| !(a > 1e-14 * h * h)) {
            Some(t) => Err(Error::DegenerateTriangle { triangle: Some(t) }),
            None => Ok(()),
        }
    }

    /// Rotates every triangle so that its longest edge becomes the refinement
    /// edge (local edge 0); ties go to the edge opposite the lowest node id.
    pub fn init_refinement_edges(&mut self) {
        for tri in self.triangles.iter_mut() {
            let p = [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]];
            let len = |k: usize| (p[(k + 2) % 3] - p[(k + 1) % 3]).norm_squared();
            let mut best = 0;
            for k in 1..3 {
                let (lk, lb) = (len(k), len(best));
                if lk > lb || (lk == lb && tri[k] < tri[best]) {
                    best = k;
                }
            }
            tri.rotate_left(best);
        }
        let (edges, triangle_edges) =
            build_adjacency(&self.triangles, self.nodes.len()).expect("rotation preserves topology");
        self.edges = edges;
        self.triangle_edges = triangle_edges;
        self.refinement_edges = true;
        self.id = MeshId::fresh();
    }

    pub fn id(&self) -> MeshId {
        self.id
    }
    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    /// Global edge id of each local edge of each triangle.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }
    pub fn triangle_info(&self) -> &[TriangleInfo] {
        &self.info
    }
    /// Refinement generation of each node (0 for nodes of the initial mesh).
    pub fn node_generation(&self) -> &[u32] {
        &self.node_generation
    }
    pub fn history(&self) -> &BTreeMap<u64, Ancestor> {
        &self.history
    }
    /// Refinement strategy that produced the mesh, if it has been refined.
    pub fn strategy(&self) -> Option<Strategy> {
        self.strategy
    }
    pub fn has_refinement_edges(&self) -> bool {
        self.refinement_edges
    }
    /// Indices of nodes created by refinement that have not yet been lifted.
    pub fn unlifted_nodes(&self) -> core::ops::Range<usize> {
        self.unlifted_from..self.nodes.len()
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Drops all refinement genealogy so the current mesh becomes the coarsest one.
    pub fn forget_history(&mut self) {
        self.history.clear();
        self.info.iter_mut().for_each(|i| *i = TriangleInfo::default());
        self.node_generation.iter_mut().for_each(|g| *g = 0);
        self.strategy = None;
        self.id = MeshId::fresh();
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        let tri = &self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry> {
        triangle_geometry(&self.triangle_points(t)).ok_or(Error::DegenerateTriangle { triangle: Some(t) })
    }

    /// Per-element h_T, r_T, area and ν_h, and the global h and ρ.
    pub fn element_metrics(&self) -> Result<ElementMetrics> {
        let elements = (0..self.triangles.len()).map(|t| self.element_geometry(t)).collect::<Result<Vec<_>>>()?;
        let h = elements.iter().map(|g| g.diameter).fold(0.0, f64::max);
        let rho = elements.iter().map(|g| g.diameter / g.inradius).fold(0.0, f64::max);
        Ok(ElementMetrics { elements, h, rho })
    }

    /// Maximum element diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let p = self.triangle_points(t);
                (p[1] - p[0]).norm().max((p[2] - p[1]).norm()).max((p[0] - p[2]).norm())
            })
            .fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).filter_map(|t| triangle_frame(&self.triangle_points(t)).map(|(_, a)| a)).sum()
    }

    /// Outward in-plane co-normal of triangle `t` along its local edge `k`.
    pub fn conormal(&self, t: usize, k: usize) -> Result<Vec3> {
        let p = self.triangle_points(t);
        let (normal, _) = triangle_frame(&p).ok_or(Error::DegenerateTriangle { triangle: Some(t) })?;
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        let c = (b - a).cross(&normal).normalize();
        // counter-clockwise orientation makes (b − a) × ν_h point outwards
        Ok(if (p[k] - a).dot(&c) > 0.0 { -c } else { c })
    }

    pub fn edge_geometry(&self, e: usize) -> Result<EdgeGeometry> {
        let edge = &self.edges[e];
        let length = (self.nodes[edge.nodes[1]] - self.nodes[edge.nodes[0]]).norm();
        let conormals = [
            self.conormal(edge.triangles[0], edge.local[0] as usize)?,
            self.conormal(edge.triangles[1], edge.local[1] as usize)?,
        ];
        Ok(EdgeGeometry { length, conormals })
    }

    /// Triangles incident to each node.
    pub fn node_stars(&self) -> Vec<Vec<usize>> {
        let mut stars = alloc::vec![Vec::new(); self.nodes.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                stars[v].push(t);
            }
        }
        stars
    }

    /// Rebuilds the edge table from the triangle list and compares it with the
    /// stored one; fails on any non-manifold or misoriented edge.
    pub fn check_conformity(&self) -> Result<()> {
        let (edges, triangle_edges) = build_adjacency(&self.triangles, self.nodes.len())?;
        if edges != self.edges || triangle_edges != self.triangle_edges {
            return Err(Error::InvalidConfig("stored edge table is out of date"));
        }
        if self.info.len() != self.triangles.len() || self.node_generation.len() != self.nodes.len() {
            return Err(Error::InvalidConfig("metadata length does not match the mesh"));
        }
        Ok(())
    }

    /// Largest |d(node)| over all nodes.
    pub fn max_node_distance<S: crate::geometry::LevelSetSurface + ?Sized>(&self, surface: &S) -> f64 {
        self.nodes.iter().map(|x| surface.distance(x).abs()).fold(0.0, f64::max)
    }

    /// Smallest ν_h·ν over element centroids.
    pub fn min_normal_alignment<S: crate::geometry::LevelSetSurface + ?Sized>(&self, surface: &S) -> f64 {
        (0..self.triangles.len())
            .filter_map(|t| {
                let p = self.triangle_points(t);
                let (n, _) = triangle_frame(&p)?;
                let c = (p[0] + p[1] + p[2]) / 3.0;
                Some(n.dot(&surface.normal(&c)))
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn rebuild_edges(&mut self) -> Result<()> {
        let (edges, triangle_edges) = build_adjacency(&self.triangles, self.nodes.len())?;
        self.edges = edges;
        self.triangle_edges = triangle_edges;
        Ok(())
    }
}

/// Sum of the outward co-normal fluxes of the two element gradients across an edge,
/// `g₁·n_S^{T₁} + g₂·n_S^{T₂}`.
pub fn conormal_flux_jump(mesh: &SurfaceMesh, edge: usize, grad_t1: &Vec3, grad_t2: &Vec3) -> Result<f64> {
    let geo = mesh.edge_geometry(edge)?;
    Ok(flux_jump(&geo, grad_t1, grad_t2))
}

#[inline]
pub fn flux_jump(geo: &EdgeGeometry, grad_t1: &Vec3, grad_t2: &Vec3) -> f64 {
    grad_t1.dot(&geo.conormals[0]) + grad_t2.dot(&geo.conormals[1])
}
