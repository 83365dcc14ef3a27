//! Initial meshes: icosahedron, icospheres, a tetrahedron and a torus grid.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{Sphere, Torus};
use crate::mesh::SurfaceMesh;
use crate::refinement::{lift_new_nodes, refine_uniform, Strategy};
use crate::Vec3;

/// Regular icosahedron inscribed in the unit sphere, refinement edges initialised.
pub fn icosahedron() -> SurfaceMesh {
    let p = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let nodes = raw.iter().map(|v| Vec3::new(v[0], v[1], v[2]).normalize()).collect();
    let triangles = alloc::vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mesh = SurfaceMesh::new(nodes, triangles).expect("icosahedron is a closed surface");
    mesh.init_refinement_edges();
    mesh
}

/// Regular tetrahedron inscribed in the unit sphere, without refinement edges.
pub fn tetrahedron_raw() -> SurfaceMesh {
    let s = 1.0 / 3.0f64.sqrt();
    let nodes = alloc::vec![Vec3::new(s, s, s), Vec3::new(s, -s, -s), Vec3::new(-s, s, -s), Vec3::new(-s, -s, s),];
    SurfaceMesh::new(nodes, alloc::vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
        .expect("tetrahedron is a closed surface")
}

/// Regular tetrahedron with refinement edges initialised.
pub fn tetrahedron() -> SurfaceMesh {
    let mut mesh = tetrahedron_raw();
    mesh.init_refinement_edges();
    mesh
}

/// Icosahedron refined `level` times by red subdivision, nodes on the unit sphere.
///
/// The refinement history is kept, so adaptive coarsening can go below `level`.
pub fn icosphere(level: u32) -> SurfaceMesh {
    icosphere_with(level, Strategy::Rgb)
}

/// Icosphere built with the given strategy. Both produce `10·4^level + 2` nodes.
pub fn icosphere_with(level: u32, strategy: Strategy) -> SurfaceMesh {
    let mut mesh = icosahedron();
    for _ in 0..level {
        mesh = refine_uniform(&mesh, strategy).expect("uniform refinement of a valid mesh").0;
        lift_new_nodes(&mut mesh, &Sphere::UNIT).expect("edge midpoints of the icosphere lie inside the tube");
    }
    mesh
}

/// Structured torus grid with `n_major × n_minor` quads split into triangles.
pub fn torus_grid(torus: &Torus, n_major: usize, n_minor: usize) -> SurfaceMesh {
    let mut nodes = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let phi = 2.0 * PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let theta = 2.0 * PI * j as f64 / n_minor as f64;
            let rho = torus.major + torus.minor * theta.cos();
            nodes.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), torus.minor * theta.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut triangles = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // (φ, θ) is positively oriented for the outward normal
            if (i + j) % 2 == 0 {
                triangles.extend([[a, b, d], [b, c, d]]);
            } else {
                triangles.extend([[a, b, c], [a, c, d]]);
            }
        }
    }
    let mut mesh = SurfaceMesh::new(nodes, triangles).expect("torus grid is a closed surface");
    mesh.init_refinement_edges();
    mesh
}

/// Torus grid of 24 × 6 cells refined `level` times by red subdivision.
pub fn torus(torus: &Torus, level: u32) -> SurfaceMesh {
    let mut mesh = torus_grid(torus, 24, 6);
    for _ in 0..level {
        mesh = refine_uniform(&mesh, Strategy::Rgb).expect("uniform refinement of a valid mesh").0;
        lift_new_nodes(&mut mesh, torus).expect("edge midpoints of the torus lie inside the tube");
    }
    mesh
}
