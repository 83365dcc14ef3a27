//! Residual indicators of one time step: spatial, temporal and coarsening.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::fem::{local_values, p1_elements, FeFunction, P1Element};
use crate::mesh::{flux_jump, SurfaceMesh};
use crate::Result;

/// Squared indicators per element and their sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicators {
    /// Element residual plus half of each incident edge jump term.
    pub spatial: Vec<f64>,
    /// `‖u_h^n − I^n u_h^{n−1}‖²_{H¹(T)}`.
    pub temporal: Vec<f64>,
    /// `‖u_h^n − I^n u_h^{n−1}‖²_{L²(T)}`.
    pub coarsening: Vec<f64>,
    pub eta_h_sq: f64,
    pub eta_tau_sq: f64,
    pub eta_c_sq: f64,
    pub tau: f64,
    /// Mesh size entering the `(1 + h²)` factor.
    pub h: f64,
}

impl Indicators {
    /// `(1 + h²)·(τ(η_h² + η_τ²))^{1/2}`.
    pub fn combined(&self) -> f64 {
        combined(self.eta_h_sq.sqrt(), self.eta_tau_sq.sqrt(), self.tau, self.h)
    }
}

/// `(1 + h²)·(τ(η_h² + η_τ²))^{1/2}` from the unsquared indicators.
pub fn combined(eta_h: f64, eta_tau: f64, tau: f64, h: f64) -> f64 {
    (1.0 + h * h) * (tau * (eta_h * eta_h + eta_tau * eta_tau)).sqrt()
}

fn check_all(mesh: &SurfaceMesh, functions: &[&FeFunction]) -> Result<()> {
    functions.iter().try_for_each(|f| f.check(mesh))
}

fn spatial_with(
    mesh: &SurfaceMesh,
    elements: &[P1Element],
    u_n: &FeFunction,
    u_prev: &FeFunction,
    f_h: &FeFunction,
    tau: f64,
) -> Result<Vec<f64>> {
    let tris = mesh.triangles();
    let grads: Vec<_> =
        tris.iter().zip(elements).map(|(tri, el)| el.gradient(local_values(u_n.values(), tri))).collect();
    let residual: Vec<f64> =
        u_n.values().iter().zip(u_prev.values()).zip(f_h.values()).map(|((u, p), f)| (u - p) / tau - f).collect();

    let mut spatial: Vec<f64> = tris
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let g = mesh.element_geometry(t)?;
            let r = local_values(&residual, tri);
            Ok(g.diameter * g.diameter * elements[t].mass_form(r, r))
        })
        .collect::<Result<_>>()?;

    for (e, edge) in mesh.edges().iter().enumerate() {
        let geo = mesh.edge_geometry(e)?;
        let [t1, t2] = edge.triangles;
        let jump = flux_jump(&geo, &grads[t1], &grads[t2]);
        // h_S ‖J‖²_{L²(S)} with J constant along S
        let term = geo.length * geo.length * jump * jump;
        spatial[t1] += 0.5 * term;
        spatial[t2] += 0.5 * term;
    }
    Ok(spatial)
}

fn difference_terms(
    mesh: &SurfaceMesh,
    elements: &[P1Element],
    u_n: &FeFunction,
    u_prev: &FeFunction,
) -> (Vec<f64>, Vec<f64>) {
    let diff: Vec<f64> = u_n.values().iter().zip(u_prev.values()).map(|(a, b)| a - b).collect();
    mesh.triangles()
        .iter()
        .zip(elements)
        .map(|(tri, el)| {
            let d = local_values(&diff, tri);
            let l2 = el.mass_form(d, d);
            (l2 + el.area * el.gradient(d).norm_squared(), l2)
        })
        .unzip()
}

/// Spatial indicator: `h_S ‖⟦∇u_h^n·n_S⟧‖²_{L²(S)}` over edges plus
/// `h_T² ‖(u_h^n − I^n u_h^{n−1})/τ − f_h‖²_{L²(T)}` over elements.
///
/// The jump is the sum of the outward co-normal fluxes of both neighbours;
/// each edge term is split evenly between them. Returns per-element values
/// and their sum.
pub fn spatial_indicator(
    mesh: &SurfaceMesh,
    u_n: &FeFunction,
    u_prev: &FeFunction,
    f_h: &FeFunction,
    tau: f64,
) -> Result<(Vec<f64>, f64)> {
    check_all(mesh, &[u_n, u_prev, f_h])?;
    let elements = p1_elements(mesh)?;
    let v = spatial_with(mesh, &elements, u_n, u_prev, f_h, tau)?;
    let s = v.iter().sum();
    Ok((v, s))
}

/// Temporal indicator `Σ_T ‖u_h^n − I^n u_h^{n−1}‖²_{H¹(T)}`.
pub fn temporal_indicator(mesh: &SurfaceMesh, u_n: &FeFunction, u_prev: &FeFunction) -> Result<(Vec<f64>, f64)> {
    check_all(mesh, &[u_n, u_prev])?;
    let (v, _) = difference_terms(mesh, &p1_elements(mesh)?, u_n, u_prev);
    let s = v.iter().sum();
    Ok((v, s))
}

/// Coarsening indicator `Σ_T ‖u_h^n − I^n u_h^{n−1}‖²_{L²(T)}`.
pub fn coarsening_indicator(mesh: &SurfaceMesh, u_n: &FeFunction, u_prev: &FeFunction) -> Result<(Vec<f64>, f64)> {
    check_all(mesh, &[u_n, u_prev])?;
    let (_, v) = difference_terms(mesh, &p1_elements(mesh)?, u_n, u_prev);
    let s = v.iter().sum();
    Ok((v, s))
}

/// All indicators of one step at once.
pub fn indicators(
    mesh: &SurfaceMesh,
    u_n: &FeFunction,
    u_prev: &FeFunction,
    f_h: &FeFunction,
    tau: f64,
) -> Result<Indicators> {
    check_all(mesh, &[u_n, u_prev, f_h])?;
    let elements = p1_elements(mesh)?;
    let spatial = spatial_with(mesh, &elements, u_n, u_prev, f_h, tau)?;
    let (temporal, coarsening) = difference_terms(mesh, &elements, u_n, u_prev);
    Ok(Indicators {
        eta_h_sq: spatial.iter().sum(),
        eta_tau_sq: temporal.iter().sum(),
        eta_c_sq: coarsening.iter().sum(),
        spatial,
        temporal,
        coarsening,
        tau,
        h: mesh.mesh_size(),
    })
}
