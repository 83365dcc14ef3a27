use crate::mesh::MeshId;
use crate::refinement::Strategy;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("closest-point iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("point at signed distance {distance:e} is outside the tubular neighbourhood (limit {limit:e})")]
    OutsideTube { distance: f64, limit: f64 },

    /// `triangle` is `None` when the triangle is not part of a mesh.
    #[error("degenerate triangle {triangle:?}")]
    DegenerateTriangle { triangle: Option<usize> },

    #[error("discrete normal {nu_h_dot_nu:e} is not aligned with the surface normal (double covering)")]
    NotAdmissible { nu_h_dot_nu: f64 },

    #[error("I - d·Hess(d) is singular at the evaluation point (outside the reach of the surface)")]
    SingularShapeOperator,

    #[error("edge ({0}, {1}) has {2} incident triangles, expected 2")]
    NonManifold(usize, usize, usize),

    #[error("triangles sharing edge ({0}, {1}) traverse it in the same direction")]
    InconsistentOrientation(usize, usize),

    #[error("triangle {triangle} references node {node} but the mesh has {nodes} nodes")]
    InvalidNode { triangle: usize, node: usize, nodes: usize },

    #[error("refinement edges have not been initialised on this mesh")]
    MetadataMissing,

    #[error("function belongs to mesh {found:?}, expected mesh {expected:?}")]
    GenerationMismatch { expected: MeshId, found: MeshId },

    #[error("mesh was refined with {mesh:?}, cannot coarsen with {requested:?}")]
    StrategyMismatch { mesh: Strategy, requested: Strategy },

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("time step {tau:e} fell below the minimum {tau_min:e}")]
    TauUnderflow { tau: f64, tau_min: f64 },

    #[error("{dofs} degrees of freedom exceed the cap of {cap}")]
    DofCapExceeded { dofs: usize, cap: usize },

    #[error("spatial loop reached {iterations} iterations with eta_h^2 = {eta_h_sq:e}")]
    SpatialStagnation { iterations: usize, eta_h_sq: f64 },

    #[error("initial data error {error:e} exceeds the tolerance {tol:e}")]
    InitialDataTooCoarse { error: f64, tol: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("run aborted by the step observer")]
    ObserverAborted,
}
