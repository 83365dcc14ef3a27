//! The space–time adaptive driver and fixed-mesh time stepping.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::estimator::{indicators, Indicators};
use crate::fem::{assemble, backward_euler_step, errors_vs_exact, interpolate, FeFunction};
use crate::geometry::LevelSetSurface;
use crate::mesh::SurfaceMesh;
use crate::problems::Problem;
use crate::refinement::{
    coarsen, lift_new_nodes, mark_coarsen, mark_refine, refine, refine_uniform, transfer, Criterion, Strategy,
};
use crate::{Error, Result};

/// What happens to the mesh after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseningMode {
    /// Keep the refined mesh.
    None,
    /// Restart every step from the initial mesh.
    ResetToInitial,
    /// Coarsening loop driven by the coarsening indicator.
    Matching,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub tol: f64,
    pub tau0: f64,
    pub t_end: f64,
    pub theta: f64,
    pub theta_star: f64,
    pub criterion: Criterion,
    pub strategy: Strategy,
    pub max_spatial_iters: usize,
    pub max_coarsen_iters: usize,
    pub tau_min: f64,
    pub dof_cap: usize,
    pub coarsening: CoarseningMode,
}

impl AdaptiveConfig {
    /// Configuration with the default guards.
    pub fn new(tol: f64, tau0: f64, t_end: f64, theta: f64, theta_star: f64) -> Self {
        AdaptiveConfig {
            tol,
            tau0,
            t_end,
            theta,
            theta_star,
            criterion: Criterion::Bulk,
            strategy: Strategy::Nvb,
            max_spatial_iters: 30,
            max_coarsen_iters: 10,
            tau_min: 1e-8 * t_end,
            dof_cap: 2_000_000,
            coarsening: CoarseningMode::Matching,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig("theta must lie in (0, 1)"));
        }
        if !(self.theta_star > 0.0 && self.theta_star < 1.0) {
            return Err(Error::InvalidConfig("theta_star must lie in (0, 1)"));
        }
        if !(self.tau_min < self.tau0 && self.tau0 <= self.t_end) {
            return Err(Error::InvalidConfig("require tau_min < tau0 <= t_end"));
        }
        Ok(())
    }
}

/// One accepted time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    pub dofs: usize,
    pub eta_h_sq: f64,
    pub eta_tau_sq: f64,
    pub eta_c_sq: f64,
    pub eta_combined: f64,
    pub spatial_iters: usize,
    pub coarsen_iters: usize,
    pub nodes_removed: usize,
    pub cg_iters: usize,
    pub wall_ms: f64,
}

/// One pass of the coarsening loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseningEvent {
    pub step: usize,
    /// Coarsening indicator on the coarsened grid.
    pub eta_c_sq: f64,
    pub removed: usize,
    /// False when the pass was rolled back.
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
    pub coarsenings: Vec<CoarseningEvent>,
    /// Temporal rejections.
    pub rejected: usize,
    /// Number of linear solves.
    pub solves: usize,
    /// Sum of the number of unknowns over all linear solves.
    pub dof_work: u64,
    pub cg_iters: usize,
}

/// Millisecond clock for the `wall_ms` column.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Receives every accepted step, after coarsening, with the mesh and
/// solution it was computed on.
pub trait Observer {
    fn accepted(&mut self, record: &StepRecord, mesh: &SurfaceMesh, u: &FeFunction) -> Result<()>;
}

impl Observer for () {
    fn accepted(&mut self, _: &StepRecord, _: &SurfaceMesh, _: &FeFunction) -> Result<()> {
        Ok(())
    }
}

/// Final state of an adaptive run.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub log: RunLog,
    pub mesh: SurfaceMesh,
    pub solution: FeFunction,
}

/// Refines uniformly until `‖(I_h u⁰)^ℓ − u⁰‖_{L²(Γ)} ≤ tol`.
pub fn resolve_initial_data<S, P>(
    mesh: SurfaceMesh,
    surface: &S,
    problem: &P,
    tol: f64,
    strategy: Strategy,
    max_levels: usize,
) -> Result<SurfaceMesh>
where
    S: LevelSetSurface + ?Sized,
    P: Problem + ?Sized,
{
    let mut mesh = mesh;
    for _ in 0..=max_levels {
        let error = initial_error(&mesh, surface, problem)?;
        if error <= tol {
            return Ok(mesh);
        }
        mesh = refine_uniform(&mesh, strategy)?.0;
        lift_new_nodes(&mut mesh, surface)?;
    }
    Err(Error::InitialDataTooCoarse { error: initial_error(&mesh, surface, problem)?, tol })
}

fn initial_error<S, P>(mesh: &SurfaceMesh, surface: &S, problem: &P) -> Result<f64>
where
    S: LevelSetSurface + ?Sized,
    P: Problem + ?Sized,
{
    let u0 = interpolate(mesh, |x| problem.initial(x));
    Ok(errors_vs_exact(mesh, &u0, surface, |x| problem.initial(x), |_| crate::Vec3::zeros())?.0)
}

struct Solve {
    u: FeFunction,
    indicators: Indicators,
    cg_iters: usize,
}

fn solve_step<P: Problem + ?Sized>(
    mesh: &SurfaceMesh,
    problem: &P,
    u_prev: &FeFunction,
    t: f64,
    tau: f64,
) -> Result<Solve> {
    let f_h = interpolate(mesh, |x| problem.rhs(x, t));
    let (m, a) = assemble(mesh)?;
    let (u, stats) = backward_euler_step(&m, &a, u_prev, &f_h, tau)?;
    let indicators = indicators(mesh, &u, u_prev, &f_h, tau)?;
    Ok(Solve { u, indicators, cg_iters: stats.iterations })
}

fn sqrt_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.sqrt()).collect()
}

/// Runs the space–time adaptive algorithm from `initial_mesh` to `config.t_end`.
///
/// Each step repeats solve, estimate and refine until `η_h² < TOL`, halves τ
/// and retries while `η_τ² ≥ TOL`, and after acceptance doubles τ and
/// coarsens as long as the coarsening indicator on the coarser grid stays
/// within TOL. The initial data must satisfy `‖(u_h⁰)^ℓ − u⁰‖ ≤ TOL`.
pub fn run<S, P>(
    problem: &P,
    surface: &S,
    initial_mesh: &SurfaceMesh,
    config: &AdaptiveConfig,
    observer: &mut dyn Observer,
    clock: &dyn Clock,
) -> Result<AdaptiveOutcome>
where
    S: LevelSetSurface + ?Sized,
    P: Problem + ?Sized,
{
    config.validate()?;
    if let Some(s) = initial_mesh.strategy().filter(|s| *s != config.strategy) {
        return Err(Error::StrategyMismatch { mesh: s, requested: config.strategy });
    }
    let tol = config.tol;
    let error = initial_error(initial_mesh, surface, problem)?;
    if error > tol {
        return Err(Error::InitialDataTooCoarse { error, tol });
    }

    let mut mesh = initial_mesh.clone();
    let mut u_prev = interpolate(&mesh, |x| problem.initial(x));
    let mut log = RunLog::default();
    let mut t_prev = 0.0;
    let mut tau = config.tau0;
    let t_end = config.t_end;
    let mut step_start = clock.now_ms();
    let mut spatial_iters = 0;
    let mut cg_iters = 0;

    while t_prev < t_end {
        // clamp at the final time, also absorbing a remainder below τ_min
        let mut t = t_prev + tau;
        if t >= t_end || t_end - t < config.tau_min {
            tau = t_end - t_prev;
            t = t_end;
        }

        let mut u_transferred = u_prev.clone();
        let mut attempt_iters = 0;
        let solve = loop {
            let solve = solve_step(&mesh, problem, &u_transferred, t, tau)?;
            log.solves += 1;
            log.dof_work += mesh.node_count() as u64;
            log.cg_iters += solve.cg_iters;
            cg_iters += solve.cg_iters;
            if solve.indicators.eta_h_sq < tol {
                break solve;
            }
            spatial_iters += 1;
            attempt_iters += 1;
            if attempt_iters >= config.max_spatial_iters {
                return Err(Error::SpatialStagnation {
                    iterations: attempt_iters,
                    eta_h_sq: solve.indicators.eta_h_sq,
                });
            }
            let marks = mark_refine(&sqrt_all(&solve.indicators.spatial), config.theta, config.criterion);
            let (mut refined, map) = refine(&mesh, &marks, config.strategy)?;
            u_transferred = transfer(&u_transferred, &map)?;
            lift_new_nodes(&mut refined, surface)?;
            if refined.node_count() > config.dof_cap {
                return Err(Error::DofCapExceeded { dofs: refined.node_count(), cap: config.dof_cap });
            }
            mesh = refined;
        };

        if solve.indicators.eta_tau_sq >= tol {
            // keep the refined mesh, retry with half the step
            u_prev = u_transferred;
            tau *= 0.5;
            log.rejected += 1;
            if tau < config.tau_min {
                return Err(Error::TauUnderflow { tau, tau_min: config.tau_min });
            }
            continue;
        }

        let step = log.steps.len() + 1;
        let ind = &solve.indicators;
        let mut record = StepRecord {
            step,
            t,
            tau,
            dofs: mesh.node_count(),
            eta_h_sq: ind.eta_h_sq,
            eta_tau_sq: ind.eta_tau_sq,
            eta_c_sq: ind.eta_c_sq,
            eta_combined: ind.combined(),
            spatial_iters,
            coarsen_iters: 0,
            nodes_removed: 0,
            cg_iters,
            wall_ms: 0.0,
        };
        t_prev = t;
        tau *= 2.0;
        spatial_iters = 0;
        cg_iters = 0;

        let solved_mesh = mesh.clone();
        let mut u_n = solve.u.clone();
        match config.coarsening {
            CoarseningMode::None => {}
            CoarseningMode::ResetToInitial => {
                let base = initial_mesh.node_count();
                u_n = FeFunction::new(initial_mesh, u_n.values()[..base].to_vec())?;
                record.nodes_removed = mesh.node_count() - base;
                mesh = initial_mesh.clone();
            }
            CoarseningMode::Matching => {
                let mut eta_c_sq = ind.eta_c_sq;
                let mut coarsening_ref = u_transferred;
                while eta_c_sq <= tol && record.coarsen_iters < config.max_coarsen_iters {
                    let (per_element, _) = crate::estimator::coarsening_indicator(&mesh, &u_n, &coarsening_ref)?;
                    let marks = mark_coarsen(&sqrt_all(&per_element), config.theta_star, config.criterion);
                    let c = coarsen(&mesh, &marks, &[&u_n, &coarsening_ref], config.strategy)?;
                    if c.removed == 0 {
                        break;
                    }
                    record.coarsen_iters += 1;
                    let mut functions = c.functions.into_iter();
                    let (cu, cref) = (functions.next().unwrap(), functions.next().unwrap());
                    let (_, new_eta) = crate::estimator::coarsening_indicator(&c.mesh, &cu, &cref)?;
                    let accepted = new_eta <= tol;
                    log.coarsenings.push(CoarseningEvent { step, eta_c_sq: new_eta, removed: c.removed, accepted });
                    if !accepted {
                        break;
                    }
                    eta_c_sq = new_eta;
                    record.nodes_removed += c.removed;
                    mesh = c.mesh;
                    u_n = cu;
                    coarsening_ref = cref;
                }
            }
        }
        u_prev = u_n;
        let now = clock.now_ms();
        record.wall_ms = now - step_start;
        step_start = now;
        observer.accepted(&record, &solved_mesh, &solve.u)?;
        log.steps.push(record);
    }
    Ok(AdaptiveOutcome { log, mesh, solution: u_prev })
}

/// Errors and estimator of uniform time stepping on a fixed mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedMeshRun {
    pub h: f64,
    pub tau: f64,
    pub dofs: usize,
    /// `max_n ‖u(tⁿ) − (u_hⁿ)^ℓ‖_{L²(Γ)}`, including n = 0.
    pub err_linf_l2: f64,
    /// `(Σ_n τ‖u(tⁿ) − (u_hⁿ)^ℓ‖²_{H¹(Γ)})^{1/2}`.
    pub err_l2_h1: f64,
    /// `(Σ_n (ηⁿ)²)^{1/2}`.
    pub estimator: f64,
    pub steps: usize,
}

/// Backward Euler with constant τ on a fixed mesh, measuring the error
/// against the exact solution.
pub fn fixed_mesh_run<S, P>(problem: &P, surface: &S, mesh: &SurfaceMesh, tau: f64, t_end: f64) -> Result<FixedMeshRun>
where
    S: LevelSetSurface + ?Sized,
    P: Problem + ?Sized,
{
    if !(tau > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidConfig("tau and t_end must be positive"));
    }
    let exact_at = |t: f64| move |x: &crate::Vec3| problem.exact(x, t).expect("problem has an exact solution");
    let gradient_at =
        |t: f64| move |x: &crate::Vec3| problem.exact_gradient(x, t).expect("problem has an exact gradient");
    if problem.exact(&mesh.nodes()[0], 0.0).is_none() || problem.exact_gradient(&mesh.nodes()[0], 0.0).is_none() {
        return Err(Error::InvalidConfig("problem has no exact solution"));
    }

    let (m, a) = assemble(mesh)?;
    let steps = (t_end / tau).round().max(1.0) as usize;
    let mut u = interpolate(mesh, |x| problem.initial(x));
    let (e0, _) = errors_vs_exact(mesh, &u, surface, exact_at(0.0), gradient_at(0.0))?;
    let mut linf = e0;
    let mut l2h1 = 0.0;
    let mut est = 0.0;
    for n in 1..=steps {
        let t = t_end * n as f64 / steps as f64;
        let step = t_end / steps as f64;
        let f_h = interpolate(mesh, |x| problem.rhs(x, t));
        let (next, _) = backward_euler_step(&m, &a, &u, &f_h, step)?;
        let ind = indicators(mesh, &next, &u, &f_h, step)?;
        est += ind.combined().powi(2);
        let (el2, eh1) = errors_vs_exact(mesh, &next, surface, exact_at(t), gradient_at(t))?;
        linf = linf.max(el2);
        l2h1 += step * (el2 * el2 + eh1 * eh1);
        u = next;
    }
    Ok(FixedMeshRun {
        h: mesh.mesh_size(),
        tau: t_end / steps as f64,
        dofs: mesh.node_count(),
        err_linf_l2: linf,
        err_l2_h1: l2h1.sqrt(),
        estimator: est.sqrt(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Sphere;
    use crate::meshgen;
    use crate::problems::{SphereDecay, Zero};

    #[test]
    fn zero_problem_only_doubles_tau() {
        let mesh = meshgen::icosphere_with(1, Strategy::Nvb);
        let config = AdaptiveConfig::new(1e-3, 0.01, 1.0, 0.5, 0.1);
        let out = run(&Zero { t_end: 1.0 }, &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap();
        let taus: Vec<f64> = out.log.steps.iter().map(|s| s.tau).collect();
        assert_eq!(&taus[..6], &[0.01, 0.02, 0.04, 0.08, 0.16, 0.32]);
        assert_eq!(out.log.steps.len(), 7);
        assert!(out.log.steps.iter().all(|s| s.spatial_iters == 0 && s.dofs <= mesh.node_count()));
        assert_eq!(out.log.rejected, 0);
        let total: f64 = taus.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_initial_data_is_rejected() {
        let mesh = meshgen::icosphere(0);
        let config = AdaptiveConfig::new(1e-4, 0.01, 1.0, 0.5, 0.1);
        let err = run(&SphereDecay::default(), &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap_err();
        assert!(matches!(err, Error::InitialDataTooCoarse { .. }));
    }

    #[test]
    fn invalid_theta() {
        let mut config = AdaptiveConfig::new(1e-2, 0.01, 1.0, 0.5, 0.1);
        config.theta = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn fixed_mesh_errors_are_small() {
        let mesh = meshgen::icosphere(3);
        let r = fixed_mesh_run(&SphereDecay::default(), &Sphere::UNIT, &mesh, 0.1, 1.0).unwrap();
        assert_eq!(r.steps, 10);
        assert!(r.err_linf_l2 < 0.05, "{r:?}");
        assert!(r.err_l2_h1 < 0.3, "{r:?}");
    }
}
