use surfadapt_core::adaptive::{
    resolve_initial_data, run, AdaptiveConfig, CoarseningMode, NoClock, Observer, RunLog, StepRecord,
};
use surfadapt_core::fem::FeFunction;
use surfadapt_core::geometry::Sphere;
use surfadapt_core::mesh::SurfaceMesh;
use surfadapt_core::meshgen;
use surfadapt_core::problems::{MovingPeak, Problem, SphereDecay, Zero};
use surfadapt_core::refinement::{Criterion, Strategy};
use surfadapt_core::Error;

fn resolved(problem: &dyn Problem, tol: f64) -> SurfaceMesh {
    resolve_initial_data(meshgen::icosphere_with(1, Strategy::Nvb), &Sphere::UNIT, problem, tol, Strategy::Nvb, 8)
        .unwrap()
}

fn check_gates(log: &RunLog, tol: f64, t_end: f64) {
    assert!(!log.steps.is_empty());
    for s in &log.steps {
        assert!(s.eta_h_sq <= tol && s.eta_tau_sq <= tol, "{s:?}");
    }
    for c in log.coarsenings.iter().filter(|c| c.accepted) {
        assert!(c.eta_c_sq <= tol, "{c:?}");
    }
    for w in log.steps.windows(2) {
        assert!(w[1].t > w[0].t);
    }
    assert_eq!(log.steps.last().unwrap().t, t_end);
    let total: f64 = log.steps.iter().map(|s| s.tau).sum();
    assert!((total - t_end).abs() <= 1e-12, "Σ τ = {total}");
}

fn decay_config(strategy: Strategy, coarsening: CoarseningMode) -> AdaptiveConfig {
    let mut c = AdaptiveConfig::new(0.1, 0.05, 0.5, 0.5, 0.2);
    c.strategy = strategy;
    c.coarsening = coarsening;
    c
}

#[test]
fn gates_hold_for_every_strategy_and_mode() {
    for strategy in [Strategy::Nvb, Strategy::Rgb] {
        for mode in [CoarseningMode::None, CoarseningMode::ResetToInitial, CoarseningMode::Matching] {
            let config = decay_config(strategy, mode);
            let mesh = meshgen::icosphere_with(2, strategy);
            let out = run(&SphereDecay::default(), &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap();
            check_gates(&out.log, config.tol, config.t_end);
            out.mesh.check_conformity().unwrap();
            assert_eq!(out.solution.mesh(), out.mesh.id());
            if mode == CoarseningMode::None {
                assert!(out.log.steps.windows(2).all(|w| w[1].dofs >= w[0].dofs));
            }
        }
    }
}

#[test]
fn doerfler_marking_also_respects_the_gates() {
    let mut config = decay_config(Strategy::Nvb, CoarseningMode::Matching);
    config.criterion = Criterion::Doerfler;
    let out = run(
        &SphereDecay::default(),
        &Sphere::UNIT,
        &meshgen::icosphere_with(2, Strategy::Nvb),
        &config,
        &mut (),
        &NoClock,
    )
    .unwrap();
    check_gates(&out.log, config.tol, config.t_end);
}

#[test]
fn identical_inputs_give_identical_logs() {
    let config = decay_config(Strategy::Rgb, CoarseningMode::Matching);
    let mesh = meshgen::icosphere(2);
    let a = run(&SphereDecay::default(), &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap();
    let b = run(&SphereDecay::default(), &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.solution.values(), b.solution.values());
}

#[test]
fn zero_data_never_refines() {
    let mesh = meshgen::icosphere_with(1, Strategy::Nvb);
    let config = AdaptiveConfig::new(1e-6, 0.001, 2.0, 0.5, 0.2);
    let out = run(&Zero { t_end: 2.0 }, &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap();
    check_gates(&out.log, config.tol, 2.0);
    // τ doubles from 0.001 until the final step is clamped
    assert_eq!(out.log.steps.len(), 11);
    for s in &out.log.steps {
        assert!(s.spatial_iters == 0 && s.dofs <= mesh.node_count() && s.eta_h_sq == 0.0, "{s:?}");
    }
    assert!(out.solution.values().iter().all(|&v| v == 0.0));
}

#[test]
fn reset_mode_starts_every_step_from_the_initial_mesh() {
    let config = decay_config(Strategy::Nvb, CoarseningMode::ResetToInitial);
    let mesh = meshgen::icosphere_with(2, Strategy::Nvb);
    let out = run(&SphereDecay::default(), &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap();
    assert_eq!(out.mesh.node_count(), mesh.node_count());
    for s in &out.log.steps {
        assert_eq!(s.nodes_removed, s.dofs - mesh.node_count());
    }
}

#[test]
fn unreachable_tolerance_aborts_with_a_guard() {
    let mut config = AdaptiveConfig::new(1e-3, 0.1, 1.0, 0.5, 0.2);
    config.dof_cap = 3000;
    let mesh = resolved(&SphereDecay::default(), 1e-3);
    let err = run(&SphereDecay::default(), &Sphere::UNIT, &mesh, &config, &mut (), &NoClock).unwrap_err();
    assert!(matches!(err, Error::DofCapExceeded { .. } | Error::SpatialStagnation { .. }), "{err:?}");
}

struct PeakAudit<'a> {
    problem: &'a MovingPeak,
    worst: f64,
    dofs: Vec<(f64, usize)>,
}

impl Observer for PeakAudit<'_> {
    fn accepted(&mut self, record: &StepRecord, mesh: &SurfaceMesh, _: &FeFunction) -> surfadapt_core::Result<()> {
        let center = self.problem.center(record.t);
        let near = (0..mesh.triangle_count())
            .filter(|&t| {
                let p = mesh.triangle_points(t);
                ((p[0] + p[1] + p[2]) / 3.0 - center).norm() <= 0.7
            })
            .count();
        self.worst = self.worst.min(near as f64 / mesh.triangle_count() as f64);
        self.dofs.push((record.t, record.dofs));
        Ok(())
    }
}

#[test]
fn moving_peak_mesh_follows_the_peak() {
    let problem = MovingPeak::default();
    let config = AdaptiveConfig::new(0.8, 0.01, problem.t_end(), 0.5, 0.2);
    let mesh = resolved(&problem, config.tol);
    let mut audit = PeakAudit { problem: &problem, worst: 1.0, dofs: vec![] };
    let out = run(&problem, &Sphere::UNIT, &mesh, &config, &mut audit, &NoClock).unwrap();
    check_gates(&out.log, config.tol, problem.t_end());
    assert!(audit.worst >= 0.5, "smallest share near the peak {}", audit.worst);
    let near_t0 = audit.dofs.iter().filter(|(t, _)| (t - 0.5).abs() <= 0.05).map(|d| d.1).min().unwrap();
    let peak = audit.dofs.iter().map(|d| d.1).max().unwrap();
    assert!(near_t0 < peak, "no dip near t0: {near_t0} vs {peak}");
}
