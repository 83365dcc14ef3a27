//! Experiment drivers: convergence sweep, adaptive run, geometry
//! verification and the coarsening strategy comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::time::Instant;

use surfadapt_core::adaptive::{
    self, fixed_mesh_run, resolve_initial_data, AdaptiveConfig, AdaptiveOutcome, Clock, CoarseningMode, FixedMeshRun,
    Observer, StepRecord,
};
use surfadapt_core::fem::{FeFunction, QuadratureRule};
use surfadapt_core::geometry::{geometric_operators, LevelSetSurface, Sphere, Torus};
use surfadapt_core::mesh::{triangle_frame, SurfaceMesh};
use surfadapt_core::meshgen;
use surfadapt_core::problems::{MovingPeak, Problem, SphereDecay};
use surfadapt_core::refinement::{Criterion, Strategy};
use surfadapt_core::{Error, Mat3};

use crate::io::{self, FormatError};

/// Problems known to the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProblemName {
    SphereDecay,
    MovingPeak,
    MovingPeakTiming,
}

impl ProblemName {
    pub fn build(self, t_end: f64) -> Box<dyn Problem> {
        match self {
            ProblemName::SphereDecay => Box::new(SphereDecay { t_end }),
            ProblemName::MovingPeak => Box::new(MovingPeak { t_end, ..MovingPeak::default() }),
            ProblemName::MovingPeakTiming => Box::new(MovingPeak { t_end, ..MovingPeak::timing() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SurfaceName {
    Sphere,
    Torus,
}

/// Torus used by the geometry verification.
pub const TORUS: Torus = Torus { major: 2.0, minor: 0.5 };

/// Wall clock in milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl Default for StdClock {
    fn default() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

/// Least-squares slope of `log q` against `log h`.
pub fn fitted_order(h: &[f64], q: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h.iter().zip(q).map(|(h, q)| (h.ln(), q.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Experimental orders `log(e_k/e_{k+1}) / log(h_k/h_{k+1})` of successive pairs.
pub fn eoc(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2).zip(e.windows(2)).map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect()
}

/// Uniform time stepping on icosphere levels `levels` for every τ in `taus`,
/// ordered by τ, then level.
pub fn convergence_sweep(
    problem: &dyn Problem,
    levels: RangeInclusive<u32>,
    taus: &[f64],
    t_end: f64,
) -> Result<Vec<FixedMeshRun>, Error> {
    let meshes: Vec<SurfaceMesh> = levels.map(meshgen::icosphere).collect();
    let mut rows = Vec::new();
    for &tau in taus {
        for mesh in &meshes {
            rows.push(fixed_mesh_run(problem, &Sphere::UNIT, mesh, tau, t_end)?);
        }
    }
    Ok(rows)
}

/// One row of the geometry verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryLevel {
    pub level: u32,
    pub h: f64,
    /// Largest |d| over the quadrature points of the flat triangles.
    pub max_abs_d: f64,
    pub max_abs_one_minus_mu: f64,
    /// Largest row-sum norm of `P_h − Ã_h`.
    pub max_norm_p_minus_atilde: f64,
}

fn row_sum_norm(m: &Mat3) -> f64 {
    (0..3).map(|i| (0..3).map(|j| m[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Geometric errors of a mesh interpolating `surface`, sampled at the
/// degree-4 quadrature points.
pub fn geometry_errors<S: LevelSetSurface + ?Sized>(
    surface: &S,
    mesh: &SurfaceMesh,
    level: u32,
) -> Result<GeometryLevel, Error> {
    let rule = QuadratureRule::degree4();
    let mut row = GeometryLevel {
        level,
        h: mesh.mesh_size(),
        max_abs_d: 0.0,
        max_abs_one_minus_mu: 0.0,
        max_norm_p_minus_atilde: 0.0,
    };
    for t in 0..mesh.triangle_count() {
        let p = mesh.triangle_points(t);
        let (normal, _) = triangle_frame(&p).ok_or(Error::DegenerateTriangle { triangle: Some(t) })?;
        for q in 0..rule.points.len() {
            let x = rule.point(q, &p);
            let ops = geometric_operators(surface, &x, &normal)?;
            row.max_abs_d = row.max_abs_d.max(surface.distance(&x).abs());
            row.max_abs_one_minus_mu = row.max_abs_one_minus_mu.max((1.0 - ops.mu_h).abs());
            row.max_norm_p_minus_atilde = row.max_norm_p_minus_atilde.max(row_sum_norm(&(ops.p_h - ops.a_tilde)));
        }
    }
    Ok(row)
}

/// Per-level geometric errors and their fitted orders in h.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub rows: Vec<GeometryLevel>,
    /// Orders of `max_abs_d`, `max_abs_one_minus_mu`, `max_norm_p_minus_atilde`.
    pub orders: [f64; 3],
}

pub fn verify_geometry(surface: SurfaceName, levels: RangeInclusive<u32>) -> Result<GeometryReport, Error> {
    let rows = levels
        .map(|level| match surface {
            SurfaceName::Sphere => geometry_errors(&Sphere::UNIT, &meshgen::icosphere(level), level),
            SurfaceName::Torus => geometry_errors(&TORUS, &meshgen::torus(&TORUS, level), level),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let order = |f: fn(&GeometryLevel) -> f64| fitted_order(&h, &rows.iter().map(f).collect::<Vec<_>>());
    let orders = [order(|r| r.max_abs_d), order(|r| r.max_abs_one_minus_mu), order(|r| r.max_norm_p_minus_atilde)];
    Ok(GeometryReport { rows, orders })
}

pub fn write_geometry<W: Write>(w: W, report: &GeometryReport) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(io::GEOMETRY_HEADER)?;
    for r in &report.rows {
        out.write_record([
            r.level.to_string(),
            io::fmt_f64(r.h),
            io::fmt_f64(r.max_abs_d),
            io::fmt_f64(r.max_abs_one_minus_mu),
            io::fmt_f64(r.max_norm_p_minus_atilde),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Streams accepted steps to a runlog CSV and optional VTK snapshots.
pub struct RunLogSink<W: Write> {
    csv: csv::Writer<W>,
    snapshots: Option<PathBuf>,
    /// First write failure; the run is aborted when it occurs.
    pub error: Option<FormatError>,
}

impl<W: Write> RunLogSink<W> {
    pub fn new(w: W, snapshots: Option<PathBuf>) -> Result<Self, FormatError> {
        if let Some(dir) = &snapshots {
            std::fs::create_dir_all(dir)?;
        }
        Ok(RunLogSink { csv: io::runlog_writer(w)?, snapshots, error: None })
    }

    fn write(&mut self, record: &StepRecord, mesh: &SurfaceMesh, u: &FeFunction) -> Result<(), FormatError> {
        io::write_runlog_row(&mut self.csv, record)?;
        self.csv.flush()?;
        if let Some(dir) = &self.snapshots {
            let path = dir.join(format!("step_{:05}.vtk", record.step));
            let mut file = BufWriter::new(File::create(path)?);
            io::write_vtk(&mut file, mesh, u, &format!("u at t = {}", record.t))?;
            file.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), FormatError> {
        match self.error.take() {
            Some(e) => Err(e),
            None => Ok(self.csv.flush()?),
        }
    }
}

impl<W: Write> Observer for RunLogSink<W> {
    fn accepted(&mut self, record: &StepRecord, mesh: &SurfaceMesh, u: &FeFunction) -> surfadapt_core::Result<()> {
        self.write(record, mesh, u).map_err(|e| {
            self.error = Some(e);
            Error::ObserverAborted
        })
    }
}

/// Icosphere of `initial_level` built with the configured strategy, refined
/// further until the initial data is resolved within TOL.
pub fn initial_mesh(problem: &dyn Problem, config: &AdaptiveConfig, initial_level: u32) -> Result<SurfaceMesh, Error> {
    let mesh = meshgen::icosphere_with(initial_level, config.strategy);
    resolve_initial_data(mesh, &Sphere::UNIT, problem, config.tol, config.strategy, 8)
}

/// Adaptive run on the unit sphere starting from [`initial_mesh`].
pub fn adaptive_run(
    problem: &dyn Problem,
    config: &AdaptiveConfig,
    initial_level: u32,
    observer: &mut dyn Observer,
) -> Result<AdaptiveOutcome, Error> {
    let mesh = initial_mesh(problem, config, initial_level)?;
    adaptive::run(problem, &Sphere::UNIT, &mesh, config, observer, &StdClock::default())
}

/// One cell of the strategy comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub strategy: Strategy,
    pub coarsening: CoarseningMode,
    pub wall_ms: f64,
    /// Sum of the DOF count over accepted steps.
    pub dof_steps: u64,
    /// Sum of the DOF count over all linear solves.
    pub dof_work: u64,
    pub steps: usize,
    pub rejected: usize,
    pub max_dofs: usize,
    pub final_dofs: usize,
}

/// Configuration of the strategy comparison: TOL 0.4, θ = 0.8, θ* = 0.2, T = 1.
pub fn timing_config(strategy: Strategy, coarsening: CoarseningMode) -> AdaptiveConfig {
    let mut config = AdaptiveConfig::new(0.4, 0.01, 1.0, 0.8, 0.2);
    config.criterion = Criterion::Bulk;
    config.strategy = strategy;
    config.coarsening = coarsening;
    config
}

/// Moving-peak-timing under {RGB, NVB} × {none, reset, matching}.
pub fn timing_comparison(initial_level: u32) -> Result<Vec<TimingRow>, Error> {
    let problem = ProblemName::MovingPeakTiming.build(1.0);
    let mut rows = Vec::new();
    for strategy in [Strategy::Rgb, Strategy::Nvb] {
        for coarsening in [CoarseningMode::None, CoarseningMode::ResetToInitial, CoarseningMode::Matching] {
            let config = timing_config(strategy, coarsening);
            let start = Instant::now();
            let out = adaptive_run(problem.as_ref(), &config, initial_level, &mut ())?;
            let steps = &out.log.steps;
            rows.push(TimingRow {
                strategy,
                coarsening,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                dof_steps: steps.iter().map(|s| s.dofs as u64).sum(),
                dof_work: out.log.dof_work,
                steps: steps.len(),
                rejected: out.log.rejected,
                max_dofs: steps.iter().map(|s| s.dofs).max().unwrap_or(0),
                final_dofs: out.mesh.node_count(),
            });
        }
    }
    Ok(rows)
}

pub const TIMING_HEADER: [&str; 9] =
    ["strategy", "coarsening", "wall_ms", "dof_steps", "dof_work", "steps", "rejected", "max_dofs", "final_dofs"];

pub fn write_timing<W: Write>(w: W, rows: &[TimingRow]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TIMING_HEADER)?;
    for r in rows {
        let strategy = match r.strategy {
            Strategy::Nvb => "nvb",
            Strategy::Rgb => "rgb",
        };
        let coarsening = match r.coarsening {
            CoarseningMode::None => "none",
            CoarseningMode::ResetToInitial => "reset",
            CoarseningMode::Matching => "matching",
        };
        out.write_record([
            strategy.to_owned(),
            coarsening.to_owned(),
            io::fmt_f64(r.wall_ms),
            r.dof_steps.to_string(),
            r.dof_work.to_string(),
            r.steps.to_string(),
            r.rejected.to_string(),
            r.max_dofs.to_string(),
            r.final_dofs.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
