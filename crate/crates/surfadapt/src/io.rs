//! OFF meshes, legacy VTK snapshots and the CSV schemas.

use std::io::{self, BufRead, Write};

use surfadapt_core::adaptive::{FixedMeshRun, StepRecord};
use surfadapt_core::fem::FeFunction;
use surfadapt_core::mesh::SurfaceMesh;
use surfadapt_core::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("OFF line {line}: {message}")]
    Off { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] surfadapt_core::Error),
}

pub const CONVERGENCE_HEADER: [&str; 6] = ["h", "tau", "dofs", "err_linf_l2", "err_l2_h1", "estimator"];

pub const RUNLOG_HEADER: [&str; 13] = [
    "step",
    "t",
    "tau",
    "dofs",
    "eta_h_sq",
    "eta_tau_sq",
    "eta_c_sq",
    "eta_combined",
    "spatial_iters",
    "coarsen_iters",
    "nodes_removed",
    "cg_iters",
    "wall_ms",
];

pub const GEOMETRY_HEADER: [&str; 5] = ["level", "h", "max_abs_d", "max_abs_one_minus_mu", "max_norm_P_minus_Atilde"];

fn off_error(line: usize, message: &str) -> FormatError {
    FormatError::Off { line, message: message.to_owned() }
}

struct Tokens {
    inner: std::vec::IntoIter<(usize, String)>,
    last_line: usize,
}

impl Tokens {
    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, FormatError> {
        let (line, t) = self
            .inner
            .next()
            .ok_or_else(|| off_error(self.last_line, &format!("unexpected end of file reading {what}")))?;
        self.last_line = line;
        t.parse().map_err(|_| off_error(line, &format!("invalid {what} `{t}`")))
    }
}

/// Reads an ASCII OFF triangle mesh. Comments start with `#`.
///
/// Refinement edges are initialised, so the mesh can be refined directly.
pub fn read_off<R: BufRead>(reader: R) -> Result<SurfaceMesh, FormatError> {
    let mut tokens = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(|t| (i + 1, t.to_owned())));
    }
    let mut tokens = Tokens { inner: tokens.into_iter(), last_line: 0 };
    match tokens.inner.next() {
        Some((_, ref t)) if t == "OFF" => {}
        Some((line, _)) => return Err(off_error(line, "missing OFF keyword")),
        None => return Err(off_error(0, "empty file")),
    }
    let nv: usize = tokens.parse("vertex count")?;
    let nf: usize = tokens.parse("face count")?;
    let _: usize = tokens.parse("edge count")?;

    let mut nodes = Vec::with_capacity(nv);
    for _ in 0..nv {
        nodes.push(Vec3::new(tokens.parse("coordinate")?, tokens.parse("coordinate")?, tokens.parse("coordinate")?));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k: usize = tokens.parse("face size")?;
        if k != 3 {
            return Err(off_error(tokens.last_line, "only triangular faces are supported"));
        }
        triangles.push([tokens.parse("vertex index")?, tokens.parse("vertex index")?, tokens.parse("vertex index")?]);
    }
    let mut mesh = SurfaceMesh::new(nodes, triangles)?;
    mesh.init_refinement_edges();
    Ok(mesh)
}

pub fn write_off<W: Write>(mut w: W, mesh: &SurfaceMesh) -> io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} {}", mesh.node_count(), mesh.triangle_count(), mesh.edges().len())?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Legacy VTK POLYDATA with the point scalar `u`.
pub fn write_vtk<W: Write>(mut w: W, mesh: &SurfaceMesh, u: &FeFunction, title: &str) -> Result<(), FormatError> {
    u.check(mesh)?;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET POLYDATA")?;
    writeln!(w, "POINTS {} double", mesh.node_count())?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    writeln!(w, "POLYGONS {} {}", mesh.triangle_count(), 4 * mesh.triangle_count())?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "POINT_DATA {}", mesh.node_count())?;
    writeln!(w, "SCALARS u double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in u.values() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn convergence_writer<W: Write>(w: W) -> Result<csv::Writer<W>, FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CONVERGENCE_HEADER)?;
    Ok(out)
}

pub fn write_convergence_row<W: Write>(out: &mut csv::Writer<W>, r: &FixedMeshRun) -> Result<(), FormatError> {
    out.write_record([
        fmt_f64(r.h),
        fmt_f64(r.tau),
        r.dofs.to_string(),
        fmt_f64(r.err_linf_l2),
        fmt_f64(r.err_l2_h1),
        fmt_f64(r.estimator),
    ])?;
    Ok(())
}

pub fn runlog_writer<W: Write>(w: W) -> Result<csv::Writer<W>, FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUNLOG_HEADER)?;
    Ok(out)
}

pub fn write_runlog_row<W: Write>(out: &mut csv::Writer<W>, r: &StepRecord) -> Result<(), FormatError> {
    out.write_record([
        r.step.to_string(),
        fmt_f64(r.t),
        fmt_f64(r.tau),
        r.dofs.to_string(),
        fmt_f64(r.eta_h_sq),
        fmt_f64(r.eta_tau_sq),
        fmt_f64(r.eta_c_sq),
        fmt_f64(r.eta_combined),
        r.spatial_iters.to_string(),
        r.coarsen_iters.to_string(),
        r.nodes_removed.to_string(),
        r.cg_iters.to_string(),
        fmt_f64(r.wall_ms),
    ])?;
    Ok(())
}
