use std::path::Path;
use std::process::{Command, Output};

fn surfadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfadapt")).args(args).output().unwrap()
}

/// Runs `command` (whitespace separated) followed by `--out <out>` and `extra`.
fn surfadapt_to(command: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = command.split_whitespace().collect();
    args.extend(["--out", path(out)]);
    args.extend(extra);
    surfadapt(&args)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_guard_abort(out: &Output) {
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("surfadapt: "), "{stderr}");
}

#[test]
fn convergence_writes_one_row_per_level_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let status = surfadapt_to("convergence --problem sphere-decay --levels 1..2 --taus 0.5,0.25 --t-end 1", &out, &[]);
    assert!(status.status.success(), "{status:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "h,tau,dofs,err_linf_l2,err_l2_h1,estimator");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].contains(",0.5,42,") && lines[4].contains(",0.25,162,"), "{text}");
}

#[test]
fn run_streams_the_log_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let snaps = dir.path().join("snaps");
    let status = surfadapt_to(
        "run --problem sphere-decay --tol 0.1 --tau0 0.1 --theta 0.5 --theta-star 0.2 --criterion doerfler --strategy rgb --t-end 0.5",
        &out,
        &["--snapshots", path(&snaps)],
    );
    assert!(status.status.success(), "{status:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let steps = text.lines().count() - 1;
    assert!(steps >= 1);
    assert!(text.starts_with("step,t,tau,dofs,"));
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[1], "0.5");
    assert_eq!(std::fs::read_dir(&snaps).unwrap().count(), steps);
    let first = std::fs::read_to_string(snaps.join("step_00001.vtk")).unwrap();
    assert!(first.contains("SCALARS u double 1"));
}

#[test]
fn verify_geometry_reports_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("geo.csv");
    let status = surfadapt(&["verify-geometry", "--surface", "torus", "--levels", "0..2", "--out", path(&out)]);
    assert!(status.status.success(), "{status:?}");
    assert!(String::from_utf8(status.stdout).unwrap().contains("fitted orders"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn invalid_configuration_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let status = surfadapt_to("run --problem sphere-decay --tol 0.1 --tau0 0.1 --theta 1.5 --t-end 1", &out, &[]);
    assert_guard_abort(&status);
}

#[test]
fn solver_guard_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    // τ₀ far below the default τ_min
    let status = surfadapt_to("run --problem sphere-decay --tol 0.1 --tau0 1e-12 --t-end 1", &out, &[]);
    assert_guard_abort(&status);
}

#[test]
fn unwritable_output_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("geo.csv");
    let status = surfadapt(&["verify-geometry", "--surface", "sphere", "--levels", "1", "--out", path(&out)]);
    assert_guard_abort(&status);
}

#[test]
fn malformed_arguments_are_rejected() {
    let status = surfadapt(&["convergence", "--problem", "sphere-decay", "--levels", "3..1", "--out", "x.csv"]);
    assert_eq!(status.status.code(), Some(2));
    let status =
        surfadapt(&["run", "--problem", "nope", "--tol", "1", "--tau0", "1", "--t-end", "1", "--out", "x.csv"]);
    assert_eq!(status.status.code(), Some(2));
}
