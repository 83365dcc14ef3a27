use approx::assert_relative_eq;
use proptest::prelude::*;
use surfadapt_core::geometry::{
    closest_point_differential, geometric_operators, lift, measure_ratio, LevelSetSurface, Sphere, Torus,
};
use surfadapt_core::mesh::triangle_frame;
use surfadapt_core::meshgen;
use surfadapt_core::{Mat3, Vec3};

const TORUS: Torus = Torus { major: 2.0, minor: 0.5 };

fn brute_force_closest_on_torus(x: &Vec3, n: usize) -> Vec3 {
    let mut best = (f64::INFINITY, Vec3::zeros());
    for i in 0..n {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        for j in 0..n {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            let rho = TORUS.major + TORUS.minor * theta.cos();
            let y = Vec3::new(rho * phi.cos(), rho * phi.sin(), TORUS.minor * theta.sin());
            let d = (x - y).norm();
            if d < best.0 {
                best = (d, y);
            }
        }
    }
    best.1
}

#[test]
fn torus_lift_matches_sampled_minimiser() {
    let y = lift(&TORUS, &Vec3::new(3.0, 0.0, 0.0)).unwrap();
    assert_relative_eq!(y, Vec3::new(2.5, 0.0, 0.0), epsilon = 1e-12);

    for x in [Vec3::new(1.9, 0.7, 0.3), Vec3::new(-2.2, 1.1, -0.4), Vec3::new(0.3, -2.4, 0.1)] {
        let y = lift(&TORUS, &x).unwrap();
        let sampled = brute_force_closest_on_torus(&x, 720);
        assert!((y - sampled).norm() < 2e-2, "{y} vs {sampled}");
        assert!((x - y).norm() <= (x - sampled).norm() + 1e-12);
    }
}

#[test]
fn sphere_lift_is_radial() {
    let y = lift(&Sphere::UNIT, &Vec3::new(2.0, 0.0, 0.0)).unwrap();
    assert_relative_eq!(y, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
}

#[test]
fn distance_gradient_has_unit_length() {
    let points = [Vec3::new(0.3, 0.9, -0.2), Vec3::new(1.2, -0.4, 0.5), Vec3::new(-0.5, -0.5, 0.6)];
    for x in points {
        assert_relative_eq!(Sphere::UNIT.gradient(&x).norm(), 1.0, epsilon = 1e-10);
    }
    for x in [Vec3::new(2.3, 0.2, 0.1), Vec3::new(-1.0, 1.6, -0.3)] {
        assert_relative_eq!(TORUS.gradient(&x).norm(), 1.0, epsilon = 1e-10);
    }
}

#[test]
fn projectors_are_rank_two() {
    let x = Vec3::new(0.6, 0.5, 0.55);
    let nu_h = Vec3::new(0.62, 0.48, 0.6).normalize();
    let ops = geometric_operators(&Sphere::UNIT, &x, &nu_h).unwrap();
    for p in [ops.p, ops.p_h] {
        assert_relative_eq!(p * p, p, epsilon = 1e-10);
        assert_relative_eq!(p, p.transpose(), epsilon = 1e-10);
        assert_relative_eq!(p.trace(), 2.0, epsilon = 1e-10);
    }
}

fn lift_jacobian_fd(x: &Vec3) -> Mat3 {
    let h = 1e-5;
    let mut j = Mat3::zeros();
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        let col = (lift(&Sphere::UNIT, &(x + e)).unwrap() - lift(&Sphere::UNIT, &(x - e)).unwrap()) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

#[test]
fn measure_ratio_matches_finite_difference_jacobian() {
    let a = Vec3::new(1.0, 0.0, 0.0);
    let b = Vec3::new(-0.5, 3f64.sqrt() / 2.0, 0.0);
    let c = Vec3::new(-0.5, -(3f64.sqrt()) / 2.0, 0.0);
    // tilt the equilateral triangle off the equator so it is a proper cap
    let r = nalgebra::Rotation3::from_euler_angles(0.0, 0.7, 0.0);
    let p = [
        r * (a * 0.6 + Vec3::new(0.0, 0.0, 0.8)),
        r * (b * 0.6 + Vec3::new(0.0, 0.0, 0.8)),
        r * (c * 0.6 + Vec3::new(0.0, 0.0, 0.8)),
    ];
    let x = (p[0] + p[1] + p[2]) / 3.0;
    let (t1, t2) = (p[1] - p[0], p[2] - p[0]);
    let mu = measure_ratio(&Sphere::UNIT, &x, &t1, &t2).unwrap();
    let j = lift_jacobian_fd(&x);
    let expected = (j * t1).cross(&(j * t2)).norm() / t1.cross(&t2).norm();
    assert_relative_eq!(mu, expected, max_relative = 1e-6);
    assert_relative_eq!(closest_point_differential(&Sphere::UNIT, &x), j, epsilon = 1e-6);
}

fn fitted_order(h: &[f64], q: &[f64]) -> f64 {
    let n = h.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = h.iter().zip(q).map(|(h, q)| (h.ln(), q.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn geometric_errors_are_second_order_on_icospheres() {
    let (mut h, mut d, mut mu) = (vec![], vec![], vec![]);
    for level in 2..=5 {
        let mesh = meshgen::icosphere(level);
        let (mut max_d, mut max_mu) = (0.0f64, 0.0f64);
        for t in 0..mesh.triangle_count() {
            let p = mesh.triangle_points(t);
            let (n, _) = triangle_frame(&p).unwrap();
            let x = (p[0] + p[1] + p[2]) / 3.0;
            max_d = max_d.max(Sphere::UNIT.distance(&x).abs());
            let ops = geometric_operators(&Sphere::UNIT, &x, &n).unwrap();
            assert!(ops.nu.dot(&n) > 0.0);
            max_mu = max_mu.max((1.0 - ops.mu_h).abs());
        }
        h.push(mesh.mesh_size());
        d.push(max_d);
        mu.push(max_mu);
    }
    assert!((fitted_order(&h, &d) - 2.0).abs() < 0.3);
    assert!((fitted_order(&h, &mu) - 2.0).abs() < 0.3);
}

fn point_near_sphere() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, 0.0..std::f64::consts::TAU, 0.6..1.4f64).prop_map(|(z, phi, r)| {
        let s = (1.0 - z * z).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z) * r
    })
}

fn point_near_torus() -> impl Strategy<Value = Vec3> {
    (0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU, -0.3..0.3f64).prop_map(|(phi, theta, d)| {
        let r = TORUS.minor + d;
        let rho = TORUS.major + r * theta.cos();
        Vec3::new(rho * phi.cos(), rho * phi.sin(), r * theta.sin())
    })
}

proptest! {
    #[test]
    fn sphere_lift_is_idempotent(x in point_near_sphere()) {
        let y = lift(&Sphere::UNIT, &x).unwrap();
        let z = lift(&Sphere::UNIT, &y).unwrap();
        prop_assert!((y - z).norm() <= 1e-12);
        prop_assert!(Sphere::UNIT.distance(&y).abs() <= 1e-12);
    }

    #[test]
    fn torus_lift_is_idempotent(x in point_near_torus()) {
        let y = lift(&TORUS, &x).unwrap();
        let z = lift(&TORUS, &y).unwrap();
        prop_assert!((y - z).norm() <= 1e-12);
        prop_assert!(TORUS.distance(&y).abs() <= 1e-12);
        // y = x − d(x) ν(y)
        let residual = y - (x - TORUS.normal(&y) * TORUS.distance(&x));
        prop_assert!(residual.norm() <= 1e-12);
    }
}
