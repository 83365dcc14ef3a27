use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfadapt_core::problems::{MovingPeak, Problem, SphereDecay};
use surfadapt_core::Vec3;

fn random_point(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Fourth-order central second difference of `g` at 0 with step `h`.
fn second_difference(g: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-g(2.0 * h) + 16.0 * g(h) - 30.0 * g(0.0) + 16.0 * g(-h) - g(-2.0 * h)) / (12.0 * h * h)
}

/// Fourth-order central first difference of `g` at 0 with step `h`.
fn first_difference(g: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h)
}

/// Laplace–Beltrami operator on the unit sphere: the ambient Laplacian of the
/// radially constant extension, sampled on stencils lifted back to the sphere.
fn surface_laplacian(u: impl Fn(&Vec3) -> f64, x: &Vec3) -> f64 {
    let ext = |y: Vec3| u(&y.normalize());
    (0..3)
        .map(|i| {
            let e = Vec3::ith(i, 1.0);
            second_difference(|s| ext(x + e * s), 1e-3)
        })
        .sum()
}

fn surface_gradient(u: impl Fn(&Vec3) -> f64, x: &Vec3) -> Vec3 {
    let ext = |y: Vec3| u(&y.normalize());
    Vec3::from_fn(|i, _| first_difference(|s| ext(x + Vec3::ith(i, 1.0) * s), 1e-4))
}

fn check_pde(problem: &dyn Problem, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let x = random_point(&mut rng);
        let t = rng.gen_range(0.05..problem.t_end() - 0.05);
        let u = |y: &Vec3, s: f64| problem.exact(y, s).unwrap();
        let dt = first_difference(|s| u(&x, t + s), 2e-4);
        let lap = surface_laplacian(|y| u(y, t), &x);
        let f = problem.rhs(&x, t);
        let scale = 1.0 + f.abs();
        assert!((dt - lap - f).abs() <= 1e-6 * scale, "{}: x={x:?} t={t}: {} vs {f}", problem.name(), dt - lap);

        let g = problem.exact_gradient(&x, t).unwrap();
        let fd = surface_gradient(|y| u(y, t), &x);
        assert!((g - fd).norm() <= 1e-6 * (1.0 + g.norm()), "{}: gradient {g:?} vs {fd:?}", problem.name());
        assert!(g.dot(&x).abs() <= 1e-12 * (1.0 + g.norm()));
    }
}

#[test]
fn sphere_decay_satisfies_the_heat_equation() {
    check_pde(&SphereDecay { t_end: 3.0 }, 1);
}

#[test]
fn moving_peak_satisfies_the_heat_equation() {
    check_pde(&MovingPeak::default(), 2);
}

#[test]
fn moving_peak_timing_variant_satisfies_the_heat_equation() {
    let p = MovingPeak::timing();
    assert_eq!((p.a, p.b, p.r), (50.0, 100.0, 0.5));
    check_pde(&p, 3);
}

#[test]
fn initial_values_match_the_exact_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let problems: [&dyn Problem; 3] = [&SphereDecay::default(), &MovingPeak::default(), &MovingPeak::timing()];
    for p in problems {
        for _ in 0..20 {
            let x = random_point(&mut rng);
            assert!((p.initial(&x) - p.exact(&x, 0.0).unwrap()).abs() <= 1e-14);
        }
    }
}

#[test]
fn moving_peak_starts_at_the_first_axis_and_moves_along_the_equator() {
    let p = MovingPeak::default();
    assert!((p.center(0.0) - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
    assert!((p.center(1.0) - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-14);
    for k in 0..10 {
        let c = p.center(k as f64 / 10.0);
        assert!(c.z.abs() < 1e-14 && (c.norm() - 1.0).abs() < 1e-14);
    }
}
