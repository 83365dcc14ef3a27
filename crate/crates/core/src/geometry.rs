//! The exact surface Γ as the zero level set of a signed distance function,
//! and the continuous geometric quantities derived from it: normals, the
//! closest-point lift, the measure quotient μ_h and the operators relating
//! discrete and exact tangential gradients.

use alloc::boxed::Box;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Mat3, Result, Vec3};

/// Maximum number of fixed-point corrections performed by [`lift`].
pub const LIFT_MAX_ITERATIONS: usize = 100;
/// Increment below which the lift iteration is considered converged.
pub const LIFT_TOLERANCE: f64 = 1e-12;

/// A closed surface given as the zero level set of a signed distance function `d`.
///
/// `gradient` must equal the outward unit normal on Γ and `hessian` the
/// extended Weingarten map. Implementations should be exact signed distance
/// functions inside the band given by [`LevelSetSurface::tube`].
pub trait LevelSetSurface {
    fn distance(&self, x: &Vec3) -> f64;
    fn gradient(&self, x: &Vec3) -> Vec3;
    fn hessian(&self, x: &Vec3) -> Mat3;
    /// Radius of a ball (centred at the origin) containing the surface.
    fn bounding_radius(&self) -> f64;

    /// Band `−inner < d < outer` in which the closest point is unique and the
    /// lift is attempted. Defaults to `bounding_radius() / 4` on both sides.
    fn tube(&self) -> (f64, f64) {
        let r = self.bounding_radius() / 4.0;
        (r, r)
    }

    /// Outward unit normal of the level set through `x`.
    fn normal(&self, x: &Vec3) -> Vec3 {
        let g = self.gradient(x);
        g / g.norm()
    }
}

impl<S: LevelSetSurface + ?Sized> LevelSetSurface for &S {
    fn distance(&self, x: &Vec3) -> f64 {
        (**self).distance(x)
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        (**self).hessian(x)
    }
    fn bounding_radius(&self) -> f64 {
        (**self).bounding_radius()
    }
    fn tube(&self) -> (f64, f64) {
        (**self).tube()
    }
}

impl<S: LevelSetSurface + ?Sized> LevelSetSurface for Box<S> {
    fn distance(&self, x: &Vec3) -> f64 {
        (**self).distance(x)
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        (**self).hessian(x)
    }
    fn bounding_radius(&self) -> f64 {
        (**self).bounding_radius()
    }
    fn tube(&self) -> (f64, f64) {
        (**self).tube()
    }
}

/// Sphere of the given radius centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub radius: f64,
}

impl Sphere {
    pub const UNIT: Sphere = Sphere { radius: 1.0 };

    /// Radial projection; the analytic closest point map.
    pub fn project(&self, x: &Vec3) -> Vec3 {
        x * (self.radius / x.norm())
    }
}

impl LevelSetSurface for Sphere {
    fn distance(&self, x: &Vec3) -> f64 {
        x.norm() - self.radius
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        x / x.norm()
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        let r = x.norm();
        let n = x / r;
        (Mat3::identity() - n * n.transpose()) / r
    }
    fn bounding_radius(&self) -> f64 {
        self.radius
    }
    fn tube(&self) -> (f64, f64) {
        (self.radius, f64::INFINITY)
    }
}

/// Torus around the x₃ axis with centre-line radius `major` and tube radius `minor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus {
    pub major: f64,
    pub minor: f64,
}

impl Torus {
    // (ρ − R, x₃) in the meridian plane, together with ρ and the radial unit vector.
    fn meridian(&self, x: &Vec3) -> (f64, f64, f64, Vec3) {
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let e_rho = Vec3::new(x[0] / rho, x[1] / rho, 0.0);
        (rho - self.major, x[2], rho, e_rho)
    }
}

impl LevelSetSurface for Torus {
    fn distance(&self, x: &Vec3) -> f64 {
        let (w, z, _, _) = self.meridian(x);
        (w * w + z * z).sqrt() - self.minor
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        let (w, z, _, e_rho) = self.meridian(x);
        let s = (w * w + z * z).sqrt();
        e_rho * (w / s) + Vec3::z() * (z / s)
    }

    fn hessian(&self, x: &Vec3) -> Mat3 {
        let (w, z, rho, e_rho) = self.meridian(x);
        let s = (w * w + z * z).sqrt();
        // in-plane tangent of the meridian circle and the azimuthal direction
        let t = e_rho * (-z / s) + Vec3::z() * (w / s);
        let e_phi = Vec3::new(-e_rho[1], e_rho[0], 0.0);
        t * t.transpose() / s + e_phi * e_phi.transpose() * (w / (s * rho))
    }

    fn bounding_radius(&self) -> f64 {
        self.major + self.minor
    }
    fn tube(&self) -> (f64, f64) {
        (self.minor, self.major - self.minor)
    }
}

/// The plane x₃ = 0, used to check that flat geometry produces no geometric error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Plane;

impl LevelSetSurface for Plane {
    fn distance(&self, x: &Vec3) -> f64 {
        x[2]
    }
    fn gradient(&self, _x: &Vec3) -> Vec3 {
        Vec3::z()
    }
    fn hessian(&self, _x: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
    fn bounding_radius(&self) -> f64 {
        f64::INFINITY
    }
}

type ScalarField = Box<dyn Fn(&Vec3) -> f64 + Send + Sync>;
type VectorField = Box<dyn Fn(&Vec3) -> Vec3 + Send + Sync>;
type MatrixField = Box<dyn Fn(&Vec3) -> Mat3 + Send + Sync>;

/// A user-supplied signed distance function given by callbacks.
pub struct ImplicitSurface {
    distance: ScalarField,
    gradient: VectorField,
    hessian: MatrixField,
    bounding_radius: f64,
}

impl ImplicitSurface {
    pub fn new(
        distance: impl Fn(&Vec3) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static,
        hessian: impl Fn(&Vec3) -> Mat3 + Send + Sync + 'static,
        bounding_radius: f64,
    ) -> Self {
        Self { distance: Box::new(distance), gradient: Box::new(gradient), hessian: Box::new(hessian), bounding_radius }
    }
}

impl core::fmt::Debug for ImplicitSurface {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ImplicitSurface").field("bounding_radius", &self.bounding_radius).finish_non_exhaustive()
    }
}

impl LevelSetSurface for ImplicitSurface {
    fn distance(&self, x: &Vec3) -> f64 {
        (self.distance)(x)
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        (self.hessian)(x)
    }
    fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }
}

/// Closest-point lift `x ↦ xˡ` onto Γ, the solution of `xˡ = x − d(x) ν(xˡ)`.
///
/// Starts from `x − d(x)∇d(x)` (exact for a true signed distance function) and
/// corrects with `y ← x − d(x) ∇d(y)/|∇d(y)|` until the increment drops below
/// [`LIFT_TOLERANCE`].
pub fn lift<S: LevelSetSurface + ?Sized>(surface: &S, x: &Vec3) -> Result<Vec3> {
    let d = surface.distance(x);
    let (inner, outer) = surface.tube();
    let limit = if d < 0.0 { inner } else { outer };
    if !(d.abs() < limit) {
        return Err(Error::OutsideTube { distance: d, limit });
    }
    if d == 0.0 {
        return Ok(*x);
    }
    let scale = x.norm().max(1.0);
    let mut y = x - surface.gradient(x) * d;
    for _ in 0..LIFT_MAX_ITERATIONS {
        let next = x - surface.normal(&y) * d;
        let increment = (next - y).norm();
        y = next;
        if increment <= LIFT_TOLERANCE * scale {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence { iterations: LIFT_MAX_ITERATIONS })
}

/// Differential of the closest-point map, `I − ∇d∇dᵀ − d·Hess d`.
pub fn closest_point_differential<S: LevelSetSurface + ?Sized>(surface: &S, x: &Vec3) -> Mat3 {
    let g = surface.gradient(x);
    Mat3::identity() - g * g.transpose() - surface.hessian(x) * surface.distance(x)
}

/// Surface measure quotient μ_h = dσ/dσ_h at a point of a flat triangle
/// spanned by the tangents `t1`, `t2`.
pub fn measure_ratio<S: LevelSetSurface + ?Sized>(surface: &S, x: &Vec3, t1: &Vec3, t2: &Vec3) -> Result<f64> {
    let flat = t1.cross(t2).norm();
    if !(flat > 0.0) {
        return Err(Error::DegenerateTriangle { triangle: None });
    }
    let dp = closest_point_differential(surface, x);
    Ok((dp * t1).cross(&(dp * t2)).norm() / flat)
}

/// Pointwise geometric operators comparing Γ_h and Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricOperators {
    /// Measure quotient dσ/dσ_h.
    pub mu_h: f64,
    /// Exact normal ν = ∇d.
    pub nu: Vec3,
    /// Tangential projector `I − ννᵀ`.
    pub p: Mat3,
    /// Discrete projector `I − ν_hν_hᵀ`.
    pub p_h: Mat3,
    /// `Ã_h = R̃_h P_h`, so that ∫_Γ ∇_Γv·∇_Γw = ∫_{Γ_h} Ã_h ∇_{Γ_h}v⁻ˡ·∇_{Γ_h}w⁻ˡ.
    pub a_tilde: Mat3,
    /// `(I − d𝒜)⁻¹ (I − ν_hνᵀ/(ν_h·ν))`, mapping ∇_{Γ_h}v⁻ˡ to (∇_Γ v)(xˡ).
    pub gradient_lift: Mat3,
}

/// Builds μ_h, P, P_h and Ã_h at a point `x` of the discrete surface with
/// unit normal `nu_h`. `(I − d𝒜)` is inverted directly.
pub fn geometric_operators<S: LevelSetSurface + ?Sized>(
    surface: &S,
    x: &Vec3,
    nu_h: &Vec3,
) -> Result<GeometricOperators> {
    let nu = surface.normal(x);
    let alignment = nu_h.dot(&nu);
    if !(alignment > 0.0) {
        return Err(Error::NotAdmissible { nu_h_dot_nu: alignment });
    }
    let identity = Mat3::identity();
    let p = identity - nu * nu.transpose();
    let p_h = identity - nu_h * nu_h.transpose();

    let shape = identity - surface.hessian(x) * surface.distance(x);
    let shape_inv = shape.try_inverse().ok_or(Error::SingularShapeOperator)?;
    let oblique = identity - nu_h * nu.transpose() / alignment;

    let (t1, t2) = tangent_basis(nu_h);
    let mu_h = measure_ratio(surface, x, &t1, &t2)?;

    let gradient_lift = shape_inv * oblique;
    let r_tilde = p_h * gradient_lift.transpose() * gradient_lift * mu_h;
    Ok(GeometricOperators { mu_h, nu, p, p_h, a_tilde: r_tilde * p_h, gradient_lift })
}

/// An orthonormal pair spanning the plane orthogonal to the unit vector `n`.
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n[0].abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn central_jacobian<S: LevelSetSurface>(s: &S, x: &Vec3, t: &Vec3, eps: f64) -> Vec3 {
        (lift(s, &(x + t * eps)).unwrap() - lift(s, &(x - t * eps)).unwrap()) / (2.0 * eps)
    }

    #[test]
    fn sphere_lift_is_radial_projection() {
        let s = Sphere::UNIT;
        assert_relative_eq!(lift(&s, &Vec3::new(2.0, 0.0, 0.0)).unwrap(), Vec3::x(), epsilon = 1e-15);
        assert_relative_eq!(lift(&s, &Vec3::new(0.0, 0.0, 0.5)).unwrap(), Vec3::z(), epsilon = 1e-15);
        let x = Vec3::new(0.3, -0.7, 0.9);
        assert_relative_eq!(lift(&s, &x).unwrap(), s.project(&x), epsilon = 1e-15);
    }

    #[test]
    fn torus_lift_matches_sampled_closest_point() {
        let torus = Torus { major: 2.0, minor: 0.5 };
        let x = Vec3::new(3.0, 0.0, 0.0);
        let y = lift(&torus, &x).unwrap();
        assert_relative_eq!(y, Vec3::new(2.5, 0.0, 0.0), epsilon = 1e-14);

        // brute force: sample the torus parametrically and keep the nearest point
        let mut best = (f64::INFINITY, Vec3::zeros());
        let n = 720;
        for i in 0..n {
            let phi = core::f64::consts::TAU * i as f64 / n as f64;
            for j in 0..n {
                let theta = core::f64::consts::TAU * j as f64 / n as f64;
                let p = Vec3::new(
                    (2.0 + 0.5 * theta.cos()) * phi.cos(),
                    (2.0 + 0.5 * theta.cos()) * phi.sin(),
                    0.5 * theta.sin(),
                );
                let dist = (p - x).norm();
                if dist < best.0 {
                    best = (dist, p);
                }
            }
        }
        assert!((best.1 - y).norm() < 1e-2);
        assert_relative_eq!(best.0, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn torus_derivatives_match_finite_differences() {
        let torus = Torus { major: 2.0, minor: 0.5 };
        let x = Vec3::new(1.1, 1.7, 0.3);
        let h = 1e-6;
        for k in 0..3 {
            let e = Vec3::ith(k, h);
            let fd = (torus.distance(&(x + e)) - torus.distance(&(x - e))) / (2.0 * h);
            assert_relative_eq!(fd, torus.gradient(&x)[k], epsilon = 1e-8);
            let fd_grad = (torus.gradient(&(x + e)) - torus.gradient(&(x - e))) / (2.0 * h);
            assert_relative_eq!(fd_grad, torus.hessian(&x).column(k).into_owned(), epsilon = 1e-7);
        }
        assert_relative_eq!(torus.gradient(&x).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_has_unit_length_near_surface() {
        let torus = Torus { major: 2.0, minor: 0.5 };
        let sphere = Sphere::UNIT;
        for i in 0..50 {
            let a = 0.37 * i as f64;
            let p = Vec3::new(a.cos() * 2.2, a.sin() * 2.2, 0.1 * (a * 3.0).sin());
            assert!((torus.gradient(&p).norm() - 1.0).abs() < 1e-10);
            let q = Vec3::new(a.cos(), a.sin(), 0.4 * (a * 0.7).cos());
            assert!((sphere.gradient(&q).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn lift_is_idempotent_and_lands_on_surface() {
        let torus = Torus { major: 2.0, minor: 0.5 };
        let x = Vec3::new(1.3, 1.4, 0.35);
        let y = lift(&torus, &x).unwrap();
        assert!(torus.distance(&y).abs() <= 1e-12);
        let z = lift(&torus, &y).unwrap();
        assert!((z - y).norm() <= 1e-12);
        // x = y + d(x) ν(y)
        assert_relative_eq!(x, y + torus.normal(&y) * torus.distance(&x), epsilon = 1e-12);
    }

    #[test]
    fn lift_rejects_points_outside_tube() {
        assert!(matches!(lift(&Sphere::UNIT, &Vec3::zeros()), Err(Error::OutsideTube { .. })));
        let torus = Torus { major: 2.0, minor: 0.5 };
        assert!(matches!(lift(&torus, &Vec3::new(2.0, 0.0, 0.0)), Err(Error::OutsideTube { .. })));
        assert!(matches!(lift(&torus, &Vec3::new(0.0, 0.0, 0.3)), Err(Error::OutsideTube { .. })));
        let plane = ImplicitSurface::new(|x| x[2], |_| Vec3::z(), |_| Mat3::zeros(), 4.0);
        assert!(matches!(lift(&plane, &Vec3::new(0.0, 0.0, 1.5)), Err(Error::OutsideTube { .. })));
        assert!(lift(&plane, &Vec3::new(0.0, 0.0, 0.5)).is_ok());
    }

    #[test]
    fn measure_ratio_is_one_on_plane() {
        let x = Vec3::new(0.3, -2.0, 0.0);
        let mu = measure_ratio(&Plane, &x, &Vec3::new(1.0, 0.2, 0.0), &Vec3::new(-0.4, 1.0, 0.0)).unwrap();
        assert_eq!(mu, 1.0);
        assert!(matches!(
            measure_ratio(&Plane, &x, &Vec3::x(), &(Vec3::x() * 2.0)),
            Err(Error::DegenerateTriangle { .. })
        ));
    }

    #[test]
    fn measure_ratio_matches_finite_difference_jacobian() {
        // equilateral triangle inscribed in the unit sphere around the north pole
        let s = Sphere::UNIT;
        let z = 0.9_f64;
        let r = (1.0 - z * z).sqrt();
        let p: [Vec3; 3] = core::array::from_fn(|k| {
            let a = core::f64::consts::TAU * k as f64 / 3.0;
            Vec3::new(r * a.cos(), r * a.sin(), z)
        });
        let c = (p[0] + p[1] + p[2]) / 3.0;
        let t1 = p[1] - p[0];
        let t2 = p[2] - p[0];
        let mu = measure_ratio(&s, &c, &t1, &t2).unwrap();
        let j1 = central_jacobian(&s, &c, &t1, 1e-5);
        let j2 = central_jacobian(&s, &c, &t2, 1e-5);
        let oracle = j1.cross(&j2).norm() / t1.cross(&t2).norm();
        assert_relative_eq!(mu, oracle, max_relative = 1e-6);
        // the centroid lies at distance 1/z from the centre; μ_h = 1/|c|²
        assert_relative_eq!(mu, 1.0 / c.norm_squared(), max_relative = 1e-12);
    }

    #[test]
    fn operators_on_plane_are_trivial() {
        let ops = geometric_operators(&Plane, &Vec3::new(0.1, 0.2, 0.0), &Vec3::z()).unwrap();
        let expected = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
        assert_relative_eq!(ops.a_tilde, expected, epsilon = 1e-15);
        assert_relative_eq!(ops.p_h, expected, epsilon = 1e-15);
        assert_eq!(ops.mu_h, 1.0);
    }

    #[test]
    fn operators_collapse_to_projector_on_surface() {
        let s = Sphere::UNIT;
        let x = Vec3::new(0.48, -0.6, 0.64);
        let ops = geometric_operators(&s, &x, &s.normal(&x)).unwrap();
        assert_relative_eq!(ops.a_tilde, ops.p, epsilon = 1e-14);
        assert_relative_eq!(ops.mu_h, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn projectors_are_orthogonal_rank_two() {
        let s = Sphere::UNIT;
        let x = Vec3::new(0.3, 0.2, 0.9);
        let nu_h = Vec3::new(0.31, 0.18, 0.93).normalize();
        let ops = geometric_operators(&s, &x, &nu_h).unwrap();
        for m in [ops.p, ops.p_h] {
            assert_relative_eq!(m * m, m, epsilon = 1e-12);
            assert_relative_eq!(m, m.transpose(), epsilon = 1e-12);
            assert_relative_eq!(m.trace(), 2.0, epsilon = 1e-12);
        }
        assert!(ops.mu_h > 0.0);
    }

    #[test]
    fn flipped_normal_is_rejected() {
        let s = Sphere::UNIT;
        let x = Vec3::new(0.0, 0.0, 0.99);
        assert!(matches!(geometric_operators(&s, &x, &-Vec3::z()), Err(Error::NotAdmissible { .. })));
    }
}
