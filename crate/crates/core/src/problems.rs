//! Model problems on the unit sphere.

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::Vec3;

/// Data of a heat equation `∂ₜu − Δ_Γu = f` with initial value `u⁰`.
pub trait Problem {
    fn name(&self) -> &str;
    fn t_end(&self) -> f64;
    fn initial(&self, x: &Vec3) -> f64;
    fn rhs(&self, x: &Vec3, t: f64) -> f64;
    /// Exact solution, when known.
    fn exact(&self, _x: &Vec3, _t: f64) -> Option<f64> {
        None
    }
    /// Tangential gradient of the exact solution, when known.
    fn exact_gradient(&self, _x: &Vec3, _t: f64) -> Option<Vec3> {
        None
    }
}

impl<P: Problem + ?Sized> Problem for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn t_end(&self) -> f64 {
        (**self).t_end()
    }
    fn initial(&self, x: &Vec3) -> f64 {
        (**self).initial(x)
    }
    fn rhs(&self, x: &Vec3, t: f64) -> f64 {
        (**self).rhs(x, t)
    }
    fn exact(&self, x: &Vec3, t: f64) -> Option<f64> {
        (**self).exact(x, t)
    }
    fn exact_gradient(&self, x: &Vec3, t: f64) -> Option<Vec3> {
        (**self).exact_gradient(x, t)
    }
}

/// `u = e^{−t}x₁x₂` with `f = 5u` on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDecay {
    pub t_end: f64,
}

impl Default for SphereDecay {
    fn default() -> Self {
        SphereDecay { t_end: 1.0 }
    }
}

impl Problem for SphereDecay {
    fn name(&self) -> &str {
        "sphere-decay"
    }
    fn t_end(&self) -> f64 {
        self.t_end
    }
    fn initial(&self, x: &Vec3) -> f64 {
        x[0] * x[1]
    }
    fn rhs(&self, x: &Vec3, t: f64) -> f64 {
        5.0 * (-t).exp() * x[0] * x[1]
    }
    fn exact(&self, x: &Vec3, t: f64) -> Option<f64> {
        Some((-t).exp() * x[0] * x[1])
    }
    fn exact_gradient(&self, x: &Vec3, t: f64) -> Option<Vec3> {
        let n = x.normalize();
        let g = Vec3::new(x[1], x[0], 0.0);
        Some((g - n * n.dot(&g)) * (-t).exp())
    }
}

/// A Gaussian peak travelling along the equator that appears and vanishes
/// around `t₀`:
/// `u = (1 − e^{−b(t−t₀)²})·e^{−a|x − c(t)|²}` with `c(t) = (cos(tπ/R), sin(tπ/R), 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingPeak {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub t0: f64,
    pub t_end: f64,
}

impl Default for MovingPeak {
    fn default() -> Self {
        MovingPeak { a: 25.0, b: 400.0, r: 2.0, t0: 0.5, t_end: 1.0 }
    }
}

impl MovingPeak {
    /// Variant used for the strategy timing comparison.
    pub fn timing() -> Self {
        MovingPeak { a: 50.0, b: 100.0, r: 0.5, t0: 0.5, t_end: 1.0 }
    }

    pub fn center(&self, t: f64) -> Vec3 {
        let phi = t * PI / self.r;
        Vec3::new(phi.cos(), phi.sin(), 0.0)
    }

    fn center_velocity(&self, t: f64) -> Vec3 {
        let w = PI / self.r;
        let phi = t * w;
        Vec3::new(-phi.sin() * w, phi.cos() * w, 0.0)
    }

    fn envelope(&self, t: f64) -> (f64, f64) {
        let e = (-self.b * (t - self.t0).powi(2)).exp();
        (1.0 - e, 2.0 * self.b * (t - self.t0) * e)
    }

    fn gaussian(&self, x: &Vec3, t: f64) -> f64 {
        (-self.a * (x - self.center(t)).norm_squared()).exp()
    }
}

impl Problem for MovingPeak {
    fn name(&self) -> &str {
        "moving-peak"
    }
    fn t_end(&self) -> f64 {
        self.t_end
    }
    fn initial(&self, x: &Vec3) -> f64 {
        self.envelope(0.0).0 * self.gaussian(x, 0.0)
    }
    fn rhs(&self, x: &Vec3, t: f64) -> f64 {
        let x = x.normalize();
        let a = self.a;
        let (g, dg) = self.envelope(t);
        let e = self.gaussian(&x, t);
        let s = 1.0 - self.center(t).dot(&x);
        let laplace = e * (4.0 * a * a * (2.0 * s - s * s) - 4.0 * a + 4.0 * a * s);
        let dt = 2.0 * a * x.dot(&self.center_velocity(t)) * e;
        dg * e + g * dt - g * laplace
    }
    fn exact(&self, x: &Vec3, t: f64) -> Option<f64> {
        Some(self.envelope(t).0 * self.gaussian(x, t))
    }
    fn exact_gradient(&self, x: &Vec3, t: f64) -> Option<Vec3> {
        let n = x.normalize();
        let c = self.center(t);
        let scale = 2.0 * self.a * self.envelope(t).0 * self.gaussian(x, t);
        Some((c - n * n.dot(&c)) * scale)
    }
}

/// `f ≡ 0`, `u⁰ ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero {
    pub t_end: f64,
}

impl Problem for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn t_end(&self) -> f64 {
        self.t_end
    }
    fn initial(&self, _x: &Vec3) -> f64 {
        0.0
    }
    fn rhs(&self, _x: &Vec3, _t: f64) -> f64 {
        0.0
    }
    fn exact(&self, _x: &Vec3, _t: f64) -> Option<f64> {
        Some(0.0)
    }
    fn exact_gradient(&self, _x: &Vec3, _t: f64) -> Option<Vec3> {
        Some(Vec3::zeros())
    }
}
