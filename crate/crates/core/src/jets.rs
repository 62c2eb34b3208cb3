//! Order-3 jets: a value together with its first three derivatives with
//! respect to the scalar network input `x`.
//!
//! Components are raw derivatives, not Taylor coefficients, so products follow
//! the Leibniz rule with binomial weights and compositions follow Faà di Bruno.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet3 {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Jets carried between layers.
pub type JetVector = Vec<Jet3>;

impl Jet3 {
    pub const ZERO: Jet3 = Jet3::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(d0: f64, d1: f64, d2: f64, d3: f64) -> Self {
        Jet3 { d0, d1, d2, d3 }
    }

    /// A quantity that does not depend on `x`.
    pub const fn constant(c: f64) -> Self {
        Jet3::new(c, 0.0, 0.0, 0.0)
    }

    /// The independent variable itself: `(x, 1, 0, 0)`.
    pub const fn seed(x: f64) -> Self {
        Jet3::new(x, 1.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.d0, self.d1, self.d2, self.d3]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Jet3::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.d0.is_finite() && self.d1.is_finite() && self.d2.is_finite() && self.d3.is_finite()
    }

    pub fn scale(self, c: f64) -> Self {
        Jet3::new(c * self.d0, c * self.d1, c * self.d2, c * self.d3)
    }

    /// `self += c * other`, the inner step of every affine map.
    #[inline]
    pub fn add_scaled(&mut self, c: f64, other: Jet3) {
        self.d0 += c * other.d0;
        self.d1 += c * other.d1;
        self.d2 += c * other.d2;
        self.d3 += c * other.d3;
    }

    /// Componentwise inner product, used to pull adjoints back onto scalars.
    #[inline]
    pub fn dot(self, other: Jet3) -> f64 {
        self.d0 * other.d0 + self.d1 * other.d1 + self.d2 * other.d2 + self.d3 * other.d3
    }

    /// Faà di Bruno to third order: `f(u)` given `[f, f', f'', f''']` at `u.d0`.
    #[inline]
    pub fn compose(self, f: [f64; 4]) -> Self {
        let u = self;
        let u1_sq = u.d1 * u.d1;
        Jet3::new(
            f[0],
            f[1] * u.d1,
            f[2] * u1_sq + f[1] * u.d2,
            f[3] * u1_sq * u.d1 + 3.0 * f[2] * u.d1 * u.d2 + f[1] * u.d3,
        )
    }

    pub fn tanh(self) -> Self {
        let f = tanh_derivatives(self.d0);
        self.compose([f[0], f[1], f[2], f[3]])
    }
}

/// `[tanh, tanh', tanh'', tanh''', tanh'''']` at `u`, written in terms of
/// `t = tanh(u)`.
pub fn tanh_derivatives(u: f64) -> [f64; 5] {
    let t = u.tanh();
    let s = 1.0 - t * t;
    [
        t,
        s,
        -2.0 * t * s,
        -2.0 * s * (1.0 - 3.0 * t * t),
        8.0 * t * s * (2.0 - 3.0 * t * t),
    ]
}

/// Adjoint of [`Jet3::compose`]: given the output adjoint `y_bar` and the
/// first five derivatives of `f` at `u.d0`, returns the adjoint of `u`.
#[inline]
pub fn compose_adjoint(f: [f64; 5], u: Jet3, y_bar: Jet3) -> Jet3 {
    let u1_sq = u.d1 * u.d1;
    // d(output)/d(u.d0) is the same Faà di Bruno expression with f shifted.
    let du0 = y_bar.d0 * f[1]
        + y_bar.d1 * f[2] * u.d1
        + y_bar.d2 * (f[3] * u1_sq + f[2] * u.d2)
        + y_bar.d3 * (f[4] * u1_sq * u.d1 + 3.0 * f[3] * u.d1 * u.d2 + f[2] * u.d3);
    let du1 = y_bar.d1 * f[1]
        + y_bar.d2 * 2.0 * f[2] * u.d1
        + y_bar.d3 * (3.0 * f[3] * u1_sq + 3.0 * f[2] * u.d2);
    let du2 = y_bar.d2 * f[1] + y_bar.d3 * 3.0 * f[2] * u.d1;
    let du3 = y_bar.d3 * f[1];
    Jet3::new(du0, du1, du2, du3)
}

/// Free-function form of [`Jet3::compose`].
pub fn compose_scalar(f_derivs: [f64; 4], u: Jet3) -> Jet3 {
    u.compose(f_derivs)
}

pub fn tanh_jet(u: Jet3) -> Jet3 {
    u.tanh()
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, v: Jet3) -> Jet3 {
        Jet3::new(
            self.d0 + v.d0,
            self.d1 + v.d1,
            self.d2 + v.d2,
            self.d3 + v.d3,
        )
    }
}

impl AddAssign for Jet3 {
    fn add_assign(&mut self, v: Jet3) {
        *self = *self + v;
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, v: Jet3) -> Jet3 {
        Jet3::new(
            self.d0 - v.d0,
            self.d1 - v.d1,
            self.d2 - v.d2,
            self.d3 - v.d3,
        )
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        self.scale(-1.0)
    }
}

/// Leibniz product rule to third order.
impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, v: Jet3) -> Jet3 {
        let u = self;
        Jet3::new(
            u.d0 * v.d0,
            u.d1 * v.d0 + u.d0 * v.d1,
            (u.d2 * v.d0 + u.d0 * v.d2) + 2.0 * u.d1 * v.d1,
            (u.d3 * v.d0 + u.d0 * v.d3) + 3.0 * (u.d2 * v.d1 + u.d1 * v.d2),
        )
    }
}

impl Mul<f64> for Jet3 {
    type Output = Jet3;
    fn mul(self, c: f64) -> Jet3 {
        self.scale(c)
    }
}
