//! Built-in drivers used by scenarios and tests.

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use super::DriftSpec;
use crate::{Matrix, Vector};

pub fn zero() -> DriftSpec {
    DriftSpec::new("zero", false, |_: &Vector, x: &Vector, _: &Matrix| {
        Vector::zeros(x.len())
    })
}

/// `kappa x`.
pub fn radial(kappa: f64) -> DriftSpec {
    DriftSpec::new(
        "radial",
        false,
        move |_: &Vector, x: &Vector, _: &Matrix| x * kappa,
    )
}

/// `-kappa x`.
pub fn inward(kappa: f64) -> DriftSpec {
    DriftSpec::new(
        "inward",
        false,
        move |_: &Vector, x: &Vector, _: &Matrix| x * -kappa,
    )
}

/// `(x_2, -x_1, 0, ...)`: tangent to every sphere about the origin.
pub fn tangential() -> DriftSpec {
    DriftSpec::new("tangential", false, |_: &Vector, x: &Vector, _: &Matrix| {
        let mut v = Vector::zeros(x.len());
        if x.len() >= 2 {
            v[0] = x[1];
            v[1] = -x[0];
        }
        v
    })
}

/// `c0 z e_1`.
pub fn z_linear(c0: f64) -> DriftSpec {
    DriftSpec::new(
        "z-linear",
        true,
        move |_: &Vector, _: &Vector, z: &Matrix| z.column(0) * c0,
    )
}

/// `sin(b_1) v0`.
pub fn b_sin(v0: Vector) -> DriftSpec {
    DriftSpec::new("b-sin", false, move |b: &Vector, _: &Vector, _: &Matrix| {
        &v0 * b[0].sin()
    })
}

/// `(kappa + c1 sin^2 b_1 + c0 |z|) x + omega J x`, where `J` rotates the
/// first two coordinates: outward on spheres about the origin when
/// `kappa >= 0`, with a bounded dependence on `b` and linear growth in `z`.
pub fn swirl(kappa: f64, c1: f64, c0: f64, omega: f64) -> DriftSpec {
    DriftSpec::new(
        "swirl",
        c0 != 0.0,
        move |b: &Vector, x: &Vector, z: &Matrix| {
            let s = b[0].sin();
            let mut v = x * (kappa + c1 * s * s + c0 * z.norm());
            if x.len() >= 2 {
                v[0] += omega * x[1];
                v[1] -= omega * x[0];
            }
            v
        },
    )
}
