//! Metrics of the form `g(x) = phi(r) I + psi(r) x x^T` and their
//! Levi-Civita symbols. All three built-in charts are of this form: flat
//! space, normal coordinates on a sphere cap, and the Poincare ball.

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use super::Christoffel;
use crate::{Matrix, Vector};

/// `phi`, `psi` and the reduced radial derivatives `phi'/r`, `psi'/r`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Profile {
    pub phi: f64,
    pub psi: f64,
    pub phi_r: f64,
    pub psi_r: f64,
}

impl Profile {
    pub const FLAT: Profile = Profile {
        phi: 1.0,
        psi: 0.0,
        phi_r: 0.0,
        psi_r: 0.0,
    };

    /// Normal coordinates at the centre of a sphere of curvature `k2`.
    pub fn sphere(k2: f64, x: &Vector) -> Profile {
        let u = k2 * x.norm_squared();
        let (f, df, g, dg) = sinc2_series(u);
        Profile {
            phi: f,
            psi: k2 * g,
            phi_r: 2.0 * k2 * df,
            psi_r: 2.0 * k2 * k2 * dg,
        }
    }

    /// Poincare ball of curvature -1.
    pub fn poincare(x: &Vector) -> Profile {
        let w = 1.0 - x.norm_squared();
        Profile {
            phi: 4.0 / (w * w),
            psi: 0.0,
            phi_r: 16.0 / (w * w * w),
            psi_r: 0.0,
        }
    }

    pub fn metric(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let mut g = Matrix::identity(n, n) * self.phi;
        if self.psi != 0.0 {
            g += x * x.transpose() * self.psi;
        }
        g
    }

    pub fn inverse_metric(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let r2 = x.norm_squared();
        let mut h = Matrix::identity(n, n);
        if self.psi != 0.0 {
            h -= x * x.transpose() * (self.psi / (self.phi + self.psi * r2));
        }
        h / self.phi
    }

    pub fn christoffel(&self, x: &Vector) -> Christoffel {
        let n = x.len();
        let ginv = self.inverse_metric(x);
        // first-kind symbols Gamma_{l,jk}
        let mut first = alloc::vec![0.0; n * n * n];
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    let v = 0.5
                        * (self.phi_r * (x[j] * d(l, k) + x[k] * d(l, j) - x[l] * d(j, k))
                            + self.psi_r * x[l] * x[j] * x[k])
                        + self.psi * d(j, k) * x[l];
                    first[(l * n + j) * n + k] = v;
                }
            }
        }
        let mut out = Christoffel::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += ginv[(i, l)] * first[(l * n + j) * n + k];
                    }
                    out.set(i, j, k, acc);
                }
            }
        }
        out
    }
}

/// Power series in `u = t^2` for `F = sin^2 t / t^2`, `G = (1 - F)/u` and
/// their `u`-derivatives. Exact to rounding for `t <= pi/2`.
fn sinc2_series(u: f64) -> (f64, f64, f64, f64) {
    const TERMS: usize = 24;
    // a_m = (-1)^(m+1) 2^(2m-1) / (2m)!, F = sum_{j>=0} a_{j+1} u^j
    const A: [f64; TERMS + 2] = {
        let mut a = [0.0; TERMS + 2];
        let mut fact = 1.0; // (2m)!
        let mut pow2 = 0.5; // 2^(2m-1)
        let mut m = 1;
        while m < TERMS + 2 {
            fact *= ((2 * m - 1) * (2 * m)) as f64;
            pow2 *= 4.0;
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            a[m] = sign * pow2 / fact;
            m += 1;
        }
        a
    };
    let a = &A;
    let (mut f, mut df, mut g, mut dg) = (0.0, 0.0, 0.0, 0.0);
    let mut up = 1.0; // u^j
    let mut up_prev = 0.0; // u^(j-1)
    for j in 0..TERMS {
        f += a[j + 1] * up;
        g -= a[j + 2] * up;
        if j >= 1 {
            df += j as f64 * a[j + 1] * up_prev;
            dg -= j as f64 * a[j + 2] * up_prev;
        }
        up_prev = up;
        up *= u;
    }
    (f, df, g, dg)
}

/// `sin t / t` by series in `t^2`, for `t <= pi/2`.
pub(crate) fn sinc(t: f64) -> f64 {
    let t2 = t * t;
    if t2 > 4.0 {
        return t.sin() / t;
    }
    let mut term = 1.0;
    let mut acc = 1.0;
    for m in 1..20 {
        term *= -t2 / ((2 * m) * (2 * m + 1)) as f64;
        acc += term;
    }
    acc
}

/// `(t cos t - sin t) / t^3` by series in `t^2`, for `t <= pi/2`.
pub(crate) fn sinc_slope(t: f64) -> f64 {
    let t2 = t * t;
    if t2 > 4.0 {
        return (t * t.cos() - t.sin()) / (t2 * t);
    }
    // sum_{m>=1} (-1)^m 2m t^(2m-2) / (2m+1)!
    let mut acc = 0.0;
    let mut fact = 1.0; // (2m+1)!
    let mut tp = 1.0;
    for m in 1..20 {
        fact *= ((2 * m) * (2 * m + 1)) as f64;
        let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
        acc += sign * (2 * m) as f64 * tp / fact;
        tp *= t2;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_match_closed_forms() {
        for &t in &[0.05, 0.3, 0.9, 1.4, 1.55] {
            let u: f64 = t * t;
            let (f, df, g, _) = sinc2_series(u);
            let exact_f = (t.sin() / t).powi(2);
            assert!((f - exact_f).abs() < 1e-14);
            assert!((g - (1.0 - exact_f) / u).abs() < 1e-12);
            let h = 1e-6;
            let fd = ((((u + h).sqrt()).sin().powi(2) / (u + h))
                - (((u - h).sqrt()).sin().powi(2) / (u - h)))
                / (2.0 * h);
            assert!((df - fd).abs() < 1e-8);
            assert!((sinc(t) - t.sin() / t).abs() < 1e-15);
            assert!((sinc_slope(t) - (t * t.cos() - t.sin()) / t.powi(3)).abs() < 1e-12);
        }
    }
}
