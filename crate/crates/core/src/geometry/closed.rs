//! Closed-form geodesic kernels for the sphere cap (through its unit
//! embedding) and the Poincare ball (Mobius addition and the hyperboloid).

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use super::radial::{sinc, sinc_slope};
use crate::{Matrix, Vector};

/// Normal coordinates `x` at the north pole of a sphere of curvature `k^2`,
/// embedded in the unit sphere of `R^(n+1)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SphereCap {
    pub k: f64,
}

impl SphereCap {
    pub fn embed(&self, x: &Vector) -> Vector {
        let n = x.len();
        let t = self.k * x.norm();
        let s = self.k * sinc(t);
        let mut p = Vector::zeros(n + 1);
        p[0] = t.cos();
        for i in 0..n {
            p[i + 1] = s * x[i];
        }
        p
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let t = self.k * x.norm();
        let s = self.k * sinc(t);
        let s_r = self.k.powi(3) * sinc_slope(t);
        let mut j = Matrix::zeros(n + 1, n);
        for c in 0..n {
            j[(0, c)] = -self.k * s * x[c];
            for r in 0..n {
                j[(r + 1, c)] = s_r * x[r] * x[c] + if r == c { s } else { 0.0 };
            }
        }
        j
    }

    pub fn unembed(&self, p: &Vector) -> Vector {
        let n = p.len() - 1;
        let tail = p.rows(1, n).into_owned();
        let s = tail.norm();
        if s == 0.0 {
            return Vector::zeros(n);
        }
        let theta = s.atan2(p[0]);
        tail * (theta / (self.k * s))
    }

    /// Chart vector whose image under the differential at `x` is `w`.
    pub fn pull_back(&self, x: &Vector, w: &Vector) -> Vector {
        let j = self.jacobian(x);
        let jt = j.transpose();
        let normal = &jt * &j;
        let rhs = &jt * w;
        normal
            .cholesky()
            .map(|c| c.solve(&rhs))
            .unwrap_or_else(|| Vector::zeros(x.len()))
    }

    /// Angle on the unit sphere between two embedded points.
    pub fn angle(p: &Vector, q: &Vector) -> f64 {
        2.0 * (p - q).norm().atan2((p + q).norm())
    }

    pub fn distance(&self, x: &Vector, y: &Vector) -> f64 {
        Self::angle(&self.embed(x), &self.embed(y)) / self.k
    }

    pub fn log(&self, x: &Vector, y: &Vector) -> Vector {
        let p = self.embed(x);
        let q = self.embed(y);
        let alpha = Self::angle(&p, &q);
        let u = &q - &p * p.dot(&q);
        let un = u.norm();
        let v = if un > 0.0 { u * (alpha / un) } else { q - &p };
        self.pull_back(x, &v)
    }

    pub fn exp(&self, x: &Vector, v: &Vector) -> Vector {
        let p = self.embed(x);
        let w = self.jacobian(x) * v;
        let alpha = w.norm();
        let q = p * alpha.cos() + w * sinc(alpha);
        self.unembed(&q)
    }

    pub fn transport(&self, x: &Vector, y: &Vector, z: &Matrix) -> Matrix {
        let p = self.embed(x);
        let q = self.embed(y);
        let jx = self.jacobian(x);
        let denom = 1.0 + p.dot(&q);
        let pq = &p + &q;
        let mut out = Matrix::zeros(z.nrows(), z.ncols());
        for c in 0..z.ncols() {
            let w = &jx * z.column(c);
            let w2 = &w - &pq * (q.dot(&w) / denom);
            out.set_column(c, &self.pull_back(y, &w2));
        }
        out
    }
}

/// Poincare ball model of curvature -1.
pub(crate) struct Poincare;

impl Poincare {
    pub fn conformal(x: &Vector) -> f64 {
        2.0 / (1.0 - x.norm_squared())
    }

    pub fn mobius_add(a: &Vector, b: &Vector) -> Vector {
        let ab = a.dot(b);
        let a2 = a.norm_squared();
        let b2 = b.norm_squared();
        let num = a * (1.0 + 2.0 * ab + b2) + b * (1.0 - a2);
        num / (1.0 + 2.0 * ab + a2 * b2)
    }

    pub fn distance(x: &Vector, y: &Vector) -> f64 {
        let w = ((1.0 - x.norm_squared()) * (1.0 - y.norm_squared())).sqrt();
        2.0 * ((x - y).norm() / w).asinh()
    }

    pub fn log(x: &Vector, y: &Vector) -> Vector {
        let m = Self::mobius_add(&(-x), y);
        let mn = m.norm();
        if mn == 0.0 {
            return Vector::zeros(x.len());
        }
        m * (2.0 / Self::conformal(x) * mn.atanh() / mn)
    }

    pub fn exp(x: &Vector, v: &Vector) -> Vector {
        let vn = v.norm();
        if vn == 0.0 {
            return x.clone();
        }
        let step = v * ((Self::conformal(x) * vn / 2.0).tanh() / vn);
        Self::mobius_add(x, &step)
    }

    fn hyperboloid(x: &Vector) -> Vector {
        let n = x.len();
        let w = 1.0 - x.norm_squared();
        let mut p = Vector::zeros(n + 1);
        p[0] = (2.0 - w) / w;
        for i in 0..n {
            p[i + 1] = 2.0 * x[i] / w;
        }
        p
    }

    fn push(x: &Vector, v: &Vector) -> Vector {
        let n = x.len();
        let w = 1.0 - x.norm_squared();
        let xv = x.dot(v);
        let mut out = Vector::zeros(n + 1);
        out[0] = 4.0 * xv / (w * w);
        for i in 0..n {
            out[i + 1] = 2.0 * v[i] / w + 4.0 * x[i] * xv / (w * w);
        }
        out
    }

    fn pull(x: &Vector, big: &Vector) -> Vector {
        let n = x.len();
        let w = 1.0 - x.norm_squared();
        let a = 2.0 / w;
        let b = 4.0 / (w * w);
        let ws = big.rows(1, n).into_owned();
        let corr = b * x.dot(&ws) / (a + b * x.norm_squared());
        (ws - x * corr) / a
    }

    fn minkowski(a: &Vector, b: &Vector) -> f64 {
        -a[0] * b[0] + a.rows(1, a.len() - 1).dot(&b.rows(1, b.len() - 1))
    }

    pub fn transport(x: &Vector, y: &Vector, z: &Matrix) -> Matrix {
        let p = Self::hyperboloid(x);
        let q = Self::hyperboloid(y);
        let denom = 1.0 - Self::minkowski(&p, &q);
        let pq = &p + &q;
        let mut out = Matrix::zeros(z.nrows(), z.ncols());
        for c in 0..z.ncols() {
            let w = Self::push(x, &z.column(c).into_owned());
            let w2 = &w + &pq * (Self::minkowski(&q, &w) / denom);
            out.set_column(c, &Self::pull(y, &w2));
        }
        out
    }
}
