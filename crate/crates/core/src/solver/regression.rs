use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use super::{ForwardPaths, CHUNK};
use crate::error::{Error, Result};
use crate::rng::ordered_chunks;
use crate::{Matrix, Vector};

/// Regression basis in the forward state `B_{t_i}`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Basis {
    /// All monomials of total degree `<= degree` in the standardised state.
    Polynomial { degree: u32 },
}

impl Basis {
    pub fn degree(&self) -> u32 {
        match self {
            Basis::Polynomial { degree } => *degree,
        }
    }
}

/// Multi-indices of total degree `<= degree` in `d` variables, constant
/// first.
pub(crate) fn exponents(d: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = alloc::vec![0u32; d];
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, degree, &mut cur, &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

/// Joint least-squares fit of `X_{i+1}` on `[phi(B_i), phi(B_i) dW_c / sqrt(dt)]`:
/// the first block is the conditional mean, the others give `Z` column by
/// column.
pub(crate) struct Fit {
    mean: Vector,
    inv_scale: Vector,
    exps: Vec<Vec<u32>>,
    /// One row per regressor, one column per component of `X`.
    beta: Matrix,
    d_w: usize,
    sqrt_dt: f64,
}

impl Fit {
    pub(crate) fn new(
        fwd: &ForwardPaths,
        i: usize,
        active: &[usize],
        x: &[f64],
        n: usize,
        basis: &Basis,
        ridge: f64,
    ) -> Result<Self> {
        let d = fwd.d;
        let d_w = fwd.d_w;
        let mut degree = basis.degree();
        // too few paths for the full basis: fall back to lower degrees
        while degree > 0 && active.len() < 2 * exponents(d, degree).len() * (1 + d_w) {
            degree -= 1;
        }
        let exps = exponents(d, degree);
        let count = active.len() as f64;

        let sums = ordered_chunks(active.len(), CHUNK, |r| {
            let mut s = Vector::zeros(d);
            let mut s2 = Vector::zeros(d);
            for j in r {
                let b = fwd.b(active[j], i);
                s2 += b.component_mul(&b);
                s += b;
            }
            (s, s2)
        });
        let mut mean = Vector::zeros(d);
        let mut sq = Vector::zeros(d);
        for (s, s2) in sums {
            mean += s;
            sq += s2;
        }
        mean /= count;
        sq /= count;
        let inv_scale = Vector::from_fn(d, |c, _| {
            let var = (sq[c] - mean[c] * mean[c]).max(0.0);
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + mean[c].abs()) {
                1.0 / sd
            } else {
                0.0
            }
        });

        let sqrt_dt = fwd.dt().sqrt();
        let mut fit = Self {
            mean,
            inv_scale,
            exps,
            beta: Matrix::zeros(0, 0),
            d_w,
            sqrt_dt,
        };
        let cols = fit.exps.len() * (1 + d_w);
        let steps = fwd.n_steps;
        let parts = ordered_chunks(active.len(), CHUNK, |r| {
            let mut g = Matrix::zeros(cols, cols);
            let mut rhs = Matrix::zeros(cols, n);
            for j in r {
                let p = active[j];
                let row = fit.row(&fwd.b(p, i), &fwd.dw(p, i));
                let at = (p * (steps + 1) + i + 1) * n;
                let y = Vector::from_column_slice(&x[at..at + n]);
                g.syger(1.0, &row, &row, 1.0);
                rhs.ger(1.0, &row, &y, 1.0);
            }
            (g, rhs)
        });
        let mut g = Matrix::zeros(cols, cols);
        let mut rhs = Matrix::zeros(cols, n);
        for (gp, rp) in parts {
            g += gp;
            rhs += rp;
        }
        // syger fills the lower triangle only
        g.fill_upper_triangle_with_lower_triangle();
        g /= count;
        rhs /= count;
        // the intercept is not penalised, so constant targets are fitted exactly
        for c in 1..cols {
            g[(c, c)] += ridge;
        }
        let chol = g.cholesky().ok_or(Error::Basis { step: i })?;
        let beta = chol.solve(&rhs);
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Basis { step: i });
        }
        fit.beta = beta;
        Ok(fit)
    }

    fn features(&self, b: &Vector) -> Vector {
        let u = (b - &self.mean).component_mul(&self.inv_scale);
        Vector::from_iterator(
            self.exps.len(),
            self.exps.iter().map(|e| {
                e.iter()
                    .zip(u.iter())
                    .fold(1.0, |acc, (k, v)| acc * v.powi(*k as i32))
            }),
        )
    }

    fn row(&self, b: &Vector, dw: &Vector) -> Vector {
        let phi = self.features(b);
        let m = phi.len();
        let mut row = Vector::zeros(m * (1 + self.d_w));
        row.rows_mut(0, m).copy_from(&phi);
        for c in 0..self.d_w {
            row.rows_mut((c + 1) * m, m)
                .copy_from(&(&phi * (dw[c] / self.sqrt_dt)));
        }
        row
    }

    /// Conditional mean of `X_{i+1}` and the `Z` estimate at state `b`.
    pub(crate) fn predict(&self, b: &Vector) -> (Vector, Matrix) {
        let phi = self.features(b);
        let m = phi.len();
        let n = self.beta.ncols();
        let yhat = self.beta.rows(0, m).transpose() * &phi;
        let mut z = Matrix::zeros(n, self.d_w);
        for c in 0..self.d_w {
            let col = self.beta.rows((c + 1) * m, m).transpose() * &phi / self.sqrt_dt;
            z.set_column(c, &col);
        }
        (yhat, z)
    }
}

/// Least-squares fit of `y` on polynomials of degree `<= degree` in the
/// standardised `xs`; returns the fitted values. The intercept is not
/// penalised.
pub fn fitted_values(xs: &[Vector], y: &[f64], degree: u32, ridge: f64) -> Option<Vec<f64>> {
    let count = xs.len();
    if count == 0 || count != y.len() {
        return None;
    }
    let d = xs[0].len();
    let mut degree = degree;
    while degree > 0 && count < 2 * exponents(d, degree).len() {
        degree -= 1;
    }
    let exps = exponents(d, degree);
    let mut mean = Vector::zeros(d);
    for x in xs {
        mean += x;
    }
    mean /= count as f64;
    let mut var = Vector::zeros(d);
    for x in xs {
        let c = x - &mean;
        var += c.component_mul(&c);
    }
    var /= count as f64;
    let inv = var.map(|v| {
        if v.sqrt() > 1e-12 {
            1.0 / v.sqrt()
        } else {
            0.0
        }
    });
    let feats: Vec<Vector> = xs
        .iter()
        .map(|x| {
            let u = (x - &mean).component_mul(&inv);
            Vector::from_iterator(
                exps.len(),
                exps.iter().map(|e| {
                    e.iter()
                        .zip(u.iter())
                        .fold(1.0, |a, (k, v)| a * v.powi(*k as i32))
                }),
            )
        })
        .collect();
    let m = exps.len();
    let mut g = Matrix::zeros(m, m);
    let mut r = Vector::zeros(m);
    for (f, yv) in feats.iter().zip(y) {
        g.ger(1.0, f, f, 1.0);
        r.axpy(*yv, f, 1.0);
    }
    g /= count as f64;
    r /= count as f64;
    for c in 1..m {
        g[(c, c)] += ridge;
    }
    let beta = g.cholesky()?.solve(&r);
    Some(feats.iter().map(|f| f.dot(&beta)).collect())
}
