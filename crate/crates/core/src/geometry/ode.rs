//! RK4 integration of the geodesic and parallel-transport equations, and
//! shooting for boundary-value geodesics. Used directly for custom charts and
//! as an independent route for the built-in closed forms.

use super::ManifoldChart;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};
use alloc::vec;
use alloc::vec::Vec;

/// Fixed RK4 step count on the unit parameter interval.
pub const ODE_STEPS: usize = 200;
/// Endpoint miss accepted by the shooting solver.
pub const SHOOT_TOL: f64 = 1e-10;
pub const SHOOT_MAX_ITER: usize = 50;

/// Writes the derivative of `(x, v, w)` into `out`: `(v, -Gamma(v, v),
/// -Gamma(v, w_c))`, all stored flat with `w` column-major.
fn rate(chart: &ManifoldChart, n: usize, state: &[f64], x: &mut Vector, out: &mut [f64]) {
    x.copy_from_slice(&state[..n]);
    let gamma = chart.christoffel_raw(x);
    let v = &state[n..2 * n];
    out[..n].copy_from_slice(v);
    let cols = (state.len() - 2 * n) / n;
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let mut row = 0.0;
            for k in 0..n {
                row += gamma.get(i, j, k) * v[k];
            }
            acc += row * v[j];
            for c in 0..cols {
                let w = &state[2 * n + c * n..3 * n + c * n];
                // Gamma^i_{jk} v^j w^k
                let mut t = 0.0;
                for k in 0..n {
                    t += gamma.get(i, j, k) * w[k];
                }
                out[2 * n + c * n + i] += -t * v[j];
            }
        }
        out[n + i] = -acc;
    }
}

/// Integrates the geodesic with initial velocity `v` over `t in [0, 1]`,
/// transporting the columns of `w` along it. Returns the endpoint, the final
/// velocity and the transported matrix.
pub fn geodesic(
    chart: &ManifoldChart,
    x: &Vector,
    v: &Vector,
    w: &Matrix,
    steps: usize,
) -> Result<(Vector, Vector, Matrix)> {
    let n = x.len();
    let h = 1.0 / steps as f64;
    let len = 2 * n + w.len();
    let mut s = Vec::with_capacity(len);
    s.extend_from_slice(x.as_slice());
    s.extend_from_slice(v.as_slice());
    s.extend_from_slice(w.as_slice());
    let mut k = [
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    ];
    let mut tmp = vec![0.0; len];
    let mut point = Vector::zeros(n);
    for i in 0..steps {
        for (stage, scale) in [(0, 0.0), (1, 0.5), (2, 0.5), (3, 1.0)] {
            if stage == 0 {
                tmp.copy_from_slice(&s);
            } else {
                for (t, (a, b)) in tmp.iter_mut().zip(s.iter().zip(&k[stage - 1])) {
                    *t = a + scale * h * b;
                }
            }
            let out = &mut k[stage];
            out.iter_mut().for_each(|o| *o = 0.0);
            rate(chart, n, &tmp, &mut point, out);
        }
        for (j, sj) in s.iter_mut().enumerate() {
            *sj += (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]) * (h / 6.0);
        }
        point.copy_from_slice(&s[..n]);
        if !chart.contains(&point) {
            return Err(Error::DomainExit {
                parameter: (i + 1) as f64 * h,
            });
        }
    }
    Ok((
        Vector::from_column_slice(&s[..n]),
        Vector::from_column_slice(&s[n..2 * n]),
        Matrix::from_column_slice(n, w.ncols(), &s[2 * n..]),
    ))
}

pub fn exp(chart: &ManifoldChart, x: &Vector, v: &Vector) -> Result<Vector> {
    exp_with(chart, x, v, ODE_STEPS)
}

fn exp_with(chart: &ManifoldChart, x: &Vector, v: &Vector, steps: usize) -> Result<Vector> {
    let empty = Matrix::zeros(x.len(), 0);
    geodesic(chart, x, v, &empty, steps).map(|r| r.0)
}

/// Step count of the first shooting pass; its answer seeds the fine pass.
const COARSE_STEPS: usize = ODE_STEPS / 8;

/// Initial velocity of the geodesic from `x` reaching `y` at `t = 1`, by
/// damped Newton shooting with a finite-difference Jacobian, first on a
/// coarse grid and then on the full one.
pub fn log(chart: &ManifoldChart, x: &Vector, y: &Vector) -> Result<Vector> {
    let mut v = y - x;
    if v.norm() == 0.0 {
        return Ok(v);
    }
    // shorten the straight-line guess until its geodesic stays in the chart
    for _ in 0..30 {
        if exp_with(chart, x, &v, COARSE_STEPS).is_ok() {
            break;
        }
        v *= 0.5;
    }
    let v = shoot(chart, x, y, v, COARSE_STEPS, 1e3 * SHOOT_TOL).unwrap_or_else(|_| y - x);
    shoot(chart, x, y, v, ODE_STEPS, SHOOT_TOL)
}

fn shoot(
    chart: &ManifoldChart,
    x: &Vector,
    y: &Vector,
    mut v: Vector,
    steps: usize,
    tol: f64,
) -> Result<Vector> {
    let n = x.len();
    let miss = |v: &Vector| -> Result<Vector> { Ok(exp_with(chart, x, v, steps)? - y) };
    let mut r = miss(&v)?;
    let mut rn = r.norm();
    for _ in 0..SHOOT_MAX_ITER {
        if rn <= tol {
            return Ok(v);
        }
        let h = 1e-7 * v.norm().max(1.0);
        let end = &r + y;
        let mut jac = Matrix::zeros(n, n);
        for j in 0..n {
            let mut vj = v.clone();
            vj[j] += h;
            let ej = exp_with(chart, x, &vj, steps)?;
            jac.set_column(j, &((ej - &end) / h));
        }
        let step = jac.lu().solve(&(-&r)).ok_or(Error::Convergence {
            what: "geodesic shooting",
            iterations: 0,
            residual: rn,
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = &v + &step * lambda;
            if let Ok(rt) = miss(&trial) {
                let rtn = rt.norm();
                if rtn < rn {
                    v = trial;
                    r = rt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn <= tol {
        Ok(v)
    } else {
        Err(Error::Convergence {
            what: "geodesic shooting",
            iterations: SHOOT_MAX_ITER,
            residual: rn,
        })
    }
}

pub fn transport(chart: &ManifoldChart, x: &Vector, y: &Vector, z: &Matrix) -> Result<Matrix> {
    let v = log(chart, x, y)?;
    geodesic(chart, x, &v, z, ODE_STEPS).map(|r| r.2)
}
