//! Psi-functions: smooth nonnegative comparisons of two points that vanish
//! on the diagonal, with their first derivative along a pair of tangent
//! vectors and their covariant Hessian quadratic form.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::error::{precondition, Error, Result};
use crate::geometry::{ChartKind, ManifoldChart, TangentPairSampler};
use crate::rng::batched;
use crate::{Matrix, Vector};

/// Coordinate step of the finite-difference fallback.
pub const PSI_FD_STEP: f64 = 1e-4;

pub type PsiFn = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PsiFunction {
    /// `delta^2 / 2`.
    SquaredDistance,
    /// `sin^a(sqrt(K) delta / 2)`, for curvature bounded by `K`.
    SinPower { a: f64, curvature: f64 },
    /// A user function comparable to `delta^p` with constant `c_psi`.
    PowerP { p: u32, c_psi: f64, func: PsiFn },
}

impl core::fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PsiFunction::SquaredDistance => write!(f, "SquaredDistance"),
            PsiFunction::SinPower { a, curvature } => {
                write!(f, "SinPower {{ a: {a}, curvature: {curvature} }}")
            }
            PsiFunction::PowerP { p, c_psi, .. } => {
                write!(f, "PowerP {{ p: {p}, c_psi: {c_psi} }}")
            }
        }
    }
}

fn inner(g: &Matrix, u: &Vector, v: &Vector) -> f64 {
    u.dot(&(g * v))
}

impl PsiFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            PsiFunction::SquaredDistance => Ok(()),
            PsiFunction::SinPower { a, curvature } => {
                if !(*a >= 2.0) || !(*curvature > 0.0) {
                    return Err(precondition("SinPower needs a >= 2 and K > 0"));
                }
                Ok(())
            }
            PsiFunction::PowerP { p, c_psi, .. } => {
                if *p < 2 || p % 2 != 0 || !(*c_psi >= 1.0) {
                    return Err(precondition("PowerP needs an even p >= 2 and c_psi >= 1"));
                }
                Ok(())
            }
        }
    }

    /// The `p` with `Psi` comparable to `delta^p`.
    pub fn exponent(&self) -> f64 {
        match self {
            PsiFunction::SquaredDistance => 2.0,
            PsiFunction::SinPower { a, .. } => *a,
            PsiFunction::PowerP { p, .. } => *p as f64,
        }
    }

    /// Weight multiplying the transported-difference term in the Hessian
    /// lower bound: `1`, `sin^(a-2)(sqrt(K) delta / 2)` or `delta^(p-2)`.
    pub fn hessian_weight(&self, delta: f64) -> f64 {
        match self {
            PsiFunction::SquaredDistance => 1.0,
            PsiFunction::SinPower { a, curvature } => {
                (0.5 * curvature.sqrt() * delta).sin().powf(a - 2.0)
            }
            PsiFunction::PowerP { p, .. } => delta.powi(*p as i32 - 2),
        }
    }

    /// `F`, `F'`, `F''` for the variants that are functions of the distance.
    fn radial(&self, delta: f64) -> Option<Result<(f64, f64, f64)>> {
        match self {
            PsiFunction::SquaredDistance => Some(Ok((0.5 * delta * delta, delta, 1.0))),
            PsiFunction::SinPower { a, curvature } => {
                let s = 0.5 * curvature.sqrt();
                let y = s * delta;
                if !(y < FRAC_PI_2) {
                    return Some(Err(Error::Domain {
                        point: alloc::vec![delta],
                        reason: format!("sqrt(K) delta / 2 = {y} leaves the increasing branch"),
                    }));
                }
                let (sn, cs) = (y.sin(), y.cos());
                let f = sn.powf(*a);
                let f1 = a * s * sn.powf(a - 1.0) * cs;
                let f2 = a * s * s * ((a - 1.0) * sn.powf(a - 2.0) * cs * cs - f);
                Some(Ok((f, f1, f2)))
            }
            PsiFunction::PowerP { .. } => None,
        }
    }

    /// Prepares the evaluation of `Psi` and its derivatives at `(x, x')`.
    pub fn at<'a>(&'a self, m: &'a ManifoldChart, x: &Vector, y: &Vector) -> Result<PsiPair<'a>> {
        m.check(x)?;
        m.check(y)?;
        let closed = !matches!(m.kind(), ChartKind::Custom(_)) && self.radial(0.0).is_some();
        if closed {
            let delta = m.distance(x, y)?;
            let (f, f1, f2) = self.radial(delta).unwrap()?;
            let (lx, ly) = if delta > 0.0 {
                (m.log(x, y)?, m.log(y, x)?)
            } else {
                (Vector::zeros(x.len()), Vector::zeros(x.len()))
            };
            Ok(PsiPair {
                psi: self,
                m,
                x: x.clone(),
                y: y.clone(),
                delta,
                value: f,
                closed: Some(Closed {
                    f1,
                    f2,
                    lx,
                    ly,
                    gx: m.metric(x)?,
                    gy: m.metric(y)?,
                    curvature: m.curvature_bound().unwrap_or(0.0),
                }),
            })
        } else {
            let delta = m.distance(x, y)?;
            let value = self.raw_value(m, x, y)?;
            Ok(PsiPair {
                psi: self,
                m,
                x: x.clone(),
                y: y.clone(),
                delta,
                value,
                closed: None,
            })
        }
    }

    fn raw_value(&self, m: &ManifoldChart, x: &Vector, y: &Vector) -> Result<f64> {
        match self {
            PsiFunction::PowerP { func, .. } => {
                let v = func(x, y);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Evaluation {
                        b: Vec::new(),
                        x: x.iter().chain(y.iter()).copied().collect(),
                        z: Vec::new(),
                    })
                }
            }
            _ => {
                let d = m.distance(x, y)?;
                Ok(self.radial(d).unwrap()?.0)
            }
        }
    }

    pub fn value(&self, m: &ManifoldChart, x: &Vector, y: &Vector) -> Result<f64> {
        m.check(x)?;
        m.check(y)?;
        self.raw_value(m, x, y)
    }

    /// `D Psi(x, x') . (u, u')`.
    pub fn d_pair(
        &self,
        m: &ManifoldChart,
        x: &Vector,
        y: &Vector,
        u: &Vector,
        v: &Vector,
    ) -> Result<f64> {
        self.at(m, x, y)?.d(u, v)
    }

    /// Covariant Hessian quadratic form at `(x, x')` on `(w, w')`.
    pub fn hess_quad(
        &self,
        m: &ManifoldChart,
        x: &Vector,
        y: &Vector,
        w: &Vector,
        wp: &Vector,
    ) -> Result<f64> {
        self.at(m, x, y)?.hess(w, wp)
    }

    /// Empirical `c` with `delta^p / c <= Psi <= c delta^p` over sampled pairs
    /// (pairs closer than `1e-6` are skipped).
    pub fn comparison_constant(
        &self,
        m: &ManifoldChart,
        sampler: &TangentPairSampler,
        seed: u64,
        count: usize,
    ) -> Result<f64> {
        let p = self.exponent();
        let ratios = batched(seed, count, |s, _| -> Result<Option<f64>> {
            let x = sampler.point(m, s);
            let y = sampler.near_point(m, s, &x);
            let d = m.distance(&x, &y)?;
            if d < 1e-6 {
                return Ok(None);
            }
            let r = self.value(m, &x, &y)? / d.powf(p);
            Ok(Some(r.max(1.0 / r)))
        });
        let mut c = 1.0_f64;
        for r in ratios {
            if let Some(r) = r? {
                c = c.max(r);
            }
        }
        Ok(c)
    }
}

struct Closed {
    f1: f64,
    f2: f64,
    lx: Vector,
    ly: Vector,
    gx: Matrix,
    gy: Matrix,
    curvature: f64,
}

/// `Psi` evaluated at a fixed pair of points, ready for repeated derivative
/// queries.
pub struct PsiPair<'a> {
    psi: &'a PsiFunction,
    m: &'a ManifoldChart,
    x: Vector,
    y: Vector,
    delta: f64,
    value: f64,
    closed: Option<Closed>,
}

/// `(sn_K(d), cs_K(d))` for constant curvature `K`.
fn sn_cs(k: f64, d: f64) -> (f64, f64) {
    if k > 0.0 {
        let r = k.sqrt();
        ((r * d).sin() / r, (r * d).cos())
    } else if k < 0.0 {
        let r = (-k).sqrt();
        ((r * d).sinh() / r, (r * d).cosh())
    } else {
        (d, 1.0)
    }
}

impl PsiPair<'_> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn d(&self, u: &Vector, v: &Vector) -> Result<f64> {
        match &self.closed {
            Some(c) => {
                if self.delta == 0.0 {
                    return Ok(0.0);
                }
                // D delta = -(<log_x x', u> + <log_x' x, u'>) / delta
                let pair = inner(&c.gx, &c.lx, u) + inner(&c.gy, &c.ly, v);
                Ok(match self.psi {
                    PsiFunction::SquaredDistance => -pair,
                    _ => -c.f1 * pair / self.delta,
                })
            }
            None => self.fd_first(u, v),
        }
    }

    pub fn hess(&self, w: &Vector, wp: &Vector) -> Result<f64> {
        match &self.closed {
            Some(c) => self.closed_hess(c, w, wp),
            None => {
                let second = self.fd_second(w, wp)?;
                let gx = self.m.christoffel(&self.x)?.contract(w, w);
                let gy = self.m.christoffel(&self.y)?.contract(wp, wp);
                Ok(second - self.fd_first(&gx, &gy)?)
            }
        }
    }

    /// `sum_c Hess Psi((z_c, z'_c), (z_c, z'_c))` over the columns.
    pub fn hess_columns(&self, z: &Matrix, zp: &Matrix) -> Result<f64> {
        let mut acc = 0.0;
        for c in 0..z.ncols() {
            acc += self.hess(&z.column(c).into_owned(), &zp.column(c).into_owned())?;
        }
        Ok(acc)
    }

    fn closed_hess(&self, c: &Closed, w: &Vector, wp: &Vector) -> Result<f64> {
        let d = self.delta;
        if d == 0.0 {
            let diff = w - wp;
            let q = inner(&c.gx, &diff, &diff);
            return Ok(match self.psi {
                PsiFunction::SquaredDistance => q,
                PsiFunction::SinPower { a, curvature } if *a == 2.0 => 0.5 * curvature * q,
                _ => 0.0,
            });
        }
        let t = &c.lx / d;
        let tp = &c.ly * (-1.0 / d);
        let w_par = inner(&c.gx, w, &t);
        let wp_par = inner(&c.gy, wp, &tp);
        let w_perp = w - &t * w_par;
        let wp_perp = wp - &tp * wp_par;
        let moved = self.m.parallel_transport(
            &self.x,
            &self.y,
            &Matrix::from_column_slice(w.len(), 1, w_perp.as_slice()),
        )?;
        let moved = Vector::from_column_slice(moved.as_slice());
        let (sn, cs) = sn_cs(c.curvature, d);
        let hess_delta = (cs * (inner(&c.gx, &w_perp, &w_perp) + inner(&c.gy, &wp_perp, &wp_perp))
            - 2.0 * inner(&c.gy, &moved, &wp_perp))
            / sn;
        let d_delta = wp_par - w_par;
        Ok(c.f2 * d_delta * d_delta + c.f1 * hess_delta)
    }

    fn along(&self, u: &Vector, v: &Vector, t: f64) -> Result<f64> {
        let x = &self.x + u * t;
        let y = &self.y + v * t;
        self.psi.value(self.m, &x, &y)
    }

    fn step(u: &Vector, v: &Vector) -> f64 {
        let scale = (u.norm_squared() + v.norm_squared()).sqrt();
        PSI_FD_STEP / scale.max(1.0)
    }

    fn fd_first(&self, u: &Vector, v: &Vector) -> Result<f64> {
        if u.norm() == 0.0 && v.norm() == 0.0 {
            return Ok(0.0);
        }
        let h = Self::step(u, v);
        let f = |t: f64| self.along(u, v, t);
        Ok((-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h))
    }

    fn fd_second(&self, u: &Vector, v: &Vector) -> Result<f64> {
        if u.norm() == 0.0 && v.norm() == 0.0 {
            return Ok(0.0);
        }
        let h = Self::step(u, v);
        let f = |t: f64| self.along(u, v, t);
        Ok(
            (-f(2.0 * h)? + 16.0 * f(h)? - 30.0 * self.value + 16.0 * f(-h)? - f(-2.0 * h)?)
                / (12.0 * h * h),
        )
    }
}

/// Result of [`hessian_lower_bound_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HessianBound {
    pub alpha: f64,
    pub beta: f64,
    pub count: usize,
}

/// Candidate values of `alpha`, largest first.
const ALPHA_LADDER: core::ops::RangeInclusive<i32> = -20..=3;
/// Largest `beta` accepted for a candidate `alpha`.
pub const BETA_CAP: f64 = 1e6;

/// Empirical `(alpha, beta)` with
///
/// ```text
/// Hess Psi((z, z'), (z, z')) >= alpha w |P z - z'|_r^2 - beta Psi (|z|_r^2 + |z'|_r^2)
/// ```
///
/// over sampled `(x, x', z, z')`, where `P` is parallel transport and `w` is
/// [`PsiFunction::hessian_weight`]. `alpha` is the largest power of two (at
/// most 8) whose required `beta` vanishes, or failing that the largest whose
/// `beta` stays below [`BETA_CAP`].
pub fn hessian_lower_bound_check(
    psi: &PsiFunction,
    m: &ManifoldChart,
    sampler: &TangentPairSampler,
    seed: u64,
    count: usize,
) -> Result<HessianBound> {
    psi.validate()?;
    if count == 0 {
        return Err(precondition("count must be at least 1"));
    }
    let rows = batched(
        seed,
        count,
        |s, _| -> Result<(f64, f64, f64, f64, Vec<f64>)> {
            let (x, y, z, zp) = sampler.sample(m, s)?;
            let pair = psi.at(m, &x, &y)?;
            let h = pair.hess(&z, &zp)?;
            let n = m.dim();
            let pz =
                m.parallel_transport(&x, &y, &Matrix::from_column_slice(n, 1, z.as_slice()))?;
            let diff = Vector::from_column_slice(pz.as_slice()) - &zp;
            let weight = psi.hessian_weight(pair.delta());
            let d = m.norm(&y, &diff)?.powi(2) * weight;
            let size = m.norm(&x, &z)?.powi(2) + m.norm(&y, &zp)?.powi(2);
            let e = pair.value() * size;
            let witness = x
                .iter()
                .chain(y.iter())
                .chain(z.iter())
                .chain(zp.iter())
                .copied()
                .collect();
            Ok((h, d, e, size * weight, witness))
        },
    );
    let rows: Vec<_> = rows.into_iter().collect::<Result<_>>()?;
    let beta_for = |alpha: f64| -> (f64, usize) {
        let mut beta = 0.0_f64;
        let mut worst = 0;
        for (i, (h, d, e, size, _)) in rows.iter().enumerate() {
            // rounding in h is relative to |z|^2 + |z'|^2, not to d
            let excess = alpha * d - h - 1e-10 * (alpha * size + h.abs());
            if excess > 0.0 {
                let b = if *e > 0.0 { excess / e } else { f64::INFINITY };
                if b > beta {
                    beta = b;
                    worst = i;
                }
            }
        }
        (beta, worst)
    };
    let ladder: Vec<f64> = ALPHA_LADDER.rev().map(|j| 2.0_f64.powi(j)).collect();
    for &alpha in &ladder {
        if beta_for(alpha).0 == 0.0 {
            return Ok(HessianBound {
                alpha,
                beta: 0.0,
                count,
            });
        }
    }
    for &alpha in &ladder {
        let (beta, _) = beta_for(alpha);
        if beta <= BETA_CAP {
            return Ok(HessianBound { alpha, beta, count });
        }
    }
    let smallest = *ladder.last().unwrap();
    let (_, worst) = beta_for(smallest);
    Err(Error::PropertyViolation {
        what: format!("no positive alpha found down to {smallest}"),
        witness: rows[worst].4.clone(),
    })
}
