//! Convex sublevel domains `{chi <= c}`, the normalising map onto the closed
//! unit ball, and the Psi-functions used to compare two points.

mod psi;

pub use psi::{hessian_lower_bound_check, HessianBound, PsiFn, PsiFunction};

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::error::{precondition, Error, Result};
use crate::geometry::ManifoldChart;
use crate::rng::halton_ball;
use crate::{Matrix, Vector};

/// Points of the inner chart used to estimate the convexity constant.
pub const CONVEXITY_SAMPLES: usize = 2048;
/// Directions used to locate the boundary and the image margin.
pub const BOUNDARY_DIRECTIONS: usize = 512;
/// Step of the fourth-order central differences for custom `chi`.
pub const FD_STEP: f64 = 1e-4;
/// Tolerance of the ray inversion of the normalising map.
pub const INVERSE_TOL: f64 = 1e-13;

pub type ChiFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type ChiGradFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type ChiHessFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// A smooth strictly convex function with its minimum at the domain centre.
#[derive(Clone)]
pub enum Chi {
    /// `(y - p)^T Q (y - p)` with `Q` symmetric positive definite.
    Quadratic { q: Matrix },
    /// Derivatives default to fourth-order central differences.
    Custom {
        value: ChiFn,
        grad: Option<ChiGradFn>,
        hess: Option<ChiHessFn>,
    },
}

impl Chi {
    /// `|y - p|^2`.
    pub fn squared_norm(n: usize) -> Self {
        Chi::Quadratic {
            q: Matrix::identity(n, n),
        }
    }
}

fn fd4(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

/// Convex domain `{chi <= c}` inside the inner chart `O_1`, the ball of
/// radius `inner_radius` about the centre `p`, together with the
/// normalising map
///
/// ```text
/// N(y) = sqrt(c2) (y - p) / sqrt(c2 |y - p|^2 + c - chi(y))
/// ```
///
/// which sends the domain onto the closed unit ball.
#[derive(Clone)]
pub struct DomainSpec {
    chi: Chi,
    level: f64,
    center: Vector,
    inner_radius: f64,
    c2: f64,
    lambda_hat: f64,
    margin: f64,
}

impl core::fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DomainSpec")
            .field("level", &self.level)
            .field("center", &self.center.as_slice())
            .field("inner_radius", &self.inner_radius)
            .field("c2", &self.c2)
            .field("lambda_hat", &self.lambda_hat)
            .finish()
    }
}

impl DomainSpec {
    /// Validates the data, estimates `lambda_hat` (smallest Hessian eigenvalue
    /// over a Halton sample of `O_1`) and sets `c2 = lambda_hat / 2`.
    pub fn new(
        chart: &ManifoldChart,
        chi: Chi,
        level: f64,
        center: Vector,
        inner_radius: f64,
    ) -> Result<Self> {
        let n = chart.dim();
        if center.len() != n {
            return Err(Error::Dimension(format!(
                "centre has {} coordinates, chart has {n}",
                center.len()
            )));
        }
        if !(level > 0.0) {
            return Err(precondition("level c must be positive"));
        }
        if !(inner_radius > 0.0) {
            return Err(precondition("inner radius must be positive"));
        }
        if let Chi::Quadratic { q } = &chi {
            if q.nrows() != n || q.ncols() != n {
                return Err(Error::Dimension("quadratic form has the wrong size".into()));
            }
        }
        // O_1 must sit inside the chart domain
        if center.norm() + inner_radius >= chart.chart_radius() {
            return Err(precondition(format!(
                "inner chart of radius {inner_radius} about the centre leaves the chart domain"
            )));
        }
        let mut spec = Self {
            chi,
            level,
            center,
            inner_radius,
            c2: 1.0,
            lambda_hat: 0.0,
            margin: 0.0,
        };
        let p0 = spec.chi(&spec.center);
        if p0.abs() > 1e-12 {
            return Err(Error::PropertyViolation {
                what: format!("chi(p) = {p0} must vanish"),
                witness: spec.center.iter().copied().collect(),
            });
        }
        let mut lambda = f64::INFINITY;
        for i in 0..CONVEXITY_SAMPLES {
            let y = &spec.center + halton_ball(i as u64, n) * inner_radius;
            let h = spec.hess_chi(&y);
            let sym = (&h + h.transpose()) * 0.5;
            let min = sym.symmetric_eigenvalues().min();
            if !(min.is_finite()) {
                return Err(Error::Evaluation {
                    b: Vec::new(),
                    x: y.iter().copied().collect(),
                    z: Vec::new(),
                });
            }
            lambda = lambda.min(min);
            if i > 0 && (&y - &spec.center).norm() > 0.0 && spec.chi(&y) <= 0.0 {
                return Err(Error::PropertyViolation {
                    what: "chi must be positive away from the centre".into(),
                    witness: y.iter().copied().collect(),
                });
            }
        }
        if !(lambda > 0.0) {
            return Err(Error::PropertyViolation {
                what: format!("chi is not strictly convex on O_1 (lambda_hat = {lambda})"),
                witness: Vec::new(),
            });
        }
        spec.lambda_hat = lambda;
        spec.c2 = 0.5 * lambda;
        spec.check_boundary_and_margin()?;
        Ok(spec)
    }

    /// Overrides `c2`; it must not exceed `lambda_hat / 2`.
    pub fn with_c2(mut self, c2: f64) -> Result<Self> {
        if !(c2 > 0.0 && c2 <= 0.5 * self.lambda_hat * (1.0 + 1e-12)) {
            return Err(precondition(format!(
                "c2 = {c2} must lie in (0, lambda_hat / 2 = {}]",
                0.5 * self.lambda_hat
            )));
        }
        self.c2 = c2;
        self.check_boundary_and_margin()?;
        Ok(self)
    }

    /// Checks that the domain boundary is crossed inside `O_1` along every
    /// probed direction and records how far `N(O_1)` reaches past the unit
    /// sphere.
    fn check_boundary_and_margin(&mut self) -> Result<()> {
        let n = self.dim();
        let mut margin = f64::INFINITY;
        for i in 0..BOUNDARY_DIRECTIONS {
            let dir = unit_direction(i, n);
            let edge = &self.center + &dir * self.inner_radius;
            if self.chi(&edge) <= self.level {
                return Err(Error::PropertyViolation {
                    what: "the domain is not contained in the inner chart".into(),
                    witness: edge.iter().copied().collect(),
                });
            }
            let q = self.denominator(&edge);
            if q > 0.0 {
                margin = margin.min(self.normalize_unchecked(&edge).norm() - 1.0);
            }
        }
        self.margin = margin;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    /// `inf |N(y)| - 1` over the boundary of `O_1`: the normalised image
    /// contains the ball of radius `1 + margin`.
    pub fn normalized_margin(&self) -> f64 {
        self.margin
    }

    pub fn chi(&self, y: &Vector) -> f64 {
        match &self.chi {
            Chi::Quadratic { q } => {
                let v = y - &self.center;
                v.dot(&(q * &v))
            }
            Chi::Custom { value, .. } => value(y),
        }
    }

    pub fn grad_chi(&self, y: &Vector) -> Vector {
        match &self.chi {
            Chi::Quadratic { q } => (q + q.transpose()) * (y - &self.center),
            Chi::Custom { grad: Some(g), .. } => g(y),
            Chi::Custom { value, .. } => Vector::from_fn(y.len(), |i, _| {
                fd4(
                    |t| {
                        let mut yy = y.clone();
                        yy[i] += t;
                        value(&yy)
                    },
                    FD_STEP,
                )
            }),
        }
    }

    pub fn hess_chi(&self, y: &Vector) -> Matrix {
        match &self.chi {
            Chi::Quadratic { q } => q + q.transpose(),
            Chi::Custom { hess: Some(h), .. } => h(y),
            Chi::Custom { .. } => {
                let n = y.len();
                let mut h = Matrix::zeros(n, n);
                for j in 0..n {
                    let col = Vector::from_fn(n, |i, _| {
                        fd4(
                            |t| {
                                let mut yy = y.clone();
                                yy[j] += t;
                                self.grad_chi(&yy)[i]
                            },
                            FD_STEP,
                        )
                    });
                    h.set_column(j, &col);
                }
                (&h + h.transpose()) * 0.5
            }
        }
    }

    pub fn contains(&self, y: &Vector) -> bool {
        self.chi(y) <= self.level
    }

    pub fn in_inner_chart(&self, y: &Vector) -> bool {
        (y - &self.center).norm() < self.inner_radius
    }

    fn denominator(&self, y: &Vector) -> f64 {
        let v = y - &self.center;
        self.c2 * v.norm_squared() + self.level - self.chi(y)
    }

    fn normalize_unchecked(&self, y: &Vector) -> Vector {
        (y - &self.center) * (self.c2.sqrt() / self.denominator(y).sqrt())
    }

    /// The normalising map `N`.
    pub fn normalize(&self, y: &Vector) -> Result<Vector> {
        let q = self.denominator(y);
        if !(q > 0.0) {
            return Err(Error::Domain {
                point: y.iter().copied().collect(),
                reason: "c2 |y - p|^2 + c - chi(y) is not positive".into(),
            });
        }
        Ok(self.normalize_unchecked(y))
    }

    /// Differential of `N` at `y`.
    pub fn normalize_jacobian(&self, y: &Vector) -> Result<Matrix> {
        let q = self.denominator(y);
        if !(q > 0.0) {
            return Err(Error::Domain {
                point: y.iter().copied().collect(),
                reason: "c2 |y - p|^2 + c - chi(y) is not positive".into(),
            });
        }
        let n = y.len();
        let v = y - &self.center;
        let g = &v * (2.0 * self.c2) - self.grad_chi(y);
        let sq = q.sqrt();
        let j = Matrix::identity(n, n) / sq - &v * g.transpose() / (2.0 * q * sq);
        Ok(j * self.c2.sqrt())
    }

    /// `N^{-1}(u)`, found along the ray from `p` in the direction of `u`.
    pub fn normalize_inverse(&self, u: &Vector) -> Result<Vector> {
        let r = u.norm();
        if r == 0.0 {
            return Ok(self.center.clone());
        }
        if !(r < 1.0 + self.margin) {
            return Err(Error::Domain {
                point: u.iter().copied().collect(),
                reason: format!(
                    "outside the normalised image (radius {})",
                    1.0 + self.margin
                ),
            });
        }
        let dir = u / r;
        let s = match &self.chi {
            Chi::Quadratic { q } => {
                let a = dir.dot(&(q * &dir));
                let den = self.c2 - r * r * (self.c2 - a);
                if !(den > 0.0) {
                    return Err(Error::Domain {
                        point: u.iter().copied().collect(),
                        reason: "no preimage along the ray".into(),
                    });
                }
                (r * r * self.level / den).sqrt()
            }
            Chi::Custom { .. } => self.ray_solve(&dir, r)?,
        };
        Ok(&self.center + dir * s)
    }

    /// Root of `c2 s^2 - r^2 (c2 s^2 + c - chi(p + s d))` on `(0, inner_radius]`
    /// by Newton's method safeguarded with bisection.
    fn ray_solve(&self, dir: &Vector, r: f64) -> Result<f64> {
        let r2 = r * r;
        let g = |s: f64| {
            let y = &self.center + dir * s;
            let val = self.c2 * s * s - r2 * (self.c2 * s * s + self.level - self.chi(&y));
            let slope = 2.0 * self.c2 * s * (1.0 - r2) + r2 * self.grad_chi(&y).dot(dir);
            (val, slope)
        };
        let (mut lo, mut hi) = (0.0, self.inner_radius);
        if g(hi).0 <= 0.0 {
            return Err(Error::Domain {
                point: (dir * r).iter().copied().collect(),
                reason: "no preimage inside the inner chart".into(),
            });
        }
        let mut s = 0.5 * hi;
        for it in 0..200 {
            let (val, slope) = g(s);
            if val.abs() <= INVERSE_TOL * self.level.max(1e-300) {
                return Ok(s);
            }
            if val < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - val / slope;
            s = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * self.inner_radius {
                return Ok(s);
            }
            if it == 199 {
                break;
            }
        }
        Err(Error::Convergence {
            what: "normalising map inversion",
            iterations: 200,
            residual: g(s).0.abs(),
        })
    }

    /// Radial retraction onto the domain: points with `chi > c` are sent to
    /// the boundary point on the ray from `p` through them.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        // boundary points produced here may exceed c by rounding
        if self.chi(y) <= self.level * (1.0 + 1e-12) {
            return Ok(y.clone());
        }
        let v = y - &self.center;
        let vn = v.norm();
        if vn == 0.0 {
            return Ok(self.center.clone());
        }
        // N preserves rays, so the boundary point is N^{-1} of the unit vector
        self.normalize_inverse(&(v / vn))
    }
}

/// Deterministic, well-spread unit vectors.
pub(crate) fn unit_direction(i: usize, n: usize) -> Vector {
    let mut k = i as u64;
    loop {
        let v = halton_ball(k, n);
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
        k += 1_000_003;
    }
}
