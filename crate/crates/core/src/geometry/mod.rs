//! Chart-based Riemannian geometry: metric, Christoffel symbols, distance,
//! exponential and logarithm maps, parallel transport and Riemannian norms.
//!
//! Built-in charts (flat space, a sphere cap in normal coordinates, the
//! Poincare ball) use closed forms; custom charts integrate the geodesic and
//! transport equations with RK4 and solve boundary-value problems by
//! shooting. [`ManifoldChart::as_ode_chart`] exposes the ODE route for any
//! chart so the two can be compared.

mod closed;
pub mod ode;
mod radial;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use core::f64::consts::FRAC_PI_2;
use core::fmt;
#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::{batched, Sampler};
use crate::{Matrix, Vector};

use closed::{Poincare, SphereCap};
use radial::Profile;

/// Connection coefficients `Gamma^i_{jk}` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: alloc::vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.n + j) * self.n + k] = value;
    }

    /// `Gamma^i_{jk} u^j v^k`.
    pub fn contract(&self, u: &Vector, v: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += self.get(i, j, k) * u[j] * v[k];
                }
            }
            acc
        })
    }

    /// `Gamma_{jk} ([z]^k | [z]^j)`: the sum over the columns of `z` of
    /// `Gamma(z_c, z_c)`.
    pub fn quadratic(&self, z: &Matrix) -> Vector {
        let gram = z * z.transpose();
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    acc += self.get(i, j, k) * gram[(j, k)];
                }
            }
            acc
        })
    }

    /// Largest `|Gamma^i_{jk} - Gamma^i_{kj}|`.
    pub fn torsion(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((self.get(i, j, k) - self.get(i, k, j)).abs());
                }
            }
        }
        worst
    }
}

pub type MetricFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type ChristoffelFn = Arc<dyn Fn(&Vector) -> Christoffel + Send + Sync>;

/// A user-supplied chart: metric and (torsion-free) connection are given
/// independently.
#[derive(Clone)]
pub struct CustomChart {
    pub metric: MetricFn,
    pub christoffel: ChristoffelFn,
    /// Whether `christoffel` is the Levi-Civita connection of `metric`.
    pub levi_civita: bool,
}

#[derive(Clone)]
pub enum ChartKind {
    Euclidean,
    /// Normal coordinates at the centre of a cap of a sphere of curvature
    /// `curvature > 0`.
    Sphere {
        curvature: f64,
    },
    /// Poincare ball, curvature -1.
    HyperbolicDisc,
    Custom(CustomChart),
}

/// A manifold described by one chart whose domain is the open ball
/// `|x| < chart_radius` around the coordinate origin.
#[derive(Clone)]
pub struct ManifoldChart {
    kind: ChartKind,
    dim: usize,
    chart_radius: f64,
}

impl fmt::Debug for ManifoldChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            ChartKind::Euclidean => "Euclidean".into(),
            ChartKind::Sphere { curvature } => format!("Sphere(K={curvature})"),
            ChartKind::HyperbolicDisc => "HyperbolicDisc".into(),
            ChartKind::Custom(_) => alloc::string::String::from("Custom"),
        };
        f.debug_struct("ManifoldChart")
            .field("kind", &kind)
            .field("dim", &self.dim)
            .field("chart_radius", &self.chart_radius)
            .finish()
    }
}

impl ManifoldChart {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            kind: ChartKind::Euclidean,
            dim,
            chart_radius: f64::INFINITY,
        }
    }

    pub fn euclidean_ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Precondition("chart radius must be positive".into()));
        }
        Ok(Self {
            kind: ChartKind::Euclidean,
            dim,
            chart_radius: radius,
        })
    }

    /// Sphere cap chart; the radius must stay below `pi / (2 sqrt K)` so the
    /// cap is a regular geodesic ball.
    pub fn sphere(dim: usize, curvature: f64, chart_radius: f64) -> Result<Self> {
        if !(curvature > 0.0) {
            return Err(Error::Precondition(
                "sphere curvature must be positive".into(),
            ));
        }
        let limit = FRAC_PI_2 / curvature.sqrt();
        if !(chart_radius > 0.0 && chart_radius < limit) {
            return Err(Error::Precondition(format!(
                "sphere chart radius {chart_radius} must lie in (0, {limit})"
            )));
        }
        Ok(Self {
            kind: ChartKind::Sphere { curvature },
            dim,
            chart_radius,
        })
    }

    pub fn hyperbolic_disc(dim: usize, chart_radius: f64) -> Result<Self> {
        if !(chart_radius > 0.0 && chart_radius < 1.0) {
            return Err(Error::Precondition(
                "Poincare chart radius must lie in (0, 1)".into(),
            ));
        }
        Ok(Self {
            kind: ChartKind::HyperbolicDisc,
            dim,
            chart_radius,
        })
    }

    pub fn custom(dim: usize, chart: CustomChart, chart_radius: f64) -> Self {
        Self {
            kind: ChartKind::Custom(chart),
            dim,
            chart_radius,
        }
    }

    /// The same metric and connection, routed through the ODE kernels.
    pub fn as_ode_chart(&self) -> Self {
        if matches!(self.kind, ChartKind::Custom(_)) {
            return self.clone();
        }
        let a = self.clone();
        let b = self.clone();
        Self {
            kind: ChartKind::Custom(CustomChart {
                metric: Arc::new(move |x: &Vector| a.metric_raw(x)),
                christoffel: Arc::new(move |x: &Vector| b.christoffel_raw(x)),
                levi_civita: true,
            }),
            dim: self.dim,
            chart_radius: self.chart_radius,
        }
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chart_radius(&self) -> f64 {
        self.chart_radius
    }

    pub fn is_levi_civita(&self) -> bool {
        match &self.kind {
            ChartKind::Custom(c) => c.levi_civita,
            _ => true,
        }
    }

    /// Upper bound on sectional curvature when the chart knows one.
    pub fn curvature_bound(&self) -> Option<f64> {
        match &self.kind {
            ChartKind::Euclidean => Some(0.0),
            ChartKind::Sphere { curvature } => Some(*curvature),
            ChartKind::HyperbolicDisc => Some(-1.0),
            ChartKind::Custom(_) => None,
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim && x.iter().all(|c| c.is_finite()) && x.norm() < self.chart_radius
    }

    pub fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, chart has dimension {}",
                x.len(),
                self.dim
            )));
        }
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                point: x.iter().copied().collect(),
                reason: format!("|x| must be below {}", self.chart_radius),
            })
        }
    }

    fn profile(&self, x: &Vector) -> Option<Profile> {
        match &self.kind {
            ChartKind::Euclidean => Some(Profile::FLAT),
            ChartKind::Sphere { curvature } => Some(Profile::sphere(*curvature, x)),
            ChartKind::HyperbolicDisc => Some(Profile::poincare(x)),
            ChartKind::Custom(_) => None,
        }
    }

    pub(crate) fn metric_raw(&self, x: &Vector) -> Matrix {
        match (&self.kind, self.profile(x)) {
            (ChartKind::Custom(c), _) => (c.metric)(x),
            (_, Some(p)) => p.metric(x),
            _ => unreachable!(),
        }
    }

    pub(crate) fn christoffel_raw(&self, x: &Vector) -> Christoffel {
        match (&self.kind, self.profile(x)) {
            (ChartKind::Euclidean, _) => Christoffel::zeros(self.dim),
            (ChartKind::Custom(c), _) => (c.christoffel)(x),
            (_, Some(p)) => p.christoffel(x),
            _ => unreachable!(),
        }
    }

    pub fn metric(&self, x: &Vector) -> Result<Matrix> {
        self.check(x)?;
        Ok(self.metric_raw(x))
    }

    pub fn christoffel(&self, x: &Vector) -> Result<Christoffel> {
        self.check(x)?;
        Ok(self.christoffel_raw(x))
    }

    pub fn inner(&self, x: &Vector, u: &Vector, v: &Vector) -> Result<f64> {
        let g = self.metric(x)?;
        Ok(u.dot(&(g * v)))
    }

    /// `|v|_r` for a tangent vector at `x`.
    pub fn norm(&self, x: &Vector, v: &Vector) -> Result<f64> {
        Ok(self.inner(x, v, v)?.max(0.0).sqrt())
    }

    /// `||z||_r = sqrt(sum_c |z_c|_r^2)` over the columns of `z`.
    pub fn riem_norm(&self, x: &Vector, z: &Matrix) -> Result<f64> {
        let g = self.metric(x)?;
        Ok(riem_norm_with(&g, z))
    }

    pub fn distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        if x == y {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            ChartKind::Euclidean => (x - y).norm(),
            ChartKind::Sphere { curvature } => SphereCap {
                k: curvature.sqrt(),
            }
            .distance(x, y),
            ChartKind::HyperbolicDisc => Poincare::distance(x, y),
            ChartKind::Custom(_) => {
                let v = ode::log(self, x, y)?;
                self.norm(x, &v)?
            }
        })
    }

    /// Initial velocity at `x` of the geodesic reaching `y` at time 1.
    pub fn log(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check(x)?;
        self.check(y)?;
        Ok(match &self.kind {
            ChartKind::Euclidean => y - x,
            ChartKind::Sphere { curvature } => SphereCap {
                k: curvature.sqrt(),
            }
            .log(x, y),
            ChartKind::HyperbolicDisc => Poincare::log(x, y),
            ChartKind::Custom(_) => ode::log(self, x, y)?,
        })
    }

    fn exp_unchecked(&self, x: &Vector, v: &Vector) -> Vector {
        match &self.kind {
            ChartKind::Euclidean => x + v,
            ChartKind::Sphere { curvature } => SphereCap {
                k: curvature.sqrt(),
            }
            .exp(x, v),
            ChartKind::HyperbolicDisc => Poincare::exp(x, v),
            ChartKind::Custom(_) => unreachable!(),
        }
    }

    pub fn exp(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        self.check(x)?;
        if let ChartKind::Custom(_) = self.kind {
            return ode::exp(self, x, v);
        }
        // probe the path so that a geodesic leaving and re-entering the
        // chart is still reported
        const PROBES: usize = 16;
        let mut inside_t = 0.0;
        for i in 1..=PROBES {
            let t = i as f64 / PROBES as f64;
            let p = self.exp_unchecked(x, &(v * t));
            if !self.contains(&p) {
                let (mut lo, mut hi) = (inside_t, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.contains(&self.exp_unchecked(x, &(v * mid))) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Err(Error::DomainExit { parameter: hi });
            }
            inside_t = t;
        }
        Ok(self.exp_unchecked(x, v))
    }

    /// Parallel transport of the columns of `z` from `x` to `y` along the
    /// unique geodesic.
    pub fn parallel_transport(&self, x: &Vector, y: &Vector, z: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        self.check(y)?;
        if x == y {
            return Ok(z.clone());
        }
        Ok(match &self.kind {
            ChartKind::Euclidean => z.clone(),
            ChartKind::Sphere { curvature } => SphereCap {
                k: curvature.sqrt(),
            }
            .transport(x, y, z),
            ChartKind::HyperbolicDisc => Poincare::transport(x, y, z),
            ChartKind::Custom(_) => ode::transport(self, x, y, z)?,
        })
    }
}

pub(crate) fn riem_norm_with(g: &Matrix, z: &Matrix) -> f64 {
    let mut acc = 0.0;
    for c in 0..z.ncols() {
        let col = z.column(c);
        acc += col.dot(&(g * col));
    }
    acc.max(0.0).sqrt()
}

/// Draws `(x, x', z, z')` for transport estimates: `x` uniform in a ball of
/// the chart, `x'` either independent or a log-scale perturbation of `x`,
/// and `z'` either independent, close to `z`, or close to the transport of
/// `z`, so that both near-diagonal regimes get explored.
#[derive(Clone, Copy, Debug)]
pub struct TangentPairSampler {
    pub radius: f64,
    pub vector_scale: f64,
}

impl TangentPairSampler {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            vector_scale: 1.0,
        }
    }

    pub fn point(&self, m: &ManifoldChart, s: &mut Sampler) -> Vector {
        s.in_ball(m.dim(), self.radius)
    }

    pub fn near_point(&self, m: &ManifoldChart, s: &mut Sampler, x: &Vector) -> Vector {
        if s.coin(0.3) {
            return self.point(m, s);
        }
        loop {
            let eps = 2.0 * self.radius * s.log_scale(5.0);
            let y = x + s.unit_vector(m.dim()) * eps;
            if y.norm() <= self.radius {
                return y;
            }
        }
    }

    pub fn sample(
        &self,
        m: &ManifoldChart,
        s: &mut Sampler,
    ) -> Result<(Vector, Vector, Vector, Vector)> {
        let n = m.dim();
        let x = self.point(m, s);
        let y = self.near_point(m, s, &x);
        let z = s.normal_vector(n) * (self.vector_scale * s.log_scale(2.0));
        let zn = z.norm().max(1e-300);
        let zp = match s.index(3) {
            0 => s.normal_vector(n) * (self.vector_scale * s.log_scale(2.0)),
            1 => &z + s.normal_vector(n) * (zn * s.log_scale(6.0)),
            _ => {
                let pz =
                    m.parallel_transport(&x, &y, &Matrix::from_column_slice(n, 1, z.as_slice()))?;
                Vector::from_column_slice(pz.as_slice())
                    + s.normal_vector(n) * (zn * s.log_scale(6.0))
            }
        };
        Ok((x, y, z, zp))
    }
}

/// Result of [`transport_estimate_constant`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportEstimate {
    /// Smallest constant satisfying both transport inequalities over the
    /// samples (at least 1: at `x = x'` the two ratios are reciprocal).
    pub constant: f64,
    pub forward_ratio: f64,
    pub backward_ratio: f64,
    pub count: usize,
}

/// Empirical constant `C` with, for all sampled `(x, x', z, z')`,
///
/// ```text
/// |P z - z'|_r <= C (|z - z'| + d(x,x') (|z| + |z'|))
/// |z - z'|     <= C (|P z - z'|_r + d(x,x') (|z|_r + |z'|_r))
/// ```
///
/// where `P` is parallel transport from `x` to `x'`, `|.|` the coordinate
/// norm and `|.|_r` the Riemannian norm at the base point of the vector.
pub fn transport_estimate_constant(
    m: &ManifoldChart,
    sampler: &TangentPairSampler,
    seed: u64,
    count: usize,
) -> Result<TransportEstimate> {
    if count == 0 {
        return Err(Error::Precondition("count must be at least 1".into()));
    }
    let ratios = batched(seed, count, |s, _| -> Result<(f64, f64)> {
        let (x, y, z, zp) = sampler.sample(m, s)?;
        let n = m.dim();
        let zm = Matrix::from_column_slice(n, 1, z.as_slice());
        let pz = m.parallel_transport(&x, &y, &zm)?;
        let pz = Vector::from_column_slice(pz.as_slice());
        let d = m.distance(&x, &y)?;
        let diff_r = m.norm(&y, &(&pz - &zp))?;
        let diff_e = (&z - &zp).norm();
        let fwd_den = diff_e + d * (z.norm() + zp.norm());
        let bwd_den = diff_r + d * (m.norm(&x, &z)? + m.norm(&y, &zp)?);
        let fwd = if fwd_den > 0.0 { diff_r / fwd_den } else { 0.0 };
        let bwd = if bwd_den > 0.0 { diff_e / bwd_den } else { 0.0 };
        Ok((fwd, bwd))
    });
    let mut forward = 0.0_f64;
    let mut backward = 0.0_f64;
    for r in ratios {
        let (f, b) = r?;
        forward = forward.max(f);
        backward = backward.max(b);
    }
    Ok(TransportEstimate {
        constant: forward.max(backward).max(1.0),
        forward_ratio: forward,
        backward_ratio: backward,
        count,
    })
}
