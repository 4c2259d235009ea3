use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::domain::DomainSpec;
use crate::error::{precondition, Result};
use crate::geometry::ManifoldChart;
use crate::rng::Sampler;
use crate::{Matrix, Vector};

/// Where the base points `x` are drawn.
#[derive(Clone, Debug)]
pub enum Region {
    /// Uniform in a coordinate ball.
    Ball { center: Vector, radius: f64 },
    /// Uniform in the domain `{chi <= c}`, by rejection from the inner
    /// chart.
    Domain(DomainSpec),
}

/// Sampling measures of the condition estimators: `x` from a region, `b`
/// uniform in `[-b_box, b_box]^d`, and `z` with a Gaussian direction and
/// Riemannian norm uniform in `[0, z_max]`, a quarter of the draws being
/// pushed towards `0` on a log scale.
#[derive(Clone, Debug)]
pub struct ConditionSampler {
    pub region: Region,
    pub b_dim: usize,
    pub d_w: usize,
    pub b_box: f64,
    pub z_max: f64,
}

/// Draw budget of the rejection sampler before it reports an error.
const REJECTION_LIMIT: usize = 10_000;

impl ConditionSampler {
    pub fn new(region: Region, b_dim: usize, d_w: usize) -> Self {
        Self {
            region,
            b_dim,
            d_w,
            b_box: 5.0,
            z_max: 3.0,
        }
    }

    pub fn validate(&self, m: &ManifoldChart) -> Result<()> {
        if self.b_dim == 0 || self.d_w == 0 {
            return Err(precondition("b and Brownian dimensions must be positive"));
        }
        if !(self.b_box >= 0.0 && self.z_max >= 0.0) {
            return Err(precondition("b_box and z_max must be nonnegative"));
        }
        match &self.region {
            Region::Ball { center, radius } => {
                if !(center.norm() + radius < m.chart_radius()) || center.len() != m.dim() {
                    return Err(precondition("sampling ball must lie inside the chart"));
                }
            }
            Region::Domain(d) => {
                if d.dim() != m.dim() {
                    return Err(precondition("domain and chart dimensions differ"));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match &self.region {
            Region::Ball { center, radius } => (x - center).norm() <= *radius,
            Region::Domain(d) => d.in_inner_chart(x) && d.contains(x),
        }
    }

    pub fn point(&self, m: &ManifoldChart, s: &mut Sampler) -> Result<Vector> {
        match &self.region {
            Region::Ball { center, radius } => Ok(center + s.in_ball(m.dim(), *radius)),
            Region::Domain(d) => {
                for _ in 0..REJECTION_LIMIT {
                    let y = d.center() + s.in_ball(m.dim(), d.inner_radius());
                    if d.contains(&y) {
                        return Ok(y);
                    }
                }
                Err(precondition("rejection sampling of the domain failed"))
            }
        }
    }

    fn scale(&self) -> f64 {
        match &self.region {
            Region::Ball { radius, .. } => *radius,
            Region::Domain(d) => d.inner_radius(),
        }
    }

    /// Either an independent point or a log-scale perturbation of `x`.
    pub fn partner(&self, m: &ManifoldChart, s: &mut Sampler, x: &Vector) -> Result<Vector> {
        if s.coin(0.5) {
            for _ in 0..32 {
                let eps = self.scale() * s.log_scale(6.0);
                let y = x + s.unit_vector(m.dim()) * eps;
                if self.contains(&y) && m.contains(&y) {
                    return Ok(y);
                }
            }
        }
        self.point(m, s)
    }

    pub fn b(&self, s: &mut Sampler) -> Vector {
        s.in_box(self.b_dim, self.b_box)
    }

    /// Log-scale perturbation of `b`, along one axis or a random direction.
    pub fn b_partner(&self, s: &mut Sampler, b: &Vector) -> Vector {
        if s.coin(0.25) {
            return self.b(s);
        }
        let eps = self.b_box.max(1.0) * s.log_scale(6.0);
        if s.coin(0.5) {
            let mut out = b.clone();
            out[s.index(self.b_dim)] += if s.coin(0.5) { eps } else { -eps };
            out
        } else {
            b + s.unit_vector(self.b_dim) * eps
        }
    }

    fn z_norm(&self, s: &mut Sampler) -> f64 {
        if s.coin(0.25) {
            self.z_max * s.log_scale(6.0)
        } else {
            self.z_max * s.uniform()
        }
    }

    /// A matrix at `x` with the given Riemannian norm and Gaussian direction.
    pub fn z_with_norm(
        &self,
        m: &ManifoldChart,
        s: &mut Sampler,
        x: &Vector,
        norm: f64,
    ) -> Result<Matrix> {
        let g = s.normal_matrix(m.dim(), self.d_w);
        let gn = m.riem_norm(x, &g)?;
        Ok(if gn > 0.0 { g * (norm / gn) } else { g })
    }

    pub fn z(&self, m: &ManifoldChart, s: &mut Sampler, x: &Vector) -> Result<Matrix> {
        let r = self.z_norm(s);
        self.z_with_norm(m, s, x, r)
    }

    /// `z` with norm up to `z_max 10^6`, for growth probes.
    pub fn z_tail(&self, m: &ManifoldChart, s: &mut Sampler, x: &Vector) -> Result<Matrix> {
        if s.coin(0.5) {
            return self.z(m, s, x);
        }
        let r = self.z_max.max(1.0) * 10.0_f64.powf(6.0 * s.uniform());
        self.z_with_norm(m, s, x, r)
    }

    /// A second matrix at the same base point: independent, or `z` plus a
    /// log-scale perturbation of one column, one entry or every entry.
    pub fn z_partner(
        &self,
        m: &ManifoldChart,
        s: &mut Sampler,
        x: &Vector,
        z: &Matrix,
    ) -> Result<Matrix> {
        if s.coin(0.25) {
            return self.z(m, s, x);
        }
        let eps = self.z_max.max(1.0) * s.log_scale(6.0);
        let mut out = z.clone();
        match s.index(3) {
            0 => {
                let c = s.index(self.d_w);
                let dir = s.unit_vector(m.dim()) * eps;
                let mut col = out.column_mut(c);
                col += dir;
            }
            1 => {
                let (i, j) = (s.index(m.dim()), s.index(self.d_w));
                out[(i, j)] += if s.coin(0.5) { eps } else { -eps };
            }
            _ => {
                let g = s.normal_matrix(m.dim(), self.d_w);
                let gn = g.norm();
                if gn > 0.0 {
                    out += g * (eps / gn);
                }
            }
        }
        Ok(out)
    }
}

/// Flattens the arguments of a drift evaluation for error witnesses.
pub(crate) fn witness(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}
