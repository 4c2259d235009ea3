//! Drivers `f(b, x, z)` and Monte Carlo estimators for the conditions
//! imposed on them: Lipschitz continuity in `(b, z)`, monotonicity, the
//! uniform bound at `z = 0`, linear growth and outward pointing on the
//! boundary.

pub mod builtin;
mod estimators;
mod sampling;

pub use estimators::{
    check_all, check_outward, check_outward_normalized, check_smallness, check_uniform_bound,
    dpsi_lower_bound_check, estimate_lipschitz_bz, estimate_monotonicity, linear_growth_constant,
    ConditionReport, DpsiReport, EstimParams, GrowthEstimate, Thresholds, Verdicts, NEAR_DIAGONAL,
    OUTWARD_TOL,
};
pub use sampling::{ConditionSampler, Region};

use alloc::string::String;
use alloc::sync::Arc;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// A driver: returns the tangent vector `f(b, x, z)` at `x`.
pub trait Drift: Send + Sync {
    fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> Vector;
}

impl<F> Drift for F
where
    F: Fn(&Vector, &Vector, &Matrix) -> Vector + Send + Sync,
{
    fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> Vector {
        self(b, x, z)
    }
}

/// Constants a drift claims to satisfy; estimates are checked against them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Declared {
    pub lipschitz: Option<f64>,
    pub monotonicity: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone)]
pub struct DriftSpec {
    name: String,
    inner: Arc<dyn Drift>,
    depends_on_z: bool,
    declared: Declared,
}

impl core::fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("depends_on_z", &self.depends_on_z)
            .field("declared", &self.declared)
            .finish()
    }
}

impl DriftSpec {
    pub fn new(name: impl Into<String>, depends_on_z: bool, f: impl Drift + 'static) -> Self {
        Self {
            name: name.into(),
            inner: Arc::new(f),
            depends_on_z,
            declared: Declared::default(),
        }
    }

    pub fn from_arc(name: impl Into<String>, depends_on_z: bool, f: Arc<dyn Drift>) -> Self {
        Self {
            name: name.into(),
            inner: f,
            depends_on_z,
            declared: Declared::default(),
        }
    }

    pub fn with_declared(mut self, declared: Declared) -> Self {
        self.declared = declared;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depends_on_z(&self) -> bool {
        self.depends_on_z
    }

    pub fn declared(&self) -> &Declared {
        &self.declared
    }

    pub fn inner(&self) -> &Arc<dyn Drift> {
        &self.inner
    }

    /// Evaluates without the finiteness check.
    pub fn eval_raw(&self, b: &Vector, x: &Vector, z: &Matrix) -> Vector {
        self.inner.eval(b, x, z)
    }

    pub fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> Result<Vector> {
        let v = self.inner.eval(b, x, z);
        if v.len() == x.len() && v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                b: b.iter().copied().collect(),
                x: x.iter().copied().collect(),
                z: z.iter().copied().collect(),
            })
        }
    }
}

/// A drift expressed in the normalised chart `u = N(y)`:
/// `F(b, u, w) = DN(y) f(b, y, DN(y)^{-1} w)` with `y = N^{-1}(u)`.
#[derive(Clone)]
pub struct NormalizedDrift {
    pub base: DriftSpec,
    pub domain: DomainSpec,
}

impl Drift for NormalizedDrift {
    fn eval(&self, b: &Vector, u: &Vector, w: &Matrix) -> Vector {
        let nan = || Vector::from_element(u.len(), f64::NAN);
        let Ok(y) = self.domain.normalize_inverse(u) else {
            return nan();
        };
        let Ok(j) = self.domain.normalize_jacobian(&y) else {
            return nan();
        };
        let Some(lu) = j.clone().lu().solve(w) else {
            return nan();
        };
        j * self.base.eval_raw(b, &y, &lu)
    }
}

impl NormalizedDrift {
    pub fn spec(base: DriftSpec, domain: DomainSpec) -> DriftSpec {
        let name = alloc::format!("normalized({})", base.name());
        let dz = base.depends_on_z();
        DriftSpec::new(name, dz, NormalizedDrift { base, domain })
    }
}

/// A drift given in the normalised chart, read back in the original chart:
/// `f(b, y, z) = DN(y)^{-1} F(b, N(y), DN(y) z)`.
#[derive(Clone)]
pub struct PulledBackDrift {
    pub base: DriftSpec,
    pub domain: DomainSpec,
}

impl Drift for PulledBackDrift {
    fn eval(&self, b: &Vector, y: &Vector, z: &Matrix) -> Vector {
        let nan = || Vector::from_element(y.len(), f64::NAN);
        let (Ok(u), Ok(j)) = (self.domain.normalize(y), self.domain.normalize_jacobian(y)) else {
            return nan();
        };
        let w = &j * z;
        let g = self.base.eval_raw(b, &u, &w);
        j.lu().solve(&g).unwrap_or_else(nan)
    }
}

impl PulledBackDrift {
    pub fn spec(base: DriftSpec, domain: DomainSpec) -> DriftSpec {
        let name = alloc::format!("pullback({})", base.name());
        let dz = base.depends_on_z();
        DriftSpec::new(name, dz, PulledBackDrift { base, domain })
    }
}

#[cfg(test)]
mod tests;
