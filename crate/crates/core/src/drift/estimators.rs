use alloc::format;
use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use super::sampling::witness;
use super::{ConditionSampler, DriftSpec, NormalizedDrift};
use crate::domain::{DomainSpec, PsiFunction};
use crate::error::{precondition, Error, Result};
use crate::geometry::{riem_norm_with, ManifoldChart};
use crate::rng::batched;
use crate::Matrix;

/// Pairs closer than this are skipped by ratio estimators whose
/// denominator vanishes on the diagonal.
pub const NEAR_DIAGONAL: f64 = 1e-6;
/// Outward verdict tolerance on the radial minimum.
pub const OUTWARD_TOL: f64 = -1e-9;

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        Err(precondition("count must be at least 1"))
    } else {
        Ok(())
    }
}

fn fold_max(items: Vec<Result<f64>>) -> Result<f64> {
    let mut acc = 0.0_f64;
    for r in items {
        acc = acc.max(r?);
    }
    Ok(acc)
}

/// Smallest `L` with
/// `|f(b,x,z) - f(b',x,z')|_r <= L (|b - b'| (1 + |z|_r + |z'|_r) + |z - z'|_r)`
/// over the samples. Pairs vary `b` only, `z` only, or both.
pub fn estimate_lipschitz_bz(
    f: &DriftSpec,
    m: &ManifoldChart,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<f64> {
    check_count(count)?;
    sampler.validate(m)?;
    let ratios = batched(seed, count, |s, _| -> Result<f64> {
        let x = sampler.point(m, s)?;
        let b = sampler.b(s);
        let z = sampler.z(m, s, &x)?;
        let mode = s.index(3);
        let bp = if mode == 2 {
            b.clone()
        } else {
            sampler.b_partner(s, &b)
        };
        let zp = if mode == 1 {
            z.clone()
        } else if !f.depends_on_z() && mode == 0 {
            sampler.z(m, s, &x)?
        } else {
            sampler.z_partner(m, s, &x, &z)?
        };
        let g = m.metric(&x)?;
        let nz = riem_norm_with(&g, &z);
        let nzp = riem_norm_with(&g, &zp);
        let den = (&b - &bp).norm() * (1.0 + nz + nzp) + riem_norm_with(&g, &(&z - &zp));
        if den == 0.0 {
            return Ok(0.0);
        }
        let diff = f.eval(&b, &x, &z)? - f.eval(&bp, &x, &zp)?;
        Ok(diff.dot(&(&g * &diff)).max(0.0).sqrt() / den)
    });
    fold_max(ratios)
}

/// Infimum of `D Psi(x,x') . (f(b,x,z), f(b,x',P z)) / (Psi(x,x') (1 + |z|_r))`
/// with `P` parallel transport from `x` to `x'`; pairs with
/// `delta < 1e-6` are skipped.
pub fn estimate_monotonicity(
    f: &DriftSpec,
    m: &ManifoldChart,
    psi: &PsiFunction,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<f64> {
    check_count(count)?;
    sampler.validate(m)?;
    psi.validate()?;
    let ratios = batched(seed, count, |s, _| -> Result<Option<f64>> {
        let x = sampler.point(m, s)?;
        let y = sampler.partner(m, s, &x)?;
        let b = sampler.b(s);
        let z = sampler.z(m, s, &x)?;
        let pair = psi.at(m, &x, &y)?;
        if pair.delta() < NEAR_DIAGONAL {
            return Ok(None);
        }
        let pz = m.parallel_transport(&x, &y, &z)?;
        let fx = f.eval(&b, &x, &z)?;
        let fy = f.eval(&b, &y, &pz)?;
        let num = pair.d(&fx, &fy)?;
        Ok(Some(num / (pair.value() * (1.0 + m.riem_norm(&x, &z)?))))
    });
    let mut nu = f64::INFINITY;
    for r in ratios {
        if let Some(v) = r? {
            nu = nu.min(v);
        }
    }
    if nu.is_infinite() {
        return Err(precondition(
            "every sampled pair was closer than the exclusion radius",
        ));
    }
    Ok(nu)
}

/// `sup |f(b, x, 0)|_r` over the samples.
pub fn check_uniform_bound(
    f: &DriftSpec,
    m: &ManifoldChart,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<f64> {
    check_count(count)?;
    sampler.validate(m)?;
    let zero = Matrix::zeros(m.dim(), sampler.d_w);
    let values = batched(seed, count, |s, _| -> Result<f64> {
        let x = sampler.point(m, s)?;
        let b = sampler.b(s);
        m.norm(&x, &f.eval(&b, &x, &zero)?)
    });
    fold_max(values)
}

/// Result of [`linear_growth_constant`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrowthEstimate {
    /// Smallest `C` with `|f|_r <= C (|z|_r + 1)` over the samples.
    pub c_hat: f64,
    /// Largest sampled `|z|_r`.
    pub z_reach: f64,
}

/// Linear growth in `z`; half of the `z` draws reach up to `10^6 z_max` so
/// that the asymptotic slope is seen.
pub fn linear_growth_constant(
    f: &DriftSpec,
    m: &ManifoldChart,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<GrowthEstimate> {
    check_count(count)?;
    sampler.validate(m)?;
    let rows = batched(seed, count, |s, _| -> Result<(f64, f64)> {
        let x = sampler.point(m, s)?;
        let b = sampler.b(s);
        let z = sampler.z_tail(m, s, &x)?;
        let nz = m.riem_norm(&x, &z)?;
        Ok((m.norm(&x, &f.eval(&b, &x, &z)?)? / (nz + 1.0), nz))
    });
    let mut out = GrowthEstimate {
        c_hat: 0.0,
        z_reach: 0.0,
    };
    for r in rows {
        let (c, nz) = r?;
        out.c_hat = out.c_hat.max(c);
        out.z_reach = out.z_reach.max(nz);
    }
    Ok(out)
}

/// Minimum radial component `F(b, u, w) . u` over unit vectors `u`, for a
/// drift already expressed in the normalised chart. `w` is drawn with
/// Euclidean norm in `[0, z_max]`.
pub fn check_outward_normalized(
    f: &DriftSpec,
    n: usize,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<f64> {
    check_count(count)?;
    let flat = ManifoldChart::euclidean(n);
    let values = batched(seed, count, |s, _| -> Result<f64> {
        let u = s.unit_vector(n);
        let b = sampler.b(s);
        let w = sampler.z(&flat, s, &u)?;
        Ok(f.eval(&b, &u, &w)?.dot(&u))
    });
    let mut min = f64::INFINITY;
    for v in values {
        min = min.min(v?);
    }
    Ok(min)
}

/// Minimum radial component on the boundary of the domain, after pushing
/// `f` through the differential of the normalising map.
pub fn check_outward(
    f: &DriftSpec,
    domain: &DomainSpec,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<f64> {
    let normalized = NormalizedDrift::spec(f.clone(), domain.clone());
    check_outward_normalized(&normalized, domain.dim(), sampler, seed, count)
}

/// `L < h`, `nu > -h` and `L2 < h`.
pub fn check_smallness(l: f64, nu: f64, l2: f64, h: f64) -> Result<bool> {
    if !(h > 0.0) {
        return Err(precondition("h must be positive"));
    }
    Ok(l < h && nu > -h && l2 < h)
}

/// Free constants of the regime-specific estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimParams {
    /// Weight of the transported-difference term in the sine-power regime.
    pub alpha: f64,
    /// Exponent constant `e` of the sine-power regime.
    pub e: f64,
    /// Weight of the transported-difference term for general connections.
    pub epsilon: f64,
}

impl Default for EstimParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            e: 2.0,
            epsilon: 0.25,
        }
    }
}

/// Result of [`dpsi_lower_bound_check`]. Each constant is the smallest one
/// making its inequality hold over the samples.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DpsiReport {
    /// `D Psi . (f, f') >= -C delta^(p-1) (|P z - z'|_r + delta (1 + |z|_r + |z'|_r))`.
    pub c_hat: f64,
    /// `>= -C delta^2 (1 + |z|_r + |z'|_r) - |P z - z'|_r^2 / 4` (squared distance).
    pub c_squared_distance: Option<f64>,
    /// `>= -C Psi - (e-1)/2 K/4 Psi (|z|_r^2 + |z'|_r^2) - alpha/2 sin^(a-2) |P z - z'|_r^2`
    /// (sine power).
    pub c_sin_power: Option<f64>,
    /// `>= -C Psi (1 + |z|_r + |z'|_r) - epsilon delta^(p-2) |P z - z'|_r^2`.
    pub c_general: f64,
    pub count: usize,
}

/// Lower bound of `D Psi(x,x') . (f(b,x,z), f(b,x',z'))` with the same `b`
/// in both slots; `z'` is either independent or a perturbation of the
/// transport of `z`.
pub fn dpsi_lower_bound_check(
    f: &DriftSpec,
    m: &ManifoldChart,
    psi: &PsiFunction,
    sampler: &ConditionSampler,
    params: EstimParams,
    seed: u64,
    count: usize,
) -> Result<DpsiReport> {
    check_count(count)?;
    sampler.validate(m)?;
    psi.validate()?;
    let p = psi.exponent();
    let rows = batched(
        seed,
        count,
        |s, _| -> Result<Option<([f64; 4], Vec<f64>)>> {
            let x = sampler.point(m, s)?;
            let y = sampler.partner(m, s, &x)?;
            let b = sampler.b(s);
            let z = sampler.z(m, s, &x)?;
            let pair = psi.at(m, &x, &y)?;
            let delta = pair.delta();
            if delta < NEAR_DIAGONAL {
                return Ok(None);
            }
            let pz = m.parallel_transport(&x, &y, &z)?;
            let zp = if s.coin(0.5) {
                sampler.z(m, s, &y)?
            } else {
                sampler.z_partner(m, s, &y, &pz)?
            };
            let dpsi = pair.d(&f.eval(&b, &x, &z)?, &f.eval(&b, &y, &zp)?)?;
            let gap = m.riem_norm(&y, &(&pz - &zp))?;
            let nz = m.riem_norm(&x, &z)?;
            let nzp = m.riem_norm(&y, &zp)?;
            let v = pair.value();
            let lemma = -dpsi / (delta.powf(p - 1.0) * (gap + delta * (1.0 + nz + nzp)));
            let e1 = (-dpsi - 0.25 * gap * gap) / (delta * delta * (1.0 + nz + nzp));
            let e2 = match psi {
                PsiFunction::SinPower { curvature, .. } => {
                    let w = psi.hessian_weight(delta);
                    (-dpsi
                        - 0.5 * (params.e - 1.0) * 0.25 * curvature * v * (nz * nz + nzp * nzp)
                        - 0.5 * params.alpha * w * gap * gap)
                        / v
                }
                _ => 0.0,
            };
            let e3 =
                (-dpsi - params.epsilon * delta.powf(p - 2.0) * gap * gap) / (v * (1.0 + nz + nzp));
            let wit = witness(&[
                x.as_slice(),
                y.as_slice(),
                b.as_slice(),
                z.as_slice(),
                zp.as_slice(),
            ]);
            Ok(Some(([lemma, e1, e2, e3], wit)))
        },
    );
    let mut best = [0.0_f64; 4];
    let mut seen = 0;
    for r in rows {
        if let Some((vals, wit)) = r? {
            seen += 1;
            if !vals[0].is_finite() {
                return Err(Error::PropertyViolation {
                    what: format!("no finite lemma constant (ratio {})", vals[0]),
                    witness: wit,
                });
            }
            for (b, v) in best.iter_mut().zip(vals) {
                *b = b.max(v);
            }
        }
    }
    if seen == 0 {
        return Err(precondition(
            "every sampled pair was closer than the exclusion radius",
        ));
    }
    Ok(DpsiReport {
        c_hat: best[0],
        c_squared_distance: matches!(psi, PsiFunction::SquaredDistance).then_some(best[1]),
        c_sin_power: matches!(psi, PsiFunction::SinPower { .. }).then_some(best[2]),
        c_general: best[3],
        count,
    })
}

/// Optional pass/fail thresholds for [`check_all`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Thresholds {
    /// Smallness level `h`.
    pub small: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdicts {
    /// `radial_min >= -1e-9`.
    pub outward: bool,
    /// `C_growth <= max(L_hat, L2_hat)` up to 1% sampling slack.
    pub growth_dominated: bool,
    /// Estimates within 1% (0.01 for `nu`) of the declared constants.
    pub declared_consistent: Option<bool>,
    pub small: Option<bool>,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.outward
            && self.growth_dominated
            && self.declared_consistent != Some(false)
            && self.small != Some(false)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionReport {
    #[cfg_attr(feature = "serde", serde(rename = "L_hat"))]
    pub l_hat: f64,
    pub nu_hat: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L2_hat"))]
    pub l2_hat: f64,
    pub radial_min: f64,
    #[cfg_attr(feature = "serde", serde(rename = "C_growth"))]
    pub c_growth: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub verdicts: Verdicts,
}

fn sub_seed(seed: u64, k: u64) -> u64 {
    seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs every estimator with `count` samples each and derives the verdicts.
pub fn check_all(
    f: &DriftSpec,
    m: &ManifoldChart,
    psi: &PsiFunction,
    domain: &DomainSpec,
    sampler: &ConditionSampler,
    thresholds: Thresholds,
    seed: u64,
    count: usize,
) -> Result<ConditionReport> {
    let l_hat = estimate_lipschitz_bz(f, m, sampler, sub_seed(seed, 1), count)?;
    let nu_hat = estimate_monotonicity(f, m, psi, sampler, sub_seed(seed, 2), count)?;
    let l2_hat = check_uniform_bound(f, m, sampler, sub_seed(seed, 3), count)?;
    let growth = linear_growth_constant(f, m, sampler, sub_seed(seed, 4), count)?;
    let radial_min = check_outward(f, domain, sampler, sub_seed(seed, 5), count)?;
    let d = f.declared();
    let declared_consistent =
        (d.lipschitz.is_some() || d.monotonicity.is_some() || d.bound.is_some()).then(|| {
            d.lipschitz.is_none_or(|l| l_hat <= l * 1.01)
                && d.monotonicity.is_none_or(|nu| nu_hat >= nu - 0.01)
                && d.bound.is_none_or(|l2| l2_hat <= l2 * 1.01)
        });
    let small = match thresholds.small {
        Some(h) => Some(check_smallness(l_hat, nu_hat, l2_hat, h)?),
        None => None,
    };
    Ok(ConditionReport {
        l_hat,
        nu_hat,
        l2_hat,
        radial_min,
        c_growth: growth.c_hat,
        sample_count: count,
        seed,
        verdicts: Verdicts {
            outward: radial_min >= OUTWARD_TOL,
            growth_dominated: growth.c_hat <= l_hat.max(l2_hat) * 1.01 + 1e-12,
            declared_consistent,
            small,
        },
    })
}
