//! The comparison process `S_t = exp(A_t) Psi(X_t, X'_t)` of two solutions,
//! the integrand whose sign makes it a submartingale, a statistical
//! submartingale test, exponential moments of `Z`, and convergence tables
//! over a family of solutions.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::domain::PsiFunction;
use crate::drift::DriftSpec;
use crate::error::{precondition, Result};
use crate::geometry::ManifoldChart;
use crate::rng::ordered_chunks;
use crate::solver::{fitted_values, BsdeSolution, ForwardPaths};
use crate::{Matrix, Vector};

const CHUNK: usize = 256;

/// Largest `A_t` before `exp(A_t)` is treated as an overflow.
pub const MAX_EXPONENT: f64 = 700.0;

/// `A_t = lambda t + mu int (|Z|_r^alpha + |Z'|_r^alpha) ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubmartingaleConfig {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
}

impl SubmartingaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite() && self.mu >= 0.0 && self.mu.is_finite())
        {
            return Err(precondition("lambda and mu must be finite and nonnegative"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(precondition("alpha must be positive"));
        }
        Ok(())
    }
}

/// Two solutions on the same grid and forward paths.
#[derive(Clone, Copy, Debug)]
pub struct PairedSolutions<'a> {
    pub first: &'a BsdeSolution,
    pub second: &'a BsdeSolution,
}

impl<'a> PairedSolutions<'a> {
    pub fn new(first: &'a BsdeSolution, second: &'a BsdeSolution) -> Result<Self> {
        if !same_grid(first, second) {
            return Err(precondition(
                "paired solutions must share grid, paths and dimensions",
            ));
        }
        Ok(Self { first, second })
    }
}

fn same_grid(a: &BsdeSolution, b: &BsdeSolution) -> bool {
    a.times == b.times && a.n_paths == b.n_paths && a.n == b.n && a.d_w == b.d_w
}

/// `S` and `A` on every path, `[path][time]`. Paths on which `A` overflows
/// are flagged and hold `NaN`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SProcess {
    pub n_paths: usize,
    pub n_steps: usize,
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl SProcess {
    pub fn value(&self, path: usize, i: usize) -> f64 {
        self.s[path * (self.n_steps + 1) + i]
    }

    pub fn excluded(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }
}

/// The pieces of `S` that do not depend on `(lambda, mu)`: `Psi(X_t, X'_t)`
/// and the left-endpoint integral of `|Z|_r^alpha + |Z'|_r^alpha`, both
/// `[path][time]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SComponents {
    pub n_paths: usize,
    pub n_steps: usize,
    pub times: Vec<f64>,
    pub alpha: f64,
    pub psi: Vec<f64>,
    pub z_integral: Vec<f64>,
}

/// Computes [`SComponents`]; the `Z` integral is skipped (left at zero)
/// when `with_z` is false.
pub fn s_components(
    pair: &PairedSolutions<'_>,
    psi: &PsiFunction,
    m: &ManifoldChart,
    alpha: f64,
    with_z: bool,
) -> Result<SComponents> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(precondition("alpha must be positive"));
    }
    let (a, b) = (pair.first, pair.second);
    let steps = a.n_steps;
    let rows = ordered_chunks(a.n_paths, CHUNK, |r| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        r.map(|p| {
            let mut ps = Vec::with_capacity(steps + 1);
            let mut zi = Vec::with_capacity(steps + 1);
            let mut acc = 0.0;
            for i in 0..=steps {
                if i > 0 && with_z {
                    let nz = m.riem_norm(&a.x(p, i - 1), &a.z(p, i - 1))?;
                    let nzp = m.riem_norm(&b.x(p, i - 1), &b.z(p, i - 1))?;
                    acc += (nz.powf(alpha) + nzp.powf(alpha)) * (a.times[i] - a.times[i - 1]);
                }
                zi.push(acc);
                ps.push(psi.value(m, &a.x(p, i), &b.x(p, i))?);
            }
            Ok((ps, zi))
        })
        .collect()
    });
    let mut out = SComponents {
        n_paths: a.n_paths,
        n_steps: steps,
        times: a.times.clone(),
        alpha,
        psi: Vec::with_capacity(a.n_paths * (steps + 1)),
        z_integral: Vec::with_capacity(a.n_paths * (steps + 1)),
    };
    for part in rows {
        for (ps, zi) in part? {
            out.psi.extend(ps);
            out.z_integral.extend(zi);
        }
    }
    Ok(out)
}

impl SComponents {
    /// `S` for the given constants; `cfg.alpha` must match the components.
    pub fn process(&self, cfg: &SubmartingaleConfig) -> Result<SProcess> {
        cfg.validate()?;
        if cfg.alpha != self.alpha {
            return Err(precondition(
                "alpha differs from the one the components were built with",
            ));
        }
        let width = self.n_steps + 1;
        let mut out = SProcess {
            n_paths: self.n_paths,
            n_steps: self.n_steps,
            times: self.times.clone(),
            s: Vec::with_capacity(self.psi.len()),
            a: Vec::with_capacity(self.psi.len()),
            flagged: Vec::with_capacity(self.n_paths),
        };
        for p in 0..self.n_paths {
            let mut flagged = false;
            for i in 0..width {
                let k = p * width + i;
                let big_a = cfg.lambda * (self.times[i] - self.times[0])
                    + if cfg.mu == 0.0 {
                        0.0
                    } else {
                        cfg.mu * self.z_integral[k]
                    };
                flagged |= !(big_a <= MAX_EXPONENT);
                out.a.push(big_a);
                out.s.push(if flagged {
                    f64::NAN
                } else {
                    big_a.exp() * self.psi[k]
                });
            }
            out.flagged.push(flagged);
        }
        Ok(out)
    }
}

/// Builds `S` with `A` integrated by left endpoints.
pub fn process_s(
    pair: &PairedSolutions<'_>,
    psi: &PsiFunction,
    m: &ManifoldChart,
    cfg: &SubmartingaleConfig,
) -> Result<SProcess> {
    cfg.validate()?;
    s_components(pair, psi, m, cfg.alpha, cfg.mu != 0.0)?.process(cfg)
}

/// The parts of [`pos_term`] that do not depend on `(lambda, mu)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosParts {
    /// `1/2 sum_c Hess Psi(z_c, z'_c) + D Psi (f, f')`.
    pub base: f64,
    pub psi: f64,
    /// `|z|_r^alpha + |z'|_r^alpha`.
    pub z_power: f64,
}

impl PosParts {
    pub fn value(&self, cfg: &SubmartingaleConfig) -> f64 {
        let rate = if cfg.mu == 0.0 {
            cfg.lambda
        } else {
            cfg.lambda + cfg.mu * self.z_power
        };
        self.base + rate * self.psi
    }
}

#[allow(clippy::too_many_arguments)]
pub fn pos_parts(
    m: &ManifoldChart,
    psi: &PsiFunction,
    x: &Vector,
    xp: &Vector,
    z: &Matrix,
    zp: &Matrix,
    f: &Vector,
    fp: &Vector,
    alpha: f64,
) -> Result<PosParts> {
    let pair = psi.at(m, x, xp)?;
    Ok(PosParts {
        base: 0.5 * pair.hess_columns(z, zp)? + pair.d(f, fp)?,
        psi: pair.value(),
        z_power: m.riem_norm(x, z)?.powf(alpha) + m.riem_norm(xp, zp)?.powf(alpha),
    })
}

/// `1/2 sum_c Hess Psi(z_c, z'_c) + D Psi (f, f') + (lambda + mu (|z|^alpha +
/// |z'|^alpha)) Psi`: the drift of `S` divided by `exp(A)`.
#[allow(clippy::too_many_arguments)]
pub fn pos_term(
    m: &ManifoldChart,
    psi: &PsiFunction,
    x: &Vector,
    xp: &Vector,
    z: &Matrix,
    zp: &Matrix,
    f: &Vector,
    fp: &Vector,
    cfg: &SubmartingaleConfig,
) -> Result<f64> {
    cfg.validate()?;
    Ok(pos_parts(m, psi, x, xp, z, zp, f, fp, cfg.alpha)?.value(cfg))
}

/// One grid step of [`submartingale_test`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IncrementStat {
    pub t: f64,
    /// Ensemble mean of the regression-estimated conditional increment.
    pub mean: f64,
    pub std_error: f64,
    /// `mean - sigmas * std_error`.
    pub lower: f64,
    /// Smallest fitted conditional increment over the paths.
    pub conditional_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubmartingaleReport {
    pub steps: Vec<IncrementStat>,
    /// Mean increment per unit time over the whole horizon, without
    /// regression.
    pub time_averaged_increment: f64,
    pub sigmas: f64,
    pub excluded_paths: usize,
    pub pass: bool,
}

/// Default width of the confidence band in standard errors.
pub const STAT_SIGMAS: f64 = 3.0;

/// Tests `E[S_{i+1} - S_i | B_i] >= 0` step by step: the increments are
/// regressed on polynomials of degree `degree` in `B_i`, and a step fails
/// when the ensemble mean of the fit lies more than `sigmas` standard
/// errors below zero.
pub fn submartingale_test(
    s: &SProcess,
    fwd: &ForwardPaths,
    degree: u32,
    sigmas: f64,
) -> Result<SubmartingaleReport> {
    if s.n_steps == 0 {
        return Err(precondition(
            "the submartingale test needs at least two time points",
        ));
    }
    if fwd.n_paths != s.n_paths || fwd.n_steps != s.n_steps {
        return Err(precondition("S and the forward paths must share the grid"));
    }
    let keep: Vec<usize> = (0..s.n_paths).filter(|p| !s.flagged[*p]).collect();
    let mut steps = Vec::with_capacity(s.n_steps);
    let mut pass = true;
    let mut total = 0.0;
    for i in 0..s.n_steps {
        let inc: Vec<f64> = keep
            .iter()
            .map(|&p| s.value(p, i + 1) - s.value(p, i))
            .collect();
        let count = inc.len();
        let stat = if count == 0 {
            IncrementStat {
                t: s.times[i],
                mean: 0.0,
                std_error: 0.0,
                lower: 0.0,
                conditional_min: 0.0,
            }
        } else {
            let bs: Vec<Vector> = keep.iter().map(|&p| fwd.b(p, i)).collect();
            let fit = fitted_values(&bs, &inc, degree, 1e-8).unwrap_or_else(|| {
                let mean = inc.iter().sum::<f64>() / count as f64;
                vec![mean; count]
            });
            let mean = fit.iter().sum::<f64>() / count as f64;
            let raw_mean = inc.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                inc.iter()
                    .map(|v| (v - raw_mean) * (v - raw_mean))
                    .sum::<f64>()
                    / (count - 1) as f64
            } else {
                0.0
            };
            let std_error = (var / count as f64).sqrt();
            total += raw_mean;
            IncrementStat {
                t: s.times[i],
                mean,
                std_error,
                lower: mean - sigmas * std_error,
                conditional_min: fit.iter().copied().fold(f64::INFINITY, f64::min),
            }
        };
        // rounding in the fit, relative to the size of S on this step
        let scale = if keep.is_empty() {
            0.0
        } else {
            keep.iter()
                .map(|&p| s.value(p, i).abs() + s.value(p, i + 1).abs())
                .sum::<f64>()
                / keep.len() as f64
        };
        pass &= stat.mean >= -sigmas * stat.std_error - 1e-10 * scale;
        steps.push(stat);
    }
    let horizon = s.times[s.n_steps] - s.times[0];
    Ok(SubmartingaleReport {
        steps,
        time_averaged_increment: total / horizon,
        sigmas,
        excluded_paths: s.flagged.iter().filter(|f| **f).count(),
        pass,
    })
}

/// Runs [`submartingale_test`] for every `(lambda, mu)` of the grid, `mu`
/// in the outer loop, and returns the reports in that order.
pub fn sweep(
    components: &SComponents,
    fwd: &ForwardPaths,
    lambda_grid: &[f64],
    mu_grid: &[f64],
    degree: u32,
    sigmas: f64,
) -> Result<Vec<(SubmartingaleConfig, SubmartingaleReport)>> {
    let mut out = Vec::with_capacity(lambda_grid.len() * mu_grid.len());
    for &mu in mu_grid {
        for &lambda in lambda_grid {
            let cfg = SubmartingaleConfig {
                lambda,
                mu,
                alpha: components.alpha,
            };
            let report = submartingale_test(&components.process(&cfg)?, fwd, degree, sigmas)?;
            out.push((cfg, report));
        }
    }
    Ok(out)
}

/// Estimate of `E[exp(mu int_0^T |Z_s|_r^2 ds)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpMoment {
    pub mean: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    /// The top 1% of the paths carry more than half of the mean.
    pub heavy_tail: bool,
    pub overflow_paths: usize,
}

pub fn exp_integrability(sol: &BsdeSolution, m: &ManifoldChart, mu: f64) -> Result<ExpMoment> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(precondition("mu must be finite and nonnegative"));
    }
    let parts = ordered_chunks(sol.n_paths, CHUNK, |r| -> Result<Vec<f64>> {
        r.map(|p| {
            let mut integral = 0.0;
            for i in 0..sol.n_steps {
                let nz = m.riem_norm(&sol.x(p, i), &sol.z(p, i))?;
                integral += nz * nz * (sol.times[i + 1] - sol.times[i]);
            }
            Ok((mu * integral).exp())
        })
        .collect()
    });
    let mut values = Vec::with_capacity(sol.n_paths);
    let mut overflow_paths = 0;
    for part in parts {
        for v in part? {
            if v.is_finite() {
                values.push(v);
            } else {
                overflow_paths += 1;
            }
        }
    }
    let count = values.len();
    if count == 0 {
        return Ok(ExpMoment {
            mean: f64::INFINITY,
            std_error: f64::INFINITY,
            lower: f64::INFINITY,
            upper: f64::INFINITY,
            heavy_tail: true,
            overflow_paths,
        });
    }
    let total: f64 = values.iter().sum();
    let mean = total / count as f64;
    let var = if count > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    let std_error = (var / count as f64).sqrt();
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = count.div_ceil(100);
    let top_sum: f64 = sorted[..top].iter().sum();
    Ok(ExpMoment {
        mean,
        std_error,
        lower: mean - STAT_SIGMAS * std_error,
        upper: mean + STAT_SIGMAS * std_error,
        heavy_tail: count > 1 && top < count && top_sum > 0.5 * total,
        overflow_paths,
    })
}

/// Pairwise distances within a family of solutions.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceTable {
    pub labels: Vec<u32>,
    /// `mean_t E[Psi(X^a_t, X^b_t)]`, row-major.
    pub psi: Vec<Vec<f64>>,
    /// `E int |Z^a - Z^b|^2 dt` in chart coordinates, row-major.
    pub z_gap: Vec<Vec<f64>>,
}

impl ConvergenceTable {
    /// Entries for consecutive labels, `(a_i, a_{i+1})`.
    pub fn consecutive(&self) -> Vec<f64> {
        (0..self.labels.len().saturating_sub(1))
            .map(|i| self.psi[i][i + 1])
            .collect()
    }

    pub fn consecutive_z(&self) -> Vec<f64> {
        (0..self.labels.len().saturating_sub(1))
            .map(|i| self.z_gap[i][i + 1])
            .collect()
    }

    /// Entries `(a_i, a_last)` for every label but the last. With a limit
    /// solution in the last slot these are the errors of the others.
    pub fn to_last(&self) -> Vec<f64> {
        let n = self.labels.len();
        (0..n.saturating_sub(1))
            .map(|i| self.psi[i][n - 1])
            .collect()
    }

    pub fn to_last_z(&self) -> Vec<f64> {
        let n = self.labels.len();
        (0..n.saturating_sub(1))
            .map(|i| self.z_gap[i][n - 1])
            .collect()
    }

    /// Consecutive entries strictly decrease.
    pub fn decreasing(&self) -> bool {
        self.consecutive().windows(2).all(|w| w[1] < w[0])
    }

    /// The finest consecutive entry is at most `threshold`.
    pub fn cauchy(&self, threshold: f64) -> bool {
        self.consecutive().last().is_some_and(|v| *v <= threshold)
    }
}

pub fn convergence_table(
    solutions: &[(u32, &BsdeSolution)],
    psi: &PsiFunction,
    m: &ManifoldChart,
) -> Result<ConvergenceTable> {
    if solutions.is_empty() {
        return Err(precondition(
            "convergence table needs at least one solution",
        ));
    }
    let first = solutions[0].1;
    if solutions.iter().any(|(_, s)| !same_grid(first, s)) {
        return Err(precondition("all solutions must share grid and paths"));
    }
    let k = solutions.len();
    let mut psi_t = vec![vec![0.0; k]; k];
    let mut z_gap = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let (sa, sb) = (solutions[a].1, solutions[b].1);
            let parts = ordered_chunks(first.n_paths, CHUNK, |r| -> Result<(f64, f64)> {
                let mut ps = 0.0;
                let mut zs = 0.0;
                for p in r {
                    for i in 0..=first.n_steps {
                        ps += psi.value(m, &sa.x(p, i), &sb.x(p, i))?;
                        if i < first.n_steps {
                            zs += (sa.z(p, i) - sb.z(p, i)).norm_squared()
                                * (first.times[i + 1] - first.times[i]);
                        }
                    }
                }
                Ok((ps, zs))
            });
            let (mut ps, mut zs) = (0.0, 0.0);
            for part in parts {
                let (p, z) = part?;
                ps += p;
                zs += z;
            }
            let paths = first.n_paths as f64;
            psi_t[a][b] = ps / (paths * (first.n_steps + 1) as f64);
            z_gap[a][b] = zs / paths;
            psi_t[b][a] = psi_t[a][b];
            z_gap[b][a] = z_gap[a][b];
        }
    }
    Ok(ConvergenceTable {
        labels: solutions.iter().map(|s| s.0).collect(),
        psi: psi_t,
        z_gap,
    })
}

/// Ensemble mean, per step, of
/// `S_{i+1} - S_i - exp(A_i) (D Psi (Z dW, Z' dW) + pos_term dt)`,
/// with `f`, `f'` evaluated along each solution.
pub fn ito_defect(
    pair: &PairedSolutions<'_>,
    fwd: &ForwardPaths,
    f: &DriftSpec,
    fp: &DriftSpec,
    psi: &PsiFunction,
    m: &ManifoldChart,
    cfg: &SubmartingaleConfig,
) -> Result<Vec<f64>> {
    let s = process_s(pair, psi, m, cfg)?;
    let (a, b) = (pair.first, pair.second);
    let mut out = Vec::with_capacity(a.n_steps);
    for i in 0..a.n_steps {
        let dt = a.times[i + 1] - a.times[i];
        let parts = ordered_chunks(a.n_paths, CHUNK, |r| -> Result<(f64, usize)> {
            let mut acc = 0.0;
            let mut used = 0;
            for p in r {
                if s.flagged[p] {
                    continue;
                }
                let (x, xp) = (a.x(p, i), b.x(p, i));
                let (z, zp) = (a.z(p, i), b.z(p, i));
                let bi = fwd.b(p, i);
                let fv = f.eval(&bi, &x, &z)?;
                let fpv = fp.eval(&bi, &xp, &zp)?;
                let dw = fwd.dw(p, i);
                let pair = psi.at(m, &x, &xp)?;
                let mart = pair.d(&(&z * &dw), &(&zp * &dw))?;
                let drift = pos_term(m, psi, &x, &xp, &z, &zp, &fv, &fpv, cfg)?;
                let e = s.a[p * (a.n_steps + 1) + i].exp();
                acc += s.value(p, i + 1) - s.value(p, i) - e * (mart + drift * dt);
                used += 1;
            }
            Ok((acc, used))
        });
        let (mut acc, mut used) = (0.0, 0);
        for part in parts {
            let (v, u) = part?;
            acc += v;
            used += u;
        }
        out.push(if used == 0 { 0.0 } else { acc / used as f64 });
    }
    Ok(out)
}
