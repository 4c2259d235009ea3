//! The existence cascade in the normalised chart: smooth truncation `f_k`,
//! mollification `f_{k,l}`, the continuity modulus `eps_{k,l}`, calibration
//! of `A` and the outward-corrected drift `g_{k,l}`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::drift::{ConditionSampler, Drift, DriftSpec};
use crate::error::{precondition, Error, Result};
use crate::geometry::ManifoldChart;
use crate::rng::{batched, halton, Sampler};
use crate::{Matrix, Vector};

/// `e^{-1/s} / (e^{-1/s} + e^{-1/(1-s)})`: smooth, `0` for `s <= 0`, `1` for
/// `s >= 1`.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

/// Smooth nonincreasing cutoff: `1` on `u <= 1`, `0` on `u >= 2`.
pub fn bump_phi(u: f64) -> f64 {
    1.0 - smooth_step(u - 1.0)
}

/// `phi(u - (k - 1))`: `1` on `u <= k`, `0` on `u >= k + 1`.
pub fn phi_k(k: u32, u: f64) -> f64 {
    bump_phi(u - (k as f64 - 1.0))
}

/// Dimensions of `(b, x, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dims {
    pub d: usize,
    pub n: usize,
    pub d_w: usize,
}

impl Dims {
    pub fn joint(&self) -> usize {
        self.d + self.n + self.n * self.d_w
    }

    fn split(&self, v: &[f64]) -> (Vector, Vector, Matrix) {
        let b = Vector::from_column_slice(&v[..self.d]);
        let x = Vector::from_column_slice(&v[self.d..self.d + self.n]);
        let z = Matrix::from_column_slice(self.n, self.d_w, &v[self.d + self.n..]);
        (b, x, z)
    }
}

/// `f_k(b, x, z) = f(b, x, z) phi_k(|b|) phi_k(|z|)`.
#[derive(Clone)]
pub struct TruncatedDrift {
    pub base: DriftSpec,
    pub k: u32,
}

impl Drift for TruncatedDrift {
    fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> Vector {
        let cut = phi_k(self.k, b.norm()) * phi_k(self.k, z.norm());
        if cut == 0.0 {
            return Vector::zeros(x.len());
        }
        self.base.eval_raw(b, x, z) * cut
    }
}

pub fn truncate(f: &DriftSpec, k: u32) -> Result<DriftSpec> {
    if k == 0 {
        return Err(precondition("truncation level k must be at least 1"));
    }
    Ok(DriftSpec::new(
        format!("{}_k{k}", f.name()),
        f.depends_on_z(),
        TruncatedDrift { base: f.clone(), k },
    ))
}

/// Quadrature nodes of the mollifier at scale `1/l`: antithetic pairs drawn
/// from the radial bump density `exp(-1/(1 - |v|^2))` on the joint ball of
/// radius `1/l`, with equal weights.
#[derive(Clone, Debug)]
pub struct Mollifier {
    pub l: u32,
    pub dims: Dims,
    pub nodes: Vec<(Vector, Vector, Matrix)>,
    pub weights: Vec<f64>,
}

impl Mollifier {
    pub fn new(dims: Dims, l: u32, count: usize, seed: u64) -> Result<Self> {
        if l == 0 || count < 2 {
            return Err(precondition(
                "mollifier needs l >= 1 and at least two nodes",
            ));
        }
        let dim = dims.joint();
        let pairs = count / 2;
        let mut s = Sampler::with_stream(seed, u64::from(l));
        let mut nodes = Vec::with_capacity(2 * pairs);
        let radius = 1.0 / l as f64;
        while nodes.len() < 2 * pairs {
            let v = s.in_ball(dim, 1.0);
            let r2 = v.norm_squared();
            if r2 >= 1.0 {
                continue;
            }
            if s.uniform() < (1.0 - 1.0 / (1.0 - r2)).exp() {
                let v = v * radius;
                let w = -&v;
                nodes.push(dims.split(v.as_slice()));
                nodes.push(dims.split(w.as_slice()));
            }
        }
        let weights = alloc::vec![1.0 / nodes.len() as f64; nodes.len()];
        Ok(Self {
            l,
            dims,
            nodes,
            weights,
        })
    }

    /// Largest joint norm of a node offset.
    pub fn max_offset(&self) -> f64 {
        self.nodes
            .iter()
            .map(|(b, x, z)| (b.norm_squared() + x.norm_squared() + z.norm_squared()).sqrt())
            .fold(0.0, f64::max)
    }
}

/// `f_{k,l}(v) = sum_j w_j f_k(v - node_j)`, with `f_k` extended by zero
/// for `|x| >= support_radius`.
#[derive(Clone)]
pub struct MollifiedDrift {
    pub base: DriftSpec,
    pub mollifier: Arc<Mollifier>,
    pub support_radius: f64,
}

impl Drift for MollifiedDrift {
    fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> Vector {
        let mut acc = Vector::zeros(x.len());
        for ((nb, nx, nz), w) in self.mollifier.nodes.iter().zip(&self.mollifier.weights) {
            let xs = x - nx;
            if xs.norm() >= self.support_radius {
                continue;
            }
            acc += self.base.eval_raw(&(b - nb), &xs, &(z - nz)) * *w;
        }
        acc
    }
}

/// Mollifies `f_k` at scale `1/l`. `margin` is how far the normalised image
/// of the inner chart extends past the unit sphere; `1/l` must be smaller.
pub fn mollify(
    f_k: &DriftSpec,
    dims: Dims,
    l: u32,
    sample_count: usize,
    seed: u64,
    margin: f64,
) -> Result<MollifiedDrift> {
    if l == 0 || !(1.0 / (l as f64) < margin) {
        return Err(precondition(format!(
            "l = {l} is too small: 1/l must stay below the chart margin {margin}"
        )));
    }
    Ok(MollifiedDrift {
        base: f_k.clone(),
        mollifier: Arc::new(Mollifier::new(dims, l, sample_count, seed)?),
        support_radius: 1.0 + margin,
    })
}

impl MollifiedDrift {
    pub fn spec(&self) -> DriftSpec {
        DriftSpec::new(
            format!("{}_l{}", self.base.name(), self.mollifier.l),
            self.base.depends_on_z(),
            self.clone(),
        )
    }
}

/// Probe points `(b, x, z)` of the truncated support: `|b| <= k + 1`,
/// `|x| <= 1`, `|z| <= k + 1`, from a Halton sequence.
pub fn support_probes(dims: Dims, k: u32, count: usize) -> Result<Vec<(Vector, Vector, Matrix)>> {
    let dim = dims.joint();
    if dim > 32 {
        return Err(precondition(
            "joint dimension above 32 is not supported by the probe grid",
        ));
    }
    let r = k as f64 + 1.0;
    let to_ball = |v: &[f64]| {
        let h: Vec<f64> = v.iter().map(|u| 2.0 * u - 1.0).collect();
        crate::rng::cube_to_ball(&h)
    };
    Ok((0..count)
        .map(|i| {
            let h = halton(i as u64, dim);
            let b = to_ball(&h[..dims.d]) * r;
            let x = to_ball(&h[dims.d..dims.d + dims.n]);
            let zc = to_ball(&h[dims.d + dims.n..]) * r;
            (
                b,
                x,
                Matrix::from_column_slice(dims.n, dims.d_w, zc.as_slice()),
            )
        })
        .collect())
}

/// Radius ladder `2^{-j/4}` (down to `2^{-12}`) shared by all calls, so
/// that estimates are nested in `eta`.
fn radius_ladder(eta: f64) -> Vec<f64> {
    (0..=48)
        .map(|j| 2.0_f64.powf(-(j as f64) / 4.0))
        .filter(|r| *r <= eta * (1.0 + 1e-12))
        .collect()
}

/// Fixed perturbation directions: the coordinate axes, both signs, and
/// eight seeded random directions.
fn directions(n: usize) -> Vec<Vector> {
    let mut out = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[i] = sign;
            out.push(e);
        }
    }
    let mut s = Sampler::with_stream(0x5eed, n as u64);
    for _ in 0..8 {
        out.push(s.unit_vector(n));
    }
    out
}

/// `max |f_k(b, x, z) - f_k(b, x + v, z)|` over `density` probe points of
/// the truncated support and perturbations `|v| <= eta` drawn from a fixed
/// direction set and radius ladder.
pub fn modulus_of_continuity(
    f_k: &DriftSpec,
    dims: Dims,
    k: u32,
    eta: f64,
    density: usize,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(precondition("eta must be positive"));
    }
    let probes = support_probes(dims, k, density)?;
    let radii = radius_ladder(eta);
    let dirs = directions(dims.n);
    let parts = batched(0, probes.len(), |_, i| -> Result<f64> {
        let (b, x, z) = &probes[i];
        let base = f_k.eval(b, x, z)?;
        let mut worst = 0.0_f64;
        for r in &radii {
            for d in &dirs {
                let moved = f_k.eval(b, &(x + d * *r), z)?;
                worst = worst.max((&moved - &base).norm());
            }
        }
        Ok(worst)
    });
    let mut eps = 0.0_f64;
    for p in parts {
        eps = eps.max(p?);
    }
    Ok(eps)
}

/// `max |f_{k,l} - f_k|` over `count` probes of the truncated support.
pub fn sup_deviation(
    f_kl: &DriftSpec,
    f_k: &DriftSpec,
    dims: Dims,
    k: u32,
    count: usize,
) -> Result<f64> {
    let probes = support_probes(dims, k, count)?;
    let parts = batched(0, probes.len(), |_, i| -> Result<f64> {
        let (b, x, z) = &probes[i];
        Ok((f_kl.eval(b, x, z)? - f_k.eval(b, x, z)?).norm())
    });
    let mut out = 0.0_f64;
    for p in parts {
        out = out.max(p?);
    }
    Ok(out)
}

/// Result of [`calibrate_a`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    pub k: u32,
    /// `(l, C_l)` per mollification level.
    pub per_l: Vec<(u32, f64)>,
    pub c_hat: f64,
    /// `C_hat + 1`.
    pub a: f64,
    /// `max_l (C_l + 1) <= 1.1 min_l (C_l + 1)`.
    pub stable: bool,
}

/// Relative spread of `C_l + 1` tolerated across `l`.
pub const A_STABILITY: f64 = 0.10;

/// `C_l = max l (|f_{k,l} - f_k| - eps_{k,l})_+ / (1 + |z|)` over probes;
/// `A = max_l C_l + 1`.
pub fn calibrate_a(
    f_k: &DriftSpec,
    k: u32,
    levels: &[(u32, DriftSpec, f64)],
    dims: Dims,
    probe_count: usize,
) -> Result<Calibration> {
    if levels.is_empty() {
        return Err(precondition("calibration needs at least one l"));
    }
    let probes = support_probes(dims, k, probe_count)?;
    let mut per_l = Vec::with_capacity(levels.len());
    for (l, f_kl, eps) in levels {
        let parts = batched(0, probes.len(), |_, i| -> Result<f64> {
            let (b, x, z) = &probes[i];
            let dev = (f_kl.eval(b, x, z)? - f_k.eval(b, x, z)?).norm();
            Ok(*l as f64 * (dev - eps).max(0.0) / (1.0 + z.norm()))
        });
        let mut c = 0.0_f64;
        for p in parts {
            c = c.max(p?);
        }
        per_l.push((*l, c));
    }
    let c_hat = per_l.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = per_l
        .iter()
        .map(|p| p.1 + 1.0)
        .fold(f64::INFINITY, f64::min);
    let hi = per_l.iter().map(|p| p.1 + 1.0).fold(0.0, f64::max);
    Ok(Calibration {
        k,
        per_l,
        c_hat,
        a: c_hat + 1.0,
        stable: hi <= (1.0 + A_STABILITY) * lo,
    })
}

/// `g_{k,l} = f_{k,l} + (eps_{k,l} + (A / l)(1 + |z|)) x`.
#[derive(Clone)]
pub struct CorrectedDrift {
    pub base: DriftSpec,
    pub epsilon: f64,
    pub a: f64,
    pub l: u32,
}

impl Drift for CorrectedDrift {
    fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> Vector {
        let push = self.epsilon + self.a / self.l as f64 * (1.0 + z.norm());
        self.base.eval_raw(b, x, z) + x * push
    }
}

pub fn correct(f_kl: &DriftSpec, epsilon: f64, a: f64, l: u32) -> Result<DriftSpec> {
    if !(epsilon >= 0.0 && epsilon.is_finite() && a > 0.0 && a.is_finite()) || l == 0 {
        return Err(precondition(
            "correction needs finite eps >= 0, A > 0 and l >= 1",
        ));
    }
    Ok(DriftSpec::new(
        format!("{}_corrected", f_kl.name()),
        true,
        CorrectedDrift {
            base: f_kl.clone(),
            epsilon,
            a,
            l,
        },
    ))
}

/// Empirical `C` with `|phi_k(|P z|) - phi_k(|z|)| <= C k delta(x, x')`, where
/// `P` is parallel transport and `|.|` the coordinate norm. `z` is drawn
/// with norm in `[0, k + 2]` so the cutoff transition is visited.
pub fn cutoff_transport_constant(
    m: &ManifoldChart,
    k: u32,
    sampler: &ConditionSampler,
    seed: u64,
    count: usize,
) -> Result<f64> {
    if k == 0 || count == 0 {
        return Err(precondition("cutoff constant needs k >= 1 and count >= 1"));
    }
    let parts = batched(seed, count, |s, _| -> Result<f64> {
        let x = sampler.point(m, s)?;
        let y = sampler.partner(m, s, &x)?;
        let delta = m.distance(&x, &y)?;
        if delta < 1e-9 {
            return Ok(0.0);
        }
        let r = (k as f64 + 2.0) * s.uniform();
        let z = s.normal_matrix(m.dim(), sampler.d_w);
        let z = &z * (r / z.norm().max(1e-300));
        let pz = m.parallel_transport(&x, &y, &z)?;
        Ok((phi_k(k, pz.norm()) - phi_k(k, z.norm())).abs() / (k as f64 * delta))
    });
    let mut c = 0.0_f64;
    for p in parts {
        c = c.max(p?);
    }
    if !c.is_finite() {
        return Err(Error::PropertyViolation {
            what: "cutoff transport ratio is not finite".into(),
            witness: Vec::new(),
        });
    }
    Ok(c)
}

/// Parameters of [`build_cascade`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CascadeConfig {
    pub ks: Vec<u32>,
    pub ls: Vec<u32>,
    pub mollifier_count: usize,
    /// Probe points of the continuity modulus.
    pub modulus_density: usize,
    /// Probe points of the calibration of `A`.
    pub probe_count: usize,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            ks: alloc::vec![2, 4, 8],
            ls: alloc::vec![8, 16, 32],
            mollifier_count: 4096,
            modulus_density: 512,
            probe_count: 512,
            seed: 0,
        }
    }
}

/// One `(k, l)` cell of the cascade.
#[derive(Clone)]
pub struct CascadeCell {
    pub l: u32,
    pub epsilon: f64,
    pub f_kl: DriftSpec,
    pub g_kl: DriftSpec,
}

/// All cells for one truncation level.
#[derive(Clone)]
pub struct CascadeLevel {
    pub k: u32,
    pub f_k: DriftSpec,
    pub calibration: Calibration,
    pub cells: Vec<CascadeCell>,
}

/// Builds `f_k`, `f_{k,l}`, `eps_{k,l}`, `A_k` and `g_{k,l}` for every
/// configured `(k, l)`. `f` must already be expressed in the normalised
/// chart; `margin` is [`crate::domain::DomainSpec::normalized_margin`].
/// Mollifier nodes depend on `(seed, l)` only, so every `k` shares them.
pub fn build_cascade(
    f: &DriftSpec,
    dims: Dims,
    margin: f64,
    cfg: &CascadeConfig,
) -> Result<Vec<CascadeLevel>> {
    if cfg.ks.is_empty() || cfg.ls.is_empty() {
        return Err(precondition("cascade needs nonempty k and l lists"));
    }
    let mollifiers: Vec<Arc<Mollifier>> = cfg
        .ls
        .iter()
        .map(|&l| {
            if !(1.0 / (l as f64) < margin) {
                return Err(precondition(format!(
                    "l = {l} is too small: 1/l must stay below the chart margin {margin}"
                )));
            }
            Mollifier::new(dims, l, cfg.mollifier_count, cfg.seed).map(Arc::new)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cfg.ks.len());
    for &k in &cfg.ks {
        let f_k = truncate(f, k)?;
        let mut levels = Vec::with_capacity(cfg.ls.len());
        for (&l, moll) in cfg.ls.iter().zip(&mollifiers) {
            let f_kl = MollifiedDrift {
                base: f_k.clone(),
                mollifier: moll.clone(),
                support_radius: 1.0 + margin,
            }
            .spec();
            let eps = modulus_of_continuity(&f_k, dims, k, 1.0 / l as f64, cfg.modulus_density)?;
            levels.push((l, f_kl, eps));
        }
        let calibration = calibrate_a(&f_k, k, &levels, dims, cfg.probe_count)?;
        let cells = levels
            .into_iter()
            .map(|(l, f_kl, eps)| {
                let g_kl = correct(&f_kl, eps, calibration.a, l)?;
                Ok(CascadeCell {
                    l,
                    epsilon: eps,
                    f_kl,
                    g_kl,
                })
            })
            .collect::<Result<_>>()?;
        out.push(CascadeLevel {
            k,
            f_k,
            calibration,
            cells,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
