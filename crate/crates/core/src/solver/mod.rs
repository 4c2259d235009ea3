//! Forward diffusion by Euler-Maruyama and the backward Monte Carlo solver:
//! Picard passes of a backward sweep whose conditional expectations are
//! least-squares regressions on polynomials of the forward state.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;

use crate::domain::DomainSpec;
use crate::drift::DriftSpec;
use crate::error::{precondition, Error, Result};
use crate::geometry::ManifoldChart;
use crate::rng::{batched, ordered_chunks};
use crate::{Matrix, Vector};

mod regression;

use regression::Fit;
pub use regression::{fitted_values, Basis};

/// Paths per work unit in parallel loops.
const CHUNK: usize = 256;

/// A coefficient of the forward SDE.
pub type Coefficient<T> = Arc<dyn Fn(&Vector) -> T + Send + Sync>;

/// `dB = b(B) dt + sigma(B) dW`, `B_0 = y`, on a uniform grid.
#[derive(Clone)]
pub struct SdeConfig {
    pub drift: Coefficient<Vector>,
    pub sigma: Coefficient<Matrix>,
    pub d_w: usize,
    pub y: Vector,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl SdeConfig {
    /// Standard Brownian motion started at `y`.
    pub fn brownian(y: Vector, horizon: f64, n_steps: usize, n_paths: usize, seed: u64) -> Self {
        let d = y.len();
        Self {
            drift: Arc::new(move |_: &Vector| Vector::zeros(d)),
            sigma: Arc::new(move |_: &Vector| Matrix::identity(d, d)),
            d_w: d,
            y,
            horizon,
            n_steps,
            n_paths,
            seed,
        }
    }

    pub fn with_drift(mut self, drift: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(drift);
        self
    }

    /// Replaces the diffusion matrix; `sigma` must return `d x d_w`.
    pub fn with_sigma(
        mut self,
        d_w: usize,
        sigma: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        self.d_w = d_w;
        self.sigma = Arc::new(sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(precondition("horizon must be positive"));
        }
        if self.n_steps == 0 || self.n_paths == 0 || self.d_w == 0 || self.y.is_empty() {
            return Err(precondition("steps, paths and dimensions must be positive"));
        }
        Ok(())
    }
}

/// Simulated forward paths, stored flat as `[path][time][component]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForwardPaths {
    pub times: Vec<f64>,
    pub d: usize,
    pub d_w: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub states: Vec<f64>,
    pub increments: Vec<f64>,
}

impl ForwardPaths {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn b(&self, path: usize, i: usize) -> Vector {
        let at = (path * (self.n_steps + 1) + i) * self.d;
        Vector::from_column_slice(&self.states[at..at + self.d])
    }

    pub fn dw(&self, path: usize, i: usize) -> Vector {
        let at = (path * self.n_steps + i) * self.d_w;
        Vector::from_column_slice(&self.increments[at..at + self.d_w])
    }
}

pub fn simulate_forward(cfg: &SdeConfig) -> Result<ForwardPaths> {
    cfg.validate()?;
    let n = cfg.n_steps;
    let d = cfg.y.len();
    let dt = cfg.horizon / n as f64;
    let sq = dt.sqrt();
    let paths = batched(
        cfg.seed,
        cfg.n_paths,
        |s, _| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut states = Vec::with_capacity((n + 1) * d);
            let mut incs = Vec::with_capacity(n * cfg.d_w);
            let mut b = cfg.y.clone();
            states.extend_from_slice(b.as_slice());
            for step in 0..n {
                let dw = s.normal_vector(cfg.d_w) * sq;
                let mu = (cfg.drift)(&b);
                let sig = (cfg.sigma)(&b);
                if mu.len() != d || sig.nrows() != d || sig.ncols() != cfg.d_w {
                    return Err(Error::Dimension(
                        "SDE coefficient has the wrong shape".into(),
                    ));
                }
                b += mu * dt + sig * &dw;
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Simulation { step });
                }
                states.extend_from_slice(b.as_slice());
                incs.extend_from_slice(dw.as_slice());
            }
            Ok((states, incs))
        },
    );
    let mut states = Vec::with_capacity(cfg.n_paths * (n + 1) * d);
    let mut increments = Vec::with_capacity(cfg.n_paths * n * cfg.d_w);
    for p in paths {
        let (s, i) = p?;
        states.extend(s);
        increments.extend(i);
    }
    Ok(ForwardPaths {
        times: (0..=n).map(|i| i as f64 * dt).collect(),
        d,
        d_w: cfg.d_w,
        n_paths: cfg.n_paths,
        n_steps: n,
        states,
        increments,
    })
}

/// The terminal variable `U = u(B_T)`, valued in the closed domain.
#[derive(Clone)]
pub struct TerminalMap {
    name: String,
    map: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
}

impl core::fmt::Debug for TerminalMap {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TerminalMap")
            .field("name", &self.name)
            .finish()
    }
}

impl TerminalMap {
    pub fn new(
        name: impl Into<String>,
        map: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            map: Arc::new(map),
        }
    }

    pub fn constant(u0: Vector) -> Self {
        Self::new("constant", move |_: &Vector| u0.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, beta: &Vector) -> Vector {
        (self.map)(beta)
    }

    /// Largest `chi(U(beta)) - c` over `probes`; an error if any probe
    /// lands outside the domain.
    pub fn check_range(&self, domain: &DomainSpec, probes: &[Vector]) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for beta in probes {
            let u = self.eval(beta);
            let excess = domain.chi(&u) - domain.level();
            if !(excess <= DOMAIN_SLACK) {
                return Err(Error::Domain {
                    point: u.iter().copied().collect(),
                    reason: "terminal value outside the domain".into(),
                });
            }
            worst = worst.max(excess);
        }
        Ok(worst)
    }
}

/// Tolerance on `chi - c` for points regarded as inside the closed domain.
pub const DOMAIN_SLACK: f64 = 1e-9;

/// Starting iterate of the Picard passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PicardInit {
    /// `X = p` everywhere.
    Center,
    /// `X_t = U(B_tau)` along each path: the terminal value propagated
    /// backwards.
    Terminal,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub basis: Basis,
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
    pub init: PicardInit,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            basis: Basis::Polynomial { degree: 2 },
            max_iter: 50,
            tol: 1e-4,
            ridge: 1e-8,
            init: PicardInit::Center,
        }
    }
}

/// Output of the solver, stored flat: `x` as `[path][time][n]` and `z` as
/// `[path][step][n * d_w]` (each matrix column-major).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BsdeSolution {
    pub n: usize,
    pub d_w: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// `max_i mean_paths |X^{new}_i - X^{old}_i|` per pass.
    pub picard_residuals: Vec<f64>,
    pub converged: bool,
    /// `max_paths |X_N - U|`.
    pub terminal_error: f64,
    pub config: SolverConfig,
}

impl BsdeSolution {
    pub fn x(&self, path: usize, i: usize) -> Vector {
        let at = (path * (self.n_steps + 1) + i) * self.n;
        Vector::from_column_slice(&self.x[at..at + self.n])
    }

    pub fn z(&self, path: usize, i: usize) -> Matrix {
        let k = self.n * self.d_w;
        let at = (path * self.n_steps + i) * k;
        Matrix::from_column_slice(self.n, self.d_w, &self.z[at..at + k])
    }

    pub fn mean_x(&self, i: usize) -> Vector {
        let mut acc = Vector::zeros(self.n);
        for p in 0..self.n_paths {
            acc += self.x(p, i);
        }
        acc / self.n_paths as f64
    }

    pub fn iterations(&self) -> usize {
        self.picard_residuals.len()
    }
}

/// Solves the backward equation on the whole horizon.
pub fn solve_bsde(
    m: &ManifoldChart,
    domain: &DomainSpec,
    f: &DriftSpec,
    u: &TerminalMap,
    fwd: &ForwardPaths,
    cfg: &SolverConfig,
) -> Result<BsdeSolution> {
    Solver::new(m, domain, f, u, fwd, cfg, None)?.run()
}

/// Solves on `[0, tau]`: path `p` is frozen at `U(B_{tau_p})` with `Z = 0`
/// from grid index `tau[p]` on.
pub fn solve_bsde_bounded_stopping(
    m: &ManifoldChart,
    domain: &DomainSpec,
    f: &DriftSpec,
    u: &TerminalMap,
    fwd: &ForwardPaths,
    cfg: &SolverConfig,
    tau: &[usize],
) -> Result<BsdeSolution> {
    if tau.len() != fwd.n_paths {
        return Err(Error::Dimension(
            "one stopping index per path is required".into(),
        ));
    }
    if tau.iter().any(|t| *t > fwd.n_steps) {
        return Err(precondition("stopping index beyond the horizon"));
    }
    Solver::new(m, domain, f, u, fwd, cfg, Some(tau))?.run()
}

/// First grid index at which `B` leaves the open box `|B_j| < half_width`,
/// or `n_steps` if it never does.
pub fn first_exit_box(fwd: &ForwardPaths, half_width: f64) -> Vec<usize> {
    (0..fwd.n_paths)
        .map(|p| {
            (0..=fwd.n_steps)
                .find(|&i| fwd.b(p, i).iter().any(|v| v.abs() >= half_width))
                .unwrap_or(fwd.n_steps)
        })
        .collect()
}

struct Solver<'a> {
    m: &'a ManifoldChart,
    domain: &'a DomainSpec,
    f: &'a DriftSpec,
    fwd: &'a ForwardPaths,
    cfg: &'a SolverConfig,
    n: usize,
    stop: Vec<usize>,
    terminal: Vec<Vector>,
}

impl<'a> Solver<'a> {
    fn new(
        m: &'a ManifoldChart,
        domain: &'a DomainSpec,
        f: &'a DriftSpec,
        u: &TerminalMap,
        fwd: &'a ForwardPaths,
        cfg: &'a SolverConfig,
        tau: Option<&[usize]>,
    ) -> Result<Self> {
        let n = m.dim();
        if domain.dim() != n {
            return Err(Error::Dimension(
                "domain and manifold dimensions differ".into(),
            ));
        }
        if cfg.max_iter == 0 || !(cfg.tol > 0.0) || !(cfg.ridge >= 0.0) {
            return Err(precondition(
                "solver needs max_iter >= 1, tol > 0 and ridge >= 0",
            ));
        }
        let stop: Vec<usize> = match tau {
            Some(t) => t.to_vec(),
            None => vec![fwd.n_steps; fwd.n_paths],
        };
        let terminal = (0..fwd.n_paths)
            .map(|p| {
                let v = u.eval(&fwd.b(p, stop[p]));
                if v.len() != n {
                    return Err(Error::Dimension(
                        "terminal value has the wrong dimension".into(),
                    ));
                }
                if !(domain.chi(&v) - domain.level() <= DOMAIN_SLACK) {
                    return Err(Error::Domain {
                        point: v.iter().copied().collect(),
                        reason: "terminal value outside the domain".into(),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            m,
            domain,
            f,
            fwd,
            cfg,
            n,
            stop,
            terminal,
        })
    }

    fn x_at(&self, p: usize, i: usize) -> usize {
        (p * (self.fwd.n_steps + 1) + i) * self.n
    }

    fn initial(&self) -> Vec<f64> {
        let steps = self.fwd.n_steps;
        let mut x = vec![0.0; self.fwd.n_paths * (steps + 1) * self.n];
        for p in 0..self.fwd.n_paths {
            for i in 0..=steps {
                let v = if i >= self.stop[p] {
                    self.terminal[p].clone()
                } else {
                    match self.cfg.init {
                        PicardInit::Center => self.domain.center().clone(),
                        PicardInit::Terminal => self.terminal[p].clone(),
                    }
                };
                let at = self.x_at(p, i);
                x[at..at + self.n].copy_from_slice(v.as_slice());
            }
        }
        x
    }

    fn run(self) -> Result<BsdeSolution> {
        let steps = self.fwd.n_steps;
        let mut x_old = self.initial();
        let mut z = Vec::new();
        let mut residuals = Vec::new();
        let mut converged = false;
        for _ in 0..self.cfg.max_iter {
            let (x_new, z_new) = self.sweep(&x_old)?;
            let residual = (0..=steps)
                .map(|i| {
                    let total: f64 = (0..self.fwd.n_paths)
                        .map(|p| {
                            let at = self.x_at(p, i);
                            let mut s = 0.0;
                            for c in 0..self.n {
                                let e = x_new[at + c] - x_old[at + c];
                                s += e * e;
                            }
                            s.sqrt()
                        })
                        .sum();
                    total / self.fwd.n_paths as f64
                })
                .fold(0.0, f64::max);
            residuals.push(residual);
            x_old = x_new;
            z = z_new;
            if residual <= self.cfg.tol {
                converged = true;
                break;
            }
        }
        let mut terminal_error = 0.0_f64;
        for p in 0..self.fwd.n_paths {
            let at = self.x_at(p, steps);
            let got = Vector::from_column_slice(&x_old[at..at + self.n]);
            terminal_error = terminal_error.max((got - &self.terminal[p]).norm());
        }
        Ok(BsdeSolution {
            n: self.n,
            d_w: self.fwd.d_w,
            n_paths: self.fwd.n_paths,
            n_steps: steps,
            times: self.fwd.times.clone(),
            x: x_old,
            z,
            picard_residuals: residuals,
            converged,
            terminal_error,
            config: self.cfg.clone(),
        })
    }

    /// One backward sweep with the drift frozen at `x_old`.
    fn sweep(&self, x_old: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let steps = self.fwd.n_steps;
        let n = self.n;
        let k = n * self.fwd.d_w;
        let dt = self.fwd.dt();
        let mut x = vec![0.0; x_old.len()];
        let mut z = vec![0.0; self.fwd.n_paths * steps * k];
        for p in 0..self.fwd.n_paths {
            for i in self.stop[p]..=steps {
                let at = self.x_at(p, i);
                x[at..at + n].copy_from_slice(self.terminal[p].as_slice());
            }
        }
        for i in (0..steps).rev() {
            let active: Vec<usize> = (0..self.fwd.n_paths)
                .filter(|&p| self.stop[p] > i)
                .collect();
            if active.is_empty() {
                continue;
            }
            let fit = Fit::new(self.fwd, i, &active, &x, n, &self.cfg.basis, self.cfg.ridge)?;
            let parts = ordered_chunks(
                active.len(),
                CHUNK,
                |range| -> Result<Vec<(Vector, Matrix)>> {
                    range
                        .map(|j| {
                            let p = active[j];
                            let b = self.fwd.b(p, i);
                            let (yhat, zp) = fit.predict(&b);
                            let at = self.x_at(p, i);
                            let prev = Vector::from_column_slice(&x_old[at..at + n]);
                            let gamma = self.m.christoffel(&prev)?.quadratic(&zp);
                            let drift = self.f.eval(&b, &prev, &zp)? - gamma * 0.5;
                            let xi = self.domain.project(&(yhat - drift * dt))?;
                            Ok((xi, zp))
                        })
                        .collect()
                },
            );
            let mut j = 0;
            for part in parts {
                for (xi, zp) in part? {
                    let p = active[j];
                    let at = self.x_at(p, i);
                    x[at..at + n].copy_from_slice(xi.as_slice());
                    let zt = (p * steps + i) * k;
                    z[zt..zt + k].copy_from_slice(zp.as_slice());
                    j += 1;
                }
            }
        }
        Ok((x, z))
    }
}

#[cfg(test)]
mod tests;
