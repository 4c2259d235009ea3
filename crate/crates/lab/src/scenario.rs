//! Scenario files: TOML with a versioned schema. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Default output directory, overridden by `--out`.
    pub out: Option<String>,
    pub manifold: ManifoldCfg,
    pub domain: DomainCfg,
    pub psi: PsiCfg,
    pub drift: DriftCfg,
    #[serde(default)]
    pub check: CheckCfg,
    pub forward: ForwardCfg,
    pub terminal: TerminalCfg,
    #[serde(default)]
    pub solver: SolverCfg,
    pub stopping: Option<StoppingCfg>,
    pub cascade: Option<CascadeCfg>,
    #[serde(default)]
    pub diagnostics: DiagnosticsCfg,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldCfg {
    Euclidean {
        dim: usize,
    },
    Sphere {
        dim: usize,
        curvature: f64,
        chart_radius: f64,
    },
    Hyperbolic {
        dim: usize,
        chart_radius: f64,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChiCfg {
    /// `|y - p|^2`.
    SquaredNorm,
    /// `(y - p)^T Q (y - p)`, `Q` given by rows.
    Quadratic { q: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainCfg {
    pub chi: ChiCfg,
    pub level: f64,
    pub center: Option<Vec<f64>>,
    pub inner_radius: f64,
    pub c2: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PsiCfg {
    SquaredDistance,
    /// Curvature defaults to that of the manifold.
    SinPower {
        a: f64,
        curvature: Option<f64>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftCfg {
    Zero,
    Radial {
        kappa: f64,
    },
    Inward {
        kappa: f64,
    },
    Tangential,
    ZLinear {
        c0: f64,
    },
    BSin {
        v0: Vec<f64>,
    },
    Swirl {
        kappa: f64,
        c1: f64,
        c0: f64,
        omega: f64,
    },
    /// One expression per component of the drift.
    Expression {
        components: Vec<String>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CheckCfg {
    pub samples: usize,
    pub z_max: f64,
    pub b_box: f64,
    /// Threshold of the smallness condition, when it is to be checked.
    pub small: Option<f64>,
    pub declared_lipschitz: Option<f64>,
    pub declared_monotonicity: Option<f64>,
    pub declared_bound: Option<f64>,
}

impl Default for CheckCfg {
    fn default() -> Self {
        Self {
            samples: 10_000,
            z_max: 3.0,
            b_box: 5.0,
            small: None,
            declared_lipschitz: None,
            declared_monotonicity: None,
            declared_bound: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ForwardCfg {
    pub y: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    /// `sigma = scale * I`.
    #[serde(default = "one")]
    pub sigma: f64,
    /// Constant drift of the forward process.
    pub mu: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminalCfg {
    Identity,
    Constant {
        point: Vec<f64>,
    },
    /// `scale * tanh(beta + shift)` componentwise.
    Tanh {
        scale: f64,
        shift: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InitCfg {
    Center,
    Terminal,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverCfg {
    pub max_iter: usize,
    pub tol: f64,
    pub degree: u32,
    pub ridge: f64,
    pub init: InitCfg,
}

impl Default for SolverCfg {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-4,
            degree: 2,
            ridge: 1e-8,
            init: InitCfg::Center,
        }
    }
}

/// Stopping at the first exit of `B` from the box `|B_j| < half_width`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StoppingCfg {
    pub half_width: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CascadeCfg {
    pub ks: Vec<u32>,
    pub ls: Vec<u32>,
    /// Truncation level of the table in `l`; the largest `k` by default.
    pub k_fixed: Option<u32>,
    #[serde(default = "default_mollifier")]
    pub mollifier_count: usize,
    #[serde(default = "default_density")]
    pub modulus_density: usize,
    #[serde(default = "default_density")]
    pub probe_count: usize,
    #[serde(default = "default_outward")]
    pub outward_samples: usize,
    /// Required ratio finest / coarsest in the convergence tables.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

fn default_mollifier() -> usize {
    4096
}
fn default_density() -> usize {
    512
}
fn default_outward() -> usize {
    4000
}
fn default_ratio() -> f64 {
    0.1
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PairCfg {
    /// The same equation solved from the two Picard starting points.
    PicardInits,
    /// A second terminal map `scale * tanh(beta + shift)`.
    TerminalShift { shift: Vec<f64> },
    /// Two solution dumps written by `solve`.
    Files { first: String, second: String },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsCfg {
    pub pair: PairCfg,
    pub lambda_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub alpha: f64,
    pub sigmas: f64,
    pub exp_mu: f64,
    /// Paths sampled per step for the pointwise minimum of the drift of S.
    pub pos_samples: usize,
}

impl Default for DiagnosticsCfg {
    fn default() -> Self {
        Self {
            pair: PairCfg::PicardInits,
            lambda_grid: vec![0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0],
            mu_grid: vec![0.0, 0.5, 2.0],
            alpha: 2.0,
            sigmas: 3.0,
            exp_mu: 0.5,
            pos_samples: 200,
        }
    }
}

/// A parsed scenario with the hash of its source text.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    pub hash: String,
}

impl Loaded {
    pub fn from_path(path: &Path, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_str(&text, seed_override)
    }

    pub fn from_str(text: &str, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let mut scenario: Scenario =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if scenario.schema != SCHEMA_VERSION {
            return Err(ConfigError::Invalid {
                field: "schema".into(),
                reason: format!(
                    "version {} is not supported (expected {SCHEMA_VERSION})",
                    scenario.schema
                ),
            });
        }
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        if let Some(seed) = seed_override {
            scenario.seed = seed;
            hasher.update(format!("\nseed-override={seed}").as_bytes());
        }
        let hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        scenario.validate()?;
        Ok(Self { scenario, hash })
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

impl Scenario {
    pub fn manifold_dim(&self) -> usize {
        match &self.manifold {
            ManifoldCfg::Euclidean { dim }
            | ManifoldCfg::Sphere { dim, .. }
            | ManifoldCfg::Hyperbolic { dim, .. } => *dim,
        }
    }

    /// Range checks that do not need the core constructors.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.manifold_dim();
        if n == 0 {
            return Err(invalid("manifold.dim", "must be positive"));
        }
        let d = self.forward.y.len();
        if d == 0 {
            return Err(invalid("forward.y", "must be nonempty"));
        }
        if !(self.forward.horizon > 0.0) {
            return Err(invalid("forward.horizon", "must be positive"));
        }
        if self.forward.steps == 0 || self.forward.paths == 0 {
            return Err(invalid("forward", "steps and paths must be positive"));
        }
        if !(self.forward.sigma >= 0.0) {
            return Err(invalid("forward.sigma", "must be nonnegative"));
        }
        if self.forward.mu.as_ref().is_some_and(|m| m.len() != d) {
            return Err(invalid("forward.mu", "must have the length of forward.y"));
        }
        if self.domain.center.as_ref().is_some_and(|c| c.len() != n) {
            return Err(invalid("domain.center", "must have the manifold dimension"));
        }
        match &self.terminal {
            TerminalCfg::Identity if d != n => {
                return Err(invalid(
                    "terminal",
                    "identity needs forward.y of the manifold dimension",
                ))
            }
            TerminalCfg::Constant { point } if point.len() != n => {
                return Err(invalid(
                    "terminal.point",
                    "must have the manifold dimension",
                ))
            }
            TerminalCfg::Tanh { shift, .. }
                if d != n || shift.as_ref().is_some_and(|s| s.len() != d) =>
            {
                return Err(invalid(
                    "terminal",
                    "tanh needs forward.y and shift of the manifold dimension",
                ))
            }
            _ => {}
        }
        match &self.drift {
            DriftCfg::BSin { v0 } if v0.len() != n => {
                return Err(invalid("drift.v0", "must have the manifold dimension"))
            }
            DriftCfg::Expression { components } if components.len() != n => {
                return Err(invalid(
                    "drift.components",
                    "one expression per manifold dimension",
                ))
            }
            DriftCfg::Tangential | DriftCfg::Swirl { .. } if n < 2 => {
                return Err(invalid("drift", "needs dimension at least 2"))
            }
            _ => {}
        }
        if self.check.samples == 0 {
            return Err(invalid("check.samples", "must be positive"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(invalid(
                "solver",
                "tol must be positive and max_iter at least 1",
            ));
        }
        if let Some(c) = &self.cascade {
            if c.ks.is_empty() || c.ls.is_empty() || c.ks.contains(&0) || c.ls.contains(&0) {
                return Err(invalid(
                    "cascade",
                    "ks and ls must be nonempty lists of positive integers",
                ));
            }
            if c.mollifier_count < 2 {
                return Err(invalid("cascade.mollifier_count", "must be at least 2"));
            }
        }
        let g = &self.diagnostics;
        if g.lambda_grid.is_empty() || g.mu_grid.is_empty() {
            return Err(invalid(
                "diagnostics",
                "lambda_grid and mu_grid must be nonempty",
            ));
        }
        if g.lambda_grid.iter().chain(&g.mu_grid).any(|v| !(*v >= 0.0))
            || !(g.alpha > 0.0)
            || !(g.exp_mu >= 0.0)
        {
            return Err(invalid(
                "diagnostics",
                "grids and exp_mu must be nonnegative, alpha positive",
            ));
        }
        if let PairCfg::TerminalShift { shift } = &g.pair {
            if shift.len() != d {
                return Err(invalid(
                    "diagnostics.pair.shift",
                    "must have the length of forward.y",
                ));
            }
        }
        Ok(())
    }
}

/// Derived seed for stream `k` of the scenario.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    seed ^ k.wrapping_mul(0xD6E8_FEB8_6659_FD93)
}
