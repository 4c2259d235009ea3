//! Turns a scenario into the objects of the core crate.

use std::sync::Arc;

use mbsde_core::approximation::Dims;
use mbsde_core::domain::{Chi, DomainSpec, PsiFunction};
use mbsde_core::drift::{builtin, ConditionSampler, Declared, DriftSpec, Region};
use mbsde_core::geometry::ManifoldChart;
use mbsde_core::solver::{
    first_exit_box, Basis, ForwardPaths, PicardInit, SdeConfig, SolverConfig, TerminalMap,
};
use mbsde_core::{Matrix, Vector};

use crate::expr::{Expr, Shape};
use crate::scenario::*;
use crate::ConfigError;

/// Stream indices of [`sub_seed`].
pub mod stream {
    pub const FORWARD: u64 = 1;
    pub const CHECK: u64 = 2;
    pub const CASCADE: u64 = 3;
    pub const DIAGNOSTICS: u64 = 4;
    pub const SELFTEST: u64 = 5;
}

pub struct Setup {
    pub chart: ManifoldChart,
    pub domain: DomainSpec,
    pub psi: PsiFunction,
    pub drift: DriftSpec,
    pub sde: SdeConfig,
    pub terminal: TerminalMap,
    pub solver: SolverConfig,
    pub sampler: ConditionSampler,
    pub dims: Dims,
}

fn core(field: &str) -> impl Fn(mbsde_core::Error) -> ConfigError + '_ {
    move |e| ConfigError::Invalid {
        field: field.into(),
        reason: e.to_string(),
    }
}

pub fn chart(cfg: &ManifoldCfg) -> Result<ManifoldChart, ConfigError> {
    match *cfg {
        ManifoldCfg::Euclidean { dim } => Ok(ManifoldChart::euclidean(dim)),
        ManifoldCfg::Sphere {
            dim,
            curvature,
            chart_radius,
        } => ManifoldChart::sphere(dim, curvature, chart_radius).map_err(core("manifold")),
        ManifoldCfg::Hyperbolic { dim, chart_radius } => {
            ManifoldChart::hyperbolic_disc(dim, chart_radius).map_err(core("manifold"))
        }
    }
}

fn curvature(cfg: &ManifoldCfg) -> f64 {
    match cfg {
        ManifoldCfg::Sphere { curvature, .. } => *curvature,
        ManifoldCfg::Euclidean { .. } => 0.0,
        ManifoldCfg::Hyperbolic { .. } => -1.0,
    }
}

pub fn domain(chart: &ManifoldChart, cfg: &DomainCfg) -> Result<DomainSpec, ConfigError> {
    let n = chart.dim();
    let chi = match &cfg.chi {
        ChiCfg::SquaredNorm => Chi::squared_norm(n),
        ChiCfg::Quadratic { q } => {
            if q.len() != n || q.iter().any(|r| r.len() != n) {
                return Err(ConfigError::Invalid {
                    field: "domain.chi.q".into(),
                    reason: format!("must be {n} x {n}"),
                });
            }
            Chi::Quadratic {
                q: Matrix::from_fn(n, n, |i, j| q[i][j]),
            }
        }
    };
    let center = cfg
        .center
        .as_ref()
        .map_or_else(|| Vector::zeros(n), |c| Vector::from_column_slice(c));
    let d =
        DomainSpec::new(chart, chi, cfg.level, center, cfg.inner_radius).map_err(core("domain"))?;
    match cfg.c2 {
        Some(c2) => d.with_c2(c2).map_err(core("domain.c2")),
        None => Ok(d),
    }
}

pub fn psi(s: &Scenario) -> Result<PsiFunction, ConfigError> {
    let p = match &s.psi {
        PsiCfg::SquaredDistance => PsiFunction::SquaredDistance,
        PsiCfg::SinPower { a, curvature: k } => PsiFunction::SinPower {
            a: *a,
            curvature: k.unwrap_or_else(|| curvature(&s.manifold)),
        },
    };
    p.validate().map_err(core("psi"))?;
    Ok(p)
}

pub fn drift(s: &Scenario) -> Result<DriftSpec, ConfigError> {
    let n = s.manifold_dim();
    let f = match &s.drift {
        DriftCfg::Zero => builtin::zero(),
        DriftCfg::Radial { kappa } => builtin::radial(*kappa),
        DriftCfg::Inward { kappa } => builtin::inward(*kappa),
        DriftCfg::Tangential => builtin::tangential(),
        DriftCfg::ZLinear { c0 } => builtin::z_linear(*c0),
        DriftCfg::BSin { v0 } => builtin::b_sin(Vector::from_column_slice(v0)),
        DriftCfg::Swirl {
            kappa,
            c1,
            c0,
            omega,
        } => builtin::swirl(*kappa, *c1, *c0, *omega),
        DriftCfg::Expression { components } => {
            let shape = Shape {
                d: s.forward.y.len(),
                n,
                d_w: s.forward.y.len(),
            };
            let exprs = components
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    Expr::parse(c, shape).map_err(|e| ConfigError::Invalid {
                        field: format!("drift.components[{i}]"),
                        reason: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let uses_z = exprs.iter().any(Expr::uses_z);
            let exprs = Arc::new(exprs);
            DriftSpec::new(
                "expression",
                uses_z,
                move |b: &Vector, x: &Vector, z: &Matrix| {
                    Vector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(b, x, z)))
                },
            )
        }
    };
    let c = &s.check;
    Ok(f.with_declared(Declared {
        lipschitz: c.declared_lipschitz,
        monotonicity: c.declared_monotonicity,
        bound: c.declared_bound,
    }))
}

pub fn terminal(s: &Scenario) -> TerminalMap {
    match &s.terminal {
        TerminalCfg::Identity => TerminalMap::new("identity", |b: &Vector| b.clone()),
        TerminalCfg::Constant { point } => TerminalMap::constant(Vector::from_column_slice(point)),
        TerminalCfg::Tanh { scale, shift } => tanh_map(*scale, shift.as_deref()),
    }
}

pub fn tanh_map(scale: f64, shift: Option<&[f64]>) -> TerminalMap {
    let shift = shift.map(Vector::from_column_slice);
    TerminalMap::new("tanh", move |b: &Vector| {
        let arg = match &shift {
            Some(s) => b + s,
            None => b.clone(),
        };
        arg.map(|v| scale * v.tanh())
    })
}

pub fn sde(s: &Scenario) -> SdeConfig {
    let f = &s.forward;
    let d = f.y.len();
    let sigma = f.sigma;
    let mut cfg = SdeConfig::brownian(
        Vector::from_column_slice(&f.y),
        f.horizon,
        f.steps,
        f.paths,
        sub_seed(s.seed, stream::FORWARD),
    )
    .with_sigma(d, move |_: &Vector| Matrix::identity(d, d) * sigma);
    if let Some(mu) = &f.mu {
        let mu = Vector::from_column_slice(mu);
        cfg = cfg.with_drift(move |_: &Vector| mu.clone());
    }
    cfg
}

pub fn solver(s: &Scenario) -> SolverConfig {
    let c = &s.solver;
    SolverConfig {
        basis: Basis::Polynomial { degree: c.degree },
        max_iter: c.max_iter,
        tol: c.tol,
        ridge: c.ridge,
        init: match c.init {
            InitCfg::Center => PicardInit::Center,
            InitCfg::Terminal => PicardInit::Terminal,
        },
    }
}

pub fn stopping(s: &Scenario, fwd: &ForwardPaths) -> Option<Vec<usize>> {
    s.stopping
        .as_ref()
        .map(|c| first_exit_box(fwd, c.half_width))
}

pub fn build(s: &Scenario) -> Result<Setup, ConfigError> {
    let chart = chart(&s.manifold)?;
    let domain = domain(&chart, &s.domain)?;
    let d = s.forward.y.len();
    let mut sampler = ConditionSampler::new(Region::Domain(domain.clone()), d, d);
    sampler.z_max = s.check.z_max;
    sampler.b_box = s.check.b_box;
    sampler.validate(&chart).map_err(core("check"))?;
    Ok(Setup {
        psi: psi(s)?,
        drift: drift(s)?,
        sde: sde(s),
        terminal: terminal(s),
        solver: solver(s),
        dims: Dims {
            d,
            n: chart.dim(),
            d_w: d,
        },
        sampler,
        chart,
        domain,
    })
}
