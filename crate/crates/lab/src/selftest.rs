//! Geometry self-test: closed forms against the ODE route, isometry of
//! parallel transport and stability of the transport comparison constant.

use mbsde_core::geometry::{ode, transport_estimate_constant, ManifoldChart, TangentPairSampler};
use mbsde_core::rng::batched;
use mbsde_core::{Matrix, Result, Vector};
use serde::Serialize;

pub const ODE_TOL: f64 = 1e-6;
pub const ISOMETRY_TOL: f64 = 1e-7;
/// Largest relative change of the transport constant when the sample
/// count doubles.
pub const CONSTANT_DRIFT: f64 = 0.05;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OracleReport {
    pub manifold: String,
    pub cases: usize,
    pub max_distance_error: f64,
    pub max_transport_error: f64,
    pub max_isometry_defect: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConstantReport {
    pub manifold: String,
    pub samples: usize,
    pub constant: f64,
    pub constant_doubled: f64,
    pub forward_ratio: f64,
    pub backward_ratio: f64,
    pub relative_change: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SelftestReport {
    pub oracle: Vec<OracleReport>,
    pub constants: Vec<ConstantReport>,
    pub pass: bool,
}

/// The curved charts of the oracle comparison and the radius of their
/// sampling balls, small enough that connecting geodesics stay in the chart.
pub fn curved_charts() -> Vec<(&'static str, ManifoldChart, f64)> {
    vec![
        (
            "sphere",
            ManifoldChart::sphere(2, 1.0, 1.2).expect("valid sphere chart"),
            ORACLE_RADIUS_SPHERE,
        ),
        (
            "poincare-disc",
            ManifoldChart::hyperbolic_disc(2, 0.8).expect("valid disc chart"),
            ORACLE_RADIUS_DISC,
        ),
    ]
}

pub const ORACLE_RADIUS_SPHERE: f64 = 0.8;
pub const ORACLE_RADIUS_DISC: f64 = 0.6;

/// The built-in manifolds and the radius of the transport samples.
pub fn builtin_charts() -> Vec<(&'static str, ManifoldChart, f64)> {
    vec![
        ("euclidean", ManifoldChart::euclidean(2), 1.0),
        (
            "sphere",
            ManifoldChart::sphere(2, 1.0, 1.2).expect("valid sphere chart"),
            1.0,
        ),
        (
            "poincare-disc",
            ManifoldChart::hyperbolic_disc(2, 0.8).expect("valid disc chart"),
            0.7,
        ),
    ]
}

pub fn oracle(
    name: &str,
    m: &ManifoldChart,
    radius: f64,
    cases: usize,
    seed: u64,
) -> Result<OracleReport> {
    let ode = m.as_ode_chart();
    let rows = batched(seed, cases, |s, _| -> Result<(f64, f64, f64)> {
        let x = s.in_ball(m.dim(), radius);
        let y = s.in_ball(m.dim(), radius);
        let v = Matrix::from_column_slice(m.dim(), 1, s.normal_vector(m.dim()).as_slice());
        // one shooting solve serves both the distance and the transport
        let shot = ode::log(&ode, &x, &y)?;
        let dist = (m.distance(&x, &y)? - ode.norm(&x, &shot)?).abs();
        let pv = m.parallel_transport(&x, &y, &v)?;
        let pv_ode = ode::geodesic(&ode, &x, &shot, &v, ode::ODE_STEPS)?.2;
        let transport = (&pv - &pv_ode).norm() / v.norm();
        let vx = Vector::from_column_slice(v.as_slice());
        let before = m.norm(&x, &vx)?;
        let iso = [pv, pv_ode]
            .iter()
            .map(|p| {
                m.norm(&y, &Vector::from_column_slice(p.as_slice()))
                    .map(|a| (a - before).abs() / before)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((dist, transport, iso[0].max(iso[1])))
    });
    let mut r = OracleReport {
        manifold: name.into(),
        cases,
        max_distance_error: 0.0,
        max_transport_error: 0.0,
        max_isometry_defect: 0.0,
        pass: false,
    };
    for row in rows {
        let (d, t, i) = row?;
        r.max_distance_error = r.max_distance_error.max(d);
        r.max_transport_error = r.max_transport_error.max(t);
        r.max_isometry_defect = r.max_isometry_defect.max(i);
    }
    r.pass = r.max_distance_error <= ODE_TOL
        && r.max_transport_error <= ODE_TOL
        && r.max_isometry_defect <= ISOMETRY_TOL;
    Ok(r)
}

pub fn constant(
    name: &str,
    m: &ManifoldChart,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<ConstantReport> {
    let sampler = TangentPairSampler::new(radius);
    let a = transport_estimate_constant(m, &sampler, seed, samples)?;
    let b = transport_estimate_constant(m, &sampler, seed, 2 * samples)?;
    let change = (b.constant - a.constant).abs() / a.constant;
    Ok(ConstantReport {
        manifold: name.into(),
        samples,
        constant: a.constant,
        constant_doubled: b.constant,
        forward_ratio: b.forward_ratio,
        backward_ratio: b.backward_ratio,
        relative_change: change,
        pass: a.constant.is_finite() && b.constant.is_finite() && change < CONSTANT_DRIFT,
    })
}

pub fn run(cases: usize, samples: usize, seed: u64) -> Result<SelftestReport> {
    let oracle = curved_charts()
        .iter()
        .map(|(n, m, r)| oracle(n, m, *r, cases, seed))
        .collect::<Result<Vec<_>>>()?;
    let constants = builtin_charts()
        .iter()
        .map(|(n, m, r)| constant(n, m, *r, samples, seed ^ 0x5bd1_e995))
        .collect::<Result<Vec<_>>>()?;
    let pass = oracle.iter().all(|r| r.pass) && constants.iter().all(|r| r.pass);
    Ok(SelftestReport {
        oracle,
        constants,
        pass,
    })
}
