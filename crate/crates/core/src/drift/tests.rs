use super::builtin::*;
use super::*;
use crate::domain::{Chi, PsiFunction};
use crate::geometry::ManifoldChart;
use crate::rng::Sampler;

fn ball(n: usize, d: usize, d_w: usize) -> (ManifoldChart, ConditionSampler) {
    let m = ManifoldChart::euclidean(n);
    let s = ConditionSampler::new(
        Region::Ball {
            center: Vector::zeros(n),
            radius: 1.0,
        },
        d,
        d_w,
    );
    (m, s)
}

fn unit_disc(n: usize) -> DomainSpec {
    DomainSpec::new(
        &ManifoldChart::euclidean(n),
        Chi::squared_norm(n),
        1.0,
        Vector::zeros(n),
        1.5,
    )
    .unwrap()
    .with_c2(1.0)
    .unwrap()
}

#[test]
fn lipschitz_examples() {
    let (m, s) = ball(2, 2, 2);
    assert_eq!(
        estimate_lipschitz_bz(&zero(), &m, &s, 1, 2000).unwrap(),
        0.0
    );
    let l = estimate_lipschitz_bz(&z_linear(0.3), &m, &s, 2, 10_000).unwrap();
    assert!((l - 0.3).abs() < 1e-9, "{l}");
    let l = estimate_lipschitz_bz(
        &b_sin(Vector::from_vec(alloc::vec![1.0, 0.0])),
        &m,
        &s,
        3,
        10_000,
    )
    .unwrap();
    assert!((0.9..=1.0).contains(&l), "{l}");
}

#[test]
fn monotonicity_examples() {
    let (m, s) = ball(2, 1, 2);
    let psi = PsiFunction::SquaredDistance;
    assert_eq!(
        estimate_monotonicity(&zero(), &m, &psi, &s, 1, 1000).unwrap(),
        0.0
    );
    let nu = estimate_monotonicity(&radial(1.0), &m, &psi, &s, 2, 10_000).unwrap();
    assert!((nu - 0.5).abs() <= 0.02 * 0.5, "{nu}");
    assert!(nu >= 0.5 - 1e-12);
    let nu = estimate_monotonicity(&inward(1.0), &m, &psi, &s, 3, 10_000).unwrap();
    assert!((nu + 2.0).abs() <= 0.02 * 2.0, "{nu}");
    assert!(nu >= -2.0 - 1e-12);
}

#[test]
fn monotonicity_of_z_free_drift_scales_with_z_range() {
    // with f independent of z, the ratio is (D Psi / Psi) / (1 + |z|), so
    // the infimum for a positive identity is reached at |z| = z_max
    let (m, mut s) = ball(2, 1, 2);
    let psi = PsiFunction::SquaredDistance;
    for z_max in [1.0, 3.0, 7.0] {
        s.z_max = z_max;
        let nu = estimate_monotonicity(&radial(0.5), &m, &psi, &s, 4, 5000).unwrap();
        assert!((nu * (1.0 + z_max) - 1.0).abs() < 0.02, "{z_max} {nu}");
    }
}

#[test]
fn bound_and_growth_examples() {
    let (m, s) = ball(2, 1, 2);
    assert_eq!(check_uniform_bound(&zero(), &m, &s, 1, 100).unwrap(), 0.0);
    let l2 = check_uniform_bound(&radial(1.0), &m, &s, 2, 10_000).unwrap();
    assert!(l2 <= 1.0 && l2 > 0.98, "{l2}");
    assert_eq!(
        check_uniform_bound(&z_linear(1.0), &m, &s, 3, 100).unwrap(),
        0.0
    );

    assert_eq!(
        linear_growth_constant(&zero(), &m, &s, 1, 100)
            .unwrap()
            .c_hat,
        0.0
    );
    let g = linear_growth_constant(&z_linear(0.3), &m, &s, 4, 10_000).unwrap();
    assert!(g.c_hat <= 0.3 && g.c_hat > 0.3 * (1.0 - 1e-3), "{g:?}");
    let g = linear_growth_constant(&radial(1.0), &m, &s, 5, 10_000).unwrap();
    assert!(g.c_hat <= 1.0 && g.c_hat > 0.98, "{g:?}");
}

#[test]
fn outward_examples() {
    let d = unit_disc(3);
    let (_, s) = ball(3, 1, 2);
    let r = check_outward(&radial(1.0), &d, &s, 1, 500).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
    let r = check_outward(&inward(1.0), &d, &s, 2, 500).unwrap();
    assert!((r + 1.0).abs() < 1e-12);
    let r = check_outward(&tangential(), &d, &s, 3, 500).unwrap();
    assert!(r.abs() < 1e-12 && r >= -1e-9);
}

#[test]
fn outward_on_a_skewed_domain_uses_the_chart_differential() {
    // chi = 2 y_1^2 + y_2^2: the field grad(chi) is normal to the boundary
    let m = ManifoldChart::euclidean(2);
    let q = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let d = DomainSpec::new(&m, Chi::Quadratic { q }, 1.0, Vector::zeros(2), 1.5).unwrap();
    let normal = DriftSpec::new("normal", false, |_: &Vector, x: &Vector, _: &Matrix| {
        Vector::from_vec(alloc::vec![4.0 * x[0], 2.0 * x[1]])
    });
    let (_, s) = ball(2, 1, 1);
    assert!(check_outward(&normal, &d, &s, 1, 500).unwrap() > 0.0);
    let tangent = DriftSpec::new("tangent", false, |_: &Vector, x: &Vector, _: &Matrix| {
        Vector::from_vec(alloc::vec![2.0 * x[1], -4.0 * x[0]])
    });
    assert!(check_outward(&tangent, &d, &s, 2, 500).unwrap().abs() < 1e-10);
}

#[test]
fn smallness_examples() {
    assert!(check_smallness(0.1, 0.0, 0.1, 0.5).unwrap());
    assert!(!check_smallness(0.6, 0.0, 0.1, 0.5).unwrap());
    assert!(!check_smallness(0.1, -0.5, 0.1, 0.5).unwrap());
    assert!(check_smallness(0.1, 0.0, 0.1, 0.0).is_err());
}

#[test]
fn dpsi_examples() {
    let (m, s) = ball(2, 1, 2);
    let psi = PsiFunction::SquaredDistance;
    let p = EstimParams::default();
    let r = dpsi_lower_bound_check(&zero(), &m, &psi, &s, p, 1, 1000).unwrap();
    assert_eq!(r.c_hat, 0.0);
    let r = dpsi_lower_bound_check(&radial(-0.7), &m, &psi, &s, p, 2, 5000).unwrap();
    assert!(r.c_hat <= 0.7 + 1e-12 && r.c_hat > 0.0);
    let a = dpsi_lower_bound_check(&z_linear(0.3), &m, &psi, &s, p, 3, 10_000).unwrap();
    let b = dpsi_lower_bound_check(&z_linear(0.3), &m, &psi, &s, p, 3, 20_000).unwrap();
    assert!(a.c_hat.is_finite() && b.c_hat >= a.c_hat);
    assert!(b.c_hat <= 1.1 * a.c_hat);
    assert!(a.c_squared_distance.is_some() && a.c_sin_power.is_none());
}

#[test]
fn estimates_are_nested_in_sample_count() {
    let m = ManifoldChart::sphere(2, 1.0, 1.2).unwrap();
    let s = ConditionSampler::new(
        Region::Ball {
            center: Vector::zeros(2),
            radius: 0.6,
        },
        2,
        2,
    );
    let f = swirl(0.5, 0.2, 0.1, 0.3);
    let psi = PsiFunction::SquaredDistance;
    let l1 = estimate_lipschitz_bz(&f, &m, &s, 9, 700).unwrap();
    let l2 = estimate_lipschitz_bz(&f, &m, &s, 9, 1400).unwrap();
    assert!(l2 >= l1);
    let n1 = estimate_monotonicity(&f, &m, &psi, &s, 9, 700).unwrap();
    let n2 = estimate_monotonicity(&f, &m, &psi, &s, 9, 1400).unwrap();
    assert!(n2 <= n1);
    assert_eq!(n1, estimate_monotonicity(&f, &m, &psi, &s, 9, 700).unwrap());
}

#[test]
fn declared_constants_are_checked() {
    let (m, s) = ball(2, 1, 2);
    let d = unit_disc(2);
    let psi = PsiFunction::SquaredDistance;
    let ok = radial(1.0).with_declared(Declared {
        lipschitz: Some(0.0),
        monotonicity: Some(0.0),
        bound: Some(1.0),
    });
    let r = check_all(&ok, &m, &psi, &d, &s, Thresholds::default(), 5, 2000).unwrap();
    assert_eq!(r.verdicts.declared_consistent, Some(true));
    assert!(r.verdicts.all_pass());
    let bad = radial(1.0).with_declared(Declared {
        bound: Some(0.5),
        ..Declared::default()
    });
    let r = check_all(
        &bad,
        &m,
        &psi,
        &d,
        &s,
        Thresholds { small: Some(0.5) },
        5,
        2000,
    )
    .unwrap();
    assert_eq!(r.verdicts.declared_consistent, Some(false));
    assert_eq!(r.verdicts.small, Some(false));
    let r = check_all(
        &inward(1.0),
        &m,
        &psi,
        &d,
        &s,
        Thresholds::default(),
        5,
        500,
    )
    .unwrap();
    assert!(!r.verdicts.outward);
}

#[test]
fn non_finite_values_are_reported() {
    let (m, s) = ball(2, 1, 1);
    let f = DriftSpec::new("nan", false, |_: &Vector, x: &Vector, _: &Matrix| {
        Vector::from_element(x.len(), f64::NAN)
    });
    assert!(matches!(
        check_uniform_bound(&f, &m, &s, 1, 10),
        Err(crate::Error::Evaluation { .. })
    ));
}

#[test]
fn normalised_and_pulled_back_drifts_invert_each_other() {
    let m = ManifoldChart::euclidean(2);
    let q = Matrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
    let d = DomainSpec::new(&m, Chi::Quadratic { q }, 0.7, Vector::zeros(2), 1.5).unwrap();
    let f = swirl(0.5, 0.2, 0.3, 1.0);
    let back = PulledBackDrift::spec(NormalizedDrift::spec(f.clone(), d.clone()), d.clone());
    let mut s = Sampler::new(3);
    for _ in 0..50 {
        let y = d.normalize_inverse(&s.in_ball(2, 1.0)).unwrap();
        let b = s.normal_vector(1);
        let z = s.normal_matrix(2, 2);
        let a = f.eval(&b, &y, &z).unwrap();
        let c = back.eval(&b, &y, &z).unwrap();
        assert!((a - c).norm() < 1e-9);
    }
}
