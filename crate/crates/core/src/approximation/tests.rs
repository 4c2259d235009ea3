use alloc::vec;

use super::*;
use crate::drift::builtin::*;
use crate::drift::{check_outward_normalized, check_uniform_bound, Region};

const DIMS: Dims = Dims { d: 2, n: 2, d_w: 2 };

fn v(a: &[f64]) -> Vector {
    Vector::from_column_slice(a)
}

fn unit_ball_sampler() -> (ManifoldChart, ConditionSampler) {
    let s = ConditionSampler::new(
        Region::Ball {
            center: Vector::zeros(2),
            radius: 1.0,
        },
        2,
        2,
    );
    (ManifoldChart::euclidean(2), s)
}

#[test]
fn cutoff_values() {
    assert_eq!(bump_phi(0.5), 1.0);
    assert_eq!(bump_phi(3.0), 0.0);
    assert_eq!(phi_k(3, 3.0), 1.0);
    assert_eq!(phi_k(3, 4.0), 0.0);
    assert!((bump_phi(1.5) - 0.5).abs() < 1e-15);
    let mut prev = 1.0;
    for i in 0..=400 {
        let p = bump_phi(0.5 + i as f64 * 0.005);
        assert!(p <= prev && (0.0..=1.0).contains(&p));
        prev = p;
    }
}

#[test]
fn truncation_examples() {
    let f = swirl(1.0, 0.5, 0.3, 2.0);
    let k = 2;
    let fk = truncate(&f, k).unwrap();
    let b = v(&[0.3, -0.2]);
    let x = v(&[0.4, 0.1]);
    let mut z = Matrix::zeros(2, 2);
    z[(0, 1)] = k as f64 + 2.0;
    assert_eq!(fk.eval(&b, &x, &z).unwrap(), Vector::zeros(2));
    let r = radial(1.7);
    let rk = truncate(&r, k).unwrap();
    let z = Matrix::from_element(2, 2, 0.5);
    assert_eq!(rk.eval(&b, &x, &z).unwrap(), x * 1.7);
    assert!(truncate(&r, 0).is_err());
}

#[test]
fn mollifier_nodes_are_normalised_and_supported() {
    for l in [4, 8, 32] {
        let m = Mollifier::new(DIMS, l, 1000, 9).unwrap();
        assert_eq!(m.nodes.len(), 1000);
        let total: f64 = m.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.weights.iter().all(|w| *w >= 0.0));
        assert!(m.max_offset() <= 1.0 / l as f64);
    }
    let a = Mollifier::new(DIMS, 8, 64, 3).unwrap();
    let b = Mollifier::new(DIMS, 8, 64, 3).unwrap();
    assert_eq!(a.nodes, b.nodes);
}

#[test]
fn mollify_rejects_coarse_scale() {
    let fk = truncate(&radial(1.0), 2).unwrap();
    assert!(mollify(&fk, DIMS, 2, 64, 0, 0.5).is_err());
    assert!(mollify(&fk, DIMS, 3, 64, 0, 0.5).is_ok());
}

#[test]
fn mollify_reproduces_constants_and_linear_maps() {
    let gamma = v(&[0.7, -1.1]);
    let c = DriftSpec::new("const", false, move |_: &Vector, _: &Vector, _: &Matrix| {
        gamma.clone()
    });
    let ck = truncate(&c, 4).unwrap();
    let ckl = mollify(&ck, DIMS, 8, 512, 1, 0.5).unwrap().spec();
    let b = v(&[0.1, 0.2]);
    let x = v(&[0.3, -0.4]);
    let z = Matrix::from_element(2, 2, 0.2);
    let got = ckl.eval(&b, &x, &z).unwrap();
    assert!((got - v(&[0.7, -1.1])).norm() < 1e-12);

    let mx = DriftSpec::new("linear", false, |_: &Vector, x: &Vector, _: &Matrix| {
        v(&[2.0 * x[0] + 0.5 * x[1], -x[0] + x[1]])
    });
    let mk = truncate(&mx, 4).unwrap();
    let mkl = mollify(&mk, DIMS, 8, 512, 2, 0.5).unwrap().spec();
    let want = v(&[2.0 * x[0] + 0.5 * x[1], -x[0] + x[1]]);
    assert!((mkl.eval(&b, &x, &z).unwrap() - want).norm() < 1e-12);
}

#[test]
fn sup_deviation_decreases_in_l() {
    let fk = truncate(&swirl(1.0, 0.8, 0.3, 2.0), 2).unwrap();
    let mut prev = f64::INFINITY;
    for l in [4, 8, 16, 32] {
        let fkl = mollify(&fk, DIMS, l, 2048, 5, 0.5).unwrap().spec();
        let dev = sup_deviation(&fkl, &fk, DIMS, 2, 256).unwrap();
        assert!(dev < prev, "l = {l}: {dev} vs {prev}");
        prev = dev;
    }
}

#[test]
fn modulus_examples() {
    let gamma = v(&[1.0, 2.0]);
    let c = DriftSpec::new("const", false, move |_: &Vector, _: &Vector, _: &Matrix| {
        gamma.clone()
    });
    assert_eq!(
        modulus_of_continuity(&truncate(&c, 2).unwrap(), DIMS, 2, 0.25, 64).unwrap(),
        0.0
    );

    // operator norm 2, attained along an axis
    let mx = DriftSpec::new("linear", false, |_: &Vector, x: &Vector, _: &Matrix| {
        v(&[2.0 * x[0], 0.5 * x[1]])
    });
    let mk = truncate(&mx, 2).unwrap();
    let mut prev = 0.0;
    for eta in [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0] {
        let eps = modulus_of_continuity(&mk, DIMS, 2, eta, 128).unwrap();
        assert!(
            (eps - 2.0 * eta).abs() < 1e-12 * eta.max(1.0),
            "{eta} {eps}"
        );
        assert!(eps >= prev);
        prev = eps;
    }
    let sk = truncate(&swirl(1.0, 0.8, 0.3, 2.0), 2).unwrap();
    let mut prev = 0.0;
    for eta in [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0] {
        let eps = modulus_of_continuity(&sk, DIMS, 2, eta, 128).unwrap();
        assert!(eps >= prev);
        prev = eps;
    }
    assert!(modulus_of_continuity(&sk, DIMS, 2, 0.0, 16).is_err());
}

#[test]
fn calibration_examples() {
    let ls = [8, 16, 32];
    let levels = |f: &DriftSpec, k: u32| -> Vec<(u32, DriftSpec, f64)> {
        ls.iter()
            .map(|&l| {
                let fkl = mollify(f, DIMS, l, 1024, 7, 0.5).unwrap().spec();
                let eps = modulus_of_continuity(f, DIMS, k, 1.0 / l as f64, 128).unwrap();
                (l, fkl, eps)
            })
            .collect()
    };
    let z0 = truncate(&zero(), 2).unwrap();
    let cal = calibrate_a(&z0, 2, &levels(&z0, 2), DIMS, 128).unwrap();
    assert_eq!(cal.c_hat, 0.0);
    assert_eq!(cal.a, 1.0);
    assert!(cal.stable);

    // the symmetric quadrature is exact on linear maps, so the deviation
    // bound |kappa| / l holds with room to spare
    let kappa = 1.5;
    let rk = truncate(&radial(kappa), 2).unwrap();
    let cal = calibrate_a(&rk, 2, &levels(&rk, 2), DIMS, 128).unwrap();
    assert!(cal.c_hat <= kappa, "{cal:?}");

    let zk = truncate(&z_linear(0.3), 2).unwrap();
    let cal = calibrate_a(&zk, 2, &levels(&zk, 2), DIMS, 256).unwrap();
    assert!(cal.c_hat.is_finite());
    assert!(cal.stable, "{cal:?}");
    assert!(calibrate_a(&zk, 2, &[], DIMS, 16).is_err());
}

#[test]
fn correction_examples() {
    let fkl = mollify(
        &truncate(&swirl(1.0, 0.8, 0.3, 2.0), 2).unwrap(),
        DIMS,
        8,
        256,
        1,
        0.5,
    )
    .unwrap()
    .spec();
    let g = correct(&fkl, 0.2, 3.0, 8).unwrap();
    let b = v(&[0.5, 0.1]);
    let z = Matrix::from_element(2, 2, 0.7);
    let o = Vector::zeros(2);
    assert_eq!(g.eval(&b, &o, &z).unwrap(), fkl.eval(&b, &o, &z).unwrap());

    let g0 = correct(&zero(), 0.0, 2.0, 8).unwrap();
    let x = v(&[0.6, 0.8]);
    let radial_part = g0.eval(&b, &x, &z).unwrap().dot(&x);
    assert!((radial_part - 2.0 / 8.0 * (1.0 + z.norm())).abs() < 1e-14);
    assert!(correct(&zero(), -1.0, 2.0, 8).is_err());
    assert!(correct(&zero(), 0.0, 0.0, 8).is_err());
}

#[test]
fn corrected_tangential_field_points_outward() {
    let (_, sampler) = unit_ball_sampler();
    let cfg = CascadeConfig {
        ks: vec![2],
        ls: vec![8, 16, 32],
        mollifier_count: 1024,
        modulus_density: 128,
        probe_count: 128,
        seed: 11,
    };
    let levels = build_cascade(&tangential(), DIMS, 0.5, &cfg).unwrap();
    for cell in &levels[0].cells {
        let r = check_outward_normalized(&cell.g_kl, 2, &sampler, 3, 2000).unwrap();
        assert!(r >= 0.0, "l = {}: {r}", cell.l);
    }
}

#[test]
fn uniform_bound_at_zero_z_is_not_inflated() {
    // mollification averages f over a 1/l-neighbourhood, so the bound at
    // z = 0 may only grow by the x-modulus and the z, b spread
    let (m, sampler) = unit_ball_sampler();
    let f = swirl(1.0, 0.8, 0.3, 2.0);
    let base = check_uniform_bound(&f, &m, &sampler, 1, 4000).unwrap();
    let lip = 0.3 + 0.8;
    for k in [2, 4] {
        let fk = truncate(&f, k).unwrap();
        assert!(check_uniform_bound(&fk, &m, &sampler, 1, 4000).unwrap() <= base + 1e-12);
        for l in [8, 16, 32] {
            let fkl = mollify(&fk, DIMS, l, 1024, 2, 0.5).unwrap().spec();
            let eps = modulus_of_continuity(&fk, DIMS, k, 1.0 / l as f64, 128).unwrap();
            let got = check_uniform_bound(&fkl, &m, &sampler, 1, 4000).unwrap();
            assert!(
                got <= base + eps + 2.0 * lip / l as f64,
                "{k} {l}: {got} vs {base}"
            );
        }
    }
}

#[test]
fn cutoff_transport_constant_is_uniform_in_k() {
    let m = ManifoldChart::sphere(2, 1.0, 1.2).unwrap();
    let sampler = ConditionSampler::new(
        Region::Ball {
            center: Vector::zeros(2),
            radius: 0.6,
        },
        1,
        2,
    );
    let cs: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|&k| cutoff_transport_constant(&m, k, &sampler, 4, 10_000).unwrap())
        .collect();
    assert!(cs.iter().all(|c| c.is_finite() && *c > 0.0), "{cs:?}");
    assert!(
        cs[3] <= 1.1 * cs[..3].iter().cloned().fold(0.0, f64::max),
        "{cs:?}"
    );
}

#[test]
fn probes_fill_the_support() {
    let p = support_probes(DIMS, 3, 500).unwrap();
    assert!(p.iter().all(|(b, x, z)| b.norm() <= 4.0 + 1e-12
        && x.norm() <= 1.0 + 1e-12
        && z.norm() <= 4.0 + 1e-12));
    let far = p.iter().filter(|(_, _, z)| z.norm() > 3.0).count();
    assert!(far > 0);
}
