use mbsde_core::approximation::{phi_k, smooth_step};
use mbsde_core::domain::{Chi, DomainSpec, PsiFunction};
use mbsde_core::geometry::ManifoldChart;
use mbsde_core::{Matrix, Vector};
use proptest::prelude::*;

fn charts() -> Vec<(ManifoldChart, f64)> {
    vec![
        (ManifoldChart::euclidean(2), 2.0),
        (ManifoldChart::sphere(2, 1.0, 1.2).unwrap(), 0.8),
        (ManifoldChart::hyperbolic_disc(2, 0.8).unwrap(), 0.6),
    ]
}

/// A point of the open disc of radius `r`, from two unit-interval numbers.
fn point(r: f64, a: f64, t: f64) -> Vector {
    let rho = r * a.sqrt();
    let th = std::f64::consts::TAU * t;
    Vector::from_column_slice(&[rho * th.cos(), rho * th.sin()])
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..1.0_f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distance_is_a_metric(a in unit(), b in unit(), c in unit(), d in unit(), e in unit(), f in unit()) {
        for (m, r) in charts() {
            let (x, y, z) = (point(r, a, b), point(r, c, d), point(r, e, f));
            let dxy = m.distance(&x, &y).unwrap();
            let dyx = m.distance(&y, &x).unwrap();
            let dxz = m.distance(&x, &z).unwrap();
            let dyz = m.distance(&y, &z).unwrap();
            prop_assert!(dxy >= 0.0);
            prop_assert!((dxy - dyx).abs() <= 1e-12 * (1.0 + dxy));
            prop_assert!(dxz <= dxy + dyz + 1e-12);
            prop_assert!(m.distance(&x, &x).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn exp_inverts_log(a in unit(), b in unit(), c in unit(), d in unit()) {
        for (m, r) in charts() {
            let (x, y) = (point(r, a, b), point(r, c, d));
            let v = m.log(&x, &y).unwrap();
            let back = m.exp(&x, &v).unwrap();
            prop_assert!((back - &y).norm() <= 1e-9);
            // |log_x y|_x is the distance
            let len = m.norm(&x, &v).unwrap();
            prop_assert!((len - m.distance(&x, &y).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn transport_is_an_isometry_and_reversible(
        a in unit(), b in unit(), c in unit(), d in unit(),
        v0 in -2.0..2.0_f64, v1 in -2.0..2.0_f64, w0 in -2.0..2.0_f64, w1 in -2.0..2.0_f64,
    ) {
        for (m, r) in charts() {
            let (x, y) = (point(r, a, b), point(r, c, d));
            let z = Matrix::from_column_slice(2, 2, &[v0, v1, w0, w1]);
            let pz = m.parallel_transport(&x, &y, &z).unwrap();
            let g_x = m.metric(&x).unwrap();
            let g_y = m.metric(&y).unwrap();
            // Gram matrices agree: lengths and angles are kept
            let before = z.transpose() * g_x * &z;
            let after = pz.transpose() * g_y * &pz;
            prop_assert!((&before - &after).norm() <= 1e-9 * (1.0 + before.norm()));
            let back = m.parallel_transport(&y, &x, &pz).unwrap();
            prop_assert!((back - &z).norm() <= 1e-9 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn transport_moves_the_log_to_minus_the_log(a in unit(), b in unit(), c in unit(), d in unit()) {
        // the geodesic velocity is parallel: P(log_x y) = -log_y x
        for (m, r) in charts() {
            let (x, y) = (point(r, a, b), point(r, c, d));
            let v = m.log(&x, &y).unwrap();
            let pv = m
                .parallel_transport(&x, &y, &Matrix::from_column_slice(2, 1, v.as_slice()))
                .unwrap();
            let w = m.log(&y, &x).unwrap();
            prop_assert!((Vector::from_column_slice(pv.as_slice()) + w).norm() <= 1e-9);
        }
    }

    #[test]
    fn small_steps_measure_the_metric(a in unit(), b in unit(), t in unit()) {
        for (m, r) in charts() {
            let x = point(0.9 * r, a, b);
            let th = std::f64::consts::TAU * t;
            let v = Vector::from_column_slice(&[th.cos(), th.sin()]);
            let h = 1e-5;
            let d = m.distance(&x, &(&x + &v * h)).unwrap() / h;
            prop_assert!((d - m.norm(&x, &v).unwrap()).abs() <= 1e-4 * d);
        }
    }

    #[test]
    fn euclidean_transport_is_path_independent(
        a in unit(), b in unit(), c in unit(), d in unit(), e in unit(), f in unit(),
        v0 in -2.0..2.0_f64, v1 in -2.0..2.0_f64,
    ) {
        let m = ManifoldChart::euclidean(2);
        let (x, y, z) = (point(2.0, a, b), point(2.0, c, d), point(2.0, e, f));
        let v = Matrix::from_column_slice(2, 1, &[v0, v1]);
        let chained = m
            .parallel_transport(&y, &z, &m.parallel_transport(&x, &y, &v).unwrap())
            .unwrap();
        let direct = m.parallel_transport(&x, &z, &v).unwrap();
        prop_assert!((chained - direct).norm() <= 1e-14);
    }

    #[test]
    fn chained_transport_on_the_sphere_keeps_the_norm(
        a in unit(), b in unit(), c in unit(), d in unit(), e in unit(), f in unit(),
        v0 in -2.0..2.0_f64, v1 in -2.0..2.0_f64,
    ) {
        // around a loop x -> y -> z -> x the holonomy is a rotation
        let m = ManifoldChart::sphere(2, 1.0, 1.2).unwrap();
        let (x, y, z) = (point(0.8, a, b), point(0.8, c, d), point(0.8, e, f));
        let v = Matrix::from_column_slice(2, 1, &[v0, v1]);
        let mut w = v.clone();
        for (p, q) in [(&x, &y), (&y, &z), (&z, &x)] {
            w = m.parallel_transport(p, q, &w).unwrap();
        }
        let g = m.metric(&x).unwrap();
        let n0 = (v.transpose() * &g * &v)[(0, 0)];
        let n1 = (w.transpose() * &g * &w)[(0, 0)];
        prop_assert!((n0 - n1).abs() <= 1e-9 * (1.0 + n0));
    }

    #[test]
    fn normalising_map_round_trips(a in unit(), t in unit(), q11 in 0.5..2.0_f64, q22 in 0.5..2.0_f64, q12 in -0.3..0.3_f64) {
        let m = ManifoldChart::euclidean(2);
        let q = Matrix::from_row_slice(2, 2, &[q11, q12, q12, q22]);
        let dom = DomainSpec::new(&m, Chi::Quadratic { q }, 1.0, Vector::zeros(2), 3.0).unwrap();
        let u = point(1.0, a, t);
        let y = dom.normalize_inverse(&u).unwrap();
        prop_assert!((dom.normalize(&y).unwrap() - &u).norm() <= 1e-10);
        prop_assert_eq!(dom.contains(&y), u.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn boundary_maps_to_the_unit_sphere(t in unit(), level in 0.1..2.0_f64) {
        let m = ManifoldChart::euclidean(2);
        let dom = DomainSpec::new(&m, Chi::squared_norm(2), level, Vector::zeros(2), 3.0).unwrap();
        let th = std::f64::consts::TAU * t;
        let y = Vector::from_column_slice(&[th.cos(), th.sin()]) * level.sqrt();
        prop_assert!((dom.normalize(&y).unwrap().norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn projection_lands_in_the_domain(a in 0.0..4.0_f64, t in unit()) {
        let m = ManifoldChart::sphere(2, 1.0, 1.2).unwrap();
        let dom = DomainSpec::new(&m, Chi::squared_norm(2), 0.36, Vector::zeros(2), 1.0).unwrap();
        let y = point(1.0, a / 4.0, t) * 0.99;
        let p = dom.project(&y).unwrap();
        prop_assert!(dom.chi(&p) <= dom.level() * (1.0 + 1e-9));
        if dom.contains(&y) {
            prop_assert_eq!(p, y);
        }
    }

    #[test]
    fn squared_distance_psi_is_half_the_square(a in unit(), b in unit(), c in unit(), d in unit()) {
        for (m, r) in charts() {
            let (x, y) = (point(r, a, b), point(r, c, d));
            let psi = PsiFunction::SquaredDistance.value(&m, &x, &y).unwrap();
            let dist = m.distance(&x, &y).unwrap();
            prop_assert!(psi >= 0.0);
            prop_assert!((psi - 0.5 * dist * dist).abs() <= 1e-12 * (1.0 + psi));
            prop_assert_eq!(PsiFunction::SquaredDistance.value(&m, &x, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn cutoffs_are_monotone_and_bounded(s in -1.0..2.0_f64, ds in 0.0..0.5_f64, k in 1u32..16) {
        let (a, b) = (smooth_step(s), smooth_step(s + ds));
        prop_assert!((0.0..=1.0).contains(&a) && a <= b);
        let u = k as f64 + 1.0 + 2.0 * s;
        prop_assert!(phi_k(k, u) >= phi_k(k, u + ds));
        prop_assert_eq!(phi_k(k, k as f64 * s.abs().min(1.0)), 1.0);
        prop_assert_eq!(phi_k(k, k as f64 + 1.0 + ds), 0.0);
    }
}
