use alloc::vec;

use super::*;
use crate::domain::Chi;
use crate::drift::builtin::zero;

fn v(a: &[f64]) -> Vector {
    Vector::from_column_slice(a)
}

fn disc(m: &ManifoldChart, radius: f64, inner: f64) -> DomainSpec {
    DomainSpec::new(
        m,
        Chi::squared_norm(2),
        radius * radius,
        Vector::zeros(2),
        inner,
    )
    .unwrap()
}

fn cap() -> (ManifoldChart, DomainSpec) {
    let m = ManifoldChart::sphere(2, 1.0, 1.2).unwrap();
    let d = disc(&m, 0.6, 1.0);
    (m, d)
}

fn tanh_map() -> TerminalMap {
    TerminalMap::new("tanh", |b: &Vector| b.map(|v| 0.3 * v.tanh()))
}

#[test]
fn degenerate_forward_paths() {
    let y = v(&[0.5, -1.0]);
    let cfg = SdeConfig::brownian(y.clone(), 1.0, 10, 5, 1)
        .with_sigma(2, |_: &Vector| Matrix::zeros(2, 2));
    let fwd = simulate_forward(&cfg).unwrap();
    for p in 0..5 {
        for i in 0..=10 {
            assert_eq!(fwd.b(p, i), y);
        }
    }
    let mu = v(&[0.3, -0.7]);
    let mu2 = mu.clone();
    let cfg = cfg.with_drift(move |_: &Vector| mu2.clone());
    let fwd = simulate_forward(&cfg).unwrap();
    let want = &y + &mu * 1.0;
    assert!((fwd.b(3, 10) - want).norm() < 1e-12);
}

#[test]
fn brownian_terminal_mean() {
    let y = v(&[1.0, -2.0]);
    let (t, paths) = (2.0, 20_000);
    let fwd = simulate_forward(&SdeConfig::brownian(y.clone(), t, 20, paths, 7)).unwrap();
    let mut mean = Vector::zeros(2);
    for p in 0..paths {
        mean += fwd.b(p, 20);
    }
    mean /= paths as f64;
    let bound = 3.0 * (t / paths as f64).sqrt();
    for c in 0..2 {
        assert!((mean[c] - y[c]).abs() <= bound, "{mean}");
    }
    assert!((fwd.dt() - 0.1).abs() < 1e-15);
}

#[test]
fn forward_rejects_bad_config_and_blowup() {
    assert!(simulate_forward(&SdeConfig::brownian(v(&[0.0]), 0.0, 10, 1, 0)).is_err());
    let cfg = SdeConfig::brownian(v(&[1.0]), 1.0, 10, 1, 0).with_drift(|b: &Vector| b * 1e300);
    assert!(matches!(
        simulate_forward(&cfg),
        Err(Error::Simulation { .. })
    ));
}

#[test]
fn euclidean_linear_oracle() {
    let m = ManifoldChart::euclidean(2);
    let domain = disc(&m, 12.0, 15.0);
    let gamma = v(&[0.4, -0.25]);
    let g2 = gamma.clone();
    let f = DriftSpec::new("const", false, move |_: &Vector, _: &Vector, _: &Matrix| {
        g2.clone()
    });
    let u = TerminalMap::new("identity", |b: &Vector| b.clone());
    let fwd = simulate_forward(&SdeConfig::brownian(Vector::zeros(2), 1.0, 20, 20_000, 3)).unwrap();
    let sol = solve_bsde(&m, &domain, &f, &u, &fwd, &SolverConfig::default()).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.terminal_error, 0.0);
    let mut se = 0.0;
    let mut ze = 0.0;
    let mut count = 0.0;
    for p in 0..fwd.n_paths {
        for i in 0..fwd.n_steps {
            let want = fwd.b(p, i) - &gamma * (1.0 - fwd.times[i]);
            se += (sol.x(p, i) - want).norm_squared();
            ze += (sol.z(p, i) - Matrix::identity(2, 2)).norm_squared();
            count += 1.0;
        }
    }
    let rms = (se / count).sqrt();
    let zrms = (ze / count).sqrt();
    assert!(rms <= 0.02, "{rms}");
    assert!(zrms <= 0.02, "{zrms}");
}

#[test]
fn constant_terminal_gives_constant_solution() {
    let (m, domain) = cap();
    let u0 = v(&[0.2, -0.1]);
    let fwd = simulate_forward(&SdeConfig::brownian(Vector::zeros(2), 1.0, 10, 500, 2)).unwrap();
    let sol = solve_bsde(
        &m,
        &domain,
        &zero(),
        &TerminalMap::constant(u0.clone()),
        &fwd,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(sol.converged);
    for p in 0..fwd.n_paths {
        for i in 0..fwd.n_steps {
            assert!((sol.x(p, i) - &u0).norm() < 1e-10);
            assert!(sol.z(p, i).norm() < 1e-10);
        }
    }
}

#[test]
fn sphere_cap_picard_converges() {
    let (m, domain) = cap();
    let fwd = simulate_forward(&SdeConfig::brownian(Vector::zeros(2), 1.0, 50, 10_000, 5)).unwrap();
    let sol = solve_bsde(
        &m,
        &domain,
        &zero(),
        &tanh_map(),
        &fwd,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(sol.converged, "{:?}", sol.picard_residuals);
    assert!(sol.iterations() <= 20);
    assert!(
        sol.picard_residuals.windows(2).all(|w| w[1] < w[0]),
        "{:?}",
        sol.picard_residuals
    );
    assert!(*sol.picard_residuals.last().unwrap() <= 1e-4);
    for p in 0..fwd.n_paths {
        for i in 0..=fwd.n_steps {
            assert!(domain.chi(&sol.x(p, i)) <= domain.level() + DOMAIN_SLACK);
        }
    }
}

#[test]
fn picard_start_does_not_matter() {
    let (m, domain) = cap();
    let fwd = simulate_forward(&SdeConfig::brownian(Vector::zeros(2), 1.0, 20, 4000, 6)).unwrap();
    let f = crate::drift::builtin::swirl(0.5, 0.2, 0.1, 1.0);
    let mut cfg = SolverConfig::default();
    let a = solve_bsde(&m, &domain, &f, &tanh_map(), &fwd, &cfg).unwrap();
    cfg.init = PicardInit::Terminal;
    let b = solve_bsde(&m, &domain, &f, &tanh_map(), &fwd, &cfg).unwrap();
    assert!(a.converged && b.converged);
    let mut acc = 0.0;
    for p in 0..fwd.n_paths {
        for i in 0..=fwd.n_steps {
            let d = m.distance(&a.x(p, i), &b.x(p, i)).unwrap();
            acc += d * d;
        }
    }
    let mean = acc / (fwd.n_paths * (fwd.n_steps + 1)) as f64;
    assert!(mean <= 4.0 * cfg.tol * cfg.tol, "{mean}");
}

#[test]
fn solutions_are_deterministic() {
    let (m, domain) = cap();
    let cfg = SdeConfig::brownian(Vector::zeros(2), 1.0, 10, 700, 9);
    let run = || {
        let fwd = simulate_forward(&cfg).unwrap();
        solve_bsde(
            &m,
            &domain,
            &zero(),
            &tanh_map(),
            &fwd,
            &SolverConfig::default(),
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn stopping_examples() {
    let (m, domain) = cap();
    let fwd = simulate_forward(&SdeConfig::brownian(Vector::zeros(2), 1.0, 10, 600, 4)).unwrap();
    let cfg = SolverConfig::default();
    let u = tanh_map();
    let full = solve_bsde(&m, &domain, &zero(), &u, &fwd, &cfg).unwrap();
    let same =
        solve_bsde_bounded_stopping(&m, &domain, &zero(), &u, &fwd, &cfg, &vec![10; 600]).unwrap();
    assert_eq!(full, same);

    let now =
        solve_bsde_bounded_stopping(&m, &domain, &zero(), &u, &fwd, &cfg, &vec![0; 600]).unwrap();
    for p in 0..600 {
        for i in 0..10 {
            assert_eq!(now.x(p, i), u.eval(&fwd.b(p, 0)));
            assert_eq!(now.z(p, i), Matrix::zeros(2, 2));
        }
    }

    let tau = first_exit_box(&fwd, 0.5);
    assert!(tau.iter().any(|t| *t < 10) && tau.iter().any(|t| *t == 10));
    let u0 = v(&[0.1, 0.3]);
    let sol = solve_bsde_bounded_stopping(
        &m,
        &domain,
        &zero(),
        &TerminalMap::constant(u0.clone()),
        &fwd,
        &cfg,
        &tau,
    )
    .unwrap();
    for p in 0..600 {
        for i in 0..=10 {
            assert!((sol.x(p, i) - &u0).norm() < 1e-10);
        }
    }
    assert!(
        solve_bsde_bounded_stopping(&m, &domain, &zero(), &u, &fwd, &cfg, &vec![11; 600]).is_err()
    );
    assert!(solve_bsde_bounded_stopping(&m, &domain, &zero(), &u, &fwd, &cfg, &[0]).is_err());
}

#[test]
fn terminal_outside_domain_is_rejected() {
    let (m, domain) = cap();
    let fwd = simulate_forward(&SdeConfig::brownian(Vector::zeros(2), 1.0, 4, 10, 4)).unwrap();
    let u = TerminalMap::constant(v(&[0.7, 0.0]));
    assert!(solve_bsde(&m, &domain, &zero(), &u, &fwd, &SolverConfig::default()).is_err());
    assert!(u.check_range(&domain, &[Vector::zeros(2)]).is_err());
    let probes: Vec<Vector> = (0..50).map(|i| v(&[i as f64 - 25.0, 3.0])).collect();
    assert!(tanh_map().check_range(&domain, &probes).unwrap() <= 0.0);
}

#[test]
fn projection_retracts_radially() {
    let m = ManifoldChart::euclidean(2);
    let domain = disc(&m, 1.0, 2.0);
    let inside = v(&[0.3, 0.4]);
    assert_eq!(domain.project(&inside).unwrap(), inside);
    let out = domain.project(&v(&[0.72, 0.96])).unwrap();
    assert!((domain.normalize(&out).unwrap().norm() - 1.0).abs() < 1e-12);
    assert!((&out - v(&[0.6, 0.8])).norm() < 1e-12);
    assert_eq!(domain.project(&out).unwrap(), out);
}

#[test]
fn basis_exponents() {
    let e = regression::exponents(2, 2);
    assert_eq!(e.len(), 6);
    assert_eq!(e[0], vec![0, 0]);
    assert_eq!(regression::exponents(3, 0).len(), 1);
}
