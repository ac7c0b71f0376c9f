use num_complex::Complex64;
use std::f64::consts::PI;
use wavekit::analysis::{
    block_eigenvalues, condition_number_study, convergence_order, div_pseudoinverse_bound, log_log_slope, oracle_q,
    q_factor, run_q_study, sample_grid, second_derivative_symbol, smoothness_bound, standing_wave_frequency,
    ConvergenceFit, Integrator, LatticeTriple, Perturbation, QCase, QStudy, SampledField, SmoothnessInput,
};
use wavekit::incidence::{graph_incidence, lattice_incidence, solve_circulant_ansatz, AnsatzForm};
use wavekit::laplacian::{assemble_1d, graph_laplacian, laplacian_coefficients, DirichletRule, Ends};
use wavekit::lattice::{build_grid, Face, GridSpec};
use wavekit::linalg::symmetric_eigenvalues;
use wavekit::Error;

#[test]
fn triple_nests_vertices() {
    let t = LatticeTriple::new(5).unwrap();
    assert_eq!(t.levels(), [5, 11, 23]);
    let (mid, fine) = t.inclusion();
    for j in 0..5 {
        // Positions j+1 over 6, 2(j+1) over 12 and 4(j+1) over 24 coincide.
        let x = (j + 1) as f64 / 6.0;
        assert!((x - (mid[j] + 1) as f64 / 12.0).abs() < 1e-15);
        assert!((x - (fine[j] + 1) as f64 / 24.0).abs() < 1e-15);
    }
    assert!(LatticeTriple::new(1).is_err());
}

fn field(n: usize, f: impl Fn(f64) -> f64) -> Vec<Complex64> {
    (1..=n).map(|j| Complex64::from(f(j as f64 / (n + 1) as f64))).collect()
}

#[test]
fn q_factor_of_synthetic_errors() {
    // Errors c·h^k on each level give Q = 2^k exactly.
    let triple = LatticeTriple::new(7).unwrap();
    let times = vec![0.0, 0.25, 0.5, 0.75];
    for k in [1, 2, 4] {
        let level = |n: usize| {
            let h = 1.0 / (n + 1) as f64;
            SampledField {
                times: times.clone(),
                values: times.iter().map(|t| field(n, |x| (PI * x).sin() * (1.0 + t) + h.powi(k) * x)).collect(),
            }
        };
        let r = q_factor(&level(triple.fine), &level(triple.mid), &level(triple.coarse), triple, (0.0, 0.5)).unwrap();
        assert!((r.mean_q - 2f64.powi(k)).abs() < 1e-9, "k = {k}: {}", r.mean_q);
        assert_eq!(r.q.len(), 4);
        assert_eq!(r.flagged, 0);
    }
}

#[test]
fn q_factor_flags_exact_agreement() {
    let triple = LatticeTriple::new(3).unwrap();
    let times = vec![0.0, 1.0];
    let same = |n: usize| SampledField {
        times: times.clone(),
        values: vec![field(n, |x| x), field(n, |x| x + if n == 7 { 1e-3 } else { 0.0 })],
    };
    let r = q_factor(&same(triple.fine), &same(triple.mid), &same(triple.coarse), triple, (0.0, 1.0)).unwrap();
    assert_eq!(r.q[0], None);
    assert_eq!(r.flagged, 1);
    assert!(r.q[1].is_some());
    let uniform = |n: usize| SampledField { times: vec![0.0], values: vec![field(n, |x| x)] };
    let err = q_factor(&uniform(triple.fine), &uniform(triple.mid), &uniform(triple.coarse), triple, (0.0, 1.0));
    assert!(matches!(err, Err(Error::Numerical(_))));
    let wrong = SampledField { times: vec![0.0], values: vec![field(4, |x| x)] };
    assert!(q_factor(&uniform(triple.fine), &uniform(triple.mid), &wrong, triple, (0.0, 1.0)).is_err());
}

#[test]
fn standing_frequencies_match_the_symbol() {
    for n in [7, 31, 63] {
        for order in [1, 2] {
            let coefs = laplacian_coefficients(order).unwrap();
            let a = 1.0 / (n + 1) as f64;
            let omega = second_derivative_symbol(&coefs, PI, a).sqrt();
            assert!((standing_wave_frequency(n, order).unwrap() - omega).abs() < 1e-10);
        }
    }
    assert!((standing_wave_frequency(63, 1).unwrap() - 128.0 * (PI / 128.0).sin()).abs() < 1e-12);
    assert!(matches!(standing_wave_frequency(10, 3), Err(Error::Unsupported(_))));
}

#[test]
fn oracle_q_converges() {
    let times = sample_grid(1e-3, 0.5).unwrap();
    for (order, target) in [(1, 4.0), (2, 16.0)] {
        let qs: Vec<f64> = [15, 31, 63].iter().map(|&n| oracle_q(n, order, &times).unwrap().mean_q).collect();
        assert!((qs[2] - target).abs() <= 0.5, "order {order}: {qs:?}");
        assert!((qs[2] - target).abs() <= (qs[0] - target).abs() + 1e-9);
    }
}

#[test]
fn sample_grid_includes_both_ends() {
    let g = sample_grid(1e-4, 0.5).unwrap();
    assert_eq!(g.len(), 5001);
    assert!((g[5000] - 0.5).abs() < 1e-12);
    assert!(sample_grid(0.0, 1.0).is_err());
}

#[test]
fn fits_and_floors() {
    let x = [0.1, 0.05, 0.025];
    let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h.powi(3)).collect();
    assert!((log_log_slope(&x, &y).unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(convergence_order(&x, &[1e-16, 1e-16, 1e-16]).unwrap(), ConvergenceFit::BelowFloor);
    match convergence_order(&x, &[1.0, 2.0, 3.0]).unwrap() {
        ConvergenceFit::Order { monotone, .. } => assert!(!monotone),
        other => panic!("{other:?}"),
    }
    assert!(log_log_slope(&[1.0], &[1.0]).is_err());
    assert!(matches!(log_log_slope(&[1.0, 2.0], &[0.0, 1.0]), Err(Error::Domain(_))));
}

#[test]
fn reference_study_small_run() {
    let study = QStudy { n: 12, dt: 1e-2, integrator: Integrator::Exact, ..QStudy::reference(QCase::Standing, 1) };
    let rk = QStudy { integrator: Integrator::Rk { rtol: 1e-12, atol: 1e-12 }, ..study.clone() };
    let (e, r) = (run_q_study(&study).unwrap(), run_q_study(&rk).unwrap());
    assert!((e.mean_q - r.mean_q).abs() < 1e-6);
    assert_eq!(e.triple.levels(), [12, 25, 51]);
    assert!((e.mean_q - 4.0).abs() < 0.5);
    assert!(run_q_study(&QStudy { length: 0.0, ..study }).is_err());
}

fn dirichlet_line(n: usize) -> (wavekit::lattice::LatticeGraph, f64) {
    let a = 1.0 / (n + 1) as f64;
    let spec = GridSpec::uniform(vec![n], a, Face::Dirichlet).unwrap().with_origin(vec![a]).unwrap();
    (build_grid(&spec).unwrap(), a)
}

#[test]
fn divergence_inverse_bound_on_lines() {
    for n in [31, 63, 127] {
        let (g, _) = dirichlet_line(n);
        let r = div_pseudoinverse_bound(1.0, &graph_incidence(&g)).unwrap();
        assert!(r.full_rank);
        assert!(r.ratio <= 1.1 && r.ratio >= 1.0, "n = {n}: {}", r.ratio);
    }
    let g = build_grid(&GridSpec::uniform(vec![64], 1.0 / 64.0, Face::Neumann).unwrap()).unwrap();
    let r = div_pseudoinverse_bound(1.0, &graph_incidence(&g)).unwrap();
    assert_eq!(r.rank, 63);
    assert!(r.ratio <= 1.1);
    assert!(div_pseudoinverse_bound(-1.0, &graph_incidence(&g)).is_err());
}

#[test]
fn sparse_path_agrees_with_dense() {
    // 80×60 Dirichlet grid: 4800 vertices is above the dense limit.
    let a = 0.01;
    let g = build_grid(&GridSpec::uniform(vec![80, 60], a, Face::Dirichlet).unwrap()).unwrap();
    let r = div_pseudoinverse_bound(1.0, &graph_incidence(&g)).unwrap();
    let lam = |m: usize, n: usize| 4.0 * (PI / (2.0 * (n + 1) as f64)).sin().powi(2) * m as f64;
    let expected = lam(1, 80) + lam(1, 60);
    assert!((r.sigma_min.powi(2) - expected).abs() < 1e-8 * expected, "{} vs {expected}", r.sigma_min.powi(2));
    let hi = 4.0 * (80.0 * PI / 162.0).sin().powi(2) + 4.0 * (60.0 * PI / 122.0).sin().powi(2);
    assert!((r.sigma_max.powi(2) - hi).abs() < 1e-6 * hi, "{} vs {hi}", r.sigma_max.powi(2));
}

#[test]
fn laplacian_smoothness_bound_holds() {
    for n in [15, 31] {
        let (g, a) = dirichlet_line(n);
        let b = graph_incidence(&g);
        let l = graph_laplacian(&g);
        let x: Vec<f64> = (0..n).map(|v| g.position(v)[0]).collect();
        let phi0: Vec<f64> = x.iter().map(|x| (PI * x).sin() + 0.3 * (2.0 * PI * x).sin()).collect();
        let phidot0: Vec<f64> = x.iter().map(|x| (3.0 * PI * x).sin()).collect();
        for (eps, t) in [(a / 20f64.sqrt(), 0.5), (0.1 * a, 1.0), (0.0, 0.5)] {
            let r = smoothness_bound(&SmoothnessInput {
                b: &b,
                l: &l,
                phi0: &phi0,
                phidot0: &phidot0,
                perturbation: Perturbation::LaplacianSquared,
                eps,
                t,
                diameter: 1.0,
                dimension: 1,
            })
            .unwrap();
            assert!(r.holds, "n = {n}, eps = {eps}: {} > {}", r.measured, r.bound);
            assert!(r.continuum_bound.is_some());
        }
    }
}

#[test]
fn axis_derivative_bound_holds() {
    let n = 32;
    let a = 1.0 / n as f64;
    let g = build_grid(&GridSpec::uniform(vec![n], a, Face::Periodic).unwrap()).unwrap();
    let coefs = laplacian_coefficients(2).unwrap();
    let sol = solve_circulant_ansatz(&coefs, AnsatzForm::ShiftDifference).unwrap();
    let b = lattice_incidence(&sol, &g, DirichletRule::PrincipalSubmatrix).unwrap();
    let l = assemble_1d(&coefs, n, Ends::Periodic, a).unwrap();
    let phi0: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 * a).sin()).collect();
    let phidot0: Vec<f64> = (0..n).map(|j| (4.0 * PI * j as f64 * a).cos()).collect();
    let r = smoothness_bound(&SmoothnessInput {
        b: &b,
        l: &l,
        phi0: &phi0,
        phidot0: &phidot0,
        perturbation: Perturbation::AxisDerivative { k: 3 },
        eps: (4.0f64 / 45.0).sqrt() * a * a,
        t: 0.5,
        diameter: 1.0,
        dimension: 1,
    })
    .unwrap();
    assert!(r.holds, "{} > {}", r.measured, r.bound);
    assert!(r.measured > 0.0);
}

#[test]
fn negative_eps_is_a_domain_error() {
    let (g, _) = dirichlet_line(5);
    let b = graph_incidence(&g);
    let l = graph_laplacian(&g);
    let z = vec![0.0; 5];
    let err = smoothness_bound(&SmoothnessInput {
        b: &b,
        l: &l,
        phi0: &z,
        phidot0: &z,
        perturbation: Perturbation::LaplacianSquared,
        eps: -1.0,
        t: 1.0,
        diameter: 1.0,
        dimension: 1,
    });
    assert!(matches!(err, Err(Error::Domain(_))));
}

#[test]
fn block_eigenvalue_limits() {
    let zero = block_eigenvalues(0.0);
    assert!((zero.q_plus.0 - 1.0).abs() < 1e-15 && zero.q_plus.1.abs() < 1e-15);
    assert!(zero.q_minus.0.abs() < 1e-15 && zero.q_minus.1.abs() < 1e-15);
    for lambda in [1e-6, 1e-4, 1e-2] {
        let e = block_eigenvalues(lambda);
        let mag = (e.q_minus.0.powi(2) + e.q_minus.1.powi(2)).sqrt();
        assert!((mag / (2.0 * lambda.sqrt()) - 1.0).abs() < 10.0 * lambda.sqrt(), "λ = {lambda}");
        // Product and sum of the roots.
        let (p, m) = (Complex64::new(e.q_plus.0, e.q_plus.1), Complex64::new(e.q_minus.0, e.q_minus.1));
        let s = Complex64::new(0.0, lambda.sqrt());
        assert!((p + m - (1.0 - s)).norm() < 1e-12);
        assert!((p * m + 2.0 * s).norm() < 1e-12);
    }
}

#[test]
fn condition_numbers_scale_with_resolution() {
    let mut spacings = Vec::new();
    let mut kv = Vec::new();
    for n in [16, 32, 64] {
        let (g, a) = dirichlet_line(n);
        let l = graph_laplacian(&g);
        let b = graph_incidence(&g);
        let r = condition_number_study(&l, Some(&b)).unwrap();
        let kb = r.kappa_b.unwrap();
        assert!((kb * kb / r.kappa_l - 1.0).abs() < 1e-8);
        let ev = symmetric_eigenvalues(&l.dense());
        assert!((r.kappa_l - ev[n - 1] / ev[0]).abs() < 1e-9 * r.kappa_l);
        spacings.push(a);
        kv.push(r.kappa_v);
    }
    let slope = -log_log_slope(&spacings, &kv).unwrap();
    assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
    let g = build_grid(&GridSpec::uniform(vec![6], 1.0, Face::Neumann).unwrap()).unwrap();
    assert!(condition_number_study(&graph_laplacian(&g), None).unwrap_err().is_configuration());
}
