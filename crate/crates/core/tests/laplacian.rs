use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use wavekit::analysis::{convergence_order, ConvergenceFit};
use wavekit::laplacian::{
    assemble_1d, assemble_1d_with, assemble_multid, derivative_coefficients, graph_laplacian, klein_gordon_laplacian,
    lagrange_weights, laplacian_coefficients, neumann_fold_matrix, stencil_laplacian_2d, sums_to_zero_exactly, BcTag,
    DirichletRule, Ends,
};
use wavekit::lattice::{build_grid, Face, GridSpec};
use wavekit::linalg::symmetric_eigenvalues;
use wavekit::Error;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[test]
fn second_derivative_tables() {
    let cases: [(usize, Vec<(i64, i64)>); 3] = [
        (1, vec![(-2, 1), (1, 1)]),
        (2, vec![(-5, 2), (4, 3), (-1, 12)]),
        (5, vec![(-5269, 1800), (5, 3), (-5, 21), (5, 126), (-5, 1008), (1, 3150)]),
    ];
    for (n, expected) in cases {
        let c = laplacian_coefficients(n).unwrap();
        assert_eq!(c.radius(), n);
        assert_eq!(c.accuracy(), 2 * n);
        for (j, &(num, den)) in expected.iter().enumerate() {
            assert_eq!(c.exact(j as i64).unwrap(), &q(num, den), "N={n}, j={j}");
            assert_eq!(c.exact(-(j as i64)).unwrap(), &q(num, den));
        }
        assert!(c.is_symmetric());
        assert!(sums_to_zero_exactly(&c));
    }
}

#[test]
fn closed_form_agrees_with_interpolation_weights() {
    for n in 1..=5 {
        let closed = laplacian_coefficients(n).unwrap();
        let lagrange = lagrange_weights(n, 2);
        for (k, w) in lagrange.iter().enumerate() {
            assert_eq!(closed.exact(k as i64 - n as i64).unwrap(), w);
        }
    }
}

#[test]
fn first_derivative_tables() {
    let c1 = derivative_coefficients(1).unwrap();
    assert_eq!(c1.exact(-1).unwrap(), &q(-1, 2));
    assert_eq!(c1.exact(0).unwrap(), &q(0, 1));
    assert_eq!(c1.exact(1).unwrap(), &q(1, 2));
    let c2 = derivative_coefficients(2).unwrap();
    let expected = [q(1, 12), q(-2, 3), q(0, 1), q(2, 3), q(-1, 12)];
    for (j, e) in (-2..=2).zip(expected.iter()) {
        assert_eq!(c2.exact(j).unwrap(), e);
    }
    for n in 1..=5 {
        let c = derivative_coefficients(n).unwrap();
        assert_eq!(c.get(0), 0.0);
        assert!(sums_to_zero_exactly(&c));
        for j in 1..=n as i64 {
            assert_eq!(c.exact(j).unwrap(), &-c.exact(-j).unwrap().clone());
        }
    }
}

#[test]
fn table_prints_twelve_significant_digits() {
    let rows = laplacian_coefficients(2).unwrap().table();
    assert_eq!(rows.len(), 5);
    let (j, exact, decimal) = &rows[2];
    assert_eq!(*j, 0);
    assert_eq!(exact, "-5/2");
    assert_eq!(decimal, "-2.50000000000e0");
}

#[test]
fn dirichlet_radius_two_is_the_principal_submatrix() {
    let l = assemble_1d(&laplacian_coefficients(2).unwrap(), 5, Ends::DIRICHLET, 1.0).unwrap().dense();
    let (d, o1, o2) = (2.5, -4.0 / 3.0, 1.0 / 12.0);
    let expected = DMatrix::from_row_slice(
        5,
        5,
        &[
            d, o1, o2, 0., 0., //
            o1, d, o1, o2, 0., //
            o2, o1, d, o1, o2, //
            0., o2, o1, d, o1, //
            0., 0., o2, o1, d,
        ],
    );
    assert!((l - expected).amax() < 1e-15);
}

#[test]
fn periodic_radius_two_circulant_row() {
    let l = assemble_1d(&laplacian_coefficients(2).unwrap(), 5, Ends::Periodic, 1.0).unwrap().dense();
    let row = [2.5, -4.0 / 3.0, 1.0 / 12.0, 1.0 / 12.0, -4.0 / 3.0];
    for i in 0..5 {
        for j in 0..5 {
            assert!((l[(i, j)] - row[(j + 5 - i) % 5]).abs() < 1e-15);
        }
    }
}

#[test]
fn boundary_tags_and_errors() {
    let c1 = laplacian_coefficients(1).unwrap();
    let c2 = laplacian_coefficients(2).unwrap();
    assert_eq!(assemble_1d(&c1, 6, Ends::NEUMANN, 1.0).unwrap().bc(), BcTag::Neumann);
    assert_eq!(assemble_1d(&c1, 6, Ends::Periodic, 1.0).unwrap().bc(), BcTag::Periodic);
    assert!(matches!(assemble_1d(&c2, 6, Ends::NEUMANN, 1.0), Err(Error::Unsupported(_))));
    assert!(assemble_1d(&c2, 4, Ends::Periodic, 1.0).unwrap_err().is_configuration());
    assert!(assemble_1d(&c2, 5, Ends::Periodic, 1.0).is_ok());
}

#[test]
fn neumann_radius_one_matches_graph_laplacian() {
    let l = assemble_1d(&laplacian_coefficients(1).unwrap(), 4, Ends::NEUMANN, 1.0).unwrap().dense();
    let g = build_grid(&GridSpec::uniform(vec![4], 1.0, Face::Neumann).unwrap()).unwrap();
    assert_eq!(l, graph_laplacian(&g).dense());
}

#[test]
fn higher_order_neumann_fold_is_not_symmetric() {
    let m = neumann_fold_matrix(&laplacian_coefficients(2).unwrap(), 6).unwrap();
    assert!((&m - m.transpose()).amax() > 1e-3);
    let ones = DVector::from_element(6, 1.0);
    assert!((&m * ones).amax() < 1e-14);
}

#[test]
fn odd_reflection_keeps_sine_modes_exact() {
    let n = 12;
    let c = laplacian_coefficients(3).unwrap();
    let l = assemble_1d_with(&c, n, Ends::DIRICHLET, 1.0, DirichletRule::OddReflection).unwrap();
    assert!(l.asymmetry() < 1e-14);
    let ld = l.dense();
    for p in 1..=n {
        let th = PI * p as f64 / (n + 1) as f64;
        let v = DVector::from_fn(n, |j, _| (th * (j + 1) as f64).sin());
        let symbol: f64 = -(-3..=3).map(|j| c.get(j) * (j as f64 * th).cos()).sum::<f64>();
        assert!((&ld * &v - &v * symbol).amax() < 1e-12, "mode {p}");
    }
}

#[test]
fn multid_neumann_equals_graph_laplacian() {
    let g = build_grid(&GridSpec::uniform(vec![4, 5], 1.0, Face::Neumann).unwrap()).unwrap();
    let l = assemble_multid(&laplacian_coefficients(1).unwrap(), &g).unwrap();
    assert_eq!(l.dense(), graph_laplacian(&g).dense());
}

#[test]
fn multid_on_a_line_equals_1d() {
    let c = laplacian_coefficients(3).unwrap();
    let g = build_grid(&GridSpec::uniform(vec![9], 0.5, Face::Dirichlet).unwrap()).unwrap();
    let m = assemble_multid(&c, &g).unwrap().dense();
    let o = assemble_1d(&c, 9, Ends::DIRICHLET, 0.5).unwrap().dense();
    assert_eq!(m, o);
}

#[test]
fn multid_is_a_kronecker_sum() {
    let c = laplacian_coefficients(2).unwrap();
    let (n0, n1) = (5, 6);
    let g = build_grid(&GridSpec::new(vec![n0, n1], 1.0, vec![[Face::Dirichlet; 2], [Face::Periodic; 2]]).unwrap())
        .unwrap();
    let m = assemble_multid(&c, &g).unwrap().dense();
    let l0 = assemble_1d(&c, n0, Ends::DIRICHLET, 1.0).unwrap().dense();
    let l1 = assemble_1d(&c, n1, Ends::Periodic, 1.0).unwrap().dense();
    let expected = l0.kronecker(&DMatrix::identity(n1, n1)) + DMatrix::identity(n0, n0).kronecker(&l1);
    assert!((m - expected).amax() < 1e-14);
}

#[test]
fn torus_spectrum_matches_closed_form() {
    let (n, m) = (5, 4);
    let g = build_grid(&GridSpec::uniform(vec![n, m], 1.0, Face::Periodic).unwrap()).unwrap();
    let l = assemble_multid(&laplacian_coefficients(1).unwrap(), &g).unwrap().dense();
    let mut expected: Vec<f64> = (0..n)
        .flat_map(|p| {
            (0..m).map(move |q| {
                4.0 - 2.0 * (2.0 * PI * p as f64 / n as f64).cos() - 2.0 * (2.0 * PI * q as f64 / m as f64).cos()
            })
        })
        .collect();
    expected.sort_by(f64::total_cmp);
    let got = symmetric_eigenvalues(&l);
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn kernel_and_definiteness_per_boundary() {
    let c = laplacian_coefficients(2).unwrap();
    let d = symmetric_eigenvalues(&assemble_1d(&c, 10, Ends::DIRICHLET, 1.0).unwrap().dense());
    assert!(d[0] > 1e-6);
    let p = symmetric_eigenvalues(&assemble_1d(&c, 10, Ends::Periodic, 1.0).unwrap().dense());
    assert!(p[0].abs() < 1e-12 && p[1] > 1e-6);
    let nm = symmetric_eigenvalues(
        &assemble_1d(&laplacian_coefficients(1).unwrap(), 10, Ends::NEUMANN, 1.0).unwrap().dense(),
    );
    assert!(nm[0].abs() < 1e-12 && nm[1] > 1e-6);
}

#[test]
fn truncation_order_is_two_n() {
    // Periodic sweep on sin(2πx): (1/a²)Lφ + φ'' at spacing a.
    for n in 1..=3usize {
        let c = laplacian_coefficients(n).unwrap();
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for m in [16usize, 32, 64] {
            let a = 1.0 / m as f64;
            let l = assemble_1d(&c, m, Ends::Periodic, a).unwrap().dense();
            let phi = DVector::from_fn(m, |j, _| (2.0 * PI * j as f64 * a).sin());
            let second = &phi * (-(2.0 * PI).powi(2));
            let resid = (&l * &phi) / (a * a) + second;
            hs.push(a);
            errs.push(resid.amax());
        }
        match convergence_order(&hs, &errs).unwrap() {
            ConvergenceFit::Order { order, monotone } => {
                assert!(monotone);
                assert!((order - 2.0 * n as f64).abs() < 0.3, "N={n}: order {order}");
            }
            ConvergenceFit::BelowFloor => panic!("unexpected floor"),
        }
    }
}

#[test]
fn graph_laplacian_of_a_single_loop() {
    let spec = GridSpec::new(vec![2], 1.0, vec![[Face::Dirichlet, Face::Neumann]]).unwrap();
    let g = build_grid(&spec).unwrap();
    let l = graph_laplacian(&g).dense();
    assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
}

#[test]
fn stencil_2d_entries_and_plane_waves() {
    let n = 8;
    let l = stencil_laplacian_2d(n, n, 1.0).unwrap();
    let d = l.dense();
    assert!((d[(0, 0)] - 6.0).abs() < 1e-14);
    assert!((d[(0, 1)] + 26.0 / 15.0).abs() < 1e-14);
    assert!((d[(0, n + 1)] - 0.1).abs() < 1e-14);
    assert!((d[(0, 2)] - 2.0 / 15.0).abs() < 1e-14);
    let ones = DVector::from_element(n * n, 1.0);
    assert!((&d * ones).amax() < 1e-13);
    for (p, qq) in [(1usize, 2usize), (3, 0), (2, 2)] {
        let (kp, kq) = (2.0 * PI * p as f64 / n as f64, 2.0 * PI * qq as f64 / n as f64);
        let wave = DVector::from_fn(n * n, |i, _| (kp * (i / n) as f64 + kq * (i % n) as f64).cos());
        let symbol = 6.0 - (26.0 / 15.0) * 2.0 * (kp.cos() + kq.cos())
            + 0.1 * 4.0 * kp.cos() * kq.cos()
            + (2.0 / 15.0) * 2.0 * ((2.0 * kp).cos() + (2.0 * kq).cos());
        assert!((&d * &wave - &wave * symbol).amax() < 1e-12);
    }
    assert!(stencil_laplacian_2d(4, 8, 1.0).is_err());
}

#[test]
fn stencil_2d_taylor_residual_on_quartic() {
    // φ = x⁴: ∇²φ = 12x², (∇²)²φ = 24, so at the origin the stencil gives −(a²/20)·24 exactly.
    for a in [0.5, 0.1, 0.02] {
        let n = 8;
        let l = stencil_laplacian_2d(n, n, a).unwrap().dense();
        let phi = DVector::from_fn(n * n, |i, _| {
            let x = ((i / n + n / 2) % n) as f64 - (n / 2) as f64;
            (x * a).powi(4)
        });
        let centre = 0;
        let applied = -(&l * phi)[centre] / (a * a);
        assert!((applied - (0.0 - a * a / 20.0 * 24.0)).abs() < 1e-9, "a = {a}: {applied}");
    }
}

#[test]
fn klein_gordon_shift() {
    let g = build_grid(&GridSpec::uniform(vec![4], 1.0, Face::Neumann).unwrap()).unwrap();
    let l = graph_laplacian(&g);
    assert_eq!(klein_gordon_laplacian(&l, 0.0).unwrap().dense(), l.dense());
    let expected = l.dense() + DMatrix::identity(4, 4);
    assert_eq!(klein_gordon_laplacian(&l, 1.0).unwrap().dense(), expected);
    assert!(matches!(klein_gordon_laplacian(&l, -1.0), Err(Error::Domain(_))));
}
