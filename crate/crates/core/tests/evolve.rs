use num_complex::Complex64;
use std::f64::consts::PI;
use wavekit::analysis::{convergence_order, standing_wave_frequency, standing_wave_oracle, ConvergenceFit};
use wavekit::evolve::{
    evolve_exact, evolve_rk, extract_phi_dot, integrate, subspace_probabilities, ExactPropagator, RkOptions,
};
use wavekit::hamiltonian::{assemble_block, BlockHamiltonian};
use wavekit::incidence::{graph_incidence, IncidenceMatrix};
use wavekit::initstate::{static_state, FieldState};
use wavekit::laplacian::graph_laplacian;
use wavekit::lattice::{build_grid, Face, GridSpec, LatticeGraph};
use wavekit::linalg::spmv_complex;
use wavekit::Error;

fn unit_interval(n: usize) -> (LatticeGraph, IncidenceMatrix, BlockHamiltonian) {
    let a = 1.0 / (n + 1) as f64;
    let spec = GridSpec::uniform(vec![n], a, Face::Dirichlet).unwrap().with_origin(vec![a]).unwrap();
    let g = build_grid(&spec).unwrap();
    let b = graph_incidence(&g);
    let h = assemble_block(&b).unwrap();
    (g, b, h)
}

fn standing_state(g: &LatticeGraph, b: &IncidenceMatrix) -> FieldState {
    let phi: Vec<Complex64> = (0..g.num_vertices()).map(|v| Complex64::from((PI * g.position(v)[0]).sin())).collect();
    static_state(&phi, b.n_edges()).unwrap()
}

fn max_gap(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

#[test]
fn standing_wave_tracks_the_oracle() {
    let n = 63;
    let (g, b, h) = unit_interval(n);
    let state = standing_state(&g, &b);
    let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.01).collect();
    let traj = evolve_rk(&h, &state, &times, &RkOptions::default()).unwrap();
    assert!(traj.stats.norm_drift <= 1e-6);
    let mut worst = 0.0f64;
    for (t, s) in times.iter().zip(&traj.states) {
        let oracle = standing_wave_oracle(n, 1, *t).unwrap();
        let exact: Vec<Complex64> = oracle.field.into_iter().map(Complex64::from).collect();
        worst = worst.max(max_gap(&s.physical_vertex(), &exact));
    }
    assert!(worst <= 1e-3, "max error {worst}");
}

#[test]
fn rk_agrees_with_exact_propagation() {
    let (g, b, h) = unit_interval(31);
    let state = standing_state(&g, &b);
    let opts = RkOptions { rtol: 1e-11, atol: 1e-11, ..RkOptions::default() };
    let traj = evolve_rk(&h, &state, &[0.0, 0.2, 0.7], &opts).unwrap();
    let prop = ExactPropagator::new(&h).unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let exact = prop.propagate(&state, *t);
        assert!(max_gap(s.amplitudes().as_slice(), exact.amplitudes().as_slice()) < 1e-8, "t = {t}");
    }
    let once = evolve_exact(&h, &state, 0.7).unwrap();
    assert!(max_gap(once.amplitudes().as_slice(), traj.states[2].amplitudes().as_slice()) < 1e-8);
}

#[test]
fn time_reversal_round_trip() {
    let (g, b, h) = unit_interval(40);
    let a = b.spacing();
    let w = |x: f64| (-((x - 0.5) / 0.1).powi(2)).exp();
    let phi: Vec<Complex64> = (0..g.num_vertices()).map(|v| Complex64::from(w(g.position(v)[0]))).collect();
    let mut amps = phi.clone();
    amps.extend((0..b.n_edges()).map(|j| Complex64::new(0.0, 0.3 * (j as f64 * a).cos())));
    let state = FieldState::from_physical(nalgebra::DVector::from_vec(amps), g.num_vertices()).unwrap();
    let opts = RkOptions { rtol: 1e-12, atol: 1e-12, ..RkOptions::default() };
    let forward = evolve_rk(&h, &state, &[0.0, 0.8], &opts).unwrap();
    let back = evolve_rk(&h, &forward.states[1], &[0.0, -0.8], &opts).unwrap();
    let err = max_gap(back.states[1].amplitudes().as_slice(), state.amplitudes().as_slice());
    assert!(err <= 1e-8, "round trip {err}");
}

#[test]
fn second_difference_satisfies_the_wave_equation() {
    let (g, b, h) = unit_interval(24);
    let a = b.spacing();
    let w = |x: f64| (-((x - 0.4) / 0.12).powi(2)).exp();
    let phi: Vec<Complex64> = (0..g.num_vertices()).map(|v| Complex64::from(w(g.position(v)[0]))).collect();
    let state = static_state(&phi, b.n_edges()).unwrap();
    let prop = ExactPropagator::new(&h).unwrap();
    let l = graph_laplacian(&g);
    let t0 = 0.3;
    let centre = prop.propagate(&state, t0).physical_vertex();
    let mut lphi = vec![Complex64::new(0.0, 0.0); centre.len()];
    spmv_complex(l.matrix(), &centre, &mut lphi);
    let steps = [0.04, 0.02, 0.01, 0.005];
    let residuals: Vec<f64> = steps
        .iter()
        .map(|&dt| {
            let up = prop.propagate(&state, t0 + dt).physical_vertex();
            let down = prop.propagate(&state, t0 - dt).physical_vertex();
            (0..centre.len())
                .map(|i| ((up[i] - 2.0 * centre[i] + down[i]) / (dt * dt) + lphi[i] / (a * a)).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    match convergence_order(&steps, &residuals).unwrap() {
        ConvergenceFit::Order { order, monotone } => {
            assert!((order - 2.0).abs() < 0.1, "slope {order}");
            assert!(monotone);
        }
        ConvergenceFit::BelowFloor => panic!("residuals below floor"),
    }
}

#[test]
fn energy_sloshes_between_subspaces() {
    let n = 31;
    let (g, b, h) = unit_interval(n);
    let state = standing_state(&g, &b);
    let omega = standing_wave_frequency(n, 1).unwrap();
    let prop = ExactPropagator::new(&h).unwrap();
    let quarter = prop.propagate(&state, PI / (2.0 * omega));
    let (pv, pe) = subspace_probabilities(&quarter);
    assert!(pv < 1e-20, "P_V = {pv}");
    assert!((pe - 1.0).abs() < 1e-12);
    let period = 2.0 * PI / omega;
    let samples = 200;
    let mean: f64 = (0..samples)
        .map(|k| subspace_probabilities(&prop.propagate(&state, period * k as f64 / samples as f64)).0)
        .sum::<f64>()
        / samples as f64;
    assert!((mean - 0.5).abs() < 1e-10, "mean P_V = {mean}");
}

#[test]
fn velocity_is_read_from_the_edge_block() {
    let n = 31;
    let (g, b, h) = unit_interval(n);
    let state = standing_state(&g, &b);
    let omega = standing_wave_frequency(n, 1).unwrap();
    let t = 0.37;
    let later = evolve_exact(&h, &state, t).unwrap();
    let phidot = extract_phi_dot(&later, &b).unwrap();
    let expected: Vec<Complex64> =
        (0..n).map(|v| Complex64::from(-omega * (omega * t).sin() * (PI * g.position(v)[0]).sin())).collect();
    assert!(max_gap(&phidot, &expected) < 1e-10);
    let other = graph_incidence(&build_grid(&GridSpec::uniform(vec![5], 1.0, Face::Dirichlet).unwrap()).unwrap());
    assert!(matches!(extract_phi_dot(&later, &other), Err(Error::Dimension(_))));
}

#[test]
fn integrator_guards() {
    let (g, b, h) = unit_interval(15);
    let state = standing_state(&g, &b);
    let a = b.spacing();
    let too_long = RkOptions { dt_max: Some(a), ..RkOptions::default() };
    assert!(evolve_rk(&h, &state, &[0.0, 0.1], &too_long).unwrap_err().is_configuration());
    assert!(evolve_rk(&h, &state, &[0.0, 0.2, 0.1], &RkOptions::default()).is_err());
    let mut seen = Vec::new();
    integrate(&h, state.amplitudes().as_slice(), &[0.0, 0.05, 0.1], &RkOptions::default(), |k, t, _| seen.push((k, t)))
        .unwrap();
    assert_eq!(seen, vec![(0, 0.0), (1, 0.05), (2, 0.1)]);
    let bad = vec![Complex64::new(0.0, 0.0); 3];
    assert!(integrate(&h, &bad, &[0.0, 0.1], &RkOptions::default(), |_, _, _| {}).is_err());
}
