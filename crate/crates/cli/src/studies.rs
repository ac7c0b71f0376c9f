//! One function per subcommand. Each returns its artifacts and checks.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use wavekit::analysis::{
    condition_number_study, div_pseudoinverse_bound, first_derivative_symbol, log_log_slope, run_q_study, sample_grid,
    smoothness_bound, Integrator, Perturbation, QCase, QStudy, SmoothnessInput,
};
use wavekit::evolve::{evolve_rk, integrate, ExactPropagator, RkOptions};
use wavekit::hamiltonian::{assemble_block, gate_count_estimate, maxwell_generator, operator_metadata};
use wavekit::incidence::{
    concatenate, graph_incidence, mass_loops, solve_circulant_ansatz, solve_circulant_ansatz_all,
    solve_stencil_ansatz_2d, solve_stencil_ansatz_2d_all, verify_factorization, AnsatzForm, AnsatzSolution,
    NewtonOptions, FACTOR_TOL,
};
use wavekit::initstate::FieldState;
use wavekit::laplacian::{derivative_coefficients, graph_laplacian, klein_gordon_laplacian, laplacian_coefficients};
use wavekit::lattice::{build_grid, Face, GridSpec};
use wavekit::linalg::{spmv_complex, symmetric_eigenvalues};

use crate::artifacts::{Artifact, Check, Outcome};
use crate::config::{FacesConfig, FormArg, GridConfig, Method, RunConfig};
use crate::setup::{Initial, Operator};
use crate::CliError;

type Res = Result<Outcome, CliError>;

fn operator_info(op: &Operator, radius: usize) -> Value {
    let m = operator_metadata(&op.h);
    json!({
        "sha256": op.hash(),
        "dim": m.dim,
        "sparsity": m.sparsity,
        "hmax": m.hmax,
        "qubits": m.qubits,
        "vertices": op.graph.num_vertices(),
        "edges": op.b.n_edges(),
        "radius": radius,
    })
}

#[derive(Serialize)]
struct CoeffRow {
    j: i64,
    exact: String,
    value: String,
}

pub fn coeffs(radius: usize, derivative: bool) -> Res {
    let c = if derivative { derivative_coefficients(radius)? } else { laplacian_coefficients(radius)? };
    let rows = c.table().into_iter().map(|(j, exact, value)| CoeffRow { j, exact, value });
    let mut out = Outcome::with(Artifact::csv("coefficients.csv", rows)?);
    out.note("stencil", json!({ "radius": radius, "derivative": derivative as u8 + 1, "order": c.accuracy() }));
    Ok(out)
}

fn solution_json(s: &AnsatzSolution) -> Value {
    let coefficients: Vec<Value> = s.coefficients.iter().map(|(n, v)| json!({ "name": n, "value": v })).collect();
    json!({ "coefficients": coefficients, "residual": s.residual })
}

pub fn factor(cfg: &RunConfig, radius: usize, form: FormArg, all: bool) -> Res {
    let opts = NewtonOptions { starts: cfg.factor.starts, seed: cfg.seed, ..NewtonOptions::default() };
    let (best, roots) = match form {
        FormArg::Stencil2d => {
            let roots = if all { solve_stencil_ansatz_2d_all(&opts)? } else { Vec::new() };
            (solve_stencil_ansatz_2d()?, roots)
        }
        FormArg::Shift | FormArg::Signed => {
            let f = if form == FormArg::Shift { AnsatzForm::ShiftDifference } else { AnsatzForm::Signed };
            let coefs = laplacian_coefficients(radius)?;
            let roots = if all { solve_circulant_ansatz_all(&coefs, f, &opts)? } else { Vec::new() };
            (solve_circulant_ansatz(&coefs, f)?, roots)
        }
    };
    let mut report = solution_json(&best);
    report["form"] = json!(form);
    report["radius"] = json!(if form == FormArg::Stencil2d { None } else { Some(radius) });
    if all {
        report["roots"] = Value::Array(roots.iter().map(solution_json).collect());
    }
    let mut out = Outcome::with(Artifact::json("factor.json", &report)?);
    out.checks.push(Check::new(
        "factor residual",
        best.residual <= FACTOR_TOL,
        format!("{:.3e} <= {FACTOR_TOL:.0e}", best.residual),
    ));
    for (i, r) in roots.iter().enumerate() {
        out.checks.push(Check::new(
            &format!("root {i} residual"),
            r.residual <= FACTOR_TOL,
            format!("{:.3e}", r.residual),
        ));
    }
    out.note("newton", json!({ "starts": opts.starts, "seed": opts.seed, "iterations": opts.iterations }));
    Ok(out)
}

pub fn build(cfg: &RunConfig) -> Res {
    let op = Operator::build(cfg)?;
    let edges = Artifact::csv("edges.csv", op.graph.edge_list())?;
    let residual = verify_factorization(&op.b, &op.l, FACTOR_TOL)?;
    let summary = json!({
        "vertices": op.graph.num_vertices(),
        "graph_edges": op.graph.edges().len(),
        "self_loops": op.graph.self_loops().len(),
        "factor_columns": op.b.n_edges(),
        "diameter": op.spec.diameter(),
        "factor_residual": residual.max_abs,
    });
    let mut out = Outcome { artifacts: vec![edges, Artifact::json("operator.json", &summary)?], ..Outcome::default() };
    out.checks.push(Check::new("B B^T = L", residual.passed, format!("max-abs residual {:.3e}", residual.max_abs)));
    out.note("operator", operator_info(&op, cfg.laplacian.radius));
    Ok(out)
}

#[derive(Serialize)]
struct TrajRow {
    t: f64,
    vertex_index: usize,
    re: f64,
    im: f64,
}

pub fn simulate(cfg: &RunConfig) -> Res {
    let ev = &cfg.evolution;
    let op = Operator::build(cfg)?;
    let init = Initial::build(cfg, &op)?;
    let times = sample_grid(ev.dt, ev.t_max)?;
    let nv = op.graph.num_vertices();
    let scale = init.state.scale();
    let mut rows = Vec::with_capacity(times.len() * nv);
    let mut last = Vec::new();
    let mut record = |t: f64, psi: &[Complex64]| {
        rows.extend(psi[..nv].iter().enumerate().map(|(v, z)| TrajRow {
            t,
            vertex_index: v,
            re: z.re * scale,
            im: z.im * scale,
        }));
        last = psi.to_vec();
    };
    let opts = RkOptions { rtol: ev.rtol, atol: ev.atol, dt_max: ev.dt_max, ..RkOptions::default() };
    let stats = match ev.method {
        Method::Rk => {
            Some(integrate(&op.h, init.state.amplitudes().as_slice(), &times, &opts, |_, t, psi| record(t, psi))?)
        }
        Method::Exact => {
            let prop = ExactPropagator::new(&op.h)?;
            let coef = prop.coefficients(init.state.amplitudes().as_slice());
            for &t in &times {
                record(t, &prop.from_coefficients(&coef, t));
            }
            None
        }
    };
    let p_v: f64 = last[..nv].iter().map(|z| z.norm_sqr()).sum();
    let norm = last.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let drift = stats.map(|s| s.norm_drift).unwrap_or((norm - 1.0).abs());
    let (limit, what) = match ev.method {
        Method::Rk => (opts.max_norm_drift, "integrator"),
        Method::Exact => (1e-12, "exact propagator"),
    };
    let summary = json!({
        "method": ev.method,
        "samples": times.len(),
        "stats": stats,
        "norm_drift": drift,
        "final_p_vertex": p_v,
        "final_p_edge": 1.0 - p_v,
        "scale": scale,
        "kernel_leakage": init.leakage,
    });
    let mut out = Outcome {
        artifacts: vec![Artifact::csv("trajectory.csv", rows)?, Artifact::json("summary.json", &summary)?],
        ..Outcome::default()
    };
    out.checks.push(Check::new("norm drift", drift <= limit, format!("{drift:.3e} <= {limit:.0e} ({what})")));
    out.note("operator", operator_info(&op, cfg.laplacian.radius));
    out.note(
        "tolerances",
        json!({ "rtol": ev.rtol, "atol": ev.atol, "dt_max": ev.dt_max, "max_norm_drift": opts.max_norm_drift }),
    );
    out.note("sample_grid", json!({ "dt": ev.dt, "t_max": ev.t_max, "count": times.len() }));
    Ok(out)
}

fn q_study(cfg: &RunConfig, case: QCase, order: usize) -> Result<QStudy, CliError> {
    if order < 2 || !order.is_multiple_of(2) {
        return Err(CliError::Config(format!("Q-factor order must be even and at least 2, got {order}")));
    }
    let q = &cfg.qfactor;
    let mut s = QStudy::reference(case, order / 2);
    s.n = q.n.unwrap_or(s.n);
    s.length = q.length.unwrap_or(s.length);
    s.centre = q.centre.unwrap_or(s.centre);
    s.width = q.width.unwrap_or(s.width);
    s.dt = q.dt.unwrap_or(s.dt);
    s.t_max = q.t_max.unwrap_or(s.t_max);
    s.rule = q.rule.unwrap_or(s.rule);
    s.sampling = q.sampling.unwrap_or(s.sampling);
    let (rtol, atol) = match s.integrator {
        Integrator::Rk { rtol, atol } => (rtol, atol),
        Integrator::Exact => (1e-12, 1e-12),
    };
    s.integrator = match q.method.unwrap_or(Method::Rk) {
        Method::Rk => Integrator::Rk { rtol: q.rtol.unwrap_or(rtol), atol: q.atol.unwrap_or(atol) },
        Method::Exact => Integrator::Exact,
    };
    Ok(s)
}

pub fn qfactor(cfg: &RunConfig, cases: &[QCase], orders: &[usize]) -> Res {
    let studies: Vec<QStudy> = cases
        .iter()
        .flat_map(|&c| orders.iter().map(move |&o| (c, o)))
        .map(|(c, o)| q_study(cfg, c, o))
        .collect::<Result<_, _>>()?;
    let reports = std::thread::scope(|s| {
        let handles: Vec<_> = studies.iter().map(|st| s.spawn(move || run_q_study(st))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(wavekit::Error::Numerical("worker panicked".into()))))
            .collect::<Vec<_>>()
    });
    let tol = cfg.qfactor.tolerance;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for (st, rep) in studies.iter().zip(reports) {
        let rep = rep?;
        let order = 2 * st.radius;
        // A rigidly translating packet is limited by its first-order initial data.
        let expected = match st.case {
            QCase::Translating => 2.0,
            QCase::Standing | QCase::Spreading => 2f64.powi(order as i32),
        };
        let deviation = (rep.mean_q - expected).abs() / expected;
        out.checks.push(Check::new(
            &format!("{:?} order {order}", st.case).to_lowercase(),
            deviation <= tol,
            format!("<Q> = {:.4}, expected {expected}, relative deviation {deviation:.3} <= {tol}", rep.mean_q),
        ));
        let mut row = json!({
            "case": st.case,
            "order": order,
            "mean_q": rep.mean_q,
            "expected": expected,
            "relative_deviation": deviation,
            "window": rep.window,
            "samples": rep.times.len(),
            "flagged": rep.flagged,
            "triple": rep.triple,
            "inclusion": rep.inclusion,
            "study": st,
        });
        if cfg.qfactor.series {
            row["times"] = json!(rep.times);
            row["q"] = json!(rep.q);
        }
        rows.push(row);
    }
    out.artifacts.push(Artifact::json("qfactor.json", &json!({ "rows": rows }))?);
    Ok(out)
}

#[derive(Serialize)]
struct BoundRow {
    case: String,
    vertices: usize,
    eps: Option<f64>,
    t: Option<f64>,
    bound: f64,
    measured: f64,
    holds: bool,
}

pub fn bounds(cfg: &RunConfig) -> Res {
    let op = Operator::build(cfg)?;
    let init = Initial::build(cfg, &op)?;
    let a = op.spec.spacing;
    let nv = op.graph.num_vertices();
    let t = cfg.bounds.t.unwrap_or(cfg.evolution.t_max);
    let diameter = op.spec.diameter();
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut cases = vec![(Perturbation::LaplacianSquared, cfg.bounds.eps.unwrap_or(a / 20f64.sqrt()))];
    let periodic_line = op.spec.dimension() == 1 && op.spec.axis_periodic(0) && op.convex;
    if periodic_line {
        let k = cfg.bounds.axis_order;
        cases.push((
            Perturbation::AxisDerivative { k },
            cfg.bounds.eps.unwrap_or((4.0f64 / 45.0).sqrt() * a.powi(k as i32 - 1)),
        ));
    }
    for (perturbation, eps) in cases {
        let r = smoothness_bound(&SmoothnessInput {
            b: &op.b,
            l: &op.l,
            phi0: &init.phi0,
            phidot0: &init.phidot0,
            perturbation,
            eps,
            t,
            diameter,
            dimension: op.spec.dimension(),
        })?;
        let case = match perturbation {
            Perturbation::LaplacianSquared => "laplacian-squared".to_string(),
            Perturbation::AxisDerivative { k } => format!("axis-derivative-{k}"),
        };
        out.checks.push(Check::new(&case, r.holds, format!("measured {:.3e} <= bound {:.3e}", r.measured, r.bound)));
        rows.push(BoundRow {
            case,
            vertices: nv,
            eps: Some(eps),
            t: Some(t),
            bound: r.bound,
            measured: r.measured,
            holds: r.holds,
        });
    }
    let d = div_pseudoinverse_bound(diameter, &op.b)?;
    let limit = 1.0 + cfg.bounds.div_tolerance;
    let holds = d.ratio <= limit;
    if op.convex {
        out.checks.push(Check::new(
            "inverse divergence",
            holds,
            format!("|a B^+| = {:.4e}, l/pi = {:.4e}, ratio {:.4} <= {limit}", d.pinv_norm, d.bound, d.ratio),
        ));
    }
    rows.push(BoundRow {
        case: "inverse-divergence".into(),
        vertices: nv,
        eps: None,
        t: None,
        bound: d.bound,
        measured: d.pinv_norm,
        holds,
    });
    out.artifacts.push(Artifact::csv("bounds.csv", rows)?);
    out.note("operator", operator_info(&op, cfg.laplacian.radius));
    out.note("divergence", json!(d));
    Ok(out)
}

#[derive(Default)]
pub struct GateArgs {
    pub eps: Option<f64>,
    pub t: Option<f64>,
    pub sparsity: Option<f64>,
    pub hmax: Option<f64>,
    pub qubits: Option<f64>,
}

pub fn estimate_gates(cfg: &RunConfig, args: &GateArgs) -> Res {
    let g = &cfg.gates;
    let pick = |cli: Option<f64>, conf: Option<f64>| cli.or(conf);
    let (s, hmax, qubits) =
        match (pick(args.sparsity, g.sparsity), pick(args.hmax, g.hmax), pick(args.qubits, g.qubits)) {
            (Some(s), Some(h), Some(q)) => (s, h, q),
            (s, h, q) => {
                let m = operator_metadata(&Operator::build(cfg)?.h);
                (s.unwrap_or(m.sparsity as f64), h.unwrap_or(m.hmax), q.unwrap_or(m.qubits as f64))
            }
        };
    let t = args.t.or(g.t).unwrap_or(cfg.evolution.t_max);
    let eps = args.eps.unwrap_or(g.eps);
    let est = gate_count_estimate(s, hmax, t, qubits, eps)?;
    let record = json!({ "s": s, "hmax": hmax, "qubits": qubits, "tau": est.tau, "g": est.g, "t": t, "eps": eps, "units": "relative" });
    Ok(Outcome::with(Artifact::json("gates.json", &record)?))
}

pub fn maxwell(cfg: &RunConfig) -> Res {
    let m = &cfg.maxwell;
    let (n, a) = (m.n, m.spacing);
    let coefs = derivative_coefficients(m.radius)?;
    let op = maxwell_generator(&GridSpec::uniform(vec![n; 3], a, Face::Periodic)?, &coefs)?;
    let sites = op.n_sites();

    let k = 2.0 * PI * m.mode as f64 / (n as f64 * a);
    let omega = first_derivative_symbol(&coefs, k, a);
    let mut wave = vec![Complex64::new(0.0, 0.0); op.dim()];
    for s in 0..sites {
        let w = Complex64::from_polar(1.0, k * (s / (n * n)) as f64 * a);
        wave[sites + s] = w;
        wave[5 * sites + s] = w;
    }
    let mut applied = vec![Complex64::new(0.0, 0.0); op.dim()];
    spmv_complex(op.generator(), &wave, &mut applied);
    let mode_gap =
        applied.iter().zip(&wave).map(|(o, p)| (o - Complex64::new(0.0, -omega) * p).norm()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fields = DVector::from_fn(op.dim(), |_, _| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
    let state = FieldState::from_physical(fields, op.dim())?;
    let times: Vec<f64> = (0..=4).map(|i| m.t_max * i as f64 / 4.0).collect();
    let opts = RkOptions { rtol: m.rtol, atol: m.atol, ..RkOptions::default() };
    let traj = evolve_rk(&op, &state, &times, &opts)?;
    let energy: Vec<f64> = traj.states.iter().map(|s| op.energy(s.amplitudes().as_slice())).collect();
    let divergence: Vec<(f64, f64)> = traj.states.iter().map(|s| op.divergence(s.amplitudes().as_slice())).collect();
    let drift = energy.iter().map(|e| (e - energy[0]).abs() / energy[0]).fold(0.0, f64::max);
    let limit = 1e3 * m.rtol.max(m.atol);
    let report = json!({
        "n": n, "spacing": a, "radius": m.radius, "mode": m.mode, "k": k, "omega": omega,
        "mode_gap": mode_gap, "times": times, "energy": energy, "energy_drift": drift,
        "divergence": divergence, "stats": traj.stats,
    });
    let mut out = Outcome::with(Artifact::json("maxwell.json", &report)?);
    out.checks.push(Check::new("plane-wave frequency", mode_gap <= 1e-10, format!("{mode_gap:.3e} <= 1e-10")));
    out.checks.push(Check::new(
        "energy conservation",
        drift <= limit,
        format!("relative drift {drift:.3e} <= {limit:.0e}"),
    ));
    out.note("tolerances", json!({ "rtol": m.rtol, "atol": m.atol }));
    Ok(out)
}

pub fn kleingordon(cfg: &RunConfig) -> Res {
    let kg = &cfg.kleingordon;
    let (n, a, mass) = (kg.n, kg.spacing, kg.mass);
    let g = build_grid(&GridSpec::uniform(vec![n], a, Face::Periodic)?)?;
    let l = klein_gordon_laplacian(&graph_laplacian(&g), mass)?;
    let b = concatenate(&[graph_incidence(&g), mass_loops(n, mass, a)?])?;
    let residual = verify_factorization(&b, &l, FACTOR_TOL)?;
    let h = assemble_block(&b)?;
    let measured: Vec<f64> = symmetric_eigenvalues(&h.dense()).into_iter().filter(|&x| x > 1e-9).collect();
    let mut expected: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let k = 2.0 * PI * j as f64 / (n as f64 * a);
            (k, ((2.0 / a * (k * a / 2.0).sin()).powi(2) + mass * mass).sqrt())
        })
        .collect();
    expected.sort_by(|x, y| x.1.total_cmp(&y.1));
    if measured.len() != n {
        return Err(CliError::Numerical(format!("expected {n} positive frequencies, found {}", measured.len())));
    }
    let gap = measured.iter().zip(&expected).map(|(x, (_, y))| (x * x - y * y).abs()).fold(0.0, f64::max);
    let modes: Vec<Value> =
        expected.iter().zip(&measured).map(|((k, w), m)| json!({ "k": k, "expected": w, "measured": m })).collect();
    let report = json!({ "n": n, "spacing": a, "mass": mass, "factor_residual": residual.max_abs, "max_gap_squared": gap, "modes": modes });
    let mut out = Outcome::with(Artifact::json("kleingordon.json", &report)?);
    out.checks.push(Check::new("factor", residual.passed, format!("{:.3e}", residual.max_abs)));
    out.checks.push(Check::new("dispersion", gap <= 1e-10, format!("max |w^2 - w_lattice^2| {gap:.3e} <= 1e-10")));
    Ok(out)
}

pub fn condnum(cfg: &RunConfig, sizes: &[usize]) -> Res {
    let mut rows = Vec::new();
    let (mut spacings, mut kv) = (Vec::new(), Vec::new());
    let mut worst = 0.0f64;
    for &n in sizes {
        let path = RunConfig {
            grid: GridConfig { extent: vec![n], spacing: None, faces: FacesConfig::All(Face::Dirichlet), origin: None },
            scatterer: None,
            ..cfg.clone()
        };
        let op = Operator::build(&path)?;
        let r = condition_number_study(&op.l, Some(&op.b))?;
        let kb = r.kappa_b.unwrap_or(f64::NAN);
        worst = worst.max((kb * kb - r.kappa_l).abs() / r.kappa_l);
        spacings.push(r.spacing);
        kv.push(r.kappa_v);
        rows.push(json!({ "n": n, "report": r }));
    }
    let slope = if sizes.len() >= 2 { Some(-log_log_slope(&spacings, &kv)?) } else { None };
    let report = json!({ "rows": rows, "slope": slope, "kappa_relation_gap": worst });
    let mut out = Outcome::with(Artifact::json("condnum.json", &report)?);
    out.checks.push(Check::new("kappa(B)^2 = kappa(L)", worst <= 1e-8, format!("relative gap {worst:.3e} <= 1e-8")));
    if let (Some(s), true) = (slope, sizes.len() >= 3) {
        out.checks.push(Check::new(
            "kappa_V ~ 1/a",
            (s - 1.0).abs() <= 0.15,
            format!("slope {s:.4} within 1 +/- 0.15"),
        ));
    }
    Ok(out)
}
