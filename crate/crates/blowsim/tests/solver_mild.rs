mod common;

use blowsim::functionals::{ModelParams, PathFunctionals};
use blowsim::noise::{CoefficientSpec, NoisePath, PathKind, TimeGrid};
use blowsim::spde::{
    check_envelope, check_sandwich, heat_propagator, solve_rpde, step_mild, u_from_v, FieldState,
    SolveOptions, SpectralDomain, MIN_THRESHOLD,
};
use blowsim::Error;
use common::{grid, mixed_params, LN2, PI};

fn zero_path(g: TimeGrid) -> NoisePath {
    NoisePath::zero(g, PathKind::Mixed)
}

/// phi = (16/pi) psi_0 with the noise switched off: pairing stays 2,
/// tau_* = -ln(1 - pi/8), tau* = ln 2.
fn det_solver_params() -> ModelParams {
    let mut p = mixed_params();
    p.a = CoefficientSpec::Constant(0.0);
    p.b = CoefficientSpec::Constant(0.0);
    p
}

fn opts(substeps: usize) -> SolveOptions {
    SolveOptions {
        substeps,
        ..SolveOptions::default()
    }
}

#[test]
fn domain_constants_and_roundtrip() {
    let d = SpectralDomain::new(64).unwrap();
    assert_eq!(d.n_modes(), 64);
    assert!((d.pairing_psi0() - PI / 8.0).abs() < 1e-10);
    assert!((d.psi_sup() - 0.5).abs() < 1e-10);
    assert_eq!(d.eigenvalue(0), 1.0);
    assert_eq!(d.eigenvalue(3), 16.0);

    // eigen_initial(p) pairs to p * pi/8 against phi_0.
    let phi = d.eigen_initial(16.0 / PI);
    assert!((d.pairing_phi0(&phi) - 2.0).abs() < 1e-12);

    let mut values = vec![0.0; d.n_collocation()];
    let coeffs: Vec<f64> = (0..64).map(|j| 1.0 / (1.0 + j as f64)).collect();
    d.synth(&coeffs, &mut values);
    let mut back = vec![0.0; 64];
    d.analyze(&values, &mut back);
    for (c, b) in coeffs.iter().zip(&back) {
        assert!((c - b).abs() < 1e-12);
    }
}

#[test]
fn heat_propagator_damps_modes() {
    let d = SpectralDomain::new(8).unwrap();
    let p = det_solver_params(); // k = sqrt(2): K(t) = t
    let state = FieldState {
        coeffs: vec![1.0, 0.5, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0],
        t: 0.0,
    };
    let out = heat_propagator(&state, &p, &d, 0.0, LN2).unwrap();
    // Mode 0 halves over K = ln 2; mode j damps by 2^{-(j+1)^2}.
    assert!((out.coeffs[0] - 0.5).abs() < 1e-12);
    assert!((out.coeffs[1] - 0.5 * 0.0625).abs() < 1e-12);
    assert!((out.coeffs[3] - 0.2 * 2f64.powi(-16)).abs() < 1e-18);
    assert_eq!(out.coeffs[2], 0.0);
    assert!((out.t - LN2).abs() < 1e-15);
    // Time must not run backwards.
    assert!(heat_propagator(&state, &p, &d, 1.0, 0.5).is_err());
}

/// With the nonlinearity disabled the exponential-Euler step is exact:
/// after any number of steps mode j holds phi_j e^{-lambda0 lambda_j K - A}.
#[test]
fn linear_flow_is_exact() {
    let d = SpectralDomain::new(16).unwrap();
    let mut p = mixed_params();
    p.k = CoefficientSpec::Constant(1.0);
    let g = grid(0.5, 100);
    let n = zero_path(g);
    let mut phi = vec![0.0; 16];
    phi[0] = 1.0;
    phi[1] = 0.3;
    phi[7] = 0.05;
    let options = SolveOptions {
        c_nonlin: Some(0.0),
        substeps: 1,
        ..SolveOptions::default()
    };
    let record = solve_rpde(&phi, &p, &n, &d, &options).unwrap();
    assert!(record.tau_num.is_censored());

    // Reconstruct the final coefficients by stepping the solver directly.
    let mut state = FieldState {
        coeffs: phi.clone(),
        t: 0.0,
    };
    let mut solver = blowsim::spde::MildSolver::with_nonlinearity(&d, &p, 0.0).unwrap();
    for i in 0..100 {
        let t0 = g.node(i);
        solver.step(&mut state.coeffs, t0, 0.0, g.dt());
        state.t = g.node(i + 1);
    }
    let kk = 0.25; // K(0.5) with k = 1
    let aa = 0.0625; // A(0.5) with a = 0.5
    for (j, &c) in state.coeffs.iter().enumerate() {
        let lam = ((j + 1) * (j + 1)) as f64;
        let want = phi[j] * (-lam * kk - aa).exp();
        if phi[j] == 0.0 {
            assert_eq!(c, 0.0, "mode {j} contaminated");
        } else {
            assert!(
                (c - want).abs() <= 1e-10 * want.abs(),
                "mode {j}: {c} vs {want}"
            );
        }
    }
    // The trace agrees with the closed form at the final node: pairing
    // of mode 0 is c_0 pi / 4.
    let last_pairing = *record.pairing_v.last().unwrap();
    let want0 = (phi[0] * (-1.0f64 * kk - aa).exp()) * PI / 4.0
        + (phi[1] * (-4.0f64 * kk - aa).exp()) * 0.0
        + (phi[7] * (-64.0f64 * kk - aa).exp()) * 0.0;
    assert!((last_pairing - want0).abs() < 1e-10);
}

/// One exponential-Euler step against a hand-computed oracle: for a single
/// mode c sin x and beta = 2, the forcing C|u|^2 v = C e^{2n} c^3 sin^3 x
/// projects exactly onto (3/4, 0, -1/4) of modes 1 and 3.
#[test]
fn step_matches_trigonometric_oracle() {
    let d = SpectralDomain::new(8).unwrap();
    let mut p = mixed_params();
    p.beta = 2.0;
    p.k = CoefficientSpec::Constant(1.0);
    p.c_low = 0.8;
    let c = 0.7;
    let n_t = 0.3;
    let dt = 1e-3;
    let mut state = FieldState {
        coeffs: vec![0.0; 8],
        t: 0.0,
    };
    state.coeffs[0] = c;
    let out = step_mild(&state, &p, &d, n_t, dt).unwrap();

    let dk = 0.5 * dt; // K increment for k = 1
    let da = 0.125 * dt; // A increment for a = 1/2
    let force = p.c_low * (2.0 * n_t).exp() * c * c * c;
    let want0 = (-1.0 * dk - da).exp() * (c + dt * force * 0.75);
    let want2 = (-9.0 * dk - da).exp() * (0.0 - dt * force * 0.25);
    assert!((out.coeffs[0] - want0).abs() < 1e-13, "mode 0");
    assert!((out.coeffs[2] - want2).abs() < 1e-15, "mode 2");
    for j in [1usize, 3, 4, 5, 6, 7] {
        assert!(out.coeffs[j].abs() < 1e-15, "mode {j} should stay empty");
    }
}

#[test]
fn deterministic_blowup_inside_sandwich() {
    let d = SpectralDomain::new(64).unwrap();
    let p = det_solver_params();
    let g = grid(1.5, 300);
    let n = zero_path(g);
    let phi = d.eigen_initial(p.p_scale);
    let record = solve_rpde(&phi, &p, &n, &d, &opts(8)).unwrap();
    let tau = record
        .tau_num
        .finite_value()
        .expect("deterministic profile must blow up");
    let tau_lower = -(1.0 - PI / 8.0f64).ln();
    assert!(
        tau >= tau_lower - g.dt() && tau <= LN2 + g.dt(),
        "tau_num = {tau}, expected within [{tau_lower}, {LN2}] plus slack"
    );
    let pf = PathFunctionals::new(&p, &n).unwrap();
    let report = check_sandwich(pf.tau_lower(), record.tau_num, pf.tau_star(), g.dt());
    assert!(report.pass, "sandwich: {report:?}");

    // The trace ends at the crossing and the last recorded sup reaches the
    // threshold; nonnegativity holds at every resolved node (the final node
    // sits mid-explosion and carries no meaningful profile).
    let last = record.sup_u.last().unwrap();
    assert!(*last >= record.threshold);
    for (i, (&mv, &sv)) in record.min_v.iter().zip(&record.sup_v).enumerate() {
        if record.sup_u[i] > 1e3 {
            continue;
        }
        assert!(
            mv >= -1e-8 * sv.max(1.0),
            "node {i}: min_v = {mv} against sup {sv}"
        );
    }
}

#[test]
fn blowup_time_stable_under_mode_doubling() {
    let p = det_solver_params();
    let g = grid(1.5, 300);
    let n = zero_path(g);
    let mut taus = Vec::new();
    for m in [64usize, 128] {
        let d = SpectralDomain::new(m).unwrap();
        let phi = d.eigen_initial(p.p_scale);
        let record = solve_rpde(&phi, &p, &n, &d, &opts(8)).unwrap();
        taus.push(record.tau_num.finite_value().unwrap());
    }
    assert!(
        (taus[0] - taus[1]).abs() < g.dt(),
        "mode refinement moved tau: {taus:?}"
    );
}

#[test]
fn blowup_time_stable_under_dt_refinement() {
    let p = det_solver_params();
    let d = SpectralDomain::new(64).unwrap();
    let phi = d.eigen_initial(p.p_scale);
    let mut taus = Vec::new();
    let mut dts = Vec::new();
    for n_steps in [300usize, 600] {
        let g = grid(1.5, n_steps);
        let record = solve_rpde(&phi, &p, &zero_path(g), &d, &opts(8)).unwrap();
        taus.push(record.tau_num.finite_value().unwrap());
        dts.push(g.dt());
    }
    assert!(
        (taus[0] - taus[1]).abs() <= dts[0],
        "dt refinement moved tau by more than one coarse step: {taus:?}"
    );
}

#[test]
fn threshold_and_profile_validation() {
    let d = SpectralDomain::new(8).unwrap();
    let p = det_solver_params();
    let g = grid(1.0, 10);
    let bad = SolveOptions {
        threshold: MIN_THRESHOLD / 2.0,
        ..SolveOptions::default()
    };
    assert!(solve_rpde(&d.eigen_initial(1.0), &p, &zero_path(g), &d, &bad).is_err());

    // NaN in the initial profile is a numerical fault, not a blowup.
    let mut phi = d.eigen_initial(1.0);
    phi[3] = f64::NAN;
    match solve_rpde(&phi, &p, &zero_path(g), &d, &SolveOptions::default()) {
        Err(Error::NumericalFault { context }) => {
            assert!(context.contains("initial"), "context: {context}")
        }
        other => panic!("expected a numerical fault, got {:?}", other.map(|r| r.tau_num)),
    }

    // Mode-count mismatch.
    let phi = vec![1.0; 4];
    assert!(matches!(
        solve_rpde(&phi, &p, &zero_path(g), &d, &SolveOptions::default()),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn already_explosive_profile_reports_time_zero() {
    let d = SpectralDomain::new(8).unwrap();
    let p = det_solver_params();
    let g = grid(1.0, 10);
    let phi = d.eigen_initial(4e6); // sup u(0) = 2e6 >= default threshold? No: 1e8.
    let options = SolveOptions {
        threshold: 1e6,
        ..SolveOptions::default()
    };
    let record = solve_rpde(&phi, &p, &zero_path(g), &d, &options).unwrap();
    match record.tau_num {
        blowsim::functionals::HittingTime::Finite { value, bracket } => {
            assert_eq!(value, 0.0);
            assert_eq!(bracket, (0.0, 0.0));
        }
        other => panic!("expected immediate crossing, got {other:?}"),
    }
    assert_eq!(record.times.len(), 1);
}

#[test]
fn envelope_holds_on_deterministic_path() {
    let d = SpectralDomain::new(64).unwrap();
    let p = det_solver_params();
    let g = grid(1.5, 300);
    let (record, env) =
        check_envelope(&d.eigen_initial(p.p_scale), &p, &zero_path(g), &d, &opts(8)).unwrap();
    assert!(record.tau_num.finite_value().is_some());
    assert!(env.nodes_checked > 0);
    assert!(
        env.worst_upper_excess <= 1e-6,
        "upper envelope violated: {}",
        env.worst_upper_excess
    );
    assert!(
        env.worst_lower_excess <= 1e-6,
        "nonnegativity violated: {}",
        env.worst_lower_excess
    );
}

#[test]
fn sandwich_negative_controls() {
    let d = SpectralDomain::new(64).unwrap();
    let p = det_solver_params();
    let g = grid(1.5, 300);
    let n = zero_path(g);
    let record = solve_rpde(&d.eigen_initial(p.p_scale), &p, &n, &d, &opts(8)).unwrap();
    let pf = PathFunctionals::new(&p, &n).unwrap();
    let (tl, ts) = (pf.tau_lower(), pf.tau_star());
    let dt = g.dt();

    // Corrupt the numerical time to before tau_*: the lower leg must fail.
    let early = blowsim::functionals::HittingTime::Finite {
        value: tl.value_or_horizon() - 0.1,
        bracket: (0.0, 0.0),
    };
    let report = check_sandwich(tl, early, ts, dt);
    assert!(!report.pass && !report.pass_lower);

    // Pretend the solver never blew up although tau* sits well inside the
    // horizon: the upper leg must fail.
    let censored = blowsim::functionals::HittingTime::Censored { horizon: 1.5 };
    let report = check_sandwich(tl, censored, ts, dt);
    assert!(!report.pass && !report.pass_upper);

    // Both censored: unconstrained, passes vacuously.
    let both = check_sandwich(
        blowsim::functionals::HittingTime::Censored { horizon: 1.5 },
        censored,
        blowsim::functionals::HittingTime::Censored { horizon: 1.5 },
        dt,
    );
    assert!(both.pass);
    assert_eq!(both.lower_margin, None);
    assert_eq!(both.upper_margin, None);

    // The genuine record passes.
    assert!(check_sandwich(tl, record.tau_num, ts, dt).pass);
}

#[test]
fn u_reconstruction_scales_by_noise() {
    let values = vec![0.5, -0.25, 1.5];
    let u = u_from_v(&values, LN2);
    assert!((u[0] - 1.0).abs() < 1e-15);
    assert!((u[1] + 0.5).abs() < 1e-15);
    assert!((u[2] - 3.0).abs() < 1e-12);
}
