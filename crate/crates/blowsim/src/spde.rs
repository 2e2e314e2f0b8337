//! Pseudo-spectral solver for the transformed equation
//! dv = [ (1/2) k^2(t) Lv + e^{-N_t} g(e^{N_t} v) ] dt on (0, pi) with
//! Dirichlet boundary, where L is the Laplacian and g(z) = C sign(z)|z|^{1+beta}.
//!
//! The linear flow is applied exactly in the eigenbasis (exponential Euler);
//! the nonlinearity is evaluated pointwise on a collocation grid with enough
//! points to keep the quadratic-type product unaliased.

use crate::error::{Error, Result};
use crate::functionals::{a_int, k_int, HittingTime, ModelParams, PathFunctionals, EXP_CLAMP};
use crate::noise::NoisePath;
use std::f64::consts::PI;

pub const DEFAULT_N_MODES: usize = 64;
pub const DEFAULT_THRESHOLD: f64 = 1e8;
pub const MIN_THRESHOLD: f64 = 1e6;

/// Cap on (1 + beta) ln ||u||_inf during substeps, with headroom under
/// ln(f64::MAX) ~ 709.8 for the collocation sums: past it the nonlinearity
/// u^{1+beta} is no longer representable and the next substep would poison
/// the field with infinities.
const CASCADE_GUARD: f64 = 640.0;

/// Sine eigenbasis of the Dirichlet Laplacian on (0, pi) with a collocation
/// grid of 2 n_modes + 1 interior points.
///
/// Eigenpairs: psi_j(x) = sin((j+1) x) / 2 normalized so that psi_0 has unit
/// mass; the solver works with raw sine coefficients and only the model-level
/// quantities (pairing with phi_0, sup norm) carry the 1/2 factors. The two
/// constants the rest of the model relies on, <psi_0, phi_0> = pi/8 and
/// ||psi_0||_inf = 1/2, are recomputed numerically at construction and
/// asserted.
pub struct SpectralDomain {
    n_modes: usize,
    points: Vec<f64>,
    /// Row-major sin((j+1) x_m) table, one row per collocation point.
    sine: Vec<f64>,
    pairing_psi0: f64,
    psi_sup: f64,
}

impl SpectralDomain {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes < 8 {
            return Err(Error::Domain(format!(
                "need at least 8 modes to resolve the nonlinearity, got {n_modes}"
            )));
        }
        let m = 2 * n_modes + 1;
        let step = PI / (m + 1) as f64;
        let points: Vec<f64> = (1..=m).map(|i| step * i as f64).collect();
        let mut sine = vec![0.0; m * n_modes];
        for (i, &x) in points.iter().enumerate() {
            for j in 0..n_modes {
                sine[i * n_modes + j] = ((j + 1) as f64 * x).sin();
            }
        }
        // Recompute the two model constants from the basis definition.
        let dense = 1 << 14;
        let hx = PI / dense as f64;
        let mut pairing = 0.0;
        let mut sup = 0.0f64;
        for i in 0..=dense {
            let x = hx * i as f64;
            let psi = 0.5 * x.sin();
            let w = if i == 0 || i == dense {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            pairing += w * psi * psi;
            sup = sup.max(psi.abs());
        }
        pairing *= hx / 3.0;
        assert!(
            (pairing - PI / 8.0).abs() < 1e-10,
            "eigenfunction pairing recomputation drifted: {pairing} vs {}",
            PI / 8.0
        );
        assert!(
            (sup - 0.5).abs() < 1e-5,
            "eigenfunction sup recomputation drifted: {sup}"
        );
        Ok(SpectralDomain {
            n_modes,
            points,
            sine,
            pairing_psi0: PI / 8.0,
            psi_sup: 0.5,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_collocation(&self) -> usize {
        self.points.len()
    }

    pub fn collocation_points(&self) -> &[f64] {
        &self.points
    }

    /// Dirichlet eigenvalue lambda_j = (j+1)^2 for the 0-based mode index.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let k = (j + 1) as f64;
        k * k
    }

    pub fn pairing_psi0(&self) -> f64 {
        self.pairing_psi0
    }

    pub fn psi_sup(&self) -> f64 {
        self.psi_sup
    }

    /// Physical values at the collocation points from sine coefficients.
    pub fn synth(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n_modes);
        debug_assert_eq!(out.len(), self.points.len());
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.sine[i * self.n_modes..(i + 1) * self.n_modes];
            let mut acc = 0.0;
            for (c, s) in coeffs.iter().zip(row) {
                acc += c * s;
            }
            *o = acc;
        }
    }

    /// Sine coefficients from collocation values (exact inverse of synth for
    /// fields spanned by the first n_modes modes).
    pub fn analyze(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.points.len());
        debug_assert_eq!(out.len(), self.n_modes);
        let scale = 2.0 / (self.points.len() + 1) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, v) in values.iter().enumerate() {
                acc += v * self.sine[i * self.n_modes + j];
            }
            *o = acc * scale;
        }
    }

    /// <v, phi_0> = v_hat_0 pi/4 where phi_0 = sin(x)/2.
    pub fn pairing_phi0(&self, coeffs: &[f64]) -> f64 {
        coeffs[0] * PI / 4.0
    }

    /// Coefficients of the initial profile phi = p psi_0 = (p/2) sin x.
    pub fn eigen_initial(&self, p: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.n_modes];
        c[0] = 0.5 * p;
        c
    }
}

/// Sine coefficients of v at a fixed time.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub coeffs: Vec<f64>,
    pub t: f64,
}

/// Applies the deterministic heat flow only: mode j is damped by
/// exp(-lambda_j (K(t_to) - K(t_from))) with K(t) = (1/2) int_0^t k^2.
pub fn heat_propagator(
    state: &FieldState,
    params: &ModelParams,
    domain: &SpectralDomain,
    t_from: f64,
    t_to: f64,
) -> Result<FieldState> {
    if !(t_to >= t_from) {
        return Err(Error::Domain(format!(
            "heat propagation needs t_to >= t_from, got {t_from} -> {t_to}"
        )));
    }
    let dk = k_int(&params.k, t_to) - k_int(&params.k, t_from);
    let coeffs = state
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| c * (-params.lambda0 * domain.eigenvalue(j) * dk).exp())
        .collect();
    Ok(FieldState { coeffs, t: t_to })
}

/// One exponential-Euler step worker holding the collocation buffers.
pub struct MildSolver<'a> {
    domain: &'a SpectralDomain,
    params: ModelParams,
    /// Nonlinearity amplitude; params.c_low by default, 0 gives the linear
    /// equation for validation.
    c_nonlin: f64,
    phys: Vec<f64>,
    wcoef: Vec<f64>,
}

impl<'a> MildSolver<'a> {
    pub fn new(domain: &'a SpectralDomain, params: &ModelParams) -> Result<Self> {
        Self::with_nonlinearity(domain, params, params.c_low)
    }

    pub fn with_nonlinearity(
        domain: &'a SpectralDomain,
        params: &ModelParams,
        c_nonlin: f64,
    ) -> Result<Self> {
        params.validate()?;
        if !(c_nonlin >= 0.0) || !c_nonlin.is_finite() {
            return Err(Error::Domain(format!(
                "nonlinearity amplitude must be finite and >= 0, got {c_nonlin}"
            )));
        }
        Ok(MildSolver {
            domain,
            params: *params,
            c_nonlin,
            phys: vec![0.0; domain.n_collocation()],
            wcoef: vec![0.0; domain.n_modes()],
        })
    }

    /// Advances coeffs from t0 to t0 + dt with the noise level frozen at
    /// n_t (left-point rule):
    ///   v <- e^{-lambda_j dK - dA} (v + dt P[ C |u|^beta v ]),  u = e^{n_t} v.
    ///
    /// The forcing is written in terms of u = e^{n_t} v so that no
    /// intermediate e^{beta n_t} factor is ever formed: for |n_t| large the
    /// separate factors over/underflow while the product stays representable.
    pub fn step(&mut self, coeffs: &mut [f64], t0: f64, n_t: f64, dt: f64) {
        let p = &self.params;
        self.domain.synth(coeffs, &mut self.phys);
        let en = n_t.exp();
        let beta = p.beta;
        if self.c_nonlin > 0.0 {
            if beta == 1.0 {
                for v in self.phys.iter_mut() {
                    let u = en * *v;
                    *v = self.c_nonlin * u.abs() * *v;
                }
            } else {
                for v in self.phys.iter_mut() {
                    let u = en * *v;
                    *v = self.c_nonlin * u.abs().powf(beta) * *v;
                }
            }
            self.domain.analyze(&self.phys, &mut self.wcoef);
        } else {
            self.wcoef.iter_mut().for_each(|w| *w = 0.0);
        }
        let dk = k_int(&p.k, t0 + dt) - k_int(&p.k, t0);
        let da = a_int(&p.a, t0 + dt) - a_int(&p.a, t0);
        for (j, c) in coeffs.iter_mut().enumerate() {
            let damp = (-p.lambda0 * self.domain.eigenvalue(j) * dk - da).exp();
            *c = damp * (*c + dt * self.wcoef[j]);
        }
    }
}

/// Single exponential-Euler step as a pure function.
pub fn step_mild(
    state: &FieldState,
    params: &ModelParams,
    domain: &SpectralDomain,
    n_t: f64,
    dt: f64,
) -> Result<FieldState> {
    let mut solver = MildSolver::new(domain, params)?;
    let mut coeffs = state.coeffs.clone();
    solver.step(&mut coeffs, state.t, n_t, dt);
    Ok(FieldState {
        coeffs,
        t: state.t + dt,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Blowup declaration level for ||u||_inf; must be >= 1e6.
    pub threshold: f64,
    /// Solver substeps per noise step; 0 picks enough for an effective
    /// dt <= 1e-3 * horizon.
    pub substeps: usize,
    /// Track the pathwise envelope 0 <= u <= J(t) e^{N-A} U(t,0) phi while
    /// solving (costs one extra transform per node).
    pub check_envelope: bool,
    /// Relative tolerance for envelope violations.
    pub envelope_tol: f64,
    /// Override of the nonlinearity amplitude (None: params.c_low).
    pub c_nonlin: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            threshold: DEFAULT_THRESHOLD,
            substeps: 0,
            check_envelope: false,
            envelope_tol: 1e-6,
            c_nonlin: None,
        }
    }
}

/// Envelope audit accumulated at the trace nodes strictly before tau_*.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeReport {
    pub nodes_checked: usize,
    /// max over nodes and points of (u - bound) / scale; <= tol means the
    /// upper envelope held.
    pub worst_upper_excess: f64,
    /// max over nodes and points of -u / scale; <= tol means nonnegativity
    /// held within the envelope's own tolerance.
    pub worst_lower_excess: f64,
}

/// Solver outcome: hitting time of the u sup-norm threshold plus traces at
/// the noise grid nodes.
#[derive(Clone, Debug)]
pub struct BlowupRecord {
    pub tau_num: HittingTime,
    pub threshold: f64,
    pub times: Vec<f64>,
    pub sup_v: Vec<f64>,
    pub sup_u: Vec<f64>,
    pub pairing_v: Vec<f64>,
    pub noise: Vec<f64>,
    pub min_v: Vec<f64>,
    pub envelope: Option<EnvelopeReport>,
}

/// Integrates v along one noise path until ||u||_inf crosses the threshold
/// or the horizon is reached.
///
/// The threshold test runs at every noise node before stepping, so a field
/// that is already explosive is reported without touching it. NaN anywhere
/// in the field is a numerical fault, reported as an error and never as
/// blowup.
pub fn solve_rpde(
    phi: &[f64],
    params: &ModelParams,
    noise: &NoisePath,
    domain: &SpectralDomain,
    opts: &SolveOptions,
) -> Result<BlowupRecord> {
    params.validate()?;
    if opts.threshold < MIN_THRESHOLD {
        return Err(Error::Domain(format!(
            "blowup threshold must be >= {MIN_THRESHOLD}, got {}",
            opts.threshold
        )));
    }
    if phi.len() != domain.n_modes() {
        return Err(Error::GridMismatch(format!(
            "initial profile has {} coefficients, domain holds {} modes",
            phi.len(),
            domain.n_modes()
        )));
    }
    if phi.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericalFault {
            context: "initial profile".into(),
        });
    }
    let grid = noise.grid();
    let n_steps = grid.n_steps();
    let dt = grid.dt();
    let substeps = if opts.substeps == 0 {
        (dt / (1e-3 * grid.horizon())).ceil().max(1.0) as usize
    } else {
        opts.substeps
    };
    let dts = dt / substeps as f64;
    let mut solver =
        MildSolver::with_nonlinearity(domain, params, opts.c_nonlin.unwrap_or(params.c_low))?;

    // Envelope bookkeeping (only when requested).
    let functionals = if opts.check_envelope {
        Some(PathFunctionals::new(params, noise)?)
    } else {
        None
    };
    let tau_lower = functionals.as_ref().map(|f| f.tau_lower());
    let mut env = EnvelopeReport {
        nodes_checked: 0,
        worst_upper_excess: f64::NEG_INFINITY,
        worst_lower_excess: f64::NEG_INFINITY,
    };
    let mut env_phys = if opts.check_envelope {
        vec![0.0; domain.n_collocation()]
    } else {
        Vec::new()
    };
    let mut env_coeffs = vec![0.0; if opts.check_envelope { domain.n_modes() } else { 0 }];

    let mut coeffs = phi.to_vec();
    let mut phys = vec![0.0; domain.n_collocation()];
    let cap = n_steps + 1;
    let mut times = Vec::with_capacity(cap);
    let mut sup_v_trace = Vec::with_capacity(cap);
    let mut sup_u_trace = Vec::with_capacity(cap);
    let mut pairing_trace = Vec::with_capacity(cap);
    let mut noise_trace = Vec::with_capacity(cap);
    let mut min_v_trace = Vec::with_capacity(cap);
    let mut tau_num = HittingTime::Censored {
        horizon: grid.horizon(),
    };

    'nodes: for i in 0..=n_steps {
        let t = grid.node(i);
        let n_i = noise.value(i);
        if n_i > EXP_CLAMP || params.beta * n_i > EXP_CLAMP {
            return Err(Error::Overflow {
                value: n_i.max(params.beta * n_i),
                limit: EXP_CLAMP,
                t,
            });
        }
        domain.synth(&coeffs, &mut phys);
        let mut sup_v = 0.0f64;
        let mut min_v = f64::INFINITY;
        for &v in &phys {
            if v.is_nan() {
                return Err(Error::NumericalFault {
                    context: format!("solver field at t = {t}"),
                });
            }
            sup_v = sup_v.max(v.abs());
            min_v = min_v.min(v);
        }
        let en = n_i.exp();
        let sup_u = en * sup_v;
        times.push(t);
        sup_v_trace.push(sup_v);
        sup_u_trace.push(sup_u);
        pairing_trace.push(domain.pairing_phi0(&coeffs));
        noise_trace.push(n_i);
        min_v_trace.push(min_v);

        if let (Some(f), Some(tl)) = (&functionals, &tau_lower) {
            let before_tau_lower = match tl {
                HittingTime::Finite { value, .. } => t < *value,
                HittingTime::Censored { .. } => true,
            };
            if before_tau_lower {
                // Envelope: u <= J(t) e^{N_t - A(t)} U(t,0) phi pointwise.
                let j = f.j_envelope(t)?;
                let kk = k_int(&params.k, t);
                for (jm, c) in env_coeffs.iter_mut().enumerate() {
                    *c = phi[jm] * (-params.lambda0 * domain.eigenvalue(jm) * kk).exp();
                }
                domain.synth(&env_coeffs, &mut env_phys);
                let outer = j * (n_i - a_int(&params.a, t)).exp();
                let mut bound_sup = 0.0f64;
                for b in env_phys.iter_mut() {
                    *b *= outer;
                    bound_sup = bound_sup.max(b.abs());
                }
                let scale = bound_sup.max(sup_u).max(1e-12);
                for (idx, &b) in env_phys.iter().enumerate() {
                    let u = en * phys[idx];
                    env.worst_upper_excess = env.worst_upper_excess.max((u - b) / scale);
                    env.worst_lower_excess = env.worst_lower_excess.max(-u / scale);
                }
                env.nodes_checked += 1;
            }
        }

        if sup_u >= opts.threshold {
            let value = if i == 0 {
                0.0
            } else {
                // Log-linear interpolation of the sup-norm crossing.
                let prev = sup_u_trace[i - 1];
                let frac = if prev > 0.0 && sup_u > prev {
                    ((opts.threshold.ln() - prev.ln()) / (sup_u.ln() - prev.ln())).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                grid.node(i - 1) + frac * dt
            };
            let bracket = if i == 0 {
                (0.0, 0.0)
            } else {
                (grid.node(i - 1), t)
            };
            tau_num = HittingTime::Finite { value, bracket };
            break 'nodes;
        }

        if i < n_steps {
            for s in 0..substeps {
                solver.step(&mut coeffs, t + s as f64 * dts, n_i, dts);
                // Blowup can cross the entire representable range inside one
                // noise step. Once the u sup-norm bound is so large that
                // u^{1+beta} overflows, the field has left double precision:
                // that is blowup (the threshold sits orders of magnitude
                // lower), never a fault, so declare it at the substep time.
                let l1: f64 = coeffs.iter().map(|c| c.abs()).sum();
                if !l1.is_finite() || (1.0 + params.beta) * (n_i + l1.ln()) > CASCADE_GUARD {
                    let t_sub = t + (s + 1) as f64 * dts;
                    tau_num = HittingTime::Finite {
                        value: t_sub,
                        bracket: (t, t_sub),
                    };
                    break 'nodes;
                }
            }
        }
    }

    Ok(BlowupRecord {
        tau_num,
        threshold: opts.threshold,
        times,
        sup_v: sup_v_trace,
        sup_u: sup_u_trace,
        pairing_v: pairing_trace,
        noise: noise_trace,
        min_v: min_v_trace,
        envelope: functionals.map(|_| env),
    })
}

/// Re-solves the path with envelope tracking enabled and returns the audit.
pub fn check_envelope(
    phi: &[f64],
    params: &ModelParams,
    noise: &NoisePath,
    domain: &SpectralDomain,
    opts: &SolveOptions,
) -> Result<(BlowupRecord, EnvelopeReport)> {
    let mut with_env = *opts;
    with_env.check_envelope = true;
    let record = solve_rpde(phi, params, noise, domain, &with_env)?;
    let env = record.envelope.unwrap();
    Ok((record, env))
}

/// Pointwise u = e^{N_t} v.
pub fn u_from_v(values: &[f64], n_t: f64) -> Vec<f64> {
    let en = n_t.exp();
    values.iter().map(|v| en * v).collect()
}

/// Verdict of the hitting-time ordering tau_* <= tau_num <= tau* with one
/// grid step of slack on each side.
#[derive(Clone, Copy, Debug)]
pub struct SandwichReport {
    pub pass: bool,
    pub pass_lower: bool,
    pub pass_upper: bool,
    /// Slack remaining in tau_* <= tau_num + dt (None when unconstrained).
    pub lower_margin: Option<f64>,
    /// Slack remaining in tau_num <= tau* + dt (None when unconstrained).
    pub upper_margin: Option<f64>,
}

/// Censoring semantics: a censored time is known only to exceed its horizon.
/// The ordering is refutable within the horizon in exactly two ways: the
/// solver blew up before tau_*, or it failed to blow up although tau* plus
/// slack lies inside the horizon.
pub fn check_sandwich(
    tau_lower: HittingTime,
    tau_num: HittingTime,
    tau_star: HittingTime,
    dt: f64,
) -> SandwichReport {
    let (pass_lower, lower_margin) = match (tau_lower, tau_num) {
        (HittingTime::Finite { value: l, .. }, HittingTime::Finite { value: n, .. }) => {
            (l <= n + dt, Some(n + dt - l))
        }
        // tau_* beyond its horizon, solver finite inside it: order violated
        // unless the solver stopped within slack of the horizon.
        (HittingTime::Censored { horizon }, HittingTime::Finite { value: n, .. }) => {
            (horizon <= n + dt, Some(n + dt - horizon))
        }
        _ => (true, None),
    };
    let (pass_upper, upper_margin) = match (tau_star, tau_num) {
        (HittingTime::Finite { value: s, .. }, HittingTime::Finite { value: n, .. }) => {
            (n <= s + dt, Some(s + dt - n))
        }
        // tau* finite, solver censored: a failure only if the horizon left
        // room past tau* + dt.
        (HittingTime::Finite { value: s, .. }, HittingTime::Censored { horizon }) => {
            (horizon <= s + dt, Some(s + dt - horizon))
        }
        _ => (true, None),
    };
    SandwichReport {
        pass: pass_lower && pass_upper,
        pass_lower,
        pass_upper,
        lower_margin,
        upper_margin,
    }
}
