//! Pathwise functionals of the mixed noise: the deterministic integrals K(t)
//! and A(t), the running exponential functional E(t), the hitting times tau*
//! (upper bracket of the blowup time) and tau_* (lower bracket), the
//! envelopes I(t) and J(t), and the trajectorywise criteria of the
//! finite-time-explosion and global-existence theorems.

use crate::error::{Error, Result};
use crate::noise::{CoefficientSpec, HurstParam, NoisePath, TimeGrid};

/// Exponent guard: e^x overflows f64 near 709, so any pathwise exponent
/// beyond this is treated as a numerically exploded path, with a hard error
/// rather than a silent Inf.
pub const EXP_CLAMP: f64 = 700.0;

/// Default tail-negligibility threshold for [`cc4_check`].
pub const CC4_TAIL_TOL: f64 = 1e-8;

/// Model parameters of du = [ (1/2) k^2 Lu + g(u) ] dt + u dN.
///
/// `c_low` and `lambda` are the two ends of the nonlinearity envelope
/// C z^{1+beta} <= g(z) <= Lambda z^{1+beta} for z >= 0; `pairing` is
/// <phi, phi_0>, `psi_sup` is ||psi_0||_inf, and `p_scale` is p in the
/// eigenfunction initial condition phi = p psi_0.
#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    pub h: HurstParam,
    pub beta: f64,
    pub c_low: f64,
    pub lambda: f64,
    pub lambda0: f64,
    pub a: CoefficientSpec,
    pub b: CoefficientSpec,
    pub k: CoefficientSpec,
    pub pairing: f64,
    pub psi_sup: f64,
    pub p_scale: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let hv = self.h.value();
        if !(hv > 0.5 && hv < 1.0) {
            return Err(Error::Domain(format!(
                "the model requires a Hurst parameter in (1/2, 1), got {hv}"
            )));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("C", self.c_low),
            ("Lambda", self.lambda),
            ("lambda0", self.lambda0),
            ("pairing", self.pairing),
            ("psi_sup", self.psi_sup),
            ("p_scale", self.p_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.c_low > self.lambda {
            return Err(Error::Domain(format!(
                "the nonlinearity envelope needs C <= Lambda, got C = {}, Lambda = {}",
                self.c_low, self.lambda
            )));
        }
        self.a.validate()?;
        self.b.validate()?;
        self.k.validate()?;
        if self.xi().is_nan() {
            return Err(Error::Domain("derived threshold xi is NaN".into()));
        }
        Ok(())
    }

    /// K(t) = (1/2) int_0^t k^2.
    pub fn k_int(&self, t: f64) -> f64 {
        k_int(&self.k, t)
    }

    /// A(t) = (1/2) int_0^t a^2.
    pub fn a_int(&self, t: f64) -> f64 {
        a_int(&self.a, t)
    }

    /// lambda_0 K(t) + A(t), the decay exponent of the principal mode.
    pub fn decay_exponent(&self, t: f64) -> f64 {
        self.lambda0 * self.k_int(t) + self.a_int(t)
    }

    /// Threshold xi = (1/(C beta)) <phi, phi_0>^{-beta} crossed by E at tau*.
    /// May be +inf when pairing is tiny and beta large; that simply censors.
    pub fn xi(&self) -> f64 {
        self.pairing.powf(-self.beta) / (self.c_low * self.beta)
    }

    /// Threshold (1/(Lambda beta)) (p ||psi_0||_inf)^{-beta} crossed at tau_*.
    pub fn tau_lower_threshold(&self) -> f64 {
        (self.p_scale * self.psi_sup).powf(-self.beta) / (self.lambda * self.beta)
    }
}

/// K(t) = (1/2) int_0^t k^2(r) dr, closed form for the power family.
pub fn k_int(k: &CoefficientSpec, t: f64) -> f64 {
    0.5 * k.integral_sq(t)
}

/// A(t) = (1/2) int_0^t a^2(r) dr.
pub fn a_int(a: &CoefficientSpec, t: f64) -> f64 {
    0.5 * a.integral_sq(t)
}

/// A threshold-crossing time on a grid, or censoring at the horizon.
///
/// Finite values are linear interpolations of the running integral across
/// the bracketing step; censoring is an explicit status so that estimates of
/// P(tau < infinity) can never confuse "did not cross" with a large value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HittingTime {
    Finite { value: f64, bracket: (f64, f64) },
    Censored { horizon: f64 },
}

impl HittingTime {
    pub fn finite_value(&self) -> Option<f64> {
        match *self {
            HittingTime::Finite { value, .. } => Some(value),
            HittingTime::Censored { .. } => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, HittingTime::Censored { .. })
    }

    /// Finite value, or the censoring horizon; useful for ordering checks
    /// where censoring acts as "at least the horizon".
    pub fn value_or_horizon(&self) -> f64 {
        match *self {
            HittingTime::Finite { value, .. } => value,
            HittingTime::Censored { horizon } => horizon,
        }
    }
}

/// Outcome of the global-existence criterion at a finite horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cc4Status {
    /// Integral stayed < 1 up to T and its integrand has decayed to
    /// negligibility, so the infinite-horizon condition plausibly holds.
    HoldsAtHorizon,
    /// Integral reached 1 on [0, T]: the condition fails outright.
    Violated,
    /// Integral < 1 at T but the integrand is not yet negligible.
    Inconclusive,
}

/// One pass over a noise path: node values of the exponential integrands and
/// their running trapezoid integrals, shared by every functional below.
pub struct PathFunctionals {
    params: ModelParams,
    grid: TimeGrid,
    /// exp(beta (N_r - lambda0 K(r) - A(r))) at each node.
    integrand: Vec<f64>,
    /// E(t_i), running trapezoid of `integrand`.
    e_running: Vec<f64>,
    /// exp(beta N_r) at each node.
    exp_noise: Vec<f64>,
    /// Running trapezoid of `exp_noise`.
    s_running: Vec<f64>,
}

impl PathFunctionals {
    pub fn new(params: &ModelParams, n: &NoisePath) -> Result<Self> {
        params.validate()?;
        let grid = n.grid();
        let n_steps = grid.n_steps();
        let dt = grid.dt();
        let mut integrand = Vec::with_capacity(n_steps + 1);
        let mut exp_noise = Vec::with_capacity(n_steps + 1);
        let mut e_running = Vec::with_capacity(n_steps + 1);
        let mut s_running = Vec::with_capacity(n_steps + 1);
        for i in 0..=n_steps {
            let t = grid.node(i);
            let bn = params.beta * n.value(i);
            if bn > EXP_CLAMP {
                return Err(Error::Overflow {
                    value: bn,
                    limit: EXP_CLAMP,
                    t,
                });
            }
            let f = (bn - params.beta * params.decay_exponent(t)).exp();
            let g = bn.exp();
            if i == 0 {
                e_running.push(0.0);
                s_running.push(0.0);
            } else {
                e_running.push(e_running[i - 1] + 0.5 * dt * (integrand[i - 1] + f));
                s_running.push(s_running[i - 1] + 0.5 * dt * (exp_noise[i - 1] + g));
            }
            integrand.push(f);
            exp_noise.push(g);
        }
        Ok(PathFunctionals {
            params: *params,
            grid,
            integrand,
            e_running,
            exp_noise,
            s_running,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Node values E(t_i).
    pub fn e_values(&self) -> &[f64] {
        &self.e_running
    }

    /// Node values of the E integrand exp(beta (N - lambda0 K - A)).
    pub fn integrand_values(&self) -> &[f64] {
        &self.integrand
    }

    /// E(t) by linear interpolation between nodes.
    pub fn e_at(&self, t: f64) -> Result<f64> {
        interp_nodes(&self.e_running, self.grid, t)
    }

    /// First crossing of E over xi; tau <= tau* pathwise.
    pub fn tau_star(&self) -> HittingTime {
        crossing(&self.e_running, self.grid, self.params.xi())
    }

    /// First crossing of E over the Lambda-threshold; tau >= tau_* pathwise.
    /// Requires the eigenfunction initial condition phi = p psi_0, under
    /// which the propagated sup-norm has the closed form used here.
    pub fn tau_lower(&self) -> HittingTime {
        crossing(&self.e_running, self.grid, self.params.tau_lower_threshold())
    }

    /// J(t) = (1 - Lambda beta (p ||psi_0||)^beta E(t))^{-1/beta}, the
    /// outer envelope factor, defined for t < tau_*.
    pub fn j_envelope(&self, t: f64) -> Result<f64> {
        let p = &self.params;
        let r = p.lambda * p.beta * (p.p_scale * p.psi_sup).powf(p.beta) * self.e_at(t)?;
        if r >= 1.0 {
            return Err(Error::Domain(format!(
                "J(t) is undefined at t = {t}: the path has already reached tau_*"
            )));
        }
        Ok((1.0 - r).powf(-1.0 / p.beta))
    }

    /// I(t) = e^{-(lambda0 K + A)(t)} (pairing^{-beta} - beta C E(t))^{-1/beta},
    /// the pairing subsolution, defined for t < tau*.
    pub fn i_subsolution(&self, t: f64) -> Result<f64> {
        let p = &self.params;
        let base = p.pairing.powf(-p.beta) - p.beta * p.c_low * self.e_at(t)?;
        if base <= 0.0 {
            return Err(Error::Domain(format!(
                "I(t) is undefined at t = {t}: the path has already reached tau*"
            )));
        }
        Ok((-p.decay_exponent(t)).exp() * base.powf(-1.0 / p.beta))
    }

    /// Smallest grid node w* where
    /// e^{beta A(w)} (p ||psi_0|| e^{-lambda0 K(w)})^{-beta} < beta C int_0^w e^{beta N},
    /// at which point the blowup time satisfies tau <= w*.
    pub fn check_cond2(&self) -> HittingTime {
        let p = &self.params;
        let scale = (p.p_scale * p.psi_sup).powf(-p.beta);
        for i in 1..=self.grid.n_steps() {
            let t = self.grid.node(i);
            let lhs = (p.beta * (p.a_int(t) + p.lambda0 * p.k_int(t))).exp() * scale;
            let rhs = p.beta * p.c_low * self.s_running[i];
            if lhs < rhs {
                return HittingTime::Finite {
                    value: t,
                    bracket: (self.grid.node(i - 1), t),
                };
            }
        }
        HittingTime::Censored {
            horizon: self.grid.horizon(),
        }
    }

    /// Global-existence criterion: Lambda beta int_0^inf (J-integrand) < 1,
    /// assessed at the horizon with a tail-negligibility test on the
    /// integrand.
    pub fn cc4_check(&self, tail_tol: f64) -> Cc4Status {
        let p = &self.params;
        let amp = p.lambda * p.beta * (p.p_scale * p.psi_sup).powf(p.beta);
        let n_steps = self.grid.n_steps();
        for i in 0..=n_steps {
            if amp * self.e_running[i] >= 1.0 {
                return Cc4Status::Violated;
            }
        }
        let tail = amp * self.integrand[n_steps];
        if tail < tail_tol {
            Cc4Status::HoldsAtHorizon
        } else {
            Cc4Status::Inconclusive
        }
    }

    /// Running trapezoid of e^{beta N}.
    pub fn s_values(&self) -> &[f64] {
        &self.s_running
    }

    /// Node values of e^{beta N}.
    pub fn exp_noise_values(&self) -> &[f64] {
        &self.exp_noise
    }
}

/// Running trapezoid integral E(t_i) of exp(-beta (lambda0 K + A) + beta N).
pub fn exp_functional(params: &ModelParams, n: &NoisePath) -> Result<Vec<f64>> {
    Ok(PathFunctionals::new(params, n)?.e_running)
}

/// First time E(t) >= xi, interpolated; tau <= tau* on every path.
pub fn tau_star(params: &ModelParams, n: &NoisePath) -> Result<HittingTime> {
    Ok(PathFunctionals::new(params, n)?.tau_star())
}

/// First time E(t) >= (1/(Lambda beta)) (p ||psi_0||)^{-beta}; tau >= tau_*.
pub fn tau_lower(params: &ModelParams, n: &NoisePath) -> Result<HittingTime> {
    Ok(PathFunctionals::new(params, n)?.tau_lower())
}

/// Envelope factor J(t); errors for t >= tau_*.
pub fn j_envelope(params: &ModelParams, n: &NoisePath, t: f64) -> Result<f64> {
    PathFunctionals::new(params, n)?.j_envelope(t)
}

/// Pairing subsolution I(t); errors for t >= tau*.
pub fn i_subsolution(params: &ModelParams, n: &NoisePath, t: f64) -> Result<f64> {
    PathFunctionals::new(params, n)?.i_subsolution(t)
}

/// Trajectorywise upper-bound criterion; Finite w* implies tau <= w*.
pub fn check_cond2(params: &ModelParams, n: &NoisePath) -> Result<HittingTime> {
    Ok(PathFunctionals::new(params, n)?.check_cond2())
}

/// Trajectorywise global-existence criterion at the horizon.
pub fn cc4_check(params: &ModelParams, n: &NoisePath, tail_tol: f64) -> Result<Cc4Status> {
    Ok(PathFunctionals::new(params, n)?.cc4_check(tail_tol))
}

/// Piecewise-linear interpolation of node values at time t.
fn interp_nodes(values: &[f64], grid: TimeGrid, t: f64) -> Result<f64> {
    if !(t >= 0.0) || t > grid.horizon() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "time {t} lies outside the grid [0, {}]",
            grid.horizon()
        )));
    }
    let t = t.min(grid.horizon());
    let x = t / grid.dt();
    let i = (x.floor() as usize).min(grid.n_steps() - 1);
    let frac = x - i as f64;
    Ok(values[i] + frac * (values[i + 1] - values[i]))
}

/// First node interval where `values` reaches `threshold`, refined by linear
/// interpolation; the running integrals are nondecreasing so the first
/// crossing is well defined.
fn crossing(values: &[f64], grid: TimeGrid, threshold: f64) -> HittingTime {
    if values[0] >= threshold {
        return HittingTime::Finite {
            value: 0.0,
            bracket: (0.0, 0.0),
        };
    }
    for i in 1..values.len() {
        if values[i] >= threshold {
            let t0 = grid.node(i - 1);
            let t1 = grid.node(i);
            let frac = (threshold - values[i - 1]) / (values[i] - values[i - 1]);
            return HittingTime::Finite {
                value: t0 + frac * (t1 - t0),
                bracket: (t0, t1),
            };
        }
    }
    HittingTime::Censored {
        horizon: grid.horizon(),
    }
}
