#![allow(dead_code)]

use blowsim::functionals::ModelParams;
use blowsim::noise::{CoefficientSpec, HurstParam, TimeGrid};

pub const LN2: f64 = std::f64::consts::LN_2;
pub const PI: f64 = std::f64::consts::PI;

pub fn grid(horizon: f64, n: usize) -> TimeGrid {
    TimeGrid::new(horizon, n).unwrap()
}

pub fn hurst(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

/// a = b = 0, k = sqrt(2), lambda0 = 1, beta = 1, C = Lambda = 1, pairing = 2,
/// and p chosen so p ||psi0||_inf = 2: both hitting thresholds sit at 1/2 and
/// both deterministic hitting times at ln 2.
pub fn det_params() -> ModelParams {
    ModelParams {
        h: hurst(0.75),
        beta: 1.0,
        c_low: 1.0,
        lambda: 1.0,
        lambda0: 1.0,
        a: CoefficientSpec::Constant(0.0),
        b: CoefficientSpec::Constant(0.0),
        k: CoefficientSpec::Constant(std::f64::consts::SQRT_2),
        pairing: 2.0,
        psi_sup: 0.5,
        p_scale: 4.0,
    }
}

/// Mixed-noise blowup configuration: a = b = 0.5, k = sqrt(2), H = 3/4,
/// phi = (16/pi) psi0, so pairing = 2 and p ||psi0||_inf = 8/pi.
pub fn mixed_params() -> ModelParams {
    ModelParams {
        h: hurst(0.75),
        beta: 1.0,
        c_low: 1.0,
        lambda: 1.0,
        lambda0: 1.0,
        a: CoefficientSpec::Constant(0.5),
        b: CoefficientSpec::Constant(0.5),
        k: CoefficientSpec::Constant(std::f64::consts::SQRT_2),
        pairing: 2.0,
        psi_sup: 0.5,
        p_scale: 16.0 / PI,
    }
}

/// b = 0, a = k = 1, phi = psi0: the constant-coefficient configuration whose
/// blowup probability has a closed form, P(Z_2 <= pi/4).
pub fn exact_law_params() -> ModelParams {
    ModelParams {
        h: hurst(0.75),
        beta: 1.0,
        c_low: 1.0,
        lambda: 1.0,
        lambda0: 1.0,
        a: CoefficientSpec::Constant(1.0),
        b: CoefficientSpec::Constant(0.0),
        k: CoefficientSpec::Constant(1.0),
        pairing: PI / 8.0,
        psi_sup: 0.5,
        p_scale: 1.0,
    }
}

/// erf via its everywhere-convergent series
/// erf(z) = 2 z e^{-z^2}/sqrt(pi) * sum_k (2 z^2)^k / (1*3*...*(2k+1)).
/// All terms are positive, so there is no cancellation; good to ~1e-15.
pub fn erf_oracle(z: f64) -> f64 {
    if z < 0.0 {
        return -erf_oracle(-z);
    }
    if z == 0.0 {
        return 0.0;
    }
    let z2 = 2.0 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0u32;
    while term > 1e-18 * sum && k < 2000 {
        k += 1;
        term *= z2 / (2 * k + 1) as f64;
        sum += term;
    }
    2.0 * z * (-z * z).exp() / PI.sqrt() * sum
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Gauss-Legendre over (a, b) on dyadically graded cells (refined toward
/// both endpoints), for integrands with integrable endpoint trouble.
pub fn graded_gl8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const LEVELS: i32 = 44;
    let mut cuts = Vec::with_capacity(2 * LEVELS as usize + 1);
    cuts.push(0.0);
    for k in (2..=LEVELS).rev() {
        cuts.push(0.5f64.powi(k));
    }
    for k in 1..LEVELS {
        cuts.push(1.0 - 0.5f64.powi(k + 1));
    }
    cuts.push(1.0);
    let len = b - a;
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (a + len * w[0], a + len * w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut cell = 0.0;
        for (x, wgt) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            cell += wgt * f(mid + half * x);
        }
        acc += cell * half;
    }
    acc
}

/// int_0^t f(s) ds where f carries an s^{-gamma} factor at zero that the
/// substitution s = w^{1/q} removes (for f ~ s^{1-2H} use q = 2 - 2H).
pub fn integral_power_sub<F: Fn(f64) -> f64>(f: F, t: f64, q: f64) -> f64 {
    let p = 1.0 / q;
    graded_gl8(
        |w| {
            let s = w.powf(p);
            f(s) * p * w.powf(p - 1.0)
        },
        0.0,
        t.powf(q),
    )
}

pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
