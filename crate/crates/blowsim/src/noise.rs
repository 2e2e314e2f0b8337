//! Brownian motion, fractional Brownian motion, and the mixed noise
//! N_t = int_0^t a dB + int_0^t b dB^H on uniform time grids.
//!
//! Two fBm constructions are provided. The Cholesky sampler draws from the
//! exact Gaussian law and is used when the fBm is independent of (or merely
//! correlated with) the Brownian component. The Volterra sampler builds the
//! path from a given Brownian driver through the kernel K^H and is the only
//! construction that realizes the pathwise coupling B^H_t = int K^H(t,s) dB_s.

use crate::error::{Error, Result};
use crate::special::ln_beta;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Hard cap on the Cholesky construction; the factorization is O(n^3) and the
/// factor is O(n^2) memory.
pub const CHOLESKY_CAP: usize = 4096;

/// Hard cap on the Volterra weight table, which stores n(n+1)/2 doubles.
pub const VOLTERRA_CAP: usize = 8192;

/// Uniform grid on [0, horizon] with n_steps intervals (n_steps + 1 nodes).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::Domain(format!(
                "grid needs n_steps >= 2, got {n_steps}"
            )));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node t_i; exact at both endpoints (node(n_steps) == horizon).
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        self.horizon * (i as f64 / self.n_steps as f64)
    }
}

/// Hurst index of the fractional component, restricted to (1/2, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HurstParam {
    h: f64,
}

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.5 && h < 1.0) {
            return Err(Error::Domain(format!(
                "Hurst parameter must lie in (1/2, 1), got {h}"
            )));
        }
        Ok(HurstParam { h })
    }

    /// Degenerate H = 1/2 value, at which the Cholesky construction reduces
    /// to plain Brownian motion. Only for validating the sampler; the kernel
    /// operations and model validation reject it.
    pub fn brownian() -> Self {
        HurstParam { h: 0.5 }
    }

    pub fn value(&self) -> f64 {
        self.h
    }

    /// True in the high-memory regime H > 3/4 (extra hypotheses of the
    /// gamma-law lower bound).
    pub fn high(&self) -> bool {
        self.h > 0.75
    }
}

/// Deterministic coefficient t |-> c t^e appearing as a, b, or k.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientSpec {
    Constant(f64),
    Power { c: f64, e: f64 },
}

impl CoefficientSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CoefficientSpec::Constant(c) => {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(Error::Domain(format!(
                        "constant coefficient must be finite and >= 0, got {c}"
                    )));
                }
            }
            CoefficientSpec::Power { c, e } => {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(Error::Domain(format!(
                        "power coefficient amplitude must be finite and >= 0, got {c}"
                    )));
                }
                if !(e >= 0.0) || !e.is_finite() {
                    return Err(Error::Domain(format!(
                        "power coefficient exponent must be finite and >= 0, got {e}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            CoefficientSpec::Constant(c) => c,
            CoefficientSpec::Power { c, e } => {
                if e == 0.0 {
                    c
                } else {
                    c * t.powf(e)
                }
            }
        }
    }

    /// int_0^t f(s)^2 ds = c^2 t^{2e+1} / (2e+1), exact.
    pub fn integral_sq(&self, t: f64) -> f64 {
        match *self {
            CoefficientSpec::Constant(c) => c * c * t,
            CoefficientSpec::Power { c, e } => c * c * t.powf(2.0 * e + 1.0) / (2.0 * e + 1.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            CoefficientSpec::Constant(c) => c == 0.0,
            CoefficientSpec::Power { c, .. } => c == 0.0,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            CoefficientSpec::Constant(c) => Some(c),
            CoefficientSpec::Power { c, e } => {
                if e == 0.0 || c == 0.0 {
                    Some(c)
                } else {
                    None
                }
            }
        }
    }

    /// Exponent q with int_0^t f^2 = C t^{2q}; q = e + 1/2.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            CoefficientSpec::Constant(_) => 0.5,
            CoefficientSpec::Power { e, .. } => e + 0.5,
        }
    }

    /// Amplitude C with int_0^t f^2 = C t^{2q}; C = c^2 / (2q).
    pub fn growth_amplitude(&self) -> f64 {
        let q = self.growth_exponent();
        let c = match *self {
            CoefficientSpec::Constant(c) => c,
            CoefficientSpec::Power { c, .. } => c,
        };
        c * c / (2.0 * q)
    }
}

/// Tag recording which process a path realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    Bm,
    Fbm,
    Mixed,
}

/// A sampled path on a uniform grid; values[i] is the value at node t_i.
#[derive(Clone, Debug)]
pub struct NoisePath {
    grid: TimeGrid,
    values: Vec<f64>,
    kind: PathKind,
}

impl NoisePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(Error::GridMismatch(format!(
                "path has {} values but the grid has {} nodes",
                values.len(),
                grid.n_steps() + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::Domain(format!(
                "paths start at 0, got values[0] = {}",
                values[0]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault {
                context: "noise path construction".into(),
            });
        }
        Ok(NoisePath { grid, values, kind })
    }

    pub fn zero(grid: TimeGrid, kind: PathKind) -> Self {
        NoisePath {
            grid,
            values: vec![0.0; grid.n_steps() + 1],
            kind,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Increment over [t_j, t_{j+1}].
    pub fn increment(&self, j: usize) -> f64 {
        self.values[j + 1] - self.values[j]
    }
}

/// Coupling between the Brownian integrator B and the fBm B^H.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DependenceMode {
    /// B^H is built from B itself through the Volterra kernel.
    Identical,
    /// B^H independent of B (sampled from the exact law).
    Independent,
    /// B^H built from the driver W = rho B + sqrt(1-rho^2) Bperp.
    Correlated { rho: f64 },
}

impl DependenceMode {
    pub fn validate(&self) -> Result<()> {
        if let DependenceMode::Correlated { rho } = *self {
            if !(rho.abs() <= 1.0) {
                return Err(Error::Domain(format!(
                    "correlation must satisfy |rho| <= 1, got {rho}"
                )));
            }
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
const GL4: [(f64, f64); 4] = [
    (-0.8611363115940526, 0.34785484513745385),
    (-0.33998104358485626, 0.6521451548625461),
    (0.33998104358485626, 0.6521451548625461),
    (0.8611363115940526, 0.34785484513745385),
];

const GL8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.10122853629037626),
    (-0.7966664774136267, 0.22238103445337448),
    (-0.525532409916329, 0.3137066458778873),
    (-0.18343464249564978, 0.362683783378362),
    (0.18343464249564978, 0.362683783378362),
    (0.525532409916329, 0.3137066458778873),
    (0.7966664774136267, 0.22238103445337448),
    (0.9602898564975363, 0.10122853629037626),
];

/// Normalization constant C_H = sqrt( H(2H-1) / B(2-2H, H-1/2) ).
pub fn c_h(h: HurstParam) -> Result<f64> {
    let hv = h.value();
    if hv <= 0.5 {
        return Err(Error::Domain(
            "the Volterra kernel requires H > 1/2".into(),
        ));
    }
    let lb = ln_beta(2.0 - 2.0 * hv, hv - 0.5)?;
    Ok((hv * (2.0 * hv - 1.0) * (-lb).exp()).sqrt())
}

/// int_{u_lo}^{u_hi} u^{q-1} (s+u)^{nu} du.
///
/// The singular factor u^{q-1} is absorbed exactly by the substitution
/// w = u^q (so du u^{q-1} = dw/q); Gauss-Legendre handles the smooth
/// remainder (s + w^{1/q})^{nu}. Valid for 0 <= u_lo < u_hi and q > 0.
fn power_weighted_cell(s: f64, q: f64, nu: f64, u_lo: f64, u_hi: f64, gl: &[(f64, f64)]) -> f64 {
    let inv_q = 1.0 / q;
    let w_lo = u_lo.powf(q);
    let w_hi = u_hi.powf(q);
    let half = 0.5 * (w_hi - w_lo);
    let mid = 0.5 * (w_hi + w_lo);
    let mut acc = 0.0;
    for &(x, wgt) in gl {
        let w = mid + half * x;
        let u = w.powf(inv_q);
        acc += wgt * (s + u).powf(nu);
    }
    acc * half * inv_q
}

/// int_s^t (sigma-s)^{H-3/2} sigma^{nu} dsigma via geometrically growing
/// cells in u = sigma - s, eight-point Gauss-Legendre per cell. The plain
/// kernel uses nu = H - 1/2; a power weight r^e inside the integral shifts
/// nu by e.
pub(crate) fn kernel_ingredient_nu(t: f64, s: f64, h: f64, nu: f64) -> f64 {
    let q = h - 0.5;
    let len = t - s;
    let mut cell = len.min(s);
    let mut u_lo = 0.0;
    let mut acc = 0.0;
    while u_lo < len {
        let u_hi = (u_lo + cell).min(len);
        acc += power_weighted_cell(s, q, nu, u_lo, u_hi, &GL8);
        u_lo = u_hi;
        cell *= 2.0;
    }
    acc
}

/// G(t, s) = int_s^t (sigma-s)^{H-3/2} sigma^{H-1/2} dsigma.
fn kernel_ingredient(t: f64, s: f64, h: f64) -> f64 {
    kernel_ingredient_nu(t, s, h, h - 0.5)
}

/// Volterra kernel K^H(t, s); zero for t <= s.
pub fn kernel_kh(t: f64, s: f64, h: HurstParam) -> Result<f64> {
    if !(t >= 0.0) || !(s >= 0.0) || !t.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!(
            "kernel arguments must be finite and >= 0, got t = {t}, s = {s}"
        )));
    }
    if t <= s {
        return Ok(0.0);
    }
    if s == 0.0 {
        return Err(Error::Domain(
            "K^H(t, 0) diverges as s^{1/2-H}; evaluate at interior points s > 0".into(),
        ));
    }
    let hv = h.value();
    let ch = c_h(h)?;
    Ok(ch * s.powf(0.5 - hv) * kernel_ingredient(t, s, hv))
}

/// Standard Brownian path: cumulative sum of sqrt(dt) N(0,1) increments.
pub fn sample_bm<R: Rng + ?Sized>(grid: TimeGrid, rng: &mut R) -> NoisePath {
    let n = grid.n_steps();
    let sdt = grid.dt().sqrt();
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        acc += sdt * z;
        values.push(acc);
    }
    NoisePath {
        grid,
        values,
        kind: PathKind::Bm,
    }
}

/// Exact-law fBm sampler: Cholesky factor of the covariance matrix, built
/// once per (grid, H) and shared read-only across threads.
pub struct FbmCholesky {
    grid: TimeGrid,
    h: HurstParam,
    /// Lower-triangular factor, rows packed including the diagonal.
    factor: Vec<f64>,
}

impl FbmCholesky {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        let n = grid.n_steps();
        if n > CHOLESKY_CAP {
            return Err(Error::GridCap {
                what: "the Cholesky fBm construction",
                n,
                cap: CHOLESKY_CAP,
            });
        }
        let two_h = 2.0 * h.value();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let ti = grid.node(i + 1);
            for j in 0..=i {
                let tj = grid.node(j + 1);
                let cov = 0.5 * (ti.powf(two_h) + tj.powf(two_h) - (ti - tj).abs().powf(two_h));
                m[(i, j)] = cov;
                m[(j, i)] = cov;
            }
        }
        let chol = nalgebra::linalg::Cholesky::new(m).ok_or(Error::CholeskyFailed { n })?;
        let l = chol.l();
        let mut factor = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                factor.push(l[(i, j)]);
            }
        }
        Ok(FbmCholesky { grid, h, factor })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    /// Draws n standard normals from `rng` and returns L z prefixed with 0.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NoisePath {
        let n = self.grid.n_steps();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        let mut off = 0;
        for i in 0..n {
            let row = &self.factor[off..off + i + 1];
            let mut acc = 0.0;
            for (lij, zj) in row.iter().zip(&z) {
                acc += lij * zj;
            }
            values.push(acc);
            off += i + 1;
        }
        NoisePath {
            grid: self.grid,
            values,
            kind: PathKind::Fbm,
        }
    }
}

/// One-shot exact fBm draw; builds the factorization, so prefer
/// [`FbmCholesky`] when sampling many paths on one grid.
pub fn sample_fbm_cholesky<R: Rng + ?Sized>(
    grid: TimeGrid,
    h: HurstParam,
    rng: &mut R,
) -> Result<NoisePath> {
    Ok(FbmCholesky::new(grid, h)?.sample(rng))
}

/// Midpoint-quadrature Volterra weights K^H(t_i, t_{j+1/2}).
///
/// Stored column-major: column j holds the kernel values for all nodes
/// i > j, so applying the table to a driver is a sequence of axpy passes.
pub struct VolterraWeights {
    grid: TimeGrid,
    h: HurstParam,
    cols: Vec<f64>,
}

impl VolterraWeights {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        let n = grid.n_steps();
        if n > VOLTERRA_CAP {
            return Err(Error::GridCap {
                what: "the Volterra fBm construction",
                n,
                cap: VOLTERRA_CAP,
            });
        }
        if h.value() <= 0.5 {
            return Err(Error::Domain(
                "the Volterra construction requires H > 1/2".into(),
            ));
        }
        let ch = c_h(h)?;
        let hv = h.value();
        let dt = grid.dt();
        let mut cols = vec![0.0f64; n * (n + 1) / 2];
        // Column j occupies n-j entries; hand each column its own slice.
        let mut slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
        let mut rest = cols.as_mut_slice();
        for j in 0..n {
            let (head, tail) = rest.split_at_mut(n - j);
            slices.push((j, head));
            rest = tail;
        }
        slices.into_par_iter().for_each(|(j, col)| {
            fill_volterra_column(j, col, dt, hv, ch);
        });
        Ok(VolterraWeights { grid, h, cols })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    /// Weight K^H(t_i, t_{j+1/2}) for i > j.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j < i && i <= self.grid.n_steps());
        let n = self.grid.n_steps();
        // Offset of column j: sum_{j'<j} (n - j') = j(2n - j + 1)/2.
        let off = j * (2 * n - j + 1) / 2;
        self.cols[off + (i - j - 1)]
    }

    /// B^H_{t_i} = sum_{j<i} K^H(t_i, t_{j+1/2}) (B_{t_{j+1}} - B_{t_j}).
    pub fn sample(&self, driver: &NoisePath) -> Result<NoisePath> {
        if driver.grid() != self.grid {
            return Err(Error::GridMismatch(
                "Volterra driver lives on a different grid than the weight table".into(),
            ));
        }
        if driver.kind() != PathKind::Bm {
            return Err(Error::Domain(
                "the Volterra construction integrates a Brownian driver".into(),
            ));
        }
        let n = self.grid.n_steps();
        let mut values = vec![0.0f64; n + 1];
        let mut off = 0;
        for j in 0..n {
            let db = driver.increment(j);
            let col = &self.cols[off..off + (n - j)];
            for (r, w) in col.iter().enumerate() {
                values[j + 1 + r] += w * db;
            }
            off += n - j;
        }
        NoisePath::new(self.grid, values, PathKind::Fbm)
    }
}

/// Kernel values K^H(t_i, s) for fixed s = (j + 1/2) dt and every node
/// t_i > s, sharing one running integral G(t_i, s) across the column.
fn fill_volterra_column(j: usize, col: &mut [f64], dt: f64, h: f64, ch: f64) {
    let s = (j as f64 + 0.5) * dt;
    let q = h - 0.5;
    let pref = ch * s.powf(-q);
    // First cell [0, dt/2] carries the u^{q-1} singularity: eight-point rule.
    let mut acc = power_weighted_cell(s, q, q, 0.0, 0.5 * dt, &GL8);
    col[0] = pref * acc;
    for r in 1..col.len() {
        let u_lo = (r as f64 - 0.5) * dt;
        let u_hi = (r as f64 + 0.5) * dt;
        acc += power_weighted_cell(s, q, q, u_lo, u_hi, &GL4);
        col[r] = pref * acc;
    }
}

/// Volterra-coupled fBm path from an explicit Brownian driver; builds the
/// weight table, so prefer [`VolterraWeights`] for ensembles.
pub fn sample_fbm_volterra(grid: TimeGrid, h: HurstParam, driver: &NoisePath) -> Result<NoisePath> {
    VolterraWeights::new(grid, h)?.sample(driver)
}

/// Left-point discretization of N_t = int a dB + int b dB^H.
///
/// Ito sums must be left-point; the Young integral against B^H is also taken
/// left-point, which converges for H > 1/2.
pub fn mixed_noise(
    a: &CoefficientSpec,
    b: &CoefficientSpec,
    bm: &NoisePath,
    fbm: &NoisePath,
) -> Result<NoisePath> {
    a.validate()?;
    b.validate()?;
    if bm.grid() != fbm.grid() {
        return Err(Error::GridMismatch(
            "Brownian and fBm paths live on different grids".into(),
        ));
    }
    if bm.kind() != PathKind::Bm || fbm.kind() != PathKind::Fbm {
        return Err(Error::Domain(
            "mixed_noise expects a BM path and an FBM path, in that order".into(),
        ));
    }
    let grid = bm.grid();
    let n = grid.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for j in 0..n {
        let tj = grid.node(j);
        acc += a.eval(tj) * bm.increment(j) + b.eval(tj) * fbm.increment(j);
        values.push(acc);
    }
    NoisePath::new(grid, values, PathKind::Mixed)
}
