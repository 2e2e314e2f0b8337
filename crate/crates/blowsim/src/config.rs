//! key=value configuration with strict parsing: unknown keys, duplicate
//! keys, and malformed values are errors, and the canonical echo of a parsed
//! configuration parses back to the same configuration.

use crate::error::{Error, Result};
use crate::functionals::ModelParams;
use crate::montecarlo::ExperimentConfig;
use crate::noise::{CoefficientSpec, DependenceMode, HurstParam, TimeGrid};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffKind {
    Constant,
    Power,
}

#[derive(Clone, Copy, Debug)]
pub struct CoeffConfig {
    pub kind: CoeffKind,
    pub c: f64,
    pub e: f64,
}

impl CoeffConfig {
    fn constant(c: f64) -> Self {
        CoeffConfig {
            kind: CoeffKind::Constant,
            c,
            e: 0.0,
        }
    }

    pub fn spec(&self) -> CoefficientSpec {
        match self.kind {
            CoeffKind::Constant => CoefficientSpec::Constant(self.c),
            CoeffKind::Power => CoefficientSpec::Power {
                c: self.c,
                e: self.e,
            },
        }
    }
}

/// The full application configuration with defaults for every key.
#[derive(Clone, Debug)]
pub struct AppConfig {
    pub h: f64,
    pub beta: f64,
    pub c_low: f64,
    pub lambda: f64,
    pub lambda0: f64,
    pub p_scale: f64,
    /// None means "derive as p_scale * pi/8 after parsing".
    pub pairing: Option<f64>,
    pub psi_sup: f64,
    pub a: CoeffConfig,
    pub b: CoeffConfig,
    pub k: CoeffConfig,
    pub t_horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub dependence: DependenceKind,
    pub rho: f64,
    pub seed: u64,
    pub n_modes: usize,
    pub threshold: f64,
    pub substeps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DependenceKind {
    Identical,
    Independent,
    Correlated,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            h: 0.75,
            beta: 1.0,
            c_low: 1.0,
            lambda: 1.0,
            lambda0: 1.0,
            p_scale: 16.0 / PI,
            pairing: None,
            psi_sup: 0.5,
            a: CoeffConfig::constant(0.5),
            b: CoeffConfig::constant(0.5),
            k: CoeffConfig::constant(std::f64::consts::SQRT_2),
            t_horizon: 2.0,
            n_steps: 1000,
            n_paths: 1000,
            dependence: DependenceKind::Identical,
            rho: 0.0,
            seed: 42,
            n_modes: 64,
            threshold: 1e8,
            substeps: 0,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("key {key}: expected a number, got '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("key {key}: expected a nonnegative integer, got '{value}'")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Config(format!("key {key}: expected a nonnegative integer, got '{value}'")))
}

impl AppConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_strict(&text)
    }

    pub fn from_str_strict(text: &str) -> Result<Self> {
        let mut cfg = AppConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
            seen.push(key.to_string());
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Applies one key. Unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model.H" => self.h = parse_f64(key, value)?,
            "model.beta" => self.beta = parse_f64(key, value)?,
            "model.C" => self.c_low = parse_f64(key, value)?,
            "model.Lambda" => self.lambda = parse_f64(key, value)?,
            "model.lambda0" => self.lambda0 = parse_f64(key, value)?,
            "model.p_scale" => self.p_scale = parse_f64(key, value)?,
            "model.pairing" => self.pairing = Some(parse_f64(key, value)?),
            "model.psi_sup" => self.psi_sup = parse_f64(key, value)?,
            "coeff.a.kind" => self.a.kind = parse_kind(key, value)?,
            "coeff.a.c" => self.a.c = parse_f64(key, value)?,
            "coeff.a.e" => self.a.e = parse_f64(key, value)?,
            "coeff.b.kind" => self.b.kind = parse_kind(key, value)?,
            "coeff.b.c" => self.b.c = parse_f64(key, value)?,
            "coeff.b.e" => self.b.e = parse_f64(key, value)?,
            "coeff.k.kind" => self.k.kind = parse_kind(key, value)?,
            "coeff.k.c" => self.k.c = parse_f64(key, value)?,
            "coeff.k.e" => self.k.e = parse_f64(key, value)?,
            "grid.T" => self.t_horizon = parse_f64(key, value)?,
            "grid.n_steps" => self.n_steps = parse_usize(key, value)?,
            "mc.n_paths" => self.n_paths = parse_usize(key, value)?,
            "mc.dependence" => {
                self.dependence = match value {
                    "identical" => DependenceKind::Identical,
                    "independent" => DependenceKind::Independent,
                    "correlated" => DependenceKind::Correlated,
                    other => {
                        return Err(Error::Config(format!(
                            "key mc.dependence: expected identical|independent|correlated, got '{other}'"
                        )))
                    }
                }
            }
            "mc.rho" => self.rho = parse_f64(key, value)?,
            "mc.seed" => self.seed = parse_u64(key, value)?,
            "solver.n_modes" => self.n_modes = parse_usize(key, value)?,
            "solver.threshold" => self.threshold = parse_f64(key, value)?,
            "solver.substeps" => self.substeps = parse_usize(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown key '{other}'")));
            }
        }
        Ok(())
    }

    /// The pairing <phi, phi_0>; defaults to p_scale * pi/8 (phi = p psi_0).
    pub fn pairing_value(&self) -> f64 {
        self.pairing.unwrap_or(self.p_scale * PI / 8.0)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            h: HurstParam::new(self.h)?,
            beta: self.beta,
            c_low: self.c_low,
            lambda: self.lambda,
            lambda0: self.lambda0,
            a: self.a.spec(),
            b: self.b.spec(),
            k: self.k.spec(),
            pairing: self.pairing_value(),
            psi_sup: self.psi_sup,
            p_scale: self.p_scale,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_horizon, self.n_steps)
    }

    pub fn dependence_mode(&self) -> Result<DependenceMode> {
        let mode = match self.dependence {
            DependenceKind::Identical => DependenceMode::Identical,
            DependenceKind::Independent => DependenceMode::Independent,
            DependenceKind::Correlated => DependenceMode::Correlated { rho: self.rho },
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig {
            params: self.model_params()?,
            dependence: self.dependence_mode()?,
            grid: self.grid()?,
            n_paths: self.n_paths,
            master_seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full validation pass: every derived object is constructed once.
    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        if self.n_modes < 8 {
            return Err(Error::Config(format!(
                "solver.n_modes must be at least 8, got {}",
                self.n_modes
            )));
        }
        if !(self.threshold >= 1e6) {
            return Err(Error::Config(format!(
                "solver.threshold must be >= 1e6, got {}",
                self.threshold
            )));
        }
        for (name, c) in [("a", &self.a), ("b", &self.b), ("k", &self.k)] {
            if c.kind == CoeffKind::Constant && c.e != 0.0 {
                return Err(Error::Config(format!(
                    "coeff.{name}.e was set but coeff.{name}.kind is constant"
                )));
            }
        }
        Ok(())
    }

    /// Canonical echo: every key, fixed order, values printed so that
    /// parsing the echo reproduces this configuration exactly.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let kind = |k: CoeffKind| match k {
            CoeffKind::Constant => "constant",
            CoeffKind::Power => "power",
        };
        let dep = match self.dependence {
            DependenceKind::Identical => "identical",
            DependenceKind::Independent => "independent",
            DependenceKind::Correlated => "correlated",
        };
        let _ = writeln!(s, "model.H = {}", self.h);
        let _ = writeln!(s, "model.beta = {}", self.beta);
        let _ = writeln!(s, "model.C = {}", self.c_low);
        let _ = writeln!(s, "model.Lambda = {}", self.lambda);
        let _ = writeln!(s, "model.lambda0 = {}", self.lambda0);
        let _ = writeln!(s, "model.p_scale = {}", self.p_scale);
        let _ = writeln!(s, "model.pairing = {}", self.pairing_value());
        let _ = writeln!(s, "model.psi_sup = {}", self.psi_sup);
        for (name, c) in [("a", &self.a), ("b", &self.b), ("k", &self.k)] {
            let _ = writeln!(s, "coeff.{name}.kind = {}", kind(c.kind));
            let _ = writeln!(s, "coeff.{name}.c = {}", c.c);
            if c.kind == CoeffKind::Power {
                let _ = writeln!(s, "coeff.{name}.e = {}", c.e);
            }
        }
        let _ = writeln!(s, "grid.T = {}", self.t_horizon);
        let _ = writeln!(s, "grid.n_steps = {}", self.n_steps);
        let _ = writeln!(s, "mc.n_paths = {}", self.n_paths);
        let _ = writeln!(s, "mc.dependence = {dep}");
        let _ = writeln!(s, "mc.rho = {}", self.rho);
        let _ = writeln!(s, "mc.seed = {}", self.seed);
        let _ = writeln!(s, "solver.n_modes = {}", self.n_modes);
        let _ = writeln!(s, "solver.threshold = {}", self.threshold);
        let _ = writeln!(s, "solver.substeps = {}", self.substeps);
        s
    }
}

fn parse_kind(key: &str, value: &str) -> Result<CoeffKind> {
    match value {
        "constant" => Ok(CoeffKind::Constant),
        "power" => Ok(CoeffKind::Power),
        other => Err(Error::Config(format!(
            "key {key}: expected constant|power, got '{other}'"
        ))),
    }
}
