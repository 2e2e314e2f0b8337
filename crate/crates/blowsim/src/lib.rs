//! Simulation and analysis of finite-time blowup for the stochastic heat
//! equation
//!
//! ```text
//!     du = [ (1/2) k^2(t) Lu + g(u) ] dt + u dN_t
//! ```
//!
//! on the interval (0, pi) with Dirichlet boundary conditions, where L is the
//! Laplacian, g is a superlinear drift with g(z) >= C z^{1+beta} for z >= 0,
//! and N_t = int_0^t a dB + int_0^t b dB^H mixes a Brownian motion with a
//! fractional Brownian motion of Hurst index H > 1/2.
//!
//! The crate provides:
//!
//! * exact and Volterra-kernel samplers for fBm and the mixed noise
//!   ([`noise`]),
//! * pathwise hitting-time functionals whose crossings bracket the blowup
//!   time ([`functionals`]),
//! * closed-form upper and lower bounds on blowup probabilities together with
//!   a gamma-law identity that is exact for constant coefficients
//!   ([`bounds`]),
//! * a pseudo-spectral exponential-Euler solver for the pathwise-transformed
//!   equation that detects blowup numerically ([`spde`]),
//! * Monte Carlo drivers that confront every bound with simulation
//!   ([`montecarlo`]),
//! * a command line interface ([`cli`], [`config`]).

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod functionals;
pub mod montecarlo;
pub mod noise;
pub mod spde;
pub mod special;

pub use error::{Error, Result};
