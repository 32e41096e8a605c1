//! Spectral-Galerkin solver for the stochastic Cahn-Hilliard equation
//!
//! ```text
//! dφ - div(m(φ) ∇μ) dt = G(φ) dW,    μ = -Δφ + F'(φ)
//! ```
//!
//! on a box with homogeneous Neumann conditions, with possibly degenerate
//! mobility `m`, singular double-well potentials `F` (logarithmic or
//! double-obstacle) and multiplicative superposition noise `G(φ)u_k = g_k(φ)`.
//!
//! Two approximation pipelines are provided:
//!
//! - the *regular* pipeline: positive mobility, potential replaced by its
//!   λ-Yosida regularization, Faedo-Galerkin truncation to `n` cosine modes;
//! - the *degenerate* pipeline: potential, mobility and noise truncated at
//!   `±(1-ε)` so that the regular machinery applies at fixed ε.
//!
//! On top of the solver, [`diagnostics`] turns the a-priori estimates
//! (energy inequality, mass moments, confinement `(|φ|-1)_+ = O(√ε)`)
//! into Monte Carlo pass/fail checks.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod mobility;
pub mod noise;
pub mod potentials;
pub mod quad;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use integrator::{simulate_path, SolverConfig, StateRecord};
pub use mobility::{MobilitySpec, TruncatedMobility};
pub use noise::NoiseSpec;
pub use potentials::{PotentialSpec, RegularizedPotential};
pub use spectral::{SpectralField, SpectralGrid};
