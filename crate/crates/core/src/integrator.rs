//! Stabilized IMEX Euler-Maruyama for the Galerkin coefficient system.
//!
//! One step solves, coefficient-wise,
//!
//! ```text
//! (1 + dt κ α_j²) a_j' = a_j + dt (drift_j + κ α_j² a_j) + noise_j
//! ```
//!
//! where `drift = P_n div(m(φ)∇μ)`, `μ = -Δφ + P_n F_reg'(φ)` and `noise`
//! is the projection of `Σ_k g_k(φ) ΔW_k`. Every term of the energy and
//! entropy ledgers is tallied with left-endpoint quadrature in time.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::mobility::{MobilitySpec, TruncatedMobility};
use crate::noise::NoiseSpec;
use crate::potentials::{RegMode, RegularizedPotential};
use crate::rng::{BrownianIncrements, IncrementSource};
use crate::spectral::{SpectralField, SpectralGrid};

pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// Mobility as seen by the solver: the raw one (λ pipeline, must be positive)
/// or its ε-truncation.
#[derive(Debug, Clone)]
pub enum Mobility {
    Plain(MobilitySpec),
    Truncated(TruncatedMobility),
}

impl Mobility {
    pub fn m(&self, r: f64) -> f64 {
        match self {
            Mobility::Plain(s) => s.m_unchecked(r),
            Mobility::Truncated(t) => t.m(r),
        }
    }

    pub fn sup_m(&self) -> f64 {
        match self {
            Mobility::Plain(s) => s.sup_m(),
            Mobility::Truncated(t) => t.sup_m(),
        }
    }

    pub fn lip_m(&self) -> f64 {
        match self {
            Mobility::Plain(s) => s.lip_m(),
            Mobility::Truncated(t) => t.lip_m(),
        }
    }

    /// Entropy density `M(r)`; NaN where it is not defined.
    pub fn entropy(&self, r: f64) -> f64 {
        match self {
            Mobility::Plain(s) => s.eval_big_m(r).unwrap_or(f64::NAN),
            Mobility::Truncated(t) => t.entropy(r),
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            Mobility::Plain(_) => None,
            Mobility::Truncated(t) => Some(t.eps()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    /// `mean + amplitude · cos(mode π x₁ / L₁)`.
    Cosine { amplitude: f64, mode: usize, mean: f64 },
    /// Independent uniform values in `mean ± amplitude` at each node,
    /// drawn from a stream reserved for initial data.
    UniformRandom { amplitude: f64, mean: f64 },
    Constant { value: f64 },
}

impl InitialDatum {
    /// Grid values before projection.
    pub fn sample(&self, grid: &SpectralGrid, seed: u64) -> Vec<f64> {
        match *self {
            InitialDatum::Cosine {
                amplitude,
                mode,
                mean,
            } => {
                let l = grid.lengths()[0];
                (0..grid.n_points())
                    .map(|i| {
                        let x = grid.node(i)[0];
                        mean + amplitude * (std::f64::consts::PI * mode as f64 * x / l).cos()
                    })
                    .collect()
            }
            InitialDatum::UniformRandom { amplitude, mean } => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                (0..grid.n_points())
                    .map(|_| mean + amplitude * rng.random_range(-1.0..=1.0))
                    .collect()
            }
            InitialDatum::Constant { value } => vec![value; grid.n_points()],
        }
    }

    pub fn project(&self, grid: &Arc<SpectralGrid>, seed: u64) -> Result<SpectralField> {
        SpectralField::from_values(grid.clone(), &self.sample(grid, seed))
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid: Arc<SpectralGrid>,
    pub potential: Arc<RegularizedPotential>,
    pub mobility: Arc<Mobility>,
    pub noise: NoiseSpec,
    pub t_final: f64,
    pub dt: f64,
    pub kappa: f64,
    pub seed: u64,
    pub init: InitialDatum,
    /// Record every this many steps; the last step is always recorded.
    pub record_every: usize,
}

impl SolverConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn eps(&self) -> Option<f64> {
        self.potential.eps()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Validation(format!("T must be positive, got {}", self.t_final)));
        }
        let steps = self.n_steps();
        if steps == 0 || (steps as f64 * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::Validation(format!(
                "T = {} is not a whole number of steps of dt = {}",
                self.t_final, self.dt
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Validation(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if self.record_every == 0 {
            return Err(Error::Validation("record_every must be at least 1".into()));
        }
        match (self.potential.mode(), self.mobility.as_ref()) {
            (RegMode::Lambda(_), Mobility::Plain(m)) => {
                if m.is_degenerate() || !(m.inf_m() > 0.0) {
                    return Err(Error::Validation(
                        "the lambda pipeline needs a strictly positive mobility; use epsilon for degenerate mobilities"
                            .into(),
                    ));
                }
                if self.noise.freeze_eps().is_some() {
                    return Err(Error::Validation(
                        "epsilon-truncated noise cannot be used in the lambda pipeline".into(),
                    ));
                }
            }
            (RegMode::Eps(eps), Mobility::Truncated(t)) => {
                if t.eps() != eps {
                    return Err(Error::Validation(format!(
                        "potential truncated at epsilon = {eps} but mobility at {}",
                        t.eps()
                    )));
                }
                if !self.noise.is_off() && self.noise.freeze_eps() != Some(eps) {
                    return Err(Error::Validation(format!(
                        "noise must be truncated at the pipeline epsilon = {eps}"
                    )));
                }
            }
            (RegMode::Lambda(_), Mobility::Truncated(_)) => {
                return Err(Error::Validation(
                    "a lambda-regularized potential cannot be paired with a truncated mobility".into(),
                ))
            }
            (RegMode::Eps(_), Mobility::Plain(_)) => {
                return Err(Error::Validation(
                    "an epsilon-truncated potential needs the matching truncated mobility".into(),
                ))
            }
        }
        Ok(())
    }

    /// Projected initial datum, checked against the pipeline's admissible set.
    pub fn initial_field(&self) -> Result<SpectralField> {
        let phi0 = self.init.project(&self.grid, self.seed)?;
        let values = phi0.to_values();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("initial datum is not finite".into()));
        }
        if let Some(eps) = self.eps() {
            let sup = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if sup >= 1.0 - eps {
                return Err(Error::Validation(format!(
                    "initial datum must satisfy sup|phi0| < 1 - epsilon = {}, got {sup}",
                    1.0 - eps
                )));
            }
        }
        Ok(phi0)
    }
}

/// Snapshot of one path at one time, with the running ledger tallies.
#[derive(Debug, Clone)]
pub struct StateRecord {
    pub t: f64,
    pub step: usize,
    pub phi: SpectralField,
    /// Spatial mean of φ.
    pub mass: f64,
    pub energy: f64,
    /// `‖∇φ‖²`.
    pub grad_sq: f64,
    /// `∫ F_reg(φ)`.
    pub f_l1: f64,
    /// `∫∫ m(φ)|∇μ|²`.
    pub dissipation_acc: f64,
    /// `∫ Σ_k ∫ F_reg''(φ)|g_k(φ)|²`.
    pub ito_f_acc: f64,
    /// `∫ Σ_k ∫ M''(φ)|g_k(φ)|²` (truncated mobility only).
    pub ito_m_acc: f64,
    /// `∫ ‖∇φ‖²`.
    pub grad_sq_acc: f64,
    /// `Σ (μ, ΔN)` over steps, `ΔN` the projected noise increment.
    pub stoch_int_acc: f64,
    /// Sum of the zeroth noise coefficients.
    pub noise_mass_acc: f64,
    /// `∫ M(φ)`.
    pub entropy: f64,
    pub sup_abs_phi: f64,
    /// `‖(|φ| - 1)₊‖_{L²}`.
    pub confinement_l2: f64,
}

#[derive(Debug, Clone, Default)]
struct Tallies {
    dissipation: f64,
    ito_f: f64,
    ito_m: f64,
    grad_sq: f64,
    stoch_int: f64,
    noise_mass: f64,
}

/// Mutable state of one path.
#[derive(Debug, Clone)]
pub struct PathState {
    pub phi: SpectralField,
    pub t: f64,
    pub step: usize,
    tallies: Tallies,
    increments: Vec<f64>,
}

impl PathState {
    pub fn new(phi: SpectralField) -> Self {
        PathState {
            phi,
            t: 0.0,
            step: 0,
            tallies: Tallies::default(),
            increments: Vec::new(),
        }
    }

    /// One step with standard normal draws `ξ` (one per noise mode).
    pub fn step(&mut self, cfg: &SolverConfig, xi: &[f64]) -> Result<()> {
        let root = cfg.dt.sqrt();
        let dw: Vec<f64> = xi.iter().map(|x| root * x).collect();
        self.step_with_increments(cfg, &dw)
    }

    /// One step with Brownian increments `ΔW_k` already scaled by `√dt`.
    pub fn step_with_increments(&mut self, cfg: &SolverConfig, dw: &[f64]) -> Result<()> {
        let grid = &cfg.grid;
        let dt = cfg.dt;
        let phi_v = self.phi.to_values();
        guard(&phi_v, self.step, self.t)?;

        let pot = &cfg.potential;
        let mut d1 = Vec::with_capacity(phi_v.len());
        let mut d2 = Vec::with_capacity(phi_v.len());
        for &r in &phi_v {
            let (a, b) = pot.d1_d2(r);
            d1.push(a);
            d2.push(b);
        }
        let mu = chemical_potential_from(&self.phi, &d1)?;
        let mut grad_mu = grid.gradient_values(&mu)?;
        let m_v: Vec<f64> = phi_v.iter().map(|&r| cfg.mobility.m(r)).collect();
        let weights = grid.weights();
        let mut dissipation = 0.0;
        for g in grad_mu.iter_mut() {
            for ((gi, m), w) in g.iter_mut().zip(&m_v).zip(weights) {
                dissipation += w * m * *gi * *gi;
                *gi *= m;
            }
        }
        let drift = grid.divergence_coeffs(&grad_mu)?;

        let noise_c = if cfg.noise.is_off() {
            None
        } else {
            let w = cfg.noise.combine(dw)?;
            let mut ito_f = 0.0;
            let mut ito_m = 0.0;
            let mut vals = Vec::with_capacity(phi_v.len());
            for (i, &r) in phi_v.iter().enumerate() {
                let s = cfg.noise.shape_value(r);
                let s2w = weights[i] * s * s;
                ito_f += s2w * d2[i];
                if let Mobility::Truncated(t) = cfg.mobility.as_ref() {
                    ito_m += s2w * t.entropy_d2(r);
                }
                vals.push(s * w);
            }
            let sig2 = cfg.noise.sigma_sq_sum();
            self.tallies.ito_f += dt * sig2 * ito_f;
            self.tallies.ito_m += dt * sig2 * ito_m;
            Some(grid.to_coeffs(&vals)?)
        };

        self.tallies.dissipation += dt * dissipation;
        self.tallies.grad_sq += dt * self.phi.grad_sq();
        if let Some(nc) = &noise_c {
            self.tallies.stoch_int += mu.iter().zip(nc).map(|(a, b)| a * b).sum::<f64>();
            self.tallies.noise_mass += nc[0];
        }

        let alpha = grid.alpha();
        let kappa = cfg.kappa;
        let a = self.phi.coeffs_mut();
        for j in 0..a.len() {
            let stiff = kappa * alpha[j] * alpha[j];
            let noise = noise_c.as_ref().map_or(0.0, |n| n[j]);
            a[j] = (a[j] + dt * (drift[j] + stiff * a[j]) + noise) / (1.0 + dt * stiff);
        }
        self.step += 1;
        self.t = self.step as f64 * dt;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: self.step,
                time: self.t,
                reason: "non-finite coefficient".into(),
            });
        }
        Ok(())
    }

    pub fn record(&self, cfg: &SolverConfig) -> StateRecord {
        let grid = &cfg.grid;
        let v = self.phi.to_values();
        let w = grid.weights();
        let mut f_l1 = 0.0;
        let mut entropy = 0.0;
        let mut conf = 0.0;
        let mut sup = 0.0_f64;
        for (&r, &wi) in v.iter().zip(w) {
            f_l1 += wi * cfg.potential.value(r);
            entropy += wi * cfg.mobility.entropy(r);
            let ex = (r.abs() - 1.0).max(0.0);
            conf += wi * ex * ex;
            sup = sup.max(r.abs());
        }
        let grad_sq = self.phi.grad_sq();
        StateRecord {
            t: self.t,
            step: self.step,
            phi: self.phi.clone(),
            mass: self.phi.mean(),
            energy: 0.5 * grad_sq + f_l1,
            grad_sq,
            f_l1,
            dissipation_acc: self.tallies.dissipation,
            ito_f_acc: self.tallies.ito_f,
            ito_m_acc: self.tallies.ito_m,
            grad_sq_acc: self.tallies.grad_sq,
            stoch_int_acc: self.tallies.stoch_int,
            noise_mass_acc: self.tallies.noise_mass,
            entropy,
            sup_abs_phi: sup,
            confinement_l2: conf.sqrt(),
        }
    }

    /// Draws the next increments from `src` and steps.
    pub fn step_from(&mut self, cfg: &SolverConfig, src: &mut dyn IncrementSource) -> Result<()> {
        let mut inc = std::mem::take(&mut self.increments);
        inc.resize(cfg.noise.modes(), 0.0);
        src.fill(&mut inc);
        let out = self.step_with_increments(cfg, &inc);
        self.increments = inc;
        out
    }
}

fn guard(values: &[f64], step: usize, time: f64) -> Result<()> {
    for &v in values {
        if !v.is_finite() {
            return Err(Error::BlowUp {
                step,
                time,
                reason: "non-finite value".into(),
            });
        }
        if v.abs() > BLOW_UP_THRESHOLD {
            return Err(Error::BlowUp {
                step,
                time,
                reason: format!("|phi| = {:e} exceeds {BLOW_UP_THRESHOLD:e}", v.abs()),
            });
        }
    }
    Ok(())
}

fn chemical_potential_from(phi: &SpectralField, d1_values: &[f64]) -> Result<Vec<f64>> {
    let grid = phi.grid();
    let proj = grid.to_coeffs(d1_values)?;
    Ok(phi
        .coeffs()
        .iter()
        .zip(grid.alpha())
        .zip(proj)
        .map(|((a, al), p)| al * a + p)
        .collect())
}

/// `μ = -Δφ + P_n F_reg'(φ)`.
pub fn chemical_potential(phi: &SpectralField, pot: &RegularizedPotential) -> Result<SpectralField> {
    let d1: Vec<f64> = phi.to_values().iter().map(|&r| pot.d1(r)).collect();
    SpectralField::new(phi.grid().clone(), chemical_potential_from(phi, &d1)?)
}

/// `P_n div(m(φ) ∇μ)`.
pub fn drift(phi: &SpectralField, pot: &RegularizedPotential, mob: &Mobility) -> Result<SpectralField> {
    let mu = chemical_potential(phi, pot)?;
    crate::spectral::degenerate_flux(phi, &mu, |r| mob.m(r))
}

/// `½‖∇φ‖² + ∫ F_reg(φ)`.
pub fn energy(phi: &SpectralField, pot: &RegularizedPotential) -> f64 {
    let grid = phi.grid();
    let f: f64 = phi
        .to_values()
        .iter()
        .zip(grid.weights())
        .map(|(&r, w)| w * pot.value(r))
        .sum();
    0.5 * phi.grad_sq() + f
}

/// Runs one path with the `(seed, path)` Brownian stream.
pub fn simulate_path(cfg: &SolverConfig, path: u64) -> Result<Vec<StateRecord>> {
    let mut src = BrownianIncrements::new(cfg.seed, path, cfg.dt);
    simulate_with(cfg, &mut src)
}

/// Runs one path driven by `src`, whose step must equal `cfg.dt`.
pub fn simulate_with(cfg: &SolverConfig, src: &mut dyn IncrementSource) -> Result<Vec<StateRecord>> {
    cfg.validate()?;
    if (src.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::invalid(format!(
            "increment source steps dt = {} but the solver uses {}",
            src.dt(),
            cfg.dt
        )));
    }
    let mut state = PathState::new(cfg.initial_field()?);
    let steps = cfg.n_steps();
    let mut out = Vec::with_capacity(steps / cfg.record_every + 2);
    out.push(state.record(cfg));
    for k in 1..=steps {
        state.step_from(cfg, src)?;
        if k % cfg.record_every == 0 || k == steps {
            out.push(state.record(cfg));
        }
    }
    Ok(out)
}
