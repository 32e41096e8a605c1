//! Monte Carlo checks of the a-priori estimates and coupled refinement studies.
//!
//! Paths are independent and keyed by `(seed, path index)`. They may run in
//! parallel, but every reduction walks the paths in index order, so serial
//! and parallel runs produce bitwise identical reports.

use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{ProblemSpec, StudyAxis};
use crate::error::{Error, Result};
use crate::integrator::{simulate_path, simulate_with, Mobility, SolverConfig, StateRecord};
use crate::mobility::confinement_gap;
use crate::quad::fit_slope;
use crate::rng::{BrownianIncrements, CoarsenedIncrements, IncrementSource};
use crate::spectral::{SpectralField, SpectralGrid};

/// Below this the confinement metric counts as zero.
pub const CONFINEMENT_FLOOR: f64 = 1e-8;
pub const MIN_CONFINEMENT_SLOPE: f64 = 0.35;
/// Multiplier on the residual drift under dt-halving.
pub const ALLOWANCE_FACTOR: f64 = 4.0;

/// Sample mean and standard error over independent paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStat {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl McStat {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        McStat { mean, se, n }
    }
}

/// Maps `f` over path indices `0..paths`, in parallel unless `serial`;
/// the output is in path order either way.
pub fn run_paths<T, F>(paths: usize, serial: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if serial {
        (0..paths as u64).map(f).collect()
    } else {
        (0..paths as u64).into_par_iter().map(f).collect()
    }
}

/// One checkpoint of the energy inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCheckpoint {
    pub t: f64,
    /// `Ê[½‖∇φ‖² + ∫F(φ) + ∫∫ m|∇μ|²]`.
    pub lhs: f64,
    /// `E(φ₀) + Ê[(C_G/2)∫‖∇φ‖² + ½∫Σ∫F''|g_k|²]`.
    pub rhs: f64,
    pub residual: McStat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub checkpoints: Vec<EnergyCheckpoint>,
    pub allowance: f64,
    pub pass: bool,
}

impl EnergyReport {
    /// Largest `residual - 3·SE - allowance`; nonpositive on a pass.
    pub fn worst_margin(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| c.residual.mean - 3.0 * c.residual.se.max(0.0) - self.allowance)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn energy_residuals(cfg: &SolverConfig, recs: &[StateRecord]) -> Vec<(f64, f64, f64)> {
    let e0 = recs[0].energy;
    let c_g = cfg.noise.c_g();
    recs.iter()
        .map(|r| {
            let lhs = 0.5 * r.grad_sq + r.f_l1 + r.dissipation_acc;
            let rhs = e0 + 0.5 * c_g * r.grad_sq_acc + 0.5 * r.ito_f_acc;
            (r.t, lhs, rhs)
        })
        .collect()
}

fn summarize_energy(per_path: &[Vec<(f64, f64, f64)>], allowance: f64) -> EnergyReport {
    let n_chk = per_path[0].len();
    let checkpoints: Vec<EnergyCheckpoint> = (0..n_chk)
        .map(|k| {
            let lhs: Vec<f64> = per_path.iter().map(|p| p[k].1).collect();
            let rhs: Vec<f64> = per_path.iter().map(|p| p[k].2).collect();
            let res: Vec<f64> = per_path.iter().map(|p| p[k].1 - p[k].2).collect();
            EnergyCheckpoint {
                t: per_path[0][k].0,
                lhs: McStat::from_samples(&lhs).mean,
                rhs: McStat::from_samples(&rhs).mean,
                residual: McStat::from_samples(&res),
            }
        })
        .collect();
    let pass = checkpoints
        .iter()
        .all(|c| c.residual.mean <= 3.0 * c.residual.se + allowance);
    EnergyReport {
        checkpoints,
        allowance,
        pass,
    }
}

fn check_paths(paths: usize, min: usize) -> Result<()> {
    if paths < min {
        return Err(Error::Validation(format!(
            "this estimate needs at least {min} paths, got {paths}"
        )));
    }
    Ok(())
}

/// Energy inequality at every recorded checkpoint, with a caller-chosen allowance.
pub fn mc_energy_inequality_with(
    cfg: &SolverConfig,
    paths: usize,
    allowance: f64,
    serial: bool,
) -> Result<EnergyReport> {
    check_paths(paths, 2)?;
    let per_path = run_paths(paths, serial, |p| {
        let recs = simulate_path(cfg, p)?;
        Ok(energy_residuals(cfg, &recs))
    })?;
    Ok(summarize_energy(&per_path, allowance))
}

/// Energy inequality with the scheme allowance calibrated on the fly.
///
/// Each path is run at `dt` and at `dt/2` on the same Brownian path (the
/// coarse increments are sums of pairs of fine ones). The allowance is
/// `4 · max_t |r̄_dt(t) - r̄_{dt/2}(t)|`, with `r̄` the mean residual; the
/// reported checkpoints are those of the `dt` run.
pub fn mc_energy_inequality(cfg: &SolverConfig, paths: usize, serial: bool) -> Result<EnergyReport> {
    check_paths(paths, 32)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt = 0.5 * cfg.dt;
    fine_cfg.record_every = 2 * cfg.record_every;
    let pairs = run_paths(paths, serial, |p| {
        let mut fine_src = BrownianIncrements::new(cfg.seed, p, fine_cfg.dt);
        let fine = simulate_with(&fine_cfg, &mut fine_src)?;
        let mut coarse_src = CoarsenedIncrements::new(BrownianIncrements::new(cfg.seed, p, fine_cfg.dt), 2);
        let coarse = simulate_with(cfg, &mut coarse_src)?;
        Ok((energy_residuals(cfg, &coarse), energy_residuals(&fine_cfg, &fine)))
    })?;
    let coarse: Vec<_> = pairs.iter().map(|p| p.0.clone()).collect();
    let fine: Vec<_> = pairs.iter().map(|p| p.1.clone()).collect();
    let a = summarize_energy(&coarse, 0.0);
    let b = summarize_energy(&fine, 0.0);
    let drift = a
        .checkpoints
        .iter()
        .zip(&b.checkpoints)
        .map(|(x, y)| (x.residual.mean - y.residual.mean).abs())
        .fold(0.0, f64::max);
    Ok(summarize_energy(&coarse, ALLOWANCE_FACTOR * drift))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassMomentReport {
    pub ell: u32,
    /// `Ê sup_t |(φ(t))_O|^ℓ` over recorded times.
    pub estimate: McStat,
    pub bound: f64,
    pub pass: bool,
}

/// Moment bound for the spatial mean.
///
/// The mean solves `dm = ⟨s(φ)⟩_O Σ_k σ_k dW_k`, a martingale whose
/// quadratic variation grows at most at rate `q = Σσ_k² sup|s|²`. Doob's
/// inequality and the moment inequality for continuous martingales give
///
/// ```text
/// E sup|m|^ℓ ≤ 2^{ℓ-1}(|m₀|^ℓ + (ℓ/(ℓ-1))^ℓ (ℓ(ℓ-1)/2)^{ℓ/2} (qT)^{ℓ/2}).
/// ```
pub fn mass_moment_bound(m0: f64, q: f64, t_final: f64, ell: u32) -> f64 {
    let l = ell as f64;
    let doob = (l / (l - 1.0)).powf(l);
    let bdg = (l * (l - 1.0) / 2.0).powf(0.5 * l);
    2f64.powf(l - 1.0) * (m0.abs().powf(l) + doob * bdg * (q * t_final).powf(0.5 * l))
}

pub fn mass_moment_check(cfg: &SolverConfig, paths: usize, ell: u32, serial: bool) -> Result<MassMomentReport> {
    if ![2, 4, 8].contains(&ell) {
        return Err(Error::invalid(format!("moment order must be 2, 4 or 8, got {ell}")));
    }
    check_paths(paths, 2)?;
    let sups = run_paths(paths, serial, |p| {
        let recs = simulate_path(cfg, p)?;
        Ok(recs.iter().map(|r| r.mass.abs().powi(ell as i32)).fold(0.0, f64::max))
    })?;
    let estimate = McStat::from_samples(&sups);
    let m0 = cfg.initial_field()?.mean();
    let sup_s = (0..=2000)
        .map(|i| cfg.noise.shape_value(-1.0 + i as f64 / 1000.0).abs())
        .fold(0.0, f64::max);
    let q = cfg.noise.sigma_sq_sum() * sup_s * sup_s;
    let bound = mass_moment_bound(m0, q, cfg.t_final, ell);
    Ok(MassMomentReport {
        ell,
        estimate,
        bound,
        pass: estimate.mean <= bound + 3.0 * estimate.se.max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfinementVerdict {
    /// Every metric is below the floor.
    Vacuous,
    /// Fewer than two metrics above the floor; nothing to fit.
    Floor,
    Slope(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfinementReport {
    pub eps: Vec<f64>,
    /// `sup_t (Ê‖(|φ_ε(t)|-1)₊‖²)^{1/2}` per ε.
    pub metric: Vec<f64>,
    /// Largest `lhs - rhs` of the pointwise bound along all recorded states.
    pub worst_gap: f64,
    pub verdict: ConfinementVerdict,
    pub pass: bool,
}

/// Fits `log metric` against `log ε` over the levels above the floor.
pub fn confinement_verdict(eps: &[f64], metric: &[f64]) -> (ConfinementVerdict, bool) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(metric)
        .filter(|(_, &m)| m >= CONFINEMENT_FLOOR)
        .map(|(e, m)| (e.ln(), m.ln()))
        .unzip();
    if xs.is_empty() {
        return (ConfinementVerdict::Vacuous, true);
    }
    match fit_slope(&xs, &ys) {
        None => (ConfinementVerdict::Floor, true),
        Some(s) => (ConfinementVerdict::Slope(s), s >= MIN_CONFINEMENT_SLOPE),
    }
}

/// Runs the ε pipeline at every level with the same Brownian paths.
pub fn confinement_scaling(
    base: &ProblemSpec,
    eps_list: &[f64],
    paths: usize,
    serial: bool,
) -> Result<ConfinementReport> {
    if eps_list.len() < 3 || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation(
            "confinement scaling needs at least 3 strictly decreasing epsilons".into(),
        ));
    }
    check_paths(paths, 2)?;
    let mut metric = Vec::with_capacity(eps_list.len());
    let mut worst_gap = f64::NEG_INFINITY;
    for &eps in eps_list {
        let cfg = base.with_eps(eps).build()?;
        let tm = match cfg.mobility.as_ref() {
            Mobility::Truncated(t) => t.clone(),
            Mobility::Plain(_) => unreachable!("with_eps selects the epsilon pipeline"),
        };
        let per_path = run_paths(paths, serial, |p| {
            let recs = simulate_path(&cfg, p)?;
            let conf: Vec<f64> = recs.iter().map(|r| r.confinement_l2.powi(2)).collect();
            let gap = recs
                .iter()
                .map(|r| r.confinement_l2.powi(2) - 2.0 * eps * tm.lip_m() * r.entropy)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((conf, gap))
        })?;
        let n_chk = per_path[0].0.len();
        let sup = (0..n_chk)
            .map(|k| {
                let xs: Vec<f64> = per_path.iter().map(|p| p.0[k]).collect();
                McStat::from_samples(&xs).mean.sqrt()
            })
            .fold(0.0, f64::max);
        metric.push(sup);
        worst_gap = per_path.iter().map(|p| p.1).fold(worst_gap, f64::max);
    }
    let (verdict, slope_ok) = confinement_verdict(eps_list, &metric);
    Ok(ConfinementReport {
        eps: eps_list.to_vec(),
        metric,
        worst_gap,
        verdict,
        pass: slope_ok && worst_gap <= 0.0,
    })
}

/// Pointwise confinement bound over `samples` scalars spread over `[-range, range]`.
pub fn confinement_gap_scan(tm: &crate::mobility::TruncatedMobility, samples: &[f64]) -> f64 {
    samples
        .iter()
        .map(|&r| {
            let (lhs, rhs) = confinement_gap(tm, r);
            lhs - rhs
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Both sides of the two weak formulations tested against `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormResidual {
    /// `∫ m(φ) ∇μ·∇v` with `∇μ = -∇Δφ + F''(φ)∇φ`.
    pub nondegenerate: f64,
    /// `∫ m(φ)F''(φ)∇φ·∇v + ∫ Δφ div(m(φ)∇v)`.
    pub degenerate: f64,
}

impl FormResidual {
    pub fn difference(&self) -> f64 {
        self.nondegenerate - self.degenerate
    }
}

/// Evaluates both weak forms at the state `phi`, by quadrature on a grid
/// `refine` times denser than the solver's.
pub fn degenerate_form_residual(
    cfg: &SolverConfig,
    phi: &SpectralField,
    v: &SpectralField,
    refine: f64,
) -> Result<FormResidual> {
    let grid = cfg.grid.as_ref();
    if v.grid().lengths() != grid.lengths() || v.grid().modes_per_axis() != grid.modes_per_axis() {
        return Err(Error::invalid("test field must live on the solver's box and modes"));
    }
    if phi.coeffs().len() != grid.n_coeffs() {
        return Err(Error::ShapeMismatch {
            expected: grid.n_coeffs(),
            got: phi.coeffs().len(),
        });
    }
    let fine = Arc::new(SpectralGrid::new(
        &grid.lengths(),
        grid.modes_per_axis(),
        grid.oversample() * refine,
        grid.backend(),
    )?);
    let phi = phi.on_grid(fine.clone())?;
    let v = v.on_grid(fine.clone())?;
    let phi_v = phi.to_values();
    let lap_phi = phi.laplacian();
    let lap_v = v.laplacian().to_values();
    let lap_phi_v = lap_phi.to_values();
    let grad_phi = fine.gradient_values(phi.coeffs())?;
    let grad_lap = fine.gradient_values(lap_phi.coeffs())?;
    let grad_v = fine.gradient_values(v.coeffs())?;
    let (m, dm): (Vec<f64>, Vec<f64>) = match cfg.mobility.as_ref() {
        Mobility::Truncated(t) => phi_v.iter().map(|&r| (t.m(r), t.dm(r))).unzip(),
        Mobility::Plain(s) => phi_v.iter().map(|&r| (s.m_unchecked(r), s.dm_unchecked(r))).unzip(),
    };
    let mut nd = 0.0;
    let mut dg = 0.0;
    for (i, w) in fine.weights().iter().enumerate() {
        let f2 = cfg.potential.d2(phi_v[i]);
        let mut dphi_dv = 0.0;
        let mut dlap_dv = 0.0;
        for d in 0..fine.dim() {
            dphi_dv += grad_phi[d][i] * grad_v[d][i];
            dlap_dv += grad_lap[d][i] * grad_v[d][i];
        }
        nd += w * m[i] * (f2 * dphi_dv - dlap_dv);
        let div_m_grad_v = dm[i] * dphi_dv + m[i] * lap_v[i];
        dg += w * (m[i] * f2 * dphi_dv + lap_phi_v[i] * div_m_grad_v);
    }
    Ok(FormResidual {
        nondegenerate: nd,
        degenerate: dg,
    })
}

/// Errors between consecutive refinement levels.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub axis: StudyAxis,
    pub levels: Vec<f64>,
    /// `Ê‖φ_level(T) - φ_next(T)‖_{L²}`, one per consecutive pair.
    pub errors: Vec<McStat>,
    pub slope: Option<f64>,
    pub monotone: bool,
}

impl RateTable {
    pub fn csv(&self) -> String {
        let mut s = format!("{},error_mean,error_se\n", self.axis.name());
        for (l, e) in self.levels.iter().zip(&self.errors) {
            s.push_str(&format!("{l:e},{:e},{:e}\n", e.mean, e.se));
        }
        s
    }
}

/// Final-time coefficients of one path, padded into the basis of `target`.
fn embed(field: &SpectralField, target: &SpectralGrid) -> Vec<f64> {
    let src = field.grid();
    let mut out = vec![0.0; target.n_coeffs()];
    let n_t = target.modes_per_axis();
    let index = |mode: &[usize]| -> Option<usize> {
        if mode.iter().any(|&j| j >= n_t) {
            return None;
        }
        (0..target.n_coeffs()).find(|&k| target.mode(k) == mode)
    };
    for (k, a) in field.coeffs().iter().enumerate() {
        if let Some(t) = index(&src.mode(k)) {
            out[t] = *a;
        }
    }
    out
}

/// Strong errors between consecutive levels along one refinement axis.
///
/// All levels share the Brownian path of each `(seed, path)`: for the dt
/// axis the increments of coarser levels are sums of increments drawn at
/// the finest dt; along the other axes dt is fixed and the increments are
/// identical.
pub fn convergence_study(
    base: &ProblemSpec,
    axis: StudyAxis,
    levels: &[f64],
    paths: usize,
    serial: bool,
) -> Result<RateTable> {
    if levels.len() < 3 {
        return Err(Error::Validation("a convergence study needs at least 3 levels".into()));
    }
    check_paths(paths, 2)?;
    let specs: Vec<ProblemSpec> = levels
        .iter()
        .map(|&l| match axis {
            StudyAxis::Modes => base.with_modes(l as usize),
            StudyAxis::Dt => base.with_dt(l),
            StudyAxis::Lambda => base.with_lambda(l),
            StudyAxis::Epsilon => base.with_eps(l),
        })
        .collect();
    let cfgs: Vec<SolverConfig> = specs.iter().map(|s| s.build()).collect::<Result<_>>()?;
    let finest_dt = cfgs.iter().map(|c| c.dt).fold(f64::INFINITY, f64::min);
    let factors: Vec<usize> = cfgs
        .iter()
        .map(|c| {
            let f = (c.dt / finest_dt).round();
            if (f * finest_dt - c.dt).abs() > 1e-9 * c.dt {
                Err(Error::Validation(format!(
                    "dt = {} is not an integer multiple of the finest dt = {finest_dt}",
                    c.dt
                )))
            } else {
                Ok(f as usize)
            }
        })
        .collect::<Result<_>>()?;
    let widest = cfgs
        .iter()
        .max_by_key(|c| c.grid.modes_per_axis())
        .expect("at least three levels")
        .grid
        .clone();
    let seed = base.seed;
    let per_path = run_paths(paths, serial, |p| {
        let mut finals = Vec::with_capacity(cfgs.len());
        for (cfg, &factor) in cfgs.iter().zip(&factors) {
            let mut src: Box<dyn IncrementSource> = if factor == 1 {
                Box::new(BrownianIncrements::new(seed, p, finest_dt))
            } else {
                Box::new(CoarsenedIncrements::new(BrownianIncrements::new(seed, p, finest_dt), factor))
            };
            let recs = simulate_with(cfg, &mut src)?;
            let last = recs.last().expect("at least one record");
            finals.push(embed(&last.phi, &widest));
        }
        let diffs: Vec<f64> = finals
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        Ok(diffs)
    })?;
    let errors: Vec<McStat> = (0..levels.len() - 1)
        .map(|k| McStat::from_samples(&per_path.iter().map(|d| d[k]).collect::<Vec<_>>()))
        .collect();
    let xs: Vec<f64> = levels[..levels.len() - 1].iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.mean.ln()).collect();
    let slope = if ys.iter().all(|y| y.is_finite()) {
        fit_slope(&xs, &ys)
    } else {
        None
    };
    let monotone = errors.windows(2).all(|w| w[1].mean <= w[0].mean);
    Ok(RateTable {
        axis,
        levels: levels.to_vec(),
        errors,
        slope,
        monotone,
    })
}
