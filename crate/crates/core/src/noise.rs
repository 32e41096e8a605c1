//! Superposition noise `G(φ)u_k = g_k(φ)` with `g_k = σ_k s`.

use std::fmt;

use crate::error::{Error, Result};
use crate::mobility::{MobilitySpec, TruncatedMobility};
use crate::potentials::{PotentialKind, PotentialSpec, RegularizedPotential, ScalarFn};

pub const DEFAULT_MODES: usize = 16;
const COMPAT_GRID: usize = 100_001;

#[derive(Clone)]
pub enum NoiseShape {
    /// `s(r) = 1 - r²`.
    OneMinusRSquared,
    /// Must vanish at ±1; `lip` bounds `|s'|` on `[-1, 1]`.
    Custom { s: ScalarFn, ds: ScalarFn, lip: f64 },
}

impl fmt::Debug for NoiseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseShape::OneMinusRSquared => f.write_str("OneMinusRSquared"),
            NoiseShape::Custom { lip, .. } => f
                .debug_struct("Custom")
                .field("lip", lip)
                .finish_non_exhaustive(),
        }
    }
}

impl NoiseShape {
    fn raw(&self, r: f64) -> f64 {
        match self {
            NoiseShape::OneMinusRSquared => 1.0 - r * r,
            NoiseShape::Custom { s, .. } => s(r),
        }
    }

    fn raw_d1(&self, r: f64) -> f64 {
        match self {
            NoiseShape::OneMinusRSquared => -2.0 * r,
            NoiseShape::Custom { ds, .. } => ds(r),
        }
    }

    fn lip(&self) -> f64 {
        match self {
            NoiseShape::OneMinusRSquared => 2.0,
            NoiseShape::Custom { lip, .. } => *lip,
        }
    }

    fn sup_abs(&self) -> f64 {
        match self {
            NoiseShape::OneMinusRSquared => 1.0,
            NoiseShape::Custom { s, .. } => (0..=4000)
                .map(|i| s(-1.0 + i as f64 / 2000.0).abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    shape: NoiseShape,
    sigma0: f64,
    p: f64,
    modes: usize,
    freeze_eps: Option<f64>,
}

/// Derived constants of a noise family paired with a potential and a mobility.
#[derive(Debug, Clone)]
pub struct CompatConstants {
    /// `sup_r |g_k|² |F''|` per retained mode.
    pub sup_f: Vec<f64>,
    /// `sup_r |g_k|² M''` per retained mode.
    pub sup_m: Vec<f64>,
    pub l_g: f64,
    /// `2‖g_k'‖²(θ + 4θ₀)` per mode for the logarithmic potential.
    pub analytic_bound: Option<Vec<f64>>,
}

impl NoiseSpec {
    pub fn new(shape: NoiseShape, sigma0: f64, p: f64, modes: usize) -> Result<Self> {
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(Error::Validation(format!("sigma0 must be >= 0, got {sigma0}")));
        }
        if !(p > 0.5 && p.is_finite()) {
            return Err(Error::Validation(format!(
                "the amplitude decay p must exceed 1/2 for a square-summable family, got {p}"
            )));
        }
        if let NoiseShape::Custom { s, lip, .. } = &shape {
            if s(1.0) != 0.0 || s(-1.0) != 0.0 {
                return Err(Error::Validation(
                    "noise shape must vanish at r = ±1".into(),
                ));
            }
            if !(*lip >= 0.0 && lip.is_finite()) {
                return Err(Error::invalid("noise shape needs a finite Lipschitz constant"));
            }
        }
        Ok(NoiseSpec {
            shape,
            sigma0,
            p,
            modes,
            freeze_eps: None,
        })
    }

    pub fn default_shape(sigma0: f64, p: f64, modes: usize) -> Result<Self> {
        Self::new(NoiseShape::OneMinusRSquared, sigma0, p, modes)
    }

    /// Noise switched off.
    pub fn none() -> Self {
        NoiseSpec {
            shape: NoiseShape::OneMinusRSquared,
            sigma0: 0.0,
            p: 1.0,
            modes: 0,
            freeze_eps: None,
        }
    }

    pub fn shape(&self) -> &NoiseShape {
        &self.shape
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn freeze_eps(&self) -> Option<f64> {
        self.freeze_eps
    }

    pub fn is_off(&self) -> bool {
        self.sigma0 == 0.0 || self.modes == 0
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma0 * ((k + 1) as f64).powf(-self.p)
    }

    /// `Σ_{k<K} σ_k²`.
    pub fn sigma_sq_sum(&self) -> f64 {
        (0..self.modes).map(|k| self.sigma(k).powi(2)).sum()
    }

    fn bound(&self) -> f64 {
        self.freeze_eps.map_or(1.0, |e| 1.0 - e)
    }

    /// `s` as extended to the real line: constant beyond ±1, or beyond
    /// ±(1-ε) once truncated.
    pub fn shape_value(&self, r: f64) -> f64 {
        let b = self.bound();
        self.shape.raw(r.clamp(-b, b))
    }

    pub fn shape_d1(&self, r: f64) -> f64 {
        if r.abs() > self.bound() {
            0.0
        } else {
            self.shape.raw_d1(r)
        }
    }

    pub fn g(&self, k: usize, r: f64) -> f64 {
        self.sigma(k) * self.shape_value(r)
    }

    /// `Σ_k σ_k ξ_k` for increments `ξ` (already scaled by `√dt`).
    pub fn combine(&self, increments: &[f64]) -> Result<f64> {
        if increments.len() != self.modes {
            return Err(Error::ShapeMismatch {
                expected: self.modes,
                got: increments.len(),
            });
        }
        Ok(increments
            .iter()
            .enumerate()
            .map(|(k, w)| self.sigma(k) * w)
            .sum())
    }

    /// `Σ_{k<K} g_k(φ(x)) √dt ξ_k` on each collocation value.
    pub fn apply_g_increment(&self, phi: &[f64], dt: f64, xi: &[f64]) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let root = dt.sqrt();
        let scaled: Vec<f64> = xi.iter().map(|x| root * x).collect();
        let w = self.combine(&scaled)?;
        Ok(phi.iter().map(|&r| self.shape_value(r) * w).collect())
    }

    /// Freezes every `g_k` at `±(1-ε)`. Repeated truncation keeps the larger ε.
    pub fn truncate_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.25) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1/4), got {eps}")));
        }
        let mut out = self.clone();
        out.freeze_eps = Some(self.freeze_eps.map_or(eps, |e| e.max(eps)));
        Ok(out)
    }

    fn w1_inf_sq(&self) -> f64 {
        self.shape.sup_abs().max(self.shape.lip()).powi(2)
    }

    /// `C_G = Σ_{k<K} ‖g_k‖²_{W^{1,∞}}` with the norm taken as `max(sup|g|, sup|g'|)`.
    pub fn c_g(&self) -> f64 {
        self.sigma_sq_sum() * self.w1_inf_sq()
    }

    /// Upper bound on the neglected modes `Σ_{k≥K} ‖g_k‖²_{W^{1,∞}}`.
    pub fn tail_bound(&self) -> f64 {
        // Σ_{j≥K+1} j^{-2p} ≤ (K+1)^{-2p} + ∫_{K+1}^∞ x^{-2p} dx
        let q = 2.0 * self.p;
        let first = (self.modes + 1) as f64;
        let tail = first.powf(-q) + first.powf(1.0 - q) / (q - 1.0);
        self.sigma0.powi(2) * self.shape.sup_abs().max(self.shape.lip()).max(1.0).powi(2) * tail
    }

    /// Sups of `s²|F''|` and `s²/m` over `(-1, 1)`, scaled by `σ_k²`, plus `L_G`.
    pub fn compat_constants(
        &self,
        pot: &PotentialSpec,
        mob: &MobilitySpec,
        grid_n: usize,
    ) -> Result<CompatConstants> {
        let grid_n = if grid_n == 0 { COMPAT_GRID } else { grid_n };
        let sf = |r: f64| {
            let s = self.shape.raw(r);
            s * s * pot.d2_unchecked(r).abs()
        };
        let sm = |r: f64| {
            let s = self.shape.raw(r);
            s * s / mob.m_unchecked(r)
        };
        for side in [-1.0, 1.0] {
            probe_bounded("|g|² |F''|", sf, side)?;
            probe_bounded("|g|² M''", sm, side)?;
        }
        let mut sup_sf = 0.0_f64;
        let mut sup_sm = 0.0_f64;
        for i in 0..grid_n {
            // Chebyshev points of the first kind cluster at ±1; odd counts include 0
            let r = (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * grid_n) as f64).cos();
            sup_sf = sup_sf.max(sf(r));
            sup_sm = sup_sm.max(sm(r));
        }
        if !(sup_sf.is_finite() && sup_sm.is_finite()) {
            return Err(Error::Incompatible(
                "noise/potential/mobility sups are not finite".into(),
            ));
        }
        let sigmas: Vec<f64> = (0..self.modes).map(|k| self.sigma(k).powi(2)).collect();
        let w1 = self.w1_inf_sq();
        let l_g = sigmas.iter().map(|s2| s2 * (w1 + sup_sf + sup_sm)).sum();
        let analytic_bound = match pot.kind() {
            PotentialKind::Logarithmic { theta, theta0 } => Some(
                sigmas
                    .iter()
                    .map(|s2| 2.0 * s2 * self.shape.lip().powi(2) * (theta + 4.0 * theta0))
                    .collect(),
            ),
            _ => None,
        };
        Ok(CompatConstants {
            sup_f: sigmas.iter().map(|s2| s2 * sup_sf).collect(),
            sup_m: sigmas.iter().map(|s2| s2 * sup_sm).collect(),
            l_g,
            analytic_bound,
        })
    }

    /// `Σ_k ∫ F_reg''(φ)|g_k(φ)|²` by collocation quadrature.
    pub fn ito_correction_f(
        &self,
        pot: &RegularizedPotential,
        phi: &[f64],
        weights: &[f64],
    ) -> Result<f64> {
        self.weighted_square(phi, weights, |r| pot.d2(r))
    }

    /// `Σ_k ∫ M_ε''(φ)|g_k(φ)|²` by collocation quadrature.
    pub fn ito_correction_m(
        &self,
        tm: &TruncatedMobility,
        phi: &[f64],
        weights: &[f64],
    ) -> Result<f64> {
        self.weighted_square(phi, weights, |r| tm.entropy_d2(r))
    }

    fn weighted_square(
        &self,
        phi: &[f64],
        weights: &[f64],
        curvature: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        if phi.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                expected: phi.len(),
                got: weights.len(),
            });
        }
        let s2 = self.sigma_sq_sum();
        if s2 == 0.0 {
            return Ok(0.0);
        }
        let integral: f64 = phi
            .iter()
            .zip(weights)
            .map(|(&r, w)| {
                let s = self.shape_value(r);
                if s == 0.0 {
                    0.0
                } else {
                    w * curvature(r) * s * s
                }
            })
            .sum();
        Ok(s2 * integral)
    }
}

fn probe_bounded(what: &str, f: impl Fn(f64) -> f64, side: f64) -> Result<()> {
    let coarse = f(side * (1.0 - 1e-6));
    let fine = f(side * (1.0 - 1e-10));
    if !fine.is_finite() || fine > 10.0 * coarse.abs().max(1.0) {
        return Err(Error::Incompatible(format!(
            "{what} diverges near r = {side}: {coarse:e} at distance 1e-6, {fine:e} at 1e-10"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::build_m_eps;
    use crate::potentials::{build_eps_reg, build_lambda_reg};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn unit_sigma(modes: usize) -> NoiseSpec {
        // p → large makes σ_k ≈ 0 for k ≥ 1; use K=1 for σ_0 = 1 exactly
        NoiseSpec::default_shape(1.0, 1.0, modes).unwrap()
    }

    #[test]
    fn increment_examples() {
        let off = NoiseSpec::default_shape(0.0, 1.0, 4).unwrap();
        let z = off.apply_g_increment(&[0.3, -0.2], 0.01, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let on = NoiseSpec::default_shape(0.7, 1.0, 3).unwrap();
        let pure = on.apply_g_increment(&[1.0, -1.0, 1.0], 0.1, &[0.4, -1.2, 2.0]).unwrap();
        assert!(pure.iter().all(|&v| v == 0.0));
        let single = NoiseSpec::default_shape(0.1, 1.0, 1).unwrap();
        let v = single.apply_g_increment(&[0.0; 5], 0.01, &[1.0]).unwrap();
        for x in v {
            assert!((x - 0.01).abs() < 1e-15);
        }
        assert!(matches!(
            single.apply_g_increment(&[0.0], 0.01, &[1.0, 2.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn truncation_examples() {
        let n = NoiseSpec::default_shape(1.0, 1.0, 4).unwrap();
        let t = n.truncate_eps(0.1).unwrap();
        for k in 0..4 {
            assert!((t.g(k, 0.95) - n.sigma(k) * 0.19).abs() < 1e-15);
            assert_eq!(t.g(k, 0.5), n.g(k, 0.5));
            assert_eq!(t.g(k, -3.0), t.g(k, -0.9));
        }
    }

    #[test]
    fn truncation_is_idempotent() {
        let n = NoiseSpec::default_shape(0.3, 1.5, 8).unwrap();
        let once = n.truncate_eps(0.1).unwrap();
        let twice = once.truncate_eps(0.1).unwrap();
        let nested = n.truncate_eps(0.05).unwrap().truncate_eps(0.1).unwrap();
        for i in 0..=200 {
            let r = -1.0 + i as f64 / 100.0;
            assert_eq!(once.shape_value(r), twice.shape_value(r));
            assert_eq!(once.shape_value(r), nested.shape_value(r));
        }
    }

    #[test]
    fn compat_examples() {
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let mpol = MobilitySpec::poly_degenerate(1.0).unwrap();
        let c = NoiseSpec::default_shape(1.0, 1.0, 1)
            .unwrap()
            .compat_constants(&log, &mpol, 0)
            .unwrap();
        assert!((c.sup_f[0] - 1.0).abs() < 1e-12);
        let bound = c.analytic_bound.unwrap();
        assert_eq!(bound[0], 72.0);
        // s²/m = 1 - r² for m_pol
        assert!((c.sup_m[0] - 1.0).abs() < 1e-12);
        let off = NoiseSpec::default_shape(0.0, 1.0, 5)
            .unwrap()
            .compat_constants(&log, &mpol, 0)
            .unwrap();
        assert!(off.sup_f.iter().chain(&off.sup_m).all(|&v| v == 0.0));
        assert_eq!(off.l_g, 0.0);
    }

    #[test]
    fn compat_detects_divergent_pairing() {
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let mpol = MobilitySpec::poly_degenerate(1.0).unwrap();
        // s = (1 - r²)^{1/4}: s²F'' ~ (1-r²)^{-1/2}
        let quarter = NoiseSpec::new(
            NoiseShape::Custom {
                s: Arc::new(|r: f64| (1.0 - r * r).max(0.0).powf(0.25)),
                ds: Arc::new(|r: f64| -0.5 * r * (1.0 - r * r).powf(-0.75)),
                lip: f64::MAX,
            },
            1.0,
            1.0,
            2,
        )
        .unwrap();
        assert!(matches!(
            quarter.compat_constants(&log, &mpol, 1001),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn eps_truncated_constant_below_l_g() {
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let mpol = MobilitySpec::poly_degenerate(1.0).unwrap();
        let n = NoiseSpec::default_shape(0.5, 1.0, 16).unwrap();
        let l_g = n.compat_constants(&log, &mpol, 0).unwrap().l_g;
        assert!(l_g.is_finite());
        for &eps in &[0.2, 0.1, 0.05] {
            let t = n.truncate_eps(eps).unwrap();
            // grid sup of |g_ε| and |g_ε'| over a wide window
            let (mut sup, mut lip) = (0.0_f64, 0.0_f64);
            for i in 0..=40_000 {
                let r = -2.0 + i as f64 / 10_000.0;
                sup = sup.max(t.shape_value(r).abs());
                lip = lip.max(t.shape_d1(r).abs());
            }
            let c_g_eps = t.sigma_sq_sum() * sup.max(lip).powi(2);
            assert!(c_g_eps <= t.c_g() + 1e-12);
            assert!(c_g_eps <= l_g, "eps = {eps}");
        }
    }

    #[test]
    fn lipschitz_contract() {
        let n = NoiseSpec::default_shape(0.4, 1.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(-1.5..1.5);
            let b: f64 = rng.random_range(-1.5..1.5);
            let lhs: f64 = (0..6).map(|k| (n.g(k, a) - n.g(k, b)).powi(2)).sum();
            assert!(lhs <= n.c_g() * (a - b).powi(2) + 1e-15);
        }
    }

    #[test]
    fn tail_bound_covers_neglected_modes() {
        let n = NoiseSpec::default_shape(1.0, 1.0, 8).unwrap();
        let w1 = 4.0;
        let neglected: f64 = (8..200_000).map(|k| n.sigma(k).powi(2) * w1).sum();
        assert!(neglected <= n.tail_bound());
        assert!(n.tail_bound() < 2.0 * neglected);
    }

    #[test]
    fn ito_corrections() {
        let pol = PotentialSpec::polynomial();
        let reg = build_lambda_reg(&pol, 1.0, 1e-4).unwrap();
        let zero = vec![0.0; 10];
        let w = vec![0.1; 10];
        let off = NoiseSpec::default_shape(0.0, 1.0, 3).unwrap();
        assert_eq!(off.ito_correction_f(&reg, &zero, &w).unwrap(), 0.0);
        let v = unit_sigma(1).ito_correction_f(&reg, &zero, &w).unwrap();
        assert!((v + 1.0).abs() < 1e-3, "{v}");
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let reg_eps = build_eps_reg(&log, 0.1).unwrap();
        let ones = vec![1.0; 10];
        assert_eq!(unit_sigma(1).ito_correction_f(&reg_eps, &ones, &w).unwrap(), 0.0);

        let tm = build_m_eps(&MobilitySpec::poly_degenerate(1.0).unwrap(), 0.1).unwrap();
        let m = unit_sigma(1).truncate_eps(0.1).unwrap();
        assert!((m.ito_correction_m(&tm, &zero, &w).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(off.ito_correction_m(&tm, &zero, &w).unwrap(), 0.0);
    }

    #[test]
    fn ito_m_bounded_by_l_g() {
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let mob = MobilitySpec::poly_degenerate(1.0).unwrap();
        let n = NoiseSpec::default_shape(0.3, 1.0, 8).unwrap();
        let l_g = n.compat_constants(&log, &mob, 0).unwrap().l_g;
        let tm = build_m_eps(&mob, 0.1).unwrap();
        let t = n.truncate_eps(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = vec![1.0 / 64.0; 64];
        for _ in 0..100 {
            let phi: Vec<f64> = (0..64).map(|_| rng.random_range(-1.3..1.3)).collect();
            let v = t.ito_correction_m(&tm, &phi, &w).unwrap();
            assert!(v <= l_g);
        }
    }
}
