//! Mobility functions, their ε-truncations and the entropy `M` with `M'' = 1/m`.

use std::fmt;

use crate::error::{Error, Result};
use crate::potentials::{PotentialKind, PotentialSpec, ScalarFn};
use crate::quad::{adaptive_simpson, ChebInterp};

const ENTROPY_TOL: f64 = 1e-13;

/// User-supplied mobility. A `degenerate` mobility lives on `[-1, 1]` and
/// must vanish exactly at ±1; otherwise it is evaluated on the whole line.
#[derive(Clone)]
pub struct CustomMobility {
    pub m: ScalarFn,
    pub dm: ScalarFn,
    pub lip: f64,
    pub degenerate: bool,
}

#[derive(Clone)]
pub enum MobilityKind {
    Constant { m0: f64 },
    PolyDegenerate { alpha: f64 },
    Custom(CustomMobility),
}

impl fmt::Debug for MobilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MobilityKind::Constant { m0 } => f.debug_struct("Constant").field("m0", m0).finish(),
            MobilityKind::PolyDegenerate { alpha } => {
                f.debug_struct("PolyDegenerate").field("alpha", alpha).finish()
            }
            MobilityKind::Custom(c) => f
                .debug_struct("Custom")
                .field("lip", &c.lip)
                .field("degenerate", &c.degenerate)
                .finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MobilitySpec {
    kind: MobilityKind,
    lip_m: f64,
}

impl MobilitySpec {
    pub fn constant(m0: f64) -> Result<Self> {
        if !(m0 > 0.0 && m0.is_finite()) {
            return Err(Error::Validation(format!(
                "constant mobility must be positive, got m0 = {m0}"
            )));
        }
        Ok(MobilitySpec {
            kind: MobilityKind::Constant { m0 },
            lip_m: 0.0,
        })
    }

    /// `m_α(r) = (1 - r²)^α`, `α ≥ 1`.
    pub fn poly_degenerate(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!(
                "degenerate mobility exponent must satisfy alpha >= 1, got {alpha}"
            )));
        }
        // sup |m_α'| = 2α r (1-r²)^(α-1) at r² = 1/(2α-1)
        let lip_m = if alpha == 1.0 {
            2.0
        } else {
            let r2 = 1.0 / (2.0 * alpha - 1.0);
            2.0 * alpha * r2.sqrt() * (1.0 - r2).powf(alpha - 1.0)
        };
        Ok(MobilitySpec {
            kind: MobilityKind::PolyDegenerate { alpha },
            lip_m,
        })
    }

    pub fn custom(custom: CustomMobility) -> Result<Self> {
        if !(custom.lip >= 0.0 && custom.lip.is_finite()) {
            return Err(Error::invalid("custom mobility needs a finite Lipschitz constant"));
        }
        if custom.degenerate && ((custom.m)(1.0) != 0.0 || (custom.m)(-1.0) != 0.0) {
            return Err(Error::Validation(
                "a degenerate mobility must vanish at r = ±1".into(),
            ));
        }
        let lip_m = custom.lip;
        Ok(MobilitySpec {
            kind: MobilityKind::Custom(custom),
            lip_m,
        })
    }

    pub fn kind(&self) -> &MobilityKind {
        &self.kind
    }

    /// `‖m'‖_{L^∞(-1,1)}`.
    pub fn lip_m(&self) -> f64 {
        self.lip_m
    }

    pub fn is_degenerate(&self) -> bool {
        match &self.kind {
            MobilityKind::Constant { .. } => false,
            MobilityKind::PolyDegenerate { .. } => true,
            MobilityKind::Custom(c) => c.degenerate,
        }
    }

    fn check_closed(&self, what: &'static str, r: f64) -> Result<()> {
        if self.is_degenerate() && !(r.abs() <= 1.0) {
            return Err(Error::Domain { what, value: r });
        }
        Ok(())
    }

    pub fn eval_m(&self, r: f64) -> Result<f64> {
        self.check_closed("m", r)?;
        Ok(self.m_unchecked(r))
    }

    pub fn eval_dm(&self, r: f64) -> Result<f64> {
        self.check_closed("m'", r)?;
        Ok(self.dm_unchecked(r))
    }

    pub(crate) fn m_unchecked(&self, r: f64) -> f64 {
        match &self.kind {
            MobilityKind::Constant { m0 } => *m0,
            MobilityKind::PolyDegenerate { alpha } => {
                // factored form keeps full relative accuracy near ±1
                let u = (1.0 - r) * (1.0 + r);
                if *alpha == 1.0 {
                    u
                } else {
                    u.powf(*alpha)
                }
            }
            MobilityKind::Custom(c) => (c.m)(r),
        }
    }

    pub(crate) fn dm_unchecked(&self, r: f64) -> f64 {
        match &self.kind {
            MobilityKind::Constant { .. } => 0.0,
            MobilityKind::PolyDegenerate { alpha } => {
                if *alpha == 1.0 {
                    -2.0 * r
                } else {
                    -2.0 * alpha * r * ((1.0 - r) * (1.0 + r)).powf(alpha - 1.0)
                }
            }
            MobilityKind::Custom(c) => (c.dm)(r),
        }
    }

    /// `‖m‖_{C⁰([-1,1])}` (or of the whole line for nondegenerate kinds, sampled).
    pub fn sup_m(&self) -> f64 {
        match &self.kind {
            MobilityKind::Constant { m0 } => *m0,
            MobilityKind::PolyDegenerate { .. } => 1.0,
            MobilityKind::Custom(c) => (0..=2000)
                .map(|i| (c.m)(-1.0 + i as f64 / 1000.0).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Lower bound of `m` on the sample grid; `0` for degenerate kinds.
    pub fn inf_m(&self) -> f64 {
        match &self.kind {
            MobilityKind::Constant { m0 } => *m0,
            MobilityKind::PolyDegenerate { .. } => 0.0,
            MobilityKind::Custom(c) => (0..=2000)
                .map(|i| (c.m)(-1.0 + i as f64 / 1000.0))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Closed forms of `(M, M')` where one exists.
    fn entropy_closed(&self, r: f64) -> Option<(f64, f64)> {
        match &self.kind {
            MobilityKind::Constant { m0 } => Some((0.5 * r * r / m0, r / m0)),
            MobilityKind::PolyDegenerate { alpha } if *alpha == 1.0 => {
                let xl = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
                let m = 0.5 * (xl(1.0 + r) + xl(1.0 - r));
                let d1 = if r.abs() < 1.0 {
                    r.atanh()
                } else {
                    f64::INFINITY.copysign(r)
                };
                Some((m, d1))
            }
            _ => None,
        }
    }

    /// `M(r) = ∫₀^r (r - s)/m(s) ds` by adaptive quadrature.
    pub fn entropy_by_quadrature(&self, r: f64) -> f64 {
        adaptive_simpson(|s| (r - s) / self.m_unchecked(s), 0.0, r, ENTROPY_TOL)
    }

    /// `M'(r) = ∫₀^r 1/m(s) ds` by adaptive quadrature.
    pub fn entropy_d1_by_quadrature(&self, r: f64) -> f64 {
        adaptive_simpson(|s| 1.0 / self.m_unchecked(s), 0.0, r, ENTROPY_TOL)
    }

    /// Entropy function `M` with `M(0) = M'(0) = 0`, `M'' = 1/m`.
    pub fn eval_big_m(&self, r: f64) -> Result<f64> {
        if self.is_degenerate() {
            let closed_at_edge =
                matches!(self.kind, MobilityKind::PolyDegenerate { alpha } if alpha == 1.0);
            let ok = if closed_at_edge {
                r.abs() <= 1.0
            } else {
                r.abs() < 1.0
            };
            if !ok {
                return Err(Error::Domain { what: "M", value: r });
            }
        }
        Ok(match self.entropy_closed(r) {
            Some((m, _)) => m,
            None => self.entropy_by_quadrature(r),
        })
    }

    pub fn eval_big_m_d1(&self, r: f64) -> Result<f64> {
        if self.is_degenerate() && !(r.abs() < 1.0) {
            return Err(Error::Domain { what: "M'", value: r });
        }
        Ok(match self.entropy_closed(r) {
            Some((_, d1)) => d1,
            None => self.entropy_d1_by_quadrature(r),
        })
    }
}

/// Values of `M`, `M'` and `m` at a freeze point `±(1-ε)`.
#[derive(Debug, Clone, Copy)]
struct Knot {
    at: f64,
    m: f64,
    big_m: f64,
    big_m_d1: f64,
}

#[derive(Debug, Clone)]
enum InteriorEntropy {
    Closed,
    Cached { big_m: ChebInterp, big_m_d1: ChebInterp },
}

/// `m_ε`, frozen at `±(1-ε)`, with the matching entropy `M_ε`.
#[derive(Debug, Clone)]
pub struct TruncatedMobility {
    origin: MobilitySpec,
    eps: f64,
    m_floor: f64,
    sup: f64,
    lo: Knot,
    hi: Knot,
    interior: InteriorEntropy,
}

pub fn build_m_eps(spec: &MobilitySpec, eps: f64) -> Result<TruncatedMobility> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1/4), got {eps}")));
    }
    let a = 1.0 - eps;
    let interior = if spec.entropy_closed(0.0).is_some() {
        InteriorEntropy::Closed
    } else {
        InteriorEntropy::Cached {
            big_m: ChebInterp::build(|r| spec.entropy_by_quadrature(r), -a, a, 1e-14),
            big_m_d1: ChebInterp::build(|r| spec.entropy_d1_by_quadrature(r), -a, a, 1e-14),
        }
    };
    let knot = |at: f64| -> Result<Knot> {
        Ok(Knot {
            at,
            m: spec.eval_m(at)?,
            big_m: spec.eval_big_m(at)?,
            big_m_d1: spec.eval_big_m_d1(at)?,
        })
    };
    let lo = knot(-a)?;
    let hi = knot(a)?;
    let m_floor = lo.m.min(hi.m);
    if !(m_floor > 0.0) {
        return Err(Error::Validation(format!(
            "mobility vanishes inside (-1, 1): m(±(1-ε)) = {m_floor}"
        )));
    }
    let sup = spec.sup_m();
    Ok(TruncatedMobility {
        origin: spec.clone(),
        eps,
        m_floor,
        sup,
        lo,
        hi,
        interior,
    })
}

impl TruncatedMobility {
    pub fn origin(&self) -> &MobilitySpec {
        &self.origin
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn m_floor(&self) -> f64 {
        self.m_floor
    }

    pub fn sup_m(&self) -> f64 {
        self.sup
    }

    pub fn lip_m(&self) -> f64 {
        self.origin.lip_m
    }

    fn knot(&self, r: f64) -> Option<&Knot> {
        if r > self.hi.at {
            Some(&self.hi)
        } else if r < self.lo.at {
            Some(&self.lo)
        } else {
            None
        }
    }

    pub fn m(&self, r: f64) -> f64 {
        match self.knot(r) {
            Some(k) => k.m,
            None => self.origin.m_unchecked(r),
        }
    }

    /// Derivative of `m_ε`; zero on the frozen branches.
    pub fn dm(&self, r: f64) -> f64 {
        match self.knot(r) {
            Some(_) => 0.0,
            None => self.origin.dm_unchecked(r),
        }
    }

    fn interior_entropy(&self, r: f64) -> (f64, f64) {
        match &self.interior {
            InteriorEntropy::Closed => self.origin.entropy_closed(r).expect("closed form"),
            InteriorEntropy::Cached { big_m, big_m_d1 } => (big_m.eval(r), big_m_d1.eval(r)),
        }
    }

    /// `M_ε`.
    pub fn entropy(&self, r: f64) -> f64 {
        match self.knot(r) {
            Some(k) => {
                let d = r - k.at;
                k.big_m + k.big_m_d1 * d + 0.5 * d * d / k.m
            }
            None => self.interior_entropy(r).0,
        }
    }

    pub fn entropy_d1(&self, r: f64) -> f64 {
        match self.knot(r) {
            Some(k) => k.big_m_d1 + (r - k.at) / k.m,
            None => self.interior_entropy(r).1,
        }
    }

    /// `M_ε'' = 1/m_ε`.
    pub fn entropy_d2(&self, r: f64) -> f64 {
        1.0 / self.m(r)
    }
}

/// Both sides of `(|r|-1)₊² ≤ 2ε‖m'‖_∞ M_ε(r)`.
pub fn confinement_gap(tm: &TruncatedMobility, r: f64) -> (f64, f64) {
    let excess = (r.abs() - 1.0).max(0.0);
    (excess * excess, 2.0 * tm.eps * tm.lip_m() * tm.entropy(r))
}

#[derive(Debug, Clone)]
pub struct MobilityCurvatureTable {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
    pub max_jump: f64,
}

/// Tabulates `m F''` on `grid_n` uniform points of `[-1, 1]`, endpoints included.
pub fn compat_mf(
    spec: &MobilitySpec,
    pot: &PotentialSpec,
    grid_n: usize,
) -> Result<MobilityCurvatureTable> {
    if grid_n < 3 {
        return Err(Error::invalid("compatibility table needs at least 3 points"));
    }
    let closed = |r: f64| -> Option<f64> {
        let u = 1.0 - r * r;
        match (&spec.kind, pot.kind()) {
            (MobilityKind::PolyDegenerate { alpha }, PotentialKind::Logarithmic { theta, theta0 }) => {
                Some(theta * u.powf(alpha - 1.0) - theta0 * u.powf(*alpha))
            }
            (_, PotentialKind::DoubleObstacle) | (_, PotentialKind::Polynomial) => {
                Some(spec.m_unchecked(r) * pot.d2_unchecked(r))
            }
            _ => None,
        }
    };
    let limit_at = |side: f64| -> Result<f64> {
        let probe = |d: f64| spec.m_unchecked(side * (1.0 - d)) * pot.d2_unchecked(side * (1.0 - d));
        let coarse = probe(1e-6);
        let fine = probe(1e-9);
        if !fine.is_finite() || (fine - coarse).abs() > 1e-4 * (1.0 + coarse.abs()) {
            return Err(Error::Incompatible(format!(
                "m F'' appears unbounded near r = {side}: {coarse:e} at 1e-6, {fine:e} at 1e-9"
            )));
        }
        Ok(fine)
    };
    let mut r = Vec::with_capacity(grid_n);
    let mut values = Vec::with_capacity(grid_n);
    for i in 0..grid_n {
        let x = if i == 0 {
            -1.0
        } else if i == grid_n - 1 {
            1.0
        } else {
            -1.0 + 2.0 * i as f64 / (grid_n - 1) as f64
        };
        let v = match closed(x) {
            Some(v) => v,
            None if x.abs() == 1.0 => limit_at(x)?,
            None => spec.m_unchecked(x) * pot.d2_unchecked(x),
        };
        if !v.is_finite() {
            return Err(Error::Incompatible(format!("m F'' is not finite at r = {x}")));
        }
        r.push(x);
        values.push(v);
    }
    let max_jump = values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    Ok(MobilityCurvatureTable {
        r,
        values,
        max_jump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn mpol() -> MobilitySpec {
        MobilitySpec::poly_degenerate(1.0).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let m = mpol();
        assert_eq!(m.eval_big_m(0.0).unwrap(), 0.0);
        let closed = 0.5 * (1.5 * 1.5f64.ln() + 0.5 * 0.5f64.ln());
        let v = m.eval_big_m(0.5).unwrap();
        assert!((v - closed).abs() < 1e-15);
        assert!((v - 0.130_812_036).abs() < 1e-9);
        // independent route: double integral of 1/(1-s²)
        let quad = m.entropy_by_quadrature(0.5);
        assert!((quad - v).abs() < 1e-9);
        assert!((m.eval_big_m(1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((m.eval_big_m(-1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(m.eval_big_m(1.01).is_err());
    }

    #[test]
    fn entropy_is_even_for_even_mobility() {
        let m = MobilitySpec::poly_degenerate(1.5).unwrap();
        for &r in &[0.1, 0.4, 0.8, 0.95] {
            let a = m.eval_big_m(r).unwrap();
            let b = m.eval_big_m(-r).unwrap();
            assert!((a - b).abs() < 1e-9);
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn lip_constants() {
        assert_eq!(mpol().lip_m(), 2.0);
        // α = 2: sup |4 r (1-r²)| at r = 1/√3
        let m2 = MobilitySpec::poly_degenerate(2.0).unwrap();
        let want = 4.0 / 3f64.sqrt() * (2.0 / 3.0);
        assert!((m2.lip_m() - want).abs() < 1e-14);
        let sampled = (0..=100_000)
            .map(|i| m2.dm_unchecked(-1.0 + 2.0 * i as f64 / 100_000.0).abs())
            .fold(0.0, f64::max);
        assert!(sampled <= m2.lip_m() + 1e-12);
        assert!(sampled >= m2.lip_m() - 1e-6);
    }

    #[test]
    fn build_m_eps_examples() {
        let tm = build_m_eps(&mpol(), 0.1).unwrap();
        assert!((tm.m(0.95) - 0.19).abs() < 1e-15);
        assert_eq!(tm.m(0.5), 0.75);
        assert!((tm.m_floor() - 0.19).abs() < 1e-15);
        for &eps in &[0.2, 0.05, 0.01] {
            let c = build_m_eps(&MobilitySpec::constant(0.7).unwrap(), eps).unwrap();
            for &r in &[-3.0, -0.5, 0.0, 0.99, 12.0] {
                assert_eq!(c.m(r), 0.7);
            }
        }
        assert!(build_m_eps(&mpol(), 0.3).is_err());
    }

    #[test]
    fn truncated_mobility_bounds_and_lipschitz() {
        let tm = build_m_eps(&mpol(), 0.05).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..20_001 {
            let r = -3.0 + 6.0 * i as f64 / 20_000.0;
            let m = tm.m(r);
            assert!(m >= tm.m_floor() - 1e-15 && m <= 1.0);
            if let Some((r0, m0)) = prev {
                assert!((m - m0).abs() <= tm.lip_m() * (r - r0) + 1e-12);
            }
            prev = Some((r, m));
        }
    }

    #[test]
    fn entropy_second_derivative_times_mobility_is_one() {
        for spec in [mpol(), MobilitySpec::poly_degenerate(2.0).unwrap()] {
            let tm = build_m_eps(&spec, 0.1).unwrap();
            // Richardson-extrapolated central second difference
            let d2 = |r: f64, h: f64| {
                (tm.entropy(r + h) - 2.0 * tm.entropy(r) + tm.entropy(r - h)) / (h * h)
            };
            let rich = |r: f64| {
                let h = 1e-2;
                let a = d2(r, h);
                let b = d2(r, h / 2.0);
                let c = d2(r, h / 4.0);
                let ab = (4.0 * b - a) / 3.0;
                let bc = (4.0 * c - b) / 3.0;
                (16.0 * bc - ab) / 15.0
            };
            for &r in &[-2.0, -1.3, -0.6, 0.0, 0.3, 0.7, 1.5, 2.5] {
                let v = rich(r) * tm.m(r);
                assert!((v - 1.0).abs() < 1e-8, "r = {r}: {v}");
            }
        }
    }

    #[test]
    fn entropy_is_c1_across_knots() {
        let tm = build_m_eps(&MobilitySpec::poly_degenerate(2.0).unwrap(), 0.1).unwrap();
        for &k in &[0.9, -0.9] {
            let h = 1e-10;
            assert!((tm.entropy(k + h) - tm.entropy(k - h)).abs() < 1e-8);
            assert!((tm.entropy_d1(k + h) - tm.entropy_d1(k - h)).abs() < 1e-7);
        }
    }

    #[test]
    fn alpha_two_entropy_diverges_at_the_boundary() {
        let m2 = MobilitySpec::poly_degenerate(2.0).unwrap();
        let vals: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|d| m2.eval_big_m(1.0 - d).unwrap())
            .collect();
        for w in vals.windows(2) {
            // logarithmic growth: +¼ ln 10 per decade
            assert!(w[1] - w[0] > 0.5, "{vals:?}");
        }
        // α = 1 stays bounded by ln 2
        assert!(mpol().eval_big_m(1.0 - 1e-9).unwrap() < 2f64.ln());
    }

    #[test]
    fn confinement_gap_examples() {
        let tm = build_m_eps(&mpol(), 0.1).unwrap();
        let (lhs, _) = confinement_gap(&tm, 0.5);
        assert_eq!(lhs, 0.0);
        let (lhs, rhs) = confinement_gap(&tm, 1.1);
        assert!((lhs - 0.01).abs() < 1e-15);
        assert!(tm.entropy(1.1) >= 0.01 / (2.0 * 0.19));
        assert!(lhs <= rhs);
        for &eps in &[0.2, 0.1, 0.05] {
            let tm = build_m_eps(&mpol(), eps).unwrap();
            for i in 0..10_001 {
                let r = -3.0 + 6.0 * i as f64 / 10_000.0;
                let (lhs, rhs) = confinement_gap(&tm, r);
                assert!(lhs <= rhs, "eps = {eps}, r = {r}");
            }
        }
    }

    #[test]
    fn compat_mf_examples() {
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let t = compat_mf(&mpol(), &log, 201).unwrap();
        assert_eq!(t.values[0], 1.0);
        assert_eq!(t.values[200], 1.0);
        assert_eq!(t.values[100], -1.0);
        assert!(t.max_jump < 0.1);
        let p = compat_mf(&mpol(), &PotentialSpec::polynomial(), 101).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.values[100], 0.0);
    }

    #[test]
    fn compat_mf_detects_unbounded_product() {
        let log = PotentialSpec::logarithmic(1.0, 2.0).unwrap();
        let sqrt_mob = MobilitySpec::custom(CustomMobility {
            m: Arc::new(|r: f64| (1.0 - r * r).max(0.0).sqrt()),
            dm: Arc::new(|r: f64| -r / (1.0 - r * r).sqrt()),
            lip: f64::MAX,
            degenerate: true,
        })
        .unwrap();
        assert!(compat_mf(&sqrt_mob, &log, 101).is_err());
        let fine = MobilitySpec::custom(CustomMobility {
            m: Arc::new(|r: f64| 1.0 - r * r),
            dm: Arc::new(|r: f64| -2.0 * r),
            lip: 2.0,
            degenerate: true,
        })
        .unwrap();
        let t = compat_mf(&fine, &log, 101).unwrap();
        assert!((t.values[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn custom_truncation_matches_closed_form() {
        let custom = MobilitySpec::custom(CustomMobility {
            m: Arc::new(|r: f64| 1.0 - r * r),
            dm: Arc::new(|r: f64| -2.0 * r),
            lip: 2.0,
            degenerate: true,
        })
        .unwrap();
        let a = build_m_eps(&custom, 0.05).unwrap();
        let b = build_m_eps(&mpol(), 0.05).unwrap();
        for &r in &[-1.4, -0.96, -0.5, 0.0, 0.33, 0.94, 2.0] {
            assert!((a.entropy(r) - b.entropy(r)).abs() < 1e-9, "r = {r}");
        }
    }
}
