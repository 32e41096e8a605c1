//! Double-well potentials and their two regularizations.
//!
//! Every potential is stored as a split `F = F₁ + F₂` with `F₁` convex
//! (possibly singular at ±1) and `F₂` smooth. The λ-pipeline replaces the
//! monotone graph `γ = F' + C_F r` by its Yosida approximation; the
//! ε-pipeline freezes the curvature of `F₁` outside `[-1+ε, 1-ε]` and
//! continues `F₂` beyond ±1 by its second-order Taylor polynomial.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const RESOLVENT_MAX_ITER: usize = 200;
const PRIMITIVE_TOL: f64 = 1e-10;
const TABLE_STEP: f64 = 1.0 / 16.0;
const TABLE_HALF_WIDTH: f64 = 8.0;

/// A scalar C² function given by its value and first two derivatives.
#[derive(Clone)]
pub struct SmoothPart {
    pub value: ScalarFn,
    pub d1: ScalarFn,
    pub d2: ScalarFn,
}

impl SmoothPart {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SmoothPart {
            value: Arc::new(value),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0, |_| 0.0)
    }

    /// `c r² / 2`.
    pub fn quadratic(c: f64) -> Self {
        Self::new(move |r| 0.5 * c * r * r, move |r| c * r, move |_| c)
    }
}

/// User-supplied split potential. `bounded` restricts the domain to `[-1, 1]`.
#[derive(Clone)]
pub struct CustomPotential {
    pub convex: SmoothPart,
    pub smooth: SmoothPart,
    pub bounded: bool,
}

#[derive(Clone)]
pub enum PotentialKind {
    Logarithmic { theta: f64, theta0: f64 },
    DoubleObstacle,
    Polynomial,
    Custom(CustomPotential),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Logarithmic { theta, theta0 } => f
                .debug_struct("Logarithmic")
                .field("theta", theta)
                .field("theta0", theta0)
                .finish(),
            PotentialKind::DoubleObstacle => f.write_str("DoubleObstacle"),
            PotentialKind::Polynomial => f.write_str("Polynomial"),
            PotentialKind::Custom(c) => f
                .debug_struct("Custom")
                .field("bounded", &c.bounded)
                .finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    kind: PotentialKind,
    c_f: f64,
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl PotentialSpec {
    /// `θ/2((1+r)ln(1+r) + (1-r)ln(1-r)) + θ₀/2 (1-r²)` with `0 < θ < θ₀`.
    pub fn logarithmic(theta: f64, theta0: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < theta0) {
            return Err(Error::Validation(format!(
                "logarithmic potential needs 0 < theta < theta0, got theta = {theta}, theta0 = {theta0}"
            )));
        }
        Ok(PotentialSpec {
            kind: PotentialKind::Logarithmic { theta, theta0 },
            c_f: theta0 - theta,
        })
    }

    /// `1 - r²` on `[-1, 1]`, infinite outside.
    pub fn double_obstacle() -> Self {
        PotentialSpec {
            kind: PotentialKind::DoubleObstacle,
            c_f: 2.0,
        }
    }

    /// `(r² - 1)² / 4` with the sharp semiconvexity constant `C_F = 1`.
    pub fn polynomial() -> Self {
        PotentialSpec {
            kind: PotentialKind::Polynomial,
            c_f: 1.0,
        }
    }

    pub fn custom(custom: CustomPotential, c_f: f64) -> Result<Self> {
        PotentialSpec {
            kind: PotentialKind::Custom(custom),
            c_f: 1.0,
        }
        .with_c_f(c_f)
    }

    pub fn with_c_f(mut self, c_f: f64) -> Result<Self> {
        if !(c_f > 0.0 && c_f.is_finite()) {
            return Err(Error::invalid(format!("C_F must be positive, got {c_f}")));
        }
        self.c_f = c_f;
        Ok(self)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn c_f(&self) -> f64 {
        self.c_f
    }

    /// True when the potential only lives on `[-1, 1]`.
    pub fn is_singular(&self) -> bool {
        match &self.kind {
            PotentialKind::Logarithmic { .. } | PotentialKind::DoubleObstacle => true,
            PotentialKind::Polynomial => false,
            PotentialKind::Custom(c) => c.bounded,
        }
    }

    fn check_closed(&self, what: &'static str, r: f64) -> Result<()> {
        if self.is_singular() && !(r.abs() <= 1.0) {
            return Err(Error::Domain { what, value: r });
        }
        Ok(())
    }

    fn check_open(&self, what: &'static str, r: f64) -> Result<()> {
        let singular_derivative = match &self.kind {
            PotentialKind::Logarithmic { .. } => true,
            PotentialKind::DoubleObstacle => false,
            PotentialKind::Polynomial => false,
            PotentialKind::Custom(c) => c.bounded,
        };
        if singular_derivative && !(r.abs() < 1.0) {
            return Err(Error::Domain { what, value: r });
        }
        self.check_closed(what, r)
    }

    pub fn eval_f(&self, r: f64) -> Result<f64> {
        self.check_closed("F", r)?;
        Ok(self.f_unchecked(r))
    }

    pub fn eval_d1f(&self, r: f64) -> Result<f64> {
        self.check_open("F'", r)?;
        Ok(self.d1_unchecked(r))
    }

    pub fn eval_d2f(&self, r: f64) -> Result<f64> {
        self.check_open("F''", r)?;
        Ok(self.d2_unchecked(r))
    }

    pub(crate) fn f_unchecked(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Polynomial => {
                let q = r * r - 1.0;
                0.25 * q * q
            }
            _ => self.f1(r) + self.f2(r),
        }
    }

    pub(crate) fn d1_unchecked(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Polynomial => r * r * r - r,
            _ => self.f1_d1(r) + self.f2_d1(r),
        }
    }

    pub(crate) fn d2_unchecked(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Polynomial => 3.0 * r * r - 1.0,
            _ => self.f1_d2(r) + self.f2_d2(r),
        }
    }

    /// Convex part `F₁`.
    pub fn f1(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic { theta, .. } => {
                0.5 * theta * (xlnx(1.0 + r) + xlnx(1.0 - r))
            }
            PotentialKind::DoubleObstacle => 0.0,
            PotentialKind::Polynomial => 0.25 * (r * r * r * r + 1.0),
            PotentialKind::Custom(c) => (c.convex.value)(r),
        }
    }

    pub fn f1_d1(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic { theta, .. } => theta * r.atanh(),
            PotentialKind::DoubleObstacle => 0.0,
            PotentialKind::Polynomial => r * r * r,
            PotentialKind::Custom(c) => (c.convex.d1)(r),
        }
    }

    pub fn f1_d2(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic { theta, .. } => theta / (1.0 - r * r),
            PotentialKind::DoubleObstacle => 0.0,
            PotentialKind::Polynomial => 3.0 * r * r,
            PotentialKind::Custom(c) => (c.convex.d2)(r),
        }
    }

    /// Smooth part `F₂`.
    pub fn f2(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic { theta0, .. } => 0.5 * theta0 * (1.0 - r * r),
            PotentialKind::DoubleObstacle => 1.0 - r * r,
            PotentialKind::Polynomial => -0.5 * r * r,
            PotentialKind::Custom(c) => (c.smooth.value)(r),
        }
    }

    pub fn f2_d1(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic { theta0, .. } => -theta0 * r,
            PotentialKind::DoubleObstacle => -2.0 * r,
            PotentialKind::Polynomial => -r,
            PotentialKind::Custom(c) => (c.smooth.d1)(r),
        }
    }

    pub fn f2_d2(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Logarithmic { theta0, .. } => -theta0,
            PotentialKind::DoubleObstacle => -2.0,
            PotentialKind::Polynomial => -1.0,
            PotentialKind::Custom(c) => (c.smooth.d2)(r),
        }
    }

    /// Smallest constant `C` with `|F'| ≤ C(1+F)`, `|F''| ≤ C(1+F)` and
    /// `F'' ≥ -C` on `samples` uniform points of `[-range, range]`.
    pub fn growth_constant(&self, range: f64, samples: usize) -> f64 {
        let mut c = 0.0_f64;
        for i in 0..samples {
            let r = -range + 2.0 * range * i as f64 / (samples - 1).max(1) as f64;
            let f = self.f_unchecked(r);
            let d1 = self.d1_unchecked(r);
            let d2 = self.d2_unchecked(r);
            c = c.max(d1.abs() / (1.0 + f)).max(d2.abs() / (1.0 + f)).max(-d2);
        }
        c
    }

    fn require_regular(&self) -> Result<()> {
        if self.is_singular() {
            return Err(Error::Validation(format!(
                "the Yosida pipeline needs a potential that is C² on the whole real line; {:?} is singular",
                self.kind
            )));
        }
        Ok(())
    }

    /// `γ(r) = F'(r) + C_F r`.
    pub(crate) fn gamma(&self, c_f: f64, r: f64) -> f64 {
        self.d1_unchecked(r) + c_f * r
    }

    pub(crate) fn gamma_d1(&self, c_f: f64, r: f64) -> f64 {
        self.d2_unchecked(r) + c_f
    }
}

/// Solves `r + λγ(r) = y` by safeguarded Newton on the bracket `[min(0,y), max(0,y)]`.
fn solve_resolvent(spec: &PotentialSpec, c_f: f64, lambda: f64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    let h = |r: f64| r + lambda * spec.gamma(c_f, r) - y;
    let (mut lo, mut hi) = if y > 0.0 { (0.0, y) } else { (y, 0.0) };
    let mut r = y / (1.0 + lambda * spec.gamma_d1(c_f, 0.0).max(0.0));
    r = r.clamp(lo, hi);
    let mut residual = h(r);
    for _ in 0..RESOLVENT_MAX_ITER {
        if residual == 0.0 {
            return Ok(r);
        }
        if residual > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let slope = 1.0 + lambda * spec.gamma_d1(c_f, r);
        let mut next = r - residual / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - r).abs();
        r = next;
        residual = h(r);
        // iterate to rounding level so that γ_λ is smooth enough to integrate
        let scale = r.abs().max(1.0);
        if step <= 4.0 * f64::EPSILON * scale || hi - lo <= 4.0 * f64::EPSILON * scale {
            return Ok(r);
        }
    }
    Err(Error::NoConvergence {
        what: "resolvent",
        iterations: RESOLVENT_MAX_ITER,
        residual,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Resolvent `J_λ = (I + λγ)⁻¹` of `γ = F' + C_F r`.
pub fn resolvent(spec: &PotentialSpec, c_f: f64, lambda: f64, y: f64) -> Result<f64> {
    spec.require_regular()?;
    check_lambda(lambda)?;
    solve_resolvent(spec, c_f, lambda, y)
}

/// Yosida approximation `γ_λ(r) = (r - J_λ(r)) / λ`.
///
/// Evaluated as `γ(J_λ(r))`, which is the same quantity without the
/// cancellation in `r - J_λ(r)` for small λ.
pub fn yosida(spec: &PotentialSpec, c_f: f64, lambda: f64, r: f64) -> Result<f64> {
    let j = resolvent(spec, c_f, lambda, r)?;
    Ok(spec.gamma(c_f, j))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegMode {
    Lambda(f64),
    Eps(f64),
}

/// Cumulative primitive of `γ_λ` on a uniform table of nodes.
#[derive(Debug, Clone)]
struct PrimitiveTable {
    step: f64,
    half_width: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RegularizedPotential {
    origin: PotentialSpec,
    mode: RegMode,
    c_f: f64,
    sup_d2: f64,
    table: Option<PrimitiveTable>,
}

/// λ-Yosida regularization `F_λ(r) = F(0) + γ̂_λ(r) - C_F r²/2`.
pub fn build_lambda_reg(spec: &PotentialSpec, c_f: f64, lambda: f64) -> Result<RegularizedPotential> {
    spec.require_regular()?;
    check_lambda(lambda)?;
    if !(c_f > 0.0) {
        return Err(Error::invalid(format!("C_F must be positive, got {c_f}")));
    }
    let mut reg = RegularizedPotential {
        origin: spec.clone(),
        mode: RegMode::Lambda(lambda),
        c_f,
        sup_d2: (1.0 / lambda - c_f).max(c_f),
        table: None,
    };
    // probe the resolvent once so that invalid specs fail here rather than mid-run
    for y in [-4.0, -1.0, 0.5, 3.0] {
        solve_resolvent(spec, c_f, lambda, y)?;
    }
    let cells = (TABLE_HALF_WIDTH / TABLE_STEP).round() as usize;
    let mut values = vec![0.0; 2 * cells + 1];
    for i in 0..cells {
        let a = i as f64 * TABLE_STEP;
        let b = (i + 1) as f64 * TABLE_STEP;
        values[cells + i + 1] =
            values[cells + i] + adaptive_simpson(|s| reg.gamma_lambda(s), a, b, 1e-3 * PRIMITIVE_TOL);
        values[cells - i - 1] =
            values[cells - i] + adaptive_simpson(|s| reg.gamma_lambda(s), -a, -b, 1e-3 * PRIMITIVE_TOL);
    }
    reg.table = Some(PrimitiveTable {
        step: TABLE_STEP,
        half_width: TABLE_HALF_WIDTH,
        values,
    });
    Ok(reg)
}

/// ε-truncation `F_ε = F_{1,ε} + F̃₂`.
pub fn build_eps_reg(spec: &PotentialSpec, eps: f64) -> Result<RegularizedPotential> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1/4), got {eps}")));
    }
    if !spec.is_singular() {
        return Err(Error::Validation(
            "the epsilon pipeline needs a potential defined on [-1, 1] (logarithmic, double-obstacle or bounded custom)"
                .into(),
        ));
    }
    let a = 1.0 - eps;
    let mut sup1 = spec.f1_d2(a).abs().max(spec.f1_d2(-a).abs());
    let mut sup2 = spec.f2_d2(1.0).abs().max(spec.f2_d2(-1.0).abs());
    const SAMPLES: usize = 2001;
    for i in 0..SAMPLES {
        let t = -1.0 + 2.0 * i as f64 / (SAMPLES - 1) as f64;
        sup1 = sup1.max(spec.f1_d2(a * t).abs());
        sup2 = sup2.max(spec.f2_d2(t).abs());
    }
    Ok(RegularizedPotential {
        origin: spec.clone(),
        mode: RegMode::Eps(eps),
        c_f: spec.c_f(),
        sup_d2: sup1 + sup2,
        table: None,
    })
}

impl RegularizedPotential {
    pub fn origin(&self) -> &PotentialSpec {
        &self.origin
    }

    pub fn mode(&self) -> RegMode {
        self.mode
    }

    pub fn eps(&self) -> Option<f64> {
        match self.mode {
            RegMode::Eps(e) => Some(e),
            RegMode::Lambda(_) => None,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self.mode {
            RegMode::Lambda(l) => Some(l),
            RegMode::Eps(_) => None,
        }
    }

    /// Global bound on `|F_reg''|`.
    pub fn sup_d2(&self) -> f64 {
        self.sup_d2
    }

    /// `c` with `|F_reg(r)| ≤ c(1 + r²)` (λ mode), from `γ̂_λ(r) ≤ r²/(2λ)`.
    pub fn quadratic_growth_constant(&self) -> f64 {
        match self.mode {
            RegMode::Lambda(l) => {
                let f0 = self.origin.f_unchecked(0.0);
                f0.max(0.5 / l + 0.5 * self.c_f)
            }
            RegMode::Eps(_) => {
                let f_edge = self.value(1.0).abs().max(self.value(-1.0).abs());
                let d1_edge = self.d1(1.0).abs().max(self.d1(-1.0).abs());
                f_edge + d1_edge + self.sup_d2
            }
        }
    }

    fn resolve(&self, r: f64) -> f64 {
        let lambda = match self.mode {
            RegMode::Lambda(l) => l,
            RegMode::Eps(_) => unreachable!("resolvent only exists in lambda mode"),
        };
        solve_resolvent(&self.origin, self.c_f, lambda, r).unwrap_or(f64::NAN)
    }

    fn gamma_lambda(&self, r: f64) -> f64 {
        self.origin.gamma(self.c_f, self.resolve(r))
    }

    fn gamma_hat(&self, r: f64) -> f64 {
        let table = self.table.as_ref().expect("lambda mode carries a primitive table");
        let cells = (table.values.len() - 1) / 2;
        let clamped = r.clamp(-table.half_width, table.half_width);
        let idx = ((clamped / table.step).round() as i64).clamp(-(cells as i64), cells as i64);
        let node = idx as f64 * table.step;
        let base = table.values[(idx + cells as i64) as usize];
        base + adaptive_simpson(|s| self.gamma_lambda(s), node, r, PRIMITIVE_TOL)
    }

    pub fn value(&self, r: f64) -> f64 {
        match self.mode {
            RegMode::Lambda(_) => {
                self.origin.f_unchecked(0.0) + self.gamma_hat(r) - 0.5 * self.c_f * r * r
            }
            RegMode::Eps(eps) => {
                let a = 1.0 - eps;
                if r.abs() <= a {
                    return self.origin.f_unchecked(r);
                }
                self.f1_eps(r, a) + self.f2_ext(r)
            }
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        match self.mode {
            RegMode::Lambda(_) => self.gamma_lambda(r) - self.c_f * r,
            RegMode::Eps(eps) => {
                let a = 1.0 - eps;
                if r.abs() <= a {
                    return self.origin.d1_unchecked(r);
                }
                self.f1_eps_d1(r, a) + self.f2_ext_d1(r)
            }
        }
    }

    pub fn d2(&self, r: f64) -> f64 {
        match self.mode {
            RegMode::Lambda(lambda) => {
                let j = self.resolve(r);
                let g1 = self.origin.gamma_d1(self.c_f, j);
                g1 / (1.0 + lambda * g1) - self.c_f
            }
            RegMode::Eps(eps) => {
                let a = 1.0 - eps;
                if r.abs() <= a {
                    return self.origin.d2_unchecked(r);
                }
                self.f1_eps_d2(r, a) + self.f2_ext_d2(r)
            }
        }
    }

    /// `(F_reg', F_reg'')` with a single resolvent solve in λ mode.
    pub fn d1_d2(&self, r: f64) -> (f64, f64) {
        match self.mode {
            RegMode::Lambda(lambda) => {
                let j = self.resolve(r);
                let g1 = self.origin.gamma_d1(self.c_f, j);
                (
                    self.origin.gamma(self.c_f, j) - self.c_f * r,
                    g1 / (1.0 + lambda * g1) - self.c_f,
                )
            }
            RegMode::Eps(_) => (self.d1(r), self.d2(r)),
        }
    }

    fn f1_eps(&self, r: f64, a: f64) -> f64 {
        let o = &self.origin;
        if r.abs() <= a {
            return o.f1(r);
        }
        let k = a.copysign(r);
        let d = r - k;
        o.f1(k) + o.f1_d1(k) * d + 0.5 * o.f1_d2(k) * d * d
    }

    fn f1_eps_d1(&self, r: f64, a: f64) -> f64 {
        let o = &self.origin;
        if r.abs() <= a {
            return o.f1_d1(r);
        }
        let k = a.copysign(r);
        o.f1_d1(k) + o.f1_d2(k) * (r - k)
    }

    fn f1_eps_d2(&self, r: f64, a: f64) -> f64 {
        let o = &self.origin;
        if r.abs() <= a {
            return o.f1_d2(r);
        }
        o.f1_d2(a.copysign(r))
    }

    fn f2_ext(&self, r: f64) -> f64 {
        let o = &self.origin;
        if r.abs() <= 1.0 {
            return o.f2(r);
        }
        let k = 1.0_f64.copysign(r);
        let d = r - k;
        o.f2(k) + o.f2_d1(k) * d + 0.5 * o.f2_d2(k) * d * d
    }

    fn f2_ext_d1(&self, r: f64) -> f64 {
        let o = &self.origin;
        if r.abs() <= 1.0 {
            return o.f2_d1(r);
        }
        let k = 1.0_f64.copysign(r);
        o.f2_d1(k) + o.f2_d2(k) * (r - k)
    }

    fn f2_ext_d2(&self, r: f64) -> f64 {
        let o = &self.origin;
        if r.abs() <= 1.0 {
            return o.f2_d2(r);
        }
        o.f2_d2(1.0_f64.copysign(r))
    }

    /// Convex part of the ε-build, `F_{1,ε}`. `None` in λ mode.
    pub fn convex_part_d2(&self, r: f64) -> Option<f64> {
        self.eps().map(|e| self.f1_eps_d2(r, 1.0 - e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log12() -> PotentialSpec {
        PotentialSpec::logarithmic(1.0, 2.0).unwrap()
    }

    fn linear_gamma() -> PotentialSpec {
        // F ≡ 0 so that γ(r) = C_F r = r
        PotentialSpec::custom(
            CustomPotential {
                convex: SmoothPart::zero(),
                smooth: SmoothPart::zero(),
                bounded: false,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn eval_f_examples() {
        assert_eq!(log12().eval_f(0.0).unwrap(), 1.0);
        let at_one = log12().eval_f(1.0).unwrap();
        assert!((at_one - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log12().eval_f(-1.0).unwrap(), at_one);
        let p = PotentialSpec::polynomial();
        assert_eq!(p.eval_f(1.0).unwrap(), 0.0);
        assert_eq!(p.eval_f(-1.0).unwrap(), 0.0);
        assert!(log12().eval_f(1.0 + 1e-12).is_err());
        assert!(PotentialSpec::double_obstacle().eval_f(-1.5).is_err());
    }

    #[test]
    fn eval_d2f_examples() {
        assert_eq!(log12().eval_d2f(0.0).unwrap(), -1.0);
        assert_eq!(PotentialSpec::double_obstacle().eval_d2f(0.5).unwrap(), -2.0);
        assert_eq!(PotentialSpec::polynomial().eval_d2f(0.0).unwrap(), -1.0);
        assert!(log12().eval_d2f(1.0).is_err());
        assert!(log12().eval_d1f(-1.0).is_err());
    }

    #[test]
    fn logarithmic_rejects_theta_above_theta0() {
        assert!(PotentialSpec::logarithmic(2.0, 1.0).is_err());
        assert!(PotentialSpec::logarithmic(1.0, 1.0).is_err());
        assert!(PotentialSpec::logarithmic(0.0, 1.0).is_err());
    }

    #[test]
    fn log_second_derivative_matches_split() {
        let p = log12();
        for &r in &[-0.9, -0.3, 0.0, 0.4, 0.99] {
            let want = 1.0 / (1.0 - r * r) - 2.0;
            assert!((p.eval_d2f(r).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_growth_constant_exceeds_semiconvexity() {
        let c = PotentialSpec::polynomial().growth_constant(10.0, 20001);
        assert!(c >= 1.0);
        assert!(c < 4.5, "growth constant {c}");
    }

    #[test]
    fn resolvent_examples() {
        let lin = linear_gamma();
        assert!((resolvent(&lin, 1.0, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let p = PotentialSpec::polynomial();
        assert!((resolvent(&p, 1.0, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((resolvent(&p, 1.0, 1e-8, 0.3).unwrap() - 0.3).abs() < 1e-6);
        assert!((resolvent(&lin, 1.0, 1e-8, 0.3).unwrap() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn resolvent_matches_bisection_oracle() {
        // plain bisection on r + λ r³ = y
        let oracle = |lambda: f64, y: f64| {
            let (mut lo, mut hi) = (y.min(0.0), y.max(0.0));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid + lambda * mid * mid * mid - y > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let p = PotentialSpec::polynomial();
        for &lambda in &[1.0, 0.1, 0.01] {
            for &y in &[-5.0, -0.7, 0.01, 0.3, 2.0, 7.5] {
                let got = resolvent(&p, 1.0, lambda, y).unwrap();
                assert!((got - oracle(lambda, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn yosida_examples() {
        let lin = linear_gamma();
        assert!((yosida(&lin, 1.0, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let p = PotentialSpec::polynomial();
        assert!((yosida(&p, 1.0, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(yosida(&p, 1.0, 0.3, 0.0).unwrap(), 0.0);
        assert_eq!(yosida(&lin, 1.0, 0.3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lambda_pipeline_rejects_singular_potentials() {
        assert!(build_lambda_reg(&PotentialSpec::double_obstacle(), 2.0, 0.1).is_err());
        assert!(build_lambda_reg(&log12(), 1.0, 0.1).is_err());
        assert!(resolvent(&log12(), 1.0, 0.1, 0.2).is_err());
    }

    #[test]
    fn lambda_reg_examples() {
        let p = PotentialSpec::polynomial();
        let reg = build_lambda_reg(&p, 1.0, 0.1).unwrap();
        assert_eq!(reg.value(0.0), p.eval_f(0.0).unwrap());

        let fine = build_lambda_reg(&p, 1.0, 1e-4).unwrap();
        assert!((fine.value(0.5) - 0.140625).abs() < 1e-4);

        for &lambda in &[1.0, 0.1, 0.01] {
            let reg = build_lambda_reg(&p, 1.0, lambda).unwrap();
            for i in 0..10_000 {
                let r = -3.0 + 6.0 * i as f64 / 9_999.0;
                assert!(reg.d2(r) >= -1.0 - 1e-12);
                assert!(reg.d2(r).abs() <= reg.sup_d2() + 1e-12);
            }
        }
    }

    #[test]
    fn lambda_reg_primitive_matches_direct_quadrature() {
        let p = PotentialSpec::polynomial();
        let reg = build_lambda_reg(&p, 1.0, 0.05).unwrap();
        for &r in &[-9.3, -2.2, -0.4, 0.77, 1.9, 8.0, 11.0] {
            let direct = adaptive_simpson(|s| yosida(&p, 1.0, 0.05, s).unwrap(), 0.0, r, 1e-11);
            let want = 0.25 + direct - 0.5 * r * r;
            assert!((reg.value(r) - want).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn lambda_reg_first_derivative_is_finite_difference_of_value() {
        let p = PotentialSpec::polynomial();
        let reg = build_lambda_reg(&p, 1.0, 0.1).unwrap();
        let h = 1e-4;
        for &r in &[-1.7, -0.2, 0.6, 2.5] {
            let fd = (reg.value(r + h) - reg.value(r - h)) / (2.0 * h);
            assert!((fd - reg.d1(r)).abs() < 1e-6, "r = {r}");
            let fd2 = (reg.d1(r + h) - reg.d1(r - h)) / (2.0 * h);
            assert!((fd2 - reg.d2(r)).abs() < 1e-5, "r = {r}");
        }
    }

    #[test]
    fn lambda_reg_stays_below_potential_and_grows_quadratically() {
        let p = PotentialSpec::polynomial();
        for &lambda in &[1.0, 0.1, 0.01] {
            let reg = build_lambda_reg(&p, 1.0, lambda).unwrap();
            let c = reg.quadratic_growth_constant();
            for i in 0..401 {
                let r = -4.0 + 8.0 * i as f64 / 400.0;
                let v = reg.value(r);
                assert!(v <= p.eval_f(r).unwrap() + 1e-9, "r = {r}");
                assert!(v.abs() <= c * (1.0 + r * r));
            }
        }
    }

    #[test]
    fn eps_reg_examples() {
        let p = log12();
        let reg = build_eps_reg(&p, 0.1).unwrap();
        assert_eq!(reg.value(0.5), p.eval_f(0.5).unwrap());

        let ob = build_eps_reg(&PotentialSpec::double_obstacle(), 0.2).unwrap();
        assert_eq!(ob.value(2.0), -3.0);
        assert_eq!(ob.value(-2.0), -3.0);

        let a = 0.9;
        let frozen = p.f1_d2(a);
        for i in 1..200 {
            let r = a + 0.05 * i as f64;
            assert_eq!(reg.convex_part_d2(r).unwrap(), frozen);
            assert_eq!(reg.convex_part_d2(-r).unwrap(), p.f1_d2(-a));
        }
    }

    #[test]
    fn eps_reg_rejects_bad_inputs() {
        assert!(build_eps_reg(&log12(), 0.25).is_err());
        assert!(build_eps_reg(&log12(), 0.0).is_err());
        assert!(build_eps_reg(&PotentialSpec::polynomial(), 0.1).is_err());
    }

    #[test]
    fn eps_reg_second_derivative_constant_outside_and_bounded() {
        let p = log12();
        for &eps in &[0.2, 0.1, 0.05, 0.01] {
            let reg = build_eps_reg(&p, eps).unwrap();
            let a = 1.0 - eps;
            let bound = p.f1_d2(a).abs() + p.f1_d2(-a).abs() + 2.0;
            assert!(reg.sup_d2() <= bound + 1e-12);
            let right = reg.d2(a + 1e-3);
            let left = reg.d2(-a - 1e-3);
            for i in 0..1000 {
                let r = -5.0 + 10.0 * i as f64 / 999.0;
                assert!(reg.d2(r).abs() <= reg.sup_d2() + 1e-12);
                if r > a && r <= 1.0 {
                    assert_eq!(reg.d2(r), right);
                }
                if r < -a && r >= -1.0 {
                    assert_eq!(reg.d2(r), left);
                }
            }
        }
    }

    #[test]
    fn eps_reg_is_c2_at_the_knots() {
        let p = log12();
        let reg = build_eps_reg(&p, 0.1).unwrap();
        for &k in &[0.9, -0.9, 1.0, -1.0] {
            let h = 1e-9;
            assert!((reg.value(k + h) - reg.value(k - h)).abs() < 1e-7);
            assert!((reg.d1(k + h) - reg.d1(k - h)).abs() < 1e-6);
            assert!((reg.d2(k + h) - reg.d2(k - h)).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn yosida_is_lipschitz_and_resolvent_monotone(
            r1 in -5.0f64..5.0,
            r2 in -5.0f64..5.0,
            li in 0usize..4,
        ) {
            let lambda = [1.0, 0.1, 0.01, 0.001][li];
            let p = PotentialSpec::polynomial();
            let g1 = yosida(&p, 1.0, lambda, r1).unwrap();
            let g2 = yosida(&p, 1.0, lambda, r2).unwrap();
            prop_assert!((g1 - g2).abs() <= (r1 - r2).abs() / lambda * (1.0 + 1e-9) + 1e-9);
            let j1 = resolvent(&p, 1.0, lambda, r1).unwrap();
            let j2 = resolvent(&p, 1.0, lambda, r2).unwrap();
            prop_assert!((j1 - j2) * (r1 - r2) >= 0.0);
            prop_assert!((j1 - j2).abs() <= (r1 - r2).abs() + 1e-12);
        }

        #[test]
        fn eps_reg_agrees_with_potential_inside(r in -0.95f64..0.95, ei in 0usize..3) {
            let eps = [0.05, 0.1, 0.2][ei];
            let p = log12();
            let reg = build_eps_reg(&p, eps).unwrap();
            if r.abs() <= 1.0 - eps {
                prop_assert_eq!(reg.value(r).to_bits(), p.eval_f(r).unwrap().to_bits());
            }
        }
    }
}
