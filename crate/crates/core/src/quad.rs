//! One-dimensional quadrature and interpolation helpers.

use std::f64::consts::PI;

const MAX_DEPTH: u32 = 40;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns a negative value when `b < a`, as for an oriented integral.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // below this, the difference is rounding noise and refining cannot help
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= (15.0 * tol).max(floor) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Polynomial interpolant on Chebyshev points of the second kind,
/// evaluated with the barycentric formula.
#[derive(Debug, Clone)]
pub struct ChebInterp {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl ChebInterp {
    /// Samples `f` on `[lo, hi]`, doubling the degree until the trailing
    /// Chebyshev coefficients fall below `rel_tol` times the largest one.
    pub fn build<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Self {
        let mut degree = 16;
        loop {
            let interp = Self::with_degree(&f, lo, hi, degree);
            let coeffs = interp.chebyshev_coefficients();
            let scale = coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
            let tail = coeffs[coeffs.len() - 4..]
                .iter()
                .fold(0.0_f64, |acc, c| acc.max(c.abs()));
            if tail <= rel_tol * scale.max(f64::MIN_POSITIVE) || degree >= 4096 {
                return interp;
            }
            degree *= 2;
        }
    }

    fn with_degree<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, degree: usize) -> Self {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let nodes: Vec<f64> = (0..=degree)
            .map(|j| mid + half * (PI * j as f64 / degree as f64).cos())
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        let weights = (0..=degree)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == degree {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        ChebInterp {
            lo,
            hi,
            nodes,
            values,
            weights,
        }
    }

    fn chebyshev_coefficients(&self) -> Vec<f64> {
        let n = self.values.len() - 1;
        (0..=n)
            .map(|k| {
                let mut acc = 0.0;
                for (j, v) in self.values.iter().enumerate() {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    acc += w * v * (PI * (k * j) as f64 / n as f64).cos();
                }
                let scale = if k == 0 || k == n { 1.0 } else { 2.0 };
                scale * acc / n as f64
            })
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &fj), &wj) in self.nodes.iter().zip(&self.values).zip(&self.weights) {
            let d = x - xj;
            if d == 0.0 {
                return fj;
            }
            let t = wj / d;
            num += t * fj;
            den += t;
        }
        num / den
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
