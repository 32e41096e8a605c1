//! Neumann cosine eigenbasis on an interval or a rectangle.
//!
//! Per axis, `e_j(x) = c_j cos(jπx/L)` with `c_0 = 1/√L`, `c_j = √(2/L)`;
//! in 2D the basis is the tensor product, ordered by nondecreasing
//! eigenvalue `α = Σ_d (j_d π/L_d)²`. Values live on a midpoint grid of
//! `N = ⌈oversample · n⌉` points per axis.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const DEFAULT_OVERSAMPLE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Dense `O(N n)` matrices per axis.
    Naive,
    /// Zero-padded FFT of length `2N`.
    Fast,
}

/// Which trigonometric family a transform uses along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

/// `(cos, sin)` of `π m / q`, reduced in integers to an angle in `[0, π/4]`.
fn cos_sin_pi_ratio(m: usize, q: usize) -> (f64, f64) {
    // units of π/(4q): a full turn is 8q, a quadrant 2q
    let r = 4 * (m % (2 * q));
    let quadrant = r / (2 * q);
    let rem = r - quadrant * 2 * q;
    let unit = PI / (4 * q) as f64;
    let (c, s) = if rem <= q {
        let t = rem as f64 * unit;
        (t.cos(), t.sin())
    } else {
        let t = (2 * q - rem) as f64 * unit;
        (t.sin(), t.cos())
    };
    match quadrant {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    }
}

struct Axis {
    length: f64,
    modes: usize,
    points: usize,
    h: f64,
    norm: Vec<f64>,
    cos_mat: Vec<f64>,
    sin_mat: Vec<f64>,
    twiddle: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Axis {
    fn new(length: f64, modes: usize, points: usize, planner: &mut FftPlanner<f64>) -> Self {
        let h = length / points as f64;
        let norm: Vec<f64> = (0..modes)
            .map(|j| if j == 0 { (1.0 / length).sqrt() } else { (2.0 / length).sqrt() })
            .collect();
        let mut cos_mat = vec![0.0; points * modes];
        let mut sin_mat = vec![0.0; points * modes];
        for i in 0..points {
            for j in 0..modes {
                let (c, s) = cos_sin_pi_ratio(j * (2 * i + 1), 2 * points);
                cos_mat[i * modes + j] = norm[j] * c;
                sin_mat[i * modes + j] = norm[j] * s;
            }
        }
        let twiddle = (0..modes)
            .map(|j| Complex64::from_polar(1.0, PI * j as f64 / (2 * points) as f64))
            .collect();
        Axis {
            length,
            modes,
            points,
            h,
            norm,
            cos_mat,
            sin_mat,
            twiddle,
            forward: planner.plan_fft_forward(2 * points),
            inverse: planner.plan_fft_inverse(2 * points),
        }
    }

    fn mat(&self, trig: Trig) -> &[f64] {
        match trig {
            Trig::Cos => &self.cos_mat,
            Trig::Sin => &self.sin_mat,
        }
    }

    fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    fn synth_line(&self, backend: Backend, trig: Trig, coef: &[f64], out: &mut [f64]) {
        match backend {
            Backend::Naive => {
                let mat = self.mat(trig);
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &mat[i * self.modes..(i + 1) * self.modes];
                    *o = row.iter().zip(coef).map(|(m, c)| m * c).sum();
                }
            }
            Backend::Fast => {
                let mut buf = vec![Complex64::new(0.0, 0.0); 2 * self.points];
                for j in 0..self.modes {
                    buf[j] = self.twiddle[j] * (coef[j] * self.norm[j]);
                }
                self.inverse.process(&mut buf);
                for (o, z) in out.iter_mut().zip(&buf) {
                    *o = match trig {
                        Trig::Cos => z.re,
                        Trig::Sin => z.im,
                    };
                }
            }
        }
    }

    fn analyze_line(&self, backend: Backend, trig: Trig, vals: &[f64], out: &mut [f64]) {
        match backend {
            Backend::Naive => {
                let mat = self.mat(trig);
                out.iter_mut().for_each(|o| *o = 0.0);
                for (i, v) in vals.iter().enumerate() {
                    let row = &mat[i * self.modes..(i + 1) * self.modes];
                    for (o, m) in out.iter_mut().zip(row) {
                        *o += m * v;
                    }
                }
                out.iter_mut().for_each(|o| *o *= self.h);
            }
            Backend::Fast => {
                let mut buf = vec![Complex64::new(0.0, 0.0); 2 * self.points];
                for (b, v) in buf.iter_mut().zip(vals) {
                    b.re = *v;
                }
                self.forward.process(&mut buf);
                for (j, o) in out.iter_mut().enumerate() {
                    let z = self.twiddle[j].conj() * buf[j];
                    let s = match trig {
                        Trig::Cos => z.re,
                        Trig::Sin => -z.im,
                    };
                    *o = self.h * self.norm[j] * s;
                }
            }
        }
    }
}

pub struct SpectralGrid {
    axes: Vec<Axis>,
    backend: Backend,
    oversample: f64,
    /// `order[k]` = tensor index (axis 0 major) of the k-th mode in α order.
    order: Vec<usize>,
    alpha: Vec<f64>,
    weights: Vec<f64>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dim", &self.dim())
            .field("lengths", &self.lengths())
            .field("modes_per_axis", &self.modes_per_axis())
            .field("points_per_axis", &self.points_per_axis())
            .field("backend", &self.backend)
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(lengths: &[f64], modes: usize, oversample: f64, backend: Backend) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::Validation(format!(
                "only 1D and 2D boxes are supported, got dim = {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Validation(format!("box lengths must be positive, got {lengths:?}")));
        }
        if modes == 0 {
            return Err(Error::Validation("need at least one mode per axis".into()));
        }
        if !(oversample >= 1.0 && oversample.is_finite()) {
            return Err(Error::Validation(format!("oversample must be >= 1, got {oversample}")));
        }
        let points = ((oversample * modes as f64).ceil() as usize).max(modes + 1);
        let mut planner = FftPlanner::new();
        let axes: Vec<Axis> = lengths
            .iter()
            .map(|&l| Axis::new(l, modes, points, &mut planner))
            .collect();
        let axis_alpha = |a: &Axis, j: usize| (PI * j as f64 / a.length).powi(2);
        let total = modes.pow(axes.len() as u32);
        let tensor_alpha: Vec<f64> = (0..total)
            .map(|t| match axes.len() {
                1 => axis_alpha(&axes[0], t),
                _ => axis_alpha(&axes[0], t / modes) + axis_alpha(&axes[1], t % modes),
            })
            .collect();
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| tensor_alpha[a].total_cmp(&tensor_alpha[b]));
        let alpha = order.iter().map(|&t| tensor_alpha[t]).collect();
        let cell: f64 = axes.iter().map(|a| a.h).product();
        let n_points = points.pow(axes.len() as u32);
        Ok(SpectralGrid {
            axes,
            backend,
            oversample,
            order,
            alpha,
            weights: vec![cell; n_points],
        })
    }

    pub fn interval(length: f64, modes: usize) -> Result<Self> {
        Self::new(&[length], modes, DEFAULT_OVERSAMPLE, Backend::Fast)
    }

    /// Same modes and box on a grid with `factor` times the collocation density.
    pub fn refined(&self, factor: f64) -> Result<Self> {
        Self::new(
            &self.lengths(),
            self.modes_per_axis(),
            self.oversample * factor,
            self.backend,
        )
    }

    pub fn with_backend(&self, backend: Backend) -> Result<Self> {
        Self::new(&self.lengths(), self.modes_per_axis(), self.oversample, backend)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.length).collect()
    }

    pub fn modes_per_axis(&self) -> usize {
        self.axes[0].modes
    }

    pub fn points_per_axis(&self) -> usize {
        self.axes[0].points
    }

    pub fn oversample(&self) -> f64 {
        self.oversample
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn n_coeffs(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.length).product()
    }

    /// Eigenvalues in storage order (nondecreasing).
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Midpoint quadrature weights, one per collocation node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis mode indices of the k-th stored coefficient.
    pub fn mode(&self, k: usize) -> Vec<usize> {
        let t = self.order[k];
        let n = self.modes_per_axis();
        match self.dim() {
            1 => vec![t],
            _ => vec![t / n, t % n],
        }
    }

    /// Collocation node `i` (row-major, axis 0 slowest) as coordinates.
    pub fn node(&self, i: usize) -> Vec<f64> {
        match self.dim() {
            1 => vec![self.axes[0].node(i)],
            _ => {
                let p = self.axes[1].points;
                vec![self.axes[0].node(i / p), self.axes[1].node(i % p)]
            }
        }
    }

    /// `e_k` at an arbitrary point.
    pub fn basis_at(&self, k: usize, x: &[f64]) -> f64 {
        self.mode(k)
            .iter()
            .zip(&self.axes)
            .zip(x)
            .map(|((&j, a), &xi)| a.norm[j] * (PI * j as f64 * xi / a.length).cos())
            .product()
    }

    fn to_tensor(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; coeffs.len()];
        for (k, &c) in coeffs.iter().enumerate() {
            t[self.order[k]] = c;
        }
        t
    }

    fn untensor(&self, tensor: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&t| tensor[t]).collect()
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.n_coeffs() {
            return Err(Error::ShapeMismatch {
                expected: self.n_coeffs(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_points() {
            return Err(Error::ShapeMismatch {
                expected: self.n_points(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// `Σ_k a_k e_k` on the grid, with `trig` choosing cos or sin per axis.
    pub fn synthesize(&self, coeffs: &[f64], trig: &[Trig]) -> Vec<f64> {
        let tensor = self.to_tensor(coeffs);
        let b = self.backend;
        match self.dim() {
            1 => {
                let a = &self.axes[0];
                let mut out = vec![0.0; a.points];
                a.synth_line(b, trig[0], &tensor, &mut out);
                out
            }
            _ => {
                let (a0, a1) = (&self.axes[0], &self.axes[1]);
                let (n, p0, p1) = (a0.modes, a0.points, a1.points);
                // axis 1 first: n rows of p1
                let mut stage = vec![0.0; n * p1];
                for j0 in 0..n {
                    a1.synth_line(b, trig[1], &tensor[j0 * n..(j0 + 1) * n], &mut stage[j0 * p1..(j0 + 1) * p1]);
                }
                let mut out = vec![0.0; p0 * p1];
                let mut col = vec![0.0; n];
                let mut col_out = vec![0.0; p0];
                for i1 in 0..p1 {
                    for j0 in 0..n {
                        col[j0] = stage[j0 * p1 + i1];
                    }
                    a0.synth_line(b, trig[0], &col, &mut col_out);
                    for i0 in 0..p0 {
                        out[i0 * p1 + i1] = col_out[i0];
                    }
                }
                out
            }
        }
    }

    /// Quadrature projection `h Σ_i v_i e_k(x_i)` onto every retained mode.
    pub fn analyze(&self, values: &[f64], trig: &[Trig]) -> Vec<f64> {
        let b = self.backend;
        let tensor = match self.dim() {
            1 => {
                let a = &self.axes[0];
                let mut out = vec![0.0; a.modes];
                a.analyze_line(b, trig[0], values, &mut out);
                out
            }
            _ => {
                let (a0, a1) = (&self.axes[0], &self.axes[1]);
                let (n, p0, p1) = (a0.modes, a0.points, a1.points);
                let mut stage = vec![0.0; n * p1];
                let mut col = vec![0.0; p0];
                let mut col_out = vec![0.0; n];
                for i1 in 0..p1 {
                    for i0 in 0..p0 {
                        col[i0] = values[i0 * p1 + i1];
                    }
                    a0.analyze_line(b, trig[0], &col, &mut col_out);
                    for j0 in 0..n {
                        stage[j0 * p1 + i1] = col_out[j0];
                    }
                }
                let mut out = vec![0.0; n * n];
                for j0 in 0..n {
                    a1.analyze_line(b, trig[1], &stage[j0 * p1..(j0 + 1) * p1], &mut out[j0 * n..(j0 + 1) * n]);
                }
                out
            }
        };
        self.untensor(&tensor)
    }

    fn cos_all(&self) -> Vec<Trig> {
        vec![Trig::Cos; self.dim()]
    }

    fn grad_trig(&self, axis: usize) -> Vec<Trig> {
        (0..self.dim())
            .map(|d| if d == axis { Trig::Sin } else { Trig::Cos })
            .collect()
    }

    pub fn to_values(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs)?;
        Ok(self.synthesize(coeffs, &self.cos_all()))
    }

    /// Galerkin projection `P_n` of grid values.
    pub fn to_coeffs(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_values(values)?;
        Ok(self.analyze(values, &self.cos_all()))
    }

    /// Scalar factor of `∂_axis e_k`: `-(j_axis π / L_axis)`.
    fn grad_factor(&self, k: usize, axis: usize) -> f64 {
        let j = self.mode(k)[axis];
        -(PI * j as f64 / self.axes[axis].length)
    }

    /// `∇f` on the grid, one value array per axis.
    pub fn gradient_values(&self, coeffs: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_coeffs(coeffs)?;
        Ok((0..self.dim())
            .map(|d| {
                let scaled: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * self.grad_factor(k, d))
                    .collect();
                self.synthesize(&scaled, &self.grad_trig(d))
            })
            .collect())
    }

    /// Weak divergence `(div q, e_k) = -(q, ∇e_k)` of a grid vector field
    /// whose normal component vanishes on the boundary.
    pub fn divergence_coeffs(&self, q: &[Vec<f64>]) -> Result<Vec<f64>> {
        if q.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        let mut out = vec![0.0; self.n_coeffs()];
        for (d, qd) in q.iter().enumerate() {
            self.check_values(qd)?;
            let proj = self.analyze(qd, &self.grad_trig(d));
            for (k, (o, p)) in out.iter_mut().zip(proj).enumerate() {
                *o += -self.grad_factor(k, d) * p;
            }
        }
        Ok(out)
    }

    /// Quadrature `∫ f` of grid values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<SpectralGrid>,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(grid: Arc<SpectralGrid>, coeffs: Vec<f64>) -> Result<Self> {
        grid.check_coeffs(&coeffs)?;
        Ok(SpectralField { grid, coeffs })
    }

    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let n = grid.n_coeffs();
        SpectralField {
            grid,
            coeffs: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<SpectralGrid>, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = value * f.grid.volume().sqrt();
        f
    }

    /// The `k`-th basis function.
    pub fn basis(grid: Arc<SpectralGrid>, k: usize) -> Result<Self> {
        let mut f = Self::zeros(grid);
        if k >= f.coeffs.len() {
            return Err(Error::ShapeMismatch {
                expected: f.coeffs.len(),
                got: k + 1,
            });
        }
        f.coeffs[k] = 1.0;
        Ok(f)
    }

    pub fn from_values(grid: Arc<SpectralGrid>, values: &[f64]) -> Result<Self> {
        let coeffs = grid.to_coeffs(values)?;
        Ok(SpectralField { grid, coeffs })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.grid.synthesize(&self.coeffs, &self.grid.cos_all())
    }

    /// Mean over the box, `a_0 / √|O|`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0] / self.grid.volume().sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// `‖∇f‖² = Σ α_k a_k²`.
    pub fn grad_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.grid.alpha())
            .map(|(a, al)| al * a * a)
            .sum()
    }

    pub fn eval_at(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * self.grid.basis_at(k, x))
            .sum()
    }

    pub fn laplacian(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.alpha())
            .map(|(a, al)| -al * a)
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Same coefficients on another grid with the same box and modes.
    pub fn on_grid(&self, grid: Arc<SpectralGrid>) -> Result<Self> {
        if grid.lengths() != self.grid.lengths() || grid.modes_per_axis() != self.grid.modes_per_axis() {
            return Err(Error::invalid("grids differ in box or mode count"));
        }
        Ok(SpectralField {
            grid,
            coeffs: self.coeffs.clone(),
        })
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.grid, &other.grid)
            && (self.grid.lengths() != other.grid.lengths()
                || self.grid.modes_per_axis() != other.grid.modes_per_axis()
                || self.grid.points_per_axis() != other.grid.points_per_axis())
        {
            return Err(Error::invalid("fields live on different grids"));
        }
        Ok(())
    }
}

/// `P_n div(m(φ) ∇μ)`, pseudo-spectrally on the collocation grid.
pub fn degenerate_flux(
    phi: &SpectralField,
    mu: &SpectralField,
    m: impl Fn(f64) -> f64,
) -> Result<SpectralField> {
    phi.same_grid(mu)?;
    let grid = &phi.grid;
    let phi_v = phi.to_values();
    let mut grad = grid.gradient_values(&mu.coeffs)?;
    for g in grad.iter_mut() {
        for (gi, &p) in g.iter_mut().zip(&phi_v) {
            *gi *= m(p);
        }
    }
    let coeffs = grid.divergence_coeffs(&grad)?;
    Ok(SpectralField {
        grid: grid.clone(),
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reduced_angles() {
        for q in [1usize, 3, 8, 97] {
            for m in 0..(5 * q) {
                let (c, s) = cos_sin_pi_ratio(m, q);
                let t = PI * m as f64 / q as f64;
                assert!((c - t.cos()).abs() < 1e-14 && (s - t.sin()).abs() < 1e-14, "m = {m}, q = {q}");
            }
        }
        assert_eq!(cos_sin_pi_ratio(3, 6), (0.0, 1.0));
        assert_eq!(cos_sin_pi_ratio(6, 6), (-1.0, 0.0));
    }

    fn random_coeffs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn eigenvalue_examples() {
        let g = SpectralGrid::interval(1.0, 3).unwrap();
        let a = g.alpha();
        assert_eq!(a[0], 0.0);
        assert!((a[1] - PI * PI).abs() < 1e-14);
        assert!((a[2] - 4.0 * PI * PI).abs() < 1e-13);
        let g2 = SpectralGrid::new(&[1.0, 1.0], 2, 1.5, Backend::Fast).unwrap();
        let a2 = g2.alpha();
        assert_eq!(a2.len(), 4);
        assert_eq!(a2[0], 0.0);
        assert!((a2[1] - PI * PI).abs() < 1e-14 && (a2[2] - PI * PI).abs() < 1e-14);
        assert!((a2[3] - 2.0 * PI * PI).abs() < 1e-13);
        assert!(g.points_per_axis() * 2 >= 3 * g.modes_per_axis());
    }

    #[test]
    fn first_mode_is_normalized() {
        let g = Arc::new(SpectralGrid::interval(1.0, 4).unwrap());
        let e1 = SpectralField::basis(g.clone(), 1).unwrap();
        assert!((e1.eval_at(&[0.0]) - 2f64.sqrt()).abs() < 1e-15);
        // independent normalization: ∫₀¹ 2cos²(πx) dx by Simpson
        let n = crate::quad::adaptive_simpson(|x| 2.0 * (PI * x).cos().powi(2), 0.0, 1.0, 1e-13);
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_and_basis_round_trip() {
        let g = Arc::new(SpectralGrid::interval(2.0, 8).unwrap());
        let c = SpectralField::from_values(g.clone(), &vec![0.7; g.n_points()]).unwrap();
        assert!((c.coeffs()[0] - 0.7 * 2f64.sqrt()).abs() < 1e-14);
        assert!(c.coeffs()[1..].iter().all(|a| a.abs() < 1e-14));
        let e5 = SpectralField::basis(g.clone(), 5).unwrap();
        let back = g.to_coeffs(&e5.to_values()).unwrap();
        for (k, a) in back.iter().enumerate() {
            let want = if k == 5 { 1.0 } else { 0.0 };
            assert!((a - want).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_backend_agreement() {
        for dim in [1usize, 2] {
            for n in [1usize, 5, 16, 33] {
                let lengths: Vec<f64> = [1.3, 0.7][..dim].to_vec();
                let fast = SpectralGrid::new(&lengths, n, 1.5, Backend::Fast).unwrap();
                let naive = fast.with_backend(Backend::Naive).unwrap();
                let a = random_coeffs(fast.n_coeffs(), n as u64);
                let vf = fast.to_values(&a).unwrap();
                let vn = naive.to_values(&a).unwrap();
                let diff = vf.iter().zip(&vn).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-12, "dim {dim} n {n}: {diff}");
                for g in [&fast, &naive] {
                    let back = g.to_coeffs(&vf).unwrap();
                    let err = back.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    assert!(err < 1e-12, "dim {dim} n {n}: {err}");
                }
                let sin = [Trig::Sin, Trig::Cos][..dim].to_vec();
                let sf = fast.analyze(&vf, &sin);
                let sn = naive.analyze(&vf, &sin);
                let diff = sf.iter().zip(&sn).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn parseval() {
        for dim in [1usize, 2] {
            let lengths: Vec<f64> = [2.0, 1.5][..dim].to_vec();
            let g = SpectralGrid::new(&lengths, 12, 1.5, Backend::Fast).unwrap();
            let a = random_coeffs(g.n_coeffs(), 7);
            let v = g.to_values(&a).unwrap();
            let quad = g.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
            let coef = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((quad - coef).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_accuracy() {
        let f = |x: f64| 1.0 / (1.2 - (PI * x).cos());
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let g = Arc::new(SpectralGrid::interval(1.0, n).unwrap());
            let vals: Vec<f64> = (0..g.n_points()).map(|i| f(g.node(i)[0])).collect();
            let field = SpectralField::from_values(g, &vals).unwrap();
            let err = (0..=200)
                .map(|i| {
                    let x = i as f64 / 200.0;
                    (field.eval_at(&[x]) - f(x)).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 10.0 && errs[1] / errs[2] > 10.0, "{errs:?}");
    }

    #[test]
    fn laplacian_examples() {
        let g = Arc::new(SpectralGrid::interval(1.0, 6).unwrap());
        let c = SpectralField::constant(g.clone(), 3.0).laplacian();
        assert!(c.coeffs().iter().all(|&a| a == 0.0));
        let e1 = SpectralField::basis(g.clone(), 1).unwrap().laplacian();
        assert!((e1.coeffs()[1] + PI * PI).abs() < 1e-13);
        let a = SpectralField::new(g.clone(), random_coeffs(6, 1)).unwrap();
        let b = SpectralField::new(g.clone(), random_coeffs(6, 2)).unwrap();
        let sum: Vec<f64> = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x + y).collect();
        let lsum = SpectralField::new(g, sum).unwrap().laplacian();
        let (la, lb) = (a.laplacian(), b.laplacian());
        for k in 0..6 {
            assert!((lsum.coeffs()[k] - la.coeffs()[k] - lb.coeffs()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_with_unit_mobility_is_laplacian() {
        for dim in [1usize, 2] {
            let lengths: Vec<f64> = [1.0, 2.0][..dim].to_vec();
            let g = Arc::new(SpectralGrid::new(&lengths, 10, 1.5, Backend::Fast).unwrap());
            let phi = SpectralField::new(g.clone(), random_coeffs(g.n_coeffs(), 4)).unwrap();
            let mu = SpectralField::new(g.clone(), random_coeffs(g.n_coeffs(), 5)).unwrap();
            let flux = degenerate_flux(&phi, &mu, |_| 1.0).unwrap();
            let lap = mu.laplacian();
            for (x, y) in flux.coeffs().iter().zip(lap.coeffs()) {
                assert!((x - y).abs() < 1e-10);
            }
            assert_eq!(flux.coeffs()[0], 0.0);
            let cmu = SpectralField::constant(g.clone(), 2.0);
            let zero = degenerate_flux(&phi, &cmu, |r| 1.0 - r * r).unwrap();
            assert!(zero.coeffs().iter().all(|a| a.abs() < 1e-14));
        }
    }

    #[test]
    fn flux_with_frozen_degenerate_mobility() {
        let g = Arc::new(SpectralGrid::interval(1.0, 8).unwrap());
        let phi = SpectralField::constant(g.clone(), 0.5);
        let mu = SpectralField::basis(g.clone(), 1).unwrap();
        let flux = degenerate_flux(&phi, &mu, |r| 1.0 - r * r).unwrap();
        for (k, a) in flux.coeffs().iter().enumerate() {
            let want = if k == 1 { -0.75 * PI * PI } else { 0.0 };
            assert!((a - want).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn flux_has_zero_mean_for_random_inputs() {
        let g = Arc::new(SpectralGrid::new(&[1.0, 1.0], 6, 1.5, Backend::Naive).unwrap());
        for seed in 0..10 {
            let phi = SpectralField::new(g.clone(), random_coeffs(36, seed)).unwrap();
            let mu = SpectralField::new(g.clone(), random_coeffs(36, seed + 100)).unwrap();
            let flux = degenerate_flux(&phi, &mu, |r| (1.0 - r * r).abs() + 0.1).unwrap();
            assert_eq!(flux.coeffs()[0], 0.0);
        }
    }

    #[test]
    fn shape_mismatch() {
        let g = SpectralGrid::interval(1.0, 4).unwrap();
        assert!(matches!(g.to_coeffs(&[1.0; 3]), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(g.to_values(&[1.0; 3]), Err(Error::ShapeMismatch { .. })));
    }
}
