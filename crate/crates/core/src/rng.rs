//! Brownian increments keyed by `(seed, path)`, and their coarsening.
//!
//! Each path draws from `ChaCha20Rng::seed_from_u64(seed)` on stream
//! `path`, so a path's increments do not depend on how many other paths
//! run or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub trait IncrementSource {
    /// Time step the increments belong to.
    fn dt(&self) -> f64;
    /// Fills `out` with one increment per noise mode.
    fn fill(&mut self, out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct BrownianIncrements {
    rng: ChaCha20Rng,
    dt: f64,
    root_dt: f64,
}

impl BrownianIncrements {
    pub fn new(seed: u64, path: u64, dt: f64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(path);
        BrownianIncrements {
            rng,
            dt,
            root_dt: dt.sqrt(),
        }
    }
}

impl IncrementSource for BrownianIncrements {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn fill(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            let xi: f64 = self.rng.sample(StandardNormal);
            *o = self.root_dt * xi;
        }
    }
}

/// Sums `factor` consecutive fine increments into one coarse increment.
#[derive(Debug, Clone)]
pub struct CoarsenedIncrements<S> {
    fine: S,
    factor: usize,
    scratch: Vec<f64>,
}

impl<S: IncrementSource> CoarsenedIncrements<S> {
    pub fn new(fine: S, factor: usize) -> Self {
        assert!(factor >= 1, "coarsening factor must be at least 1");
        CoarsenedIncrements {
            fine,
            factor,
            scratch: Vec::new(),
        }
    }
}

impl<S: IncrementSource> IncrementSource for CoarsenedIncrements<S> {
    fn dt(&self) -> f64 {
        self.fine.dt() * self.factor as f64
    }

    fn fill(&mut self, out: &mut [f64]) {
        self.scratch.resize(out.len(), 0.0);
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..self.factor {
            self.fine.fill(&mut self.scratch);
            for (o, s) in out.iter_mut().zip(&self.scratch) {
                *o += s;
            }
        }
    }
}

impl<S: IncrementSource + ?Sized> IncrementSource for Box<S> {
    fn dt(&self) -> f64 {
        (**self).dt()
    }

    fn fill(&mut self, out: &mut [f64]) {
        (**self).fill(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = BrownianIncrements::new(7, 3, 0.01);
        let mut b = BrownianIncrements::new(7, 3, 0.01);
        let mut c = BrownianIncrements::new(7, 4, 0.01);
        let (mut x, mut y, mut z) = ([0.0; 8], [0.0; 8], [0.0; 8]);
        a.fill(&mut x);
        b.fill(&mut y);
        c.fill(&mut z);
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn coarse_increments_are_sums_of_fine_ones() {
        let mut fine = BrownianIncrements::new(1, 0, 0.001);
        let mut coarse = CoarsenedIncrements::new(BrownianIncrements::new(1, 0, 0.001), 4);
        assert!((coarse.dt() - 0.004).abs() < 1e-18);
        for _ in 0..50 {
            let mut want = [0.0; 3];
            let mut buf = [0.0; 3];
            for _ in 0..4 {
                fine.fill(&mut buf);
                for (w, b) in want.iter_mut().zip(&buf) {
                    *w += b;
                }
            }
            let mut got = [0.0; 3];
            coarse.fill(&mut got);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn increments_have_brownian_variance() {
        let mut src = BrownianIncrements::new(42, 0, 0.25);
        let mut buf = [0.0; 1000];
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..100 {
            src.fill(&mut buf);
            sum += buf.iter().sum::<f64>();
            sq += buf.iter().map(|x| x * x).sum::<f64>();
        }
        let n = 100_000.0;
        assert!((sum / n).abs() < 0.01);
        assert!((sq / n - 0.25).abs() < 0.01);
    }
}
