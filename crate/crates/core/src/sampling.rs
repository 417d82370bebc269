//! Seeded sampling of configuration points and control directions.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform points in an axis-aligned box of chart coordinates, preceded by
/// optional pinned points.
#[derive(Debug, Clone)]
pub struct BoxSampler {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub pinned: Vec<DVector<f64>>,
    pub seed: u64,
    /// Random unit directions added after the `M` canonical ones.
    pub random_directions_per_channel: usize,
}

impl BoxSampler {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, seed: u64) -> Self {
        assert_eq!(lower.len(), upper.len(), "box corners differ in dimension");
        Self {
            lower,
            upper,
            pinned: Vec::new(),
            seed,
            random_directions_per_channel: 2,
        }
    }

    pub fn with_pinned(mut self, pinned: Vec<DVector<f64>>) -> Self {
        self.pinned = pinned;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `n` points: the pinned ones first, then uniform draws.
    pub fn points(&self, n: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out: Vec<DVector<f64>> = self.pinned.iter().take(n).cloned().collect();
        while out.len() < n {
            out.push(DVector::from_fn(self.dim(), |i, _| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }));
        }
        out
    }

    /// Unit directions in ℝ^m: the canonical basis followed by
    /// `random_directions_per_channel · m` random ones.
    pub fn directions(&self, m: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out: Vec<DVector<f64>> = (0..m)
            .map(|a| {
                let mut e = DVector::zeros(m);
                e[a] = 1.0;
                e
            })
            .collect();
        while out.len() < m * (1 + self.random_directions_per_channel) {
            let v = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                out.push(v / n);
            }
        }
        out
    }
}
