use rand_distr::{Distribution, Normal};

use super::{Domain, MinimumSet, Potential, PotentialSpec, StochasticPotential};
use crate::error::{Error, Result};
use crate::rng;

/// An analytic potential written as a mean over synthetic examples,
/// `V_i(w) = U(w) + ⟨c_i, w⟩` with `Σ_i c_i = 0`, so that minibatch
/// gradients are unbiased estimates of `∇U` with covariance set by the
/// spread of the `c_i`.
#[derive(Clone, Debug)]
pub struct DecomposedPotential {
    base: PotentialSpec,
    /// `n × d`, row-major, column means removed.
    offsets: Vec<f64>,
    count: usize,
    scale: f64,
}

impl DecomposedPotential {
    pub fn new(base: PotentialSpec, count: usize, scale: f64, seed: u64) -> Result<Self> {
        if count < 2 {
            return Err(Error::param("a decomposition needs at least two examples"));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::param(format!(
                "offset scale must be non-negative, got {scale}"
            )));
        }
        let d = base.dimension();
        let normal = Normal::new(0.0, scale).map_err(|e| Error::param(e.to_string()))?;
        let mut r = rng::stream(rng::child_seed(seed, 0xdec0), 0);
        let mut offsets: Vec<f64> = (0..count * d).map(|_| normal.sample(&mut r)).collect();
        for j in 0..d {
            let mean = (0..count).map(|i| offsets[i * d + j]).sum::<f64>() / count as f64;
            for i in 0..count {
                offsets[i * d + j] -= mean;
            }
        }
        Ok(DecomposedPotential {
            base,
            offsets,
            count,
            scale,
        })
    }

    pub fn base(&self) -> &PotentialSpec {
        &self.base
    }

    pub fn offset(&self, i: usize) -> &[f64] {
        let d = self.base.dimension();
        &self.offsets[i * d..(i + 1) * d]
    }
}

impl Potential for DecomposedPotential {
    fn id(&self) -> String {
        format!(
            "{}+decomposed:n={},scale={}",
            self.base, self.count, self.scale
        )
    }

    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn domain(&self) -> &Domain {
        self.base.domain()
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.base.value(w)
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        self.base.gradient(w, out)
    }

    fn minimum_sets(&self) -> Vec<MinimumSet> {
        self.base.minimum_sets()
    }

    fn as_stochastic(&self) -> Option<&dyn StochasticPotential> {
        Some(self)
    }
}

impl StochasticPotential for DecomposedPotential {
    fn example_count(&self) -> usize {
        self.count
    }

    fn example_gradient(&self, w: &[f64], example: usize, out: &mut [f64]) {
        self.base.gradient(w, out);
        for (g, c) in out.iter_mut().zip(self.offset(example)) {
            *g += c;
        }
    }

    fn batch_gradient(&self, w: &[f64], batch: &[usize], out: &mut [f64]) {
        self.base.gradient(w, out);
        let d = out.len();
        let mut shift = vec![0.0; d];
        for &i in batch {
            for (s, c) in shift.iter_mut().zip(self.offset(i)) {
                *s += c;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for (g, s) in out.iter_mut().zip(&shift) {
            *g += s * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_centered_and_full_batch_is_exact() {
        let u = DecomposedPotential::new(PotentialSpec::wedge(2, 1.0, 1.0).unwrap(), 100, 0.5, 1)
            .unwrap();
        for j in 0..2 {
            let s: f64 = (0..100).map(|i| u.offset(i)[j]).sum();
            assert!(s.abs() < 1e-12);
        }
        let w = [0.3, -0.7];
        let mut g = [0.0; 2];
        let mut full = [0.0; 2];
        u.gradient(&w, &mut g);
        let all: Vec<usize> = (0..100).collect();
        u.batch_gradient(&w, &all, &mut full);
        assert!((g[0] - full[0]).abs() < 1e-12 && (g[1] - full[1]).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_matches_default_mean() {
        let u = DecomposedPotential::new(PotentialSpec::quadratic(3, 2.0).unwrap(), 10, 1.0, 2)
            .unwrap();
        let w = [0.1, 0.2, -0.3];
        let batch = [3, 3, 7, 0];
        let mut fast = [0.0; 3];
        u.batch_gradient(&w, &batch, &mut fast);
        let mut slow = [0.0; 3];
        let mut tmp = [0.0; 3];
        for &i in &batch {
            u.example_gradient(&w, i, &mut tmp);
            for j in 0..3 {
                slow[j] += tmp[j] / 4.0;
            }
        }
        for j in 0..3 {
            assert!((fast[j] - slow[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let base = PotentialSpec::quadratic(1, 1.0).unwrap();
        assert!(DecomposedPotential::new(base.clone(), 1, 1.0, 0).is_err());
        assert!(DecomposedPotential::new(base, 4, -1.0, 0).is_err());
    }
}
