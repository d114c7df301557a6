use rand::Rng;
use rayon::prelude::*;

use super::{Axis, Histogram};
use crate::error::{Error, Result};
use crate::potentials::StochasticPotential;
use crate::rng;

pub const DEFAULT_DRAWS: usize = 10_000;
pub const DEFAULT_BINS: usize = 40;

/// What the gradient-noise histogram is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientSampling {
    /// `∇V(w, z_i)` for every training example.
    PerExample,
    /// Means over `draws` minibatches of `batch` indices drawn with
    /// replacement. `batch == n` means the exhaustive full batch.
    MinibatchMean { batch: usize, draws: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Population moments; `None` for a constant sample.
pub fn moments(xs: &[f64]) -> Option<Moments> {
    let first = *xs.first()?;
    if xs.iter().all(|&x| x == first) {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if !(m2 > 0.0) {
        return None;
    }
    Some(Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentStats {
    pub component: usize,
    pub mean: f64,
    /// `None` when every sample is identical; the component is then
    /// flagged degenerate and carries no shape statistics.
    pub moments: Option<Moments>,
    pub histogram: Option<Histogram>,
    pub samples: Vec<f64>,
}

impl ComponentStats {
    pub fn degenerate(&self) -> bool {
        self.moments.is_none()
    }
}

/// Histograms and shape statistics of selected gradient components at `w`.
pub fn gradient_component_stats(
    u: &dyn StochasticPotential,
    w: &[f64],
    components: &[usize],
    sampling: GradientSampling,
    bins: usize,
    seed: u64,
) -> Result<Vec<ComponentStats>> {
    let dim = u.dimension();
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    if let Some(&c) = components.iter().find(|&&c| c >= dim) {
        return Err(Error::IndexOutOfRange { index: c, len: dim });
    }
    if bins == 0 {
        return Err(Error::param("need at least one histogram bin"));
    }
    let n = u.example_count();
    // rows: one per sample, holding the selected components
    let rows: Vec<Vec<f64>> = match sampling {
        GradientSampling::PerExample => (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |g, i| {
                    u.example_gradient(w, i, g);
                    components.iter().map(|&c| g[c]).collect()
                },
            )
            .collect(),
        GradientSampling::MinibatchMean { batch, draws } => {
            if batch == 0 || draws == 0 {
                return Err(Error::param(
                    "minibatch sampling needs batch > 0 and draws > 0",
                ));
            }
            let base = rng::child_seed(seed, 0x9e15e);
            (0..draws as u64)
                .into_par_iter()
                .map_init(
                    || (vec![0.0; dim], Vec::with_capacity(batch)),
                    |(g, idx), d| {
                        idx.clear();
                        if batch == n {
                            idx.extend(0..n);
                        } else {
                            let mut r = rng::stream(base, d);
                            idx.extend((0..batch).map(|_| r.random_range(0..n)));
                        }
                        u.batch_gradient(w, idx, g);
                        components.iter().map(|&c| g[c]).collect()
                    },
                )
                .collect()
        }
    };
    components
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let samples: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let m = moments(&samples);
            let histogram = match m {
                None => None,
                Some(_) => {
                    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    Some(Histogram::from_points(
                        vec![Axis::new(lo, hi, bins)?],
                        &[0],
                        samples.iter().map(std::slice::from_ref),
                    )?)
                }
            };
            Ok(ComponentStats {
                component: c,
                mean,
                moments: m,
                histogram,
                samples,
            })
        })
        .collect()
}

/// `count` distinct component indices in `0..dim` (restricted to `mask`),
/// in increasing order.
pub fn pick_components(dim: usize, count: usize, mask: Option<&[bool]>, seed: u64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..dim).filter(|&i| mask.is_none_or(|m| m[i])).collect();
    let mut r = rng::stream(rng::child_seed(seed, 0xc0c0), 0);
    let take = count.min(pool.len());
    for i in 0..take {
        let j = r.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool.sort_unstable();
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LabeledDataset, LossKind, MlpSpec};
    use crate::potentials::{EmpiricalPotential, Potential};
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn linear_gaussian(n: usize) -> (EmpiricalPotential, Vec<f64>) {
        // y = x·β + noise regressed by output 0 of a linear map (output 1
        // has target 0), square loss.
        let spec = MlpSpec::new(vec![3, 2], Activation::Softplus, LossKind::Square).unwrap();
        let mut r = rng::stream(77, 0);
        let mut xs = Vec::with_capacity(3 * n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut r)).collect();
            let e: f64 = StandardNormal.sample(&mut r);
            ys.extend([0.5 * x[0] - x[1] + 0.1 * e, 0.0]);
            xs.extend(x);
        }
        let data = LabeledDataset::new(xs, 3, vec![0; n], 2)
            .unwrap()
            .with_targets(ys)
            .unwrap();
        let u = EmpiricalPotential::over(spec, Arc::new(data), (0..n).collect()).unwrap();
        (u, vec![0.5, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn moments_of_known_samples() {
        assert!(moments(&[2.0; 5]).is_none());
        let m = moments(&[-1.0, 1.0]).unwrap();
        assert_eq!(
            (m.mean, m.variance, m.skewness, m.excess_kurtosis),
            (0.0, 1.0, 0.0, -2.0)
        );
    }

    #[test]
    fn linear_model_gradient_noise_is_gaussian_at_the_truth() {
        // At β the residual is the pure noise term, so the gradient of the
        // first output bias, −0.1·e, is exactly Gaussian.
        let (u, w) = linear_gaussian(10_000);
        let stats =
            gradient_component_stats(&u, &w, &[6], GradientSampling::PerExample, 40, 0).unwrap();
        let m = stats[0].moments.as_ref().unwrap();
        assert!(m.skewness.abs() <= 0.1, "{m:?}");
        assert!(m.excess_kurtosis.abs() <= 0.2, "{m:?}");
    }

    #[test]
    fn per_example_mean_is_the_full_gradient() {
        let (u, _) = linear_gaussian(500);
        let w = [0.2, 0.3, -0.1, 0.4, 0.0, -0.2, 0.1, 0.05];
        let mut full = vec![0.0; 8];
        u.gradient(&w, &mut full);
        let stats =
            gradient_component_stats(&u, &w, &[0, 1, 2, 3], GradientSampling::PerExample, 20, 0)
                .unwrap();
        for s in &stats {
            assert!((s.mean - full[s.component]).abs() < 1e-15);
            assert_eq!(s.samples.len(), 500);
        }
    }

    #[test]
    fn full_batch_means_are_a_flagged_point_mass() {
        let (u, _) = linear_gaussian(64);
        let w = [0.2, 0.3, -0.1, 0.4, 0.0, -0.2, 0.1, 0.05];
        let mut full = vec![0.0; 8];
        u.gradient(&w, &mut full);
        let mode = GradientSampling::MinibatchMean {
            batch: 64,
            draws: 100,
        };
        let stats = gradient_component_stats(&u, &w, &[1], mode, 20, 0).unwrap();
        assert!(stats[0].degenerate());
        assert!(stats[0].histogram.is_none());
        assert!(stats[0].samples.iter().all(|&g| g == full[1]));
    }

    #[test]
    fn minibatch_means_are_reproducible() {
        let (u, _) = linear_gaussian(200);
        let w = [0.2, 0.3, -0.1, 0.4, 0.0, -0.2, 0.1, 0.05];
        let mode = GradientSampling::MinibatchMean {
            batch: 16,
            draws: 300,
        };
        let a = gradient_component_stats(&u, &w, &[0, 2], mode, 20, 4).unwrap();
        let b = gradient_component_stats(&u, &w, &[0, 2], mode, 20, 4).unwrap();
        assert_eq!(a, b);
        assert!(!a[0].degenerate());
    }

    #[test]
    fn component_index_is_checked() {
        let (u, w) = linear_gaussian(10);
        assert!(
            gradient_component_stats(&u, &w, &[8], GradientSampling::PerExample, 20, 0).is_err()
        );
    }

    #[test]
    fn picked_components_are_distinct_and_masked() {
        let mask: Vec<bool> = (0..100).map(|i| i >= 60).collect();
        let c = pick_components(100, 16, Some(&mask), 3);
        assert_eq!(c.len(), 16);
        assert!(c.windows(2).all(|p| p[0] < p[1]));
        assert!(c.iter().all(|&i| i >= 60));
    }
}
