use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

pub const INITIAL_RADIUS: f64 = 1e-3;
pub const MAX_RADIUS: f64 = 1e3;
pub const RELATIVE_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_DIRECTIONS: usize = 50;

/// Radii from one minimizer, one per successful direction.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessReport {
    pub radii: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single radius).
    pub std: f64,
    pub epsilon: f64,
    pub directions: usize,
    /// Directions abandoned because the loss returned NaN.
    pub failed: usize,
    /// Directions that never crossed ε before [`MAX_RADIUS`].
    pub capped: usize,
    pub subset: String,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Radius along a unit direction: the first `r` where
/// `|L(w + r·dir) − L(w)| > ε`, bracketed by doubling from
/// [`INITIAL_RADIUS`] and refined by bisection. Returns `Ok(None)` when the
/// loss is NaN somewhere on the search path.
pub fn flatness_radius_along<F>(
    loss: &F,
    w: &[f64],
    base: f64,
    dir: &[f64],
    epsilon: f64,
) -> Option<f64>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let mut probe = vec![0.0; w.len()];
    // Some(true) when the ε band is left at radius r.
    let mut crossed = |r: f64| {
        for ((p, &x), &d) in probe.iter_mut().zip(w).zip(dir) {
            *p = x + r * d;
        }
        let v = loss(&probe);
        if v.is_nan() {
            None
        } else {
            Some((v - base).abs() > epsilon)
        }
    };
    let (mut lo, mut hi) = (0.0, INITIAL_RADIUS);
    loop {
        if crossed(hi)? {
            break;
        }
        if hi >= MAX_RADIUS {
            return Some(MAX_RADIUS);
        }
        lo = hi;
        hi = (2.0 * hi).min(MAX_RADIUS);
    }
    while hi - lo > RELATIVE_TOLERANCE * hi {
        let mid = 0.5 * (lo + hi);
        if crossed(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Unit Gaussian direction supported on `mask` (all coordinates if `None`).
pub fn random_direction(dim: usize, mask: Option<&[bool]>, seed: u64, index: u64) -> Vec<f64> {
    let mut r = rng::stream(rng::child_seed(seed, 0xf1a7), index);
    let mut dir: Vec<f64> = (0..dim)
        .map(|i| {
            if mask.is_none_or(|m| m[i]) {
                StandardNormal.sample(&mut r)
            } else {
                0.0
            }
        })
        .collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|x| *x /= norm);
    dir
}

/// Flatness radius of `loss` at `w` over `directions` random isotropic
/// directions (restricted to `mask` when given). Directions are evaluated in
/// parallel and reported in index order.
pub fn flatness_radius<F>(
    loss: &F,
    w: &[f64],
    epsilon: f64,
    directions: usize,
    seed: u64,
    mask: Option<&[bool]>,
    subset: &str,
) -> Result<FlatnessReport>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if directions == 0 {
        return Err(Error::param("need at least one direction"));
    }
    if let Some(m) = mask {
        if m.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: m.len(),
            });
        }
        if !m.iter().any(|&b| b) {
            return Err(Error::param("subset mask selects no coordinates"));
        }
    }
    let base = loss(w);
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss at the minimizer is {base}")));
    }
    let found: Vec<Option<f64>> = (0..directions as u64)
        .into_par_iter()
        .map(|i| {
            let dir = random_direction(w.len(), mask, seed, i);
            flatness_radius_along(loss, w, base, &dir, epsilon)
        })
        .collect();
    let failed = found.iter().filter(|r| r.is_none()).count();
    let radii: Vec<f64> = found.into_iter().flatten().collect();
    if radii.is_empty() {
        return Err(Error::NonFinite(
            "loss was NaN along every direction".into(),
        ));
    }
    let capped = radii.iter().filter(|&&r| r >= MAX_RADIUS).count();
    let (mean, std) = mean_std(&radii);
    Ok(FlatnessReport {
        radii,
        mean,
        std,
        epsilon,
        directions,
        failed,
        capped,
        subset: subset.to_string(),
    })
}

/// Aggregates over several minimizers: both per-minimum and pooled views.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledFlatness {
    pub per_minimum: Vec<(f64, f64)>,
    /// Mean and std over all radii of all minima.
    pub pooled: (f64, f64),
    /// Mean and std of the per-minimum means.
    pub across_minima: (f64, f64),
}

pub fn pool(reports: &[FlatnessReport]) -> Result<PooledFlatness> {
    if reports.is_empty() {
        return Err(Error::EmptySamples);
    }
    let all: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.radii.iter().copied())
        .collect();
    let means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
    Ok(PooledFlatness {
        per_minimum: reports.iter().map(|r| (r.mean, r.std)).collect(),
        pooled: mean_std(&all),
        across_minima: mean_std(&means),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{Potential, PotentialSpec};

    #[test]
    fn quadratic_radius_is_closed_form() {
        for a in [1.0, 4.0] {
            let u = PotentialSpec::quadratic(3, a).unwrap();
            let f = |w: &[f64]| u.value(w);
            let rep = flatness_radius(&f, &[0.0; 3], 0.05, 20, 1, None, "all").unwrap();
            let exact = (2.0 * 0.05 / a).sqrt();
            for r in &rep.radii {
                assert!((r / exact - 1.0).abs() < 1e-3, "{r} vs {exact}");
            }
            assert!(rep.std < 1e-3 * exact);
            assert_eq!(rep.radii.len(), 20);
        }
    }

    #[test]
    fn constant_loss_hits_cap() {
        let rep = flatness_radius(&|_: &[f64]| 1.0, &[0.0; 2], 0.05, 3, 0, None, "all").unwrap();
        assert_eq!(rep.capped, 3);
        assert!(rep.radii.iter().all(|&r| r == MAX_RADIUS));
    }

    #[test]
    fn nan_directions_are_counted_and_excluded() {
        // NaN on the half space x > 0.1
        let f = |w: &[f64]| {
            if w[0] > 0.1 {
                f64::NAN
            } else {
                0.5 * (w[0] * w[0] + w[1] * w[1])
            }
        };
        let rep = flatness_radius(&f, &[0.0; 2], 0.05, 40, 3, None, "all").unwrap();
        assert!(rep.failed > 0);
        assert_eq!(rep.failed + rep.radii.len(), 40);
    }

    #[test]
    fn mask_restricts_direction() {
        let mask = [false, true, false];
        let d = random_direction(3, Some(&mask), 5, 0);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[2], 0.0);
        assert!((d[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_cube_center_is_twice_as_flat_as_sharp() {
        let u = PotentialSpec::flat_sharp(2, 0.5, 2.0, 1.0).unwrap();
        let f = |w: &[f64]| u.value(w);
        let eps = 1e-4;
        let flat = flatness_radius(&f, &[2.0, 2.0], eps, 50, 7, None, "all").unwrap();
        let sharp = flatness_radius(&f, &[-2.0, -2.0], eps, 50, 7, None, "all").unwrap();
        // Same directions: per-direction ratio follows the in-radius ratio
        // up to the wall thickness √(2ε/k).
        let ratio = flat.mean / sharp.mean;
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
        // dense ray-marching oracle on one direction
        let dir = random_direction(2, None, 7, 0);
        let mut r = 0.0;
        while (f(&[2.0 + r * dir[0], 2.0 + r * dir[1]]) - 0.0).abs() <= eps {
            r += 1e-5;
        }
        assert!((flat.radii[0] - r).abs() < 2e-3 * r);
    }

    #[test]
    fn permuting_coordinates_permutes_nothing() {
        // anisotropic quadratic with its coordinates permuted
        let scales = [1.0, 2.0, 5.0];
        let perm = [2, 0, 1];
        let f = |w: &[f64]| (0..3).map(|i| 0.5 * scales[i] * w[i] * w[i]).sum::<f64>();
        let g = |w: &[f64]| {
            (0..3)
                .map(|i| 0.5 * scales[i] * w[perm[i]] * w[perm[i]])
                .sum::<f64>()
        };
        let w = [0.1, -0.2, 0.05];
        let mut wp = [0.0; 3];
        for i in 0..3 {
            wp[perm[i]] = w[i];
        }
        for k in 0..10 {
            let d = random_direction(3, None, 1, k);
            let mut dp = [0.0; 3];
            for i in 0..3 {
                dp[perm[i]] = d[i];
            }
            let a = flatness_radius_along(&f, &w, f(&w), &d, 0.05).unwrap();
            let b = flatness_radius_along(&g, &wp, g(&wp), &dp, 0.05).unwrap();
            assert!((a - b).abs() <= 1e-6 * a);
        }
    }

    #[test]
    fn pooling_reports_both_views() {
        let mk = |radii: Vec<f64>| {
            let (mean, std) = mean_std(&radii);
            FlatnessReport {
                radii,
                mean,
                std,
                epsilon: 0.05,
                directions: 2,
                failed: 0,
                capped: 0,
                subset: "all".into(),
            }
        };
        let p = pool(&[mk(vec![1.0, 3.0]), mk(vec![5.0, 7.0])]).unwrap();
        assert_eq!(p.per_minimum, vec![(2.0, 2f64.sqrt()), (6.0, 2f64.sqrt())]);
        assert_eq!(p.pooled.0, 4.0);
        assert_eq!(p.across_minima.0, 4.0);
    }
}
