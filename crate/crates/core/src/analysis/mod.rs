//! Measurement instruments: histograms and total variation, basin
//! occupancy, flatness radius, simplex interpolation, gradient-noise shape.

pub mod flatness;
pub mod histogram;
pub mod noise;
pub mod simplex;

pub use flatness::{
    flatness_radius, flatness_radius_along, pool, random_direction, FlatnessReport, PooledFlatness,
};
pub use histogram::{tv_distance, Axis, Histogram};
pub use noise::{
    gradient_component_stats, moments, pick_components, ComponentStats, GradientSampling, Moments,
};
pub use simplex::{simplex_interpolation, SimplexRow, SimplexSurface};

use crate::boltzmann::{basin_mass, BasinSpec, Source};
use crate::dynamics::SampleSet;
use crate::error::Result;
use crate::potentials::Domain;

/// Fraction of samples inside each basin; the fractions sum to at most 1.
pub fn occupancy(samples: &SampleSet, domain: &Domain, basins: &[BasinSpec]) -> Result<Vec<f64>> {
    basin_mass(Source::Samples(samples, domain), basins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Origin, Provenance};
    use crate::potentials::{MinimumSet, Potential, PotentialSpec};
    use proptest::prelude::*;

    fn set_of(points: &[[f64; 2]]) -> SampleSet {
        let mut s = SampleSet::new(
            2,
            Provenance {
                potential_id: "test".into(),
                origin: Origin::Rejection {
                    temperature: 1.0,
                    seed: 0,
                    acceptance_rate: 1.0,
                },
                trajectory: 0,
            },
        );
        for (i, p) in points.iter().enumerate() {
            s.push(p, 0, i as u64);
        }
        s
    }

    fn cubes() -> (PotentialSpec, Vec<BasinSpec>) {
        let u = PotentialSpec::flat_sharp(2, 1.0, 1.0, 1.0).unwrap();
        let b = BasinSpec::for_potential(&u, 0.5).unwrap();
        (u, b)
    }

    #[test]
    fn all_at_one_center() {
        let (u, b) = cubes();
        let s = set_of(&[[2.0, 2.0]; 10]);
        assert_eq!(occupancy(&s, u.domain(), &b).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn empty_samples_are_an_error() {
        let (u, b) = cubes();
        assert!(occupancy(&set_of(&[]), u.domain(), &b).is_err());
    }

    #[test]
    fn uniform_samples_split_evenly_between_equal_cubes() {
        let (u, b) = cubes();
        let mut r = crate::rng::stream(8, 0);
        let pts: Vec<[f64; 2]> = (0..40_000)
            .map(|_| {
                let p = u.domain().uniform_point(&mut r);
                [p[0], p[1]]
            })
            .collect();
        let occ = occupancy(&set_of(&pts), u.domain(), &b).unwrap();
        // each neighbourhood is a 2×2 box out of 64
        assert!((occ[0] - 4.0 / 64.0).abs() < 0.005);
        assert!((occ[1] - 4.0 / 64.0).abs() < 0.005);
    }

    #[test]
    fn point_basins_work() {
        let u = PotentialSpec::quadratic(2, 1.0).unwrap();
        let b = vec![BasinSpec::new(MinimumSet::point("origin", vec![0.0, 0.0]), 0.5).unwrap()];
        let s = set_of(&[[0.1, -0.4], [0.6, 0.0]]);
        assert_eq!(occupancy(&s, u.domain(), &b).unwrap(), vec![0.5]);
    }

    proptest! {
        #[test]
        fn occupancy_is_order_invariant(pts in proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 1..60), rot in 0usize..60) {
            let (u, b) = cubes();
            let a: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let mut c = a.clone();
            let k = rot % c.len();
            c.rotate_left(k);
            c.reverse();
            let oa = occupancy(&set_of(&a), u.domain(), &b).unwrap();
            let oc = occupancy(&set_of(&c), u.domain(), &b).unwrap();
            prop_assert_eq!(&oa, &oc);
            prop_assert!(oa.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }
}
