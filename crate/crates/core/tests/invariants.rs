use std::sync::Arc;

use proptest::prelude::*;

use flatmin::analysis::{flatness_radius, tv_distance};
use flatmin::boltzmann::{
    basin_mass, marginal_1d, quadrature, rejection_sample, BasinSpec, Source,
};
use flatmin::dynamics::{step_gd, step_gdl, step_sgd, step_sgdl, Batch, DynamicsState};
use flatmin::model::{
    make_blobs, randomize_labels, train_to_interpolation, Activation, LossKind, MlpSpec,
    TrainConfig,
};
use flatmin::potentials::{
    from_empirical_loss, BoundaryMode, DecomposedPotential, Domain, EmpiricalPotential, Point,
    Potential, PotentialSpec, StochasticPotential,
};
use flatmin::rng;

fn tiny_network() -> (MlpSpec, EmpiricalPotential) {
    let spec = MlpSpec::new(vec![3, 4, 2], Activation::Softplus, LossKind::Square).unwrap();
    let data = Arc::new(make_blobs(20, 3, 2, 0.4, 6).unwrap());
    let u = from_empirical_loss(spec.clone(), data).unwrap();
    (spec, u)
}

fn catalog() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        (1usize..4, 0.2f64..5.0).prop_map(|(d, a)| PotentialSpec::quadratic(d, a).unwrap()),
        (1usize..4, 0.2f64..0.6, 1.0f64..3.0)
            .prop_map(|(d, s, ff)| PotentialSpec::flat_sharp(d, s, ff, 1.0).unwrap()),
        (2usize..5, 0.5f64..3.0).prop_map(|(d, k)| PotentialSpec::wedge(d, k, 1.0).unwrap()),
    ]
}

fn state(w: &[f64], seed: u64) -> DynamicsState {
    DynamicsState::new(Point::new(w.to_vec()).unwrap(), rng::stream(seed, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sgdl_without_noise_is_sgd(seed in 0u64..1000, batch in 1usize..8, steps in 1usize..40) {
        let (spec, u) = tiny_network();
        let w0 = spec.init_params(seed).weights;
        let (mut a, mut b) = (state(&w0, seed), state(&w0, seed));
        for _ in 0..steps {
            step_sgd(&u, &mut a, 0.05, Batch::Replacement(batch)).unwrap();
            step_sgdl(&u, &mut b, 0.05, 0.0, Batch::Replacement(batch)).unwrap();
        }
        prop_assert_eq!(a.point(), b.point());
    }

    #[test]
    fn gdl_without_noise_is_gd_and_exhaustive_sgd_is_gd(seed in 0u64..1000, steps in 1usize..40) {
        let (spec, u) = tiny_network();
        let w0 = spec.init_params(seed).weights;
        let (mut gd, mut gdl, mut sgd) = (state(&w0, 1), state(&w0, 2), state(&w0, 3));
        for _ in 0..steps {
            step_gd(&u, &mut gd, 0.05).unwrap();
            step_gdl(&u, &mut gdl, 0.05, 0.0).unwrap();
            step_sgd(&u, &mut sgd, 0.05, Batch::Exhaustive).unwrap();
        }
        prop_assert_eq!(gd.point(), gdl.point());
        prop_assert_eq!(gd.point(), sgd.point());
    }

    #[test]
    fn single_example_gradients_average_to_the_full_gradient(seed in 0u64..1000) {
        let (spec, u) = tiny_network();
        let w = spec.init_params(seed).weights;
        let n = u.example_count();
        let mut full = vec![0.0; w.len()];
        u.gradient(&w, &mut full);
        let mut mean = vec![0.0; w.len()];
        let mut g = vec![0.0; w.len()];
        for i in 0..n {
            u.example_gradient(&w, i, &mut g);
            for (m, x) in mean.iter_mut().zip(&g) {
                *m += x / n as f64;
            }
        }
        for (a, b) in mean.iter().zip(&full) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn iterates_stay_on_the_torus(u in catalog(), seed in 0u64..1000, gamma in 0.001f64..2.0, sigma in 0.0f64..3.0) {
        let mut r = rng::stream(seed, 1);
        let w0 = u.domain().uniform_point(&mut r);
        let mut s = state(&w0, seed);
        for _ in 0..50 {
            step_gdl(&u, &mut s, gamma, sigma).unwrap();
            prop_assert!(u.domain().contains(s.point()));
        }
        let dec = DecomposedPotential::new(u.clone(), 16, 5.0, seed).unwrap();
        for _ in 0..50 {
            step_sgdl(&dec, &mut s, gamma, sigma, Batch::Replacement(3)).unwrap();
            prop_assert!(u.domain().contains(s.point()));
        }
    }

    #[test]
    fn wrap_projection_lands_in_the_half_open_box(x in -1e3f64..1e3, lo in -5.0f64..0.0, width in 0.1f64..10.0) {
        let dom = Domain::new(vec![lo], vec![lo + width], BoundaryMode::Wrap).unwrap();
        let mut w = [x];
        dom.project_in_place(&mut w);
        prop_assert!(w[0] >= lo && w[0] < lo + width);
        let k = ((x - w[0]) / width).round();
        prop_assert!((x - w[0] - k * width).abs() < 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn label_randomization_keeps_inputs(seed in 0u64..1000) {
        let d = make_blobs(30, 4, 3, 0.5, seed).unwrap();
        let r = randomize_labels(&d, seed + 1);
        prop_assert_eq!(d.inputs(), r.inputs());
        prop_assert!(r.labels().iter().all(|&y| y < 3));
    }

    #[test]
    fn basin_masses_are_a_sub_probability(u in catalog(), seed in 0u64..100) {
        let draws = rejection_sample(&u, 0.5, 2000, seed).unwrap();
        let Ok(basins) = BasinSpec::for_potential(&u, 0.1) else { return Ok(()) };
        let m = basin_mass(Source::Samples(&draws.samples, u.domain()), &basins).unwrap();
        prop_assert!(m.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(m.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn flatness_report_is_consistent(a in 0.1f64..10.0, eps in 1e-3f64..1.0, seed in 0u64..100) {
        let u = PotentialSpec::quadratic(4, a).unwrap();
        let f = |w: &[f64]| u.value(w);
        let rep = flatness_radius(&f, &[0.0; 4], eps, 12, seed, None, "all").unwrap();
        let n = rep.radii.len() as f64;
        let mean = rep.radii.iter().sum::<f64>() / n;
        prop_assert!((rep.mean - mean).abs() <= 1e-12 * mean);
        let var = rep.radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((rep.std - var.sqrt()).abs() <= 1e-9 * (1.0 + mean));
        prop_assert!(rep.radii.iter().all(|&r| r > 0.0 && r <= flatmin::analysis::flatness::MAX_RADIUS));
    }
}

#[test]
fn rejection_and_quadrature_marginals_agree() {
    let cases = [
        (PotentialSpec::quadratic(1, 1.0).unwrap(), 0.5),
        (PotentialSpec::quadratic(2, 2.0).unwrap(), 0.5),
        (PotentialSpec::flat_sharp(1, 0.5, 2.0, 1.0).unwrap(), 0.1),
        (PotentialSpec::flat_sharp(2, 0.5, 2.0, 1.0).unwrap(), 0.1),
        (PotentialSpec::flat_sharp(3, 0.5, 2.0, 1.0).unwrap(), 0.2),
        (PotentialSpec::wedge(2, 1.0, 1.0).unwrap(), 0.5),
        (PotentialSpec::wedge(3, 1.0, 1.0).unwrap(), 0.5),
    ];
    for (i, (u, t)) in cases.iter().enumerate() {
        let res = if u.dimension() == 3 { 120 } else { 600 };
        let q = quadrature(u, *t, res).unwrap();
        let draws = rejection_sample(u, *t, 1_000_000, i as u64).unwrap();
        for axis in 0..u.dimension() {
            let a = marginal_1d(Source::Density(&q), axis, 30).unwrap();
            let b = marginal_1d(Source::Samples(&draws.samples, u.domain()), axis, 30).unwrap();
            let tv = tv_distance(&a, &b).unwrap();
            assert!(tv <= 0.02, "{u} axis {axis}: tv {tv}");
        }
    }
}

#[test]
fn halving_temperature_does_not_lose_flat_mass() {
    for d in 1..=2 {
        let u = PotentialSpec::flat_sharp(d, 0.5, 2.0, 1.0).unwrap();
        let basins = BasinSpec::for_potential(&u, 0.2).unwrap();
        let flat = basins.iter().position(|b| b.label == "flat").unwrap();
        let mass = |t: f64| {
            let q = quadrature(&u, t, 800 / d).unwrap();
            basin_mass(Source::Density(&q), &basins).unwrap()[flat]
        };
        for t in [0.2, 0.1, 0.05] {
            let (hot, cold) = (mass(t), mass(t / 2.0));
            assert!(cold >= hot - 0.01, "d={d} T={t}: {hot} -> {cold}");
        }
    }
}

#[test]
fn training_is_bit_reproducible() {
    let spec = MlpSpec::new(vec![10, 12, 2], Activation::Softplus, LossKind::Square).unwrap();
    let data = Arc::new(make_blobs(40, 10, 2, 0.3, 1).unwrap());
    let cfg = TrainConfig::sgd(0.1, 8, 1500, 4);
    let a = train_to_interpolation(&spec, data.clone(), &cfg).unwrap();
    let b = train_to_interpolation(&spec, data, &cfg).unwrap();
    assert_eq!(a.params.weights, b.params.weights);
    assert_eq!(a.log, b.log);
}
