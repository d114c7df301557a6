use std::io::Write;

use rayon::prelude::*;

use super::{step, DynamicsConfig, DynamicsState};
use crate::error::{Error, Result};
use crate::potentials::{Point, Potential};
use crate::rng;

/// Abort threshold on `U` for the divergence guard.
const DIVERGENCE_LEVEL: f64 = 1.0e6;
/// How often (in steps) the guard evaluates `U` between samples.
const GUARD_INTERVAL: u64 = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    /// Uniform on the domain, drawn from the trajectory's own stream.
    Uniform,
    Point(Point),
}

/// How a block of samples was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    Dynamics(DynamicsConfig),
    Rejection {
        temperature: f64,
        seed: u64,
        acceptance_rate: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub potential_id: String,
    pub origin: Origin,
    pub trajectory: u64,
}

/// Retained iterates (or oracle draws), stored row-major, each tagged with
/// its trajectory index and step.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    trajectories: Vec<u64>,
    steps: Vec<u64>,
    provenance: Vec<Provenance>,
}

impl SampleSet {
    pub fn new(dim: usize, provenance: Provenance) -> Self {
        SampleSet {
            dim,
            points: Vec::new(),
            trajectories: Vec::new(),
            steps: Vec::new(),
            provenance: vec![provenance],
        }
    }

    pub(crate) fn push(&mut self, point: &[f64], trajectory: u64, step: u64) {
        debug_assert_eq!(point.len(), self.dim);
        self.points.extend_from_slice(point);
        self.trajectories.push(trajectory);
        self.steps.push(step);
    }

    /// Concatenates sets of equal dimension, keeping every provenance record.
    pub fn merge(sets: Vec<SampleSet>) -> Result<SampleSet> {
        let mut iter = sets.into_iter();
        let mut out = iter.next().ok_or(Error::EmptySamples)?;
        for s in iter {
            if s.dim != out.dim {
                return Err(Error::DimensionMismatch {
                    expected: out.dim,
                    got: s.dim,
                });
            }
            out.points.extend(s.points);
            out.trajectories.extend(s.trajectories);
            out.steps.extend(s.steps);
            out.provenance.extend(s.provenance);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// All values of one coordinate.
    pub fn coordinate(&self, axis: usize) -> impl Iterator<Item = f64> + '_ {
        self.iter().map(move |p| p[axis])
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn last(&self) -> Option<&[f64]> {
        if self.is_empty() {
            None
        } else {
            Some(self.get(self.len() - 1))
        }
    }

    /// `traj,t,coord_0,…,coord_{d-1}` with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "traj,t")?;
        for j in 0..self.dim {
            write!(out, ",coord_{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.len() {
            write!(out, "{},{}", self.trajectories[i], self.steps[i])?;
            for x in self.get(i) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Runs one trajectory on stream `(config.seed, trajectory)` and keeps every
/// `thinning`-th iterate after `burn_in`.
pub fn run_trajectory(
    u: &dyn Potential,
    config: &DynamicsConfig,
    initial: &Initial,
    trajectory: u64,
) -> Result<SampleSet> {
    config.validate()?;
    let domain = u.domain();
    let mut rng = rng::stream(config.seed, trajectory);
    let start = match initial {
        Initial::Uniform => Point::new(domain.uniform_point(&mut rng))?,
        Initial::Point(p) => {
            if p.dim() != u.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: u.dimension(),
                    got: p.dim(),
                });
            }
            domain.project(p)
        }
    };
    let mut state = DynamicsState::new(start, rng);
    let mut samples = SampleSet::new(
        u.dimension(),
        Provenance {
            potential_id: u.id(),
            origin: Origin::Dynamics(config.clone()),
            trajectory,
        },
    );
    for t in 0..config.total_steps {
        step(u, &mut state, config)?;
        let done = t + 1;
        let keep = done > config.burn_in && (done - config.burn_in).is_multiple_of(config.thinning);
        if keep || done % GUARD_INTERVAL == 0 {
            let energy = u.value(&state.point);
            if !(energy <= DIVERGENCE_LEVEL) {
                return Err(Error::Diverged {
                    step: done,
                    reason: format!("U = {energy:e} exceeds {DIVERGENCE_LEVEL:e}"),
                    point: state.point.clone(),
                });
            }
        }
        if keep {
            samples.push(&state.point, trajectory, done);
        }
    }
    Ok(samples)
}

/// Runs `count` independent trajectories (indices `0..count`) in parallel.
/// Output order is by trajectory index regardless of scheduling.
pub fn run_ensemble(
    u: &dyn Potential,
    config: &DynamicsConfig,
    initial: &Initial,
    count: u64,
) -> Result<Vec<SampleSet>> {
    (0..count)
        .into_par_iter()
        .map(|i| run_trajectory(u, config, initial, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Batch, NoiseMode, Rule, Schedule};
    use crate::potentials::PotentialSpec;

    fn config(rule: Rule, total: u64, burn: u64, thin: u64) -> DynamicsConfig {
        DynamicsConfig {
            rule,
            step: Schedule::constant(0.1),
            noise: rule
                .is_langevin()
                .then_some(NoiseMode::Stationary { temperature: 0.5 }),
            batch: Batch::Replacement(4),
            total_steps: total,
            burn_in: burn,
            thinning: thin,
            seed: 42,
        }
    }

    #[test]
    fn gd_contracts_geometrically() {
        let u = PotentialSpec::quadratic(1, 1.0).unwrap();
        let start = Initial::Point(Point::new(vec![1.0]).unwrap());
        let s = run_trajectory(&u, &config(Rule::Gd, 100, 99, 1), &start, 0).unwrap();
        assert_eq!(s.len(), 1);
        let expected = 0.9f64.powi(100);
        assert!((s.get(0)[0] - expected).abs() < 1e-12 * expected.max(1e-300) + 1e-17);
        assert!((expected - 2.656e-5).abs() < 1e-8);
    }

    #[test]
    fn burn_in_equal_to_total_is_rejected() {
        let u = PotentialSpec::quadratic(1, 1.0).unwrap();
        assert!(run_trajectory(&u, &config(Rule::Gd, 10, 10, 1), &Initial::Uniform, 0).is_err());
    }

    #[test]
    fn sample_count_and_determinism() {
        let u = PotentialSpec::wedge(2, 1.0, 1.0).unwrap();
        let cfg = config(Rule::Gdl, 1003, 100, 7);
        let a = run_trajectory(&u, &cfg, &Initial::Uniform, 3).unwrap();
        let b = run_trajectory(&u, &cfg, &Initial::Uniform, 3).unwrap();
        assert_eq!(a.len() as u64, cfg.sample_count());
        assert_eq!(a.len(), 129);
        assert_eq!(a, b);
        let c = run_trajectory(&u, &cfg, &Initial::Uniform, 4).unwrap();
        assert_ne!(a, c);
        assert!(a.iter().all(|p| u.domain().contains(p)));
    }

    #[test]
    fn ensemble_is_ordered_by_trajectory() {
        let u = PotentialSpec::quadratic(2, 1.0).unwrap();
        let cfg = config(Rule::Gdl, 50, 10, 5);
        let sets = run_ensemble(&u, &cfg, &Initial::Uniform, 4).unwrap();
        for (i, s) in sets.iter().enumerate() {
            assert_eq!(
                s,
                &run_trajectory(&u, &cfg, &Initial::Uniform, i as u64).unwrap()
            );
        }
        let merged = SampleSet::merge(sets).unwrap();
        assert_eq!(merged.len(), 32);
        assert_eq!(merged.provenance().len(), 4);
    }

    #[test]
    fn csv_layout() {
        let u = PotentialSpec::quadratic(2, 1.0).unwrap();
        let s = run_trajectory(
            &u,
            &config(Rule::Gd, 3, 1, 1),
            &Initial::Point(Point::new(vec![1.0, 2.0]).unwrap()),
            5,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "traj,t,coord_0,coord_1");
        assert!(lines[1].starts_with("5,2,"));
        assert_eq!(lines.len(), 3);
    }
}
