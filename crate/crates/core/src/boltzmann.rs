//! Exact reference for the stationary density `p(w) = exp(−U(w)/T) / Z` on a
//! bounded domain: midpoint quadrature for `d ≤ 3`, rejection sampling in
//! any dimension.

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{Axis, Histogram};
use crate::dynamics::{Origin, Provenance, SampleSet};
use crate::error::{Error, Result};
use crate::potentials::{Domain, MinimumSet, Potential};
use crate::rng;

pub const MAX_QUADRATURE_DIM: usize = 3;
/// Upper bound on the number of quadrature cells kept in memory.
const MAX_CELLS: usize = 1 << 25;
pub const PROPOSALS_PER_BLOCK: u64 = 1 << 16;
/// Blocks evaluated per parallel round; fixed so output never depends on the
/// thread count.
const BLOCKS_PER_ROUND: u64 = 16;
/// Rejection gives up when, after this many proposals, the acceptance rate
/// is still below [`MIN_ACCEPTANCE`].
pub const ACCEPTANCE_PROBE: u64 = 10_000_000;
pub const MIN_ACCEPTANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Quadrature { resolution: usize },
    Rejection { proposals: u64, accepted: u64 },
}

/// Normalized Boltzmann density. Quadrature oracles carry per-cell masses;
/// rejection oracles carry only the `Z` estimate `volume · acceptance`.
#[derive(Clone, Debug)]
pub struct OracleDensity {
    pub potential_id: String,
    pub temperature: f64,
    pub z: f64,
    pub method: Method,
    domain: Domain,
    cells: Vec<f64>,
}

impl OracleDensity {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Cell probabilities (row-major, axis 0 slowest); empty for rejection.
    pub fn cell_masses(&self) -> &[f64] {
        &self.cells
    }

    fn resolution(&self) -> Result<usize> {
        match self.method {
            Method::Quadrature { resolution } => Ok(resolution),
            Method::Rejection { .. } => Err(Error::param(
                "a rejection oracle has no grid; histogram its samples instead",
            )),
        }
    }

    fn cell_center(&self, mut flat: usize, res: usize, out: &mut [f64]) {
        let d = self.domain.dim();
        for k in (0..d).rev() {
            let i = flat % res;
            flat /= res;
            let h = self.domain.width(k) / res as f64;
            out[k] = self.domain.lower()[k] + (i as f64 + 0.5) * h;
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "temperature must be positive, got {t}"
        )))
    }
}

fn check_weight(u: f64, w: &[f64]) -> Result<()> {
    if u.is_nan() || u < 0.0 {
        return Err(Error::NonFinite(format!(
            "U = {u} at {w:?}; the oracle needs U ≥ 0"
        )));
    }
    Ok(())
}

/// Midpoint-rule Boltzmann density on a `resolution^d` grid over the domain.
pub fn quadrature(u: &dyn Potential, temperature: f64, resolution: usize) -> Result<OracleDensity> {
    check_temperature(temperature)?;
    let d = u.dimension();
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::QuadratureDimension(d));
    }
    if resolution < 2 {
        return Err(Error::param("quadrature needs at least 2 points per axis"));
    }
    let cells = resolution
        .checked_pow(d as u32)
        .filter(|&c| c <= MAX_CELLS)
        .ok_or_else(|| {
            Error::param(format!(
                "{resolution}^{d} quadrature cells exceed the memory cap"
            ))
        })?;
    let domain = u.domain().clone();
    let mut density = OracleDensity {
        potential_id: u.id(),
        temperature,
        z: 0.0,
        method: Method::Quadrature { resolution },
        domain,
        cells: Vec::new(),
    };
    // Slabs along axis 0 are independent; each is summed in order.
    let slab = cells / resolution;
    let weights: Vec<Vec<f64>> = (0..resolution)
        .into_par_iter()
        .map(|i0| {
            let mut w = vec![0.0; d];
            let mut out = Vec::with_capacity(slab);
            for j in 0..slab {
                density.cell_center(i0 * slab + j, resolution, &mut w);
                let e = u.value(&w);
                check_weight(e, &w)?;
                out.push((-e / temperature).exp());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut cells_w: Vec<f64> = weights.into_iter().flatten().collect();
    let total: f64 = cells_w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonFinite(format!(
            "every quadrature weight underflowed at T = {temperature}; refine the grid or raise T"
        )));
    }
    let cell_volume = density.domain.volume() / cells as f64;
    cells_w.iter_mut().for_each(|c| *c /= total);
    density.z = total * cell_volume;
    density.cells = cells_w;
    Ok(density)
}

/// `Z = ∫ exp(−U/T)` over the domain by the midpoint rule.
pub fn partition(u: &dyn Potential, temperature: f64, resolution: usize) -> Result<f64> {
    Ok(quadrature(u, temperature, resolution)?.z)
}

/// Exact Boltzmann draws together with the bookkeeping of how they were made.
#[derive(Clone, Debug)]
pub struct RejectionDraws {
    pub samples: SampleSet,
    pub density: OracleDensity,
    pub acceptance_rate: f64,
}

/// Proposes uniformly on the domain and accepts with probability
/// `exp(−U/T)` until `count` samples are collected.
///
/// Proposals are processed in fixed blocks, each on its own substream of
/// `seed`; accepted points are concatenated in block order, so the output is
/// identical for any thread count.
pub fn rejection_sample(
    u: &dyn Potential,
    temperature: f64,
    count: usize,
    seed: u64,
) -> Result<RejectionDraws> {
    check_temperature(temperature)?;
    if count == 0 {
        return Err(Error::param("rejection sampling needs count > 0"));
    }
    let domain = u.domain();
    let d = u.dimension();
    let block_seed = rng::child_seed(seed, 0x5e1ec7);
    let mut blocks: Vec<(u64, Vec<f64>, Vec<u64>)> = Vec::new();
    let mut accepted = 0u64;
    let mut proposals = 0u64;
    let mut next_block = 0u64;
    while (accepted as usize) < count {
        if proposals >= ACCEPTANCE_PROBE && (accepted as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(Error::TemperatureTooLow {
                rate: accepted as f64 / proposals as f64,
                proposals,
            });
        }
        let round: Vec<(u64, Vec<f64>, Vec<u64>)> = (next_block..next_block + BLOCKS_PER_ROUND)
            .into_par_iter()
            .map(|b| {
                let mut r = rng::stream(block_seed, b);
                let mut pts = Vec::new();
                let mut idx = Vec::new();
                for j in 0..PROPOSALS_PER_BLOCK {
                    let w = domain.uniform_point(&mut r);
                    let e = u.value(&w);
                    check_weight(e, &w)?;
                    let coin: f64 = r.random();
                    if coin < (-e / temperature).exp() {
                        pts.extend_from_slice(&w);
                        idx.push(j);
                    }
                }
                Ok((b, pts, idx))
            })
            .collect::<Result<_>>()?;
        next_block += BLOCKS_PER_ROUND;
        proposals += BLOCKS_PER_ROUND * PROPOSALS_PER_BLOCK;
        for blk in round {
            accepted += blk.2.len() as u64;
            blocks.push(blk);
        }
    }
    let rate = accepted as f64 / proposals as f64;
    let mut samples = SampleSet::new(
        d,
        Provenance {
            potential_id: u.id(),
            origin: Origin::Rejection {
                temperature,
                seed,
                acceptance_rate: rate,
            },
            trajectory: 0,
        },
    );
    'outer: for (b, pts, idx) in &blocks {
        for (p, &j) in pts.chunks_exact(d).zip(idx) {
            if samples.len() == count {
                break 'outer;
            }
            samples.push(p, *b, j);
        }
    }
    Ok(RejectionDraws {
        samples,
        density: OracleDensity {
            potential_id: u.id(),
            temperature,
            z: rate * domain.volume(),
            method: Method::Rejection {
                proposals,
                accepted,
            },
            domain: domain.clone(),
            cells: Vec::new(),
        },
        acceptance_rate: rate,
    })
}

/// Either an exact grid density or an i.i.d. sample of one.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Density(&'a OracleDensity),
    Samples(&'a SampleSet, &'a Domain),
}

/// Histogram of coordinate `axis` over the domain's range on that axis.
///
/// Grid cells are split between bins in proportion to overlap, so grid and
/// bin edges need not align.
pub fn marginal_1d(source: Source<'_>, axis: usize, bins: usize) -> Result<Histogram> {
    if bins < 10 {
        return Err(Error::param(format!(
            "marginals need at least 10 bins, got {bins}"
        )));
    }
    let domain = match source {
        Source::Density(o) => &o.domain,
        Source::Samples(_, dom) => dom,
    };
    if axis >= domain.dim() {
        return Err(Error::IndexOutOfRange {
            index: axis,
            len: domain.dim(),
        });
    }
    let range = Axis::new(domain.lower()[axis], domain.upper()[axis], bins)?;
    match source {
        Source::Samples(s, _) => {
            if s.is_empty() {
                return Err(Error::EmptySamples);
            }
            if s.dim() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: s.dim(),
                });
            }
            Histogram::from_points(vec![range], &[axis], s.iter())
        }
        Source::Density(o) => {
            let res = o.resolution()?;
            let d = domain.dim();
            let stride = res.pow((d - 1 - axis) as u32);
            let mut line = vec![0.0; res];
            for (flat, &m) in o.cells.iter().enumerate() {
                line[(flat / stride) % res] += m;
            }
            let h = domain.width(axis) / res as f64;
            let mut mass = vec![0.0; bins];
            for (i, &m) in line.iter().enumerate() {
                let a = range.lo + i as f64 * h;
                let b = a + h;
                let mut k = range.index(a);
                while k < bins && range.edge(k) < b {
                    let overlap = b.min(range.edge(k + 1)) - a.max(range.edge(k));
                    if overlap > 0.0 {
                        mass[k] += m * overlap / h;
                    }
                    k += 1;
                }
            }
            let total: f64 = mass.iter().sum();
            mass.iter_mut().for_each(|x| *x /= total);
            Histogram::new(vec![range], mass)
        }
    }
}

/// Neighbourhood `{w : d∞(w, set) ≤ margin}` of a declared minimum set.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinSpec {
    pub label: String,
    pub set: MinimumSet,
    pub margin: f64,
}

impl BasinSpec {
    pub fn new(set: MinimumSet, margin: f64) -> Result<Self> {
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::param(format!(
                "basin margin must be non-negative, got {margin}"
            )));
        }
        Ok(BasinSpec {
            label: set.label.clone(),
            set,
            margin,
        })
    }

    /// One basin per declared minimum set of `u`, all with the same margin.
    pub fn for_potential(u: &dyn Potential, margin: f64) -> Result<Vec<BasinSpec>> {
        let basins = u
            .minimum_sets()
            .into_iter()
            .map(|s| BasinSpec::new(s, margin))
            .collect::<Result<Vec<_>>>()?;
        check_disjoint(u.domain(), &basins)?;
        Ok(basins)
    }

    pub fn contains(&self, domain: &Domain, w: &[f64]) -> bool {
        self.set.linf_distance(domain, w) <= self.margin
    }
}

/// Basins are disjoint when, on some axis, their boxes are separated by more
/// than the sum of the margins.
pub fn check_disjoint(domain: &Domain, basins: &[BasinSpec]) -> Result<()> {
    for (i, a) in basins.iter().enumerate() {
        if a.set.lower.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: a.set.lower.len(),
            });
        }
        for b in &basins[i + 1..] {
            let gap = (0..domain.dim())
                .map(|k| {
                    domain.interval_gap(
                        k,
                        (a.set.lower[k], a.set.upper[k]),
                        (b.set.lower[k], b.set.upper[k]),
                    )
                })
                .fold(0.0f64, f64::max);
            if gap <= a.margin + b.margin {
                return Err(Error::param(format!(
                    "basins '{}' and '{}' overlap: gap {gap} ≤ margins {} + {}",
                    a.label, b.label, a.margin, b.margin
                )));
            }
        }
    }
    Ok(())
}

/// Probability of each basin; the remainder is the transition region.
pub fn basin_mass(source: Source<'_>, basins: &[BasinSpec]) -> Result<Vec<f64>> {
    match source {
        Source::Samples(s, domain) => {
            check_disjoint(domain, basins)?;
            if s.is_empty() {
                return Err(Error::EmptySamples);
            }
            let mut hits = vec![0usize; basins.len()];
            for p in s.iter() {
                if let Some(k) = basins.iter().position(|b| b.contains(domain, p)) {
                    hits[k] += 1;
                }
            }
            Ok(hits
                .into_iter()
                .map(|h| h as f64 / s.len() as f64)
                .collect())
        }
        Source::Density(o) => {
            check_disjoint(&o.domain, basins)?;
            let res = o.resolution()?;
            let mut w = vec![0.0; o.domain.dim()];
            let mut mass = vec![0.0; basins.len()];
            for (flat, &m) in o.cells.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                o.cell_center(flat, res, &mut w);
                if let Some(k) = basins.iter().position(|b| b.contains(&o.domain, &w)) {
                    mass[k] += m;
                }
            }
            Ok(mass)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::tv_distance;
    use crate::potentials::{BoundaryMode, PotentialSpec};

    fn flat_zero(lo: f64, hi: f64) -> PotentialSpec {
        // a = tiny keeps U ≈ 0 everywhere on the box.
        PotentialSpec::quadratic(1, 1e-300)
            .unwrap()
            .with_domain(Domain::cube(1, lo, hi, BoundaryMode::Clamp).unwrap())
            .unwrap()
    }

    #[test]
    fn uniform_partition_is_box_volume() {
        let z = partition(&flat_zero(0.0, 1.0), 1.0, 64).unwrap();
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_partition() {
        let u = PotentialSpec::quadratic(1, 1.0)
            .unwrap()
            .with_domain(Domain::cube(1, -8.0, 8.0, BoundaryMode::Clamp).unwrap())
            .unwrap();
        let z = partition(&u, 1.0, 1024).unwrap();
        assert!(
            (z - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-3,
            "{z}"
        );
    }

    /// Zero-set lengths `s` and `ff·s` plus one Gaussian wall integral
    /// `√(2πT/k)` per basin.
    fn flat_sharp_1d_partition(s: f64, ff: f64, k: f64, t: f64) -> f64 {
        s + ff * s + 2.0 * (2.0 * std::f64::consts::PI * t / k).sqrt()
    }

    #[test]
    fn flat_sharp_partition_matches_wall_formula() {
        let u = PotentialSpec::flat_sharp(1, 0.5, 2.0, 1.0).unwrap();
        let z = partition(&u, 0.01, 1 << 16).unwrap();
        assert!(
            (z - flat_sharp_1d_partition(0.5, 2.0, 1.0, 0.01)).abs() < 1e-4,
            "{z}"
        );
        let z2 = partition(&u, 0.01, 1 << 17).unwrap();
        assert!((z2 / z - 1.0).abs() < 0.005);
        // with stiff walls the zero sets dominate
        let stiff = PotentialSpec::flat_sharp(1, 0.5, 2.0, 1e4).unwrap();
        let z = partition(&stiff, 0.01, 1 << 16).unwrap();
        assert!((z / 1.5 - 1.0).abs() < 0.02, "{z}");
    }

    #[test]
    fn quadrature_refuses_high_dimension() {
        let u = PotentialSpec::quadratic(4, 1.0).unwrap();
        assert!(matches!(
            quadrature(&u, 1.0, 64),
            Err(Error::QuadratureDimension(4))
        ));
    }

    #[test]
    fn rejection_on_flat_potential_accepts_everything() {
        let draws = rejection_sample(&flat_zero(0.0, 1.0), 1.0, 1000, 3).unwrap();
        assert_eq!(draws.acceptance_rate, 1.0);
        assert_eq!(draws.samples.len(), 1000);
        let h = marginal_1d(
            Source::Samples(&draws.samples, &flat_zero(0.0, 1.0).domain().clone()),
            0,
            10,
        )
        .unwrap();
        assert!(h.masses().iter().all(|&m| (m - 0.1).abs() < 0.05));
    }

    #[test]
    fn rejection_gaussian_variance() {
        let u = PotentialSpec::quadratic(1, 1.0).unwrap();
        let s = rejection_sample(&u, 0.5, 1_000_000, 11).unwrap().samples;
        let n = s.len() as f64;
        let mean = s.coordinate(0).sum::<f64>() / n;
        let var = s.coordinate(0).map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 0.5).abs() < 0.01, "{var}");
    }

    #[test]
    fn rejection_is_reproducible_across_thread_counts() {
        let u = PotentialSpec::wedge(2, 1.0, 1.0).unwrap();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| rejection_sample(&u, 0.5, 5000, 9).unwrap());
        let b = four.install(|| rejection_sample(&u, 0.5, 5000, 9).unwrap());
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
    }

    #[test]
    fn rejection_aborts_at_tiny_acceptance() {
        let u = PotentialSpec::quadratic(5, 1.0).unwrap();
        assert!(matches!(
            rejection_sample(&u, 1e-6, 10, 0),
            Err(Error::TemperatureTooLow { .. })
        ));
    }

    #[test]
    fn uniform_quadrature_marginal() {
        let o = quadrature(&flat_zero(0.0, 1.0), 1.0, 100).unwrap();
        let h = marginal_1d(Source::Density(&o), 0, 10).unwrap();
        for &m in h.masses() {
            assert!((m - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn misaligned_grid_marginal_stays_normalized() {
        let u = PotentialSpec::quadratic(2, 1.0).unwrap();
        let o = quadrature(&u, 1.0, 97).unwrap();
        let h = marginal_1d(Source::Density(&o), 1, 13).unwrap();
        assert!((h.masses().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // symmetric about the origin
        let m = h.masses();
        for i in 0..13 {
            assert!((m[i] - m[12 - i]).abs() < 1e-3);
        }
    }

    #[test]
    fn flat_sharp_basin_masses_follow_volume() {
        let u = PotentialSpec::flat_sharp(1, 0.5, 2.0, 1.0).unwrap();
        let basins = BasinSpec::for_potential(&u, 0.25).unwrap();
        let o = quadrature(&u, 1e-3, 1 << 14).unwrap();
        let m = basin_mass(Source::Density(&o), &basins).unwrap();
        assert_eq!(basins[1].label, "flat");
        assert!((m[1] - 2.0 / 3.0).abs() < 0.02, "{m:?}");
        assert!(m[0] + m[1] <= 1.0 + 1e-12);
    }

    #[test]
    fn flat_sharp_2d_rejection_occupancy() {
        let u = PotentialSpec::flat_sharp(2, 0.5, 2.0, 1.0).unwrap();
        let basins = BasinSpec::for_potential(&u, 0.25).unwrap();
        let s = rejection_sample(&u, 1e-4, 200_000, 5).unwrap().samples;
        let m = basin_mass(Source::Samples(&s, u.domain()), &basins).unwrap();
        assert!((m[1] - 0.8).abs() < 0.02, "{m:?}");
        // At T = 1e-3 each side of each cube gains a wall of effective
        // width √(2πT)/2, pulling the share to ≈ 0.776.
        let t: f64 = 1e-3;
        let pad = (2.0 * std::f64::consts::PI * t).sqrt();
        let expected = (1.0 + pad).powi(2) / ((1.0 + pad).powi(2) + (0.5 + pad).powi(2));
        let s = rejection_sample(&u, t, 200_000, 6).unwrap().samples;
        let m = basin_mass(Source::Samples(&s, u.domain()), &basins).unwrap();
        assert!((m[1] - expected).abs() < 0.005, "{m:?} vs {expected}");
    }

    #[test]
    fn rejection_marginal_matches_quadrature() {
        let u = PotentialSpec::flat_sharp(2, 0.5, 2.0, 1.0).unwrap();
        let t = 0.05;
        let o = quadrature(&u, t, 800).unwrap();
        let s = rejection_sample(&u, t, 1_000_000, 1).unwrap().samples;
        let hq = marginal_1d(Source::Density(&o), 0, 80).unwrap();
        let hs = marginal_1d(Source::Samples(&s, u.domain()), 0, 80).unwrap();
        assert!(tv_distance(&hq, &hs).unwrap() <= 0.02);
    }

    #[test]
    fn whole_domain_basin_has_unit_mass() {
        let u = PotentialSpec::quadratic(2, 1.0).unwrap();
        let whole = BasinSpec::new(MinimumSet::point("all", vec![0.0, 0.0]), 4.0).unwrap();
        let o = quadrature(&u, 1.0, 64).unwrap();
        let m = basin_mass(Source::Density(&o), &[whole]).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_basins_are_rejected() {
        let u = PotentialSpec::flat_sharp(1, 0.5, 2.0, 1.0).unwrap();
        assert!(BasinSpec::for_potential(&u, 2.0).is_err());
    }
}
