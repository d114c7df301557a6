//! Energy landscapes.
//!
//! A [`Potential`] is a non-negative function on a bounded box together with
//! its exact gradient. The catalog in [`catalog`] provides the synthetic
//! landscapes (quadratic bowl, flat-vs-sharp cubes, wedge); [`empirical`]
//! wraps the mean training loss of a network as a potential whose gradient
//! can also be taken over minibatches, and [`decomposed`] splits an analytic
//! landscape into synthetic per-example terms for minibatch dynamics.

pub mod catalog;
pub mod decomposed;
pub mod empirical;

use std::fmt;
use std::ops::Deref;

use rand::Rng;

use crate::error::{Error, Result};

pub use catalog::{Landscape, PotentialSpec};
pub use decomposed::DecomposedPotential;
pub use empirical::{from_empirical_loss, EmpiricalPotential};

/// A point of the parameter space. Coordinates are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::param("point must have at least one coordinate"));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {i} is {}", coords[i])));
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Coordinate-wise periodic: the box is a torus.
    Wrap,
    /// Coordinate-wise clipping to the box.
    Clamp,
}

/// Axis-aligned box `[lower, upper)` with a boundary rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    mode: BoundaryMode,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, mode: BoundaryMode) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::param(
                "domain bounds must be non-empty and of equal length",
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::param(format!(
                    "domain axis {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Domain { lower, upper, mode })
    }

    /// `[lo, hi)^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, mode: BoundaryMode) -> Result<Self> {
        Domain::new(vec![lo; dim], vec![hi; dim], mode)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim()
            && w.iter()
                .enumerate()
                .all(|(i, &x)| x >= self.lower[i] && x <= self.upper[i])
    }

    /// Projection onto the domain: modular reduction into `[lower, upper)`
    /// in wrap mode, clipping in clamp mode.
    pub fn project_in_place(&self, w: &mut [f64]) {
        for (i, x) in w.iter_mut().enumerate() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            match self.mode {
                BoundaryMode::Wrap => {
                    if *x < lo || *x >= hi {
                        let width = hi - lo;
                        let mut y = lo + (*x - lo).rem_euclid(width);
                        if y >= hi {
                            y = lo;
                        }
                        *x = y;
                    }
                }
                BoundaryMode::Clamp => *x = x.clamp(lo, hi),
            }
        }
    }

    pub fn project(&self, w: &Point) -> Point {
        let mut v = w.as_slice().to_vec();
        self.project_in_place(&mut v);
        Point(v)
    }

    /// Signed displacement `x - c` along `axis`. On the torus this is the
    /// minimum-image displacement, in `[-width/2, width/2]`.
    #[inline]
    pub fn displacement(&self, axis: usize, x: f64, c: f64) -> f64 {
        let delta = x - c;
        match self.mode {
            BoundaryMode::Clamp => delta,
            BoundaryMode::Wrap => {
                let width = self.upper[axis] - self.lower[axis];
                delta - width * (delta / width).round()
            }
        }
    }

    /// Distance from a displacement to the wrap seam (`+inf` in clamp mode).
    #[inline]
    pub(crate) fn seam_distance(&self, axis: usize, displacement: f64) -> f64 {
        match self.mode {
            BoundaryMode::Clamp => f64::INFINITY,
            BoundaryMode::Wrap => 0.5 * self.width(axis) - displacement.abs(),
        }
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    /// Separation between `[a_lo, a_hi]` and `[b_lo, b_hi]` along `axis`,
    /// respecting periodicity.
    pub(crate) fn interval_gap(&self, axis: usize, a: (f64, f64), b: (f64, f64)) -> f64 {
        let gap = |shift: f64| (b.0 + shift - a.1).max(a.0 - (b.1 + shift)).max(0.0);
        match self.mode {
            BoundaryMode::Clamp => gap(0.0),
            BoundaryMode::Wrap => {
                let w = self.width(axis);
                gap(-w).min(gap(0.0)).min(gap(w))
            }
        }
    }
}

/// A declared set of global minimizers: an axis-aligned box, possibly
/// degenerate (a point, a segment, a slab).
#[derive(Clone, Debug, PartialEq)]
pub struct MinimumSet {
    pub label: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MinimumSet {
    pub fn new(label: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        MinimumSet {
            label: label.into(),
            lower,
            upper,
        }
    }

    pub fn point(label: impl Into<String>, p: Vec<f64>) -> Self {
        MinimumSet::new(label, p.clone(), p)
    }

    /// L∞ distance from `w` to the box, measured in `domain`'s metric.
    pub fn linf_distance(&self, domain: &Domain, w: &[f64]) -> f64 {
        let mut dist = 0.0f64;
        for (i, &x) in w.iter().enumerate() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let excess = (domain.displacement(i, x, center).abs() - half).max(0.0);
            dist = dist.max(excess);
        }
        dist
    }

    /// Lebesgue volume of the box (zero when degenerate).
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    /// A representative point (the box center).
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// A non-negative energy `U` on a box, with exact gradient.
///
/// `value` and `gradient` are the unchecked hot-path entry points; callers
/// guarantee `w.len() == dimension()`. Use [`eval`] and [`grad`] for checked
/// access.
pub trait Potential: Send + Sync {
    /// Catalog name and parameters, e.g. `wedge:d=2,k=1,L=1`.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn domain(&self) -> &Domain;
    fn value(&self, w: &[f64]) -> f64;
    /// Writes `∇U(w)` into `out`. On the measure-zero set where `U` is not
    /// differentiable this is the one-sided limit of smallest norm.
    fn gradient(&self, w: &[f64], out: &mut [f64]);

    /// Declared global-minimum sets (where `U = 0`).
    fn minimum_sets(&self) -> Vec<MinimumSet> {
        Vec::new()
    }

    /// Minibatch access, if `U` is a mean over examples.
    fn as_stochastic(&self) -> Option<&dyn StochasticPotential> {
        None
    }
}

/// A potential of the form `U(w) = (1/n) Σ_i V(w, z_i)`.
pub trait StochasticPotential: Potential {
    fn example_count(&self) -> usize;

    /// `∇V(w, z_i)` for a single example.
    fn example_gradient(&self, w: &[f64], example: usize, out: &mut [f64]);

    /// Mean of the per-example gradients over `batch` (repeats allowed).
    /// The full gradient is exactly `batch_gradient` over `0..n`.
    fn batch_gradient(&self, w: &[f64], batch: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let mut scratch = vec![0.0; out.len()];
        for &i in batch {
            self.example_gradient(w, i, &mut scratch);
            for (g, s) in out.iter_mut().zip(&scratch) {
                *g += s;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        out.iter_mut().for_each(|g| *g *= scale);
    }
}

fn check_point(u: &dyn Potential, w: &[f64]) -> Result<()> {
    if w.len() != u.dimension() {
        return Err(Error::DimensionMismatch {
            expected: u.dimension(),
            got: w.len(),
        });
    }
    if let Some(i) = w.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "coordinate {i} of evaluation point"
        )));
    }
    Ok(())
}

/// Checked evaluation of `U(w)`.
pub fn eval(u: &dyn Potential, w: &[f64]) -> Result<f64> {
    check_point(u, w)?;
    Ok(u.value(w))
}

/// Checked evaluation of `∇U(w)`.
pub fn grad(u: &dyn Potential, w: &[f64]) -> Result<Point> {
    check_point(u, w)?;
    let mut out = vec![0.0; w.len()];
    u.gradient(w, &mut out);
    Point::new(out)
}

/// Central finite-difference gradient, `(U(w + h e_i) - U(w - h e_i)) / 2h`.
pub fn fd_grad(u: &dyn Potential, w: &[f64], h: f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            probe[i] = w[i] + h;
            let up = u.value(&probe);
            probe[i] = w[i] - h;
            let down = u.value(&probe);
            probe[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_projection_reduces_modulo_width() {
        let d = Domain::cube(1, -1.0, 1.0, BoundaryMode::Wrap).unwrap();
        let p = d.project(&Point::new(vec![1.5]).unwrap());
        assert_eq!(p.as_slice(), &[-0.5]);
        let inside = Point::new(vec![0.25]).unwrap();
        assert_eq!(d.project(&inside), inside);
        let mut edge = [1.0];
        d.project_in_place(&mut edge);
        assert_eq!(edge, [-1.0]);
    }

    #[test]
    fn clamp_projection_clips() {
        let d = Domain::cube(2, -1.0, 1.0, BoundaryMode::Clamp).unwrap();
        let p = d.project(&Point::new(vec![2.0, -3.0]).unwrap());
        assert_eq!(p.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn point_rejects_nan() {
        assert!(matches!(
            Point::new(vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Point::new(vec![]).is_err());
    }

    #[test]
    fn domain_rejects_empty_axis() {
        assert!(Domain::cube(2, 1.0, 1.0, BoundaryMode::Wrap).is_err());
    }

    #[test]
    fn minimum_image_displacement() {
        let d = Domain::cube(1, -4.0, 4.0, BoundaryMode::Wrap).unwrap();
        assert_eq!(d.displacement(0, 3.5, -3.5), -1.0);
        assert_eq!(d.displacement(0, 1.0, -1.0), 2.0);
        let c = Domain::cube(1, -4.0, 4.0, BoundaryMode::Clamp).unwrap();
        assert_eq!(c.displacement(0, 3.5, -3.5), 7.0);
    }

    #[test]
    fn periodic_interval_gap() {
        let d = Domain::cube(1, -4.0, 4.0, BoundaryMode::Wrap).unwrap();
        assert_eq!(d.interval_gap(0, (-3.0, -1.0), (0.0, 4.0)), 1.0);
        assert_eq!(d.interval_gap(0, (-3.5, -3.0), (3.0, 3.5)), 1.0);
        assert_eq!(d.interval_gap(0, (-1.0, 1.0), (0.0, 2.0)), 0.0);
    }
}
