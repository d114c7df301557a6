//! Synthetic landscapes with exact gradients.
//!
//! All catalog potentials vanish exactly on their declared minimum sets, so
//! the zero-level-set volumes (and hence the low-temperature Boltzmann basin
//! masses) are known in closed form. Distances are measured with minimum-image
//! displacements when the domain wraps, which keeps `U` continuous across the
//! torus seam.

use std::fmt;
use std::str::FromStr;

use super::{BoundaryMode, Domain, MinimumSet, Potential};
use crate::error::{Error, Result};

/// Center of the flat cube, and minus the center of the sharp cube.
const BASIN_CENTER: f64 = 2.0;
/// Default box half-width.
const DEFAULT_EXTENT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Landscape {
    /// `U = (a/2)‖w‖²`.
    Quadratic { a: f64 },
    /// Two cube-shaped zero sets of sides `s` and `flat_factor·s` centered at
    /// `(-2,…,-2)` and `(2,…,2)`, with wall `U = (k/2)·min(d∞_sharp, d∞_flat)²`.
    FlatSharp { s: f64, flat_factor: f64, k: f64 },
    /// Sharp point minimum at `(-2, 0, …, 0)` and a degenerate slab
    /// `{w₁ = 2, |w_i| ≤ half_width}`.
    Wedge { k: f64, half_width: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    landscape: Landscape,
    dimension: usize,
    domain: Domain,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn default_domain(d: usize) -> Result<Domain> {
    Domain::cube(d, -DEFAULT_EXTENT, DEFAULT_EXTENT, BoundaryMode::Wrap)
}

impl PotentialSpec {
    pub fn quadratic(d: usize, a: f64) -> Result<Self> {
        positive("a", a)?;
        Self::build(Landscape::Quadratic { a }, d, None)
    }

    pub fn flat_sharp(d: usize, s: f64, flat_factor: f64, k: f64) -> Result<Self> {
        positive("s", s)?;
        positive("k", k)?;
        if !(flat_factor.is_finite() && flat_factor >= 1.0) {
            return Err(Error::param(format!(
                "flat_factor must be >= 1, got {flat_factor}"
            )));
        }
        Self::build(Landscape::FlatSharp { s, flat_factor, k }, d, None)
    }

    pub fn wedge(d: usize, k: f64, half_width: f64) -> Result<Self> {
        positive("k", k)?;
        positive("L", half_width)?;
        Self::build(Landscape::Wedge { k, half_width }, d, None)
    }

    /// Replaces the default `[-4, 4)^d` torus.
    pub fn with_domain(self, domain: Domain) -> Result<Self> {
        Self::build(self.landscape, self.dimension, Some(domain))
    }

    fn build(landscape: Landscape, d: usize, domain: Option<Domain>) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("dimension must be at least 1"));
        }
        let domain = match domain {
            Some(dom) => dom,
            None => default_domain(d)?,
        };
        if domain.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: domain.dim(),
            });
        }
        let spec = PotentialSpec {
            landscape,
            dimension: d,
            domain,
        };
        spec.validate_geometry()?;
        Ok(spec)
    }

    fn validate_geometry(&self) -> Result<()> {
        let sets = self.minimum_sets();
        for set in &sets {
            for i in 0..self.dimension {
                if set.lower[i] < self.domain.lower()[i] || set.upper[i] > self.domain.upper()[i] {
                    return Err(Error::param(format!(
                        "minimum set '{}' leaves the domain along axis {i}",
                        set.label
                    )));
                }
            }
        }
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if set_gap(&self.domain, a, b) <= 0.0 {
                    return Err(Error::param(format!(
                        "minimum sets '{}' and '{}' touch or overlap",
                        a.label, b.label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn landscape(&self) -> Landscape {
        self.landscape
    }

    /// Distance-like margin from `w` to the set where `U` fails to be
    /// differentiable (basin ties, L∞ corner ties, the antipodal seam).
    /// Every term is 1-Lipschitz in each coordinate, so a finite difference
    /// with step `h` is exact up to `O(h²)` whenever this exceeds `2h`.
    pub fn kink_distance(&self, w: &[f64]) -> f64 {
        let dom = &self.domain;
        match self.landscape {
            Landscape::Quadratic { .. } => (0..self.dimension)
                .map(|i| dom.seam_distance(i, dom.displacement(i, w[i], 0.0)))
                .fold(f64::INFINITY, f64::min),
            Landscape::FlatSharp { s, flat_factor, .. } => {
                let sharp = cube_profile(dom, w, -BASIN_CENTER, 0.5 * s);
                let flat = cube_profile(dom, w, BASIN_CENTER, 0.5 * flat_factor * s);
                let active = if sharp.dist <= flat.dist {
                    &sharp
                } else {
                    &flat
                };
                let tie = if active.dist > 0.0 {
                    (sharp.dist - flat.dist).abs()
                } else {
                    f64::INFINITY
                };
                let corner = if active.dist > 0.0 {
                    active.dist - active.second
                } else {
                    f64::INFINITY
                };
                tie.min(corner).min(active.seam)
            }
            Landscape::Wedge { half_width, .. } => {
                let (sharp_sq, slab_sq) = wedge_terms(dom, w, half_width);
                let tie = (sharp_sq.sqrt() - slab_sq.sqrt()).abs();
                let seam = (0..self.dimension)
                    .map(|i| {
                        let c = if sharp_sq < slab_sq {
                            if i == 0 {
                                -BASIN_CENTER
                            } else {
                                0.0
                            }
                        } else if i == 0 {
                            BASIN_CENTER
                        } else {
                            0.0
                        };
                        dom.seam_distance(i, dom.displacement(i, w[i], c))
                    })
                    .fold(f64::INFINITY, f64::min);
                // |w_i| = L is a C¹ junction, not a kink.
                tie.min(seam)
            }
        }
    }
}

fn set_gap(domain: &Domain, a: &MinimumSet, b: &MinimumSet) -> f64 {
    (0..domain.dim())
        .map(|i| domain.interval_gap(i, (a.lower[i], a.upper[i]), (b.lower[i], b.upper[i])))
        .fold(0.0, f64::max)
}

struct CubeProfile {
    /// L∞ distance to the cube.
    dist: f64,
    /// Second-largest per-axis excess.
    second: f64,
    /// Distance to the wrap seam, over all axes.
    seam: f64,
}

fn cube_profile(dom: &Domain, w: &[f64], center: f64, half: f64) -> CubeProfile {
    let mut dist = 0.0f64;
    let mut second = 0.0f64;
    let mut seam = f64::INFINITY;
    for (i, &x) in w.iter().enumerate() {
        let delta = dom.displacement(i, x, center);
        let e = (delta.abs() - half).max(0.0);
        if e > dist {
            second = dist;
            dist = e;
        } else if e > second {
            second = e;
        }
        seam = seam.min(dom.seam_distance(i, delta));
    }
    CubeProfile { dist, second, seam }
}

/// L∞ distance to the cube and the number of axes attaining it.
fn cube_distance(dom: &Domain, w: &[f64], center: f64, half: f64) -> (f64, usize) {
    let mut dist = 0.0f64;
    let mut ties = 0usize;
    for (i, &x) in w.iter().enumerate() {
        let e = (dom.displacement(i, x, center).abs() - half).max(0.0);
        if e > dist {
            dist = e;
            ties = 1;
        } else if e == dist && e > 0.0 {
            ties += 1;
        }
    }
    (dist, ties)
}

/// Writes the minimal-norm gradient of `(k/2)·d∞(w, cube)²`: on an L∞
/// corner the tied axes share the slope equally.
fn cube_gradient(
    dom: &Domain,
    w: &[f64],
    center: f64,
    half: f64,
    k: f64,
    dist: f64,
    ties: usize,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|g| *g = 0.0);
    if dist == 0.0 {
        return;
    }
    let scale = k * dist / ties as f64;
    for (i, &x) in w.iter().enumerate() {
        let delta = dom.displacement(i, x, center);
        if (delta.abs() - half).max(0.0) == dist {
            out[i] = scale * delta.signum();
        }
    }
}

/// Squared distances to the sharp point and to the degenerate slab.
fn wedge_terms(dom: &Domain, w: &[f64], half_width: f64) -> (f64, f64) {
    let mut sharp = 0.0;
    let mut slab = 0.0;
    for (i, &x) in w.iter().enumerate() {
        if i == 0 {
            let dp = dom.displacement(0, x, -BASIN_CENTER);
            let ds = dom.displacement(0, x, BASIN_CENTER);
            sharp += dp * dp;
            slab += ds * ds;
        } else {
            let d0 = dom.displacement(i, x, 0.0);
            sharp += d0 * d0;
            let e = (d0.abs() - half_width).max(0.0);
            slab += e * e;
        }
    }
    (sharp, slab)
}

impl Potential for PotentialSpec {
    fn id(&self) -> String {
        self.to_string()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, w: &[f64]) -> f64 {
        let dom = &self.domain;
        match self.landscape {
            Landscape::Quadratic { a } => {
                let sq: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let d = dom.displacement(i, x, 0.0);
                        d * d
                    })
                    .sum();
                0.5 * a * sq
            }
            Landscape::FlatSharp { s, flat_factor, k } => {
                let sharp = cube_profile(dom, w, -BASIN_CENTER, 0.5 * s).dist;
                let flat = cube_profile(dom, w, BASIN_CENTER, 0.5 * flat_factor * s).dist;
                let d = sharp.min(flat);
                0.5 * k * d * d
            }
            Landscape::Wedge { k, half_width } => {
                let (sharp, slab) = wedge_terms(dom, w, half_width);
                0.5 * k * sharp.min(slab)
            }
        }
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        let dom = &self.domain;
        match self.landscape {
            Landscape::Quadratic { a } => {
                for (i, (g, &x)) in out.iter_mut().zip(w).enumerate() {
                    *g = a * dom.displacement(i, x, 0.0);
                }
            }
            Landscape::FlatSharp { s, flat_factor, k } => {
                let (hs, hf) = (0.5 * s, 0.5 * flat_factor * s);
                let (ds, ts) = cube_distance(dom, w, -BASIN_CENTER, hs);
                let (df, tf) = cube_distance(dom, w, BASIN_CENTER, hf);
                // On a basin tie the smaller-norm side is the one with more tied axes.
                if df < ds || (df == ds && tf > ts) {
                    cube_gradient(dom, w, BASIN_CENTER, hf, k, df, tf, out);
                } else {
                    cube_gradient(dom, w, -BASIN_CENTER, hs, k, ds, ts, out);
                }
            }
            Landscape::Wedge { k, half_width } => {
                let (sharp, slab) = wedge_terms(dom, w, half_width);
                let sharp_grad = |i: usize, x: f64| {
                    let c = if i == 0 { -BASIN_CENTER } else { 0.0 };
                    k * dom.displacement(i, x, c)
                };
                let slab_grad = |i: usize, x: f64| {
                    if i == 0 {
                        k * dom.displacement(0, x, BASIN_CENTER)
                    } else {
                        let d0 = dom.displacement(i, x, 0.0);
                        k * d0.signum() * (d0.abs() - half_width).max(0.0)
                    }
                };
                let use_sharp = if sharp == slab {
                    let ns: f64 = w
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| sharp_grad(i, x).powi(2))
                        .sum();
                    let nq: f64 = w
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| slab_grad(i, x).powi(2))
                        .sum();
                    ns <= nq
                } else {
                    sharp < slab
                };
                for (i, (g, &x)) in out.iter_mut().zip(w).enumerate() {
                    *g = if use_sharp {
                        sharp_grad(i, x)
                    } else {
                        slab_grad(i, x)
                    };
                }
            }
        }
    }

    fn minimum_sets(&self) -> Vec<MinimumSet> {
        let d = self.dimension;
        match self.landscape {
            Landscape::Quadratic { .. } => vec![MinimumSet::point("origin", vec![0.0; d])],
            Landscape::FlatSharp { s, flat_factor, .. } => {
                let hs = 0.5 * s;
                let hf = 0.5 * flat_factor * s;
                vec![
                    MinimumSet::new(
                        "sharp",
                        vec![-BASIN_CENTER - hs; d],
                        vec![-BASIN_CENTER + hs; d],
                    ),
                    MinimumSet::new(
                        "flat",
                        vec![BASIN_CENTER - hf; d],
                        vec![BASIN_CENTER + hf; d],
                    ),
                ]
            }
            Landscape::Wedge { half_width, .. } => {
                let mut p = vec![0.0; d];
                p[0] = -BASIN_CENTER;
                let mut lo = vec![-half_width; d];
                let mut hi = vec![half_width; d];
                lo[0] = BASIN_CENTER;
                hi[0] = BASIN_CENTER;
                vec![
                    MinimumSet::point("sharp", p),
                    MinimumSet::new("degenerate", lo, hi),
                ]
            }
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dimension;
        match self.landscape {
            Landscape::Quadratic { a } => write!(f, "quadratic:d={d},a={a}"),
            Landscape::FlatSharp { s, flat_factor, k } => {
                write!(f, "flat_sharp:d={d},s={s},ff={flat_factor},k={k}")
            }
            Landscape::Wedge { k, half_width } => write!(f, "wedge:d={d},k={k},L={half_width}"),
        }
    }
}

/// Parses `name:key=value,...`, e.g. `flat_sharp:d=3,s=0.5,ff=2,k=1`.
/// Omitted keys other than `d` take defaults (`a=1`, `s=0.5`, `ff=2`,
/// `k=1`, `L=1`).
impl FromStr for PotentialSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let allowed: &[&str] = match name {
            "quadratic" => &["d", "a"],
            "flat_sharp" => &["d", "s", "ff", "k"],
            "wedge" => &["d", "k", "L"],
            other => return Err(Error::Parse(format!("unknown potential '{other}'"))),
        };
        let mut values: Vec<(&str, f64)> = Vec::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{item}'")))?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(Error::Parse(format!("unknown key '{key}' for {name}")));
            }
            let v: f64 = val
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number '{val}' for {key}")))?;
            values.push((key, v));
        }
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            values
                .iter()
                .rev()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .or(default)
                .ok_or_else(|| Error::Parse(format!("missing key '{key}' for {name}")))
        };
        let d = get("d", None)?;
        if d < 1.0 || d.fract() != 0.0 {
            return Err(Error::param(format!(
                "d must be a positive integer, got {d}"
            )));
        }
        let d = d as usize;
        match name {
            "quadratic" => PotentialSpec::quadratic(d, get("a", Some(1.0))?),
            "flat_sharp" => PotentialSpec::flat_sharp(
                d,
                get("s", Some(0.5))?,
                get("ff", Some(2.0))?,
                get("k", Some(1.0))?,
            ),
            _ => PotentialSpec::wedge(d, get("k", Some(1.0))?, get("L", Some(1.0))?),
        }
    }
}
