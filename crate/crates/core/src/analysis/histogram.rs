use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniform binning of `[lo, hi]` into `bins` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param(format!(
                "axis needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if bins == 0 {
            return Err(Error::param("axis needs at least one bin"));
        }
        Ok(Axis { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bins {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    /// Bin of `x`; values outside the range fall into the edge bins.
    pub fn index(&self, x: f64) -> usize {
        let f = ((x - self.lo) / (self.hi - self.lo) * self.bins as f64).floor();
        if f <= 0.0 {
            0
        } else {
            (f as usize).min(self.bins - 1)
        }
    }
}

/// Normalized masses on a product of uniform axes, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    axes: Vec<Axis>,
    mass: Vec<f64>,
}

impl Histogram {
    pub fn new(axes: Vec<Axis>, mass: Vec<f64>) -> Result<Self> {
        let cells: usize = axes.iter().map(|a| a.bins).product();
        if axes.is_empty() || mass.len() != cells {
            return Err(Error::BinningMismatch);
        }
        if mass.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::param(
                "histogram masses must be finite and non-negative",
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!(
                "histogram masses sum to {total}, not 1"
            )));
        }
        Ok(Histogram { axes, mass })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(axes: Vec<Axis>, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::EmptySamples);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Histogram::new(axes, weights)
    }

    /// Bins points (one coordinate per axis, chosen by `coords`).
    pub fn from_points<'a>(
        axes: Vec<Axis>,
        coords: &[usize],
        points: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        if coords.len() != axes.len() {
            return Err(Error::DimensionMismatch {
                expected: axes.len(),
                got: coords.len(),
            });
        }
        let cells: usize = axes.iter().map(|a| a.bins).product();
        let mut counts = vec![0.0; cells];
        for p in points {
            let mut flat = 0;
            for (axis, &c) in axes.iter().zip(coords) {
                flat = flat * axis.bins + axis.index(p[c]);
            }
            counts[flat] += 1.0;
        }
        Histogram::from_weights(axes, counts)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Per-axis bin indices of flat cell `flat`.
    pub fn cell(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.bins;
            flat /= a.bins;
        }
        idx
    }

    /// One row per cell: `bin_lo,bin_hi,prob` in 1-D, otherwise
    /// `bin_lo_k,bin_hi_k` per axis followed by `prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.axes.len() == 1 {
            writeln!(out, "bin_lo,bin_hi,prob")?;
        } else {
            for k in 0..self.axes.len() {
                write!(out, "bin_lo_{k},bin_hi_{k},")?;
            }
            writeln!(out, "prob")?;
        }
        for (flat, m) in self.mass.iter().enumerate() {
            for (a, i) in self.axes.iter().zip(self.cell(flat)) {
                write!(out, "{},{},", a.edge(i), a.edge(i + 1))?;
            }
            writeln!(out, "{m}")?;
        }
        Ok(())
    }

    /// Reads the layout written by [`Histogram::write_csv`]. Lines starting
    /// with `#` are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut header_seen = false;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if !line.starts_with("bin_lo") {
                    return Err(Error::Parse(format!(
                        "unexpected histogram header '{line}'"
                    )));
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad number '{t}' in histogram")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() < 3 || row.len() % 2 == 0 {
                return Err(Error::Parse(format!(
                    "histogram row has {} fields",
                    row.len()
                )));
            }
            rows.push(row);
        }
        let first = rows.first().ok_or(Error::EmptySamples)?;
        let dims = (first.len() - 1) / 2;
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(Error::Parse("ragged histogram rows".into()));
        }
        let mut axes = Vec::with_capacity(dims);
        for k in 0..dims {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut edges: Vec<f64> = Vec::new();
            for r in &rows {
                lo = lo.min(r[2 * k]);
                hi = hi.max(r[2 * k + 1]);
                if !edges.contains(&r[2 * k]) {
                    edges.push(r[2 * k]);
                }
            }
            axes.push(Axis::new(lo, hi, edges.len())?);
        }
        let mass = rows.iter().map(|r| r[r.len() - 1]).collect();
        Histogram::new(axes, mass)
    }
}

/// Total-variation distance `½ Σ |h1 − h2|`; binnings must be identical.
pub fn tv_distance(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    if h1.axes != h2.axes {
        return Err(Error::BinningMismatch);
    }
    let sum: f64 = h1
        .mass
        .iter()
        .zip(&h2.mass)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * sum).min(1.0))
}
