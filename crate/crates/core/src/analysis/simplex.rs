use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexRow {
    pub lambda: [f64; 3],
    pub x: f64,
    pub y: f64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss and accuracy on the barycentric grid `λ = (i, j, k) / m`, embedded
/// in the plane as `x = λ2 + λ3/2`, `y = (√3/2)·λ3`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexSurface {
    pub m: usize,
    pub rows: Vec<SimplexRow>,
}

/// Grid triples `(i, j, k)` with `i + j + k = m`, ordered by `j` then `k`.
fn grid(m: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity((m + 1) * (m + 2) / 2);
    for j in 0..=m {
        for k in 0..=m - j {
            out.push([m - j - k, j, k]);
        }
    }
    out
}

/// `Σ λ_a w_a`, skipping zero weights so a vertex reproduces its
/// minimizer bit for bit.
fn combine(lambda: [f64; 3], ws: [&[f64]; 3], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (l, w) in lambda.iter().zip(ws) {
        if *l == 0.0 {
            continue;
        }
        if *l == 1.0 {
            out.copy_from_slice(w);
            return;
        }
        for (o, &x) in out.iter_mut().zip(w) {
            *o += l * x;
        }
    }
}

/// Evaluates `eval(w_λ) = (loss, accuracy)` on all `(m+1)(m+2)/2` points.
pub fn simplex_interpolation<F>(
    eval: &F,
    w1: &[f64],
    w2: &[f64],
    w3: &[f64],
    m: usize,
) -> Result<SimplexSurface>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync + ?Sized,
{
    if m < 2 {
        return Err(Error::param(format!(
            "simplex resolution must be at least 2, got {m}"
        )));
    }
    for w in [w2, w3] {
        if w.len() != w1.len() {
            return Err(Error::DimensionMismatch {
                expected: w1.len(),
                got: w.len(),
            });
        }
    }
    let h = 3f64.sqrt() / 2.0;
    let rows = grid(m)
        .into_par_iter()
        .map_init(
            || vec![0.0; w1.len()],
            |buf, [i, j, k]| {
                let lambda = [
                    i as f64 / m as f64,
                    j as f64 / m as f64,
                    k as f64 / m as f64,
                ];
                combine(lambda, [w1, w2, w3], buf);
                let (loss, accuracy) = eval(buf)?;
                Ok(SimplexRow {
                    lambda,
                    x: lambda[1] + 0.5 * lambda[2],
                    y: h * lambda[2],
                    loss,
                    accuracy,
                })
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(SimplexSurface { m, rows })
}

impl SimplexSurface {
    /// Share of grid points with accuracy at least `threshold`; the grid is
    /// uniform on the simplex, so this estimates the area fraction.
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        let hit = self.rows.iter().filter(|r| r.accuracy >= threshold).count();
        hit as f64 / self.rows.len() as f64
    }

    pub fn row(&self, lambda: [f64; 3]) -> Option<&SimplexRow> {
        self.rows.iter().find(|r| r.lambda == lambda)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lambda1,lambda2,lambda3,x,y,loss,accuracy")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.lambda[0], r.lambda[1], r.lambda[2], r.x, r.y, r.loss, r.accuracy
            )?;
        }
        Ok(())
    }
}
