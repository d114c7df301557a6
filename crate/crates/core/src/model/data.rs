use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    Natural,
    /// Labels replaced by i.i.d. uniform draws from this seed.
    Random {
        seed: u64,
    },
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelMode::Natural => f.write_str("natural"),
            LabelMode::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

/// Input/label pairs with square-loss targets and a train/held-out split.
///
/// Targets default to one-hot label encodings; regression-style targets can
/// be supplied with [`LabeledDataset::with_targets`].
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<f64>,
    input_dim: usize,
    labels: Vec<usize>,
    classes: usize,
    targets: Vec<f64>,
    label_mode: LabelMode,
    train: Vec<usize>,
    held_out: Vec<usize>,
}

fn one_hot(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        t[i * classes + y] = 1.0;
    }
    t
}

impl LabeledDataset {
    /// All examples start in the training split.
    pub fn new(
        inputs: Vec<f64>,
        input_dim: usize,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if input_dim == 0 || classes == 0 {
            return Err(Error::param("input_dim and classes must be positive"));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(Error::param(format!(
                "{} inputs do not fill {} rows of width {input_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::param(format!("label {bad} outside [0, {classes})")));
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset input".into()));
        }
        let n = labels.len();
        Ok(LabeledDataset {
            targets: one_hot(&labels, classes),
            inputs,
            input_dim,
            labels,
            classes,
            label_mode: LabelMode::Natural,
            train: (0..n).collect(),
            held_out: Vec::new(),
        })
    }

    /// Replaces the square-loss targets (`n × classes`, row-major).
    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.len() * self.classes {
            return Err(Error::param("targets must have n × classes entries"));
        }
        self.targets = targets;
        Ok(self)
    }

    /// Moves the last `count` examples to the held-out split.
    pub fn with_held_out(mut self, count: usize) -> Result<Self> {
        let n = self.len();
        if count >= n {
            return Err(Error::param(format!(
                "cannot hold out {count} of {n} examples"
            )));
        }
        self.train = (0..n - count).collect();
        self.held_out = (n - count..n).collect();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.classes..(i + 1) * self.classes]
    }

    pub fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn held_out(&self) -> &[usize] {
        &self.held_out
    }

    /// Each example repeated `times` times, consecutively. The split is
    /// reset to all-train.
    pub fn repeated(&self, times: usize) -> LabeledDataset {
        let n = self.len();
        let mut inputs = Vec::with_capacity(self.inputs.len() * times);
        let mut labels = Vec::with_capacity(n * times);
        let mut targets = Vec::with_capacity(self.targets.len() * times);
        for i in 0..n {
            for _ in 0..times {
                inputs.extend_from_slice(self.input(i));
                labels.push(self.labels[i]);
                targets.extend_from_slice(self.target(i));
            }
        }
        LabeledDataset {
            inputs,
            input_dim: self.input_dim,
            labels,
            classes: self.classes,
            targets,
            label_mode: self.label_mode,
            train: (0..n * times).collect(),
            held_out: Vec::new(),
        }
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        let header: Vec<String> = (0..self.input_dim)
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        writeln!(f, "{}", header.join(","))?;
        for i in 0..self.len() {
            for x in self.input(i) {
                write!(f, "{x},")?;
            }
            writeln!(f, "{}", self.labels[i])?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads `x_0,…,x_{d-1},label`. The class count is `max label + 1`
    /// unless `classes` is given.
    pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let cols = header.split(',').count();
        if cols < 2 {
            return Err(Error::Parse(
                "dataset needs at least one input column and a label".into(),
            ));
        }
        let input_dim = cols - 1;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Parse(format!("row {row}: expected {cols} fields")));
            }
            for f in &fields[..input_dim] {
                inputs.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {row}: bad number '{f}'")))?,
                );
            }
            labels.push(
                fields[input_dim]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("row {row}: bad label")))?,
            );
        }
        let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1).max(2));
        LabeledDataset::new(inputs, input_dim, labels, classes)
    }
}

/// Gaussian class clusters: class centers are standard normal vectors and
/// every example is its class center plus `spread`-scaled standard normal
/// noise. Labels cycle through the classes, so any contiguous block is
/// balanced.
pub fn make_blobs(
    n: usize,
    input_dim: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::param("blobs need at least two classes"));
    }
    if n == 0 || input_dim == 0 {
        return Err(Error::param("blobs need n > 0 and input_dim > 0"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::param(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let mut rng = rng::stream(rng::child_seed(seed, 0xb10b), 0);
    let centers: Vec<f64> = (0..classes * input_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut inputs = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        for j in 0..input_dim {
            let noise: f64 = rng.sample(StandardNormal);
            inputs.push(centers[y * input_dim + j] + spread * noise);
        }
        labels.push(y);
    }
    LabeledDataset::new(inputs, input_dim, labels, classes)
}

/// Replaces every label (both splits) by an i.i.d. uniform class; inputs
/// are untouched and targets revert to one-hot.
pub fn randomize_labels(data: &LabeledDataset, seed: u64) -> LabeledDataset {
    let mut rng = rng::stream(rng::child_seed(seed, 0x1abe1), 0);
    let labels: Vec<usize> = (0..data.len())
        .map(|_| rng.random_range(0..data.classes))
        .collect();
    LabeledDataset {
        targets: one_hot(&labels, data.classes),
        labels,
        label_mode: LabelMode::Random { seed },
        ..data.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic() {
        let a = make_blobs(50, 4, 3, 0.3, 9).unwrap();
        let b = make_blobs(50, 4, 3, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_blobs(50, 4, 3, 0.3, 10).unwrap());
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let d = make_blobs(12, 3, 3, 0.0, 1).unwrap();
        for i in 3..12 {
            assert_eq!(d.input(i), d.input(i % 3));
        }
    }

    #[test]
    fn blobs_need_two_classes() {
        assert!(make_blobs(10, 2, 1, 0.1, 0).is_err());
    }

    #[test]
    fn randomization_keeps_inputs_and_records_mode() {
        let d = make_blobs(400, 5, 4, 0.5, 3).unwrap();
        let r = randomize_labels(&d, 77);
        assert_eq!(r.inputs(), d.inputs());
        assert_eq!(r.label_mode(), LabelMode::Random { seed: 77 });
        assert_ne!(r.labels(), d.labels());
        let mut counts = [0usize; 4];
        r.labels().iter().for_each(|&y| counts[y] += 1);
        // 100 expected per class, binomial sd ≈ 8.7
        assert!(
            counts.iter().all(|&c| (c as f64 - 100.0).abs() < 40.0),
            "{counts:?}"
        );
    }

    #[test]
    fn held_out_is_disjoint_from_train() {
        let d = make_blobs(20, 2, 2, 0.1, 0)
            .unwrap()
            .with_held_out(5)
            .unwrap();
        assert_eq!(d.train().len(), 15);
        assert!(d.held_out().iter().all(|i| !d.train().contains(i)));
        assert!(make_blobs(5, 2, 2, 0.1, 0)
            .unwrap()
            .with_held_out(5)
            .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = make_blobs(17, 3, 2, 0.4, 5).unwrap();
        d.save_csv(&path).unwrap();
        let back = LabeledDataset::load_csv(&path, Some(2)).unwrap();
        assert_eq!(back.inputs(), d.inputs());
        assert_eq!(back.labels(), d.labels());
    }
}
