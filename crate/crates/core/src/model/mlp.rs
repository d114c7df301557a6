use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use super::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `(1/2)‖scores − target‖²`; targets default to one-hot labels.
    Square,
    /// Softmax cross-entropy against the integer label.
    CrossEntropy,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus => {
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            _ => Err(Error::Parse(format!("unknown activation '{s}'"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Square => "square",
            LossKind::CrossEntropy => "cross_entropy",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LossKind::Square),
            "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            _ => Err(Error::Parse(format!("unknown loss '{s}'"))),
        }
    }
}

/// Architecture of a fully connected network: `widths[0]` inputs, hidden
/// layers, `widths.last()` output scores. The output layer is linear.
///
/// Flat weight layout: one block per layer, in order; each block holds the
/// `out × in` weight matrix row-major (one row per output unit) followed by
/// the `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activation: Activation,
    loss: LossKind,
    offsets: Vec<usize>,
}

/// Flat weight vector in [`MlpSpec`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<f64>,
}

impl MlpParams {
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Per-example forward/backward buffers.
pub struct Scratch {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::param(format!(
                "architecture needs at least input and output widths, all positive: {widths:?}"
            )));
        }
        if loss == LossKind::CrossEntropy && *widths.last().unwrap() < 2 {
            return Err(Error::param("cross-entropy needs at least two classes"));
        }
        let mut offsets = vec![0];
        for pair in widths.windows(2) {
            let last = *offsets.last().unwrap();
            offsets.push(last + (pair[0] + 1) * pair[1]);
        }
        Ok(MlpSpec {
            widths,
            activation,
            loss,
            offsets,
        })
    }

    /// Parses `10-64-64-2`.
    pub fn parse_arch(arch: &str, activation: Activation, loss: LossKind) -> Result<Self> {
        let widths = arch
            .split('-')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad layer width '{t}' in '{arch}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        MlpSpec::new(widths, activation, loss)
    }

    pub fn arch(&self) -> String {
        self.widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// Total weight count `W = Σ (fan_in + 1)·fan_out`.
    pub fn weight_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Index range of layer `l` (weights then biases) in the flat vector.
    pub fn layer_block(&self, l: usize) -> Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    /// Mask selecting the last weight block (the "top layer").
    pub fn top_layer_mask(&self) -> Vec<bool> {
        let top = self.layer_block(self.layer_count() - 1);
        (0..self.weight_count()).map(|i| top.contains(&i)).collect()
    }

    /// Uniform in `[-1/√fan_in, 1/√fan_in]`, biases included.
    pub fn init_params(&self, seed: u64) -> MlpParams {
        let mut rng = rng::stream(rng::child_seed(seed, 0x1417), 0);
        let mut weights = Vec::with_capacity(self.weight_count());
        for pair in self.widths.windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            for _ in 0..(pair[0] + 1) * pair[1] {
                weights.push(rng.random_range(-bound..=bound));
            }
        }
        MlpParams { weights }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            pre: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            act: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.weight_count() {
            return Err(Error::DimensionMismatch {
                expected: self.weight_count(),
                got: w.len(),
            });
        }
        Ok(())
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.input_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: data.input_dim(),
            });
        }
        if data.classes() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: data.classes(),
            });
        }
        Ok(())
    }

    fn run_forward(&self, w: &[f64], x: &[f64], s: &mut Scratch) {
        s.act[0].copy_from_slice(x);
        let last = self.layer_count();
        for l in 0..last {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let block = &w[self.offsets[l]..self.offsets[l + 1]];
            let (mat, bias) = block.split_at(n_in * n_out);
            let (head, tail) = s.act.split_at_mut(l + 1);
            let input = &head[l];
            let pre = &mut s.pre[l + 1];
            for o in 0..n_out {
                let row = &mat[o * n_in..(o + 1) * n_in];
                let mut z = bias[o];
                for (a, b) in row.iter().zip(input) {
                    z += a * b;
                }
                pre[o] = z;
            }
            let out = &mut tail[0];
            if l + 1 == last {
                out.copy_from_slice(pre);
            } else {
                for (a, &z) in out.iter_mut().zip(pre.iter()) {
                    *a = self.activation.apply(z);
                }
            }
        }
    }

    /// Class scores for one input.
    pub fn forward(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut s = self.scratch();
        self.run_forward(w, x, &mut s);
        s.act[self.layer_count()].clone()
    }

    fn loss_and_output_delta(
        &self,
        scores: &[f64],
        target: &[f64],
        label: usize,
        delta: &mut [f64],
    ) -> f64 {
        match self.loss {
            LossKind::Square => {
                let mut loss = 0.0;
                for ((d, &s), &y) in delta.iter_mut().zip(scores).zip(target) {
                    let r = s - y;
                    *d = r;
                    loss += r * r;
                }
                0.5 * loss
            }
            LossKind::CrossEntropy => {
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
                let log_z = max + sum.ln();
                for (c, (d, &s)) in delta.iter_mut().zip(scores).enumerate() {
                    *d = (s - log_z).exp() - if c == label { 1.0 } else { 0.0 };
                }
                log_z - scores[label]
            }
        }
    }

    fn example_loss_unchecked(
        &self,
        w: &[f64],
        data: &LabeledDataset,
        i: usize,
        s: &mut Scratch,
    ) -> f64 {
        self.run_forward(w, data.input(i), s);
        let last = self.layer_count();
        let (acts, deltas) = (&s.act, &mut s.delta);
        self.loss_and_output_delta(
            &acts[last],
            data.target(i),
            data.label(i),
            &mut deltas[last],
        )
    }

    /// Adds `scale · ∇V(w, z_i)` into `out` and returns `V(w, z_i)`.
    pub fn accumulate_example_gradient(
        &self,
        w: &[f64],
        data: &LabeledDataset,
        i: usize,
        scale: f64,
        s: &mut Scratch,
        out: &mut [f64],
    ) -> f64 {
        let loss = self.example_loss_unchecked(w, data, i, s);
        let last = self.layer_count();
        for l in (0..last).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.offsets[l];
            {
                let delta = &s.delta[l + 1];
                let input = &s.act[l];
                let (gmat, gbias) = out[off..self.offsets[l + 1]].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = scale * delta[o];
                    if d != 0.0 {
                        let row = &mut gmat[o * n_in..(o + 1) * n_in];
                        for (g, a) in row.iter_mut().zip(input) {
                            *g += d * a;
                        }
                    }
                    gbias[o] += d;
                }
            }
            if l > 0 {
                let mat = &w[off..off + n_in * n_out];
                let (lower, upper) = s.delta.split_at_mut(l + 1);
                let delta_out = &upper[0];
                let delta_in = &mut lower[l];
                delta_in.iter_mut().for_each(|d| *d = 0.0);
                for o in 0..n_out {
                    let d = delta_out[o];
                    if d != 0.0 {
                        for (di, m) in delta_in.iter_mut().zip(&mat[o * n_in..(o + 1) * n_in]) {
                            *di += d * m;
                        }
                    }
                }
                for (di, &z) in delta_in.iter_mut().zip(&s.pre[l]) {
                    *di *= self.activation.derivative(z);
                }
            }
        }
        loss
    }

    fn check_indices(&self, data: &LabeledDataset, indices: &[usize]) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: data.len(),
            });
        }
        Ok(())
    }

    /// Mean per-example loss over `indices`.
    pub fn loss_value(&self, w: &[f64], data: &LabeledDataset, indices: &[usize]) -> Result<f64> {
        self.check_weights(w)?;
        self.check_data(data)?;
        self.check_indices(data, indices)?;
        if indices.is_empty() {
            return Err(Error::param("loss over an empty index set"));
        }
        let mut s = self.scratch();
        let total: f64 = indices
            .iter()
            .map(|&i| self.example_loss_unchecked(w, data, i, &mut s))
            .sum();
        Ok(total / indices.len() as f64)
    }

    /// Fraction of `indices` whose arg-max score equals the label.
    pub fn accuracy(&self, w: &[f64], data: &LabeledDataset, indices: &[usize]) -> Result<f64> {
        Ok(self.loss_and_accuracy(w, data, indices)?.1)
    }

    /// Mean loss and accuracy in one pass.
    pub fn loss_and_accuracy(
        &self,
        w: &[f64],
        data: &LabeledDataset,
        indices: &[usize],
    ) -> Result<(f64, f64)> {
        self.check_weights(w)?;
        self.check_data(data)?;
        self.check_indices(data, indices)?;
        if indices.is_empty() {
            return Err(Error::param("evaluation over an empty index set"));
        }
        let mut s = self.scratch();
        let last = self.layer_count();
        let mut total = 0.0;
        let mut correct = 0usize;
        for &i in indices {
            total += self.example_loss_unchecked(w, data, i, &mut s);
            let scores = &s.act[last];
            let mut best = 0;
            for c in 1..scores.len() {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            if best == data.label(i) {
                correct += 1;
            }
        }
        let n = indices.len() as f64;
        Ok((total / n, correct as f64 / n))
    }

    /// `∇V(w, z_i)`.
    pub fn grad_example(&self, w: &[f64], data: &LabeledDataset, i: usize) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        self.check_data(data)?;
        self.check_indices(data, &[i])?;
        let mut out = vec![0.0; w.len()];
        let mut s = self.scratch();
        self.accumulate_example_gradient(w, data, i, 1.0, &mut s, &mut out);
        Ok(out)
    }

    /// Gradient of the mean loss over `indices` (repeats allowed). Per-example
    /// gradients are summed in index order, then divided by the count.
    pub fn grad_full(
        &self,
        w: &[f64],
        data: &LabeledDataset,
        indices: &[usize],
    ) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        self.check_data(data)?;
        self.check_indices(data, indices)?;
        if indices.is_empty() {
            return Err(Error::param("gradient over an empty index set"));
        }
        let mut out = vec![0.0; w.len()];
        self.mean_gradient_unchecked(w, data, indices, &mut out);
        Ok(out)
    }

    pub(crate) fn mean_gradient_unchecked(
        &self,
        w: &[f64],
        data: &LabeledDataset,
        indices: &[usize],
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let mut s = self.scratch();
        let mut per = vec![0.0; w.len()];
        for &i in indices {
            per.iter_mut().for_each(|g| *g = 0.0);
            self.accumulate_example_gradient(w, data, i, 1.0, &mut s, &mut per);
            for (g, p) in out.iter_mut().zip(&per) {
                *g += p;
            }
        }
        let inv = 1.0 / indices.len() as f64;
        out.iter_mut().for_each(|g| *g *= inv);
    }

    /// Checkpoint header, e.g. `# mlp arch=10-64-64-2 act=softplus loss=square`.
    pub fn header(&self) -> String {
        format!(
            "# mlp arch={} act={} loss={}",
            self.arch(),
            self.activation,
            self.loss
        )
    }

    pub fn from_header(line: &str) -> Result<Self> {
        let body = line
            .trim()
            .strip_prefix("# mlp")
            .ok_or_else(|| Error::Parse(format!("not a checkpoint header: '{line}'")))?;
        let (mut arch, mut act, mut loss) = (None, None, None);
        for tok in body.split_whitespace() {
            match tok.split_once('=') {
                Some(("arch", v)) => arch = Some(v),
                Some(("act", v)) => act = Some(v.parse::<Activation>()?),
                Some(("loss", v)) => loss = Some(v.parse::<LossKind>()?),
                _ => return Err(Error::Parse(format!("bad header token '{tok}'"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("checkpoint header lacks '{k}'"));
        MlpSpec::parse_arch(
            arch.ok_or_else(|| missing("arch"))?,
            act.ok_or_else(|| missing("act"))?,
            loss.ok_or_else(|| missing("loss"))?,
        )
    }

    /// Writes the checkpoint: header line, then one weight per line.
    pub fn save(&self, params: &MlpParams, path: &Path) -> Result<()> {
        self.check_weights(&params.weights)?;
        let mut f = BufWriter::new(fs::File::create(path)?);
        writeln!(f, "{}", self.header())?;
        for w in &params.weights {
            writeln!(f, "{w}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(MlpSpec, MlpParams)> {
        let text = fs::read_to_string(path)?;
        parse_checkpoint(&text)
    }
}

pub fn parse_checkpoint(text: &str) -> Result<(MlpSpec, MlpParams)> {
    let mut lines = text.lines();
    let spec = MlpSpec::from_header(lines.next().unwrap_or(""))?;
    let weights = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad weight '{l}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    spec.check_weights(&weights)?;
    Ok((spec, MlpParams { weights }))
}
