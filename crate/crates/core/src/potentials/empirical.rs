//! The training loss of a network, viewed as a potential over its weights.

use std::sync::Arc;

use super::{BoundaryMode, Domain, Potential, StochasticPotential};
use crate::error::{Error, Result};
use crate::model::{LabeledDataset, MlpSpec};

/// Half-width of the weight torus. Large enough that trained weights never
/// reach the seam, so the wrap is the identity in practice.
pub const WEIGHT_EXTENT: f64 = 1.0e3;

/// `U(w) = (1/n) Σ_i V(w, z_i)` over the training split of a dataset.
/// Example index `i` refers to the `i`-th training example.
#[derive(Clone, Debug)]
pub struct EmpiricalPotential {
    spec: MlpSpec,
    data: Arc<LabeledDataset>,
    examples: Vec<usize>,
    domain: Domain,
}

/// Wraps the mean training loss of `spec` on `data` as a potential.
pub fn from_empirical_loss(spec: MlpSpec, data: Arc<LabeledDataset>) -> Result<EmpiricalPotential> {
    let examples = data.train().to_vec();
    EmpiricalPotential::over(spec, data, examples)
}

impl EmpiricalPotential {
    /// Restricts the empirical loss to an explicit list of dataset indices.
    pub fn over(spec: MlpSpec, data: Arc<LabeledDataset>, examples: Vec<usize>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::param("empirical loss needs a non-empty dataset"));
        }
        if data.input_dim() != spec.input_dim() || data.classes() != spec.output_dim() {
            return Err(Error::param(format!(
                "dataset shape ({} inputs, {} classes) does not fit architecture {}",
                data.input_dim(),
                data.classes(),
                spec.arch()
            )));
        }
        if let Some(&bad) = examples.iter().find(|&&i| i >= data.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: data.len(),
            });
        }
        let domain = Domain::cube(
            spec.weight_count(),
            -WEIGHT_EXTENT,
            WEIGHT_EXTENT,
            BoundaryMode::Wrap,
        )?;
        Ok(EmpiricalPotential {
            spec,
            data,
            examples,
            domain,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn examples(&self) -> &[usize] {
        &self.examples
    }
}

impl Potential for EmpiricalPotential {
    fn id(&self) -> String {
        format!(
            "empirical:arch={},act={},loss={},labels={},n={}",
            self.spec.arch(),
            self.spec.activation(),
            self.spec.loss(),
            self.data.label_mode(),
            self.examples.len()
        )
    }

    fn dimension(&self) -> usize {
        self.spec.weight_count()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.spec
            .loss_value(w, &self.data, &self.examples)
            .unwrap_or(f64::NAN)
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        self.spec
            .mean_gradient_unchecked(w, &self.data, &self.examples, out);
    }

    fn as_stochastic(&self) -> Option<&dyn StochasticPotential> {
        Some(self)
    }
}

impl StochasticPotential for EmpiricalPotential {
    fn example_count(&self) -> usize {
        self.examples.len()
    }

    fn example_gradient(&self, w: &[f64], example: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let mut s = self.spec.scratch();
        self.spec.accumulate_example_gradient(
            w,
            &self.data,
            self.examples[example],
            1.0,
            &mut s,
            out,
        );
    }

    fn batch_gradient(&self, w: &[f64], batch: &[usize], out: &mut [f64]) {
        let idx: Vec<usize> = batch.iter().map(|&b| self.examples[b]).collect();
        self.spec.mean_gradient_unchecked(w, &self.data, &idx, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_blobs, Activation, LossKind};
    use crate::potentials::{eval, fd_grad, grad};

    fn setup() -> (MlpSpec, Arc<LabeledDataset>) {
        let spec = MlpSpec::new(vec![3, 6, 2], Activation::Softplus, LossKind::Square).unwrap();
        let data = Arc::new(make_blobs(10, 3, 2, 0.5, 4).unwrap());
        (spec, data)
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (spec, data) = setup();
        assert!(EmpiricalPotential::over(spec, data, vec![]).is_err());
    }

    #[test]
    fn duplicated_dataset_has_same_value() {
        let (spec, data) = setup();
        let w = spec.init_params(2).weights;
        let u = from_empirical_loss(spec.clone(), data.clone()).unwrap();
        let doubled = from_empirical_loss(spec, Arc::new(data.repeated(2))).unwrap();
        let a = eval(&u, &w).unwrap();
        let b = eval(&doubled, &w).unwrap();
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }

    #[test]
    fn zero_loss_example_has_zero_value() {
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Softplus, LossKind::Square).unwrap();
        let w0 = spec.init_params(5).weights;
        let x = vec![0.3, -0.7];
        let scores = spec.forward(&w0, &x);
        let data = LabeledDataset::new(x, 2, vec![0], 2)
            .unwrap()
            .with_targets(scores)
            .unwrap();
        let u = from_empirical_loss(spec, Arc::new(data)).unwrap();
        assert_eq!(eval(&u, &w0).unwrap(), 0.0);
        assert!(grad(&u, &w0).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (spec, data) = setup();
        let u = from_empirical_loss(spec.clone(), data).unwrap();
        let w = spec.init_params(11).weights;
        let g = grad(&u, &w).unwrap();
        let fd = fd_grad(&u, &w, 1e-5);
        let num: f64 = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(num / (1.0 + den) < 1e-7, "{}", num / (1.0 + den));
    }

    #[test]
    fn full_batch_equals_gradient_bitwise() {
        let (spec, data) = setup();
        let u = from_empirical_loss(spec.clone(), data).unwrap();
        let w = spec.init_params(3).weights;
        let mut full = vec![0.0; w.len()];
        let mut batch = vec![0.0; w.len()];
        u.gradient(&w, &mut full);
        let all: Vec<usize> = (0..u.example_count()).collect();
        u.batch_gradient(&w, &all, &mut batch);
        assert_eq!(full, batch);
    }
}
