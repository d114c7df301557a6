use std::sync::Arc;

use super::{LabeledDataset, MlpParams, MlpSpec};
use crate::dynamics::{step_sgdl, Batch, DynamicsState, NoiseMode, Rule, Schedule};
use crate::error::{Error, Result};
use crate::potentials::{from_empirical_loss, Point};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// `Sgd` or `Sgdl`.
    pub rule: Rule,
    pub step: Schedule,
    /// Required for `Sgdl`.
    pub noise: Option<NoiseMode>,
    pub batch_size: usize,
    pub max_steps: u64,
    /// Stop at the first evaluation with training loss below this.
    pub target_loss: f64,
    /// Evaluation period in steps; `0` means one epoch (`⌈n / batch⌉`).
    pub eval_every: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn sgd(step: f64, batch_size: usize, max_steps: u64, seed: u64) -> Self {
        TrainConfig {
            rule: Rule::Sgd,
            step: Schedule::constant(step),
            noise: None,
            batch_size,
            max_steps,
            target_loss: 1e-3,
            eval_every: 0,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub held_out_loss: Option<f64>,
    pub held_out_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub log: Vec<TrainRecord>,
    /// `false` when the budget ran out; `params` is then the best iterate seen.
    pub interpolated: bool,
    pub steps: u64,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &TrainRecord {
        self.log
            .last()
            .expect("log always has the initial evaluation")
    }
}

fn evaluate(spec: &MlpSpec, w: &[f64], data: &LabeledDataset, step: u64) -> Result<TrainRecord> {
    let (train_loss, train_accuracy) = spec.loss_and_accuracy(w, data, data.train())?;
    let (held_out_loss, held_out_accuracy) = if data.held_out().is_empty() {
        (None, None)
    } else {
        let (l, a) = spec.loss_and_accuracy(w, data, data.held_out())?;
        (Some(l), Some(a))
    };
    Ok(TrainRecord {
        step,
        train_loss,
        train_accuracy,
        held_out_loss,
        held_out_accuracy,
    })
}

/// Runs SGD or SGDL on the training split until the training loss drops
/// below `config.target_loss` or the step budget is spent.
///
/// Initialization and minibatch/noise draws come from independent streams
/// derived from `config.seed`, so the result is bit-reproducible.
pub fn train_to_interpolation(
    spec: &MlpSpec,
    data: Arc<LabeledDataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if !config.rule.is_stochastic() {
        return Err(Error::param("training uses sgd or sgdl"));
    }
    if config.rule.is_langevin() != config.noise.is_some() {
        return Err(Error::param("sgdl needs a noise mode and sgd forbids one"));
    }
    if config.batch_size == 0 {
        return Err(Error::param("batch size must be positive"));
    }
    let u = from_empirical_loss(spec.clone(), data.clone())?;
    let n = data.train().len() as u64;
    let eval_every = if config.eval_every == 0 {
        n.div_ceil(config.batch_size as u64)
    } else {
        config.eval_every
    };
    let init = spec.init_params(config.seed);
    let stream = rng::stream(rng::child_seed(config.seed, 0xd1), 0);
    let mut state = DynamicsState::new(Point::new(init.weights)?, stream);

    let mut log = vec![evaluate(spec, state.point(), &data, 0)?];
    let mut best = (log[0].train_loss, state.point().to_vec());
    let batch = Batch::Replacement(config.batch_size);
    let mut t = 0u64;
    while log.last().unwrap().train_loss >= config.target_loss && t < config.max_steps {
        let gamma = config.step.value(t);
        let sigma = config.noise.map_or(0.0, |nm| nm.sigma(t, gamma));
        step_sgdl(&u, &mut state, gamma, sigma, batch)?;
        t += 1;
        if t.is_multiple_of(eval_every) || t == config.max_steps {
            let rec = evaluate(spec, state.point(), &data, t)?;
            if !(rec.train_loss <= 1e6) {
                return Err(Error::Diverged {
                    step: t,
                    reason: format!("training loss {} exceeds 1e6", rec.train_loss),
                    point: state.point().to_vec(),
                });
            }
            if rec.train_loss < best.0 {
                best = (rec.train_loss, state.point().to_vec());
            }
            log.push(rec);
        }
    }
    let interpolated = log.last().unwrap().train_loss < config.target_loss;
    let weights = if interpolated {
        state.point().to_vec()
    } else {
        best.1
    };
    Ok(TrainOutcome {
        params: MlpParams { weights },
        log,
        interpolated,
        steps: t,
    })
}
