//! Gradient dynamics: GD, SGD, and their Langevin variants GDL and SGDL.
//!
//! Every rule has the form
//!
//! ```text
//! w ← Π( w − γ_t · g_t + σ_t · ξ_t )
//! ```
//!
//! where `g_t` is the full gradient (GD, GDL) or the mean gradient over a
//! minibatch drawn uniformly with replacement (SGD, SGDL), `ξ_t` is a fresh
//! standard Gaussian vector (Langevin rules only) and `Π` projects onto the
//! domain (the torus wrap by default).
//!
//! Random numbers come from the state's own stream. Rules consume them in a
//! fixed order (minibatch indices, then Gaussian noise) and noiseless steps
//! consume none, so `sgdl(σ=0)` reproduces `sgd` and `gdl(σ=0)` reproduces
//! `gd` bit for bit.

mod schedule;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::potentials::{BoundaryMode, Domain, Point, Potential, StochasticPotential};
use crate::rng::Stream;

pub use schedule::{Schedule, ScheduleKind};
pub use trajectory::{run_ensemble, run_trajectory, Initial, Origin, Provenance, SampleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Gd,
    Sgd,
    Gdl,
    Sgdl,
}

impl Rule {
    pub fn is_langevin(self) -> bool {
        matches!(self, Rule::Gdl | Rule::Sgdl)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Rule::Sgd | Rule::Sgdl)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Gd => "gd",
            Rule::Sgd => "sgd",
            Rule::Gdl => "gdl",
            Rule::Sgdl => "sgdl",
        })
    }
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Rule::Gd),
            "sgd" => Ok(Rule::Sgd),
            "gdl" => Ok(Rule::Gdl),
            "sgdl" => Ok(Rule::Sgdl),
            _ => Err(Error::Parse(format!(
                "unknown rule '{s}' (gd, sgd, gdl, sgdl)"
            ))),
        }
    }
}

/// Per-step noise amplitude of the Langevin rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseMode {
    /// `σ_t` follows a decreasing schedule.
    Anneal(Schedule),
    /// `σ_t = sqrt(2 γ_t T)`: an Euler–Maruyama discretization whose
    /// stationary density is proportional to `exp(−U/T)`.
    Stationary { temperature: f64 },
}

impl NoiseMode {
    pub fn sigma(&self, t: u64, gamma: f64) -> f64 {
        match *self {
            NoiseMode::Anneal(s) => s.value(t),
            NoiseMode::Stationary { temperature } => (2.0 * gamma * temperature).sqrt(),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMode::Anneal(s) => write!(f, "anneal:{s}"),
            NoiseMode::Stationary { temperature } => write!(f, "stationary:T={temperature}"),
        }
    }
}

/// `anneal:<schedule>` or `stationary:T=<real>`.
impl FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("anneal:") {
            return Ok(NoiseMode::Anneal(rest.parse()?));
        }
        if let Some(rest) = s.strip_prefix("stationary:") {
            let t = rest
                .strip_prefix("T=")
                .ok_or_else(|| Error::Parse(format!("expected stationary:T=<real>, got '{s}'")))?;
            let temperature: f64 = t
                .parse()
                .map_err(|_| Error::Parse(format!("bad temperature '{t}'")))?;
            if !(temperature.is_finite() && temperature > 0.0) {
                return Err(Error::param("temperature must be positive"));
            }
            return Ok(NoiseMode::Stationary { temperature });
        }
        Err(Error::Parse(format!("unknown noise mode '{s}'")))
    }
}

/// How the minibatch of a stochastic rule is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Batch {
    /// `size` indices drawn uniformly with replacement.
    Replacement(usize),
    /// Every example exactly once, no randomness.
    Exhaustive,
}

impl fmt::Display for Batch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Batch::Replacement(b) => write!(f, "{b}"),
            Batch::Exhaustive => f.write_str("all"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    pub rule: Rule,
    pub step: Schedule,
    /// Required by the Langevin rules, forbidden otherwise.
    pub noise: Option<NoiseMode>,
    /// Used by the stochastic rules only.
    pub batch: Batch,
    pub total_steps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_steps {
            return Err(Error::param(format!(
                "burn_in ({}) must be smaller than total_steps ({})",
                self.burn_in, self.total_steps
            )));
        }
        if self.thinning == 0 {
            return Err(Error::param("thinning must be at least 1"));
        }
        match (self.rule.is_langevin(), self.noise.is_some()) {
            (true, false) => return Err(Error::param(format!("{} needs a noise mode", self.rule))),
            (false, true) => {
                return Err(Error::param(format!("{} takes no noise mode", self.rule)))
            }
            _ => {}
        }
        if self.rule.is_stochastic() && self.batch == Batch::Replacement(0) {
            return Err(Error::param("batch size must be positive"));
        }
        Ok(())
    }

    /// Number of retained samples: `floor((total_steps − burn_in) / thinning)`.
    pub fn sample_count(&self) -> u64 {
        (self.total_steps - self.burn_in) / self.thinning
    }
}

impl fmt::Display for DynamicsConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule={} gamma={} noise={} batch={} steps={} burn_in={} thin={} seed={}",
            self.rule,
            self.step,
            self.noise.map_or("none".to_string(), |n| n.to_string()),
            self.batch,
            self.total_steps,
            self.burn_in,
            self.thinning,
            self.seed
        )
    }
}

/// Current iterate, step counter and random stream of one trajectory.
/// A state must only be advanced from one thread at a time.
#[derive(Clone, Debug)]
pub struct DynamicsState {
    point: Vec<f64>,
    t: u64,
    rng: Stream,
    grad: Vec<f64>,
    batch: Vec<usize>,
}

impl DynamicsState {
    pub fn new(point: Point, rng: Stream) -> Self {
        let dim = point.dim();
        DynamicsState {
            point: point.into_vec(),
            t: 0,
            rng,
            grad: vec![0.0; dim],
            batch: Vec::new(),
        }
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn rng_mut(&mut self) -> &mut Stream {
        &mut self.rng
    }

    fn check_dim(&self, u: &dyn Potential) -> Result<()> {
        if self.point.len() != u.dimension() {
            return Err(Error::DimensionMismatch {
                expected: u.dimension(),
                got: self.point.len(),
            });
        }
        Ok(())
    }

    fn draw_batch(&mut self, n: usize, batch: Batch) -> Result<()> {
        self.batch.clear();
        match batch {
            Batch::Replacement(0) => return Err(Error::param("batch size must be positive")),
            Batch::Replacement(b) => {
                for _ in 0..b {
                    let i = self.rng.random_range(0..n);
                    self.batch.push(i);
                }
            }
            Batch::Exhaustive => self.batch.extend(0..n),
        }
        Ok(())
    }

    /// `point ← Π(point − γ·grad + σ·ξ)` using the gradient already in
    /// `self.grad`.
    fn advance(&mut self, domain: &Domain, gamma: f64, sigma: f64) -> Result<()> {
        if let Some(i) = self.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step: self.t,
                reason: format!("non-finite gradient component {i}"),
                point: self.point.clone(),
            });
        }
        for (x, g) in self.point.iter_mut().zip(&self.grad) {
            *x -= gamma * g;
        }
        if sigma > 0.0 {
            for x in self.point.iter_mut() {
                let z: f64 = self.rng.sample(StandardNormal);
                *x += sigma * z;
            }
        }
        if let Some(i) = self.point.iter().position(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                step: self.t,
                reason: format!("non-finite coordinate {i}"),
                point: self.point.clone(),
            });
        }
        if domain.mode() == BoundaryMode::Clamp {
            // Clipping would hide an escape; an update that overshoots the
            // box by more than its own width is treated as divergence.
            for (i, &x) in self.point.iter().enumerate() {
                let w = domain.width(i);
                if x < domain.lower()[i] - w || x > domain.upper()[i] + w {
                    return Err(Error::Diverged {
                        step: self.t,
                        reason: format!("coordinate {i} left the clamp box"),
                        point: self.point.clone(),
                    });
                }
            }
        }
        domain.project_in_place(&mut self.point);
        self.t += 1;
        Ok(())
    }
}

fn check_rates(gamma: f64, sigma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::param(format!(
            "step size must be non-negative, got {gamma}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::param(format!(
            "noise amplitude must be non-negative, got {sigma}"
        )));
    }
    Ok(())
}

/// Full-gradient step.
pub fn step_gd(u: &dyn Potential, state: &mut DynamicsState, gamma: f64) -> Result<()> {
    step_gdl(u, state, gamma, 0.0)
}

/// Full-gradient Langevin step with noise amplitude `sigma`.
pub fn step_gdl(
    u: &dyn Potential,
    state: &mut DynamicsState,
    gamma: f64,
    sigma: f64,
) -> Result<()> {
    check_rates(gamma, sigma)?;
    state.check_dim(u)?;
    u.gradient(&state.point, &mut state.grad);
    state.advance(u.domain(), gamma, sigma)
}

/// Minibatch step.
pub fn step_sgd(
    u: &dyn StochasticPotential,
    state: &mut DynamicsState,
    gamma: f64,
    batch: Batch,
) -> Result<()> {
    step_sgdl(u, state, gamma, 0.0, batch)
}

/// Minibatch Langevin step.
pub fn step_sgdl(
    u: &dyn StochasticPotential,
    state: &mut DynamicsState,
    gamma: f64,
    sigma: f64,
    batch: Batch,
) -> Result<()> {
    check_rates(gamma, sigma)?;
    state.check_dim(u)?;
    state.draw_batch(u.example_count(), batch)?;
    let indices = std::mem::take(&mut state.batch);
    u.batch_gradient(&state.point, &indices, &mut state.grad);
    state.batch = indices;
    state.advance(u.domain(), gamma, sigma)
}

/// Applies `config.rule` for one step at the state's current `t`.
pub fn step(u: &dyn Potential, state: &mut DynamicsState, config: &DynamicsConfig) -> Result<()> {
    let t = state.t;
    let gamma = config.step.value(t);
    let sigma = config.noise.map_or(0.0, |n| n.sigma(t, gamma));
    match config.rule {
        Rule::Gd => step_gd(u, state, gamma),
        Rule::Gdl => step_gdl(u, state, gamma, sigma),
        Rule::Sgd | Rule::Sgdl => {
            let su = u.as_stochastic().ok_or_else(|| {
                Error::param(format!(
                    "{} needs an empirical-loss potential, got {}",
                    config.rule,
                    u.id()
                ))
            })?;
            step_sgdl(su, state, gamma, sigma, config.batch)
        }
    }
}

/// `ξ = ∇V(f, batch) − ∇U(f)`: minibatch gradient minus full gradient.
pub fn noise_residual(u: &dyn StochasticPotential, f: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
    if f.len() != u.dimension() {
        return Err(Error::DimensionMismatch {
            expected: u.dimension(),
            got: f.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::param("noise residual needs a non-empty batch"));
    }
    let n = u.example_count();
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let mut mini = vec![0.0; f.len()];
    let mut full = vec![0.0; f.len()];
    u.batch_gradient(f, batch, &mut mini);
    u.gradient(f, &mut full);
    Ok(mini.iter().zip(&full).map(|(a, b)| a - b).collect())
}

/// Projection onto `domain`.
pub fn project(domain: &Domain, w: &Point) -> Point {
    domain.project(w)
}
