//! Deep RL trainers: dueling double DQN, synchronous advantage actor-critic
//! and clipped-surrogate PPO, with replay and rollout storage.
//!
//! Trainers are generic over [`Environment`], so the same code trains on
//! the highway task and on the small [`Corridor`] used as a sanity check.

mod a2c;
mod d3qn;
mod envs;
mod policy;
mod ppo;
mod replay;
mod rollout;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{LayerSpec, Network, NetworkSpec, NnError, OptimizerRule, Real, Tensor};
use crate::rng::{rng_for, stream, Rng};

pub use a2c::{a2c_loss, a2c_update, A2cCoefficients, A2cDiagnostics};
pub use d3qn::{d3qn_loss, d3qn_target, q_values, QBatch};
pub use envs::{Corridor, HighwayTrainEnv, CORRIDOR_STATES};
pub use policy::{greedy_action, random_baseline, CheckpointPolicy, RandomPolicy};
pub use ppo::{ppo_loss, ppo_surrogate, PpoCoefficients, PpoDiagnostics, PpoMinibatch};
pub use replay::{ReplayBuffer, Transition};
pub use rollout::{normalize, RolloutBatch};

/// Episodic task with a discrete action set.
pub trait Environment {
    type Obs: Clone;

    fn obs_shape(&self) -> Vec<usize>;
    fn action_count(&self) -> usize;
    /// Hidden layers placed below the output heads.
    fn trunk(&self) -> Vec<LayerSpec>;
    /// Writes the network input for `obs`; `out` has `obs_shape` elements.
    fn encode(&self, obs: &Self::Obs, out: &mut [Real]);
    fn reset(&mut self, seed: u64) -> Self::Obs;
    fn step(&mut self, action: usize) -> EnvStep<Self::Obs>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep<O> {
    pub obs: O,
    pub reward: f64,
    pub done: bool,
}

/// Stacks encoded observations into a batch tensor.
pub fn encode_batch<E: Environment>(env: &E, obs: &[&E::Obs]) -> Tensor {
    let shape = env.obs_shape();
    let per: usize = shape.iter().product();
    let mut data = vec![0.0; per * obs.len()];
    for (o, chunk) in obs.iter().zip(data.chunks_mut(per)) {
        env.encode(o, chunk);
    }
    let mut full = vec![obs.len()];
    full.extend(shape);
    Tensor::new(full, data).expect("batch shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    D3qn,
    A2c,
    Ppo,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::D3qn, Algo::A2c, Algo::Ppo];

    pub fn name(self) -> &'static str {
        match self {
            Algo::D3qn => "d3qn",
            Algo::A2c => "a2c",
            Algo::Ppo => "ppo",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Algo::D3qn => 1e-4,
            Algo::A2c => 7e-4,
            Algo::Ppo => 2.5e-4,
        }
    }

    pub fn network_spec<E: Environment>(self, env: &E) -> NetworkSpec {
        match self {
            Algo::D3qn => NetworkSpec::dueling(env.obs_shape(), env.trunk(), env.action_count()),
            Algo::A2c | Algo::Ppo => NetworkSpec::actor_critic(env.obs_shape(), env.trunk(), env.action_count()),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm {s:?} (expected d3qn, a2c or ppo)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct D3qnConfig {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `total_steps` over which ε decays linearly.
    pub epsilon_fraction: f64,
    /// Gradient updates between target-network copies.
    pub target_sync: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_starts: u64,
    /// Environment steps per gradient update.
    pub train_every: u64,
}

impl Default for D3qnConfig {
    fn default() -> Self {
        Self {
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.3,
            target_sync: 1000,
            batch_size: 32,
            buffer_capacity: 50_000,
            learning_starts: 1000,
            train_every: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A2cConfig {
    pub workers: usize,
    pub n_steps: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            n_steps: 5,
            entropy_coef: 0.01,
            value_coef: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub workers: usize,
    pub n_steps: usize,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Generalized advantage estimation instead of n-step returns.
    pub gae: bool,
    pub gae_lambda: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            n_steps: 128,
            clip: 0.2,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            gae: false,
            gae_lambda: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub seed: u64,
    pub gamma: f64,
    /// Adam step size; the algorithm's default when unset.
    pub learning_rate: Option<f64>,
    pub max_grad_norm: f64,
    /// Trailing episode count of the smoothed learning curve.
    pub smoothing_window: usize,
    /// Environment steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub d3qn: D3qnConfig,
    pub a2c: A2cConfig,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            seed: 0,
            gamma: 0.99,
            learning_rate: None,
            max_grad_norm: 0.5,
            smoothing_window: 50,
            checkpoint_every: 25_000,
            d3qn: D3qnConfig::default(),
            a2c: A2cConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1]".into());
        }
        if self.learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err("learning_rate must be positive".into());
        }
        if !(self.max_grad_norm > 0.0) || self.smoothing_window == 0 {
            return Err("max_grad_norm and smoothing_window must be positive".into());
        }
        let d = &self.d3qn;
        if !(0.0..=1.0).contains(&d.epsilon_start)
            || !(0.0..=1.0).contains(&d.epsilon_end)
            || !(0.0..=1.0).contains(&d.epsilon_fraction)
        {
            return Err("epsilon schedule values must lie in [0, 1]".into());
        }
        if d.batch_size == 0 || d.buffer_capacity < d.batch_size || d.target_sync == 0 || d.train_every == 0 {
            return Err("d3qn batch, buffer, target_sync and train_every must be positive".into());
        }
        if self.a2c.workers == 0 || self.a2c.n_steps == 0 {
            return Err("a2c workers and n_steps must be positive".into());
        }
        let p = &self.ppo;
        if !(p.clip > 0.0) {
            return Err("ppo clip must be positive".into());
        }
        if p.workers == 0 || p.n_steps == 0 || p.epochs == 0 || p.minibatch == 0 {
            return Err("ppo workers, n_steps, epochs and minibatch must be positive".into());
        }
        if !(0.0..=1.0).contains(&p.gae_lambda) {
            return Err("gae_lambda must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn optimizer(&self, algo: Algo) -> OptimizerRule {
        OptimizerRule::adam(self.learning_rate.unwrap_or(algo.default_learning_rate()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Environment steps taken when the episode ended.
    pub step: u64,
    pub episode_return: f64,
    pub smoothed: f64,
}

/// Learning-curve series with a trailing-mean smoother.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub window: usize,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn new(window: usize) -> Self {
        Self { window, points: vec![] }
    }

    pub fn push(&mut self, step: u64, episode_return: f64) {
        let start = self.points.len().saturating_sub(self.window - 1);
        let tail = &self.points[start..];
        let smoothed = (tail.iter().map(|p| p.episode_return).sum::<f64>() + episode_return) / (tail.len() + 1) as f64;
        self.points.push(CurvePoint {
            step,
            episode_return,
            smoothed,
        });
    }

    /// Plain-text table: one `step raw smoothed` row per episode.
    pub fn to_table(&self) -> String {
        let mut s = String::from("step\treturn\tsmoothed\n");
        for p in &self.points {
            s.push_str(&format!("{}\t{}\t{}\n", p.step, p.episode_return, p.smoothed));
        }
        s
    }
}

/// State captured when training hits a non-finite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub algo: Algo,
    pub step: u64,
    pub update: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub param_norm: f64,
    pub what: String,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite {} at step {} (update {})", .0.what, .0.step, .0.update)]
    NonFinite(Box<Diagnostic>),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub algo: Algo,
    pub network: Network,
    pub curve: Curve,
    /// `(environment step, network)` snapshots; the last one is the final network.
    pub checkpoints: Vec<(u64, Network)>,
    pub updates: u64,
}

/// Seeded generators shared by all trainers.
pub(crate) struct Streams {
    pub init: Rng,
    pub explore: Rng,
    pub episodes: Rng,
    pub replay: Rng,
    pub minibatch: Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            init: rng_for(seed, stream::INIT),
            explore: rng_for(seed, stream::EXPLORATION),
            episodes: rng_for(seed, stream::EPISODES),
            replay: rng_for(seed, stream::REPLAY),
            minibatch: rng_for(seed, stream::MINIBATCH),
        }
    }

    pub fn episode_seed(&mut self) -> u64 {
        self.episodes.random()
    }
}

/// Bookkeeping common to every trainer loop.
pub(crate) struct Progress {
    pub curve: Curve,
    pub checkpoints: Vec<(u64, Network)>,
    pub checkpoint_every: u64,
}

impl Progress {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            curve: Curve::new(cfg.smoothing_window),
            checkpoints: vec![],
            checkpoint_every: cfg.checkpoint_every,
        }
    }

    /// Records a snapshot if `step` crossed a checkpoint boundary since `prev`.
    pub fn maybe_checkpoint(&mut self, prev: u64, step: u64, net: &Network) {
        if self.checkpoint_every > 0 && step / self.checkpoint_every > prev / self.checkpoint_every {
            self.checkpoints.push((step, net.clone()));
        }
    }

    fn finish(mut self, algo: Algo, step: u64, network: Network, updates: u64) -> TrainOutcome {
        if self.checkpoints.last().map(|(s, _)| *s) != Some(step) {
            self.checkpoints.push((step, network.clone()));
        }
        TrainOutcome {
            algo,
            network,
            curve: self.curve,
            checkpoints: self.checkpoints,
            updates,
        }
    }
}

pub(crate) fn finite_or_abort(
    algo: Algo,
    step: u64,
    update: u64,
    loss: f64,
    grads: &crate::nn::Gradients,
    net: &Network,
) -> Result<(), TrainError> {
    let grad_norm = grads.norm();
    if loss.is_finite() && grad_norm.is_finite() && net.params.is_finite() {
        return Ok(());
    }
    let what = if !loss.is_finite() { "loss" } else if !grad_norm.is_finite() { "gradient" } else { "parameters" };
    Err(TrainError::NonFinite(Box::new(Diagnostic {
        algo,
        step,
        update,
        loss,
        grad_norm,
        param_norm: net.params.norm(),
        what: what.into(),
    })))
}

/// Maps a network error raised mid-training, keeping non-finite values
/// as a diagnostic.
pub(crate) fn nn_failure(algo: Algo, step: u64, update: u64, e: NnError, net: &Network) -> TrainError {
    match e {
        NnError::NonFinite(what) => TrainError::NonFinite(Box::new(Diagnostic {
            algo,
            step,
            update,
            loss: f64::NAN,
            grad_norm: f64::NAN,
            param_norm: net.params.norm(),
            what,
        })),
        other => TrainError::Nn(other),
    }
}

/// Trains `algo` on environments built by `factory(worker_index)`.
pub fn train<E, F>(algo: Algo, factory: F, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError>
where
    E: Environment,
    F: FnMut(usize) -> E,
{
    cfg.validate().map_err(TrainError::Config)?;
    let progress = Progress::new(cfg);
    match algo {
        Algo::D3qn => d3qn::run(factory, cfg, progress),
        Algo::A2c => a2c::run(factory, cfg, progress),
        Algo::Ppo => ppo::run(factory, cfg, progress),
    }
}

/// Row-wise `log softmax` of a logits tensor.
pub(crate) fn log_softmax(logits: &Tensor) -> Vec<Vec<f64>> {
    logits
        .data()
        .chunks(logits.row_len())
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter().map(|v| v - lse).collect()
        })
        .collect()
}

/// Draws an index from a probability row.
pub(crate) fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
