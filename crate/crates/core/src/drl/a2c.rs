use crate::nn::{apply_update, apply_update_in_place, Gradients, Network, NnError, OptimizerRule, OptimizerState, Params, Tensor};

use super::{
    encode_batch, finite_or_abort, log_softmax, nn_failure, sample_categorical, Algo, EnvStep, Environment, Progress,
    RolloutBatch, Streams, TrainConfig, TrainError, TrainOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cCoefficients {
    pub entropy: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2cDiagnostics {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// Policy-gradient loss with one-step advantages
/// `δ = r + γ V(s') - V(s)` taken from the stored rollout values,
/// plus `value · ½ (V - (r + γ V(s')))²` and `-entropy · H(π)`,
/// all averaged over the batch. `states` holds the encoded rollout states.
pub fn a2c_loss<O>(
    net: &Network,
    states: &Tensor,
    batch: &RolloutBatch<O>,
    gamma: f64,
    coeffs: A2cCoefficients,
) -> Result<(A2cDiagnostics, Gradients), NnError> {
    let targets = batch.td_targets(gamma);
    let advantages: Vec<f64> = targets.iter().zip(&batch.values).map(|(y, v)| y - v).collect();
    let fwd = net.forward(states)?;
    let logp = log_softmax(fwd.logits("policy"));
    let values = fwd.output("value").data();
    let n = batch.len();
    let k = logp[0].len();
    let mut dz = Tensor::zeros(&[n, k]);
    let mut dv = Tensor::zeros(&[n, 1]);
    let (mut pl, mut vl, mut ent) = (0.0, 0.0, 0.0);
    let inv = 1.0 / n as f64;
    for i in 0..n {
        let a = batch.actions[i];
        let lp = &logp[i];
        let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        pl -= advantages[i] * lp[a];
        ent += h;
        let err = values[i] - targets[i];
        vl += 0.5 * err * err;
        dv.data_mut()[i] = coeffs.value * err * inv;
        for j in 0..k {
            let p = lp[j].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            dz.data_mut()[i * k + j] = inv * (advantages[i] * (p - onehot) + coeffs.entropy * p * (lp[j] + h));
        }
    }
    let grads = net.backward_logits(&fwd, &[("policy", &dz), ("value", &dv)])?;
    let (pl, vl, ent) = (pl * inv, vl * inv, ent * inv);
    Ok((
        A2cDiagnostics {
            loss: pl + coeffs.value * vl - coeffs.entropy * ent,
            policy_loss: pl,
            value_loss: vl,
            entropy: ent,
            grad_norm: grads.norm(),
        },
        grads,
    ))
}

/// One synchronous update over the whole rollout. Pure: returns the new
/// parameters and optimizer state.
#[allow(clippy::too_many_arguments)]
pub fn a2c_update<O>(
    net: &Network,
    states: &Tensor,
    batch: &RolloutBatch<O>,
    gamma: f64,
    coeffs: A2cCoefficients,
    rule: &OptimizerRule,
    state: &OptimizerState,
    max_grad_norm: Option<f64>,
) -> Result<(Params, OptimizerState, A2cDiagnostics), NnError> {
    let (diag, mut grads) = a2c_loss(net, states, batch, gamma, coeffs)?;
    if let Some(m) = max_grad_norm {
        grads.clip_norm(m);
    }
    let (params, state) = apply_update(&net.params, &grads, state, rule);
    Ok((params, state, diag))
}

/// Parallel environments stepped in lockstep.
pub(super) struct Workers<E: Environment> {
    pub envs: Vec<E>,
    pub obs: Vec<E::Obs>,
    returns: Vec<f64>,
}

impl<E: Environment> Workers<E> {
    pub fn new<F: FnMut(usize) -> E>(factory: &mut F, count: usize, streams: &mut Streams) -> Self {
        let mut envs: Vec<E> = (0..count).map(&mut *factory).collect();
        let obs = envs.iter_mut().map(|e| e.reset(streams.episode_seed())).collect();
        Self {
            envs,
            obs,
            returns: vec![0.0; count],
        }
    }

    /// Samples actions from the current policy for `n` steps per worker.
    pub fn collect(
        &mut self,
        net: &Network,
        n: usize,
        streams: &mut Streams,
        step: &mut u64,
        progress: &mut Progress,
    ) -> Result<RolloutBatch<E::Obs>, NnError> {
        let k = self.envs.len();
        let mut cols: Vec<Vec<(E::Obs, usize, f64, f64, f64, bool)>> = (0..k).map(|_| Vec::with_capacity(n)).collect();
        for _ in 0..n {
            let refs: Vec<&E::Obs> = self.obs.iter().collect();
            let fwd = net.forward(&encode_batch(&self.envs[0], &refs))?;
            let probs = fwd.output("policy");
            let values = fwd.output("value").data().to_vec();
            for w in 0..k {
                let p = probs.row(w);
                let a = sample_categorical(p, &mut streams.explore);
                let EnvStep { obs, reward, done } = self.envs[w].step(a);
                *step += 1;
                self.returns[w] += reward;
                let next = if done {
                    progress.curve.push(*step, self.returns[w]);
                    self.returns[w] = 0.0;
                    self.envs[w].reset(streams.episode_seed())
                } else {
                    obs
                };
                let state = std::mem::replace(&mut self.obs[w], next);
                cols[w].push((state, a, reward, values[w], p[a].ln(), done));
            }
        }
        let refs: Vec<&E::Obs> = self.obs.iter().collect();
        let bootstrap = net.forward(&encode_batch(&self.envs[0], &refs))?.output("value").data().to_vec();
        let mut batch = RolloutBatch {
            workers: k,
            n_steps: n,
            states: Vec::with_capacity(k * n),
            actions: vec![],
            rewards: vec![],
            values: vec![],
            log_probs: vec![],
            dones: vec![],
            bootstrap,
        };
        for (s, a, r, v, lp, d) in cols.into_iter().flatten() {
            batch.states.push(s);
            batch.actions.push(a);
            batch.rewards.push(r);
            batch.values.push(v);
            batch.log_probs.push(lp);
            batch.dones.push(d);
        }
        Ok(batch)
    }

    /// Rollout length that stops within `workers` steps of `total`.
    pub fn segment(&self, n_steps: usize, step: u64, total: u64) -> usize {
        let k = self.envs.len() as u64;
        (n_steps as u64).min((total - step).div_ceil(k)) as usize
    }
}

pub(super) fn run<E, F>(mut factory: F, cfg: &TrainConfig, mut progress: Progress) -> Result<TrainOutcome, TrainError>
where
    E: Environment,
    F: FnMut(usize) -> E,
{
    let algo = Algo::A2c;
    let rule = cfg.optimizer(algo);
    let coeffs = A2cCoefficients {
        entropy: cfg.a2c.entropy_coef,
        value: cfg.a2c.value_coef,
    };
    let mut streams = Streams::new(cfg.seed);
    let probe = factory(0);
    let mut net = Network::new(algo.network_spec(&probe), &mut streams.init)?;
    drop(probe);
    let mut opt = OptimizerState::default();
    let mut step = 0u64;
    let mut updates = 0u64;
    if cfg.total_steps == 0 {
        return Ok(progress.finish(algo, 0, net, 0));
    }
    let mut workers = Workers::new(&mut factory, cfg.a2c.workers, &mut streams);
    while step < cfg.total_steps {
        let prev = step;
        let n = workers.segment(cfg.a2c.n_steps, step, cfg.total_steps);
        let batch = workers
            .collect(&net, n, &mut streams, &mut step, &mut progress)
            .map_err(|e| nn_failure(algo, step, updates, e, &net))?;
        let refs: Vec<&E::Obs> = batch.states.iter().collect();
        let states = encode_batch(&workers.envs[0], &refs);
        let (diag, mut grads) =
            a2c_loss(&net, &states, &batch, cfg.gamma, coeffs).map_err(|e| nn_failure(algo, step, updates, e, &net))?;
        grads.clip_norm(cfg.max_grad_norm);
        apply_update_in_place(&mut net.params, &grads, &mut opt, &rule);
        updates += 1;
        finite_or_abort(algo, step, updates, diag.loss, &grads, &net)?;
        progress.maybe_checkpoint(prev, step, &net);
    }
    Ok(progress.finish(algo, step, net, updates))
}
