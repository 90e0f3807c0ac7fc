use rand::Rng as _;

use crate::nn::{apply_update_in_place, Forward, Gradients, Network, NnError, OptimizerState, Tensor};

use super::{
    argmax, encode_batch, finite_or_abort, nn_failure, Algo, EnvStep, Environment, Progress, ReplayBuffer, Streams,
    TrainConfig, TrainError, TrainOutcome, Transition,
};

/// Minibatch of transitions with states already encoded.
#[derive(Debug, Clone)]
pub struct QBatch {
    pub states: Tensor,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
    pub dones: Vec<bool>,
}

impl QBatch {
    pub fn from_transitions<E: Environment>(env: &E, ts: &[&Transition<E::Obs>]) -> Self {
        let states: Vec<&E::Obs> = ts.iter().map(|t| &t.state).collect();
        let next: Vec<&E::Obs> = ts.iter().map(|t| &t.next_state).collect();
        Self {
            states: encode_batch(env, &states),
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: encode_batch(env, &next),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// `Q = V + (A - mean A)` per row of a dueling forward pass.
pub fn q_values(fwd: &Forward) -> Vec<Vec<f64>> {
    let v = fwd.output("value");
    let a = fwd.output("advantage");
    a.data()
        .chunks(a.row_len())
        .zip(v.data())
        .map(|(row, &v)| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter().map(|x| v + x - mean).collect()
        })
        .collect()
}

/// Double-DQN targets: the online network picks `a*` in the next state,
/// the target network evaluates it. Terminal samples do not bootstrap.
pub fn d3qn_target(batch: &QBatch, online: &Network, target: &Network, gamma: f64) -> Result<Vec<f64>, NnError> {
    assert!(!batch.is_empty(), "empty batch");
    let pick = q_values(&online.forward(&batch.next_states)?);
    let eval = q_values(&target.forward(&batch.next_states)?);
    Ok((0..batch.len())
        .map(|i| {
            if batch.dones[i] {
                batch.rewards[i]
            } else {
                batch.rewards[i] + gamma * eval[i][argmax(&pick[i])]
            }
        })
        .collect())
}

/// `mean ½ (y - Q(s, a))²` and its gradient in the online parameters.
pub fn d3qn_loss(batch: &QBatch, online: &Network, target: &Network, gamma: f64) -> Result<(f64, Gradients), NnError> {
    let y = d3qn_target(batch, online, target, gamma)?;
    let fwd = online.forward(&batch.states)?;
    let q = q_values(&fwd);
    let n = batch.len();
    let actions = q[0].len();
    let mut dv = Tensor::zeros(&[n, 1]);
    let mut da = Tensor::zeros(&[n, actions]);
    let mut loss = 0.0;
    for i in 0..n {
        let a = batch.actions[i];
        let err = q[i][a] - y[i];
        loss += 0.5 * err * err;
        let g = err / n as f64;
        dv.data_mut()[i] = g;
        for j in 0..actions {
            let onehot = if j == a { 1.0 } else { 0.0 };
            da.data_mut()[i * actions + j] = g * (onehot - 1.0 / actions as f64);
        }
    }
    let grads = online.backward(&fwd, &[("value", &dv), ("advantage", &da)])?;
    Ok((loss / n as f64, grads))
}

fn epsilon(cfg: &TrainConfig, step: u64) -> f64 {
    let d = &cfg.d3qn;
    let horizon = d.epsilon_fraction * cfg.total_steps as f64;
    if horizon <= 0.0 {
        return d.epsilon_end;
    }
    let frac = (step as f64 / horizon).min(1.0);
    d.epsilon_start + frac * (d.epsilon_end - d.epsilon_start)
}

pub(super) fn run<E, F>(mut factory: F, cfg: &TrainConfig, mut progress: Progress) -> Result<TrainOutcome, TrainError>
where
    E: Environment,
    F: FnMut(usize) -> E,
{
    let algo = Algo::D3qn;
    let d = &cfg.d3qn;
    let rule = cfg.optimizer(algo);
    let mut streams = Streams::new(cfg.seed);
    let mut env = factory(0);
    let mut online = Network::new(algo.network_spec(&env), &mut streams.init)?;
    let mut target = online.clone();
    let mut opt = OptimizerState::default();
    let mut buffer = ReplayBuffer::new(d.buffer_capacity);
    let mut updates = 0u64;
    let mut step = 0u64;
    let mut obs = if cfg.total_steps > 0 {
        Some(env.reset(streams.episode_seed()))
    } else {
        None
    };
    let mut ret = 0.0;

    while step < cfg.total_steps {
        let state = obs.take().expect("current observation");
        let action = if streams.explore.random::<f64>() < epsilon(cfg, step) {
            streams.explore.random_range(0..env.action_count())
        } else {
            let q = q_values(&online.forward(&encode_batch(&env, &[&state]))?);
            argmax(&q[0])
        };
        let EnvStep { obs: next, reward, done } = env.step(action);
        ret += reward;
        step += 1;
        buffer.push(Transition {
            state,
            action,
            reward,
            next_state: next.clone(),
            done,
        });
        if done {
            progress.curve.push(step, ret);
            ret = 0.0;
            obs = Some(env.reset(streams.episode_seed()));
        } else {
            obs = Some(next);
        }

        if step >= d.learning_starts && step.is_multiple_of(d.train_every) && buffer.len() >= d.batch_size {
            let sample = buffer.sample(d.batch_size, &mut streams.replay);
            let batch = QBatch::from_transitions(&env, &sample);
            let (loss, mut grads) =
                d3qn_loss(&batch, &online, &target, cfg.gamma).map_err(|e| nn_failure(algo, step, updates, e, &online))?;
            grads.clip_norm(cfg.max_grad_norm);
            apply_update_in_place(&mut online.params, &grads, &mut opt, &rule);
            updates += 1;
            finite_or_abort(algo, step, updates, loss, &grads, &online)?;
            if updates.is_multiple_of(d.target_sync) {
                target.params = online.params.clone();
            }
        }
        progress.maybe_checkpoint(step - 1, step, &online);
    }
    Ok(progress.finish(algo, step, online, updates))
}
