use rand::seq::SliceRandom;

use crate::nn::{apply_update_in_place, Gradients, Network, NnError, OptimizerState, Tensor};

use super::a2c::Workers;
use super::{
    encode_batch, finite_or_abort, log_softmax, nn_failure, normalize, Algo, Environment, Progress, Streams,
    TrainConfig, TrainError, TrainOutcome,
};

/// `min(ratio · A, clip(ratio, 1 - ε, 1 + ε) · A)`.
pub fn ppo_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clipped * advantage)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoCoefficients {
    pub clip: f64,
    pub entropy: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct PpoMinibatch {
    pub states: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoDiagnostics {
    pub loss: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of samples whose clipped term was selected.
    pub clip_fraction: f64,
}

/// Negated mean surrogate plus `value · ½ (V - R)²` and `-entropy · H(π)`.
/// Where the clipped term is the minimum the surrogate is flat in θ.
pub fn ppo_loss(net: &Network, mb: &PpoMinibatch, coeffs: PpoCoefficients) -> Result<(PpoDiagnostics, Gradients), NnError> {
    let fwd = net.forward(&mb.states)?;
    let logp = log_softmax(fwd.logits("policy"));
    let values = fwd.output("value").data();
    let n = mb.actions.len();
    let k = logp[0].len();
    let inv = 1.0 / n as f64;
    let mut dz = Tensor::zeros(&[n, k]);
    let mut dv = Tensor::zeros(&[n, 1]);
    let (mut sur, mut vl, mut ent, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..n {
        let a = mb.actions[i];
        let lp = &logp[i];
        let adv = mb.advantages[i];
        let ratio = (lp[a] - mb.old_log_probs[i]).exp();
        let s = ppo_surrogate(ratio, adv, coeffs.clip);
        sur += s;
        // The unclipped branch is active when it attains the minimum.
        let active = ratio * adv <= s;
        if !active {
            clipped += 1;
        }
        let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        ent += h;
        let err = values[i] - mb.returns[i];
        vl += 0.5 * err * err;
        dv.data_mut()[i] = coeffs.value * err * inv;
        for j in 0..k {
            let p = lp[j].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            let pg = if active { ratio * adv * (p - onehot) } else { 0.0 };
            dz.data_mut()[i * k + j] = inv * (pg + coeffs.entropy * p * (lp[j] + h));
        }
    }
    let grads = net.backward_logits(&fwd, &[("policy", &dz), ("value", &dv)])?;
    let (sur, vl, ent) = (sur * inv, vl * inv, ent * inv);
    Ok((
        PpoDiagnostics {
            loss: -sur + coeffs.value * vl - coeffs.entropy * ent,
            surrogate: sur,
            value_loss: vl,
            entropy: ent,
            clip_fraction: clipped as f64 * inv,
        },
        grads,
    ))
}

pub(super) fn run<E, F>(mut factory: F, cfg: &TrainConfig, mut progress: Progress) -> Result<TrainOutcome, TrainError>
where
    E: Environment,
    F: FnMut(usize) -> E,
{
    let algo = Algo::Ppo;
    let p = &cfg.ppo;
    let rule = cfg.optimizer(algo);
    let coeffs = PpoCoefficients {
        clip: p.clip,
        entropy: p.entropy_coef,
        value: p.value_coef,
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
    let mut workers = Workers::new(&mut factory, p.workers, &mut streams);
    while step < cfg.total_steps {
        let prev = step;
        let n = workers.segment(p.n_steps, step, cfg.total_steps);
        let batch = workers
            .collect(&net, n, &mut streams, &mut step, &mut progress)
            .map_err(|e| nn_failure(algo, step, updates, e, &net))?;
        let (mut advantages, returns) = if p.gae {
            let adv = batch.gae(cfg.gamma, p.gae_lambda);
            let ret = adv.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
            (adv, ret)
        } else {
            let ret = batch.n_step_returns(cfg.gamma);
            let adv = ret.iter().zip(&batch.values).map(|(r, v)| r - v).collect();
            (adv, ret)
        };
        normalize(&mut advantages);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut streams.minibatch);
            for idx in order.chunks(p.minibatch) {
                let refs: Vec<&E::Obs> = idx.iter().map(|&i| &batch.states[i]).collect();
                let mb = PpoMinibatch {
                    states: encode_batch(&workers.envs[0], &refs),
                    actions: idx.iter().map(|&i| batch.actions[i]).collect(),
                    old_log_probs: idx.iter().map(|&i| batch.log_probs[i]).collect(),
                    advantages: idx.iter().map(|&i| advantages[i]).collect(),
                    returns: idx.iter().map(|&i| returns[i]).collect(),
                };
                let (diag, mut grads) =
                    ppo_loss(&net, &mb, coeffs).map_err(|e| nn_failure(algo, step, updates, e, &net))?;
                grads.clip_norm(cfg.max_grad_norm);
                apply_update_in_place(&mut net.params, &grads, &mut opt, &rule);
                updates += 1;
                finite_or_abort(algo, step, updates, diag.loss, &grads, &net)?;
            }
        }
        progress.maybe_checkpoint(prev, step, &net);
    }
    Ok(progress.finish(algo, step, net, updates))
}
