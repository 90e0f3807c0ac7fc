/// Synchronous rollouts of `workers` environments for `n_steps` each.
/// Sample `(w, t)` lives at index `w * n_steps + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch<O> {
    pub workers: usize,
    pub n_steps: usize,
    pub states: Vec<O>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// `V(s)` at collection time.
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub dones: Vec<bool>,
    /// `V` of each worker's state after its last step.
    pub bootstrap: Vec<f64>,
}

impl<O> RolloutBatch<O> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) {
        let n = self.workers * self.n_steps;
        assert!(
            self.states.len() == n
                && self.actions.len() == n
                && self.rewards.len() == n
                && self.values.len() == n
                && self.log_probs.len() == n
                && self.dones.len() == n
                && self.bootstrap.len() == self.workers,
            "incomplete rollout batch"
        );
    }

    /// `V(s')` per sample, zero after a terminal step.
    pub fn next_values(&self) -> Vec<f64> {
        self.check();
        let n = self.n_steps;
        (0..self.len())
            .map(|i| {
                if self.dones[i] {
                    0.0
                } else if i % n + 1 == n {
                    self.bootstrap[i / n]
                } else {
                    self.values[i + 1]
                }
            })
            .collect()
    }

    /// One-step targets `r + γ V(s')`.
    pub fn td_targets(&self, gamma: f64) -> Vec<f64> {
        self.rewards.iter().zip(self.next_values()).map(|(r, v)| r + gamma * v).collect()
    }

    /// Discounted returns to the end of each worker's segment,
    /// bootstrapped from its final value and cut at episode ends.
    pub fn n_step_returns(&self, gamma: f64) -> Vec<f64> {
        self.check();
        let n = self.n_steps;
        let mut out = vec![0.0; self.len()];
        for w in 0..self.workers {
            let mut acc = self.bootstrap[w];
            for t in (0..n).rev() {
                let i = w * n + t;
                if self.dones[i] {
                    acc = 0.0;
                }
                acc = self.rewards[i] + gamma * acc;
                out[i] = acc;
            }
        }
        out
    }

    /// Generalized advantage estimates.
    pub fn gae(&self, gamma: f64, lambda: f64) -> Vec<f64> {
        let next = self.next_values();
        let n = self.n_steps;
        let mut out = vec![0.0; self.len()];
        for w in 0..self.workers {
            let mut acc = 0.0;
            for t in (0..n).rev() {
                let i = w * n + t;
                if self.dones[i] {
                    acc = 0.0;
                }
                let delta = self.rewards[i] + gamma * next[i] - self.values[i];
                acc = delta + gamma * lambda * acc;
                out[i] = acc;
            }
        }
        out
    }
}

/// Shifts and scales to zero mean and unit variance. Constant input maps
/// to zeros.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    for x in xs.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn batch(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, bootstrap: Vec<f64>) -> RolloutBatch<()> {
        let len = rewards.len();
        RolloutBatch {
            workers: bootstrap.len(),
            n_steps: len / bootstrap.len(),
            states: vec![(); len],
            actions: vec![0; len],
            rewards,
            values,
            log_probs: vec![0.0; len],
            dones,
            bootstrap,
        }
    }

    #[test]
    fn returns_by_hand() {
        // Two workers, three steps; worker 0 ends an episode at t = 1.
        let b = batch(
            vec![1.0, 2.0, 3.0, 0.5, 0.5, 0.5],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![false, true, false, false, false, false],
            vec![10.0, 4.0],
        );
        let g = 0.5;
        let r = b.n_step_returns(g);
        assert_eq!(r[..3], [1.0 + 0.5 * 2.0, 2.0, 3.0 + 0.5 * 10.0]);
        assert_eq!(r[3..], [0.5 + 0.5 * (0.5 + 0.5 * (0.5 + 0.5 * 4.0)), 0.5 + 0.5 * (0.5 + 0.5 * 4.0), 0.5 + 0.5 * 4.0]);
        assert_eq!(b.next_values(), vec![0.2, 0.0, 10.0, 0.5, 0.6, 4.0]);
        assert_eq!(b.td_targets(g)[1], 2.0);
    }

    #[test]
    fn gae_with_unit_lambda_equals_returns_minus_values() {
        let b = batch(
            vec![1.0, -1.0, 0.2, 0.3],
            vec![0.5, 0.1, -0.2, 0.7],
            vec![false, false, true, false],
            vec![0.9],
        );
        let adv = b.gae(0.9, 1.0);
        let ret = b.n_step_returns(0.9);
        for i in 0..4 {
            assert!((adv[i] - (ret[i] - b.values[i])).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn normalized_has_zero_mean_unit_variance(xs in prop::collection::vec(-100.0f64..100.0, 2..50)) {
            let mut ys = xs.clone();
            normalize(&mut ys);
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-3 {
                let var = ys.iter().map(|y| y * y).sum::<f64>() / n;
                prop_assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }
}
