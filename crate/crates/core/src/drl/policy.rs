use rand::Rng as _;

use crate::env::{raster, Action, Observation, Policy};
use crate::nn::{Network, NnError, Tensor};
use crate::rng::{rng_for, stream, Rng};
use crate::scenarios::Scene;

use super::{argmax, q_values, Environment};

/// Highest-valued action per row: the `advantage` head for dueling
/// networks, the `policy` head for actor-critic ones.
pub fn greedy_action(net: &Network, input: &Tensor) -> Result<Vec<usize>, NnError> {
    let fwd = net.forward(input)?;
    let rows = if net.spec.head_index("advantage").is_some() {
        q_values(&fwd)
    } else {
        let p = fwd.output("policy");
        p.data().chunks(p.row_len()).map(<[f64]>::to_vec).collect()
    };
    Ok(rows.iter().map(|r| argmax(r)).collect())
}

/// A trained network acting greedily on observations.
#[derive(Debug, Clone)]
pub struct CheckpointPolicy {
    pub label: String,
    pub network: Network,
}

impl CheckpointPolicy {
    /// Fails if the network does not read 64×64 RGB frames or lacks a
    /// three-way action head.
    pub fn new(label: impl Into<String>, network: Network) -> Result<Self, NnError> {
        let want = vec![raster::CHANNELS, raster::SIZE, raster::SIZE];
        if network.spec.input != want {
            return Err(NnError::InvalidSpec(format!("input {:?}, expected {want:?}", network.spec.input)));
        }
        let head = ["advantage", "policy"]
            .into_iter()
            .find_map(|n| network.spec.head_index(n))
            .ok_or_else(|| NnError::InvalidSpec("no advantage or policy head".into()))?;
        if network.spec.heads[head].outputs != Action::COUNT {
            return Err(NnError::InvalidSpec(format!("{} actions, expected {}", network.spec.heads[head].outputs, Action::COUNT)));
        }
        Ok(Self {
            label: label.into(),
            network,
        })
    }
}

impl Policy for CheckpointPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn act(&mut self, _scene: &Scene, obs: &Observation) -> Action {
        let mut data = vec![0.0; raster::CHANNELS * raster::SIZE * raster::SIZE];
        obs.write_chw(&mut data);
        let x = Tensor::new(vec![1, raster::CHANNELS, raster::SIZE, raster::SIZE], data).expect("frame shape");
        let a = greedy_action(&self.network, &x).expect("validated network")[0];
        Action::from_index(a).expect("three actions")
    }
}

/// Uniformly random actions.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng_for(seed, stream::EXPLORATION),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "Random".into()
    }

    fn act(&mut self, _scene: &Scene, _obs: &Observation) -> Action {
        Action::ALL[self.rng.random_range(0..Action::COUNT)]
    }

    fn wants_rule_mask(&self) -> bool {
        false
    }
}

/// Mean episodic return of a uniformly random policy over `episodes`
/// episodes seeded `seed, seed + 1, ...`.
pub fn random_baseline<E: Environment>(env: &mut E, episodes: usize, seed: u64) -> f64 {
    let mut rng = rng_for(seed, stream::EXPLORATION);
    let mut total = 0.0;
    for e in 0..episodes {
        env.reset(seed + e as u64);
        loop {
            let s = env.step(rng.random_range(0..env.action_count()));
            total += s.reward;
            if s.done {
                break;
            }
        }
    }
    total / episodes.max(1) as f64
}
