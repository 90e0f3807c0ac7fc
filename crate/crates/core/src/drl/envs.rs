use crate::env::{raster, Action, EnvConfig, HighwayEnv, Observation};
use crate::nn::{default_trunk, LayerSpec, Real};
use crate::scenarios::{gen_training, TrafficConfig};

use super::{EnvStep, Environment, TrainConfig};

/// The lane-change task over randomly generated training traffic.
#[derive(Debug, Clone)]
pub struct HighwayTrainEnv {
    pub traffic: TrafficConfig,
    pub env_cfg: EnvConfig,
    env: Option<HighwayEnv>,
}

impl HighwayTrainEnv {
    pub fn new(traffic: TrafficConfig, env_cfg: EnvConfig) -> Self {
        Self {
            traffic,
            env_cfg,
            env: None,
        }
    }

    /// Training traffic on a shortened segment.
    pub fn reduced(segment_length: f64) -> Self {
        Self::new(
            TrafficConfig {
                segment_length,
                ..TrafficConfig::training()
            },
            EnvConfig::default(),
        )
    }

    pub fn inner(&self) -> Option<&HighwayEnv> {
        self.env.as_ref()
    }
}

impl Environment for HighwayTrainEnv {
    type Obs = Observation;

    fn obs_shape(&self) -> Vec<usize> {
        vec![raster::CHANNELS, raster::SIZE, raster::SIZE]
    }

    fn action_count(&self) -> usize {
        Action::COUNT
    }

    fn trunk(&self) -> Vec<LayerSpec> {
        default_trunk()
    }

    fn encode(&self, obs: &Observation, out: &mut [Real]) {
        obs.write_chw(out);
    }

    /// # Panics
    /// If the traffic configuration cannot produce a scene.
    fn reset(&mut self, seed: u64) -> Observation {
        let scene = gen_training(seed, &self.traffic).expect("training traffic config");
        let env = HighwayEnv::new(scene, self.env_cfg, seed);
        let obs = env.observe();
        self.env = Some(env);
        obs
    }

    fn step(&mut self, action: usize) -> EnvStep<Observation> {
        let env = self.env.as_mut().expect("reset before step");
        let out = env.step(Action::from_index(action).expect("action index"));
        EnvStep {
            obs: out.observation,
            reward: out.reward.total,
            done: out.done,
        }
    }
}

pub const CORRIDOR_STATES: usize = 3;

/// Three cells in a row. Actions stay / left / right cost 0.1 per step;
/// stepping left off cell 0 pays 0.8 and stepping right off cell 2 pays
/// 1.0, both ending the episode.
#[derive(Debug, Clone)]
pub struct Corridor {
    pub timeout: usize,
    state: usize,
    steps: usize,
    rng: crate::rng::Rng,
}

impl Corridor {
    pub const STEP_COST: f64 = -0.1;
    pub const LEFT_EXIT: f64 = 0.8;
    pub const RIGHT_EXIT: f64 = 1.0;

    pub fn new() -> Self {
        Self {
            timeout: 10,
            state: 0,
            steps: 0,
            rng: crate::rng::rng_for(0, crate::rng::stream::SCENARIO),
        }
    }

    /// Training settings sized for this task: 20,000 steps, γ = 0.9 and
    /// faster schedules than the highway defaults.
    pub fn train_config(seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig {
            total_steps: 20_000,
            seed,
            gamma: 0.9,
            learning_rate: Some(3e-3),
            smoothing_window: 50,
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        cfg.d3qn.learning_starts = 500;
        cfg.d3qn.target_sync = 100;
        cfg.d3qn.train_every = 1;
        cfg.d3qn.buffer_capacity = 10_000;
        cfg.a2c.workers = 4;
        cfg.ppo.n_steps = 32;
        cfg.ppo.minibatch = 64;
        cfg
    }

    /// `(next state, reward, terminal)` of the deterministic dynamics.
    pub fn transition(state: usize, action: usize) -> (usize, f64, bool) {
        match (state, action) {
            (0, 1) => (0, Self::LEFT_EXIT, true),
            (s, 2) if s + 1 == CORRIDOR_STATES => (s, Self::RIGHT_EXIT, true),
            (s, 1) => (s - 1, Self::STEP_COST, false),
            (s, 2) => (s + 1, Self::STEP_COST, false),
            (s, _) => (s, Self::STEP_COST, false),
        }
    }
}

impl Default for Corridor {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Corridor {
    type Obs = usize;

    fn obs_shape(&self) -> Vec<usize> {
        vec![CORRIDOR_STATES]
    }

    fn action_count(&self) -> usize {
        3
    }

    fn trunk(&self) -> Vec<LayerSpec> {
        vec![LayerSpec::dense(CORRIDOR_STATES, 32), LayerSpec::Relu]
    }

    fn encode(&self, obs: &usize, out: &mut [Real]) {
        out.fill(0.0);
        out[*obs] = 1.0;
    }

    fn reset(&mut self, seed: u64) -> usize {
        use rand::Rng as _;
        self.rng = crate::rng::rng_for(seed, crate::rng::stream::SCENARIO);
        self.state = self.rng.random_range(0..CORRIDOR_STATES);
        self.steps = 0;
        self.state
    }

    fn step(&mut self, action: usize) -> EnvStep<usize> {
        let (next, reward, terminal) = Self::transition(self.state, action);
        self.state = next;
        self.steps += 1;
        EnvStep {
            obs: next,
            reward,
            done: terminal || self.steps >= self.timeout,
        }
    }
}
