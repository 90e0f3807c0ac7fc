//! The lane-change decision process.
//!
//! One decision holds a discrete [`Action`] for a fixed decision period,
//! simulated in `dt` substeps. Longitudinal control of the ego is always
//! IDM towards its target speed; the agent only chooses lateral commands.

pub mod raster;

use serde::{Deserialize, Serialize};

pub use raster::{rasterize, Observation, PaletteColor};

use crate::rng::{rng_for, stream, Rng};
use crate::scenarios::Scene;
use crate::sim::{collision_pairs, control_leader, idm_control, Control, Direction, WorldState, DEFAULT_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Keep,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Keep, Action::Left, Action::Right];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::Keep => None,
            Action::Left => Some(Direction::Left),
            Action::Right => Some(Direction::Right),
        }
    }
}

/// Anything that picks an [`Action`] once per decision period.
///
/// Rule-based policies read the ground-truth scene; learned policies read
/// the observation.
pub trait Policy {
    fn name(&self) -> String;
    fn act(&mut self, scene: &Scene, obs: &Observation) -> Action;
    /// Whether evaluation should wrap this policy in the rule mask.
    fn wants_rule_mask(&self) -> bool {
        true
    }
}

pub const SPEED_REWARD_SCALE: f64 = 0.2;
pub const LANE_CHANGE_PENALTY: f64 = -1.0;
pub const COLLISION_PENALTY: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_v: f64,
    pub r_l: f64,
    pub r_c: f64,
    pub total: f64,
}

/// Reward of one decision period.
///
/// Lane keeping earns `0.2 * v / v_target`; a lane change earns the fixed
/// penalty instead; a collision adds its own penalty on top of either.
pub fn reward(avg_speed: f64, lane_change: bool, collided: bool, v_target: f64) -> RewardBreakdown {
    let r_c = if collided { COLLISION_PENALTY } else { 0.0 };
    let (r_v, r_l) = if lane_change {
        (0.0, LANE_CHANGE_PENALTY)
    } else {
        (SPEED_REWARD_SCALE * avg_speed / v_target, 0.0)
    };
    RewardBreakdown {
        r_v,
        r_l,
        r_c,
        total: if lane_change { r_l + r_c } else { r_v + r_c },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub decision_period: f64,
    pub dt: f64,
    /// Episode time limit in seconds.
    pub timeout: f64,
    /// Replace unsafe or impossible lane changes with `Keep`.
    pub rule_mask: bool,
    pub rule_gap_rear: f64,
    pub rule_gap_front: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            decision_period: 1.0,
            dt: DEFAULT_DT,
            timeout: 90.0,
            rule_mask: false,
            rule_gap_rear: 5.0,
            rule_gap_front: 5.0,
        }
    }
}

impl EnvConfig {
    pub fn substeps(&self) -> usize {
        (self.decision_period / self.dt).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.decision_period >= self.dt && self.timeout > 0.0) {
            return Err("env timing must satisfy 0 < dt <= decision_period and timeout > 0".into());
        }
        if !(self.rule_gap_rear >= 0.0 && self.rule_gap_front >= 0.0) {
            return Err("rule gaps must be non-negative".into());
        }
        Ok(())
    }
}

/// Replaces a lane change with `Keep` when the target lane does not exist
/// or any vehicle occupying it overlaps `[ego_s - gap_rear, ego_s + gap_front]`.
pub fn rule_mask(world: &WorldState, proposed: Action, gap_rear: f64, gap_front: f64) -> Action {
    let Some(dir) = proposed.direction() else {
        return proposed;
    };
    let ego = world.ego();
    let Some(target) = world.road.adjacent(ego.lane_index, dir) else {
        return Action::Keep;
    };
    let (lo, hi) = (ego.s - gap_rear, ego.s + gap_front);
    let blocked = world.vehicles.iter().any(|v| {
        v.id != ego.id
            && (v.claims_lane(target) || v.overlaps_lane_band(&world.road, target))
            && v.rear() < hi
            && v.front() > lo
    });
    if blocked {
        Action::Keep
    } else {
        proposed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Collision,
    SegmentEnd,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub collided: bool,
    /// Ego distance since the start of the episode.
    pub distance: f64,
    pub speed: f64,
    /// A lane change maneuver was started this period.
    pub lane_change_executed: bool,
    pub max_abs_accel: f64,
    pub masked_action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub termination: Option<Termination>,
    pub info: StepInfo,
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: usize,
    pub time: f64,
    pub action: Action,
    pub masked_action: Action,
    pub reward: RewardBreakdown,
    pub speed: f64,
    pub lane: usize,
}

/// A running episode over one [`Scene`].
#[derive(Debug, Clone)]
pub struct HighwayEnv {
    scene: Scene,
    cfg: EnvConfig,
    rng: Rng,
    start_s: f64,
    initial_lane: usize,
    decisions: usize,
    done: bool,
}

impl HighwayEnv {
    /// `seed` drives the social vehicles' random choices.
    pub fn new(scene: Scene, cfg: EnvConfig, seed: u64) -> Self {
        let ego = scene.world.ego();
        let start_s = ego.s;
        let initial_lane = ego.lane_index;
        Self {
            scene,
            cfg,
            rng: rng_for(seed, stream::SOCIAL),
            start_s,
            initial_lane,
            decisions: 0,
            done: false,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.scene.world
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn initial_lane(&self) -> usize {
        self.initial_lane
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn distance(&self) -> f64 {
        self.scene.world.ego().s - self.start_s
    }

    pub fn observe(&self) -> Observation {
        rasterize(&self.scene.world)
    }

    /// Holds `action` for one decision period.
    ///
    /// # Panics
    /// If the episode has already ended.
    pub fn step(&mut self, action: Action) -> StepOutcome {
        assert!(!self.done, "step called on a finished episode");
        let masked = if self.cfg.rule_mask {
            rule_mask(&self.scene.world, action, self.cfg.rule_gap_rear, self.cfg.rule_gap_front)
        } else {
            action
        };
        let ego = self.scene.world.ego();
        // Commands during an ongoing change are ignored without penalty;
        // commands towards a missing lane are penalized but not executed.
        let (penalized, command) = match masked.direction() {
            None => (false, None),
            Some(_) if ego.is_changing_lanes() => (false, None),
            Some(dir) => match self.scene.world.road.adjacent(ego.lane_index, dir) {
                Some(_) => (true, Some(dir)),
                None => (true, None),
            },
        };

        let ego_id = self.scene.world.ego_id;
        let segment_end = self.scene.world.road.segment_length;
        let mut speed_sum = 0.0;
        let mut substeps = 0usize;
        let mut max_abs_accel: f64 = 0.0;
        let mut termination = None;
        for k in 0..self.cfg.substeps() {
            let world = &self.scene.world;
            let ego = world.ego();
            let accel = idm_control(ego.speed, control_leader(world, ego_id).as_ref(), &self.scene.ego_idm);
            let control = Control {
                accel,
                lane_change: if k == 0 { command } else { None },
            };
            self.scene.advance(control, self.cfg.dt, &mut self.rng, k == 0);
            substeps += 1;
            let ego = self.scene.world.ego();
            speed_sum += ego.speed;
            max_abs_accel = max_abs_accel.max(ego.accel.abs());

            let pairs = collision_pairs(&self.scene.world);
            if pairs.iter().any(|&(a, b)| a == ego_id || b == ego_id) {
                termination = Some(Termination::Collision);
                break;
            }
            if !pairs.is_empty() {
                // Social-only crashes leave the road.
                let gone: Vec<_> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
                self.scene.world.vehicles.retain(|v| !gone.contains(&v.id));
            }
            if self.scene.world.ego().s >= segment_end {
                termination = Some(Termination::SegmentEnd);
                break;
            }
            if self.scene.world.time >= self.cfg.timeout - 1e-9 {
                termination = Some(Termination::Timeout);
                break;
            }
        }
        self.decisions += 1;
        let collided = termination == Some(Termination::Collision);
        let avg_speed = speed_sum / substeps as f64;
        let reward = reward(avg_speed, penalized, collided, self.scene.ego_target_speed());
        self.done = termination.is_some();
        StepOutcome {
            observation: self.observe(),
            reward,
            done: self.done,
            termination,
            info: StepInfo {
                collided,
                distance: self.distance(),
                speed: self.scene.world.ego().speed,
                lane_change_executed: command.is_some(),
                max_abs_accel,
                masked_action: masked,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{SceneOrigin, EGO_ID};
    use crate::sim::{kmh, IdmParams, RoadModel, VehicleId, VehicleState};
    use std::collections::BTreeMap;

    fn scene(lane: usize, others: Vec<(usize, f64, f64)>) -> Scene {
        let road = RoadModel::new(3, 450.0).unwrap();
        let v_t = kmh(60.0);
        let mut vehicles = vec![VehicleState::at_lane_center(EGO_ID, &road, lane, 30.0, v_t)];
        let mut behaviors = BTreeMap::new();
        for (i, (l, ds, v)) in others.into_iter().enumerate() {
            let id = VehicleId(i as u32 + 1);
            vehicles.push(VehicleState::at_lane_center(id, &road, l, 30.0 + ds, v));
            behaviors.insert(
                id,
                crate::scenarios::Behavior::Cruise {
                    idm: IdmParams::default().with_desired_speed(v.max(0.1)),
                },
            );
        }
        Scene {
            world: WorldState::new(road, vehicles, EGO_ID).unwrap(),
            behaviors,
            pending: vec![],
            ego_idm: IdmParams::default().with_desired_speed(v_t),
            origin: SceneOrigin::Custom,
        }
    }

    #[test]
    fn reward_table() {
        let vt = kmh(60.0);
        assert_eq!(reward(vt, false, false, vt).total, 0.2);
        assert_eq!(reward(0.0, false, false, vt).total, 0.0);
        assert_eq!(reward(vt, true, false, vt).total, -1.0);
        assert_eq!(reward(vt, true, true, vt).total, -2.0);
        let r = reward(vt, true, false, vt);
        assert_eq!((r.r_v, r.r_l, r.r_c), (0.0, -1.0, 0.0));
    }

    #[test]
    fn keep_on_empty_road() {
        let mut env = HighwayEnv::new(scene(1, vec![]), EnvConfig::default(), 0);
        let out = env.step(Action::Keep);
        assert!((out.reward.total - 0.2).abs() < 1e-12);
        assert!(!out.done);
        assert!((out.info.distance - kmh(60.0)).abs() < 1e-9);
    }

    #[test]
    fn left_into_vehicle_alongside_collides() {
        let mut env = HighwayEnv::new(scene(1, vec![(2, 0.0, kmh(60.0))]), EnvConfig::default(), 0);
        let out = env.step(Action::Left);
        assert!(out.done);
        assert_eq!(out.termination, Some(Termination::Collision));
        assert_eq!(out.reward.total, -2.0);
    }

    #[test]
    fn segment_end_terminates_without_collision() {
        let mut env = HighwayEnv::new(scene(1, vec![]), EnvConfig::default(), 0);
        let mut last = None;
        while !env.is_done() {
            last = Some(env.step(Action::Keep));
        }
        let last = last.unwrap();
        assert_eq!(last.termination, Some(Termination::SegmentEnd));
        assert!(!last.info.collided);
    }

    #[test]
    fn off_road_change_is_penalized_but_not_executed() {
        let mut env = HighwayEnv::new(scene(2, vec![]), EnvConfig::default(), 0);
        let out = env.step(Action::Left);
        assert_eq!(out.reward.total, -1.0);
        assert!(!out.info.lane_change_executed);
        assert_eq!(env.world().ego().lane_index, 2);
        assert!(!env.world().ego().is_changing_lanes());
    }

    #[test]
    fn command_during_change_is_ignored() {
        let mut env = HighwayEnv::new(scene(1, vec![]), EnvConfig::default(), 0);
        assert_eq!(env.step(Action::Left).reward.total, -1.0);
        let second = env.step(Action::Right);
        assert!(!second.info.lane_change_executed);
        assert!(second.reward.total > 0.0);
        assert_eq!(env.world().ego().lane_index, 2);
    }

    #[test]
    fn rule_mask_examples() {
        let s = scene(2, vec![]);
        assert_eq!(rule_mask(&s.world, Action::Left, 5.0, 5.0), Action::Keep);
        assert_eq!(rule_mask(&s.world, Action::Right, 5.0, 5.0), Action::Right);
        let s = scene(2, vec![(1, -3.0, 10.0)]);
        assert_eq!(rule_mask(&s.world, Action::Right, 5.0, 5.0), Action::Keep);
        // center 10 m ahead: footprint [7.75, 12.25] misses [-5, 5]
        let s = scene(2, vec![(1, 10.0, 10.0)]);
        assert_eq!(rule_mask(&s.world, Action::Right, 5.0, 5.0), Action::Right);
        assert_eq!(rule_mask(&s.world, Action::Keep, 5.0, 5.0), Action::Keep);
    }

    #[test]
    fn masked_env_does_not_penalize() {
        let cfg = EnvConfig {
            rule_mask: true,
            ..EnvConfig::default()
        };
        let mut env = HighwayEnv::new(scene(2, vec![]), cfg, 0);
        let out = env.step(Action::Left);
        assert_eq!(out.info.masked_action, Action::Keep);
        assert!(out.reward.total > 0.0);
    }
}
