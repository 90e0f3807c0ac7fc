//! MOBIL lane-change baseline.
//!
//! For each adjacent lane the ego predicts, with one-shot IDM evaluations
//! against current gaps and speeds, its own acceleration and those of the
//! old and new followers before and after the change. A change is
//! acceptable when both the ego and the new follower stay above `-b_safe`
//! and the politeness-weighted gain exceeds `a_th`. Left wins ties.

use serde::{Deserialize, Serialize};

use crate::env::{Action, Observation, Policy};
use crate::scenarios::Scene;
use crate::sim::{
    control_leader, idm_control, nearest_ahead, nearest_behind, Direction, IdmParams, Leader, VehicleId,
    VehicleState, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilParams {
    pub politeness: f64,
    /// Incentive threshold `a_th`, m/s².
    pub threshold: f64,
    /// Maximum safe deceleration `b_safe`, m/s².
    pub safe_decel: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.3,
            threshold: 0.1,
            safe_decel: 4.0,
        }
    }
}

impl MobilParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.politeness) {
            return Err("politeness must lie in [0, 1]".into());
        }
        if !(self.threshold > 0.0 && self.safe_decel > 0.0) {
            return Err("threshold and safe_decel must be positive".into());
        }
        Ok(())
    }
}

/// Accelerations behind one candidate direction. Tilde values (`*_after`)
/// are predictions for the world in which the ego already sits in the
/// target lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEvaluation {
    pub direction: Direction,
    pub ego_after: f64,
    pub ego_now: f64,
    pub new_follower_after: f64,
    pub new_follower_now: f64,
    pub old_follower_after: f64,
    pub old_follower_now: f64,
    pub safety_ok: bool,
    pub incentive: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilDecision {
    pub action: Action,
    pub left: Option<DirectionEvaluation>,
    pub right: Option<DirectionEvaluation>,
}

impl MobilDecision {
    pub fn chosen(&self) -> Option<&DirectionEvaluation> {
        match self.action {
            Action::Left => self.left.as_ref(),
            Action::Right => self.right.as_ref(),
            Action::Keep => None,
        }
    }
}

/// MOBIL with the same IDM parameters for every vehicle.
pub fn mobil_decide(world: &WorldState, params: &MobilParams, idm: &IdmParams) -> MobilDecision {
    mobil_decide_with(world, params, idm, |_| Some(*idm))
}

/// MOBIL with per-vehicle IDM parameters. `idm_of` returns `None` for
/// vehicles that do not react to traffic (stationary obstacles); their
/// accelerations count as unchanged.
pub fn mobil_decide_with(
    world: &WorldState,
    params: &MobilParams,
    ego_idm: &IdmParams,
    idm_of: impl Fn(VehicleId) -> Option<IdmParams>,
) -> MobilDecision {
    let ego = world.ego();
    if ego.is_changing_lanes() {
        return MobilDecision {
            action: Action::Keep,
            left: None,
            right: None,
        };
    }
    let eval = |dir| evaluate(world, ego, dir, params, ego_idm, &idm_of);
    let left = eval(Direction::Left);
    let right = eval(Direction::Right);
    let action = if left.is_some_and(|e| e.feasible) {
        Action::Left
    } else if right.is_some_and(|e| e.feasible) {
        Action::Right
    } else {
        Action::Keep
    };
    MobilDecision { action, left, right }
}

fn claims(v: &VehicleState, lane: usize) -> bool {
    v.claims_lane(lane)
}

fn evaluate(
    world: &WorldState,
    ego: &VehicleState,
    dir: Direction,
    params: &MobilParams,
    ego_idm: &IdmParams,
    idm_of: &impl Fn(VehicleId) -> Option<IdmParams>,
) -> Option<DirectionEvaluation> {
    let lane = ego.lane_index;
    let target = world.road.adjacent(lane, dir)?;

    // Anything laterally in the target lane and longitudinally alongside
    // makes the change impossible outright.
    let blocked = world.vehicles.iter().any(|v| {
        v.id != ego.id && claims(v, target) && v.rear() < ego.front() && v.front() > ego.rear()
    });

    let ego_now = idm_control(ego.speed, control_leader(world, ego.id).as_ref(), ego_idm);
    let new_leader = nearest_ahead(world, ego.s, ego.length, target, ego.id, claims);
    let ego_after = idm_control(ego.speed, new_leader.as_ref(), ego_idm);

    let vehicle = |id: VehicleId| world.vehicle(id).expect("neighbour exists");

    // New follower: currently follows `new_leader`, afterwards the ego.
    let (new_follower_now, new_follower_after) =
        match nearest_behind(world, ego.s, ego.length, target, ego.id, claims) {
            Some(f) => match idm_of(f.id) {
                Some(p) => {
                    let fv = vehicle(f.id);
                    let now = new_leader.map(|l| leader_between(fv, vehicle(l.id)));
                    let after = Leader { id: ego.id, gap: f.gap, speed: ego.speed };
                    (idm_control(fv.speed, now.as_ref(), &p), idm_control(fv.speed, Some(&after), &p))
                }
                None => (0.0, 0.0),
            },
            None => (0.0, 0.0),
        };

    // Old follower: currently follows the ego, afterwards the ego's leader.
    let (old_follower_now, old_follower_after) =
        match nearest_behind(world, ego.s, ego.length, lane, ego.id, claims) {
            Some(f) => match idm_of(f.id) {
                Some(p) => {
                    let fv = vehicle(f.id);
                    let now = Leader { id: ego.id, gap: f.gap, speed: ego.speed };
                    let after = nearest_ahead(world, ego.s, ego.length, lane, ego.id, claims)
                        .map(|l| leader_between(fv, vehicle(l.id)));
                    (idm_control(fv.speed, Some(&now), &p), idm_control(fv.speed, after.as_ref(), &p))
                }
                None => (0.0, 0.0),
            },
            None => (0.0, 0.0),
        };

    let safety_ok = !blocked && ego_after > -params.safe_decel && new_follower_after > -params.safe_decel;
    let incentive = (ego_after - ego_now)
        + params.politeness * ((new_follower_after - new_follower_now) + (old_follower_after - old_follower_now));
    Some(DirectionEvaluation {
        direction: dir,
        ego_after,
        ego_now,
        new_follower_after,
        new_follower_now,
        old_follower_after,
        old_follower_now,
        safety_ok,
        incentive,
        feasible: safety_ok && incentive > params.threshold,
    })
}

fn leader_between(follower: &VehicleState, leader: &VehicleState) -> Leader {
    Leader {
        id: leader.id,
        gap: leader.s - follower.s - 0.5 * (leader.length + follower.length),
        speed: leader.speed,
    }
}

/// MOBIL as a [`Policy`]: reads ground-truth state, never the pixels.
#[derive(Debug, Clone, Default)]
pub struct MobilPolicy {
    pub params: MobilParams,
    /// Every evaluation that led to a lane change, in decision order.
    pub accepted: Vec<DirectionEvaluation>,
}

impl MobilPolicy {
    pub fn new(params: MobilParams) -> Self {
        Self {
            params,
            accepted: Vec::new(),
        }
    }

    pub fn decide(&self, scene: &Scene) -> MobilDecision {
        mobil_decide_with(&scene.world, &self.params, &scene.ego_idm, |id| {
            scene.behaviors.get(&id).and_then(|b| b.idm().copied())
        })
    }
}

impl Policy for MobilPolicy {
    fn name(&self) -> String {
        "MOBIL".into()
    }

    fn act(&mut self, scene: &Scene, _obs: &Observation) -> Action {
        let decision = self.decide(scene);
        if let Some(e) = decision.chosen() {
            self.accepted.push(*e);
        }
        decision.action
    }

    fn wants_rule_mask(&self) -> bool {
        false
    }
}
