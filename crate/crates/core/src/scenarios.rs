//! Scenario construction: random traffic for training and the stochastic
//! test, and the fixed suite of 422 deterministic lane-change scenarios.
//!
//! A scenario expands into a [`Scene`]: the initial [`WorldState`], one
//! [`Behavior`] per social vehicle, and any vehicles whose appearance is
//! deferred until the ego gets close.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_for, stream, Rng};
use crate::sim::{
    self, control_leader, idm_control, kmh, nearest_ahead, nearest_behind, Control, Controls, Direction,
    IdmParams, RoadModel, SimError, VehicleId, VehicleState, WorldState, VEHICLE_LENGTH,
};

/// Longitudinal position of the ego/test vehicle at the start of every scenario.
pub const EGO_START_S: f64 = 30.0;
pub const DEFAULT_SEGMENT_LENGTH: f64 = 450.0;
/// Deceleration bound used by social vehicles when checking their own
/// random lane changes.
pub const SOCIAL_SAFE_DECEL: f64 = 4.0;
pub const EGO_ID: VehicleId = VehicleId(0);

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario {id}: {reason}")]
    Invalid { id: u32, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("scenario file: {0}")]
    Format(String),
}

/// Settings of the random traffic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Inclusive range of the social vehicle count.
    pub social_count: [usize; 2],
    /// Spawn window relative to the ego, `[behind, ahead]` in meters
    /// (behind is negative).
    pub spawn_window: [f64; 2],
    pub ego_target_speed_kmh: f64,
    pub social_speed_kmh: [f64; 2],
    /// Bumper gap between a social vehicle and the one in front of it.
    pub follow_gap: [f64; 2],
    /// Per-decision-period probability of a random social lane change;
    /// zero keeps every social vehicle in its initial lane.
    pub social_lane_change_rate: f64,
    pub lane_count: usize,
    pub segment_length: f64,
    /// Free space kept in front of / behind the ego in its own lane.
    pub ego_clearance: [f64; 2],
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self::training()
    }
}

impl TrafficConfig {
    pub fn training() -> Self {
        Self {
            social_count: [6, 12],
            spawn_window: [-30.0, 180.0],
            ego_target_speed_kmh: 60.0,
            social_speed_kmh: [20.0, 40.0],
            follow_gap: [0.0, 15.0],
            social_lane_change_rate: 0.02,
            lane_count: 3,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            ego_clearance: [15.0, 5.0],
        }
    }

    pub fn stochastic_test() -> Self {
        Self {
            social_count: [4, 9],
            social_lane_change_rate: 0.0,
            ..Self::training()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.social_count[0] > self.social_count[1] {
            return Err("social_count range is empty".into());
        }
        if !(self.spawn_window[0] <= 0.0 && self.spawn_window[1] > 0.0) {
            return Err("spawn_window must straddle the ego".into());
        }
        if !(self.social_speed_kmh[0] > 0.0 && self.social_speed_kmh[0] <= self.social_speed_kmh[1]) {
            return Err("social_speed_kmh must be a positive range".into());
        }
        if !(self.follow_gap[0] >= 0.0 && self.follow_gap[0] <= self.follow_gap[1]) {
            return Err("follow_gap must be a non-negative range".into());
        }
        if !(0.0..=1.0).contains(&self.social_lane_change_rate) {
            return Err("social_lane_change_rate must be a probability".into());
        }
        if self.ego_target_speed_kmh <= 0.0 {
            return Err("ego_target_speed_kmh must be positive".into());
        }
        if EGO_START_S + self.spawn_window[0] < 0.0 || EGO_START_S + self.spawn_window[1] > self.segment_length {
            return Err("spawn window does not fit the segment".into());
        }
        RoadModel::new(self.lane_count, self.segment_length).map_err(|e| e.to_string())?;
        Ok(())
    }
}

/// How a non-ego vehicle is driven.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Behavior {
    /// IDM car following with occasional random lane changes.
    Traffic { idm: IdmParams, lane_change_rate: f64 },
    /// IDM cruising at `idm.desired_speed`; with free road ahead this is
    /// exactly constant speed.
    Cruise { idm: IdmParams },
    Stationary,
    /// Cruises, then changes lanes once the ego closes to `trigger_gap`.
    CutIn {
        idm: IdmParams,
        trigger_gap: f64,
        direction: Direction,
        from_lane: usize,
        fired: bool,
    },
}

impl Behavior {
    /// IDM parameters if the vehicle follows IDM at all.
    pub fn idm(&self) -> Option<&IdmParams> {
        match self {
            Behavior::Traffic { idm, .. } | Behavior::Cruise { idm } | Behavior::CutIn { idm, .. } => Some(idm),
            Behavior::Stationary => None,
        }
    }
}

/// A vehicle that is absent from the world until the ego's front bumper is
/// within `trigger_gap` of its rear bumper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSpawn {
    pub vehicle: VehicleState,
    pub behavior: Behavior,
    pub trigger_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SceneOrigin {
    Training { seed: u64 },
    Stochastic { seed: u64 },
    Deterministic { id: u32 },
    Custom,
}

/// An instantiated scenario, ready to be driven by an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub world: WorldState,
    pub behaviors: BTreeMap<VehicleId, Behavior>,
    pub pending: Vec<PendingSpawn>,
    pub ego_idm: IdmParams,
    pub origin: SceneOrigin,
}

impl Scene {
    pub fn ego_target_speed(&self) -> f64 {
        self.ego_idm.desired_speed
    }

    /// Fires triggered behaviours whose condition holds in the current world.
    pub fn fire_triggers(&mut self) {
        let ego = self.world.ego().clone();
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].vehicle.rear() - ego.front() <= self.pending[i].trigger_gap {
                let p = self.pending.remove(i);
                self.behaviors.insert(p.vehicle.id, p.behavior);
                self.world.vehicles.push(p.vehicle);
            } else {
                i += 1;
            }
        }
        for v in &self.world.vehicles {
            if let Some(Behavior::CutIn { trigger_gap, fired, .. }) = self.behaviors.get_mut(&v.id) {
                if !*fired && v.rear() - ego.front() <= *trigger_gap {
                    *fired = true;
                }
            }
        }
    }

    /// Controls for every social vehicle. Random lane changes are only
    /// drawn when `decision_tick` is set.
    pub fn social_controls(&mut self, rng: &mut Rng, decision_tick: bool) -> Controls {
        let mut controls = Controls::new();
        let world = &self.world;
        for v in &world.vehicles {
            if v.id == world.ego_id {
                continue;
            }
            let Some(behavior) = self.behaviors.get_mut(&v.id) else {
                continue;
            };
            let leader = control_leader(world, v.id);
            let control = match behavior {
                Behavior::Stationary => Control::default(),
                Behavior::Cruise { idm } => Control {
                    accel: idm_control(v.speed, leader.as_ref(), idm),
                    lane_change: None,
                },
                Behavior::CutIn {
                    idm,
                    direction,
                    from_lane,
                    fired,
                    ..
                } => {
                    let lane_change = if *fired && !v.is_changing_lanes() && v.lane_index == *from_lane {
                        Some(*direction)
                    } else {
                        None
                    };
                    Control {
                        accel: idm_control(v.speed, leader.as_ref(), idm),
                        lane_change,
                    }
                }
                Behavior::Traffic { idm, lane_change_rate } => {
                    let mut lane_change = None;
                    if decision_tick && *lane_change_rate > 0.0 {
                        let u: f64 = rng.random();
                        let left: bool = rng.random();
                        if u < *lane_change_rate && !v.is_changing_lanes() {
                            let dir = if left { Direction::Left } else { Direction::Right };
                            let dir = if world.road.adjacent(v.lane_index, dir).is_some() {
                                dir
                            } else {
                                dir.mirrored()
                            };
                            if social_change_is_safe(world, v, dir, idm) {
                                lane_change = Some(dir);
                            }
                        }
                    }
                    Control {
                        accel: idm_control(v.speed, leader.as_ref(), idm),
                        lane_change,
                    }
                }
            };
            controls.insert(v.id, control);
        }
        controls
    }

    /// One integration step with the given ego control.
    pub fn advance(&mut self, ego: Control, dt: f64, rng: &mut Rng, decision_tick: bool) {
        self.fire_triggers();
        let mut controls = self.social_controls(rng, decision_tick);
        controls.insert(self.world.ego_id, ego);
        self.world = sim::step(&self.world, dt, &controls);
    }
}

// A cut-in fires once; the vehicle only changes out of its original lane.
fn social_change_is_safe(world: &WorldState, v: &VehicleState, dir: Direction, idm: &IdmParams) -> bool {
    let Some(target) = world.road.adjacent(v.lane_index, dir) else {
        return false;
    };
    let claims = |o: &VehicleState, l: usize| o.claims_lane(l) || o.overlaps_lane_band(&world.road, l);
    let lead = nearest_ahead(world, v.s, v.length, target, v.id, claims);
    let follow = nearest_behind(world, v.s, v.length, target, v.id, claims);
    if world
        .vehicles
        .iter()
        .any(|o| o.id != v.id && o.s == v.s && claims(o, target))
    {
        return false;
    }
    let own_ok = match lead {
        Some(l) => l.gap > idm.min_gap && idm_control(v.speed, Some(&l), idm) > -SOCIAL_SAFE_DECEL,
        None => true,
    };
    let follower_ok = match follow {
        Some(f) => {
            let fp = IdmParams::default();
            let as_leader = sim::Leader { id: v.id, gap: f.gap, speed: v.speed };
            f.gap > fp.min_gap && idm_control(f.speed, Some(&as_leader), &fp) > -SOCIAL_SAFE_DECEL
        }
        None => true,
    };
    own_ok && follower_ok
}

/// Random traffic scene for training.
pub fn gen_training(seed: u64, cfg: &TrafficConfig) -> Result<Scene, ScenarioError> {
    gen_random(seed, cfg, SceneOrigin::Training { seed })
}

/// Random traffic scene for the stochastic test. Identical to training
/// except for the configuration passed in.
pub fn gen_stochastic_test(seed: u64, cfg: &TrafficConfig) -> Result<Scene, ScenarioError> {
    gen_random(seed, cfg, SceneOrigin::Stochastic { seed })
}

fn uniform(rng: &mut Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn gen_random(seed: u64, cfg: &TrafficConfig, origin: SceneOrigin) -> Result<Scene, ScenarioError> {
    cfg.validate().map_err(|reason| ScenarioError::Invalid { id: 0, reason })?;
    let mut rng = rng_for(seed, stream::SCENARIO);
    let road = RoadModel::new(cfg.lane_count, cfg.segment_length)?;
    let ego_lane = rng.random_range(0..cfg.lane_count);
    let ego_idm = IdmParams::default().with_desired_speed(kmh(cfg.ego_target_speed_kmh));
    let ego = VehicleState::at_lane_center(EGO_ID, &road, ego_lane, EGO_START_S, ego_idm.desired_speed);

    let count = rng.random_range(cfg.social_count[0]..=cfg.social_count[1]);
    let mut per_lane = vec![0usize; cfg.lane_count];
    for _ in 0..count {
        per_lane[rng.random_range(0..cfg.lane_count)] += 1;
    }

    let window = [EGO_START_S + cfg.spawn_window[0], EGO_START_S + cfg.spawn_window[1]];
    let mut vehicles = vec![ego.clone()];
    let mut behaviors = BTreeMap::new();
    let mut next_id = 1u32;
    for (lane, &k) in per_lane.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let desired: Vec<f64> = (0..k).map(|_| kmh(uniform(&mut rng, cfg.social_speed_kmh))).collect();
        let (head, gaps) = place_platoon(&mut rng, cfg, window, k, (lane == ego_lane).then_some(&ego));
        let mut s = head;
        let mut speed = f64::INFINITY;
        for i in 0..k {
            if i > 0 {
                s -= VEHICLE_LENGTH + gaps[i - 1];
            }
            speed = desired[i].min(speed);
            let id = VehicleId(next_id);
            next_id += 1;
            vehicles.push(VehicleState::at_lane_center(id, &road, lane, s, speed));
            behaviors.insert(
                id,
                Behavior::Traffic {
                    idm: IdmParams::default().with_desired_speed(desired[i]),
                    lane_change_rate: cfg.social_lane_change_rate,
                },
            );
        }
    }
    let world = WorldState::new(road, vehicles, EGO_ID)?;
    Ok(Scene {
        world,
        behaviors,
        pending: Vec::new(),
        ego_idm,
        origin,
    })
}

/// Chooses the head (front vehicle) center position and the follow gaps of
/// a platoon of `k` vehicles so that every center lies inside `window` and,
/// in the ego lane, the platoon keeps the ego clearance.
fn place_platoon(
    rng: &mut Rng,
    cfg: &TrafficConfig,
    window: [f64; 2],
    k: usize,
    ego: Option<&VehicleState>,
) -> (f64, Vec<f64>) {
    const ATTEMPTS: usize = 32;
    let mut gaps: Vec<f64> = Vec::new();
    for attempt in 0..=ATTEMPTS {
        gaps = if attempt < ATTEMPTS {
            (1..k).map(|_| uniform(rng, cfg.follow_gap)).collect()
        } else {
            vec![cfg.follow_gap[0]; k.saturating_sub(1)]
        };
        // Distance between the head center and the tail center.
        let span: f64 = gaps.iter().map(|g| g + VEHICLE_LENGTH).sum();
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        let (lo, hi) = (window[0] + span, window[1]);
        match ego {
            None => {
                if lo <= hi {
                    intervals.push((lo, hi));
                }
            }
            Some(e) => {
                // Entirely ahead: tail rear >= ego front + clearance.
                let ahead_lo = lo.max(e.front() + cfg.ego_clearance[0] + span + 0.5 * VEHICLE_LENGTH);
                if ahead_lo <= hi {
                    intervals.push((ahead_lo, hi));
                }
                // Entirely behind: head front <= ego rear - clearance.
                let behind_hi = hi.min(e.rear() - cfg.ego_clearance[1] - 0.5 * VEHICLE_LENGTH);
                if lo <= behind_hi {
                    intervals.push((lo, behind_hi));
                }
            }
        }
        let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
        if intervals.is_empty() {
            continue;
        }
        let mut u = if total > 0.0 { rng.random_range(0.0..=total) } else { 0.0 };
        for &(a, b) in &intervals {
            if u <= b - a {
                return (a + u, gaps);
            }
            u -= b - a;
        }
        return (intervals[intervals.len() - 1].1, gaps);
    }
    // The window of 210 m always fits 12 vehicles at minimum gaps.
    unreachable!("platoon of {k} vehicles with gaps {gaps:?} does not fit the spawn window")
}

// ---------------------------------------------------------------------------
// Deterministic suite

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioClass {
    A,
    B,
    C,
    D,
    E,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    /// Label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::A => "(a)",
            Self::B => "(b)",
            Self::C => "(c)",
            Self::D => "(d)",
            Self::E => "(e)",
        }
    }

    pub fn expected_count(self) -> usize {
        match self {
            Self::A => 10,
            Self::B => 30,
            Self::C => 231,
            Self::D => 126,
            Self::E => 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PlacementBehavior {
    ConstantSpeed,
    Stationary,
    TriggeredSpawn { trigger_distance: f64 },
    TriggeredCutIn { trigger_distance: f64 },
}

/// One target vehicle of a deterministic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub role: String,
    pub lane: usize,
    /// Center-to-center longitudinal offset from the test vehicle, meters.
    pub offset: f64,
    pub speed_kmh: f64,
    pub behavior: PlacementBehavior,
}

/// Grid coordinates of a scenario; absent entries do not apply to its class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridParams {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub v1_kmh: Option<f64>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none", default)]
    pub big_d: Option<f64>,
    #[serde(rename = "d", skip_serializing_if = "Option::is_none", default)]
    pub small_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub v2_kmh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trigger_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicScenario {
    pub id: u32,
    pub class: ScenarioClass,
    pub lane_count: usize,
    pub tv_lane: usize,
    pub tv_target_speed_kmh: f64,
    pub params: GridParams,
    pub placements: Vec<Placement>,
    pub allowed_directions: Vec<Direction>,
}

/// The ordered deterministic suite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<DeterministicScenario>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn count(&self, class: ScenarioClass) -> usize {
        self.scenarios.iter().filter(|s| s.class == class).count()
    }

    pub fn get(&self, id: u32) -> Option<&DeterministicScenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// One JSON record per line, in id order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.scenarios {
            let line = serde_json::to_string(s).expect("scenario serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ScenarioError> {
        let scenarios = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| ScenarioError::Format(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { scenarios })
    }
}

/// Target speed of the test vehicle in every deterministic scenario.
pub const TV_TARGET_SPEED_KMH: f64 = 60.0;

fn gv(role: &str, lane: usize, offset: f64, speed_kmh: f64, behavior: PlacementBehavior) -> Placement {
    Placement {
        role: role.to_string(),
        lane,
        offset,
        speed_kmh,
        behavior,
    }
}

/// Builds the full deterministic suite. Pure: every call returns the same
/// scenarios in the same order.
pub fn enumerate_deterministic() -> ScenarioSet {
    let mut scenarios = Vec::with_capacity(422);
    let mut push = |class, lane_count, tv_lane, params, placements, allowed: &[Direction]| {
        let id = scenarios.len() as u32;
        scenarios.push(DeterministicScenario {
            id,
            class,
            lane_count,
            tv_lane,
            tv_target_speed_kmh: TV_TARGET_SPEED_KMH,
            params,
            placements,
            allowed_directions: allowed.to_vec(),
        });
    };
    use Direction::{Left, Right};

    // (a) two-lane overtake of a slow or stopped vehicle.
    for v1 in [0.0, 10.0] {
        for big_d in [20.0, 30.0, 40.0, 50.0, 60.0] {
            let behavior = if v1 == 0.0 {
                PlacementBehavior::Stationary
            } else {
                PlacementBehavior::ConstantSpeed
            };
            push(
                ScenarioClass::A,
                2,
                0,
                GridParams { v1_kmh: Some(v1), big_d: Some(big_d), ..Default::default() },
                vec![gv("GV1", 0, big_d, v1, behavior)],
                &[Left],
            );
        }
    }
    // (b) three-lane overtake, both adjacent lanes free.
    for v1 in [10.0, 20.0, 30.0] {
        for big_d in [15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0] {
            push(
                ScenarioClass::B,
                3,
                1,
                GridParams { v1_kmh: Some(v1), big_d: Some(big_d), ..Default::default() },
                vec![gv("GV1", 1, big_d, v1, PlacementBehavior::ConstantSpeed)],
                &[Left, Right],
            );
        }
    }
    // (c) slow leader ahead, occupied left lane, free right lane.
    for v1 in [20.0, 30.0, 40.0] {
        for big_d in [15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 50.0] {
            for small_d in [-25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
                let v2 = 30.0;
                push(
                    ScenarioClass::C,
                    3,
                    1,
                    GridParams {
                        v1_kmh: Some(v1),
                        big_d: Some(big_d),
                        small_d: Some(small_d),
                        v2_kmh: Some(v2),
                        ..Default::default()
                    },
                    vec![
                        gv("GV1", 1, big_d, v1, PlacementBehavior::ConstantSpeed),
                        gv("GV2", 2, small_d, v2, PlacementBehavior::ConstantSpeed),
                    ],
                    &[Left, Right],
                );
            }
        }
    }
    // (d) slow vehicle in the left lane cuts in ahead of the test vehicle.
    // It starts `d` meters beyond its trigger point, so the cut-in always
    // begins at a bumper gap of exactly `trigger_distance`.
    for v1 in [20.0, 30.0, 40.0] {
        for small_d in [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0] {
            for trigger in [10.0, 15.0, 20.0, 25.0, 30.0, 35.0] {
                push(
                    ScenarioClass::D,
                    3,
                    1,
                    GridParams {
                        v1_kmh: Some(v1),
                        small_d: Some(small_d),
                        trigger_distance: Some(trigger),
                        ..Default::default()
                    },
                    vec![gv(
                        "GV1",
                        2,
                        small_d + trigger + VEHICLE_LENGTH,
                        v1,
                        PlacementBehavior::TriggeredCutIn { trigger_distance: trigger },
                    )],
                    &[Left, Right],
                );
            }
        }
    }
    // (e) two-lane road, stationary vehicle appears late ahead.
    for big_d in [30.0, 40.0, 50.0, 60.0, 70.0] {
        for trigger in [20.0, 30.0, 40.0, 50.0, 60.0] {
            push(
                ScenarioClass::E,
                2,
                0,
                GridParams {
                    big_d: Some(big_d),
                    trigger_distance: Some(trigger),
                    ..Default::default()
                },
                vec![gv(
                    "GV1",
                    0,
                    big_d,
                    0.0,
                    PlacementBehavior::TriggeredSpawn { trigger_distance: trigger },
                )],
                &[Left],
            );
        }
    }
    ScenarioSet { scenarios }
}

/// Expands a deterministic scenario into a scene on a segment of the
/// default length.
pub fn instantiate(scn: &DeterministicScenario) -> Result<Scene, ScenarioError> {
    instantiate_on(scn, DEFAULT_SEGMENT_LENGTH)
}

pub fn instantiate_on(scn: &DeterministicScenario, segment_length: f64) -> Result<Scene, ScenarioError> {
    let invalid = |reason: String| ScenarioError::Invalid { id: scn.id, reason };
    let road = RoadModel::new(scn.lane_count, segment_length).map_err(|e| invalid(e.to_string()))?;
    if scn.tv_lane >= road.lane_count {
        return Err(invalid("test vehicle lane out of range".into()));
    }
    let ego_idm = IdmParams::default().with_desired_speed(kmh(scn.tv_target_speed_kmh));
    let tv = VehicleState::at_lane_center(EGO_ID, &road, scn.tv_lane, EGO_START_S, ego_idm.desired_speed);
    let mut vehicles = vec![tv];
    let mut behaviors = BTreeMap::new();
    let mut pending = Vec::new();
    for (i, p) in scn.placements.iter().enumerate() {
        if p.lane >= road.lane_count {
            return Err(invalid(format!("{} lane {} out of range", p.role, p.lane)));
        }
        let s = EGO_START_S + p.offset;
        if s - 0.5 * VEHICLE_LENGTH < 0.0 || s + 0.5 * VEHICLE_LENGTH > segment_length {
            return Err(invalid(format!("{} offset {} exceeds the segment", p.role, p.offset)));
        }
        if p.speed_kmh < 0.0 {
            return Err(invalid(format!("{} has negative speed", p.role)));
        }
        let id = VehicleId(i as u32 + 1);
        let speed = kmh(p.speed_kmh);
        let v = VehicleState::at_lane_center(id, &road, p.lane, s, speed);
        let cruise = || IdmParams::default().with_desired_speed(speed.max(f64::MIN_POSITIVE));
        match p.behavior {
            PlacementBehavior::ConstantSpeed if speed > 0.0 => {
                behaviors.insert(id, Behavior::Cruise { idm: cruise() });
                vehicles.push(v);
            }
            PlacementBehavior::ConstantSpeed | PlacementBehavior::Stationary => {
                behaviors.insert(id, Behavior::Stationary);
                vehicles.push(VehicleState { speed: 0.0, ..v });
            }
            PlacementBehavior::TriggeredSpawn { trigger_distance } => pending.push(PendingSpawn {
                vehicle: VehicleState { speed: 0.0, ..v },
                behavior: Behavior::Stationary,
                trigger_gap: trigger_distance,
            }),
            PlacementBehavior::TriggeredCutIn { trigger_distance } => {
                let direction = if p.lane > scn.tv_lane {
                    Direction::Right
                } else if p.lane < scn.tv_lane {
                    Direction::Left
                } else {
                    return Err(invalid("cut-in vehicle must start in an adjacent lane".into()));
                };
                if p.lane.abs_diff(scn.tv_lane) != 1 || speed <= 0.0 {
                    return Err(invalid("cut-in vehicle must be moving in an adjacent lane".into()));
                }
                behaviors.insert(
                    id,
                    Behavior::CutIn {
                        idm: cruise(),
                        trigger_gap: trigger_distance,
                        direction,
                        from_lane: p.lane,
                        fired: false,
                    },
                );
                vehicles.push(v);
            }
        }
    }
    // Like the random generators, the test vehicle never starts faster
    // than the vehicle directly ahead of it in its lane.
    if let Some(lead) = vehicles[1..]
        .iter()
        .filter(|v| v.lane_index == scn.tv_lane && v.s > EGO_START_S)
        .min_by(|a, b| a.s.total_cmp(&b.s))
    {
        vehicles[0].speed = vehicles[0].speed.min(lead.speed);
    }
    let world = WorldState::new(road, vehicles, EGO_ID).map_err(|e| invalid(e.to_string()))?;
    Ok(Scene {
        world,
        behaviors,
        pending,
        ego_idm,
        origin: SceneOrigin::Deterministic { id: scn.id },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{collision_pairs, DEFAULT_DT};

    #[test]
    fn training_count_and_determinism() {
        let cfg = TrafficConfig::training();
        for seed in 0..200 {
            let s = gen_training(seed, &cfg).unwrap();
            let n = s.world.vehicles.len() - 1;
            assert!((6..=12).contains(&n), "seed {seed}: {n}");
        }
        assert_eq!(gen_training(7, &cfg).unwrap(), gen_training(7, &cfg).unwrap());
        assert_ne!(gen_training(7, &cfg).unwrap().world, gen_training(8, &cfg).unwrap().world);
    }

    #[test]
    fn stochastic_count() {
        let cfg = TrafficConfig::stochastic_test();
        for seed in 0..200 {
            let n = gen_stochastic_test(seed, &cfg).unwrap().world.vehicles.len() - 1;
            assert!((4..=9).contains(&n));
        }
    }

    #[test]
    fn suite_counts() {
        let set = enumerate_deterministic();
        assert_eq!(set.len(), 422);
        for class in ScenarioClass::ALL {
            assert_eq!(set.count(class), class.expected_count(), "{class:?}");
        }
        assert!(set.scenarios.iter().enumerate().all(|(i, s)| s.id == i as u32));
        assert_eq!(set, enumerate_deterministic());
    }

    #[test]
    fn class_c_placement() {
        let set = enumerate_deterministic();
        let scn = set
            .scenarios
            .iter()
            .find(|s| s.class == ScenarioClass::C && s.params.big_d == Some(30.0) && s.params.small_d == Some(10.0))
            .unwrap();
        let scene = instantiate(scn).unwrap();
        let w = &scene.world;
        let tv = w.ego();
        let gv1 = w.vehicle(VehicleId(1)).unwrap();
        let gv2 = w.vehicle(VehicleId(2)).unwrap();
        assert_eq!(gv1.s - tv.s, 30.0);
        assert_eq!(gv1.lane_index, tv.lane_index);
        assert_eq!(gv2.s - tv.s, 10.0);
        assert_eq!(gv2.lane_index, tv.lane_index + 1);
        assert_eq!(w.road.lane_count, 3);
        assert!(w.vehicles.iter().all(|v| v.lane_index != 0));
    }

    #[test]
    fn class_e_spawns_late() {
        let set = enumerate_deterministic();
        let scn = set
            .scenarios
            .iter()
            .find(|s| s.class == ScenarioClass::E && s.params.big_d == Some(70.0) && s.params.trigger_distance == Some(20.0))
            .unwrap();
        let mut scene = instantiate(scn).unwrap();
        assert_eq!(scene.world.vehicles.len(), 1);
        assert_eq!(scene.pending.len(), 1);
        let mut rng = rng_for(0, stream::SOCIAL);
        let mut appeared_at_gap = None;
        for _ in 0..100 {
            let before = scene.world.vehicles.len();
            let gap = scene.pending.first().map(|p| p.vehicle.rear() - scene.world.ego().front());
            scene.advance(Control::default(), DEFAULT_DT, &mut rng, false);
            if before == 1 && scene.world.vehicles.len() == 2 {
                appeared_at_gap = gap;
                break;
            }
        }
        let gap = appeared_at_gap.expect("vehicle spawned");
        assert!(gap <= 20.0 && gap > 20.0 - scene.world.ego().speed * DEFAULT_DT - 1e-9);
        let gv = scene.world.vehicle(VehicleId(1)).unwrap();
        assert_eq!(gv.speed, 0.0);
        assert_eq!(gv.lane_index, 0);
    }

    #[test]
    fn all_deterministic_scenarios_start_collision_free() {
        for scn in &enumerate_deterministic().scenarios {
            let scene = instantiate(scn).unwrap();
            assert!(collision_pairs(&scene.world).is_empty(), "scenario {}", scn.id);
        }
    }

    #[test]
    fn rejects_offsets_outside_segment() {
        let mut scn = enumerate_deterministic().scenarios[0].clone();
        scn.placements[0].offset = 1000.0;
        assert!(matches!(instantiate(&scn), Err(ScenarioError::Invalid { .. })));
        scn.placements[0].offset = -40.0;
        assert!(instantiate(&scn).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let set = enumerate_deterministic();
        let text = set.to_jsonl();
        assert_eq!(text.lines().count(), 422);
        assert_eq!(ScenarioSet::from_jsonl(&text).unwrap(), set);
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"D\":20.0"), "{first}");
    }

    #[test]
    fn cut_in_fires_at_trigger_gap() {
        let set = enumerate_deterministic();
        let scn = set.scenarios.iter().find(|s| s.class == ScenarioClass::D).unwrap();
        let mut scene = instantiate(scn).unwrap();
        let mut rng = rng_for(0, stream::SOCIAL);
        let trigger = scn.params.trigger_distance.unwrap();
        loop {
            let gap = scene.world.vehicle(VehicleId(1)).unwrap().rear() - scene.world.ego().front();
            scene.advance(Control::default(), DEFAULT_DT, &mut rng, false);
            if scene.world.vehicle(VehicleId(1)).unwrap().is_changing_lanes() {
                assert!(gap <= trigger);
                break;
            }
            assert!(gap > trigger - 2.0, "cut-in late");
        }
    }
}
