//! Fixed-step kinematic simulation of a straight multi-lane highway.
//!
//! Vehicles are point masses with an axis-aligned rectangular footprint.
//! Longitudinal motion is driven by externally supplied accelerations
//! (normally [`idm_acceleration`]); lateral motion only happens during a
//! lane change, which follows a linear ramp between the two centerlines.
//!
//! Lateral coordinates grow to the left: lane 0 is the rightmost lane and
//! its centerline sits at `0.5 * lane_width`.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LANE_WIDTH: f64 = 3.5;
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 2.0;
/// Integration step used by every environment in the crate.
pub const DEFAULT_DT: f64 = 0.1;
/// Duration of the linear lateral ramp of one lane change.
pub const LANE_CHANGE_DURATION: f64 = 2.0;

/// Converts km/h to m/s.
#[inline]
pub fn kmh(v: f64) -> f64 {
    v / 3.6
}

/// Converts m/s to km/h.
#[inline]
pub fn to_kmh(v: f64) -> f64 {
    v * 3.6
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-positive gap {0} m to leader")]
    NonPositiveGap(f64),
    #[error("invalid road: {0}")]
    InvalidRoad(String),
    #[error("duplicate vehicle id {0}")]
    DuplicateId(u32),
    #[error("ego vehicle {0} missing from world")]
    MissingEgo(u32),
    #[error("vehicles {0} and {1} overlap")]
    Overlap(u32, u32),
    #[error("invalid vehicle {0}: {1}")]
    InvalidVehicle(u32, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadModel {
    pub lane_count: usize,
    pub lane_width: f64,
    pub segment_length: f64,
    pub sidewalk_width: f64,
}

impl RoadModel {
    pub fn new(lane_count: usize, segment_length: f64) -> Result<Self, SimError> {
        if !(2..=3).contains(&lane_count) {
            return Err(SimError::InvalidRoad(format!(
                "lane count {lane_count} not in {{2, 3}}"
            )));
        }
        if !(segment_length > 0.0) {
            return Err(SimError::InvalidRoad(format!(
                "segment length {segment_length} must be positive"
            )));
        }
        Ok(Self {
            lane_count,
            lane_width: LANE_WIDTH,
            segment_length,
            sidewalk_width: LANE_WIDTH,
        })
    }

    #[inline]
    pub fn centerline(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Lateral band `(lower, upper)` covered by `lane`.
    #[inline]
    pub fn lane_band(&self, lane: usize) -> (f64, f64) {
        let lo = lane as f64 * self.lane_width;
        (lo, lo + self.lane_width)
    }

    /// Index of the lane adjacent to `lane` in `direction`, if it exists.
    pub fn adjacent(&self, lane: usize, direction: Direction) -> Option<usize> {
        match direction {
            Direction::Left if lane + 1 < self.lane_count => Some(lane + 1),
            Direction::Right if lane > 0 => Some(lane - 1),
            _ => None,
        }
    }

    /// Total drivable width (all lanes, no sidewalks).
    #[inline]
    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Lateral direction of a lane change. `Left` increases the lane index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn mirrored(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LaneChange {
    None,
    InProgress { direction: Direction, progress: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Longitudinal position of the footprint center.
    pub s: f64,
    /// Lateral position of the footprint center.
    pub y: f64,
    pub speed: f64,
    pub accel: f64,
    /// Source lane while a lane change is in progress.
    pub lane_index: usize,
    pub lc: LaneChange,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    /// A lane-keeping vehicle with the default footprint, centered in `lane`.
    pub fn at_lane_center(id: VehicleId, road: &RoadModel, lane: usize, s: f64, speed: f64) -> Self {
        Self {
            id,
            s,
            y: road.centerline(lane),
            speed,
            accel: 0.0,
            lane_index: lane,
            lc: LaneChange::None,
            length: VEHICLE_LENGTH,
            width: VEHICLE_WIDTH,
        }
    }

    pub fn target_lane(&self) -> Option<usize> {
        match self.lc {
            LaneChange::None => None,
            LaneChange::InProgress { direction, .. } => Some(match direction {
                Direction::Left => self.lane_index + 1,
                Direction::Right => self.lane_index - 1,
            }),
        }
    }

    pub fn is_changing_lanes(&self) -> bool {
        matches!(self.lc, LaneChange::InProgress { .. })
    }

    /// Lane used for neighbour queries: the target lane once the change is
    /// at least half done, the source lane otherwise.
    pub fn effective_lane(&self) -> usize {
        match self.lc {
            LaneChange::InProgress { progress, .. } if progress >= 0.5 => {
                self.target_lane().unwrap_or(self.lane_index)
            }
            _ => self.lane_index,
        }
    }

    /// Every lane the vehicle is committed to: its lane, plus the target
    /// lane of an ongoing change.
    pub fn claimed_lanes(&self) -> (usize, Option<usize>) {
        (self.lane_index, self.target_lane())
    }

    pub fn claims_lane(&self, lane: usize) -> bool {
        let (a, b) = self.claimed_lanes();
        a == lane || b == Some(lane)
    }

    #[inline]
    pub fn rear(&self) -> f64 {
        self.s - 0.5 * self.length
    }

    #[inline]
    pub fn front(&self) -> f64 {
        self.s + 0.5 * self.length
    }

    /// Whether the lateral footprint intersects the band of `lane` with
    /// positive width.
    pub fn overlaps_lane_band(&self, road: &RoadModel, lane: usize) -> bool {
        let (lo, hi) = road.lane_band(lane);
        self.y - 0.5 * self.width < hi && self.y + 0.5 * self.width > lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub min_gap: f64,
    pub time_headway: f64,
    pub accel_exponent: f64,
    /// Magnitude of the lower clamp applied to every IDM output.
    pub hard_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: kmh(60.0),
            max_accel: 1.5,
            comfort_decel: 2.0,
            min_gap: 2.0,
            time_headway: 1.0,
            accel_exponent: 4.0,
            hard_decel: 6.0,
        }
    }
}

impl IdmParams {
    pub fn with_desired_speed(self, desired_speed: f64) -> Self {
        Self { desired_speed, ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.desired_speed,
            self.max_accel,
            self.comfort_decel,
            self.min_gap,
            self.time_headway,
            self.accel_exponent,
            self.hard_decel,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err("IDM parameters must be finite and strictly positive".into());
        }
        if self.accel_exponent < 1.0 {
            return Err("IDM acceleration exponent must be >= 1".into());
        }
        Ok(())
    }
}

/// The vehicle ahead as seen by a follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub id: VehicleId,
    /// Bumper-to-bumper distance.
    pub gap: f64,
    pub speed: f64,
}

/// Intelligent Driver Model acceleration, clamped to
/// `[-hard_decel, max_accel]`.
///
/// `leader` is `(gap, lead_speed)`; `None` is the free-road case. The
/// dynamic part of the desired gap is floored at zero so that the result is
/// monotone in the ego speed.
pub fn idm_acceleration(
    ego_speed: f64,
    leader: Option<(f64, f64)>,
    p: &IdmParams,
) -> Result<f64, SimError> {
    let free = 1.0 - (ego_speed / p.desired_speed).powf(p.accel_exponent);
    let interaction = match leader {
        None => 0.0,
        Some((gap, lead_speed)) => {
            if !(gap > 0.0) {
                return Err(SimError::NonPositiveGap(gap));
            }
            let dv = ego_speed - lead_speed;
            let dynamic =
                ego_speed * p.time_headway + ego_speed * dv / (2.0 * (p.max_accel * p.comfort_decel).sqrt());
            let desired = p.min_gap + dynamic.max(0.0);
            (desired / gap).powi(2)
        }
    };
    let a = p.max_accel * (free - interaction);
    Ok(a.clamp(-p.hard_decel, p.max_accel))
}

/// IDM acceleration for use inside controllers: an overlapping or touching
/// leader yields full hard braking instead of an error.
pub fn idm_control(ego_speed: f64, leader: Option<&Leader>, p: &IdmParams) -> f64 {
    match leader {
        Some(l) if l.gap <= 0.0 => -p.hard_decel,
        Some(l) => idm_acceleration(ego_speed, Some((l.gap, l.speed)), p).unwrap_or(-p.hard_decel),
        None => idm_acceleration(ego_speed, None, p).unwrap_or(-p.hard_decel),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub road: RoadModel,
    pub vehicles: Vec<VehicleState>,
    pub ego_id: VehicleId,
}

impl WorldState {
    /// Builds a validated world: unique ids, ego present, non-negative
    /// speeds, no overlapping footprints.
    pub fn new(road: RoadModel, vehicles: Vec<VehicleState>, ego_id: VehicleId) -> Result<Self, SimError> {
        let world = Self {
            time: 0.0,
            road,
            vehicles,
            ego_id,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut seen = HashSet::new();
        for v in &self.vehicles {
            if !seen.insert(v.id) {
                return Err(SimError::DuplicateId(v.id.0));
            }
            if !(v.speed >= 0.0) || !v.s.is_finite() || !v.y.is_finite() {
                return Err(SimError::InvalidVehicle(v.id.0, "bad kinematic state".into()));
            }
            if v.lane_index >= self.road.lane_count {
                return Err(SimError::InvalidVehicle(v.id.0, "lane out of range".into()));
            }
        }
        if !seen.contains(&self.ego_id) {
            return Err(SimError::MissingEgo(self.ego_id.0));
        }
        if let Some(&(a, b)) = collision_pairs(self).iter().next() {
            return Err(SimError::Overlap(a.0, b.0));
        }
        Ok(())
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn vehicle_mut(&mut self, id: VehicleId) -> Option<&mut VehicleState> {
        self.vehicles.iter_mut().find(|v| v.id == id)
    }

    /// # Panics
    /// If the ego is absent, which [`WorldState::new`] rules out.
    pub fn ego(&self) -> &VehicleState {
        self.vehicle(self.ego_id).expect("ego vehicle present")
    }

    pub fn next_free_id(&self) -> VehicleId {
        VehicleId(self.vehicles.iter().map(|v| v.id.0 + 1).max().unwrap_or(0))
    }
}

/// Per-vehicle command for one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    pub accel: f64,
    /// Starts a lane change if the vehicle is lane keeping and the target
    /// lane exists; ignored otherwise.
    pub lane_change: Option<Direction>,
}

pub type Controls = BTreeMap<VehicleId, Control>;

/// Advances the world by `dt`. Vehicles without an entry in `controls`
/// coast with zero acceleration.
///
/// # Panics
/// If `dt` is not strictly positive.
pub fn step(world: &WorldState, dt: f64, controls: &Controls) -> WorldState {
    assert!(dt > 0.0, "step requires dt > 0");
    let mut next = world.clone();
    next.time = world.time + dt;
    let road = world.road;
    for v in &mut next.vehicles {
        let control = controls.get(&v.id).copied().unwrap_or_default();
        integrate_longitudinal(v, control.accel, dt);
        if let (LaneChange::None, Some(direction)) = (v.lc, control.lane_change) {
            if road.adjacent(v.lane_index, direction).is_some() {
                v.lc = LaneChange::InProgress {
                    direction,
                    progress: 0.0,
                };
            }
        }
        advance_lateral(v, &road, dt);
    }
    next
}

fn integrate_longitudinal(v: &mut VehicleState, accel: f64, dt: f64) {
    let new_speed = v.speed + accel * dt;
    if new_speed >= 0.0 {
        v.s += v.speed * dt + 0.5 * accel * dt * dt;
        v.speed = new_speed;
    } else {
        // Stops inside the step: travel only the braking distance.
        v.s += if accel < 0.0 { v.speed * v.speed / (-2.0 * accel) } else { 0.0 };
        v.speed = 0.0;
    }
    v.accel = accel;
}

const PROGRESS_EPS: f64 = 1e-9;

fn advance_lateral(v: &mut VehicleState, road: &RoadModel, dt: f64) {
    if let LaneChange::InProgress { direction, progress } = v.lc {
        let target = road
            .adjacent(v.lane_index, direction)
            .expect("lane change started towards an existing lane");
        let progress = (progress + dt / LANE_CHANGE_DURATION).min(1.0);
        if progress >= 1.0 - PROGRESS_EPS {
            v.lane_index = target;
            v.y = road.centerline(target);
            v.lc = LaneChange::None;
        } else {
            let from = road.centerline(v.lane_index);
            let to = road.centerline(target);
            v.y = from + (to - from) * progress;
            v.lc = LaneChange::InProgress { direction, progress };
        }
    }
}

/// All unordered pairs `(a, b)` with `a < b` whose footprints overlap with
/// positive area.
pub fn collision_pairs(world: &WorldState) -> BTreeSet<(VehicleId, VehicleId)> {
    let mut order: Vec<&VehicleState> = world.vehicles.iter().collect();
    order.sort_by(|a, b| a.rear().total_cmp(&b.rear()).then(a.id.cmp(&b.id)));
    let mut pairs = BTreeSet::new();
    for (i, a) in order.iter().enumerate() {
        for b in &order[i + 1..] {
            // Sorted by rear edge: nothing further along can overlap `a`.
            if b.rear() >= a.front() {
                break;
            }
            if footprints_overlap(a, b) {
                let pair = if a.id < b.id { (a.id, b.id) } else { (b.id, a.id) };
                pairs.insert(pair);
            }
        }
    }
    pairs
}

#[inline]
pub fn footprints_overlap(a: &VehicleState, b: &VehicleState) -> bool {
    (a.s - b.s).abs() < 0.5 * (a.length + b.length) && (a.y - b.y).abs() < 0.5 * (a.width + b.width)
}

/// Nearest vehicle ahead of `id` in `lane`, using effective lane membership.
pub fn leader_of(world: &WorldState, id: VehicleId, lane: usize) -> Option<Leader> {
    let me = world.vehicle(id)?;
    nearest_ahead(world, me.s, me.length, lane, id, |v, l| v.effective_lane() == l)
}

/// Nearest vehicle behind `id` in `lane`, using effective lane membership.
pub fn follower_of(world: &WorldState, id: VehicleId, lane: usize) -> Option<Leader> {
    let me = world.vehicle(id)?;
    nearest_behind(world, me.s, me.length, lane, id, |v, l| v.effective_lane() == l)
}

/// Leader used for longitudinal control. A vehicle reacts to everything
/// that claims one of its own claimed lanes, so both lanes matter while a
/// change is in progress and cut-ins are seen as soon as they start.
pub fn control_leader(world: &WorldState, id: VehicleId) -> Option<Leader> {
    let me = world.vehicle(id)?;
    let (a, b) = me.claimed_lanes();
    let first = nearest_ahead(world, me.s, me.length, a, id, |v, l| v.claims_lane(l));
    let second = b.and_then(|lane| nearest_ahead(world, me.s, me.length, lane, id, |v, l| v.claims_lane(l)));
    match (first, second) {
        (Some(x), Some(y)) => Some(if y.gap < x.gap { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Nearest vehicle strictly ahead of position `s` among those for which
/// `member(vehicle, lane)` holds, excluding `exclude`.
pub fn nearest_ahead(
    world: &WorldState,
    s: f64,
    length: f64,
    lane: usize,
    exclude: VehicleId,
    member: impl Fn(&VehicleState, usize) -> bool,
) -> Option<Leader> {
    world
        .vehicles
        .iter()
        .filter(|v| v.id != exclude && v.s > s && member(v, lane))
        .map(|v| Leader {
            id: v.id,
            gap: v.s - s - 0.5 * (v.length + length),
            speed: v.speed,
        })
        .min_by(|a, b| a.gap.total_cmp(&b.gap).then(a.id.cmp(&b.id)))
}

/// Mirror of [`nearest_ahead`] for vehicles strictly behind `s`.
pub fn nearest_behind(
    world: &WorldState,
    s: f64,
    length: f64,
    lane: usize,
    exclude: VehicleId,
    member: impl Fn(&VehicleState, usize) -> bool,
) -> Option<Leader> {
    world
        .vehicles
        .iter()
        .filter(|v| v.id != exclude && v.s < s && member(v, lane))
        .map(|v| Leader {
            id: v.id,
            gap: s - v.s - 0.5 * (v.length + length),
            speed: v.speed,
        })
        .min_by(|a, b| a.gap.total_cmp(&b.gap).then(a.id.cmp(&b.id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn road3() -> RoadModel {
        RoadModel::new(3, 450.0).unwrap()
    }

    fn car(id: u32, lane: usize, s: f64, speed: f64) -> VehicleState {
        VehicleState::at_lane_center(VehicleId(id), &road3(), lane, s, speed)
    }

    #[test]
    fn road_geometry() {
        let r = road3();
        assert_eq!(r.lane_width, 3.5);
        assert_eq!(r.centerline(0), 1.75);
        assert_eq!(r.centerline(2), 8.75);
        assert_eq!(r.adjacent(2, Direction::Left), None);
        assert_eq!(r.adjacent(0, Direction::Right), None);
        assert_eq!(r.adjacent(1, Direction::Left), Some(2));
        assert!(RoadModel::new(4, 10.0).is_err());
        assert!(RoadModel::new(2, 0.0).is_err());
    }

    #[test]
    fn idm_equilibrium_and_start() {
        let p = IdmParams::default();
        assert_eq!(idm_acceleration(p.desired_speed, None, &p).unwrap(), 0.0);
        assert_eq!(idm_acceleration(0.0, None, &p).unwrap(), p.max_accel);
    }

    #[test]
    fn idm_golden_value() {
        let p = IdmParams {
            desired_speed: 16.67,
            ..IdmParams::default()
        };
        // Single-expression evaluation of the formula, computed offline.
        let golden = 0.7657554422710933;
        let a = idm_acceleration(10.0, Some((20.0, 10.0)), &p).unwrap();
        assert!((a - golden).abs() < 1e-12, "{a}");
    }

    #[test]
    fn idm_rejects_non_positive_gap() {
        let p = IdmParams::default();
        assert!(matches!(
            idm_acceleration(10.0, Some((0.0, 5.0)), &p),
            Err(SimError::NonPositiveGap(_))
        ));
        assert_eq!(
            idm_control(10.0, Some(&Leader { id: VehicleId(1), gap: -1.0, speed: 0.0 }), &p),
            -p.hard_decel
        );
    }

    #[test]
    fn uniform_motion() {
        let w = WorldState::new(road3(), vec![car(0, 1, 10.0, 5.0), car(1, 0, 40.0, 12.0)], VehicleId(0)).unwrap();
        let n = step(&w, 0.1, &Controls::new());
        assert_eq!(n.vehicles[0].s, 10.0 + 0.5);
        assert_eq!(n.vehicles[1].s, 40.0 + 12.0 * 0.1);
        assert_eq!(n.vehicles[0].y, w.vehicles[0].y);
        assert_eq!(n.time, 0.1);
        // pure transition
        assert_eq!(w.vehicles[0].s, 10.0);
    }

    #[test]
    fn speed_clamp() {
        let w = WorldState::new(road3(), vec![car(0, 1, 10.0, 1.0)], VehicleId(0)).unwrap();
        let mut c = Controls::new();
        c.insert(VehicleId(0), Control { accel: -2.0, lane_change: None });
        let n = step(&w, 1.0, &c);
        assert_eq!(n.vehicles[0].speed, 0.0);
        assert_eq!(n.vehicles[0].s, 10.25);
        let n2 = step(&n, 1.0, &c);
        assert_eq!(n2.vehicles[0].s, 10.25);
    }

    #[test]
    fn lane_change_midpoint_and_completion() {
        let mut w = WorldState::new(road3(), vec![car(0, 1, 10.0, 10.0)], VehicleId(0)).unwrap();
        let mut c = Controls::new();
        c.insert(VehicleId(0), Control { accel: 0.0, lane_change: Some(Direction::Left) });
        let mut steps = 0;
        let mut last_progress = 0.0;
        loop {
            w = step(&w, 0.1, &c);
            steps += 1;
            match w.vehicles[0].lc {
                LaneChange::InProgress { progress, .. } => {
                    assert!(progress >= last_progress);
                    last_progress = progress;
                }
                LaneChange::None => break,
            }
            c.clear();
        }
        assert_eq!(steps, 20);
        assert_eq!(w.vehicles[0].lane_index, 2);
        assert_eq!(w.vehicles[0].y, road3().centerline(2));

        let mut v = car(0, 1, 0.0, 0.0);
        v.lc = LaneChange::InProgress { direction: Direction::Left, progress: 0.45 };
        let w = WorldState::new(road3(), vec![v], VehicleId(0)).unwrap();
        let n = step(&w, 0.1, &Controls::new());
        assert!((n.vehicles[0].y - 7.0).abs() < 1e-12);
    }

    #[test]
    fn lane_change_into_missing_lane_ignored() {
        let w = WorldState::new(road3(), vec![car(0, 2, 10.0, 10.0)], VehicleId(0)).unwrap();
        let mut c = Controls::new();
        c.insert(VehicleId(0), Control { accel: 0.0, lane_change: Some(Direction::Left) });
        let n = step(&w, 0.1, &c);
        assert_eq!(n.vehicles[0].lc, LaneChange::None);
    }

    #[test]
    fn collision_examples() {
        let w = WorldState {
            time: 0.0,
            road: road3(),
            vehicles: vec![car(0, 1, 10.0, 0.0), car(1, 1, 10.0 + VEHICLE_LENGTH + 1.0, 0.0)],
            ego_id: VehicleId(0),
        };
        assert!(collision_pairs(&w).is_empty());
        let w = WorldState {
            vehicles: vec![car(0, 1, 10.0, 0.0), car(1, 1, 10.0, 0.0)],
            ..w
        };
        let pairs = collision_pairs(&w);
        assert_eq!(pairs.len(), 1);
        assert!(pairs.contains(&(VehicleId(0), VehicleId(1))));
        assert!(WorldState::new(road3(), w.vehicles.clone(), VehicleId(0)).is_err());
    }

    #[test]
    fn touching_is_not_a_collision() {
        let w = WorldState {
            time: 0.0,
            road: road3(),
            vehicles: vec![car(0, 1, 10.0, 0.0), car(1, 1, 14.5, 0.0)],
            ego_id: VehicleId(0),
        };
        assert!(collision_pairs(&w).is_empty());
    }

    #[test]
    fn leader_examples() {
        let w = WorldState::new(
            road3(),
            vec![car(0, 1, 0.0, 10.0), car(1, 1, 30.0 + 4.5, 3.0), car(2, 1, 10.0 + 4.5, 7.0), car(3, 0, 5.0, 1.0)],
            VehicleId(0),
        )
        .unwrap();
        let l = leader_of(&w, VehicleId(0), 1).unwrap();
        assert_eq!(l.id, VehicleId(2));
        assert!((l.gap - 10.0).abs() < 1e-12);
        assert_eq!(l.speed, 7.0);
        assert!(leader_of(&w, VehicleId(0), 2).is_none());
        assert_eq!(follower_of(&w, VehicleId(1), 1).unwrap().id, VehicleId(2));
    }

    #[test]
    fn effective_lane_switches_at_half() {
        let mut v = car(0, 1, 0.0, 0.0);
        v.lc = LaneChange::InProgress { direction: Direction::Right, progress: 0.49 };
        assert_eq!(v.effective_lane(), 1);
        v.lc = LaneChange::InProgress { direction: Direction::Right, progress: 0.5 };
        assert_eq!(v.effective_lane(), 0);
        assert!(v.claims_lane(0) && v.claims_lane(1) && !v.claims_lane(2));
    }

    #[test]
    fn control_leader_sees_cut_in() {
        let mut cutter = car(1, 2, 20.0, 5.0);
        cutter.lc = LaneChange::InProgress { direction: Direction::Right, progress: 0.1 };
        let w = WorldState::new(road3(), vec![car(0, 1, 0.0, 10.0), cutter], VehicleId(0)).unwrap();
        assert!(leader_of(&w, VehicleId(0), 1).is_none());
        assert_eq!(control_leader(&w, VehicleId(0)).unwrap().id, VehicleId(1));
    }

    fn brute_force_pairs(w: &WorldState) -> BTreeSet<(VehicleId, VehicleId)> {
        let mut out = BTreeSet::new();
        for a in &w.vehicles {
            for b in &w.vehicles {
                if a.id < b.id {
                    let s_overlap = a.s - a.length / 2.0 < b.s + b.length / 2.0 && b.s - b.length / 2.0 < a.s + a.length / 2.0;
                    let y_overlap = a.y - a.width / 2.0 < b.y + b.width / 2.0 && b.y - b.width / 2.0 < a.y + a.width / 2.0;
                    if s_overlap && y_overlap {
                        out.insert((a.id, b.id));
                    }
                }
            }
        }
        out
    }

    fn brute_force_leader(w: &WorldState, id: VehicleId, lane: usize) -> Option<(VehicleId, f64)> {
        let me = w.vehicle(id).unwrap();
        let mut best: Option<(VehicleId, f64)> = None;
        for v in &w.vehicles {
            if v.id == id || v.s <= me.s || v.effective_lane() != lane {
                continue;
            }
            let gap = (v.s - v.length / 2.0) - (me.s + me.length / 2.0);
            if best.is_none_or(|(bid, g)| gap < g || (gap == g && v.id < bid)) {
                best = Some((v.id, gap));
            }
        }
        best
    }

    fn arb_world() -> impl Strategy<Value = WorldState> {
        prop::collection::vec((0usize..3, 0.0f64..40.0, -1.0f64..1.0, 0.0f64..1.0, prop::bool::ANY), 1..10).prop_map(
            |specs| {
                let road = road3();
                let vehicles = specs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (lane, s, dy, progress, changing))| {
                        let mut v = VehicleState::at_lane_center(VehicleId(i as u32), &road, lane, s, 5.0);
                        v.y += dy;
                        if changing && lane < 2 {
                            v.lc = LaneChange::InProgress { direction: Direction::Left, progress };
                        }
                        v
                    })
                    .collect();
                WorldState { time: 0.0, road, vehicles, ego_id: VehicleId(0) }
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn collision_pairs_match_brute_force(w in arb_world()) {
            prop_assert_eq!(collision_pairs(&w), brute_force_pairs(&w));
        }

        #[test]
        fn leader_matches_exhaustive_scan(w in arb_world(), lane in 0usize..3) {
            let got = leader_of(&w, VehicleId(0), lane).map(|l| (l.id, l.gap));
            let want = brute_force_leader(&w, VehicleId(0), lane);
            match (got, want) {
                (None, None) => {}
                (Some((a, ga)), Some((b, gb))) => {
                    prop_assert_eq!(a, b);
                    prop_assert!((ga - gb).abs() < 1e-9);
                }
                other => prop_assert!(false, "mismatch {:?}", other),
            }
        }

        #[test]
        fn idm_monotone_in_speed(v1 in 0.0f64..40.0, dv in 0.0f64..10.0, gap in 0.1f64..200.0, lead in 0.0f64..40.0) {
            let p = IdmParams::default();
            let lo = idm_acceleration(v1, Some((gap, lead)), &p).unwrap();
            let hi = idm_acceleration(v1 + dv, Some((gap, lead)), &p).unwrap();
            prop_assert!(hi <= lo + 1e-12);
            let free_lo = idm_acceleration(v1, None, &p).unwrap();
            let free_hi = idm_acceleration(v1 + dv, None, &p).unwrap();
            prop_assert!(free_hi <= free_lo + 1e-12);
        }

        #[test]
        fn idm_monotone_in_gap(v in 0.0f64..40.0, gap in 0.1f64..200.0, dg in 0.0f64..50.0, lead in 0.0f64..40.0) {
            let p = IdmParams::default();
            let near = idm_acceleration(v, Some((gap, lead)), &p).unwrap();
            let far = idm_acceleration(v, Some((gap + dg, lead)), &p).unwrap();
            prop_assert!(far >= near - 1e-12);
        }

        #[test]
        fn step_conserves_ids_and_is_deterministic(w in arb_world(), a in -6.0f64..1.5) {
            let mut c = Controls::new();
            for v in &w.vehicles {
                c.insert(v.id, Control { accel: a, lane_change: None });
            }
            let n1 = step(&w, 0.1, &c);
            let n2 = step(&w, 0.1, &c);
            prop_assert_eq!(&n1, &n2);
            prop_assert_eq!(n1.vehicles.len(), w.vehicles.len());
            for (x, y) in n1.vehicles.iter().zip(&w.vehicles) {
                prop_assert_eq!(x.id, y.id);
                prop_assert!(x.speed >= 0.0);
                prop_assert!(x.s >= y.s);
            }
            prop_assert!(n1.time > w.time);
        }
    }
}
