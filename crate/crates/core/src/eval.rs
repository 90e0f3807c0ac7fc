//! Batch evaluation and the report tables.
//!
//! Stochastic runs report safety, speed, lane-change and comfort averages
//! over random traffic; deterministic runs report per-class collision and
//! failure counts over the fixed suite together with the aggregate
//! safety and success rates.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DecisionRecord, EnvConfig, HighwayEnv, Observation, Policy, Termination};
use crate::scenarios::{
    gen_stochastic_test, instantiate_on, ScenarioClass, ScenarioError, ScenarioSet, Scene, TrafficConfig,
};
use crate::sim::to_kmh;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("stochastic evaluation needs at least one episode")]
    NoEpisodes,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("report parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub stochastic_episodes: usize,
    pub base_seed: u64,
    /// Time limit of one deterministic scenario, seconds.
    pub deterministic_horizon: f64,
    pub deterministic_segment_length: f64,
    pub stochastic: TrafficConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            stochastic_episodes: 250,
            base_seed: 1_000_000,
            deterministic_horizon: 60.0,
            deterministic_segment_length: crate::scenarios::DEFAULT_SEGMENT_LENGTH,
            stochastic: TrafficConfig::stochastic_test(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Scenario id (deterministic) or seed (stochastic).
    pub key: u64,
    pub collided: bool,
    /// Ended in a lane other than the initial one.
    pub succeeded: bool,
    pub termination: Termination,
    pub duration: f64,
    pub distance: f64,
    pub mean_speed_kmh: f64,
    pub lane_changes: usize,
    pub max_abs_accel: f64,
}

/// Runs `policy` on `scene` until the episode ends.
///
/// `observer` sees every observation the policy was shown, with the
/// decision taken on it.
pub fn run_episode_observed(
    policy: &mut dyn Policy,
    scene: Scene,
    key: u64,
    seed: u64,
    env_cfg: EnvConfig,
    observer: &mut dyn FnMut(&Observation, &DecisionRecord),
) -> EpisodeRecord {
    let mut env = HighwayEnv::new(scene, env_cfg, seed);
    let mut obs = env.observe();
    let mut lane_changes = 0;
    let mut max_abs_accel: f64 = 0.0;
    let mut step = 0;
    loop {
        let action = policy.act(env.scene(), &obs);
        let out = env.step(action);
        max_abs_accel = max_abs_accel.max(out.info.max_abs_accel);
        lane_changes += out.info.lane_change_executed as usize;
        let record = DecisionRecord {
            step,
            time: env.world().time,
            action,
            masked_action: out.info.masked_action,
            reward: out.reward,
            speed: out.info.speed,
            lane: env.world().ego().lane_index,
        };
        observer(&obs, &record);
        step += 1;
        obs = out.observation;
        if let Some(termination) = out.termination {
            let world = env.world();
            let duration = world.time;
            let distance = env.distance();
            return EpisodeRecord {
                key,
                collided: out.info.collided,
                succeeded: world.ego().lane_index != env.initial_lane(),
                termination,
                duration,
                distance,
                mean_speed_kmh: if duration > 0.0 { to_kmh(distance / duration) } else { 0.0 },
                lane_changes,
                max_abs_accel,
            };
        }
    }
}

pub fn run_episode(policy: &mut dyn Policy, scene: Scene, key: u64, seed: u64, env_cfg: EnvConfig) -> EpisodeRecord {
    run_episode_observed(policy, scene, key, seed, env_cfg, &mut |_, _| {})
}

/// Environment settings used for evaluation episodes of `policy`.
pub fn eval_env_config(policy: &dyn Policy, base: &EnvConfig, timeout: f64) -> EnvConfig {
    EnvConfig {
        rule_mask: policy.wants_rule_mask(),
        timeout,
        ..*base
    }
}

pub fn stochastic_episode(
    policy: &mut dyn Policy,
    seed: u64,
    cfg: &EvalConfig,
    env: &EnvConfig,
) -> Result<EpisodeRecord, EvalError> {
    let scene = gen_stochastic_test(seed, &cfg.stochastic)?;
    let env_cfg = eval_env_config(policy, env, env.timeout);
    Ok(run_episode(policy, scene, seed, seed, env_cfg))
}

pub fn deterministic_episode(
    policy: &mut dyn Policy,
    set: &ScenarioSet,
    id: u32,
    cfg: &EvalConfig,
    env: &EnvConfig,
) -> Result<EpisodeRecord, EvalError> {
    let scn = set.get(id).ok_or_else(|| ScenarioError::Format(format!("unknown scenario {id}")))?;
    let scene = instantiate_on(scn, cfg.deterministic_segment_length)?;
    let env_cfg = eval_env_config(policy, env, cfg.deterministic_horizon);
    Ok(run_episode(policy, scene, id as u64, id as u64, env_cfg))
}

/// Episodes on seeds `base_seed .. base_seed + n`, in seed order.
pub fn run_stochastic(
    policy: &mut dyn Policy,
    cfg: &EvalConfig,
    env: &EnvConfig,
) -> Result<(StochasticReport, Vec<EpisodeRecord>), EvalError> {
    if cfg.stochastic_episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let records = (0..cfg.stochastic_episodes as u64)
        .map(|i| stochastic_episode(policy, cfg.base_seed + i, cfg, env))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((StochasticReport::from_records(&records)?, records))
}

/// Parallel variant of [`run_stochastic`]; each episode gets its own clone
/// of `policy` and results are reduced in seed order.
pub fn run_stochastic_par<P: Policy + Clone + Send + Sync>(
    policy: &P,
    cfg: &EvalConfig,
    env: &EnvConfig,
) -> Result<(StochasticReport, Vec<EpisodeRecord>), EvalError> {
    if cfg.stochastic_episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let records = (0..cfg.stochastic_episodes as u64)
        .into_par_iter()
        .map(|i| stochastic_episode(&mut policy.clone(), cfg.base_seed + i, cfg, env))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((StochasticReport::from_records(&records)?, records))
}

pub fn run_deterministic(
    policy: &mut dyn Policy,
    set: &ScenarioSet,
    cfg: &EvalConfig,
    env: &EnvConfig,
) -> Result<(DeterministicReport, Vec<EpisodeRecord>), EvalError> {
    let records = set
        .scenarios
        .iter()
        .map(|s| deterministic_episode(policy, set, s.id, cfg, env))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((DeterministicReport::from_records(set, &records), records))
}

pub fn run_deterministic_par<P: Policy + Clone + Send + Sync>(
    policy: &P,
    set: &ScenarioSet,
    cfg: &EvalConfig,
    env: &EnvConfig,
) -> Result<(DeterministicReport, Vec<EpisodeRecord>), EvalError> {
    let records = set
        .scenarios
        .par_iter()
        .map(|s| deterministic_episode(&mut policy.clone(), set, s.id, cfg, env))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((DeterministicReport::from_records(set, &records), records))
}

// ---------------------------------------------------------------------------
// Reports

/// `100 * part / total` rounded half-up to tenths of a percent.
pub fn percent_tenths(part: usize, total: usize) -> u64 {
    assert!(total > 0 && part <= total);
    let (part, total) = (part as u64, total as u64);
    (2000 * part + total) / (2 * total)
}

pub fn format_percent(part: usize, total: usize) -> String {
    let t = percent_tenths(part, total);
    format!("{}.{}%", t / 10, t % 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticReport {
    pub episodes: usize,
    pub collisions: usize,
    pub avg_v: f64,
    pub avg_lc: f64,
    pub avg_maxacc: f64,
    /// Mean duration of collision-free episodes; `None` if every episode collided.
    pub avg_t: Option<f64>,
    pub avg_len: f64,
}

impl StochasticReport {
    pub fn from_records(records: &[EpisodeRecord]) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::NoEpisodes);
        }
        let n = records.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let safe: Vec<&EpisodeRecord> = records.iter().filter(|r| !r.collided).collect();
        Ok(Self {
            episodes: records.len(),
            collisions: records.len() - safe.len(),
            avg_v: mean(&|r| r.mean_speed_kmh),
            avg_lc: mean(&|r| r.lane_changes as f64),
            avg_maxacc: mean(&|r| r.max_abs_accel),
            avg_t: (!safe.is_empty()).then(|| safe.iter().map(|r| r.duration).sum::<f64>() / safe.len() as f64),
            avg_len: mean(&|r| r.distance),
        })
    }

    pub fn safety_rate(&self) -> f64 {
        100.0 * (self.episodes - self.collisions) as f64 / self.episodes as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: ScenarioClass,
    pub total: usize,
    pub collisions: usize,
    pub failures: usize,
    pub avg_maxacc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicReport {
    pub classes: Vec<ClassRow>,
    pub avg_maxacc: f64,
}

impl DeterministicReport {
    pub fn from_records(set: &ScenarioSet, records: &[EpisodeRecord]) -> Self {
        let classes = ScenarioClass::ALL
            .iter()
            .filter_map(|&class| {
                let rs: Vec<&EpisodeRecord> = records
                    .iter()
                    .filter(|r| set.get(r.key as u32).map(|s| s.class) == Some(class))
                    .collect();
                (!rs.is_empty()).then(|| ClassRow {
                    class,
                    total: rs.len(),
                    collisions: rs.iter().filter(|r| r.collided).count(),
                    failures: rs.iter().filter(|r| !r.succeeded).count(),
                    avg_maxacc: rs.iter().map(|r| r.max_abs_accel).sum::<f64>() / rs.len() as f64,
                })
            })
            .collect();
        Self::from_class_rows(classes)
    }

    /// Aggregates per-class rows; the overall average acceleration is the
    /// scenario-weighted mean of the class averages.
    pub fn from_class_rows(classes: Vec<ClassRow>) -> Self {
        let total: usize = classes.iter().map(|c| c.total).sum();
        let avg_maxacc = if total == 0 {
            0.0
        } else {
            classes.iter().map(|c| c.avg_maxacc * c.total as f64).sum::<f64>() / total as f64
        };
        Self { classes, avg_maxacc }
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.total).sum()
    }

    pub fn collisions(&self) -> usize {
        self.classes.iter().map(|c| c.collisions).sum()
    }

    pub fn failures(&self) -> usize {
        self.classes.iter().map(|c| c.failures).sum()
    }

    pub fn safe_count(&self) -> usize {
        self.total() - self.collisions()
    }

    pub fn success_count(&self) -> usize {
        self.total() - self.failures()
    }

    pub fn safety_rate(&self) -> f64 {
        100.0 * self.safe_count() as f64 / self.total() as f64
    }

    pub fn success_rate(&self) -> f64 {
        100.0 * self.success_count() as f64 / self.total() as f64
    }

    pub fn safety_rate_label(&self) -> String {
        format_percent(self.safe_count(), self.total())
    }

    pub fn success_rate_label(&self) -> String {
        format_percent(self.success_count(), self.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Plain,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [Self::Plain, Self::Csv, Self::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            Self::Plain => "txt",
            Self::Csv => "csv",
            Self::Markdown => "md",
        }
    }
}

fn table(rows: &[Vec<String>], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            for (i, row) in rows.iter().enumerate() {
                let _ = writeln!(out, "| {} |", row.join(" | "));
                if i == 0 {
                    let _ = writeln!(out, "|{}", "---|".repeat(row.len()));
                }
            }
        }
        ReportFormat::Plain => {
            let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
            let widths: Vec<usize> = (0..cols)
                .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
                .collect();
            for row in rows {
                let cells: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                    .collect();
                let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            }
        }
        ReportFormat::Csv => {
            for row in rows {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
    }
    out
}

/// Renders a stochastic report laid out like the stochastic results table:
/// one metric per row, one column per agent.
pub fn emit_stochastic(agent: &str, report: &StochasticReport, format: ReportFormat) -> String {
    if format == ReportFormat::Csv {
        let avg_t = report.avg_t.map_or_else(|| "nan".to_string(), |v| v.to_string());
        return table(
            &[
                vec!["metric".into(), agent.into()],
                vec!["episodes".into(), report.episodes.to_string()],
                vec!["collisions".into(), report.collisions.to_string()],
                vec!["Avg_v".into(), report.avg_v.to_string()],
                vec!["Avg_lc".into(), report.avg_lc.to_string()],
                vec!["Avg_maxacc".into(), report.avg_maxacc.to_string()],
                vec!["Avg_t".into(), avg_t],
                vec!["Avg_len".into(), report.avg_len.to_string()],
            ],
            format,
        );
    }
    let two = |v: f64| format!("{v:.2}");
    table(
        &[
            vec!["Agent".into(), agent.into()],
            vec!["SafetyRate".into(), format_percent(report.episodes - report.collisions, report.episodes)],
            vec!["Avg_v".into(), two(report.avg_v)],
            vec!["Avg_lc".into(), two(report.avg_lc)],
            vec!["Avg_maxacc".into(), two(report.avg_maxacc)],
            vec!["Avg_t".into(), report.avg_t.map_or_else(|| "n/a".into(), two)],
            vec!["Avg_len".into(), two(report.avg_len)],
            vec!["Episodes".into(), report.episodes.to_string()],
        ],
        format,
    )
}

/// Per-class table followed by the aggregate table.
pub fn emit_deterministic(agent: &str, report: &DeterministicReport, format: ReportFormat) -> String {
    if format == ReportFormat::Csv {
        let mut rows = vec![vec![
            "class".to_string(),
            "total".into(),
            "collisions".into(),
            "failures".into(),
            "avg_maxacc".into(),
        ]];
        for c in &report.classes {
            rows.push(vec![
                format!("{:?}", c.class),
                c.total.to_string(),
                c.collisions.to_string(),
                c.failures.to_string(),
                c.avg_maxacc.to_string(),
            ]);
        }
        return table(&rows, format);
    }
    let mut header = vec!["Logical scenario class".to_string()];
    header.extend(report.classes.iter().map(|c| c.class.label().to_string()));
    let row = |label: &str, f: &dyn Fn(&ClassRow) -> String| {
        let mut r = vec![label.to_string()];
        r.extend(report.classes.iter().map(f));
        r
    };
    let per_class = vec![
        header,
        row("Total scenario count", &|c| c.total.to_string()),
        row(&format!("Collision count ({agent})"), &|c| c.collisions.to_string()),
        row(&format!("Failure count ({agent})"), &|c| c.failures.to_string()),
        row(&format!("Average maximum acceleration ({agent})"), &|c| format!("{:.2}", c.avg_maxacc)),
    ];
    let aggregate = vec![
        vec!["Agent".to_string(), agent.to_string()],
        vec!["SafetyRate".into(), report.safety_rate_label()],
        vec!["SuccessRate".into(), report.success_rate_label()],
        vec!["Avg_maxacc".into(), format!("{:.2}", report.avg_maxacc)],
    ];
    format!("{}\n{}", table(&per_class, format), table(&aggregate, format))
}

pub fn parse_stochastic_csv(text: &str) -> Result<StochasticReport, EvalError> {
    let mut values = std::collections::BTreeMap::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once(',').ok_or_else(|| EvalError::Parse(line.into()))?;
        values.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| values.get(k).ok_or_else(|| EvalError::Parse(format!("missing {k}")));
    let num = |k: &str| -> Result<f64, EvalError> { get(k)?.parse().map_err(|_| EvalError::Parse(k.into())) };
    let int = |k: &str| -> Result<usize, EvalError> { get(k)?.parse().map_err(|_| EvalError::Parse(k.into())) };
    let avg_t = num("Avg_t")?;
    Ok(StochasticReport {
        episodes: int("episodes")?,
        collisions: int("collisions")?,
        avg_v: num("Avg_v")?,
        avg_lc: num("Avg_lc")?,
        avg_maxacc: num("Avg_maxacc")?,
        avg_t: (!avg_t.is_nan()).then_some(avg_t),
        avg_len: num("Avg_len")?,
    })
}

pub fn parse_deterministic_csv(text: &str) -> Result<DeterministicReport, EvalError> {
    let bad = |l: &str| EvalError::Parse(l.to_string());
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(line));
        }
        let class = ScenarioClass::ALL
            .into_iter()
            .find(|c| format!("{c:?}") == f[0])
            .ok_or_else(|| bad(line))?;
        rows.push(ClassRow {
            class,
            total: f[1].parse().map_err(|_| bad(line))?,
            collisions: f[2].parse().map_err(|_| bad(line))?,
            failures: f[3].parse().map_err(|_| bad(line))?,
            avg_maxacc: f[4].parse().map_err(|_| bad(line))?,
        });
    }
    Ok(DeterministicReport::from_class_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, HighwayEnv};
    use crate::scenarios::{enumerate_deterministic, SceneOrigin, EGO_ID};
    use crate::sim::{kmh, IdmParams, RoadModel, VehicleState, WorldState};
    use std::collections::BTreeMap;

    struct Fixed(Vec<Action>, usize);

    impl Policy for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn act(&mut self, _: &Scene, _: &Observation) -> Action {
            let a = self.0.get(self.1).copied().unwrap_or(Action::Keep);
            self.1 += 1;
            a
        }
        fn wants_rule_mask(&self) -> bool {
            false
        }
    }

    fn empty_scene() -> Scene {
        let road = RoadModel::new(3, 200.0).unwrap();
        Scene {
            world: WorldState::new(road, vec![VehicleState::at_lane_center(EGO_ID, &road, 1, 30.0, kmh(60.0))], EGO_ID)
                .unwrap(),
            behaviors: BTreeMap::new(),
            pending: vec![],
            ego_idm: IdmParams::default().with_desired_speed(kmh(60.0)),
            origin: SceneOrigin::Custom,
        }
    }

    #[test]
    fn keep_only_on_empty_road() {
        let r = run_episode(&mut Fixed(vec![], 0), empty_scene(), 0, 0, EnvConfig::default());
        assert!(!r.succeeded && !r.collided);
        assert_eq!(r.lane_changes, 0);
        assert_eq!(r.termination, Termination::SegmentEnd);
    }

    #[test]
    fn immediate_left_succeeds() {
        let r = run_episode(&mut Fixed(vec![Action::Left], 0), empty_scene(), 0, 0, EnvConfig::default());
        assert!(r.succeeded && !r.collided);
        assert_eq!(r.lane_changes, 1);
        let again = run_episode(&mut Fixed(vec![Action::Left], 0), empty_scene(), 0, 0, EnvConfig::default());
        assert_eq!(r, again);
        let _ = HighwayEnv::new(empty_scene(), EnvConfig::default(), 0);
    }

    fn record(collided: bool, lane_changes: usize) -> EpisodeRecord {
        EpisodeRecord {
            key: 0,
            collided,
            succeeded: lane_changes > 0,
            termination: if collided { Termination::Collision } else { Termination::SegmentEnd },
            duration: 10.0,
            distance: 100.0,
            mean_speed_kmh: 36.0,
            lane_changes,
            max_abs_accel: 1.0,
        }
    }

    #[test]
    fn stochastic_rates() {
        let all_safe: Vec<_> = (0..10).map(|_| record(false, 1)).collect();
        let r = StochasticReport::from_records(&all_safe).unwrap();
        assert_eq!(r.safety_rate(), 100.0);
        assert_eq!(r.avg_lc, 1.0);
        let mut mixed: Vec<_> = (0..244).map(|_| record(false, 0)).collect();
        mixed.extend((0..6).map(|_| record(true, 0)));
        let r = StochasticReport::from_records(&mixed).unwrap();
        assert_eq!(format_percent(r.episodes - r.collisions, r.episodes), "97.6%");
        assert!(StochasticReport::from_records(&[]).is_err());
    }

    #[test]
    fn stochastic_rejects_zero_episodes() {
        let cfg = EvalConfig {
            stochastic_episodes: 0,
            ..EvalConfig::default()
        };
        assert!(matches!(
            run_stochastic(&mut Fixed(vec![], 0), &cfg, &EnvConfig::default()),
            Err(EvalError::NoEpisodes)
        ));
    }

    fn mobil_table2_rows() -> Vec<ClassRow> {
        let collisions = [0, 0, 0, 0, 2];
        let failures = [0, 0, 1, 14, 0];
        ScenarioClass::ALL
            .iter()
            .enumerate()
            .map(|(i, &class)| ClassRow {
                class,
                total: class.expected_count(),
                collisions: collisions[i],
                failures: failures[i],
                avg_maxacc: 0.0,
            })
            .collect()
    }

    #[test]
    fn deterministic_rates() {
        let r = DeterministicReport::from_class_rows(mobil_table2_rows());
        assert_eq!(r.safety_rate_label(), "99.5%");
        assert_eq!(r.success_rate_label(), "96.4%");
        let clean: Vec<ClassRow> = mobil_table2_rows()
            .into_iter()
            .map(|c| ClassRow { collisions: 0, failures: 0, ..c })
            .collect();
        let r = DeterministicReport::from_class_rows(clean);
        assert_eq!((r.safety_rate_label().as_str(), r.success_rate_label().as_str()), ("100.0%", "100.0%"));
    }

    #[test]
    fn percent_matches_rational_rounding() {
        for total in 1..=500usize {
            for part in 0..=total {
                // Exact rational: tenths = 1000 * part / total, rounded half up.
                let num = 1000 * part;
                let (q, r) = (num / total, num % total);
                let want = if 2 * r >= total { q + 1 } else { q };
                assert_eq!(percent_tenths(part, total), want as u64, "{part}/{total}");
            }
        }
    }

    #[test]
    fn markdown_row_labels() {
        let r = DeterministicReport::from_class_rows(mobil_table2_rows());
        let md = emit_deterministic("MOBIL", &r, ReportFormat::Markdown);
        for label in ["SafetyRate", "SuccessRate", "Avg_maxacc", "Total scenario count", "(e)"] {
            assert!(md.contains(label), "{label}");
        }
        assert!(md.contains("| SafetyRate | 99.5% |"));
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = mobil_table2_rows();
        rows[3].avg_maxacc = 1.3312345678;
        let r = DeterministicReport::from_class_rows(rows);
        let parsed = parse_deterministic_csv(&emit_deterministic("x", &r, ReportFormat::Csv)).unwrap();
        assert_eq!(parsed, r);

        let mut recs: Vec<_> = (0..7).map(|_| record(false, 2)).collect();
        recs[0].max_abs_accel = 2.123456789;
        let s = StochasticReport::from_records(&recs).unwrap();
        assert_eq!(parse_stochastic_csv(&emit_stochastic("x", &s, ReportFormat::Csv)).unwrap(), s);
    }

    #[test]
    fn aggregate_equals_sum_of_classes() {
        let set = enumerate_deterministic();
        let records: Vec<EpisodeRecord> = set
            .scenarios
            .iter()
            .map(|s| EpisodeRecord { key: s.id as u64, ..record(s.id % 7 == 0, (s.id % 3) as usize) })
            .collect();
        let r = DeterministicReport::from_records(&set, &records);
        assert_eq!(r.total(), 422);
        assert_eq!(r.collisions(), records.iter().filter(|r| r.collided).count());
        assert_eq!(r.failures(), records.iter().filter(|r| !r.succeeded).count());
    }
}
