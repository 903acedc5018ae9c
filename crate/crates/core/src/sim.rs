//! Closed-loop replay of a scenario against one driver model.
//!
//! Actors follow their recorded (or synthesized) trajectories open-loop and
//! continue at constant velocity once their samples run out. The ego starts
//! in the ego lane center, `thw` seconds of headway behind the reference
//! actor, and integrates the model command with semi-implicit Euler.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{evaluate_all, BtnLimits, CriterionResult};
use crate::error::{Error, Result};
use crate::ingest::VehicleTrack;
use crate::mining::{state_at, Category, ScenarioInstance};
use crate::models::{self, ActorPerception, ModelKind, ModelParams, ModelState, Perception};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub length: f64,
    pub width: f64,
}

impl BodyState {
    pub fn overlaps(&self, other: &BodyState) -> bool {
        (other.x - self.x).abs() < (self.length + other.length) / 2.0
            && (other.y - self.y).abs() < (self.width + other.width) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub ego: BodyState,
    pub actors: Vec<BodyState>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub samples: Vec<TraceSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step; `None` uses the scenario sample period.
    pub dt: Option<f64>,
    pub thw_grid: Vec<f64>,
    /// Extra time simulated after the scenario window, s.
    pub tail: f64,
    pub perception_range: f64,
    pub btn: BtnLimits,
    pub models: ModelParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: None,
            thw_grid: default_thw_grid(),
            tail: 5.0,
            perception_range: 100.0,
            btn: BtnLimits::default(),
            models: ModelParams::default(),
        }
    }
}

/// 2.0 s down to 0.2 s in steps of 0.2 s.
pub fn default_thw_grid() -> Vec<f64> {
    (1..=10).rev().map(|k| k as f64 / 5.0).collect()
}

/// Criterion results of one (scenario, variant, model, thw) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub category: Category,
    pub scenario_id: String,
    pub variant: String,
    pub model: ModelKind,
    pub thw: f64,
    pub results: [CriterionResult; 3],
    pub collision_time: Option<f64>,
}

/// Failed run, reported instead of an outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimError {
    pub category: Category,
    pub scenario_id: String,
    pub variant: String,
    pub model: ModelKind,
    pub thw: f64,
    pub message: String,
}

fn actor_state(track: &VehicleTrack, t: f64) -> Option<BodyState> {
    let body = |x, y, vx, vy, ax| BodyState {
        id: track.id,
        x,
        y,
        vx,
        vy,
        ax,
        length: track.length,
        width: track.width,
    };
    let first = track.samples.first()?;
    let last = track.samples.last()?;
    if t < first.t - 1e-9 {
        return None;
    }
    if t > last.t + 1e-9 {
        let h = t - last.t;
        return Some(body(last.x + last.vx * h, last.y + last.vy * h, last.vx, last.vy, 0.0));
    }
    state_at(track, t).map(|s| body(s.x, s.y, s.vx, s.vy, s.ax))
}

/// Simulates one scenario; `thw` places the ego behind the principal actor.
pub fn run(
    inst: &ScenarioInstance,
    model: ModelKind,
    thw: f64,
    cfg: &SimConfig,
) -> Result<(SimTrace, [CriterionResult; 3])> {
    let dt = cfg.dt.unwrap_or(inst.dt);
    if !(dt > 0.0) || !(thw >= 0.0) {
        return Err(Error::SimConfig(format!("invalid dt {dt} or thw {thw}")));
    }
    let ego0 = inst
        .ego
        .samples
        .first()
        .ok_or_else(|| Error::SimConfig(format!("{}: empty ego track", inst.id)))?;
    let reference = actor_state(&inst.principal, inst.t_start).ok_or_else(|| {
        Error::SimConfig(format!("{}: reference actor absent at window start", inst.id))
    })?;
    if reference.x <= ego0.x {
        return Err(Error::SimConfig(format!(
            "{}: reference actor is behind the ego at window start",
            inst.id
        )));
    }
    let (le, we) = (inst.ego.length, inst.ego.width);
    let mut ego = BodyState {
        id: inst.ego_id,
        x: reference.x - (reference.length + le) / 2.0 - thw * ego0.vx,
        y: inst.ego_lane_center,
        vx: ego0.vx.max(0.0),
        vy: 0.0,
        ax: 0.0,
        length: le,
        width: we,
    };
    let steps = ((inst.duration() + cfg.tail) / dt + 1e-6).floor() as usize;
    let mut state = ModelState::default();
    let mut trace = SimTrace::default();
    for k in 0..=steps {
        let t = inst.t_start + k as f64 * dt;
        let actors: Vec<BodyState> = inst.actors().filter_map(|a| actor_state(a, t)).collect();
        let perception = perceive(&ego, &actors, cfg.perception_range);
        let (next, accel) = models::step(model, &cfg.models, state, &perception, t, dt);
        state = next;
        ego.ax = accel;
        let collided = actors.iter().any(|a| ego.overlaps(a));
        trace.samples.push(TraceSample { t, ego, actors });
        if collided {
            break;
        }
        ego.vx = (ego.vx + accel * dt).max(0.0);
        ego.x += ego.vx * dt;
    }
    let results = evaluate_all(&trace, &cfg.btn);
    Ok((trace, results))
}

/// Relative view of the actors ahead of the ego within `range`.
pub fn perceive(ego: &BodyState, actors: &[BodyState], range: f64) -> Perception {
    let ahead = actors
        .iter()
        .filter(|a| a.x > ego.x)
        .filter(|a| (a.x - ego.x).hypot(a.y - ego.y) <= range)
        .map(|a| {
            let dy = a.y - ego.y;
            let clearance = dy.abs() - (a.width + ego.width) / 2.0;
            ActorPerception {
                gap: a.x - ego.x - (a.length + ego.length) / 2.0,
                lateral_offset: dy,
                lateral_clearance: clearance,
                v_lon: a.vx,
                a_lon: a.ax,
                v_lat_toward: if dy == 0.0 { 0.0 } else { -a.vy * dy.signum() },
                gated: clearance <= 0.0,
            }
        })
        .collect();
    Perception {
        v_ego: ego.vx,
        ahead,
    }
}

/// One scenario variant to replay.
#[derive(Debug, Clone)]
pub struct SimJob {
    /// Id of the mined scenario the instance derives from; outcomes pair on it.
    pub scenario_id: String,
    pub variant: String,
    pub instance: ScenarioInstance,
}

impl SimJob {
    pub fn baseline(instance: ScenarioInstance) -> Self {
        SimJob {
            scenario_id: instance.id.clone(),
            variant: crate::eval::BASELINE.to_string(),
            instance,
        }
    }

    /// A synthesized `instance` of `variant` derived from `scenario_id`.
    pub fn variant(scenario_id: &str, variant: &str, instance: ScenarioInstance) -> Self {
        SimJob {
            scenario_id: scenario_id.to_string(),
            variant: variant.to_string(),
            instance,
        }
    }
}

/// Runs every job against every model and THW. Results come back in
/// job, model, THW order regardless of scheduling.
pub fn sweep(jobs: &[SimJob], models: &[ModelKind], cfg: &SimConfig) -> (Vec<SimOutcome>, Vec<SimError>) {
    let tasks: Vec<(&SimJob, ModelKind, f64)> = jobs
        .iter()
        .flat_map(|j| {
            models
                .iter()
                .flat_map(move |&m| cfg.thw_grid.iter().map(move |&thw| (j, m, thw)))
        })
        .collect();
    let results: Vec<std::result::Result<SimOutcome, SimError>> = tasks
        .par_iter()
        .map(|&(job, model, thw)| {
            let inst = &job.instance;
            match run(inst, model, thw, cfg) {
                Ok((trace, results)) => Ok(SimOutcome {
                    category: inst.category,
                    scenario_id: job.scenario_id.clone(),
                    variant: job.variant.clone(),
                    model,
                    thw,
                    collision_time: results[0].failed.then(|| trace.samples.last().map(|s| s.t)).flatten(),
                    results,
                }),
                Err(e) => Err(SimError {
                    category: inst.category,
                    scenario_id: job.scenario_id.clone(),
                    variant: job.variant.clone(),
                    model,
                    thw,
                    message: e.to_string(),
                }),
            }
        })
        .collect();
    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => errors.push(e),
        }
    }
    (outcomes, errors)
}

#[derive(Debug, Serialize, Deserialize)]
struct OutcomeRow {
    category: Category,
    scenario_id: String,
    variant: String,
    model: ModelKind,
    criterion: String,
    thw: f64,
    failed: bool,
    worst_value: Option<f64>,
    worst_time: Option<f64>,
}

/// One CSV row per (outcome, criterion).
pub fn write_outcomes<W: std::io::Write>(out: W, outcomes: &[SimOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in outcomes {
        for r in &o.results {
            w.serialize(OutcomeRow {
                category: o.category,
                scenario_id: o.scenario_id.clone(),
                variant: o.variant.clone(),
                model: o.model,
                criterion: r.kind.as_str().to_string(),
                thw: o.thw,
                failed: r.failed,
                worst_value: r.worst_value,
                worst_time: r.worst_time,
            })?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Reads rows written by [`write_outcomes`]; lines starting with `#` are skipped.
pub fn read_outcomes<R: std::io::Read>(input: R) -> Result<Vec<SimOutcome>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out: Vec<SimOutcome> = Vec::new();
    for row in r.deserialize::<OutcomeRow>() {
        let row = row?;
        let kind = crate::criteria::CriterionKind::parse(&row.criterion)
            .ok_or_else(|| Error::Format(format!("unknown criterion `{}`", row.criterion)))?;
        let result = CriterionResult {
            kind,
            failed: row.failed,
            worst_value: row.worst_value,
            worst_time: row.worst_time,
        };
        let same = out.last().is_some_and(|o| {
            o.scenario_id == row.scenario_id && o.variant == row.variant && o.model == row.model && o.thw == row.thw
        });
        if !same {
            out.push(SimOutcome {
                category: row.category,
                scenario_id: row.scenario_id,
                variant: row.variant,
                model: row.model,
                thw: row.thw,
                results: crate::criteria::CriterionKind::ALL.map(|k| CriterionResult {
                    kind: k,
                    failed: false,
                    worst_value: None,
                    worst_time: None,
                }),
                collision_time: None,
            });
        }
        let o = out.last_mut().expect("pushed above");
        let slot = crate::criteria::CriterionKind::ALL
            .iter()
            .position(|&k| k == kind)
            .expect("kind in ALL");
        o.results[slot] = result;
        if kind == crate::criteria::CriterionKind::Collision && result.failed {
            o.collision_time = result.worst_time;
        }
    }
    Ok(out)
}

/// Writes run failures as CSV.
pub fn write_sim_errors<W: std::io::Write>(out: W, errors: &[SimError]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in errors {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Sample, VehicleClass};
    use std::collections::BTreeMap;

    fn track(id: u32, n: i64, dt: f64, f: impl Fn(f64) -> (f64, f64)) -> VehicleTrack {
        VehicleTrack {
            id,
            samples: (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    let (x, vx) = f(t);
                    Sample {
                        frame: k,
                        t,
                        x,
                        y: 11.875,
                        vx,
                        vy: 0.0,
                        ax: 0.0,
                        ay: 0.0,
                        lane_id: 2,
                    }
                })
                .collect(),
            length: 4.0,
            width: 2.0,
            class: VehicleClass::Car,
        }
    }

    pub(crate) fn stationary_lead(v_ego: f64, n: i64) -> ScenarioInstance {
        let dt = 0.04;
        let ego = track(1, n, dt, |t| (v_ego * t, v_ego));
        let lead = track(2, n, dt, |_| (200.0, 0.0));
        ScenarioInstance {
            id: "test".into(),
            category: Category::Lvd,
            recording_id: 1,
            ego_id: 1,
            principal_id: 2,
            secondary_id: None,
            key_time: 0.0,
            t_start: 0.0,
            t_end: (n - 1) as f64 * dt,
            dt,
            maneuver_start: 0.0,
            maneuver_end: 1.0,
            ego_lane_center: 11.875,
            crossing_marking: None,
            lateral_direction: None,
            ego,
            principal: lead,
            secondary: None,
            filters: BTreeMap::new(),
            flags: Vec::new(),
        }
    }

    #[test]
    fn initial_headway_matches_thw() {
        let inst = stationary_lead(20.0, 50);
        let (trace, _) = run(&inst, ModelKind::Reg157, 1.2, &SimConfig::default()).unwrap();
        let s = &trace.samples[0];
        let gap = s.actors[0].x - s.ego.x - 4.0;
        assert!((gap - 24.0).abs() < 1e-9);
    }

    #[test]
    fn stops_at_collision() {
        // 0.2 s headway at 20 m/s into a wall: no model can stop
        let inst = stationary_lead(20.0, 50);
        let (trace, res) = run(&inst, ModelKind::Reg157, 0.2, &SimConfig::default()).unwrap();
        assert!(res[0].failed);
        let last = trace.samples.last().unwrap();
        assert!(last.ego.overlaps(&last.actors[0]));
        assert!(trace.samples[..trace.samples.len() - 1]
            .iter()
            .all(|s| !s.ego.overlaps(&s.actors[0])));
    }

    #[test]
    fn reference_behind_is_config_error() {
        let mut inst = stationary_lead(20.0, 50);
        for s in &mut inst.principal.samples {
            s.x = -50.0;
        }
        assert!(matches!(
            run(&inst, ModelKind::Rss, 1.0, &SimConfig::default()),
            Err(Error::SimConfig(_))
        ));
    }

    #[test]
    fn constant_velocity_tail() {
        let inst = stationary_lead(20.0, 25);
        let a = &inst.principal;
        let s = actor_state(a, 3.0).unwrap();
        assert_eq!(s.x, 200.0);
        let mut moving = inst.principal.clone();
        for s in &mut moving.samples {
            s.vx = 2.0;
        }
        let s = actor_state(&moving, 0.96 + 1.0).unwrap();
        assert!((s.x - 202.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_order_and_csv_round_trip() {
        let jobs = vec![SimJob::baseline(stationary_lead(20.0, 50))];
        let cfg = SimConfig::default();
        let (outcomes, errors) = sweep(&jobs, &ModelKind::ALL, &cfg);
        assert!(errors.is_empty());
        assert_eq!(outcomes.len(), 4 * cfg.thw_grid.len());
        assert_eq!(outcomes[0].model, ModelKind::ALL[0]);
        assert_eq!(outcomes[1].thw, cfg.thw_grid[1]);
        let mut buf = Vec::new();
        write_outcomes(&mut buf, &outcomes).unwrap();
        let back = read_outcomes(buf.as_slice()).unwrap();
        assert_eq!(back.len(), outcomes.len());
        for (a, b) in back.iter().zip(&outcomes) {
            assert_eq!(a.results, b.results);
        }
    }
}
