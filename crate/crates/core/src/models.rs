//! Longitudinal driver reference models.
//!
//! All four models only brake; none steers or accelerates. Reg157 and CCHDM
//! react to the time-to-collision of the gated lead vehicle. RSS brakes when
//! both its longitudinal and lateral safe distances are violated. FSM uses a
//! proactive and a critical fuzzy safety score.
//!
//! Only the Reg157 reaction time and deceleration and the CCHDM constants are
//! fixed published values. The Reg157 threshold function and every RSS and
//! FSM constant are reconstruction choices and can be overridden through
//! [`ModelParams`].

use serde::{Deserialize, Serialize};

use crate::criteria::compute_ttc;
use crate::kinematics::{max_approach, Motion, Phase};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Reg157,
    #[serde(rename = "CCHDM")]
    Cchdm,
    #[serde(rename = "RSS")]
    Rss,
    #[serde(rename = "FSM")]
    Fsm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Reg157, ModelKind::Cchdm, ModelKind::Rss, ModelKind::Fsm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Reg157 => "Reg157",
            ModelKind::Cchdm => "CCHDM",
            ModelKind::Rss => "RSS",
            ModelKind::Fsm => "FSM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Reg157Params {
    pub reaction_time: f64,
    pub decel: f64,
    /// TTC threshold τ(v_rel) = v_rel / (2 · threshold_decel) + threshold_reaction.
    pub threshold_decel: f64,
    pub threshold_reaction: f64,
}

impl Default for Reg157Params {
    fn default() -> Self {
        Reg157Params {
            reaction_time: 0.35,
            decel: 6.0,
            threshold_decel: 6.0,
            threshold_reaction: 0.35,
        }
    }
}

impl Reg157Params {
    pub fn ttc_threshold(&self, v_rel: f64) -> f64 {
        v_rel / (2.0 * self.threshold_decel) + self.threshold_reaction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CchdmParams {
    pub trigger_ttc: f64,
    pub delay: f64,
    pub pedal_release_decel: f64,
    pub max_decel: f64,
    pub jerk: f64,
}

impl Default for CchdmParams {
    fn default() -> Self {
        CchdmParams {
            trigger_ttc: 2.0,
            delay: 0.6,
            pedal_release_decel: 0.4,
            max_decel: 7.59,
            jerk: 12.65,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RssParams {
    pub response_time: f64,
    pub accel_max: f64,
    pub brake_min: f64,
    pub brake_max: f64,
    pub lat_accel_max: f64,
    pub lat_brake_min: f64,
    pub lat_margin: f64,
}

impl Default for RssParams {
    fn default() -> Self {
        RssParams {
            response_time: 0.75,
            accel_max: 2.0,
            brake_min: 4.0,
            brake_max: 7.59,
            lat_accel_max: 0.2,
            lat_brake_min: 0.8,
            lat_margin: 0.1,
        }
    }
}

impl RssParams {
    /// Minimum safe longitudinal gap behind a lead.
    pub fn safe_longitudinal(&self, v_rear: f64, v_front: f64) -> f64 {
        let rho = self.response_time;
        let v_after = v_rear + rho * self.accel_max;
        let d = v_rear * rho + 0.5 * self.accel_max * rho * rho + v_after * v_after / (2.0 * self.brake_min)
            - v_front * v_front / (2.0 * self.brake_max);
        d.max(0.0)
    }

    /// Minimum safe lateral clearance when the ego holds its lateral position
    /// and the actor approaches at `v_toward` (negative when moving away).
    pub fn safe_lateral(&self, v_toward: f64) -> f64 {
        let rho = self.response_time;
        let a = self.lat_accel_max;
        let b = self.lat_brake_min;
        let ego_part = a * rho * rho / 2.0 + (a * rho).powi(2) / (2.0 * b);
        let v_after = v_toward + a * rho;
        let actor_part = v_toward * rho + a * rho * rho / 2.0 + v_after.max(0.0).powi(2) / (2.0 * b);
        self.lat_margin + (ego_part + actor_part).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsmParams {
    pub reaction_time: f64,
    /// Deceleration commanded at full proactive severity.
    pub comfortable_decel: f64,
    /// Deceleration commanded at full critical severity.
    pub critical_decel: f64,
    /// Hardest braking the lead is assumed capable of in the proactive score.
    pub lead_max_decel: f64,
}

impl Default for FsmParams {
    fn default() -> Self {
        FsmParams {
            reaction_time: 0.75,
            comfortable_decel: 3.0,
            critical_decel: 7.59,
            lead_max_decel: 7.59,
        }
    }
}

impl FsmParams {
    /// Proactive fuzzy safety score in [0, 1]: the lead may brake at its
    /// maximum; safe if the ego stops comfortably behind it, unsafe if even
    /// critical braking does not suffice.
    pub fn proactive_score(&self, gap: f64, v_ego: f64, v_lead: f64) -> f64 {
        let lead = Motion::constant_accel(v_lead, -self.lead_max_decel);
        self.score(gap, v_ego, &lead)
    }

    /// Critical fuzzy safety score in [0, 1]: the lead keeps its current acceleration.
    pub fn critical_score(&self, gap: f64, v_ego: f64, v_lead: f64, a_lead: f64) -> f64 {
        let lead = Motion::constant_accel(v_lead, a_lead);
        self.score(gap, v_ego, &lead)
    }

    fn score(&self, gap: f64, v_ego: f64, lead: &Motion) -> f64 {
        let react = |decel: f64| Motion {
            v0: v_ego,
            phases: vec![
                Phase::hold(self.reaction_time, 0.0),
                Phase::hold(f64::INFINITY, -decel),
            ],
        };
        let safe = max_approach(&react(self.comfortable_decel), lead);
        let unsafe_ = max_approach(&react(self.critical_decel), lead);
        fuzzy(gap, safe, unsafe_)
    }
}

fn fuzzy(gap: f64, safe: f64, unsafe_: f64) -> f64 {
    if gap >= safe {
        0.0
    } else if gap <= unsafe_ || safe - unsafe_ <= EPS {
        1.0
    } else {
        (safe - gap) / (safe - unsafe_)
    }
}

/// Resolved constants for all four models.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub reg157: Reg157Params,
    pub cchdm: CchdmParams,
    pub rss: RssParams,
    pub fsm: FsmParams,
}

impl ModelParams {
    /// Largest deceleration magnitude `kind` may command.
    pub fn max_decel(&self, kind: ModelKind) -> f64 {
        match kind {
            ModelKind::Reg157 => self.reg157.decel,
            ModelKind::Cchdm => self.cchdm.max_decel,
            ModelKind::Rss => self.rss.brake_max,
            ModelKind::Fsm => self.fsm.comfortable_decel.max(self.fsm.critical_decel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrakePhase {
    #[default]
    Cruising,
    TriggeredWaiting,
    Braking,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelState {
    pub phase: BrakePhase,
    pub trigger_time: Option<f64>,
    pub commanded_accel: f64,
}

/// One perceived actor, relative to the ego.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorPerception {
    /// Bumper-to-bumper gap; negative when the boxes overlap longitudinally.
    pub gap: f64,
    /// Actor center minus ego center, lateral.
    pub lateral_offset: f64,
    /// Edge-to-edge lateral clearance; negative when the boxes overlap laterally.
    pub lateral_clearance: f64,
    pub v_lon: f64,
    pub a_lon: f64,
    /// Lateral speed towards the ego.
    pub v_lat_toward: f64,
    /// Passes the lateral-overlap gate.
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Perception {
    pub v_ego: f64,
    /// Actors whose center is ahead of the ego center.
    pub ahead: Vec<ActorPerception>,
}

impl Perception {
    /// Closest gated actor ahead with positive gap.
    pub fn lead(&self) -> Option<&ActorPerception> {
        self.ahead
            .iter()
            .filter(|a| a.gated && a.gap > 0.0)
            .min_by(|a, b| a.gap.total_cmp(&b.gap))
    }
}

/// Advances `state` by one step and returns it with the commanded acceleration.
pub fn step(
    kind: ModelKind,
    params: &ModelParams,
    state: ModelState,
    perception: &Perception,
    t: f64,
    _dt: f64,
) -> (ModelState, f64) {
    let mut next = match kind {
        ModelKind::Reg157 => step_reg157(&params.reg157, state, perception, t),
        ModelKind::Cchdm => step_cchdm(&params.cchdm, state, perception, t),
        ModelKind::Rss => step_rss(&params.rss, state, perception),
        ModelKind::Fsm => step_fsm(&params.fsm, state, perception),
    };
    next.commanded_accel = next.commanded_accel.clamp(-params.max_decel(kind), 0.0);
    (next, next.commanded_accel)
}

fn lead_ttc(p: &Perception) -> Option<(f64, f64)> {
    let lead = p.lead()?;
    let ttc = compute_ttc(lead.gap, p.v_ego, lead.v_lon, true)?;
    Some((ttc, p.v_ego - lead.v_lon))
}

/// Braking ends once the gated lead is no longer approached (or is gone).
fn threat_cleared(p: &Perception) -> bool {
    p.lead().is_none_or(|l| p.v_ego - l.v_lon <= 0.0)
}

fn step_reg157(prm: &Reg157Params, mut s: ModelState, p: &Perception, t: f64) -> ModelState {
    if s.phase == BrakePhase::Braking && threat_cleared(p) {
        s = ModelState::default();
    }
    if s.phase == BrakePhase::Cruising {
        if let Some((ttc, v_rel)) = lead_ttc(p) {
            if ttc < prm.ttc_threshold(v_rel) {
                s.phase = BrakePhase::TriggeredWaiting;
                s.trigger_time = Some(t);
            }
        }
    }
    if s.phase == BrakePhase::TriggeredWaiting {
        let since = t - s.trigger_time.unwrap_or(t);
        if since >= prm.reaction_time - EPS {
            s.phase = BrakePhase::Braking;
        }
    }
    s.commanded_accel = match s.phase {
        BrakePhase::Braking => -prm.decel,
        _ => 0.0,
    };
    s
}

fn step_cchdm(prm: &CchdmParams, mut s: ModelState, p: &Perception, t: f64) -> ModelState {
    if s.phase == BrakePhase::Braking && threat_cleared(p) {
        s = ModelState::default();
    }
    if s.phase == BrakePhase::Cruising {
        if let Some((ttc, _)) = lead_ttc(p) {
            if ttc < prm.trigger_ttc {
                s.phase = BrakePhase::TriggeredWaiting;
                s.trigger_time = Some(t);
            }
        }
    }
    let since = t - s.trigger_time.unwrap_or(t);
    if s.phase == BrakePhase::TriggeredWaiting && since >= prm.delay - EPS {
        s.phase = BrakePhase::Braking;
    }
    s.commanded_accel = match s.phase {
        BrakePhase::Cruising => 0.0,
        BrakePhase::TriggeredWaiting => -prm.pedal_release_decel,
        BrakePhase::Braking => {
            // brake build-up from zero at the jerk limit; the pedal release
            // deceleration stays in effect until the ramp exceeds it
            let ramp = prm.jerk * (since - prm.delay).max(0.0);
            -(ramp.max(prm.pedal_release_decel)).min(prm.max_decel)
        }
    };
    s
}

fn step_rss(prm: &RssParams, mut s: ModelState, p: &Perception) -> ModelState {
    let mut decel: f64 = 0.0;
    for a in &p.ahead {
        let long = a.gap < prm.safe_longitudinal(p.v_ego, a.v_lon);
        let lat = a.lateral_clearance < prm.safe_lateral(a.v_lat_toward);
        if long && lat {
            let closing = p.v_ego - a.v_lon;
            let needed = if closing > 0.0 && a.gap > 0.0 {
                closing * closing / (2.0 * a.gap)
            } else {
                0.0
            };
            decel = decel.max(prm.brake_min.max(needed.min(prm.brake_max)));
        }
    }
    s.phase = if decel > 0.0 {
        BrakePhase::Braking
    } else {
        BrakePhase::Cruising
    };
    s.trigger_time = None;
    s.commanded_accel = -decel;
    s
}

fn step_fsm(prm: &FsmParams, mut s: ModelState, p: &Perception) -> ModelState {
    let decel = match p.lead() {
        Some(l) => {
            let pfs = prm.proactive_score(l.gap, p.v_ego, l.v_lon);
            let cfs = prm.critical_score(l.gap, p.v_ego, l.v_lon, l.a_lon);
            (prm.comfortable_decel * pfs).max(prm.critical_decel * cfs)
        }
        None => 0.0,
    };
    s.phase = if decel > 0.0 {
        BrakePhase::Braking
    } else {
        BrakePhase::Cruising
    };
    s.trigger_time = None;
    s.commanded_accel = -decel;
    s
}
