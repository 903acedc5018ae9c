//! Pass/fail criteria evaluated over a simulation trace.
//!
//! TTC and BTN are only evaluated for actors ahead of the ego whose lateral
//! center offset does not exceed the summed half widths (bounding-box
//! overlap). Collisions use axis-aligned rectangles and therefore include
//! side impacts that never pass the gate.

use serde::{Deserialize, Serialize};

use crate::kinematics::{max_approach, Motion, Phase};
use crate::sim::{BodyState, SimTrace};

pub const TTC_THRESHOLD: f64 = 1.0;
pub const BTN_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Collision,
    TtcBelow1s,
    BtnAbove0p8,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 3] = [
        CriterionKind::Collision,
        CriterionKind::TtcBelow1s,
        CriterionKind::BtnAbove0p8,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionKind::Collision => "collision",
            CriterionKind::TtcBelow1s => "ttc_below_1s",
            CriterionKind::BtnAbove0p8 => "btn_above_0p8",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub kind: CriterionKind,
    pub failed: bool,
    /// Minimum TTC, maximum BTN, or maximum penetration depth; absent when never evaluated.
    pub worst_value: Option<f64>,
    pub worst_time: Option<f64>,
}

/// Deceleration and jerk limits of the braking maneuver assumed by BTN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtnLimits {
    pub max_decel: f64,
    pub jerk: f64,
}

impl Default for BtnLimits {
    fn default() -> Self {
        BtnLimits {
            max_decel: 7.59,
            jerk: 12.65,
        }
    }
}

/// Upper end of the deceleration search, as a multiple of `max_decel`.
/// Demands beyond it are reported as an infinite BTN.
pub const BTN_SEARCH_FACTOR: f64 = 50.0;
const BTN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gate {
    /// Bounding-box lateral overlap.
    #[default]
    Lateral,
    /// Every actor ahead is evaluated.
    None,
}

/// Lateral gate: center offset within the summed half widths.
pub fn lateral_overlap(ego: &BodyState, actor: &BodyState) -> bool {
    (actor.y - ego.y).abs() <= (ego.width + actor.width) / 2.0
}

/// Bumper-to-bumper longitudinal gap from the ego to an actor ahead.
pub fn longitudinal_gap(ego: &BodyState, actor: &BodyState) -> f64 {
    actor.x - ego.x - (ego.length + actor.length) / 2.0
}

pub fn compute_ttc(gap: f64, v_ego: f64, v_lead: f64, lateral_overlap: bool) -> Option<f64> {
    if !lateral_overlap || gap <= 0.0 || v_ego <= v_lead {
        return None;
    }
    Some(gap / (v_ego - v_lead))
}

/// Brake threat number: the smallest constant deceleration level that
/// avoids contact, reached through a ramp at the jerk limit from zero,
/// divided by the maximum deceleration. The lead keeps its current
/// acceleration until it stops.
pub fn compute_btn(
    gap: f64,
    v_ego: f64,
    v_lead: f64,
    a_lead: f64,
    lateral_overlap: bool,
    limits: &BtnLimits,
) -> Option<f64> {
    if !lateral_overlap || gap <= 0.0 {
        return None;
    }
    Some(required_decel(gap, v_ego, v_lead, a_lead, limits.jerk, limits.max_decel) / limits.max_decel)
}

fn braking_profile(v_ego: f64, decel: f64, jerk: f64) -> Motion {
    if decel <= 0.0 {
        return Motion::constant_accel(v_ego, 0.0);
    }
    Motion {
        v0: v_ego,
        phases: vec![
            Phase::ramp(decel / jerk, 0.0, -jerk),
            Phase::hold(f64::INFINITY, -decel),
        ],
    }
}

fn required_decel(gap: f64, v_ego: f64, v_lead: f64, a_lead: f64, jerk: f64, max_decel: f64) -> f64 {
    let lead = Motion::constant_accel(v_lead, a_lead);
    let safe = |decel: f64| max_approach(&braking_profile(v_ego, decel, jerk), &lead) < gap;
    if safe(0.0) {
        return 0.0;
    }
    let limit = BTN_SEARCH_FACTOR * max_decel;
    let mut lo = 0.0;
    let mut hi = max_decel;
    while !safe(hi) {
        if hi >= limit {
            return f64::INFINITY;
        }
        lo = hi;
        hi = (2.0 * hi).min(limit);
    }
    // The no-jerk closed form is a lower bound when the lead holds speed.
    if a_lead == 0.0 && v_ego > v_lead {
        let no_jerk = (v_ego - v_lead).powi(2) / (2.0 * gap);
        if no_jerk > lo && no_jerk < hi {
            lo = no_jerk;
        }
    }
    while hi - lo > BTN_TOLERANCE * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if safe(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn detect_collision(trace: &SimTrace) -> CriterionResult {
    let mut worst: Option<(f64, f64)> = None;
    for s in &trace.samples {
        for a in &s.actors {
            let ox = (s.ego.length + a.length) / 2.0 - (a.x - s.ego.x).abs();
            let oy = (s.ego.width + a.width) / 2.0 - (a.y - s.ego.y).abs();
            let depth = ox.min(oy);
            if worst.is_none_or(|(w, _)| depth > w) {
                worst = Some((depth, s.t));
            }
        }
    }
    CriterionResult {
        kind: CriterionKind::Collision,
        failed: worst.is_some_and(|(d, _)| d > 0.0),
        worst_value: worst.map(|w| w.0),
        worst_time: worst.map(|w| w.1),
    }
}

pub fn evaluate_trace(trace: &SimTrace, kind: CriterionKind, limits: &BtnLimits) -> CriterionResult {
    evaluate_trace_gated(trace, kind, limits, Gate::Lateral)
}

pub fn evaluate_trace_gated(
    trace: &SimTrace,
    kind: CriterionKind,
    limits: &BtnLimits,
    gate: Gate,
) -> CriterionResult {
    if kind == CriterionKind::Collision {
        return detect_collision(trace);
    }
    let mut worst: Option<(f64, f64)> = None;
    for s in &trace.samples {
        for a in s.actors.iter().filter(|a| a.x > s.ego.x) {
            let overlap = match gate {
                Gate::Lateral => lateral_overlap(&s.ego, a),
                Gate::None => true,
            };
            let gap = longitudinal_gap(&s.ego, a);
            let value = match kind {
                CriterionKind::TtcBelow1s => compute_ttc(gap, s.ego.vx, a.vx, overlap),
                _ => compute_btn(gap, s.ego.vx, a.vx, a.ax, overlap, limits),
            };
            let Some(value) = value else { continue };
            let better = match (kind, worst) {
                (_, None) => true,
                (CriterionKind::TtcBelow1s, Some((w, _))) => value < w,
                (_, Some((w, _))) => value > w,
            };
            if better {
                worst = Some((value, s.t));
            }
        }
    }
    let failed = match (kind, worst) {
        (CriterionKind::TtcBelow1s, Some((w, _))) => w < TTC_THRESHOLD,
        (_, Some((w, _))) => w > BTN_THRESHOLD,
        _ => false,
    };
    CriterionResult {
        kind,
        failed,
        worst_value: worst.map(|w| w.0),
        worst_time: worst.map(|w| w.1),
    }
}

pub fn evaluate_all(trace: &SimTrace, limits: &BtnLimits) -> [CriterionResult; 3] {
    CriterionKind::ALL.map(|k| evaluate_trace(trace, k, limits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TraceSample;

    fn body(id: u32, x: f64, y: f64, vx: f64) -> BodyState {
        BodyState {
            id,
            x,
            y,
            vx,
            vy: 0.0,
            ax: 0.0,
            length: 4.0,
            width: 2.0,
        }
    }

    fn closing_trace(gap0: f64, v_ego: f64, v_lead: f64, dt: f64, steps: usize) -> SimTrace {
        let samples = (0..steps)
            .map(|k| {
                let t = k as f64 * dt;
                TraceSample {
                    t,
                    ego: body(0, v_ego * t, 0.0, v_ego),
                    actors: vec![body(1, 4.0 + gap0 + v_lead * t, 0.0, v_lead)],
                }
            })
            .collect();
        SimTrace { samples }
    }

    #[test]
    fn ttc_cases() {
        assert_eq!(compute_ttc(20.0, 20.0, 10.0, true), Some(2.0));
        assert_eq!(compute_ttc(20.0, 10.0, 20.0, true), None);
        assert_eq!(compute_ttc(5.0, 20.0, 10.0, false), None);
        assert_eq!(compute_ttc(-1.0, 20.0, 10.0, true), None);
    }

    #[test]
    fn btn_non_closing_is_zero() {
        let btn = compute_btn(10.0, 10.0, 15.0, 0.0, true, &BtnLimits::default()).unwrap();
        assert_eq!(btn, 0.0);
        assert_eq!(compute_btn(10.0, 20.0, 15.0, 0.0, false, &BtnLimits::default()), None);
    }

    #[test]
    fn btn_exceeds_no_jerk_bound() {
        // the jerk-limited ramp needs more than v_rel²/(2 gap) = 2 m/s²
        let btn = compute_btn(25.0, 20.0, 10.0, 0.0, true, &BtnLimits::default()).unwrap();
        assert!(btn > 2.0 / 7.59, "{btn}");
        assert!(btn < 0.4, "{btn}");
    }

    #[test]
    fn btn_unavoidable_is_above_one() {
        let btn = compute_btn(5.0, 30.0, 30.0, -9.0, true, &BtnLimits::default()).unwrap();
        assert!(btn > 1.0, "{btn}");
    }

    #[test]
    fn constant_closing_collides_at_two_seconds() {
        let dt = 0.04;
        let trace = closing_trace(10.0, 15.0, 10.0, dt, 100);
        let r = detect_collision(&trace);
        assert!(r.failed);
        let first = trace
            .samples
            .iter()
            .find(|s| s.ego.x + 2.0 > s.actors[0].x - 2.0)
            .unwrap();
        assert!((first.t - 2.0).abs() <= dt + 1e-9, "{}", first.t);
    }

    #[test]
    fn far_gap_passes_everything() {
        let trace = closing_trace(50.0, 20.0, 20.0, 0.04, 50);
        for r in evaluate_all(&trace, &BtnLimits::default()) {
            assert!(!r.failed, "{r:?}");
        }
    }

    #[test]
    fn side_swipe_collides_without_gated_samples() {
        // actor alongside the ego, sliding laterally into its flank
        let samples = (0..80)
            .map(|k| {
                let t = k as f64 * 0.04;
                let mut a = body(1, 0.5, 4.0 - 1.0 * t, 20.0);
                a.vy = -1.0;
                TraceSample {
                    t,
                    ego: body(0, 0.0, 0.0, 20.0),
                    actors: vec![a],
                }
            })
            .collect();
        let trace = SimTrace { samples };
        let [col, ttc, btn] = evaluate_all(&trace, &BtnLimits::default());
        assert!(col.failed);
        assert!(!ttc.failed && !btn.failed);
    }

    #[test]
    fn ttc_worst_value_is_minimum() {
        let trace = closing_trace(24.0, 30.0, 10.0, 0.04, 10);
        let r = evaluate_trace(&trace, CriterionKind::TtcBelow1s, &BtnLimits::default());
        // last sample: gap 24 − 9·0.04·20 = 16.8 m closing at 20 m/s
        assert!((r.worst_value.unwrap() - 0.84).abs() < 1e-9);
        assert!((r.worst_time.unwrap() - 0.36).abs() < 1e-9);
        assert!(r.failed);
    }
}
