//! Activity and status tags on ego views, and the cut-in, cut-out and
//! lead-vehicle-deceleration scenarios built from them.
//!
//! Tags are half-open time spans `[start, end)`. Lane-change tags carry the
//! instant at which the vehicle center crosses the lane marking; that
//! instant is the key time of cut-in and cut-out scenarios. LVD scenarios are
//! keyed on the onset of the lead's braking tag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{EgoView, Sample, VehicleTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    CutIn,
    CutOut,
    Lvd,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::CutIn, Category::CutOut, Category::Lvd];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::CutIn => "cut_in",
            Category::CutOut => "cut_out",
            Category::Lvd => "lvd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagKind {
    LaneChangeLeft,
    LaneChangeRight,
    Braking,
    LeadingVehicle,
    DrivingSlower,
}

impl TagKind {
    pub fn is_lane_change(self) -> bool {
        matches!(self, TagKind::LaneChangeLeft | TagKind::LaneChangeRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneCrossing {
    pub from_lane: i32,
    pub to_lane: i32,
    /// Instant the center crosses `marking`.
    pub time: f64,
    pub marking: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub kind: TagKind,
    pub subject_id: u32,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing: Option<LaneCrossing>,
}

impl Tag {
    pub fn covers(&self, t: f64) -> bool {
        t >= self.start - 1e-9 && t < self.end - 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagConfig {
    /// Lateral speed above which a vehicle counts as changing lanes, m/s.
    pub lateral_speed: f64,
    /// Braking starts below this acceleration...
    pub brake_on: f64,
    /// ...sustained for at least this long, s.
    pub brake_on_duration: f64,
    /// Braking ends once acceleration rises above this.
    pub brake_off: f64,
    pub scenario: ScenarioFilters,
}

impl Default for TagConfig {
    fn default() -> Self {
        TagConfig {
            lateral_speed: 0.1,
            brake_on: -1.0,
            brake_on_duration: 0.2,
            brake_off: -0.5,
            scenario: ScenarioFilters::default(),
        }
    }
}

/// Scenario selection thresholds and window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioFilters {
    pub cut_in_speed_ratio: f64,
    pub cut_in_max_thw: f64,
    pub lvd_min_decel: f64,
    pub pre_window: f64,
    pub post_window: f64,
}

impl Default for ScenarioFilters {
    fn default() -> Self {
        ScenarioFilters {
            cut_in_speed_ratio: 0.95,
            cut_in_max_thw: 2.0,
            lvd_min_decel: 2.0,
            pre_window: 3.0,
            post_window: 10.0,
        }
    }
}

/// Complete tag set of a view.
pub fn detect_tags(view: &EgoView, cfg: &TagConfig) -> Vec<Tag> {
    let mut tags = Vec::new();
    for track in std::iter::once(&view.ego).chain(&view.others) {
        tags.extend(lane_change_tags(track, &view.lane_markings, view.dt, cfg));
        tags.extend(braking_tags(track, view.dt, cfg));
    }
    tags.extend(status_tags(view));
    tags
}

fn runs(samples: &[Sample]) -> impl Iterator<Item = &[Sample]> {
    samples.chunk_by(|a, b| b.frame == a.frame + 1)
}

fn lane_change_tags(track: &VehicleTrack, markings: &[f64], dt: f64, cfg: &TagConfig) -> Vec<Tag> {
    let mut tags: Vec<Tag> = Vec::new();
    for run in runs(&track.samples) {
        for k in 1..run.len() {
            let (a, b) = (&run[k - 1], &run[k]);
            if a.lane_id == b.lane_id {
                continue;
            }
            let marking = markings
                .iter()
                .copied()
                .filter(|m| (a.y - m) * (b.y - m) <= 0.0)
                .min_by(|m1, m2| (m1 - (a.y + b.y) / 2.0).abs().total_cmp(&(m2 - (a.y + b.y) / 2.0).abs()));
            let (time, marking) = match marking {
                Some(m) if b.y != a.y => (a.t + (m - a.y) / (b.y - a.y) * dt, m),
                _ => (b.t, (a.y + b.y) / 2.0),
            };
            let moving = |s: &Sample| s.vy.abs() > cfg.lateral_speed;
            let mut lo = k - 1;
            while lo > 0 && moving(&run[lo - 1]) && moving(&run[lo]) {
                lo -= 1;
            }
            if !moving(&run[lo]) && lo < k - 1 {
                lo += 1;
            }
            let mut hi = k;
            while hi + 1 < run.len() && moving(&run[hi]) {
                hi += 1;
            }
            // end is the first sample no longer moving laterally
            let start = run[lo].t.min(a.t);
            let end = if moving(&run[hi]) { run[hi].t + dt } else { run[hi].t }.max(b.t);
            let kind = if b.y < a.y {
                TagKind::LaneChangeLeft
            } else {
                TagKind::LaneChangeRight
            };
            let crossing = LaneCrossing {
                from_lane: a.lane_id,
                to_lane: b.lane_id,
                time,
                marking,
            };
            // merge with a touching same-direction tag (a multi-lane sweep)
            if let Some(prev) = tags.last_mut() {
                if prev.kind == kind && prev.end >= start - 1e-9 {
                    prev.end = prev.end.max(end);
                    continue;
                }
            }
            tags.push(Tag {
                kind,
                subject_id: track.id,
                start,
                end,
                crossing: Some(crossing),
            });
        }
    }
    tags
}

fn braking_tags(track: &VehicleTrack, dt: f64, cfg: &TagConfig) -> Vec<Tag> {
    let min_samples = (cfg.brake_on_duration / dt - 1e-9).ceil().max(1.0) as usize;
    let mut tags = Vec::new();
    for run in runs(&track.samples) {
        let mut k = 0;
        while k < run.len() {
            if run[k].ax >= cfg.brake_on {
                k += 1;
                continue;
            }
            let below = run[k..].iter().take_while(|s| s.ax < cfg.brake_on).count();
            if below < min_samples {
                k += below;
                continue;
            }
            let mut e = k;
            while e < run.len() && run[e].ax <= cfg.brake_off {
                e += 1;
            }
            let end = if e < run.len() { run[e].t } else { run[e - 1].t + dt };
            tags.push(Tag {
                kind: TagKind::Braking,
                subject_id: track.id,
                start: run[k].t,
                end,
                crossing: None,
            });
            k = e.max(k + 1);
        }
    }
    tags
}

/// Leading-vehicle and driving-slower status tags, relative to the ego.
fn status_tags(view: &EgoView) -> Vec<Tag> {
    let dt = view.dt;
    let mut leading: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    let mut slower: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    for e in &view.ego.samples {
        let mut lead: Option<(f64, u32)> = None;
        for o in &view.others {
            let Some(s) = o.at_frame(e.frame) else { continue };
            if s.vx < e.vx {
                slower.entry(o.id).or_default().push(e.frame);
            }
            if s.lane_id == e.lane_id && s.x > e.x && lead.is_none_or(|(d, _)| s.x - e.x < d) {
                lead = Some((s.x - e.x, o.id));
            }
        }
        if let Some((_, id)) = lead {
            leading.entry(id).or_default().push(e.frame);
        }
    }
    let frame_time = |f: i64| {
        view.ego
            .at_frame(f)
            .map(|s| s.t)
            .expect("status frames come from the ego track")
    };
    let mut tags = Vec::new();
    for (kind, map) in [(TagKind::LeadingVehicle, leading), (TagKind::DrivingSlower, slower)] {
        for (id, frames) in map {
            for run in frames.chunk_by(|a, b| *b == *a + 1) {
                tags.push(Tag {
                    kind,
                    subject_id: id,
                    start: frame_time(run[0]),
                    end: frame_time(run[run.len() - 1]) + dt,
                    crossing: None,
                });
            }
        }
    }
    tags
}

/// Linear interpolation of a track's state between consecutive frames.
pub fn state_at(track: &VehicleTrack, t: f64) -> Option<Sample> {
    let idx = track.samples.partition_point(|s| s.t < t - 1e-9);
    let b = track.samples.get(idx)?;
    if (b.t - t).abs() <= 1e-9 {
        return Some(*b);
    }
    let a = track.samples.get(idx.checked_sub(1)?)?;
    if b.frame != a.frame + 1 {
        return None;
    }
    let w = (t - a.t) / (b.t - a.t);
    let lerp = |p: f64, q: f64| p + w * (q - p);
    Some(Sample {
        frame: a.frame,
        t,
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        vx: lerp(a.vx, b.vx),
        vy: lerp(a.vy, b.vy),
        ax: lerp(a.ax, b.ax),
        ay: lerp(a.ay, b.ay),
        lane_id: a.lane_id,
    })
}

/// A mined scenario: the ego and its actors over the scenario window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub id: String,
    pub category: Category,
    pub recording_id: u32,
    pub ego_id: u32,
    /// Cutting-in, cutting-out, or decelerating vehicle.
    pub principal_id: u32,
    /// Lead revealed by a cut-out.
    pub secondary_id: Option<u32>,
    pub key_time: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Lane change span, or braking span for LVD.
    pub maneuver_start: f64,
    pub maneuver_end: f64,
    pub ego_lane_center: f64,
    /// Marking crossed by the principal actor (cut-in, cut-out).
    pub crossing_marking: Option<f64>,
    /// Direction of the principal's lateral motion: +1 towards larger y.
    pub lateral_direction: Option<f64>,
    pub ego: VehicleTrack,
    pub principal: VehicleTrack,
    pub secondary: Option<VehicleTrack>,
    /// Filter quantities evaluated at key time.
    pub filters: BTreeMap<String, f64>,
    /// Notes raised when the instance was synthesized, e.g. a standstill clamp.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ScenarioInstance {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// All actor tracks (principal first).
    pub fn actors(&self) -> impl Iterator<Item = &VehicleTrack> {
        std::iter::once(&self.principal).chain(self.secondary.as_ref())
    }
}

fn longitudinal_gap(ego: &Sample, ego_len: f64, actor: &Sample, actor_len: f64) -> f64 {
    actor.x - ego.x - (ego_len + actor_len) / 2.0
}

fn lane_center(markings: &[f64], y: f64) -> f64 {
    markings
        .windows(2)
        .find(|w| w[0] <= y && y < w[1])
        .map(|w| (w[0] + w[1]) / 2.0)
        .unwrap_or(y)
}

/// Largest frame range around `key_frame` inside the view and the requested
/// window where all `tracks` are present.
fn window_frames(
    tracks: &[&VehicleTrack],
    key_frame: i64,
    lo_frame: i64,
    hi_frame: i64,
) -> Option<(i64, i64)> {
    let mut lo = lo_frame;
    let mut hi = hi_frame;
    for track in tracks {
        let run = runs(&track.samples).find(|r| r[0].frame <= key_frame && key_frame <= r[r.len() - 1].frame)?;
        lo = lo.max(run[0].frame);
        hi = hi.min(run[run.len() - 1].frame);
    }
    (lo <= key_frame && key_frame <= hi).then_some((lo, hi))
}

fn slice(track: &VehicleTrack, lo: i64, hi: i64) -> VehicleTrack {
    VehicleTrack {
        samples: track
            .samples
            .iter()
            .filter(|s| s.frame >= lo && s.frame <= hi)
            .copied()
            .collect(),
        ..track.clone()
    }
}

struct Draft<'a> {
    category: Category,
    principal: &'a VehicleTrack,
    secondary: Option<&'a VehicleTrack>,
    key_time: f64,
    maneuver: (f64, f64),
    crossing: Option<LaneCrossing>,
    filters: BTreeMap<String, f64>,
}

fn build_instance(view: &EgoView, cfg: &ScenarioFilters, d: Draft<'_>) -> Option<ScenarioInstance> {
    let dt = view.dt;
    let key_frame = (d.key_time / dt + 1e-6).floor() as i64;
    let lo = (view.t_start.max(d.key_time - cfg.pre_window) / dt - 1e-6).ceil() as i64;
    let hi = (view.t_end.min(d.key_time + cfg.post_window) / dt + 1e-6).floor() as i64;
    let mut tracks = vec![&view.ego, d.principal];
    tracks.extend(d.secondary);
    let (lo, hi) = window_frames(&tracks, key_frame, lo, hi)?;
    let ego = slice(&view.ego, lo, hi);
    let principal = slice(d.principal, lo, hi);
    let secondary = d.secondary.map(|s| slice(s, lo, hi));
    let t_start = ego.samples.first()?.t;
    let t_end = ego.samples.last()?.t;
    if !(t_start <= d.key_time + 1e-9 && d.key_time <= t_end + 1e-9) || ego.samples.len() < 2 {
        return None;
    }
    let ego_key = state_at(&view.ego, d.key_time)?;
    let key_frame_label = (d.key_time / dt).round() as i64;
    Some(ScenarioInstance {
        id: format!(
            "r{:02}-e{}-{}-a{}-f{}",
            view.recording_id,
            view.ego.id,
            d.category,
            d.principal.id,
            key_frame_label
        ),
        category: d.category,
        recording_id: view.recording_id,
        ego_id: view.ego.id,
        principal_id: d.principal.id,
        secondary_id: d.secondary.map(|s| s.id),
        key_time: d.key_time,
        t_start,
        t_end,
        dt,
        maneuver_start: d.maneuver.0,
        maneuver_end: d.maneuver.1,
        ego_lane_center: lane_center(&view.lane_markings, ego_key.y),
        crossing_marking: d.crossing.map(|c| c.marking),
        lateral_direction: d.crossing.map(|_| {
            let before = state_at(d.principal, d.maneuver.0).map(|s| s.y);
            let after = state_at(d.principal, d.key_time).map(|s| s.y);
            match (before, after) {
                (Some(b), Some(a)) if a < b => -1.0,
                _ => 1.0,
            }
        }),
        ego,
        principal,
        secondary,
        filters: d.filters,
        flags: Vec::new(),
    })
}

fn lane_changes<'a>(tags: &'a [Tag], view: &EgoView) -> impl Iterator<Item = (&'a Tag, LaneCrossing)> {
    let ego_id = view.ego.id;
    tags.iter()
        .filter(move |t| t.kind.is_lane_change() && t.subject_id != ego_id)
        .filter_map(|t| t.crossing.map(|c| (t, c)))
}

/// Vehicles that change into the ego lane ahead of the ego, slower than
/// `cut_in_speed_ratio` times the ego speed and with a time headway under
/// `cut_in_max_thw` at the crossing instant.
pub fn mine_cut_ins(tags: &[Tag], view: &EgoView, cfg: &ScenarioFilters) -> Vec<ScenarioInstance> {
    let mut out = Vec::new();
    for (tag, c) in lane_changes(tags, view) {
        let Some(actor) = view.other(tag.subject_id) else { continue };
        let (Some(e), Some(a)) = (state_at(&view.ego, c.time), state_at(actor, c.time)) else {
            continue;
        };
        let ego_lane = view.ego.at_frame(e.frame).map_or(e.lane_id, |s| s.lane_id);
        if c.to_lane != ego_lane || a.x <= e.x || e.vx <= 0.0 {
            continue;
        }
        let gap = longitudinal_gap(&e, view.ego.length, &a, actor.length);
        let ratio = a.vx / e.vx;
        let thw = gap / e.vx;
        if !(gap > 0.0 && ratio < cfg.cut_in_speed_ratio && thw < cfg.cut_in_max_thw) {
            continue;
        }
        let filters = BTreeMap::from([
            ("gap".to_string(), gap),
            ("speed_ratio".to_string(), ratio),
            ("thw".to_string(), thw),
        ]);
        out.extend(build_instance(
            view,
            cfg,
            Draft {
                category: Category::CutIn,
                principal: actor,
                secondary: None,
                key_time: c.time,
                maneuver: (tag.start, tag.end),
                crossing: Some(c),
                filters,
            },
        ));
    }
    out
}

/// Vehicles that leave the ego lane ahead of the ego and reveal a lead that
/// is slower than the ego.
pub fn mine_cut_outs(tags: &[Tag], view: &EgoView, _cfg: &ScenarioFilters) -> Vec<ScenarioInstance> {
    let cfg = _cfg;
    let mut out = Vec::new();
    for (tag, c) in lane_changes(tags, view) {
        let Some(actor) = view.other(tag.subject_id) else { continue };
        let (Some(e), Some(a)) = (state_at(&view.ego, c.time), state_at(actor, c.time)) else {
            continue;
        };
        let ego_lane = view.ego.at_frame(e.frame).map_or(e.lane_id, |s| s.lane_id);
        if c.from_lane != ego_lane || a.x <= e.x {
            continue;
        }
        let lead = view
            .others
            .iter()
            .filter(|o| o.id != actor.id)
            .filter_map(|o| state_at(o, c.time).map(|s| (o, s)))
            .filter(|(o, s)| {
                s.x > a.x && o.at_frame(e.frame).map_or(s.lane_id, |x| x.lane_id) == ego_lane
            })
            .min_by(|p, q| p.1.x.total_cmp(&q.1.x));
        let Some((lead, l)) = lead else { continue };
        if l.vx >= e.vx {
            continue;
        }
        let filters = BTreeMap::from([
            ("v_ego".to_string(), e.vx),
            ("v_lead".to_string(), l.vx),
            (
                "lead_gap".to_string(),
                longitudinal_gap(&a, actor.length, &l, lead.length),
            ),
        ]);
        out.extend(build_instance(
            view,
            cfg,
            Draft {
                category: Category::CutOut,
                principal: actor,
                secondary: Some(lead),
                key_time: c.time,
                maneuver: (tag.start, tag.end),
                crossing: Some(c),
                filters,
            },
        ));
    }
    out
}

/// Lead vehicles in the ego lane whose braking peaks above `lvd_min_decel`.
pub fn mine_lvd(tags: &[Tag], view: &EgoView, cfg: &ScenarioFilters) -> Vec<ScenarioInstance> {
    let mut out = Vec::new();
    for tag in tags
        .iter()
        .filter(|t| t.kind == TagKind::Braking && t.subject_id != view.ego.id)
    {
        let leading = tags.iter().any(|l| {
            l.kind == TagKind::LeadingVehicle && l.subject_id == tag.subject_id && l.covers(tag.start)
        });
        if !leading {
            continue;
        }
        let Some(lead) = view.other(tag.subject_id) else { continue };
        let peak = peak_decel(lead, tag.start, tag.end);
        if !(peak > cfg.lvd_min_decel) {
            continue;
        }
        let filters = BTreeMap::from([("peak_decel".to_string(), peak)]);
        out.extend(build_instance(
            view,
            cfg,
            Draft {
                category: Category::Lvd,
                principal: lead,
                secondary: None,
                key_time: tag.start,
                maneuver: (tag.start, tag.end),
                crossing: None,
                filters,
            },
        ));
    }
    out
}

/// Largest deceleration magnitude within `[start, end)`.
pub fn peak_decel(track: &VehicleTrack, start: f64, end: f64) -> f64 {
    track
        .samples
        .iter()
        .filter(|s| s.t >= start - 1e-9 && s.t < end - 1e-9)
        .map(|s| -s.ax)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Tags and all three scenario categories of one view.
pub fn mine_view(view: &EgoView, cfg: &TagConfig) -> Vec<ScenarioInstance> {
    let tags = detect_tags(view, cfg);
    let mut out = mine_cut_ins(&tags, view, &cfg.scenario);
    out.extend(mine_cut_outs(&tags, view, &cfg.scenario));
    out.extend(mine_lvd(&tags, view, &cfg.scenario));
    out
}

/// Recomputes an instance's filters from its own samples.
pub fn revalidate(inst: &ScenarioInstance, cfg: &ScenarioFilters) -> bool {
    let (Some(e), Some(a)) = (
        state_at(&inst.ego, inst.key_time),
        state_at(&inst.principal, inst.key_time),
    ) else {
        return false;
    };
    match inst.category {
        Category::CutIn => {
            let gap = longitudinal_gap(&e, inst.ego.length, &a, inst.principal.length);
            gap > 0.0 && a.vx / e.vx < cfg.cut_in_speed_ratio && gap / e.vx < cfg.cut_in_max_thw
        }
        Category::CutOut => inst
            .secondary
            .as_ref()
            .and_then(|l| state_at(l, inst.key_time))
            .is_some_and(|l| l.vx < e.vx && l.x > a.x),
        Category::Lvd => peak_decel(&inst.principal, inst.maneuver_start, inst.maneuver_end) > cfg.lvd_min_decel,
    }
}
