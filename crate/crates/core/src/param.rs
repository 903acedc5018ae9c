//! Parameterizations of mined scenarios and the synthesis of actor
//! trajectories from parameter vectors.
//!
//! Longitudinal speeds are read at the start of the scenario window, the
//! lateral speed at the lane-marking crossing, and mean accelerations over
//! the window (cut-in, cut-out) or the braking span (LVD).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Sample, VehicleTrack};
use crate::mining::{state_at, Category, ScenarioInstance};
use crate::svd::{FeatureLayout, SvdBasis};

/// Lateral distance covered by a synthesized lane change, m.
pub const LANE_CHANGE_WIDTH: f64 = 3.5;
pub const DEFAULT_GRID_LENGTH: usize = 100;
pub const STANDSTILL_FLAG: &str = "standstill_clamp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "1")]
    CutIn1,
    #[serde(rename = "2")]
    CutIn2,
    #[serde(rename = "3")]
    CutIn3,
    #[serde(rename = "4")]
    CutIn4,
    #[serde(rename = "5")]
    CutIn5,
    #[serde(rename = "6")]
    CutIn6,
    #[serde(rename = "7")]
    CutIn7,
    #[serde(rename = "a")]
    CutOutA,
    #[serde(rename = "b")]
    CutOutB,
    #[serde(rename = "c")]
    CutOutC,
    #[serde(rename = "d")]
    CutOutD,
    #[serde(rename = "e")]
    CutOutE,
    #[serde(rename = "f")]
    CutOutF,
    #[serde(rename = "g")]
    CutOutG,
    #[serde(rename = "i")]
    LvdI,
    #[serde(rename = "ii")]
    LvdII,
    #[serde(rename = "iii")]
    LvdIII,
    #[serde(rename = "iv")]
    LvdIV,
    #[serde(rename = "v")]
    LvdV,
}

use Variant::*;

impl Variant {
    pub const ALL: [Variant; 19] = [
        CutIn1, CutIn2, CutIn3, CutIn4, CutIn5, CutIn6, CutIn7, CutOutA, CutOutB, CutOutC, CutOutD, CutOutE,
        CutOutF, CutOutG, LvdI, LvdII, LvdIII, LvdIV, LvdV,
    ];

    pub fn for_category(category: Category) -> impl Iterator<Item = Variant> {
        Self::ALL.into_iter().filter(move |v| v.category() == category)
    }

    pub fn category(self) -> Category {
        match self {
            CutIn1 | CutIn2 | CutIn3 | CutIn4 | CutIn5 | CutIn6 | CutIn7 => Category::CutIn,
            CutOutA | CutOutB | CutOutC | CutOutD | CutOutE | CutOutF | CutOutG => Category::CutOut,
            LvdI | LvdII | LvdIII | LvdIV | LvdV => Category::Lvd,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CutIn1 => "1",
            CutIn2 => "2",
            CutIn3 => "3",
            CutIn4 => "4",
            CutIn5 => "5",
            CutIn6 => "6",
            CutIn7 => "7",
            CutOutA => "a",
            CutOutB => "b",
            CutOutC => "c",
            CutOutD => "d",
            CutOutE => "e",
            CutOutF => "f",
            CutOutG => "g",
            LvdI => "i",
            LvdII => "ii",
            LvdIII => "iii",
            LvdIV => "iv",
            LvdV => "v",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label() == s)
    }

    /// Number of retained SVD coefficients, for SVD variants.
    pub fn svd_dim(self) -> Option<usize> {
        match self {
            CutIn5 | LvdIII | CutOutE => Some(3),
            CutIn6 | LvdIV => Some(4),
            CutIn7 | LvdV | CutOutF => Some(5),
            CutOutG => Some(7),
            _ => None,
        }
    }

    pub fn instantaneous(self) -> bool {
        matches!(self, CutIn3 | CutIn4 | CutOutC | CutOutD)
    }

    pub fn accelerating(self) -> bool {
        matches!(self, CutIn2 | CutIn4 | CutOutB | CutOutD)
    }

    /// Names of the scalar parameters of a non-SVD variant.
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            CutIn1 => &["v_lon_target", "v_lat_target", "v_lon_ego"],
            CutIn2 => &["v_lon_target", "v_lat_target", "v_lon_ego", "a_lon_target"],
            CutIn3 => &["v_lon_target", "v_lon_ego"],
            CutIn4 => &["v_lon_target", "v_lon_ego", "a_lon_target"],
            CutOutA => &["v_lon_target", "v_lat_target", "v_lon_ego", "v_lon_lead", "d_lead"],
            CutOutB => &[
                "v_lon_target",
                "v_lat_target",
                "v_lon_ego",
                "v_lon_lead",
                "d_lead",
                "a_lon_target",
                "a_lon_lead",
            ],
            CutOutC => &["v_lon_target", "v_lon_ego", "v_lon_lead", "d_lead"],
            CutOutD => &["v_lon_target", "v_lon_ego", "v_lon_lead", "d_lead", "a_lon_target", "a_lon_lead"],
            LvdI | LvdII => &["v_lon_lead", "v_lon_lead_final", "a_lon_lead_mean"],
            _ => &[],
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParameterizationId {
    pub category: Category,
    pub variant: Variant,
}

impl ParameterizationId {
    pub fn new(category: Category, variant: Variant) -> Result<Self> {
        if variant.category() != category {
            return Err(Error::Parameterization(format!(
                "variant {variant} does not belong to {category}"
            )));
        }
        Ok(ParameterizationId { category, variant })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub id: ParameterizationId,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub svd_coefficients: Vec<f64>,
}

impl ParameterVector {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| Error::Parameterization(format!("missing parameter `{name}`")))
    }
}

/// Feature layout of a category's SVD variants.
pub fn feature_layout(category: Category, grid_length: usize) -> FeatureLayout {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    let (series, scalars) = match category {
        Category::CutIn => (
            names(&["principal_lateral", "principal_vx"]),
            names(&["v_lon_ego", "lane_change_duration"]),
        ),
        Category::CutOut => (
            names(&["principal_lateral", "principal_vx", "lead_vx"]),
            names(&["v_lon_ego", "d_lead", "lane_change_duration"]),
        ),
        Category::Lvd => (names(&["lead_vx"]), names(&["decel_duration"])),
    };
    FeatureLayout {
        grid_length,
        series,
        scalars,
    }
}

fn at(track: &VehicleTrack, t: f64, what: &str, inst: &ScenarioInstance) -> Result<Sample> {
    state_at(track, t).ok_or_else(|| {
        Error::Parameterization(format!("{}: {what} has no sample at t = {t}", inst.id))
    })
}

fn secondary(inst: &ScenarioInstance) -> Result<&VehicleTrack> {
    inst.secondary
        .as_ref()
        .ok_or_else(|| Error::Parameterization(format!("{}: cut-out without a lead", inst.id)))
}

fn bbox_gap(rear: &Sample, rear_len: f64, front: &Sample, front_len: f64) -> f64 {
    front.x - rear.x - (rear_len + front_len) / 2.0
}

/// Resamples `f` over the window onto `n` evenly spaced points.
fn resample(track: &VehicleTrack, inst: &ScenarioInstance, n: usize, f: impl Fn(&Sample) -> f64) -> Result<Vec<f64>> {
    (0..n)
        .map(|k| {
            let u = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            let t = inst.t_start + u * inst.duration();
            // clamp the right end onto the last sample to dodge rounding past it
            let t = t.min(track.samples.last().map_or(t, |s| s.t));
            at(track, t, "series", inst).map(|s| f(&s))
        })
        .collect()
}

/// Feature vector of an instance under `layout`.
pub fn feature_vector(inst: &ScenarioInstance, layout: &FeatureLayout) -> Result<Vec<f64>> {
    let n = layout.grid_length;
    let mut out = Vec::with_capacity(layout.dimension());
    for name in &layout.series {
        let series = match name.as_str() {
            "principal_lateral" => resample(&inst.principal, inst, n, |s| s.y - inst.ego_lane_center)?,
            "principal_vx" => resample(&inst.principal, inst, n, |s| s.vx)?,
            "lead_vx" if inst.category == Category::Lvd => resample(&inst.principal, inst, n, |s| s.vx)?,
            "lead_vx" => resample(secondary(inst)?, inst, n, |s| s.vx)?,
            other => return Err(Error::Parameterization(format!("unknown series `{other}`"))),
        };
        out.extend(series);
    }
    for name in &layout.scalars {
        out.push(scalar(inst, name)?);
    }
    Ok(out)
}

fn scalar(inst: &ScenarioInstance, name: &str) -> Result<f64> {
    let t0 = inst.t_start;
    Ok(match name {
        "v_lon_ego" => at(&inst.ego, t0, "ego", inst)?.vx,
        "v_lon_target" => at(&inst.principal, t0, "principal", inst)?.vx,
        "v_lat_target" => at(&inst.principal, inst.key_time, "principal", inst)?.vy.abs(),
        "a_lon_target" => mean_accel(&inst.principal, inst.t_start, inst.t_end, inst)?,
        "v_lon_lead" if inst.category == Category::Lvd => at(&inst.principal, t0, "lead", inst)?.vx,
        "v_lon_lead" => at(secondary(inst)?, t0, "lead", inst)?.vx,
        "a_lon_lead" => mean_accel(secondary(inst)?, inst.t_start, inst.t_end, inst)?,
        "d_lead" => {
            let lead = secondary(inst)?;
            let l = at(lead, t0, "lead", inst)?;
            let a = at(&inst.principal, t0, "principal", inst)?;
            bbox_gap(&a, inst.principal.length, &l, lead.length)
        }
        "v_lon_lead_final" => at(&inst.principal, inst.maneuver_end.min(inst.t_end), "lead", inst)?.vx,
        "a_lon_lead_mean" => -mean_accel(&inst.principal, inst.maneuver_start, inst.maneuver_end.min(inst.t_end), inst)?,
        "lane_change_duration" | "decel_duration" => inst.maneuver_end - inst.maneuver_start,
        other => return Err(Error::Parameterization(format!("unknown scalar `{other}`"))),
    })
}

fn mean_accel(track: &VehicleTrack, t0: f64, t1: f64, inst: &ScenarioInstance) -> Result<f64> {
    if !(t1 > t0) {
        return Err(Error::Parameterization(format!("{}: empty averaging span", inst.id)));
    }
    let v0 = at(track, t0, "actor", inst)?.vx;
    let v1 = at(track, t1, "actor", inst)?.vx;
    Ok((v1 - v0) / (t1 - t0))
}

/// Parameter vector of `inst` under `id`. SVD variants need `basis`.
pub fn parameterize(
    inst: &ScenarioInstance,
    id: ParameterizationId,
    basis: Option<&SvdBasis>,
) -> Result<ParameterVector> {
    if inst.category != id.category {
        return Err(Error::Parameterization(format!(
            "{}: {} instance given a {} parameterization",
            inst.id, inst.category, id.category
        )));
    }
    if let Some(d) = id.variant.svd_dim() {
        let basis = basis.ok_or_else(|| {
            Error::Parameterization(format!("variant {} needs a fitted basis", id.variant))
        })?;
        check_basis(basis, id.category)?;
        let features = feature_vector(inst, &basis.layout)?;
        return Ok(ParameterVector {
            id,
            values: BTreeMap::new(),
            svd_coefficients: basis.reduce(&features, d)?,
        });
    }
    if basis.is_some() {
        return Err(Error::Parameterization(format!(
            "variant {} takes no basis",
            id.variant
        )));
    }
    if id.category != Category::Lvd {
        let moved = inst.lateral_direction.is_some()
            && inst
                .principal
                .samples
                .iter()
                .any(|s| (s.y - inst.principal.samples[0].y).abs() > 1e-9);
        if !moved {
            return Err(Error::Parameterization(format!("{}: no lateral motion", inst.id)));
        }
    }
    let mut values = BTreeMap::new();
    for &name in id.variant.fields() {
        values.insert(name.to_string(), scalar(inst, name)?);
    }
    if values.get("v_lat_target").is_some_and(|&v| v <= 1e-9) {
        return Err(Error::Parameterization(format!(
            "{}: zero lateral speed at the crossing",
            inst.id
        )));
    }
    if values.get("d_lead").is_some_and(|&d| d <= 0.0) {
        return Err(Error::Parameterization(format!("{}: lead overlaps the cutting-out vehicle", inst.id)));
    }
    if id.category == Category::Lvd {
        let v0 = values["v_lon_lead"];
        let v1 = values["v_lon_lead_final"];
        let a = values["a_lon_lead_mean"];
        if !(v1 < v0 && a > 0.0) {
            return Err(Error::Parameterization(format!(
                "{}: lead does not decelerate ({v0} -> {v1} m/s)",
                inst.id
            )));
        }
    }
    Ok(ParameterVector {
        id,
        values,
        svd_coefficients: Vec::new(),
    })
}

fn check_basis(basis: &SvdBasis, category: Category) -> Result<()> {
    if basis.category != category {
        return Err(Error::Parameterization(format!(
            "basis fitted for {} used with {category}",
            basis.category
        )));
    }
    Ok(())
}

/// Fits the SVD basis of `category` on `corpus`.
pub fn fit_svd_basis(corpus: &[ScenarioInstance], category: Category, grid_length: usize) -> Result<SvdBasis> {
    if let Some(bad) = corpus.iter().find(|i| i.category != category) {
        return Err(Error::Parameterization(format!("{} is not a {category} instance", bad.id)));
    }
    let layout = feature_layout(category, grid_length);
    let rows = corpus
        .iter()
        .map(|i| feature_vector(i, &layout))
        .collect::<Result<Vec<_>>>()?;
    SvdBasis::fit(category, layout, &rows)
}

/// Longitudinal motion from the window start: position offset, speed, acceleration at `tau`.
trait Longitudinal {
    fn at(&self, tau: f64) -> (f64, f64, f64);
}

/// Constant acceleration with a standstill clamp.
struct ConstAccel {
    v0: f64,
    a: f64,
}

impl Longitudinal for ConstAccel {
    fn at(&self, tau: f64) -> (f64, f64, f64) {
        if self.a < 0.0 {
            let t_stop = self.v0 / -self.a;
            if tau >= t_stop {
                return (self.v0 * t_stop / 2.0, 0.0, 0.0);
            }
        }
        (self.v0 * tau + self.a * tau * tau / 2.0, self.v0 + self.a * tau, self.a)
    }
}

impl ConstAccel {
    fn stops_within(&self, horizon: f64) -> bool {
        self.a < 0.0 && self.v0 / -self.a < horizon
    }
}

/// Constant speed until `onset`, then a deceleration to `v1`.
struct Deceleration {
    v0: f64,
    v1: f64,
    a_mean: f64,
    onset: f64,
    sinusoidal: bool,
}

impl Longitudinal for Deceleration {
    fn at(&self, tau: f64) -> (f64, f64, f64) {
        if tau <= self.onset {
            return (self.v0 * tau, self.v0, 0.0);
        }
        let s0 = self.v0 * self.onset;
        let dv = self.v0 - self.v1;
        let big_t = dv / self.a_mean;
        let u = tau - self.onset;
        if u >= big_t {
            let covered = (self.v0 + self.v1) / 2.0 * big_t;
            return (s0 + covered + self.v1 * (u - big_t), self.v1, 0.0);
        }
        if self.sinusoidal {
            let w = std::f64::consts::PI / big_t;
            let v = self.v0 - dv * (1.0 - (w * u).cos()) / 2.0;
            let s = self.v0 * u - dv / 2.0 * (u - (w * u).sin() / w);
            (s0 + s, v, -dv * w / 2.0 * (w * u).sin())
        } else {
            (s0 + self.v0 * u - self.a_mean * u * u / 2.0, self.v0 - self.a_mean * u, -self.a_mean)
        }
    }
}

/// Speeds sampled on the window grid, integrated with the trapezoid rule.
struct Sampled {
    grid: Vec<f64>,
    duration: f64,
}

impl Sampled {
    fn speed(&self, tau: f64) -> f64 {
        interp_grid(&self.grid, tau / self.duration)
    }
}

impl Longitudinal for Sampled {
    fn at(&self, tau: f64) -> (f64, f64, f64) {
        let n = self.grid.len();
        let h = self.duration / (n - 1) as f64;
        let mut s = 0.0;
        let mut k = 0;
        while (k + 1) as f64 * h <= tau && k + 1 < n {
            s += (self.grid[k] + self.grid[k + 1]) / 2.0 * h;
            k += 1;
        }
        let rest = tau - k as f64 * h;
        let v = self.speed(tau);
        s += (self.grid[k.min(n - 1)] + v) / 2.0 * rest;
        let a = if k + 1 < n { (self.grid[k + 1] - self.grid[k]) / h } else { 0.0 };
        (s, v, a)
    }
}

/// Linear interpolation on a uniform grid over `u` in `[0, 1]`.
fn interp_grid(grid: &[f64], u: f64) -> f64 {
    let n = grid.len();
    if n == 1 {
        return grid[0];
    }
    let pos = (u.clamp(0.0, 1.0) * (n - 1) as f64).min((n - 1) as f64);
    let k = (pos.floor() as usize).min(n - 2);
    let w = pos - k as f64;
    grid[k] + w * (grid[k + 1] - grid[k])
}

enum Lateral {
    Fixed(f64),
    /// Crosses `marking` at the key time, `width` in total, at `rate`; infinite rate steps.
    LaneChange { marking: f64, direction: f64, rate: f64 },
    Grid { grid: Vec<f64>, offset: f64 },
}

impl Lateral {
    fn at(&self, t: f64, inst: &ScenarioInstance) -> (f64, f64) {
        match self {
            Lateral::Fixed(y) => (*y, 0.0),
            Lateral::LaneChange {
                marking,
                direction,
                rate,
            } => {
                let half = LANE_CHANGE_WIDTH / 2.0;
                let u = t - inst.key_time;
                if rate.is_infinite() {
                    let side = if u < -1e-9 { -1.0 } else { 1.0 };
                    return (marking + direction * side * half, 0.0);
                }
                let shift = (rate * u).clamp(-half, half);
                let moving = (rate * u).abs() < half;
                (marking + direction * shift, if moving { direction * rate } else { 0.0 })
            }
            Lateral::Grid { grid, offset } => {
                let d = inst.duration();
                let u = (t - inst.t_start) / d;
                let h = 1.0 / (grid.len() - 1) as f64;
                let y = interp_grid(grid, u);
                let vy = (interp_grid(grid, (u + h / 2.0).min(1.0)) - interp_grid(grid, (u - h / 2.0).max(0.0)))
                    / (h * d);
                (y + offset, vy)
            }
        }
    }
}

fn build_track(
    template: &VehicleTrack,
    inst: &ScenarioInstance,
    x0: f64,
    lon: &dyn Longitudinal,
    lat: &Lateral,
    markings_lane: impl Fn(f64) -> i32,
) -> VehicleTrack {
    let samples = inst
        .ego
        .samples
        .iter()
        .map(|e| {
            let tau = e.t - inst.t_start;
            let (s, v, a) = lon.at(tau);
            let (y, vy) = lat.at(e.t, inst);
            Sample {
                frame: e.frame,
                t: e.t,
                x: x0 + s,
                y,
                vx: v,
                vy,
                ax: a,
                ay: 0.0,
                lane_id: markings_lane(y),
            }
        })
        .collect();
    VehicleTrack {
        samples,
        ..template.clone()
    }
}

/// Actor trajectories regenerated from `params`, on the template's window and frames.
pub fn synthesize(params: &ParameterVector, template: &ScenarioInstance, basis: Option<&SvdBasis>) -> Result<ScenarioInstance> {
    let id = params.id;
    if template.category != id.category {
        return Err(Error::Parameterization(format!(
            "{}: {} template given a {} parameter vector",
            template.id, template.category, id.category
        )));
    }
    let inst = template;
    let t0 = inst.t_start;
    let horizon = inst.duration();
    let mut out = template.clone();
    out.flags.clear();
    let lane_center = inst.ego_lane_center;
    let p0 = at(&inst.principal, t0, "principal", inst)?;
    // lane ids are not used downstream of mining; keep the template's
    let lane_of = |_y: f64| 0;

    let v_ego;
    if let Some(d) = id.variant.svd_dim() {
        let basis = basis.ok_or_else(|| Error::Parameterization(format!("variant {} needs a fitted basis", id.variant)))?;
        check_basis(basis, id.category)?;
        if params.svd_coefficients.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: params.svd_coefficients.len(),
            });
        }
        let f = basis.reconstruct(&params.svd_coefficients)?;
        let layout = &basis.layout;
        let series = |name: &str| -> Result<Vec<f64>> {
            let r = layout
                .series_range(name)
                .ok_or_else(|| Error::Parameterization(format!("basis lacks series `{name}`")))?;
            Ok(f[r].to_vec())
        };
        let scalar = |name: &str| -> Result<f64> {
            layout
                .scalar_slot(name)
                .map(|k| f[k])
                .ok_or_else(|| Error::Parameterization(format!("basis lacks scalar `{name}`")))
        };
        let mut clamped = false;
        let mut speed_grid = |name: &str| -> Result<Sampled> {
            let mut g = series(name)?;
            for v in &mut g {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped = true;
                }
            }
            Ok(Sampled { grid: g, duration: horizon })
        };
        match id.category {
            Category::CutIn | Category::CutOut => {
                let lon = speed_grid("principal_vx")?;
                let lat = Lateral::Grid {
                    grid: series("principal_lateral")?,
                    offset: lane_center,
                };
                out.principal = build_track(&inst.principal, inst, p0.x, &lon, &lat, lane_of);
                if id.category == Category::CutOut {
                    let lead = secondary(inst)?;
                    let lon_lead = speed_grid("lead_vx")?;
                    let d_lead = scalar("d_lead")?;
                    let x0 = p0.x + d_lead + (inst.principal.length + lead.length) / 2.0;
                    out.secondary = Some(build_track(lead, inst, x0, &lon_lead, &Lateral::Fixed(lane_center), lane_of));
                }
                v_ego = scalar("v_lon_ego")?;
            }
            Category::Lvd => {
                let lon = speed_grid("lead_vx")?;
                v_ego = lon.grid[0];
                out.principal = build_track(&inst.principal, inst, p0.x, &lon, &Lateral::Fixed(lane_center), lane_of);
            }
        }
        if clamped {
            out.flags.push(STANDSTILL_FLAG.to_string());
        }
    } else {
        for &name in id.variant.fields() {
            params.get(name)?;
        }
        let mut clamped = false;
        match id.category {
            Category::CutIn | Category::CutOut => {
                let marking = inst
                    .crossing_marking
                    .ok_or_else(|| Error::Parameterization(format!("{}: no crossing marking", inst.id)))?;
                let direction = inst.lateral_direction.unwrap_or(1.0);
                let rate = if id.variant.instantaneous() {
                    f64::INFINITY
                } else {
                    params.get("v_lat_target")?
                };
                let lat = Lateral::LaneChange { marking, direction, rate };
                let accel = |name: &str| if id.variant.accelerating() { params.get(name) } else { Ok(0.0) };
                let lon = ConstAccel {
                    v0: params.get("v_lon_target")?,
                    a: accel("a_lon_target")?,
                };
                clamped |= lon.stops_within(horizon);
                out.principal = build_track(&inst.principal, inst, p0.x, &lon, &lat, lane_of);
                if id.category == Category::CutOut {
                    let lead = secondary(inst)?;
                    let lon_lead = ConstAccel {
                        v0: params.get("v_lon_lead")?,
                        a: accel("a_lon_lead")?,
                    };
                    clamped |= lon_lead.stops_within(horizon);
                    let x0 = p0.x + params.get("d_lead")? + (inst.principal.length + lead.length) / 2.0;
                    out.secondary = Some(build_track(lead, inst, x0, &lon_lead, &Lateral::Fixed(lane_center), lane_of));
                }
                v_ego = params.get("v_lon_ego")?;
            }
            Category::Lvd => {
                let v0 = params.get("v_lon_lead")?;
                let v1 = params.get("v_lon_lead_final")?.max(0.0);
                let a_mean = params.get("a_lon_lead_mean")?;
                if !(v1 < v0 && a_mean > 0.0) {
                    return Err(Error::Parameterization(format!("{}: invalid deceleration", inst.id)));
                }
                let lon = Deceleration {
                    v0,
                    v1,
                    a_mean,
                    onset: inst.key_time - t0,
                    sinusoidal: id.variant == LvdII,
                };
                v_ego = v0;
                out.principal = build_track(&inst.principal, inst, p0.x, &lon, &Lateral::Fixed(lane_center), lane_of);
            }
        }
        if clamped {
            out.flags.push(STANDSTILL_FLAG.to_string());
        }
    }
    for (s, orig) in out.principal.samples.iter_mut().zip(&inst.ego.samples) {
        s.lane_id = inst
            .principal
            .at_frame(orig.frame)
            .map_or(s.lane_id, |p| p.lane_id);
    }
    if let Some(sec) = out.secondary.as_mut() {
        for s in &mut sec.samples {
            s.lane_id = inst.ego.at_frame(s.frame).map_or(s.lane_id, |e| e.lane_id);
        }
    }
    let e0 = at(&inst.ego, t0, "ego", inst)?;
    let v_ego = v_ego.max(0.0);
    for s in &mut out.ego.samples {
        let tau = s.t - t0;
        s.x = e0.x + v_ego * tau;
        s.y = lane_center;
        s.vx = v_ego;
        s.vy = 0.0;
        s.ax = 0.0;
        s.ay = 0.0;
    }
    out.id = format!("{}~{}", inst.id, id.variant);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ParameterRow<'a> {
    scenario_id: &'a str,
    category: Category,
    variant: Variant,
    name: String,
    value: f64,
}

/// Long-format CSV: one row per (scenario, variant, parameter).
pub fn write_parameters<W: std::io::Write>(out: W, rows: &[(String, ParameterVector)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (scenario_id, pv) in rows {
        let named = pv.values.iter().map(|(k, v)| (k.clone(), *v));
        let coeffs = pv
            .svd_coefficients
            .iter()
            .enumerate()
            .map(|(k, v)| (format!("svd_{k}"), *v));
        for (name, value) in named.chain(coeffs) {
            w.serialize(ParameterRow {
                scenario_id,
                category: pv.id.category,
                variant: pv.id.variant,
                name,
                value,
            })?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}
