//! Synthetic recordings with planted cut-in, cut-out and LVD scenarios.
//!
//! Each plant runs in its own time slot on a straight two-lane road, so
//! plants never see each other. Accelerations are piecewise constant and
//! lane changes are linear, which makes every recorded position the exact
//! integral of the recorded velocity.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{lane_id_for, Recording, Sample, VehicleClass, VehicleTrack};
use crate::mining::Category;

pub const LANE_MARKINGS: [f64; 3] = [10.0, 13.75, 17.5];
/// Lane 1 (ego lane) and lane 2 centers.
pub const LANE_CENTERS: [f64; 2] = [11.875, 15.625];
const CAR: (f64, f64) = (4.5, 1.9);
const TRUCK: (f64, f64) = (12.0, 2.5);
/// Seconds from slot start to the key event.
const KEY_OFFSET: f64 = 5.0;
/// Vehicle lifetime within a slot, s.
const SLOT_ACTIVE: f64 = 21.0;
const SLOT_LENGTH: f64 = 22.0;
const START_X: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantCounts {
    pub compliant: usize,
    pub decoys: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantSpec {
    pub seed: u64,
    pub recording_id: u32,
    pub frame_rate: f64,
    pub cut_in: PlantCounts,
    pub cut_out: PlantCounts,
    pub lvd: PlantCounts,
    /// Slots of constant-speed traffic without scenarios.
    pub nuisance: usize,
    /// Lane-change duration of planted cut-ins and cut-outs, s.
    pub lane_change_duration: f64,
    /// Share of cut-in actors that are trucks.
    pub truck_share: f64,
    /// Plants appended after the random ones.
    pub extra: Vec<Plant>,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            seed: 0,
            recording_id: 1,
            frame_rate: 25.0,
            cut_in: PlantCounts::default(),
            cut_out: PlantCounts::default(),
            lvd: PlantCounts::default(),
            nuisance: 0,
            lane_change_duration: 5.0,
            truck_share: 0.2,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plant {
    CutIn {
        v_ego: f64,
        speed_ratio: f64,
        /// Bumper-to-bumper gap over ego speed at the crossing, s.
        thw: f64,
        truck: bool,
    },
    CutOut {
        v_ego: f64,
        v_lead: f64,
        /// Ego to cutting-out vehicle gap at the crossing, m.
        actor_gap: f64,
        /// Cutting-out vehicle to lead gap at the crossing, m.
        lead_gap: f64,
    },
    Lvd {
        v0: f64,
        decel: f64,
        /// Braking duration; rounded to whole frames.
        duration: f64,
        gap: f64,
    },
    Nuisance {
        speeds: Vec<f64>,
    },
}

impl Plant {
    pub fn category(&self) -> Option<Category> {
        match self {
            Plant::CutIn { .. } => Some(Category::CutIn),
            Plant::CutOut { .. } => Some(Category::CutOut),
            Plant::Lvd { .. } => Some(Category::Lvd),
            Plant::Nuisance { .. } => None,
        }
    }

    /// Whether the plant passes the mining filters.
    pub fn compliant(&self) -> bool {
        match *self {
            Plant::CutIn { speed_ratio, thw, .. } => speed_ratio < 0.95 && thw < 2.0,
            Plant::CutOut { v_ego, v_lead, .. } => v_lead < v_ego,
            Plant::Lvd { decel, .. } => decel > 2.0,
            Plant::Nuisance { .. } => false,
        }
    }
}

/// Ground truth of one planted scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantLabel {
    pub category: Category,
    pub compliant: bool,
    pub ego_id: u32,
    pub principal_id: u32,
    pub secondary_id: Option<u32>,
    pub key_time: f64,
    pub plant: Plant,
}

impl PlantSpec {
    /// Random plants first (cut-ins, cut-outs, LVDs, each compliant then
    /// decoys, then nuisance), followed by `extra`.
    pub fn plants(&self) -> Vec<Plant> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        for k in 0..self.cut_in.compliant + self.cut_in.decoys {
            let v_ego = rng.gen_range(22.0..30.0);
            let compliant = k < self.cut_in.compliant;
            let (mut speed_ratio, mut thw) = (rng.gen_range(0.78..0.92), rng.gen_range(0.8..1.8));
            if !compliant {
                if rng.gen_bool(0.5) {
                    speed_ratio = rng.gen_range(0.96..0.99);
                } else {
                    thw = rng.gen_range(2.2..3.0);
                }
            }
            let truck = rng.gen_bool(self.truck_share.clamp(0.0, 1.0));
            out.push(Plant::CutIn {
                v_ego,
                speed_ratio,
                thw,
                truck,
            });
        }
        for k in 0..self.cut_out.compliant + self.cut_out.decoys {
            let v_ego = rng.gen_range(22.0..30.0);
            let dv = if k < self.cut_out.compliant {
                -rng.gen_range(3.0..6.0)
            } else {
                rng.gen_range(1.0..3.0)
            };
            out.push(Plant::CutOut {
                v_ego,
                v_lead: v_ego + dv,
                actor_gap: rng.gen_range(10.0..20.0),
                // a faster lead was closer before the key event
                lead_gap: rng.gen_range(12.0..25.0) + KEY_OFFSET * dv.max(0.0),
            });
        }
        for k in 0..self.lvd.compliant + self.lvd.decoys {
            let v0 = rng.gen_range(22.0..30.0);
            let decel = if k < self.lvd.compliant {
                rng.gen_range(2.3..4.0)
            } else {
                rng.gen_range(1.2..1.8)
            };
            let dv = rng.gen_range(6.0..12.0);
            out.push(Plant::Lvd {
                v0,
                decel,
                duration: dv / decel,
                gap: rng.gen_range(25.0..40.0),
            });
        }
        for _ in 0..self.nuisance {
            let n = rng.gen_range(1..=3);
            let mut speeds: Vec<f64> = (0..n).map(|_| rng.gen_range(20.0..32.0)).collect();
            // the front vehicle of a shared lane never closes on the rear one
            if n == 3 && speeds[2] < speeds[0] {
                speeds.swap(0, 2);
            }
            out.push(Plant::Nuisance { speeds });
        }
        out.extend(self.extra.iter().cloned());
        out
    }
}

/// Piecewise-constant acceleration from `x0`, `v0`.
#[derive(Debug, Clone)]
struct Longitudinal {
    x0: f64,
    v0: f64,
    /// (start time, acceleration), ascending; zero acceleration before the first.
    phases: Vec<(f64, f64)>,
}

impl Longitudinal {
    fn constant(x0: f64, v0: f64) -> Self {
        Longitudinal {
            x0,
            v0,
            phases: Vec::new(),
        }
    }

    fn at(&self, t: f64) -> (f64, f64, f64) {
        let (mut x, mut v, mut a, mut t0) = (self.x0, self.v0, 0.0, 0.0);
        for &(start, accel) in &self.phases {
            if start > t {
                break;
            }
            let h = start - t0;
            x += v * h + a * h * h / 2.0;
            v += a * h;
            a = accel;
            t0 = start;
        }
        let h = t - t0;
        (x + v * h + a * h * h / 2.0, v + a * h, a)
    }
}

#[derive(Debug, Clone)]
struct Lateral {
    y0: f64,
    /// (start, duration, signed rate)
    change: Option<(f64, f64, f64)>,
}

impl Lateral {
    fn at(&self, t: f64) -> (f64, f64) {
        match self.change {
            None => (self.y0, 0.0),
            Some((start, dur, rate)) => {
                let u = (t - start).clamp(0.0, dur);
                let moving = t >= start - 1e-9 && t < start + dur - 1e-9;
                (self.y0 + rate * u, if moving { rate } else { 0.0 })
            }
        }
    }
}

struct Vehicle {
    dims: (f64, f64),
    lon: Longitudinal,
    lat: Lateral,
}

fn lane_change(from: f64, to: f64, key_frame: i64, frames: i64, dt: f64) -> Lateral {
    let dur = frames as f64 * dt;
    Lateral {
        y0: from,
        change: Some(((key_frame - frames / 2) as f64 * dt, dur, (to - from) / dur)),
    }
}

/// Whole frames needed to change speed by `dv` at up to `accel`, and the
/// acceleration that does it exactly.
fn speed_change(dv: f64, accel: f64, dt: f64) -> (i64, f64) {
    let frames = ((dv.abs() / accel / dt) - 1e-9).ceil().max(1.0) as i64;
    (frames, dv / (frames as f64 * dt))
}

/// Frame count of a lane change: even, so the crossing falls on a frame.
fn lane_change_frames(duration: f64, dt: f64) -> i64 {
    (((duration / dt) / 2.0).round() as i64).max(1) * 2
}

fn plant_vehicles(plant: &Plant, dt: f64, lc_duration: f64) -> (Vec<Vehicle>, Option<(usize, Option<usize>)>) {
    let key_frame = (KEY_OFFSET / dt).round() as i64;
    let ft = |f: i64| f as f64 * dt;
    let key = ft(key_frame);
    let lc_frames = lane_change_frames(lc_duration, dt);
    let [lane1, lane2] = LANE_CENTERS;
    match *plant {
        Plant::CutIn {
            v_ego,
            speed_ratio,
            thw,
            truck,
        } => {
            let dims = if truck { TRUCK } else { CAR };
            let v_a = speed_ratio * v_ego;
            let x_key = START_X + v_ego * key + (CAR.0 + dims.0) / 2.0 + thw * v_ego;
            let (n, accel) = speed_change(v_ego + 0.5 - v_a, 2.5, dt);
            let actor = Vehicle {
                dims,
                lon: Longitudinal {
                    x0: x_key - v_a * key,
                    v0: v_a,
                    phases: vec![(key, accel), (ft(key_frame + n), 0.0)],
                },
                lat: lane_change(lane2, lane1, key_frame, lc_frames, dt),
            };
            let ego = Vehicle {
                dims: CAR,
                lon: Longitudinal::constant(START_X, v_ego),
                lat: Lateral { y0: lane1, change: None },
            };
            (vec![ego, actor], Some((1, None)))
        }
        Plant::CutOut {
            v_ego,
            v_lead,
            actor_gap,
            lead_gap,
        } => {
            let x_actor = START_X + v_ego * key + CAR.0 + actor_gap;
            let x_lead = x_actor + CAR.0 + lead_gap;
            let mut ego_lon = Longitudinal::constant(START_X, v_ego);
            if v_lead < v_ego {
                let start = key_frame + (1.0 / dt).round() as i64;
                let (n, accel) = speed_change(v_lead - v_ego, 1.5, dt);
                ego_lon.phases = vec![(ft(start), accel), (ft(start + n), 0.0)];
            }
            let vehicles = vec![
                Vehicle {
                    dims: CAR,
                    lon: ego_lon,
                    lat: Lateral { y0: lane1, change: None },
                },
                Vehicle {
                    dims: CAR,
                    lon: Longitudinal::constant(x_actor - v_ego * key, v_ego),
                    lat: lane_change(lane1, lane2, key_frame, lc_frames, dt),
                },
                Vehicle {
                    dims: CAR,
                    lon: Longitudinal::constant(x_lead - v_lead * key, v_lead),
                    lat: Lateral { y0: lane1, change: None },
                },
            ];
            (vehicles, Some((1, Some(2))))
        }
        Plant::Lvd {
            v0,
            decel,
            duration,
            gap,
        } => {
            let frames = ((duration / dt).round() as i64).max(1);
            let brake = |start: i64| vec![(ft(start), -decel), (ft(start + frames), 0.0)];
            let vehicles = vec![
                Vehicle {
                    dims: CAR,
                    lon: Longitudinal {
                        x0: START_X,
                        v0,
                        phases: brake(key_frame + (1.0 / dt).round() as i64),
                    },
                    lat: Lateral { y0: lane1, change: None },
                },
                Vehicle {
                    dims: CAR,
                    lon: Longitudinal {
                        x0: START_X + CAR.0 + gap,
                        v0,
                        phases: brake(key_frame),
                    },
                    lat: Lateral { y0: lane1, change: None },
                },
            ];
            (vehicles, Some((1, None)))
        }
        Plant::Nuisance { ref speeds } => {
            let vehicles = speeds
                .iter()
                .enumerate()
                .map(|(k, &v)| Vehicle {
                    dims: CAR,
                    // alternate lanes; same-lane vehicles are 60 m apart
                    lon: Longitudinal::constant(START_X + 60.0 * (k / 2) as f64, v),
                    lat: Lateral {
                        y0: LANE_CENTERS[k % 2],
                        change: None,
                    },
                })
                .collect();
            (vehicles, None)
        }
    }
}

/// Builds the recording and the labels of every planted scenario.
pub fn generate(spec: &PlantSpec) -> Result<(Recording, Vec<PlantLabel>)> {
    if !(spec.frame_rate > 0.0) {
        return Err(Error::Generation("frame rate must be positive".into()));
    }
    let dt = 1.0 / spec.frame_rate;
    let slot_frames = (SLOT_LENGTH * spec.frame_rate).round() as i64;
    let active_frames = (SLOT_ACTIVE * spec.frame_rate).round() as i64;
    let plants = spec.plants();
    let mut tracks = Vec::new();
    let mut labels = Vec::new();
    let mut next_id = 1u32;
    for (slot, plant) in plants.iter().enumerate() {
        let first_frame = 1 + slot as i64 * slot_frames;
        let (vehicles, roles) = plant_vehicles(plant, dt, spec.lane_change_duration);
        let ids: Vec<u32> = (0..vehicles.len() as u32).map(|k| next_id + k).collect();
        next_id += vehicles.len() as u32;
        let slot_tracks: Vec<VehicleTrack> = vehicles
            .iter()
            .zip(&ids)
            .map(|(v, &id)| {
                let samples = (0..=active_frames)
                    .map(|k| {
                        let tau = k as f64 * dt;
                        let (x, vx, ax) = v.lon.at(tau);
                        let (y, vy) = v.lat.at(tau);
                        Sample {
                            frame: first_frame + k,
                            t: (first_frame + k) as f64 / spec.frame_rate,
                            x: x - v.dims.0 / 2.0,
                            y: y - v.dims.1 / 2.0,
                            vx,
                            vy,
                            ax,
                            ay: 0.0,
                            lane_id: lane_id_for(&LANE_MARKINGS, y),
                        }
                    })
                    .collect();
                VehicleTrack {
                    id,
                    samples,
                    length: v.dims.0,
                    width: v.dims.1,
                    class: VehicleClass::from_length(v.dims.0),
                }
            })
            .collect();
        check_no_overlap(&slot_tracks, slot)?;
        if let (Some(category), Some((principal, secondary))) = (plant.category(), roles) {
            labels.push(PlantLabel {
                category,
                compliant: plant.compliant(),
                ego_id: ids[0],
                principal_id: ids[principal],
                secondary_id: secondary.map(|s| ids[s]),
                key_time: (first_frame + (KEY_OFFSET / dt).round() as i64) as f64 / spec.frame_rate,
                plant: plant.clone(),
            });
        }
        tracks.extend(slot_tracks);
    }
    let total_frames = plants.len() as i64 * slot_frames;
    let rec = Recording {
        id: spec.recording_id,
        frame_rate: spec.frame_rate,
        duration: total_frames as f64 * dt,
        lower_lane_markings: LANE_MARKINGS.to_vec(),
        upper_lane_markings: Vec::new(),
        tracks,
    };
    rec.validate()?;
    Ok((rec, labels))
}

fn check_no_overlap(tracks: &[VehicleTrack], slot: usize) -> Result<()> {
    for (i, a) in tracks.iter().enumerate() {
        for b in &tracks[i + 1..] {
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                let dx = (sa.x + a.length / 2.0) - (sb.x + b.length / 2.0);
                let dy = (sa.y + a.width / 2.0) - (sb.y + b.width / 2.0);
                if dx.abs() < (a.length + b.length) / 2.0 && dy.abs() < (a.width + b.width) / 2.0 {
                    return Err(Error::Generation(format!(
                        "plant {slot}: vehicles {} and {} overlap at frame {}",
                        a.id, b.id, sa.frame
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Labels as pretty JSON.
pub fn labels_to_json(labels: &[PlantLabel]) -> Result<String> {
    Ok(serde_json::to_string_pretty(labels)?)
}

/// Planted filter quantities, for reports.
pub fn label_summary(labels: &[PlantLabel]) -> BTreeMap<(Category, bool), usize> {
    let mut out = BTreeMap::new();
    for l in labels {
        *out.entry((l.category, l.compliant)).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PlantSpec {
        PlantSpec {
            seed: 7,
            cut_in: PlantCounts { compliant: 7, decoys: 2 },
            cut_out: PlantCounts { compliant: 2, decoys: 1 },
            lvd: PlantCounts { compliant: 2, decoys: 1 },
            nuisance: 2,
            ..PlantSpec::default()
        }
    }

    #[test]
    fn labels_by_construction() {
        let (_, labels) = generate(&spec()).unwrap();
        let cut_ins: Vec<_> = labels.iter().filter(|l| l.category == Category::CutIn).collect();
        assert_eq!(cut_ins.len(), 9);
        assert_eq!(cut_ins.iter().filter(|l| l.compliant).count(), 7);
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&spec()).unwrap().0, generate(&spec()).unwrap().0);
    }

    #[test]
    fn positions_integrate_velocities() {
        let (rec, _) = generate(&spec()).unwrap();
        let dt = rec.dt();
        for t in &rec.tracks {
            for w in t.samples.windows(2) {
                // exact for piecewise-constant acceleration switching on frames
                let dx = w[1].x - w[0].x;
                let pred = w[0].vx * dt + w[0].ax * dt * dt / 2.0;
                assert!((dx - pred).abs() < 1e-9, "{} {dx} {pred}", t.id);
                assert!((w[1].vx - w[0].vx - w[0].ax * dt).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lvd_mean_decel_over_braking() {
        let s = PlantSpec {
            extra: vec![Plant::Lvd {
                v0: 25.0,
                decel: 2.5,
                duration: 4.0,
                gap: 30.0,
            }],
            ..PlantSpec::default()
        };
        let (rec, labels) = generate(&s).unwrap();
        let lead = rec.tracks.iter().find(|t| t.id == labels[0].principal_id).unwrap();
        let braking: Vec<_> = lead.samples.iter().filter(|s| s.ax < -1.0).collect();
        let start = braking[0];
        let end = lead.samples.iter().find(|s| s.t > start.t && s.ax > -0.5).unwrap();
        let mean = (start.vx - end.vx) / (end.t - start.t);
        assert!((mean - 2.5).abs() < 1e-6);
    }

    #[test]
    fn overlapping_plant_is_rejected() {
        let s = PlantSpec {
            extra: vec![Plant::Lvd {
                v0: 25.0,
                decel: 2.5,
                duration: 4.0,
                gap: -2.0,
            }],
            ..PlantSpec::default()
        };
        assert!(matches!(generate(&s), Err(Error::Generation(_))));
    }
}
