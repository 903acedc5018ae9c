//! Hand-built recordings for the acceptance suite.
#![allow(dead_code)]

use paramcheck::ingest::{lane_id_for, Sample, VehicleClass, VehicleTrack};
use paramcheck::synth::{LANE_CENTERS, LANE_MARKINGS};
use paramcheck::Recording;

pub const FRAME_RATE: f64 = 25.0;
pub const DT: f64 = 1.0 / FRAME_RATE;
const CAR: (f64, f64) = (4.5, 1.9);
/// Frames per slot; each slot hosts one scenario.
const SLOT: i64 = 550;
const LIFE: i64 = 525;
/// Key event, frames after slot start.
const KEY: i64 = 125;
const LANE_CHANGE: f64 = 3.5;
/// Lane change duration in frames.
const LC_FRAMES: i64 = 76;

/// Center-line kinematics of one vehicle as a function of time since slot start.
struct Motion {
    lon: Box<dyn Fn(f64) -> (f64, f64, f64)>,
    lat: Box<dyn Fn(f64) -> (f64, f64)>,
}

/// Constant speed, then a constant deceleration to `v1` from `tb`.
fn speed_profile(x0: f64, v0: f64, v1: f64, tb: f64, decel: f64) -> impl Fn(f64) -> (f64, f64, f64) {
    let dur = if v1 < v0 { (v0 - v1) / decel } else { 0.0 };
    move |t| {
        if t <= tb || dur == 0.0 {
            (x0 + v0 * t, v0, 0.0)
        } else if t <= tb + dur {
            let h = t - tb;
            (x0 + v0 * tb + v0 * h - decel * h * h / 2.0, v0 - decel * h, -decel)
        } else {
            let h = t - tb - dur;
            (x0 + v0 * tb + (v0 + v1) / 2.0 * dur + v1 * h, v1, 0.0)
        }
    }
}

/// Linear lane change across `marking` by [`LANE_CHANGE`], centered on the key.
fn lane_change(marking: f64, toward_left: bool) -> impl Fn(f64) -> (f64, f64) {
    let sign = if toward_left { -1.0 } else { 1.0 };
    let rate = sign * LANE_CHANGE / (LC_FRAMES as f64 * DT);
    let start = (KEY - LC_FRAMES / 2) as f64 * DT;
    let end = (KEY + LC_FRAMES / 2) as f64 * DT;
    let y0 = marking - sign * LANE_CHANGE / 2.0;
    move |t| {
        if t < start {
            (y0, 0.0)
        } else if t < end - 1e-9 {
            (y0 + rate * (t - start), rate)
        } else {
            (y0 + rate * (end - start), 0.0)
        }
    }
}

fn keep_lane(y: f64) -> impl Fn(f64) -> (f64, f64) {
    move |_| (y, 0.0)
}

pub struct Builder {
    tracks: Vec<VehicleTrack>,
    slots: i64,
}

impl Builder {
    pub fn new() -> Self {
        Builder {
            tracks: Vec::new(),
            slots: 0,
        }
    }

    fn push_slot(&mut self, vehicles: Vec<Motion>) {
        let first = 1 + self.slots * SLOT;
        for m in vehicles {
            let id = self.tracks.len() as u32 + 1;
            let samples = (0..=LIFE)
                .map(|k| {
                    let t = k as f64 * DT;
                    let (x, vx, ax) = (m.lon)(t);
                    let (y, vy) = (m.lat)(t);
                    Sample {
                        frame: first + k,
                        t: (first + k) as f64 / FRAME_RATE,
                        x: x - CAR.0 / 2.0,
                        y: y - CAR.1 / 2.0,
                        vx,
                        vy,
                        ax,
                        ay: 0.0,
                        lane_id: lane_id_for(&LANE_MARKINGS, y),
                    }
                })
                .collect();
            self.tracks.push(VehicleTrack {
                id,
                samples,
                length: CAR.0,
                width: CAR.1,
                class: VehicleClass::Car,
            });
        }
        self.slots += 1;
    }

    /// A constant-speed actor cuts in `thw` seconds ahead of the ego. The
    /// recorded ego slows to the actor speed after the key so the two never touch.
    pub fn cut_in(&mut self, v_ego: f64, ratio: f64, thw: f64) -> &mut Self {
        let key = KEY as f64 * DT;
        let v_a = ratio * v_ego;
        let x_key = 10.0 + v_ego * key + CAR.0 + thw * v_ego;
        self.push_slot(vec![
            Motion {
                lon: Box::new(speed_profile(10.0, v_ego, v_a, key + 1.0, 2.0)),
                lat: Box::new(keep_lane(LANE_CENTERS[0])),
            },
            Motion {
                lon: Box::new(speed_profile(x_key - v_a * key, v_a, v_a, 0.0, 1.0)),
                lat: Box::new(lane_change(LANE_MARKINGS[1], true)),
            },
        ]);
        self
    }

    /// A constant-speed actor leaves the ego lane and uncovers a slower lead.
    pub fn cut_out(&mut self, v_ego: f64, dv_lead: f64, actor_gap: f64, lead_gap: f64) -> &mut Self {
        let key = KEY as f64 * DT;
        let v_l = v_ego - dv_lead;
        let x_actor = 10.0 + v_ego * key + CAR.0 + actor_gap;
        let x_lead = x_actor + CAR.0 + lead_gap;
        self.push_slot(vec![
            Motion {
                lon: Box::new(speed_profile(10.0, v_ego, v_l, key + 1.0, 2.0)),
                lat: Box::new(keep_lane(LANE_CENTERS[0])),
            },
            Motion {
                lon: Box::new(speed_profile(x_actor - v_ego * key, v_ego, v_ego, 0.0, 1.0)),
                lat: Box::new(lane_change(LANE_MARKINGS[1], false)),
            },
            Motion {
                lon: Box::new(speed_profile(x_lead - v_l * key, v_l, v_l, 0.0, 1.0)),
                lat: Box::new(keep_lane(LANE_CENTERS[0])),
            },
        ]);
        self
    }

    pub fn build(&self) -> Recording {
        let rec = Recording {
            id: 1,
            frame_rate: FRAME_RATE,
            duration: (self.slots * SLOT) as f64 * DT,
            lower_lane_markings: LANE_MARKINGS.to_vec(),
            upper_lane_markings: Vec::new(),
            tracks: self.tracks.clone(),
        };
        rec.validate().unwrap();
        rec
    }
}
