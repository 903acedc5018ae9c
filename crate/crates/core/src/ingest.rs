//! Trajectory recordings in a HighD-compatible CSV layout and the
//! ego-centric views built from them.
//!
//! A [`Recording`] is a faithful image of the files on disk: positions are the
//! upper-left bounding-box corner and the `width`/`height` columns hold the
//! longitudinal and lateral extent. [`extract_ego_views`] converts to box
//! centers and rotates every view so that the ego drives towards +x.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default perception range of an ego vehicle, meters.
pub const DEFAULT_VISIBILITY_RANGE: f64 = 100.0;
/// A view stops when the ego is this far (along its path) from its final position.
pub const DEFAULT_END_MARGIN: f64 = 100.0;
/// Allowed lateral excursion beyond the outermost lane marking.
const ROAD_TOLERANCE: f64 = 0.5;
/// Vehicles at least this long are classified as trucks.
const TRUCK_LENGTH: f64 = 8.0;

const TRACK_COLUMNS: [&str; 11] = [
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "laneId",
];

const META_COLUMNS: [&str; 5] = [
    "id",
    "frameRate",
    "duration",
    "lowerLaneMarkings",
    "upperLaneMarkings",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub frame: i64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub lane_id: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn from_length(length: f64) -> Self {
        if length >= TRUCK_LENGTH {
            VehicleClass::Truck
        } else {
            VehicleClass::Car
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub id: u32,
    pub samples: Vec<Sample>,
    /// Longitudinal extent, m.
    pub length: f64,
    /// Lateral extent, m.
    pub width: f64,
    pub class: VehicleClass,
}

impl VehicleTrack {
    pub fn first_frame(&self) -> Option<i64> {
        self.samples.first().map(|s| s.frame)
    }

    /// Sample at `frame`, assuming samples are sorted by frame.
    pub fn at_frame(&self, frame: i64) -> Option<&Sample> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame)
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Mean longitudinal velocity; its sign is the driving direction.
    pub fn mean_vx(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.vx).sum::<f64>() / self.samples.len() as f64
    }

    /// Total arc length of the recorded path.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: u32,
    pub frame_rate: f64,
    pub duration: f64,
    pub lower_lane_markings: Vec<f64>,
    pub upper_lane_markings: Vec<f64>,
    pub tracks: Vec<VehicleTrack>,
}

impl Recording {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// All lane markings, ascending.
    pub fn lane_markings(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self
            .upper_lane_markings
            .iter()
            .chain(&self.lower_lane_markings)
            .copied()
            .collect();
        m.sort_by(f64::total_cmp);
        m
    }

    /// Checks the structural invariants that loading relies on.
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0) {
            return Err(Error::Format(format!(
                "recording {}: frame rate must be positive",
                self.id
            )));
        }
        let markings = self.lane_markings();
        let max_lane = markings.len() as i32 + 1;
        for track in &self.tracks {
            if !(track.length > 0.0 && track.width > 0.0) {
                return Err(Error::Format(format!(
                    "vehicle {}: non-positive dimensions",
                    track.id
                )));
            }
            for w in track.samples.windows(2) {
                if w[1].frame != w[0].frame + 1 {
                    return Err(Error::Format(format!(
                        "vehicle {}: non-uniform timestep between frames {} and {}",
                        track.id, w[0].frame, w[1].frame
                    )));
                }
            }
            if let (Some(lo), Some(hi)) = (markings.first(), markings.last()) {
                for s in &track.samples {
                    let yc = s.y + track.width / 2.0;
                    if yc < lo - ROAD_TOLERANCE || yc > hi + ROAD_TOLERANCE {
                        return Err(Error::Format(format!(
                            "vehicle {} frame {}: lateral position {yc} outside lane markings",
                            track.id, s.frame
                        )));
                    }
                    if s.lane_id < 1 || s.lane_id > max_lane {
                        return Err(Error::Format(format!(
                            "vehicle {} frame {}: undeclared lane {}",
                            track.id, s.frame, s.lane_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lane id of a lateral center position: one plus the number of markings below it.
pub fn lane_id_for(markings: &[f64], y: f64) -> i32 {
    1 + markings.iter().filter(|&&m| m < y).count() as i32
}

/// The `NN_recordingMeta.csv` sibling of a `NN_tracks.csv` file.
pub fn meta_path_for(tracks: &Path) -> PathBuf {
    let name = tracks
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let meta = match name.strip_suffix("tracks.csv") {
        Some(prefix) => format!("{prefix}recordingMeta.csv"),
        None => format!("{name}.meta.csv"),
    };
    tracks.with_file_name(meta)
}

/// Loads a recording from a tracks CSV and its sibling metadata CSV.
pub fn load_recording(tracks: &Path) -> Result<Recording> {
    load_recording_with_meta(tracks, &meta_path_for(tracks))
}

pub fn load_recording_with_meta(tracks_path: &Path, meta_path: &Path) -> Result<Recording> {
    let meta = read_meta(meta_path)?;
    let mut reader = open_csv(tracks_path)?;
    let cols = column_indices(&mut reader, tracks_path, &TRACK_COLUMNS)?;

    let mut by_id: BTreeMap<u32, VehicleTrack> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i as u64 + 2;
        let record = record.map_err(|e| parse_err(tracks_path, row, e.to_string()))?;
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(cols[c]).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| {
                parse_err(
                    tracks_path,
                    row,
                    format!("column `{}`: cannot parse {raw:?}", TRACK_COLUMNS[c]),
                )
            })
        };
        let int = |c: usize| -> Result<i64> {
            let raw = record.get(cols[c]).unwrap_or("");
            raw.trim().parse::<i64>().map_err(|_| {
                parse_err(
                    tracks_path,
                    row,
                    format!("column `{}`: cannot parse {raw:?}", TRACK_COLUMNS[c]),
                )
            })
        };
        let frame = int(0)?;
        let id = u32::try_from(int(1)?)
            .map_err(|_| parse_err(tracks_path, row, "negative vehicle id".into()))?;
        let length = field(4)?;
        let width = field(5)?;
        let sample = Sample {
            frame,
            t: frame as f64 / meta.frame_rate,
            x: field(2)?,
            y: field(3)?,
            vx: field(6)?,
            vy: field(7)?,
            ax: field(8)?,
            ay: field(9)?,
            lane_id: int(10)? as i32,
        };
        let track = by_id.entry(id).or_insert_with(|| VehicleTrack {
            id,
            samples: Vec::new(),
            length,
            width,
            class: VehicleClass::from_length(length),
        });
        if let Some(last) = track.samples.last() {
            if sample.frame <= last.frame {
                return Err(parse_err(
                    tracks_path,
                    row,
                    format!("vehicle {id}: frames not strictly increasing"),
                ));
            }
        }
        track.samples.push(sample);
    }

    let rec = Recording {
        id: meta.id,
        frame_rate: meta.frame_rate,
        duration: meta.duration,
        lower_lane_markings: meta.lower,
        upper_lane_markings: meta.upper,
        tracks: by_id.into_values().collect(),
    };
    rec.validate()?;
    Ok(rec)
}

struct Meta {
    id: u32,
    frame_rate: f64,
    duration: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn read_meta(path: &Path) -> Result<Meta> {
    let mut reader = open_csv(path)?;
    let cols = column_indices(&mut reader, path, &META_COLUMNS)?;
    let record = reader
        .records()
        .next()
        .ok_or_else(|| parse_err(path, 2, "metadata has no data row".into()))?
        .map_err(|e| parse_err(path, 2, e.to_string()))?;
    let get = |c: usize| record.get(cols[c]).unwrap_or("").trim();
    let num = |c: usize| -> Result<f64> {
        get(c).parse::<f64>().map_err(|_| {
            parse_err(
                path,
                2,
                format!("column `{}`: cannot parse {:?}", META_COLUMNS[c], get(c)),
            )
        })
    };
    let markings = |c: usize| -> Result<Vec<f64>> {
        get(c)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    parse_err(path, 2, format!("column `{}`: bad marking {s:?}", META_COLUMNS[c]))
                })
            })
            .collect()
    };
    let id = num(0)?;
    let frame_rate = num(1)?;
    if !(frame_rate > 0.0) {
        return Err(Error::Format(format!(
            "{}: frame rate must be positive",
            path.display()
        )));
    }
    Ok(Meta {
        id: id as u32,
        frame_rate,
        duration: num(2)?,
        lower: markings(3)?,
        upper: markings(4)?,
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn column_indices<const N: usize>(
    reader: &mut csv::Reader<File>,
    path: &Path,
    names: &[&str; N],
) -> Result<[usize; N]> {
    let headers = reader.headers()?.clone();
    let mut out = [0usize; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: (*name).to_string(),
            })?;
    }
    Ok(out)
}

fn parse_err(path: &Path, row: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    }
}

/// Writes `rec` as a tracks CSV and a metadata CSV.
pub fn write_recording(rec: &Recording, tracks_path: &Path, meta_path: &Path) -> Result<()> {
    let join = |m: &[f64]| {
        m.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut meta = BufWriter::new(File::create(meta_path).map_err(|e| Error::io(meta_path, e))?);
    writeln!(meta, "{}", META_COLUMNS.join(","))
        .and_then(|_| {
            writeln!(
                meta,
                "{},{},{},{},{}",
                rec.id,
                rec.frame_rate,
                rec.duration,
                join(&rec.lower_lane_markings),
                join(&rec.upper_lane_markings)
            )
        })
        .and_then(|_| meta.flush())
        .map_err(|e| Error::io(meta_path, e))?;

    let file = File::create(tracks_path).map_err(|e| Error::io(tracks_path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(tracks_path, e);
    writeln!(out, "{}", TRACK_COLUMNS.join(",")).map_err(io)?;
    for track in &rec.tracks {
        for s in &track.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.frame,
                track.id,
                s.x,
                s.y,
                track.length,
                track.width,
                s.vx,
                s.vy,
                s.ax,
                s.ay,
                s.lane_id
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Ego-centric slice of a recording. Coordinates are bounding-box centers,
/// rotated so that the ego travels towards +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoView {
    pub recording_id: u32,
    pub dt: f64,
    pub ego: VehicleTrack,
    /// Neighbors, clipped per sample to the perception range.
    pub others: Vec<VehicleTrack>,
    pub t_start: f64,
    pub t_end: f64,
    /// Lane markings in the view frame, ascending.
    pub lane_markings: Vec<f64>,
}

impl EgoView {
    pub fn other(&self, id: u32) -> Option<&VehicleTrack> {
        self.others.iter().find(|t| t.id == id)
    }

    /// Ego or neighbor track.
    pub fn track(&self, id: u32) -> Option<&VehicleTrack> {
        if self.ego.id == id {
            Some(&self.ego)
        } else {
            self.other(id)
        }
    }
}

/// Vehicles dropped from view extraction because they travel less than the end margin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewExtraction {
    pub views: Vec<EgoView>,
    pub excluded: Vec<u32>,
}

/// Builds one view per vehicle that travels farther than `end_margin`.
pub fn extract_ego_views(rec: &Recording, visibility_range: f64, end_margin: f64) -> Vec<EgoView> {
    extract_ego_views_detailed(rec, visibility_range, end_margin).views
}

pub fn extract_ego_views_detailed(
    rec: &Recording,
    visibility_range: f64,
    end_margin: f64,
) -> ViewExtraction {
    let markings = rec.lane_markings();
    let mut out = ViewExtraction::default();
    for ego in &rec.tracks {
        match build_view(rec, &markings, ego, visibility_range, end_margin) {
            Some(view) => out.views.push(view),
            None => out.excluded.push(ego.id),
        }
    }
    out
}

fn build_view(
    rec: &Recording,
    markings: &[f64],
    ego: &VehicleTrack,
    visibility_range: f64,
    end_margin: f64,
) -> Option<EgoView> {
    let dir = if ego.mean_vx() < 0.0 { -1.0 } else { 1.0 };
    let ego_c = to_view_frame(ego, dir);
    let total = ego_c.path_length();
    if !(total > end_margin) || ego_c.samples.is_empty() {
        return None;
    }

    let mut travelled = 0.0;
    let mut keep = 1;
    for w in ego_c.samples.windows(2) {
        travelled += (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
        if total - travelled < end_margin {
            break;
        }
        keep += 1;
    }
    let mut ego_v = ego_c;
    ego_v.samples.truncate(keep);
    let first = ego_v.samples[0].frame;
    let last = ego_v.samples[keep - 1].frame;

    let mut others = Vec::new();
    for other in &rec.tracks {
        if other.id == ego.id || other.mean_vx() * dir < 0.0 {
            continue;
        }
        let mut clipped = to_view_frame(other, dir);
        clipped.samples.retain(|s| {
            if s.frame < first || s.frame > last {
                return false;
            }
            let e = &ego_v.samples[(s.frame - first) as usize];
            (s.x - e.x).hypot(s.y - e.y) <= visibility_range
        });
        if !clipped.samples.is_empty() {
            others.push(clipped);
        }
    }

    let mut lane_markings: Vec<f64> = markings.iter().map(|m| m * dir).collect();
    lane_markings.sort_by(f64::total_cmp);
    Some(EgoView {
        recording_id: rec.id,
        dt: rec.dt(),
        t_start: ego_v.samples[0].t,
        t_end: ego_v.samples[keep - 1].t,
        ego: ego_v,
        others,
        lane_markings,
    })
}

/// Converts file coordinates to box centers, mirrored when `dir` is negative.
fn to_view_frame(track: &VehicleTrack, dir: f64) -> VehicleTrack {
    let samples = track
        .samples
        .iter()
        .map(|s| Sample {
            x: dir * (s.x + track.length / 2.0),
            y: dir * (s.y + track.width / 2.0),
            vx: dir * s.vx,
            vy: dir * s.vy,
            ax: dir * s.ax,
            ay: dir * s.ay,
            ..*s
        })
        .collect();
    VehicleTrack {
        samples,
        ..track.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_track(id: u32, x0: f64, y: f64, v: f64, frames: i64) -> VehicleTrack {
        VehicleTrack {
            id,
            samples: (0..frames)
                .map(|f| Sample {
                    frame: f,
                    t: f as f64 / 25.0,
                    x: x0 + v * f as f64 / 25.0,
                    y,
                    vx: v,
                    vy: 0.0,
                    ax: 0.0,
                    ay: 0.0,
                    lane_id: 2,
                })
                .collect(),
            length: 4.0,
            width: 2.0,
            class: VehicleClass::Car,
        }
    }

    fn recording(tracks: Vec<VehicleTrack>) -> Recording {
        Recording {
            id: 1,
            frame_rate: 25.0,
            duration: 60.0,
            lower_lane_markings: vec![10.0, 13.75, 17.5],
            upper_lane_markings: vec![],
            tracks,
        }
    }

    #[test]
    fn toy_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = recording(vec![
            straight_track(1, 0.0, 11.0, 20.0, 8),
            straight_track(2, 30.0, 11.0, 22.0, 8),
        ]);
        let tracks = dir.path().join("01_tracks.csv");
        write_recording(&rec, &tracks, &meta_path_for(&tracks)).unwrap();
        let loaded = load_recording(&tracks).unwrap();
        assert_eq!(loaded.tracks.len(), 2);
        assert!(loaded.tracks.iter().all(|t| t.samples.len() == 8));
        assert_eq!(loaded, rec);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let tracks = dir.path().join("01_tracks.csv");
        let rec = recording(vec![straight_track(1, 0.0, 11.0, 20.0, 3)]);
        write_recording(&rec, &tracks, &meta_path_for(&tracks)).unwrap();
        let text = std::fs::read_to_string(&tracks)
            .unwrap()
            .replacen("xVelocity", "speed", 1);
        std::fs::write(&tracks, text).unwrap();
        match load_recording(&tracks) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "xVelocity"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let tracks = dir.path().join("01_tracks.csv");
        let rec = recording(vec![straight_track(1, 0.0, 11.0, 20.0, 3)]);
        write_recording(&rec, &tracks, &meta_path_for(&tracks)).unwrap();
        let mut lines: Vec<String> = std::fs::read_to_string(&tracks)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines[2] = lines[2].replacen(",20,", ",fast,", 1);
        std::fs::write(&tracks, lines.join("\n")).unwrap();
        match load_recording(&tracks) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn frame_gap_is_format_error() {
        let mut t = straight_track(1, 0.0, 11.0, 20.0, 5);
        t.samples.remove(2);
        let err = recording(vec![t]).validate().unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn one_view_per_long_enough_vehicle() {
        // 30 s at 10 m/s = 300 m of travel each
        let rec = recording(vec![
            straight_track(1, 0.0, 11.0, 10.0, 750),
            straight_track(2, 40.0, 11.0, 10.0, 750),
            straight_track(3, 80.0, 15.0, 10.0, 750),
        ]);
        let views = extract_ego_views(&rec, 100.0, 100.0);
        assert_eq!(views.len(), 3);
        for v in &views {
            let last = v.ego.samples.last().unwrap();
            let final_x = 10.0 * 749.0 / 25.0 + v.ego.samples[0].x;
            assert!(final_x - last.x >= 100.0 - 1e-9);
            assert!(final_x - last.x < 100.0 + 10.0 / 25.0 + 1e-9);
        }
    }

    #[test]
    fn lone_vehicle_has_no_neighbors() {
        let rec = recording(vec![straight_track(1, 0.0, 11.0, 20.0, 500)]);
        let views = extract_ego_views(&rec, 100.0, 100.0);
        assert_eq!(views.len(), 1);
        assert!(views[0].others.is_empty());
    }

    #[test]
    fn constant_far_gap_is_never_perceived() {
        let rec = recording(vec![
            straight_track(1, 0.0, 11.0, 20.0, 500),
            straight_track(2, 150.0, 11.0, 20.0, 500),
        ]);
        let views = extract_ego_views(&rec, 100.0, 100.0);
        assert_eq!(views.len(), 2);
        assert!(views.iter().all(|v| v.others.is_empty()));
    }

    #[test]
    fn short_track_is_excluded() {
        let rec = recording(vec![
            straight_track(1, 0.0, 11.0, 20.0, 500),
            straight_track(2, 50.0, 11.0, 20.0, 100),
        ]);
        let out = extract_ego_views_detailed(&rec, 100.0, 100.0);
        assert_eq!(out.views.len(), 1);
        assert_eq!(out.excluded, vec![2]);
    }

    #[test]
    fn reverse_direction_is_mirrored() {
        let mut t = straight_track(1, 1000.0, 11.0, -20.0, 500);
        for s in &mut t.samples {
            s.vx = -20.0;
        }
        let rec = recording(vec![t]);
        let views = extract_ego_views(&rec, 100.0, 100.0);
        let s = &views[0].ego.samples;
        assert!(s.iter().all(|s| s.vx > 0.0));
        assert!(s[1].x > s[0].x);
    }
}
