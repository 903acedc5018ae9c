//! Corpus helpers shared by integration tests.
#![allow(dead_code)]

use std::path::Path;

use paramcheck::ingest::{self, extract_ego_views, load_recording, write_recording};
use paramcheck::mining::{mine_view, Category, ScenarioInstance, TagConfig};
use paramcheck::synth::{generate, PlantCounts, PlantLabel, PlantSpec};
use paramcheck::Recording;

pub fn spec(seed: u64, cut_in: usize, cut_out: usize, lvd: usize, decoys: usize) -> PlantSpec {
    PlantSpec {
        seed,
        cut_in: PlantCounts { compliant: cut_in, decoys },
        cut_out: PlantCounts { compliant: cut_out, decoys },
        lvd: PlantCounts { compliant: lvd, decoys },
        nuisance: 1,
        ..PlantSpec::default()
    }
}

/// Writes the recording as CSV into `dir` and loads it back.
pub fn round_trip(rec: &Recording, dir: &Path) -> Recording {
    let tracks = dir.join(format!("{:02}_tracks.csv", rec.id));
    let meta = ingest::meta_path_for(&tracks);
    write_recording(rec, &tracks, &meta).unwrap();
    load_recording(&tracks).unwrap()
}

pub fn mine(rec: &Recording) -> Vec<ScenarioInstance> {
    let cfg = TagConfig::default();
    extract_ego_views(rec, ingest::DEFAULT_VISIBILITY_RANGE, ingest::DEFAULT_END_MARGIN)
        .iter()
        .flat_map(|v| mine_view(v, &cfg))
        .collect()
}

pub fn generate_and_mine(spec: &PlantSpec, dir: &Path) -> (Vec<PlantLabel>, Vec<ScenarioInstance>) {
    let (rec, labels) = generate(spec).unwrap();
    let rec = round_trip(&rec, dir);
    (labels, mine(&rec))
}

pub fn same_scenario(label: &PlantLabel, inst: &ScenarioInstance) -> bool {
    label.category == inst.category
        && label.ego_id == inst.ego_id
        && label.principal_id == inst.principal_id
        && (label.key_time - inst.key_time).abs() <= inst.dt + 1e-9
}

/// True positives, false positives and false negatives of mining against
/// the compliant labels of one category.
pub fn confusion(labels: &[PlantLabel], found: &[ScenarioInstance], category: Category) -> (usize, usize, usize) {
    let wanted: Vec<&PlantLabel> = labels
        .iter()
        .filter(|l| l.category == category && l.compliant)
        .collect();
    let got: Vec<&ScenarioInstance> = found.iter().filter(|i| i.category == category).collect();
    let tp = got.iter().filter(|i| wanted.iter().any(|l| same_scenario(l, i))).count();
    let fn_ = wanted.iter().filter(|l| !got.iter().any(|i| same_scenario(l, i))).count();
    (tp, got.len() - tp, fn_)
}
