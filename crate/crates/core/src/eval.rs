//! Baseline-versus-variant agreement: confusion counts, recall, precision,
//! F1, baseline fail tables and radar-plot data.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::criteria::CriterionKind;
use crate::error::{Error, Result};
use crate::mining::Category;
use crate::models::ModelKind;
use crate::sim::SimOutcome;

/// Variant label of non-parameterized runs.
pub const BASELINE: &str = "original";
pub const NO_FAILS_FLAG: &str = "no_fails";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn add(&mut self, baseline_failed: bool, variant_failed: bool) {
        match (baseline_failed, variant_failed) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Recall, precision and F1. With no fails on either side all three are 1
/// and flagged; a single empty denominator scores its metric 0 when the
/// other side has fails.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let base = c.tp + c.fn_;
    let var = c.tp + c.fp;
    if base == 0 && var == 0 {
        return Metrics {
            recall: 1.0,
            precision: 1.0,
            f1: 1.0,
            flags: vec![NO_FAILS_FLAG.to_string()],
        };
    }
    let ratio = |den: u64, other: u64| {
        if den > 0 {
            c.tp as f64 / den as f64
        } else if other > 0 {
            0.0
        } else {
            1.0
        }
    };
    let recall = ratio(base, var);
    let precision = ratio(var, base);
    let mut flags = Vec::new();
    if base == 0 {
        flags.push("recall_undefined".to_string());
    }
    if var == 0 {
        flags.push("precision_undefined".to_string());
    }
    let f1 = if recall + precision > 0.0 {
        2.0 * recall * precision / (recall + precision)
    } else {
        0.0
    };
    Metrics {
        recall,
        precision,
        f1,
        flags,
    }
}

/// Identity of one verdict.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub scenario_id: String,
    pub model: ModelKind,
    pub criterion: CriterionKind,
    /// THW in microseconds, to compare grid values exactly.
    pub thw_us: i64,
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, thw={})",
            self.scenario_id,
            self.model,
            self.criterion.as_str(),
            self.thw_us as f64 / 1e6
        )
    }
}

/// Flattens outcomes into keyed verdicts.
pub fn verdicts<'a>(outcomes: impl IntoIterator<Item = &'a SimOutcome>) -> Vec<(RunKey, bool)> {
    outcomes
        .into_iter()
        .flat_map(|o| {
            o.results.iter().map(move |r| {
                (
                    RunKey {
                        scenario_id: o.scenario_id.clone(),
                        model: o.model,
                        criterion: r.kind,
                        thw_us: (o.thw * 1e6).round() as i64,
                    },
                    r.failed,
                )
            })
        })
        .collect()
}

/// Confusion counts over matching keys; both sides must cover the same keys.
pub fn pair_and_count(baseline: &[(RunKey, bool)], variant: &[(RunKey, bool)]) -> Result<ConfusionCounts> {
    let base: BTreeMap<&RunKey, bool> = baseline.iter().map(|(k, v)| (k, *v)).collect();
    let mut seen = BTreeSet::new();
    let mut c = ConfusionCounts::default();
    for (k, v) in variant {
        let b = base
            .get(k)
            .ok_or_else(|| Error::Pairing(format!("variant run {k} has no baseline run")))?;
        if !seen.insert(k) {
            return Err(Error::Pairing(format!("duplicate variant run {k}")));
        }
        c.add(*b, *v);
    }
    if let Some(k) = base.keys().find(|k| !seen.contains(*k)) {
        return Err(Error::Pairing(format!("baseline run {k} has no variant run")));
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub category: Category,
    pub model: ModelKind,
    pub criterion: CriterionKind,
    pub variant: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    /// Scenarios without runs for this variant, left out of the pairing.
    pub unpaired_scenarios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailCell {
    pub category: Category,
    pub model: ModelKind,
    pub criterion: CriterionKind,
    pub fails: u64,
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_digest: String,
    pub baseline_fails: Vec<FailCell>,
    pub entries: Vec<MetricsEntry>,
}

/// Baseline fail counts for every (category, model, criterion) present in
/// `categories` × `models`.
pub fn fail_table(baseline: &[SimOutcome], categories: &[Category], models: &[ModelKind]) -> Vec<FailCell> {
    let mut cells = Vec::new();
    for &category in categories {
        for &model in models {
            for criterion in CriterionKind::ALL {
                let runs = baseline
                    .iter()
                    .filter(|o| o.category == category && o.model == model && o.variant == BASELINE);
                let (mut fails, mut total) = (0, 0);
                for o in runs {
                    total += 1;
                    if o.results.iter().any(|r| r.kind == criterion && r.failed) {
                        fails += 1;
                    }
                }
                cells.push(FailCell {
                    category,
                    model,
                    criterion,
                    fails,
                    runs: total,
                });
            }
        }
    }
    cells
}

/// Pools every THW of a (category, model, criterion, variant) into one set of counts.
pub fn build_report(outcomes: &[SimOutcome], config_digest: &str) -> Result<MetricsReport> {
    let categories: BTreeSet<Category> = outcomes.iter().map(|o| o.category).collect();
    let models: BTreeSet<ModelKind> = outcomes.iter().map(|o| o.model).collect();
    let categories: Vec<_> = categories.into_iter().collect();
    let models: Vec<_> = models.into_iter().collect();
    let mut entries = Vec::new();
    for &category in &categories {
        let in_cat: Vec<&SimOutcome> = outcomes.iter().filter(|o| o.category == category).collect();
        let base_scenarios: BTreeSet<&str> = in_cat
            .iter()
            .filter(|o| o.variant == BASELINE)
            .map(|o| o.scenario_id.as_str())
            .collect();
        let mut variants: Vec<&str> = in_cat
            .iter()
            .map(|o| o.variant.as_str())
            .filter(|v| *v != BASELINE)
            .collect();
        variants.sort_by_key(|v| variant_rank(v));
        variants.dedup();
        for variant in variants {
            let var_runs: Vec<&SimOutcome> = in_cat.iter().copied().filter(|o| o.variant == variant).collect();
            let scenarios: BTreeSet<&str> = var_runs.iter().map(|o| o.scenario_id.as_str()).collect();
            let unpaired = base_scenarios.difference(&scenarios).count();
            for &model in &models {
                let pick = |v: &str| -> Vec<(RunKey, bool)> {
                    verdicts(in_cat.iter().copied().filter(|o| {
                        o.variant == v && o.model == model && scenarios.contains(o.scenario_id.as_str())
                    }))
                };
                let base = pick(BASELINE);
                let var = pick(variant);
                for criterion in CriterionKind::ALL {
                    let sel = |vs: &[(RunKey, bool)]| -> Vec<(RunKey, bool)> {
                        vs.iter().filter(|(k, _)| k.criterion == criterion).cloned().collect()
                    };
                    let counts = pair_and_count(&sel(&base), &sel(&var))?;
                    entries.push(MetricsEntry {
                        category,
                        model,
                        criterion,
                        variant: variant.to_string(),
                        metrics: metrics(&counts),
                        counts,
                        unpaired_scenarios: unpaired,
                    });
                }
            }
        }
    }
    Ok(MetricsReport {
        config_digest: config_digest.to_string(),
        baseline_fails: fail_table(outcomes, &categories, &models),
        entries,
    })
}

/// Sorts variant labels in their canonical order, unknown labels last.
fn variant_rank(label: &str) -> (usize, String) {
    let pos = crate::param::Variant::parse(label)
        .and_then(|v| crate::param::Variant::ALL.iter().position(|&w| w == v))
        .unwrap_or(usize::MAX);
    (pos, label.to_string())
}

/// Table I layout: one row per (category, model), one column per criterion.
pub fn write_fail_table<W: std::io::Write>(mut out: W, cells: &[FailCell], config_digest: &str) -> Result<()> {
    writeln!(out, "# config_digest={config_digest}").map_err(|e| Error::Format(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "model", "collisions", "ttc", "btn", "runs"])?;
    let mut rows: BTreeMap<(Category, ModelKind), [u64; 4]> = BTreeMap::new();
    for c in cells {
        let row = rows.entry((c.category, c.model)).or_default();
        let slot = CriterionKind::ALL.iter().position(|&k| k == c.criterion).expect("known criterion");
        row[slot] = c.fails;
        row[3] = row[3].max(c.runs);
    }
    for ((cat, model), r) in rows {
        w.write_record([
            cat.as_str().to_string(),
            model.as_str().to_string(),
            r[0].to_string(),
            r[1].to_string(),
            r[2].to_string(),
            r[3].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// F1 per variant over the 12 (model × criterion) axes of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarData {
    pub category: Category,
    pub config_digest: String,
    pub axes: Vec<String>,
    pub series: Vec<RadarSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub variant: String,
    pub f1: Vec<f64>,
}

pub fn radar_axes() -> Vec<(ModelKind, CriterionKind, String)> {
    ModelKind::ALL
        .into_iter()
        .flat_map(|m| {
            CriterionKind::ALL
                .into_iter()
                .map(move |c| (m, c, format!("{}:{}", m.as_str(), c.as_str())))
        })
        .collect()
}

/// Radar data of `category`; axes without entries read 1.0 (no runs, no fails).
pub fn radar_export(report: &MetricsReport, category: Category) -> RadarData {
    let axes = radar_axes();
    let mut variants: Vec<&str> = report
        .entries
        .iter()
        .filter(|e| e.category == category)
        .map(|e| e.variant.as_str())
        .collect();
    variants.dedup();
    let series = variants
        .into_iter()
        .map(|variant| RadarSeries {
            variant: variant.to_string(),
            f1: axes
                .iter()
                .map(|(m, c, _)| {
                    report
                        .entries
                        .iter()
                        .find(|e| e.category == category && e.variant == variant && e.model == *m && e.criterion == *c)
                        .map_or(1.0, |e| e.metrics.f1)
                })
                .collect(),
        })
        .collect();
    RadarData {
        category,
        config_digest: report.config_digest.clone(),
        axes: axes.into_iter().map(|(_, _, name)| name).collect(),
        series,
    }
}

pub fn write_radar_csv<W: std::io::Write>(mut out: W, radar: &RadarData) -> Result<()> {
    writeln!(out, "# config_digest={}", radar.config_digest).map_err(|e| Error::Format(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variant".to_string()];
    header.extend(radar.axes.iter().cloned());
    w.write_record(&header)?;
    for s in &radar.series {
        let mut row = vec![s.variant.clone()];
        row.extend(s.f1.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Parses a file written by [`write_radar_csv`].
pub fn read_radar_csv(input: &str, category: Category) -> Result<RadarData> {
    let digest = input
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_digest="))
        .unwrap_or_default()
        .to_string();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input.as_bytes());
    let axes: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut series = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f1 = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("radar value `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        series.push(RadarSeries {
            variant: rec.get(0).unwrap_or_default().to_string(),
            f1,
        });
    }
    Ok(RadarData {
        category,
        config_digest: digest,
        axes,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: usize) -> RunKey {
        RunKey {
            scenario_id: format!("s{i}"),
            model: ModelKind::Rss,
            criterion: CriterionKind::Collision,
            thw_us: 1_000_000,
        }
    }

    fn counts(pairs: &[(bool, bool)]) -> Result<ConfusionCounts> {
        let b: Vec<_> = pairs.iter().enumerate().map(|(i, p)| (key(i), p.0)).collect();
        let v: Vec<_> = pairs.iter().enumerate().map(|(i, p)| (key(i), p.1)).collect();
        pair_and_count(&b, &v)
    }

    #[test]
    fn one_of_each() {
        let c = counts(&[(true, true), (true, false), (false, true), (false, false)]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fn_: 1, fp: 1, tn: 1 });
    }

    #[test]
    fn perfect_parameterization() {
        let pairs: Vec<_> = (0..10).map(|i| (i < 3, i < 3)).collect();
        let c = counts(&pairs).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (3, 0, 0, 7));
        assert_eq!(metrics(&c).f1, 1.0);
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionCounts { tp: 2, fn_: 1, fp: 0, tn: 0 });
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15 && m.precision == 1.0 && (m.f1 - 0.8).abs() < 1e-15);
        let m = metrics(&ConfusionCounts::default());
        assert_eq!((m.recall, m.precision, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.flags, vec![NO_FAILS_FLAG]);
        let m = metrics(&ConfusionCounts { tp: 0, fn_: 2, fp: 3, tn: 1 });
        assert_eq!(m.f1, 0.0);
        let m = metrics(&ConfusionCounts { tp: 0, fn_: 0, fp: 3, tn: 1 });
        assert_eq!((m.recall, m.precision, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unmatched_key_is_pairing_error() {
        let b = vec![(key(0), true)];
        let v = vec![(key(1), true)];
        assert!(matches!(pair_and_count(&b, &v), Err(Error::Pairing(m)) if m.contains("s1")));
    }

    #[test]
    fn empty_fail_table_is_zero() {
        let cells = fail_table(&[], &[Category::CutIn], &ModelKind::ALL);
        assert_eq!(cells.len(), 12);
        assert!(cells.iter().all(|c| c.fails == 0));
    }

    #[test]
    fn radar_round_trip() {
        let report = MetricsReport {
            config_digest: "abc".into(),
            baseline_fails: vec![],
            entries: radar_axes()
                .into_iter()
                .enumerate()
                .map(|(k, (model, criterion, _))| MetricsEntry {
                    category: Category::Lvd,
                    model,
                    criterion,
                    variant: "i".into(),
                    counts: ConfusionCounts::default(),
                    metrics: Metrics {
                        recall: 1.0,
                        precision: 1.0,
                        f1: 1.0 / (k as f64 + 3.0),
                        flags: vec![],
                    },
                    unpaired_scenarios: 0,
                })
                .collect(),
        };
        let radar = radar_export(&report, Category::Lvd);
        assert_eq!(radar.axes.len(), 12);
        let mut buf = Vec::new();
        write_radar_csv(&mut buf, &radar).unwrap();
        let back = read_radar_csv(std::str::from_utf8(&buf).unwrap(), Category::Lvd).unwrap();
        assert_eq!(back, radar);
    }
}
