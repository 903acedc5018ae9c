mod common;

use paramcheck::eval::build_report;
use paramcheck::mining::{revalidate, Category, TagConfig};
use paramcheck::param::{fit_svd_basis, parameterize, synthesize, ParameterizationId, Variant, DEFAULT_GRID_LENGTH};
use paramcheck::sim::{self, SimConfig, SimJob};
use paramcheck::synth::generate;
use paramcheck::ModelKind;

#[test]
fn mining_recovers_planted_scenarios_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [1, 2, 3] {
        let (labels, found) = common::generate_and_mine(&common::spec(seed, 4, 3, 5, 2), dir.path());
        for cat in [Category::CutIn, Category::CutOut, Category::Lvd] {
            let (tp, fp, fn_) = common::confusion(&labels, &found, cat);
            assert_eq!((fp, fn_), (0, 0), "seed {seed} {cat}: tp={tp}");
        }
        let filters = TagConfig::default().scenario;
        assert!(found.iter().all(|i| revalidate(i, &filters)));
    }
}

#[test]
fn csv_round_trip_preserves_mining() {
    let dir = tempfile::tempdir().unwrap();
    let (rec, _) = generate(&common::spec(9, 2, 2, 2, 1)).unwrap();
    let direct = common::mine(&rec);
    let loaded = common::mine(&common::round_trip(&rec, dir.path()));
    let ids = |v: &[paramcheck::ScenarioInstance]| v.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&direct), ids(&loaded));
}

#[test]
fn end_to_end_sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (_, found) = common::generate_and_mine(&common::spec(5, 4, 3, 4, 0), dir.path());
    let mut jobs = Vec::new();
    for cat in [Category::CutIn, Category::CutOut, Category::Lvd] {
        let corpus: Vec<_> = found.iter().filter(|i| i.category == cat).cloned().collect();
        let basis = fit_svd_basis(&corpus, cat, DEFAULT_GRID_LENGTH).unwrap();
        for inst in &corpus {
            jobs.push(SimJob::baseline(inst.clone()));
            for v in Variant::for_category(cat) {
                let id = ParameterizationId::new(cat, v).unwrap();
                let b = v.svd_dim().map(|_| &basis);
                let p = parameterize(inst, id, b).unwrap();
                let synth = synthesize(&p, inst, b).unwrap();
                jobs.push(SimJob::variant(&inst.id, v.label(), synth));
            }
        }
    }
    let cfg = SimConfig {
        thw_grid: vec![1.0, 0.4],
        ..SimConfig::default()
    };
    let models = [ModelKind::Reg157, ModelKind::Rss];
    let (outcomes, errors) = sim::sweep(&jobs, &models, &cfg);
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(outcomes.len(), jobs.len() * models.len() * 2);
    let report = build_report(&outcomes, "digest").unwrap();
    assert_eq!(report.config_digest, "digest");
    for e in &report.entries {
        for m in [e.metrics.recall, e.metrics.precision, e.metrics.f1] {
            assert!((0.0..=1.0).contains(&m));
        }
    }
    let mut buf = Vec::new();
    sim::write_outcomes(&mut buf, &outcomes).unwrap();
    assert_eq!(sim::read_outcomes(buf.as_slice()).unwrap(), outcomes);
}
