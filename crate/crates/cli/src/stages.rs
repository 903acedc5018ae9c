//! Pipeline stages. Each reads the previous stage's artifacts from the
//! output directory and writes its own.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paramcheck::eval::{self, MetricsReport, BASELINE};
use paramcheck::ingest::{self, extract_ego_views_detailed, EgoView};
use paramcheck::mining::mine_view;
use paramcheck::param::{self, fit_svd_basis, parameterize, synthesize, ParameterVector, ParameterizationId};
use paramcheck::sim::{self, SimError, SimJob};
use paramcheck::synth::{self, PlantLabel};
use paramcheck::{Category, ScenarioInstance, SvdBasis, Variant};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self as art, require};
use crate::config::RunConfig;

pub struct Ctx {
    pub cfg: RunConfig,
    pub digest: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let digest = cfg.digest();
        Ctx { cfg, digest }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn warn_digest(&self, artifact: &Path, digest: &str) {
        if digest != self.digest {
            eprintln!(
                "warning: {} was produced under a different configuration (digest {})",
                artifact.display(),
                short(digest)
            );
        }
    }
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

#[derive(Serialize, Deserialize)]
struct Labels {
    labels: Vec<PlantLabel>,
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let Some(spec) = &ctx.cfg.data.synthetic else {
        bail!("the configuration has no [data.synthetic] table to generate from");
    };
    let (rec, labels) = synth::generate(spec)?;
    let dir = ctx.cfg.synthetic_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let tracks = synthetic_tracks(ctx);
    ingest::write_recording(&rec, &tracks, &ingest::meta_path_for(&tracks))?;
    art::write_json(&dir.join(art::LABELS), &ctx.digest, Labels { labels: labels.clone() })?;
    let summary = synth::label_summary(&labels);
    println!(
        "synth: recording {} with {} vehicles, {} planted scenarios -> {}",
        rec.id,
        rec.tracks.len(),
        labels.len(),
        dir.display()
    );
    for ((cat, compliant), n) in summary {
        println!("  {cat:<8} {:<9} {n}", if compliant { "compliant" } else { "decoy" });
    }
    Ok(())
}

fn synthetic_tracks(ctx: &Ctx) -> PathBuf {
    let id = ctx.cfg.data.synthetic.as_ref().map_or(1, |s| s.recording_id);
    ctx.cfg.synthetic_dir().join(format!("{id:02}_tracks.csv"))
}

/// Track files named by the configuration, with directories expanded.
fn recording_files(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    if ctx.cfg.data.recordings.is_empty() {
        if ctx.cfg.data.synthetic.is_some() {
            return Ok(vec![require(synthetic_tracks(ctx), "synth")?]);
        }
        bail!("no input: list [data] recordings or add a [data.synthetic] table");
    }
    let mut files = Vec::new();
    for p in &ctx.cfg.data.recordings {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.file_name().is_some_and(|n| n.to_string_lossy().ends_with("_tracks.csv")))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("{} holds no *_tracks.csv files", p.display());
            }
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            bail!("recording path {} does not exist", p.display());
        }
    }
    Ok(files)
}

#[derive(Serialize, Deserialize)]
struct Views {
    views: Vec<EgoView>,
}

pub fn ingest(ctx: &Ctx) -> Result<()> {
    let mut views = Vec::new();
    let files = recording_files(ctx)?;
    for f in &files {
        let rec = ingest::load_recording(f).with_context(|| format!("ingesting {}", f.display()))?;
        let ex = extract_ego_views_detailed(&rec, ctx.cfg.ingest.visibility_range, ctx.cfg.ingest.end_margin);
        println!(
            "ingest: {} -> {} ego views ({} short tracks excluded)",
            f.display(),
            ex.views.len(),
            ex.excluded.len()
        );
        views.extend(ex.views);
    }
    art::write_json(&ctx.path(art::VIEWS), &ctx.digest, Views { views })
}

pub fn mine(ctx: &Ctx) -> Result<()> {
    let path = require(ctx.path(art::VIEWS), "ingest")?;
    let doc: art::Stamped<Views> = art::read_json(&path)?;
    ctx.warn_digest(&path, &doc.config_digest);
    let found: Vec<ScenarioInstance> = doc
        .body
        .views
        .iter()
        .flat_map(|v| mine_view(v, &ctx.cfg.mining))
        .filter(|i| ctx.cfg.categories.contains(&i.category))
        .collect();
    let mut counts: BTreeMap<Category, usize> = ctx.cfg.categories.iter().map(|&c| (c, 0)).collect();
    for i in &found {
        *counts.entry(i.category).or_default() += 1;
    }
    art::write_jsonl(&ctx.path(art::CATALOG), &ctx.digest, &found)?;
    let summary: Vec<String> = counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
    println!("mine: {} scenarios ({})", found.len(), summary.join(", "));
    Ok(())
}

fn read_catalog(ctx: &Ctx) -> Result<Vec<ScenarioInstance>> {
    let path = require(ctx.path(art::CATALOG), "mine")?;
    let (digest, items) = art::read_jsonl(&path)?;
    ctx.warn_digest(&path, &digest);
    Ok(items)
}

fn by_category(catalog: &[ScenarioInstance], cat: Category) -> Vec<ScenarioInstance> {
    catalog.iter().filter(|i| i.category == cat).cloned().collect()
}

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    basis: SvdBasis,
}

/// Categories that need a basis: an SVD variant is selected and instances exist.
fn svd_categories(ctx: &Ctx, catalog: &[ScenarioInstance]) -> Vec<Category> {
    let variants = ctx.cfg.selected_variants();
    ctx.cfg
        .categories
        .iter()
        .copied()
        .filter(|&c| variants.iter().any(|v| v.category() == c && v.svd_dim().is_some()))
        .filter(|&c| catalog.iter().any(|i| i.category == c))
        .collect()
}

pub fn fit_basis(ctx: &Ctx) -> Result<()> {
    let catalog = read_catalog(ctx)?;
    let cats = svd_categories(ctx, &catalog);
    if cats.is_empty() {
        println!("fit-basis: no selected SVD variant has scenarios; nothing to fit");
    }
    for cat in cats {
        let corpus = by_category(&catalog, cat);
        let basis = fit_svd_basis(&corpus, cat, ctx.cfg.grid_length)
            .with_context(|| format!("fitting the {cat} basis; deselect its SVD variants to skip it"))?;
        let energy: Vec<String> = (1..=5).map(|d| format!("{:.3}", basis.energy(d))).collect();
        art::write_json(&ctx.path(&art::basis_file(cat.as_str())), &ctx.digest, BasisDoc { basis })?;
        println!(
            "fit-basis: {cat} from {} scenarios, energy of d=1..5: {}",
            corpus.len(),
            energy.join(" ")
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ParamErrorRow<'a> {
    category: Category,
    scenario_id: &'a str,
    variant: &'a str,
    message: &'a str,
}

pub fn simulate(ctx: &Ctx) -> Result<()> {
    let catalog = read_catalog(ctx)?;
    let variants = ctx.cfg.selected_variants();
    let mut bases: BTreeMap<Category, SvdBasis> = BTreeMap::new();
    for cat in svd_categories(ctx, &catalog) {
        let path = require(ctx.path(&art::basis_file(cat.as_str())), "fit-basis")?;
        let doc: art::Stamped<BasisDoc> = art::read_json(&path)?;
        ctx.warn_digest(&path, &doc.config_digest);
        bases.insert(cat, doc.body.basis);
    }
    let mut jobs = Vec::new();
    let mut params: Vec<(String, ParameterVector)> = Vec::new();
    let mut param_errors: Vec<(Category, String, Variant, String)> = Vec::new();
    for inst in catalog.iter().filter(|i| ctx.cfg.categories.contains(&i.category)) {
        jobs.push(SimJob::baseline(inst.clone()));
        for &v in variants.iter().filter(|v| v.category() == inst.category) {
            let basis = v.svd_dim().and_then(|_| bases.get(&inst.category));
            let id = ParameterizationId::new(inst.category, v)?;
            let made = parameterize(inst, id, basis).and_then(|p| {
                let s = synthesize(&p, inst, basis)?;
                Ok((p, s))
            });
            match made {
                Ok((p, s)) => {
                    params.push((inst.id.clone(), p));
                    jobs.push(SimJob::variant(&inst.id, v.label(), s));
                }
                Err(e) => param_errors.push((inst.category, inst.id.clone(), v, e.to_string())),
            }
        }
    }
    let (outcomes, mut errors) = sim::sweep(&jobs, &ctx.cfg.models, &ctx.cfg.sim);

    // variant runs without a baseline run cannot be paired
    let key = |id: &str, m: paramcheck::ModelKind, thw: f64| (id.to_string(), m, (thw * 1e6).round() as i64);
    let baseline: BTreeSet<_> = outcomes
        .iter()
        .filter(|o| o.variant == BASELINE)
        .map(|o| key(&o.scenario_id, o.model, o.thw))
        .collect();
    let (outcomes, orphans): (Vec<_>, Vec<_>) = outcomes
        .into_iter()
        .partition(|o| o.variant == BASELINE || baseline.contains(&key(&o.scenario_id, o.model, o.thw)));
    errors.extend(orphans.into_iter().map(|o| SimError {
        category: o.category,
        scenario_id: o.scenario_id,
        variant: o.variant,
        model: o.model,
        thw: o.thw,
        message: "baseline run failed; variant run dropped".into(),
    }));

    let mut w = art::create_csv(&ctx.path(art::PARAMETERS), &ctx.digest)?;
    param::write_parameters(&mut w, &params)?;
    w.flush()?;
    let mut w = art::create_csv(&ctx.path(art::PARAM_ERRORS), &ctx.digest)?;
    {
        let mut c = csv::WriterBuilder::new().has_headers(false).from_writer(&mut w);
        c.write_record(["category", "scenario_id", "variant", "message"])?;
        for (category, id, v, msg) in &param_errors {
            c.serialize(ParamErrorRow {
                category: *category,
                scenario_id: id,
                variant: v.label(),
                message: msg,
            })?;
        }
        c.flush()?;
    }
    w.flush()?;
    let mut w = art::create_csv(&ctx.path(art::OUTCOMES), &ctx.digest)?;
    sim::write_outcomes(&mut w, &outcomes)?;
    w.flush()?;
    let mut w = art::create_csv(&ctx.path(art::SIM_ERRORS), &ctx.digest)?;
    sim::write_sim_errors(&mut w, &errors)?;
    w.flush()?;
    println!(
        "simulate: {} jobs x {} models x {} THW -> {} outcomes, {} run errors, {} parameterization errors",
        jobs.len(),
        ctx.cfg.models.len(),
        ctx.cfg.sim.thw_grid.len(),
        outcomes.len(),
        errors.len(),
        param_errors.len()
    );
    Ok(())
}

pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let path = require(ctx.path(art::OUTCOMES), "simulate")?;
    if let Some(d) = art::csv_digest(&path)? {
        ctx.warn_digest(&path, &d);
    }
    let f = std::fs::File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let outcomes = sim::read_outcomes(std::io::BufReader::new(f))?;
    let report = eval::build_report(&outcomes, &ctx.digest)?;
    let mut w = art::create(&ctx.path(art::REPORT))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "evaluate: {} outcomes -> {} metric entries",
        outcomes.len(),
        report.entries.len()
    );
    Ok(())
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let path = require(ctx.path(art::REPORT), "evaluate")?;
    let f = std::fs::File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let report: MetricsReport =
        serde_json::from_reader(std::io::BufReader::new(f)).with_context(|| format!("malformed {}", path.display()))?;
    ctx.warn_digest(&path, &report.config_digest);
    let mut w = art::create(&ctx.path(art::FAIL_TABLE))?;
    eval::write_fail_table(&mut w, &report.baseline_fails, &report.config_digest)?;
    w.flush()?;
    let cats: BTreeSet<Category> = report
        .baseline_fails
        .iter()
        .map(|c| c.category)
        .chain(report.entries.iter().map(|e| e.category))
        .collect();
    for cat in cats {
        let radar = eval::radar_export(&report, cat);
        let mut w = art::create(&ctx.path(&art::radar_file(cat.as_str(), "csv")))?;
        eval::write_radar_csv(&mut w, &radar)?;
        w.flush()?;
        let mut w = art::create(&ctx.path(&art::radar_file(cat.as_str(), "json")))?;
        serde_json::to_writer_pretty(&mut w, &radar)?;
        writeln!(w)?;
        w.flush()?;
    }
    print_fail_table(&report);
    Ok(())
}

fn print_fail_table(report: &MetricsReport) {
    println!("report: baseline fails per category and model");
    println!("  {:<8} {:<7} {:>10} {:>6} {:>6} {:>6}", "category", "model", "collisions", "ttc", "btn", "runs");
    let mut rows: BTreeMap<(Category, paramcheck::ModelKind), [u64; 4]> = BTreeMap::new();
    for c in &report.baseline_fails {
        let row = rows.entry((c.category, c.model)).or_default();
        let slot = paramcheck::CriterionKind::ALL.iter().position(|&k| k == c.criterion).unwrap_or(0);
        row[slot] = c.fails;
        row[3] = row[3].max(c.runs);
    }
    for ((cat, model), r) in rows {
        println!(
            "  {:<8} {:<7} {:>10} {:>6} {:>6} {:>6}",
            cat.as_str(),
            model.as_str(),
            r[0],
            r[1],
            r[2],
            r[3]
        );
    }
}

pub fn all(ctx: &Ctx) -> Result<()> {
    if ctx.cfg.data.recordings.is_empty() && ctx.cfg.data.synthetic.is_some() {
        synth(ctx)?;
    }
    ingest(ctx)?;
    mine(ctx)?;
    fit_basis(ctx)?;
    simulate(ctx)?;
    evaluate(ctx)?;
    report(ctx)
}
