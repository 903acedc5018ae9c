//! Run configuration: TOML file, command-line overrides and digest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paramcheck::ingest::{DEFAULT_END_MARGIN, DEFAULT_VISIBILITY_RANGE};
use paramcheck::param::DEFAULT_GRID_LENGTH;
use paramcheck::{Category, ModelKind, PlantSpec, SimConfig, TagConfig, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the synthetic corpus.
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads of the sweep; 0 uses every core.
    pub jobs: usize,
    pub data: DataConfig,
    pub ingest: IngestConfig,
    pub mining: TagConfig,
    pub categories: Vec<Category>,
    /// Variant labels; empty runs every variant of the selected categories.
    pub variants: Vec<String>,
    pub models: Vec<ModelKind>,
    /// Samples per resampled series in SVD feature vectors.
    pub grid_length: usize,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            jobs: 0,
            data: DataConfig::default(),
            ingest: IngestConfig::default(),
            mining: TagConfig::default(),
            categories: vec![Category::CutIn, Category::CutOut, Category::Lvd],
            variants: Vec::new(),
            models: ModelKind::ALL.to_vec(),
            grid_length: DEFAULT_GRID_LENGTH,
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `*_tracks.csv` files, or directories holding them.
    pub recordings: Vec<PathBuf>,
    /// Plants of the synthetic recording written by `synth`; used as input
    /// when no recordings are listed.
    pub synthetic: Option<PlantSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub visibility_range: f64,
    pub end_margin: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            visibility_range: DEFAULT_VISIBILITY_RANGE,
            end_margin: DEFAULT_END_MARGIN,
        }
    }
}

/// Command-line values that replace configuration entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub models: Option<Vec<ModelKind>>,
    pub variants: Option<Vec<String>>,
    pub categories: Option<Vec<Category>>,
}

impl RunConfig {
    /// Reads `path`, resolving relative data paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut cfg.data.recordings {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(out) = o.out {
            self.out = out;
        }
        if let Some(jobs) = o.jobs {
            self.jobs = jobs;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(models) = o.models {
            self.models = models;
        }
        if let Some(variants) = o.variants {
            self.variants = variants;
        }
        if let Some(categories) = o.categories {
            self.categories = categories;
        }
        if let Some(spec) = &mut self.data.synthetic {
            spec.seed = self.seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.data.recordings {
            if !p.exists() {
                bail!("recording path {} does not exist", p.display());
            }
        }
        if self.categories.is_empty() {
            bail!("no categories selected");
        }
        if self.models.is_empty() {
            bail!("no models selected");
        }
        for v in &self.variants {
            let variant = Variant::parse(v)
                .with_context(|| format!("unknown variant `{v}`"))?;
            if !self.categories.contains(&variant.category()) {
                bail!("variant `{v}` belongs to {}, which is not selected", variant.category());
            }
        }
        if self.grid_length < 2 {
            bail!("grid_length must be at least 2");
        }
        if let Some(dt) = self.sim.dt {
            if !(dt > 0.0) {
                bail!("sim.dt must be positive");
            }
        }
        let grid = &self.sim.thw_grid;
        if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
            bail!("sim.thw_grid must be non-empty, positive and strictly decreasing");
        }
        if !(self.ingest.visibility_range > 0.0) || !(self.ingest.end_margin >= 0.0) {
            bail!("ingest ranges must be positive");
        }
        Ok(())
    }

    /// Variants to run, in canonical order.
    pub fn selected_variants(&self) -> Vec<Variant> {
        Variant::ALL
            .into_iter()
            .filter(|v| self.categories.contains(&v.category()))
            .filter(|v| self.variants.is_empty() || self.variants.iter().any(|s| Variant::parse(s) == Some(*v)))
            .collect()
    }

    /// SHA-256 of the configuration that determines the artifacts; the
    /// output directory and worker count are left out.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.jobs = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn synthetic_dir(&self) -> PathBuf {
        self.out.join("synth")
    }
}

pub fn parse_list<T>(s: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse(p).with_context(|| format!("unknown {what} `{p}`")))
        .collect()
}
