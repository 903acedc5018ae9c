//! Stage artifact files and the configuration digest they carry.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const VIEWS: &str = "views.json";
pub const CATALOG: &str = "catalog.jsonl";
pub const PARAMETERS: &str = "parameters.csv";
pub const PARAM_ERRORS: &str = "param_errors.csv";
pub const OUTCOMES: &str = "outcomes.csv";
pub const SIM_ERRORS: &str = "sim_errors.csv";
pub const REPORT: &str = "report.json";
pub const FAIL_TABLE: &str = "fail_table.csv";
pub const LABELS: &str = "labels.json";

pub fn basis_file(category: &str) -> String {
    format!("basis_{category}.json")
}

pub fn radar_file(category: &str, ext: &str) -> String {
    format!("radar_{category}.{ext}")
}

/// An input artifact that an earlier stage has not produced.
#[derive(Debug)]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub producer: &'static str,
}

impl std::fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "missing artifact {}; run `paramcheck {}` first",
            self.path.display(),
            self.producer
        )
    }
}

impl std::error::Error for MissingArtifact {}

pub fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(MissingArtifact { path, producer }.into())
    }
}

/// JSON document with the digest of the configuration that produced it.
#[derive(Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_digest: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, digest: &str, body: T) -> Result<()> {
    let mut w = create(path)?;
    let doc = Stamped {
        config_digest: digest.to_string(),
        body,
    };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("malformed {}", path.display()))
}

/// CSV file whose first line records the digest as a comment.
pub fn create_csv(path: &Path, digest: &str) -> Result<BufWriter<File>> {
    let mut w = create(path)?;
    writeln!(w, "# config_digest={digest}")?;
    Ok(w)
}

#[derive(Serialize, Deserialize)]
struct Header {
    config_digest: String,
}

/// One JSON value per line after a digest header line.
pub fn write_jsonl<T: Serialize>(path: &Path, digest: &str, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(
        &mut w,
        &Header {
            config_digest: digest.to_string(),
        },
    )?;
    writeln!(w)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(String, Vec<T>)> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut lines = BufReader::new(f).lines();
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?).with_context(|| format!("malformed header in {}", path.display()))?,
        None => anyhow::bail!("{} is empty", path.display()),
    };
    let mut items = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).with_context(|| format!("malformed line {} of {}", k + 2, path.display()))?,
        );
    }
    Ok((header.config_digest, items))
}

/// Digest recorded in the first line of a CSV artifact.
pub fn csv_digest(path: &Path) -> Result<Option<String>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    Ok(first.trim_end().strip_prefix("# config_digest=").map(str::to_string))
}
