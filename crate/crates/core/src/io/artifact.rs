use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_truth::GroundTruthRecord;

use super::curve::{emit_curve, read_curve_csv, CurveFormat, Series};

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// `runs/<run-id>/{config.json, ledger.jsonl, petri_model.json, curves/*.csv}`.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let curves = root.join("curves");
        std::fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
        Ok(RunDir { root })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.jsonl")
    }

    pub fn petri_model(&self) -> PathBuf {
        self.root.join("petri_model.json")
    }

    pub fn curve(&self, name: &str) -> PathBuf {
        self.root.join("curves").join(format!("{name}.csv"))
    }
}

/// Everything a run leaves behind, in memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub records: Vec<GroundTruthRecord>,
    /// Path of the persisted Petri dish, relative to the run directory.
    pub petri_model: Option<String>,
    pub curves: Vec<(String, Vec<Series>)>,
}

impl RunArtifact {
    pub fn save(&self, dir: &RunDir) -> Result<()> {
        let config = serde_json::json!({
            "config": self.config,
            "seeds": self.seeds,
            "petri_model": self.petri_model,
            "curves": self.curves.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        });
        write_atomic(&dir.config(), (serde_json::to_string_pretty(&config)? + "\n").as_bytes())?;
        write_jsonl(&dir.ledger(), &self.records)?;
        for (name, series) in &self.curves {
            emit_curve(&dir.curve(name), series, CurveFormat::Csv)?;
        }
        Ok(())
    }

    pub fn load(dir: &RunDir) -> Result<Self> {
        let text = std::fs::read_to_string(dir.config()).map_err(|e| Error::io(dir.config(), e))?;
        #[derive(Deserialize)]
        struct Head {
            config: serde_json::Value,
            seeds: Vec<u64>,
            petri_model: Option<String>,
            curves: Vec<String>,
        }
        let head: Head = serde_json::from_str(&text)?;
        let records = read_jsonl(&dir.ledger())?;
        let curves = head
            .curves
            .into_iter()
            .map(|n| read_curve_csv(&dir.curve(&n)).map(|s| (n, s)))
            .collect::<Result<_>>()?;
        Ok(RunArtifact {
            config: head.config,
            seeds: head.seeds,
            records,
            petri_model: head.petri_model,
            curves,
        })
    }
}
