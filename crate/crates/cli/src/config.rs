use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use petri_dish::baseline::BaselineHyper;
use petri_dish::experiment::SlopeStudyConfig;
use petri_dish::ground_truth::{CharLmConfig, MnistConfig};
use petri_dish::petri::PetriHyper;
use petri_dish::search::{GaConfig, SearchConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything a run can be configured with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub profile: String,
    /// MNIST directory; falls back to the environment variable and `data/mnist`.
    pub mnist_dir: Option<PathBuf>,
    pub mnist: MnistConfig,
    pub char_lm: CharLmConfig,
    /// Slope study, including the Petri dish and baseline settings for slopes.
    pub study: SlopeStudyConfig,
    /// Cell search, including the Petri dish settings for cells.
    pub search: SearchConfig,
}

pub const PROFILES: [&str; 3] = ["desk-scale", "table2", "table4"];

fn desk_slope_petri() -> PetriHyper {
    PetriHyper::table2()
}

fn desk_cell_petri() -> PetriHyper {
    PetriHyper {
        inner_steps: 20,
        inner_lr: 0.05,
        outer_steps: 30,
        outer_lr: 0.5,
        motif_batch: 16,
        samples: 10,
        time_steps: 5,
        init_scale: 0.5,
        ..PetriHyper::table4()
    }
}

impl Config {
    pub fn profile(name: &str) -> Result<Self> {
        let desk = Config {
            profile: name.to_string(),
            mnist_dir: None,
            mnist: MnistConfig::desk_scale(),
            char_lm: CharLmConfig::desk_scale(),
            study: SlopeStudyConfig {
                petri: desk_slope_petri(),
                baseline: BaselineHyper::table3(),
                ..SlopeStudyConfig::default()
            },
            search: SearchConfig {
                warm_start: 8,
                m: 30,
                k: 6,
                iterations: 3,
                budget: 26,
                eval_seed: 0,
                petri: desk_cell_petri(),
                ga: GaConfig::default(),
                petri_warm_start: false,
            },
        };
        Ok(match name {
            "desk-scale" => desk,
            "table2" => Config {
                mnist: MnistConfig::table1(),
                study: SlopeStudyConfig {
                    petri: PetriHyper::table2(),
                    ..desk.study
                },
                ..desk
            },
            "table4" => Config {
                search: SearchConfig {
                    warm_start: 40,
                    m: 100,
                    k: 20,
                    iterations: 10,
                    budget: 240,
                    petri: PetriHyper::table4(),
                    ..desk.search
                },
                ..desk
            },
            _ => bail!("unknown profile `{name}` (expected one of {PROFILES:?})"),
        })
    }

    /// Profile defaults, then the config file, then `key.path=value` overrides.
    pub fn resolve(profile: &str, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(Config::profile(profile)?)?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut doc, patch, "")?;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        let cfg: Config = serde_json::from_value(doc).context("invalid configuration")?;
        cfg.mnist.validate()?;
        cfg.char_lm.validate()?;
        cfg.study.petri.validate()?;
        cfg.search.validate()?;
        Ok(cfg)
    }
}

/// Recursively overlays `patch`; keys absent from `base` are rejected.
fn merge(base: &mut Value, patch: Value, at: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                let slot = b.get_mut(&k).ok_or_else(|| anyhow!("unknown config key `{here}`"))?;
                merge(slot, v, &here)?;
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| anyhow!("unknown config key `{key}`"))?;
    }
    *cur = value;
    Ok(())
}
