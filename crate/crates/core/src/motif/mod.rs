//! Searchable motifs: sigmoid slopes and 12-node recurrent cells.

mod encoding;
mod ga;
mod network;

pub use encoding::{CellEncoding, CellNode, Gene, CELL_NODES};
pub use ga::{crossover, crossover_at, mutate, random_encoding};
pub use network::{instantiate, MotifNetwork};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Motif {
    ActivationSlope { slope: f64 },
    Cell { encoding: CellEncoding },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotifVariant {
    ActivationSlope,
    Cell,
}

impl Motif {
    pub fn slope(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("slope must be positive, got {c}")));
        }
        Ok(Motif::ActivationSlope { slope: c })
    }

    pub fn cell(encoding: CellEncoding) -> Self {
        Motif::Cell { encoding }
    }

    pub fn variant(&self) -> MotifVariant {
        match self {
            Motif::ActivationSlope { .. } => MotifVariant::ActivationSlope,
            Motif::Cell { .. } => MotifVariant::Cell,
        }
    }

    /// Canonical string; equal motifs have equal keys and the key order is
    /// the tie-break order used by search.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("motifs always serialize")
    }

    pub fn as_slope(&self) -> Option<f64> {
        match self {
            Motif::ActivationSlope { slope } => Some(*slope),
            Motif::Cell { .. } => None,
        }
    }

    pub fn as_cell(&self) -> Option<&CellEncoding> {
        match self {
            Motif::Cell { encoding } => Some(encoding),
            Motif::ActivationSlope { .. } => None,
        }
    }
}

/// Common variant of a nonempty motif list.
pub fn common_variant(motifs: &[Motif]) -> Result<MotifVariant> {
    let first = motifs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty motif list".into()))?
        .variant();
    if motifs.iter().any(|m| m.variant() != first) {
        return Err(Error::MixedVariants);
    }
    Ok(first)
}
