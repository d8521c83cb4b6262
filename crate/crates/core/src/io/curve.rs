use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled line of `(x, y)` points with strictly increasing `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptySeries(self.label.clone()));
        }
        if self.points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::UnorderedSeries(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFormat {
    Csv,
    Json,
}

/// 17 significant digits: enough to read back the identical `f64`.
fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes all series to one file (`series,x,y` rows for CSV).
pub fn emit_curve(path: &Path, series: &[Series], format: CurveFormat) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptySeries(String::new()));
    }
    for s in series {
        s.validate()?;
    }
    let text = match format {
        CurveFormat::Csv => {
            let mut out = String::from("series,x,y\n");
            for s in series {
                for &(x, y) in &s.points {
                    writeln!(out, "{},{},{}", s.label, exact(x), exact(y)).unwrap();
                }
            }
            out
        }
        CurveFormat::Json => serde_json::to_string_pretty(series)? + "\n",
    };
    super::write_atomic(path, text.as_bytes())
}

/// Parses a CSV written by [`emit_curve`].
pub fn read_curve_csv(path: &Path) -> Result<Vec<Series>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<Series> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::InvalidArgument(format!("{}:{}: malformed curve row", path.display(), i + 1));
        let mut parts = line.rsplitn(3, ',');
        let y: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let x: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let label = parts.next().ok_or_else(bad)?;
        match out.last_mut() {
            Some(s) if s.label == label => s.points.push((x, y)),
            _ => out.push(Series::new(label, vec![(x, y)])),
        }
    }
    Ok(out)
}
