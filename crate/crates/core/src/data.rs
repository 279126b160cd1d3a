//! Observed samples: one censored record per subject, plus CSV ingestion.
//!
//! A record carries the follow-up time `y = min(T, C)`, the event indicator
//! `delta = 1{T <= C}`, the possibly censored treatment time
//! `ztilde = min(Z, y)`, its indicator `dtilde = 1{Z <= y}` and the scalar
//! instrument `w`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["y", "delta", "ztilde", "dtilde", "w"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub delta: bool,
    pub ztilde: f64,
    pub dtilde: bool,
    pub w: f64,
}

impl Observation {
    pub fn new(y: f64, delta: bool, ztilde: f64, dtilde: bool, w: f64) -> Self {
        Self {
            y,
            delta,
            ztilde,
            dtilde,
            w,
        }
    }

    fn violations(&self, index: usize, out: &mut Vec<Violation>) {
        let mut push = |kind| out.push(Violation { index, kind });
        if !(self.y.is_finite() && self.ztilde.is_finite() && self.w.is_finite()) {
            push(ViolationKind::NonFinite);
            return;
        }
        if self.y < 0.0 {
            push(ViolationKind::NegativeY);
        }
        if self.ztilde < 0.0 {
            push(ViolationKind::NegativeZtilde);
        }
        if self.ztilde > self.y {
            push(ViolationKind::ZtildeExceedsY);
        }
        if !self.dtilde && self.ztilde != self.y {
            push(ViolationKind::UntreatedZtildeNotY);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonFinite,
    NegativeY,
    NegativeZtilde,
    ZtildeExceedsY,
    /// `dtilde = 0` means treatment was censored at `y`, so `ztilde` must equal `y`.
    UntreatedZtildeNotY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::NonFinite => "non-finite value",
            ViolationKind::NegativeY => "y < 0",
            ViolationKind::NegativeZtilde => "ztilde < 0",
            ViolationKind::ZtildeExceedsY => "ztilde > y",
            ViolationKind::UntreatedZtildeNotY => "dtilde = 0 but ztilde != y",
        };
        write!(f, "observation {}: {}", self.index, what)
    }
}

/// Every invariant violation in `observations`, in row order. Empty iff valid.
pub fn validate(observations: &[Observation]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, obs) in observations.iter().enumerate() {
        obs.violations(i, &mut out);
    }
    out
}

/// A validated, nonempty, immutable sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    sorted_w_index: Vec<usize>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidData("empty dataset".into()));
        }
        if let Some(v) = validate(&observations).first() {
            return Err(Error::InvalidData(v.to_string()));
        }
        let mut sorted_w_index: Vec<usize> = (0..observations.len()).collect();
        // stable sort keeps original index order within tied w
        sorted_w_index.sort_by(|&a, &b| observations[a].w.total_cmp(&observations[b].w));
        Ok(Self {
            observations,
            sorted_w_index,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Row indices ordered by ascending `w`, ties broken by row index.
    pub fn sorted_w_index(&self) -> &[usize] {
        &self.sorted_w_index
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.observations)
    }

    /// The dataset made of rows `indices` (with repetition), in that order.
    pub fn resample(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices
            .iter()
            .map(|&i| {
                self.observations.get(i).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("resample index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn treated_fraction(&self) -> f64 {
        self.observations.iter().filter(|o| o.dtilde).count() as f64 / self.len() as f64
    }

    pub fn uncensored_fraction(&self) -> f64 {
        self.observations.iter().filter(|o| o.delta).count() as f64 / self.len() as f64
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header `{}`, found `{}`",
                    CSV_HEADER.join(","),
                    names.join(",")
                ),
            });
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != CSV_HEADER.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
                });
            }
            let mut vals = [0.0; 5];
            for (k, field) in record.iter().enumerate() {
                vals[k] = field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column `{}`: `{}` is not a number", CSV_HEADER[k], field),
                })?;
            }
            let bit = |k: usize| -> Result<bool> {
                match vals[k] {
                    v if v == 0.0 => Ok(false),
                    v if v == 1.0 => Ok(true),
                    v => Err(Error::Parse {
                        line,
                        message: format!("column `{}` must be 0 or 1, found {v}", CSV_HEADER[k]),
                    }),
                }
            };
            let obs = Observation::new(vals[0], bit(1)?, vals[2], bit(3)?, vals[4]);
            let mut v = Vec::new();
            obs.violations(rows.len(), &mut v);
            if let Some(first) = v.first() {
                return Err(Error::Parse {
                    line,
                    message: first.to_string(),
                });
            }
            rows.push(obs);
        }
        Self::new(rows)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", CSV_HEADER.join(","))?;
        for o in &self.observations {
            writeln!(
                out,
                "{},{},{},{},{}",
                sig17(o.y),
                u8::from(o.delta),
                sig17(o.ztilde),
                u8::from(o.dtilde),
                sig17(o.w)
            )?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits; exact under re-parsing.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}
