//! Discrete facial action units: CSV parsing, the majority-of-frames rule,
//! and action phrases.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::locale::{LocaleError, LocaleTable};

/// The 18 discrete action units, in ascending order.
pub const AU_IDS: [u8; 18] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 28, 45];

/// Locale key of the phrase used when no unit appeared.
pub const NO_AU_KEY: &str = "au.none";

#[derive(Debug, Error)]
pub enum FacialError {
    #[error("missing column for AU{0:02}")]
    MissingColumn(u8),
    #[error("row {row}: AU{au:02} value `{value}` is not 0 or 1")]
    NonBinaryValue { row: usize, au: u8, value: String },
    #[error("AU file has no frames")]
    EmptyFile,
    #[error("cannot read AU file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed AU file: {0}")]
    Csv(#[from] csv::Error),
    #[error("AU{0} is not one of the supported units")]
    UnknownAu(u8),
}

pub fn column_name(au: u8) -> String {
    format!("AU{au:02}_c")
}

fn position(au: u8) -> Option<usize> {
    AU_IDS.iter().position(|&id| id == au)
}

/// Per-frame presence of each action unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuFrameMatrix {
    columns: [Vec<bool>; 18],
    n_frames: usize,
}

impl AuFrameMatrix {
    /// Builds a matrix from per-frame rows ordered like [`AU_IDS`].
    pub fn from_frames(frames: &[[bool; 18]]) -> Result<Self, FacialError> {
        if frames.is_empty() {
            return Err(FacialError::EmptyFile);
        }
        let columns = std::array::from_fn(|i| frames.iter().map(|f| f[i]).collect());
        Ok(Self {
            columns,
            n_frames: frames.len(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn presence(&self, au: u8) -> Option<&[bool]> {
        position(au).map(|i| self.columns[i].as_slice())
    }

    pub fn count(&self, au: u8) -> Option<usize> {
        self.presence(au).map(|c| c.iter().filter(|&&p| p).count())
    }
}

pub fn parse_au_csv(path: &Path) -> Result<AuFrameMatrix, FacialError> {
    parse_au_reader(File::open(path)?)
}

/// Parses the toolkit's CSV export. Header names may carry leading spaces;
/// columns other than the 18 `AUxx_c` ones are ignored.
pub fn parse_au_reader<R: Read>(reader: R) -> Result<AuFrameMatrix, FacialError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(FacialError::EmptyFile);
    }
    let mut index = [0usize; 18];
    for (slot, &au) in index.iter_mut().zip(&AU_IDS) {
        let name = column_name(au);
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(FacialError::MissingColumn(au))?;
    }

    let mut frames = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row?;
        let mut frame = [false; 18];
        for (k, (&col, &au)) in index.iter().zip(&AU_IDS).enumerate() {
            let cell = row.get(col).unwrap_or("");
            frame[k] = match cell.parse::<f64>() {
                Ok(0.0) => false,
                Ok(1.0) => true,
                _ => {
                    return Err(FacialError::NonBinaryValue {
                        row: i + 1,
                        au,
                        value: cell.to_string(),
                    })
                }
            };
        }
        frames.push(frame);
    }
    AuFrameMatrix::from_frames(&frames)
}

/// Action units present in strictly more than half of the frames.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppearedSet {
    ids: BTreeSet<u8>,
}

impl AppearedSet {
    pub fn new(ids: impl IntoIterator<Item = u8>) -> Result<Self, FacialError> {
        let ids: BTreeSet<u8> = ids.into_iter().collect();
        if let Some(&bad) = ids.iter().find(|&&id| position(id).is_none()) {
            return Err(FacialError::UnknownAu(bad));
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.ids.iter().copied()
    }

    pub fn contains(&self, au: u8) -> bool {
        self.ids.contains(&au)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn appeared(matrix: &AuFrameMatrix) -> AppearedSet {
    let ids = AU_IDS
        .iter()
        .zip(&matrix.columns)
        .filter(|(_, col)| 2 * col.iter().filter(|&&p| p).count() > matrix.n_frames)
        .map(|(&au, _)| au)
        .collect();
    AppearedSet { ids }
}

/// Locale keys of the phrases for `set`: one per unit in ascending id order,
/// or the single no-expression key.
pub fn phrase_keys(set: &AppearedSet) -> Vec<String> {
    if set.is_empty() {
        vec![NO_AU_KEY.to_string()]
    } else {
        set.ids().map(|au| format!("au.{au}")).collect()
    }
}

pub fn describe_facial(set: &AppearedSet, locale: &LocaleTable) -> Result<Vec<String>, LocaleError> {
    phrase_keys(set)
        .iter()
        .map(|k| locale.get(k).map(str::to_string))
        .collect()
}
