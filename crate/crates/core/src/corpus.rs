//! Dataset manifest loading, asset validation and label binarization.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facial;

pub const MANIFEST_COLUMNS: [&str; 7] = [
    "participant_id",
    "exchange_id",
    "transcript",
    "audio_path",
    "au_path",
    "self_label",
    "third_label",
];

/// Lowest sample rate accepted for waveforms.
pub const MIN_SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: usize, field: &'static str },
    #[error("duplicate exchange `{exchange}` for participant `{participant}`")]
    DuplicateExchange {
        participant: String,
        exchange: String,
    },
    #[error("row {row}: label out of range 1-7")]
    LabelOutOfRange { row: usize },
    #[error("row {row}: label `{value}` is not an integer")]
    InvalidLabel { row: usize, value: String },
}

/// A raw sentiment rating on the 1-7 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RawLabel(u8);

impl RawLabel {
    pub fn new(value: u8) -> Option<Self> {
        (1..=7).contains(&value).then_some(Self(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for RawLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("label {value} out of range 1-7"))
    }
}

impl From<RawLabel> for u8 {
    fn from(label: RawLabel) -> u8 {
        label.0
    }
}

/// Binary sentiment class. `Low < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Low,
    High,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 2] = [SentimentClass::Low, SentimentClass::High];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Low => "low",
            SentimentClass::High => "high",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "low" => Some(SentimentClass::Low),
            "high" => Some(SentimentClass::High),
            _ => None,
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a 1-7 rating to a class: 1-4 low, 5-7 high.
pub fn binarize(label: RawLabel) -> SentimentClass {
    if label.get() <= 4 {
        SentimentClass::Low
    } else {
        SentimentClass::High
    }
}

/// Checked variant of [`binarize`] for unvalidated integers.
pub fn binarize_raw(label: i64) -> Result<SentimentClass, CorpusError> {
    u8::try_from(label)
        .ok()
        .and_then(RawLabel::new)
        .map(binarize)
        .ok_or(CorpusError::LabelOutOfRange { row: 0 })
}

/// Which of the two annotations is the prediction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    #[serde(rename = "self")]
    SelfReported,
    #[default]
    Third,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub participant_id: String,
    pub exchange_id: String,
    pub transcript: String,
    pub audio_path: PathBuf,
    pub au_path: PathBuf,
    /// `None` when the manifest cell is empty; such records are removed by
    /// [`clean`].
    pub self_label: Option<RawLabel>,
    pub third_label: Option<RawLabel>,
}

impl UtteranceRecord {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey {
            participant_id: self.participant_id.clone(),
            exchange_id: self.exchange_id.clone(),
        }
    }

    pub fn label(&self, kind: LabelKind) -> Option<RawLabel> {
        match kind {
            LabelKind::SelfReported => self.self_label,
            LabelKind::Third => self.third_label,
        }
    }

    pub fn class(&self, kind: LabelKind) -> Option<SentimentClass> {
        self.label(kind).map(binarize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtteranceKey {
    pub participant_id: String,
    pub exchange_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    records: Vec<UtteranceRecord>,
    participants: Vec<String>,
}

impl Corpus {
    pub fn new(records: Vec<UtteranceRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert((r.participant_id.as_str(), r.exchange_id.as_str())) {
                return Err(CorpusError::DuplicateExchange {
                    participant: r.participant_id.clone(),
                    exchange: r.exchange_id.clone(),
                });
            }
        }
        let participants = first_appearance(records.iter().map(|r| r.participant_id.as_str()));
        Ok(Self {
            records,
            participants,
        })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn participants(&self) -> &[String] {
        &self.participants
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn first_appearance<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    ids.filter(|id| seen.insert(*id))
        .map(str::to_string)
        .collect()
}

/// Reads a manifest CSV. Asset paths are resolved against the manifest's
/// directory.
pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&bytes, base)
}

pub fn parse_manifest(bytes: &[u8], base: &Path) -> Result<Corpus, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(CorpusError::MissingField {
                row: 0,
                field: name,
            })?;
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let field = |idx: usize| -> Result<&str, CorpusError> {
            row.get(columns[idx]).ok_or(CorpusError::MissingField {
                row: row_no,
                field: MANIFEST_COLUMNS[idx],
            })
        };
        let required = |idx: usize| -> Result<String, CorpusError> {
            let value = field(idx)?.trim();
            if value.is_empty() {
                return Err(CorpusError::MissingField {
                    row: row_no,
                    field: MANIFEST_COLUMNS[idx],
                });
            }
            Ok(value.to_string())
        };
        let participant_id = required(0)?;
        let exchange_id = required(1)?;
        let transcript = required(2)?;
        let audio_path = base.join(required(3)?);
        let au_path = base.join(required(4)?);
        let self_label = parse_label(field(5)?, row_no)?;
        let third_label = parse_label(field(6)?, row_no)?;
        records.push(UtteranceRecord {
            participant_id,
            exchange_id,
            transcript,
            audio_path,
            au_path,
            self_label,
            third_label,
        });
    }
    Corpus::new(records)
}

fn parse_label(cell: &str, row: usize) -> Result<Option<RawLabel>, CorpusError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let value: i64 = cell.parse().map_err(|_| CorpusError::InvalidLabel {
        row,
        value: cell.to_string(),
    })?;
    u8::try_from(value)
        .ok()
        .and_then(RawLabel::new)
        .map(Some)
        .ok_or(CorpusError::LabelOutOfRange { row })
}

/// A decoded mono waveform with samples scaled to [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("cannot open waveform: {0}")]
    Open(String),
    #[error("unsupported waveform format: {0}")]
    Unsupported(String),
    #[error("waveform has no samples")]
    Empty,
}

/// Decodes a 16-bit signed mono PCM RIFF/WAVE file.
pub fn read_wav(path: &Path) -> Result<Waveform, WavError> {
    let reader = hound::WavReader::open(path).map_err(|e| WavError::Open(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::Unsupported(format!("{} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(WavError::Unsupported(format!(
            "{}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate < MIN_SAMPLE_RATE {
        return Err(WavError::Unsupported(format!(
            "sample rate {} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| WavError::Open(e.to_string()))?;
    if samples.is_empty() {
        return Err(WavError::Empty);
    }
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes 16-bit mono PCM. Samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| WavError::Open(e.to_string()))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| WavError::Open(e.to_string()))?;
    }
    writer.finalize().map_err(|e| WavError::Open(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    MissingLabel,
    MissingAudio,
    UndecodableAudio,
    #[serde(rename = "MissingAU")]
    MissingAu,
    #[serde(rename = "UnparsableAU")]
    UnparsableAu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub participant_id: String,
    pub exchange_id: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CleanReport {
    pub dropped: Vec<DroppedRecord>,
}

impl CleanReport {
    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for d in &self.dropped {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Checks one record's labels and assets, returning why it must be dropped.
pub fn check_record(record: &UtteranceRecord) -> Option<DropReason> {
    if record.self_label.is_none() || record.third_label.is_none() {
        return Some(DropReason::MissingLabel);
    }
    if !record.audio_path.is_file() {
        return Some(DropReason::MissingAudio);
    }
    if read_wav(&record.audio_path).is_err() {
        return Some(DropReason::UndecodableAudio);
    }
    if !record.au_path.is_file() {
        return Some(DropReason::MissingAu);
    }
    if facial::parse_au_csv(&record.au_path).is_err() {
        return Some(DropReason::UnparsableAu);
    }
    None
}

/// Drops records whose labels are missing or whose assets do not decode.
pub fn clean(corpus: &Corpus) -> (Corpus, CleanReport) {
    let verdicts: Vec<Option<DropReason>> = corpus.records.par_iter().map(check_record).collect();
    let mut kept = Vec::with_capacity(corpus.len());
    let mut report = CleanReport::default();
    for (record, verdict) in corpus.records.iter().zip(verdicts) {
        match verdict {
            None => kept.push(record.clone()),
            Some(reason) => report.dropped.push(DroppedRecord {
                participant_id: record.participant_id.clone(),
                exchange_id: record.exchange_id.clone(),
                reason,
            }),
        }
    }
    let participants = first_appearance(kept.iter().map(|r| r.participant_id.as_str()));
    (
        Corpus {
            records: kept,
            participants,
        },
        report,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "participant_id,exchange_id,transcript,audio_path,au_path,self_label,third_label\n";

    fn parse(body: &str) -> Result<Corpus, CorpusError> {
        parse_manifest(format!("{HEADER}{body}").as_bytes(), Path::new("/data"))
    }

    #[test]
    fn empty_manifest() {
        let c = parse("").unwrap();
        assert!(c.is_empty());
        assert!(c.participants().is_empty());
    }

    #[test]
    fn participants_deduplicated_in_order() {
        let c = parse(
            "p1,e1,hello,a.wav,a.csv,3,5\n\
             p1,e2,again,b.wav,b.csv,4,4\n\
             p2,e1,hi,c.wav,c.csv,6,2\n",
        )
        .unwrap();
        assert_eq!(c.participants(), ["p1", "p2"]);
        assert_eq!(c.records()[0].audio_path, Path::new("/data/a.wav"));
        assert_eq!(c.records()[2].self_label, RawLabel::new(6));
    }

    #[test]
    fn label_out_of_range() {
        let err = parse("p1,e1,hello,a.wav,a.csv,8,5\n").unwrap_err();
        assert!(matches!(err, CorpusError::LabelOutOfRange { row: 1 }));
        let err = parse("p1,e1,hello,a.wav,a.csv,0,5\n").unwrap_err();
        assert!(matches!(err, CorpusError::LabelOutOfRange { row: 1 }));
    }

    #[test]
    fn fractional_label_rejected() {
        let err = parse("p1,e1,hello,a.wav,a.csv,4.5,5\n").unwrap_err();
        assert!(matches!(err, CorpusError::InvalidLabel { row: 1, .. }));
    }

    #[test]
    fn short_row_is_missing_field() {
        let err = parse("p1,e1,hello,a.wav\n").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::MissingField {
                row: 1,
                field: "au_path"
            }
        ));
    }

    #[test]
    fn blank_transcript_is_missing_field() {
        let err = parse("p1,e1,   ,a.wav,a.csv,1,1\n").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::MissingField {
                field: "transcript",
                ..
            }
        ));
    }

    #[test]
    fn missing_header_column() {
        let err = parse_manifest(b"participant_id,exchange_id\n", Path::new("")).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::MissingField {
                row: 0,
                field: "transcript"
            }
        ));
    }

    #[test]
    fn duplicate_exchange() {
        let err = parse(
            "p1,e1,hello,a.wav,a.csv,3,5\n\
             p1,e1,again,b.wav,b.csv,4,4\n",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateExchange { .. }));
    }

    #[test]
    fn empty_label_loads_as_missing() {
        let c = parse("p1,e1,hello,a.wav,a.csv,,5\n").unwrap();
        assert_eq!(c.records()[0].self_label, None);
    }

    #[test]
    fn binarize_endpoints_and_boundary() {
        let b = |v| binarize(RawLabel::new(v).unwrap());
        assert_eq!(b(1), SentimentClass::Low);
        assert_eq!(b(4), SentimentClass::Low);
        assert_eq!(b(5), SentimentClass::High);
        assert_eq!(b(7), SentimentClass::High);
    }

    #[test]
    fn binarize_partitions_scale() {
        let low: Vec<u8> = (1..=7)
            .filter(|&v| binarize(RawLabel::new(v).unwrap()) == SentimentClass::Low)
            .collect();
        let high: Vec<u8> = (1..=7)
            .filter(|&v| binarize(RawLabel::new(v).unwrap()) == SentimentClass::High)
            .collect();
        assert_eq!(low, [1, 2, 3, 4]);
        assert_eq!(high, [5, 6, 7]);
        assert!(binarize_raw(8).is_err());
        assert!(binarize_raw(0).is_err());
        assert!(binarize_raw(-3).is_err());
    }

    #[test]
    fn class_order() {
        assert!(SentimentClass::Low < SentimentClass::High);
    }
}
