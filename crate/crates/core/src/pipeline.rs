//! Per-utterance description: waveform and AU frames in, text out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{three_period_averages, AudioError, AudioParams, FrameTrack, PeriodAverages};
use crate::compose::{AudioDescription, ModalityDescriptions, ModalitySet, Phrase};
use crate::corpus::{read_wav, RawLabel, UtteranceRecord, WavError};
use crate::facial::{appeared, describe_facial, parse_au_csv, phrase_keys, AppearedSet, AuFrameMatrix, FacialError};
use crate::locale::{LocaleError, LocaleTable};
use crate::pattern::{
    classify_periods, describe, ChangePattern, Feature, DEFAULT_EPS_REL, ENERGY_FLOOR_ABS,
    PITCH_FLOOR_ABS,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("audio: {0}")]
    Wav(#[from] WavError),
    #[error("audio features: {0}")]
    Audio(#[from] AudioError),
    #[error("facial: {0}")]
    Facial(#[from] FacialError),
    #[error(transparent)]
    Locale(#[from] LocaleError),
    #[error("record {0}/{1} has no label")]
    MissingLabel(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    #[serde(flatten)]
    pub audio: AudioParams,
    pub eps_rel: f64,
    pub pitch_floor_abs: f64,
    pub energy_floor_abs: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            audio: AudioParams::default(),
            eps_rel: DEFAULT_EPS_REL,
            pitch_floor_abs: PITCH_FLOOR_ABS,
            energy_floor_abs: ENERGY_FLOOR_ABS,
        }
    }
}

/// Period averages of one feature, its pattern and description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub averages: PeriodAverages,
    pub pattern: ChangePattern,
    /// Set when a period had no usable frames and the pattern defaulted to
    /// flat.
    pub fallback: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSummary {
    pub pitch: TrackSummary,
    pub energy: TrackSummary,
}

pub fn summarize_track(
    series: &[Option<f64>],
    feature: Feature,
    cfg: &AnalysisConfig,
    locale: &LocaleTable,
) -> Result<TrackSummary, PipelineError> {
    let averages = three_period_averages(series)?;
    let floor_abs = match feature {
        Feature::Pitch => cfg.pitch_floor_abs,
        Feature::Energy => cfg.energy_floor_abs,
    };
    let classified = classify_periods(&averages, cfg.eps_rel, floor_abs);
    Ok(TrackSummary {
        averages,
        pattern: classified.pattern,
        fallback: classified.fallback,
        text: describe(classified.pattern, feature, locale)?,
    })
}

pub fn describe_audio(
    samples: &[f64],
    sample_rate: u32,
    cfg: &AnalysisConfig,
    locale: &LocaleTable,
) -> Result<AudioSummary, PipelineError> {
    let track = FrameTrack::analyze(samples, sample_rate, &cfg.audio)?;
    let energy: Vec<Option<f64>> = track.energy.iter().copied().map(Some).collect();
    Ok(AudioSummary {
        pitch: summarize_track(&track.pitch_hz, Feature::Pitch, cfg, locale)?,
        energy: summarize_track(&energy, Feature::Energy, cfg, locale)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacialSummary {
    pub appeared: AppearedSet,
    pub phrases: Vec<Phrase>,
}

pub fn describe_au(matrix: &AuFrameMatrix, locale: &LocaleTable) -> Result<FacialSummary, PipelineError> {
    let set = appeared(matrix);
    let texts = describe_facial(&set, locale)?;
    let phrases = phrase_keys(&set)
        .into_iter()
        .zip(texts)
        .map(|(key, text)| Phrase { key, text })
        .collect();
    Ok(FacialSummary {
        appeared: set,
        phrases,
    })
}

/// Everything derived from one utterance, kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceDescription {
    pub participant_id: String,
    pub exchange_id: String,
    pub self_label: RawLabel,
    pub third_label: RawLabel,
    pub audio: AudioSummary,
    pub facial: FacialSummary,
    pub lingual: String,
}

impl UtteranceDescription {
    pub fn descriptions(&self) -> ModalityDescriptions {
        ModalityDescriptions {
            audio: Some(AudioDescription {
                pitch: self.audio.pitch.text.clone(),
                energy: self.audio.energy.text.clone(),
            }),
            facial: Some(self.facial.phrases.clone()),
            lingual: Some(self.lingual.clone()),
        }
    }

    pub fn restricted(&self, subset: ModalitySet) -> ModalityDescriptions {
        self.descriptions().restrict(subset)
    }
}

pub fn describe_record(
    record: &UtteranceRecord,
    cfg: &AnalysisConfig,
    locale: &LocaleTable,
) -> Result<UtteranceDescription, PipelineError> {
    let missing = || PipelineError::MissingLabel(record.participant_id.clone(), record.exchange_id.clone());
    let self_label = record.self_label.ok_or_else(missing)?;
    let third_label = record.third_label.ok_or_else(missing)?;
    let wav = read_wav(&record.audio_path)?;
    let audio = describe_audio(&wav.samples, wav.sample_rate, cfg, locale)?;
    let facial = describe_au(&parse_au_csv(&record.au_path)?, locale)?;
    Ok(UtteranceDescription {
        participant_id: record.participant_id.clone(),
        exchange_id: record.exchange_id.clone(),
        self_label,
        third_label,
        audio,
        facial,
        lingual: record.transcript.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_audio_falls_back_for_pitch() {
        let en = LocaleTable::english();
        let s = describe_audio(&vec![0.0; 16000], 16000, &AnalysisConfig::default(), &en).unwrap();
        assert!(s.pitch.fallback);
        assert_eq!(s.pitch.pattern, ChangePattern::Flat);
        assert_eq!(s.pitch.averages.n_used, [0, 0, 0]);
        assert!(!s.energy.fallback);
        assert_eq!(s.energy.text, "energy does not change");
    }

    #[test]
    fn facial_summary_keys_follow_ids() {
        let en = LocaleTable::english();
        let mut frames = vec![[false; 18]; 4];
        for f in frames.iter_mut().take(3) {
            f[8] = true; // AU12
            f[4] = true; // AU06
        }
        let m = AuFrameMatrix::from_frames(&frames).unwrap();
        let s = describe_au(&m, &en).unwrap();
        let keys: Vec<&str> = s.phrases.iter().map(|p| p.key.as_str()).collect();
        assert_eq!(keys, ["au.6", "au.12"]);
        assert_eq!(s.phrases[1].text, "pull lip corner");
    }
}
