//! Frame-level pitch and energy tracks and their three-period summaries.

mod energy;
mod periods;
mod pitch;

pub use energy::compute_energy;
pub use periods::{period_bounds, three_period_averages, PeriodAverages};
pub use pitch::{compute_pitch, VOICING_THRESHOLD};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("waveform is empty")]
    EmptyWaveform,
    #[error("series is empty")]
    EmptySeries,
    #[error("bad pitch range: floor {floor_hz} Hz, ceiling {ceil_hz} Hz, frame {frame_len_s} s")]
    BadPitchRange {
        floor_hz: f64,
        ceil_hz: f64,
        frame_len_s: f64,
    },
    #[error("bad framing: frame {frame_len_s} s, hop {hop_s} s at {sample_rate} Hz")]
    BadFraming {
        frame_len_s: f64,
        hop_s: f64,
        sample_rate: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioParams {
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub pitch_floor_hz: f64,
    pub pitch_ceil_hz: f64,
}

impl Default for AudioParams {
    fn default() -> Self {
        Self {
            frame_len_s: 0.052,
            hop_s: 0.01,
            pitch_floor_hz: 50.0,
            pitch_ceil_hz: 400.0,
        }
    }
}

/// Per-frame pitch (absent when unvoiced) and RMS energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrack {
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub pitch_hz: Vec<Option<f64>>,
    pub energy: Vec<f64>,
}

impl FrameTrack {
    pub fn analyze(samples: &[f64], sample_rate: u32, params: &AudioParams) -> Result<Self, AudioError> {
        let energy = compute_energy(samples, sample_rate, params.frame_len_s, params.hop_s)?;
        let pitch_hz = compute_pitch(
            samples,
            sample_rate,
            params.frame_len_s,
            params.hop_s,
            params.pitch_floor_hz,
            params.pitch_ceil_hz,
        )?;
        debug_assert_eq!(energy.len(), pitch_hz.len());
        Ok(Self {
            frame_len_s: params.frame_len_s,
            hop_s: params.hop_s,
            pitch_hz,
            energy,
        })
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }
}

/// Frame and hop lengths in samples, with the number of frames needed to
/// cover `n` samples. The last frame may run past the end of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Framing {
    pub frame: usize,
    pub hop: usize,
    pub count: usize,
}

impl Framing {
    pub fn new(n: usize, sample_rate: u32, frame_len_s: f64, hop_s: f64) -> Result<Self, AudioError> {
        let bad = || AudioError::BadFraming {
            frame_len_s,
            hop_s,
            sample_rate,
        };
        if !(frame_len_s > 0.0 && hop_s > 0.0 && hop_s <= frame_len_s) {
            return Err(bad());
        }
        let frame = (frame_len_s * f64::from(sample_rate)).round() as usize;
        let hop = (hop_s * f64::from(sample_rate)).round() as usize;
        if frame == 0 || hop == 0 {
            return Err(bad());
        }
        let count = 1 + n.saturating_sub(frame).div_ceil(hop);
        Ok(Self { frame, hop, count })
    }

    /// Samples of frame `i`, zero-padded to the frame length.
    pub fn window<'a>(&self, samples: &'a [f64], i: usize, buf: &'a mut Vec<f64>) -> &'a [f64] {
        let start = i * self.hop;
        let end = start + self.frame;
        if end <= samples.len() {
            &samples[start..end]
        } else {
            buf.clear();
            buf.extend_from_slice(&samples[start.min(samples.len())..]);
            buf.resize(self.frame, 0.0);
            buf
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_counts() {
        let f = Framing::new(16000, 16000, 0.052, 0.01).unwrap();
        assert_eq!((f.frame, f.hop), (832, 160));
        // (16000 - 832) / 160 = 94.8, rounded up, plus the first frame.
        assert_eq!(f.count, 96);
        assert_eq!(Framing::new(10, 16000, 0.052, 0.01).unwrap().count, 1);
        assert_eq!(Framing::new(832, 16000, 0.052, 0.01).unwrap().count, 1);
        assert_eq!(Framing::new(833, 16000, 0.052, 0.01).unwrap().count, 2);
    }

    #[test]
    fn framing_rejects_hop_longer_than_frame() {
        assert!(Framing::new(100, 16000, 0.01, 0.02).is_err());
        assert!(Framing::new(100, 16000, 0.0, 0.0).is_err());
    }

    #[test]
    fn track_lengths_match() {
        let x: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect();
        let t = FrameTrack::analyze(&x, 16000, &AudioParams::default()).unwrap();
        assert_eq!(t.pitch_hz.len(), t.energy.len());
        assert!(!t.is_empty());
    }
}
