//! Normalized cross-correlation pitch estimator.
//!
//! For each frame `x` of `L` samples and each lag `τ` in the search range,
//! the correlation is taken between `x[0..L-τ]` and `x[τ..L]`:
//!
//! ```text
//! r(τ) = Σ x[n]·x[n+τ] / sqrt(Σ x[n]² · Σ x[n+τ]²)
//! ```
//!
//! Both energy terms cover exactly the overlapping samples, so `r` lies in
//! [-1, 1] and is unchanged by scaling the signal. The best peak is refined
//! with a parabola through its neighbours; a frame is voiced when the
//! chosen peak reaches [`VOICING_THRESHOLD`].

use super::{AudioError, Framing};

/// Minimum correlation peak for a frame to count as voiced.
pub const VOICING_THRESHOLD: f64 = 0.30;

/// A local maximum within this fraction of the strongest one is preferred
/// when it sits at a shorter lag. Periodic signals correlate almost as well
/// at twice the period, and the shorter lag is the fundamental.
const OCTAVE_PREFERENCE: f64 = 0.9;

pub fn compute_pitch(
    samples: &[f64],
    sample_rate: u32,
    frame_len_s: f64,
    hop_s: f64,
    floor_hz: f64,
    ceil_hz: f64,
) -> Result<Vec<Option<f64>>, AudioError> {
    if samples.is_empty() {
        return Err(AudioError::EmptyWaveform);
    }
    let bad_range = || AudioError::BadPitchRange {
        floor_hz,
        ceil_hz,
        frame_len_s,
    };
    // Slack for frame lengths like 0.04 s that round-trip inexactly.
    if !(floor_hz > 0.0 && floor_hz < ceil_hz && frame_len_s * floor_hz >= 2.0 - 1e-9) {
        return Err(bad_range());
    }
    let framing = Framing::new(samples.len(), sample_rate, frame_len_s, hop_s)?;
    let sr = f64::from(sample_rate);
    let min_lag = ((sr / ceil_hz).floor() as usize).max(2);
    let max_lag = (sr / floor_hz).ceil() as usize;
    if max_lag + 1 >= framing.frame || min_lag >= max_lag {
        return Err(bad_range());
    }

    let estimator = Estimator {
        sr,
        min_lag,
        max_lag,
        floor_hz,
        ceil_hz,
    };
    let mut buf = Vec::with_capacity(framing.frame);
    let mut scratch = Scratch::default();
    Ok((0..framing.count)
        .map(|i| estimator.frame(framing.window(samples, i, &mut buf), &mut scratch))
        .collect())
}

#[derive(Default)]
struct Scratch {
    cumulative: Vec<f64>,
    ncf: Vec<f64>,
}

struct Estimator {
    sr: f64,
    min_lag: usize,
    max_lag: usize,
    floor_hz: f64,
    ceil_hz: f64,
}

impl Estimator {
    fn frame(&self, x: &[f64], scratch: &mut Scratch) -> Option<f64> {
        let len = x.len();
        let cum = &mut scratch.cumulative;
        cum.clear();
        cum.push(0.0);
        let mut acc = 0.0;
        for v in x {
            acc += v * v;
            cum.push(acc);
        }
        if acc <= f64::MIN_POSITIVE {
            return None;
        }

        // ncf[j] holds r(first_lag + j); one extra lag on each side of the
        // search range gives the interpolation neighbours.
        let first_lag = self.min_lag - 1;
        let last_lag = self.max_lag + 1;
        let ncf = &mut scratch.ncf;
        ncf.clear();
        for lag in first_lag..=last_lag {
            let head = &x[..len - lag];
            let tail = &x[lag..];
            let num: f64 = head.iter().zip(tail).map(|(a, b)| a * b).sum();
            let den = (cum[len - lag] * (cum[len] - cum[lag])).sqrt();
            ncf.push(if den > 1e-12 { num / den } else { 0.0 });
        }

        let peaks: Vec<usize> = (1..ncf.len() - 1)
            .filter(|&j| ncf[j] > 0.0 && ncf[j] >= ncf[j - 1] && ncf[j] >= ncf[j + 1])
            .collect();
        let best = peaks.iter().map(|&j| ncf[j]).fold(f64::NEG_INFINITY, f64::max);
        let chosen = *peaks.iter().find(|&&j| ncf[j] >= OCTAVE_PREFERENCE * best)?;
        if ncf[chosen] < VOICING_THRESHOLD {
            return None;
        }

        let (l, c, r) = (ncf[chosen - 1], ncf[chosen], ncf[chosen + 1]);
        let curvature = l - 2.0 * c + r;
        let offset = if curvature.abs() > 1e-12 {
            (0.5 * (l - r) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let lag = (first_lag + chosen) as f64 + offset;
        Some((self.sr / lag).clamp(self.floor_hz, self.ceil_hz))
    }
}
