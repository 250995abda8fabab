use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::AudioError;

/// Mean of a track over each third of its duration.
///
/// An average is `None` when no frame in that period carried a value
/// (for pitch, every frame in the period was unvoiced).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodAverages {
    pub averages: [Option<f64>; 3],
    pub n_used: [usize; 3],
}

impl PeriodAverages {
    pub fn from_values(p1: f64, p2: f64, p3: f64) -> Self {
        Self {
            averages: [Some(p1), Some(p2), Some(p3)],
            n_used: [1, 1, 1],
        }
    }

    /// All three averages, or `None` if any period is empty.
    pub fn defined(&self) -> Option<[f64; 3]> {
        match self.averages {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            _ => None,
        }
    }
}

/// Index range of period `i` (0-based) in a series of length `n`:
/// `[floor(i*n/3), floor((i+1)*n/3))`.
pub fn period_bounds(n: usize, i: usize) -> Range<usize> {
    (i * n / 3)..((i + 1) * n / 3)
}

pub fn three_period_averages(series: &[Option<f64>]) -> Result<PeriodAverages, AudioError> {
    if series.is_empty() {
        return Err(AudioError::EmptySeries);
    }
    let n = series.len();
    let mut averages = [None; 3];
    let mut n_used = [0; 3];
    for i in 0..3 {
        let (sum, count) = series[period_bounds(n, i)]
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        n_used[i] = count;
        if count > 0 {
            averages[i] = Some(sum / count as f64);
        }
    }
    Ok(PeriodAverages { averages, n_used })
}
