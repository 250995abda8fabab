use super::{AudioError, Framing};

/// Root-mean-square energy per frame. The trailing partial window is
/// zero-padded, so its value is computed over the full frame length.
pub fn compute_energy(
    samples: &[f64],
    sample_rate: u32,
    frame_len_s: f64,
    hop_s: f64,
) -> Result<Vec<f64>, AudioError> {
    if samples.is_empty() {
        return Err(AudioError::EmptyWaveform);
    }
    let framing = Framing::new(samples.len(), sample_rate, frame_len_s, hop_s)?;
    let mut buf = Vec::with_capacity(framing.frame);
    Ok((0..framing.count)
        .map(|i| rms(framing.window(samples, i, &mut buf)))
        .collect())
}

fn rms(frame: &[f64]) -> f64 {
    let sum_sq: f64 = frame.iter().map(|x| x * x).sum();
    (sum_sq / frame.len() as f64).sqrt()
}
