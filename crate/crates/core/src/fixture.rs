//! Synthetic mini-corpus with known contour patterns and action units.
//!
//! Each utterance is a phase-continuous sine whose frequency and amplitude
//! are held constant over each third of the clip. The AU file marks the
//! chosen units in 14 of 20 frames, plus distractors at 8/20 and exactly
//! 10/20 that must not count as appeared.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{write_wav, WavError};
use crate::facial::{column_name, AU_IDS};
use crate::pattern::ChangePattern;

pub const SAMPLE_RATE: u32 = 16_000;
pub const DURATION_S: f64 = 0.9;
pub const AU_FRAMES: usize = 20;
const APPEARED_FRAMES: usize = 14;

const AU_SETS: [&[u8]; 10] = [
    &[],
    &[6, 12],
    &[1, 2],
    &[4, 15],
    &[6, 7, 10, 12],
    &[25, 26],
    &[45],
    &[1, 4, 15, 17],
    &[12],
    &[2, 5],
];

const TRANSCRIPTS: [&str; 10] = [
    "It's real",
    "I went hiking last weekend",
    "Not really, I stayed home",
    "That sounds interesting",
    "I like cooking pasta",
    "Maybe next time",
    "The weather was nice",
    "I don't watch much television",
    "We talked for hours",
    "I'm not sure about that",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureUtterance {
    pub participant_id: String,
    pub exchange_id: String,
    pub transcript: String,
    pub pitch_pattern: ChangePattern,
    pub energy_pattern: ChangePattern,
    pub appeared: Vec<u8>,
    pub self_label: u8,
    pub third_label: u8,
}

/// Per-period frequency in Hz.
pub fn pitch_levels(p: ChangePattern) -> [f64; 3] {
    match p {
        ChangePattern::Decrease => [240.0, 180.0, 120.0],
        ChangePattern::Increase => [120.0, 180.0, 240.0],
        ChangePattern::FallThenRise => [220.0, 140.0, 220.0],
        ChangePattern::RiseThenFall => [140.0, 220.0, 140.0],
        ChangePattern::Flat => [170.0, 170.0, 170.0],
    }
}

/// Per-period sine amplitude on the [-1, 1] scale.
pub fn energy_levels(p: ChangePattern) -> [f64; 3] {
    match p {
        ChangePattern::Decrease => [0.6, 0.35, 0.15],
        ChangePattern::Increase => [0.15, 0.35, 0.6],
        ChangePattern::FallThenRise => [0.5, 0.2, 0.5],
        ChangePattern::RiseThenFall => [0.2, 0.5, 0.2],
        ChangePattern::Flat => [0.35, 0.35, 0.35],
    }
}

/// The utterance plan for participant `p`, exchange `u`.
pub fn plan(p: usize, u: usize) -> FixtureUtterance {
    let pitch_pattern = ChangePattern::ALL[(u + p) % 5];
    let energy_pattern = ChangePattern::ALL[(2 * u + 3 * p + 1) % 5];
    // Third-party label tracks the pitch contour; every seventh exchange
    // disagrees so the scores are not trivially perfect.
    let rising = matches!(
        pitch_pattern,
        ChangePattern::Increase | ChangePattern::RiseThenFall
    );
    let high = rising != ((p * 10 + u) % 7 == 3);
    let third_label = if high { 5 + ((p + u) % 3) as u8 } else { 1 + ((p + u) % 4) as u8 };
    let self_label = 1 + ((3 * p + 5 * u) % 7) as u8;
    FixtureUtterance {
        participant_id: format!("p{:02}", p + 1),
        exchange_id: format!("e{:02}", u + 1),
        transcript: TRANSCRIPTS[(u + 2 * p) % TRANSCRIPTS.len()].to_string(),
        pitch_pattern,
        energy_pattern,
        appeared: AU_SETS[(u + p) % AU_SETS.len()].to_vec(),
        self_label,
        third_label,
    }
}

pub fn synthesize(pitch: ChangePattern, energy: ChangePattern) -> Vec<f64> {
    let n = (DURATION_S * f64::from(SAMPLE_RATE)) as usize;
    let freqs = pitch_levels(pitch);
    let amps = energy_levels(energy);
    let mut phase = 0.0f64;
    (0..n)
        .map(|i| {
            let period = (3 * i / n).min(2);
            let s = amps[period] * phase.sin();
            phase += 2.0 * PI * freqs[period] / f64::from(SAMPLE_RATE);
            s
        })
        .collect()
}

/// OpenFace-style CSV text with intensity and presence columns.
pub fn au_csv(appeared: &[u8]) -> String {
    let mut header = vec!["frame", " face_id", " timestamp", " confidence", " success"]
        .into_iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    header.extend(AU_IDS.iter().map(|au| format!(" AU{au:02}_r")));
    header.extend(AU_IDS.iter().map(|&au| format!(" {}", column_name(au))));
    let mut out = header.join(",");
    out.push('\n');

    // One distractor below half, one exactly at half; both excluded.
    let spare: Vec<u8> = AU_IDS.iter().copied().filter(|a| !appeared.contains(a)).collect();
    let below = spare.first().copied();
    let at_half = spare.get(1).copied();

    for frame in 0..AU_FRAMES {
        let present = |au: u8| {
            if appeared.contains(&au) {
                frame < APPEARED_FRAMES
            } else if Some(au) == below {
                frame % 5 < 2
            } else if Some(au) == at_half {
                frame % 2 == 0
            } else {
                false
            }
        };
        let mut cells = vec![
            (frame + 1).to_string(),
            "0".to_string(),
            format!("{:.3}", frame as f64 / 30.0),
            "0.98".to_string(),
            "1".to_string(),
        ];
        cells.extend(
            AU_IDS
                .iter()
                .map(|&au| if present(au) { "1.50" } else { "0.00" }.to_string()),
        );
        cells.extend(
            AU_IDS
                .iter()
                .map(|&au| if present(au) { "1.0" } else { "0.0" }.to_string()),
        );
        out.push_str(&cells.join(", "));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wav(#[from] WavError),
}

/// Writes `manifest.csv`, `truth.jsonl`, and `audio/`, `au/` assets under
/// `dir`.
pub fn generate(dir: &Path, participants: usize, utterances: usize) -> Result<Vec<FixtureUtterance>, FixtureError> {
    fs::create_dir_all(dir.join("audio"))?;
    fs::create_dir_all(dir.join("au"))?;
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv")).map_err(io::Error::from)?;
    manifest
        .write_record(crate::corpus::MANIFEST_COLUMNS)
        .map_err(io::Error::from)?;
    let mut truth = io::BufWriter::new(fs::File::create(dir.join("truth.jsonl"))?);
    let mut plans = Vec::new();
    for p in 0..participants {
        for u in 0..utterances {
            let plan = plan(p, u);
            let stem = format!("{}_{}", plan.participant_id, plan.exchange_id);
            let audio = format!("audio/{stem}.wav");
            let au = format!("au/{stem}.csv");
            write_wav(
                &dir.join(&audio),
                &synthesize(plan.pitch_pattern, plan.energy_pattern),
                SAMPLE_RATE,
            )?;
            fs::write(dir.join(&au), au_csv(&plan.appeared))?;
            manifest
                .write_record([
                    plan.participant_id.as_str(),
                    plan.exchange_id.as_str(),
                    plan.transcript.as_str(),
                    audio.as_str(),
                    au.as_str(),
                    &plan.self_label.to_string(),
                    &plan.third_label.to_string(),
                ])
                .map_err(io::Error::from)?;
            serde_json::to_writer(&mut truth, &plan).map_err(io::Error::from)?;
            truth.write_all(b"\n")?;
            plans.push(plan);
        }
    }
    manifest.flush()?;
    truth.flush()?;
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facial::{appeared, parse_au_reader};

    #[test]
    fn au_rule_sees_only_planned_units() {
        for set in AU_SETS {
            let m = parse_au_reader(au_csv(set).as_bytes()).unwrap();
            let got: Vec<u8> = appeared(&m).ids().collect();
            assert_eq!(got, set);
        }
    }

    #[test]
    fn plans_cover_all_patterns_and_both_classes() {
        let plans: Vec<FixtureUtterance> =
            (0..6).flat_map(|p| (0..10).map(move |u| plan(p, u))).collect();
        for pat in ChangePattern::ALL {
            assert!(plans.iter().any(|x| x.pitch_pattern == pat));
            assert!(plans.iter().any(|x| x.energy_pattern == pat));
        }
        assert!(plans.iter().any(|x| x.third_label >= 5));
        assert!(plans.iter().any(|x| x.third_label <= 4));
        assert!(plans.iter().all(|x| (1..=7).contains(&x.self_label)));
        assert!(plans.iter().all(|x| (1..=7).contains(&x.third_label)));
    }
}
