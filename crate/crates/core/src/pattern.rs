//! Five-way classification of a three-period contour and its description.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audio::PeriodAverages;
use crate::locale::{LocaleError, LocaleTable};

/// Relative band inside which two period averages count as equal.
pub const DEFAULT_EPS_REL: f64 = 0.02;
/// Absolute floor of the equality band for pitch, in Hz.
pub const PITCH_FLOOR_ABS: f64 = 1.0;
/// Absolute floor of the equality band for energy on normalized samples.
pub const ENERGY_FLOOR_ABS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepRelation {
    Inc,
    Dec,
    Hold,
}

impl StepRelation {
    pub const ALL: [StepRelation; 3] = [StepRelation::Inc, StepRelation::Dec, StepRelation::Hold];

    /// The relation seen when the step is walked backwards.
    pub fn reversed(self) -> Self {
        match self {
            StepRelation::Inc => StepRelation::Dec,
            StepRelation::Dec => StepRelation::Inc,
            StepRelation::Hold => StepRelation::Hold,
        }
    }
}

/// `Hold` iff `|y - x| <= eps_rel * max(|x|, |y|, floor_abs)`, otherwise the
/// sign of `y - x`.
pub fn step_relation(x: f64, y: f64, eps_rel: f64, floor_abs: f64) -> StepRelation {
    let band = eps_rel * x.abs().max(y.abs()).max(floor_abs);
    if (y - x).abs() <= band {
        StepRelation::Hold
    } else if y > x {
        StepRelation::Inc
    } else {
        StepRelation::Dec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangePattern {
    /// a: decreases from high to low.
    #[serde(rename = "a")]
    Decrease,
    /// b: increases from low to high.
    #[serde(rename = "b")]
    Increase,
    /// c: falls and then rises.
    #[serde(rename = "c")]
    FallThenRise,
    /// d: rises and then falls.
    #[serde(rename = "d")]
    RiseThenFall,
    /// e: does not change.
    #[serde(rename = "e")]
    Flat,
}

impl ChangePattern {
    pub const ALL: [ChangePattern; 5] = [
        ChangePattern::Decrease,
        ChangePattern::Increase,
        ChangePattern::FallThenRise,
        ChangePattern::RiseThenFall,
        ChangePattern::Flat,
    ];

    pub fn letter(self) -> char {
        match self {
            ChangePattern::Decrease => 'a',
            ChangePattern::Increase => 'b',
            ChangePattern::FallThenRise => 'c',
            ChangePattern::RiseThenFall => 'd',
            ChangePattern::Flat => 'e',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.letter() == c)
    }

    /// Maps the two step relations onto a case.
    pub fn from_relations(first: StepRelation, second: StepRelation) -> Self {
        use StepRelation::*;
        match (first, second) {
            (Dec, Dec) | (Dec, Hold) | (Hold, Dec) => ChangePattern::Decrease,
            (Inc, Inc) | (Inc, Hold) | (Hold, Inc) => ChangePattern::Increase,
            (Dec, Inc) => ChangePattern::FallThenRise,
            (Inc, Dec) => ChangePattern::RiseThenFall,
            (Hold, Hold) => ChangePattern::Flat,
        }
    }
}

impl fmt::Display for ChangePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Classifies three defined period averages.
pub fn classify(averages: [f64; 3], eps_rel: f64, floor_abs: f64) -> ChangePattern {
    let [p1, p2, p3] = averages;
    ChangePattern::from_relations(
        step_relation(p1, p2, eps_rel, floor_abs),
        step_relation(p2, p3, eps_rel, floor_abs),
    )
}

/// A classified track. When a period has no usable frames the pattern falls
/// back to `Flat` and `fallback` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPattern {
    pub pattern: ChangePattern,
    pub fallback: bool,
}

pub fn classify_periods(p: &PeriodAverages, eps_rel: f64, floor_abs: f64) -> ClassifiedPattern {
    match p.defined() {
        Some(values) => ClassifiedPattern {
            pattern: classify(values, eps_rel, floor_abs),
            fallback: false,
        },
        None => ClassifiedPattern {
            pattern: ChangePattern::Flat,
            fallback: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Pitch,
    Energy,
}

impl Feature {
    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Pitch => "pitch",
            Feature::Energy => "energy",
        }
    }
}

pub fn locale_key(pattern: ChangePattern, feature: Feature) -> String {
    format!("pattern.{}.{}", pattern.letter(), feature.as_str())
}

pub fn describe(
    pattern: ChangePattern,
    feature: Feature,
    locale: &LocaleTable,
) -> Result<String, LocaleError> {
    locale
        .get(&locale_key(pattern, feature))
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use StepRelation::*;

    #[test]
    fn step_examples() {
        assert_eq!(step_relation(100.0, 100.0, 0.02, 1.0), Hold);
        assert_eq!(step_relation(100.0, 101.0, 0.02, 1.0), Hold);
        assert_eq!(step_relation(100.0, 150.0, 0.02, 1.0), Inc);
        assert_eq!(step_relation(150.0, 100.0, 0.02, 1.0), Dec);
    }

    #[test]
    fn floor_widens_band_near_zero() {
        // band = 0.02 * max(0.001, 0.002, 1.0) = 0.02
        assert_eq!(step_relation(0.001, 0.002, 0.02, 1.0), Hold);
        assert_eq!(step_relation(0.0, 0.03, 0.02, 1.0), Inc);
    }

    #[test]
    fn classify_examples() {
        let c = |a, b, d| classify([a, b, d], 0.02, 1.0);
        assert_eq!(c(200.0, 150.0, 100.0), ChangePattern::Decrease);
        assert_eq!(c(100.0, 150.0, 120.0), ChangePattern::RiseThenFall);
        assert_eq!(c(100.0, 100.0, 100.0), ChangePattern::Flat);
        assert_eq!(c(100.0, 99.0, 140.0), ChangePattern::Increase);
        assert_eq!(c(150.0, 100.0, 140.0), ChangePattern::FallThenRise);
    }

    #[test]
    fn hold_hold_is_flat_even_when_drift_exceeds_band() {
        // Each step is within 2 % but the ends differ by ~4 %.
        assert_eq!(classify([100.0, 102.0, 104.0], 0.02, 1.0), ChangePattern::Flat);
    }

    #[test]
    fn undefined_period_falls_back_to_flat() {
        let p = PeriodAverages {
            averages: [Some(100.0), None, Some(200.0)],
            n_used: [3, 0, 3],
        };
        let c = classify_periods(&p, 0.02, 1.0);
        assert_eq!(c.pattern, ChangePattern::Flat);
        assert!(c.fallback);
    }

    #[test]
    fn english_descriptions() {
        let en = LocaleTable::english();
        assert_eq!(
            describe(ChangePattern::Decrease, Feature::Pitch, &en).unwrap(),
            "pitch decreases from high to low"
        );
        assert_eq!(
            describe(ChangePattern::RiseThenFall, Feature::Energy, &en).unwrap(),
            "energy rises and then falls"
        );
        assert_eq!(
            describe(ChangePattern::Flat, Feature::Pitch, &en).unwrap(),
            "pitch does not change"
        );
    }

    #[test]
    fn missing_key() {
        let mut en = LocaleTable::english();
        en.remove("pattern.c.energy");
        assert!(matches!(
            describe(ChangePattern::FallThenRise, Feature::Energy, &en),
            Err(LocaleError::MissingLocaleKey(k)) if k == "pattern.c.energy"
        ));
    }

    #[test]
    fn descriptions_injective() {
        let en = LocaleTable::english();
        for feature in [Feature::Pitch, Feature::Energy] {
            let mut all: Vec<String> = ChangePattern::ALL
                .iter()
                .map(|&p| describe(p, feature, &en).unwrap())
                .collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 5);
        }
    }

    #[test]
    fn letters_round_trip() {
        for p in ChangePattern::ALL {
            assert_eq!(ChangePattern::from_letter(p.letter()), Some(p));
        }
    }
}
