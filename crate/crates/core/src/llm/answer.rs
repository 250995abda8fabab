use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::corpus::SentimentClass;

const DEFAULT_REFUSALS: &str = include_str!("../../data/refusal_phrases.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "category", rename_all = "lowercase")]
pub enum Outcome {
    Clear(String),
    Unclear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub outcome: Outcome,
    pub raw_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Extracted,
    FallbackIncorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted: SentimentClass,
    pub provenance: Provenance,
}

/// Phrases that mark an answer as a refusal, stored in normalized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefusalList {
    phrases: Vec<String>,
}

impl Default for RefusalList {
    fn default() -> Self {
        Self::parse(DEFAULT_REFUSALS)
    }
}

impl RefusalList {
    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let phrases = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(normalize)
            .filter(|p| !p.is_empty())
            .collect();
        Self { phrases }
    }

    fn matches(&self, normalized: &str) -> bool {
        self.phrases.iter().any(|p| contains_words(normalized, p))
    }
}

/// Lowercases and reduces the text to space-separated alphanumeric words.
fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn contains_words(haystack: &str, needle: &str) -> bool {
    format!(" {haystack} ").contains(&format!(" {needle} "))
}

pub fn parse_answer(raw: &str, categories: &[String]) -> ParsedAnswer {
    parse_answer_with(raw, categories, &RefusalList::default())
}

/// Clear when exactly one distinct category is mentioned as a whole word and
/// the answer contains no refusal phrase; unclear otherwise.
pub fn parse_answer_with(raw: &str, categories: &[String], refusals: &RefusalList) -> ParsedAnswer {
    let text = normalize(raw);
    let mentioned: Vec<&String> = categories
        .iter()
        .filter(|c| {
            let c = normalize(c);
            !c.is_empty() && contains_words(&text, &c)
        })
        .collect();
    let outcome = match mentioned.as_slice() {
        [only] if !refusals.matches(&text) => Outcome::Clear((*only).clone()),
        _ => Outcome::Unclear,
    };
    ParsedAnswer {
        outcome,
        raw_text: raw.to_string(),
    }
}

/// Turns a parsed answer into a class. Unclear answers get a uniformly
/// random class other than `gold`, so they always count as errors.
pub fn finalize_prediction(
    parsed: &ParsedAnswer,
    gold: SentimentClass,
    seed: u64,
) -> Result<Prediction, LlmError> {
    match &parsed.outcome {
        Outcome::Clear(name) => SentimentClass::from_name(name)
            .map(|predicted| Prediction {
                predicted,
                provenance: Provenance::Extracted,
            })
            .ok_or_else(|| LlmError::UnknownCategoryName(name.clone())),
        Outcome::Unclear => {
            let wrong: Vec<SentimentClass> = SentimentClass::ALL
                .into_iter()
                .filter(|&c| c != gold)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let predicted = *wrong.choose(&mut rng).expect("at least two classes");
            Ok(Prediction {
                predicted,
                provenance: Provenance::FallbackIncorrect,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::default_categories;

    fn outcome(raw: &str) -> Outcome {
        parse_answer(raw, &default_categories()).outcome
    }

    #[test]
    fn single_mention() {
        assert_eq!(
            outcome("The description belongs to the high category."),
            Outcome::Clear("high".into())
        );
        assert_eq!(outcome("LOW."), Outcome::Clear("low".into()));
    }

    #[test]
    fn two_mentions_unclear() {
        assert_eq!(
            outcome("It could be high or low depending on context."),
            Outcome::Unclear
        );
    }

    #[test]
    fn refusal_unclear() {
        assert_eq!(
            outcome("There is not enough information to judge."),
            Outcome::Unclear
        );
        assert_eq!(
            outcome("I can't determine whether it is high."),
            Outcome::Unclear
        );
    }

    #[test]
    fn whole_words_only() {
        assert_eq!(outcome("The highlight is the slow tempo."), Outcome::Unclear);
        assert_eq!(outcome("high-pitched? No: high."), Outcome::Clear("high".into()));
    }

    #[test]
    fn finalize_rules() {
        let clear = parse_answer("high", &default_categories());
        assert_eq!(
            finalize_prediction(&clear, SentimentClass::Low, 0).unwrap(),
            Prediction {
                predicted: SentimentClass::High,
                provenance: Provenance::Extracted
            }
        );
        let unclear = parse_answer("no idea", &default_categories());
        for (gold, other) in [
            (SentimentClass::High, SentimentClass::Low),
            (SentimentClass::Low, SentimentClass::High),
        ] {
            for seed in 0..20 {
                let p = finalize_prediction(&unclear, gold, seed).unwrap();
                assert_eq!(p.predicted, other);
                assert_eq!(p.provenance, Provenance::FallbackIncorrect);
            }
        }
    }

    #[test]
    fn unknown_category_name() {
        let cats = vec!["neutral".to_string()];
        let parsed = parse_answer("neutral", &cats);
        assert_eq!(
            finalize_prediction(&parsed, SentimentClass::Low, 0),
            Err(LlmError::UnknownCategoryName("neutral".into()))
        );
    }

    #[test]
    fn custom_refusals() {
        let list = RefusalList::parse("# comment\n\nno comment\n");
        let p = parse_answer_with("No comment, high.", &default_categories(), &list);
        assert_eq!(p.outcome, Outcome::Unclear);
        let p = parse_answer_with("not enough information, high", &default_categories(), &list);
        assert_eq!(p.outcome, Outcome::Clear("high".into()));
    }
}
