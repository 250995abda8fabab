//! Combines modality descriptions into one input text.
//!
//! Units always appear in the order audio (pitch, energy), facial (one per
//! action unit), lingual (the transcript). Separator concatenation joins the
//! units with a model-specific token; paragraph construction fills a
//! sentence template instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::locale::{LocaleError, LocaleTable};

pub const DEFAULT_SEPARATOR: &str = "[SEP]";
pub const TEMPLATE_KEY: &str = "template.paragraph";

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("no modality present")]
    NoModalityPresent,
    #[error("unknown template slot `{{{0}}}`")]
    TemplateSlotUnknown(String),
    #[error("malformed template: {0}")]
    TemplateMalformed(String),
    #[error("separator token must not be empty")]
    EmptySeparator,
    #[error("description `{0}` contains the separator token")]
    UnitContainsSeparator(String),
    #[error("empty description for {0}")]
    EmptyDescription(Modality),
    #[error(transparent)]
    Locale(#[from] LocaleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "A")]
    Audio,
    #[serde(rename = "F")]
    Facial,
    #[serde(rename = "L")]
    Lingual,
}

impl Modality {
    pub const ORDER: [Modality; 3] = [Modality::Audio, Modality::Facial, Modality::Lingual];

    pub fn letter(self) -> char {
        match self {
            Modality::Audio => 'A',
            Modality::Facial => 'F',
            Modality::Lingual => 'L',
        }
    }

    fn slot(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Facial => "facial",
            Modality::Lingual => "lingual",
        }
    }

    fn from_slot(name: &str) -> Option<Self> {
        Self::ORDER.into_iter().find(|m| m.slot() == name)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slot())
    }
}

/// A subset of {A, F, L}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModalitySet {
    audio: bool,
    facial: bool,
    lingual: bool,
}

impl ModalitySet {
    pub const ALL: ModalitySet = ModalitySet {
        audio: true,
        facial: true,
        lingual: true,
    };

    pub fn contains(self, m: Modality) -> bool {
        match m {
            Modality::Audio => self.audio,
            Modality::Facial => self.facial,
            Modality::Lingual => self.lingual,
        }
    }

    pub fn insert(&mut self, m: Modality) {
        match m {
            Modality::Audio => self.audio = true,
            Modality::Facial => self.facial = true,
            Modality::Lingual => self.lingual = true,
        }
    }

    pub fn is_empty(self) -> bool {
        !(self.audio || self.facial || self.lingual)
    }

    /// Members in composition order.
    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ORDER.into_iter().filter(move |&m| self.contains(m))
    }
}

impl FromIterator<Modality> for ModalitySet {
    fn from_iter<I: IntoIterator<Item = Modality>>(iter: I) -> Self {
        let mut s = Self::default();
        for m in iter {
            s.insert(m);
        }
        s
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letters: Vec<String> = self.iter().map(|m| m.letter().to_string()).collect();
        f.write_str(&letters.join("+"))
    }
}

impl FromStr for ModalitySet {
    type Err = String;

    /// Accepts letters in any order with optional `+`, `,` or space
    /// separators: `L+A+F`, `AF`, `a,l`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = Self::default();
        for c in s.chars() {
            match c.to_ascii_uppercase() {
                'A' => set.audio = true,
                'F' => set.facial = true,
                'L' => set.lingual = true,
                '+' | ',' | ' ' => {}
                _ => return Err(format!("unknown modality `{c}` in `{s}`")),
            }
        }
        if set.is_empty() {
            return Err("modality subset must not be empty".to_string());
        }
        Ok(set)
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            List(Vec<Modality>),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::List(v) => {
                let set: ModalitySet = v.into_iter().collect();
                if set.is_empty() {
                    return Err(serde::de::Error::custom("modality subset must not be empty"));
                }
                Ok(set)
            }
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One description phrase together with the locale key it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub key: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioDescription {
    pub pitch: String,
    pub energy: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModalityDescriptions {
    pub audio: Option<AudioDescription>,
    pub facial: Option<Vec<Phrase>>,
    pub lingual: Option<String>,
}

impl ModalityDescriptions {
    pub fn present(&self) -> ModalitySet {
        let mut s = ModalitySet::default();
        if self.audio.is_some() {
            s.insert(Modality::Audio);
        }
        if self.facial.is_some() {
            s.insert(Modality::Facial);
        }
        if self.lingual.is_some() {
            s.insert(Modality::Lingual);
        }
        s
    }

    /// Keeps only the modalities in `subset`.
    pub fn restrict(&self, subset: ModalitySet) -> Self {
        Self {
            audio: self.audio.clone().filter(|_| subset.contains(Modality::Audio)),
            facial: self.facial.clone().filter(|_| subset.contains(Modality::Facial)),
            lingual: self.lingual.clone().filter(|_| subset.contains(Modality::Lingual)),
        }
    }

    /// Units in composition order, each tagged with its modality.
    pub fn units(&self) -> Vec<(Modality, &str)> {
        let mut units = Vec::new();
        if let Some(a) = &self.audio {
            units.push((Modality::Audio, a.pitch.as_str()));
            units.push((Modality::Audio, a.energy.as_str()));
        }
        if let Some(f) = &self.facial {
            units.extend(f.iter().map(|p| (Modality::Facial, p.text.as_str())));
        }
        if let Some(l) = &self.lingual {
            units.push((Modality::Lingual, l.as_str()));
        }
        units
    }

    fn validate(&self) -> Result<(), ComposeError> {
        if self.present().is_empty() {
            return Err(ComposeError::NoModalityPresent);
        }
        if let Some(f) = &self.facial {
            if f.is_empty() {
                return Err(ComposeError::EmptyDescription(Modality::Facial));
            }
        }
        for (m, unit) in self.units() {
            if unit.trim().is_empty() {
                return Err(ComposeError::EmptyDescription(m));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinationMethod {
    Separator,
    Paragraph,
}

impl FromStr for CombinationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "separator" | "sep" => Ok(CombinationMethod::Separator),
            "paragraph" | "para" => Ok(CombinationMethod::Paragraph),
            _ => Err(format!("unknown combination method `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedInput {
    pub text: String,
    pub method: CombinationMethod,
    pub modalities: ModalitySet,
}

#[derive(Debug, Clone)]
pub struct CompositionConfig {
    pub separator: String,
    /// Overrides the locale's `template.paragraph` when set.
    pub paragraph_template: Option<String>,
    pub locale: LocaleTable,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            separator: DEFAULT_SEPARATOR.to_string(),
            paragraph_template: None,
            locale: LocaleTable::english(),
        }
    }
}

pub fn combine(
    d: &ModalityDescriptions,
    method: CombinationMethod,
    cfg: &CompositionConfig,
) -> Result<CombinedInput, ComposeError> {
    match method {
        CombinationMethod::Separator => combine_separator(d, cfg),
        CombinationMethod::Paragraph => combine_paragraph(d, cfg),
    }
}

pub fn combine_separator(
    d: &ModalityDescriptions,
    cfg: &CompositionConfig,
) -> Result<CombinedInput, ComposeError> {
    if cfg.separator.is_empty() {
        return Err(ComposeError::EmptySeparator);
    }
    d.validate()?;
    let units: Vec<&str> = d.units().into_iter().map(|(_, u)| u).collect();
    if let Some(bad) = units.iter().find(|u| u.contains(cfg.separator.as_str())) {
        return Err(ComposeError::UnitContainsSeparator(bad.to_string()));
    }
    Ok(CombinedInput {
        text: units.join(&cfg.separator),
        method: CombinationMethod::Separator,
        modalities: d.present(),
    })
}

pub fn combine_paragraph(
    d: &ModalityDescriptions,
    cfg: &CompositionConfig,
) -> Result<CombinedInput, ComposeError> {
    d.validate()?;
    let template = match &cfg.paragraph_template {
        Some(t) => t.as_str(),
        None => cfg.locale.get(TEMPLATE_KEY)?,
    };
    let sentences = parse_template(template)?;
    let joiner = Joiner::from_locale(&cfg.locale)?;

    let mut out = String::new();
    for sentence in &sentences {
        let fill = match sentence.slot {
            None => None,
            Some(m) => match slot_text(d, m, &cfg.locale, &joiner)? {
                Some(text) => Some(text),
                None => continue,
            },
        };
        let chunk = match fill {
            Some(text) => format!("{}{}{}", sentence.before, text, sentence.after),
            None => sentence.before.clone(),
        };
        if out.is_empty() {
            out.push_str(chunk.trim_start());
        } else {
            out.push_str(&chunk);
        }
    }
    Ok(CombinedInput {
        text: out,
        method: CombinationMethod::Paragraph,
        modalities: d.present(),
    })
}

fn slot_text(
    d: &ModalityDescriptions,
    m: Modality,
    locale: &LocaleTable,
    joiner: &Joiner,
) -> Result<Option<String>, ComposeError> {
    Ok(match m {
        Modality::Audio => d
            .audio
            .as_ref()
            .map(|a| joiner.join(&[a.pitch.as_str(), a.energy.as_str()])),
        Modality::Facial => match &d.facial {
            None => None,
            Some(phrases) => {
                let inflected = phrases
                    .iter()
                    .map(|p| locale.get(&format!("inflect.{}", p.key)))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(joiner.join(&inflected))
            }
        },
        Modality::Lingual => d.lingual.clone(),
    })
}

/// Joins phrases as `a`, `a and b`, `a, b and c`.
struct Joiner {
    list: String,
    last: String,
}

impl Joiner {
    fn from_locale(locale: &LocaleTable) -> Result<Self, LocaleError> {
        Ok(Self {
            list: locale.get("join.list")?.to_string(),
            last: locale.get("join.last")?.to_string(),
        })
    }

    fn join(&self, parts: &[&str]) -> String {
        match parts {
            [] => String::new(),
            [one] => one.to_string(),
            [init @ .., last] => format!("{}{}{}", init.join(&self.list), self.last, last),
        }
    }
}

/// One template sentence. Text before and after the slot; `after` is empty
/// when the sentence has no slot.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Sentence {
    before: String,
    slot: Option<Modality>,
    after: String,
}

const TERMINALS: [char; 6] = ['.', '!', '?', '。', '！', '？'];
const CLOSERS: [char; 8] = ['"', '\'', '”', '’', ')', '」', '』', '）'];

/// Splits a template into sentences, each holding at most one slot.
///
/// A sentence ends after a terminal mark (plus any closing quotes) that is
/// followed by whitespace or the end of the template. Full-width terminals
/// end a sentence immediately. Leading whitespace belongs to the sentence
/// it precedes, so dropping a sentence removes its spacing too.
fn parse_template(template: &str) -> Result<Vec<Sentence>, ComposeError> {
    let chars: Vec<char> = template.chars().collect();
    let mut sentences = Vec::new();
    let mut seen = ModalitySet::default();
    let mut current = Sentence {
        before: String::new(),
        slot: None,
        after: String::new(),
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '{' {
            let close = chars[i..]
                .iter()
                .position(|&c| c == '}')
                .ok_or_else(|| ComposeError::TemplateMalformed("unclosed `{`".into()))?;
            let name: String = chars[i + 1..i + close].iter().collect();
            let m = Modality::from_slot(&name).ok_or(ComposeError::TemplateSlotUnknown(name))?;
            if current.slot.is_some() {
                return Err(ComposeError::TemplateMalformed(
                    "two slots in one sentence".into(),
                ));
            }
            if seen.contains(m) {
                return Err(ComposeError::TemplateMalformed(format!(
                    "slot `{{{}}}` used twice",
                    m.slot()
                )));
            }
            seen.insert(m);
            current.slot = Some(m);
            i += close + 1;
            continue;
        }
        if c == '}' {
            return Err(ComposeError::TemplateMalformed("unmatched `}`".into()));
        }
        let target = if current.slot.is_some() {
            &mut current.after
        } else {
            &mut current.before
        };
        target.push(c);
        i += 1;
        if TERMINALS.contains(&c) {
            while i < chars.len() && CLOSERS.contains(&chars[i]) {
                target.push(chars[i]);
                i += 1;
            }
            let full_width = !c.is_ascii();
            if full_width || i == chars.len() || chars[i].is_whitespace() {
                sentences.push(std::mem::replace(
                    &mut current,
                    Sentence {
                        before: String::new(),
                        slot: None,
                        after: String::new(),
                    },
                ));
            }
        }
    }
    if !current.before.is_empty() || current.slot.is_some() {
        sentences.push(current);
    }
    Ok(sentences)
}
