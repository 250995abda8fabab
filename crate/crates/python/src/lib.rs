//! Python bindings for the verbalize pipeline.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use verbalize::audio::{self, AudioParams};
use verbalize::compose::{
    self, AudioDescription, CombinationMethod, CompositionConfig, ModalityDescriptions, Phrase,
};
use verbalize::corpus::{self, RawLabel, SentimentClass};
use verbalize::eval;
use verbalize::facial::{self, AppearedSet, AuFrameMatrix};
use verbalize::llm::{self, Outcome, Provenance};
use verbalize::pattern::{self, ChangePattern, Feature, StepRelation};
use verbalize::pipeline::{self, AnalysisConfig};
use verbalize::LocaleTable;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn class_name(name: &str) -> PyResult<SentimentClass> {
    SentimentClass::from_name(name).ok_or_else(|| value_err(format!("unknown class `{name}`")))
}

fn pattern_letter(letter: &str) -> PyResult<ChangePattern> {
    let mut chars = letter.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => ChangePattern::from_letter(c),
        _ => None,
    }
    .ok_or_else(|| value_err(format!("unknown pattern `{letter}`")))
}

fn feature(name: &str) -> PyResult<Feature> {
    match name {
        "pitch" => Ok(Feature::Pitch),
        "energy" => Ok(Feature::Energy),
        _ => Err(value_err(format!("unknown feature `{name}`"))),
    }
}

fn locale(path: Option<PathBuf>) -> PyResult<LocaleTable> {
    match path {
        Some(p) => LocaleTable::load(&p).map_err(value_err),
        None => Ok(LocaleTable::english()),
    }
}

/// Maps a 1-7 rating to "low" (1-4) or "high" (5-7).
#[pyfunction]
fn binarize(label: i64) -> PyResult<&'static str> {
    corpus::binarize_raw(label).map(SentimentClass::as_str).map_err(value_err)
}

/// "inc", "dec" or "hold" for the step from `x` to `y`.
#[pyfunction]
#[pyo3(signature = (x, y, eps_rel=pattern::DEFAULT_EPS_REL, floor_abs=pattern::PITCH_FLOOR_ABS))]
fn step_relation(x: f64, y: f64, eps_rel: f64, floor_abs: f64) -> &'static str {
    match pattern::step_relation(x, y, eps_rel, floor_abs) {
        StepRelation::Inc => "inc",
        StepRelation::Dec => "dec",
        StepRelation::Hold => "hold",
    }
}

/// Pattern letter a-e for three period averages.
#[pyfunction]
#[pyo3(signature = (averages, eps_rel=pattern::DEFAULT_EPS_REL, floor_abs=pattern::PITCH_FLOOR_ABS))]
fn classify(averages: [f64; 3], eps_rel: f64, floor_abs: f64) -> String {
    pattern::classify(averages, eps_rel, floor_abs).letter().to_string()
}

#[pyfunction]
#[pyo3(signature = (letter, feature_name, locale_path=None))]
fn describe_pattern(letter: &str, feature_name: &str, locale_path: Option<PathBuf>) -> PyResult<String> {
    pattern::describe(pattern_letter(letter)?, feature(feature_name)?, &locale(locale_path)?)
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (samples, sample_rate, frame_len_s=None, hop_s=None))]
fn compute_energy(
    samples: Vec<f64>,
    sample_rate: u32,
    frame_len_s: Option<f64>,
    hop_s: Option<f64>,
) -> PyResult<Vec<f64>> {
    let d = AudioParams::default();
    audio::compute_energy(
        &samples,
        sample_rate,
        frame_len_s.unwrap_or(d.frame_len_s),
        hop_s.unwrap_or(d.hop_s),
    )
    .map_err(value_err)
}

/// Per-frame pitch in Hz, `None` for unvoiced frames.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, frame_len_s=None, hop_s=None, floor_hz=None, ceil_hz=None))]
fn compute_pitch(
    samples: Vec<f64>,
    sample_rate: u32,
    frame_len_s: Option<f64>,
    hop_s: Option<f64>,
    floor_hz: Option<f64>,
    ceil_hz: Option<f64>,
) -> PyResult<Vec<Option<f64>>> {
    let d = AudioParams::default();
    audio::compute_pitch(
        &samples,
        sample_rate,
        frame_len_s.unwrap_or(d.frame_len_s),
        hop_s.unwrap_or(d.hop_s),
        floor_hz.unwrap_or(d.pitch_floor_hz),
        ceil_hz.unwrap_or(d.pitch_ceil_hz),
    )
    .map_err(value_err)
}

/// Returns `(averages, n_used)`; an average is `None` for an empty period.
#[pyfunction]
fn three_period_averages(series: Vec<Option<f64>>) -> PyResult<([Option<f64>; 3], [usize; 3])> {
    let p = audio::three_period_averages(&series).map_err(value_err)?;
    Ok((p.averages, p.n_used))
}

/// Pitch and energy patterns and descriptions for a waveform.
#[pyfunction]
fn describe_audio(py: Python<'_>, samples: Vec<f64>, sample_rate: u32) -> PyResult<Py<PyAny>> {
    let s = pipeline::describe_audio(&samples, sample_rate, &AnalysisConfig::default(), &LocaleTable::english())
        .map_err(value_err)?;
    let dict = pyo3::types::PyDict::new(py);
    for (name, t) in [("pitch", &s.pitch), ("energy", &s.energy)] {
        let d = pyo3::types::PyDict::new(py);
        d.set_item("pattern", t.pattern.letter().to_string())?;
        d.set_item("text", &t.text)?;
        d.set_item("averages", t.averages.averages)?;
        d.set_item("n_used", t.averages.n_used)?;
        d.set_item("fallback", t.fallback)?;
        dict.set_item(name, d)?;
    }
    Ok(dict.into_any().unbind())
}

/// AU ids present in more than half of the frames of an AU CSV file.
#[pyfunction]
fn appeared_aus(path: PathBuf) -> PyResult<Vec<u8>> {
    let m = facial::parse_au_csv(&path).map_err(value_err)?;
    Ok(facial::appeared(&m).ids().collect())
}

/// Same rule on an in-memory matrix: one row of 18 booleans per frame,
/// columns in ascending AU id order.
#[pyfunction]
fn appeared_from_frames(frames: Vec<[bool; 18]>) -> PyResult<Vec<u8>> {
    let m = AuFrameMatrix::from_frames(&frames).map_err(value_err)?;
    Ok(facial::appeared(&m).ids().collect())
}

#[pyfunction]
#[pyo3(signature = (au_ids, locale_path=None))]
fn describe_facial(au_ids: Vec<u8>, locale_path: Option<PathBuf>) -> PyResult<Vec<String>> {
    let set = AppearedSet::new(au_ids).map_err(value_err)?;
    facial::describe_facial(&set, &locale(locale_path)?).map_err(value_err)
}

#[pyfunction]
fn au_ids() -> Vec<u8> {
    facial::AU_IDS.to_vec()
}

/// Modality descriptions of one utterance. Facial input is a list of AU
/// ids; an empty list means no unit appeared.
#[pyclass(name = "Descriptions")]
struct PyDescriptions {
    inner: ModalityDescriptions,
    locale: LocaleTable,
}

#[pymethods]
impl PyDescriptions {
    #[new]
    #[pyo3(signature = (audio=None, facial=None, lingual=None, locale_path=None))]
    fn new(
        audio: Option<(String, String)>,
        facial: Option<Vec<u8>>,
        lingual: Option<String>,
        locale_path: Option<PathBuf>,
    ) -> PyResult<Self> {
        let locale = locale(locale_path)?;
        let facial = match facial {
            None => None,
            Some(ids) => {
                let set = AppearedSet::new(ids).map_err(value_err)?;
                let texts = facial::describe_facial(&set, &locale).map_err(value_err)?;
                Some(
                    facial::phrase_keys(&set)
                        .into_iter()
                        .zip(texts)
                        .map(|(key, text)| Phrase { key, text })
                        .collect(),
                )
            }
        };
        Ok(Self {
            inner: ModalityDescriptions {
                audio: audio.map(|(pitch, energy)| AudioDescription { pitch, energy }),
                facial,
                lingual,
            },
            locale,
        })
    }

    /// Present modalities, e.g. "A+F+L".
    #[getter]
    fn modalities(&self) -> String {
        self.inner.present().to_string()
    }

    /// Keeps only the modalities named in `subset`, e.g. "L+A".
    fn restrict(&self, subset: &str) -> PyResult<Self> {
        let set = subset.parse().map_err(value_err)?;
        Ok(Self {
            inner: self.inner.restrict(set),
            locale: self.locale.clone(),
        })
    }

    fn units(&self) -> Vec<String> {
        self.inner.units().into_iter().map(|(_, u)| u.to_string()).collect()
    }

    #[pyo3(signature = (separator=compose::DEFAULT_SEPARATOR))]
    fn separator(&self, separator: &str) -> PyResult<String> {
        let cfg = CompositionConfig {
            separator: separator.to_string(),
            paragraph_template: None,
            locale: self.locale.clone(),
        };
        compose::combine_separator(&self.inner, &cfg)
            .map(|c| c.text)
            .map_err(value_err)
    }

    #[pyo3(signature = (template=None))]
    fn paragraph(&self, template: Option<String>) -> PyResult<String> {
        let cfg = CompositionConfig {
            paragraph_template: template,
            locale: self.locale.clone(),
            ..CompositionConfig::default()
        };
        compose::combine_paragraph(&self.inner, &cfg)
            .map(|c| c.text)
            .map_err(value_err)
    }

    /// The classification prompt for the paragraph form.
    #[pyo3(signature = (categories=None))]
    fn prompt(&self, categories: Option<Vec<String>>) -> PyResult<String> {
        build_prompt(self.paragraph(None)?, categories)
    }

    fn __repr__(&self) -> String {
        format!("Descriptions({})", self.modalities())
    }
}

/// Wraps an already composed paragraph in the classification prompt.
#[pyfunction]
#[pyo3(signature = (paragraph, categories=None))]
fn build_prompt(paragraph: String, categories: Option<Vec<String>>) -> PyResult<String> {
    let input = compose::CombinedInput {
        text: paragraph,
        method: CombinationMethod::Paragraph,
        modalities: "L".parse().expect("valid subset"),
    };
    let cats = categories.unwrap_or_else(llm::default_categories);
    llm::build_prompt(&input, &cats, None)
        .map(|p| p.prompt_text)
        .map_err(value_err)
}

/// The category named by an answer, or `None` when unclear.
#[pyfunction]
#[pyo3(signature = (raw, categories=None))]
fn parse_answer(raw: &str, categories: Option<Vec<String>>) -> Option<String> {
    let cats = categories.unwrap_or_else(llm::default_categories);
    match llm::parse_answer(raw, &cats).outcome {
        Outcome::Clear(c) => Some(c),
        Outcome::Unclear => None,
    }
}

/// Returns `(predicted, provenance)` for a raw answer against `gold`.
#[pyfunction]
fn finalize_prediction(raw: &str, gold: &str, seed: u64) -> PyResult<(&'static str, &'static str)> {
    let parsed = llm::parse_answer(raw, &llm::default_categories());
    let p = llm::finalize_prediction(&parsed, class_name(gold)?, seed).map_err(value_err)?;
    let provenance = match p.provenance {
        Provenance::Extracted => "extracted",
        Provenance::FallbackIncorrect => "fallback_incorrect",
    };
    Ok((p.predicted.as_str(), provenance))
}

#[pyfunction]
fn macro_f1(preds: Vec<String>, golds: Vec<String>) -> PyResult<f64> {
    let p = preds.iter().map(|s| class_name(s)).collect::<PyResult<Vec<_>>>()?;
    let g = golds.iter().map(|s| class_name(s)).collect::<PyResult<Vec<_>>>()?;
    eval::macro_f1(&p, &g).map_err(value_err)
}

/// Participant id to fold index.
#[pyfunction]
#[pyo3(signature = (participants, k=eval::DEFAULT_FOLDS, seed=0))]
fn make_folds(participants: Vec<String>, k: usize, seed: u64) -> PyResult<Vec<(String, usize)>> {
    eval::make_folds(&participants, k, seed)
        .map(|p| p.assignments)
        .map_err(value_err)
}

#[pyfunction]
fn validation_boundary(m: usize) -> usize {
    eval::validation_boundary(m)
}

#[pyfunction]
fn raw_label_valid(label: u8) -> bool {
    RawLabel::new(label).is_some()
}

#[pymodule]
fn pyverbalize(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDescriptions>()?;
    m.add_function(wrap_pyfunction!(binarize, m)?)?;
    m.add_function(wrap_pyfunction!(raw_label_valid, m)?)?;
    m.add_function(wrap_pyfunction!(step_relation, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(describe_pattern, m)?)?;
    m.add_function(wrap_pyfunction!(compute_energy, m)?)?;
    m.add_function(wrap_pyfunction!(compute_pitch, m)?)?;
    m.add_function(wrap_pyfunction!(three_period_averages, m)?)?;
    m.add_function(wrap_pyfunction!(describe_audio, m)?)?;
    m.add_function(wrap_pyfunction!(appeared_aus, m)?)?;
    m.add_function(wrap_pyfunction!(appeared_from_frames, m)?)?;
    m.add_function(wrap_pyfunction!(describe_facial, m)?)?;
    m.add_function(wrap_pyfunction!(au_ids, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_answer, m)?)?;
    m.add_function(wrap_pyfunction!(finalize_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(make_folds, m)?)?;
    m.add_function(wrap_pyfunction!(validation_boundary, m)?)?;
    Ok(())
}
