use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compose::{CombinationMethod, ModalitySet, DEFAULT_SEPARATOR};
use crate::corpus::LabelKind;
use crate::eval::{DEFAULT_FOLDS, DEFAULT_RUNS};
use crate::llm::{default_categories, ServiceConfig};
use crate::pipeline::AnalysisConfig;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    #[serde(flatten)]
    pub service: ServiceConfig,
    pub categories: Vec<String>,
    /// Base seed for the unclear-answer fallback.
    pub seed: u64,
    /// Replaces the bundled refusal phrase list.
    pub refusals: Option<PathBuf>,
    /// Script for the local stand-in service; when set no external call is made.
    pub stand_in: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            service: ServiceConfig::default(),
            categories: default_categories(),
            seed: 0,
            refusals: None,
            stand_in: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub fold_seed: u64,
    pub runs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            fold_seed: 0,
            runs: DEFAULT_RUNS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub modalities: String,
    pub method: CombinationMethod,
    pub label: LabelKind,
    pub locale: Option<PathBuf>,
    pub separator: String,
    pub paragraph_template: Option<String>,
    /// Worker threads for per-utterance stages; 0 picks the core count.
    pub workers: usize,
    pub audio: AnalysisConfig,
    pub llm: LlmConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            out_dir: PathBuf::from("out"),
            modalities: "A+F+L".to_string(),
            method: CombinationMethod::Paragraph,
            label: LabelKind::Third,
            locale: None,
            separator: DEFAULT_SEPARATOR.to_string(),
            paragraph_template: None,
            workers: 0,
            audio: AnalysisConfig::default(),
            llm: LlmConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            cfg.manifest.as_mut(),
            cfg.locale.as_mut(),
            cfg.llm.refusals.as_mut(),
            cfg.llm.stand_in.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn modality_set(&self) -> Result<ModalitySet, CliError> {
        let set: ModalitySet = self
            .modalities
            .parse()
            .map_err(|e| CliError::Usage(format!("modalities: {e}")))?;
        if set.is_empty() {
            return Err(CliError::Usage("modality subset must not be empty".into()));
        }
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.modality_set()?;
        if self.eval.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        if self.eval.k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        crate::llm::validate_categories(&self.llm.categories)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }
}
