//! Interpretable multimodal sentiment analysis through text.
//!
//! Audio is summarized as pitch and energy contour descriptions, facial
//! behaviour as action-unit phrases, and both are combined with the
//! transcript into one text that a language model can classify.

pub mod audio;
pub mod cli;
pub mod compose;
pub mod corpus;
pub mod eval;
pub mod facial;
pub mod fixture;
pub mod jsonl;
pub mod llm;
pub mod locale;
pub mod pattern;
pub mod pipeline;

pub use compose::{CombinationMethod, CombinedInput, Modality, ModalityDescriptions, ModalitySet};
pub use corpus::{binarize, Corpus, RawLabel, SentimentClass, UtteranceKey, UtteranceRecord};
pub use locale::LocaleTable;
pub use pattern::{ChangePattern, Feature, StepRelation};
