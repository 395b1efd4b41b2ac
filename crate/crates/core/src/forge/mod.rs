//! Dataset construction for the four perspectives.

mod knowledge;
mod prompt;
mod qa;
mod split;
mod templated;
pub mod templates;
mod types;

pub use knowledge::{KnowledgeBase, KnowledgeEntry, KnowledgeError, KnowledgeSource};
pub use prompt::{build_generation_prompt, GenerationPrompt, PromptOptions, MISSING_KNOWLEDGE};
pub use qa::{
    generate_qa, ground_answer, make_generated_sample, parse_completion, remove_markers,
    CompletionProvider, CompletionRequest, GenerateOptions, ProviderError, ProviderErrorKind,
    QaPair, RetryPolicy,
};
pub use split::{mix, split, Split, SplitError, SplitRatios};
pub use templated::{
    derive_visual_prompt, grounded_from_template, group_labels, make_p1_sample,
    make_p1_sample_with, make_p2_sample, make_p2_sample_with, p1_choice, p2_choice, PromptTarget,
    TemplateChoice,
};
pub use types::{
    ImageRecord, LabeledMask, Modality, Perspective, PromptKind, Sample, SchemaViolation,
    UnknownName, VisualPrompt,
};

use alloc::string::String;

use crate::grounded::BuildError;
use crate::mask::MaskError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error("image has no labelled masks")]
    EmptyLabels,
    #[error("template index {0} out of range")]
    TemplateIndex(usize),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("invalid label: {0}")]
    Label(#[from] BuildError),
    #[error("no knowledge for label {0:?}")]
    UnknownLabel(String),
    #[error("{0} samples are template-based, not generated")]
    NotGenerated(Perspective),
    #[error("provider: {0}")]
    Provider(ProviderError),
    #[error("completion lacks a question/answer pair")]
    MalformedCompletion,
    #[error("answer mentions none of the labels")]
    UngroundableAnswer,
}
