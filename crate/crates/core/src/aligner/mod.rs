//! Reference numerics for the multi-modal input aligner and mask decoding.
//!
//! Single head, one layer, no normalization or residuals.

mod attention;
mod decode;
mod encode;
pub mod gradcheck;
mod matrix;
pub mod model;

pub use attention::{
    aligner_forward, aligner_forward_masked, attend, softmax_rows, AlignerWeights, AttentionCache,
};
pub use decode::{decode_logits, decode_mask, sigmoid, SegTokenState};
pub use encode::{
    encode_prompt, frequency, normalize, positional_encoding, PromptEncoderParams,
    BOTTOM_RIGHT_TYPE, POINT_TYPE, PROMPT_TYPES, TOP_LEFT_TYPE,
};
pub use gradcheck::{grad_check, relative_error, tolerance, GradCheckReport};
pub use matrix::{dot, Embedding, Matrix};
pub use model::{
    example_loss, forward_backward, forward_loss, init_params, Example, LossBreakdown, LossConfig,
    ModelDims, ParamSet, TextTarget,
};

use alloc::string::String;

use crate::mask::MaskError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignerError {
    #[error("{op}: expected dimension {expected}, got {got}")]
    DimMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("model width {0} is not a positive multiple of 4")]
    BadDim(usize),
    #[error("visual prompt lies outside the image")]
    OutOfBounds,
    #[error("non-finite value")]
    NonFinite,
    #[error("attention has no keys")]
    NoKeys,
    #[error("at least one query is required")]
    NoQueries,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("text target token {0} is outside the vocabulary")]
    TokenOutOfRange(usize),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}
