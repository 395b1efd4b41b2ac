//! Grounded medical image dialogue toolkit: core algorithms.
//!
//! Everything in this crate is allocation-only (`alloc`) and IO-free:
//!
//! - [`grounded`]: the `<p>phrase<SEG></p>` response grammar.
//! - [`mask`]: binary masks, the row-major RLE codec, overlap geometry and
//!   the segmentation losses.
//! - [`metrics`]: mIoU, AP50, grounding F1, BLEU-4, ROUGE-L, METEOR-lite,
//!   closed-ended VQA accuracy and mergeable reports.
//! - [`forge`]: dataset construction (templates, knowledge prompts, answer
//!   grounding, splits and mixing).
//! - [`aligner`]: reference numerics for the prompt encoder, cross-attention
//!   aligner and seg-token mask decoder with analytic gradients.
//!
//! File formats, providers and the command line live in the `groundkit`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod aligner;
pub mod forge;
pub mod grounded;
pub mod mask;
pub mod metrics;
pub mod seed;

pub use grounded::{
    parse_grounded, DiagnosticKind, Entity, GroundedResponse, ParseDiagnostic, ParseError,
    ParseMode, Segment,
};
pub use mask::{BinaryMask, BoundingBox, LossWeights, MaskError, Point, SoftMask};
