//! Point and box prompt encoding.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::matrix::{Embedding, Matrix};
use super::AlignerError;
use crate::forge::VisualPrompt;

/// Row of the type-embedding table used for each prompt token.
pub const POINT_TYPE: usize = 0;
pub const TOP_LEFT_TYPE: usize = 1;
pub const BOTTOM_RIGHT_TYPE: usize = 2;
pub const PROMPT_TYPES: usize = 3;

/// Ratio between the highest and lowest positional frequency.
const FREQ_SPAN: f64 = 64.0;

/// Learned per-type embeddings, one `d`-wide row per token type.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEncoderParams {
    pub type_embeddings: Matrix,
}

impl PromptEncoderParams {
    pub fn new(type_embeddings: Matrix) -> Result<Self, AlignerError> {
        if type_embeddings.rows() != PROMPT_TYPES {
            return Err(AlignerError::DimMismatch {
                op: "prompt types",
                expected: PROMPT_TYPES,
                got: type_embeddings.rows(),
            });
        }
        check_dim(type_embeddings.cols())?;
        Ok(Self { type_embeddings })
    }

    pub fn dim(&self) -> usize {
        self.type_embeddings.cols()
    }
}

fn check_dim(d: usize) -> Result<(), AlignerError> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(AlignerError::BadDim(d));
    }
    Ok(())
}

/// Angular frequency of sinusoid pair `k` out of `pairs`, geometric from π
/// to π·64.
pub fn frequency(k: usize, pairs: usize) -> f64 {
    PI * libm::pow(FREQ_SPAN, k as f64 / pairs as f64)
}

/// Sinusoidal encoding of normalized coordinates. Channels `[0, d/2)`
/// encode `u` and `[d/2, d)` encode `v`, each as interleaved `sin, cos`
/// pairs.
pub fn positional_encoding(u: f64, v: f64, d: usize) -> Result<Vec<f64>, AlignerError> {
    check_dim(d)?;
    let pairs = d / 4;
    let mut out = Vec::with_capacity(d);
    for coord in [u, v] {
        for k in 0..pairs {
            let a = frequency(k, pairs) * coord;
            out.push(libm::sin(a));
            out.push(libm::cos(a));
        }
    }
    Ok(out)
}

/// Pixel-centre coordinates scaled to `(0, 1)`.
pub fn normalize(x: usize, y: usize, height: usize, width: usize) -> (f64, f64) {
    (
        (x as f64 + 0.5) / width as f64,
        (y as f64 + 0.5) / height as f64,
    )
}

/// Encodes a prompt as positional encoding plus type embedding: one row
/// for a point, two rows (top-left, bottom-right corner) for a box.
pub fn encode_prompt(
    prompt: &VisualPrompt,
    height: usize,
    width: usize,
    params: &PromptEncoderParams,
) -> Result<Embedding, AlignerError> {
    if !prompt.fits(height, width) {
        return Err(AlignerError::OutOfBounds);
    }
    let d = params.dim();
    let tokens: Vec<((usize, usize), usize)> = match prompt {
        VisualPrompt::Point(p) => alloc::vec![((p.x, p.y), POINT_TYPE)],
        VisualPrompt::Box(b) => alloc::vec![
            ((b.x_min, b.y_min), TOP_LEFT_TYPE),
            ((b.x_max, b.y_max), BOTTOM_RIGHT_TYPE),
        ],
    };
    let mut data = Vec::with_capacity(tokens.len() * d);
    for ((x, y), ty) in tokens {
        let (u, v) = normalize(x, y, height, width);
        let pe = positional_encoding(u, v, d)?;
        data.extend(
            pe.iter()
                .zip(params.type_embeddings.row(ty))
                .map(|(p, t)| p + t),
        );
    }
    Matrix::new(data.len() / d, d, data)
}
