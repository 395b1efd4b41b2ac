//! Seg-token projection and the linear-probe mask decoder.
//!
//! The decoder stands in for a full promptable mask decoder: each pixel's
//! logit is the dot product of its feature row with the projected seg token.

use alloc::vec::Vec;

use super::matrix::{dot, Embedding, Matrix};
use super::AlignerError;
use crate::mask::SoftMask;

#[derive(Debug, Clone, PartialEq)]
pub struct SegTokenState {
    /// Hidden state at a `<SEG>` position, length `d`.
    pub r_seg: Vec<f64>,
    /// `d × d_dec` projection.
    pub proj: Matrix,
}

impl SegTokenState {
    pub fn new(r_seg: Vec<f64>, proj: Matrix) -> Result<Self, AlignerError> {
        if r_seg.len() != proj.rows() {
            return Err(AlignerError::DimMismatch {
                op: "seg token",
                expected: proj.rows(),
                got: r_seg.len(),
            });
        }
        if !proj.is_finite() || r_seg.iter().any(|v| !v.is_finite()) {
            return Err(AlignerError::NonFinite);
        }
        Ok(Self { r_seg, proj })
    }

    /// The prompt embedding handed to the decoder, `r_seg · proj`.
    pub fn projected(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.proj.cols()];
        for (k, r) in self.r_seg.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.proj.row(k)) {
                *o += r * p;
            }
        }
        out
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Per-pixel logits; `features` has one `d_dec`-wide row per pixel.
pub fn decode_logits(features: &Embedding, st: &SegTokenState) -> Result<Vec<f64>, AlignerError> {
    if features.cols() != st.proj.cols() {
        return Err(AlignerError::DimMismatch {
            op: "decoder features",
            expected: st.proj.cols(),
            got: features.cols(),
        });
    }
    let e = st.projected();
    Ok((0..features.rows())
        .map(|i| dot(features.row(i), &e))
        .collect())
}

/// Soft mask over a `height × width` feature grid (row-major pixels).
pub fn decode_mask(
    features: &Embedding,
    height: usize,
    width: usize,
    st: &SegTokenState,
) -> Result<SoftMask, AlignerError> {
    if features.rows() != height * width {
        return Err(AlignerError::DimMismatch {
            op: "feature grid",
            expected: height * width,
            got: features.rows(),
        });
    }
    let probs = decode_logits(features, st)?
        .into_iter()
        .map(sigmoid)
        .collect();
    Ok(SoftMask::new(height, width, probs)?)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng as _;

    fn rand_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn state(seed: u64, d: usize, d_dec: usize) -> SegTokenState {
        let r = rand_matrix(seed, 1, d).into_data();
        SegTokenState::new(r, rand_matrix(seed + 1, d, d_dec)).unwrap()
    }

    #[test]
    fn zero_projection_gives_half() {
        let st = SegTokenState::new(vec![0.0; 4], rand_matrix(1, 4, 3)).unwrap();
        let m = decode_mask(&rand_matrix(2, 6, 3), 2, 3, &st).unwrap();
        assert!(m.probs().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn aligned_pixel_saturates() {
        let st = state(3, 4, 3);
        let e = st.projected();
        let mut f = rand_matrix(4, 4, 3);
        for (c, v) in e.iter().enumerate() {
            f.set(2, c, 1e3 * v);
        }
        let m = decode_mask(&f, 2, 2, &st).unwrap();
        assert!(m.probs()[2] > 1.0 - 1e-12);
    }

    #[test]
    fn matches_naive_loops() {
        let (d, d_dec, px) = (6, 5, 12);
        let st = state(5, d, d_dec);
        let f = rand_matrix(6, px, d_dec);
        let got = decode_logits(&f, &st).unwrap();
        for i in 0..px {
            let mut z = 0.0;
            for j in 0..d_dec {
                let mut e = 0.0;
                for k in 0..d {
                    e += st.r_seg[k] * st.proj.get(k, j);
                }
                z += f.get(i, j) * e;
            }
            assert!((got[i] - z).abs() < 1e-12);
            let p = decode_mask(&f, 3, 4, &st).unwrap().probs()[i];
            assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn logits_linear_in_seg_token() {
        let st = state(7, 4, 3);
        let f = rand_matrix(8, 9, 3);
        let doubled =
            SegTokenState::new(st.r_seg.iter().map(|v| 2.0 * v).collect(), st.proj.clone())
                .unwrap();
        let a = decode_logits(&f, &st).unwrap();
        let b = decode_logits(&f, &doubled).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| 2.0 * x == *y));
    }

    #[test]
    fn dimension_errors() {
        let st = state(9, 4, 3);
        assert!(decode_logits(&Matrix::zeros(4, 2), &st).is_err());
        assert!(decode_mask(&Matrix::zeros(5, 3), 2, 2, &st).is_err());
        assert!(SegTokenState::new(vec![0.0; 3], Matrix::zeros(4, 3)).is_err());
    }
}
