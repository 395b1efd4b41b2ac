//! Cross-attention from learnable queries onto image, text and prompt tokens.

use alloc::vec::Vec;

use super::matrix::{Embedding, Matrix};
use super::AlignerError;
use crate::seed;
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignerWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    /// `n_q × d` learnable query embeddings.
    pub queries: Matrix,
}

impl AlignerWeights {
    pub fn new(
        w_q: Matrix,
        w_k: Matrix,
        w_v: Matrix,
        w_o: Matrix,
        queries: Matrix,
    ) -> Result<Self, AlignerError> {
        let d = w_q.rows();
        for m in [&w_q, &w_k, &w_v, &w_o] {
            for got in [m.rows(), m.cols()] {
                if got != d {
                    return Err(AlignerError::DimMismatch {
                        op: "aligner weights",
                        expected: d,
                        got,
                    });
                }
            }
        }
        if queries.cols() != d {
            return Err(AlignerError::DimMismatch {
                op: "queries",
                expected: d,
                got: queries.cols(),
            });
        }
        if queries.rows() == 0 || d == 0 {
            return Err(AlignerError::NoQueries);
        }
        if ![&w_q, &w_k, &w_v, &w_o, &queries]
            .iter()
            .all(|m| m.is_finite())
        {
            return Err(AlignerError::NonFinite);
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            queries,
        })
    }

    /// Seeded uniform init in `[-1/√d, 1/√d]`.
    pub fn init(d: usize, n_q: usize, seed: u64) -> Result<Self, AlignerError> {
        let mut rng = seed::rng(seed);
        let mut m = |rows| uniform_matrix(&mut rng, rows, d, d);
        let (w_q, w_k, w_v, w_o) = (m(d), m(d), m(d), m(d));
        let queries = m(n_q);
        Self::new(w_q, w_k, w_v, w_o, queries)
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn n_q(&self) -> usize {
        self.queries.rows()
    }
}

/// `rows × cols` matrix uniform in `[-1/√fan, 1/√fan]`.
pub fn uniform_matrix(rng: &mut seed::Rng, rows: usize, cols: usize, fan: usize) -> Matrix {
    let bound = 1.0 / libm::sqrt(fan.max(1) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

/// Intermediates of one attention pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    /// Concatenated key/value tokens.
    pub x: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    /// `x · W_v`
    pub v: Matrix,
    /// `x · W_v · W_o`, one transformed value row per key.
    pub t: Matrix,
    /// Row-stochastic attention weights, `n_q × n_keys`.
    pub attn: Matrix,
    pub output: Matrix,
}

/// Row softmax with optional key mask (`false` = ignored). Masked entries
/// get weight exactly 0.
pub fn softmax_rows(scores: &Matrix, key_mask: Option<&[bool]>) -> Matrix {
    let allowed = |j: usize| key_mask.is_none_or(|m| m[j]);
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let row = scores.row(i);
        let max = (0..row.len())
            .filter(|&j| allowed(j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let o = out.row_mut(i);
        for j in 0..row.len() {
            if allowed(j) {
                o[j] = libm::exp(row[j] - max);
                sum += o[j];
            }
        }
        for v in o.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Queries attend over the rows of `x`. `key_mask`, when given, has one
/// entry per row of `x`.
pub fn attend(
    x: &Embedding,
    w: &AlignerWeights,
    key_mask: Option<&[bool]>,
) -> Result<AttentionCache, AlignerError> {
    let d = w.dim();
    if x.cols() != d {
        return Err(AlignerError::DimMismatch {
            op: "keys",
            expected: d,
            got: x.cols(),
        });
    }
    if let Some(m) = key_mask {
        if m.len() != x.rows() {
            return Err(AlignerError::DimMismatch {
                op: "key mask",
                expected: x.rows(),
                got: m.len(),
            });
        }
    }
    if !key_mask.map_or(x.rows() > 0, |m| m.iter().any(|&b| b)) {
        return Err(AlignerError::NoKeys);
    }
    let q = w.queries.matmul(&w.w_q)?;
    let k = x.matmul(&w.w_k)?;
    let v = x.matmul(&w.w_v)?;
    let t = v.matmul(&w.w_o)?;
    let mut scores = q.matmul_t(&k)?;
    scores.scale(1.0 / libm::sqrt(d as f64));
    let attn = softmax_rows(&scores, key_mask);
    let output = attn.matmul(&t)?;
    Ok(AttentionCache {
        x: x.clone(),
        q,
        k,
        v,
        t,
        attn,
        output,
    })
}

fn keys(
    x_img: &Embedding,
    x_qt: &Embedding,
    x_qv: &Embedding,
    d: usize,
) -> Result<Embedding, AlignerError> {
    for m in [x_img, x_qt, x_qv] {
        if m.rows() > 0 && m.cols() != d {
            return Err(AlignerError::DimMismatch {
                op: "aligner input",
                expected: d,
                got: m.cols(),
            });
        }
    }
    let x = Matrix::vstack(&[x_img, x_qt, x_qv])?;
    if x.rows() == 0 {
        return Err(AlignerError::NoKeys);
    }
    Ok(x)
}

/// `softmax(Q·Kᵀ/√d)·V·W_o` over `concat(x_img, x_qt, x_qv)`; `x_qv` may
/// have zero rows. Output is `n_q × d`.
pub fn aligner_forward(
    x_img: &Embedding,
    x_qt: &Embedding,
    x_qv: &Embedding,
    w: &AlignerWeights,
) -> Result<Embedding, AlignerError> {
    let x = keys(x_img, x_qt, x_qv, w.dim())?;
    Ok(attend(&x, w, None)?.output)
}

/// As [`aligner_forward`], with the visual-prompt rows present but
/// excluded from attention when `use_prompt` is false.
pub fn aligner_forward_masked(
    x_img: &Embedding,
    x_qt: &Embedding,
    x_qv: &Embedding,
    w: &AlignerWeights,
    use_prompt: bool,
) -> Result<Embedding, AlignerError> {
    let x = keys(x_img, x_qt, x_qv, w.dim())?;
    let mut mask: Vec<bool> = alloc::vec![true; x.rows()];
    for m in &mut mask[x.rows() - x_qv.rows()..] {
        *m = use_prompt;
    }
    Ok(attend(&x, w, Some(&mask))?.output)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn rand_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Scalar triple loops straight from the definition.
    fn oracle(x: &Matrix, w: &AlignerWeights) -> Vec<Vec<f64>> {
        let d = w.dim();
        let (nq, nk) = (w.n_q(), x.rows());
        let lin = |a: &Matrix, r: usize, m: &Matrix, c: usize| {
            (0..d).map(|k| a.get(r, k) * m.get(k, c)).sum::<f64>()
        };
        let q: Vec<Vec<f64>> = (0..nq)
            .map(|i| (0..d).map(|c| lin(&w.queries, i, &w.w_q, c)).collect())
            .collect();
        let k: Vec<Vec<f64>> = (0..nk)
            .map(|j| (0..d).map(|c| lin(x, j, &w.w_k, c)).collect())
            .collect();
        let v: Vec<Vec<f64>> = (0..nk)
            .map(|j| (0..d).map(|c| lin(x, j, &w.w_v, c)).collect())
            .collect();
        let mut out = vec![vec![0.0; d]; nq];
        for i in 0..nq {
            let s: Vec<f64> = (0..nk)
                .map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
            for j in 0..nk {
                let a = (s[j] - m).exp() / z;
                for c in 0..d {
                    let t: f64 = (0..d).map(|e| v[j][e] * w.w_o.get(e, c)).sum();
                    out[i][c] += a * t;
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loops() {
        let w = AlignerWeights::init(8, 4, 1).unwrap();
        let x = rand_matrix(2, 9, 8);
        let got = attend(&x, &w, None).unwrap().output;
        let want = oracle(&x, &w);
        for i in 0..4 {
            for c in 0..8 {
                assert!((got.get(i, c) - want[i][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_key_gets_full_weight() {
        let w = AlignerWeights::init(4, 3, 5).unwrap();
        let x = rand_matrix(6, 1, 4);
        let out = aligner_forward(&x, &Matrix::zeros(0, 4), &Matrix::zeros(0, 4), &w).unwrap();
        let t = x.matmul(&w.w_v).unwrap().matmul(&w.w_o).unwrap();
        for i in 0..3 {
            assert!(out
                .row(i)
                .iter()
                .zip(t.row(0))
                .all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_query_weights_give_mean_of_values() {
        let mut w = AlignerWeights::init(4, 2, 7).unwrap();
        w.w_q = Matrix::zeros(4, 4);
        let x = rand_matrix(8, 5, 4);
        let c = attend(&x, &w, None).unwrap();
        let mean = c.t.row_mean();
        for i in 0..2 {
            assert!(c.attn.row(i).iter().all(|&a| (a - 0.2).abs() < 1e-15));
            assert!(c
                .output
                .row(i)
                .iter()
                .zip(&mean)
                .all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }

    #[test]
    fn rows_sum_to_one_and_outputs_are_convex() {
        for s in 0..20 {
            let w = AlignerWeights::init(8, 5, s).unwrap();
            let x = rand_matrix(100 + s, 7, 8);
            let c = attend(&x, &w, None).unwrap();
            for i in 0..5 {
                let sum: f64 = c.attn.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                for col in 0..8 {
                    let vals = (0..7).map(|j| c.t.get(j, col));
                    let lo = vals.clone().fold(f64::INFINITY, f64::min);
                    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                    let o = c.output.get(i, col);
                    assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn absent_prompt_equals_masked_prompt() {
        let w = AlignerWeights::init(8, 3, 11).unwrap();
        let img = rand_matrix(12, 5, 8);
        let txt = rand_matrix(13, 2, 8);
        let vp = rand_matrix(14, 2, 8);
        let absent = aligner_forward(&img, &txt, &Matrix::zeros(0, 8), &w).unwrap();
        let masked = aligner_forward_masked(&img, &txt, &vp, &w, false).unwrap();
        assert_eq!(absent, masked);
        let present = aligner_forward_masked(&img, &txt, &vp, &w, true).unwrap();
        assert_eq!(present, aligner_forward(&img, &txt, &vp, &w).unwrap());
        assert_ne!(present, absent);
    }

    #[test]
    fn dimension_errors() {
        let w = AlignerWeights::init(8, 3, 0).unwrap();
        let bad = Matrix::zeros(2, 4);
        let ok = Matrix::zeros(2, 8);
        assert!(matches!(
            aligner_forward(&ok, &bad, &Matrix::zeros(0, 8), &w),
            Err(AlignerError::DimMismatch { .. })
        ));
        let empty = Matrix::zeros(0, 8);
        assert_eq!(
            aligner_forward(&empty, &empty, &empty, &w),
            Err(AlignerError::NoKeys)
        );
        assert_eq!(
            AlignerWeights::new(
                Matrix::zeros(4, 4),
                Matrix::zeros(4, 4),
                Matrix::zeros(4, 4),
                Matrix::zeros(4, 4),
                Matrix::zeros(0, 4)
            ),
            Err(AlignerError::NoQueries)
        );
    }
}
