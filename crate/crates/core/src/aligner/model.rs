//! Toy end-to-end chain: prompt encoder, aligner, seg-token decoder and the
//! composite loss, with a hand-derived backward pass.
//!
//! The seg token is the mean of the aligner output rows. The text term is
//! either a cross-entropy over `output · w_text` with one target token per
//! query, or a supplied constant.

use alloc::string::String;
use alloc::vec::Vec;

use super::attention::{attend, uniform_matrix, AlignerWeights, AttentionCache};
use super::decode::{decode_logits, sigmoid};
use super::encode::{
    encode_prompt, PromptEncoderParams, BOTTOM_RIGHT_TYPE, POINT_TYPE, PROMPT_TYPES, TOP_LEFT_TYPE,
};
use super::matrix::{Embedding, Matrix};
use super::AlignerError;
use crate::forge::VisualPrompt;
use crate::mask::{bce_loss, dice_loss, total_loss, BinaryMask, LossWeights, SoftMask, BCE_EPS};
use crate::seed;

pub const W_Q: &str = "w_q";
pub const W_K: &str = "w_k";
pub const W_V: &str = "w_v";
pub const W_O: &str = "w_o";
pub const QUERIES: &str = "queries";
pub const PROMPT_TYPE_EMB: &str = "prompt_types";
pub const PROJ: &str = "proj";
pub const W_TEXT: &str = "w_text";

/// Named matrices in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Matrix)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces `name`.
    pub fn insert(&mut self, name: &str, m: Matrix) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(e) => e.1 = m,
            None => self.entries.push((name.into(), m)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Matrix, AlignerError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| AlignerError::UnknownParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix, AlignerError> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| AlignerError::UnknownParam(name.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, m)| (n.clone(), Matrix::zeros(m.rows(), m.cols())))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Model width; a multiple of 4.
    pub d: usize,
    pub n_q: usize,
    pub d_dec: usize,
    pub vocab: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d: 32,
            n_q: 32,
            d_dec: 16,
            vocab: 16,
        }
    }
}

/// Seeded init, every entry uniform in `[-1/√d, 1/√d]`.
pub fn init_params(dims: ModelDims, seed: u64) -> ParamSet {
    let mut rng = seed::rng(seed);
    let d = dims.d;
    let mut p = ParamSet::new();
    for (name, rows, cols) in [
        (W_Q, d, d),
        (W_K, d, d),
        (W_V, d, d),
        (W_O, d, d),
        (QUERIES, dims.n_q, d),
        (PROMPT_TYPE_EMB, PROMPT_TYPES, d),
        (PROJ, d, dims.d_dec),
        (W_TEXT, d, dims.vocab),
    ] {
        p.insert(name, uniform_matrix(&mut rng, rows, cols, d));
    }
    p
}

pub fn aligner_weights(p: &ParamSet) -> Result<AlignerWeights, AlignerError> {
    AlignerWeights::new(
        p.get(W_Q)?.clone(),
        p.get(W_K)?.clone(),
        p.get(W_V)?.clone(),
        p.get(W_O)?.clone(),
        p.get(QUERIES)?.clone(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextTarget {
    /// One target token id per query row.
    Tokens(Vec<usize>),
    Constant(f64),
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x_img: Embedding,
    pub x_qt: Embedding,
    pub prompt: Option<VisualPrompt>,
    /// Image size the prompt coordinates refer to.
    pub image_height: usize,
    pub image_width: usize,
    /// Decoder features, one row per pixel of `gold`.
    pub features: Embedding,
    pub gold: BinaryMask,
    pub text: TextTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub dice_smooth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            dice_smooth: crate::mask::DEFAULT_DICE_SMOOTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub text: f64,
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

struct Forward {
    cache: AttentionCache,
    r_seg: Vec<f64>,
    probs: Vec<f64>,
    /// Softmax over the text head, when the text target is tokens.
    text_probs: Option<Matrix>,
    loss: LossBreakdown,
}

fn prompt_rows(ex: &Example, p: &ParamSet, d: usize) -> Result<Embedding, AlignerError> {
    match &ex.prompt {
        Some(vp) => {
            let enc = PromptEncoderParams::new(p.get(PROMPT_TYPE_EMB)?.clone())?;
            encode_prompt(vp, ex.image_height, ex.image_width, &enc)
        }
        None => Ok(Matrix::zeros(0, d)),
    }
}

fn forward(ex: &Example, p: &ParamSet, cfg: &LossConfig) -> Result<Forward, AlignerError> {
    let w = aligner_weights(p)?;
    let d = w.dim();
    let x_qv = prompt_rows(ex, p, d)?;
    for m in [&ex.x_img, &ex.x_qt] {
        if m.rows() > 0 && m.cols() != d {
            return Err(AlignerError::DimMismatch {
                op: "aligner input",
                expected: d,
                got: m.cols(),
            });
        }
    }
    let x = Matrix::vstack(&[&ex.x_img, &ex.x_qt, &x_qv])?;
    let cache = attend(&x, &w, None)?;
    let r_seg = cache.output.row_mean();

    let st = super::decode::SegTokenState::new(r_seg.clone(), p.get(PROJ)?.clone())?;
    let (h, wd) = (ex.gold.height(), ex.gold.width());
    if ex.features.rows() != h * wd {
        return Err(AlignerError::DimMismatch {
            op: "feature grid",
            expected: h * wd,
            got: ex.features.rows(),
        });
    }
    let probs: Vec<f64> = decode_logits(&ex.features, &st)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let soft = SoftMask::new(h, wd, probs.clone())?;
    let bce = bce_loss(&soft, &ex.gold)?;
    let dice = dice_loss(&soft, &ex.gold, cfg.dice_smooth)?;

    let (text, text_probs) = match &ex.text {
        TextTarget::Constant(c) => (*c, None),
        TextTarget::Tokens(targets) => {
            let logits = cache.output.matmul(p.get(W_TEXT)?)?;
            if targets.len() != logits.rows() {
                return Err(AlignerError::DimMismatch {
                    op: "text targets",
                    expected: logits.rows(),
                    got: targets.len(),
                });
            }
            if let Some(&t) = targets.iter().find(|&&t| t >= logits.cols()) {
                return Err(AlignerError::TokenOutOfRange(t));
            }
            let sm = super::attention::softmax_rows(&logits, None);
            let mut ce = 0.0;
            for (i, &t) in targets.iter().enumerate() {
                ce -= libm::log(sm.get(i, t));
            }
            (ce / targets.len() as f64, Some(sm))
        }
    };
    let total = total_loss(text, bce, dice, &cfg.weights);
    if !total.is_finite() {
        return Err(AlignerError::NonFinite);
    }
    Ok(Forward {
        cache,
        r_seg,
        probs,
        text_probs,
        loss: LossBreakdown {
            text,
            bce,
            dice,
            total,
        },
    })
}

/// Loss of a single example.
pub fn example_loss(
    ex: &Example,
    p: &ParamSet,
    cfg: &LossConfig,
) -> Result<LossBreakdown, AlignerError> {
    Ok(forward(ex, p, cfg)?.loss)
}

/// Mean total loss over the batch, summed in batch order.
pub fn forward_loss(
    batch: &[Example],
    p: &ParamSet,
    cfg: &LossConfig,
) -> Result<f64, AlignerError> {
    if batch.is_empty() {
        return Err(AlignerError::EmptyBatch);
    }
    let mut sum = 0.0;
    for ex in batch {
        sum += example_loss(ex, p, cfg)?.total;
    }
    Ok(sum / batch.len() as f64)
}

/// Batch loss and its gradient with respect to every parameter.
pub fn forward_backward(
    batch: &[Example],
    p: &ParamSet,
    cfg: &LossConfig,
) -> Result<(f64, ParamSet), AlignerError> {
    if batch.is_empty() {
        return Err(AlignerError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = p.zeros_like();
    let mut sum = 0.0;
    for ex in batch {
        let f = forward(ex, p, cfg)?;
        sum += f.loss.total;
        backward(ex, p, cfg, &f, scale, &mut grads)?;
    }
    Ok((sum * scale, grads))
}

fn backward(
    ex: &Example,
    p: &ParamSet,
    cfg: &LossConfig,
    f: &Forward,
    scale: f64,
    g: &mut ParamSet,
) -> Result<(), AlignerError> {
    let lw = cfg.weights;
    let c = &f.cache;
    let n_px = f.probs.len();
    let nq = c.output.rows();
    let d = c.output.cols();

    // Mask logits: BCE gives (p - t)/P unless the probability was clamped;
    // Dice gives dL/dp · p(1 - p).
    let gold = ex.gold.bits();
    let (mut pt, mut ps, mut ts) = (0.0, 0.0, 0.0);
    for (&pr, &t) in f.probs.iter().zip(gold) {
        let t = if t { 1.0 } else { 0.0 };
        pt += pr * t;
        ps += pr;
        ts += t;
    }
    let num = 2.0 * pt + cfg.dice_smooth;
    let den = ps + ts + cfg.dice_smooth;
    let mut dz = alloc::vec![0.0; n_px];
    for (i, (&pr, &t)) in f.probs.iter().zip(gold).enumerate() {
        let t = if t { 1.0 } else { 0.0 };
        let mut g_i = 0.0;
        if (BCE_EPS..=1.0 - BCE_EPS).contains(&pr) {
            g_i += lw.lambda_bce * (pr - t) / n_px as f64;
        }
        if den != 0.0 {
            let dl_dp = -(2.0 * t * den - num) / (den * den);
            g_i += lw.lambda_dice * dl_dp * pr * (1.0 - pr);
        }
        dz[i] = g_i * scale;
    }

    // z = F · (r · proj)
    let proj = p.get(PROJ)?;
    let de = ex.features.vec_mul(&dz)?;
    {
        let gp = g.get_mut(PROJ)?;
        for (k, r) in f.r_seg.iter().enumerate() {
            for (gv, e) in gp.row_mut(k).iter_mut().zip(&de) {
                *gv += r * e;
            }
        }
    }
    let dr = proj.mul_vec(&de)?;

    // r = mean of output rows
    let mut d_out = Matrix::from_fn(nq, d, |_, col| dr[col] / nq as f64);

    if let (TextTarget::Tokens(targets), Some(sm)) = (&ex.text, &f.text_probs) {
        let mut dlogits = sm.clone();
        for (i, &t) in targets.iter().enumerate() {
            dlogits.set(i, t, dlogits.get(i, t) - 1.0);
        }
        dlogits.scale(lw.lambda_text * scale / nq as f64);
        g.get_mut(W_TEXT)?
            .add_assign(&c.output.t_matmul(&dlogits)?)?;
        d_out.add_assign(&dlogits.matmul_t(p.get(W_TEXT)?)?)?;
    }

    // output = A · T, T = V · W_o, V = X · W_v
    let w_o = p.get(W_O)?;
    let w_v = p.get(W_V)?;
    let da = d_out.matmul_t(&c.t)?;
    let dt = c.attn.t_matmul(&d_out)?;
    g.get_mut(W_O)?.add_assign(&c.v.t_matmul(&dt)?)?;
    let dv = dt.matmul_t(w_o)?;
    g.get_mut(W_V)?.add_assign(&c.x.t_matmul(&dv)?)?;
    let mut dx = dv.matmul_t(w_v)?;

    // A = softmax(S), S = Q · Kᵀ / √d
    let mut ds = Matrix::zeros(da.rows(), da.cols());
    for i in 0..da.rows() {
        let a = c.attn.row(i);
        let gda = da.row(i);
        let mut inner = 0.0;
        for (x, y) in a.iter().zip(gda) {
            inner += x * y;
        }
        for (j, o) in ds.row_mut(i).iter_mut().enumerate() {
            *o = a[j] * (gda[j] - inner);
        }
    }
    ds.scale(1.0 / libm::sqrt(d as f64));
    let dq = ds.matmul(&c.k)?;
    let dk = ds.t_matmul(&c.q)?;

    // Q = queries · W_q, K = X · W_k
    let queries = p.get(QUERIES)?;
    g.get_mut(W_Q)?.add_assign(&queries.t_matmul(&dq)?)?;
    g.get_mut(QUERIES)?.add_assign(&dq.matmul_t(p.get(W_Q)?)?)?;
    g.get_mut(W_K)?.add_assign(&c.x.t_matmul(&dk)?)?;
    dx.add_assign(&dk.matmul_t(p.get(W_K)?)?)?;

    // Prompt rows are positional encoding plus a type embedding.
    if let Some(vp) = &ex.prompt {
        let types: &[usize] = match vp {
            VisualPrompt::Point(_) => &[POINT_TYPE],
            VisualPrompt::Box(_) => &[TOP_LEFT_TYPE, BOTTOM_RIGHT_TYPE],
        };
        let offset = dx.rows() - types.len();
        let gt = g.get_mut(PROMPT_TYPE_EMB)?;
        for (r, &ty) in types.iter().enumerate() {
            for (gv, v) in gt.row_mut(ty).iter_mut().zip(dx.row(offset + r)) {
                *gv += v;
            }
        }
    }
    Ok(())
}
