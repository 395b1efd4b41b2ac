//! Mask-level metrics: mIoU, AP50 and grounding F1.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grounded::GroundedResponse;
use crate::mask::{iou, iou_ratio, BinaryMask, MaskError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("no inputs to average")]
    EmptyInput,
    #[error("{0} masks supplied for {1} entity slots")]
    SlotMismatch(usize, usize),
    #[error("{0} predictions but {1} references")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// A grounded response together with one mask per entity slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedPrediction {
    response: GroundedResponse,
    masks: Vec<BinaryMask>,
}

impl GroundedPrediction {
    pub fn new(response: GroundedResponse, masks: Vec<BinaryMask>) -> Result<Self, MetricError> {
        if masks.len() != response.entity_count() {
            return Err(MetricError::SlotMismatch(
                masks.len(),
                response.entity_count(),
            ));
        }
        Ok(Self { response, masks })
    }

    pub fn response(&self) -> &GroundedResponse {
        &self.response
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }
}

/// IoU threshold; `strict` selects `>` instead of `>=`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouThreshold {
    pub value: f64,
    pub strict: bool,
}

impl IouThreshold {
    /// `IoU >= 0.5`, used by AP50.
    pub const AP50: Self = Self {
        value: 0.5,
        strict: false,
    };
    /// `IoU > 0.5`, used by grounding F1.
    pub const GROUNDING: Self = Self {
        value: 0.5,
        strict: true,
    };

    /// Compares the exact ratio `num/den` against the threshold.
    pub fn passes(&self, num: u64, den: u64) -> bool {
        let lhs = num as f64;
        let rhs = self.value * den as f64;
        if self.strict {
            lhs > rhs
        } else {
            lhs >= rhs
        }
    }
}

pub fn miou(pairs: &[(BinaryMask, BinaryMask)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut sum = 0.0;
    for (p, g) in pairs {
        sum += iou(p, g)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Matched count under greedy one-to-one matching in descending IoU order.
/// Ties are broken by prediction index, then gold index.
pub fn greedy_match_count(
    preds: &[BinaryMask],
    golds: &[BinaryMask],
    threshold: IouThreshold,
) -> Result<usize, MaskError> {
    let mut cands: Vec<(u64, u64, usize, usize)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in golds.iter().enumerate() {
            let (n, d) = iou_ratio(p, g)?;
            if threshold.passes(n, d) {
                cands.push((n, d, i, j));
            }
        }
    }
    // Descending n1/d1 via cross-multiplication.
    cands.sort_by(|a, b| {
        let lhs = u128::from(b.0) * u128::from(a.1);
        let rhs = u128::from(a.0) * u128::from(b.1);
        lhs.cmp(&rhs).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gold_used = vec![false; golds.len()];
    let mut matched = 0;
    for (_, _, i, j) in cands {
        if !pred_used[i] && !gold_used[j] {
            pred_used[i] = true;
            gold_used[j] = true;
            matched += 1;
        }
    }
    Ok(matched)
}

/// AP50 without confidence scores: `matched / max(|preds|, |golds|)` where
/// `matched` comes from [`greedy_match_count`] at `IoU >= 0.5`. Two empty
/// sides score 1.
pub fn ap50(preds: &[BinaryMask], golds: &[BinaryMask]) -> Result<f64, MaskError> {
    let denom = preds.len().max(golds.len());
    if denom == 0 {
        return Ok(1.0);
    }
    let matched = greedy_match_count(preds, golds, IouThreshold::AP50)?;
    Ok(matched as f64 / denom as f64)
}

/// Lowercase plus whitespace collapse; the comparison key for entity phrases.
pub fn normalize_phrase(s: &str) -> String {
    let lower = s.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for w in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Size of a maximum matching in a bipartite graph given as adjacency lists
/// from left vertices to right vertices (augmenting paths).
pub fn max_bipartite_matching(adj: &[Vec<usize>], right_len: usize) -> usize {
    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; right_len];
    let mut size = 0;
    for u in 0..adj.len() {
        let mut seen = vec![false; right_len];
        if augment(u, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// Raw grounding counts: `a` predicted entities, `b` gold entities, `e`
/// correct pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroundingCounts {
    pub e: u64,
    pub a: u64,
    pub b: u64,
}

impl GroundingCounts {
    pub fn precision(&self) -> f64 {
        ratio_or_zero(self.e, self.a)
    }

    pub fn recall(&self) -> f64 {
        ratio_or_zero(self.e, self.b)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio_or_zero(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Edges of the grounding graph: pred entity `i` may pair with gold entity
/// `j` when their normalized phrases are equal and the slot masks overlap
/// with `IoU > 0.5` (or whatever `threshold` demands).
pub fn grounding_edges(
    pred: &GroundedPrediction,
    gold: &GroundedPrediction,
    threshold: IouThreshold,
) -> Result<Vec<Vec<usize>>, MaskError> {
    let gold_keys: Vec<String> = gold
        .response
        .entities()
        .map(|e| normalize_phrase(e.phrase()))
        .collect();
    let mut adj = Vec::with_capacity(pred.response.entity_count());
    for pe in pred.response.entities() {
        let key = normalize_phrase(pe.phrase());
        let mut row = Vec::new();
        for (j, ge) in gold.response.entities().enumerate() {
            if gold_keys[j] != key {
                continue;
            }
            let (n, d) = iou_ratio(&pred.masks[pe.slot()], &gold.masks[ge.slot()])?;
            if threshold.passes(n, d) {
                row.push(j);
            }
        }
        adj.push(row);
    }
    Ok(adj)
}

pub fn grounding_counts(
    pred: &GroundedPrediction,
    gold: &GroundedPrediction,
    threshold: IouThreshold,
) -> Result<GroundingCounts, MaskError> {
    let adj = grounding_edges(pred, gold, threshold)?;
    let e = max_bipartite_matching(&adj, gold.response.entity_count());
    Ok(GroundingCounts {
        e: e as u64,
        a: pred.response.entity_count() as u64,
        b: gold.response.entity_count() as u64,
    })
}

/// `(precision, recall, f1)` with precision `E/A` and recall `E/B`; each is
/// 0 when its denominator is 0.
pub fn grounding_f1(
    pred: &GroundedPrediction,
    gold: &GroundedPrediction,
) -> Result<(f64, f64, f64), MaskError> {
    let c = grounding_counts(pred, gold, IouThreshold::GROUNDING)?;
    Ok((c.precision(), c.recall(), c.f1()))
}

/// Slot-aligned IoUs for mIoU: slot `i` of the prediction against slot `i`
/// of the gold, for every slot present on either side. A slot missing on one
/// side counts as an empty mask there.
pub fn slot_ious(pred: &[BinaryMask], gold: &[BinaryMask]) -> Result<Vec<f64>, MaskError> {
    let n = pred.len().max(gold.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = match (pred.get(i), gold.get(i)) {
            (Some(p), Some(g)) => iou(p, g)?,
            (Some(m), None) | (None, Some(m)) => {
                if m.is_empty() {
                    1.0
                } else {
                    0.0
                }
            }
            (None, None) => unreachable!(),
        };
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounded::{parse_grounded, ParseMode};

    fn block(x0: usize, x1: usize) -> BinaryMask {
        BinaryMask::from_fn(4, 8, |x, _| (x0..x1).contains(&x)).unwrap()
    }

    fn gp(text: &str, masks: Vec<BinaryMask>) -> GroundedPrediction {
        GroundedPrediction::new(parse_grounded(text, ParseMode::Strict).unwrap(), masks).unwrap()
    }

    #[test]
    fn miou_cases() {
        let m = block(0, 4);
        assert_eq!(miou(&[(m.clone(), m.clone())]).unwrap(), 1.0);
        assert_eq!(
            miou(&[(m.clone(), m.clone()), (m.clone(), m.complement())]).unwrap(),
            0.5
        );
        assert_eq!(miou(&[]), Err(MetricError::EmptyInput));
    }

    #[test]
    fn ap50_cases() {
        let golds = [block(0, 2), block(3, 5), block(6, 8)];
        assert_eq!(ap50(&golds, &golds).unwrap(), 1.0);
        let disjoint = [block(2, 3), block(5, 6)];
        assert_eq!(ap50(&disjoint, &golds).unwrap(), 0.0);
        assert_eq!(ap50(&[], &golds).unwrap(), 0.0);
        assert_eq!(ap50(&[], &[]).unwrap(), 1.0);
        // IoUs 2/4 and 1 match; the third prediction overlaps nothing.
        let preds = [block(0, 4), block(3, 5), block(5, 6)];
        assert_eq!(ap50(&preds, &golds).unwrap(), 2.0 / 3.0);
        let shifted = [block(1, 3)];
        // IoU 1/3 < 0.5
        assert_eq!(ap50(&shifted, &golds[..1]).unwrap(), 0.0);
    }

    #[test]
    fn f1_identity_and_empty() {
        let a = gp(
            "<p>liver<SEG></p> and <p>spleen<SEG></p>",
            vec![block(0, 2), block(4, 6)],
        );
        assert_eq!(grounding_f1(&a, &a).unwrap(), (1.0, 1.0, 1.0));
        let none = gp("no findings", vec![]);
        assert_eq!(grounding_f1(&none, &a).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_one_valid_of_three() {
        let pred = gp(
            "<p>Liver<SEG></p>, <p>spleen<SEG></p>, <p>kidney<SEG></p>",
            vec![block(0, 2), block(0, 2), block(6, 8)],
        );
        let gold = gp(
            "<p>liver<SEG></p> <p>spleen<SEG></p>",
            vec![block(0, 2), block(4, 6)],
        );
        let (p, r, f) = grounding_f1(&pred, &gold).unwrap();
        assert_eq!((p, r), (1.0 / 3.0, 0.5));
        assert!((f - 0.4).abs() < 1e-15);
    }

    #[test]
    fn f1_iou_exactly_half_does_not_count() {
        let pred = gp("<p>liver<SEG></p>", vec![block(0, 2)]);
        let gold = gp("<p>liver<SEG></p>", vec![block(0, 4)]);
        assert_eq!(grounding_f1(&pred, &gold).unwrap().0, 0.0);
        assert_eq!(ap50(&[block(0, 2)], &[block(0, 4)]).unwrap(), 1.0);
    }

    #[test]
    fn phrase_normalization() {
        assert_eq!(normalize_phrase("  Adrenal \t Medulla "), "adrenal medulla");
    }

    #[test]
    fn slot_mismatch_rejected() {
        let r = parse_grounded("<p>a<SEG></p>", ParseMode::Strict).unwrap();
        assert_eq!(
            GroundedPrediction::new(r, vec![]),
            Err(MetricError::SlotMismatch(0, 1))
        );
    }

    #[test]
    fn slot_iou_missing_side() {
        let v = slot_ious(&[block(0, 2)], &[block(0, 2), block(2, 4)]).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
    }
}
