//! Prediction-vs-gold evaluation over JSONL files, sharded across workers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use groundkit_core::forge::remove_markers;
use groundkit_core::metrics::{FinalMetrics, GroundedPrediction, MetricReport};
use groundkit_core::{parse_grounded, BinaryMask, GroundedResponse, ParseMode};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::wire::{PredictionRecord, RleRecord, SampleRecord};

/// Overall and per-perspective partial sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub overall: MetricReport,
    pub per_perspective: BTreeMap<String, MetricReport>,
    /// Predictions that failed to parse and were scored as plain text with
    /// no entities.
    pub parse_failures: u64,
}

impl EvalReport {
    pub fn merge(&mut self, other: &Self) {
        self.overall
            .merge(&other.overall)
            .expect("reports share the default config");
        for (p, r) in &other.per_perspective {
            self.per_perspective
                .entry(p.clone())
                .or_default()
                .merge(r)
                .expect("reports share the default config");
        }
        self.parse_failures += other.parse_failures;
    }

    pub fn to_json(&self) -> Value {
        json!({
            "overall": metrics_json(&self.overall.finalize()),
            "per_perspective": self
                .per_perspective
                .iter()
                .map(|(p, r)| (p.clone(), metrics_json(&r.finalize())))
                .collect::<serde_json::Map<_, _>>(),
            "parse_failures": self.parse_failures,
        })
    }
}

pub fn metrics_json(m: &FinalMetrics) -> Value {
    json!({
        "samples": m.samples,
        "miou": m.miou,
        "ap50": m.ap50,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "bleu4": m.bleu4,
        "rouge_l": m.rouge_l,
        "meteor": m.meteor,
        "vqa_accuracy": m.vqa_accuracy,
        "counts": {
            "iou_pairs": m.iou_pairs,
            "correct_pairs": m.e,
            "predicted_entities": m.a,
            "gold_entities": m.b,
            "vqa_total": m.vqa_total,
        },
    })
}

/// Gold records paired with their predictions, in gold order.
pub type Aligned<'a> = Vec<(&'a SampleRecord, &'a PredictionRecord)>;

/// Pairs records by id. Any orphan on either side is an
/// [`Error::IdMismatch`]; duplicate ids are input errors.
pub fn align<'a>(gold: &'a [SampleRecord], preds: &'a [PredictionRecord]) -> Result<Aligned<'a>> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(&p.id, p).is_some() {
            return Err(Error::Input(format!("duplicate prediction id {:?}", p.id)));
        }
    }
    let mut seen = BTreeSet::new();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(Error::Input(format!("duplicate gold id {:?}", g.id)));
        }
        match by_id.get(g.id.as_str()) {
            Some(p) => pairs.push((g, *p)),
            None => missing.push(g.id.clone()),
        }
    }
    let unexpected: Vec<String> = preds
        .iter()
        .filter(|p| !seen.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::IdMismatch {
            missing,
            unexpected,
        });
    }
    Ok(pairs)
}

fn masks(id: &str, records: &[RleRecord]) -> Result<Vec<BinaryMask>> {
    records
        .iter()
        .map(|r| r.to_mask().map_err(|e| Error::Input(format!("{id}: {e}"))))
        .collect()
}

fn add_pair(
    report: &mut EvalReport,
    gold: &SampleRecord,
    pred: &PredictionRecord,
    mode: ParseMode,
) -> Result<()> {
    let id = &gold.id;
    let gold_resp = parse_grounded(&gold.gold, ParseMode::Strict)
        .map_err(|e| Error::Input(format!("{id}: gold response: {e}")))?;
    let gold_pred = GroundedPrediction::new(gold_resp, masks(id, &gold.gold_masks)?)
        .map_err(|e| Error::Input(format!("{id}: gold: {e}")))?;

    let (resp, pred_masks) = match parse_grounded(&pred.response, mode) {
        Ok(r) => (r, masks(id, &pred.masks)?),
        Err(_) => {
            report.parse_failures += 1;
            let mut r = GroundedResponse::new();
            r.push_text(&remove_markers(&pred.response))
                .expect("markers removed");
            (r, Vec::new())
        }
    };
    let pred_pred = GroundedPrediction::new(resp, pred_masks)
        .map_err(|e| Error::Input(format!("{id}: prediction: {e}")))?;

    let per = report
        .per_perspective
        .entry(gold.perspective.clone())
        .or_default();
    for r in [&mut report.overall, per] {
        r.add_grounded(&pred_pred, &gold_pred)
            .map_err(|e| Error::Input(format!("{id}: {e}")))?;
        if let Some(answer) = &gold.answer {
            let predicted = pred
                .answer
                .clone()
                .unwrap_or_else(|| pred_pred.response().strip_markup());
            r.add_vqa(&predicted, answer);
        }
    }
    Ok(())
}

pub fn evaluate_serial(
    pairs: &[(&SampleRecord, &PredictionRecord)],
    mode: ParseMode,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (g, p) in pairs {
        add_pair(&mut report, g, p, mode)?;
    }
    Ok(report)
}

/// Splits `pairs` into `shards` contiguous pieces, evaluates them in
/// parallel and merges in shard order.
pub fn evaluate(
    pairs: &[(&SampleRecord, &PredictionRecord)],
    mode: ParseMode,
    shards: usize,
) -> Result<EvalReport> {
    let shards = shards.max(1);
    let size = pairs.len().div_ceil(shards).max(1);
    let parts: Vec<Result<EvalReport>> = pairs
        .par_chunks(size)
        .map(|chunk| evaluate_serial(chunk, mode))
        .collect();
    let mut report = EvalReport::default();
    for part in parts {
        report.merge(&part?);
    }
    Ok(report)
}
