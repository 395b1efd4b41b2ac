//! Evaluation metrics and the mergeable [`MetricReport`].

mod segmentation;
mod text;

pub use segmentation::*;
pub use text::*;

use crate::mask::MaskError;

/// Sum of values in `[0, 1]` kept in 64.64 fixed point.
///
/// Integer addition is associative, so any sharding of the same values
/// produces the same sum bit for bit. Each value is rounded to the nearest
/// multiple of 2^-64 on entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FixedSum {
    raw: u128,
    count: u64,
}

const ONE: f64 = 18_446_744_073_709_551_616.0; // 2^64

impl FixedSum {
    pub fn add(&mut self, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v), "{v}");
        let v = v.clamp(0.0, 1.0);
        self.raw += libm::round(v * ONE) as u128;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.raw += other.raw;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn raw(&self) -> u128 {
        self.raw
    }

    pub fn from_raw(raw: u128, count: u64) -> Self {
        Self { raw, count }
    }

    pub fn mean(&self) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let whole = self.raw >> 64;
        let frac = (self.raw & u128::from(u64::MAX)) as f64 / ONE;
        Some((whole as f64 + frac) / self.count as f64)
    }
}

/// Settings that must agree for two reports to be merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub ap_threshold: IouThreshold,
    pub grounding_threshold: IouThreshold,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            ap_threshold: IouThreshold::AP50,
            grounding_threshold: IouThreshold::GROUNDING,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("metric reports were built with different configurations")]
pub struct ConfigMismatch;

/// Partial sums for every metric. Add samples, merge shards, then
/// [`finalize`](MetricReport::finalize).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub config: MetricConfig,
    pub samples: u64,
    pub iou: FixedSum,
    pub ap50_matched: u64,
    pub ap50_pred_total: u64,
    pub ap50_gold_total: u64,
    pub grounding: GroundingCounts,
    pub bleu4: FixedSum,
    pub rouge_l: FixedSum,
    pub meteor: FixedSum,
    pub vqa_correct: u64,
    pub vqa_total: u64,
}

impl Default for MetricReport {
    fn default() -> Self {
        Self::new(MetricConfig::default())
    }
}

impl MetricReport {
    pub fn new(config: MetricConfig) -> Self {
        Self {
            config,
            samples: 0,
            iou: FixedSum::default(),
            ap50_matched: 0,
            ap50_pred_total: 0,
            ap50_gold_total: 0,
            grounding: GroundingCounts::default(),
            bleu4: FixedSum::default(),
            rouge_l: FixedSum::default(),
            meteor: FixedSum::default(),
            vqa_correct: 0,
            vqa_total: 0,
        }
    }

    /// Accumulates one grounded prediction against its gold: slot-aligned
    /// IoUs, AP50 counts, grounding counts and text metrics on the
    /// marker-free text.
    pub fn add_grounded(
        &mut self,
        pred: &GroundedPrediction,
        gold: &GroundedPrediction,
    ) -> Result<(), MaskError> {
        let ious = slot_ious(pred.masks(), gold.masks())?;
        let matched = greedy_match_count(pred.masks(), gold.masks(), self.config.ap_threshold)?;
        let counts = grounding_counts(pred, gold, self.config.grounding_threshold)?;

        for v in ious {
            self.iou.add(v);
        }
        self.ap50_matched += matched as u64;
        self.ap50_pred_total += pred.masks().len() as u64;
        self.ap50_gold_total += gold.masks().len() as u64;
        self.grounding.e += counts.e;
        self.grounding.a += counts.a;
        self.grounding.b += counts.b;

        let cand = pred.response().strip_markup();
        let reference = gold.response().strip_markup();
        self.bleu4.add(bleu4(&cand, &[&reference]));
        self.rouge_l.add(rouge_l(&cand, &reference));
        self.meteor.add(meteor_lite(&cand, &reference));
        self.samples += 1;
        Ok(())
    }

    pub fn add_vqa(&mut self, pred: &str, gold: &str) {
        self.vqa_total += 1;
        self.vqa_correct += u64::from(vqa_correct(pred, gold));
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), ConfigMismatch> {
        if self.config != other.config {
            return Err(ConfigMismatch);
        }
        self.samples += other.samples;
        self.iou.merge(&other.iou);
        self.ap50_matched += other.ap50_matched;
        self.ap50_pred_total += other.ap50_pred_total;
        self.ap50_gold_total += other.ap50_gold_total;
        self.grounding.e += other.grounding.e;
        self.grounding.a += other.grounding.a;
        self.grounding.b += other.grounding.b;
        self.bleu4.merge(&other.bleu4);
        self.rouge_l.merge(&other.rouge_l);
        self.meteor.merge(&other.meteor);
        self.vqa_correct += other.vqa_correct;
        self.vqa_total += other.vqa_total;
        Ok(())
    }

    pub fn finalize(&self) -> FinalMetrics {
        let ap_den = self.ap50_pred_total.max(self.ap50_gold_total);
        let ap50 = if self.samples == 0 {
            None
        } else if ap_den == 0 {
            Some(1.0)
        } else {
            Some(self.ap50_matched as f64 / ap_den as f64)
        };
        let has_entities = self.grounding.a + self.grounding.b > 0;
        FinalMetrics {
            samples: self.samples,
            miou: self.iou.mean(),
            ap50,
            precision: has_entities.then(|| self.grounding.precision()),
            recall: has_entities.then(|| self.grounding.recall()),
            f1: has_entities.then(|| self.grounding.f1()),
            bleu4: self.bleu4.mean(),
            rouge_l: self.rouge_l.mean(),
            meteor: self.meteor.mean(),
            vqa_accuracy: (self.vqa_total > 0)
                .then(|| self.vqa_correct as f64 / self.vqa_total as f64),
            iou_pairs: self.iou.count(),
            e: self.grounding.e,
            a: self.grounding.a,
            b: self.grounding.b,
            vqa_total: self.vqa_total,
        }
    }
}

pub fn merge_reports(a: &MetricReport, b: &MetricReport) -> Result<MetricReport, ConfigMismatch> {
    let mut out = a.clone();
    out.merge(b)?;
    Ok(out)
}

/// Finalized values; `None` where the denominator is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalMetrics {
    pub samples: u64,
    pub miou: Option<f64>,
    pub ap50: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub bleu4: Option<f64>,
    pub rouge_l: Option<f64>,
    pub meteor: Option<f64>,
    pub vqa_accuracy: Option<f64>,
    pub iou_pairs: u64,
    pub e: u64,
    pub a: u64,
    pub b: u64,
    pub vqa_total: u64,
}
