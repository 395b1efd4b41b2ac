//! JSON records for masks, manifests, samples, predictions and knowledge.

use groundkit_core::forge::{
    ImageRecord, KnowledgeEntry, KnowledgeSource, LabeledMask, Modality, Perspective, Sample,
    VisualPrompt,
};
use groundkit_core::{parse_grounded, BinaryMask, BoundingBox, MaskError, ParseMode, Point};
use serde::{Deserialize, Serialize};

/// Row-major run-length mask; the first run counts zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleRecord {
    pub h: usize,
    pub w: usize,
    pub runs: Vec<u64>,
}

impl From<&BinaryMask> for RleRecord {
    fn from(m: &BinaryMask) -> Self {
        Self {
            h: m.height(),
            w: m.width(),
            runs: m.rle_encode(),
        }
    }
}

impl RleRecord {
    pub fn to_mask(&self) -> Result<BinaryMask, MaskError> {
        BinaryMask::rle_decode(&self.runs, self.h, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PromptRecord {
    Point {
        x: usize,
        y: usize,
    },
    Box {
        x_min: usize,
        y_min: usize,
        x_max: usize,
        y_max: usize,
    },
}

impl From<&VisualPrompt> for PromptRecord {
    fn from(v: &VisualPrompt) -> Self {
        match *v {
            VisualPrompt::Point(p) => PromptRecord::Point { x: p.x, y: p.y },
            VisualPrompt::Box(b) => PromptRecord::Box {
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
            },
        }
    }
}

impl From<PromptRecord> for VisualPrompt {
    fn from(r: PromptRecord) -> Self {
        match r {
            PromptRecord::Point { x, y } => VisualPrompt::Point(Point { x, y }),
            PromptRecord::Box {
                x_min,
                y_min,
                x_max,
                y_max,
            } => VisualPrompt::Box(BoundingBox::new(x_min, y_min, x_max, y_max)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMaskRecord {
    pub label: String,
    pub mask: RleRecord,
}

/// One manifest line: an image and its labelled masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(alias = "image", alias = "image_path")]
    pub image_ref: String,
    pub modality: String,
    pub masks: Vec<LabeledMaskRecord>,
}

impl ManifestRecord {
    pub fn to_image(&self) -> Result<ImageRecord, String> {
        let modality: Modality = self.modality.parse().map_err(|e| format!("{e}"))?;
        let masks = self
            .masks
            .iter()
            .map(|m| {
                Ok(LabeledMask {
                    label: m.label.clone(),
                    mask: m
                        .mask
                        .to_mask()
                        .map_err(|e| format!("mask {:?}: {e}", m.label))?,
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(ImageRecord {
            id: self.id.clone(),
            image_ref: self.image_ref.clone(),
            modality,
            masks,
        })
    }
}

impl From<&ImageRecord> for ManifestRecord {
    fn from(img: &ImageRecord) -> Self {
        Self {
            id: img.id.clone(),
            image_ref: img.image_ref.clone(),
            modality: img.modality.as_str().into(),
            masks: img
                .masks
                .iter()
                .map(|m| LabeledMaskRecord {
                    label: m.label.clone(),
                    mask: (&m.mask).into(),
                })
                .collect(),
        }
    }
}

/// One dataset line. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub image_ref: String,
    pub modality: String,
    pub perspective: String,
    pub query: String,
    #[serde(default)]
    pub visual_prompt: Option<PromptRecord>,
    pub gold: String,
    pub gold_masks: Vec<RleRecord>,
    /// Short reference answer for closed-ended VQA records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        Self {
            id: s.id.clone(),
            image_ref: s.image_ref.clone(),
            modality: s.modality.as_str().into(),
            perspective: s.perspective.as_str().into(),
            query: s.query.clone(),
            visual_prompt: s.visual_prompt.as_ref().map(PromptRecord::from),
            gold: s.gold.serialize(),
            gold_masks: s.gold_masks.iter().map(RleRecord::from).collect(),
            answer: None,
        }
    }
}

impl SampleRecord {
    /// Decodes the record; the gold text must strict-parse.
    pub fn to_sample(&self) -> Result<Sample, String> {
        let gold =
            parse_grounded(&self.gold, ParseMode::Strict).map_err(|e| format!("gold: {e}"))?;
        let gold_masks = self
            .gold_masks
            .iter()
            .map(RleRecord::to_mask)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("gold mask: {e}"))?;
        Ok(Sample {
            id: self.id.clone(),
            image_ref: self.image_ref.clone(),
            modality: self.modality.parse().map_err(|e| format!("{e}"))?,
            perspective: self.perspective()?,
            query: self.query.clone(),
            visual_prompt: self.visual_prompt.map(VisualPrompt::from),
            gold,
            gold_masks,
        })
    }

    pub fn perspective(&self) -> Result<Perspective, String> {
        self.perspective.parse().map_err(|e| format!("{e}"))
    }
}

/// One model output line. Dataset records are accepted as-is: `gold` and
/// `gold_masks` alias `response` and `masks`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(alias = "gold")]
    pub response: String,
    #[serde(default, alias = "gold_masks")]
    pub masks: Vec<RleRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub label: String,
    pub text: String,
    pub source: String,
}

impl KnowledgeRecord {
    pub fn to_entry(&self) -> Result<KnowledgeEntry, String> {
        Ok(KnowledgeEntry {
            label: self.label.clone(),
            text: self.text.clone(),
            source: self
                .source
                .parse::<KnowledgeSource>()
                .map_err(|e| format!("{e}"))?,
        })
    }
}

impl From<&KnowledgeEntry> for KnowledgeRecord {
    fn from(e: &KnowledgeEntry) -> Self {
        Self {
            label: e.label.clone(),
            text: e.text.clone(),
            source: e.source.as_str().into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_line_key_order_is_fixed() {
        let r = SampleRecord {
            id: "a_p2".into(),
            image_ref: "a.png".into(),
            modality: "CT".into(),
            perspective: "p2".into(),
            query: "q".into(),
            visual_prompt: Some(PromptRecord::Point { x: 1, y: 2 }),
            gold: "<p>liver<SEG></p>".into(),
            gold_masks: vec![RleRecord {
                h: 1,
                w: 2,
                runs: vec![1, 1],
            }],
            answer: None,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"id":"a_p2","image_ref":"a.png","modality":"CT","perspective":"p2","query":"q","visual_prompt":{"type":"point","x":1,"y":2},"gold":"<p>liver<SEG></p>","gold_masks":[{"h":1,"w":2,"runs":[1,1]}]}"#
        );
        let s = r.to_sample().unwrap();
        assert_eq!(SampleRecord::from(&s), r);
    }

    #[test]
    fn sample_parses_as_prediction() {
        let line = r#"{"id":"x","image_ref":"i","modality":"MRI","perspective":"p1","query":"q","visual_prompt":null,"gold":"ok","gold_masks":[]}"#;
        let p: PredictionRecord = serde_json::from_str(line).unwrap();
        assert_eq!(p.response, "ok");
        assert!(p.masks.is_empty());
    }

    #[test]
    fn manifest_aliases() {
        let line = r#"{"id":"m","image":"m.png","modality":"x-ray","masks":[{"label":"lung","mask":{"h":2,"w":2,"runs":[0,4]}}]}"#;
        let m: ManifestRecord = serde_json::from_str(line).unwrap();
        let img = m.to_image().unwrap();
        assert_eq!(img.modality, Modality::XRay);
        assert_eq!(img.masks[0].mask.count(), 4);
        let bad = r#"{"id":"m","image_ref":"m.png","modality":"CT","masks":[{"label":"lung","mask":{"h":2,"w":2,"runs":[1]}}]}"#;
        let m: ManifestRecord = serde_json::from_str(bad).unwrap();
        assert!(m.to_image().is_err());
    }
}
