//! Template-instantiated samples for the P1 and P2 perspectives.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng as _;

use super::templates::{
    fill, split_slot, P1_INSTRUCTIONS, P1_RESPONSES_MULTI, P1_RESPONSES_SINGLE,
    P2_BOX_INSTRUCTIONS, P2_BOX_RESPONSES, P2_POINT_INSTRUCTIONS, P2_POINT_RESPONSES,
};
use super::types::{ImageRecord, LabeledMask, Perspective, PromptKind, Sample, VisualPrompt};
use super::ForgeError;
use crate::grounded::GroundedResponse;
use crate::mask::MaskError;
use crate::metrics::normalize_phrase;
use crate::seed;

/// Indices into the instruction and response template tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateChoice {
    pub instruction: usize,
    pub response: usize,
}

/// Merges masks that share a label (case- and whitespace-insensitive) into
/// their union, keeping the first spelling and first-appearance order.
pub fn group_labels(masks: &[LabeledMask]) -> Result<Vec<LabeledMask>, ForgeError> {
    let mut out: Vec<LabeledMask> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    for lm in masks {
        let key = normalize_phrase(&lm.label);
        if key.is_empty() {
            return Err(ForgeError::EmptyLabels);
        }
        match keys.iter().position(|k| *k == key) {
            Some(i) => out[i].mask = out[i].mask.union(&lm.mask)?,
            None => {
                keys.push(key);
                out.push(lm.clone());
            }
        }
    }
    Ok(out)
}

/// Fills `template` with the labels as grounded entities joined by ", ".
pub fn grounded_from_template(
    template: &str,
    labels: &[&str],
) -> Result<GroundedResponse, ForgeError> {
    let (prefix, suffix) = split_slot(template);
    let mut r = GroundedResponse::new();
    r.push_text(prefix)?;
    for (i, label) in labels.iter().enumerate() {
        if i > 0 {
            r.push_text(", ")?;
        }
        r.push_entity(label)?;
    }
    r.push_text(suffix)?;
    Ok(r)
}

fn sample_id(image: &ImageRecord, p: Perspective) -> String {
    format!("{}_{}", image.id, p)
}

pub fn p1_choice(seed: u64, label_count: usize) -> TemplateChoice {
    let mut rng = seed::rng(seed);
    let responses = if label_count > 1 {
        P1_RESPONSES_MULTI.len()
    } else {
        P1_RESPONSES_SINGLE.len()
    };
    TemplateChoice {
        instruction: rng.gen_range(0..P1_INSTRUCTIONS.len()),
        response: rng.gen_range(0..responses),
    }
}

/// Language-guided segmentation sample with template indices picked from
/// `seed`.
pub fn make_p1_sample(image: &ImageRecord, seed: u64) -> Result<Sample, ForgeError> {
    let groups = group_labels(&image.masks)?;
    make_p1_sample_with(image, p1_choice(seed, groups.len()))
}

pub fn make_p1_sample_with(
    image: &ImageRecord,
    choice: TemplateChoice,
) -> Result<Sample, ForgeError> {
    let groups = group_labels(&image.masks)?;
    if groups.is_empty() {
        return Err(ForgeError::EmptyLabels);
    }
    let labels: Vec<&str> = groups.iter().map(|g| g.label.as_str()).collect();
    let instruction = P1_INSTRUCTIONS
        .get(choice.instruction)
        .ok_or(ForgeError::TemplateIndex(choice.instruction))?;
    let responses: &[&str] = if labels.len() > 1 {
        &P1_RESPONSES_MULTI
    } else {
        &P1_RESPONSES_SINGLE
    };
    let response = responses
        .get(choice.response)
        .ok_or(ForgeError::TemplateIndex(choice.response))?;
    let gold = grounded_from_template(response, &labels)?;
    Ok(Sample {
        id: sample_id(image, Perspective::P1),
        image_ref: image.image_ref.clone(),
        modality: image.modality,
        perspective: Perspective::P1,
        query: fill(instruction, &labels.join(", ")),
        visual_prompt: None,
        gold,
        gold_masks: groups.into_iter().map(|g| g.mask).collect(),
    })
}

/// Visual prompt plus the label groups it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTarget {
    pub prompt: VisualPrompt,
    pub targets: Vec<LabeledMask>,
}

/// Box: tightest box around the union of all non-empty label masks, which
/// are all targets. Point: one non-empty label chosen uniformly, with a
/// uniformly drawn pixel of its mask.
pub fn derive_visual_prompt(
    groups: &[LabeledMask],
    kind: PromptKind,
    seed: u64,
) -> Result<PromptTarget, ForgeError> {
    let nonempty: Vec<&LabeledMask> = groups.iter().filter(|g| !g.mask.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(ForgeError::Mask(MaskError::EmptyMask));
    }
    match kind {
        PromptKind::Box => {
            let mut union = nonempty[0].mask.clone();
            for g in &nonempty[1..] {
                union = union.union(&g.mask)?;
            }
            Ok(PromptTarget {
                prompt: VisualPrompt::Box(union.bbox()?),
                targets: nonempty.into_iter().cloned().collect(),
            })
        }
        PromptKind::Point => {
            let mut rng = seed::rng(seed);
            let target = nonempty[rng.gen_range(0..nonempty.len())];
            let point = target.mask.sample_point(rng.gen())?;
            Ok(PromptTarget {
                prompt: VisualPrompt::Point(point),
                targets: alloc::vec![target.clone()],
            })
        }
    }
}

pub fn p2_choice(seed: u64, kind: PromptKind) -> TemplateChoice {
    let mut rng = seed::rng(seed);
    let (ni, nr) = match kind {
        PromptKind::Box => (P2_BOX_INSTRUCTIONS.len(), P2_BOX_RESPONSES.len()),
        PromptKind::Point => (P2_POINT_INSTRUCTIONS.len(), P2_POINT_RESPONSES.len()),
    };
    TemplateChoice {
        instruction: rng.gen_range(0..ni),
        response: rng.gen_range(0..nr),
    }
}

/// Visual-prompt perceiving sample. Template indices and the prompt itself
/// are drawn from independent streams derived from `seed`.
pub fn make_p2_sample(
    image: &ImageRecord,
    kind: PromptKind,
    seed: u64,
) -> Result<Sample, ForgeError> {
    let choice = p2_choice(seed::derive_seed(seed, "template"), kind);
    make_p2_sample_with(image, kind, choice, seed::derive_seed(seed, "prompt"))
}

pub fn make_p2_sample_with(
    image: &ImageRecord,
    kind: PromptKind,
    choice: TemplateChoice,
    prompt_seed: u64,
) -> Result<Sample, ForgeError> {
    let groups = group_labels(&image.masks)?;
    if groups.is_empty() {
        return Err(ForgeError::EmptyLabels);
    }
    let (instructions, responses): (&[&str], &[&str]) = match kind {
        PromptKind::Box => (&P2_BOX_INSTRUCTIONS, &P2_BOX_RESPONSES),
        PromptKind::Point => (&P2_POINT_INSTRUCTIONS, &P2_POINT_RESPONSES),
    };
    let instruction = instructions
        .get(choice.instruction)
        .ok_or(ForgeError::TemplateIndex(choice.instruction))?;
    let response = responses
        .get(choice.response)
        .ok_or(ForgeError::TemplateIndex(choice.response))?;
    let target = derive_visual_prompt(&groups, kind, prompt_seed)?;
    let labels: Vec<&str> = target.targets.iter().map(|g| g.label.as_str()).collect();
    let gold = grounded_from_template(response, &labels)?;
    Ok(Sample {
        id: sample_id(image, Perspective::P2),
        image_ref: image.image_ref.clone(),
        modality: image.modality,
        perspective: Perspective::P2,
        query: String::from(*instruction),
        visual_prompt: Some(target.prompt),
        gold,
        gold_masks: target.targets.into_iter().map(|g| g.mask).collect(),
    })
}
