use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::grounded::{parse_grounded, GroundedResponse, ParseMode};
use crate::mask::{BinaryMask, BoundingBox, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Perspective {
    /// Language-guided segmentation.
    P1,
    /// Visual-prompt perceiving.
    P2,
    /// Responses with segmentation aligning.
    P3,
    /// Visual-prompt assisted questioning.
    P4,
}

impl Perspective {
    pub const ALL: [Perspective; 4] = [Self::P1, Self::P2, Self::P3, Self::P4];

    /// Zero-based position in [`Perspective::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::P1 => "p1",
            Self::P2 => "p2",
            Self::P3 => "p3",
            Self::P4 => "p4",
        }
    }

    pub fn has_visual_prompt(self) -> bool {
        matches!(self, Self::P2 | Self::P4)
    }

    pub fn is_generated(self) -> bool {
        matches!(self, Self::P3 | Self::P4)
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind}: {value:?}")]
pub struct UnknownName {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for Perspective {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p1" | "i" | "1" => Ok(Self::P1),
            "p2" | "ii" | "2" => Ok(Self::P2),
            "p3" | "iii" | "3" => Ok(Self::P3),
            "p4" | "iv" | "4" => Ok(Self::P4),
            _ => Err(UnknownName {
                kind: "perspective",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Ct,
    Mri,
    Dermoscopy,
    Pet,
    Endoscopy,
    XRay,
    Ultrasound,
    Fundus,
}

impl Modality {
    pub const ALL: [Modality; 8] = [
        Self::Ct,
        Self::Mri,
        Self::Dermoscopy,
        Self::Pet,
        Self::Endoscopy,
        Self::XRay,
        Self::Ultrasound,
        Self::Fundus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ct => "CT",
            Self::Mri => "MRI",
            Self::Dermoscopy => "Dermoscopy",
            Self::Pet => "PET",
            Self::Endoscopy => "Endoscopy",
            Self::XRay => "X-Ray",
            Self::Ultrasound => "Ultrasound",
            Self::Fundus => "Fundus",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Ok(match key.as_str() {
            "ct" => Self::Ct,
            "mri" | "mr" => Self::Mri,
            "dermoscopy" => Self::Dermoscopy,
            "pet" => Self::Pet,
            "endoscopy" => Self::Endoscopy,
            "xray" => Self::XRay,
            "ultrasound" | "us" => Self::Ultrasound,
            "fundus" => Self::Fundus,
            _ => {
                return Err(UnknownName {
                    kind: "modality",
                    value: s.into(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VisualPrompt {
    Point(Point),
    Box(BoundingBox),
}

impl VisualPrompt {
    pub fn fits(&self, height: usize, width: usize) -> bool {
        match self {
            Self::Point(p) => p.fits(height, width),
            Self::Box(b) => b.fits(height, width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Box,
    Point,
}

impl PromptKind {
    /// Fair draw from the sample seed's `"kind"` stream.
    pub fn draw(sample_seed: u64) -> Self {
        use rand::Rng as _;
        if crate::seed::rng(crate::seed::derive_seed(sample_seed, "kind")).gen_bool(0.5) {
            Self::Box
        } else {
            Self::Point
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMask {
    pub label: String,
    pub mask: BinaryMask,
}

/// One manifest entry: an image and its labelled masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: String,
    pub image_ref: String,
    pub modality: Modality,
    pub masks: Vec<LabeledMask>,
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image_ref: String,
    pub modality: Modality,
    pub perspective: Perspective,
    pub query: String,
    pub visual_prompt: Option<VisualPrompt>,
    pub gold: GroundedResponse,
    pub gold_masks: Vec<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaViolation {
    #[error("{0} sample is missing its visual prompt")]
    MissingVisualPrompt(Perspective),
    #[error("{0} sample must not carry a visual prompt")]
    UnexpectedVisualPrompt(Perspective),
    #[error("{masks} gold masks for {entities} entities")]
    MaskCount { masks: usize, entities: usize },
    #[error("gold response does not strict-parse back to itself")]
    GoldNotCanonical,
    #[error("visual prompt lies outside the image")]
    PromptOutOfBounds,
    #[error("gold masks have inconsistent dimensions")]
    MaskDimensions,
}

impl Sample {
    /// Checks every record-level invariant of the dataset schema.
    pub fn validate(&self) -> Result<(), SchemaViolation> {
        match (self.perspective.has_visual_prompt(), &self.visual_prompt) {
            (true, None) => return Err(SchemaViolation::MissingVisualPrompt(self.perspective)),
            (false, Some(_)) => {
                return Err(SchemaViolation::UnexpectedVisualPrompt(self.perspective))
            }
            _ => {}
        }
        if self.gold_masks.len() != self.gold.entity_count() {
            return Err(SchemaViolation::MaskCount {
                masks: self.gold_masks.len(),
                entities: self.gold.entity_count(),
            });
        }
        let wire = self.gold.serialize();
        if parse_grounded(&wire, ParseMode::Strict).as_ref() != Ok(&self.gold) {
            return Err(SchemaViolation::GoldNotCanonical);
        }
        if let Some(first) = self.gold_masks.first() {
            let (h, w) = (first.height(), first.width());
            if self
                .gold_masks
                .iter()
                .any(|m| m.height() != h || m.width() != w)
            {
                return Err(SchemaViolation::MaskDimensions);
            }
            if let Some(vp) = &self.visual_prompt {
                if !vp.fits(h, w) {
                    return Err(SchemaViolation::PromptOutOfBounds);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Modality::ALL {
            assert_eq!(m.as_str().parse::<Modality>().unwrap(), m);
        }
        assert_eq!("x-ray".parse::<Modality>().unwrap(), Modality::XRay);
        for p in Perspective::ALL {
            assert_eq!(p.as_str().parse::<Perspective>().unwrap(), p);
        }
        assert!("p5".parse::<Perspective>().is_err());
    }
}
