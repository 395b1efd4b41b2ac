//! Binary masks and everything computed from them.
//!
//! RLE wire form: the raster is scanned row-major; the first run counts
//! leading `false` pixels (possibly 0) and runs then alternate
//! `true`/`false`. Only the first run may be zero, so every mask has exactly
//! one encoding.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MaskError {
    #[error("mask dimensions {0}x{1} differ from {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("run lengths sum to {sum}, expected {expected}")]
    LengthMismatch { sum: u64, expected: u64 },
    #[error("zero-length run at index {0}")]
    MalformedRuns(usize),
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask dimensions must be positive")]
    ZeroSize,
    #[error("raster length {got} does not equal height*width {expected}")]
    RasterLength { got: usize, expected: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(height: usize, width: usize) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::ZeroSize);
        }
        Ok(Self {
            height,
            width,
            bits: vec![false; height * width],
        })
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::ZeroSize);
        }
        if bits.len() != height * width {
            return Err(MaskError::RasterLength {
                got: bits.len(),
                expected: height * width,
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    /// Builds a mask from a predicate over `(x, y)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut m = Self::new(height, width)?;
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        Ok(m)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self, MaskError> {
        self.check_dims(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    fn check_dims(&self, other: &Self) -> Result<(), MaskError> {
        check_dims(self.height, self.width, other.height, other.width)
    }

    pub fn rle_encode(&self) -> Vec<u64> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u64;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn rle_decode(runs: &[u64], height: usize, width: usize) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::ZeroSize);
        }
        let expected = (height as u64) * (width as u64);
        let mut sum = 0u64;
        for (i, &r) in runs.iter().enumerate() {
            if r == 0 && i > 0 {
                return Err(MaskError::MalformedRuns(i));
            }
            sum = sum.saturating_add(r);
        }
        if sum != expected {
            return Err(MaskError::LengthMismatch { sum, expected });
        }
        let mut bits = Vec::with_capacity(height * width);
        let mut value = false;
        for &r in runs {
            bits.extend(core::iter::repeat_n(value, r as usize));
            value = !value;
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    /// Tightest box around the foreground.
    pub fn bbox(&self) -> Result<BoundingBox, MaskError> {
        let mut bb: Option<BoundingBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                bb = Some(match bb {
                    None => BoundingBox::new(x, y, x, y),
                    Some(b) => BoundingBox::new(
                        b.x_min.min(x),
                        b.y_min.min(y),
                        b.x_max.max(x),
                        b.y_max.max(y),
                    ),
                });
            }
        }
        bb.ok_or(MaskError::EmptyMask)
    }

    /// A uniformly drawn foreground pixel; deterministic in `seed`.
    pub fn sample_point(&self, seed: u64) -> Result<Point, MaskError> {
        let n = self.count();
        if n == 0 {
            return Err(MaskError::EmptyMask);
        }
        let k = seed::rng(seed).gen_range(0..n);
        let idx = self
            .bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .nth(k)
            .map(|(i, _)| i)
            .expect("k < count");
        Ok(Point {
            x: idx % self.width,
            y: idx / self.width,
        })
    }
}

fn check_dims(h1: usize, w1: usize, h2: usize, w2: usize) -> Result<(), MaskError> {
    if h1 != h2 || w1 != w2 {
        return Err(MaskError::DimensionMismatch(h1, w1, h2, w2));
    }
    Ok(())
}

/// Per-pixel probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    probs: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, probs: Vec<f64>) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::ZeroSize);
        }
        if probs.len() != height * width {
            return Err(MaskError::RasterLength {
                got: probs.len(),
                expected: height * width,
            });
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MaskError::BadProbability(*p));
        }
        Ok(Self {
            height,
            width,
            probs,
        })
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            height: mask.height,
            width: mask.width,
            probs: mask
                .bits
                .iter()
                .map(|b| if *b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Thresholds at 0.5 (inclusive).
    pub fn binarize(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.probs.iter().map(|p| *p >= 0.5).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub const fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.x_min <= self.x_max
            && self.y_min <= self.y_max
            && self.x_max < width
            && self.y_max < height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

impl Point {
    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.x < width && self.y < height
    }
}

pub fn rle_encode(mask: &BinaryMask) -> Vec<u64> {
    mask.rle_encode()
}

pub fn rle_decode(runs: &[u64], height: usize, width: usize) -> Result<BinaryMask, MaskError> {
    BinaryMask::rle_decode(runs, height, width)
}

pub fn bbox_of(mask: &BinaryMask) -> Result<BoundingBox, MaskError> {
    mask.bbox()
}

pub fn sample_point(mask: &BinaryMask, seed: u64) -> Result<Point, MaskError> {
    mask.sample_point(seed)
}

/// Intersection and union pixel counts.
pub fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(u64, u64), MaskError> {
    a.check_dims(b)?;
    let mut inter = 0u64;
    let mut union = 0u64;
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += u64::from(*x && *y);
        union += u64::from(*x || *y);
    }
    Ok((inter, union))
}

/// IoU as an exact `(numerator, denominator)` pair; `(1, 1)` for two empty
/// masks.
pub fn iou_ratio(a: &BinaryMask, b: &BinaryMask) -> Result<(u64, u64), MaskError> {
    let (inter, union) = overlap_counts(a, b)?;
    Ok(if union == 0 { (1, 1) } else { (inter, union) })
}

/// Dice as an exact `(numerator, denominator)` pair; `(1, 1)` for two empty
/// masks.
pub fn dice_ratio(a: &BinaryMask, b: &BinaryMask) -> Result<(u64, u64), MaskError> {
    let (inter, union) = overlap_counts(a, b)?;
    // |a| + |b| == inter + union
    Ok(if union == 0 {
        (1, 1)
    } else {
        (2 * inter, inter + union)
    })
}

pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let (n, d) = iou_ratio(a, b)?;
    Ok(n as f64 / d as f64)
}

pub fn dice_coeff(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let (n, d) = dice_ratio(a, b)?;
    Ok(n as f64 / d as f64)
}

pub const BCE_EPS: f64 = 1e-7;
pub const DEFAULT_DICE_SMOOTH: f64 = 1.0;

/// Mean per-pixel binary cross-entropy with probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(pred: &SoftMask, target: &BinaryMask) -> Result<f64, MaskError> {
    check_dims(pred.height, pred.width, target.height, target.width)?;
    let mut sum = 0.0;
    for (&p, &t) in pred.probs.iter().zip(&target.bits) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        sum -= if t { libm::log(p) } else { libm::log(1.0 - p) };
    }
    Ok(sum / pred.probs.len() as f64)
}

/// Soft Dice loss `1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth)`.
pub fn dice_loss(pred: &SoftMask, target: &BinaryMask, smooth: f64) -> Result<f64, MaskError> {
    check_dims(pred.height, pred.width, target.height, target.width)?;
    let mut pt = 0.0;
    let mut p_sum = 0.0;
    let mut t_sum = 0.0;
    for (&p, &t) in pred.probs.iter().zip(&target.bits) {
        let t = if t { 1.0 } else { 0.0 };
        pt += p * t;
        p_sum += p;
        t_sum += t;
    }
    let den = p_sum + t_sum + smooth;
    if den == 0.0 {
        // Both empty with no smoothing.
        return Ok(0.0);
    }
    Ok(1.0 - (2.0 * pt + smooth) / den)
}

/// Weights of the text, BCE and Dice terms of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_text: f64,
    pub lambda_bce: f64,
    pub lambda_dice: f64,
}

impl LossWeights {
    pub fn new(lambda_text: f64, lambda_bce: f64, lambda_dice: f64) -> Option<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        (ok(lambda_text) && ok(lambda_bce) && ok(lambda_dice)).then_some(Self {
            lambda_text,
            lambda_bce,
            lambda_dice,
        })
    }
}

impl Default for LossWeights {
    /// (1.0, 2.0, 0.5). Not taken from any reference training recipe.
    fn default() -> Self {
        Self {
            lambda_text: 1.0,
            lambda_bce: 2.0,
            lambda_dice: 0.5,
        }
    }
}

pub fn total_loss(text: f64, bce: f64, dice: f64, w: &LossWeights) -> f64 {
    w.lambda_text * text + w.lambda_bce * bce + w.lambda_dice * dice
}
