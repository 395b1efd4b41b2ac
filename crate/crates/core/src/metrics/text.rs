//! Text metrics over a shared tokenizer.
//!
//! Tokenizer: lowercase the input, split on Unicode whitespace, then trim
//! leading and trailing punctuation (ASCII punctuation plus typographic
//! quotes, dashes and ellipsis) from each token; tokens that become empty
//! are dropped.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::segmentation::MetricError;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00AB}'
                | '\u{00BB}'
        )
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(is_punct))
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU-4 with uniform weights.
///
/// Unigram precision is unsmoothed (a candidate with no unigram overlap
/// scores 0); 2- to 4-gram precisions use add-one smoothing
/// `(m + 1) / (t + 1)`. Brevity penalty uses the closest reference length,
/// preferring the shorter on ties.
pub fn bleu4(candidate: &str, references: &[&str]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() || references.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let total: usize = cand_counts.values().sum();
        let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            if clipped == 0 {
                return 0.0;
            }
            clipped as f64 / total as f64
        } else {
            (clipped as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += libm::log(p);
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|len| (len.abs_diff(c), *len))
        .expect("non-empty references");
    let bp = if c > r {
        1.0
    } else {
        libm::exp(1.0 - r as f64 / c as f64)
    };
    bp * libm::exp(log_sum / 4.0)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (beta = 1).
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&c, &r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / c.len() as f64;
    let rec = l / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Light suffix stripper used by the stem-matching stage of
/// [`meteor_lite`]. Rules are tried in order; the first that applies wins.
pub fn stem(word: &str) -> String {
    let n = word.chars().count();
    let strip = |suffix: &str, min_len: usize, repl: &str| -> Option<String> {
        if n >= min_len && word.ends_with(suffix) {
            let mut s = String::from(&word[..word.len() - suffix.len()]);
            s.push_str(repl);
            Some(s)
        } else {
            None
        }
    };
    strip("sses", 5, "ss")
        .or_else(|| strip("ies", 5, "y"))
        .or_else(|| strip("ing", 6, ""))
        .or_else(|| strip("edly", 7, ""))
        .or_else(|| strip("ed", 5, ""))
        .or_else(|| strip("ly", 5, ""))
        .or_else(|| {
            if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
                None
            } else {
                strip("s", 4, "")
            }
        })
        .unwrap_or_else(|| String::from(word))
}

/// METEOR without synonym or paraphrase stages.
///
/// Alignment runs an exact stage then a stem stage; in each stage every
/// unaligned candidate token, left to right, takes the leftmost unaligned
/// reference token with the same key. With `P = m/|cand|`, `R = m/|ref|`:
/// `F = 10PR / (R + 9P)`, `penalty = 0.5 * (chunks/m)^3`,
/// `score = F * (1 - penalty)`.
pub fn meteor_lite(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut align: Vec<Option<usize>> = vec![None; c.len()];
    let mut ref_used = vec![false; r.len()];
    fn exact(s: &str) -> String {
        String::from(s)
    }
    let stages: [fn(&str) -> String; 2] = [exact, stem];
    for key in stages {
        let ref_keys: Vec<String> = r.iter().map(|t| key(t)).collect();
        for (i, tok) in c.iter().enumerate() {
            if align[i].is_some() {
                continue;
            }
            let k = key(tok);
            if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && ref_keys[j] == k) {
                ref_used[j] = true;
                align[i] = Some(j);
            }
        }
    }
    let matches = align.iter().flatten().count();
    if matches == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in &align {
        match (*a, prev) {
            (Some(j), Some(p)) if j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        prev = *a;
    }
    let m = matches as f64;
    let p = m / c.len() as f64;
    let rec = m / r.len() as f64;
    let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
    let frag = chunks as f64 / m;
    let penalty = 0.5 * frag * frag * frag;
    f_mean * (1.0 - penalty)
}

fn normalize_answer(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .map(|c| if is_punct(c) { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(String::from)
        .collect()
}

/// Closed-ended answer check: after lowercasing and replacing punctuation
/// with spaces, the gold token sequence must equal the prediction or occur
/// in it as a contiguous run of whole tokens.
pub fn vqa_correct(pred: &str, gold: &str) -> bool {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    if g.is_empty() {
        return p.is_empty();
    }
    p.windows(g.len()).any(|w| w == g.as_slice())
}

pub fn vqa_accuracy(preds: &[&str], golds: &[&str]) -> Result<f64, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| vqa_correct(p, g))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer() {
        assert_eq!(
            tokenize("  The Liver, (left) lobe... “ok” -"),
            ["the", "liver", "left", "lobe", "ok"]
        );
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let s = "the liver is enlarged in this scan";
        assert_eq!(bleu4(s, &[s]), 1.0);
        assert_eq!(bleu4("alpha beta", &["gamma delta"]), 0.0);
        assert_eq!(bleu4("", &[s]), 0.0);
    }

    #[test]
    fn rouge_cases() {
        assert_eq!(rouge_l("a b c d", "a b c d"), 1.0);
        assert_eq!(rouge_l("a b", "c d"), 0.0);
        assert_eq!(rouge_l("a b c d", "a c b d"), 0.75);
    }

    #[test]
    fn meteor_cases() {
        let s = "the heart is in the chest";
        let v = meteor_lite(s, s);
        assert!((v - (1.0 - 0.5 / 216.0)).abs() < 1e-15);
        assert!((v - 0.997685).abs() < 1e-6);
        assert_eq!(meteor_lite("alpha", "beta"), 0.0);
        // One shared token: chunks = matches = 1.
        let p = 1.0 / 3.0;
        let r = 1.0 / 2.0;
        let f = 10.0 * p * r / (r + 9.0 * p);
        assert!((meteor_lite("heart big red", "heart small") - 0.5 * f).abs() < 1e-15);
    }

    #[test]
    fn meteor_stem_stage() {
        // "lesions" ~ "lesion" only through the stem stage.
        assert_eq!(stem("lesions"), "lesion");
        assert_eq!(stem("kidneys"), "kidney");
        assert_eq!(stem("arteries"), "artery");
        assert_eq!(stem("mass"), "mass");
        assert!(meteor_lite("lesions", "lesion") > 0.0);
    }

    #[test]
    fn vqa_cases() {
        assert_eq!(
            vqa_accuracy(&["Yes, it is.", "no"], &["yes", "yes"]).unwrap(),
            0.5
        );
        assert_eq!(vqa_accuracy(&["yes", "No."], &["yes", "no"]).unwrap(), 1.0);
        assert_eq!(
            vqa_accuracy(&["maybe", "not"], &["yes", "no"]).unwrap(),
            0.0
        );
        assert_eq!(
            vqa_accuracy(&["yes"], &[]),
            Err(MetricError::LengthMismatch(1, 0))
        );
    }
}
