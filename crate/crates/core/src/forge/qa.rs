//! Provider-backed Q&A generation and answer grounding (P3 and P4).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::knowledge::KnowledgeBase;
use super::prompt::{build_generation_prompt, GenerationPrompt, PromptOptions};
use super::templated::{derive_visual_prompt, group_labels};
use super::types::{ImageRecord, Perspective, PromptKind, Sample};
use super::ForgeError;
use crate::grounded::{parse_grounded, GroundedResponse, ParseMode, CLOSE, OPEN, SEG};
use crate::seed;

/// Body of a completion call.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 512,
            temperature: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProviderErrorKind {
    Timeout,
    Transport,
    Unauthorized,
    BadResponse,
    MissingFixture,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(
            self.kind,
            ProviderErrorKind::Timeout | ProviderErrorKind::Transport
        )
    }
}

/// Text-completion service used to generate questions and answers.
pub trait CompletionProvider: Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3 }
    }
}

/// Removes every marker, repeating until none remain (removal can splice a
/// new marker together).
pub fn remove_markers(text: &str) -> String {
    let mut s = String::from(text);
    while crate::grounded::contains_marker(&s) {
        s = s.replace(OPEN, "").replace(CLOSE, "").replace(SEG, "");
    }
    s
}

/// Splits a raw completion into question and answer. Accepts `Question:` /
/// `Q:` and `Answer:` / `A:` line prefixes, case-insensitively; the answer
/// runs to the end of the completion.
pub fn parse_completion(raw: &str) -> Result<(String, String), ForgeError> {
    fn strip_prefix<'a>(line: &'a str, prefixes: &[&str]) -> Option<&'a str> {
        let t = line.trim_start();
        prefixes.iter().find_map(|p| {
            (t.len() >= p.len() && t.as_bytes()[..p.len()].eq_ignore_ascii_case(p.as_bytes()))
                .then(|| &t[p.len()..])
        })
    }

    let mut question: Option<String> = None;
    let mut answer: Option<String> = None;
    for line in raw.lines() {
        if let Some(a) = answer.as_mut() {
            a.push('\n');
            a.push_str(line);
        } else if let Some(rest) = strip_prefix(line, &["answer:", "a:"]) {
            answer = Some(String::from(rest));
        } else if let Some(rest) = strip_prefix(line, &["question:", "q:"]) {
            question = Some(String::from(rest));
        } else if let Some(q) = question.as_mut() {
            q.push(' ');
            q.push_str(line.trim());
        }
    }
    match (question, answer) {
        (Some(q), Some(a)) if !q.trim().is_empty() && !a.trim().is_empty() => {
            Ok((String::from(q.trim()), String::from(a.trim())))
        }
        _ => Err(ForgeError::MalformedCompletion),
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Wraps every whole-word, ASCII-case-insensitive occurrence of a label in
/// `<p>...<SEG></p>`, preferring the longest label at each position. The
/// original spelling in `answer` is kept. Returns the grounded answer and,
/// per slot, the index of the matched label.
pub fn ground_answer(
    answer: &str,
    labels: &[&str],
) -> Result<(GroundedResponse, Vec<usize>), ForgeError> {
    let text = remove_markers(answer);
    let mut order: Vec<usize> = (0..labels.len())
        .filter(|&i| !labels[i].is_empty())
        .collect();
    order.sort_by_key(|&i| core::cmp::Reverse(labels[i].len()));

    let bytes = text.as_bytes();
    let mut out = GroundedResponse::new();
    let mut slot_labels = Vec::new();
    let mut plain_start = 0;
    let mut i = 0;
    while i < text.len() {
        let before = text[..i].chars().next_back();
        let hit = if is_word_char(before) {
            None
        } else {
            order.iter().copied().find(|&li| {
                let l = labels[li].as_bytes();
                let end = i + l.len();
                end <= bytes.len()
                    && bytes[i..end].eq_ignore_ascii_case(l)
                    && text.is_char_boundary(end)
                    && !is_word_char(text[end..].chars().next())
            })
        };
        match hit {
            Some(li) => {
                let end = i + labels[li].len();
                out.push_text(&text[plain_start..i])?;
                out.push_entity(&text[i..end])?;
                slot_labels.push(li);
                i = end;
                plain_start = end;
            }
            None => {
                i += text[i..].chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    out.push_text(&text[plain_start..])?;
    if slot_labels.is_empty() {
        return Err(ForgeError::UngroundableAnswer);
    }
    Ok((out, slot_labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaPair {
    pub question: String,
    pub answer: GroundedResponse,
    /// Index into the prompt's labels for every answer slot.
    pub slot_labels: Vec<usize>,
}

/// Sends the prompt (retrying retryable failures up to the policy's attempt
/// budget), splits the completion and grounds the answer against the
/// prompt's labels.
pub fn generate_qa(
    prompt: &GenerationPrompt,
    provider: &dyn CompletionProvider,
    retry: RetryPolicy,
) -> Result<QaPair, ForgeError> {
    let request = CompletionRequest::new(prompt.text.clone());
    let attempts = retry.max_attempts.max(1);
    let mut attempt = 0;
    let raw = loop {
        attempt += 1;
        match provider.complete(&request) {
            Ok(text) => break text,
            Err(e) if e.is_retryable() && attempt < attempts => continue,
            Err(e) => return Err(ForgeError::Provider(e)),
        }
    };
    let (question, answer) = parse_completion(&raw)?;
    let labels: Vec<&str> = prompt.labels.iter().map(String::as_str).collect();
    let (answer, slot_labels) = ground_answer(&answer, &labels)?;
    // The wrapped answer must survive a strict round trip.
    if parse_grounded(&answer.serialize(), ParseMode::Strict).as_ref() != Ok(&answer) {
        return Err(ForgeError::UngroundableAnswer);
    }
    Ok(QaPair {
        question: remove_markers(&question),
        answer,
        slot_labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateOptions {
    pub prompt: PromptOptions,
    pub retry: RetryPolicy,
    /// P4 visual prompt kind; drawn from the seed when `None`.
    pub prompt_kind: Option<PromptKind>,
}

/// Builds a P3 or P4 sample: prompt assembly, provider call, grounding and
/// mask assignment. Every mention of a label gets that label's mask.
pub fn make_generated_sample(
    image: &ImageRecord,
    perspective: Perspective,
    kb: &KnowledgeBase,
    examples: &[String],
    provider: &dyn CompletionProvider,
    seed: u64,
    opts: GenerateOptions,
) -> Result<Sample, ForgeError> {
    if !perspective.is_generated() {
        return Err(ForgeError::NotGenerated(perspective));
    }
    let groups = group_labels(&image.masks)?;
    if groups.is_empty() {
        return Err(ForgeError::EmptyLabels);
    }
    let (targets, visual_prompt, kind) = match perspective {
        Perspective::P4 => {
            let kind = opts.prompt_kind.unwrap_or_else(|| PromptKind::draw(seed));
            let t = derive_visual_prompt(&groups, kind, seed::derive_seed(seed, "prompt"))?;
            (t.targets, Some(t.prompt), Some(kind))
        }
        _ => (groups, None, None),
    };
    let labels: Vec<&str> = targets.iter().map(|g| g.label.as_str()).collect();
    let prompt = build_generation_prompt(
        perspective,
        &labels,
        kb,
        examples,
        kind,
        seed::derive_seed(seed, "example"),
        opts.prompt,
    )?;
    let qa = generate_qa(&prompt, provider, opts.retry)?;
    Ok(Sample {
        id: alloc::format!("{}_{}", image.id, perspective),
        image_ref: image.image_ref.clone(),
        modality: image.modality,
        perspective,
        query: qa.question,
        visual_prompt,
        gold: qa.answer,
        gold_masks: qa
            .slot_labels
            .iter()
            .map(|&i| targets[i].mask.clone())
            .collect(),
    })
}

impl fmt::Display for QaPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Question: {}\nAnswer: {}", self.question, self.answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::knowledge::{KnowledgeEntry, KnowledgeSource};
    use crate::forge::types::{LabeledMask, Modality, VisualPrompt};
    use crate::mask::BinaryMask;

    struct Fixed(&'static str);

    impl CompletionProvider for Fixed {
        fn complete(&self, _: &CompletionRequest) -> Result<String, ProviderError> {
            Ok(self.0.into())
        }
    }

    struct Flaky {
        failures: u32,
        calls: core::sync::atomic::AtomicU32,
    }

    impl CompletionProvider for Flaky {
        fn complete(&self, _: &CompletionRequest) -> Result<String, ProviderError> {
            let n = self
                .calls
                .fetch_add(1, core::sync::atomic::Ordering::SeqCst);
            if n < self.failures {
                Err(ProviderError::new(ProviderErrorKind::Timeout, "slow"))
            } else {
                Ok("Question: where?\nAnswer: the liver".into())
            }
        }
    }

    fn prompt(labels: &[&str]) -> GenerationPrompt {
        let kb = KnowledgeBase::from_entries(labels.iter().map(|l| KnowledgeEntry {
            label: (*l).into(),
            text: "k".into(),
            source: KnowledgeSource::Manual,
        }))
        .unwrap();
        build_generation_prompt(
            Perspective::P3,
            labels,
            &kb,
            &[],
            None,
            0,
            PromptOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn completion_parsing() {
        let (q, a) =
            parse_completion("Question: What is this?\nANSWER: It is the heart.\nMore.").unwrap();
        assert_eq!(q, "What is this?");
        assert_eq!(a, "It is the heart.\nMore.");
        assert_eq!(
            parse_completion("no format"),
            Err(ForgeError::MalformedCompletion)
        );
        assert_eq!(
            parse_completion("Q: x\nA:   "),
            Err(ForgeError::MalformedCompletion)
        );
    }

    #[test]
    fn repeated_label_wrapped_each_time() {
        let text =
            "The adrenal medulla sits inside the gland; the Adrenal Medulla secretes adrenaline.";
        let (r, slots) = ground_answer(text, &["adrenal medulla"]).unwrap();
        let oracle = text.to_lowercase().matches("adrenal medulla").count();
        assert_eq!(r.entity_count(), oracle);
        assert_eq!(slots, vec![0, 0]);
        assert_eq!(r.strip_markup(), text);
        assert_eq!(r.extract_entities()[1].0, "Adrenal Medulla");
    }

    #[test]
    fn longest_match_and_word_boundaries() {
        let (r, slots) = ground_answer(
            "The left kidney and kidneys near the kidney.",
            &["kidney", "left kidney"],
        )
        .unwrap();
        assert_eq!(
            r.serialize(),
            "The <p>left kidney<SEG></p> and kidneys near the <p>kidney<SEG></p>."
        );
        assert_eq!(slots, vec![1, 0]);
    }

    #[test]
    fn existing_markers_are_discarded() {
        let (r, _) = ground_answer("<p>heart</p><SEG> beats", &["heart"]).unwrap();
        assert_eq!(r.serialize(), "<p>heart<SEG></p> beats");
        assert_eq!(remove_markers("<p<SEG>>x"), "x");
    }

    #[test]
    fn ungroundable() {
        assert_eq!(
            ground_answer("nothing here", &["liver"]),
            Err(ForgeError::UngroundableAnswer)
        );
    }

    #[test]
    fn stub_path_strict_parses() {
        let qa = generate_qa(
            &prompt(&["liver", "spleen"]),
            &Fixed(
                "Question: Which organs are visible?\nAnswer: The liver lies beside the spleen.",
            ),
            RetryPolicy::default(),
        )
        .unwrap();
        assert_eq!(qa.question, "Which organs are visible?");
        let wire = qa.answer.serialize();
        assert_eq!(parse_grounded(&wire, ParseMode::Strict).unwrap(), qa.answer);
        assert_eq!(qa.slot_labels, vec![0, 1]);
    }

    #[test]
    fn retries_then_gives_up() {
        let p = prompt(&["liver"]);
        let ok = Flaky {
            failures: 2,
            calls: 0.into(),
        };
        assert!(generate_qa(&p, &ok, RetryPolicy { max_attempts: 3 }).is_ok());
        let bad = Flaky {
            failures: 5,
            calls: 0.into(),
        };
        let err = generate_qa(&p, &bad, RetryPolicy { max_attempts: 3 }).unwrap_err();
        assert!(matches!(
            err,
            ForgeError::Provider(ProviderError {
                kind: ProviderErrorKind::Timeout,
                ..
            })
        ));
        assert_eq!(bad.calls.load(core::sync::atomic::Ordering::SeqCst), 3);
    }

    #[test]
    fn generated_sample_masks_follow_mentions() {
        let liver = BinaryMask::from_fn(8, 8, |x, _| x < 3).unwrap();
        let spleen = BinaryMask::from_fn(8, 8, |x, _| x > 5).unwrap();
        let img = ImageRecord {
            id: "a".into(),
            image_ref: "a.png".into(),
            modality: Modality::Ct,
            masks: vec![
                LabeledMask {
                    label: "liver".into(),
                    mask: liver.clone(),
                },
                LabeledMask {
                    label: "spleen".into(),
                    mask: spleen.clone(),
                },
            ],
        };
        let kb = KnowledgeBase::from_entries(["liver", "spleen"].map(|l| KnowledgeEntry {
            label: l.into(),
            text: "k".into(),
            source: KnowledgeSource::Umls,
        }))
        .unwrap();
        let provider = Fixed("Question: q?\nAnswer: spleen, liver and the spleen again.");
        let s = make_generated_sample(
            &img,
            Perspective::P3,
            &kb,
            &[],
            &provider,
            1,
            GenerateOptions::default(),
        )
        .unwrap();
        assert_eq!(
            s.gold_masks,
            vec![spleen.clone(), liver.clone(), spleen.clone()]
        );
        assert!(s.visual_prompt.is_none());
        s.validate().unwrap();

        let opts = GenerateOptions {
            prompt_kind: Some(PromptKind::Box),
            ..GenerateOptions::default()
        };
        let s = make_generated_sample(&img, Perspective::P4, &kb, &[], &provider, 1, opts).unwrap();
        assert!(matches!(s.visual_prompt, Some(VisualPrompt::Box(_))));
        s.validate().unwrap();
    }
}
