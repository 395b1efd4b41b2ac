//! Knowledge-based prompts for generated Q&A (P3 and P4).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;
use rand::Rng as _;

use super::knowledge::{KnowledgeBase, KnowledgeError};
use super::types::{Perspective, PromptKind};
use super::ForgeError;
use crate::seed;

pub const MISSING_KNOWLEDGE: &str = "No additional knowledge available.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPrompt {
    pub perspective: Perspective,
    pub labels: Vec<String>,
    /// Knowledge paragraphs, one `label: text` line per label.
    pub knowledge: String,
    pub multi_label: bool,
    pub in_context_example: Option<String>,
    /// Kind of visual prompt the question refers to (P4 only).
    pub visual_prompt: Option<PromptKind>,
    /// Fully rendered prompt sent to the provider.
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PromptOptions {
    /// Substitute [`MISSING_KNOWLEDGE`] for unknown labels instead of failing.
    pub allow_missing_knowledge: bool,
}

/// Builds the prompt for `labels`. P3 prompts embed one example from
/// `examples` chosen by `seed` (none if the pool is empty); P4 prompts carry
/// `visual_prompt` and no example.
pub fn build_generation_prompt(
    perspective: Perspective,
    labels: &[&str],
    kb: &KnowledgeBase,
    examples: &[String],
    visual_prompt: Option<PromptKind>,
    seed: u64,
    opts: PromptOptions,
) -> Result<GenerationPrompt, ForgeError> {
    if !perspective.is_generated() {
        return Err(ForgeError::NotGenerated(perspective));
    }
    if labels.is_empty() {
        return Err(ForgeError::EmptyLabels);
    }
    let mut knowledge = String::new();
    for label in labels {
        let text = match kb.lookup(label) {
            Ok(e) => e.text.as_str(),
            Err(KnowledgeError::NotFound(_)) if opts.allow_missing_knowledge => MISSING_KNOWLEDGE,
            Err(_) => return Err(ForgeError::UnknownLabel(String::from(*label))),
        };
        if !knowledge.is_empty() {
            knowledge.push('\n');
        }
        let _ = write!(knowledge, "{label}: {text}");
    }
    let multi_label = labels.len() > 1;
    let in_context_example = match perspective {
        Perspective::P3 if !examples.is_empty() => {
            let i = seed::rng(seed).gen_range(0..examples.len());
            Some(examples[i].clone())
        }
        _ => None,
    };
    let visual_prompt = match perspective {
        Perspective::P4 => Some(visual_prompt.unwrap_or(PromptKind::Box)),
        _ => None,
    };
    let mut prompt = GenerationPrompt {
        perspective,
        labels: labels.iter().map(|l| String::from(*l)).collect(),
        knowledge,
        multi_label,
        in_context_example,
        visual_prompt,
        text: String::new(),
    };
    prompt.text = render(&prompt);
    Ok(prompt)
}

fn render(p: &GenerationPrompt) -> String {
    let joined = p.labels.join(", ");
    let mut s = String::new();
    s.push_str(
        "You are writing training data for a medical vision-language assistant. You will not \
see the image; write the question and the answer as if you could see it.\n\n",
    );
    if p.multi_label {
        let _ = writeln!(s, "Entities in the image: {joined}");
    } else {
        let _ = writeln!(s, "Entity in the image: {joined}");
    }
    let _ = write!(s, "Knowledge:\n{}\n\n", p.knowledge);

    let subject = if p.multi_label {
        "the entities"
    } else {
        "the entity"
    };
    match p.perspective {
        Perspective::P3 => {
            let _ = writeln!(
                s,
                "Task: write one question that can only be answered by identifying {subject} in \
the image through reasoning over the knowledge above (causes, symptoms, location or function). \
Then write an answer that names {subject} explicitly and explains the reasoning."
            );
        }
        Perspective::P4 => {
            let marker = match p.visual_prompt {
                Some(PromptKind::Point) => "a point",
                _ => "a bounding box",
            };
            let _ = writeln!(
                s,
                "The region of interest is marked in the image with {marker}. Task: write one \
question about the marked region that asks about its appearance, function or clinical \
significance without naming it. Then write an answer that names {subject} explicitly and \
describes what can be seen in the marked region."
            );
        }
        Perspective::P1 | Perspective::P2 => {}
    }
    if p.multi_label {
        s.push_str(
            "Cover every listed entity in the answer and describe how they relate to each other.\n",
        );
    }
    if let Some(ex) = &p.in_context_example {
        let _ = write!(s, "\nExample:\n{ex}\n");
    }
    s.push_str("\nReply in exactly this format:\nQuestion: <question>\nAnswer: <answer>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::knowledge::{KnowledgeEntry, KnowledgeSource};
    use alloc::format;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::from_entries(["heart", "liver", "spleen"].map(|l| KnowledgeEntry {
            label: l.into(),
            text: format!("The {l} is an organ with knowledge id {}.", l.len()),
            source: KnowledgeSource::Manual,
        }))
        .unwrap()
    }

    #[test]
    fn single_label_embeds_knowledge_verbatim() {
        let kb = kb();
        let p = build_generation_prompt(
            Perspective::P3,
            &["Heart"],
            &kb,
            &[],
            None,
            0,
            PromptOptions::default(),
        )
        .unwrap();
        assert!(!p.multi_label);
        assert!(p.text.contains("Entity in the image: Heart"));
        assert!(p.text.contains(&kb.lookup("heart").unwrap().text));
        assert!(p.in_context_example.is_none());
    }

    #[test]
    fn multi_label_has_all_knowledge_and_relationship_instruction() {
        let kb = kb();
        let labels = ["heart", "liver", "spleen"];
        let p = build_generation_prompt(
            Perspective::P4,
            &labels,
            &kb,
            &[],
            None,
            0,
            PromptOptions::default(),
        )
        .unwrap();
        assert!(p.multi_label);
        for l in labels {
            assert!(p.text.contains(&kb.lookup(l).unwrap().text));
        }
        assert!(p.text.contains("how they relate to each other"));
        assert!(p.text.contains("bounding box"));
    }

    #[test]
    fn p3_example_is_seeded() {
        let kb = kb();
        let pool: Vec<String> = (0..10)
            .map(|i| format!("Question: q{i}\nAnswer: a{i}"))
            .collect();
        let a = build_generation_prompt(
            Perspective::P3,
            &["liver"],
            &kb,
            &pool,
            None,
            7,
            PromptOptions::default(),
        )
        .unwrap();
        let b = build_generation_prompt(
            Perspective::P3,
            &["liver"],
            &kb,
            &pool,
            None,
            7,
            PromptOptions::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.in_context_example.is_some());
        let p4 = build_generation_prompt(
            Perspective::P4,
            &["liver"],
            &kb,
            &pool,
            None,
            7,
            PromptOptions::default(),
        )
        .unwrap();
        assert!(p4.in_context_example.is_none());
    }

    #[test]
    fn missing_label_strict_and_lenient() {
        let kb = kb();
        assert_eq!(
            build_generation_prompt(
                Perspective::P3,
                &["kidney"],
                &kb,
                &[],
                None,
                0,
                PromptOptions::default()
            ),
            Err(ForgeError::UnknownLabel("kidney".into()))
        );
        let p = build_generation_prompt(
            Perspective::P3,
            &["kidney"],
            &kb,
            &[],
            None,
            0,
            PromptOptions {
                allow_missing_knowledge: true,
            },
        )
        .unwrap();
        assert!(p.knowledge.contains(MISSING_KNOWLEDGE));
    }

    #[test]
    fn templated_perspectives_rejected() {
        assert_eq!(
            build_generation_prompt(
                Perspective::P1,
                &["heart"],
                &kb(),
                &[],
                None,
                0,
                PromptOptions::default()
            ),
            Err(ForgeError::NotGenerated(Perspective::P1))
        );
    }
}
