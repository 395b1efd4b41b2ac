//! The dataset forge: per-image sample construction for each perspective,
//! validation, splits, optional mixing and the output files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use groundkit_core::forge::{
    make_generated_sample, make_p1_sample, make_p2_sample, mix, split, CompletionProvider,
    ForgeError, GenerateOptions, ImageRecord, KnowledgeBase, Perspective, PromptKind,
    PromptOptions, ProviderErrorKind, RetryPolicy, Sample, Split, SplitRatios,
};
use groundkit_core::seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::stats::DatasetStats;
use crate::wire::SampleRecord;

/// In-context examples for P3 prompts.
pub const IN_CONTEXT_EXAMPLES: [&str; 3] = [
    "Question: The patient reports pain in the upper right abdomen after fatty meals. Which \
structure in this image could explain the symptom?\nAnswer: The gallbladder, seen below the liver, \
stores bile; inflammation or stones in the gallbladder typically cause this pain.",
    "Question: Which organ in this scan filters blood and produces urine, and where is it?\nAnswer: \
The kidney lies in the retroperitoneum on either side of the spine; the kidney filters blood to \
form urine.",
    "Question: What finding here could explain the patient's shortness of breath?\nAnswer: The \
pleural effusion collects between the lung and the chest wall, compressing the lung.",
];

/// Number of mixing sources: P1 to P4 plus one external VQA set.
pub const MIX_SOURCES: usize = 5;

#[derive(Debug, Clone)]
pub struct MixOptions {
    pub weights: Vec<f64>,
    /// Draws; defaults to the total training-set size.
    pub count: Option<usize>,
    /// Fifth source (external VQA records).
    pub extra: Vec<SampleRecord>,
}

#[derive(Debug, Clone)]
pub struct ForgeOptions {
    pub seed: u64,
    pub perspectives: Vec<Perspective>,
    /// Worker threads; 0 picks the default.
    pub workers: usize,
    /// Unknown knowledge labels are errors rather than placeholders.
    pub strict: bool,
    pub ratios: SplitRatios,
    /// Sample ids kept out of val and test.
    pub exclude: BTreeSet<String>,
    pub retry: RetryPolicy,
    pub examples: Vec<String>,
    pub mix: Option<MixOptions>,
}

impl Default for ForgeOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            perspectives: Perspective::ALL.to_vec(),
            workers: 0,
            strict: true,
            ratios: SplitRatios::default(),
            exclude: BTreeSet::new(),
            retry: RetryPolicy::default(),
            examples: IN_CONTEXT_EXAMPLES.iter().map(|s| s.to_string()).collect(),
            mix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipRecord {
    pub id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PerspectiveLog {
    pub images: usize,
    pub generated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MixLog {
    pub count: usize,
    pub per_source: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForgeLog {
    pub seed: u64,
    pub perspectives: BTreeMap<String, PerspectiveLog>,
    pub skipped: Vec<SkipRecord>,
    pub splits: SplitSizes,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixLog>,
}

#[derive(Debug, Clone)]
pub struct ForgeOutput {
    pub samples: Vec<(Perspective, Vec<Sample>)>,
    pub splits: Split<SampleRecord>,
    pub mix: Option<Vec<SampleRecord>>,
    pub stats: DatasetStats,
    pub log: ForgeLog,
}

/// Per-sample seed; depends only on the run seed and the sample id.
pub fn sample_seed(run_seed: u64, sample_id: &str) -> u64 {
    seed::derive_seed(run_seed, sample_id)
}

enum Outcome {
    Built(Box<Sample>),
    Skipped(SkipRecord),
}

fn build_one(
    img: &ImageRecord,
    p: Perspective,
    kb: &KnowledgeBase,
    provider: &dyn CompletionProvider,
    opts: &ForgeOptions,
) -> Result<Outcome> {
    let id = format!("{}_{}", img.id, p);
    let s = sample_seed(opts.seed, &id);
    let built = match p {
        Perspective::P1 => make_p1_sample(img, s),
        Perspective::P2 => make_p2_sample(img, PromptKind::draw(s), s),
        Perspective::P3 | Perspective::P4 => {
            let gen = GenerateOptions {
                prompt: PromptOptions {
                    allow_missing_knowledge: !opts.strict,
                },
                retry: opts.retry,
                prompt_kind: None,
            };
            make_generated_sample(img, p, kb, &opts.examples, provider, s, gen)
        }
    };
    let skip = |kind: &str, message: String| {
        Ok(Outcome::Skipped(SkipRecord {
            id: id.clone(),
            kind: kind.into(),
            message,
        }))
    };
    match built {
        Ok(sample) => Ok(Outcome::Built(Box::new(sample))),
        Err(ForgeError::Provider(e)) if e.kind != ProviderErrorKind::Unauthorized => {
            skip("ProviderError", e.to_string())
        }
        Err(e @ ForgeError::MalformedCompletion) => skip("MalformedCompletion", e.to_string()),
        Err(e @ ForgeError::UngroundableAnswer) => skip("UngroundableAnswer", e.to_string()),
        Err(e) => Err(e.into()),
    }
}

/// Builds, validates, splits and (optionally) mixes. Provider failures,
/// unparsable completions and ungroundable answers skip the sample and are
/// logged; any other failure aborts.
pub fn forge(
    images: &[ImageRecord],
    kb: &KnowledgeBase,
    provider: &dyn CompletionProvider,
    opts: &ForgeOptions,
) -> Result<ForgeOutput> {
    let mut seen = BTreeSet::new();
    if let Some(dup) = images.iter().find(|i| !seen.insert(i.id.as_str())) {
        return Err(Error::Input(format!("duplicate image id {:?}", dup.id)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut perspectives: Vec<Perspective> = opts.perspectives.clone();
    perspectives.sort();
    perspectives.dedup();

    let mut samples = Vec::new();
    let mut log = ForgeLog {
        seed: opts.seed,
        perspectives: BTreeMap::new(),
        skipped: Vec::new(),
        splits: SplitSizes::default(),
        mix: None,
    };
    for &p in &perspectives {
        let outcomes: Vec<Result<Outcome>> = pool.install(|| {
            images
                .par_iter()
                .map(|img| build_one(img, p, kb, provider, opts))
                .collect()
        });
        let mut built = Vec::new();
        let mut plog = PerspectiveLog {
            images: images.len(),
            ..PerspectiveLog::default()
        };
        for o in outcomes {
            match o? {
                Outcome::Built(s) => built.push(*s),
                Outcome::Skipped(r) => {
                    plog.skipped += 1;
                    log.skipped.push(r);
                }
            }
        }
        plog.generated = built.len();
        log.perspectives.insert(p.as_str().into(), plog);
        samples.push((p, built));
    }

    let violations: Vec<String> = samples
        .iter()
        .flat_map(|(_, v)| v)
        .filter_map(|s| s.validate().err().map(|e| format!("{}: {e}", s.id)))
        .collect();
    if !violations.is_empty() {
        return Err(Error::Validation {
            message: format!("{} samples violate the dataset schema", violations.len()),
            details: violations,
        });
    }

    let mut splits = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut train_by_source: Vec<Vec<SampleRecord>> = vec![Vec::new(); MIX_SOURCES];
    let mut stats = DatasetStats::default();
    for (p, built) in &samples {
        let records: Vec<SampleRecord> = built.iter().map(SampleRecord::from).collect();
        let part = split(
            records,
            opts.ratios,
            seed::derive_seed(opts.seed, &format!("split/{p}")),
            |r| opts.exclude.contains(&r.id),
        )?;
        for (name, list) in [
            ("train", &part.train),
            ("val", &part.val),
            ("test", &part.test),
        ] {
            for r in list {
                stats.add(name, &r.perspective, &r.modality);
            }
        }
        train_by_source[p.index()] = part.train.clone();
        splits.train.extend(part.train);
        splits.val.extend(part.val);
        splits.test.extend(part.test);
    }
    log.splits = SplitSizes {
        train: splits.train.len(),
        val: splits.val.len(),
        test: splits.test.len(),
    };

    let mixed = match &opts.mix {
        None => None,
        Some(m) => {
            train_by_source[MIX_SOURCES - 1] = m.extra.clone();
            let count = m.count.unwrap_or(splits.train.len());
            let drawn = mix(
                &train_by_source,
                &m.weights,
                seed::derive_seed(opts.seed, "mix"),
                count,
            )?;
            let mut per_source = vec![0; MIX_SOURCES];
            for (s, _) in &drawn {
                per_source[*s] += 1;
            }
            log.mix = Some(MixLog { count, per_source });
            Some(drawn.into_iter().map(|(_, r)| r).collect())
        }
    };

    Ok(ForgeOutput {
        samples,
        splits,
        mix: mixed,
        stats,
        log,
    })
}

/// Writes `p<n>.jsonl`, `splits/{train,val,test}.jsonl`, `stats.json`,
/// `forge_log.json` and, when mixing, `mix.jsonl` under `out`.
pub fn write_output(out: &Path, f: &ForgeOutput) -> Result<()> {
    for (p, samples) in &f.samples {
        let records: Vec<SampleRecord> = samples.iter().map(SampleRecord::from).collect();
        io::write_atomic(
            &out.join(format!("{p}.jsonl")),
            io::to_jsonl(&records).as_bytes(),
        )?;
    }
    let splits = out.join("splits");
    for (name, list) in [
        ("train", &f.splits.train),
        ("val", &f.splits.val),
        ("test", &f.splits.test),
    ] {
        io::write_atomic(
            &splits.join(format!("{name}.jsonl")),
            io::to_jsonl(list).as_bytes(),
        )?;
    }
    if let Some(m) = &f.mix {
        io::write_atomic(&out.join("mix.jsonl"), io::to_jsonl(m).as_bytes())?;
    }
    io::write_atomic(
        &out.join("stats.json"),
        io::to_json_pretty(&f.stats).as_bytes(),
    )?;
    io::write_atomic(
        &out.join("forge_log.json"),
        io::to_json_pretty(&f.log).as_bytes(),
    )?;
    Ok(())
}
