//! Command-line front end. [`run`] returns the process exit code; the
//! binary is a thin wrapper around it.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use groundkit_core::aligner::gradcheck::{
    gradcheck_case, run_case, tolerance, DEFAULT_CASES, DEFAULT_EPS,
};
use groundkit_core::forge::{
    CompletionProvider, CompletionRequest, Perspective, ProviderError, ProviderErrorKind,
    SplitRatios,
};
use groundkit_core::grounded::parse_report;
use groundkit_core::ParseMode;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{exit, Error, Result};
use crate::eval::{align, evaluate};
use crate::io;
use crate::pipeline::{forge, write_output, ForgeOptions, MixOptions};
use crate::provider::{HttpProvider, StubProvider};
use crate::stats::dataset_stats;
use crate::wire::{PredictionRecord, SampleRecord};

#[derive(Debug, Parser)]
#[command(
    name = "groundkit",
    version,
    about = "Grounded medical dialogue datasets and metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the four-perspective dataset from a mask manifest.
    Forge(ForgeArgs),
    /// Score predictions against gold records.
    Eval(EvalArgs),
    /// Validate grounded responses, one per line.
    Parse(ParseArgs),
    /// Finite-difference check of the aligner's analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Count samples per perspective, modality and split.
    Stats(StatsArgs),
}

/// `--strict` / `--lenient` pair; `None` when neither is given.
#[derive(Debug, Clone, Copy, Default, Args)]
pub struct Strictness {
    /// Reject anything outside the canonical form.
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Tolerate recoverable deviations.
    #[arg(long)]
    lenient: bool,
}

impl Strictness {
    fn get(self) -> Option<bool> {
        match (self.strict, self.lenient) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

/// Forge settings. Every field may also come from the `--config` JSON
/// object (same names, snake_case); flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeArgs {
    /// JSONL manifest of images with RLE label masks.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSON array of `{label, text, source}` knowledge entries.
    #[arg(long)]
    pub knowledge: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of p1,p2,p3,p4 (default all).
    #[arg(long, value_delimiter = ',')]
    pub perspectives: Option<Vec<String>>,
    /// Completion endpoint; the bearer token is read from PROVIDER_API_KEY.
    #[arg(long)]
    pub provider_url: Option<String>,
    /// Directory of canned completions named by prompt SHA-256.
    #[arg(long)]
    pub provider_stub: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub strictness: Strictness,
    /// Config-file counterpart of --strict/--lenient.
    #[arg(skip)]
    pub strict: Option<bool>,
    /// train,val,test proportions; normalized to sum to one.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Mixing weights for p1,p2,p3,p4,extra; enables mix.jsonl.
    #[arg(long, value_delimiter = ',')]
    pub mix_weights: Option<Vec<f64>>,
    /// Number of mixed draws (default: training-set size).
    #[arg(long)]
    pub mix_count: Option<usize>,
    /// JSONL of external records used as the fifth mixing source.
    #[arg(long)]
    pub mix_extra: Option<PathBuf>,
    /// File of sample ids (one per line) kept out of val and test.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// JSON config file.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl ForgeArgs {
    /// Fills unset fields from `base`.
    fn or(self, base: ForgeArgs) -> ForgeArgs {
        ForgeArgs {
            manifest: self.manifest.or(base.manifest),
            knowledge: self.knowledge.or(base.knowledge),
            out: self.out.or(base.out),
            seed: self.seed.or(base.seed),
            perspectives: self.perspectives.or(base.perspectives),
            provider_url: self.provider_url.or(base.provider_url),
            provider_stub: self.provider_stub.or(base.provider_stub),
            workers: self.workers.or(base.workers),
            strictness: Strictness::default(),
            strict: self.strictness.get().or(self.strict).or(base.strict),
            ratios: self.ratios.or(base.ratios),
            mix_weights: self.mix_weights.or(base.mix_weights),
            mix_count: self.mix_count.or(base.mix_count),
            mix_extra: self.mix_extra.or(base.mix_extra),
            exclude: self.exclude.or(base.exclude),
            config: None,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Gold dataset JSONL.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Prediction JSONL: `{id, response, masks, answer?}`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parallel shards (default: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Parse predictions strictly (default lenient).
    #[command(flatten)]
    #[serde(skip)]
    pub strictness: Strictness,
    #[arg(skip)]
    pub strict: Option<bool>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl EvalArgs {
    fn or(self, base: EvalArgs) -> EvalArgs {
        EvalArgs {
            gold: self.gold.or(base.gold),
            predictions: self.predictions.or(base.predictions),
            out: self.out.or(base.out),
            workers: self.workers.or(base.workers),
            strictness: Strictness::default(),
            strict: self.strictness.get().or(self.strict).or(base.strict),
            config: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ParseArgs {
    /// Text file (one response per line) or `.jsonl` of strings or
    /// objects with a `response` or `gold` field.
    pub input: PathBuf,
    /// Accept recoverable marker drift (default strict).
    #[command(flatten)]
    pub strictness: Strictness,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// First case seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_CASES)]
    pub cases: u64,
    /// Central-difference step; the tolerance widens to 10·eps above 1e-5.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Negate one analytic gradient before checking.
    #[arg(long, hide = true)]
    pub inject_sign_flip: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Forge output directory (reads `splits/*.jsonl`).
    pub dir: PathBuf,
}

/// Parses `args`, runs the command and returns the exit code. Results go to
/// `stdout`; error JSON goes to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::INPUT
            } else {
                exit::OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Forge(a) => cmd_forge(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Parse(a) => cmd_parse(&a, stdout),
        Command::Gradcheck(a) => cmd_gradcheck(&a, stdout),
        Command::Stats(a) => cmd_stats(&a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json());
            e.exit_code()
        }
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = io::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::format(p, e.line(), e))
        }
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("missing required --{flag}")))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Stands in when no provider is configured; only reached if a generated
/// perspective is requested.
struct NoProvider;

impl CompletionProvider for NoProvider {
    fn complete(&self, _: &CompletionRequest) -> std::result::Result<String, ProviderError> {
        Err(ProviderError::new(
            ProviderErrorKind::Unauthorized,
            "no provider configured",
        ))
    }
}

fn parse_perspectives(names: &[String]) -> Result<Vec<Perspective>> {
    names
        .iter()
        .map(|n| {
            n.parse::<Perspective>()
                .map_err(|e| Error::Config(e.to_string()))
        })
        .collect()
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn parse_ratios(r: &[f64]) -> Result<SplitRatios> {
    if r.len() != 3 {
        return Err(Error::Config(format!(
            "--ratios needs 3 values, got {}",
            r.len()
        )));
    }
    let sum: f64 = r.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Config("--ratios must have a positive sum".into()));
    }
    Ok(SplitRatios::new(r[0] / sum, r[1] / sum, r[2] / sum)?)
}

fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    Ok(io::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn cmd_forge(args: ForgeArgs, stdout: &mut dyn Write) -> Result<i32> {
    let base: ForgeArgs = load_config(args.config.as_deref())?;
    let a = args.or(base);
    let manifest = required(&a.manifest, "manifest")?;
    let out = required(&a.out, "out")?;

    let mut opts = ForgeOptions {
        seed: a.seed.unwrap_or(0),
        workers: a.workers.unwrap_or(0),
        strict: a.strict.unwrap_or(true),
        ..ForgeOptions::default()
    };
    if let Some(p) = &a.perspectives {
        opts.perspectives = parse_perspectives(p)?;
    }
    if let Some(r) = &a.ratios {
        opts.ratios = parse_ratios(r)?;
    }
    if let Some(path) = &a.exclude {
        opts.exclude = read_id_list(path)?;
    }
    if a.mix_weights.is_some() || a.mix_count.is_some() || a.mix_extra.is_some() {
        let extra = match &a.mix_extra {
            Some(path) => io::read_jsonl::<SampleRecord>(path)?,
            None => Vec::new(),
        };
        opts.mix = Some(MixOptions {
            weights: a
                .mix_weights
                .clone()
                .unwrap_or_else(|| vec![1.0, 2.0, 2.0, 1.0, 1.0]),
            count: a.mix_count,
            extra,
        });
    }

    let images = io::load_manifest(manifest)?;
    let needs_provider = opts.perspectives.iter().any(|p| p.is_generated());
    let kb = match &a.knowledge {
        Some(path) => io::load_knowledge(path)?,
        None if needs_provider => return Err(Error::Config("missing required --knowledge".into())),
        None => Default::default(),
    };
    let provider: Box<dyn CompletionProvider> = match (&a.provider_stub, &a.provider_url) {
        (Some(dir), _) => Box::new(StubProvider::new(dir)),
        (None, Some(url)) => Box::new(HttpProvider::from_env(url.clone())),
        (None, None) if needs_provider => {
            return Err(Error::Config(
                "p3/p4 need --provider-url or --provider-stub".into(),
            ))
        }
        (None, None) => Box::new(NoProvider),
    };

    let result = forge(&images, &kb, provider.as_ref(), &opts)?;
    write_output(out, &result)?;
    emit(stdout, &io::to_json_pretty(&result.log))?;
    Ok(exit::OK)
}

pub fn cmd_eval(args: EvalArgs, stdout: &mut dyn Write) -> Result<i32> {
    let base: EvalArgs = load_config(args.config.as_deref())?;
    let a = args.or(base);
    let gold: Vec<SampleRecord> = io::read_jsonl(required(&a.gold, "gold")?)?;
    let preds: Vec<PredictionRecord> = io::read_jsonl(required(&a.predictions, "predictions")?)?;
    let mode = if a.strict.unwrap_or(false) {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let pairs = align(&gold, &preds)?;
    let pool = pool(a.workers)?;
    let shards = pool.current_num_threads();
    let report = pool.install(|| evaluate(&pairs, mode, shards))?;
    let text = io::to_json_pretty(&report.to_json());
    match &a.out {
        Some(path) => io::write_atomic(path, text.as_bytes())?,
        None => emit(stdout, &text)?,
    }
    Ok(exit::OK)
}

#[derive(Deserialize)]
struct ResponseLine {
    #[serde(alias = "gold")]
    response: String,
}

fn parse_inputs(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = io::read_to_string(path)?;
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    text.lines()
        .enumerate()
        .filter(|(_, l)| !jsonl || !l.trim().is_empty())
        .map(|(i, l)| {
            if !jsonl {
                return Ok((i + 1, l.to_string()));
            }
            let v: Value = serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e))?;
            let s = match v {
                Value::String(s) => s,
                other => {
                    serde_json::from_value::<ResponseLine>(other)
                        .map_err(|e| Error::format(path, i + 1, e))?
                        .response
                }
            };
            Ok((i + 1, s))
        })
        .collect()
}

pub fn cmd_parse(a: &ParseArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mode = if a.strictness.get().unwrap_or(true) {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let mut all_ok = true;
    let mut out = String::new();
    for (line, text) in parse_inputs(&a.input)? {
        let report = parse_report(&text, mode);
        let diagnostics: Vec<Value> = report
            .diagnostics
            .iter()
            .map(|d| json!({ "kind": d.kind.as_str(), "offset": d.byte_offset }))
            .collect();
        let mut v = json!({ "line": line, "ok": report.response.is_some() });
        match &report.response {
            Some(r) => {
                v["entities"] = r.entities().map(|e| e.phrase()).collect::<Vec<_>>().into();
                if !diagnostics.is_empty() {
                    v["diagnostics"] = diagnostics.into();
                }
            }
            None => {
                all_ok = false;
                v["diagnostics"] = diagnostics.into();
            }
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    emit(stdout, &out)?;
    Ok(if all_ok { exit::OK } else { exit::VALIDATION })
}

pub fn cmd_gradcheck(a: &GradcheckArgs, stdout: &mut dyn Write) -> Result<i32> {
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(Error::Config(format!(
            "--eps must be positive, got {}",
            a.eps
        )));
    }
    let tol = tolerance(a.eps);
    let flip = a.inject_sign_flip.as_deref();
    let seeds: Vec<u64> = (a.seed..a.seed + a.cases).collect();
    let reports = pool(a.workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_case(&gradcheck_case(s), a.eps, flip).map(|r| (s, r)))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;

    let mut failing = BTreeSet::new();
    let mut worst = 0.0f64;
    let cases: Vec<Value> = reports
        .iter()
        .map(|(seed, r)| {
            let bad = r.failing(tol);
            failing.extend(bad.iter().map(|s| s.to_string()));
            worst = worst.max(r.max_rel_error());
            json!({
                "seed": seed,
                "max_rel_error": r.max_rel_error(),
                "checked": r.checked,
                "per_param": r.per_param.iter().map(|(n, e)| (n.clone(), json!(e))).collect::<serde_json::Map<_, _>>(),
                "failing": bad,
            })
        })
        .collect();
    let pass = failing.is_empty();
    let report = json!({
        "pass": pass,
        "eps": a.eps,
        "tolerance": tol,
        "max_rel_error": worst,
        "failing_params": failing,
        "cases": cases,
    });
    emit(stdout, &io::to_json_pretty(&report))?;
    Ok(if pass { exit::OK } else { exit::VALIDATION })
}

pub fn cmd_stats(a: &StatsArgs, stdout: &mut dyn Write) -> Result<i32> {
    if !a.dir.is_dir() {
        return Err(Error::Input(format!(
            "{} is not a directory",
            a.dir.display()
        )));
    }
    let stats = dataset_stats(&a.dir)?;
    emit(stdout, &io::to_json_pretty(&stats))?;
    Ok(exit::OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("groundkit").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn parse_reports_entities_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.txt");
        std::fs::write(&path, "a <p>liver<SEG></p>\nb <p>x<SEG>\n").unwrap();
        let (code, out, _) = run_capture(&["parse", path.to_str().unwrap()]);
        assert_eq!(code, 1);
        let lines: Vec<Value> = out
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(
            lines[0],
            json!({"line": 1, "ok": true, "entities": ["liver"]})
        );
        assert_eq!(lines[1]["diagnostics"][0]["kind"], "UnbalancedTag");
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"seed": 7, "strict": false, "workers": 2}"#).unwrap();
        let base: ForgeArgs = load_config(Some(&cfg)).unwrap();
        let flags = ForgeArgs {
            seed: Some(3),
            strictness: Strictness {
                strict: true,
                lenient: false,
            },
            ..Default::default()
        };
        let merged = flags.or(base);
        assert_eq!(
            (merged.seed, merged.strict, merged.workers),
            (Some(3), Some(true), Some(2))
        );

        std::fs::write(&cfg, r#"{"sed": 7}"#).unwrap();
        assert!(load_config::<ForgeArgs>(Some(&cfg)).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["forge", "--bogus"]).0, 2);
        let (code, _, err) = run_capture(&["forge", "--out", "x"]);
        assert_eq!(code, 2);
        assert!(err.contains("--manifest"));
    }

    #[test]
    fn ratios_are_normalized() {
        let r = parse_ratios(&[99.0, 0.5, 0.5]).unwrap();
        assert_eq!(r.counts(1000), (990, 5, 5));
        assert!(parse_ratios(&[1.0, 1.0]).is_err());
    }
}
