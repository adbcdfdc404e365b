//! Failure-driven hint extraction and the deduplicated, category-partitioned bank.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envcore::{EnvKind, EpisodeOutcome, TaskSpec};
use crate::error::{Error, Result};
use crate::llmio::{self, Backend, CompletionRequest, CompletionResult, JsonShape, Tag};
use crate::util::{fill_template, write_json_pretty};

pub const MAX_HINT_CHARS: usize = 120;
pub const MAX_HINTS_PER_FAILURE: usize = 4;
/// Two hints in one partition with similarity at or above this are duplicates.
pub const SIMILARITY_THRESHOLD: f64 = 0.85;
/// The threshold as an exact ratio, used for the dedup decision itself.
const THRESHOLD_RATIO: (usize, usize) = (85, 100);
pub const BANK_VERSION: u32 = 1;
pub const EXTRACTION_ATTEMPTS: u32 = 2;
pub const EXTRACTION_MAX_TOKENS: u32 = 512;

pub const PLACEHOLDERS: [&str; 9] = [
    "object",
    "container",
    "location",
    "page",
    "item",
    "size",
    "color",
    "attribute",
    "material",
];

pub const HOUSE_EXTRACTION_TEMPLATE: &str = include_str!("../assets/prompts/extract_house.txt");
pub const SHOP_EXTRACTION_TEMPLATE: &str = include_str!("../assets/prompts/extract_shop.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub category: String,
    pub text: String,
    pub source_episode: String,
}

impl Hint {
    /// Checks length, emptiness and the placeholder vocabulary.
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::BankInvariant("empty hint text".into()));
        }
        let n = self.text.chars().count();
        if n > MAX_HINT_CHARS {
            return Err(Error::BankInvariant(format!("hint has {n} chars: {}", self.text)));
        }
        for p in placeholders(&self.text) {
            if !PLACEHOLDERS.contains(&p.as_str()) {
                return Err(Error::BankInvariant(format!("unknown placeholder {{{p}}}")));
            }
        }
        Ok(())
    }
}

fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let tail = &rest[open + 1..];
        match tail.find('}') {
            Some(close) => {
                out.push(tail[..close].to_string());
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Trims, collapses whitespace, strips trailing periods and lowercases
/// placeholder names. Other casing is kept.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut s = collapsed.as_str();
    loop {
        let t = s.trim_end().trim_end_matches('.');
        if t == s {
            break;
        }
        s = t;
    }
    let mut out = String::with_capacity(s.len());
    let mut inside = false;
    for c in s.chars() {
        match c {
            '{' => inside = true,
            '}' => inside = false,
            _ => {}
        }
        if inside {
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Character-level Levenshtein distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`, in characters. Two empty strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / n as f64
}

/// `similarity(a, b) >= 0.85`, decided in integer arithmetic so boundary
/// cases such as 3 edits over 20 characters are not lost to rounding.
pub fn is_near_duplicate(a: &str, b: &str) -> bool {
    let n = a.chars().count().max(b.chars().count());
    let d = edit_distance(a, b);
    THRESHOLD_RATIO.1 * (n - d) >= THRESHOLD_RATIO.0 * n
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankProvenance {
    pub backend: String,
    pub failures_seen: usize,
    pub failures_skipped: usize,
    pub hints_proposed: usize,
    pub hints_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct BankEntry {
    text: String,
    source_episode: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BankFile {
    version: u32,
    env_kind: EnvKind,
    partitions: BTreeMap<String, Vec<BankEntry>>,
    #[serde(default)]
    provenance: BankProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintBank {
    pub env_kind: EnvKind,
    partitions: BTreeMap<String, Vec<Hint>>,
    pub provenance: BankProvenance,
}

impl HintBank {
    /// An empty bank with one partition per category of `env`.
    pub fn new(env: EnvKind) -> Self {
        HintBank {
            env_kind: env,
            partitions: env.categories().iter().map(|c| (c.to_string(), Vec::new())).collect(),
            provenance: BankProvenance::default(),
        }
    }

    pub fn partition(&self, category: &str) -> &[Hint] {
        self.partitions.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn partitions(&self) -> impl Iterator<Item = (&str, &[Hint])> {
        self.partitions.iter().map(|(c, h)| (c.as_str(), h.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All hint texts, for purity scans.
    pub fn texts(&self) -> Vec<&str> {
        self.partitions.values().flatten().map(|h| h.text.as_str()).collect()
    }

    /// Adds a normalized hint unless its partition already holds a near
    /// duplicate. Returns whether it was inserted.
    pub fn dedup_insert(&mut self, hint: Hint) -> Result<bool> {
        let part = self
            .partitions
            .get_mut(&hint.category)
            .ok_or_else(|| Error::UnknownCategory {
                env: self.env_kind.to_string(),
                category: hint.category.clone(),
            })?;
        if part.iter().any(|h| is_near_duplicate(&h.text, &hint.text)) {
            return Ok(false);
        }
        part.push(hint);
        Ok(true)
    }

    /// Re-checks every bank invariant.
    pub fn validate(&self) -> Result<()> {
        for (category, hints) in &self.partitions {
            if !self.env_kind.has_category(category) {
                return Err(Error::UnknownCategory {
                    env: self.env_kind.to_string(),
                    category: category.clone(),
                });
            }
            for (i, h) in hints.iter().enumerate() {
                h.validate()?;
                if h.category != *category {
                    return Err(Error::BankInvariant(format!(
                        "hint filed under `{category}` has category `{}`",
                        h.category
                    )));
                }
                for other in &hints[..i] {
                    if is_near_duplicate(&other.text, &h.text) {
                        let s = similarity(&other.text, &h.text);
                        return Err(Error::BankInvariant(format!(
                            "near-duplicate hints in `{category}` (similarity {s:.3}): `{}` / `{}`",
                            other.text, h.text
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let file = BankFile {
            version: BANK_VERSION,
            env_kind: self.env_kind,
            partitions: self
                .partitions
                .iter()
                .map(|(c, hs)| {
                    let entries = hs
                        .iter()
                        .map(|h| BankEntry {
                            text: h.text.clone(),
                            source_episode: h.source_episode.clone(),
                        })
                        .collect();
                    (c.clone(), entries)
                })
                .collect(),
            provenance: self.provenance.clone(),
        };
        write_json_pretty(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: BankFile = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if file.version != BANK_VERSION {
            return Err(Error::BankVersion {
                expected: BANK_VERSION,
                found: file.version,
            });
        }
        let mut bank = HintBank::new(file.env_kind);
        bank.provenance = file.provenance;
        for (category, entries) in file.partitions {
            let hints = entries
                .into_iter()
                .map(|e| Hint {
                    category: category.clone(),
                    text: e.text,
                    source_episode: e.source_episode,
                })
                .collect();
            bank.partitions.insert(category, hints);
        }
        bank.validate()?;
        Ok(bank)
    }
}

/// A failed episode, as handed to the extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub task: TaskSpec,
    pub goal_text: String,
    pub initial_observation: String,
    /// `(action, observation)` pairs in order.
    pub steps: Vec<(String, String)>,
    pub outcome: EpisodeOutcome,
}

fn one_line(text: &str) -> String {
    text.lines().collect::<Vec<_>>().join(" | ")
}

/// Renders the trajectory section: the initial observation, then one
/// `action → observation` line per step, with observation newlines folded.
pub fn render_failure_trajectory(failure: &FailureRecord) -> String {
    let mut lines = vec![format!("(initial) \u{2192} {}", one_line(&failure.initial_observation))];
    for (a, o) in &failure.steps {
        lines.push(format!("{} \u{2192} {}", one_line(a), one_line(o)));
    }
    lines.join("\n")
}

pub fn extraction_prompt(failure: &FailureRecord) -> String {
    let trajectory = render_failure_trajectory(failure);
    let category = failure.task.category.as_str();
    match failure.task.env_kind {
        EnvKind::House => fill_template(
            HOUSE_EXTRACTION_TEMPLATE,
            &[
                ("env_type", category),
                ("goal_txt", &failure.goal_text),
                ("failure_trajectory", &trajectory),
            ],
        ),
        EnvKind::Shop => fill_template(
            SHOP_EXTRACTION_TEMPLATE,
            &[
                ("category", category),
                ("goal", &failure.goal_text),
                ("failure_trajectory", &trajectory),
            ],
        ),
    }
}

/// Hints from one extraction call, plus the calls that produced them.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub hints: Vec<Hint>,
    pub calls: Vec<CompletionResult>,
    /// Proposed hints dropped by validation or the per-failure cap.
    pub rejected: usize,
}

/// Asks the backend for 1 to 4 hints about a failure.
///
/// Unparseable output is retried once; a second failure is returned as the
/// error. Hints beyond the fourth are dropped with a warning, as are hints
/// that break the length or placeholder rules.
pub fn extract_hints(failure: &FailureRecord, backend: &dyn Backend) -> Result<Extraction> {
    if failure.outcome.success {
        return Err(Error::Invalid(format!("{} is not a failure", failure.task.id)));
    }
    let request = CompletionRequest::single(Tag::HintExtraction, extraction_prompt(failure), EXTRACTION_MAX_TOKENS)
        .with_session(Some(&failure.task.id));
    let mut calls = Vec::new();
    let mut last = None;
    for _ in 0..EXTRACTION_ATTEMPTS {
        let result = backend.complete(&request)?;
        let parsed = llmio::parse_strict_json(&result.text, JsonShape::Hints);
        calls.push(result);
        match parsed {
            Ok(value) => {
                let mut texts = llmio::hint_texts(&value);
                let mut rejected = 0;
                if texts.len() > MAX_HINTS_PER_FAILURE {
                    tracing::warn!(
                        episode = %failure.task.id,
                        proposed = texts.len(),
                        "extractor returned too many hints; keeping the first {MAX_HINTS_PER_FAILURE}"
                    );
                    rejected += texts.len() - MAX_HINTS_PER_FAILURE;
                    texts.truncate(MAX_HINTS_PER_FAILURE);
                }
                let mut hints = Vec::new();
                for text in texts {
                    let hint = Hint {
                        category: failure.task.category.clone(),
                        text: normalize(&text),
                        source_episode: failure.task.id.clone(),
                    };
                    match hint.validate() {
                        Ok(()) => hints.push(hint),
                        Err(e) => {
                            tracing::warn!(episode = %failure.task.id, error = %e, "dropping hint");
                            rejected += 1;
                        }
                    }
                }
                return Ok(Extraction { hints, calls, rejected });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::ParseFailure("no extraction attempt".into())))
}

/// Extracts hints from every failure and folds them into a fresh bank.
/// Failures whose extraction errors are logged and skipped.
pub fn build_bank(env: EnvKind, failures: &[FailureRecord], backend: &dyn Backend) -> Result<HintBank> {
    let mut bank = HintBank::new(env);
    bank.provenance.backend = backend.kind().to_string();
    for failure in failures {
        if failure.task.env_kind != env {
            return Err(Error::Invalid(format!(
                "{} is a {} task, bank is {env}",
                failure.task.id, failure.task.env_kind
            )));
        }
        bank.provenance.failures_seen += 1;
        let extraction = match extract_hints(failure, backend) {
            Ok(x) => x,
            Err(e @ (Error::ParseFailure(_) | Error::SchemaViolation(_))) => {
                tracing::warn!(episode = %failure.task.id, error = %e, "skipping failure");
                bank.provenance.failures_skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        bank.provenance.hints_proposed += extraction.hints.len() + extraction.rejected;
        bank.provenance.hints_rejected += extraction.rejected;
        for hint in extraction.hints {
            bank.dedup_insert(hint)?;
        }
    }
    Ok(bank)
}
