//! Training data from trajectories: filtering, hint-free serialization,
//! dataset files with manifests, and purity verification.
//!
//! Examples are rendered from structured trajectory data with no hint block
//! and no few-shot section, so neither can reach the text. The purity
//! verifier checks that independently.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::templates::{self, PREAMBLE_PREFIX, TASK_MARKER};
use crate::agents::{assemble_prompt, parse_live, AgentTurn, PromptAssembly, Scaffold, ScaffoldKind};
use crate::envcore::EnvKind;
use crate::error::{Error, Result};
use crate::hints::{HintBank, BANK_VERSION};
use crate::llmio::count_tokens;
use crate::rollout::{Mode, Trajectory};
use crate::util::{read_jsonl, write_json_pretty, write_jsonl};

pub const MAX_SEQ_LEN: u32 = 1024;
/// Shortest few-shot fragment that counts as leaked scaffolding.
pub const FEW_SHOT_WINDOW: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Sft,
    Distill,
}

impl DatasetKind {
    pub fn source_mode(self) -> Mode {
        match self {
            DatasetKind::Sft => Mode::Base,
            DatasetKind::Distill => Mode::Rag,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Sft => "sft",
            DatasetKind::Distill => "distill",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sft" => Ok(DatasetKind::Sft),
            "distill" => Ok(DatasetKind::Distill),
            other => Err(Error::Invalid(format!("unknown dataset kind `{other}`"))),
        }
    }
}

pub fn label_smoothing(env: EnvKind) -> f64 {
    match env {
        EnvKind::House => 0.0,
        EnvKind::Shop => 0.1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub env_kind: EnvKind,
    pub scaffold: ScaffoldKind,
    pub task_id: String,
    pub label_smoothing: f64,
    pub max_seq_len: u32,
    pub source_mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub text: String,
    pub meta: ExampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterPolicy {
    #[serde(default = "yes")]
    pub require_success: bool,
    #[serde(default = "default_min_score")]
    pub min_score: f64,
    #[serde(default = "default_max_invalid")]
    pub max_invalid: u32,
    #[serde(default = "yes")]
    pub forbid_repeated_noop: bool,
}

fn yes() -> bool {
    true
}

fn default_min_score() -> f64 {
    67.0
}

fn default_max_invalid() -> u32 {
    2
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            require_success: true,
            min_score: default_min_score(),
            max_invalid: default_max_invalid(),
            forbid_repeated_noop: true,
        }
    }
}

/// Why a trajectory was left out. The first failing check wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    WrongMode,
    Aborted,
    Unsuccessful,
    TooManyInvalid,
    RepeatedNoop,
}

pub fn exclusion(t: &Trajectory, kind: DatasetKind, policy: &FilterPolicy) -> Option<Exclusion> {
    if t.mode != kind.source_mode() {
        return Some(Exclusion::WrongMode);
    }
    if t.audit.aborted {
        return Some(Exclusion::Aborted);
    }
    if policy.require_success {
        let good = match t.task.env_kind {
            EnvKind::House => t.outcome.success,
            EnvKind::Shop => t.outcome.score >= policy.min_score,
        };
        if !good {
            return Some(Exclusion::Unsuccessful);
        }
    }
    if t.audit.invalid_action_count > policy.max_invalid {
        return Some(Exclusion::TooManyInvalid);
    }
    if policy.forbid_repeated_noop && t.audit.has_repeated_noop {
        return Some(Exclusion::RepeatedNoop);
    }
    None
}

pub fn filter_for_training<'a>(
    trajectories: &'a [Trajectory],
    kind: DatasetKind,
    policy: &FilterPolicy,
) -> Vec<&'a Trajectory> {
    trajectories
        .iter()
        .filter(|t| exclusion(t, kind, policy).is_none())
        .collect()
}

/// Renders a trajectory as one training sequence: system header, task
/// marker, initial observation and every turn. Examples over the proxy
/// token budget are refused.
pub fn serialize_trajectory(t: &Trajectory, kind: DatasetKind) -> Result<TrainingExample> {
    let env = t.task.env_kind;
    let scaffold = Scaffold::new(t.scaffold, env);
    let assembly = PromptAssembly {
        env_kind: env,
        system_header: templates::system_header(env).to_string(),
        hint_block: None,
        few_shot: String::new(),
        task_block: t.initial_observation.text.clone(),
        history: t
            .turns
            .iter()
            .map(|r| (r.turn.clone(), r.observation.clone()))
            .collect(),
    };
    let text = assemble_prompt(&assembly, scaffold);
    let tokens = count_tokens(&text);
    if tokens > u64::from(MAX_SEQ_LEN) {
        return Err(Error::TooLong {
            task_id: t.task.id.clone(),
            tokens,
            limit: MAX_SEQ_LEN,
        });
    }
    Ok(TrainingExample {
        text,
        meta: ExampleMeta {
            env_kind: env,
            scaffold: t.scaffold,
            task_id: t.task.id.clone(),
            label_smoothing: label_smoothing(env),
            max_seq_len: MAX_SEQ_LEN,
            source_mode: kind.source_mode(),
        },
    })
}

/// Splits example text back into the initial observation and the turns.
pub fn parse_example(text: &str, env: EnvKind) -> Result<(String, Vec<(AgentTurn, String)>)> {
    let header = templates::system_header(env);
    let body = text
        .strip_prefix(header)
        .and_then(|r| r.strip_prefix(TASK_MARKER))
        .ok_or_else(|| Error::Invalid("example does not start with header and task marker".into()))?;
    let body = body.strip_suffix('\n').unwrap_or(body);
    Ok(parse_live(env, body))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTally {
    pub wrong_mode: usize,
    pub aborted: usize,
    pub unsuccessful: usize,
    pub too_many_invalid: usize,
    pub repeated_noop: usize,
    pub too_long: usize,
}

impl FilterTally {
    pub fn total(&self) -> usize {
        self.wrong_mode + self.aborted + self.unsuccessful + self.too_many_invalid + self.repeated_noop + self.too_long
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub input_count: usize,
    pub kept: usize,
    pub excluded: FilterTally,
    pub bank_version: Option<u32>,
    pub bank_hints: Option<usize>,
    pub few_shot_version: String,
    pub policy: FilterPolicy,
    pub content_sha256: String,
}

/// Filters, serializes in task-id order and writes `out_path` plus
/// `<out_path>.manifest.json`.
pub fn build_dataset(
    trajectories: &[Trajectory],
    kind: DatasetKind,
    policy: &FilterPolicy,
    bank: Option<&HintBank>,
    out_path: &Path,
) -> Result<DatasetManifest> {
    let mut ordered: Vec<&Trajectory> = trajectories.iter().collect();
    ordered.sort_by(|a, b| a.task.id.cmp(&b.task.id));
    let mut tally = FilterTally::default();
    let mut examples = Vec::new();
    for t in ordered {
        match exclusion(t, kind, policy) {
            Some(Exclusion::WrongMode) => tally.wrong_mode += 1,
            Some(Exclusion::Aborted) => tally.aborted += 1,
            Some(Exclusion::Unsuccessful) => tally.unsuccessful += 1,
            Some(Exclusion::TooManyInvalid) => tally.too_many_invalid += 1,
            Some(Exclusion::RepeatedNoop) => tally.repeated_noop += 1,
            None => match serialize_trajectory(t, kind) {
                Ok(ex) => examples.push(ex),
                Err(e @ Error::TooLong { .. }) => {
                    tracing::warn!(error = %e, "dropping example");
                    tally.too_long += 1;
                }
                Err(e) => return Err(e),
            },
        }
    }
    let content_sha256 = write_jsonl(out_path, &examples)?;
    let manifest = DatasetManifest {
        kind,
        input_count: trajectories.len(),
        kept: examples.len(),
        excluded: tally,
        bank_version: bank.map(|_| BANK_VERSION),
        bank_hints: bank.map(HintBank::len),
        few_shot_version: templates::FEW_SHOT_VERSION.to_string(),
        policy: policy.clone(),
        content_sha256,
    };
    write_json_pretty(&manifest_path(out_path), &manifest)?;
    Ok(manifest)
}

pub fn manifest_path(dataset: &Path) -> std::path::PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    dataset.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A bank hint outside the agent's own thoughts.
    HintText,
    /// A few-shot fragment of at least [`FEW_SHOT_WINDOW`] bytes.
    FewShot,
    /// The opening line of an injected hint block.
    Preamble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 0-based line of the dataset file.
    pub example: usize,
    pub task_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurityReport {
    pub examples_scanned: usize,
    pub violations: Vec<Violation>,
    /// Bank hints the agent itself wrote into a thought; kept, not violations.
    pub thought_echoes: usize,
}

impl PurityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn is_thought_line(line: &str) -> bool {
    line.starts_with("> think:") || line.starts_with("Action: think[")
}

/// Every `FEW_SHOT_WINDOW`-byte window of the assets that starts and ends on
/// a character boundary.
fn windows<'a>(assets: &[&'a str]) -> HashSet<&'a str> {
    let mut set = HashSet::new();
    for a in assets {
        for i in 0..a.len().saturating_sub(FEW_SHOT_WINDOW - 1) {
            if let Some(w) = a.get(i..i + FEW_SHOT_WINDOW) {
                set.insert(w);
            }
        }
    }
    set
}

fn first_window_hit<'t>(text: &'t str, set: &HashSet<&str>) -> Option<&'t str> {
    (0..text.len().saturating_sub(FEW_SHOT_WINDOW - 1))
        .filter_map(|i| text.get(i..i + FEW_SHOT_WINDOW))
        .find(|w| set.contains(w))
}

pub fn scan_examples(examples: &[TrainingExample], hints: &[&str], few_shot: &[&str]) -> PurityReport {
    let set = windows(few_shot);
    let hints: std::collections::BTreeSet<&str> = hints.iter().copied().filter(|h| !h.is_empty()).collect();
    let mut report = PurityReport {
        examples_scanned: examples.len(),
        ..PurityReport::default()
    };
    for (i, ex) in examples.iter().enumerate() {
        let mut push = |kind, detail: String| {
            report.violations.push(Violation {
                example: i,
                task_id: ex.meta.task_id.clone(),
                kind,
                detail,
            })
        };
        for line in ex.text.lines() {
            for h in hints.iter().filter(|h| line.contains(**h)) {
                if is_thought_line(line) {
                    report.thought_echoes += 1;
                } else {
                    push(ViolationKind::HintText, h.to_string());
                }
            }
        }
        if let Some(w) = first_window_hit(&ex.text, &set) {
            push(ViolationKind::FewShot, w.to_string());
        }
        if ex.text.contains(PREAMBLE_PREFIX) {
            push(ViolationKind::Preamble, PREAMBLE_PREFIX.to_string());
        }
    }
    report
}

/// Scans a dataset file for bank hints, few-shot fragments and hint-block preambles.
pub fn verify_purity(dataset_path: &Path, bank: &HintBank, few_shot: &[&str]) -> Result<PurityReport> {
    let examples: Vec<TrainingExample> = read_jsonl(dataset_path)?;
    Ok(scan_examples(&examples, &bank.texts(), few_shot))
}
