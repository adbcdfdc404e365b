//! Per-method metrics, the cost/quality frontier export and the k sweep.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::ScaffoldKind;
use crate::envcore::{EnvKind, TaskSpec};
use crate::error::{Error, Result};
use crate::hints::HintBank;
use crate::llmio::Backend;
use crate::rollout::{run_split, PolicyConfig, Trajectory};
use crate::util::write_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Base,
    Rag,
    SftStudent,
    DistillStudent,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Rag => "rag",
            Method::SftStudent => "sft_student",
            Method::DistillStudent => "distill_student",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Method::Base),
            "rag" => Ok(Method::Rag),
            "sft_student" => Ok(Method::SftStudent),
            "distill_student" => Ok(Method::DistillStudent),
            other => Err(Error::Invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub env_kind: EnvKind,
    pub scaffold: ScaffoldKind,
    pub success_rate: f64,
    pub mean_score: f64,
    pub tokens_per_episode: f64,
    pub steps_per_episode: f64,
    pub episode_count: usize,
}

impl MetricsRow {
    /// Success rate in percent for house, mean score for shop.
    pub fn success_or_score(&self) -> f64 {
        match self.env_kind {
            EnvKind::House => 100.0 * self.success_rate,
            EnvKind::Shop => self.mean_score,
        }
    }
}

/// Per-episode means over every trajectory, failures included.
pub fn aggregate(trajectories: &[Trajectory], method: Method) -> Result<MetricsRow> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Invalid("cannot aggregate an empty batch".into()))?;
    let n = trajectories.len() as f64;
    let mean = |f: &dyn Fn(&Trajectory) -> f64| trajectories.iter().map(f).sum::<f64>() / n;
    Ok(MetricsRow {
        method,
        env_kind: first.task.env_kind,
        scaffold: first.scaffold,
        success_rate: mean(&|t| f64::from(u8::from(t.outcome.success))),
        mean_score: mean(&|t| t.outcome.score),
        tokens_per_episode: mean(&|t| t.ledger.total as f64),
        steps_per_episode: mean(&|t| f64::from(t.outcome.steps_used)),
        episode_count: trajectories.len(),
    })
}

pub fn frontier_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("method,scaffold,tokens_per_episode,success_or_score\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.2}",
            r.method.as_str(),
            r.scaffold,
            r.tokens_per_episode,
            r.success_or_score()
        );
    }
    out
}

pub fn export_frontier(rows: &[MetricsRow], out_path: &Path) -> Result<()> {
    write_bytes(out_path, frontier_csv(rows).as_bytes())
}

/// Fixed-width text table: method, scaffold, tokens, steps, success or score.
pub fn format_table(rows: &[MetricsRow]) -> String {
    let mut out = format!(
        "{:<16} {:<9} {:>14} {:>13} {:>14} {:>9}\n",
        "Method", "Scaffold", "Tokens/Episode", "Steps/Episode", "Success/Score", "Episodes"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:<9} {:>14.1} {:>13.2} {:>14.2} {:>9}",
            r.method.as_str(),
            r.scaffold,
            r.tokens_per_episode,
            r.steps_per_episode,
            r.success_or_score(),
            r.episode_count
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub mean_hints: f64,
    pub metrics: MetricsRow,
}

/// One rag batch per `k`. `backend_for(k)` supplies the backend for each
/// batch, so a scripted backend can replay the same transcripts every time.
pub fn k_sweep(
    tasks: &[TaskSpec],
    ks: &[usize],
    policy: &PolicyConfig,
    bank: &HintBank,
    backend_for: &dyn Fn(usize) -> Result<Arc<dyn Backend>>,
    parallelism: usize,
) -> Result<Vec<KSweepRow>> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let policy = PolicyConfig { k, ..policy.clone() };
        let backend = backend_for(k)?;
        let batch = run_split(tasks, &policy, backend.as_ref(), Some(bank), parallelism)?;
        let hints: usize = batch
            .iter()
            .map(|t| t.hint_block.as_ref().map_or(0, |b| b.hints.len()))
            .sum();
        rows.push(KSweepRow {
            k,
            mean_hints: hints as f64 / batch.len().max(1) as f64,
            metrics: aggregate(&batch, policy_method(&policy))?,
        });
    }
    Ok(rows)
}

fn policy_method(policy: &PolicyConfig) -> Method {
    match policy.mode {
        crate::rollout::Mode::Base => Method::Base,
        crate::rollout::Mode::Rag => Method::Rag,
    }
}

pub fn format_k_sweep(rows: &[KSweepRow]) -> String {
    let mut out = format!(
        "{:>3} {:>10} {:>14} {:>13} {:>14}\n",
        "k", "Hints/Ep", "Tokens/Episode", "Steps/Episode", "Success/Score"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} {:>10.2} {:>14.1} {:>13.2} {:>14.2}",
            r.k,
            r.mean_hints,
            r.metrics.tokens_per_episode,
            r.metrics.steps_per_episode,
            r.metrics.success_or_score()
        );
    }
    out
}
