//! Episode execution for base and retrieval-augmented policies, with token
//! ledger and quality audit.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{next_turn, AgentTurn, PromptAssembly, Scaffold, ScaffoldKind};
use crate::envcore::{self, EnvKind, EpisodeOutcome, Observation, TaskSpec};
use crate::error::{Error, Result};
use crate::hints::{FailureRecord, HintBank};
use crate::llmio::{count_tokens, Backend, CompletionResult};
use crate::retrieval::{self, HintBlock, RetrievalQuery, ScorerKind, DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Rag,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Rag => "rag",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Mode::Base),
            "rag" => Ok(Mode::Rag),
            other => Err(Error::Invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// How the injected block is billed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockCharge {
    /// Once per agent call, since the block rides in every re-sent prompt.
    #[default]
    PerStep,
    /// Once per episode.
    Once,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub mode: Mode,
    pub scaffold: ScaffoldKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_scorer")]
    pub scorer: ScorerKind,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub block_charge: BlockCharge,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_scorer() -> ScorerKind {
    ScorerKind::Rerank
}

impl PolicyConfig {
    pub fn base(scaffold: ScaffoldKind) -> Self {
        PolicyConfig {
            mode: Mode::Base,
            scaffold,
            k: DEFAULT_K,
            scorer: ScorerKind::Rerank,
            temperature: 0.0,
            block_charge: BlockCharge::PerStep,
        }
    }

    pub fn rag(scaffold: ScaffoldKind, k: usize, scorer: ScorerKind) -> Self {
        PolicyConfig {
            mode: Mode::Rag,
            k,
            scorer,
            ..PolicyConfig::base(scaffold)
        }
    }
}

/// Per-episode token accounting. `total` is the sum of the four parts;
/// `prompt_tokens` excludes the hint block, which is billed separately.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub retrieval_tokens: u64,
    pub hint_block_tokens_per_step: u64,
    pub hint_block_tokens: u64,
    pub total: u64,
    pub block_charge: BlockCharge,
    pub agent_calls: u32,
}

impl TokenLedger {
    fn agent_call(&mut self, result: &CompletionResult) {
        self.agent_calls += 1;
        self.prompt_tokens += result.prompt_tokens.saturating_sub(self.hint_block_tokens_per_step);
        self.completion_tokens += result.completion_tokens;
    }

    fn close(&mut self) {
        self.hint_block_tokens = match self.block_charge {
            BlockCharge::PerStep => self.hint_block_tokens_per_step * u64::from(self.agent_calls),
            BlockCharge::Once if self.agent_calls > 0 => self.hint_block_tokens_per_step,
            BlockCharge::Once => 0,
        };
        self.total = self.prompt_tokens + self.completion_tokens + self.retrieval_tokens + self.hint_block_tokens;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityAudit {
    pub invalid_action_count: u32,
    pub has_repeated_noop: bool,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: AgentTurn,
    pub observation: Observation,
    pub action_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: TaskSpec,
    pub mode: Mode,
    pub scaffold: ScaffoldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint_block: Option<HintBlock>,
    pub initial_observation: Observation,
    pub turns: Vec<TurnRecord>,
    pub outcome: EpisodeOutcome,
    pub ledger: TokenLedger,
    pub audit: QualityAudit,
    /// Completions that failed to parse, across all turns.
    pub malformed_completions: u32,
    pub retrieval_calls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl Trajectory {
    pub fn steps(&self) -> u32 {
        self.turns.len() as u32
    }

    pub fn failure_record(&self) -> Option<FailureRecord> {
        if self.outcome.success {
            return None;
        }
        Some(FailureRecord {
            task: self.task.clone(),
            goal_text: self.task.instruction.clone(),
            initial_observation: self.initial_observation.text.clone(),
            steps: self
                .turns
                .iter()
                .map(|t| (t.turn.action.clone(), t.observation.text.clone()))
                .collect(),
            outcome: self.outcome.clone(),
        })
    }
}

/// Invalid actions and malformed completions, repeated no-ops and aborts.
///
/// A step is ineffective when its action was invalid or its observation
/// equals the one before it. A repeated no-op is two consecutive identical
/// actions that were both ineffective.
pub fn audit(trajectory: &Trajectory) -> QualityAudit {
    let invalid = trajectory.turns.iter().filter(|t| !t.action_valid).count() as u32;
    let mut previous = trajectory.initial_observation.text.as_str();
    let mut ineffective = Vec::with_capacity(trajectory.turns.len());
    for t in &trajectory.turns {
        ineffective.push(!t.action_valid || t.observation.text == previous);
        previous = &t.observation.text;
    }
    let has_repeated_noop = trajectory
        .turns
        .windows(2)
        .enumerate()
        .any(|(i, w)| w[0].turn.action == w[1].turn.action && ineffective[i] && ineffective[i + 1]);
    QualityAudit {
        invalid_action_count: invalid + trajectory.malformed_completions,
        has_repeated_noop,
        aborted: trajectory.abort_reason.is_some(),
    }
}

fn failed(steps_used: u32) -> EpisodeOutcome {
    EpisodeOutcome {
        success: false,
        score: 0.0,
        steps_used,
    }
}

/// Runs one episode. Retrieval happens once, before the first step, and
/// its block rides in every prompt of the episode. Backend failures abort
/// the episode as a flagged failure rather than returning an error.
pub fn run_episode(
    task: &TaskSpec,
    policy: &PolicyConfig,
    backend: &dyn Backend,
    bank: Option<&HintBank>,
) -> Result<Trajectory> {
    let (mut state, o0) = envcore::reset(task)?;
    let env = task.env_kind;
    let scaffold = Scaffold::new(policy.scaffold, env);
    let mut ledger = TokenLedger {
        block_charge: policy.block_charge,
        ..TokenLedger::default()
    };
    let mut trajectory = Trajectory {
        task: task.clone(),
        mode: policy.mode,
        scaffold: policy.scaffold,
        hint_block: None,
        initial_observation: o0.clone(),
        turns: Vec::new(),
        outcome: failed(0),
        ledger: TokenLedger::default(),
        audit: QualityAudit::default(),
        malformed_completions: 0,
        retrieval_calls: 0,
        abort_reason: None,
    };

    if policy.mode == Mode::Rag {
        let bank = bank.ok_or_else(|| Error::Config("rag mode needs a hint bank".into()))?;
        if bank.env_kind != env {
            return Err(Error::Config(format!("{} bank used for a {env} task", bank.env_kind)));
        }
        let query = RetrievalQuery {
            env_kind: env,
            instruction: task.instruction.clone(),
            initial_observation: o0.text.clone(),
            explicit_category: (env == EnvKind::House).then(|| task.category.clone()),
            session: Some(task.id.clone()),
        };
        trajectory.retrieval_calls += 1;
        match retrieval::retrieve(bank, &query, policy.k, policy.scorer, Some(backend)) {
            Ok(r) => {
                ledger.retrieval_tokens = r.tokens();
                if !r.block.is_empty() {
                    ledger.hint_block_tokens_per_step = count_tokens(&r.block.rendered);
                    trajectory.hint_block = Some(r.block);
                }
            }
            Err(e) => {
                trajectory.abort_reason = Some(format!("retrieval: {e}"));
            }
        }
    }

    let mut assembly = PromptAssembly::for_episode(
        env,
        scaffold,
        trajectory.hint_block.as_ref().map(|b| b.rendered.clone()),
        o0.text.clone(),
    );
    while trajectory.abort_reason.is_none() && !state.is_done() {
        let call = next_turn(backend, &assembly, scaffold, policy.temperature, Some(&task.id));
        for r in &call.results {
            ledger.agent_call(r);
        }
        trajectory.malformed_completions += call.malformed;
        let Some(turn) = call.turn else {
            trajectory.abort_reason = Some(call.error.unwrap_or_else(|| "no turn".into()));
            break;
        };
        let result = envcore::step(&mut state, &turn.action)?;
        assembly.history.push((turn.clone(), result.observation.clone()));
        trajectory.turns.push(TurnRecord {
            turn,
            observation: result.observation,
            action_valid: result.action_valid,
        });
        if let Some(outcome) = result.outcome {
            trajectory.outcome = outcome;
        }
    }
    if trajectory.abort_reason.is_some() {
        tracing::warn!(task = %task.id, reason = ?trajectory.abort_reason, "episode aborted");
        trajectory.outcome = failed(state.steps_used());
    }
    ledger.close();
    trajectory.ledger = ledger;
    trajectory.audit = audit(&trajectory);
    Ok(trajectory)
}

/// Runs every task on a pool of `parallelism` threads. Output is sorted by
/// task id whatever the schedule.
pub fn run_split(
    tasks: &[TaskSpec],
    policy: &PolicyConfig,
    backend: &dyn Backend,
    bank: Option<&HintBank>,
    parallelism: usize,
) -> Result<Vec<Trajectory>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut out = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_episode(t, policy, backend, bank))
            .collect::<Result<Vec<_>>>()
    })?;
    out.sort_by(|a, b| a.task.id.cmp(&b.task.id));
    Ok(out)
}
