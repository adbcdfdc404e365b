//! Prompt scaffolds, prompt assembly, turn parsing and policy stepping.
//!
//! A prompt is rendered as three segments: the system header, the optional
//! hint block, and everything after it (few-shot section, task marker and the
//! live transcript). Keeping the block in its own segment lets token
//! accounting charge it separately and exactly.

pub mod templates;
pub mod transcript;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envcore::{EnvKind, Observation};
use crate::error::{Error, Result};
use crate::llmio::{Backend, CompletionRequest, CompletionResult, Message, Role, Tag};

pub use transcript::{parse_live, render_live, render_turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaffoldKind {
    React,
    Stateact,
    Act,
}

impl ScaffoldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaffoldKind::React => "react",
            ScaffoldKind::Stateact => "stateact",
            ScaffoldKind::Act => "act",
        }
    }
}

impl fmt::Display for ScaffoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScaffoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "react" => Ok(ScaffoldKind::React),
            "stateact" => Ok(ScaffoldKind::Stateact),
            "act" => Ok(ScaffoldKind::Act),
            other => Err(Error::Invalid(format!("unknown scaffold `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scaffold {
    pub kind: ScaffoldKind,
    pub emits_thought: bool,
    pub emits_state: bool,
}

impl Scaffold {
    /// Shop scaffolds never emit thoughts.
    pub fn new(kind: ScaffoldKind, env: EnvKind) -> Self {
        let thinks = env == EnvKind::House;
        match kind {
            ScaffoldKind::React => Scaffold {
                kind,
                emits_thought: thinks,
                emits_state: false,
            },
            ScaffoldKind::Stateact => Scaffold {
                kind,
                emits_thought: thinks,
                emits_state: true,
            },
            ScaffoldKind::Act => Scaffold {
                kind,
                emits_thought: false,
                emits_state: false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub action: String,
}

impl AgentTurn {
    pub fn action(action: impl Into<String>) -> Self {
        AgentTurn {
            state_note: None,
            thought: None,
            action: action.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAssembly {
    pub env_kind: EnvKind,
    pub system_header: String,
    pub hint_block: Option<String>,
    /// Raw few-shot asset; empty for hint-free student prompts.
    pub few_shot: String,
    /// The initial observation, carrying the instruction.
    pub task_block: String,
    pub history: Vec<(AgentTurn, Observation)>,
}

impl PromptAssembly {
    /// Standard assembly for an episode: env header and the scaffold's few-shot asset.
    pub fn for_episode(env: EnvKind, scaffold: Scaffold, hint_block: Option<String>, task_block: String) -> Self {
        PromptAssembly {
            env_kind: env,
            system_header: templates::system_header(env).to_string(),
            hint_block: hint_block.filter(|b| !b.is_empty()),
            few_shot: templates::few_shot(env, scaffold.kind).to_string(),
            task_block,
            history: Vec::new(),
        }
    }
}

/// The three separately counted parts of a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSegments {
    pub header: String,
    pub hint_block: Option<String>,
    pub rest: String,
}

impl PromptSegments {
    pub fn concat(&self) -> String {
        let mut out = self.header.clone();
        if let Some(b) = &self.hint_block {
            out.push_str(b);
        }
        out.push_str(&self.rest);
        out
    }
}

pub fn prompt_segments(assembly: &PromptAssembly, scaffold: Scaffold) -> PromptSegments {
    let mut rest = String::new();
    if !assembly.few_shot.is_empty() {
        rest.push_str(&templates::few_shot_section(assembly.env_kind, &assembly.few_shot));
    }
    rest.push_str(templates::TASK_MARKER);
    rest.push_str(&render_live(
        assembly.env_kind,
        scaffold,
        &assembly.task_block,
        &assembly.history,
    ));
    rest.push('\n');
    PromptSegments {
        header: assembly.system_header.clone(),
        hint_block: assembly.hint_block.clone().filter(|b| !b.is_empty()),
        rest,
    }
}

/// Renders header, hint block (if any), few-shot section, task marker and live transcript.
pub fn assemble_prompt(assembly: &PromptAssembly, scaffold: Scaffold) -> String {
    prompt_segments(assembly, scaffold).concat()
}

/// Parses one completion into a turn.
///
/// Accepts both transcript conventions: `> action` lines with `> think:` and
/// `> state:` prefixes, and `Action: ...` lines with `think[...]` and
/// `State:` lines. Parsing stops at the first action line. Fields the scaffold
/// does not emit are dropped; fields it does emit are required.
pub fn parse_turn(raw: &str, scaffold: Scaffold) -> Result<AgentTurn> {
    let mut state = None;
    let mut thought = None;
    let mut action = None;
    for line in raw.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('>') {
            let rest = rest.trim();
            if let Some(t) = rest.strip_prefix("think:") {
                thought = Some(t.trim().to_string());
            } else if let Some(s) = rest.strip_prefix("state:") {
                state = Some(s.trim().to_string());
            } else if !rest.is_empty() {
                action = Some(rest.to_string());
                break;
            }
        } else if let Some(s) = line.strip_prefix("State:") {
            state = Some(s.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Action:") {
            let rest = rest.trim();
            match rest.strip_prefix("think[").and_then(|t| t.strip_suffix(']')) {
                Some(t) => thought = Some(t.trim().to_string()),
                None if !rest.is_empty() => {
                    action = Some(rest.to_string());
                    break;
                }
                None => {}
            }
        }
    }
    let action = action.ok_or_else(|| Error::MalformedTurn("no action line".into()))?;
    let state = state.filter(|s| !s.is_empty());
    let thought = thought.filter(|t| !t.is_empty());
    if scaffold.emits_state && state.is_none() {
        return Err(Error::MalformedTurn("missing state line".into()));
    }
    if scaffold.emits_thought && thought.is_none() {
        return Err(Error::MalformedTurn("missing thought line".into()));
    }
    Ok(AgentTurn {
        state_note: state.filter(|_| scaffold.emits_state),
        thought: thought.filter(|_| scaffold.emits_thought),
        action,
    })
}

pub const TURN_ATTEMPTS: u32 = 3;
pub const AGENT_MAX_TOKENS: u32 = 256;

/// Result of asking the policy for one turn.
#[derive(Debug, Clone)]
pub struct TurnCall {
    /// `None` when every attempt failed; the episode must be aborted.
    pub turn: Option<AgentTurn>,
    /// One entry per backend call that returned, in order.
    pub results: Vec<CompletionResult>,
    pub malformed: u32,
    pub error: Option<String>,
}

/// Builds the request messages for an assembly: header, hint block, rest.
pub fn agent_request(
    assembly: &PromptAssembly,
    scaffold: Scaffold,
    temperature: f64,
    session: Option<&str>,
) -> CompletionRequest {
    let seg = prompt_segments(assembly, scaffold);
    let mut messages = vec![Message::new(Role::System, seg.header)];
    if let Some(b) = seg.hint_block {
        messages.push(Message::new(Role::System, b));
    }
    messages.push(Message::new(Role::User, seg.rest));
    CompletionRequest {
        messages,
        max_tokens: AGENT_MAX_TOKENS,
        temperature,
        tag: Tag::AgentTurn,
        session: session.map(str::to_string),
    }
}

/// One policy step: up to three completions until one parses.
pub fn next_turn(
    backend: &dyn Backend,
    assembly: &PromptAssembly,
    scaffold: Scaffold,
    temperature: f64,
    session: Option<&str>,
) -> TurnCall {
    let request = agent_request(assembly, scaffold, temperature, session);
    let mut call = TurnCall {
        turn: None,
        results: Vec::new(),
        malformed: 0,
        error: None,
    };
    for _ in 0..TURN_ATTEMPTS {
        match backend.complete(&request) {
            Ok(result) => {
                let parsed = parse_turn(&result.text, scaffold);
                call.results.push(result);
                match parsed {
                    Ok(turn) => {
                        call.turn = Some(turn);
                        return call;
                    }
                    Err(e) => {
                        call.malformed += 1;
                        call.error = Some(e.to_string());
                    }
                }
            }
            Err(e) => {
                call.error = Some(e.to_string());
                return call;
            }
        }
    }
    call
}
