//! Offline diagnostic backend.
//!
//! Every answer is a pure function of the request. Agent turns come from a
//! belief-tracking planner that carries a few deliberate flaws; a flaw switches
//! off when the prompt's hint block contains a hint addressing it. Hint
//! extraction maps failure signatures to the canonical hint for that flaw, so
//! a base run, extraction and a hinted re-run close the loop without a model.

mod extractor;
mod house_agent;
mod shop_agent;

use serde_json::json;

use super::{Backend, BackendKind, CompletionRequest, CompletionResult, Tag};
use crate::agents::templates::{self, HOUSE_HEADER, SHOP_HEADER, TASK_MARKER};
use crate::agents::{parse_live, render_turn, AgentTurn, Scaffold, ScaffoldKind};
use crate::envcore::EnvKind;
use crate::error::{Error, Result};
use crate::retrieval;
use crate::util::str_hash;

/// A planner flaw and the hint wordings that diagnose it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flaw {
    pub name: &'static str,
    /// Canonical wording first, then a near-duplicate rewording.
    pub hints: [&'static str; 2],
    /// A hint containing this (case-insensitive) disables the flaw.
    pub marker: &'static str,
}

/// Skips closed containers while searching.
pub const SEARCH: Flaw = Flaw {
    name: "search",
    hints: [
        "Use a systematic search pattern to avoid missing {object} in {location}",
        "Use a systematic search pattern to avoid missing the {object} in {location}",
    ],
    marker: "systematic search",
};

/// Puts into a closed target without opening it.
pub const CLOSED_PUT: Flaw = Flaw {
    name: "closed_put",
    hints: [
        "Ensure the {container} is open before attempting to place the {object} inside.",
        "Ensure the {container} is open before trying to place the {object} inside.",
    ],
    marker: "is open before",
};

/// Takes a second object while the hands are full.
pub const CAPACITY: Flaw = Flaw {
    name: "capacity",
    hints: [
        "Verify inventory capacity before attempting to take additional items.",
        "Verify inventory capacity before trying to take additional items.",
    ],
    marker: "inventory capacity",
};

/// Switches the lamp on before holding the object.
pub const LAMP_ORDER: Flaw = Flaw {
    name: "lamp_order",
    hints: [
        "Pick up the {object} first, then use the lamp at its {location}",
        "Take the {object} first, then use the lamp at its {location}",
    ],
    marker: "then use the lamp",
};

/// Buys without comparing the price to the budget.
pub const PRICE: Flaw = Flaw {
    name: "price",
    hints: [
        "Check that the {item} price is below the budget before clicking Buy Now",
        "Check that the {item} price is under the budget before clicking Buy Now",
    ],
    marker: "budget",
};

/// Buys without selecting the requested options.
pub const OPTIONS: Flaw = Flaw {
    name: "options",
    hints: [
        "Select the required {size} and {color} options before clicking Buy Now",
        "Select each required {size} and {color} option before clicking Buy Now",
    ],
    marker: "{size} and {color}",
};

/// Searches by noun only and ignores attributes.
pub const QUERY: Flaw = Flaw {
    name: "query",
    hints: [
        "Include every required {attribute} of the {item} in the search query",
        "Include each required {attribute} of the {item} in the search query",
    ],
    marker: "search query",
};

pub const HOUSE_FLAWS: [Flaw; 4] = [SEARCH, CLOSED_PUT, CAPACITY, LAMP_ORDER];
pub const SHOP_FLAWS: [Flaw; 3] = [PRICE, OPTIONS, QUERY];

/// Share of tasks on which each flaw is present, in percent.
const FLAW_RATE: u64 = 75;

/// Which flaws are active for one episode.
#[derive(Debug, Clone)]
pub(crate) struct FlawSet {
    active: Vec<&'static str>,
}

impl FlawSet {
    pub(crate) fn new(flaws: &[Flaw], task_key: &str, hints: &[String]) -> Self {
        let active = flaws
            .iter()
            .filter(|f| str_hash(&format!("{}|{task_key}", f.name)) % 100 < FLAW_RATE)
            .filter(|f| {
                !hints
                    .iter()
                    .any(|h| h.to_lowercase().contains(&f.marker.to_lowercase()))
            })
            .map(|f| f.name)
            .collect();
        FlawSet { active }
    }

    pub(crate) fn has(&self, flaw: Flaw) -> bool {
        self.active.contains(&flaw.name)
    }
}

/// The parsed pieces of an agent prompt.
pub(crate) struct AgentView {
    pub env: EnvKind,
    pub scaffold: Option<ScaffoldKind>,
    pub hints: Vec<String>,
    pub task_block: String,
    pub history: Vec<(AgentTurn, String)>,
}

fn parse_agent_prompt(prompt: &str) -> Result<AgentView> {
    let env = if prompt.starts_with(HOUSE_HEADER) {
        EnvKind::House
    } else if prompt.starts_with(SHOP_HEADER) {
        EnvKind::Shop
    } else {
        return Err(Error::Backend("rulebased: unrecognised agent prompt header".into()));
    };
    let marker = prompt
        .rfind(TASK_MARKER)
        .ok_or_else(|| Error::Backend("rulebased: agent prompt has no task marker".into()))?;
    let head = &prompt[..marker];
    let hints = match head.find("Here are some hints:") {
        Some(_) => templates::parse_hint_block(head),
        None => Vec::new(),
    };
    let scaffold = [ScaffoldKind::Stateact, ScaffoldKind::React, ScaffoldKind::Act]
        .into_iter()
        .find(|k| head.contains(templates::few_shot(env, *k)));
    let live = prompt[marker + TASK_MARKER.len()..].trim_end_matches('\n');
    let (task_block, history) = parse_live(env, live);
    let scaffold = scaffold.or_else(|| {
        let (s, t) = history
            .first()
            .map(|(t, _)| (t.state_note.is_some(), t.thought.is_some()))?;
        Some(match (s, t) {
            (true, _) => ScaffoldKind::Stateact,
            (false, true) => ScaffoldKind::React,
            _ => ScaffoldKind::Act,
        })
    });
    Ok(AgentView {
        env,
        scaffold,
        hints,
        task_block,
        history,
    })
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RuleBackend;

impl RuleBackend {
    pub fn new() -> Self {
        RuleBackend
    }

    fn agent_turn(&self, prompt: &str) -> Result<String> {
        let view = parse_agent_prompt(prompt)?;
        let turn = match view.env {
            EnvKind::House => house_agent::decide(&view)?,
            EnvKind::Shop => shop_agent::decide(&view)?,
        };
        // Unknown scaffold (no few-shot, no history yet): emit every field and
        // let the parser keep what the caller's scaffold uses.
        let scaffold = match view.scaffold {
            Some(kind) => Scaffold::new(kind, view.env),
            None => Scaffold {
                kind: ScaffoldKind::Stateact,
                emits_thought: view.env == EnvKind::House,
                emits_state: true,
            },
        };
        Ok(render_turn(view.env, scaffold, &turn))
    }

    fn rerank(&self, prompt: &str) -> Result<String> {
        let k: usize = prompt
            .split("Choose up to ")
            .nth(1)
            .and_then(|r| r.split_whitespace().next())
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::Backend("rulebased: rerank prompt without k".into()))?;
        let query = section(prompt, "===== Task & state =====\n").unwrap_or_default();
        let candidates: Vec<String> = prompt
            .lines()
            .filter_map(|l| {
                let (n, text) = l.split_once(") ")?;
                n.parse::<usize>().ok()?;
                Some(text.to_string())
            })
            .collect();
        let refs: Vec<&str> = candidates.iter().map(String::as_str).collect();
        let picked: Vec<usize> = retrieval::lexical_top_k(&refs, &query, k)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        Ok(json!({ "answer": picked }).to_string())
    }

    fn classify(&self, prompt: &str) -> String {
        let instruction = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Instruction: "))
            .unwrap_or_default();
        retrieval::keyword_category(instruction)
            .unwrap_or("unknown")
            .to_string()
    }
}

/// Text after `header` up to the next blank line.
fn section(prompt: &str, header: &str) -> Option<String> {
    let start = prompt.find(header)? + header.len();
    let rest = &prompt[start..];
    let end = rest.find("\n\n").unwrap_or(rest.len());
    Some(rest[..end].to_string())
}

impl Backend for RuleBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Rulebased
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        let prompt = request.prompt_text();
        let text = match request.tag {
            Tag::AgentTurn => self.agent_turn(&prompt)?,
            Tag::HintExtraction => extractor::respond(&prompt)?,
            Tag::Rerank => self.rerank(&prompt)?,
            Tag::Classify => self.classify(&prompt),
        };
        Ok(CompletionResult::proxy(request, text))
    }
}

/// Items of a comma list, or none for "nothing".
pub(crate) fn split_list(text: &str) -> Vec<String> {
    let text = text.trim().trim_end_matches('.');
    if text == "nothing" || text.is_empty() {
        return Vec::new();
    }
    text.split(", ").map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hints::similarity;

    #[test]
    fn rewordings_are_near_duplicates() {
        for f in HOUSE_FLAWS.iter().chain(SHOP_FLAWS.iter()) {
            let a = crate::hints::normalize(f.hints[0]);
            let b = crate::hints::normalize(f.hints[1]);
            assert_ne!(a, b);
            assert!(similarity(&a, &b) >= 0.85, "{}: {}", f.name, similarity(&a, &b));
            for h in f.hints {
                assert!(h.to_lowercase().contains(&f.marker.to_lowercase()));
                assert!(h.chars().count() <= 120);
            }
        }
    }

    #[test]
    fn distinct_flaws_do_not_collide() {
        let all: Vec<&str> = HOUSE_FLAWS
            .iter()
            .chain(SHOP_FLAWS.iter())
            .map(|f| f.hints[0])
            .collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(similarity(a, b) < 0.85);
            }
        }
        // each marker only matches its own flaw's hints
        for f in HOUSE_FLAWS.iter().chain(SHOP_FLAWS.iter()) {
            for g in HOUSE_FLAWS.iter().chain(SHOP_FLAWS.iter()) {
                if f.name != g.name {
                    assert!(!g.hints[0].to_lowercase().contains(&f.marker.to_lowercase()));
                }
            }
        }
    }

    #[test]
    fn rerank_answers_in_range_json() {
        let prompt = "You are selecting helpful hints for a household agent.\n\
Choose up to 2 DISTINCT hints that are immediately useful for the current state.\n\n\
===== Task & state =====\nput a mug in cabinet.\n\n===== Hints List =====\n\
1) Verify inventory capacity\n2) Ensure the {container} is open before placing the mug\n3) Look at the cabinet\n\n";
        let b = RuleBackend::new();
        let r = b.complete(&CompletionRequest::single(Tag::Rerank, prompt, 64)).unwrap();
        let v = crate::llmio::parse_strict_json(&r.text, crate::llmio::JsonShape::Answer).unwrap();
        let idx = crate::llmio::answer_indices(&v);
        assert_eq!(idx.len(), 2);
        assert!(idx.iter().all(|i| (1..=3).contains(i)));
    }

    #[test]
    fn classify_uses_keywords() {
        let b = RuleBackend::new();
        let req = CompletionRequest::single(Tag::Classify, "Instruction: 3 ounce bright citrus deodorant\n", 8);
        assert_eq!(b.complete(&req).unwrap().text, "beauty");
    }
}
