//! One-shot hint retrieval: category, candidate scoring, top-k and the rendered block.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agents::templates;
use crate::envcore::EnvKind;
use crate::error::{Error, Result};
use crate::hints::{Hint, HintBank};
use crate::llmio::{self, count_tokens, Backend, CompletionRequest, CompletionResult, JsonShape, Tag};
use crate::util::fill_template;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_SHOP_CATEGORY: &str = "fashion";
pub const RERANK_ATTEMPTS: u32 = 2;
const RERANK_MAX_TOKENS: u32 = 64;
const CLASSIFY_MAX_TOKENS: u32 = 8;

pub const HOUSE_RERANK_TEMPLATE: &str = include_str!("../assets/prompts/rerank_house.txt");
pub const SHOP_RERANK_TEMPLATE: &str = include_str!("../assets/prompts/rerank_shop.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub env_kind: EnvKind,
    pub instruction: String,
    pub initial_observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_category: Option<String>,
    /// Episode the retrieval calls are billed to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
}

impl RetrievalQuery {
    /// The text candidates are scored against.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.instruction, self.initial_observation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Rerank,
    Lexical,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rerank" | "llm_rerank" => Ok(ScorerKind::Rerank),
            "lexical" => Ok(ScorerKind::Lexical),
            other => Err(Error::Invalid(format!("unknown scorer `{other}`"))),
        }
    }
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScorerKind::Rerank => "rerank",
            ScorerKind::Lexical => "lexical",
        })
    }
}

/// The selected hints and their rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintBlock {
    pub category: String,
    pub hints: Vec<Hint>,
    pub k_requested: usize,
    pub rendered: String,
    pub token_cost: u64,
}

impl HintBlock {
    pub fn empty(category: &str, k: usize) -> Self {
        HintBlock {
            category: category.to_string(),
            hints: Vec::new(),
            k_requested: k,
            rendered: String::new(),
            token_cost: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hints.is_empty()
    }
}

/// A retrieval result and the model calls it cost.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub block: HintBlock,
    pub calls: Vec<CompletionResult>,
    /// True when a rerank failed and the lexical scorer stood in.
    pub fell_back: bool,
}

impl Retrieval {
    pub fn tokens(&self) -> u64 {
        self.calls.iter().map(CompletionResult::total_tokens).sum()
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "before", "by", "for", "from", "has", "in", "is", "it", "its", "of",
    "on", "or", "that", "the", "then", "this", "to", "with", "you", "your",
];

/// Distinct lower-cased alphanumeric words, minus stopwords.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

pub fn lexical_score(candidate: &str, query: &BTreeSet<String>) -> usize {
    content_words(candidate).intersection(query).count()
}

/// Indices of the `k` best candidates by content-word overlap; earlier
/// candidates win ties.
pub fn lexical_top_k(candidates: &[&str], query: &str, k: usize) -> Vec<usize> {
    let q = content_words(query);
    let mut scored: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (lexical_score(c, &q), i))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

const KEYWORDS: &[(&str, &[&str])] = &[
    (
        "beauty",
        &[
            "deodorant",
            "shampoo",
            "serum",
            "lip balm",
            "lotion",
            "hair oil",
            "conditioner",
            "moisturizer",
            "perfume",
        ],
    ),
    (
        "electronics",
        &[
            "headphones",
            "charger",
            "speaker",
            "hdmi",
            "webcam",
            "power bank",
            "cable",
            "earbuds",
            "keyboard",
        ],
    ),
    (
        "fashion",
        &[
            "shoes", "jacket", "socks", "shorts", "shirt", "hat", "dress", "jeans", "sweater",
        ],
    ),
    (
        "food",
        &[
            "tea",
            "trail mix",
            "chocolate",
            "olive oil",
            "protein bar",
            "granola",
            "coffee",
            "snack",
            "cookies",
        ],
    ),
    (
        "furniture",
        &[
            "chair",
            "bookshelf",
            "table",
            "floor lamp",
            "bench",
            "stool",
            "desk",
            "sofa",
            "dresser",
        ],
    ),
];

/// The shop category whose keywords match the instruction most often.
pub fn keyword_category(instruction: &str) -> Option<&'static str> {
    let words: Vec<String> = instruction
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let padded = format!(" {} ", words.join(" "));
    let mut best: Option<(&'static str, usize)> = None;
    for (category, keys) in KEYWORDS {
        let hits = keys.iter().filter(|k| padded.contains(&format!(" {k} "))).count();
        if hits > 0 && best.is_none_or(|(_, b)| hits > b) {
            best = Some((category, hits));
        }
    }
    best.map(|(c, _)| c)
}

pub fn classify_prompt(instruction: &str) -> String {
    format!(
        "Classify the shopping instruction into one of these categories: {}.\n\
         Instruction: {}\n\
         Answer with the category name only.\n",
        EnvKind::Shop.categories().join(", "),
        instruction.replace('\n', " ")
    )
}

/// Category and the calls spent finding it.
#[derive(Debug, Clone)]
pub struct Classification {
    pub category: String,
    pub calls: Vec<CompletionResult>,
}

/// House queries use their explicit category. Shop queries try the keyword
/// table, then the backend, then fall back to the default category.
pub fn classify_category(query: &RetrievalQuery, backend: Option<&dyn Backend>) -> Classification {
    let mut calls = Vec::new();
    let category = match query.env_kind {
        EnvKind::House => match &query.explicit_category {
            Some(c) => c.clone(),
            None => {
                tracing::warn!("house query without a category; using the first category");
                EnvKind::House.categories()[0].to_string()
            }
        },
        EnvKind::Shop => match keyword_category(&query.instruction) {
            Some(c) => c.to_string(),
            None => {
                let answer = backend.and_then(|b| {
                    let req = CompletionRequest::single(
                        Tag::Classify,
                        classify_prompt(&query.instruction),
                        CLASSIFY_MAX_TOKENS,
                    )
                    .with_session(query.session.as_deref());
                    match b.complete(&req) {
                        Ok(r) => {
                            let text = r.text.trim().trim_end_matches('.').to_lowercase();
                            calls.push(r);
                            EnvKind::Shop.has_category(&text).then_some(text)
                        }
                        Err(e) => {
                            tracing::warn!(error = %e, "classify call failed");
                            None
                        }
                    }
                });
                answer.unwrap_or_else(|| {
                    tracing::warn!(
                        instruction = %query.instruction,
                        "no category found; defaulting to {DEFAULT_SHOP_CATEGORY}"
                    );
                    DEFAULT_SHOP_CATEGORY.to_string()
                })
            }
        },
    };
    Classification { category, calls }
}

pub fn rerank_prompt(env: EnvKind, k: usize, query: &str, candidates: &[&str]) -> String {
    let template = match env {
        EnvKind::House => HOUSE_RERANK_TEMPLATE,
        EnvKind::Shop => SHOP_RERANK_TEMPLATE,
    };
    let list = candidates
        .iter()
        .enumerate()
        .map(|(i, h)| format!("{}) {h}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    fill_template(template, &[("k", &k.to_string()), ("query", query), ("hints", &list)])
}

/// Keeps in-range, first-seen 1-based indices, at most `k`, as 0-based.
pub fn valid_indices(answer: &[i64], n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &a in answer {
        if a < 1 || a as usize > n {
            tracing::warn!(index = a, candidates = n, "dropping out-of-range rerank index");
            continue;
        }
        let i = a as usize - 1;
        if out.contains(&i) {
            continue;
        }
        if out.len() == k {
            break;
        }
        out.push(i);
    }
    out
}

pub fn render_hint_block(env: EnvKind, hints: &[Hint]) -> String {
    let texts: Vec<&str> = hints.iter().map(|h| h.text.as_str()).collect();
    templates::hint_block(env, &texts)
}

/// Picks up to `k` hints from `category`'s partition.
pub fn select_hints(
    bank: &HintBank,
    query: &RetrievalQuery,
    category: &str,
    k: usize,
    scorer: ScorerKind,
    backend: Option<&dyn Backend>,
) -> Result<Retrieval> {
    let partition = bank.partition(category);
    let mut calls = Vec::new();
    let mut fell_back = false;
    if k == 0 || partition.is_empty() {
        return Ok(Retrieval {
            block: HintBlock::empty(category, k),
            calls,
            fell_back,
        });
    }
    let texts: Vec<&str> = partition.iter().map(|h| h.text.as_str()).collect();
    let query_text = query.text();
    let picked = match (scorer, backend) {
        (ScorerKind::Lexical, _) => lexical_top_k(&texts, &query_text, k),
        (ScorerKind::Rerank, None) => {
            return Err(Error::Config("rerank scorer needs a backend".into()));
        }
        (ScorerKind::Rerank, Some(b)) => {
            let req = CompletionRequest::single(
                Tag::Rerank,
                rerank_prompt(query.env_kind, k, &query_text, &texts),
                RERANK_MAX_TOKENS,
            )
            .with_session(query.session.as_deref());
            let mut picked = None;
            for _ in 0..RERANK_ATTEMPTS {
                let r = b.complete(&req)?;
                let parsed = llmio::parse_strict_json(&r.text, JsonShape::Answer);
                calls.push(r);
                match parsed {
                    Ok(v) => {
                        picked = Some(valid_indices(&llmio::answer_indices(&v), texts.len(), k));
                        break;
                    }
                    Err(e) => tracing::warn!(error = %e, "unusable rerank answer"),
                }
            }
            picked.unwrap_or_else(|| {
                tracing::warn!(category, "rerank failed twice; using the lexical scorer");
                fell_back = true;
                lexical_top_k(&texts, &query_text, k)
            })
        }
    };
    let hints: Vec<Hint> = picked.into_iter().map(|i| partition[i].clone()).collect();
    let rendered = render_hint_block(query.env_kind, &hints);
    Ok(Retrieval {
        block: HintBlock {
            category: category.to_string(),
            token_cost: count_tokens(&rendered),
            hints,
            k_requested: k,
            rendered,
        },
        calls,
        fell_back,
    })
}

/// Classification followed by selection, with the costs of both.
pub fn retrieve(
    bank: &HintBank,
    query: &RetrievalQuery,
    k: usize,
    scorer: ScorerKind,
    backend: Option<&dyn Backend>,
) -> Result<Retrieval> {
    let class = classify_category(query, backend);
    let mut r = select_hints(bank, query, &class.category, k, scorer, backend)?;
    let mut calls = class.calls;
    calls.append(&mut r.calls);
    r.calls = calls;
    Ok(r)
}
