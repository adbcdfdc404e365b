//! Deterministic, seeded text environments.
//!
//! Two environments sit behind one interface: MiniHouse, a household world with
//! six task categories and verb–object commands, and MiniShop, a search/click
//! shopping site with an attribute-count score. Worlds are regenerated from a
//! [`TaskSpec`]'s seed, so the same task always yields the same episode for the
//! same action sequence.

pub mod house;
pub mod shop;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{mix64, str_hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    House,
    Shop,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::House => "house",
            EnvKind::Shop => "shop",
        }
    }

    /// Hard episode budget in environment steps.
    pub fn step_cap(self) -> u32 {
        match self {
            EnvKind::House => 50,
            EnvKind::Shop => 15,
        }
    }

    pub fn categories(self) -> &'static [&'static str] {
        match self {
            EnvKind::House => &house::CATEGORIES,
            EnvKind::Shop => &shop::CATEGORIES,
        }
    }

    pub fn has_category(self, category: &str) -> bool {
        self.categories().contains(&category)
    }

    /// Per-category task counts of the reference split; used as round-robin weights.
    pub fn split_weights(self, split: Split) -> &'static [u32] {
        match (self, split) {
            (EnvKind::House, Split::Train) => &[258, 104, 248, 152, 159, 279],
            (EnvKind::House, Split::Test) => &[24, 18, 31, 23, 21, 17],
            (EnvKind::Shop, Split::Train) => &[262, 219, 251, 239, 229],
            (EnvKind::Shop, Split::Test) => &[24, 19, 23, 20, 14],
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "house" | "minihouse" | "alfworld" => Ok(EnvKind::House),
            "shop" | "minishop" | "webshop" => Ok(EnvKind::Shop),
            other => Err(Error::UnknownEnvKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub env_kind: EnvKind,
    pub category: String,
    /// The goal text shown to the agent.
    pub instruction: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub step_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// 0..=100. House episodes score 100 on success and 0 otherwise.
    pub score: f64,
    pub steps_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub done: bool,
    pub outcome: Option<EpisodeOutcome>,
    pub action_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum EnvState {
    House(house::HouseState),
    Shop(shop::ShopState),
}

impl EnvState {
    pub fn env_kind(&self) -> EnvKind {
        match self {
            EnvState::House(_) => EnvKind::House,
            EnvState::Shop(_) => EnvKind::Shop,
        }
    }

    pub fn steps_used(&self) -> u32 {
        match self {
            EnvState::House(s) => s.steps,
            EnvState::Shop(s) => s.steps,
        }
    }

    pub fn is_done(&self) -> bool {
        match self {
            EnvState::House(s) => s.done,
            EnvState::Shop(s) => s.done,
        }
    }
}

/// Generates `count` tasks for a split.
///
/// Categories follow a smooth weighted round-robin over the reference split's
/// per-category counts, so every prefix of the sequence stays within one task
/// of the exact proportional share. Train and test ids live in disjoint
/// namespaces.
pub fn generate_tasks(env: EnvKind, split: Split, count: usize, seed: u64) -> Vec<TaskSpec> {
    let categories = env.categories();
    let weights = env.split_weights(split);
    let total: i64 = weights.iter().map(|w| i64::from(*w)).sum();
    let mut current = vec![0i64; weights.len()];
    let split_salt = str_hash(split.as_str()) ^ str_hash(env.as_str());

    let mut tasks = Vec::with_capacity(count);
    for index in 0..count {
        for (c, w) in current.iter_mut().zip(weights) {
            *c += i64::from(*w);
        }
        // first maximum wins ties, keeping the schedule deterministic
        let mut pick = 0;
        for i in 1..current.len() {
            if current[i] > current[pick] {
                pick = i;
            }
        }
        current[pick] -= total;

        let category = categories[pick];
        let id = format!("{}-{}-{:05}", env.as_str(), split.as_str(), index);
        let task_seed = mix64(seed ^ mix64(split_salt ^ index as u64));
        let instruction = match env {
            EnvKind::House => house::World::generate(category, task_seed).instruction(),
            EnvKind::Shop => shop::ShopWorld::generate(category, task_seed).instruction(),
        };
        tasks.push(TaskSpec {
            id,
            env_kind: env,
            category: category.to_string(),
            instruction,
            seed: task_seed,
        });
    }
    tasks
}

/// Builds the initial state and observation `o_0` for a task.
pub fn reset(task: &TaskSpec) -> Result<(EnvState, Observation)> {
    if !task.env_kind.has_category(&task.category) {
        return Err(Error::UnknownCategory {
            env: task.env_kind.to_string(),
            category: task.category.clone(),
        });
    }
    let (state, text) = match task.env_kind {
        EnvKind::House => {
            let s = house::HouseState::new(task);
            let text = s.initial_observation();
            (EnvState::House(s), text)
        }
        EnvKind::Shop => {
            let s = shop::ShopState::new(task);
            let text = s.initial_observation();
            (EnvState::Shop(s), text)
        }
    };
    Ok((state, Observation { text, step_index: 0 }))
}

/// Applies one action. Invalid actions consume a step; the episode is force
/// terminated as a failure when the step cap is reached.
pub fn step(state: &mut EnvState, action: &str) -> Result<StepResult> {
    if state.is_done() {
        return Err(Error::EpisodeFinished);
    }
    match state {
        EnvState::House(s) => Ok(s.step(action)),
        EnvState::Shop(s) => Ok(s.step(action)),
    }
}

/// One line of the transcript replay format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub step: u32,
    pub action: String,
    pub observation: String,
    pub valid: bool,
}

/// Runs `actions` from a fresh reset and records the replay transcript.
/// Stops early if the episode finishes.
pub fn replay(task: &TaskSpec, actions: &[&str]) -> Result<(Vec<TranscriptLine>, EnvState)> {
    let (mut state, _) = reset(task)?;
    let mut lines = Vec::new();
    for action in actions {
        if state.is_done() {
            break;
        }
        let r = step(&mut state, action)?;
        lines.push(TranscriptLine {
            step: r.observation.step_index,
            action: (*action).to_string(),
            observation: r.observation.text,
            valid: r.action_valid,
        });
    }
    Ok((lines, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_house_tasks_cover_every_category() {
        let tasks = generate_tasks(EnvKind::House, Split::Train, 6, 42);
        assert_eq!(tasks.len(), 6);
        let mut cats: Vec<_> = tasks.iter().map(|t| t.category.as_str()).collect();
        cats.sort();
        let mut expected = house::CATEGORIES.to_vec();
        expected.sort();
        assert_eq!(cats, expected);
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(generate_tasks(EnvKind::Shop, Split::Train, 0, 42).is_empty());
    }

    #[test]
    fn full_split_matches_reference_proportions() {
        let tasks = generate_tasks(EnvKind::House, Split::Train, 1200, 42);
        let weights = EnvKind::House.split_weights(Split::Train);
        for (cat, w) in house::CATEGORIES.iter().zip(weights) {
            let n = tasks.iter().filter(|t| t.category == *cat).count() as i64;
            assert!((n - i64::from(*w)).abs() <= 1, "{cat}: {n} vs {w}");
        }
        let clean = tasks.iter().filter(|t| t.category == "Clean & Place").count();
        assert_eq!(clean, 248);
    }

    #[test]
    fn prefixes_stay_within_one_of_proportional_share() {
        let weights = EnvKind::Shop.split_weights(Split::Train);
        let total: u32 = weights.iter().sum();
        for count in [7usize, 50, 333, 901] {
            let tasks = generate_tasks(EnvKind::Shop, Split::Train, count, 1);
            for (cat, w) in shop::CATEGORIES.iter().zip(weights) {
                let n = tasks.iter().filter(|t| t.category == *cat).count() as f64;
                let share = count as f64 * f64::from(*w) / f64::from(total);
                assert!((n - share).abs() <= 1.0, "{count} {cat}: {n} vs {share}");
            }
        }
    }

    #[test]
    fn splits_use_disjoint_ids_and_regenerate_identically() {
        let train = generate_tasks(EnvKind::House, Split::Train, 20, 42);
        let test = generate_tasks(EnvKind::House, Split::Test, 20, 42);
        for t in &train {
            assert!(test.iter().all(|u| u.id != t.id));
        }
        assert_eq!(train, generate_tasks(EnvKind::House, Split::Train, 20, 42));
        assert_ne!(train, generate_tasks(EnvKind::House, Split::Train, 20, 43));
    }

    #[test]
    fn unknown_env_kind_is_rejected() {
        assert!(matches!("spaceship".parse::<EnvKind>(), Err(Error::UnknownEnvKind(_))));
    }

    #[test]
    fn stepping_a_finished_episode_errors() {
        let task = &generate_tasks(EnvKind::Shop, Split::Train, 1, 3)[0];
        let (mut state, _) = reset(task).unwrap();
        while !state.is_done() {
            step(&mut state, "click[nothing here]").unwrap();
        }
        assert_eq!(state.steps_used(), EnvKind::Shop.step_cap());
        assert!(matches!(step(&mut state, "search[x]"), Err(Error::EpisodeFinished)));
    }
}
