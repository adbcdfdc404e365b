//! Deterministic queue-backed backend for tests and replays.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use super::{Backend, BackendKind, CompletionRequest, CompletionResult, Tag};
use crate::error::{Error, Result};

type Key = (Option<String>, Tag);

/// Answers each request with the next queued text for its (session, tag).
///
/// Session-specific queues are consulted first, then the shared queue for the
/// tag. An empty queue is a [`Error::QueueUnderflow`].
#[derive(Default)]
pub struct ScriptedBackend {
    queues: Mutex<HashMap<Key, VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `{"agent_turn": [...], "rerank": [...]}`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: BTreeMap<Tag, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let backend = Self::new();
        for (tag, texts) in file {
            for t in texts {
                backend.push(tag, t);
            }
        }
        Ok(backend)
    }

    pub fn push(&self, tag: Tag, text: impl Into<String>) {
        self.enqueue((None, tag), text.into());
    }

    pub fn push_for(&self, session: &str, tag: Tag, text: impl Into<String>) {
        self.enqueue((Some(session.to_string()), tag), text.into());
    }

    fn enqueue(&self, key: Key, text: String) {
        self.queues
            .lock()
            .expect("queue poisoned")
            .entry(key)
            .or_default()
            .push_back(text);
    }

    pub fn remaining(&self, tag: Tag) -> usize {
        self.queues
            .lock()
            .expect("queue poisoned")
            .iter()
            .filter(|((_, t), _)| *t == tag)
            .map(|(_, q)| q.len())
            .sum()
    }
}

impl Backend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        let mut queues = self.queues.lock().expect("queue poisoned");
        let own = (request.session.clone(), request.tag);
        let text = queues
            .get_mut(&own)
            .and_then(VecDeque::pop_front)
            .or_else(|| queues.get_mut(&(None, request.tag)).and_then(VecDeque::pop_front))
            .ok_or_else(|| {
                Error::QueueUnderflow(format!(
                    "{} (session {})",
                    request.tag.as_str(),
                    request.session.as_deref().unwrap_or("-")
                ))
            })?;
        Ok(CompletionResult::proxy(request, text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dequeues_per_tag_and_underflows() {
        let b = ScriptedBackend::new();
        b.push(Tag::AgentTurn, "> goto fridge 1");
        let req = CompletionRequest::single(Tag::AgentTurn, "p", 16);
        assert_eq!(b.complete(&req).unwrap().text, "> goto fridge 1");
        assert!(matches!(b.complete(&req), Err(Error::QueueUnderflow(_))));
        let rerank = CompletionRequest::single(Tag::Rerank, "p", 16);
        assert!(b.complete(&rerank).is_err());
    }

    #[test]
    fn session_queues_take_priority() {
        let b = ScriptedBackend::new();
        b.push(Tag::AgentTurn, "shared");
        b.push_for("t1", Tag::AgentTurn, "own");
        let req = CompletionRequest::single(Tag::AgentTurn, "p", 16).with_session(Some("t1"));
        assert_eq!(b.complete(&req).unwrap().text, "own");
        assert_eq!(b.complete(&req).unwrap().text, "shared");
    }

    #[test]
    fn loads_script_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"{"agent_turn": ["> look"], "rerank": ["{\"answer\": []}"]}"#).unwrap();
        let b = ScriptedBackend::from_file(&p).unwrap();
        assert_eq!(b.remaining(Tag::AgentTurn), 1);
        assert_eq!(b.remaining(Tag::Rerank), 1);
    }
}
