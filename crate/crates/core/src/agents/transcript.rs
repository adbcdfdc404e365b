//! Live transcript rendering and parsing.
//!
//! House turns look like
//! ```text
//! > state: location cabinet 1; carrying nothing
//! > think: check the drawers next
//! OK.
//! > go to drawer 1
//! You arrive at drawer 1. It is closed; open it to look inside.
//! ```
//! and shop turns like
//! ```text
//! State: on the results page
//! Action: click[B0ABCDEFGH]
//! Observation: [Back to Search]
//! ...
//! ```

use crate::envcore::{EnvKind, Observation};

use super::{AgentTurn, Scaffold};

/// The agent-authored lines of a turn, without its observation.
pub fn render_turn(env: EnvKind, scaffold: Scaffold, turn: &AgentTurn) -> String {
    let mut out = String::new();
    let state = turn.state_note.as_deref().filter(|_| scaffold.emits_state);
    let thought = turn.thought.as_deref().filter(|_| scaffold.emits_thought);
    match env {
        EnvKind::House => {
            if let Some(s) = state {
                out.push_str(&format!("> state: {s}\n"));
            }
            if let Some(t) = thought {
                out.push_str(&format!("> think: {t}\nOK.\n"));
            }
            out.push_str(&format!("> {}", turn.action));
        }
        EnvKind::Shop => {
            if let Some(s) = state {
                out.push_str(&format!("State: {s}\n"));
            }
            if let Some(t) = thought {
                out.push_str(&format!("Action: think[{t}]\nObservation: OK.\n"));
            }
            out.push_str(&format!("Action: {}", turn.action));
        }
    }
    out
}

/// Task block followed by every turn and its observation, newline separated.
pub fn render_live(env: EnvKind, scaffold: Scaffold, task_block: &str, history: &[(AgentTurn, Observation)]) -> String {
    let mut out = task_block.to_string();
    for (turn, obs) in history {
        out.push('\n');
        out.push_str(&render_turn(env, scaffold, turn));
        out.push('\n');
        if env == EnvKind::Shop {
            out.push_str("Observation: ");
        }
        out.push_str(&obs.text);
    }
    out
}

fn starts_turn(env: EnvKind, line: &str) -> bool {
    match env {
        EnvKind::House => line.starts_with('>'),
        EnvKind::Shop => line.starts_with("State: ") || line.starts_with("Action: "),
    }
}

/// Inverse of [`render_live`]: the task block and (turn, observation text) pairs.
pub fn parse_live(env: EnvKind, text: &str) -> (String, Vec<(AgentTurn, String)>) {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut i = 0;
    while i < lines.len() && !starts_turn(env, lines[i]) {
        i += 1;
    }
    let task_block = lines[..i].join("\n");
    let mut turns = Vec::new();
    let mut state = None;
    let mut thought = None;
    while i < lines.len() {
        let line = lines[i];
        i += 1;
        let action = match env {
            EnvKind::House => {
                let rest = line.strip_prefix("> ").or_else(|| line.strip_prefix('>'));
                let Some(rest) = rest else { continue };
                if let Some(s) = rest.strip_prefix("state: ") {
                    state = Some(s.to_string());
                    continue;
                }
                if let Some(t) = rest.strip_prefix("think: ") {
                    thought = Some(t.to_string());
                    if lines.get(i) == Some(&"OK.") {
                        i += 1;
                    }
                    continue;
                }
                rest.to_string()
            }
            EnvKind::Shop => {
                if let Some(s) = line.strip_prefix("State: ") {
                    state = Some(s.to_string());
                    continue;
                }
                let Some(rest) = line.strip_prefix("Action: ") else {
                    continue;
                };
                if let Some(t) = rest.strip_prefix("think[").and_then(|t| t.strip_suffix(']')) {
                    thought = Some(t.to_string());
                    if lines.get(i) == Some(&"Observation: OK.") {
                        i += 1;
                    }
                    continue;
                }
                rest.to_string()
            }
        };
        let mut obs_lines = Vec::new();
        while i < lines.len() && !starts_turn(env, lines[i]) {
            obs_lines.push(lines[i]);
            i += 1;
        }
        let mut obs = obs_lines.join("\n");
        if env == EnvKind::Shop {
            if let Some(o) = obs.strip_prefix("Observation: ") {
                obs = o.to_string();
            }
        }
        turns.push((
            AgentTurn {
                state_note: state.take(),
                thought: thought.take(),
                action,
            },
            obs,
        ));
    }
    (task_block, turns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ScaffoldKind;

    #[test]
    fn house_round_trip() {
        let s = Scaffold::new(ScaffoldKind::Stateact, EnvKind::House);
        let history = vec![
            (
                AgentTurn {
                    state_note: Some("location none; carrying nothing".into()),
                    thought: Some("search the cabinets".into()),
                    action: "go to cabinet 1".into(),
                },
                Observation {
                    text: "You arrive at cabinet 1. It is closed; open it to look inside.".into(),
                    step_index: 1,
                },
            ),
            (
                AgentTurn {
                    state_note: Some("location cabinet 1; carrying nothing".into()),
                    thought: Some("open it".into()),
                    action: "open cabinet 1".into(),
                },
                Observation {
                    text: "You open cabinet 1. Inside: nothing.".into(),
                    step_index: 2,
                },
            ),
        ];
        let text = render_live(EnvKind::House, s, "Task: x\nYou are in a room.", &history);
        let (task, turns) = parse_live(EnvKind::House, &text);
        assert_eq!(task, "Task: x\nYou are in a room.");
        assert_eq!(turns.len(), 2);
        for ((t, o), (t2, o2)) in history.iter().zip(&turns) {
            assert_eq!(t, t2);
            assert_eq!(&o.text, o2);
        }
    }

    #[test]
    fn shop_round_trip_with_multiline_observations() {
        let s = Scaffold::new(ScaffoldKind::Act, EnvKind::Shop);
        let history = vec![(
            AgentTurn::action("search[vegan shampoo]"),
            Observation {
                text: "[Back to Search]\nPage 1 of 1 (1 results)\n[B0AAAAAAAA]\nT\n$1.00".into(),
                step_index: 1,
            },
        )];
        let text = render_live(EnvKind::Shop, s, "WebShop\nInstruction:\ni need x\n[Search]", &history);
        let (task, turns) = parse_live(EnvKind::Shop, &text);
        assert_eq!(task, "WebShop\nInstruction:\ni need x\n[Search]");
        assert_eq!(turns[0].0, history[0].0);
        assert_eq!(turns[0].1, history[0].1.text);
    }
}
