//! Belief-tracking MiniHouse planner with injectable flaws.

use std::collections::{BTreeMap, BTreeSet};

use super::{split_list, AgentView, FlawSet, CAPACITY, CLOSED_PUT, HOUSE_FLAWS, LAMP_ORDER, SEARCH};
use crate::agents::AgentTurn;
use crate::envcore::house::INVALID;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Goal {
    Place {
        object: String,
        target: String,
        transform: Option<(&'static str, &'static str)>,
        count: usize,
    },
    Examine {
        object: String,
    },
}

fn parse_goal(instruction: &str) -> Option<Goal> {
    let text = instruction.trim().trim_end_matches('.');
    if let Some(rest) = text.strip_prefix("look at ") {
        let object = rest.strip_suffix(" under the desklamp")?;
        return Some(Goal::Examine {
            object: object.to_string(),
        });
    }
    let (count, rest) = if let Some(r) = text.strip_prefix("put two ") {
        (2, r)
    } else {
        (1, text.strip_prefix("put a ")?)
    };
    let (obj, target) = rest.split_once(" in ")?;
    let (transform, object) = match obj.split_once(' ') {
        Some(("clean", o)) => (Some(("clean", "sinkbasin")), o),
        Some(("hot", o)) => (Some(("heat", "microwave")), o),
        Some(("cool", o)) => (Some(("cool", "fridge")), o),
        _ => (None, obj),
    };
    Some(Goal::Place {
        object: object.to_string(),
        target: target.to_string(),
        transform,
        count,
    })
}

fn kind_of(name: &str) -> &str {
    name.rsplit_once(' ').map(|(k, _)| k).unwrap_or(name)
}

fn closeable(rec: &str) -> bool {
    matches!(kind_of(rec), "cabinet" | "drawer" | "safe" | "fridge" | "microwave")
}

fn appliance(rec: &str) -> bool {
    matches!(kind_of(rec), "fridge" | "microwave" | "sinkbasin")
}

#[derive(Debug, Default)]
struct Belief {
    rooms: Vec<String>,
    at: Option<String>,
    holding: Option<String>,
    contents: BTreeMap<String, Vec<String>>,
    open: BTreeMap<String, bool>,
    visited: BTreeSet<String>,
    transformed: BTreeSet<String>,
    placed: BTreeSet<String>,
    lamp: Option<(String, String)>,
}

impl Belief {
    fn from_view(view: &AgentView) -> Option<(Goal, Belief)> {
        let mut instruction = None;
        let mut b = Belief::default();
        for line in view.task_block.lines() {
            if let Some(t) = line.strip_prefix("Task: ") {
                instruction = Some(t.to_string());
            }
            if let Some(r) = line.strip_prefix("You are in a room. Around you are: ") {
                b.rooms = split_list(r);
            }
        }
        let goal = parse_goal(&instruction?)?;
        for (turn, obs) in &view.history {
            b.observe(&turn.action, obs);
        }
        Some((goal, b))
    }

    fn see(&mut self, rec: &str, list: &str) {
        let items = split_list(list);
        if let Some(lamp) = items.iter().find(|i| kind_of(i) == "desklamp") {
            self.lamp = Some((rec.to_string(), lamp.clone()));
        }
        self.contents.insert(rec.to_string(), items);
    }

    fn observe(&mut self, action: &str, obs: &str) {
        if obs == INVALID {
            return;
        }
        if let Some(rec) = action.strip_prefix("go to ") {
            let Some(rest) = obs.strip_prefix(&format!("You arrive at {rec}. ")) else {
                return;
            };
            self.at = Some(rec.to_string());
            self.visited.insert(rec.to_string());
            if let Some(list) = rest.strip_prefix("It is open. Inside: ") {
                self.open.insert(rec.to_string(), true);
                self.see(rec, list);
            } else if rest.starts_with("It is closed") {
                self.open.insert(rec.to_string(), false);
            } else if let Some(list) = rest.strip_prefix("On it: ") {
                self.see(rec, list);
            }
        } else if let Some(rec) = action.strip_prefix("open ") {
            if let Some(list) = obs.strip_prefix(&format!("You open {rec}. Inside: ")) {
                self.open.insert(rec.to_string(), true);
                self.see(rec, list);
            }
        } else if let Some(rest) = action.strip_prefix("take ") {
            if let Some((obj, rec)) = rest.split_once(" from ") {
                self.holding = Some(obj.to_string());
                if let Some(c) = self.contents.get_mut(rec) {
                    c.retain(|i| i != obj);
                }
            }
        } else if let Some(rest) = action.strip_prefix("put ") {
            if let Some((obj, rec)) = rest.split_once(" in/on ") {
                self.holding = None;
                self.contents.entry(rec.to_string()).or_default().push(obj.to_string());
                self.placed.insert(obj.to_string());
            }
        } else if obs.starts_with("The ") && obs.contains(" is now ") {
            if let Some(obj) = action.split_once(' ').and_then(|(_, r)| r.split_once(" with ")) {
                self.transformed.insert(obj.0.to_string());
            }
        }
    }

    fn is_open(&self, rec: &str) -> bool {
        !closeable(rec) || self.open.get(rec).copied().unwrap_or(false)
    }

    /// First known location (room order) holding an unplaced object of `kind`.
    fn known(&self, kind: &str) -> Option<(String, String)> {
        self.rooms.iter().find_map(|r| {
            self.contents
                .get(r)?
                .iter()
                .find_map(|i| (kind_of(i) == kind && !self.placed.contains(i)).then(|| (r.clone(), i.clone())))
        })
    }
}

struct Plan {
    thought: String,
    action: String,
}

fn plan(thought: impl Into<String>, action: impl Into<String>) -> Plan {
    Plan {
        thought: thought.into(),
        action: action.into(),
    }
}

fn go(rec: &str, why: &str) -> Plan {
    plan(why, format!("go to {rec}"))
}

fn find_and_take(b: &Belief, kind: &str, flaws: &FlawSet) -> Plan {
    if let Some((rec, item)) = b.known(kind) {
        if b.at.as_deref() != Some(rec.as_str()) {
            return go(&rec, &format!("{item} is at {rec}, heading there"));
        }
        if !b.is_open(&rec) {
            return plan(format!("{rec} must be opened first"), format!("open {rec}"));
        }
        return plan(format!("{item} spotted, taking it"), format!("take {item} from {rec}"));
    }
    if let Some(at) = &b.at {
        if closeable(at) && !b.open.get(at).copied().unwrap_or(false) && !flaws.has(SEARCH) {
            return plan(format!("{at} is shut, opening it"), format!("open {at}"));
        }
    }
    let searchable = |r: &&String| !appliance(r);
    if let Some(next) = b.rooms.iter().filter(searchable).find(|r| !b.visited.contains(*r)) {
        return go(next, &format!("no {kind} found yet, checking {next}"));
    }
    if !flaws.has(SEARCH) {
        if let Some(shut) = b
            .rooms
            .iter()
            .filter(searchable)
            .find(|r| closeable(r) && !b.open.get(*r).copied().unwrap_or(false))
        {
            return go(shut, &format!("{shut} is still unchecked"));
        }
    }
    plan(format!("no {kind} anywhere in sight, looking around"), "look")
}

pub(super) fn decide(view: &AgentView) -> Result<AgentTurn> {
    let (goal, b) =
        Belief::from_view(view).ok_or_else(|| Error::Backend("rulebased: cannot read the house task".into()))?;
    let flaws = FlawSet::new(&HOUSE_FLAWS, &view.task_block, &view.hints);
    let p = match &goal {
        Goal::Examine { object } => match &b.holding {
            Some(held) if kind_of(held) == object => {
                let (rec, lamp) = b.lamp.clone().unwrap_or_else(|| {
                    let desk = b.rooms.iter().find(|r| kind_of(r) == "desk").cloned();
                    (desk.unwrap_or_else(|| "desk 1".into()), "desklamp 1".into())
                });
                if b.at.as_deref() == Some(rec.as_str()) {
                    plan(format!("{held} in hand, switching on {lamp}"), format!("use {lamp}"))
                } else {
                    go(&rec, &format!("bring {held} over to {lamp}"))
                }
            }
            _ => match (&b.lamp, flaws.has(LAMP_ORDER)) {
                (Some((rec, lamp)), true) => {
                    if b.at.as_deref() == Some(rec.as_str()) {
                        plan(format!("{lamp} is right here, switching it on"), format!("use {lamp}"))
                    } else {
                        go(rec, &format!("return to {lamp}"))
                    }
                }
                _ => find_and_take(&b, object, &flaws),
            },
        },
        Goal::Place {
            object,
            target,
            transform,
            count,
        } => match &b.holding {
            Some(held) => {
                let here = b.at.clone().unwrap_or_default();
                let twin = b
                    .contents
                    .get(&here)
                    .and_then(|c| c.iter().find(|i| kind_of(i) == object && *i != held))
                    .cloned();
                let dest = b
                    .rooms
                    .iter()
                    .find(|r| kind_of(r) == target)
                    .cloned()
                    .unwrap_or_else(|| format!("{target} 1"));
                match (twin, transform) {
                    (Some(twin), _) if *count == 2 && flaws.has(CAPACITY) && b.is_open(&here) => plan(
                        format!("{twin} is here too, grabbing it as well"),
                        format!("take {twin} from {here}"),
                    ),
                    (_, Some((verb, app_kind))) if !b.transformed.contains(held) => {
                        let app = b
                            .rooms
                            .iter()
                            .find(|r| kind_of(r) == *app_kind)
                            .cloned()
                            .unwrap_or_else(|| format!("{app_kind} 1"));
                        if here == app {
                            plan(
                                format!("{verb} {held} using {app}"),
                                format!("{verb} {held} with {app}"),
                            )
                        } else {
                            go(&app, &format!("{held} needs the {app_kind}"))
                        }
                    }
                    _ => {
                        if here != dest {
                            go(&dest, &format!("carry {held} to {dest}"))
                        } else if !b.is_open(&dest) && !flaws.has(CLOSED_PUT) {
                            plan(format!("{dest} is shut, opening it"), format!("open {dest}"))
                        } else {
                            plan(format!("drop {held} into {dest}"), format!("put {held} in/on {dest}"))
                        }
                    }
                }
            }
            None => find_and_take(&b, object, &flaws),
        },
    };
    let state = format!(
        "location {}; carrying {}",
        b.at.as_deref().unwrap_or("none"),
        b.holding.as_deref().unwrap_or("nothing")
    );
    Ok(AgentTurn {
        state_note: Some(state),
        thought: Some(p.thought),
        action: p.action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goals_parse() {
        assert_eq!(
            parse_goal("put a hot apple in countertop."),
            Some(Goal::Place {
                object: "apple".into(),
                target: "countertop".into(),
                transform: Some(("heat", "microwave")),
                count: 1
            })
        );
        assert_eq!(
            parse_goal("look at book under the desklamp."),
            Some(Goal::Examine { object: "book".into() })
        );
        assert!(matches!(
            parse_goal("put two cd in safe."),
            Some(Goal::Place { count: 2, .. })
        ));
    }
}
