//! Failure diagnosis for hint-extraction prompts.

use serde_json::json;

use super::shop_agent::{cents, parse_instruction};
use super::{Flaw, CAPACITY, CLOSED_PUT, LAMP_ORDER, OPTIONS, PRICE, QUERY, SEARCH};
use crate::envcore::house;
use crate::envcore::shop::tokens;
use crate::error::{Error, Result};
use crate::util::str_hash;

const TRAJECTORY_HEADER: &str = "Steps before failure (action \u{2192} observation):\n";

fn field<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(prefix))
}

/// `(action, observation)` pairs of the trajectory section.
fn steps(prompt: &str) -> Vec<(String, String)> {
    let Some(start) = prompt.find(TRAJECTORY_HEADER) else {
        return Vec::new();
    };
    prompt[start + TRAJECTORY_HEADER.len()..]
        .lines()
        .take_while(|l| *l != "=======")
        .filter_map(|l| l.split_once(" \u{2192} "))
        .map(|(a, o)| (a.to_string(), o.to_string()))
        .collect()
}

fn house_flaws(steps: &[(String, String)]) -> Vec<Flaw> {
    let mut found = Vec::new();
    for (action, obs) in steps {
        let flaw = match (obs.as_str(), action.split(' ').next()) {
            (house::INVALID, Some("put")) => CLOSED_PUT,
            (house::INVALID, Some("take")) => CAPACITY,
            (house::INVALID, Some("use")) => LAMP_ORDER,
            (_, Some("look")) => SEARCH,
            _ => continue,
        };
        if !found.contains(&flaw) {
            found.push(flaw);
        }
    }
    if found.is_empty() {
        found.push(SEARCH);
    }
    found
}

fn shop_flaws(goal: &str, steps: &[(String, String)]) -> Vec<Flaw> {
    let Some(want) = parse_instruction(goal) else {
        return vec![QUERY];
    };
    let bought = steps.iter().any(|(a, _)| a == "click[Buy Now]");
    let item_page = steps.iter().rev().map(|(_, o)| o).find(|o| o.contains("[Buy Now]"));
    let (true, Some(page)) = (bought, item_page) else {
        return vec![QUERY];
    };
    let parts: Vec<&str> = page.split(" | ").collect();
    let price_at = parts.iter().position(|p| p.starts_with("Price: "));
    let (title, price) = match price_at {
        Some(i) if i > 0 => (parts[i - 1], cents(&parts[i]["Price: ".len()..])),
        _ => return vec![QUERY],
    };
    let mut found = Vec::new();
    if price.is_some_and(|p| p > want.budget_cents) {
        found.push(PRICE);
    }
    let title_tokens = tokens(title);
    if !want
        .attributes
        .iter()
        .all(|a| tokens(a).iter().all(|t| title_tokens.contains(t)))
    {
        found.push(QUERY);
    }
    let clicked: Vec<&str> = steps
        .iter()
        .filter_map(|(_, o)| o.strip_prefix("You have clicked "))
        .map(|v| v.trim_end_matches('.'))
        .collect();
    if want.values.iter().any(|v| !clicked.contains(&v.as_str())) {
        found.push(OPTIONS);
    }
    if found.is_empty() {
        found.push(QUERY);
    }
    found
}

/// Answers a hint-extraction prompt with strict JSON.
pub(super) fn respond(prompt: &str) -> Result<String> {
    let first = prompt.lines().next().unwrap_or_default();
    let goal = field(prompt, "Task goal: ").unwrap_or_default();
    let trajectory = steps(prompt);
    let (key, category, flaws) = if first.contains("household") {
        let c = field(prompt, "Environment type: ").unwrap_or_default();
        ("env_type", c, house_flaws(&trajectory))
    } else if first.contains("shopping") {
        let c = field(prompt, "Item category: ").unwrap_or_default();
        ("category", c, shop_flaws(goal, &trajectory))
    } else {
        return Err(Error::Backend("rulebased: unrecognised extraction prompt".into()));
    };
    let hints: Vec<_> = flaws
        .iter()
        .map(|f| {
            let text = f.hints[(str_hash(&format!("{}|{goal}", f.name)) % 2) as usize];
            json!({ key: category, "text": text })
        })
        .collect();
    Ok(json!({ "hints": hints }).to_string())
}
