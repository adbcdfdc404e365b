//! MiniShop planner with injectable flaws.

use super::{AgentView, FlawSet, OPTIONS, PRICE, QUERY, SHOP_FLAWS};
use crate::agents::AgentTurn;
use crate::envcore::shop::{tokens, INVALID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Wanted {
    pub noun: String,
    pub attributes: Vec<String>,
    pub values: Vec<String>,
    pub budget_cents: u32,
}

/// Reads "i need a {noun} that is {a} and {b}, in {v} and {w}, with a price below {n}.00 dollars".
pub(super) fn parse_instruction(text: &str) -> Option<Wanted> {
    let rest = text.trim().strip_prefix("i need a ")?;
    let (noun, rest) = rest.split_once(" that is ")?;
    let (mid, budget) = rest.split_once(", with a price below ")?;
    let budget: u32 = budget.strip_suffix(".00 dollars")?.parse().ok()?;
    let (attrs, values) = match mid.split_once(", in ") {
        Some((a, v)) => (a, v.split(" and ").map(str::to_string).collect()),
        None => (mid, Vec::new()),
    };
    Some(Wanted {
        noun: noun.to_string(),
        attributes: attrs.split(" and ").map(str::to_string).collect(),
        values,
        budget_cents: budget * 100,
    })
}

pub(super) fn instruction_of(task_block: &str) -> Option<&str> {
    let mut lines = task_block.lines();
    lines.find(|l| *l == "Instruction:")?;
    lines.next()
}

/// `$12.34` to cents.
pub(super) fn cents(text: &str) -> Option<u32> {
    let (d, c) = text.trim().strip_prefix('$')?.split_once('.')?;
    Some(d.parse::<u32>().ok()? * 100 + c.parse::<u32>().ok()?)
}

fn covers(title: &str, phrase: &str) -> bool {
    let t = tokens(title);
    tokens(phrase).iter().all(|p| t.contains(p))
}

struct Listing {
    asin: String,
    title: String,
    price: u32,
}

fn listings(page: &str) -> Vec<Listing> {
    let lines: Vec<&str> = page.lines().collect();
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        let Some(asin) = l.strip_prefix("[B0").and_then(|r| r.strip_suffix(']')) else {
            continue;
        };
        let (Some(title), Some(price)) = (lines.get(i + 1), lines.get(i + 2).and_then(|p| cents(p))) else {
            continue;
        };
        out.push(Listing {
            asin: format!("B0{asin}"),
            title: title.to_string(),
            price,
        });
    }
    out
}

pub(super) fn decide(view: &AgentView) -> Result<AgentTurn> {
    let want = instruction_of(&view.task_block)
        .and_then(parse_instruction)
        .ok_or_else(|| Error::Backend("rulebased: cannot read the shop instruction".into()))?;
    let flaws = FlawSet::new(&SHOP_FLAWS, &view.task_block, &view.hints);

    // latest page that was not an error or an option acknowledgement
    let page = view
        .history
        .iter()
        .rev()
        .map(|(_, o)| o.as_str())
        .find(|o| *o != INVALID && !o.starts_with("You have clicked "))
        .unwrap_or(view.task_block.as_str());
    let mut clicked: Vec<String> = Vec::new();
    for (turn, obs) in view.history.iter().rev() {
        if obs.contains("[Buy Now]") {
            break;
        }
        if let Some(v) = obs.strip_prefix("You have clicked ") {
            clicked.push(v.trim_end_matches('.').to_string());
        }
        let _ = turn;
    }

    let (state, action) = if page.starts_with("WebShop") {
        let query = if flaws.has(QUERY) {
            want.noun.clone()
        } else {
            format!("{} {}", want.noun, want.attributes.join(" "))
        };
        ("viewing search page".to_string(), format!("search[{query}]"))
    } else if page.contains("[Buy Now]") {
        let missing = want.values.iter().find(|v| !clicked.contains(v));
        match missing {
            Some(v) if !flaws.has(OPTIONS) => (
                format!(
                    "viewing item, {} of {} options picked",
                    clicked.len(),
                    want.values.len()
                ),
                format!("click[{v}]"),
            ),
            _ => ("viewing item, ready to buy".to_string(), "click[Buy Now]".to_string()),
        }
    } else if page.lines().nth(1).is_some_and(|l| l.starts_with("Page ")) {
        let items = listings(page);
        let fits = |l: &&Listing| {
            let attrs_ok = flaws.has(QUERY) || want.attributes.iter().all(|a| covers(&l.title, a));
            let price_ok = flaws.has(PRICE) || l.price <= want.budget_cents;
            covers(&l.title, &want.noun) && attrs_ok && price_ok
        };
        let action = match items.iter().find(fits) {
            Some(l) => format!("click[{}]", l.asin),
            None if page.contains("[Next >]") => "click[Next >]".to_string(),
            None => match items.first() {
                Some(l) => format!("click[{}]", l.asin),
                None => "click[Back to Search]".to_string(),
            },
        };
        ("viewing results".to_string(), action)
    } else {
        ("viewing details".to_string(), "click[< Prev]".to_string())
    };
    Ok(AgentTurn {
        state_note: Some(state),
        thought: None,
        action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instruction_round_trip() {
        let w = parse_instruction(
            "i need a face serum that is vegan and organic, in lavender and 8 fl oz, with a price below 30.00 dollars",
        )
        .unwrap();
        assert_eq!(w.noun, "face serum");
        assert_eq!(w.attributes, vec!["vegan", "organic"]);
        assert_eq!(w.values, vec!["lavender", "8 fl oz"]);
        assert_eq!(w.budget_cents, 3000);
        let w = parse_instruction("i need a webcam that is wireless, with a price below 20.00 dollars").unwrap();
        assert!(w.values.is_empty());
    }

    #[test]
    fn prices_parse() {
        assert_eq!(cents("$12.05"), Some(1205));
        assert_eq!(cents("12.05"), None);
    }
}
