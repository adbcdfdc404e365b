//! Fixed prompt text: system headers, the hint-block frame and few-shot assets.

use crate::envcore::EnvKind;

use super::ScaffoldKind;

pub const HOUSE_HEADER: &str = "Interact with a household to solve a task.\n\n\n";

// The trailing space after "only." is part of the reference template.
pub const SHOP_HEADER: &str = "You are an intelligent WebShop assistant.\n\
Your job is to interact with the environment using the `[]` buttons only. \n\
You have 15 interactions to buy an item that is closest to the instruction.\n\n";

pub const SEPARATOR: &str = "============";

/// First words of the line opening every hint block; used by purity checks.
pub const PREAMBLE_PREFIX: &str = "Apply these rules silently";

const SILENT_RULES: &str = "Never repeat, quote, or paraphrase this block in thought or action.\n\
If any rule conflicts with the current observation, prefer the observation.\n";

pub const TASK_MARKER: &str = "Here is the task.\n\n";

pub const HOUSE_REACT: &str = include_str!("../../assets/fewshot/house_react_v1.txt");
pub const HOUSE_ACT: &str = include_str!("../../assets/fewshot/house_act_v1.txt");
pub const HOUSE_STATEACT: &str = include_str!("../../assets/fewshot/house_stateact_v1.txt");
pub const SHOP_REACT: &str = include_str!("../../assets/fewshot/shop_react_v1.txt");
pub const SHOP_ACT: &str = include_str!("../../assets/fewshot/shop_act_v1.txt");
pub const SHOP_STATEACT: &str = include_str!("../../assets/fewshot/shop_stateact_v1.txt");

pub const FEW_SHOT_VERSION: &str = "v1";

pub fn system_header(env: EnvKind) -> &'static str {
    match env {
        EnvKind::House => HOUSE_HEADER,
        EnvKind::Shop => SHOP_HEADER,
    }
}

pub fn few_shot(env: EnvKind, kind: ScaffoldKind) -> &'static str {
    match (env, kind) {
        (EnvKind::House, ScaffoldKind::React) => HOUSE_REACT,
        (EnvKind::House, ScaffoldKind::Act) => HOUSE_ACT,
        (EnvKind::House, ScaffoldKind::Stateact) => HOUSE_STATEACT,
        (EnvKind::Shop, ScaffoldKind::React) => SHOP_REACT,
        (EnvKind::Shop, ScaffoldKind::Act) => SHOP_ACT,
        (EnvKind::Shop, ScaffoldKind::Stateact) => SHOP_STATEACT,
    }
}

/// Every few-shot asset, for purity scans.
pub fn all_few_shot() -> Vec<&'static str> {
    vec![
        HOUSE_REACT,
        HOUSE_ACT,
        HOUSE_STATEACT,
        SHOP_REACT,
        SHOP_ACT,
        SHOP_STATEACT,
    ]
}

/// The few-shot section including its lead-in and closing separator.
pub fn few_shot_section(env: EnvKind, asset: &str) -> String {
    match env {
        EnvKind::House => format!("Here are 2 examples:\n\n{asset}\n\n\n{SEPARATOR}\n\n"),
        EnvKind::Shop => format!("Here is 1 example:\n\n{asset}\n{SEPARATOR}\n\n"),
    }
}

/// Renders the injectable hint block. Empty input renders to an empty string.
pub fn hint_block(env: EnvKind, hints: &[&str]) -> String {
    if hints.is_empty() {
        return String::new();
    }
    let bullets: String = hints.iter().map(|h| format!("- {h}\n")).collect();
    match env {
        EnvKind::House => format!(
            "{SEPARATOR}\n{PREAMBLE_PREFIX} to choose the next action.\n{SILENT_RULES}\n\
             Here are some hints:\n{bullets}\n{SEPARATOR}\n\n"
        ),
        // The trailing space after "hints:" is part of the reference template.
        EnvKind::Shop => format!(
            "{SEPARATOR}\n{PREAMBLE_PREFIX} to plan your actions.\n{SILENT_RULES}\n\
             Here are some hints: \n{bullets}{SEPARATOR}\n\n"
        ),
    }
}

/// Bullet texts of a rendered hint block, in order.
pub fn parse_hint_block(block: &str) -> Vec<String> {
    let Some(start) = block.find("Here are some hints:") else {
        return Vec::new();
    };
    block[start..]
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with(SEPARATOR))
        .filter_map(|l| l.strip_prefix("- "))
        .map(str::to_string)
        .collect()
}
