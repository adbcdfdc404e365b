//! MiniShop: a search/click shopping site with an attribute-count score.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpisodeOutcome, Observation, StepResult, TaskSpec};

pub const CATEGORIES: [&str; 5] = ["beauty", "electronics", "fashion", "food", "furniture"];

pub const STEP_CAP: u32 = 15;
pub const INVALID: &str = "Invalid action.";
pub const RESULTS_PER_PAGE: usize = 3;

struct Table {
    nouns: &'static [&'static str],
    attributes: &'static [&'static str],
    dims: [(&'static str, &'static [&'static str]); 2],
}

fn table(category: &str) -> &'static Table {
    const BEAUTY: Table = Table {
        nouns: &[
            "deodorant",
            "shampoo",
            "face serum",
            "lip balm",
            "body lotion",
            "hair oil",
        ],
        attributes: &[
            "fragrance free",
            "vegan",
            "paraben free",
            "cruelty free",
            "organic",
            "travel size",
        ],
        dims: [
            ("scent", &["lavender", "unscented", "vanilla", "eucalyptus"]),
            ("size", &["2 fl oz", "8 fl oz", "16 fl oz"]),
        ],
    };
    const ELECTRONICS: Table = Table {
        nouns: &[
            "headphones",
            "phone charger",
            "bluetooth speaker",
            "hdmi cable",
            "webcam",
            "power bank",
        ],
        attributes: &[
            "wireless",
            "fast charging",
            "noise cancelling",
            "waterproof",
            "usb c",
            "portable",
        ],
        dims: [
            ("color", &["black", "white", "silver", "blue"]),
            ("size", &["1 pack", "2 pack", "3 pack"]),
        ],
    };
    const FASHION: Table = Table {
        nouns: &[
            "running shoes",
            "rain jacket",
            "wool socks",
            "denim shorts",
            "polo shirt",
            "sun hat",
        ],
        attributes: &[
            "machine washable",
            "slim fit",
            "breathable",
            "water resistant",
            "lightweight",
            "cotton",
        ],
        dims: [
            ("color", &["navy", "olive", "charcoal", "red"]),
            ("size", &["small", "medium", "large", "x-large"]),
        ],
    };
    const FOOD: Table = Table {
        nouns: &[
            "green tea",
            "trail mix",
            "dark chocolate",
            "olive oil",
            "protein bar",
            "granola",
        ],
        attributes: &[
            "gluten free",
            "low sugar",
            "non gmo",
            "keto friendly",
            "organic",
            "kosher",
        ],
        dims: [
            ("flavor", &["original", "sea salt", "honey", "mint"]),
            ("size", &["6 count", "12 count", "24 count"]),
        ],
    };
    const FURNITURE: Table = Table {
        nouns: &[
            "office chair",
            "bookshelf",
            "side table",
            "floor lamp",
            "storage bench",
            "bar stool",
        ],
        attributes: &[
            "easy assembly",
            "solid wood",
            "adjustable height",
            "mid century",
            "metal frame",
            "space saving",
        ],
        dims: [
            ("color", &["walnut", "oak", "espresso", "white"]),
            ("size", &["compact", "standard", "large"]),
        ],
    };
    match category {
        "beauty" => &BEAUTY,
        "electronics" => &ELECTRONICS,
        "food" => &FOOD,
        "furniture" => &FURNITURE,
        _ => &FASHION,
    }
}

const BRANDS: &[&str] = &[
    "Lumora",
    "Kestrel",
    "Northwind",
    "Solace",
    "Vantor",
    "Pellucid",
    "Tidewell",
    "Quillon",
    "Marrow",
    "Halcyon",
];
const BUDGETS: &[u32] = &[20, 30, 40, 50, 60, 80, 100];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub asin: String,
    pub title: String,
    pub noun: String,
    pub attributes: Vec<String>,
    /// Option dimensions and their selectable values.
    pub options: Vec<(String, Vec<String>)>,
    pub price_cents: u32,
}

impl Product {
    pub fn price_text(&self) -> String {
        format!("${}.{:02}", self.price_cents / 100, self.price_cents % 100)
    }
}

/// What the shopper is asked to buy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopGoal {
    pub noun: String,
    pub attributes: Vec<String>,
    /// Required (dimension, value) choices.
    pub options: Vec<(String, String)>,
    pub budget_dollars: u32,
}

impl ShopGoal {
    pub fn requirement_count(&self) -> usize {
        1 + self.attributes.len() + self.options.len()
    }
}

/// Score of a purchase against a goal, in 0..=100.
///
/// Each requirement (the noun, every attribute, every option value) counts
/// once; the fraction matched is zeroed when the price exceeds the budget.
pub fn shop_score(product: &Product, chosen: &BTreeMap<String, String>, goal: &ShopGoal) -> f64 {
    let mut matched = usize::from(product.noun == goal.noun);
    matched += goal
        .attributes
        .iter()
        .filter(|a| product.attributes.contains(a))
        .count();
    matched += goal
        .options
        .iter()
        .filter(|(dim, value)| chosen.get(dim) == Some(value))
        .count();
    if product.price_cents > goal.budget_dollars * 100 {
        return 0.0;
    }
    let total = goal.requirement_count();
    if matched == total {
        return 100.0;
    }
    (100.0 * matched as f64 / total as f64).clamp(0.0, 100.0)
}

/// Lower-cased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

fn title_case(text: &str) -> String {
    text.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopWorld {
    pub category: String,
    pub catalog: Vec<Product>,
    pub goal: ShopGoal,
}

impl ShopWorld {
    pub fn generate(category: &str, seed: u64) -> ShopWorld {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = table(category);

        let noun = t.nouns.choose(&mut rng).expect("nouns").to_string();
        let n_attr = rng.random_range(1..=2usize);
        let attributes: Vec<String> = t
            .attributes
            .choose_multiple(&mut rng, n_attr)
            .map(|a| a.to_string())
            .collect();
        let n_opt = rng.random_range(0..=2usize);
        let dims: Vec<usize> = match n_opt {
            0 => vec![],
            1 => vec![rng.random_range(0..2usize)],
            _ => vec![0, 1],
        };
        let options: Vec<(String, String)> = dims
            .iter()
            .map(|d| {
                let (dim, values) = t.dims[*d];
                (dim.to_string(), values.choose(&mut rng).expect("values").to_string())
            })
            .collect();
        let budget = *BUDGETS.choose(&mut rng).expect("budgets");
        let goal = ShopGoal {
            noun: noun.clone(),
            attributes: attributes.clone(),
            options,
            budget_dollars: budget,
        };

        let make = |rng: &mut ChaCha8Rng, noun: &str, attrs: Vec<String>, price_cents: u32| {
            let brand = BRANDS.choose(rng).expect("brands");
            let asin: String = (0..8)
                .map(|_| {
                    let c = b"ABCDEFGHJKLMNPQRSTUVWXYZ0123456789"[rng.random_range(0..34)];
                    c as char
                })
                .collect();
            let attr_text = attrs.iter().map(|a| title_case(a)).collect::<Vec<_>>().join(", ");
            Product {
                asin: format!("B0{asin}"),
                title: format!("{brand} {} - {attr_text}", title_case(noun)),
                noun: noun.to_string(),
                attributes: attrs,
                options: t
                    .dims
                    .iter()
                    .map(|(d, vs)| (d.to_string(), vs.iter().map(|v| v.to_string()).collect()))
                    .collect(),
                price_cents,
            }
        };
        let other_attr = |rng: &mut ChaCha8Rng, exclude: &[String]| -> String {
            let pool: Vec<&&str> = t
                .attributes
                .iter()
                .filter(|a| !exclude.iter().any(|e| e == **a))
                .collect();
            pool.choose(rng).expect("attribute pool").to_string()
        };
        let budget_cents = budget * 100;
        let under = |rng: &mut ChaCha8Rng| rng.random_range(budget_cents * 2 / 5..budget_cents);

        let mut target_attrs = attributes.clone();
        if rng.random_bool(0.5) {
            let extra = other_attr(&mut rng, &attributes);
            target_attrs.push(extra);
        }
        let price = under(&mut rng);
        let target = make(&mut rng, &noun, target_attrs, price);

        let price_decoy = rng.random_bool(0.7).then(|| {
            let price = budget_cents + rng.random_range(100..3000);
            make(&mut rng, &noun, attributes.clone(), price)
        });
        let attr_decoy = rng.random_bool(0.7).then(|| {
            let drop = rng.random_range(0..attributes.len());
            let mut attrs: Vec<String> = attributes
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, a)| a.clone())
                .collect();
            attrs.push(other_attr(&mut rng, &attributes));
            let price = under(&mut rng);
            make(&mut rng, &noun, attrs, price)
        });

        let n_fill = rng.random_range(6..=12usize);
        let mut catalog = Vec::with_capacity(n_fill + 3);
        for _ in 0..n_fill {
            let filler_noun = *t.nouns.choose(&mut rng).expect("nouns");
            let k = rng.random_range(1..=2usize);
            let mut attrs: Vec<String> = t
                .attributes
                .choose_multiple(&mut rng, k)
                .map(|a| a.to_string())
                .collect();
            if filler_noun == noun && attributes.iter().all(|a| attrs.contains(a)) {
                // keep fillers from satisfying the goal
                attrs.retain(|a| *a != attributes[0]);
                if attrs.is_empty() {
                    attrs.push(other_attr(&mut rng, &attributes));
                }
            }
            let price = rng.random_range(500..15000);
            catalog.push(make(&mut rng, filler_noun, attrs, price));
        }
        let t_pos = rng.random_range(0..=catalog.len());
        catalog.insert(t_pos, target);
        let mut upper = t_pos;
        if let Some(decoy) = price_decoy {
            let p = rng.random_range(0..=upper);
            catalog.insert(p, decoy);
            upper = p;
        }
        if let Some(decoy) = attr_decoy {
            let a = rng.random_range(0..=upper);
            catalog.insert(a, decoy);
        }

        ShopWorld {
            category: category.to_string(),
            catalog,
            goal,
        }
    }

    pub fn instruction(&self) -> String {
        let g = &self.goal;
        let mut text = format!("i need a {} that is {}", g.noun, g.attributes.join(" and "));
        if !g.options.is_empty() {
            let values: Vec<&str> = g.options.iter().map(|(_, v)| v.as_str()).collect();
            text.push_str(&format!(", in {}", values.join(" and ")));
        }
        text.push_str(&format!(", with a price below {}.00 dollars", g.budget_dollars));
        text
    }

    /// Catalog indices matching a query, best first; ties keep catalog order.
    pub fn search(&self, query: &str) -> Vec<usize> {
        let mut q = tokens(query);
        q.sort();
        q.dedup();
        let mut scored: Vec<(usize, usize)> = self
            .catalog
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let title = tokens(&p.title);
                (q.iter().filter(|t| title.contains(t)).count(), i)
            })
            .filter(|(s, _)| *s > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, i)| i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "lowercase")]
pub enum Page {
    Search,
    Results { query: String, page: usize },
    Item { query: String, page: usize, product: usize },
    Detail { query: String, page: usize, product: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShopState {
    world: ShopWorld,
    instruction: String,
    page: Page,
    selected: BTreeMap<String, String>,
    purchased: Option<usize>,
    score: f64,
    pub(crate) steps: u32,
    pub(crate) done: bool,
}

impl ShopState {
    pub fn new(task: &TaskSpec) -> Self {
        ShopState {
            world: ShopWorld::generate(&task.category, task.seed),
            instruction: task.instruction.clone(),
            page: Page::Search,
            selected: BTreeMap::new(),
            purchased: None,
            score: 0.0,
            steps: 0,
            done: false,
        }
    }

    pub fn world(&self) -> &ShopWorld {
        &self.world
    }

    pub fn page(&self) -> &Page {
        &self.page
    }

    pub fn selected(&self) -> &BTreeMap<String, String> {
        &self.selected
    }

    pub fn purchased(&self) -> Option<&Product> {
        self.purchased.map(|i| &self.world.catalog[i])
    }

    pub fn initial_observation(&self) -> String {
        format!("WebShop\nInstruction:\n{}\n[Search]", self.instruction)
    }

    pub fn step(&mut self, raw: &str) -> StepResult {
        let (valid, text) = match self.apply(raw.trim()) {
            Some(text) => (true, text),
            None => (false, INVALID.to_string()),
        };
        self.steps += 1;
        if self.purchased.is_some() || self.steps >= STEP_CAP {
            self.done = true;
        }
        let outcome = self.done.then_some(EpisodeOutcome {
            success: self.score == 100.0,
            score: self.score,
            steps_used: self.steps,
        });
        StepResult {
            observation: Observation {
                text,
                step_index: self.steps,
            },
            done: self.done,
            outcome,
            action_valid: valid,
        }
    }

    fn apply(&mut self, action: &str) -> Option<String> {
        if let Some(q) = action.strip_prefix("search[").and_then(|r| r.strip_suffix(']')) {
            if self.page != Page::Search || q.trim().is_empty() {
                return None;
            }
            self.page = Page::Results {
                query: q.trim().to_string(),
                page: 1,
            };
            return Some(self.render());
        }
        let button = action.strip_prefix("click[")?.strip_suffix(']')?.trim().to_string();
        let lower = button.to_ascii_lowercase();
        if lower == "back to search" {
            if self.page == Page::Search {
                return None;
            }
            self.page = Page::Search;
            return Some(self.render());
        }
        match self.page.clone() {
            Page::Search => None,
            Page::Results { query, page } => {
                let hits = self.world.search(&query);
                let pages = hits.len().div_ceil(RESULTS_PER_PAGE).max(1);
                match lower.as_str() {
                    "next >" if page < pages => {
                        self.page = Page::Results { query, page: page + 1 };
                    }
                    "< prev" if page > 1 => {
                        self.page = Page::Results { query, page: page - 1 };
                    }
                    _ => {
                        let on_page = hits
                            .iter()
                            .skip((page - 1) * RESULTS_PER_PAGE)
                            .take(RESULTS_PER_PAGE)
                            .find(|i| self.world.catalog[**i].asin.eq_ignore_ascii_case(&button))?;
                        self.selected.clear();
                        self.page = Page::Item {
                            query,
                            page,
                            product: *on_page,
                        };
                    }
                }
                Some(self.render())
            }
            Page::Item { query, page, product } => {
                match lower.as_str() {
                    "< prev" => self.page = Page::Results { query, page },
                    "description" | "features" | "reviews" => {
                        self.page = Page::Detail { query, page, product };
                        let p = &self.world.catalog[product];
                        let body = match lower.as_str() {
                            "description" => {
                                format!("Description: a {} from the {} range.", p.noun, self.world.category)
                            }
                            "features" => format!("Features: {}.", p.attributes.join("; ")),
                            _ => "Reviews: no reviews yet.".to_string(),
                        };
                        return Some(format!("[Back to Search]\n[< Prev]\n{body}"));
                    }
                    "buy now" => {
                        self.purchased = Some(product);
                        self.score = shop_score(&self.world.catalog[product], &self.selected, &self.world.goal);
                        return Some(format!("Thank you for shopping with us! Your score: {:.2}", self.score));
                    }
                    _ => {
                        let p = &self.world.catalog[product];
                        let (dim, value) = p.options.iter().find_map(|(d, vs)| {
                            vs.iter()
                                .find(|v| v.eq_ignore_ascii_case(&button))
                                .map(|v| (d.clone(), v.clone()))
                        })?;
                        self.selected.insert(dim, value.clone());
                        return Some(format!("You have clicked {value}."));
                    }
                }
                Some(self.render())
            }
            Page::Detail { query, page, product } => {
                if lower != "< prev" {
                    return None;
                }
                self.page = Page::Item { query, page, product };
                Some(self.render())
            }
        }
    }

    /// Text of the current page.
    pub fn render(&self) -> String {
        match &self.page {
            Page::Search => format!("WebShop\nInstruction:\n{}\n[Search]", self.instruction),
            Page::Results { query, page } => {
                let hits = self.world.search(query);
                let pages = hits.len().div_ceil(RESULTS_PER_PAGE).max(1);
                let mut lines = vec![
                    "[Back to Search]".to_string(),
                    format!("Page {page} of {pages} ({} results)", hits.len()),
                ];
                if *page > 1 {
                    lines.push("[< Prev]".to_string());
                }
                if *page < pages {
                    lines.push("[Next >]".to_string());
                }
                for i in hits.iter().skip((page - 1) * RESULTS_PER_PAGE).take(RESULTS_PER_PAGE) {
                    let p = &self.world.catalog[*i];
                    lines.push(format!("[{}]", p.asin));
                    lines.push(p.title.clone());
                    lines.push(p.price_text());
                }
                lines.join("\n")
            }
            Page::Item { product, .. } | Page::Detail { product, .. } => {
                let p = &self.world.catalog[*product];
                let mut lines = vec!["[Back to Search]".to_string(), "[< Prev]".to_string()];
                for (dim, values) in &p.options {
                    let buttons: Vec<String> = values.iter().map(|v| format!("[{v}]")).collect();
                    lines.push(format!("{dim}: {}", buttons.join(" ")));
                }
                lines.push(p.title.clone());
                lines.push(format!("Price: {}", p.price_text()));
                for b in ["[Description]", "[Features]", "[Reviews]", "[Buy Now]"] {
                    lines.push(b.to_string());
                }
                lines.join("\n")
            }
        }
    }

    /// A full-knowledge purchase plan reaching score 100.
    pub fn golden_solution(&self) -> Vec<String> {
        let g = &self.world.goal;
        let query = format!("{} {}", g.noun, g.attributes.join(" "));
        let hits = self.world.search(&query);
        let mut plan = vec![format!("search[{query}]")];
        let pos = hits
            .iter()
            .position(|i| {
                let p = &self.world.catalog[*i];
                p.noun == g.noun
                    && g.attributes.iter().all(|a| p.attributes.contains(a))
                    && p.price_cents <= g.budget_dollars * 100
            })
            .expect("target is always listed");
        for _ in 0..pos / RESULTS_PER_PAGE {
            plan.push("click[Next >]".to_string());
        }
        plan.push(format!("click[{}]", self.world.catalog[hits[pos]].asin));
        for (_, v) in &g.options {
            plan.push(format!("click[{v}]"));
        }
        plan.push("click[Buy Now]".to_string());
        plan
    }
}
