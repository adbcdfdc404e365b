//! MiniHouse: a household text world with containers, appliances and a desk lamp.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpisodeOutcome, Observation, StepResult, TaskSpec};

pub const CATEGORIES: [&str; 6] = [
    "Pick & Place",
    "Examine in Light",
    "Clean & Place",
    "Heat & Place",
    "Cool & Place",
    "PickTwo & Place",
];

pub const STEP_CAP: u32 = 50;
pub const INVALID: &str = "Nothing happens.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecKind {
    Cabinet,
    CoffeeTable,
    CounterTop,
    Desk,
    DiningTable,
    Drawer,
    Dresser,
    Fridge,
    GarbageCan,
    Microwave,
    Safe,
    Shelf,
    SideTable,
    SinkBasin,
}

impl RecKind {
    pub fn name(self) -> &'static str {
        match self {
            RecKind::Cabinet => "cabinet",
            RecKind::CoffeeTable => "coffeetable",
            RecKind::CounterTop => "countertop",
            RecKind::Desk => "desk",
            RecKind::DiningTable => "diningtable",
            RecKind::Drawer => "drawer",
            RecKind::Dresser => "dresser",
            RecKind::Fridge => "fridge",
            RecKind::GarbageCan => "garbagecan",
            RecKind::Microwave => "microwave",
            RecKind::Safe => "safe",
            RecKind::Shelf => "shelf",
            RecKind::SideTable => "sidetable",
            RecKind::SinkBasin => "sinkbasin",
        }
    }

    pub fn closeable(self) -> bool {
        matches!(
            self,
            RecKind::Cabinet | RecKind::Drawer | RecKind::Safe | RecKind::Fridge | RecKind::Microwave
        )
    }

    /// The transformation this receptacle performs, if it is an appliance.
    pub fn appliance(self) -> Option<Transform> {
        match self {
            RecKind::SinkBasin => Some(Transform::Clean),
            RecKind::Microwave => Some(Transform::Heat),
            RecKind::Fridge => Some(Transform::Cool),
            _ => None,
        }
    }

    fn holds_objects_initially(self) -> bool {
        !matches!(
            self,
            RecKind::Fridge | RecKind::Microwave | RecKind::SinkBasin | RecKind::GarbageCan
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Clean,
    Heat,
    Cool,
}

impl Transform {
    pub fn verb(self) -> &'static str {
        match self {
            Transform::Clean => "clean",
            Transform::Heat => "heat",
            Transform::Cool => "cool",
        }
    }

    pub fn adjective(self) -> &'static str {
        match self {
            Transform::Clean => "clean",
            Transform::Heat => "hot",
            Transform::Cool => "cool",
        }
    }

    pub fn appliance(self) -> RecKind {
        match self {
            Transform::Clean => RecKind::SinkBasin,
            Transform::Heat => RecKind::Microwave,
            Transform::Cool => RecKind::Fridge,
        }
    }

    fn from_verb(verb: &str) -> Option<Self> {
        match verb {
            "clean" => Some(Transform::Clean),
            "heat" => Some(Transform::Heat),
            "cool" => Some(Transform::Cool),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Goal {
    Place {
        object: String,
        target: RecKind,
        transform: Option<Transform>,
        count: u8,
    },
    Examine {
        object: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receptacle {
    pub name: String,
    pub kind: RecKind,
    pub open: bool,
    pub contents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub name: String,
    pub kind: String,
    pub location: Option<usize>,
    pub portable: bool,
    pub clean: bool,
    pub hot: bool,
    pub cool: bool,
}

impl Item {
    pub fn has(&self, t: Transform) -> bool {
        match t {
            Transform::Clean => self.clean,
            Transform::Heat => self.hot,
            Transform::Cool => self.cool,
        }
    }
}

const LAMP: &str = "desklamp";

const COOLABLE: &[&str] = &[
    "apple", "potato", "tomato", "egg", "bread", "lettuce", "mug", "cup", "plate", "bowl",
];
const HEATABLE: &[&str] = &["apple", "potato", "tomato", "egg", "bread", "mug", "cup", "plate"];
const CLEANABLE: &[&str] = &[
    "mug", "cup", "plate", "bowl", "pan", "pot", "knife", "spoon", "fork", "spatula", "apple", "lettuce", "tomato",
    "cloth",
];
const EXAMINABLE: &[&str] = &[
    "book",
    "pen",
    "cellphone",
    "keychain",
    "creditcard",
    "alarmclock",
    "cd",
    "statue",
    "vase",
    "watch",
];
const ANY_OBJECT: &[&str] = &[
    "apple",
    "potato",
    "tomato",
    "egg",
    "bread",
    "lettuce",
    "mug",
    "cup",
    "plate",
    "bowl",
    "pan",
    "pot",
    "knife",
    "spoon",
    "fork",
    "spatula",
    "cloth",
    "book",
    "pen",
    "pencil",
    "cellphone",
    "keychain",
    "creditcard",
    "alarmclock",
    "cd",
    "statue",
    "vase",
    "watch",
    "candle",
    "soapbar",
    "remotecontrol",
    "towel",
];

const OPTIONAL_RECEPTACLES: &[(RecKind, usize)] = &[
    (RecKind::Cabinet, 3),
    (RecKind::Drawer, 3),
    (RecKind::CounterTop, 1),
    (RecKind::Shelf, 2),
    (RecKind::Safe, 1),
    (RecKind::DiningTable, 1),
    (RecKind::SideTable, 1),
    (RecKind::Dresser, 1),
    (RecKind::CoffeeTable, 1),
    (RecKind::GarbageCan, 1),
];

const CLOSED_TARGETS: &[RecKind] = &[RecKind::Cabinet, RecKind::Drawer, RecKind::Safe];
const OPEN_TARGETS: &[RecKind] = &[
    RecKind::CounterTop,
    RecKind::Shelf,
    RecKind::DiningTable,
    RecKind::SideTable,
    RecKind::Desk,
    RecKind::Dresser,
    RecKind::CoffeeTable,
];

/// A freshly generated MiniHouse layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub receptacles: Vec<Receptacle>,
    pub items: Vec<Item>,
    pub goal: Goal,
}

impl World {
    /// Draws a room of 8–16 receptacles and 10–20 objects for `category`.
    pub fn generate(category: &str, seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_rec = rng.random_range(8..=16usize);

        let mut kinds = vec![
            RecKind::Fridge,
            RecKind::Microwave,
            RecKind::SinkBasin,
            RecKind::Desk,
            RecKind::Cabinet,
            RecKind::CounterTop,
        ];
        let mut remaining: Vec<(RecKind, usize)> = OPTIONAL_RECEPTACLES.to_vec();
        while kinds.len() < n_rec {
            let open: Vec<usize> = (0..remaining.len()).filter(|i| remaining[*i].1 > 0).collect();
            let pick = *open.choose(&mut rng).expect("receptacle pool exhausted");
            remaining[pick].1 -= 1;
            kinds.push(remaining[pick].0);
        }
        kinds.sort();
        let mut receptacles: Vec<Receptacle> = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let n = receptacles.iter().filter(|r| r.kind == kind).count() + 1;
            receptacles.push(Receptacle {
                name: format!("{} {}", kind.name(), n),
                kind,
                open: !kind.closeable(),
                contents: Vec::new(),
            });
        }

        let present = |pool: &[RecKind]| -> Vec<RecKind> {
            pool.iter()
                .copied()
                .filter(|k| receptacles.iter().any(|r| r.kind == *k))
                .collect()
        };
        let pool: &[&str] = match category {
            "Clean & Place" => CLEANABLE,
            "Heat & Place" => HEATABLE,
            "Cool & Place" => COOLABLE,
            "Examine in Light" => EXAMINABLE,
            _ => ANY_OBJECT,
        };
        let object = pool.choose(&mut rng).expect("non-empty pool").to_string();
        let goal = if category == "Examine in Light" {
            Goal::Examine { object }
        } else {
            let group = if rng.random_bool(0.5) {
                present(CLOSED_TARGETS)
            } else {
                present(OPEN_TARGETS)
            };
            let target = *group.choose(&mut rng).expect("cabinet and countertop always exist");
            let transform = match category {
                "Clean & Place" => Some(Transform::Clean),
                "Heat & Place" => Some(Transform::Heat),
                "Cool & Place" => Some(Transform::Cool),
                _ => None,
            };
            let count = if category == "PickTwo & Place" { 2 } else { 1 };
            Goal::Place {
                object,
                target,
                transform,
                count,
            }
        };

        let (goal_object, goal_target) = match &goal {
            Goal::Place { object, target, .. } => (object.clone(), Some(*target)),
            Goal::Examine { object } => (object.clone(), None),
        };
        let needed = match &goal {
            Goal::Place { count, .. } => usize::from(*count),
            Goal::Examine { .. } => 1,
        };
        let target_spots: Vec<usize> = (0..receptacles.len())
            .filter(|i| {
                let k = receptacles[*i].kind;
                k.holds_objects_initially() && Some(k) != goal_target
            })
            .collect();
        let any_spots: Vec<usize> = (0..receptacles.len())
            .filter(|i| receptacles[*i].kind.holds_objects_initially())
            .collect();

        let mut items: Vec<Item> = Vec::new();
        let place =
            |items: &mut Vec<Item>, receptacles: &mut Vec<Receptacle>, kind: &str, spot: usize, portable: bool| {
                let n = items.iter().filter(|i| i.kind == kind).count() + 1;
                let idx = items.len();
                items.push(Item {
                    name: format!("{kind} {n}"),
                    kind: kind.to_string(),
                    location: Some(spot),
                    portable,
                    clean: false,
                    hot: false,
                    cool: false,
                });
                receptacles[spot].contents.push(idx);
            };

        let first = *target_spots.choose(&mut rng).expect("placement spot");
        place(&mut items, &mut receptacles, &goal_object, first, true);
        if needed == 2 {
            let second = if rng.random_bool(0.5) {
                first
            } else {
                *target_spots.choose(&mut rng).expect("placement spot")
            };
            place(&mut items, &mut receptacles, &goal_object, second, true);
        }
        let desk = receptacles
            .iter()
            .position(|r| r.kind == RecKind::Desk)
            .expect("desk always exists");
        place(&mut items, &mut receptacles, LAMP, desk, false);

        let n_obj = rng.random_range(10..=20usize);
        let distractors: Vec<&str> = ANY_OBJECT.iter().copied().filter(|k| *k != goal_object).collect();
        while items.len() < n_obj {
            let kind = *distractors.choose(&mut rng).expect("distractor pool");
            let spot = *any_spots.choose(&mut rng).expect("placement spot");
            place(&mut items, &mut receptacles, kind, spot, true);
        }

        World {
            receptacles,
            items,
            goal,
        }
    }

    pub fn instruction(&self) -> String {
        match &self.goal {
            Goal::Examine { object } => format!("look at {object} under the {LAMP}."),
            Goal::Place {
                object,
                target,
                transform,
                count,
            } => {
                let quantity = if *count == 2 { "two" } else { "a" };
                let adjective = transform.map(|t| format!("{} ", t.adjective())).unwrap_or_default();
                format!("put {quantity} {adjective}{object} in {}.", target.name())
            }
        }
    }
}

/// Full MiniHouse episode state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseState {
    world: World,
    instruction: String,
    at: Option<usize>,
    holding: Option<usize>,
    lamp_on: bool,
    pub(crate) steps: u32,
    pub(crate) done: bool,
    success: bool,
}

impl HouseState {
    pub fn new(task: &TaskSpec) -> Self {
        let world = World::generate(&task.category, task.seed);
        HouseState {
            instruction: task.instruction.clone(),
            world,
            at: None,
            holding: None,
            lamp_on: false,
            steps: 0,
            done: false,
            success: false,
        }
    }

    pub fn receptacles(&self) -> &[Receptacle] {
        &self.world.receptacles
    }

    pub fn items(&self) -> &[Item] {
        &self.world.items
    }

    pub fn goal(&self) -> &Goal {
        &self.world.goal
    }

    pub fn holding(&self) -> Option<&Item> {
        self.holding.map(|i| &self.world.items[i])
    }

    pub fn location(&self) -> Option<&Receptacle> {
        self.at.map(|r| &self.world.receptacles[r])
    }

    pub fn lamp_on(&self) -> bool {
        self.lamp_on
    }

    pub fn succeeded(&self) -> bool {
        self.success
    }

    pub fn initial_observation(&self) -> String {
        let names: Vec<&str> = self.world.receptacles.iter().map(|r| r.name.as_str()).collect();
        format!(
            "Task: {}\nYou are in a room. Around you are: {}.",
            self.instruction,
            names.join(", ")
        )
    }

    fn rec(&self, name: &str) -> Option<usize> {
        self.world.receptacles.iter().position(|r| r.name == name)
    }

    fn item(&self, name: &str) -> Option<usize> {
        self.world.items.iter().position(|i| i.name == name)
    }

    fn list_contents(&self, rec: usize) -> String {
        let contents = &self.world.receptacles[rec].contents;
        if contents.is_empty() {
            return "nothing".to_string();
        }
        contents
            .iter()
            .map(|i| self.world.items[*i].name.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn describe(&self, rec: usize) -> String {
        let r = &self.world.receptacles[rec];
        if r.kind.closeable() {
            if r.open {
                format!("It is open. Inside: {}.", self.list_contents(rec))
            } else {
                "It is closed; open it to look inside.".to_string()
            }
        } else {
            format!("On it: {}.", self.list_contents(rec))
        }
    }

    pub fn step(&mut self, raw: &str) -> StepResult {
        let action = normalize_action(raw);
        let (valid, text) = match self.apply(&action) {
            Some(text) => (true, text),
            None => (false, INVALID.to_string()),
        };
        self.steps += 1;
        if self.success || self.steps >= STEP_CAP {
            self.done = true;
        }
        let outcome = self.done.then_some(EpisodeOutcome {
            success: self.success,
            score: if self.success { 100.0 } else { 0.0 },
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

    /// Returns the observation for a valid action, `None` for an invalid one.
    fn apply(&mut self, action: &str) -> Option<String> {
        let (verb, rest) = action.split_once(' ').unwrap_or((action, ""));
        match verb {
            "look" if rest.is_empty() => Some(match self.at {
                Some(r) => format!(
                    "You are at {}, carrying {}.",
                    self.world.receptacles[r].name,
                    self.carrying()
                ),
                None => format!("You are in a room, carrying {}.", self.carrying()),
            }),
            "inventory" if rest.is_empty() => Some(format!("You are carrying {}.", self.carrying())),
            "go" => self.go(rest.strip_prefix("to ")?),
            "goto" => self.go(rest),
            "open" => {
                let r = self.rec(rest)?;
                let rec = &self.world.receptacles[r];
                if self.at != Some(r) || !rec.kind.closeable() || rec.open {
                    return None;
                }
                self.world.receptacles[r].open = true;
                Some(format!("You open {}. Inside: {}.", rest, self.list_contents(r)))
            }
            "close" => {
                let r = self.rec(rest)?;
                let rec = &self.world.receptacles[r];
                if self.at != Some(r) || !rec.kind.closeable() || !rec.open {
                    return None;
                }
                self.world.receptacles[r].open = false;
                Some(format!("You close {rest}."))
            }
            "take" => {
                let (obj, from) = match rest.split_once(" from ") {
                    Some((o, f)) => (o, Some(f)),
                    None => (rest, None),
                };
                let r = match from {
                    Some(f) => self.rec(f)?,
                    None => self.at?,
                };
                let i = self.item(obj)?;
                let item = &self.world.items[i];
                if self.at != Some(r)
                    || self.holding.is_some()
                    || !self.world.receptacles[r].open
                    || item.location != Some(r)
                    || !item.portable
                {
                    return None;
                }
                self.world.receptacles[r].contents.retain(|x| *x != i);
                self.world.items[i].location = None;
                self.holding = Some(i);
                Some(format!("You take {obj} from {}.", self.world.receptacles[r].name))
            }
            "put" => {
                let (obj, to) = rest
                    .split_once(" in/on ")
                    .or_else(|| rest.split_once(" in "))
                    .or_else(|| rest.split_once(" on "))?;
                let r = self.rec(to)?;
                let i = self.item(obj)?;
                if self.holding != Some(i) || self.at != Some(r) || !self.world.receptacles[r].open {
                    return None;
                }
                self.holding = None;
                self.world.items[i].location = Some(r);
                self.world.receptacles[r].contents.push(i);
                self.check_place_goal();
                Some(format!("You place {obj} in/on {to}."))
            }
            "clean" | "heat" | "cool" => {
                let t = Transform::from_verb(verb)?;
                let (obj, with) = rest.split_once(" with ")?;
                let r = self.rec(with)?;
                let i = self.item(obj)?;
                if self.holding != Some(i)
                    || self.at != Some(r)
                    || self.world.receptacles[r].kind.appliance() != Some(t)
                {
                    return None;
                }
                let item = &mut self.world.items[i];
                match t {
                    Transform::Clean => item.clean = true,
                    Transform::Heat => {
                        item.hot = true;
                        item.cool = false;
                    }
                    Transform::Cool => {
                        item.cool = true;
                        item.hot = false;
                    }
                }
                Some(format!("The {obj} is now {}.", t.adjective()))
            }
            "use" => {
                let i = self.item(rest)?;
                let lamp = &self.world.items[i];
                if lamp.kind != LAMP || lamp.location.is_none() || self.at != lamp.location {
                    return None;
                }
                let held = self.holding?;
                self.lamp_on = true;
                let held_item = &self.world.items[held];
                if let Goal::Examine { object } = &self.world.goal {
                    if held_item.kind == *object {
                        self.success = true;
                    }
                }
                Some(format!(
                    "You switch on {rest} and look at {} in its light.",
                    held_item.name
                ))
            }
            "examine" => {
                if let Some(r) = self.rec(rest) {
                    if self.at != Some(r) {
                        return None;
                    }
                    return Some(format!("You look over {rest}. {}", self.describe(r)));
                }
                let i = self.item(rest)?;
                let item = &self.world.items[i];
                if self.holding != Some(i) && (item.location.is_none() || item.location != self.at) {
                    return None;
                }
                let mut flags = Vec::new();
                for t in [Transform::Clean, Transform::Heat, Transform::Cool] {
                    if item.has(t) {
                        flags.push(t.adjective());
                    }
                }
                let state = if flags.is_empty() {
                    String::new()
                } else {
                    format!(" It is {}.", flags.join(" and "))
                };
                Some(format!("You look closely at {rest}.{state}"))
            }
            _ => None,
        }
    }

    fn go(&mut self, target: &str) -> Option<String> {
        let r = self.rec(target)?;
        self.at = Some(r);
        Some(format!("You arrive at {target}. {}", self.describe(r)))
    }

    fn carrying(&self) -> String {
        match self.holding {
            Some(i) => self.world.items[i].name.clone(),
            None => "nothing".to_string(),
        }
    }

    fn check_place_goal(&mut self) {
        if let Goal::Place {
            object,
            target,
            transform,
            count,
        } = &self.world.goal
        {
            let placed = self
                .world
                .items
                .iter()
                .filter(|i| {
                    i.kind == *object
                        && i.location.is_some_and(|r| self.world.receptacles[r].kind == *target)
                        && transform.is_none_or(|t| i.has(t))
                })
                .count();
            if placed >= usize::from(*count) {
                self.success = true;
            }
        }
    }

    /// A full-knowledge action plan that solves the task from the initial state.
    pub fn golden_solution(&self) -> Vec<String> {
        let w = &self.world;
        let mut plan = Vec::new();
        let mut opened: Vec<usize> = Vec::new();
        let visit = |plan: &mut Vec<String>, opened: &mut Vec<usize>, r: usize| {
            plan.push(format!("go to {}", w.receptacles[r].name));
            if w.receptacles[r].kind.closeable() && !w.receptacles[r].open && !opened.contains(&r) {
                plan.push(format!("open {}", w.receptacles[r].name));
                opened.push(r);
            }
        };
        let first_of = |kind: RecKind| w.receptacles.iter().position(|r| r.kind == kind);
        match &w.goal {
            Goal::Examine { object } => {
                let i = w.items.iter().position(|i| i.kind == *object).expect("target exists");
                let r = w.items[i].location.expect("placed");
                visit(&mut plan, &mut opened, r);
                plan.push(format!("take {} from {}", w.items[i].name, w.receptacles[r].name));
                let lamp = w.items.iter().find(|i| i.kind == LAMP).expect("lamp exists");
                let desk = lamp.location.expect("lamp placed");
                plan.push(format!("go to {}", w.receptacles[desk].name));
                plan.push(format!("use {}", lamp.name));
            }
            Goal::Place {
                object,
                target,
                transform,
                count,
            } => {
                let dest = first_of(*target).expect("target receptacle exists");
                let targets: Vec<usize> = w
                    .items
                    .iter()
                    .enumerate()
                    .filter(|(_, i)| i.kind == *object)
                    .map(|(n, _)| n)
                    .take(usize::from(*count))
                    .collect();
                for i in targets {
                    let r = w.items[i].location.expect("placed");
                    visit(&mut plan, &mut opened, r);
                    plan.push(format!("take {} from {}", w.items[i].name, w.receptacles[r].name));
                    if let Some(t) = transform {
                        let app = first_of(t.appliance()).expect("appliance exists");
                        plan.push(format!("go to {}", w.receptacles[app].name));
                        plan.push(format!(
                            "{} {} with {}",
                            t.verb(),
                            w.items[i].name,
                            w.receptacles[app].name
                        ));
                    }
                    visit(&mut plan, &mut opened, dest);
                    plan.push(format!("put {} in/on {}", w.items[i].name, w.receptacles[dest].name));
                }
            }
        }
        plan
    }
}

/// Lower-cases, collapses whitespace and maps `goto` to `go to`.
pub fn normalize_action(raw: &str) -> String {
    let joined = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    match joined.strip_prefix("goto ") {
        Some(rest) => format!("go to {rest}"),
        None => joined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envcore::{generate_tasks, reset, step, EnvKind, EnvState, Split};

    fn house_state(task: &TaskSpec) -> HouseState {
        match reset(task).unwrap().0 {
            EnvState::House(s) => s,
            EnvState::Shop(_) => unreachable!(),
        }
    }

    #[test]
    fn world_sizes_are_within_bounds() {
        for seed in 0..200 {
            for cat in CATEGORIES {
                let w = World::generate(cat, seed);
                assert!((8..=16).contains(&w.receptacles.len()));
                assert!((10..=20).contains(&w.items.len()), "{}", w.items.len());
            }
        }
    }

    #[test]
    fn open_closed_cabinet_then_put_fails_when_closed() {
        let tasks = generate_tasks(EnvKind::House, Split::Train, 30, 42);
        let task = tasks
            .iter()
            .find(|t| {
                let s = house_state(t);
                s.holding.is_none()
                    && s.items().iter().any(|i| {
                        i.portable
                            && i.location
                                .is_some_and(|r| s.receptacles()[r].kind == RecKind::CounterTop)
                    })
            })
            .unwrap();
        let s = house_state(task);
        let counter = s
            .receptacles()
            .iter()
            .position(|r| r.kind == RecKind::CounterTop)
            .unwrap();
        let item = s
            .items()
            .iter()
            .find(|i| i.portable && i.location == Some(counter))
            .map(|i| i.name.clone());
        let (mut state, _) = reset(task).unwrap();
        let Some(item) = item else { return };
        step(&mut state, "go to countertop 1").unwrap();
        let r = step(&mut state, &format!("take {item} from countertop 1")).unwrap();
        assert!(r.action_valid);
        step(&mut state, "go to cabinet 1").unwrap();
        let r = step(&mut state, &format!("put {item} in/on cabinet 1")).unwrap();
        assert!(!r.action_valid);
        assert_eq!(r.observation.text, INVALID);
        let r = step(&mut state, "open cabinet 1").unwrap();
        assert!(r.action_valid);
        assert!(r.observation.text.starts_with("You open cabinet 1."));
        let r = step(&mut state, &format!("put {item} in/on cabinet 1")).unwrap();
        assert!(r.action_valid);
    }

    #[test]
    fn golden_solutions_succeed_within_cap() {
        for task in generate_tasks(EnvKind::House, Split::Train, 120, 7) {
            let s = house_state(&task);
            let plan = s.golden_solution();
            let (mut state, _) = reset(&task).unwrap();
            let mut last = None;
            for a in &plan {
                let r = step(&mut state, a).unwrap();
                assert!(r.action_valid, "{}: {a} -> {}", task.id, r.observation.text);
                last = Some(r);
            }
            let last = last.unwrap();
            assert!(last.done && last.outcome.unwrap().success, "{}", task.id);
            assert!(plan.len() as u32 <= STEP_CAP);
        }
    }

    #[test]
    fn step_cap_forces_failure() {
        let task = &generate_tasks(EnvKind::House, Split::Train, 1, 42)[0];
        let (mut state, _) = reset(task).unwrap();
        let mut last = None;
        for _ in 0..STEP_CAP {
            last = Some(step(&mut state, "look").unwrap());
        }
        let last = last.unwrap();
        assert!(last.done);
        let outcome = last.outcome.unwrap();
        assert!(!outcome.success);
        assert_eq!(outcome.steps_used, 50);
        assert_eq!(outcome.score, 0.0);
    }

    #[test]
    fn goto_alias_and_case_are_normalized() {
        assert_eq!(normalize_action("  GoTo   fridge 1 "), "go to fridge 1");
    }

    #[test]
    fn lamp_requires_a_held_object() {
        let tasks = generate_tasks(EnvKind::House, Split::Train, 12, 42);
        let task = tasks.iter().find(|t| t.category == "Examine in Light").unwrap();
        let (mut state, _) = reset(task).unwrap();
        step(&mut state, "go to desk 1").unwrap();
        let r = step(&mut state, "use desklamp 1").unwrap();
        assert!(!r.action_valid);
    }
}
