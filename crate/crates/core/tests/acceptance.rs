//! One line per primary criterion. Exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hintdistill::agents::{templates, ScaffoldKind};
use hintdistill::dataset::{
    build_dataset, exclusion, scan_examples, verify_purity, DatasetKind, Exclusion, FilterPolicy, TrainingExample,
    ViolationKind,
};
use hintdistill::envcore::{generate_tasks, reset, EnvKind, EnvState, Split, TaskSpec};
use hintdistill::hints::{Hint, HintBank};
use hintdistill::llmio::rulebased::RuleBackend;
use hintdistill::llmio::scripted::ScriptedBackend;
use hintdistill::llmio::{Backend, BackendKind, CompletionRequest, CompletionResult, RecordingBackend, Tag};
use hintdistill::pipeline::{self, PipelineConfig, RunManifest};
use hintdistill::report::k_sweep;
use hintdistill::retrieval::{select_hints, RetrievalQuery, ScorerKind};
use hintdistill::rollout::{run_episode, run_split, BlockCharge, PolicyConfig, Trajectory};
use hintdistill::util::read_jsonl;
use hintdistill::Result;

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn proxy(text: &str) -> u64 {
    let n = text.len() as u64;
    n / 4 + u64::from(!n.is_multiple_of(4))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

struct Pilot {
    dir: tempfile::TempDir,
    runs: Vec<(EnvKind, ScaffoldKind, RunManifest, Duration)>,
}

impl Pilot {
    fn out(&self, env: EnvKind, sc: ScaffoldKind) -> PathBuf {
        self.dir.path().join(format!("{env}-{sc}"))
    }

    fn run() -> Pilot {
        let dir = tempfile::tempdir().unwrap();
        let mut runs = Vec::new();
        for env in [EnvKind::House, EnvKind::Shop] {
            for sc in [ScaffoldKind::React, ScaffoldKind::Stateact, ScaffoldKind::Act] {
                let cfg = PipelineConfig::pilot(env, sc, dir.path().join(format!("{env}-{sc}")));
                let start = Instant::now();
                let manifest = pipeline::run(&cfg).unwrap();
                runs.push((env, sc, manifest, start.elapsed()));
            }
        }
        Pilot { dir, runs }
    }
}

fn pilot_criterion(p: &Pilot) -> Outcome {
    let (_, _, m, took) = &p.runs[0];
    ensure(*took < Duration::from_secs(300), format!("pilot took {took:?}"))?;
    ensure(m.passed(), "stage checks failed")?;
    let base = m.metrics[0].success_rate;
    let rag = m.metrics[1].success_rate;
    let gap = 100.0 * (rag - base);
    ensure(gap >= 20.0, format!("gap {gap:.1}pp"))?;

    let mut again = PipelineConfig::pilot(EnvKind::House, ScaffoldKind::React, p.dir.path().join("rerun"));
    again.parallelism = 7;
    pipeline::run(&again).unwrap();
    let a = tree(&p.out(EnvKind::House, ScaffoldKind::React));
    let b = tree(&p.dir.path().join("rerun"));
    ensure(a == b, "artifact trees differ between runs")?;
    Ok(format!(
        "house react base {:.1}% rag {:.1}% gap {gap:.1}pp in {:.2}s; {} files identical across reruns",
        100.0 * base,
        100.0 * rag,
        took.as_secs_f64(),
        a.len()
    ))
}

const ROOTS: &[&str] = &[
    "Ensure the {container} is open before attempting to place the {object} inside",
    "Verify inventory capacity before attempting to take additional items",
    "Use a systematic search pattern to avoid missing {object} in {location}",
    "Pick up the {object} first, then use the lamp at its {location}",
    "Check that the {item} price is below the budget before clicking Buy Now",
    "Select every required {size} and {color} option before buying",
    "Include the product noun and key attributes in the search query",
    "Identify and locate the {object} before attempting to move it",
    "Ensure the {object} is cool before placing it in the {container}",
    "Open closed receptacles while searching for the {object}",
];

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut s: Vec<char> = text.chars().collect();
    let edits = rng.random_range(0..=16);
    for _ in 0..edits {
        let c = (b'a' + rng.random_range(0..26u8)) as char;
        match rng.random_range(0..3) {
            0 => s.insert(rng.random_range(0..=s.len()), c),
            1 if !s.is_empty() => {
                s.remove(rng.random_range(0..s.len()));
            }
            _ if !s.is_empty() => {
                let i = rng.random_range(0..s.len());
                s[i] = c;
            }
            _ => {}
        }
    }
    s.into_iter().collect()
}

fn dedup_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let texts: Vec<String> = (0..200)
        .map(|_| {
            let root = ROOTS[rng.random_range(0..ROOTS.len())];
            mutate(&mut rng, root)
        })
        .collect();
    let category = "Pick & Place";
    let mut bank = HintBank::new(EnvKind::House);
    for t in &texts {
        bank.dedup_insert(Hint {
            category: category.into(),
            text: t.clone(),
            source_episode: "x".into(),
        })
        .unwrap();
    }
    let mut oracle: Vec<&String> = Vec::new();
    let mut boundary = 0;
    for t in &texts {
        let mut dup = false;
        for k in &oracle {
            let n = k.chars().count().max(t.chars().count());
            let d = strsim::levenshtein(k, t);
            if 100 * (n - d) == 85 * n {
                boundary += 1;
            }
            dup |= 100 * (n - d) >= 85 * n;
        }
        if !dup {
            oracle.push(t);
        }
    }
    let got: Vec<&String> = bank.partition(category).iter().map(|h| &h.text).collect();
    ensure(
        got == oracle,
        format!("bank kept {} vs oracle {}", got.len(), oracle.len()),
    )?;
    ensure(
        oracle.len() > 10 && oracle.len() < 190,
        "mutations were not near-duplicate enough to test anything",
    )?;
    Ok(format!(
        "200 strings, {} kept, equal to brute force ({boundary} exact-threshold pairs)",
        got.len()
    ))
}

const VOCAB: &[&str] = &[
    "open", "cabinet", "mug", "drawer", "take", "lamp", "cool", "fridge", "search", "price", "budget", "the", "to",
    "in", "Mug", "shelf", "heat", "before",
];
const STOP: &[&str] = &["the", "to", "in", "before"];

fn words(text: &str) -> BTreeSet<String> {
    text.split(' ')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOP.contains(&w.as_str()))
        .collect()
}

fn phrase(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..9);
    (0..n)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rag episodes on the pilot split, counting rerank calls per episode.
fn one_shot_counts() -> std::result::Result<usize, String> {
    let tasks = generate_tasks(EnvKind::House, Split::Train, 60, 42);
    let rb = RuleBackend::new();
    let base = run_split(&tasks, &PolicyConfig::base(ScaffoldKind::React), &rb, None, 4).unwrap();
    let failures: Vec<_> = base.iter().filter_map(Trajectory::failure_record).collect();
    let bank = hintdistill::hints::build_bank(EnvKind::House, &failures, &rb).unwrap();
    let rec = RecordingBackend::new(RuleBackend::new());
    let rag = run_split(
        &tasks,
        &PolicyConfig::rag(ScaffoldKind::React, 3, ScorerKind::Rerank),
        &rec,
        Some(&bank),
        4,
    )
    .unwrap();
    let mut per_session: BTreeMap<String, usize> = BTreeMap::new();
    for r in rec.records().iter().filter(|r| r.tag == Tag::Rerank) {
        *per_session.entry(r.session.clone().unwrap_or_default()).or_default() += 1;
    }
    for t in &rag {
        ensure(
            t.retrieval_calls == 1,
            format!("{} retrieved {} times", t.task.id, t.retrieval_calls),
        )?;
        let nonempty = !bank.partition(&t.task.category).is_empty();
        let calls = per_session.get(&t.task.id).copied().unwrap_or(0);
        ensure(
            calls == usize::from(nonempty),
            format!("{} made {calls} rerank calls", t.task.id),
        )?;
    }
    ensure(base.iter().all(|t| t.retrieval_calls == 0), "base episode retrieved")?;
    Ok(rag.len())
}

fn retrieval_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let category = "Heat & Place";
    let mut total_hints = 0;
    for pair in 0..100 {
        let mut bank = HintBank::new(EnvKind::House);
        for _ in 0..rng.random_range(0..=50) {
            bank.dedup_insert(Hint {
                category: category.into(),
                text: phrase(&mut rng),
                source_episode: "x".into(),
            })
            .unwrap();
        }
        let query = RetrievalQuery {
            env_kind: EnvKind::House,
            instruction: phrase(&mut rng),
            initial_observation: phrase(&mut rng),
            explicit_category: Some(category.into()),
            session: None,
        };
        let k = rng.random_range(0..=9);
        let got: Vec<String> = select_hints(&bank, &query, category, k, ScorerKind::Lexical, None)
            .unwrap()
            .block
            .hints
            .into_iter()
            .map(|h| h.text)
            .collect();
        let q = words(&format!("{} {}", query.instruction, query.initial_observation));
        let cands: Vec<&str> = bank.partition(category).iter().map(|h| h.text.as_str()).collect();
        let mut order: Vec<(std::cmp::Reverse<usize>, usize)> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| (std::cmp::Reverse(words(c).intersection(&q).count()), i))
            .collect();
        order.sort();
        let want: Vec<String> = order.iter().take(k).map(|&(_, i)| cands[i].to_string()).collect();
        ensure(got == want, format!("pair {pair}: {got:?} vs {want:?}"))?;
        total_hints += got.len();
    }
    let episodes = one_shot_counts()?;
    Ok(format!(
        "100 lexical pairs equal to exhaustive sort ({total_hints} hints); {episodes} rag episodes with exactly 1 retrieval"
    ))
}

fn purity_criterion(p: &Pilot) -> Outcome {
    let few_shot = templates::all_few_shot();
    let mut scanned = 0;
    let mut echoes = 0;
    for (env, sc, _, _) in &p.runs {
        let root = p.out(*env, *sc);
        let bank = HintBank::load(&root.join("bank.json")).unwrap();
        for name in ["sft", "distill"] {
            let report = verify_purity(&root.join(format!("datasets/{name}.jsonl")), &bank, &few_shot).unwrap();
            ensure(
                report.is_clean(),
                format!("{env} {sc} {name}: {} violations", report.violations.len()),
            )?;
            scanned += report.examples_scanned;
            echoes += report.thought_echoes;
        }
    }

    let root = p.out(EnvKind::House, ScaffoldKind::React);
    let bank = HintBank::load(&root.join("bank.json")).unwrap();
    let mut examples: Vec<TrainingExample> = read_jsonl(&root.join("datasets/distill.jsonl")).unwrap();
    let target = examples.len() / 2;
    let planted = bank.texts()[0].to_string();
    examples[target].text.push_str(&format!("{planted}\n"));
    let report = scan_examples(&examples, &bank.texts(), &few_shot);
    ensure(
        report.violations.len() == 1,
        format!("{} violations after plant", report.violations.len()),
    )?;
    let v = &report.violations[0];
    ensure(
        v.example == target && v.task_id == examples[target].meta.task_id && v.kind == ViolationKind::HintText,
        format!("misattributed: {v:?}"),
    )?;
    Ok(format!(
        "12 datasets, {scanned} examples, 0 violations ({echoes} thought echoes); plant found at example {target} ({})",
        v.task_id
    ))
}

/// House tasks, one per category, with scripted golden-plan completions.
fn scripted_tasks() -> Vec<(TaskSpec, Vec<String>)> {
    generate_tasks(EnvKind::House, Split::Train, 6, 42)
        .into_iter()
        .map(|t| {
            let (state, _) = reset(&t).unwrap();
            let EnvState::House(h) = state else { unreachable!() };
            let plan = h.golden_solution();
            (t, plan)
        })
        .collect()
}

fn scripted_backend(tasks: &[(TaskSpec, Vec<String>)], rerank: Option<&str>) -> ScriptedBackend {
    let b = ScriptedBackend::new();
    for (t, plan) in tasks {
        for a in plan {
            b.push_for(&t.id, Tag::AgentTurn, format!("> {a}"));
        }
        if let Some(answer) = rerank {
            b.push_for(&t.id, Tag::Rerank, answer);
        }
    }
    b
}

fn five_hint_bank() -> HintBank {
    let mut bank = HintBank::new(EnvKind::House);
    for c in EnvKind::House.categories() {
        for root in &ROOTS[..5] {
            bank.dedup_insert(Hint {
                category: c.to_string(),
                text: root.to_string(),
                source_episode: "x".into(),
            })
            .unwrap();
        }
    }
    bank
}

fn token_criterion() -> Outcome {
    let tasks = scripted_tasks();
    let specs: Vec<TaskSpec> = tasks.iter().map(|(t, _)| t.clone()).collect();
    let bank = five_hint_bank();
    let base_rec = RecordingBackend::new(scripted_backend(&tasks, None));
    let rag_rec = RecordingBackend::new(scripted_backend(&tasks, Some(r#"{"answer": [2, 4, 1]}"#)));
    let rag_policy = PolicyConfig::rag(ScaffoldKind::Act, 3, ScorerKind::Rerank);
    let base = run_split(&specs, &PolicyConfig::base(ScaffoldKind::Act), &base_rec, None, 1).unwrap();
    let rag = run_split(&specs, &rag_policy, &rag_rec, Some(&bank), 1).unwrap();

    let billed = |rec: &RecordingBackend<ScriptedBackend>, id: &str, tag: Tag| -> u64 {
        rec.records()
            .iter()
            .filter(|r| r.session.as_deref() == Some(id) && r.tag == tag)
            .map(|r| r.prompt_tokens + r.completion_tokens)
            .sum()
    };
    for (b, r) in base.iter().zip(&rag) {
        ensure(
            b.outcome.success && r.outcome.success,
            format!("{} scripted plan failed", b.task.id),
        )?;
        ensure(b.turns == r.turns, format!("{} transcripts differ", b.task.id))?;
        let block = r.hint_block.as_ref().ok_or("rag episode without block")?;
        ensure(block.hints.len() == 3, "rerank answer not honoured")?;
        let steps = u64::from(r.ledger.agent_calls);
        let retrieval = billed(&rag_rec, &r.task.id, Tag::Rerank);
        ensure(
            retrieval > 0 && retrieval == r.ledger.retrieval_tokens,
            "retrieval tokens mismatch",
        )?;
        ensure(
            r.ledger.total - b.ledger.total == steps * proxy(&block.rendered) + retrieval,
            format!(
                "{}: diff {} vs {steps} x {} + {retrieval}",
                r.task.id,
                r.ledger.total - b.ledger.total,
                proxy(&block.rendered)
            ),
        )?;
        let agent = |rec: &RecordingBackend<ScriptedBackend>, id: &str| billed(rec, id, Tag::AgentTurn);
        ensure(
            agent(&rag_rec, &r.task.id) - agent(&base_rec, &b.task.id) == steps * proxy(&block.rendered),
            "backend-reported usage disagrees with the block arithmetic",
        )?;
    }

    let ks = [1usize, 3, 6, 9];
    let lexical = PolicyConfig {
        scorer: ScorerKind::Lexical,
        block_charge: BlockCharge::PerStep,
        ..rag_policy
    };
    let factory = |_k: usize| -> Result<Arc<dyn Backend>> { Ok(Arc::new(scripted_backend(&tasks, None))) };
    let rows = k_sweep(&specs, &ks, &lexical, &bank, &factory, 1).unwrap();
    let tokens: Vec<f64> = rows.iter().map(|r| r.metrics.tokens_per_episode).collect();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.mean_hints > a.mean_hints {
            ensure(
                b.metrics.tokens_per_episode > a.metrics.tokens_per_episode,
                format!("k {} -> {} not strict", a.k, b.k),
            )?;
        } else {
            ensure(
                b.metrics.tokens_per_episode >= a.metrics.tokens_per_episode,
                "tokens decreased",
            )?;
        }
    }
    ensure(
        rows[3].mean_hints == 5.0 && rows[2].mean_hints == 5.0,
        "partition of 5 not exhausted at k=6",
    )?;
    Ok(format!(
        "{} scripted pairs exact; k-sweep tokens/episode {:?}",
        base.len(),
        tokens.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>()
    ))
}

/// Replays one fixed completion forever.
struct Repeat(&'static str);

impl Backend for Repeat {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        Ok(CompletionResult::proxy(request, self.0))
    }
}

fn filter_criterion(p: &Pilot) -> Outcome {
    let root = p.out(EnvKind::Shop, ScaffoldKind::React);
    let base: Vec<Trajectory> = read_jsonl(&root.join("transcripts/base.jsonl")).unwrap();
    let policy = FilterPolicy::default();
    let mut t = base[0].clone();
    t.audit = Default::default();
    t.abort_reason = None;
    let verdict = |t: &Trajectory| exclusion(t, DatasetKind::Sft, &policy);
    for (score, want) in [
        (67.0, None),
        (66.0, Some(Exclusion::Unsuccessful)),
        (66.99, Some(Exclusion::Unsuccessful)),
    ] {
        t.outcome.score = score;
        t.outcome.success = score >= 100.0;
        ensure(verdict(&t) == want, format!("score {score}: {:?}", verdict(&t)))?;
    }
    t.outcome.score = 100.0;
    t.outcome.success = true;
    for (invalid, want) in [(2, None), (3, Some(Exclusion::TooManyInvalid))] {
        t.audit.invalid_action_count = invalid;
        ensure(verdict(&t) == want, format!("invalid {invalid}: {:?}", verdict(&t)))?;
    }

    let mut capped = Vec::new();
    for (env, junk, cap) in [
        (EnvKind::House, "> dance wildly", 50u32),
        (EnvKind::Shop, "Action: click[Nowhere]", 15),
    ] {
        let task = &generate_tasks(env, Split::Train, 1, 42)[0];
        let traj = run_episode(task, &PolicyConfig::base(ScaffoldKind::Act), &Repeat(junk), None).unwrap();
        ensure(
            !traj.outcome.success && traj.outcome.steps_used == cap && traj.steps() == cap && !traj.audit.aborted,
            format!("{env} cap: {:?}", traj.outcome),
        )?;
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(
            std::slice::from_ref(&traj),
            DatasetKind::Sft,
            &policy,
            None,
            &dir.path().join("d.jsonl"),
        )
        .unwrap();
        ensure(m.kept == 0, "capped episode kept")?;
        capped.push(format!("{env} {cap}"));
    }
    Ok(format!(
        "67 kept, 66 excluded; 2 invalid kept, 3 excluded; caps {} fail",
        capped.join("/")
    ))
}

/// Keeps every agent prompt a wrapped backend sees.
struct Capture<B> {
    inner: B,
    prompts: Mutex<Vec<String>>,
}

impl<B: Backend> Backend for Capture<B> {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        if request.tag == Tag::AgentTurn {
            self.prompts.lock().unwrap().push(request.prompt_text());
        }
        self.inner.complete(request)
    }
}

fn placement_criterion(p: &Pilot) -> Outcome {
    let mut checked = 0;
    for env in [EnvKind::House, EnvKind::Shop] {
        let bank = HintBank::load(&p.out(env, ScaffoldKind::React).join("bank.json")).unwrap();
        let tasks = generate_tasks(env, Split::Train, 60, 42);
        let cap = Capture {
            inner: RuleBackend::new(),
            prompts: Mutex::new(Vec::new()),
        };
        let rag = run_split(
            &tasks,
            &PolicyConfig::rag(ScaffoldKind::React, 3, ScorerKind::Rerank),
            &cap,
            Some(&bank),
            1,
        )
        .unwrap();
        let blocks: BTreeSet<String> = rag
            .iter()
            .filter_map(|t| t.hint_block.as_ref().map(|b| b.rendered.clone()))
            .collect();
        let header = templates::system_header(env);
        let few_shot_lead = match env {
            EnvKind::House => "Here are 2 examples:",
            EnvKind::Shop => "Here is 1 example:",
        };
        for prompt in cap.prompts.lock().unwrap().iter() {
            let task = prompt.find(header).ok_or("header missing")?;
            let block = blocks
                .iter()
                .find_map(|b| prompt.find(b.as_str()))
                .ok_or("hint block missing from a rag prompt")?;
            let few = prompt.find(few_shot_lead).ok_or("few-shot missing")?;
            ensure(task < block && block < few, format!("order {task} {block} {few}"))?;
            checked += 1;
        }
    }
    for (env, golden) in [
        (EnvKind::House, include_str!("fixtures/house_rag_prompt_head.txt")),
        (EnvKind::Shop, include_str!("fixtures/shop_rag_prompt_head.txt")),
    ] {
        let hints: Vec<&str> = golden.lines().filter_map(|l| l.strip_prefix("- ")).collect();
        let block = templates::hint_block(env, &hints);
        let expected_head = format!("{}{block}", templates::system_header(env));
        ensure(
            golden.starts_with(&expected_head),
            format!("{env} block differs from reference"),
        )?;
    }
    Ok(format!(
        "{checked} rag prompts ordered header < block < few-shot; both reference blocks byte-exact"
    ))
}

fn main() {
    let started = Instant::now();
    let pilot = Pilot::run();
    let results: Vec<(&str, Outcome)> = vec![
        ("offline pilot", pilot_criterion(&pilot)),
        ("dedup oracle", dedup_criterion()),
        ("retrieval oracle", retrieval_criterion()),
        ("purity", purity_criterion(&pilot)),
        ("token accounting", token_criterion()),
        ("filter boundaries", filter_criterion(&pilot)),
        ("prompt placement", placement_criterion(&pilot)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
