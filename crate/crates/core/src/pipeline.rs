//! The full A→D chain driven by one JSON config, writing a fixed artifact tree.
//!
//! ```text
//! <out_dir>/tasks/train.jsonl
//! <out_dir>/transcripts/base.jsonl, rag.jsonl
//! <out_dir>/bank.json
//! <out_dir>/datasets/sft.jsonl, distill.jsonl (+ .manifest.json)
//! <out_dir>/reports/metrics.json, frontier.csv, table.txt, purity.json
//! <out_dir>/run_manifest.json
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{templates, ScaffoldKind};
use crate::dataset::{build_dataset, verify_purity, DatasetKind, DatasetManifest, FilterPolicy, PurityReport};
use crate::envcore::{generate_tasks, EnvKind, Split};
use crate::error::{Error, Result};
use crate::hints::{build_bank, HintBank};
use crate::llmio::{build_backend, BackendSpec};
use crate::report::{aggregate, format_table, frontier_csv, Method, MetricsRow};
use crate::retrieval::{ScorerKind, DEFAULT_K};
use crate::rollout::{run_split, BlockCharge, Mode, PolicyConfig, Trajectory};
use crate::util::{sha256_hex, write_bytes, write_json_pretty, write_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub env_kind: EnvKind,
    pub scaffold: ScaffoldKind,
    #[serde(default = "BackendSpec::rulebased")]
    pub backend: BackendSpec,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_scorer")]
    pub scorer: ScorerKind,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub train_count: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub block_charge: BlockCharge,
    #[serde(default)]
    pub temperature: f64,
    pub out_dir: PathBuf,
    /// Wall-clock stage timings in the run manifest. Off by default so
    /// repeated runs produce identical bytes.
    #[serde(default)]
    pub record_timings: bool,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_scorer() -> ScorerKind {
    ScorerKind::Rerank
}

fn default_seed() -> u64 {
    42
}

fn default_count() -> usize {
    60
}

fn default_parallelism() -> usize {
    4
}

impl PipelineConfig {
    pub fn pilot(env: EnvKind, scaffold: ScaffoldKind, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            env_kind: env,
            scaffold,
            backend: BackendSpec::rulebased(),
            k: DEFAULT_K,
            scorer: ScorerKind::Rerank,
            filter: FilterPolicy::default(),
            seed: default_seed(),
            train_count: default_count(),
            parallelism: default_parallelism(),
            block_charge: BlockCharge::PerStep,
            temperature: 0.0,
            out_dir: out_dir.into(),
            record_timings: false,
        }
    }

    /// Parses a config, reporting the JSON path of any bad field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.backend.validate()?;
        if self.train_count == 0 {
            return Err(Error::Config("train_count: must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism: must be at least 1".into()));
        }
        if !(0.0..=100.0).contains(&self.filter.min_score) {
            return Err(Error::Config("filter.min_score: must lie in [0, 100]".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir: must not be empty".into()));
        }
        if self.out_dir.is_file() {
            return Err(Error::Config(format!("out_dir: {} is a file", self.out_dir.display())));
        }
        Ok(())
    }

    pub fn policy(&self, mode: Mode) -> PolicyConfig {
        PolicyConfig {
            mode,
            scaffold: self.scaffold,
            k: self.k,
            scorer: self.scorer,
            temperature: self.temperature,
            block_charge: self.block_charge,
        }
    }
}

/// Artifact locations under an output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub tasks: PathBuf,
    pub base_transcripts: PathBuf,
    pub rag_transcripts: PathBuf,
    pub bank: PathBuf,
    pub sft: PathBuf,
    pub distill: PathBuf,
    pub metrics: PathBuf,
    pub frontier: PathBuf,
    pub table: PathBuf,
    pub purity: PathBuf,
    pub manifest: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: &Path) -> Self {
        ArtifactPaths {
            tasks: root.join("tasks/train.jsonl"),
            base_transcripts: root.join("transcripts/base.jsonl"),
            rag_transcripts: root.join("transcripts/rag.jsonl"),
            bank: root.join("bank.json"),
            sft: root.join("datasets/sft.jsonl"),
            distill: root.join("datasets/distill.jsonl"),
            metrics: root.join("reports/metrics.json"),
            frontier: root.join("reports/frontier.csv"),
            table: root.join("reports/table.txt"),
            purity: root.join("reports/purity.json"),
            manifest: root.join("run_manifest.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs_sha256: String,
    pub outputs_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub millis: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
    pub checks: Vec<Check>,
    pub metrics: Vec<MetricsRow>,
    pub datasets: Vec<DatasetManifest>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn combined(hashes: &[&str]) -> String {
    sha256_hex(hashes.join("\n").as_bytes())
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

/// Budget and one-shot checks for a batch.
pub fn batch_checks(mode: Mode, batch: &[Trajectory]) -> Vec<Check> {
    let over = batch
        .iter()
        .filter(|t| t.steps() > t.task.env_kind.step_cap() || t.outcome.steps_used > t.task.env_kind.step_cap())
        .count();
    let expected = u32::from(mode == Mode::Rag);
    let wrong_retrievals = batch.iter().filter(|t| t.retrieval_calls != expected).count();
    vec![
        check(
            &format!("{mode}_step_budget"),
            over == 0,
            format!("{over} of {} trajectories over the step cap", batch.len()),
        ),
        check(
            &format!("{mode}_retrieval_count"),
            wrong_retrievals == 0,
            format!("{wrong_retrievals} trajectories without exactly {expected} retrieval"),
        ),
    ]
}

/// Runs every stage and writes the artifact tree. Check failures are
/// recorded in the manifest, not raised; use [`RunManifest::passed`].
pub fn run(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let paths = ArtifactPaths::new(&config.out_dir);
    let backend = build_backend(&config.backend)?;
    // placement and scheduling knobs do not change artifacts
    let hashed = PipelineConfig {
        out_dir: PathBuf::new(),
        parallelism: 0,
        ..config.clone()
    };
    let config_sha256 = sha256_hex(&serde_json::to_vec(&hashed).map_err(|e| Error::json("serialize config", e))?);
    let mut stages = Vec::new();
    let mut checks = Vec::new();
    let timed = |start: Instant| config.record_timings.then(|| start.elapsed().as_millis());

    // Stage A: base rollouts
    let start = Instant::now();
    let tasks = generate_tasks(config.env_kind, Split::Train, config.train_count, config.seed);
    let tasks_sha = write_jsonl(&paths.tasks, &tasks)?;
    let base = run_split(
        &tasks,
        &config.policy(Mode::Base),
        backend.as_ref(),
        None,
        config.parallelism,
    )?;
    let base_sha = write_jsonl(&paths.base_transcripts, &base)?;
    checks.extend(batch_checks(Mode::Base, &base));
    stages.push(StageRecord {
        stage: "A_base_rollout".into(),
        inputs_sha256: combined(&[&config_sha256, &tasks_sha]),
        outputs_sha256: base_sha.clone(),
        millis: timed(start),
    });
    tracing::info!(episodes = base.len(), "stage A done");

    // Stage B: hint extraction into a bank
    let start = Instant::now();
    let failures: Vec<_> = base.iter().filter_map(Trajectory::failure_record).collect();
    let bank = build_bank(config.env_kind, &failures, backend.as_ref())?;
    let bank_sha = bank.save(&paths.bank)?;
    let reloaded = bank.validate().and_then(|_| HintBank::load(&paths.bank));
    checks.push(check(
        "bank_dedup",
        reloaded.as_ref().is_ok_and(|b| *b == bank),
        match &reloaded {
            Ok(_) => format!("{} hints from {} failures", bank.len(), failures.len()),
            Err(e) => e.to_string(),
        },
    ));
    stages.push(StageRecord {
        stage: "B_extract".into(),
        inputs_sha256: base_sha.clone(),
        outputs_sha256: bank_sha.clone(),
        millis: timed(start),
    });
    tracing::info!(hints = bank.len(), "stage B done");

    // Stage C: rag rollouts with one-shot retrieval
    let start = Instant::now();
    let rag = run_split(
        &tasks,
        &config.policy(Mode::Rag),
        backend.as_ref(),
        Some(&bank),
        config.parallelism,
    )?;
    let rag_sha = write_jsonl(&paths.rag_transcripts, &rag)?;
    checks.extend(batch_checks(Mode::Rag, &rag));
    stages.push(StageRecord {
        stage: "C_rag_rollout".into(),
        inputs_sha256: combined(&[&config_sha256, &tasks_sha, &bank_sha]),
        outputs_sha256: rag_sha.clone(),
        millis: timed(start),
    });
    tracing::info!(episodes = rag.len(), "stage C done");

    // Stage D: datasets and purity
    let start = Instant::now();
    let sft = build_dataset(&base, DatasetKind::Sft, &config.filter, Some(&bank), &paths.sft)?;
    let distill = build_dataset(&rag, DatasetKind::Distill, &config.filter, Some(&bank), &paths.distill)?;
    let few_shot = templates::all_few_shot();
    let purity: Vec<(DatasetKind, PurityReport)> = vec![
        (DatasetKind::Sft, verify_purity(&paths.sft, &bank, &few_shot)?),
        (DatasetKind::Distill, verify_purity(&paths.distill, &bank, &few_shot)?),
    ];
    for (kind, report) in &purity {
        checks.push(check(
            &format!("{kind}_purity"),
            report.is_clean(),
            format!(
                "{} violations in {} examples",
                report.violations.len(),
                report.examples_scanned
            ),
        ));
    }
    for m in [&sft, &distill] {
        checks.push(check(
            &format!("{}_conservation", m.kind),
            m.kept + m.excluded.total() == m.input_count,
            format!("{} kept + {} excluded of {}", m.kept, m.excluded.total(), m.input_count),
        ));
    }
    let purity_sha = write_json_pretty(
        &paths.purity,
        &purity
            .iter()
            .map(|(k, r)| (k.as_str(), r))
            .collect::<std::collections::BTreeMap<_, _>>(),
    )?;
    stages.push(StageRecord {
        stage: "D_datasets".into(),
        inputs_sha256: combined(&[&base_sha, &rag_sha, &bank_sha]),
        outputs_sha256: combined(&[&sft.content_sha256, &distill.content_sha256, &purity_sha]),
        millis: timed(start),
    });

    let metrics = vec![aggregate(&base, Method::Base)?, aggregate(&rag, Method::Rag)?];
    write_json_pretty(&paths.metrics, &metrics)?;
    write_bytes(&paths.frontier, frontier_csv(&metrics).as_bytes())?;
    write_bytes(&paths.table, format_table(&metrics).as_bytes())?;

    let manifest = RunManifest {
        config_sha256,
        stages,
        checks,
        metrics,
        datasets: vec![sft, distill],
    };
    write_json_pretty(&paths.manifest, &manifest)?;
    Ok(manifest)
}
