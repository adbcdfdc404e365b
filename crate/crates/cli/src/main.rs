use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hintdistill::agents::{templates, ScaffoldKind};
use hintdistill::dataset::{build_dataset, verify_purity, DatasetKind, FilterPolicy};
use hintdistill::envcore::{generate_tasks, EnvKind, Split, TaskSpec};
use hintdistill::hints::{build_bank, HintBank};
use hintdistill::llmio::{build_backend, Backend, BackendKind, BackendSpec};
use hintdistill::pipeline::{self, PipelineConfig};
use hintdistill::report::{aggregate, export_frontier, format_k_sweep, format_table, k_sweep, Method};
use hintdistill::retrieval::{ScorerKind, DEFAULT_K};
use hintdistill::rollout::{run_split, BlockCharge, Mode, PolicyConfig, Trajectory};
use hintdistill::util::{read_jsonl, write_bytes, write_json_pretty, write_jsonl};

#[derive(Parser)]
#[command(
    name = "hintdistill",
    version,
    about = "Hint-bank teacher rollouts and prompt-free student datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded task split as JSONL.
    GenTasks {
        #[arg(long)]
        env: EnvKind,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long, default_value_t = 60)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run base or rag episodes and write transcripts.
    Rollout {
        #[command(flatten)]
        tasks: TaskArgs,
        #[arg(long, default_value = "base")]
        mode: Mode,
        #[command(flatten)]
        agent: AgentArgs,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract hints from the failed episodes of a transcript file into a bank.
    Extract {
        #[arg(long)]
        failures: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Needed only when the transcript file is empty.
        #[arg(long)]
        env: Option<EnvKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a bank file and print its partition sizes.
    Bank {
        #[arg(long)]
        bank: PathBuf,
    },
    /// Rag rollouts with one-shot retrieval from a bank.
    Teach {
        #[arg(long)]
        bank: PathBuf,
        #[command(flatten)]
        tasks: TaskArgs,
        #[command(flatten)]
        agent: AgentArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter transcripts and serialize prompt-free training examples.
    Dataset {
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// JSON file with filter policy overrides.
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a dataset for hint text, few-shot fragments and the block preamble.
    Verify {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate transcript files into a metrics table and frontier CSV.
    Report {
        /// `method=path`, e.g. `base=out/base.jsonl`. Repeatable.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rag batches over several k values against one bank.
    SweepK {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
        ks: Vec<usize>,
        #[command(flatten)]
        tasks: TaskArgs,
        #[command(flatten)]
        agent: AgentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stages A through D from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct TaskArgs {
    /// Task JSONL from `gen-tasks`. Overrides the generator flags.
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long, default_value_t = 60)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl TaskArgs {
    fn load(&self, fallback_env: Option<EnvKind>) -> Result<Vec<TaskSpec>> {
        if let Some(path) = &self.tasks {
            return Ok(read_jsonl(path)?);
        }
        let env = self.env.or(fallback_env).context("pass --env or --tasks")?;
        Ok(generate_tasks(env, self.split, self.count, self.seed))
    }
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, default_value = "rulebased")]
    backend: BackendKind,
    /// Full backend spec as JSON. Overrides --backend.
    #[arg(long)]
    backend_config: Option<PathBuf>,
}

impl BackendArgs {
    fn build(&self) -> Result<Arc<dyn Backend>> {
        let spec = match &self.backend_config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => BackendSpec {
                kind: self.backend,
                ..BackendSpec::rulebased()
            },
        };
        Ok(build_backend(&spec)?)
    }
}

#[derive(Args)]
struct AgentArgs {
    #[arg(long, default_value = "react")]
    scaffold: ScaffoldKind,
    #[arg(short = 'k', long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value = "rerank")]
    scorer: ScorerKind,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long)]
    charge_once: bool,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[command(flatten)]
    backend: BackendArgs,
}

impl AgentArgs {
    fn policy(&self, mode: Mode) -> PolicyConfig {
        PolicyConfig {
            mode,
            scaffold: self.scaffold,
            k: self.k,
            scorer: self.scorer,
            temperature: self.temperature,
            block_charge: if self.charge_once {
                BlockCharge::Once
            } else {
                BlockCharge::PerStep
            },
        }
    }
}

fn load_bank(path: &Path) -> Result<HintBank> {
    HintBank::load(path).with_context(|| format!("loading bank {}", path.display()))
}

fn rollouts(
    tasks: &[TaskSpec],
    policy: &PolicyConfig,
    agent: &AgentArgs,
    bank: Option<&HintBank>,
    out: &Path,
) -> Result<()> {
    let backend = agent.backend.build()?;
    let batch = run_split(tasks, policy, backend.as_ref(), bank, agent.parallelism)?;
    write_jsonl(out, &batch)?;
    if let Some(first) = batch.first() {
        let row = aggregate(
            &batch,
            if policy.mode == Mode::Rag {
                Method::Rag
            } else {
                Method::Base
            },
        )?;
        print!("{}", format_table(std::slice::from_ref(&row)));
        tracing::info!(env = %first.task.env_kind, episodes = batch.len(), "rollouts written");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenTasks {
            env,
            split,
            count,
            seed,
            out,
        } => {
            let tasks = generate_tasks(env, split, count, seed);
            write_jsonl(&out, &tasks)?;
            println!("{} tasks -> {}", tasks.len(), out.display());
        }
        Command::Rollout {
            tasks,
            mode,
            agent,
            bank,
            out,
        } => {
            let bank = bank.as_deref().map(load_bank).transpose()?;
            let tasks = tasks.load(bank.as_ref().map(|b| b.env_kind))?;
            rollouts(&tasks, &agent.policy(mode), &agent, bank.as_ref(), &out)?;
        }
        Command::Extract {
            failures,
            backend,
            env,
            out,
        } => {
            let batch: Vec<Trajectory> = read_jsonl(&failures)?;
            let env = match (env, batch.first()) {
                (Some(e), _) => e,
                (None, Some(t)) => t.task.env_kind,
                (None, None) => bail!("{} is empty; pass --env", failures.display()),
            };
            let records: Vec<_> = batch.iter().filter_map(Trajectory::failure_record).collect();
            let bank = build_bank(env, &records, backend.build()?.as_ref())?;
            let sha = bank.save(&out)?;
            println!(
                "{} hints from {} failures -> {} ({sha})",
                bank.len(),
                records.len(),
                out.display()
            );
        }
        Command::Bank { bank } => {
            let bank = load_bank(&bank)?;
            bank.validate()?;
            println!("env {} hints {}", bank.env_kind, bank.len());
            for (category, hints) in bank.partitions() {
                println!("  {category:<20} {}", hints.len());
            }
        }
        Command::Teach {
            bank,
            tasks,
            agent,
            out,
        } => {
            let bank = load_bank(&bank)?;
            let tasks = tasks.load(Some(bank.env_kind))?;
            rollouts(&tasks, &agent.policy(Mode::Rag), &agent, Some(&bank), &out)?;
        }
        Command::Dataset {
            kind,
            input,
            bank,
            filter,
            out,
        } => {
            let batch: Vec<Trajectory> = read_jsonl(&input)?;
            let policy = match filter {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => FilterPolicy::default(),
            };
            let bank = bank.as_deref().map(load_bank).transpose()?;
            let manifest = build_dataset(&batch, kind, &policy, bank.as_ref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Verify { dataset, bank, out } => {
            let bank = load_bank(&bank)?;
            let report = verify_purity(&dataset, &bank, &templates::all_few_shot())?;
            if let Some(out) = out {
                write_json_pretty(&out, &report)?;
            }
            for v in &report.violations {
                println!(
                    "violation: example {} ({}) {:?}: {}",
                    v.example, v.task_id, v.kind, v.detail
                );
            }
            println!(
                "{} examples, {} violations, {} thought echoes",
                report.examples_scanned,
                report.violations.len(),
                report.thought_echoes
            );
            if !report.is_clean() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { inputs, out_dir } => {
            let mut rows = Vec::new();
            for input in &inputs {
                let (method, path) = input
                    .split_once('=')
                    .with_context(|| format!("expected method=path, got `{input}`"))?;
                let batch: Vec<Trajectory> = read_jsonl(Path::new(path))?;
                rows.push(aggregate(&batch, method.parse()?)?);
            }
            write_json_pretty(&out_dir.join("metrics.json"), &rows)?;
            export_frontier(&rows, &out_dir.join("frontier.csv"))?;
            let table = format_table(&rows);
            write_bytes(&out_dir.join("table.txt"), table.as_bytes())?;
            print!("{table}");
        }
        Command::SweepK {
            bank,
            ks,
            tasks,
            agent,
            out,
        } => {
            let bank = load_bank(&bank)?;
            let tasks = tasks.load(Some(bank.env_kind))?;
            let backend = agent.backend.build()?;
            let rows = k_sweep(
                &tasks,
                &ks,
                &agent.policy(Mode::Rag),
                &bank,
                &|_| Ok(backend.clone()),
                agent.parallelism,
            )?;
            let table = format_k_sweep(&rows);
            if let Some(out) = out {
                write_json_pretty(&out, &rows)?;
            }
            print!("{table}");
        }
        Command::Pipeline { config, out_dir, seed } => {
            let mut cfg = PipelineConfig::from_path(&config)?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let manifest = pipeline::run(&cfg)?;
            print!("{}", format_table(&manifest.metrics));
            for c in &manifest.checks {
                println!("[{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            if !manifest.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
