//! The `kgpath` command line: `validate`, `synth`, `train`, `predict`,
//! `eval` and `sweep`, all driven by one TOML config with per-key overrides.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{generate_synthetic, make_folds, preprocess, Cohort, CohortError, RawCohort, SynthConfig};
use crate::eval::{cross_validate, sweep, EvalError, SweepAxis};
use crate::inference::{export_paths, rank_diseases, ExportFormat, InferenceError};
use crate::kg::{EntityId, KgError, KnowledgeGraph};
use crate::pipeline::{
    predict, train_agent_stage, train_embeddings, EmbeddingConfig, InferenceConfig, PipelineConfig, PipelineError,
};
use crate::snapshot::{Snapshot, SnapshotError, AGENT_FILE, EMBEDDINGS_FILE};
use crate::agent::TrainConfig;

/// Path value selecting the knowledge graph compiled into the binary.
pub const BUILTIN_KG: &str = "builtin:mini_kg";
pub const MINI_KG: &str = include_str!("../data/mini_kg.tsv");
pub const SNAPSHOT_ENV: &str = "KGPATH_SNAPSHOT_DIR";
pub const TRAINING_LOG_FILE: &str = "training_log.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        CliError::Data(format!("knowledge graph: {e}"))
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::Config(_) | CohortError::InvalidRule { .. } | CohortError::InconsistentRule { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(format!("cohort: {e}")),
        }
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        CliError::Data(format!("snapshot: {e}"))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = match e.stage() {
            Some(stage) if !e.to_string().starts_with(stage.name()) => format!("{} stage failed: {e}", stage.name()),
            _ => e.to_string(),
        };
        if e.is_numeric() {
            CliError::Numeric(msg)
        } else if matches!(e, PipelineError::Agent(crate::agent::AgentError::Config(_))) {
            CliError::Usage(msg)
        } else {
            CliError::Data(msg)
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Fold { fold, source } => {
                let inner = CliError::from(source);
                let wrap = |m: String| format!("fold {fold}: {m}");
                match inner {
                    CliError::Usage(m) => CliError::Usage(wrap(m)),
                    CliError::Data(m) => CliError::Data(wrap(m)),
                    CliError::Numeric(m) => CliError::Numeric(wrap(m)),
                }
            }
            EvalError::UnknownAxis(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::UnknownFormat(_) | InferenceError::ZeroWidth { .. } | InferenceError::WidthCount { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::from(PipelineError::from(other)),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub kg: String,
    pub cohort: PathBuf,
    pub snapshot_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            kg: BUILTIN_KG.into(),
            cohort: "cohort.tsv".into(),
            snapshot_dir: "snapshots".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { folds: 5 }
    }
}

/// The full run configuration; every key has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub paths: PathsConfig,
    pub embeddings: EmbeddingConfig,
    pub agent: TrainConfig,
    pub inference: InferenceConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            paths: PathsConfig::default(),
            embeddings: EmbeddingConfig::default(),
            agent: TrainConfig::default(),
            inference: InferenceConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            workers: self.workers.max(1),
            embeddings: self.embeddings.clone(),
            agent: self.agent.clone(),
            inference: self.inference.clone(),
        }
    }

    /// Parses TOML text after applying `section.key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let text = toml::to_string(&table).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let agent = TrainConfig {
            workers: self.workers,
            ..self.agent.clone()
        };
        agent.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let e = &self.embeddings;
        if e.k == 0 || e.hidden == 0 || e.batch_size == 0 || e.lr.is_nan() || e.lr <= 0.0 {
            return Err(CliError::Usage(
                "embeddings.k, embeddings.hidden and embeddings.batch_size must be positive, embeddings.lr > 0".into(),
            ));
        }
        self.pipeline()
            .beam(100)
            .validate()
            .map_err(|e| CliError::Usage(format!("inference: {e}")))?;
        if !(0.0..=1.0).contains(&self.inference.min_edge_prob) {
            return Err(CliError::Usage("inference.min_edge_prob must lie in [0, 1]".into()));
        }
        if self.eval.folds < 2 {
            return Err(CliError::Usage("eval.folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn load_kg(&self) -> Result<KnowledgeGraph, CliError> {
        if self.paths.kg == BUILTIN_KG {
            Ok(KnowledgeGraph::parse(MINI_KG)?)
        } else {
            Ok(KnowledgeGraph::load(&self.paths.kg)?)
        }
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{spec}`")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {key}: `{part}` is not a section")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// `(key, description)` for every config key, in display order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; fixes folds and every training stage"),
    ("workers", "worker threads (1 is the bit-reproducible reference)"),
    ("paths.kg", "knowledge-graph file, or builtin:mini_kg"),
    ("paths.cohort", "cohort file (one admission per line)"),
    ("paths.snapshot_dir", "where train writes and predict reads snapshots"),
    ("paths.report_dir", "where eval and sweep write reports"),
    ("embeddings.k", "entity embedding width; also the patient code width"),
    ("embeddings.hidden", "autoencoder hidden width"),
    ("embeddings.epochs", "RBM and autoencoder epochs"),
    ("embeddings.lr", "RBM and autoencoder learning rate"),
    ("embeddings.cd_steps", "Gibbs steps per contrastive-divergence update"),
    ("embeddings.batch_size", "samples per RBM/autoencoder update"),
    ("agent.horizon", "walk length T"),
    ("agent.gamma", "discount factor"),
    ("agent.entropy_weight", "entropy bonus weight alpha"),
    ("agent.critic_weight", "weight of the squared-error critic loss"),
    ("agent.episodes_per_patient", "rollouts per patient per epoch"),
    ("agent.batch_size", "patients per policy update"),
    ("agent.epochs", "agent training epochs"),
    ("agent.lr", "agent learning rate"),
    ("agent.optimizer.kind", "adam or plain"),
    ("agent.optimizer.beta1", "adam first-moment decay"),
    ("agent.optimizer.beta2", "adam second-moment decay"),
    ("agent.optimizer.epsilon", "adam denominator guard"),
    ("agent.hidden", "width of both trunk layers"),
    ("inference.mode", "auto (exact when T <= 2 and m <= 100), exact or beam"),
    ("inference.widths", "beam width per step, or one width for all steps"),
    ("inference.min_edge_prob", "dot export drops edges below this path probability"),
    ("eval.folds", "cross-validation folds"),
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.to_string())),
        }
    }
}

/// Every default config key and value as `key = value` pairs.
pub fn default_config_values() -> Vec<(String, String)> {
    let table = toml::Table::try_from(RunConfig::default()).expect("default config serializes");
    let mut out = Vec::new();
    flatten("", &table, &mut out);
    out
}

pub fn config_help() -> String {
    let defaults = default_config_values();
    let mut text = String::from(
        "Configuration keys (TOML file via --config; override any key with --set key=value):\n",
    );
    for (key, about) in CONFIG_KEYS {
        let value = defaults
            .iter()
            .find(|(k, _)| k == key)
            .map_or("", |(_, v)| v.as_str());
        text.push_str(&format!("  {:<30} {:<20} {about}\n", key, format!("= {value}")));
    }
    text.push_str(&format!(
        "\nEnvironment: {SNAPSHOT_ENV} overrides paths.snapshot_dir.\n\
         Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.\n"
    ));
    text
}

#[derive(Debug, Parser)]
#[command(name = "kgpath", version, about = "Disease prediction by reinforcement path reasoning over a knowledge graph")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. --set agent.horizon=3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Knowledge-graph file (overrides paths.kg).
    #[arg(long, global = true)]
    pub kg: Option<String>,
    /// Cohort file (overrides paths.cohort).
    #[arg(long, global = true)]
    pub cohort: Option<PathBuf>,
    /// Snapshot directory (overrides paths.snapshot_dir).
    #[arg(long, global = true, env = SNAPSHOT_ENV)]
    pub snapshot_dir: Option<PathBuf>,
    /// Report directory (overrides paths.report_dir).
    #[arg(long, global = true)]
    pub report_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the knowledge graph and cohort and print summary counts.
    Validate,
    /// Write a synthetic cohort with planted progression rules.
    Synth(SynthArgs),
    /// Train embeddings and the agent on the whole cohort.
    Train(TrainArgs),
    /// Rank diseases for one patient, optionally with explanation paths.
    Predict(PredictArgs),
    /// Cross-validate the configured pipeline.
    Eval(EvalArgs),
    /// Cross-validate over a grid of horizons or entropy weights.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub patients: usize,
    /// Chance per admission of one rule-free disease.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Power-law exponent of disease frequencies (0 = balanced).
    #[arg(long, default_value_t = 1.0)]
    pub imbalance: f64,
    /// Feature columns per admission.
    #[arg(long, default_value_t = 16)]
    pub features: usize,
    /// Output file (defaults to paths.cohort).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainStage {
    All,
    Embeddings,
    Agent,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// `agent` reuses embedding snapshots from an earlier run.
    #[arg(long, value_enum, default_value_t = TrainStage::All)]
    pub stage: TrainStage,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Current conditions as `name;name;...`.
    #[arg(long, conflicts_with = "patient")]
    pub conditions: Option<String>,
    /// Raw feature values as `x,x,...` (`NA` for missing); default all missing.
    #[arg(long, requires = "conditions")]
    pub features: Option<String>,
    /// Take the record from the cohort file instead.
    #[arg(long)]
    pub patient: Option<String>,
    /// Admission index of `--patient` (default: the latest).
    #[arg(long, requires = "patient")]
    pub admission: Option<usize>,
    /// Print the explanation paths.
    #[arg(long)]
    pub explain: bool,
    /// Explanation format: json or dot.
    #[arg(long, default_value = "json")]
    pub format: String,
    /// Dot edges below this path probability are dropped (default inference.min_edge_prob).
    #[arg(long)]
    pub min_edge_prob: Option<f64>,
    /// Number of ranked diseases to print.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// horizon (T in 2,3,4,5) or entropy (alpha in 0,0.01,0.1,1).
    #[arg(long)]
    pub axis: String,
    /// Custom grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::from_toml(&text, &cli.overrides)?;
    if let Some(w) = cli.workers {
        cfg.workers = w.max(1);
    }
    if let Some(kg) = &cli.kg {
        cfg.paths.kg = kg.clone();
    }
    if let Some(c) = &cli.cohort {
        cfg.paths.cohort = c.clone();
    }
    if let Some(d) = &cli.snapshot_dir {
        cfg.paths.snapshot_dir = d.clone();
    }
    if let Some(d) = &cli.report_dir {
        cfg.paths.report_dir = d.clone();
    }
    Ok(cfg)
}

fn load_cohort(cfg: &RunConfig, kg: &KnowledgeGraph) -> Result<Cohort, CliError> {
    let raw = RawCohort::load(&cfg.paths.cohort)?;
    let unknown = raw.unknown_entities(kg);
    if !unknown.is_empty() {
        let list: Vec<String> = unknown.iter().map(|(l, n)| format!("line {l}: unknown entity `{n}`")).collect();
        return Err(CliError::Data(format!(
            "{}: {} unresolved condition(s)\n{}",
            cfg.paths.cohort.display(),
            unknown.len(),
            list.join("\n")
        )));
    }
    Ok(preprocess(&raw, kg)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Data(format!("writing output: {e}"))
}

fn cmd_validate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let kg = cfg.load_kg()?;
    let c = kg.counts();
    writeln!(
        out,
        "knowledge graph: {} entities ({} disease, {} category, {} risk factor), {} relation types, {} triplets, {} parallel edges",
        c.entities, c.diseases, c.categories, c.risk_factors, c.domain_relation_types, c.domain_triplets, c.parallel_edges
    )
    .map_err(out_err)?;
    let cohort = load_cohort(cfg, &kg)?;
    let s = cohort.summary();
    let r = &cohort.report;
    writeln!(out, "patients\t{}", s.patients).map_err(out_err)?;
    writeln!(out, "admissions\t{}", s.admissions).map_err(out_err)?;
    writeln!(out, "records\t{}", s.records).map_err(out_err)?;
    writeln!(out, "features\t{}", s.features).map_err(out_err)?;
    writeln!(out, "avg links to KG\t{:.3}", s.avg_links).map_err(out_err)?;
    writeln!(out, "max links to KG\t{}", s.max_links).map_err(out_err)?;
    writeln!(out, "avg labels\t{:.3}", s.avg_labels).map_err(out_err)?;
    writeln!(out, "max labels\t{}", s.max_labels).map_err(out_err)?;
    writeln!(
        out,
        "dropped\t{} single-admission patients, {} records without links, {} without labels",
        r.single_admission_patients, r.records_without_links, r.records_without_labels
    )
    .map_err(out_err)?;
    if !r.constant_features.is_empty() {
        writeln!(out, "constant features\t{}", r.constant_features.join(",")).map_err(out_err)?;
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kg = cfg.load_kg()?;
    let synth = SynthConfig {
        patients: args.patients,
        noise: args.noise,
        seed: args.seed,
        imbalance: args.imbalance,
        features: args.features,
        ..Default::default()
    };
    let generated = generate_synthetic(&kg, &synth)?;
    let path = args.out.clone().unwrap_or_else(|| cfg.paths.cohort.clone());
    generated.raw.save(&path)?;
    let cohort = preprocess(&generated.raw, &kg)?;
    writeln!(
        out,
        "wrote {} admissions for {} patients to {} ({} rules, top-10 label coverage {:.3})",
        generated.raw.admissions.len(),
        args.patients,
        path.display(),
        generated.rules.len(),
        cohort.top_label_coverage(10)
    )
    .map_err(out_err)
}

#[derive(Serialize)]
struct LogLine<'a, T: Serialize> {
    stage: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

fn cmd_train(cfg: &RunConfig, args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let kg = cfg.load_kg()?;
    let cohort = load_cohort(&cfg, &kg)?;
    let records: Vec<_> = cohort.records.iter().collect();
    let pipeline = cfg.pipeline();
    let dir = &cfg.paths.snapshot_dir;
    create_dir(dir)?;
    let emb_path = dir.join(EMBEDDINGS_FILE);
    let mut log = String::new();
    let push = |log: &mut String, stage: &str, record: &dyn erased::Record| {
        log.push_str(&record.line(stage));
        log.push('\n');
    };

    let embeddings = if args.stage == TrainStage::Agent {
        if !emb_path.exists() {
            return Err(CliError::Data(format!(
                "{} not found; run `kgpath train --stage embeddings` first",
                emb_path.display()
            )));
        }
        Snapshot::load(&emb_path)?.to_embeddings()?.0
    } else {
        let (embeddings, logs) = train_embeddings(&records, &pipeline)?;
        Snapshot::of_embeddings(&embeddings, &cohort.scaling).save(&emb_path)?;
        for r in &logs.rbm {
            push(&mut log, "rbm", r);
        }
        for r in &logs.autoencoder {
            push(&mut log, "autoencoder", r);
        }
        writeln!(
            out,
            "embeddings: RBM cross-entropy {:.4}, autoencoder BCE {:.4} -> {}",
            logs.rbm.last().map_or(f64::NAN, |r| r.loss),
            logs.autoencoder.last().map_or(f64::NAN, |r| r.loss),
            emb_path.display()
        )
        .map_err(out_err)?;
        embeddings
    };

    if args.stage != TrainStage::Embeddings {
        let (agent, agent_log) = train_agent_stage(&kg, &embeddings, &records, &pipeline)?;
        let agent_path = dir.join(AGENT_FILE);
        Snapshot::of_agent(&agent).save(&agent_path)?;
        for r in &agent_log {
            push(&mut log, "agent", r);
        }
        if let Some(last) = agent_log.last() {
            writeln!(
                out,
                "agent: {} records, return {:.4}, entropy {:.4}, hit rate {:.4} -> {}",
                records.len(),
                last.mean_return,
                last.mean_entropy,
                last.hit_rate,
                agent_path.display()
            )
            .map_err(out_err)?;
        }
    }
    write_file(&dir.join(TRAINING_LOG_FILE), &log)
}

mod erased {
    use serde::Serialize;

    /// Object-safe wrapper so heterogeneous log records share one writer.
    pub trait Record {
        fn line(&self, stage: &str) -> String;
    }

    impl<T: Serialize> Record for T {
        fn line(&self, stage: &str) -> String {
            serde_json::to_string(&super::LogLine { stage, record: self }).expect("log record serializes")
        }
    }
}

fn parse_features(text: &str, expected: usize) -> Result<Vec<Option<f64>>, CliError> {
    let values: Vec<Option<f64>> = text
        .split(',')
        .map(|v| match v.trim() {
            "NA" | "" => Ok(None),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("bad feature value `{v}`"))),
        })
        .collect::<Result<_, _>>()?;
    if values.len() != expected {
        return Err(CliError::Usage(format!(
            "expected {expected} feature values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn resolve_names(kg: &KnowledgeGraph, names: &[String]) -> Result<Vec<EntityId>, CliError> {
    names
        .iter()
        .map(|n| {
            kg.entity_id(n)
                .ok_or_else(|| CliError::Data(format!("unknown entity `{n}`")))
        })
        .collect()
}

fn cmd_predict(cfg: &RunConfig, args: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let format: ExportFormat = args.format.parse()?;
    let min_edge_prob = args.min_edge_prob.unwrap_or(cfg.inference.min_edge_prob);
    let kg = cfg.load_kg()?;
    let dir = &cfg.paths.snapshot_dir;
    let (embeddings, scaling) = Snapshot::load(dir.join(EMBEDDINGS_FILE))?.to_embeddings()?;
    let agent = Snapshot::load(dir.join(AGENT_FILE))?.to_agent()?;

    let (names, raw_features) = match (&args.conditions, &args.patient) {
        (Some(conditions), _) => {
            let names: Vec<String> = conditions
                .split(';')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let features = match &args.features {
                Some(f) => parse_features(f, scaling.len())?,
                None => vec![None; scaling.len()],
            };
            (names, features)
        }
        (None, Some(patient)) => {
            let raw = RawCohort::load(&cfg.paths.cohort)?;
            let admission = raw
                .admissions
                .iter()
                .filter(|a| &a.patient == patient && args.admission.is_none_or(|i| a.index == i))
                .max_by_key(|a| a.index)
                .ok_or_else(|| CliError::Data(format!("patient `{patient}` has no such admission")))?;
            if admission.features.len() != scaling.len() {
                return Err(CliError::Data(format!(
                    "cohort has {} features, the snapshot expects {}",
                    admission.features.len(),
                    scaling.len()
                )));
            }
            (admission.conditions.clone(), admission.features.clone())
        }
        (None, None) => return Err(CliError::Usage("give --conditions or --patient".into())),
    };
    let links = resolve_names(&kg, &names)?;
    if links.is_empty() {
        return Err(CliError::Data("record has no link to the knowledge graph".into()));
    }
    let features = scaling.scale(&raw_features);
    let beam = cfg.pipeline().beam(kg.entity_count());
    let result = predict(&kg, &embeddings, &agent, &links, &features, &beam)?;

    writeln!(out, "rank\tdisease\tprobability").map_err(out_err)?;
    for (i, r) in rank_diseases(&result, args.top)
        .into_iter()
        .filter(|r| r.probability > 0.0)
        .enumerate()
    {
        writeln!(out, "{}\t{}\t{:.6}", i + 1, kg.entity(r.entity).name, r.probability).map_err(out_err)?;
    }
    writeln!(
        out,
        "# non-disease terminal mass {:.6}, pruned mass {:.6}",
        result.discarded_mass, result.pruned_mass
    )
    .map_err(out_err)?;
    if args.explain {
        let doc = export_paths(&result, &kg, format, min_edge_prob)?;
        out.write_all(doc.as_bytes()).map_err(out_err)?;
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let folds_n = args.folds.unwrap_or(cfg.eval.folds);
    let kg = cfg.load_kg()?;
    let cohort = load_cohort(&cfg, &kg)?;
    let folds = make_folds(&cohort, folds_n, cfg.seed)?;
    let report = cross_validate(&kg, &cohort, &folds, &cfg.pipeline())?;
    let tsv = report.to_tsv("default");
    create_dir(&cfg.paths.report_dir)?;
    write_file(&cfg.paths.report_dir.join("eval.tsv"), &tsv)?;
    out.write_all(tsv.as_bytes()).map_err(out_err)
}

fn cmd_sweep(cfg: &RunConfig, args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let axis: SweepAxis = args.axis.parse()?;
    let grid = if args.values.is_empty() {
        axis.default_grid()
    } else {
        args.values.clone()
    };
    let kg = cfg.load_kg()?;
    let cohort = load_cohort(&cfg, &kg)?;
    let folds = make_folds(&cohort, args.folds.unwrap_or(cfg.eval.folds), cfg.seed)?;
    let report = sweep(&kg, &cohort, &folds, &cfg.pipeline(), axis, &grid)?;
    let tsv = report.to_tsv();
    create_dir(&cfg.paths.report_dir)?;
    write_file(&cfg.paths.report_dir.join(format!("sweep-{}.tsv", axis.name())), &tsv)?;
    out.write_all(report.summary().as_bytes()).map_err(out_err)?;
    out.write_all(tsv.as_bytes()).map_err(out_err)
}

pub fn command() -> clap::Command {
    Cli::command().after_help(config_help())
}

/// Parses `args` (including the program name) and runs the subcommand,
/// writing normal output to `out`. Help and version requests print and
/// succeed.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(out, "{}", e.render()).map_err(out_err)
                }
                _ => Err(CliError::Usage(e.render().to_string())),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Validate => cmd_validate(&cfg, out),
        Command::Synth(a) => cmd_synth(&cfg, a, out),
        Command::Train(a) => cmd_train(&cfg, a, out),
        Command::Predict(a) => cmd_predict(&cfg, a, out),
        Command::Eval(a) => cmd_eval(&cfg, a, out),
        Command::Sweep(a) => cmd_sweep(&cfg, a, out),
    }
}

/// Runs with the process arguments and returns the exit code.
pub fn main_with_args() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(std::env::args_os(), &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("kgpath: {}", e.to_string().trim_end());
            e.exit_code()
        }
    }
}
