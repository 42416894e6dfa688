//! Batch entry points behind the `nilc` binary.
//!
//! `run` clusters a dataset and writes `assignments.jsonl`, `summaries.json`
//! and `report.json`; `eval` scores an assignments file against labels.
//! Exit codes: 0 on success, 1 on runtime failure, 2 on bad usage.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::clustering::{run_pipeline, PipelineFailure, PipelineInputs, PipelineOutput};
use crate::config::{
    load_config_file, validate_config, MappingStrategy, Mode, PipelineConfig, RawConfig, SelectionStrategy,
};
use crate::dataset::load_dataset;
use crate::encoder::{load_embedding_file, EmbeddingBackend, EmbeddingSource, MockEncoder, ServiceEncoder, SourceKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::llm::{HttpLlm, LlmBackend, MockLlm, MockScript};
use crate::types::{EmbeddingMatrix, LabeledSubset, Utterance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nilc", version, about = "LLM-assisted iterative clustering for new intent discovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a dataset and write assignments, summaries and a run report.
    Run(Box<RunArgs>),
    /// Score an assignments file against a labeled dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    NoDcs,
    NoHsr,
    NoSeeding,
    NoSml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Unsupervised,
    SemiSupervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Kmeanspp,
    Mad,
    Mmr,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MappingArg {
    Similarity,
    Llm,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSONL utterances to cluster.
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON or key = value config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Precomputed embeddings for the dataset, in dataset order.
    #[arg(long, conflicts_with = "encoder_url")]
    pub embeddings: Option<PathBuf>,
    /// Embedding service base URL.
    #[arg(long)]
    pub encoder_url: Option<String>,
    #[arg(long)]
    pub encoder_model: Option<String>,
    /// Hash-based offline encoder; with --embeddings it covers new text only.
    #[arg(long)]
    pub mock_encoder: bool,
    /// Scale embeddings to unit length on load.
    #[arg(long)]
    pub l2_normalize: bool,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Hard samples refined per iteration.
    #[arg(long)]
    pub delta: Option<usize>,
    /// Exemplars per cluster.
    #[arg(long)]
    pub exemplars: Option<usize>,
    #[arg(long)]
    pub k_nbr: Option<usize>,
    /// Macro iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub micro_budget: Option<usize>,
    #[arg(long)]
    pub micro_tol: Option<f64>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    #[arg(long, value_enum)]
    pub mapping: Option<MappingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Chat-completions base URL.
    #[arg(long, conflicts_with = "mock_llm")]
    pub llm_url: Option<String>,
    #[arg(long)]
    pub llm_model: Option<String>,
    /// Offline model: `echo` or a JSON script of canned responses.
    #[arg(long, num_args = 0..=1, default_missing_value = "echo", value_name = "SCRIPT")]
    pub mock_llm: Option<String>,
    /// Directory with prompt templates overriding the built-in ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Disable one mechanism; repeatable.
    #[arg(long, value_enum)]
    pub ablate: Vec<Ablation>,
    /// Labeled utterances whose intents are known (semi-supervised mode).
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Precomputed embeddings for the labeled file.
    #[arg(long, requires = "labeled")]
    pub labeled_embeddings: Option<PathBuf>,
    /// Also cluster the labeled utterances instead of only using them for seeds.
    #[arg(long, requires = "labeled")]
    pub cluster_labeled: bool,
    #[arg(long, default_value = "nilc-output")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Assignments JSONL written by `run`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset whose records all carry labels.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the metrics JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineFailure),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(Error::Config(_)) => EXIT_USAGE,
            CliError::Pipeline(PipelineFailure {
                error: Error::Config(_),
                report: None,
            }) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Where the utterances come from.
#[derive(Debug, Clone, Default)]
pub struct DataPaths {
    pub dataset: PathBuf,
    pub labeled: Option<PathBuf>,
    pub labeled_embeddings: Option<PathBuf>,
    pub cluster_labeled: bool,
}

/// Merges flags over the optional config file.
pub fn resolve_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut raw = match &args.config {
        Some(p) => load_config_file(p)?,
        None => RawConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { raw.$field = Some(v); })*
        };
    }
    set!(
        k <- args.k,
        t_macro <- args.iterations,
        micro_budget <- args.micro_budget,
        micro_tol <- args.micro_tol,
        alpha <- args.alpha,
        beta <- args.beta,
        gamma <- args.gamma,
        delta <- args.delta,
        exemplar_count <- args.exemplars,
        k_nbr <- args.k_nbr,
        rng_seed <- args.seed,
        mode <- args.mode.map(|m| match m {
            ModeArg::Unsupervised => Mode::Unsupervised,
            ModeArg::SemiSupervised => Mode::SemiSupervised,
        }),
        selection_strategy <- args.selection.map(|s| match s {
            SelectionArg::Kmeanspp => SelectionStrategy::Kmeanspp,
            SelectionArg::Mad => SelectionStrategy::Mad,
            SelectionArg::Mmr => SelectionStrategy::Mmr,
            SelectionArg::Nn => SelectionStrategy::Nn,
        }),
        mapping_strategy <- args.mapping.map(|m| match m {
            MappingArg::Similarity => MappingStrategy::Similarity,
            MappingArg::Llm => MappingStrategy::Llm,
        }),
    );
    for a in &args.ablate {
        match a {
            Ablation::NoDcs => raw.mechanisms.dcs = false,
            Ablation::NoHsr => raw.mechanisms.hsr = false,
            Ablation::NoSeeding => raw.mechanisms.seeding = false,
            Ablation::NoSml => raw.mechanisms.sml = false,
        }
    }
    if let Some(url) = &args.llm_url {
        raw.llm.base_url = Some(url.clone());
        raw.llm.mock = false;
    }
    if let Some(model) = &args.llm_model {
        raw.llm.model = Some(model.clone());
    }
    match args.mock_llm.as_deref() {
        Some("echo") => {
            raw.llm.mock = true;
            raw.llm.mock_script = None;
        }
        Some(script) => {
            raw.llm.mock = true;
            raw.llm.mock_script = Some(script.into());
        }
        None => {}
    }
    if let Some(dir) = &args.templates {
        raw.llm.template_dir = Some(dir.clone());
    }
    if let Some(p) = &args.embeddings {
        raw.encoder.embeddings = Some(p.clone());
    }
    if let Some(url) = &args.encoder_url {
        raw.encoder.url = Some(url.clone());
        raw.encoder.embeddings = None;
    }
    if let Some(model) = &args.encoder_model {
        raw.encoder.model = Some(model.clone());
    }
    raw.encoder.mock |= args.mock_encoder;
    raw.encoder.l2_normalize |= args.l2_normalize;
    validate_config(raw)
}

fn llm_needed(config: &PipelineConfig) -> bool {
    let m = config.mechanisms;
    let semi = config.mode == Mode::SemiSupervised;
    m.dcs || (m.hsr && config.delta > 0) || (semi && m.sml && config.mapping_strategy == MappingStrategy::Llm)
}

/// Chat model selected by the configuration.
pub fn build_llm(config: &PipelineConfig) -> Result<Box<dyn LlmBackend>> {
    let s = &config.llm;
    if s.mock {
        let script = match &s.mock_script {
            Some(p) => MockScript::load(p)?,
            None => MockScript::echo(),
        };
        return Ok(Box::new(MockLlm::new(script)));
    }
    if s.base_url.is_some() {
        return Ok(Box::new(HttpLlm::from_settings(s)?));
    }
    if llm_needed(config) {
        return Err(Error::Config(
            "no language model configured: pass --llm-url and --llm-model, or --mock-llm".into(),
        ));
    }
    // never called: every mechanism that talks to a model is off
    Ok(Box::new(MockLlm::new(MockScript::echo())))
}

fn fallback_encoder(config: &PipelineConfig, dim: usize) -> Result<Option<Box<dyn EmbeddingBackend>>> {
    let e = &config.encoder;
    if e.url.is_some() {
        return Ok(Some(Box::new(ServiceEncoder::from_settings(e)?)));
    }
    if e.mock {
        return Ok(Some(Box::new(MockEncoder::new(dim, config.rng_seed))));
    }
    Ok(None)
}

/// Source serving `texts` from `matrix`, with the configured service or mock
/// encoder (if any) covering new text.
pub fn matrix_source(config: &PipelineConfig, texts: &[String], mut matrix: EmbeddingMatrix) -> Result<EmbeddingSource> {
    let e = &config.encoder;
    if e.l2_normalize {
        matrix.l2_normalize();
    }
    let fallback = fallback_encoder(config, matrix.dim())?;
    Ok(EmbeddingSource::hybrid(texts, &matrix, fallback, e.batch_size)?.with_l2_normalize(e.l2_normalize))
}

/// Embedding source selected by the configuration. With a precomputed file the
/// dataset texts are served from it and everything else goes to the fallback.
pub fn build_encoder(config: &PipelineConfig, texts: &[String]) -> Result<EmbeddingSource> {
    let e = &config.encoder;
    if let Some(path) = &e.embeddings {
        return matrix_source(config, texts, load_embedding_file(path)?);
    }
    if e.url.is_some() {
        let backend = ServiceEncoder::from_settings(e)?;
        return Ok(EmbeddingSource::new(SourceKind::Service, Box::new(backend), e.batch_size)
            .with_l2_normalize(e.l2_normalize));
    }
    if e.mock {
        let backend = MockEncoder::new(e.mock_dim, config.rng_seed);
        return Ok(EmbeddingSource::new(SourceKind::Mock, Box::new(backend), e.batch_size));
    }
    Err(Error::Config(
        "no embedding source: pass --embeddings, --encoder-url or --mock-encoder".into(),
    ))
}

fn load_labeled(path: &Path) -> Result<Vec<Utterance>> {
    let utterances = load_dataset(path)?;
    if let Some(u) = utterances.iter().find(|u| u.label.is_none()) {
        return Err(Error::Validation(format!(
            "{}: record {} has no label",
            path.display(),
            u.id
        )));
    }
    Ok(utterances)
}

/// Loads data, builds the backends and runs the pipeline.
pub fn execute(config: &PipelineConfig, paths: &DataPaths) -> std::result::Result<PipelineOutput, CliError> {
    let mut pool = load_dataset(&paths.dataset)?;
    let semi = config.mode == Mode::SemiSupervised;
    let labeled = match (&paths.labeled, semi) {
        (Some(p), _) => Some(load_labeled(p)?),
        (None, true) => {
            return Err(CliError::Usage("semi-supervised mode needs --labeled".into()));
        }
        (None, false) => None,
    };
    if paths.cluster_labeled {
        if let Some(l) = &labeled {
            let offset = pool.len();
            pool.extend(l.iter().map(|u| Utterance {
                id: offset + u.id,
                ..u.clone()
            }));
        }
    }
    let texts: Vec<String> = pool.iter().map(|u| u.text.clone()).collect();
    let encoder = build_encoder(config, &texts)?;
    if let (Some(path), Some(l)) = (&paths.labeled_embeddings, &labeled) {
        let mut m = load_embedding_file(path)?;
        if config.encoder.l2_normalize {
            m.l2_normalize();
        }
        let texts: Vec<String> = l.iter().map(|u| u.text.clone()).collect();
        encoder.preload(&texts, &m)?;
    }
    let mut embeddings = encoder.encode_matrix(&texts)?;
    if config.encoder.l2_normalize {
        embeddings.l2_normalize();
    }
    let labeled = match labeled.filter(|_| semi) {
        Some(l) => {
            let texts: Vec<String> = l.iter().map(|u| u.text.clone()).collect();
            let mut m = encoder.encode_matrix(&texts)?;
            if config.encoder.l2_normalize {
                m.l2_normalize();
            }
            let subset = LabeledSubset::from_utterances(&l, &m)?;
            subset.check(&l, &m, config.k)?;
            Some(subset)
        }
        None => None,
    };
    let truth = pool
        .iter()
        .map(|u| u.label.clone())
        .collect::<Option<Vec<String>>>();
    let llm = build_llm(config)?;
    let inputs = PipelineInputs {
        texts,
        embeddings,
        labeled,
        truth,
    };
    Ok(run_pipeline(inputs, config, llm.as_ref(), &encoder)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRecord {
    id: usize,
    cluster: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `assignments.jsonl`, `summaries.json` and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, out: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("assignments.jsonl"))?);
    for (id, &cluster) in out.state.assignments.iter().enumerate() {
        serde_json::to_writer(&mut w, &AssignmentRecord { id, cluster })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    write_json(&dir.join("summaries.json"), &out.summaries)?;
    write_json(&dir.join("report.json"), &out.report)
}

pub fn cmd_run(args: &RunArgs) -> std::result::Result<(), CliError> {
    let config = resolve_config(args)?;
    let paths = DataPaths {
        dataset: args.dataset.clone(),
        labeled: args.labeled.clone(),
        labeled_embeddings: args.labeled_embeddings.clone(),
        cluster_labeled: args.cluster_labeled,
    };
    match execute(&config, &paths) {
        Ok(out) => {
            write_outputs(&args.output, &out)?;
            if let Some(m) = out.report.metrics {
                eprintln!("nmi {:.4}  ari {:.4}  acc {:.4}", m.nmi, m.ari, m.acc);
            }
            Ok(())
        }
        Err(CliError::Pipeline(failure)) => {
            if let Some(report) = &failure.report {
                std::fs::create_dir_all(&args.output).map_err(Error::from)?;
                write_json(&args.output.join("report.json"), report)?;
            }
            Err(CliError::Pipeline(failure))
        }
        Err(e) => Err(e),
    }
}

/// Reads an assignments file into `id -> cluster`, rejecting duplicate ids.
pub fn load_assignments(path: &Path) -> Result<HashMap<usize, usize>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AssignmentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if out.insert(rec.id, rec.cluster).is_some() {
            return Err(Error::Validation(format!("duplicate prediction for id {}", rec.id)));
        }
    }
    Ok(out)
}

/// Joins predictions to labels by id and scores them.
pub fn eval_files(pred: &Path, dataset: &Path) -> Result<Metrics> {
    let predictions = load_assignments(pred)?;
    let utterances = load_dataset(dataset)?;
    let mut p = Vec::with_capacity(utterances.len());
    let mut t = Vec::with_capacity(utterances.len());
    for u in &utterances {
        let label = u
            .label
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("id {} has no label", u.id)))?;
        let cluster = predictions
            .get(&u.id)
            .ok_or_else(|| Error::Validation(format!("id {} has no prediction", u.id)))?;
        p.push(*cluster);
        t.push(label.as_str());
    }
    if let Some(extra) = predictions.keys().filter(|&&id| id >= utterances.len()).min() {
        return Err(Error::Validation(format!("id {extra} is not in the dataset")));
    }
    evaluate(&p, &t)
}

pub fn cmd_eval(args: &EvalArgs) -> std::result::Result<(), CliError> {
    let metrics = eval_files(&args.pred, &args.dataset)?;
    println!("{}", serde_json::to_string_pretty(&metrics).map_err(Error::from)?);
    if let Some(path) = &args.output {
        write_json(path, &metrics)?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
