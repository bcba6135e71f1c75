//! Command-line driver: build a knowledge graph store from a corpus, run
//! retrieval over it, evaluate coverage/retrieval/QA, report triplet
//! density and export training pairs.
//!
//! Exit status is 0 on success, 2 for usage or input errors, 3 when a build
//! loses more documents than `pipeline.max_failed_fraction` allows and 1 for
//! anything else.

pub mod config;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use propgraph::client::http::{HttpChatClient, HttpEmbedClient};
use propgraph::client::mock::{HashEmbedder, ScriptedChat};
use propgraph::client::Throttle;
use propgraph::eval::{self, EvalError, GroundTruthTriplet};
use propgraph::extraction::{self, triplet_density, ExtractionError};
use propgraph::model::{ChunkId, DocId, Document, KnowledgeGraph};
use propgraph::retriever::{answer_with_context, RetrievalError, RetrievalTrace, Retriever};
use propgraph::store::{self, build_triplet_index, StoreError};
use propgraph::{ChatClient, EmbedClient, GraphIndexes, RetrievalMode, RetrievalResult};
use serde::Serialize;
use thiserror::Error;

use config::{BuildMode, Config, Provider};
use io::{CorpusRecord, Prediction, QuestionRecord, TripletRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    PartialFailure(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::PartialFailure(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } | StoreError::VersionMismatch { .. } | StoreError::Corrupt { .. } => {
                CliError::Input(e.to_string())
            }
            StoreError::IncompleteIndex(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingIds(ids) => CliError::Input(format!("ids do not align; missing: {}", ids.join(", "))),
            EvalError::InvalidInput(_) | EvalError::NoTriplets(_) => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ExtractionError> for CliError {
    fn from(e: ExtractionError) -> Self {
        match e {
            ExtractionError::InvalidInput(_) => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::InvalidInput(_) | RetrievalError::Missing(..) => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "propgraph", version, about = "Proposition-entity knowledge graphs: build, retrieve, evaluate")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set retrieval.k=5`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract a knowledge graph from a corpus into a store directory.
    Build(BuildArgs),
    /// Retrieve chunks for a file of questions.
    Retrieve(RetrieveArgs),
    /// Score a store or retrieval/QA outputs against gold data.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Triplet density by document length.
    Stats(StatsArgs),
    /// Write (document, facts JSON) pairs for training a single-step model.
    ExportTrainingPairs(ExportArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Line-delimited JSON corpus of `{doc_id, text}` records.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `pipeline.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Multi,
    Single,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Line-delimited JSON of `{question_id, question}` records.
    #[arg(long)]
    pub questions: PathBuf,
    /// dense, graph, graph-llm or chain-of-triplet.
    #[arg(long)]
    pub mode: RetrievalMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one trace record per question.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also answer each question from the retrieved context and write the
    /// predictions here.
    #[arg(long)]
    pub answer: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n_hops: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Triplet coverage of a store against proxy ground-truth triplets.
    Coverage(CoverageArgs),
    /// Hits@k, MRR and MAP of retrieval results.
    Retrieval(RetrievalEvalArgs),
    /// Exact match and F1 of predicted answers.
    Qa(QaEvalArgs),
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Questions with answers; proxy triplets are generated from them.
    #[arg(long, required_unless_present = "triplets", conflicts_with = "triplets")]
    pub questions: Option<PathBuf>,
    /// Ready-made gold triplets `{question_id, head, relation, tail, answer}`.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Where to keep the generated proxy triplets.
    #[arg(long)]
    pub save_triplets: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "kg")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct RetrievalEvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Questions with `supporting_chunk_ids`.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "run")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct QaEvalArgs {
    /// `{question_id, prediction}` records.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Questions with `answers`.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "run")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Chat and embedding clients selected by the `[model]` table.
pub struct Clients {
    chat: Option<Box<dyn ChatClient>>,
    pub embed: Box<dyn EmbedClient>,
}

impl Clients {
    pub fn from_config(config: &Config) -> Result<Self, CliError> {
        match config.model.provider {
            Provider::Mock => {
                let chat = match &config.model.mock_script {
                    Some(p) => Some(Box::new(
                        ScriptedChat::from_file(&config.resolve(p)).map_err(|e| CliError::Input(e.to_string()))?,
                    ) as Box<dyn ChatClient>),
                    None => None,
                };
                if config.model.mock_embed_dim == 0 {
                    return Err(CliError::Input("model.mock_embed_dim must be at least 1".into()));
                }
                Ok(Self { chat, embed: Box::new(HashEmbedder::new(config.model.mock_embed_dim)) })
            }
            Provider::Http => {
                let throttle = Arc::new(Throttle::new(config.model.http.max_concurrency.max(1)));
                Ok(Self {
                    chat: Some(Box::new(HttpChatClient::new(&config.model.http, throttle.clone()))),
                    embed: Box::new(HttpEmbedClient::new(&config.model.http, throttle)),
                })
            }
        }
    }

    pub fn chat(&self) -> Result<&dyn ChatClient, CliError> {
        self.chat.as_deref().ok_or_else(|| {
            CliError::Input("this command needs a chat model; set model.mock_script or use the http provider".into())
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Build(args) => {
            if let Some(m) = args.mode {
                config.pipeline.mode = match m {
                    ModeArg::Multi => BuildMode::Multi,
                    ModeArg::Single => BuildMode::Single,
                };
            }
            cmd_build(&config, &args)
        }
        Command::Retrieve(args) => {
            for (slot, v) in [
                (&mut config.retrieval.k, args.k),
                (&mut config.retrieval.m, args.m),
                (&mut config.retrieval.n_hops, args.n_hops),
            ] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            config.retrieval.validate()?;
            cmd_retrieve(&config, &args)
        }
        Command::Eval(EvalCommand::Coverage(args)) => cmd_eval_coverage(&config, &args),
        Command::Eval(EvalCommand::Retrieval(args)) => cmd_eval_retrieval(&config, &args),
        Command::Eval(EvalCommand::Qa(args)) => cmd_eval_qa(&config, &args),
        Command::Stats(args) => cmd_stats(&config, &args),
        Command::ExportTrainingPairs(args) => cmd_export(&args),
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Document>, CliError> {
    let records: Vec<CorpusRecord> = io::read_jsonl(path)?;
    if records.is_empty() {
        return Err(CliError::Input(format!("corpus {} is empty", path.display())));
    }
    let docs: Vec<Document> = records.into_iter().map(|r| Document::new(r.doc_id, r.text)).collect();
    for d in &docs {
        d.validate().map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(docs)
}

fn read_questions(path: &Path) -> Result<Vec<QuestionRecord>, CliError> {
    let questions: Vec<QuestionRecord> = io::read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = questions.iter().find(|q| !seen.insert(q.question_id.as_str())) {
        return Err(CliError::Input(format!("duplicate question_id {}", dup.question_id)));
    }
    Ok(questions)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct BuildManifest<'a> {
    config_fingerprint: String,
    mode: BuildMode,
    documents: usize,
    failed_documents: usize,
    chunks: usize,
    entities: usize,
    propositions: usize,
    triplets: usize,
    distinct_triplets: usize,
    extraction_errors: usize,
    stats: &'a extraction::ExtractionStats,
    per_document: &'a [extraction::DocumentReport],
    warnings: &'a [String],
}

pub const MANIFEST_FILE: &str = "build_manifest.json";
pub const ERRORS_FILE: &str = "extraction_errors.jsonl";

fn cmd_build(config: &Config, args: &BuildArgs) -> Result<(), CliError> {
    let docs = read_corpus(&args.corpus)?;
    let clients = Clients::from_config(config)?;
    let chat = clients.chat()?;
    let out = extraction::synthesize_corpus(&docs, chat, &config.pipeline.synthesis(), config.pipeline.mode.into())?;
    let indexes: GraphIndexes<f32> =
        GraphIndexes::build(&out.graph, clients.embed.as_ref()).map_err(|e| CliError::Runtime(e.to_string()))?;

    ensure_dir(&args.out)?;
    let fingerprint = config.fingerprint();
    store::save_store(&args.out, &out.graph, Some(&indexes), Some(&fingerprint))?;
    io::write_jsonl(&args.out.join(ERRORS_FILE), &out.failures)?;
    let g = &out.graph;
    let manifest = BuildManifest {
        config_fingerprint: fingerprint,
        mode: config.pipeline.mode,
        documents: docs.len(),
        failed_documents: out.failed_documents(),
        chunks: g.chunk_count(),
        entities: g.entity_count(),
        propositions: g.proposition_count(),
        triplets: g.quadruplets().len(),
        distinct_triplets: g.distinct_triplets().len(),
        extraction_errors: out.failures.len(),
        stats: &out.stats,
        per_document: &out.documents,
        warnings: &out.warnings,
    };
    io::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "built {} documents ({} failed): {} chunks, {} entities, {} propositions, {} triplets",
        manifest.documents,
        manifest.failed_documents,
        manifest.chunks,
        manifest.entities,
        manifest.propositions,
        manifest.triplets
    );
    let failed = out.failed_documents() as f64 / docs.len() as f64;
    if failed > config.pipeline.max_failed_fraction {
        return Err(CliError::PartialFailure(format!(
            "{} of {} documents failed, above the allowed fraction {}",
            out.failed_documents(),
            docs.len(),
            config.pipeline.max_failed_fraction
        )));
    }
    Ok(())
}

fn load_indexed(dir: &Path) -> Result<(KnowledgeGraph, GraphIndexes<f32>), CliError> {
    let (graph, indexes, _) = store::load_store::<f32>(dir)?;
    let indexes =
        indexes.ok_or_else(|| CliError::Input(format!("store {} has no vectors; rebuild it", dir.display())))?;
    Ok((graph, indexes))
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    config_fingerprint: &'a str,
    #[serde(flatten)]
    record: T,
}

fn cmd_retrieve(config: &Config, args: &RetrieveArgs) -> Result<(), CliError> {
    let questions = read_questions(&args.questions)?;
    let (graph, indexes) = load_indexed(&args.store)?;
    let clients = Clients::from_config(config)?;
    let needs_chat =
        matches!(args.mode, RetrievalMode::GraphLlm | RetrievalMode::ChainOfTriplet) || args.answer.is_some();
    let chat = if needs_chat { Some(clients.chat()?) } else { None };
    let triplets = match args.mode {
        RetrievalMode::ChainOfTriplet => Some(
            build_triplet_index::<f32, _>(&graph, clients.embed.as_ref())
                .map_err(|e| CliError::Runtime(e.to_string()))?,
        ),
        _ => None,
    };
    let retriever = Retriever {
        graph: &graph,
        indexes: &indexes,
        triplets: triplets.as_ref(),
        embedder: clients.embed.as_ref(),
        chat,
        config: config.retrieval,
    };

    let fingerprint = config.fingerprint();
    let mut results = Vec::with_capacity(questions.len());
    let mut traces = Vec::with_capacity(questions.len());
    let mut predictions = Vec::new();
    for q in &questions {
        let run = match retriever.retrieve(&q.question_id, &q.question, args.mode) {
            Ok(run) => run,
            Err(RetrievalError::Decomposition { raw_output }) => {
                let w = format!("{}: no triplet chain in reply {raw_output:?}", q.question_id);
                warn!("{w}");
                let result = RetrievalResult {
                    query_id: q.question_id.clone(),
                    mode: args.mode,
                    ranked_chunks: Vec::new(),
                    selected_props: Vec::new(),
                    hop_paths: Vec::new(),
                };
                let trace = RetrievalTrace {
                    query_id: q.question_id.clone(),
                    mode: Some(args.mode),
                    warnings: vec![w],
                    ..Default::default()
                };
                results.push(result);
                traces.push(trace);
                if args.answer.is_some() {
                    predictions.push(Prediction { question_id: q.question_id.clone(), prediction: String::new() });
                }
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(chat) = chat.filter(|_| args.answer.is_some()) {
            let prediction = match answer_with_context(&q.question, &run.context, chat, false) {
                Ok(a) => a,
                Err(RetrievalError::EmptyContext) => {
                    warn!("{}: nothing retrieved, empty prediction", q.question_id);
                    String::new()
                }
                Err(e) => return Err(e.into()),
            };
            predictions.push(Prediction { question_id: q.question_id.clone(), prediction });
        }
        results.push(run.result);
        traces.push(run.trace);
    }

    let stamp = |r| Stamped { config_fingerprint: &fingerprint, record: r };
    io::write_jsonl(&args.out, &results.iter().map(stamp).collect::<Vec<_>>())?;
    if let Some(path) = &args.trace {
        io::write_jsonl(
            path,
            &traces.iter().map(|t| Stamped { config_fingerprint: &fingerprint, record: t }).collect::<Vec<_>>(),
        )?;
    }
    if let Some(path) = &args.answer {
        io::write_jsonl(path, &predictions)?;
    }
    info!("retrieved {} questions in {} mode", results.len(), args.mode);
    println!("{} questions, mode {}", results.len(), args.mode);
    Ok(())
}

#[derive(Serialize)]
struct Report<'a, T> {
    config_fingerprint: String,
    label: &'a str,
    #[serde(flatten)]
    report: T,
}

/// Writes `report` as JSON at `out` and its table next to it (`.txt`), and
/// prints the table.
fn emit<T: Serialize>(config: &Config, out: &Path, label: &str, report: T, table: &str) -> Result<(), CliError> {
    io::write_json(out, &Report { config_fingerprint: config.fingerprint(), label, report })?;
    io::write_text(&out.with_extension("txt"), table)?;
    print!("{table}");
    Ok(())
}

fn cmd_eval_coverage(config: &Config, args: &CoverageArgs) -> Result<(), CliError> {
    let graph = store::load_graph(&args.store)?;
    let clients = Clients::from_config(config)?;
    let gts: Vec<GroundTruthTriplet> = match (&args.triplets, &args.questions) {
        (Some(path), _) => io::read_jsonl::<TripletRecord>(path)?
            .into_iter()
            .map(TripletRecord::into_triplet)
            .collect::<Result<_, _>>()?,
        (None, Some(path)) => {
            let chat = clients.chat()?;
            let mut gts = Vec::new();
            for q in read_questions(path)? {
                let Some(answer) = q.answers.as_ref().and_then(|a| a.first()) else {
                    return Err(CliError::Input(format!("question {} has no answer", q.question_id)));
                };
                let sub: Option<Vec<(String, String)>> =
                    q.decomposition.map(|d| d.into_iter().map(|s| (s.question, s.answer)).collect());
                let facts = q.facts.unwrap_or_default();
                match eval::generate_proxy_triplets(&q.question_id, &q.question, answer, sub.as_deref(), &facts, chat) {
                    Ok(out) => gts.extend(out.triplets),
                    Err(EvalError::NoTriplets(id)) => warn!("{id}: no usable proxy triplet; question skipped"),
                    Err(e) => return Err(e.into()),
                }
            }
            gts
        }
        (None, None) => return Err(CliError::Input("give --questions or --triplets".into())),
    };
    if let Some(path) = &args.save_triplets {
        io::write_jsonl(path, &gts)?;
    }
    let index =
        build_triplet_index::<f32, _>(&graph, clients.embed.as_ref()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let report =
        eval::evaluate_coverage(&gts, &graph, &index, clients.embed.as_ref(), config.evaluation.coverage_threshold)?;
    let table = report.render(&args.label);
    emit(config, &args.out, &args.label, &report, &table)
}

/// Gold chunk sets by question. `doc_id#index` references become chunk ids.
fn gold_chunks(questions: &[QuestionRecord]) -> BTreeMap<String, BTreeSet<ChunkId>> {
    questions
        .iter()
        .filter_map(|q| {
            let ids = q.supporting_chunk_ids.as_ref()?;
            let set = ids
                .iter()
                .map(|s| match s.rsplit_once('#') {
                    Some((doc, idx)) if idx.parse::<usize>().is_ok() => {
                        ChunkId::derive(&DocId::from(doc), idx.parse().expect("checked"))
                    }
                    _ => ChunkId::from(s.as_str()),
                })
                .collect();
            Some((q.question_id.clone(), set))
        })
        .collect()
}

fn mismatch<'a>(left: impl Iterator<Item = &'a String>, right: &BTreeSet<&String>) -> Vec<String> {
    left.filter(|id| !right.contains(id)).cloned().collect()
}

fn cmd_eval_retrieval(config: &Config, args: &RetrievalEvalArgs) -> Result<(), CliError> {
    let results: Vec<RetrievalResult> = io::read_jsonl(&args.results)?;
    if results.is_empty() {
        return Err(CliError::Input(format!("{} holds no results", args.results.display())));
    }
    let gold = gold_chunks(&read_questions(&args.gold)?);
    let result_ids: BTreeSet<&String> = results.iter().map(|r| &r.query_id).collect();
    let gold_ids: BTreeSet<&String> = gold.keys().collect();
    let mut missing = mismatch(gold.keys(), &result_ids);
    missing.extend(mismatch(results.iter().map(|r| &r.query_id), &gold_ids));
    if !missing.is_empty() {
        return Err(EvalError::MissingIds(missing).into());
    }
    let report = eval::retrieval_metrics(&results, &gold, &config.evaluation.ks)?;
    let table = report.render(&args.label);
    emit(config, &args.out, &args.label, &report, &table)
}

fn cmd_eval_qa(config: &Config, args: &QaEvalArgs) -> Result<(), CliError> {
    let preds: Vec<Prediction> = io::read_jsonl(&args.predictions)?;
    if preds.is_empty() {
        return Err(CliError::Input(format!("{} holds no predictions", args.predictions.display())));
    }
    let mut predictions = BTreeMap::new();
    for p in preds {
        if predictions.insert(p.question_id.clone(), p.prediction).is_some() {
            return Err(CliError::Input(format!("duplicate prediction for {}", p.question_id)));
        }
    }
    let gold: BTreeMap<String, Vec<String>> = read_questions(&args.gold)?
        .into_iter()
        .filter_map(|q| q.answers.filter(|a| !a.is_empty()).map(|a| (q.question_id, a)))
        .collect();
    let report = eval::evaluate_qa(&predictions, &gold)?;
    let table = report.render(&args.label);
    emit(config, &args.out, &args.label, &report, &table)
}

fn cmd_stats(config: &Config, args: &StatsArgs) -> Result<(), CliError> {
    let graph = store::load_graph(&args.store)?;
    let docs = read_corpus(&args.corpus)?;
    let graphs: Vec<KnowledgeGraph> = docs.iter().map(|d| graph.document_subgraph(&d.doc_id)).collect();
    let table = triplet_density(&graphs, &docs, config.pipeline.density_bucket_words)?;
    let text = table.render();
    if let Some(out) = &args.out {
        io::write_json(out, &table)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct TrainingPair {
    doc_id: String,
    input: String,
    target: String,
}

fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let graph = store::load_graph(&args.store)?;
    let docs = read_corpus(&args.corpus)?;
    let pairs: Vec<TrainingPair> = docs
        .iter()
        .filter_map(|d| {
            let facts = extraction::facts_json(&graph, &d.doc_id);
            let empty = facts.as_object().is_none_or(|m| m.is_empty());
            if empty {
                warn!("document {} has no facts in the store; skipped", d.doc_id);
                return None;
            }
            Some(TrainingPair { doc_id: d.doc_id.0.clone(), input: d.text.clone(), target: facts.to_string() })
        })
        .collect();
    io::write_jsonl(&args.out, &pairs)?;
    println!("{} training pairs", pairs.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_references_resolve_to_chunk_ids() {
        let q: QuestionRecord = serde_json::from_str(
            r#"{"question_id":"q","question":"?","supporting_chunk_ids":["d1#0","cabc","doc#x#2","odd#"]}"#,
        )
        .unwrap();
        let gold = gold_chunks(&[q]);
        let want: BTreeSet<ChunkId> = [
            ChunkId::derive(&DocId::from("d1"), 0),
            ChunkId::from("cabc"),
            ChunkId::derive(&DocId::from("doc#x"), 2),
            ChunkId::from("odd#"),
        ]
        .into();
        assert_eq!(gold["q"], want);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Input(String::new()).exit_code(), 2);
        assert_eq!(CliError::PartialFailure(String::new()).exit_code(), 3);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 1);
    }
}
