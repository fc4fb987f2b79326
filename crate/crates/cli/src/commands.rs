use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use slg_core::backends::{GenerationBackend, MemorizationExpert, RemoteClient, RemoteConfig};
use slg_core::corpus::{
    audit_overlap, chunk_by_subsection, parse_document, Chunk, ChunkPolicy, DocumentFormat, OverlapReport,
};
use slg_core::dataset::{
    build_expert_datasets, build_orchestrator_dataset, generate_corpus_qa, load_dataset, pooled_split, save_dataset,
    split_dataset, AnswerMode, Dataset, DatasetKind, QaOptions, Split, SplitCounts, SplitRatios,
    TemplateQuestionGenerator,
};
use slg_core::eval::{comparison_csv, evaluate_run, ComparisonRow, EvalOptions, EvalTarget};
use slg_core::experiment::{default_sweep, pending_sweep, run_sweep, DatasetPaths, RunOptions, SweepPlan, Wiring};
use slg_core::graph::{
    route_audit, BackendRef, ExpertSpec, Graph, GraphError, GraphSpec, Resolution, StandardBackends,
};
use slg_core::util::write_atomic;

use crate::args::*;
use crate::service::{self, AppState, ServiceOptions};
use crate::{Failure, Globals};

pub fn dispatch(command: Command, g: &Globals) -> Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(a, g),
        Command::Dataset(a) => dataset(a, g),
        Command::Audit(AuditCommand::Overlap(a)) => audit_overlaps(a),
        Command::Audit(AuditCommand::Routing(a)) => audit_routing(a),
        Command::Serve(a) => serve(a, g),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a, g),
        Command::Sweep(a) => sweep(a, g),
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads a graph spec and builds it, resolving dataset paths against the
/// spec file's directory.
pub fn load_graph(spec_path: &Path) -> anyhow::Result<Graph> {
    let spec = GraphSpec::load(spec_path)?;
    let base = spec_path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Graph::build(spec, &StandardBackends::new(base))?)
}

fn infer_format(path: &Path) -> anyhow::Result<DocumentFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("md" | "markdown") => Ok(DocumentFormat::MarkdownHeadings),
        Some("json") => Ok(DocumentFormat::ManifestJson),
        _ => bail!("cannot infer the format of {}; pass --format markdown or --format manifest", path.display()),
    }
}

fn report_overlaps(report: &OverlapReport) {
    for e in &report.entries {
        tracing::warn!(
            a = %e.chunk_id_a,
            b = %e.chunk_id_b,
            tokens = e.shared_prefix_token_count,
            "shared sentence prefix: {:?}",
            e.shared_prefix_text
        );
    }
}

fn overlap_failure(report: &OverlapReport) -> Failure {
    Failure::Audit(format!(
        "{} chunk pair(s) share a sentence prefix of at least {} tokens",
        report.entries.len(),
        report.threshold
    ))
}

fn ingest(a: IngestArgs, g: &Globals) -> Result<(), Failure> {
    let format = match &a.format {
        Some(f) => f.parse::<DocumentFormat>().map_err(|e| anyhow!(e))?,
        None => infer_format(&a.input)?,
    };
    let raw = read_text(&a.input)?;
    let corpus = parse_document(&raw, format).with_context(|| a.input.display().to_string())?;
    let chunks = chunk_by_subsection(&corpus, ChunkPolicy { target_depth: a.depth, min_tokens: a.min_tokens })?;
    let report = audit_overlap(&chunks, a.overlap_threshold);

    let out = a.out.clone().unwrap_or_else(|| g.out_dir.clone());
    let mut jsonl = String::new();
    for c in &chunks {
        jsonl.push_str(&serde_json::to_string(c)?);
        jsonl.push('\n');
    }
    write_text(&out.join("chunks.jsonl"), &jsonl)?;
    write_json(&out.join("overlap.json"), &report)?;
    println!("{} chunks from {} ({} overlaps) -> {}", chunks.len(), corpus.doc_id, report.entries.len(), out.display());

    report_overlaps(&report);
    if a.fail_on_overlap && !report.is_empty() {
        return Err(overlap_failure(&report));
    }
    Ok(())
}

fn load_chunks(path: &Path) -> anyhow::Result<Vec<Chunk>> {
    let raw = read_text(path)?;
    let mut chunks = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let chunk: Chunk = serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        chunks.push(chunk);
    }
    if chunks.is_empty() {
        bail!("{} holds no chunks", path.display());
    }
    Ok(chunks)
}

/// Lowercase ASCII with runs of anything else collapsed to one dash.
fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-');
    out.chars().take(60).collect::<String>().trim_end_matches('-').to_string()
}

#[derive(Serialize)]
struct DatasetSummary {
    source_doc_id: Option<String>,
    backend: &'static str,
    seed: u64,
    n_questions: usize,
    answer_mode: AnswerMode,
    ratios: SplitRatios,
    experts: BTreeMap<String, ExpertEntry>,
    totals: SplitCounts,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ExpertEntry {
    file: PathBuf,
    counts: SplitCounts,
}

fn dataset(a: DatasetArgs, g: &Globals) -> Result<(), Failure> {
    let ratios: SplitRatios = a.ratios.parse()?;
    if a.n_questions == 0 {
        return Err(anyhow!("--n-questions must be at least 1").into());
    }
    let chunks = load_chunks(&a.chunks)?;
    let doc_ids: std::collections::BTreeSet<&str> =
        chunks.iter().filter_map(|c| c.chunk_id.rsplit_once("-s").map(|(d, _)| d)).collect();
    let source_doc_id = match doc_ids.len() {
        1 => doc_ids.into_iter().next().map(str::to_string),
        _ => None,
    };

    let (backend, backend_name): (Box<dyn GenerationBackend>, &'static str) = match a.backend {
        QuestionBackend::Template => (Box::new(TemplateQuestionGenerator::new(&chunks)), "template"),
        QuestionBackend::Remote => {
            let endpoint = a.endpoint.clone().context("--backend remote needs --endpoint")?;
            let model = a.model.clone().context("--backend remote needs --model")?;
            (Box::new(RemoteClient::new(RemoteConfig::new(endpoint, model))?), "remote")
        }
    };
    let answer_mode = match a.answer_mode {
        AnswerModeArg::Full => AnswerMode::Full,
        AnswerModeArg::Extractive => AnswerMode::Extractive,
    };
    let opts = QaOptions { n_questions: a.n_questions, seed: g.seed, answer_mode };
    let qa = match generate_corpus_qa(&chunks, backend.as_ref(), &opts) {
        Ok(qa) => qa,
        Err(failures) => {
            for (chunk_id, e) in &failures {
                eprintln!("  {chunk_id}: {e}");
            }
            let ids: Vec<&str> = failures.iter().map(|(id, _)| id.as_str()).collect();
            return Err(anyhow!("question generation failed for {} chunk(s): {}", ids.len(), ids.join(", ")).into());
        }
    };

    let mut warnings = Vec::new();
    let mut experts: BTreeMap<String, Dataset> = BTreeMap::new();
    for (name, ds) in build_expert_datasets(&chunks, &qa)? {
        let outcome = split_dataset(&ds, ratios, g.seed)?;
        warnings.extend(outcome.warnings);
        let mut ds = outcome.dataset;
        ds.source_doc_id = source_doc_id.clone();
        experts.insert(name, ds);
    }
    let orchestrator = build_orchestrator_dataset(&experts)?;

    let out = a.out.clone().unwrap_or_else(|| g.out_dir.clone());
    let mut entries = BTreeMap::new();
    let mut graph_experts = Vec::new();
    for (i, (name, ds)) in experts.iter().enumerate() {
        let rel = PathBuf::from("experts").join(format!("{i:03}-{}.jsonl", slug(name)));
        save_dataset(ds, &out.join(&rel))?;
        graph_experts.push(ExpertSpec { name: name.clone(), backend: BackendRef::memorization(&rel) });
        entries.insert(name.clone(), ExpertEntry { file: rel, counts: ds.counts() });
    }
    save_dataset(&orchestrator, &out.join("orchestrator.jsonl"))?;
    let mut totals = SplitCounts::default();
    for split in Split::ALL {
        let pooled = pooled_split(&experts, split);
        match split {
            Split::Train => totals.train = pooled.len(),
            Split::Validation => totals.validation = pooled.len(),
            Split::Test => totals.test = pooled.len(),
        }
        save_dataset(&pooled, &out.join(format!("{split}.jsonl")))?;
    }
    let spec = GraphSpec {
        orchestrator: BackendRef::lexical_router("orchestrator.jsonl"),
        experts: graph_experts,
        resolution: Resolution::default(),
    };
    write_json(&out.join("graph.json"), &spec)?;
    for w in &warnings {
        tracing::warn!("{w}");
    }
    let summary = DatasetSummary {
        source_doc_id,
        backend: backend_name,
        seed: g.seed,
        n_questions: a.n_questions,
        answer_mode,
        ratios,
        experts: entries,
        totals,
        warnings,
    };
    write_json(&out.join("manifest.json"), &summary)?;
    println!(
        "{} experts, {} pairs (train {}, validation {}, test {}) -> {}",
        experts.len(),
        totals.total(),
        totals.train,
        totals.validation,
        totals.test,
        out.display()
    );
    Ok(())
}

fn emit_report<T: Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn audit_overlaps(a: OverlapArgs) -> Result<(), Failure> {
    let chunks = load_chunks(&a.chunks)?;
    let report = audit_overlap(&chunks, a.threshold);
    emit_report(&report, a.report.as_deref())?;
    report_overlaps(&report);
    if a.fail_on_overlap && !report.is_empty() {
        return Err(overlap_failure(&report));
    }
    Ok(())
}

fn audit_routing(a: RoutingArgs) -> Result<(), Failure> {
    if let Some(min) = a.min_accuracy {
        if !(0.0..=1.0).contains(&min) {
            return Err(anyhow!("--min-accuracy must lie in [0, 1], got {min}").into());
        }
    }
    let split: Split = a.split.parse().map_err(|e: String| anyhow!(e))?;
    let graph = load_graph(&a.graph_spec)?;
    let ds = load_dataset(&a.dataset)?;
    if ds.kind != DatasetKind::Orchestrator {
        return Err(anyhow!(
            "{} is a {} dataset; routing audits need the orchestrator dataset",
            a.dataset.display(),
            ds.kind
        )
        .into());
    }
    let ds = ds.split(split);
    if ds.is_empty() {
        return Err(anyhow!("{} has no {split} pairs", a.dataset.display()).into());
    }
    let audit = route_audit(&graph, &ds);
    emit_report(&audit, a.report.as_deref())?;
    eprintln!("routing accuracy {:.4} ({}/{})", audit.accuracy, audit.correct, audit.total);
    match a.min_accuracy {
        Some(min) if audit.accuracy < min => {
            Err(Failure::Audit(format!("routing accuracy {:.4} is below {min}", audit.accuracy)))
        }
        _ => Ok(()),
    }
}

fn query(a: QueryArgs) -> Result<(), Failure> {
    let graph = load_graph(&a.graph_spec)?;
    match graph.answer(&a.query) {
        Ok((answer, trace)) => {
            if a.trace {
                println!("{}", serde_json::to_string_pretty(&trace)?);
            } else {
                println!("expert: {}", trace.resolved_expert.as_deref().unwrap_or_default());
                println!("{answer}");
            }
            Ok(())
        }
        Err(e @ GraphError::Routing { .. }) => {
            if let Some(trace) = e.trace() {
                println!("{}", serde_json::to_string_pretty(trace)?);
            }
            Err(Failure::Routing(e.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn eval(a: EvalArgs, g: &Globals) -> Result<(), Failure> {
    let split: Split = a.split.parse().map_err(|e: String| anyhow!(e))?;
    let test = load_dataset(&a.test)?;
    let opts = EvalOptions { expected_split: Some(split), ..EvalOptions::default() };
    let (report, default_label) = match (&a.graph_spec, &a.reference_train) {
        (Some(spec), _) => {
            let graph = load_graph(spec)?;
            (evaluate_run(EvalTarget::Graph(&graph), &test, &opts)?, "SLG")
        }
        (None, Some(train)) => {
            let train = load_dataset(train)?.split(Split::Train);
            let model = MemorizationExpert::new(&train)?;
            (evaluate_run(EvalTarget::Backend(&model), &test, &opts)?, "Reference")
        }
        (None, None) => return Err(anyhow!("pass --graph-spec or --reference-train").into()),
    };
    let report_path = a.report.clone().unwrap_or_else(|| g.out_dir.join("report.json"));
    write_json(&report_path, &report)?;
    if let Some(csv) = &a.csv {
        let row = ComparisonRow::from_report(a.system.as_deref().unwrap_or(default_label), &report);
        write_text(csv, &comparison_csv(&[row]))?;
    }
    let routing = report.routing_accuracy.map(|r| format!(" routing_accuracy={r:.4}")).unwrap_or_default();
    println!(
        "n={} rouge_l={:.4} exact_match={:.4} meteor={:.4}{routing}",
        report.n_examples, report.rouge_l.f1, report.exact_match, report.meteor
    );
    Ok(())
}

fn sweep(a: SweepArgs, g: &Globals) -> Result<(), Failure> {
    let plan: SweepPlan = match &a.plan {
        Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| p.display().to_string())?,
        None => default_sweep(),
    };
    let datasets = DatasetPaths::discover(&a.datasets)?;
    let out = a.out.clone().unwrap_or_else(|| g.out_dir.clone());
    if let Wiring::Remote { .. } = plan.wiring {
        let manifests = pending_sweep(&plan, &datasets, &out)?;
        println!("{} runs written as pending under {}", manifests.len(), out.display());
        return Ok(());
    }
    let outcome = run_sweep(&plan, &datasets, &out, RunOptions { force: a.force, reproducible: a.reproducible })?;
    for s in &outcome.selections {
        let metric = s.metric.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "stage {} {} = {} ({} {metric})",
            s.stage,
            s.tuned_field.as_str(),
            s.value,
            s.run_id.as_deref().unwrap_or("no run")
        );
    }
    let failed = outcome.records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} run(s) failed; see {}", out.join("summary.csv").display());
    }
    Ok(())
}

fn serve(a: ServeArgs, g: &Globals) -> Result<(), Failure> {
    if a.max_concurrency == 0 {
        return Err(anyhow!("--max-concurrency must be at least 1").into());
    }
    let graph = load_graph(&a.graph_spec)?;
    let trace_dir = a.traces.clone().unwrap_or_else(|| g.out_dir.join("traces"));
    let state = AppState::new(
        graph,
        ServiceOptions { max_concurrency: a.max_concurrency, trace_dir: Some(trace_dir), ..ServiceOptions::default() },
    )?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.bind).await.with_context(|| format!("binding {}", a.bind))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        service::serve(listener, state, service::shutdown_signal()).await?;
        anyhow::Ok(())
    })?;
    Ok(())
}
