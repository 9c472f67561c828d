use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tablescope_core::association::{build_llm_prompt, LlmReplyScorer, ScoringContext};
use tablescope_core::canonical::{to_canonical_bytes, to_canonical_jsonl};
use tablescope_core::dataset::{read_jsonl, split_by_document, write_jsonl};
use tablescope_core::evaluation::{latency_csv, text_table};
use tablescope_core::{
    build_training_pairs, canonicalize, confusion, corpus_stats, decide, doc_level, export_parse,
    import_parse, latency_batches, parse_document_json, parse_semantics, prf, recall_at_k, retrieve,
    split_train_test, AnnotationTriplet, Block, Document, DocumentVocabulary, HeuristicScorer,
    PairScorer, ParsedDocument, Query, QueryScorer, Ratio, RemoteScorer, RetrievalRanking,
    ScorerConfig, ScorerKind, TrainingSample,
};

use crate::args::*;
use crate::Failure;

pub fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a),
        Command::Parse(a) => parse(a),
        Command::Retrieve(a) => retrieve_cmd(a),
        Command::BuildTraining(a) => build_training(a),
        Command::Split(a) => split(a),
        Command::EvaluatePairs(a) => evaluate_pairs(a),
        Command::EvaluateDocs(a) => evaluate_docs(a),
        Command::EvaluateRetrieval(a) => evaluate_retrieval(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    }
}

// ---- I/O helpers ----

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::invalid(format!("cannot read stdin: {e}")))?;
        return Ok(buf);
    }
    fs::read(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read_bytes(path)?)
        .map_err(|_| Failure::invalid(format!("{} is not UTF-8", path.display())))
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    read_jsonl(&read_text(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn read_doc(path: &Path) -> Result<Document, Failure> {
    parse_document_json(&read_bytes(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::invalid(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: &OutArgs, bytes: &[u8]) -> Result<(), Failure> {
    match &out.out {
        Some(path) => write_file(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::invalid(format!("cannot write stdout: {e}")))
        }
    }
}

/// Files as given; directories expand to their `*.json` files, sorted.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::invalid(format!("cannot list {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

// ---- scorer construction ----

fn scorer_config(a: &ScorerArgs) -> Result<ScorerConfig, Failure> {
    let cfg = ScorerConfig {
        theta: a.theta,
        scorer_kind: a.scorer,
        lexical_weight: a.lexical_weight,
        remote_endpoint: a.endpoint.clone(),
        batch_size: a.batch_size,
        jobs: a.jobs,
        page_window: a.page_window,
        query_with_related_text: false,
    };
    cfg.validate().map_err(|e| Failure::usage(e.0))?;
    if !(a.timeout.is_finite() && a.timeout > 0.0) {
        return Err(Failure::usage("--timeout must be positive"));
    }
    Ok(cfg)
}

fn remote(a: &ScorerArgs, cfg: &ScorerConfig) -> RemoteScorer {
    let url = cfg.remote_endpoint.clone().unwrap_or_default();
    RemoteScorer::with_timeout(url, Duration::from_secs_f64(a.timeout))
        .batch_size(cfg.batch_size)
        .max_in_flight(cfg.jobs)
}

#[derive(Serialize, Deserialize)]
struct ReplyRecord {
    table_block_id: String,
    text_block_id: String,
    reply: String,
}

#[derive(Serialize)]
struct PromptRecord<'a> {
    table_block_id: &'a str,
    text_block_id: &'a str,
    prompt: String,
}

/// A block with no text cannot describe (or be) a table; such pairs get no
/// prompt and are replayed as "0".
fn promptable(table: &Block, text: &Block) -> bool {
    !table.text.trim().is_empty() && !text.text.trim().is_empty()
}

fn reply_scorer(doc: &Document, path: &Path) -> Result<LlmReplyScorer, Failure> {
    let mut scorer = LlmReplyScorer::new();
    for t in doc.tables() {
        for s in doc.text_blocks() {
            if !promptable(t, s) {
                scorer.insert(&t.block_id, &s.block_id, "0");
            }
        }
    }
    for r in read_records::<ReplyRecord>(path)? {
        scorer.insert(&r.table_block_id, &r.text_block_id, r.reply);
    }
    Ok(scorer)
}

fn pair_scorer(a: &ScorerArgs, cfg: &ScorerConfig, doc: &Document, replies: Option<&Path>) -> Result<Box<dyn PairScorer>, Failure> {
    Ok(match a.scorer {
        ScorerKind::Heuristic => Box::new(HeuristicScorer),
        ScorerKind::Remote => Box::new(remote(a, cfg)),
        ScorerKind::LlmBaseline => match replies {
            Some(path) => Box::new(reply_scorer(doc, path)?),
            None => return Err(Failure::usage("--scorer llm-prompt needs --replies here")),
        },
    })
}

fn query_scorer(a: &ScorerArgs, cfg: &ScorerConfig) -> Result<Box<dyn QueryScorer>, Failure> {
    Ok(match a.scorer {
        ScorerKind::Heuristic => Box::new(HeuristicScorer),
        ScorerKind::Remote => Box::new(remote(a, cfg)),
        ScorerKind::LlmBaseline => {
            return Err(Failure::usage("the LLM baseline scores table-text pairs only, not queries"))
        }
    })
}

// ---- subcommands ----

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    if a.inputs.len() > 1 && a.out_dir.is_none() {
        return Err(Failure::usage("several inputs need --out-dir"));
    }
    for input in &a.inputs {
        let doc = read_doc(input)?;
        let bytes = canonicalize(&doc);
        match (&a.out_dir, &a.out) {
            (Some(dir), _) => {
                fs::create_dir_all(dir)
                    .map_err(|e| Failure::invalid(format!("cannot create {}: {e}", dir.display())))?;
                write_file(&dir.join(format!("{}.json", doc.doc_id)), &bytes)?;
            }
            (None, out) => emit(&OutArgs { out: out.clone() }, &bytes)?,
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationRecord {
    path: String,
    valid: bool,
    error: Option<String>,
}

fn validate(a: DocsArgs) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in expand(&a.docs)? {
        let result = read_bytes(&path).and_then(|b| parse_document_json(&b).map_err(Failure::from));
        records.push(ValidationRecord {
            path: path.display().to_string(),
            valid: result.is_ok(),
            error: result.err().map(|f| f.message),
        });
    }
    emit(&a.out, &to_canonical_jsonl(&records))?;
    let bad = records.iter().filter(|r| !r.valid).count();
    if bad > 0 {
        return Err(Failure::invalid(format!("{bad} of {} documents are invalid", records.len())));
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), Failure> {
    let docs = expand(&a.docs.docs)?
        .iter()
        .map(|p| read_doc(p))
        .collect::<Result<Vec<_>, _>>()?;
    let s = corpus_stats(&docs);
    let bytes = match a.format.format {
        Format::Json => to_canonical_bytes(&s),
        Format::Text => {
            let mut rows = vec![vec!["Source", "#PDF", "#Page", "#Table Block", "#Text Block"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>()];
            let row = |name: &str, c: &tablescope_core::model::SourceCounts| {
                vec![
                    name.to_string(),
                    c.n_pdf.to_string(),
                    c.n_page.to_string(),
                    c.n_table_block.to_string(),
                    c.n_text_block.to_string(),
                ]
            };
            for (name, c) in &s.per_source {
                rows.push(row(name, c));
            }
            rows.push(row("Total", &s.total));
            text_table(&rows).into_bytes()
        }
    };
    emit(&a.docs.out, &bytes)
}

/// One predicted or gold label for a `(table, text)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairLabel {
    doc_id: String,
    table_block_id: String,
    text_block_id: String,
    label: u8,
}

fn pair_labels(parsed: &ParsedDocument, cfg: &ScorerConfig) -> Vec<PairLabel> {
    parsed
        .entries
        .iter()
        .flat_map(|e| {
            e.scores.iter().map(|(text, &p)| PairLabel {
                doc_id: parsed.doc_id.clone(),
                table_block_id: e.table_block_id.clone(),
                text_block_id: text.clone(),
                label: decide(p, cfg),
            })
        })
        .collect()
}

fn parse(a: ParseArgs) -> Result<(), Failure> {
    let doc = read_doc(&a.doc)?;
    let cfg = scorer_config(&a.scorer)?;
    if a.scorer.scorer == ScorerKind::LlmBaseline && a.replies.is_none() {
        let mut prompts = Vec::new();
        let mut skipped = 0;
        for t in doc.tables() {
            for s in doc.text_blocks() {
                if !promptable(t, s) {
                    skipped += 1;
                    continue;
                }
                let prompt = build_llm_prompt(&t.text, &s.text).map_err(|e| Failure::invalid(e.to_string()))?;
                prompts.push(PromptRecord {
                    table_block_id: &t.block_id,
                    text_block_id: &s.block_id,
                    prompt,
                });
            }
        }
        if skipped > 0 {
            eprintln!("tablescope: {skipped} pairs with empty text get no prompt and count as unrelated");
        }
        return emit(&a.out, &to_canonical_jsonl(&prompts));
    }
    let scorer = pair_scorer(&a.scorer, &cfg, &doc, a.replies.as_deref())?;
    let parsed = parse_semantics(&doc, scorer.as_ref(), &cfg)?;
    if let Some(path) = &a.pairs_out {
        write_file(path, &to_canonical_jsonl(&pair_labels(&parsed, &cfg)))?;
    }
    emit(&a.out, &export_parse(&parsed))
}

fn retrieve_cmd(a: RetrieveArgs) -> Result<(), Failure> {
    let doc = read_doc(&a.doc)?;
    let mut cfg = scorer_config(&a.scorer)?;
    cfg.query_with_related_text = a.with_related_text;
    if a.k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    let scorer = query_scorer(&a.scorer, &cfg)?;
    let parsed = match &a.parsed {
        Some(path) => import_parse(&read_bytes(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?,
        None => {
            let pairs = pair_scorer(&a.scorer, &cfg, &doc, None)?;
            parse_semantics(&doc, pairs.as_ref(), &cfg)?
        }
    };
    match (&a.query, &a.queries) {
        (Some(text), _) => {
            let q = Query::new(a.query_id.clone(), text.clone());
            let ranking = retrieve(&parsed, &doc, &q, a.k, scorer.as_ref(), &cfg)?;
            emit(&a.out, &to_canonical_bytes(&ranking))
        }
        (None, Some(path)) => {
            let queries: Vec<Query> = read_records(path)?;
            let mut rankings = Vec::with_capacity(queries.len());
            for q in queries.iter().filter(|q| q.doc_id.as_deref().is_none_or(|d| d == doc.doc_id)) {
                rankings.push(retrieve(&parsed, &doc, q, a.k, scorer.as_ref(), &cfg)?);
            }
            emit(&a.out, &to_canonical_jsonl(&rankings))
        }
        (None, None) => Err(Failure::usage("give --query or --queries")),
    }
}

fn build_training(a: BuildTrainingArgs) -> Result<(), Failure> {
    let triplets: Vec<AnnotationTriplet> = read_records(&a.triplets)?;
    let mut docs = Vec::new();
    for p in &a.docs {
        docs.push(read_doc(p)?);
    }
    let known: BTreeSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    if let Some(t) = triplets.iter().find(|t| !known.contains(t.doc_id.as_str())) {
        return Err(Failure::invalid(format!("triplets reference document {:?}, which was not given", t.doc_id)));
    }
    let mut per_table: BTreeSet<(&str, &str)> = BTreeSet::new();
    for t in &triplets {
        if !per_table.insert((&t.doc_id, &t.table_id)) {
            return Err(Failure::invalid(format!(
                "table {} of {} appears in more than one triplet; merge annotations first",
                t.table_id, t.doc_id
            )));
        }
    }
    let mut samples = Vec::new();
    for doc in &docs {
        let mine: Vec<AnnotationTriplet> = triplets.iter().filter(|t| t.doc_id == doc.doc_id).cloned().collect();
        samples.extend(build_training_pairs(doc, &mine, a.seed)?);
    }
    emit(&a.out, &write_jsonl(&samples))
}

fn split(a: SplitArgs) -> Result<(), Failure> {
    let samples: Vec<TrainingSample> = read_records(&a.samples)?;
    let (train, test) = if a.by_document {
        split_by_document(&samples, a.ratio, a.seed)?
    } else {
        split_train_test(&samples, a.ratio, a.seed)?
    };
    write_file(&a.train_out, &write_jsonl(&train))?;
    write_file(&a.test_out, &write_jsonl(&test))?;
    emit(
        &OutArgs { out: None },
        &to_canonical_bytes(&serde_json::json!({ "train": train.len(), "test": test.len() })),
    )
}

type PairKey = (String, String, String);

fn label_map(path: &Path) -> Result<BTreeMap<PairKey, bool>, Failure> {
    let mut map = BTreeMap::new();
    for r in read_records::<PairLabel>(path)? {
        if r.label > 1 {
            return Err(Failure::invalid(format!("{}: label must be 0 or 1, got {}", path.display(), r.label)));
        }
        let key = (r.doc_id, r.table_block_id, r.text_block_id);
        if map.insert(key.clone(), r.label == 1).is_some() {
            return Err(Failure::invalid(format!("{}: duplicate pair {key:?}", path.display())));
        }
    }
    Ok(map)
}

/// Pred/gold label pairs, keyed identically; any missing or extra pair is an error.
fn joined(pred: &Path, gold: &Path) -> Result<Vec<(PairKey, bool, bool)>, Failure> {
    let p = label_map(pred)?;
    let g = label_map(gold)?;
    if let Some(k) = g.keys().find(|k| !p.contains_key(*k)) {
        return Err(Failure::invalid(format!("no prediction for gold pair {k:?}")));
    }
    if let Some(k) = p.keys().find(|k| !g.contains_key(*k)) {
        return Err(Failure::invalid(format!("prediction for pair {k:?} has no gold label")));
    }
    Ok(g.into_iter().map(|(k, gold)| (k.clone(), p[&k], gold)).collect())
}

fn pct(r: &Ratio) -> f64 {
    r.percent_2dp()
}

fn evaluate_pairs(a: EvalLabelsArgs) -> Result<(), Failure> {
    let rows = joined(&a.pred, &a.gold)?;
    let pred: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let gold: Vec<bool> = rows.iter().map(|r| r.2).collect();
    let c = confusion(&pred, &gold)?;
    let m = prf(&c);
    let bytes = match a.format.format {
        Format::Json => to_canonical_bytes(&serde_json::json!({
            "n_pairs": rows.len(),
            "confusion": c,
            "precision": pct(&m.precision),
            "recall": pct(&m.recall),
            "f1": pct(&m.f1),
        })),
        Format::Text => text_table(&[
            ["TP", "FP", "TN", "FN", "Precision", "Recall", "F1"].map(String::from).to_vec(),
            vec![
                c.tp.to_string(),
                c.fp.to_string(),
                c.tn.to_string(),
                c.fn_.to_string(),
                m.precision.display_percent(),
                m.recall.display_percent(),
                m.f1.display_percent(),
            ],
        ])
        .into_bytes(),
    };
    emit(&a.out, &bytes)
}

fn evaluate_docs(a: EvalLabelsArgs) -> Result<(), Failure> {
    let rows = joined(&a.pred, &a.gold)?;
    let mut groups: BTreeMap<String, Vec<(bool, bool)>> = BTreeMap::new();
    for ((doc, _, _), p, g) in rows {
        groups.entry(doc).or_default().push((p, g));
    }
    let r = doc_level(&groups)?;
    let of = |n: u64| Ratio::new(n, r.n_docs);
    let bytes = match a.format.format {
        Format::Json => to_canonical_bytes(&serde_json::json!({
            "n_docs": r.n_docs,
            "all_correct": r.all_correct,
            "pos_correct": r.pos_correct,
            "neg_correct": r.neg_correct,
            "percent": {
                "all_correct": pct(&of(r.all_correct)),
                "pos_correct": pct(&of(r.pos_correct)),
                "neg_correct": pct(&of(r.neg_correct)),
            },
        })),
        Format::Text => {
            let cell = |n: u64| format!("{n} ({}%)", of(n).display_percent());
            text_table(&[
                ["Documents", "All Correct", "POS Correct", "NEG Correct"].map(String::from).to_vec(),
                vec![r.n_docs.to_string(), cell(r.all_correct), cell(r.pos_correct), cell(r.neg_correct)],
            ])
            .into_bytes()
        }
    };
    emit(&a.out, &bytes)
}

#[derive(Deserialize)]
struct GoldQuery {
    query_id: String,
    gold_table_id: Option<String>,
}

fn evaluate_retrieval(a: EvalRetrievalArgs) -> Result<(), Failure> {
    let rankings: Vec<RetrievalRanking> = read_records(&a.rankings)?;
    let mut gold = BTreeMap::new();
    for q in read_records::<GoldQuery>(&a.gold)? {
        let g = q
            .gold_table_id
            .ok_or_else(|| Failure::invalid(format!("query {} has no gold_table_id", q.query_id)))?;
        gold.insert(q.query_id, g);
    }
    let mut results = Vec::new();
    for &k in &a.k {
        results.push((k, recall_at_k(&rankings, &gold, k)?));
    }
    if let Some(short) = rankings.iter().find(|r| a.k.iter().any(|&k| k > r.k)) {
        eprintln!(
            "tablescope: ranking {} was cut at K={}; larger cutoffs see at most {} tables",
            short.query_id, short.k, short.k
        );
    }
    let bytes = match a.format.format {
        Format::Json => {
            let recall: BTreeMap<String, f64> = results.iter().map(|(k, r)| (k.to_string(), pct(r))).collect();
            let hits: BTreeMap<String, u64> = results.iter().map(|(k, r)| (k.to_string(), r.num)).collect();
            to_canonical_bytes(&serde_json::json!({
                "n_queries": rankings.len(),
                "hits": hits,
                "recall": recall,
            }))
        }
        Format::Text => {
            let mut header = vec!["Queries".to_string()];
            let mut row = vec![rankings.len().to_string()];
            for (k, r) in &results {
                header.push(format!("Recall@{k}"));
                row.push(r.display_percent());
            }
            text_table(&[header, row]).into_bytes()
        }
    };
    emit(&a.out, &bytes)
}

fn read_durations(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = read_text(path)?;
    let values: Vec<f64> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|e| Failure::invalid(format!("{}: {l:?}: {e}", path.display()))))
            .collect::<Result<_, _>>()?
    };
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Failure::invalid(format!("{}: invalid duration {bad}", path.display())));
    }
    Ok(values)
}

/// Wall time of one scorer call per `(table, text)` pair. Ingestion and
/// vocabulary construction are outside the timed region.
fn measure(a: &BenchArgs) -> Result<Vec<f64>, Failure> {
    let cfg = scorer_config(&a.scorer)?;
    let mut durations = Vec::new();
    for path in &a.docs {
        let doc = read_doc(path)?;
        let scorer = pair_scorer(&a.scorer, &cfg, &doc, None)?;
        let vocab = DocumentVocabulary::from_document(&doc);
        let ctx = ScoringContext::new(&doc, &vocab, &cfg);
        for t in doc.tables() {
            for s in doc.text_blocks() {
                let start = Instant::now();
                scorer.score_pairs(&ctx, &[(t, s)])?;
                durations.push(start.elapsed().as_secs_f64());
            }
        }
    }
    if durations.is_empty() {
        return Err(Failure::invalid("the documents contain no table-text pairs to time"));
    }
    Ok(durations)
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let durations = match &a.durations {
        Some(path) => read_durations(path)?,
        None => measure(&a)?,
    };
    let report = latency_batches(&durations, a.batches, a.seed)?;
    if let Some(path) = &a.emit_plot_data {
        write_file(path, latency_csv(&report).as_bytes())?;
    }
    let bytes = match a.format.format {
        Format::Json => to_canonical_bytes(&report),
        Format::Text => {
            let mut rows = vec![["Batch", "Size", "Mean (s)", "Median (s)"].map(String::from).to_vec()];
            for b in &report.batches {
                rows.push(vec![
                    (b.batch_id + 1).to_string(),
                    b.size.to_string(),
                    format!("{:.6}", b.mean_s),
                    format!("{:.6}", b.median_s),
                ]);
            }
            rows.push(vec![
                "All".into(),
                report.n_samples.to_string(),
                format!("{:.6}", report.mean_s),
                format!("{:.6}", report.median_s),
            ]);
            text_table(&rows).into_bytes()
        }
    };
    emit(&a.out, &bytes)
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let cfg = tablescope_service::ServiceConfig {
        log_path: a.log,
        page_images: a.page_images,
        ui_dir: a.ui,
        default_endpoint: a.endpoint,
    };
    eprintln!("tablescope: serving on http://{}", a.addr);
    tablescope_service::serve_blocking(a.addr, cfg).map_err(|e| Failure::invalid(format!("server failed: {e}")))
}
