//! End-to-end pipeline steps behind the `docpool` binary.
//!
//! Every step reads a manifest (JSON lines, one document per line) and SEMB
//! embeddings, and writes its results next to `out`. TF-IDF statistics are
//! always collected over the manifest documents that share a document's language.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{
    align_collections, read_gold_tsv, recall_with_ci, write_pairs_tsv, AlignmentMetrics, DocVector, IndexBackend,
};
use crate::corpus::{
    collect_stats, read_manifest, select_excerpt, write_ranges, CollectionStats, Document, ExcerptStrategy, Split,
    TokenRangeSpec, DEFAULT_BOTTOM_TOKENS, DEFAULT_TOP_TOKENS, MAX_ENCODER_TOKENS,
};
use crate::embed_store::{load_embeddings, pca_apply, pca_fit, store_embeddings, EmbeddingMatrix, PcaModel};
use crate::error::{Error, Result};
use crate::learner::{
    build_examples, predict, train, Example, LabelSpace, PoolerModel, PoolingMode, TaskKind, TrainConfig,
};
use crate::metrics::{bootstrap_ci, ConfidenceInterval, LabelCounts, DEFAULT_CONFIDENCE};
use crate::pert::{boilerplate_weights, tf_pert, tk_pert, BoilerplateWeights, PertWindowBank, DEFAULT_RESOLUTION};
use crate::weighting::{make_weights, pool_weighted, sentence_tfidf_scores, TfVariant, WeightScheme, WeightVector};

/// Every document representation the pipeline can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SentenceAverage,
    TopHalf,
    BottomHalf,
    TfIdf,
    TkPert,
    TfPert,
    /// Whole document fed to the encoder.
    AllTokens,
    Top510,
    Bottom510,
    TopBottom,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::SentenceAverage,
        Strategy::TopHalf,
        Strategy::BottomHalf,
        Strategy::TfIdf,
        Strategy::TkPert,
        Strategy::TfPert,
        Strategy::AllTokens,
        Strategy::Top510,
        Strategy::Bottom510,
        Strategy::TopBottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SentenceAverage => "sentence-average",
            Strategy::TopHalf => "top-half",
            Strategy::BottomHalf => "bottom-half",
            Strategy::TfIdf => "tf-idf",
            Strategy::TkPert => "tk-pert",
            Strategy::TfPert => "tf-pert",
            Strategy::AllTokens => "all-tokens",
            Strategy::Top510 => "top-510",
            Strategy::Bottom510 => "bottom-510",
            Strategy::TopBottom => "top-bottom",
        }
    }

    /// Excerpt strategies are encoded by the external adapter; only their
    /// token ranges are computed here.
    pub fn excerpt(self) -> Option<ExcerptStrategy> {
        match self {
            Strategy::AllTokens => Some(ExcerptStrategy::AllTokens),
            Strategy::Top510 => Some(ExcerptStrategy::TopN),
            Strategy::Bottom510 => Some(ExcerptStrategy::BottomN),
            Strategy::TopBottom => Some(ExcerptStrategy::TopBottom),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidParameter(format!("unknown strategy {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Window bank parameters shared by the PERT strategies and the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PertParams {
    pub parts: usize,
    pub gamma: f64,
    pub resolution: usize,
}

impl Default for PertParams {
    fn default() -> Self {
        PertParams {
            parts: crate::pert::DEFAULT_PARTS,
            gamma: crate::pert::DEFAULT_GAMMA,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl PertParams {
    pub fn bank(&self) -> Result<PertWindowBank> {
        PertWindowBank::new(self.parts, self.gamma, self.resolution)
    }
}

/// Appends `suffix` to the file name of `path`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Collection statistics per language.
pub fn stats_by_language(docs: &[Document]) -> HashMap<String, CollectionStats> {
    let mut by_lang: HashMap<&str, Vec<&Document>> = HashMap::new();
    for d in docs {
        by_lang.entry(d.lang.as_str()).or_default().push(d);
    }
    by_lang
        .into_iter()
        .map(|(lang, ds)| (lang.to_string(), collect_stats(ds)))
        .collect()
}

/// Embeddings for exactly the manifest's documents, with matching row counts.
/// All documents without embeddings are reported in one error.
pub fn check_embeddings(docs: &[Document], embeddings: &BTreeMap<String, EmbeddingMatrix>) -> Result<()> {
    let missing: Vec<&str> = docs
        .iter()
        .filter(|d| !embeddings.contains_key(&d.doc_id))
        .map(|d| d.doc_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "missing embeddings for {} document(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let mut dim = None;
    for d in docs {
        let m = &embeddings[&d.doc_id];
        if m.count() != d.sentences.len() {
            return Err(Error::Validation(format!(
                "document {}: {} sentences but {} embedding rows",
                d.doc_id,
                d.sentences.len(),
                m.count()
            )));
        }
        match dim {
            None => dim = Some(m.dim()),
            Some(k) if k != m.dim() => {
                return Err(Error::DimMismatch {
                    expected: k,
                    actual: m.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Fits PCA on the sentence rows of `fit_docs` and projects every matrix.
/// Returns `None` (and leaves the input untouched) when `k` is 0 or not
/// smaller than the embedding dim.
pub fn reduce_dimensions(
    fit_docs: &[&Document],
    embeddings: &mut BTreeMap<String, EmbeddingMatrix>,
    k: usize,
) -> Result<Option<PcaModel>> {
    let Some(dim) = embeddings.values().next().map(EmbeddingMatrix::dim) else {
        return Ok(None);
    };
    if k == 0 || k >= dim {
        return Ok(None);
    }
    let pool = EmbeddingMatrix::vstack(fit_docs.iter().filter_map(|d| embeddings.get(&d.doc_id)))?;
    let model = pca_fit(&pool, k)?;
    apply_pca(&model, embeddings)?;
    Ok(Some(model))
}

pub fn apply_pca(model: &PcaModel, embeddings: &mut BTreeMap<String, EmbeddingMatrix>) -> Result<()> {
    let projected: Vec<(String, EmbeddingMatrix)> = embeddings
        .par_iter()
        .map(|(id, m)| Ok((id.clone(), pca_apply(model, m)?)))
        .collect::<Result<_>>()?;
    embeddings.extend(projected);
    Ok(())
}

/// PCA fitting population: training-split documents, or every document when
/// the manifest has no training split.
fn pca_population(docs: &[Document]) -> Vec<&Document> {
    let train: Vec<&Document> = docs.iter().filter(|d| d.split == Split::Train).collect();
    if train.is_empty() {
        docs.iter().collect()
    } else {
        train
    }
}

/// Shared state for composing document vectors from sentence embeddings.
pub struct Composer {
    pub strategy: Strategy,
    pub tf_variant: TfVariant,
    pub bank: PertWindowBank,
    pub stats: HashMap<String, CollectionStats>,
    pub boilerplate: HashMap<String, BoilerplateWeights>,
}

impl Composer {
    pub fn new(docs: &[Document], strategy: Strategy, tf_variant: TfVariant, pert: PertParams, boilerplate: bool) -> Result<Self> {
        Ok(Composer {
            strategy,
            tf_variant,
            bank: pert.bank()?,
            stats: stats_by_language(docs),
            boilerplate: boilerplate_weights(docs, boilerplate),
        })
    }

    fn stats_for(&self, doc: &Document) -> Result<&CollectionStats> {
        self.stats
            .get(&doc.lang)
            .ok_or_else(|| Error::Validation(format!("no collection statistics for language {}", doc.lang)))
    }

    fn boilerplate_for(&self, doc: &Document) -> BoilerplateWeights {
        self.boilerplate
            .get(&doc.doc_id)
            .cloned()
            .unwrap_or_else(|| BoilerplateWeights::ones(doc.sentences.len()))
    }

    /// Sentence weights for the weighting strategies, `None` for the others.
    pub fn weights(&self, doc: &Document) -> Result<Option<WeightVector>> {
        let scheme = match self.strategy {
            Strategy::SentenceAverage => WeightScheme::Uniform,
            Strategy::TopHalf => WeightScheme::TopHalf,
            Strategy::BottomHalf => WeightScheme::BottomHalf,
            Strategy::TfIdf => WeightScheme::TfIdf(self.tf_variant),
            _ => return Ok(None),
        };
        let stats = match scheme {
            WeightScheme::TfIdf(_) => Some(self.stats_for(doc)?),
            _ => None,
        };
        make_weights(doc, scheme, stats).map(Some)
    }

    pub fn compose(&self, doc: &Document, embs: &EmbeddingMatrix) -> Result<Vec<f64>> {
        if let Some(w) = self.weights(doc)? {
            return pool_weighted(embs, &w);
        }
        match self.strategy {
            Strategy::TkPert => tk_pert(embs, &self.bank, &self.boilerplate_for(doc)),
            Strategy::TfPert => {
                let scores = sentence_tfidf_scores(doc, self.stats_for(doc)?, self.tf_variant);
                tf_pert(embs, &self.bank, &self.boilerplate_for(doc), &scores)
            }
            other => Err(Error::InvalidParameter(format!(
                "{other} is an excerpt strategy; its ranges are encoded by the adapter"
            ))),
        }
    }

    pub fn output_dim(&self, sentence_dim: usize) -> usize {
        match self.strategy {
            Strategy::TkPert | Strategy::TfPert => sentence_dim * self.bank.parts(),
            _ => sentence_dim,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComposeConfig {
    pub manifest: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub strategy: Strategy,
    pub tf_variant: TfVariant,
    pub pert: PertParams,
    pub boilerplate: bool,
    /// 0 disables PCA.
    pub pca_dim: usize,
    pub top_tokens: usize,
    pub bottom_tokens: usize,
    pub dump_weights: Option<PathBuf>,
    pub out: PathBuf,
}

impl ComposeConfig {
    pub fn new(manifest: impl Into<PathBuf>, embeddings: impl Into<PathBuf>, strategy: Strategy, out: impl Into<PathBuf>) -> Self {
        ComposeConfig {
            manifest: manifest.into(),
            embeddings: Some(embeddings.into()),
            strategy,
            tf_variant: TfVariant::Tf4,
            pert: PertParams::default(),
            boilerplate: false,
            pca_dim: 0,
            top_tokens: DEFAULT_TOP_TOKENS,
            bottom_tokens: DEFAULT_BOTTOM_TOKENS,
            dump_weights: None,
            out: out.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComposeOutcome {
    /// One vector per document in a SEMB container at `path`.
    Vectors { path: PathBuf, count: usize, dim: usize },
    /// Excerpt strategies: token ranges for the adapter at `path`; no vectors.
    Ranges { path: PathBuf, count: usize },
}

fn ranges_path(out: &Path) -> PathBuf {
    if out.to_string_lossy().ends_with(".ranges.jsonl") {
        out.to_path_buf()
    } else {
        sidecar(out, ".ranges.jsonl")
    }
}

pub fn cmd_compose(cfg: &ComposeConfig) -> Result<ComposeOutcome> {
    let docs = read_manifest(&cfg.manifest)?;
    if let Some(excerpt) = cfg.strategy.excerpt() {
        let (n, m) = match excerpt {
            ExcerptStrategy::TopBottom => (cfg.top_tokens, cfg.bottom_tokens),
            _ => (MAX_ENCODER_TOKENS, 0),
        };
        let specs = docs
            .iter()
            .map(|d| select_excerpt(d, excerpt, n, m))
            .collect::<Result<Vec<TokenRangeSpec>>>()?;
        let path = ranges_path(&cfg.out);
        write_ranges(&path, &specs)?;
        return Ok(ComposeOutcome::Ranges {
            path,
            count: specs.len(),
        });
    }

    let emb_path = cfg
        .embeddings
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("strategy {} needs --embeddings", cfg.strategy)))?;
    let mut embeddings = load_embeddings(emb_path)?;
    check_embeddings(&docs, &embeddings)?;
    if let Some(pca) = reduce_dimensions(&pca_population(&docs), &mut embeddings, cfg.pca_dim)? {
        pca.save(sidecar(&cfg.out, ".pca.json"))?;
    }

    let composer = Composer::new(&docs, cfg.strategy, cfg.tf_variant, cfg.pert, cfg.boilerplate)?;
    if let Some(path) = &cfg.dump_weights {
        let mut dump = Vec::new();
        for d in &docs {
            if let Some(w) = composer.weights(d)? {
                dump.push(serde_json::json!({ "doc_id": d.doc_id, "scheme": w.scheme_tag, "weights": w.weights }));
            }
        }
        write_json(path, &dump)?;
    }

    let vectors: BTreeMap<String, EmbeddingMatrix> = docs
        .par_iter()
        .map(|d| {
            let v = composer.compose(d, &embeddings[&d.doc_id])?;
            Ok((d.doc_id.clone(), EmbeddingMatrix::from_rows(&[v])?))
        })
        .collect::<Result<_>>()?;
    let dim = vectors.values().next().map_or(0, EmbeddingMatrix::dim);
    store_embeddings(&vectors, &cfg.out)?;
    Ok(ComposeOutcome::Vectors {
        path: cfg.out.clone(),
        count: vectors.len(),
        dim,
    })
}

#[derive(Debug, Clone)]
pub struct TrainCmdConfig {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub mode: PoolingMode,
    pub task: TaskKind,
    /// Restrict training and dev documents to this language (zero-shot source).
    pub train_lang: Option<String>,
    pub tf_variant: TfVariant,
    pub pert: PertParams,
    pub pca_dim: usize,
    pub train: TrainConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub labels: Vec<String>,
    pub best_epoch: usize,
    pub final_dev_metric: f64,
    pub epochs: Vec<crate::learner::EpochMetrics>,
}

/// TF-IDF sentence scores for every document, keyed by doc id.
pub fn tfidf_table(docs: &[Document], variant: TfVariant) -> HashMap<String, Vec<f64>> {
    let stats = stats_by_language(docs);
    docs.par_iter()
        .map(|d| (d.doc_id.clone(), sentence_tfidf_scores(d, &stats[&d.lang], variant)))
        .collect()
}

fn validate_task_labels(docs: &[&Document], task: TaskKind) -> Result<()> {
    for d in docs {
        if task == TaskKind::Multiclass && d.labels.len() != 1 {
            return Err(Error::Validation(format!(
                "document {}: multiclass task needs exactly one label, found {}",
                d.doc_id,
                d.labels.len()
            )));
        }
    }
    Ok(())
}

pub fn cmd_train(cfg: &TrainCmdConfig) -> Result<TrainReport> {
    let docs = read_manifest(&cfg.manifest)?;
    let in_lang = |d: &&Document| cfg.train_lang.as_ref().is_none_or(|l| &d.lang == l);
    let train_docs: Vec<&Document> = docs.iter().filter(|d| d.split == Split::Train).filter(in_lang).collect();
    let dev_docs: Vec<&Document> = docs.iter().filter(|d| d.split == Split::Dev).filter(in_lang).collect();
    if train_docs.is_empty() {
        return Err(Error::Validation("manifest has no training documents".into()));
    }
    validate_task_labels(&train_docs, cfg.task)?;
    validate_task_labels(&dev_docs, cfg.task)?;
    let labels = LabelSpace::from_documents(train_docs.iter().copied());
    for d in &dev_docs {
        labels.encode(d)?;
    }

    let mut embeddings = load_embeddings(&cfg.embeddings)?;
    let used: Vec<Document> = train_docs.iter().chain(&dev_docs).map(|d| (*d).clone()).collect();
    check_embeddings(&used, &embeddings)?;
    embeddings.retain(|id, _| used.iter().any(|d| &d.doc_id == id));
    let pca = reduce_dimensions(&train_docs, &mut embeddings, cfg.pca_dim)?;

    let tfidf = (cfg.mode == PoolingMode::AttTfPert).then(|| tfidf_table(&docs, cfg.tf_variant));
    let train_set = build_examples(&train_docs, &embeddings, &labels, tfidf.as_ref())?;
    let dev_set = build_examples(&dev_docs, &embeddings, &labels, tfidf.as_ref())?;
    let outcome = train(
        &train_set,
        &dev_set,
        labels.len(),
        &cfg.train,
        cfg.mode,
        cfg.task,
        &cfg.pert.bank()?,
    )?;
    let model = outcome.model.with_labels(&labels)?;
    model.save(&cfg.out)?;
    let pca_path = sidecar(&cfg.out, ".pca.json");
    match &pca {
        Some(p) => p.save(&pca_path)?,
        None if pca_path.exists() => fs::remove_file(&pca_path).map_err(|e| Error::io(&pca_path, e))?,
        None => {}
    }
    let report = TrainReport {
        labels: labels.labels().to_vec(),
        best_epoch: outcome.best_epoch,
        final_dev_metric: outcome
            .history
            .iter()
            .find(|m| m.epoch == outcome.best_epoch)
            .map_or(0.0, |m| m.dev_metric),
        epochs: outcome.history,
    };
    write_json(&sidecar(&cfg.out, ".metrics.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub model: PathBuf,
    pub split: Split,
    pub tf_variant: TfVariant,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScore {
    pub lang: String,
    pub metric: String,
    pub n_docs: usize,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub formatted: String,
}

/// Point estimate and bootstrap CI of accuracy (multiclass) or micro-F1
/// (multilabel) for per-document predictions.
pub fn evaluate_predictions(
    task: TaskKind,
    predicted: &[Vec<usize>],
    gold: &[Vec<usize>],
    n_samples: usize,
    seed: u64,
) -> Result<ConfidenceInterval> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    let items: Vec<(&[usize], &[usize])> = predicted.iter().zip(gold).map(|(p, g)| (p.as_slice(), g.as_slice())).collect();
    let metric = move |sample: &[&(&[usize], &[usize])]| match task {
        TaskKind::Multiclass => {
            sample.iter().filter(|(p, g)| p.first() == g.first()).count() as f64 / sample.len() as f64
        }
        TaskKind::Multilabel => {
            let mut counts = LabelCounts::default();
            for (p, g) in sample {
                counts.add(p, g, None);
            }
            counts.f1()
        }
    };
    bootstrap_ci(&items, metric, n_samples, DEFAULT_CONFIDENCE, seed)
}

pub fn cmd_eval(cfg: &EvalConfig) -> Result<Vec<LanguageScore>> {
    let model = PoolerModel::load(&cfg.model)?;
    let docs = read_manifest(&cfg.manifest)?;
    let eval_docs: Vec<&Document> = docs.iter().filter(|d| d.split == cfg.split).collect();
    if eval_docs.is_empty() {
        return Err(Error::Validation(format!("manifest has no {:?} documents", cfg.split)));
    }
    validate_task_labels(&eval_docs, model.task())?;
    let mut embeddings = load_embeddings(&cfg.embeddings)?;
    let used: Vec<Document> = eval_docs.iter().map(|d| (*d).clone()).collect();
    check_embeddings(&used, &embeddings)?;
    embeddings.retain(|id, _| used.iter().any(|d| &d.doc_id == id));
    let pca_path = sidecar(&cfg.model, ".pca.json");
    if pca_path.exists() {
        apply_pca(&PcaModel::load(&pca_path)?, &mut embeddings)?;
    }
    let tfidf = (model.mode() == PoolingMode::AttTfPert).then(|| tfidf_table(&docs, cfg.tf_variant));
    let labels = model.label_space();

    let mut by_lang: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for d in &eval_docs {
        by_lang.entry(d.lang.as_str()).or_default().push(d);
    }
    let metric = match model.task() {
        TaskKind::Multiclass => "accuracy",
        TaskKind::Multilabel => "micro-f1",
    };
    let mut scores = Vec::new();
    for (lang, group) in by_lang {
        let examples: Vec<Example> = build_examples(&group, &embeddings, &labels, tfidf.as_ref())?;
        let predicted = examples
            .par_iter()
            .map(|ex| predict(&model, ex))
            .collect::<Result<Vec<_>>>()?;
        let gold: Vec<Vec<usize>> = examples.iter().map(|e| e.labels.clone()).collect();
        let ci = evaluate_predictions(model.task(), &predicted, &gold, cfg.bootstrap_samples, cfg.seed)?;
        scores.push(LanguageScore {
            lang: lang.to_string(),
            metric: metric.to_string(),
            n_docs: examples.len(),
            value: ci.point,
            ci_low: ci.lower,
            ci_high: ci.upper,
            formatted: ci.to_string(),
        });
    }
    if let Some(out) = &cfg.out {
        write_json(out, &scores)?;
    }
    Ok(scores)
}

#[derive(Debug, Clone)]
pub struct AlignConfig {
    pub manifest: PathBuf,
    /// Composed document vectors (one row per document).
    pub embeddings: PathBuf,
    pub src_lang: String,
    pub tgt_lang: String,
    pub gold: Option<PathBuf>,
    pub topk: usize,
    pub backend: IndexBackend,
    pub bootstrap_samples: usize,
    pub seed: u64,
    /// Pairs TSV; metrics go to `<out>.metrics.json`.
    pub out: PathBuf,
}

fn doc_vectors(docs: &[Document], lang: &str, vectors: &BTreeMap<String, EmbeddingMatrix>) -> Result<Vec<DocVector>> {
    docs.iter()
        .filter(|d| d.lang == lang)
        .map(|d| {
            let m = vectors
                .get(&d.doc_id)
                .ok_or_else(|| Error::Validation(format!("missing document vector for {}", d.doc_id)))?;
            if m.count() != 1 {
                return Err(Error::Validation(format!(
                    "document {} has {} rows; alignment needs composed document vectors",
                    d.doc_id,
                    m.count()
                )));
            }
            Ok(DocVector {
                doc_id: d.doc_id.clone(),
                domain: d.domain_id.clone(),
                vector: m.row_f64(0),
            })
        })
        .collect()
}

pub fn cmd_align(cfg: &AlignConfig) -> Result<AlignmentMetrics> {
    let gold_path = cfg
        .gold
        .as_ref()
        .ok_or_else(|| Error::Validation("alignment needs a gold pairs file (--gold)".into()))?;
    let gold = read_gold_tsv(gold_path)?;
    let docs = read_manifest(&cfg.manifest)?;
    let vectors = load_embeddings(&cfg.embeddings)?;
    let src = doc_vectors(&docs, &cfg.src_lang, &vectors)?;
    let tgt = doc_vectors(&docs, &cfg.tgt_lang, &vectors)?;
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Validation(format!(
            "no documents for languages {} -> {}",
            cfg.src_lang, cfg.tgt_lang
        )));
    }
    let result = align_collections(&src, &tgt, cfg.topk, cfg.backend)?;
    write_pairs_tsv(&cfg.out, &result)?;
    let ci = recall_with_ci(&result, &gold, cfg.bootstrap_samples, cfg.seed)?;
    let metrics = AlignmentMetrics::from_ci(&ci, gold.len());
    write_json(&sidecar(&cfg.out, ".metrics.json"), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub lang: String,
    pub n_docs: usize,
    pub avg_len: f64,
    pub max_len: usize,
    pub avg_sentences: f64,
}

/// Document counts and tokenised lengths (subword units) per language, plus
/// an `all` row.
pub fn cmd_stats(manifest: &Path, out: Option<&Path>) -> Result<Vec<StatsRow>> {
    let docs = read_manifest(manifest)?;
    let mut by_lang: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for d in &docs {
        by_lang.entry(d.lang.as_str()).or_default().push(d);
    }
    let row = |lang: &str, group: &[&Document]| {
        let stats = collect_stats(group.iter().copied());
        StatsRow {
            lang: lang.to_string(),
            n_docs: stats.n_docs,
            avg_len: stats.avg_len,
            max_len: stats.max_len,
            avg_sentences: group.iter().map(|d| d.sentences.len()).sum::<usize>() as f64 / group.len().max(1) as f64,
        }
    };
    let mut rows: Vec<StatsRow> = by_lang.iter().map(|(lang, g)| row(lang, g)).collect();
    let all: Vec<&Document> = docs.iter().collect();
    rows.push(row("all", &all));
    if let Some(out) = out {
        write_json(out, &rows)?;
    }
    Ok(rows)
}

pub fn format_stats(rows: &[StatsRow]) -> String {
    let mut s = format!("{:<8} {:>8} {:>10} {:>8} {:>10}\n", "lang", "docs", "avg_len", "max_len", "avg_sents");
    for r in rows {
        s.push_str(&format!(
            "{:<8} {:>8} {:>10.1} {:>8} {:>10.1}\n",
            r.lang, r.n_docs, r.avg_len, r.max_len, r.avg_sentences
        ));
    }
    s
}
