//! Bilingual document alignment: top-K cosine retrieval, one-to-one
//! competitive linking within each web domain, and recall against gold pairs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_store::l2_normalize_in_place;
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_proportion, ConfidenceInterval};

pub const DEFAULT_TOPK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub score: f64,
}

/// Higher score first, then lexicographic doc id.
fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-K cosine retrieval over a fixed set of document vectors.
pub trait VectorIndex: Send + Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Up to `k` ids with the highest cosine to `query`, ties broken by id.
    fn topk(&self, query: &[f64], k: usize) -> Result<Vec<Candidate>>;
}

/// Unit-normalized vectors stored contiguously, ids in lexicographic order.
#[derive(Debug, Clone)]
struct NormalizedStore {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f64>,
}

impl NormalizedStore {
    fn build<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let mut entries: Vec<(&str, &[f64])> = vectors.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let dim = entries
            .first()
            .map(|e| e.1.len())
            .ok_or_else(|| Error::Validation("cannot index an empty collection".into()))?;
        if dim == 0 {
            return Err(Error::Validation("cannot index zero-dimensional vectors".into()));
        }
        let mut ids = Vec::with_capacity(entries.len());
        let mut flat = Vec::with_capacity(entries.len() * dim);
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if ids.last().is_some_and(|last: &String| last == id) {
                return Err(Error::Validation(format!("duplicate id {id} in index")));
            }
            ids.push(id.to_string());
            let start = flat.len();
            flat.extend_from_slice(v);
            l2_normalize_in_place(&mut flat[start..]);
        }
        Ok(NormalizedStore {
            dim,
            ids,
            vectors: flat,
        })
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn normalized_query(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut q = query.to_vec();
        l2_normalize_in_place(&mut q);
        Ok(q)
    }

    fn select(&self, scored: Vec<(usize, f64)>, k: usize) -> Vec<Candidate> {
        let mut scored = scored;
        let cmp = |a: &(usize, f64), b: &(usize, f64)| rank_order(a.1, &self.ids[a.0], b.1, &self.ids[b.0]);
        if k < scored.len() {
            scored.select_nth_unstable_by(k, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
            .into_iter()
            .map(|(i, score)| Candidate {
                doc_id: self.ids[i].clone(),
                score,
            })
            .collect()
    }
}

/// Exhaustive cosine search.
#[derive(Debug, Clone)]
pub struct ExactIndex {
    store: NormalizedStore,
}

impl ExactIndex {
    pub fn build<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        Ok(ExactIndex {
            store: NormalizedStore::build(vectors)?,
        })
    }
}

impl VectorIndex for ExactIndex {
    fn dim(&self) -> usize {
        self.store.dim
    }

    fn len(&self) -> usize {
        self.store.ids.len()
    }

    fn topk(&self, query: &[f64], k: usize) -> Result<Vec<Candidate>> {
        if k == 0 {
            return Err(Error::InvalidParameter("top-k needs k >= 1".into()));
        }
        let q = self.store.normalized_query(query)?;
        let scored = (0..self.len()).map(|i| (i, dot(&q, self.store.vector(i)))).collect();
        Ok(self.store.select(scored, k))
    }
}

pub fn build_index(vectors: &BTreeMap<String, Vec<f64>>) -> Result<ExactIndex> {
    ExactIndex::build(vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
}

pub fn topk(index: &dyn VectorIndex, query: &[f64], k: usize) -> Result<Vec<Candidate>> {
    index.topk(query, k)
}

/// Inverted-file index: vectors are bucketed by their nearest centroid
/// (spherical k-means) and a query scans only the `n_probe` closest buckets.
/// With `n_probe == n_lists` it is exhaustive and returns the same results as
/// [`ExactIndex`].
#[derive(Debug, Clone)]
pub struct PartitionedIndex {
    store: NormalizedStore,
    centroids: Vec<Vec<f64>>,
    lists: Vec<Vec<usize>>,
    n_probe: usize,
}

impl PartitionedIndex {
    pub fn build<'a, I>(vectors: I, n_lists: usize, n_probe: usize, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let store = NormalizedStore::build(vectors)?;
        let n = store.ids.len();
        if n_lists == 0 || n_probe == 0 {
            return Err(Error::InvalidParameter("n_lists and n_probe must be positive".into()));
        }
        let n_lists = n_lists.min(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut centroids: Vec<Vec<f64>> = order[..n_lists].iter().map(|&i| store.vector(i).to_vec()).collect();
        let mut assignment = vec![0usize; n];
        for _ in 0..8 {
            for (i, slot) in assignment.iter_mut().enumerate() {
                *slot = nearest_centroid(&centroids, store.vector(i));
            }
            let mut sums = vec![vec![0.0; store.dim]; n_lists];
            for (i, &c) in assignment.iter().enumerate() {
                sums[c].iter_mut().zip(store.vector(i)).for_each(|(s, v)| *s += v);
            }
            for (c, mut s) in sums.into_iter().enumerate() {
                if l2_normalize_in_place(&mut s) > 0.0 {
                    centroids[c] = s;
                }
            }
        }
        let mut lists = vec![Vec::new(); n_lists];
        for i in 0..n {
            lists[nearest_centroid(&centroids, store.vector(i))].push(i);
        }
        Ok(PartitionedIndex {
            store,
            centroids,
            lists,
            n_probe: n_probe.min(n_lists),
        })
    }

    pub fn n_lists(&self) -> usize {
        self.lists.len()
    }
}

fn nearest_centroid(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let s = dot(centroid, v);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

impl VectorIndex for PartitionedIndex {
    fn dim(&self) -> usize {
        self.store.dim
    }

    fn len(&self) -> usize {
        self.store.ids.len()
    }

    fn topk(&self, query: &[f64], k: usize) -> Result<Vec<Candidate>> {
        if k == 0 {
            return Err(Error::InvalidParameter("top-k needs k >= 1".into()));
        }
        let q = self.store.normalized_query(query)?;
        let mut ranked: Vec<(usize, f64)> = self.centroids.iter().map(|c| dot(c, &q)).enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let scored = ranked[..self.n_probe]
            .iter()
            .flat_map(|&(c, _)| self.lists[c].iter())
            .map(|&i| (i, dot(&q, self.store.vector(i))))
            .collect();
        Ok(self.store.select(scored, k))
    }
}

/// Which search backend to build per domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexBackend {
    #[default]
    Exact,
    Partitioned { n_lists: usize, n_probe: usize, seed: u64 },
}

impl IndexBackend {
    pub fn build<'a, I>(&self, vectors: I) -> Result<Box<dyn VectorIndex>>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        Ok(match *self {
            IndexBackend::Exact => Box::new(ExactIndex::build(vectors)?),
            IndexBackend::Partitioned { n_lists, n_probe, seed } => {
                Box::new(PartitionedIndex::build(vectors, n_lists, n_probe, seed)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub src: String,
    pub tgt: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

/// One-to-one pairs, grouped by domain (domains in sorted order, scores
/// descending within a domain).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub pairs: Vec<AlignedPair>,
}

impl AlignmentResult {
    pub fn by_domain(&self) -> BTreeMap<Option<&str>, Vec<&AlignedPair>> {
        let mut out: BTreeMap<Option<&str>, Vec<&AlignedPair>> = BTreeMap::new();
        for p in &self.pairs {
            out.entry(p.domain.as_deref()).or_default().push(p);
        }
        out
    }

    pub fn pair_set(&self) -> HashSet<(String, String)> {
        self.pairs.iter().map(|p| (p.src.clone(), p.tgt.clone())).collect()
    }
}

/// Candidate lists of every source document in one domain.
#[derive(Debug, Clone, Default)]
pub struct DomainCandidates {
    pub domain: Option<String>,
    pub candidates: Vec<(String, Vec<Candidate>)>,
}

/// Greedy competitive linking: all candidate edges sorted by score (ties by
/// source id, then target id) and accepted when neither side is taken yet.
pub fn competitive_linking(group: &DomainCandidates) -> Vec<AlignedPair> {
    let mut edges: Vec<(&str, &str, f64)> = group
        .candidates
        .iter()
        .flat_map(|(src, cands)| cands.iter().map(move |c| (src.as_str(), c.doc_id.as_str(), c.score)))
        .collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(b.0)).then_with(|| a.1.cmp(b.1)));
    let mut used_src = HashSet::new();
    let mut used_tgt = HashSet::new();
    let mut pairs = Vec::new();
    for (src, tgt, score) in edges {
        if used_src.contains(src) || used_tgt.contains(tgt) {
            continue;
        }
        used_src.insert(src);
        used_tgt.insert(tgt);
        pairs.push(AlignedPair {
            src: src.to_string(),
            tgt: tgt.to_string(),
            score,
            domain: group.domain.clone(),
        });
    }
    pairs
}

/// Runs competitive linking in every domain.
pub fn match_candidates(groups: &[DomainCandidates]) -> AlignmentResult {
    let mut sorted: Vec<&DomainCandidates> = groups.iter().collect();
    sorted.sort_by(|a, b| a.domain.cmp(&b.domain));
    let pairs = sorted.par_iter().map(|g| competitive_linking(g)).collect::<Vec<_>>();
    AlignmentResult {
        pairs: pairs.into_iter().flatten().collect(),
    }
}

/// A composed document vector and the web domain it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub doc_id: String,
    pub domain: Option<String>,
    pub vector: Vec<f64>,
}

/// Retrieves `k` candidates for every source document among the target
/// documents of its domain, then links them one-to-one.
pub fn align_collections(src: &[DocVector], tgt: &[DocVector], k: usize, backend: IndexBackend) -> Result<AlignmentResult> {
    let mut domains: BTreeMap<Option<&str>, (Vec<&DocVector>, Vec<&DocVector>)> = BTreeMap::new();
    for d in src {
        domains.entry(d.domain.as_deref()).or_default().0.push(d);
    }
    for d in tgt {
        domains.entry(d.domain.as_deref()).or_default().1.push(d);
    }
    let groups = domains
        .into_par_iter()
        .filter(|(_, (s, t))| !s.is_empty() && !t.is_empty())
        .map(|(domain, (s, t))| {
            let index = backend.build(t.iter().map(|d| (d.doc_id.as_str(), d.vector.as_slice())))?;
            let candidates = s
                .iter()
                .map(|d| Ok((d.doc_id.clone(), index.topk(&d.vector, k)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(DomainCandidates {
                domain: domain.map(str::to_string),
                candidates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(match_candidates(&groups))
}

pub type GoldPairs = HashSet<(String, String)>;

/// Per-gold-pair hit indicators in sorted gold order.
pub fn recall_outcomes(result: &AlignmentResult, gold: &GoldPairs) -> Vec<bool> {
    let predicted = result.pair_set();
    let mut sorted: Vec<&(String, String)> = gold.iter().collect();
    sorted.sort();
    sorted.into_iter().map(|g| predicted.contains(g)).collect()
}

pub fn recall(result: &AlignmentResult, gold: &GoldPairs) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Validation("gold alignment is empty".into()));
    }
    let hits = recall_outcomes(result, gold).into_iter().filter(|&h| h).count();
    Ok(hits as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub recall: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_gold: usize,
}

impl AlignmentMetrics {
    pub fn from_ci(ci: &ConfidenceInterval, n_gold: usize) -> Self {
        AlignmentMetrics {
            recall: ci.point,
            ci_low: ci.lower,
            ci_high: ci.upper,
            n_gold,
        }
    }
}

/// Recall with a bootstrap CI over gold pairs.
pub fn recall_with_ci(result: &AlignmentResult, gold: &GoldPairs, n_samples: usize, seed: u64) -> Result<ConfidenceInterval> {
    if gold.is_empty() {
        return Err(Error::Validation("gold alignment is empty".into()));
    }
    bootstrap_proportion(&recall_outcomes(result, gold), n_samples, crate::metrics::DEFAULT_CONFIDENCE, seed)
}

/// Reads `src \t tgt` lines.
pub fn read_gold_tsv(path: impl AsRef<Path>) -> Result<GoldPairs> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut gold = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(s), Some(t)) if !s.is_empty() && !t.is_empty() => {
                gold.insert((s.to_string(), t.to_string()));
            }
            _ => {
                return Err(Error::Validation(format!(
                    "{}:{}: expected `src<TAB>tgt`",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(gold)
}

/// Writes `src \t tgt \t score` lines.
pub fn write_pairs_tsv(path: impl AsRef<Path>, result: &AlignmentResult) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in &result.pairs {
        writeln!(w, "{}\t{}\t{:.6}", p.src, p.tgt, p.score).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
