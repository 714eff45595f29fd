//! Per-sentence weights and weighted pooling of sentence embeddings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_halves, CollectionStats, Document, Sentence};
use crate::embed_store::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TfVariant {
    /// Raw frequency.
    Tf2,
    /// Augmented frequency `0.4 + 0.6 * freq / max_freq`.
    #[default]
    Tf4,
}

/// How sentence TF-IDF averages are turned into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TfidfNormalization {
    /// Divide by the sum, weights form a probability vector.
    #[default]
    Sum,
    /// Divide by the largest score.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    Uniform,
    TopHalf,
    BottomHalf,
    TfIdf(TfVariant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub scheme_tag: String,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Word counts of one document, computed once and reused for every sentence.
#[derive(Debug, Clone)]
pub struct TermCounts<'a> {
    counts: HashMap<&'a str, usize>,
    max: usize,
}

impl<'a> TermCounts<'a> {
    pub fn new(doc: &'a Document) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in doc.words() {
            *counts.entry(w).or_default() += 1;
        }
        let max = counts.values().copied().max().unwrap_or(0);
        TermCounts { counts, max }
    }

    pub fn freq(&self, word: &str) -> usize {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn max_freq(&self) -> usize {
        self.max
    }

    pub fn tf(&self, word: &str, variant: TfVariant) -> f64 {
        let freq = self.freq(word) as f64;
        match variant {
            TfVariant::Tf2 => freq,
            TfVariant::Tf4 if self.max == 0 => 0.4,
            TfVariant::Tf4 => 0.4 + 0.6 * freq / self.max as f64,
        }
    }
}

pub fn tf2(word: &str, doc: &Document) -> f64 {
    TermCounts::new(doc).tf(word, TfVariant::Tf2)
}

pub fn tf4(word: &str, doc: &Document) -> f64 {
    TermCounts::new(doc).tf(word, TfVariant::Tf4)
}

/// `ln(1 + |D| / df(w))`, with unseen words treated as `df = 1`.
pub fn idf4(word: &str, stats: &CollectionStats) -> f64 {
    let df = stats.df(word).max(1) as f64;
    (1.0 + stats.n_docs as f64 / df).ln()
}

fn sentence_score(sentence: &Sentence, counts: &TermCounts<'_>, stats: &CollectionStats, variant: TfVariant) -> f64 {
    if sentence.words.is_empty() {
        return 0.0;
    }
    let sum: f64 = sentence
        .words
        .iter()
        .map(|w| counts.tf(w, variant) * idf4(w, stats))
        .sum();
    sum / sentence.words.len() as f64
}

/// Mean of `tf(w, doc) * idf4(w)` over the word tokens of `sentence`
/// (repeated words count once per occurrence). Zero for a sentence without words.
pub fn sentence_tfidf(sentence: &Sentence, doc: &Document, stats: &CollectionStats, variant: TfVariant) -> f64 {
    sentence_score(sentence, &TermCounts::new(doc), stats, variant)
}

/// [`sentence_tfidf`] for every sentence of `doc`.
pub fn sentence_tfidf_scores(doc: &Document, stats: &CollectionStats, variant: TfVariant) -> Vec<f64> {
    let counts = TermCounts::new(doc);
    doc.sentences
        .iter()
        .map(|s| sentence_score(s, &counts, stats, variant))
        .collect()
}

fn uniform(n: usize, tag: &str) -> WeightVector {
    WeightVector {
        weights: vec![1.0 / n as f64; n],
        scheme_tag: tag.to_string(),
    }
}

/// Turns raw scores into weights. All-zero scores fall back to uniform.
pub fn normalize_scores(scores: &[f64], normalization: TfidfNormalization, tag: &str) -> WeightVector {
    let denom = match normalization {
        TfidfNormalization::Sum => scores.iter().sum::<f64>(),
        TfidfNormalization::Max => scores.iter().copied().fold(0.0, f64::max),
    };
    if denom <= 0.0 {
        return uniform(scores.len(), tag);
    }
    WeightVector {
        weights: scores.iter().map(|s| s / denom).collect(),
        scheme_tag: tag.to_string(),
    }
}

pub fn make_weights(doc: &Document, scheme: WeightScheme, stats: Option<&CollectionStats>) -> Result<WeightVector> {
    make_weights_with(doc, scheme, stats, TfidfNormalization::Sum)
}

pub fn make_weights_with(
    doc: &Document,
    scheme: WeightScheme,
    stats: Option<&CollectionStats>,
    normalization: TfidfNormalization,
) -> Result<WeightVector> {
    let n = doc.sentences.len();
    if n == 0 {
        return Err(Error::Validation(format!("document {} has no sentences", doc.doc_id)));
    }
    let half = |take_top: bool, tag: &str| {
        let (top, bottom) = split_halves(n);
        let part = if take_top { top } else { bottom };
        let mut weights = vec![0.0; n];
        let share = 1.0 / part.len().max(1) as f64;
        for i in part {
            weights[i] = share;
        }
        WeightVector {
            weights,
            scheme_tag: tag.to_string(),
        }
    };
    Ok(match scheme {
        WeightScheme::Uniform => uniform(n, "uniform"),
        WeightScheme::TopHalf => half(true, "top-half"),
        WeightScheme::BottomHalf => half(false, "bottom-half"),
        WeightScheme::TfIdf(variant) => {
            let stats = stats.ok_or_else(|| {
                Error::InvalidParameter("TF-IDF weighting needs collection statistics".into())
            })?;
            let tag = match variant {
                TfVariant::Tf2 => "tf2-idf4",
                TfVariant::Tf4 => "tf4-idf4",
            };
            normalize_scores(&sentence_tfidf_scores(doc, stats, variant), normalization, tag)
        }
    })
}

/// `sum_n w[n] * embs[n]`, accumulated in f64.
pub fn pool_weighted(embs: &EmbeddingMatrix, w: &WeightVector) -> Result<Vec<f64>> {
    if embs.count() != w.len() {
        return Err(Error::LengthMismatch {
            expected: embs.count(),
            actual: w.len(),
        });
    }
    let mut out = vec![0.0f64; embs.dim()];
    for (row, &wn) in embs.rows().zip(&w.weights) {
        if wn == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(row) {
            *o += wn * x as f64;
        }
    }
    Ok(out)
}
