//! Seeded synthetic corpora for examples, tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::align::{DocVector, GoldPairs};
use crate::corpus::{Document, Sentence, Split};
use crate::embed_store::{l2_normalize, EmbeddingMatrix};
use crate::learner::Example;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    l2_normalize(&gaussian_vector(rng, dim))
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, dim: usize) -> EmbeddingMatrix {
    let rows: Vec<Vec<f64>> = (0..rows).map(|_| gaussian_vector(rng, dim)).collect();
    EmbeddingMatrix::from_rows(&rows).expect("finite gaussian rows")
}

/// Sentences scattered around `centre` with isotropic noise of scale `noise`.
pub fn noisy_sentences(rng: &mut impl Rng, centre: &[f64], n: usize, noise: f64) -> EmbeddingMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            centre
                .iter()
                .map(|c| c + noise * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).expect("finite rows")
}

/// Multiclass examples: each class has a random unit prototype and every
/// sentence of a document is its class prototype plus noise.
/// Classes are balanced and the examples are shuffled.
pub fn separable_examples(
    rng: &mut impl Rng,
    prototypes: &[Vec<f64>],
    per_class: usize,
    sentences: std::ops::RangeInclusive<usize>,
    noise: f64,
) -> Vec<Example> {
    let mut out = Vec::with_capacity(prototypes.len() * per_class);
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..per_class {
            let n = rng.gen_range(sentences.clone());
            out.push(Example {
                embeddings: noisy_sentences(rng, proto, n, noise),
                tfidf: Some((0..n).map(|_| rng.gen_range(0.1..1.0)).collect()),
                labels: vec![c],
            });
        }
    }
    out.shuffle(rng);
    out
}

/// Multilabel examples: every document carries one or two of the `dominant`
/// codes and, with probability `tail_rate`, one code from the tail
/// (`dominant..prototypes.len()`). Sentences are drawn from the prototypes of
/// the document's codes.
pub fn multilabel_examples(
    rng: &mut impl Rng,
    prototypes: &[Vec<f64>],
    dominant: usize,
    count: usize,
    tail_rate: f64,
    noise: f64,
) -> Vec<Example> {
    (0..count)
        .map(|_| {
            let mut labels = vec![rng.gen_range(0..dominant)];
            if rng.gen_bool(0.5) {
                let second = rng.gen_range(0..dominant);
                if second != labels[0] {
                    labels.push(second);
                }
            }
            if dominant < prototypes.len() && rng.gen_bool(tail_rate) {
                labels.push(rng.gen_range(dominant..prototypes.len()));
            }
            labels.sort_unstable();
            let per_label = 3;
            let mut rows = Vec::new();
            for &l in &labels {
                let m = noisy_sentences(rng, &prototypes[l], per_label, noise);
                rows.extend(m.rows().map(|r| r.iter().map(|&v| v as f64).collect::<Vec<f64>>()));
            }
            rows.shuffle(rng);
            let n = rows.len();
            Example {
                embeddings: EmbeddingMatrix::from_rows(&rows).expect("finite rows"),
                tfidf: Some(vec![1.0; n]),
                labels,
            }
        })
        .collect()
}

/// Synthetic aligned collections.
#[derive(Debug, Clone)]
pub struct ParallelCollections {
    pub src: Vec<DocVector>,
    pub tgt: Vec<DocVector>,
    pub gold: GoldPairs,
}

/// `n_pairs` source/target document pairs spread round-robin over
/// `n_domains` domains. Each target vector is its unit source vector plus
/// `sigma` times a standard-normal draw per component; equal seeds give the
/// same draw for every `sigma`.
pub fn parallel_collections(seed: u64, n_pairs: usize, n_domains: usize, dim: usize, sigma: f64) -> ParallelCollections {
    let mut rng = rng(seed);
    let mut src = Vec::with_capacity(n_pairs);
    let mut tgt = Vec::with_capacity(n_pairs);
    let mut gold = GoldPairs::new();
    for i in 0..n_pairs {
        let domain = format!("d{:03}", i % n_domains.max(1));
        let base = unit_vector(&mut rng, dim);
        let noise = gaussian_vector(&mut rng, dim);
        let shifted: Vec<f64> = base.iter().zip(&noise).map(|(b, e)| b + sigma * e).collect();
        let (s, t) = (format!("src-{i:05}"), format!("tgt-{i:05}"));
        gold.insert((s.clone(), t.clone()));
        src.push(DocVector {
            doc_id: s,
            domain: Some(domain.clone()),
            vector: base,
        });
        tgt.push(DocVector {
            doc_id: t,
            domain: Some(domain),
            vector: shifted,
        });
    }
    ParallelCollections { src, tgt, gold }
}

const VOCAB: &[&str] = &[
    "patient", "report", "market", "river", "engine", "garden", "court", "signal", "budget", "harbor", "winter",
    "museum", "protein", "voltage", "ledger", "glacier", "senate", "orchard", "cipher", "tariff",
];

/// A manifest-ready document with `n` sentences of pseudo-random words.
/// Each sentence gets one subword per word.
pub fn random_document(rng: &mut impl Rng, doc_id: &str, lang: &str, n: usize, split: Split) -> Document {
    let sentences = (0..n)
        .map(|_| {
            let len = rng.gen_range(3..9);
            let words: Vec<&str> = (0..len).map(|_| *VOCAB.choose(rng).expect("non-empty vocab")).collect();
            Sentence::new(words.join(" ")).with_subwords(len)
        })
        .collect();
    let mut doc = Document::new(doc_id, lang, sentences);
    doc.split = split;
    doc
}
