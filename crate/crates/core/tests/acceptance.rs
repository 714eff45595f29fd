//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Every numeric check compares the library against an oracle written here
//! from the formulas, not against the library's own helpers.
//!
//!     cargo test --release -p docpool --test acceptance

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use docpool::align::{align_collections, recall, AlignmentResult, ExactIndex, IndexBackend, VectorIndex};
use docpool::commands::{cmd_compose, ComposeConfig, ComposeOutcome, Strategy};
use docpool::corpus::{collect_stats, write_manifest, CollectionStats, Document, Split};
use docpool::embed_store::{l2_normalize, load_embeddings, pca_fit, store_embeddings, EmbeddingMatrix, PcaModel, DEFAULT_PCA_DIM};
use docpool::learner::{
    att_pert_pool, evaluate, grad_check, predict, train, Example, PoolerModel, PoolingMode, TaskKind, TrainConfig,
};
use docpool::metrics::{bootstrap_proportion, micro_f1};
use docpool::pert::{tf_pert, tk_pert, BoilerplateWeights, PertWindow, PertWindowBank};
use docpool::synthetic::{
    gaussian_matrix, gaussian_vector, multilabel_examples, noisy_sentences, parallel_collections, random_document, rng,
    separable_examples, unit_vector,
};
use docpool::weighting::{idf4, sentence_tfidf, tf4, TfVariant};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn lib<T>(r: docpool::Result<T>) -> Result<T, String> {
    r.map_err(|e| format!("library error: {e}"))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- formulas

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu", "nu", "xi",
    "omicron", "pi", "rho", "sigma", "tau", "upsilon",
];

fn random_text(r: &mut impl Rng, len: usize) -> String {
    if len == 0 {
        return "... !!".to_string();
    }
    (0..len).map(|_| *WORDS[..r.gen_range(3..WORDS.len())].choose(r).unwrap()).collect::<Vec<_>>().join(" ")
}

fn random_collection(r: &mut impl Rng, n_docs: usize) -> Vec<Document> {
    (0..n_docs)
        .map(|i| {
            let texts: Vec<String> = (0..r.gen_range(1..8)).map(|_| {
                    let len = r.gen_range(0..12);
                    random_text(r, len)
                })
                .collect();
            Document::from_texts(format!("d{i}"), "en", &texts)
        })
        .collect()
}

fn oracle_sentence_tfidf(sentence: usize, doc: &Document, collection: &[Document]) -> f64 {
    let words = &doc.sentences[sentence].words;
    if words.is_empty() {
        return 0.0;
    }
    let doc_words: Vec<&String> = doc.sentences.iter().flat_map(|s| &s.words).collect();
    let freq = |w: &str| doc_words.iter().filter(|x| x.as_str() == w).count() as f64;
    let max_freq = doc_words.iter().map(|w| freq(w)).fold(0.0, f64::max);
    let mut total = 0.0;
    for w in words {
        let tf = 0.4 + 0.6 * freq(w) / max_freq;
        let df = collection
            .iter()
            .filter(|d| d.sentences.iter().any(|s| s.words.iter().any(|x| x == w)))
            .count() as f64;
        let idf = (1.0 + collection.len() as f64 / df).ln();
        total += tf * idf;
    }
    total / words.len() as f64
}

fn formula_suite() -> Outcome {
    let mut r = rng(101);
    let mut tf_cases = 0;
    while tf_cases < 1000 {
        let doc = &random_collection(&mut r, 1)[0];
        let probe = WORDS.choose(&mut r).unwrap();
        let v = tf4(probe, doc);
        ensure!((0.4..=1.0).contains(&v), "tf4({probe}) = {v} outside [0.4, 1]");
        tf_cases += 1;
    }

    let everywhere: Vec<Document> = (0..7).map(|i| Document::from_texts(format!("e{i}"), "en", &["common word", "x"])).collect();
    let stats = collect_stats(&everywhere);
    let idf = idf4("common", &stats);
    ensure!(idf == std::f64::consts::LN_2, "idf4 at df = |D| is {idf:e}, not ln 2");

    let collection = random_collection(&mut r, 100);
    let stats: CollectionStats = collect_stats(&collection);
    let mut worst: f64 = 0.0;
    let mut sentences = 0;
    for doc in &collection {
        for (i, s) in doc.sentences.iter().enumerate() {
            let got = sentence_tfidf(s, doc, &stats, TfVariant::Tf4);
            let want = oracle_sentence_tfidf(i, doc, &collection);
            worst = worst.max((got - want).abs());
            sentences += 1;
        }
    }
    ensure!(worst <= 1e-12, "sentence TF-IDF differs from oracle by {worst:e}");
    Ok(format!("{tf_cases} tf4 cases, idf4 = ln 2, {sentences} sentences max err {worst:.1e}"))
}

// ---------------------------------------------------------------- PERT

/// Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn oracle_pdf(x: f64, a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    if x <= a || x >= c {
        return 0.0;
    }
    let alpha = 1.0 + gamma * (b - a) / (c - a);
    let beta = 1.0 + gamma * (c - b) / (c - a);
    let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
    ((alpha - 1.0) * (x - a).ln() + (beta - 1.0) * (c - x).ln() - ln_b - (alpha + beta - 1.0) * (c - a).ln()).exp()
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// Explicit double loop over parts and sentences with the window read at the
/// nearest cache grid point.
fn oracle_pert(embs: &EmbeddingMatrix, parts: usize, gamma: f64, resolution: usize, weight: &[f64]) -> Vec<f64> {
    let n = embs.count();
    let d = embs.dim();
    let width = 1.0 / parts as f64;
    let mut out = Vec::with_capacity(parts * d);
    for j in 0..parts {
        let mode = (j as f64 + 0.5) * width;
        let p: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                let r = (x * (resolution - 1) as f64).round();
                oracle_pdf(r / (resolution - 1) as f64, mode - width, mode, mode + width, gamma)
            })
            .collect();
        let total: f64 = p.iter().sum();
        let mut part = vec![0.0; d];
        for i in 0..n {
            let w = if total > 0.0 { p[i] / total } else { 0.0 } * weight[i];
            for (k, v) in part.iter_mut().enumerate() {
                *v += w * embs.row(i)[k] as f64;
            }
        }
        let len = norm(&part);
        for v in &mut part {
            if len > 1e-12 {
                *v /= len;
            }
            *v /= (parts as f64).sqrt();
        }
        out.extend(part);
    }
    out
}

fn pert_suite() -> Outcome {
    let shapes = [(0.0, 0.5, 1.0, 4.0), (-0.1, 0.2, 0.9, 20.0), (0.3, 0.35, 0.6, 20.0), (0.0, 0.9, 1.0, 6.5)];
    let mut worst_int: f64 = 0.0;
    for (a, b, c, g) in shapes {
        let w = lib(PertWindow::new(a, b, c, g))?;
        let area = trapezoid(|x| w.pdf(x), a, c, 100_000);
        worst_int = worst_int.max((area - 1.0).abs());
        let oracle_gap = (0..=50)
            .map(|i| a + (c - a) * i as f64 / 50.0)
            .map(|x| (w.pdf(x) - oracle_pdf(x, a, b, c, g)).abs())
            .fold(0.0, f64::max);
        ensure!(oracle_gap < 1e-9, "pdf differs from closed form by {oracle_gap:e} for {:?}", (a, b, c, g));
    }
    let bank = lib(PertWindowBank::new(16, 20.0, 1024))?;
    for j in 0..16 {
        let w = bank.window(j);
        let area = trapezoid(|x| w.pdf(x), w.min, w.max, 100_000);
        worst_int = worst_int.max((area - 1.0).abs());
    }
    ensure!(worst_int <= 1e-6, "pdf integrates to 1 +- {worst_int:e}");

    let mut worst_sym: f64 = 0.0;
    for j in 1..15 {
        let w = bank.window(j);
        for i in 0..200 {
            let t = (w.max - w.mode) * i as f64 / 200.0;
            worst_sym = worst_sym.max((w.pdf(w.mode - t) - w.pdf(w.mode + t)).abs());
        }
    }
    ensure!(worst_sym <= 1e-9, "interior window asymmetry {worst_sym:e}");

    let again = lib(PertWindowBank::new(16, 20.0, 1024))?;
    for j in 0..16 {
        let same = bank.cached(j).iter().zip(again.cached(j)).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure!(same, "window {j} cache differs between builds");
    }

    let mut r = rng(202);
    let mut worst_tk: f64 = 0.0;
    let mut worst_tf: f64 = 0.0;
    for _ in 0..50 {
        let n = r.gen_range(1..=50);
        let d = r.gen_range(1..=32);
        let parts = *[1usize, 2, 4, 16].choose(&mut r).unwrap();
        let bank = lib(PertWindowBank::new(parts, 20.0, 1024))?;
        let embs = gaussian_matrix(&mut r, n, d);
        let bp: Vec<f64> = (0..n).map(|_| 1.0 / r.gen_range(1..4) as f64).collect();
        let tfidf: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..3.0)).collect();
        let tk = lib(tk_pert(&embs, &bank, &BoilerplateWeights(bp.clone())))?;
        worst_tk = worst_tk.max(max_abs_diff(&tk, &oracle_pert(&embs, parts, 20.0, 1024, &bp)));
        let combined: Vec<f64> = bp.iter().zip(&tfidf).map(|(b, t)| b * t).collect();
        let tf = lib(tf_pert(&embs, &bank, &BoilerplateWeights(bp), &tfidf))?;
        worst_tf = worst_tf.max(max_abs_diff(&tf, &oracle_pert(&embs, parts, 20.0, 1024, &combined)));
    }
    ensure!(worst_tk <= 1e-10 && worst_tf <= 1e-10, "TK-PERT err {worst_tk:e}, TF-PERT err {worst_tf:e}");
    Ok(format!(
        "integral err {worst_int:.1e}, symmetry err {worst_sym:.1e}, bank bit-identical, tk err {worst_tk:.1e}, tf err {worst_tf:.1e}"
    ))
}

// ---------------------------------------------------------------- equivalences

fn equivalence_suite() -> Outcome {
    let mut r = rng(303);
    let mut worst_tf_tk: f64 = 0.0;
    let mut worst_att: f64 = 0.0;
    let mut max_tk_cos: f64 = f64::MIN;
    let mut worst_avg: f64 = 0.0;
    for _ in 0..50 {
        let n = r.gen_range(4..=40);
        let d = r.gen_range(2..=24);
        let parts = *[2usize, 4, 16].choose(&mut r).unwrap();
        let bank = lib(PertWindowBank::new(parts, 20.0, 1024))?;
        let embs = gaussian_matrix(&mut r, n, d);
        let ones = BoilerplateWeights::ones(n);

        let tk = lib(tk_pert(&embs, &bank, &ones))?;
        let c = r.gen_range(0.1..5.0);
        let tf = lib(tf_pert(&embs, &bank, &ones, &vec![c; n]))?;
        for (a, b) in tk.chunks(d).zip(tf.chunks(d)) {
            if norm(a) > 0.0 {
                worst_tf_tk = worst_tf_tk.max((cosine(a, b) - 1.0).abs());
            }
        }
        worst_tf_tk = worst_tf_tk.max(max_abs_diff(&tk, &tf));

        for mode in [PoolingMode::AttPert, PoolingMode::AttTfPert] {
            let model = lib(PoolerModel::zeros(d, bank.clone(), 10, 3, mode, TaskKind::Multiclass))?;
            let tfidf = vec![1.0; n];
            let att = lib(att_pert_pool(&model, &embs, Some(&tfidf)))?;
            worst_att = worst_att.max(max_abs_diff(&att, &tk));
        }

        let mut order: Vec<usize> = (0..n).collect();
        while order.iter().enumerate().all(|(i, &o)| i == o) || order.iter().enumerate().all(|(i, &o)| o == n - 1 - i) {
            order.shuffle(&mut r);
        }
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| embs.row_f64(i)).collect();
        let permuted = lib(EmbeddingMatrix::from_rows(&rows))?;
        let tk_perm = lib(tk_pert(&permuted, &bank, &ones))?;
        max_tk_cos = max_tk_cos.max(cosine(&tk, &tk_perm));
        let avg = |m: &EmbeddingMatrix| -> Vec<f64> {
            (0..d).map(|k| m.rows().map(|row| row[k] as f64).sum::<f64>() / n as f64).collect()
        };
        worst_avg = worst_avg.max((cosine(&avg(&embs), &avg(&permuted)) - 1.0).abs());
    }
    ensure!(worst_tf_tk <= 1e-12, "constant-TF-IDF TF-PERT differs from TK-PERT by {worst_tf_tk:e}");
    ensure!(worst_att <= 1e-12, "zero-query attention pooling differs from TK-PERT by {worst_att:e}");
    ensure!(max_tk_cos < 1.0 - 1e-6, "a permutation left TK-PERT unchanged (cosine {max_tk_cos})");
    ensure!(worst_avg <= 1e-12, "permutation changed the sentence average (cosine off by {worst_avg:e})");
    Ok(format!(
        "tf/tk {worst_tf_tk:.1e}, att/tk {worst_att:.1e}, max permuted TK cosine {max_tk_cos:.6}, average cosine err {worst_avg:.1e}"
    ))
}

// ---------------------------------------------------------------- gradients

fn gradient_check() -> Outcome {
    let bank = lib(PertWindowBank::new(2, 20.0, 1024))?;
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for seed in 0..20 {
        for mode in [PoolingMode::AttPert, PoolingMode::AttTfPert] {
            for task in [TaskKind::Multiclass, TaskKind::Multilabel] {
                let mut r = rng(seed);
                let mut model = lib(PoolerModel::initialized(8, bank.clone(), 10, 3, mode, task, &mut r))?;
                let params = model.params_mut();
                for p in params.iter_mut() {
                    *p += 0.3 * r.gen_range(-1.0..1.0);
                }
                let labels = match task {
                    TaskKind::Multiclass => vec![r.gen_range(0..3)],
                    TaskKind::Multilabel => (0..3).filter(|_| r.gen_bool(0.5)).collect(),
                };
                let example = Example {
                    embeddings: gaussian_matrix(&mut r, 5, 8),
                    tfidf: Some((0..5).map(|_| r.gen_range(0.05..2.0)).collect()),
                    labels,
                };
                let report = lib(grad_check(&model, &example, 1e-5))?;
                worst = worst.max(report.max_rel_error);
                checks += 1;
            }
        }
    }
    ensure!(worst < 1e-4, "max relative gradient error {worst:e}");
    Ok(format!("{checks} model/loss/seed combinations, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- alignment

fn oracle_topk(query: &[f64], targets: &[(&str, &[f64])], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = targets.iter().map(|(id, v)| (id.to_string(), cosine(query, v))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn oracle_alignment(data: &docpool::synthetic::ParallelCollections, k: usize) -> HashSet<(String, String)> {
    let mut pairs = HashSet::new();
    let domains: BTreeMap<&str, ()> = data.src.iter().map(|d| (d.domain.as_deref().unwrap(), ())).collect();
    for domain in domains.keys() {
        let targets: Vec<(&str, &[f64])> = data
            .tgt
            .iter()
            .filter(|t| t.domain.as_deref() == Some(domain))
            .map(|t| (t.doc_id.as_str(), t.vector.as_slice()))
            .collect();
        let mut edges = Vec::new();
        for s in data.src.iter().filter(|s| s.domain.as_deref() == Some(domain)) {
            for (t, score) in oracle_topk(&s.vector, &targets, k) {
                edges.push((score, s.doc_id.clone(), t));
            }
        }
        edges.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
        let (mut used_s, mut used_t) = (HashSet::new(), HashSet::new());
        for (_, s, t) in edges {
            if !used_s.contains(&s) && !used_t.contains(&t) {
                used_s.insert(s.clone());
                used_t.insert(t.clone());
                pairs.insert((s, t));
            }
        }
    }
    pairs
}

fn alignment_oracle() -> Outcome {
    let k = 32;
    let mut recalls = Vec::new();
    for sigma in [0.0, 0.1, 0.5, 1.0] {
        let data = parallel_collections(404, 1000, 10, 32, sigma);
        let result: AlignmentResult = lib(align_collections(&data.src, &data.tgt, k, IndexBackend::Exact))?;
        let got = lib(recall(&result, &data.gold))?;
        let oracle_pairs = oracle_alignment(&data, k);
        let want = data.gold.iter().filter(|g| oracle_pairs.contains(*g)).count() as f64 / data.gold.len() as f64;
        ensure!(got == want, "sigma {sigma}: recall {got} but oracle recall {want}");
        recalls.push(got);

        if sigma == 0.5 {
            let domain0: Vec<_> = data.tgt.iter().filter(|t| t.domain.as_deref() == Some("d000")).collect();
            let index = lib(ExactIndex::build(domain0.iter().map(|t| (t.doc_id.as_str(), t.vector.as_slice()))))?;
            let targets: Vec<(&str, &[f64])> = domain0.iter().map(|t| (t.doc_id.as_str(), t.vector.as_slice())).collect();
            for s in data.src.iter().filter(|s| s.domain.as_deref() == Some("d000")) {
                let got = lib(index.topk(&s.vector, k))?;
                let want = oracle_topk(&s.vector, &targets, k);
                ensure!(got.len() == want.len(), "candidate list length {} vs {}", got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    ensure!(g.doc_id == w.0 && (g.score - w.1).abs() < 1e-12, "candidate list of {} differs", s.doc_id);
                }
            }
        }
    }
    ensure!(recalls[0] == 1.0, "recall at sigma 0 is {}", recalls[0]);
    ensure!(recalls.windows(2).all(|w| w[1] <= w[0]), "recall increases with noise: {recalls:?}");
    Ok(format!("recall over sigma 0/0.1/0.5/1.0 = {recalls:.3?}, equal to oracle, K=32 lists identical"))
}

// ---------------------------------------------------------------- bootstrap

fn bootstrap_suite() -> Outcome {
    let mut details = Vec::new();
    for (i, p) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let mut r = rng(500 + i as u64);
        let items: Vec<bool> = (0..500).map(|_| r.gen_bool(p)).collect();
        let ci = lib(bootstrap_proportion(&items, 1000, 0.95, 7))?;
        let again = lib(bootstrap_proportion(&items, 1000, 0.95, 7))?;
        ensure!(ci == again, "p = {p}: same seed gave different intervals");
        let p_hat = items.iter().filter(|&&b| b).count() as f64 / items.len() as f64;
        let closed = 2.0 * 1.96 * (p_hat * (1.0 - p_hat) / items.len() as f64).sqrt();
        let rel = (ci.width() - closed).abs() / closed;
        ensure!(rel <= 0.2, "p = {p}: width {:.4} vs closed form {closed:.4}", ci.width());
        details.push(format!("p={p}: {:.4} vs {closed:.4}", ci.width()));
    }
    Ok(details.join(", "))
}

// ---------------------------------------------------------------- learning

fn learning_sanity() -> Outcome {
    let mut r = rng(606);
    let dim = 32;
    let prototypes: Vec<Vec<f64>> = (0..4).map(|_| unit_vector(&mut r, dim)).collect();
    let train_set = separable_examples(&mut r, &prototypes, 50, 3..=20, 0.4);
    let dev_set = separable_examples(&mut r, &prototypes, 25, 3..=20, 0.4);
    let bank = PertWindowBank::default();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        epochs: 50,
        ..TrainConfig::default()
    };
    let out = lib(train(&train_set, &dev_set, 4, &cfg, PoolingMode::AttPert, TaskKind::Multiclass, &bank))?;
    let train_acc = lib(evaluate(&out.model, &train_set))?;
    let dev_acc = lib(evaluate(&out.model, &dev_set))?;
    ensure!(train_acc >= 0.99 && dev_acc >= 0.95, "train accuracy {train_acc}, dev accuracy {dev_acc}");

    let dominant = 4;
    let codes: Vec<Vec<f64>> = (0..16).map(|_| unit_vector(&mut r, dim)).collect();
    let ml_train = multilabel_examples(&mut r, &codes, dominant, 400, 0.3, 0.3);
    let ml_dev = multilabel_examples(&mut r, &codes, dominant, 150, 0.3, 0.3);
    let out_ml = lib(train(&ml_train, &ml_dev, codes.len(), &cfg, PoolingMode::AttTfPert, TaskKind::Multilabel, &bank))?;
    let predicted: Vec<Vec<usize>> = ml_dev.iter().map(|ex| predict(&out_ml.model, ex)).collect::<docpool::Result<_>>().map_err(|e| e.to_string())?;
    let gold: Vec<Vec<usize>> = ml_dev.iter().map(|ex| ex.labels.clone()).collect();
    let restrict: HashSet<usize> = (0..dominant).collect();
    let f1 = lib(micro_f1(&predicted, &gold, Some(&restrict)))?;
    ensure!(f1 >= 0.9, "micro-F1 on dominant codes {f1}");
    Ok(format!(
        "4-class train {train_acc:.3} dev {dev_acc:.3} (best epoch {}); multilabel dominant-code micro-F1 {f1:.3}",
        out.best_epoch
    ))
}

// ---------------------------------------------------------------- PCA

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix; returns
/// eigenvalues and column eigenvectors.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off <= 1e-26 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn oracle_pca(pool: &EmbeddingMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, d) = (pool.count(), pool.dim());
    let mean: Vec<f64> = (0..d).map(|k| pool.rows().map(|r| r[k] as f64).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in pool.rows() {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (row[i] as f64 - mean[i]) * (row[j] as f64 - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|c| *c /= (n - 1) as f64);
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = order.iter().map(|&i| (0..d).map(|k| vectors[k][i]).collect()).collect();
    (sorted_values, sorted_vectors)
}

fn anisotropic_pool(r: &mut impl Rng, n: usize, d: usize) -> EmbeddingMatrix {
    let scales: Vec<f64> = (0..d).map(|k| 3.0 / (1.0 + k as f64)).collect();
    let mix: Vec<Vec<f64>> = (0..d).map(|_| unit_vector(r, d)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z = gaussian_vector(r, d);
            (0..d).map(|c| (0..d).map(|k| scales[k] * z[k] * mix[k][c]).sum::<f64>() + 0.5).collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

fn pca_suite() -> Outcome {
    let mut r = rng(707);
    let pool = anisotropic_pool(&mut r, 400, 24);
    let k = 10;
    let model: PcaModel = lib(pca_fit(&pool, k))?;
    let (values, vectors) = oracle_pca(&pool);
    let var_err = model.explained_variance.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(var_err <= 1e-6, "explained variance differs from oracle by {var_err:e}");
    let mut worst_dir: f64 = 0.0;
    for (i, want) in vectors.iter().take(k).enumerate() {
        worst_dir = worst_dir.max(1.0 - dot(model.component(i), &l2_normalize(want)).abs());
    }
    ensure!(worst_dir <= 1e-9, "principal directions differ from oracle (1 - |cos| = {worst_dir:e})");

    // default-size reduction through the compose pipeline
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dim = DEFAULT_PCA_DIM + 32;
    let mut docs = Vec::new();
    let mut embs = BTreeMap::new();
    for i in 0..60 {
        let split = if i < 45 { Split::Train } else { Split::Test };
        let d = random_document(&mut r, &format!("doc{i:02}"), "en", 4, split);
        let centre = gaussian_vector(&mut r, dim);
        embs.insert(d.doc_id.clone(), noisy_sentences(&mut r, &centre, 4, 1.0));
        docs.push(d);
    }
    let manifest = dir.path().join("m.jsonl");
    let sentences = dir.path().join("s.semb");
    lib(write_manifest(&manifest, &docs))?;
    lib(store_embeddings(&embs, &sentences))?;
    let out = dir.path().join("tk.semb");
    let mut cfg = ComposeConfig::new(&manifest, &sentences, Strategy::TkPert, &out);
    cfg.pca_dim = DEFAULT_PCA_DIM;
    let outcome = lib(cmd_compose(&cfg))?;
    let want = ComposeOutcome::Vectors { path: out.clone(), count: 60, dim: 16 * DEFAULT_PCA_DIM };
    ensure!(outcome == want, "compose with PCA produced {outcome:?}");
    let saved = lib(PcaModel::load(dir.path().join("tk.semb.pca.json")))?;
    ensure!(saved.k == DEFAULT_PCA_DIM && saved.d == dim, "saved PCA model is {}x{}", saved.k, saved.d);
    let train_pool = lib(EmbeddingMatrix::vstack(docs.iter().filter(|d| d.split == Split::Train).map(|d| &embs[&d.doc_id])))?;
    let (train_values, _) = oracle_pca(&train_pool);
    let err_128 = saved.explained_variance.iter().zip(&train_values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err_128 <= 1e-6, "128-dim explained variance differs from oracle by {err_128:e}");
    ensure!(lib(load_embeddings(&out))?.values().all(|m| m.dim() == 16 * DEFAULT_PCA_DIM), "wrong stored dim");
    Ok(format!(
        "explained variance err {var_err:.1e}, direction err {worst_dir:.1e}; {dim}->{DEFAULT_PCA_DIM} compose path err {err_128:.1e}"
    ))
}

// ---------------------------------------------------------------- runner

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "formula suite", budget: Some(Duration::from_secs(1)), run: formula_suite },
    Criterion { name: "PERT suite", budget: Some(Duration::from_secs(5)), run: pert_suite },
    Criterion { name: "equivalence suite", budget: None, run: equivalence_suite },
    Criterion { name: "gradient check", budget: Some(Duration::from_secs(30)), run: gradient_check },
    Criterion { name: "alignment oracle", budget: Some(Duration::from_secs(60)), run: alignment_oracle },
    Criterion { name: "bootstrap", budget: None, run: bootstrap_suite },
    Criterion { name: "learning sanity", budget: None, run: learning_sanity },
    Criterion { name: "PCA", budget: None, run: pca_suite },
];

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(detail), Some(budget)) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<18} {detail} [{elapsed:.2?}]", c.name),
            Err(why) => {
                failures += 1;
                println!("FAIL  {:<18} {why} [{elapsed:.2?}]", c.name);
            }
        }
    }
    println!("{} of {ran} acceptance criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
