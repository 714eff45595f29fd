//! Learnable attention pooling over PERT windows, trained jointly with a
//! one-hidden-layer classifier.
//!
//! For part `j` and sentence `n` with embedding `e_n`:
//!
//! ```text
//! s_j(n) = q_j . e_n / sqrt(d)
//! a_j    = softmax_n(s_j)
//! u_j    = sum_n e_n * P_j(n) * a_j(n) * t_n        (t_n = TF-IDF score, or 1)
//! pool   = concat_j(u_j / |u_j|) / sqrt(J)
//! hidden = relu(W1^T pool + b1)
//! scores = W2^T hidden + b2
//! ```
//!
//! `P_j` is the fixed window prior from the [`PertWindowBank`]; the queries
//! `q_j` and the classifier weights are trained. Multiclass tasks use softmax
//! cross-entropy, multilabel tasks the mean binary cross-entropy over labels.
//!
//! Checkpoints (`.dpml`) are little-endian:
//!
//! ```text
//! magic "DPML" | version u32 = 1 | d u32 | J u32 | H u32 | C u32 | mode u32 | task u32
//! gamma f64 | resolution u32
//! label count u32, then per label: byte length u32 + UTF-8 bytes
//! f64 parameters: queries (J*d) | W1 (J*d*H) | b1 (H) | W2 (H*C) | b2 (C)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::embed_store::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, micro_f1};
use crate::pert::{window_weights, PertWindowBank, WindowWeights};

pub const DEFAULT_HIDDEN: usize = 10;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DPML";
pub const CHECKPOINT_VERSION: u32 = 1;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    AttPert,
    AttTfPert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Multiclass,
    Multilabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            patience: 5,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.epochs == 0
            || self.batch_size == 0
            || self.patience == 0
            || self.hidden == 0
        {
            return Err(Error::InvalidParameter(format!("invalid training config: {self:?}")));
        }
        Ok(())
    }
}

/// One labelled document: its sentence embeddings, optional per-sentence
/// TF-IDF scores (needed for [`PoolingMode::AttTfPert`]) and label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub embeddings: EmbeddingMatrix,
    pub tfidf: Option<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Maps label strings to dense indices in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new(labels: impl IntoIterator<Item = String>) -> Self {
        let mut labels: Vec<String> = labels.into_iter().collect::<HashSet<_>>().into_iter().collect();
        labels.sort();
        LabelSpace { labels }
    }

    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        Self::new(docs.into_iter().flat_map(|d| d.labels.iter().cloned()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn name(&self, idx: usize) -> Option<&str> {
        self.labels.get(idx).map(String::as_str)
    }

    /// Label indices of `doc`; unknown labels are a validation error naming the document.
    pub fn encode(&self, doc: &Document) -> Result<Vec<usize>> {
        doc.labels
            .iter()
            .map(|l| {
                self.index(l).ok_or_else(|| {
                    Error::Validation(format!("document {}: label {l:?} is not in the label space", doc.doc_id))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    queries: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

impl Layout {
    fn new(dim: usize, parts: usize, hidden: usize, classes: usize) -> Self {
        let input = dim * parts;
        let q_end = input;
        let w1_end = q_end + input * hidden;
        let b1_end = w1_end + hidden;
        let w2_end = b1_end + hidden * classes;
        let b2_end = w2_end + classes;
        Layout {
            queries: 0..q_end,
            w1: q_end..w1_end,
            b1: w1_end..b1_end,
            w2: b1_end..w2_end,
            b2: w2_end..b2_end,
        }
    }

    fn total(&self) -> usize {
        self.b2.end
    }
}

/// Named parameter groups, in checkpoint order.
pub const PARAM_GROUPS: [&str; 5] = ["queries", "w1", "b1", "w2", "b2"];

#[derive(Debug, Clone, PartialEq)]
pub struct PoolerModel {
    dim: usize,
    hidden: usize,
    classes: usize,
    mode: PoolingMode,
    task: TaskKind,
    bank: PertWindowBank,
    labels: Vec<String>,
    layout: Layout,
    params: Vec<f64>,
}

impl PoolerModel {
    /// All-zero parameters.
    pub fn zeros(
        dim: usize,
        bank: PertWindowBank,
        hidden: usize,
        classes: usize,
        mode: PoolingMode,
        task: TaskKind,
    ) -> Result<Self> {
        if dim == 0 || hidden == 0 || classes == 0 {
            return Err(Error::InvalidParameter(format!(
                "model needs positive dim, hidden and class count (got {dim}, {hidden}, {classes})"
            )));
        }
        let layout = Layout::new(dim, bank.parts(), hidden, classes);
        Ok(PoolerModel {
            dim,
            hidden,
            classes,
            mode,
            task,
            labels: (0..classes).map(|c| c.to_string()).collect(),
            params: vec![0.0; layout.total()],
            layout,
            bank,
        })
    }

    /// Zero queries and biases, Glorot-uniform classifier weights.
    pub fn initialized(
        dim: usize,
        bank: PertWindowBank,
        hidden: usize,
        classes: usize,
        mode: PoolingMode,
        task: TaskKind,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut model = Self::zeros(dim, bank, hidden, classes, mode, task)?;
        let input = dim * model.parts();
        let lim1 = (6.0 / (input + hidden) as f64).sqrt();
        let lim2 = (6.0 / (hidden + classes) as f64).sqrt();
        let w1 = model.layout.w1.clone();
        let w2 = model.layout.w2.clone();
        model.params[w1].iter_mut().for_each(|w| *w = rng.gen_range(-lim1..lim1));
        model.params[w2].iter_mut().for_each(|w| *w = rng.gen_range(-lim2..lim2));
        Ok(model)
    }

    pub fn with_labels(mut self, labels: &LabelSpace) -> Result<Self> {
        if labels.len() != self.classes {
            return Err(Error::LengthMismatch {
                expected: self.classes,
                actual: labels.len(),
            });
        }
        self.labels = labels.labels().to_vec();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parts(&self) -> usize {
        self.bank.parts()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn mode(&self) -> PoolingMode {
        self.mode
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn bank(&self) -> &PertWindowBank {
        &self.bank
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_space(&self) -> LabelSpace {
        LabelSpace::new(self.labels.iter().cloned())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameter group by name (see [`PARAM_GROUPS`]).
    pub fn group(&self, name: &str) -> Option<&[f64]> {
        self.group_range(name).map(|r| &self.params[r])
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.group_range(name).map(move |r| &mut self.params[r])
    }

    fn group_range(&self, name: &str) -> Option<Range<usize>> {
        Some(match name {
            "queries" => self.layout.queries.clone(),
            "w1" => self.layout.w1.clone(),
            "b1" => self.layout.b1.clone(),
            "w2" => self.layout.w2.clone(),
            "b2" => self.layout.b2.clone(),
            _ => return None,
        })
    }

    fn query(&self, j: usize) -> &[f64] {
        &self.params[self.layout.queries.start + j * self.dim..][..self.dim]
    }

    fn w1(&self, i: usize, h: usize) -> f64 {
        self.params[self.layout.w1.start + i * self.hidden + h]
    }

    fn w2(&self, h: usize, c: usize) -> f64 {
        self.params[self.layout.w2.start + h * self.classes + c]
    }
}

/// A document ready for the model: f64 rows, window priors and sentence scale.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    n: usize,
    rows: Vec<f64>,
    windows: WindowWeights,
    sentence_weight: Vec<f64>,
    pub labels: Vec<usize>,
}

impl PreparedExample {
    pub fn new(model: &PoolerModel, example: &Example) -> Result<Self> {
        let embs = &example.embeddings;
        if embs.dim() != model.dim {
            return Err(Error::DimMismatch {
                expected: model.dim,
                actual: embs.dim(),
            });
        }
        let n = embs.count();
        if n == 0 {
            return Err(Error::Validation("example without sentences".into()));
        }
        let sentence_weight = match (model.mode, &example.tfidf) {
            (PoolingMode::AttPert, _) => vec![1.0; n],
            (PoolingMode::AttTfPert, Some(t)) if t.len() == n => t.clone(),
            (PoolingMode::AttTfPert, Some(t)) => {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: t.len(),
                })
            }
            (PoolingMode::AttTfPert, None) => {
                return Err(Error::InvalidParameter("ATT-TF-PERT pooling needs TF-IDF scores".into()))
            }
        };
        Ok(PreparedExample {
            n,
            rows: embs.values().iter().map(|&v| v as f64).collect(),
            windows: window_weights(&model.bank, n)?,
            sentence_weight,
            labels: example.labels.clone(),
        })
    }

    fn row(&self, n: usize, dim: usize) -> &[f64] {
        &self.rows[n * dim..(n + 1) * dim]
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
struct Forward {
    /// `J x N` attention rows.
    attn: Vec<f64>,
    /// `J x d` unnormalized part sums.
    sums: Vec<f64>,
    norms: Vec<f64>,
    /// `J x d` pooled document vector.
    pooled: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    scores: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn attention_rows(model: &PoolerModel, ex: &PreparedExample) -> Vec<f64> {
    let d = model.dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut attn = Vec::with_capacity(model.parts() * ex.n);
    for j in 0..model.parts() {
        let start = attn.len();
        let q = model.query(j);
        attn.extend((0..ex.n).map(|n| dot(q, ex.row(n, d)) * scale));
        softmax_in_place(&mut attn[start..]);
    }
    attn
}

fn forward_pass(model: &PoolerModel, ex: &PreparedExample) -> Forward {
    let d = model.dim;
    let parts = model.parts();
    let attn = attention_rows(model, ex);
    let mut sums = vec![0.0; parts * d];
    let mut norms = vec![0.0; parts];
    let mut pooled = vec![0.0; parts * d];
    let part_scale = 1.0 / (parts as f64).sqrt();
    for j in 0..parts {
        let u = &mut sums[j * d..(j + 1) * d];
        for n in 0..ex.n {
            let c = ex.windows.get(j, n) * attn[j * ex.n + n] * ex.sentence_weight[n];
            if c == 0.0 {
                continue;
            }
            for (acc, &x) in u.iter_mut().zip(ex.row(n, d)) {
                *acc += c * x;
            }
        }
        let norm = dot(u, u).sqrt();
        norms[j] = norm;
        let inv = if norm > NORM_EPS { 1.0 / norm } else { 1.0 };
        for (p, &x) in pooled[j * d..(j + 1) * d].iter_mut().zip(u.iter()) {
            *p = x * inv * part_scale;
        }
    }
    let mut pre = model.params[model.layout.b1.clone()].to_vec();
    for (i, &x) in pooled.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (h, p) in pre.iter_mut().enumerate() {
            *p += model.w1(i, h) * x;
        }
    }
    let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let mut scores = model.params[model.layout.b2.clone()].to_vec();
    for (h, &x) in hidden.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (c, s) in scores.iter_mut().enumerate() {
            *s += model.w2(h, c) * x;
        }
    }
    Forward {
        attn,
        sums,
        norms,
        pooled,
        pre,
        hidden,
        scores,
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss of `scores` against `labels` and its gradient w.r.t. the scores.
fn loss_and_grad(task: TaskKind, scores: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
    match task {
        TaskKind::Multiclass => {
            let y = labels[0];
            let mut probs = scores.to_vec();
            softmax_in_place(&mut probs);
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            let loss = lse - scores[y];
            probs[y] -= 1.0;
            (loss, probs)
        }
        TaskKind::Multilabel => {
            let c = scores.len() as f64;
            let mut target = vec![0.0; scores.len()];
            for &l in labels {
                target[l] = 1.0;
            }
            let loss = scores.iter().zip(&target).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / c;
            let grad = scores.iter().zip(&target).map(|(&z, &y)| (sigmoid(z) - y) / c).collect();
            (loss, grad)
        }
    }
}

/// Loss of one example and its gradient with respect to every parameter,
/// in the model's flat parameter layout.
fn backward(model: &PoolerModel, ex: &PreparedExample, grad: &mut [f64]) -> f64 {
    let d = model.dim;
    let parts = model.parts();
    let hidden_n = model.hidden;
    let classes = model.classes;
    let fw = forward_pass(model, ex);
    let (loss, d_scores) = loss_and_grad(model.task, &fw.scores, &ex.labels);

    let l = &model.layout;
    let mut d_hidden = vec![0.0; hidden_n];
    for h in 0..hidden_n {
        let x = fw.hidden[h];
        let mut acc = 0.0;
        for c in 0..classes {
            grad[l.w2.start + h * classes + c] += x * d_scores[c];
            acc += model.w2(h, c) * d_scores[c];
        }
        d_hidden[h] = acc;
    }
    for c in 0..classes {
        grad[l.b2.start + c] += d_scores[c];
    }
    let d_pre: Vec<f64> = d_hidden
        .iter()
        .zip(&fw.pre)
        .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
        .collect();
    for h in 0..hidden_n {
        grad[l.b1.start + h] += d_pre[h];
    }
    let mut d_pooled = vec![0.0; parts * d];
    for (i, &x) in fw.pooled.iter().enumerate() {
        let row = l.w1.start + i * hidden_n;
        let mut acc = 0.0;
        for h in 0..hidden_n {
            grad[row + h] += x * d_pre[h];
            acc += model.params[row + h] * d_pre[h];
        }
        d_pooled[i] = acc;
    }

    let part_scale = 1.0 / (parts as f64).sqrt();
    let q_scale = 1.0 / (d as f64).sqrt();
    let mut d_sum = vec![0.0; d];
    let mut d_attn = vec![0.0; ex.n];
    for j in 0..parts {
        let norm = fw.norms[j];
        let d_part = &d_pooled[j * d..(j + 1) * d];
        if norm > NORM_EPS {
            // pooled_j = part_scale * u / |u|
            let unit: Vec<f64> = fw.sums[j * d..(j + 1) * d].iter().map(|x| x / norm).collect();
            let proj = dot(&unit, d_part);
            for k in 0..d {
                d_sum[k] = part_scale * (d_part[k] - unit[k] * proj) / norm;
            }
        } else {
            for k in 0..d {
                d_sum[k] = part_scale * d_part[k];
            }
        }
        let a = &fw.attn[j * ex.n..(j + 1) * ex.n];
        let mut weighted = 0.0;
        for n in 0..ex.n {
            let c = ex.windows.get(j, n) * ex.sentence_weight[n];
            d_attn[n] = if c == 0.0 { 0.0 } else { c * dot(ex.row(n, d), &d_sum) };
            weighted += a[n] * d_attn[n];
        }
        let q_grad = &mut grad[l.queries.start + j * d..][..d];
        for n in 0..ex.n {
            let ds = a[n] * (d_attn[n] - weighted) * q_scale;
            if ds == 0.0 {
                continue;
            }
            for (g, &x) in q_grad.iter_mut().zip(ex.row(n, d)) {
                *g += ds * x;
            }
        }
    }
    loss
}

/// Loss of one prepared example.
pub fn example_loss(model: &PoolerModel, ex: &PreparedExample) -> f64 {
    loss_and_grad(model.task, &forward_pass(model, ex).scores, &ex.labels).0
}

/// Analytic gradient of one example's loss, in flat parameter order.
pub fn example_gradient(model: &PoolerModel, ex: &PreparedExample) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.params.len()];
    let loss = backward(model, ex, &mut grad);
    (loss, grad)
}

/// `J x N` attention weights, each row a softmax over sentences.
pub fn attention_weights(model: &PoolerModel, embs: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let ex = PreparedExample::new(
        model,
        &Example {
            embeddings: embs.clone(),
            tfidf: Some(vec![1.0; embs.count()]),
            labels: Vec::new(),
        },
    )?;
    Ok(attention_rows(model, &ex))
}

/// Attention-weighted PERT document vector (dimension `J * d`).
pub fn att_pert_pool(model: &PoolerModel, embs: &EmbeddingMatrix, tfidf: Option<&[f64]>) -> Result<Vec<f64>> {
    let ex = PreparedExample::new(
        model,
        &Example {
            embeddings: embs.clone(),
            tfidf: tfidf.map(<[f64]>::to_vec),
            labels: Vec::new(),
        },
    )?;
    Ok(forward_pass(model, &ex).pooled)
}

/// Raw class scores (logits).
pub fn forward(model: &PoolerModel, example: &Example) -> Result<Vec<f64>> {
    let ex = PreparedExample::new(model, example)?;
    Ok(forward_pass(model, &ex).scores)
}

fn predict_scores(task: TaskKind, scores: &[f64]) -> Vec<usize> {
    match task {
        TaskKind::Multiclass => {
            let mut best = 0;
            for (c, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = c;
                }
            }
            vec![best]
        }
        TaskKind::Multilabel => scores
            .iter()
            .enumerate()
            .filter(|(_, &z)| sigmoid(z) >= 0.5)
            .map(|(c, _)| c)
            .collect(),
    }
}

/// Predicted label indices: the argmax for multiclass, every label with
/// probability at least 0.5 for multilabel.
pub fn predict(model: &PoolerModel, example: &Example) -> Result<Vec<usize>> {
    Ok(predict_scores(model.task, &forward(model, example)?))
}

fn predict_prepared(model: &PoolerModel, ex: &PreparedExample) -> Vec<usize> {
    predict_scores(model.task, &forward_pass(model, ex).scores)
}

/// Accuracy (multiclass) or micro-F1 at 0.5 (multilabel).
fn task_metric(model: &PoolerModel, data: &[PreparedExample]) -> f64 {
    let predicted: Vec<Vec<usize>> = data.iter().map(|ex| predict_prepared(model, ex)).collect();
    match model.task {
        TaskKind::Multiclass => {
            let p: Vec<usize> = predicted.iter().map(|p| p[0]).collect();
            let g: Vec<usize> = data.iter().map(|ex| ex.labels[0]).collect();
            accuracy(&p, &g).unwrap_or(0.0)
        }
        TaskKind::Multilabel => {
            let g: Vec<&[usize]> = data.iter().map(|ex| ex.labels.as_slice()).collect();
            micro_f1(&predicted, &g, None).unwrap_or(0.0)
        }
    }
}

pub fn evaluate(model: &PoolerModel, data: &[Example]) -> Result<f64> {
    let prepared = prepare_all(model, data)?;
    if prepared.is_empty() {
        return Err(Error::Validation("evaluation set is empty".into()));
    }
    Ok(task_metric(model, &prepared))
}

fn prepare_all(model: &PoolerModel, data: &[Example]) -> Result<Vec<PreparedExample>> {
    data.iter().map(|e| PreparedExample::new(model, e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metric: f64,
    pub dev_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev metric.
    pub model: PoolerModel,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn check_labels(data: &[Example], classes: usize, task: TaskKind, split: &str) -> Result<()> {
    for (i, ex) in data.iter().enumerate() {
        if let Some(&bad) = ex.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Validation(format!(
                "{split} example {i}: label {bad} outside label space of {classes}"
            )));
        }
        if task == TaskKind::Multiclass && ex.labels.len() != 1 {
            return Err(Error::Validation(format!(
                "{split} example {i}: multiclass examples need exactly one label, got {}",
                ex.labels.len()
            )));
        }
    }
    Ok(())
}

/// Mini-batch training with a fixed shuffling seed. Returns the parameters
/// of the epoch with the best dev metric; an empty `dev` set uses `train`.
pub fn train(
    train_set: &[Example],
    dev_set: &[Example],
    classes: usize,
    cfg: &TrainConfig,
    mode: PoolingMode,
    task: TaskKind,
    bank: &PertWindowBank,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::Validation("training set is empty".into()))?;
    check_labels(train_set, classes, task, "train")?;
    check_labels(dev_set, classes, task, "dev")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = first.embeddings.dim();
    let mut model = PoolerModel::initialized(dim, bank.clone(), cfg.hidden, classes, mode, task, &mut rng)?;
    let train_data = prepare_all(&model, train_set)?;
    let dev_data = if dev_set.is_empty() {
        train_data.clone()
    } else {
        prepare_all(&model, dev_set)?
    };

    let n_params = model.params.len();
    let mut adam = Adam::new(n_params);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut grad = vec![0.0; n_params];
    let mut best = (f64::NEG_INFINITY, 0usize, model.params.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                loss_sum += backward(&model, &train_data[i], &mut grad);
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut model.params, &grad, cfg.learning_rate),
                Optimizer::Sgd => model
                    .params
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(p, g)| *p -= cfg.learning_rate * g),
            }
        }
        let dev_metric = task_metric(&model, &dev_data);
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            train_metric: task_metric(&model, &train_data),
            dev_metric,
        });
        if dev_metric > best.0 {
            best = (dev_metric, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        best_epoch: best.1,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest relative error per parameter group.
    pub per_group: BTreeMap<String, f64>,
}

/// Below this magnitude gradients are compared on an absolute scale.
const GRAD_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient with central finite differences for every
/// parameter. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(model: &PoolerModel, example: &Example, epsilon: f64) -> Result<GradCheckReport> {
    let ex = PreparedExample::new(model, example)?;
    check_labels(std::slice::from_ref(example), model.classes, model.task, "grad-check")?;
    let (_, analytic) = example_gradient(model, &ex);
    let mut probe = model.clone();
    let mut per_group = BTreeMap::new();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for name in PARAM_GROUPS {
        let range = model.group_range(name).expect("known group");
        let mut group_max: f64 = 0.0;
        for i in range {
            let orig = probe.params[i];
            probe.params[i] = orig + epsilon;
            let plus = example_loss(&probe, &ex);
            probe.params[i] = orig - epsilon;
            let minus = example_loss(&probe, &ex);
            probe.params[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let abs = (analytic[i] - numeric).abs();
            let rel = abs / analytic[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
            group_max = group_max.max(rel);
            max_abs = max_abs.max(abs);
        }
        max_rel = max_rel.max(group_max);
        per_group.insert(name.to_string(), group_max);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        per_group,
    })
}

/// Applies a frozen model to each language's examples and reports accuracy
/// (micro-F1 for multilabel models).
pub fn zero_shot_eval(model: &PoolerModel, eval_sets: &BTreeMap<String, Vec<Example>>) -> Result<BTreeMap<String, f64>> {
    eval_sets
        .iter()
        .map(|(lang, data)| Ok((lang.clone(), evaluate(model, data)?)))
        .collect()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl PoolerModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.params.len() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION as usize);
        put_u32(&mut out, self.dim);
        put_u32(&mut out, self.parts());
        put_u32(&mut out, self.hidden);
        put_u32(&mut out, self.classes);
        put_u32(&mut out, self.mode as usize);
        put_u32(&mut out, self.task as usize);
        out.extend_from_slice(&self.bank.gamma().to_le_bytes());
        put_u32(&mut out, self.bank.resolution());
        put_u32(&mut out, self.labels.len());
        for l in &self.labels {
            put_u32(&mut out, l.len());
            out.extend_from_slice(l.as_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected DPML".into(),
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let dim = r.u32()? as usize;
        let parts = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let classes = r.u32()? as usize;
        let mode_at = r.pos;
        let mode = match r.u32()? {
            0 => PoolingMode::AttPert,
            1 => PoolingMode::AttTfPert,
            other => return Err(r.error_at(mode_at, format!("unknown pooling mode {other}"))),
        };
        let task_at = r.pos;
        let task = match r.u32()? {
            0 => TaskKind::Multiclass,
            1 => TaskKind::Multilabel,
            other => return Err(r.error_at(task_at, format!("unknown task {other}"))),
        };
        let gamma = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let resolution = r.u32()? as usize;
        let n_labels = r.u32()? as usize;
        let mut labels = Vec::with_capacity(n_labels.min(1 << 16));
        for _ in 0..n_labels {
            let len = r.u32()? as usize;
            let at = r.pos;
            let raw = r.take(len)?;
            labels.push(
                String::from_utf8(raw.to_vec()).map_err(|_| r.error_at(at, "label is not UTF-8".into()))?,
            );
        }
        let bank = PertWindowBank::new(parts, gamma, resolution)?;
        let mut model = PoolerModel::zeros(dim, bank, hidden, classes, mode, task)?;
        if labels.len() != classes {
            return Err(Error::Validation(format!(
                "checkpoint has {} labels for {classes} classes",
                labels.len()
            )));
        }
        model.labels = labels;
        for p in model.params.iter_mut() {
            *p = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            if !p.is_finite() {
                return Err(r.error_at(r.pos - 8, "non-finite parameter".into()));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, "trailing bytes after parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error_at(self.bytes.len(), "truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn error_at(&self, offset: usize, message: String) -> Error {
        Error::Format {
            offset: offset as u64,
            message,
        }
    }
}

/// Builds labelled examples from documents and their sentence embeddings.
/// `tfidf` supplies per-document sentence scores when the mode needs them.
pub fn build_examples(
    docs: &[&Document],
    embeddings: &BTreeMap<String, EmbeddingMatrix>,
    labels: &LabelSpace,
    tfidf: Option<&HashMap<String, Vec<f64>>>,
) -> Result<Vec<Example>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let Some(embs) = embeddings.get(&doc.doc_id) else {
            missing.push(doc.doc_id.clone());
            continue;
        };
        if embs.count() != doc.sentences.len() {
            return Err(Error::Validation(format!(
                "document {}: {} sentences but {} embedding rows",
                doc.doc_id,
                doc.sentences.len(),
                embs.count()
            )));
        }
        out.push(Example {
            embeddings: embs.clone(),
            tfidf: tfidf.and_then(|t| t.get(&doc.doc_id).cloned()),
            labels: labels.encode(doc)?,
        });
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!("missing embeddings for: {}", missing.join(", "))));
    }
    Ok(out)
}
