//! Modified-PERT positional windows and the static window compositions.
//!
//! A document is viewed on relative positions in `[0, 1]`. Window `j` of a
//! bank with `J` parts is a modified-PERT density with mode `(j + 0.5) / J`
//! and support `mode ± 1/J`, so neighbouring windows overlap. The densities
//! are sampled once on a uniform grid (the cache) and sentences read the
//! nearest sample.

use std::collections::HashMap;

use statrs::function::beta::ln_beta;

use crate::corpus::Document;
use crate::embed_store::{l2_normalize_in_place, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_PARTS: usize = 16;
pub const DEFAULT_GAMMA: f64 = 20.0;
pub const DEFAULT_RESOLUTION: usize = 1024;

/// One modified-PERT density on `[min, max]` with the given mode and shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PertWindow {
    pub min: f64,
    pub mode: f64,
    pub max: f64,
    pub alpha: f64,
    pub beta: f64,
    log_norm: f64,
}

impl PertWindow {
    pub fn new(min: f64, mode: f64, max: f64, gamma: f64) -> Result<Self> {
        if !(min < max) {
            return Err(Error::InvalidParameter(format!(
                "PERT support needs min < max, got [{min}, {max}]"
            )));
        }
        if !(min < mode && mode < max) {
            return Err(Error::InvalidParameter(format!(
                "PERT mode {mode} must lie strictly inside ({min}, {max})"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("PERT shape must be positive, got {gamma}")));
        }
        let range = max - min;
        let alpha = 1.0 + gamma * (mode - min) / range;
        let beta = 1.0 + gamma * (max - mode) / range;
        let log_norm = ln_beta(alpha, beta) + (alpha + beta - 1.0) * range.ln();
        Ok(PertWindow {
            min,
            mode,
            max,
            alpha,
            beta,
            log_norm,
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= self.min || x >= self.max {
            return 0.0;
        }
        ((self.alpha - 1.0) * (x - self.min).ln() + (self.beta - 1.0) * (self.max - x).ln() - self.log_norm).exp()
    }
}

/// Density of the modified PERT distribution on `[a, c]` with mode `b` and shape `gamma`.
pub fn pert_pdf(x: f64, a: f64, b: f64, c: f64, gamma: f64) -> Result<f64> {
    Ok(PertWindow::new(a, b, c, gamma)?.pdf(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PertWindowBank {
    parts: usize,
    gamma: f64,
    resolution: usize,
    windows: Vec<PertWindow>,
    /// `parts x resolution`, row-major.
    cache: Vec<f64>,
}

impl Default for PertWindowBank {
    fn default() -> Self {
        Self::new(DEFAULT_PARTS, DEFAULT_GAMMA, DEFAULT_RESOLUTION).expect("default bank parameters are valid")
    }
}

impl PertWindowBank {
    pub fn new(parts: usize, gamma: f64, resolution: usize) -> Result<Self> {
        if parts == 0 {
            return Err(Error::InvalidParameter("window bank needs at least one part".into()));
        }
        if resolution < 2 {
            return Err(Error::InvalidParameter("cache resolution must be at least 2".into()));
        }
        let width = 1.0 / parts as f64;
        let windows = (0..parts)
            .map(|j| {
                let mode = (j as f64 + 0.5) * width;
                PertWindow::new(mode - width, mode, mode + width, gamma)
            })
            .collect::<Result<Vec<_>>>()?;
        let step = 1.0 / (resolution - 1) as f64;
        let mut cache = Vec::with_capacity(parts * resolution);
        for w in &windows {
            cache.extend((0..resolution).map(|r| w.pdf(r as f64 * step)));
        }
        Ok(PertWindowBank {
            parts,
            gamma,
            resolution,
            windows,
            cache,
        })
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn window(&self, j: usize) -> &PertWindow {
        &self.windows[j]
    }

    pub fn cached(&self, j: usize) -> &[f64] {
        &self.cache[j * self.resolution..(j + 1) * self.resolution]
    }

    pub fn grid_index(&self, x: f64) -> usize {
        let r = (x.clamp(0.0, 1.0) * (self.resolution - 1) as f64).round() as usize;
        r.min(self.resolution - 1)
    }

    /// Cached density of window `j` at the grid sample nearest to `x`.
    pub fn lookup(&self, j: usize, x: f64) -> f64 {
        self.cached(j)[self.grid_index(x)]
    }
}

/// `parts x n` positional weights: entry `(j, n)` is window `j` at sentence `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowWeights {
    parts: usize,
    n: usize,
    values: Vec<f64>,
}

impl WindowWeights {
    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn sentences(&self) -> usize {
        self.n
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, j: usize, n: usize) -> f64 {
        self.values[j * self.n + n]
    }
}

/// Sentence `n` of `n_sentences` sits at relative position `(n + 0.5) / N`.
/// Each row is scaled to sum to one unless it is entirely zero.
pub fn window_weights(bank: &PertWindowBank, n_sentences: usize) -> Result<WindowWeights> {
    if n_sentences == 0 {
        return Err(Error::Validation("window weights need at least one sentence".into()));
    }
    let mut values = Vec::with_capacity(bank.parts() * n_sentences);
    for j in 0..bank.parts() {
        let start = values.len();
        values.extend((0..n_sentences).map(|n| bank.lookup(j, (n as f64 + 0.5) / n_sentences as f64)));
        let row = &mut values[start..];
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Ok(WindowWeights {
        parts: bank.parts(),
        n: n_sentences,
        values,
    })
}

/// Per-sentence boilerplate factors in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoilerplateWeights(pub Vec<f64>);

impl BoilerplateWeights {
    pub fn ones(n: usize) -> Self {
        BoilerplateWeights(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Boilerplate factors for every document. When enabled, a sentence whose
/// exact text appears in `k` documents of the same `domain_id` gets `1/k`;
/// documents without a domain form one shared group.
pub fn boilerplate_weights(collection: &[Document], enabled: bool) -> HashMap<String, BoilerplateWeights> {
    if !enabled {
        return collection
            .iter()
            .map(|d| (d.doc_id.clone(), BoilerplateWeights::ones(d.sentences.len())))
            .collect();
    }
    let mut freq: HashMap<(Option<&str>, &str), usize> = HashMap::new();
    for doc in collection {
        let domain = doc.domain_id.as_deref();
        let mut seen = std::collections::HashSet::new();
        for s in &doc.sentences {
            if seen.insert(s.text.as_str()) {
                *freq.entry((domain, s.text.as_str())).or_default() += 1;
            }
        }
    }
    collection
        .iter()
        .map(|d| {
            let domain = d.domain_id.as_deref();
            let weights = d
                .sentences
                .iter()
                .map(|s| 1.0 / freq[&(domain, s.text.as_str())] as f64)
                .collect();
            (d.doc_id.clone(), BoilerplateWeights(weights))
        })
        .collect()
}

/// Concatenates `D_j = sum_n emb_n * P_j(n) * sentence_weight_n` over all
/// parts. Each `D_j` is L2-normalized (zero parts stay zero) and the result
/// is scaled by `1/sqrt(J)`, so a vector with every part populated has unit norm.
pub fn compose_windows(embs: &EmbeddingMatrix, windows: &WindowWeights, sentence_weight: &[f64]) -> Result<Vec<f64>> {
    let n = embs.count();
    if windows.sentences() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: windows.sentences(),
        });
    }
    if sentence_weight.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: sentence_weight.len(),
        });
    }
    let d = embs.dim();
    let parts = windows.parts();
    let scale = 1.0 / (parts as f64).sqrt();
    let mut out = vec![0.0f64; parts * d];
    for (j, part) in out.chunks_exact_mut(d).enumerate() {
        for (idx, row) in embs.rows().enumerate() {
            let w = windows.get(j, idx) * sentence_weight[idx];
            if w == 0.0 {
                continue;
            }
            for (o, &x) in part.iter_mut().zip(row) {
                *o += w * x as f64;
            }
        }
        l2_normalize_in_place(part);
        part.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

/// Position-weighted document vector of dimension `J * d`.
pub fn tk_pert(embs: &EmbeddingMatrix, bank: &PertWindowBank, boilerplate: &BoilerplateWeights) -> Result<Vec<f64>> {
    if embs.count() == 0 {
        return Err(Error::Validation("cannot compose an empty document".into()));
    }
    let windows = window_weights(bank, embs.count())?;
    compose_windows(embs, &windows, boilerplate.as_slice())
}

/// [`tk_pert`] with every sentence additionally scaled by its TF-IDF score.
pub fn tf_pert(
    embs: &EmbeddingMatrix,
    bank: &PertWindowBank,
    boilerplate: &BoilerplateWeights,
    tfidf_scores: &[f64],
) -> Result<Vec<f64>> {
    if tfidf_scores.len() != embs.count() {
        return Err(Error::LengthMismatch {
            expected: embs.count(),
            actual: tfidf_scores.len(),
        });
    }
    if boilerplate.0.len() != embs.count() {
        return Err(Error::LengthMismatch {
            expected: embs.count(),
            actual: boilerplate.0.len(),
        });
    }
    if embs.count() == 0 {
        return Err(Error::Validation("cannot compose an empty document".into()));
    }
    let combined: Vec<f64> = boilerplate.0.iter().zip(tfidf_scores).map(|(b, t)| b * t).collect();
    let windows = window_weights(bank, embs.count())?;
    compose_windows(embs, &windows, &combined)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b))
    }

    #[test]
    fn pdf_vanishes_at_bounds_and_outside() {
        for x in [0.0, 1.0, -0.5, 2.0] {
            assert_eq!(pert_pdf(x, 0.0, 0.3, 1.0, 20.0).unwrap(), 0.0);
        }
        assert!(pert_pdf(0.3, 0.0, 0.3, 1.0, 20.0).unwrap() > 0.0);
    }

    #[test]
    fn pdf_symmetric_when_mode_centred() {
        for delta in [0.01, 0.1, 0.2, 0.49] {
            let lo = pert_pdf(0.5 - delta, 0.0, 0.5, 1.0, 20.0).unwrap();
            let hi = pert_pdf(0.5 + delta, 0.0, 0.5, 1.0, 20.0).unwrap();
            assert!((lo - hi).abs() <= 1e-9 * lo.max(1e-300));
        }
    }

    #[test]
    fn pdf_rejects_bad_support() {
        assert!(pert_pdf(0.5, 1.0, 1.0, 1.0, 20.0).is_err());
        assert!(pert_pdf(0.5, 1.0, 0.5, 0.0, 20.0).is_err());
        assert!(pert_pdf(0.5, 0.0, 1.0, 1.0, 20.0).is_err());
    }

    #[test]
    fn pdf_mode_matches_beta_mode() {
        // with alpha, beta > 1 the density peaks at the mode
        let w = PertWindow::new(0.0, 0.2, 1.0, 20.0).unwrap();
        assert!(w.pdf(0.2) > w.pdf(0.19) && w.pdf(0.2) > w.pdf(0.21));
    }

    #[test]
    fn bank_placement() {
        let bank = PertWindowBank::new(16, 20.0, 1024).unwrap();
        assert!((bank.window(0).mode - 1.0 / 32.0).abs() < 1e-15);
        assert!((bank.window(15).mode - 31.0 / 32.0).abs() < 1e-15);
        for j in 0..15 {
            let overlap = (0..1024).any(|r| bank.cached(j)[r] > 0.0 && bank.cached(j + 1)[r] > 0.0);
            assert!(overlap, "windows {j} and {} do not overlap", j + 1);
        }
        assert!(bank.cache.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_part_bank_covers_everything() {
        let bank = PertWindowBank::new(1, 20.0, 1024).unwrap();
        assert_eq!(bank.window(0).mode, 0.5);
        assert_eq!((bank.window(0).min, bank.window(0).max), (-0.5, 1.5));
        assert!(bank.cached(0).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn bank_is_reproducible() {
        let a = PertWindowBank::new(16, 20.0, 1024).unwrap();
        let b = PertWindowBank::new(16, 20.0, 1024).unwrap();
        assert!(a.cache.iter().zip(&b.cache).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(PertWindowBank::new(0, 20.0, 1024).is_err());
    }

    #[test]
    fn window_weights_rows() {
        let bank = PertWindowBank::default();
        let one = window_weights(&bank, 1).unwrap();
        for j in 0..16 {
            let w = bank.window(j);
            let covers = w.min < 0.5 && 0.5 < w.max;
            assert_eq!(one.get(j, 0) > 0.0, covers, "part {j}");
            if covers {
                assert!((one.get(j, 0) - 1.0).abs() < 1e-15);
            }
        }
        let many = window_weights(&bank, 37).unwrap();
        for j in 0..16 {
            let s: f64 = many.row(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn window_argmax_falls_in_its_part() {
        let bank = PertWindowBank::default();
        let n = 100;
        let ww = window_weights(&bank, n).unwrap();
        for j in 0..16 {
            let row = ww.row(j);
            let argmax = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap();
            let lo = j as f64 * n as f64 / 16.0;
            let hi = (j + 1) as f64 * n as f64 / 16.0;
            assert!((argmax as f64) >= lo.floor() && (argmax as f64) < hi, "part {j}: argmax {argmax}");
        }
    }

    #[test]
    fn boilerplate_examples() {
        let mk = |id: &str, domain: &str, texts: &[&str]| {
            let mut d = Document::from_texts(id, "en", texts);
            d.domain_id = Some(domain.into());
            d
        };
        let docs = vec![
            mk("a", "x.com", &["Home | About", "unique a"]),
            mk("b", "x.com", &["Home | About", "unique b"]),
            mk("c", "x.com", &["Home | About", "unique c"]),
            mk("d", "x.com", &["Home | About", "unique d", "unique d"]),
            mk("e", "y.com", &["Home | About"]),
        ];
        let off = boilerplate_weights(&docs, false);
        assert!(off.values().all(|b| b.0.iter().all(|&v| v == 1.0)));
        let on = boilerplate_weights(&docs, true);
        assert_eq!(on["a"].0, [0.25, 1.0]);
        assert_eq!(on["d"].0, [0.25, 1.0, 1.0]);
        assert_eq!(on["e"].0, [1.0]);
    }

    #[test]
    fn tk_pert_identical_rows() {
        let r = [0.6, 0.0, -0.8];
        let embs = EmbeddingMatrix::from_rows(&vec![r; 9]).unwrap();
        let bank = PertWindowBank::new(4, 20.0, 1024).unwrap();
        let v = tk_pert(&embs, &bank, &BoilerplateWeights::ones(9)).unwrap();
        assert_eq!(v.len(), 12);
        for part in v.chunks(3) {
            for (a, b) in part.iter().zip(r) {
                assert!((a - b as f32 as f64 / 2.0).abs() < 1e-6);
            }
        }
        assert!((norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tk_pert_single_sentence_collinear() {
        let embs = EmbeddingMatrix::from_rows(&[[1.0, 2.0, 2.0]]).unwrap();
        let bank = PertWindowBank::default();
        let v = tk_pert(&embs, &bank, &BoilerplateWeights::ones(1)).unwrap();
        let e = embs.row_f64(0);
        let mut nonzero = 0;
        for part in v.chunks(3) {
            if norm(part) > 0.0 {
                nonzero += 1;
                assert!((cosine(part, &e) - 1.0).abs() < 1e-12);
            }
        }
        assert!(nonzero >= 1);
    }

    #[test]
    fn tf_pert_examples() {
        let embs = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 2.0]]).unwrap();
        let bank = PertWindowBank::new(2, 20.0, 256).unwrap();
        let ones = BoilerplateWeights::ones(4);
        let tk = tk_pert(&embs, &bank, &ones).unwrap();
        let tf = tf_pert(&embs, &bank, &ones, &[2.5; 4]).unwrap();
        for (a, b) in tk.iter().zip(&tf) {
            assert!((a - b).abs() < 1e-12);
        }
        let one_hot = tf_pert(&embs, &bank, &ones, &[0.0, 0.0, 3.0, 0.0]).unwrap();
        let e = embs.row_f64(2);
        for part in one_hot.chunks(2) {
            if norm(part) > 0.0 {
                assert!((cosine(part, &e) - 1.0).abs() < 1e-12);
            }
        }
        assert!(matches!(
            tf_pert(&embs, &bank, &ones, &[1.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn positive_scaling_leaves_output_unchanged() {
        let rows: Vec<[f64; 3]> = (0..7).map(|i| [i as f64, 1.0 - i as f64, 0.5]).collect();
        let scaled: Vec<[f64; 3]> = rows.iter().map(|r| [r[0] * 4.0, r[1] * 4.0, r[2] * 4.0]).collect();
        let bank = PertWindowBank::new(3, 20.0, 512).unwrap();
        let ones = BoilerplateWeights::ones(7);
        let a = tk_pert(&EmbeddingMatrix::from_rows(&rows).unwrap(), &bank, &ones).unwrap();
        let b = tk_pert(&EmbeddingMatrix::from_rows(&scaled).unwrap(), &bank, &ones).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
