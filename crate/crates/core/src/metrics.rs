//! Evaluation metrics and percentile-bootstrap confidence intervals.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;
/// Resample counts used for alignment, ICD coding and document classification.
pub const ALIGNMENT_BOOTSTRAP_SAMPLES: usize = 1000;
pub const ICD_BOOTSTRAP_SAMPLES: usize = 500;
pub const CLASSIFICATION_BOOTSTRAP_SAMPLES: usize = 1000;

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Validation("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// True/false positive and false negative counts over label sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl LabelCounts {
    /// Counts one document. With `restrict`, labels outside the set are ignored.
    pub fn add(&mut self, predicted: &[usize], gold: &[usize], restrict: Option<&HashSet<usize>>) {
        let keep = |l: &usize| restrict.is_none_or(|r| r.contains(l));
        let p: HashSet<usize> = predicted.iter().copied().filter(keep).collect();
        let g: HashSet<usize> = gold.iter().copied().filter(keep).collect();
        let tp = p.intersection(&g).count();
        self.tp += tp;
        self.fp += p.len() - tp;
        self.fn_ += g.len() - tp;
    }

    /// `2TP / (2TP + FP + FN)`; 1.0 when there is nothing to predict and nothing predicted.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn micro_f1<P, G>(predicted: &[P], gold: &[G], restrict: Option<&HashSet<usize>>) -> Result<f64>
where
    P: AsRef<[usize]>,
    G: AsRef<[usize]>,
{
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    let mut counts = LabelCounts::default();
    for (p, g) in predicted.iter().zip(gold) {
        counts.add(p.as_ref(), g.as_ref(), restrict);
    }
    Ok(counts.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_samples: usize,
}

impl ConfidenceInterval {
    pub fn lower_delta(&self) -> f64 {
        self.point - self.lower
    }

    pub fn upper_delta(&self) -> f64 {
        self.upper - self.point
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `value^{+u}_{-l}` with the values scaled by `scale` (100 for percentages).
    pub fn format_scaled(&self, scale: f64, decimals: usize) -> String {
        format!(
            "{:.*}^{{+{:.*}}}_{{-{:.*}}}",
            decimals,
            self.point * scale,
            decimals,
            self.upper_delta() * scale,
            decimals,
            self.lower_delta() * scale
        )
    }
}

impl fmt::Display for ConfidenceInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format_scaled(100.0, 1))
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap: resamples `items` with replacement `n_samples` times
/// and takes the `(1 - level)/2` and `(1 + level)/2` quantiles of `metric`.
/// The point estimate is `metric` on the full item set.
pub fn bootstrap_ci<T, F>(items: &[T], metric: F, n_samples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval>
where
    F: Fn(&[&T]) -> f64,
{
    if items.is_empty() {
        return Err(Error::Validation("bootstrap needs at least one item".into()));
    }
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 100 resamples, got {n_samples}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level {level} not in (0, 1)")));
    }
    let all: Vec<&T> = items.iter().collect();
    let point = metric(&all);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<&T> = Vec::with_capacity(items.len());
    let mut values: Vec<f64> = (0..n_samples)
        .map(|_| {
            sample.clear();
            sample.extend((0..items.len()).map(|_| &items[rng.gen_range(0..items.len())]));
            metric(&sample)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        point,
        lower: quantile(&values, tail),
        upper: quantile(&values, 1.0 - tail),
        level,
        n_samples,
    })
}

/// Bootstrap CI of the mean of 0/1 outcomes (recall, accuracy).
pub fn bootstrap_proportion(outcomes: &[bool], n_samples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval> {
    bootstrap_ci(
        outcomes,
        |s| s.iter().filter(|&&&b| b).count() as f64 / s.len() as f64,
        n_samples,
        level,
        seed,
    )
}
