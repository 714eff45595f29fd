//! Attention pooling over PERT windows, trained end to end with a small
//! classifier, then evaluated zero-shot on a shifted "language".

use std::collections::BTreeMap;

use docpool::learner::{
    attention_weights, evaluate, train, zero_shot_eval, Example, PoolerModel, PoolingMode, TaskKind, TrainConfig,
};
use docpool::pert::PertWindowBank;
use docpool::synthetic::{noisy_sentences, rng, separable_examples, unit_vector};

pub fn run_example() -> docpool::Result<()> {
    let mut r = rng(5);
    let dim = 16;
    let prototypes: Vec<Vec<f64>> = (0..4).map(|_| unit_vector(&mut r, dim)).collect();
    let train_set = separable_examples(&mut r, &prototypes, 40, 3..=12, 0.3);
    let dev_set = separable_examples(&mut r, &prototypes, 10, 3..=12, 0.3);

    let bank = PertWindowBank::new(4, 20.0, 1024)?;
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        epochs: 30,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, &dev_set, 4, &cfg, PoolingMode::AttPert, TaskKind::Multiclass, &bank)?;
    for m in outcome.history.iter().step_by(5) {
        println!("epoch {:>2} loss {:.4} train acc {:.3} dev acc {:.3}", m.epoch, m.train_loss, m.train_metric, m.dev_metric);
    }
    let model = outcome.model;
    println!("best epoch {}, dev accuracy {:.3}", outcome.best_epoch, evaluate(&model, &dev_set)?);

    let att = attention_weights(&model, &dev_set[0].embeddings)?;
    println!("attention of part 0 over {} sentences: {:.3?}", dev_set[0].embeddings.count(), &att[..dev_set[0].embeddings.count()]);

    let shifted: Vec<Vec<f64>> = prototypes.iter().map(|p| p.iter().map(|v| v + 0.05).collect()).collect();
    let other_lang: Vec<Example> = (0..40)
        .map(|i| Example {
            embeddings: noisy_sentences(&mut r, &shifted[i % 4], 6, 0.3),
            tfidf: None,
            labels: vec![i % 4],
        })
        .collect();
    let mut sets = BTreeMap::new();
    sets.insert("src".to_string(), dev_set);
    sets.insert("tgt".to_string(), other_lang);
    for (lang, acc) in zero_shot_eval(&model, &sets)? {
        println!("zero-shot {lang}: accuracy {acc:.3}");
    }

    let bytes = model.to_bytes();
    let restored = PoolerModel::from_bytes(&bytes)?;
    assert_eq!(restored.params(), model.params());
    println!("checkpoint: {} bytes", bytes.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
