//! Finite-difference check of the hand-derived gradients of the attention
//! pooler and classifier.

use docpool::learner::{grad_check, Example, PoolerModel, PoolingMode, TaskKind};
use docpool::pert::PertWindowBank;
use docpool::synthetic::{gaussian_matrix, gaussian_vector, rng};

pub fn run_example() -> docpool::Result<()> {
    let bank = PertWindowBank::new(2, 20.0, 1024)?;
    for mode in [PoolingMode::AttPert, PoolingMode::AttTfPert] {
        for (task, labels) in [(TaskKind::Multiclass, vec![1]), (TaskKind::Multilabel, vec![0, 2])] {
            let mut r = rng(1);
            let mut model = PoolerModel::initialized(8, bank.clone(), 10, 3, mode, task, &mut r)?;
            // non-zero queries so the attention path is exercised
            let q = gaussian_vector(&mut r, 16);
            model.group_mut("queries").expect("queries group").copy_from_slice(&q);
            let example = Example {
                embeddings: gaussian_matrix(&mut r, 5, 8),
                tfidf: Some(vec![0.2, 0.9, 0.4, 0.6, 0.1]),
                labels,
            };
            let report = grad_check(&model, &example, 1e-5)?;
            println!("{mode:?} {task:?}: max relative error {:.2e}", report.max_rel_error);
            for (group, err) in &report.per_group {
                println!("    {group:<8} {err:.2e}");
            }
            assert!(report.max_rel_error < 1e-4);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
