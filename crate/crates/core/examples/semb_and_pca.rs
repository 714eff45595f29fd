//! The SEMB embedding file format and PCA reduction of sentence embeddings.

use std::collections::BTreeMap;

use docpool::embed_store::{load_embeddings, pca_apply, pca_fit, read_semb, store_embeddings, write_semb, EmbeddingMatrix};
use docpool::synthetic::{gaussian_matrix, rng};

pub fn run_example() -> docpool::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| docpool::Error::Validation(e.to_string()))?;
    let mut r = rng(3);

    let m = gaussian_matrix(&mut r, 5, 16);
    let path = dir.path().join("doc.semb");
    write_semb(&path, &m)?;
    let back = read_semb(&path)?;
    assert_eq!(back, m);
    println!("round-tripped {} x {} matrix ({} bytes)", back.count(), back.dim(), m.to_semb_bytes().len());

    let mut collection = BTreeMap::new();
    for i in 0..20 {
        collection.insert(format!("doc-{i:02}"), gaussian_matrix(&mut r, 3 + i % 4, 16));
    }
    let container = dir.path().join("corpus.semb");
    store_embeddings(&collection, &container)?;
    let loaded = load_embeddings(&container)?;
    assert_eq!(loaded, collection);
    println!("container holds {} documents", loaded.len());

    let pool = EmbeddingMatrix::vstack(collection.values())?;
    let pca = pca_fit(&pool, 4)?;
    let total: f64 = pca.explained_variance.iter().sum();
    println!("top-4 explained variance {:.3?} (sum {total:.3})", pca.explained_variance);
    let reduced = pca_apply(&pca, &collection["doc-00"])?;
    println!("doc-00 reduced to {} x {}", reduced.count(), reduced.dim());
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
