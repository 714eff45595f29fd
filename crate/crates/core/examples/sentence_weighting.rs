//! Sentence weights and weighted pooling: uniform, half-document and TF-IDF.

use docpool::corpus::{collect_stats, Document};
use docpool::embed_store::EmbeddingMatrix;
use docpool::weighting::{idf4, make_weights, pool_weighted, sentence_tfidf_scores, tf4, TfVariant, WeightScheme};

pub fn run_example() -> docpool::Result<()> {
    let docs = vec![
        Document::from_texts("a", "en", &["the protein binds the receptor", "the end", "see the appendix"]),
        Document::from_texts("b", "en", &["the market opened", "the end"]),
        Document::from_texts("c", "en", &["the river froze", "the end"]),
    ];
    let stats = collect_stats(&docs);
    let doc = &docs[0];
    println!("tf4(the) = {:.3}, idf4(the) = {:.3}", tf4("the", doc), idf4("the", &stats));
    println!("tf4(protein) = {:.3}, idf4(protein) = {:.3}", tf4("protein", doc), idf4("protein", &stats));
    println!("sentence scores {:?}", sentence_tfidf_scores(doc, &stats, TfVariant::Tf4));

    let embs = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])?;
    for scheme in [
        WeightScheme::Uniform,
        WeightScheme::TopHalf,
        WeightScheme::BottomHalf,
        WeightScheme::TfIdf(TfVariant::Tf2),
        WeightScheme::TfIdf(TfVariant::Tf4),
    ] {
        let w = make_weights(doc, scheme, Some(&stats))?;
        let pooled = pool_weighted(&embs, &w)?;
        let total: f64 = w.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        println!("{:<12} weights {:.3?} pooled {:.3?}", w.scheme_tag, w.weights, pooled);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
