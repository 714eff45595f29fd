//! The file-based pipeline: manifest and SEMB in, statistics, composed
//! document vectors and alignment out. The `docpool` binary is a thin
//! wrapper over these calls.

use std::collections::BTreeMap;

use docpool::align::{IndexBackend, DEFAULT_TOPK};
use docpool::commands::{cmd_align, cmd_compose, cmd_stats, format_stats, AlignConfig, ComposeConfig, ComposeOutcome, Strategy};
use docpool::corpus::{write_manifest, Document, Split};
use docpool::embed_store::{store_embeddings, EmbeddingMatrix};
use docpool::synthetic::{noisy_sentences, random_document, rng, unit_vector};

pub fn run_example() -> docpool::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| docpool::Error::Validation(e.to_string()))?;
    let mut r = rng(9);
    let dim = 24;

    // 30 English/French document pairs; both sides of a pair share a topic vector.
    let mut docs: Vec<Document> = Vec::new();
    let mut embeddings: BTreeMap<String, EmbeddingMatrix> = BTreeMap::new();
    let mut gold = String::new();
    for i in 0..30 {
        let topic = unit_vector(&mut r, dim);
        for lang in ["en", "fr"] {
            let id = format!("{lang}-{i:02}");
            let mut doc = random_document(&mut r, &id, lang, 4 + i % 5, Split::Train);
            doc.domain_id = Some(format!("site{}", i % 3));
            embeddings.insert(id, noisy_sentences(&mut r, &topic, doc.sentences.len(), 0.5));
            docs.push(doc);
        }
        gold.push_str(&format!("en-{i:02}\tfr-{i:02}\n"));
    }
    let manifest = dir.path().join("manifest.jsonl");
    let sentences = dir.path().join("sentences.semb");
    let gold_path = dir.path().join("gold.tsv");
    write_manifest(&manifest, &docs)?;
    store_embeddings(&embeddings, &sentences)?;
    std::fs::write(&gold_path, gold).map_err(|e| docpool::Error::Validation(e.to_string()))?;

    print!("{}", format_stats(&cmd_stats(&manifest, None)?));

    for strategy in [Strategy::SentenceAverage, Strategy::TfIdf, Strategy::TkPert] {
        let vectors = dir.path().join(format!("{strategy}.semb"));
        let mut cfg = ComposeConfig::new(&manifest, &sentences, strategy, &vectors);
        cfg.pert.parts = 4;
        cfg.boilerplate = true;
        if let ComposeOutcome::Vectors { count, dim, .. } = cmd_compose(&cfg)? {
            println!("{strategy}: {count} vectors of dim {dim}");
        }
        let metrics = cmd_align(&AlignConfig {
            manifest: manifest.clone(),
            embeddings: vectors,
            src_lang: "en".into(),
            tgt_lang: "fr".into(),
            gold: Some(gold_path.clone()),
            topk: DEFAULT_TOPK,
            backend: IndexBackend::Exact,
            bootstrap_samples: 1000,
            seed: 0,
            out: dir.path().join(format!("{strategy}.pairs.tsv")),
        })?;
        println!("    recall {:.3} [{:.3}, {:.3}]", metrics.recall, metrics.ci_low, metrics.ci_high);
    }

    let ranges = ComposeConfig::new(&manifest, &sentences, Strategy::TopBottom, dir.path().join("excerpts"));
    if let ComposeOutcome::Ranges { path, count } = cmd_compose(&ranges)? {
        println!("wrote {count} excerpt specs to {}", path.file_name().unwrap_or_default().to_string_lossy());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
