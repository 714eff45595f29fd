#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use docpool::corpus::{write_manifest, Document, Sentence, Split};
use docpool::embed_store::{store_embeddings, EmbeddingMatrix};
use docpool::synthetic::{noisy_sentences, random_document, rng, unit_vector};
use tempfile::TempDir;

pub const GENRES: [&str; 4] = ["ccat", "ecat", "gcat", "mcat"];

pub struct Fixture {
    pub dir: TempDir,
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub docs: Vec<Document>,
}

impl Fixture {
    pub fn new(docs: Vec<Document>, embeddings: &BTreeMap<String, EmbeddingMatrix>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.jsonl");
        let emb = dir.path().join("sentences.semb");
        write_manifest(&manifest, &docs).unwrap();
        if !embeddings.is_empty() {
            store_embeddings(embeddings, &emb).unwrap();
        }
        Fixture {
            dir,
            manifest,
            embeddings: emb,
            docs,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Four separable genres; `per_class` train docs and a quarter as many dev docs per class.
pub fn genre_fixture(seed: u64, per_class: usize, dim: usize) -> Fixture {
    let mut r = rng(seed);
    let prototypes: Vec<Vec<f64>> = GENRES.iter().map(|_| unit_vector(&mut r, dim)).collect();
    let mut docs = Vec::new();
    let mut embs = BTreeMap::new();
    for (split, count) in [(Split::Train, per_class), (Split::Dev, per_class.div_ceil(4))] {
        for (c, genre) in GENRES.iter().enumerate() {
            for i in 0..count {
                let id = format!("{split:?}-{genre}-{i:03}").to_lowercase();
                let mut doc = random_document(&mut r, &id, "en", 3 + i % 6, split);
                doc.labels = vec![genre.to_string()];
                embs.insert(id, noisy_sentences(&mut r, &prototypes[c], doc.sentences.len(), 0.3));
                docs.push(doc);
            }
        }
    }
    Fixture::new(docs, &embs)
}

/// Two sentences per doc, given subword totals.
pub fn doc_with_totals(id: &str, lang: &str, total: usize) -> Document {
    let half = total / 2;
    Document::new(
        id,
        lang,
        vec![
            Sentence::new("first sentence here").with_subwords(half),
            Sentence::new("second sentence here").with_subwords(total - half),
        ],
    )
}

pub fn docpool(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_docpool"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("docpool binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        stderr(out)
    );
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
