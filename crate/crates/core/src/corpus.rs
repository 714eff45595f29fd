//! Documents, word tokenization, excerpt selection and collection statistics.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Maximum payload accepted by transformer-style sentence encoders
/// (512 positions minus the two special tokens).
pub const MAX_ENCODER_TOKENS: usize = 510;
pub const DEFAULT_TOP_TOKENS: usize = 128;
pub const DEFAULT_BOTTOM_TOKENS: usize = 382;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    #[serde(skip)]
    pub words: Vec<String>,
    #[serde(default)]
    pub subword_count: usize,
}

impl Sentence {
    /// Builds a sentence with words from the default tokenizer.
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let words = tokenize_words(&text);
        Sentence {
            text,
            words,
            subword_count: 0,
        }
    }

    pub fn with_subwords(mut self, subword_count: usize) -> Self {
        self.subword_count = subword_count;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_id: Option<String>,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub labels: Vec<String>,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, lang: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document {
            doc_id: doc_id.into(),
            lang: lang.into(),
            domain_id: None,
            split: Split::Train,
            labels: Vec::new(),
            sentences,
        }
    }

    /// Convenience constructor tokenizing each text with the rules for `lang`.
    pub fn from_texts<S: AsRef<str>>(doc_id: impl Into<String>, lang: impl Into<String>, texts: &[S]) -> Self {
        let lang = lang.into();
        let sentences = texts
            .iter()
            .map(|t| Sentence {
                text: t.as_ref().to_string(),
                words: tokenize_words_for_lang(t.as_ref(), &lang),
                subword_count: 0,
            })
            .collect();
        Document::new(doc_id, lang, sentences)
    }

    pub fn total_subwords(&self) -> usize {
        self.sentences.iter().map(|s| s.subword_count).sum()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flat_map(|s| s.words.iter().map(String::as_str))
    }

    /// Recomputes every sentence's word list with `tokenizer`.
    pub fn retokenize(&mut self, tokenizer: &dyn WordTokenizer) {
        for s in &mut self.sentences {
            s.words = tokenizer.tokenize(&s.text, &self.lang);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.doc_id.is_empty() {
            return Err(Error::Validation("document with empty doc_id".into()));
        }
        if self.sentences.is_empty() {
            return Err(Error::Validation(format!(
                "document {} has no sentences",
                self.doc_id
            )));
        }
        Ok(())
    }
}

/// Word tokenizer used for term statistics.
pub trait WordTokenizer: Send + Sync {
    fn tokenize(&self, text: &str, lang: &str) -> Vec<String>;
}

/// NFC + lowercase + whitespace split + edge punctuation strip, with a
/// per-codepoint fallback for Japanese and Chinese.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultTokenizer;

impl WordTokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str, lang: &str) -> Vec<String> {
        tokenize_words_for_lang(text, lang)
    }
}

pub fn tokenize_words(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized
        .split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|tok| !tok.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_unsegmented_script(lang: &str) -> bool {
    let primary = lang.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase();
    matches!(primary.as_str(), "ja" | "zh")
}

/// Like [`tokenize_words`], but Japanese and Chinese text (no whitespace word
/// boundaries) is split into one token per alphanumeric code point.
pub fn tokenize_words_for_lang(text: &str, lang: &str) -> Vec<String> {
    if !is_unsegmented_script(lang) {
        return tokenize_words(text);
    }
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized
        .chars()
        .filter(|c| c.is_alphanumeric())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExcerptStrategy {
    AllTokens,
    TopN,
    BottomN,
    TopBottom,
}

/// Half-open token ranges over a document's concatenated subword stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRangeSpec {
    pub doc_id: String,
    pub ranges: Vec<(usize, usize)>,
    pub strategy_tag: ExcerptStrategy,
}

impl TokenRangeSpec {
    pub fn selected(&self) -> usize {
        self.ranges.iter().map(|(s, e)| e - s).sum()
    }
}

/// Computes the token ranges an encoder should see for `doc`.
///
/// `n` is the head length (the only length for `TopN`/`BottomN`) and `m` the
/// tail length for `TopBottom`. Ranges are sorted, disjoint and merged when
/// they touch.
pub fn select_excerpt(doc: &Document, strategy: ExcerptStrategy, n: usize, m: usize) -> Result<TokenRangeSpec> {
    let total = doc.total_subwords();
    if total == 0 {
        return Err(Error::UnencodedDocument(doc.doc_id.clone()));
    }
    let limit_ok = match strategy {
        ExcerptStrategy::AllTokens => true,
        ExcerptStrategy::TopN | ExcerptStrategy::BottomN => (1..=MAX_ENCODER_TOKENS).contains(&n),
        ExcerptStrategy::TopBottom => n + m >= 1 && n + m <= MAX_ENCODER_TOKENS,
    };
    if !limit_ok {
        return Err(Error::InvalidParameter(format!(
            "excerpt lengths n={n}, m={m} must select between 1 and {MAX_ENCODER_TOKENS} tokens"
        )));
    }
    let ranges = match strategy {
        ExcerptStrategy::AllTokens => vec![(0, total)],
        ExcerptStrategy::TopN => vec![(0, n.min(total))],
        ExcerptStrategy::BottomN => vec![(total.saturating_sub(n), total)],
        ExcerptStrategy::TopBottom => {
            let head_end = n.min(total);
            let tail_start = head_end.max(total.saturating_sub(m));
            let mut ranges = Vec::with_capacity(2);
            if head_end > 0 {
                ranges.push((0, head_end));
            }
            if tail_start < total {
                match ranges.last_mut() {
                    Some(last) if last.1 >= tail_start => last.1 = total,
                    _ => ranges.push((tail_start, total)),
                }
            }
            ranges
        }
    };
    Ok(TokenRangeSpec {
        doc_id: doc.doc_id.clone(),
        ranges,
        strategy_tag: strategy,
    })
}

/// Top and bottom halves of a document's sentence indices. An odd middle
/// sentence belongs to the top half.
pub fn split_halves(n_sentences: usize) -> (Range<usize>, Range<usize>) {
    let mid = n_sentences.div_ceil(2);
    (0..mid, mid..n_sentences)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub n_docs: usize,
    pub doc_freq: HashMap<String, usize>,
    pub sentence_doc_freq: HashMap<String, usize>,
    pub avg_len: f64,
    pub max_len: usize,
}

impl CollectionStats {
    pub fn df(&self, word: &str) -> usize {
        self.doc_freq.get(word).copied().unwrap_or(0)
    }
}

pub fn collect_stats<'a, I>(collection: I) -> CollectionStats
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut stats = CollectionStats::default();
    let mut len_sum = 0u64;
    for doc in collection {
        stats.n_docs += 1;
        let words: HashSet<&str> = doc.words().collect();
        for w in words {
            *stats.doc_freq.entry(w.to_string()).or_default() += 1;
        }
        let texts: HashSet<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
        for t in texts {
            *stats.sentence_doc_freq.entry(t.to_string()).or_default() += 1;
        }
        let len = doc.total_subwords();
        len_sum += len as u64;
        stats.max_len = stats.max_len.max(len);
    }
    if stats.n_docs > 0 {
        stats.avg_len = len_sum as f64 / stats.n_docs as f64;
    }
    stats
}

/// Reads a JSON-lines manifest, tokenizing sentences with `tokenizer`.
/// Duplicate doc ids and empty documents are rejected.
pub fn read_manifest_with(path: impl AsRef<Path>, tokenizer: &dyn WordTokenizer) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: Document = serde_json::from_str(&line).map_err(|e| {
            Error::Validation(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        doc.validate()?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::Validation(format!("duplicate doc_id {}", doc.doc_id)));
        }
        doc.retokenize(tokenizer);
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_manifest_with(path, &DefaultTokenizer)
}

pub fn write_manifest<'a>(path: impl AsRef<Path>, docs: impl IntoIterator<Item = &'a Document>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ranges<'a>(path: impl AsRef<Path>, specs: impl IntoIterator<Item = &'a TokenRangeSpec>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for spec in specs {
        serde_json::to_writer(&mut w, spec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc_with_total(total: usize) -> Document {
        let mut d = Document::from_texts("d", "en", &["a b c"]);
        d.sentences[0].subword_count = total;
        d
    }

    #[test]
    fn tokenizer_lowercases_and_strips_punctuation() {
        assert_eq!(tokenize_words("The cat, the CAT."), ["the", "cat", "the", "cat"]);
        assert!(tokenize_words("").is_empty());
        assert_eq!(tokenize_words("état  d'urgence"), ["état", "d'urgence"]);
    }

    #[test]
    fn tokenizer_normalizes_to_nfc() {
        // "e" + combining acute accent
        assert_eq!(tokenize_words("e\u{301}tat"), ["état"]);
        assert_eq!(tokenize_words(" -- ... "), Vec::<String>::new());
    }

    #[test]
    fn cjk_falls_back_to_codepoints() {
        assert_eq!(tokenize_words_for_lang("東京都。", "ja"), ["東", "京", "都"]);
        assert_eq!(tokenize_words_for_lang("中文 ab", "zh-CN"), ["中", "文", "a", "b"]);
        assert_eq!(tokenize_words_for_lang("Hello world", "en"), ["hello", "world"]);
    }

    #[test]
    fn excerpt_examples() {
        let d = doc_with_total(1000);
        let top = select_excerpt(&d, ExcerptStrategy::TopN, 510, 0).unwrap();
        assert_eq!(top.ranges, [(0, 510)]);
        let tb = select_excerpt(&d, ExcerptStrategy::TopBottom, 128, 382).unwrap();
        assert_eq!(tb.ranges, [(0, 128), (618, 1000)]);
        assert_eq!(tb.selected(), 510);
        let bottom = select_excerpt(&d, ExcerptStrategy::BottomN, 510, 0).unwrap();
        assert_eq!(bottom.ranges, [(490, 1000)]);

        let short = doc_with_total(300);
        let tb = select_excerpt(&short, ExcerptStrategy::TopBottom, 128, 382).unwrap();
        assert_eq!(tb.ranges, [(0, 300)]);
        let tiny = doc_with_total(100);
        let tb = select_excerpt(&tiny, ExcerptStrategy::TopBottom, 128, 382).unwrap();
        assert_eq!(tb.ranges, [(0, 100)]);
    }

    #[test]
    fn excerpt_rejects_unencoded_and_oversized() {
        let d = doc_with_total(0);
        assert!(matches!(
            select_excerpt(&d, ExcerptStrategy::AllTokens, 0, 0),
            Err(Error::UnencodedDocument(_))
        ));
        let d = doc_with_total(10);
        assert!(select_excerpt(&d, ExcerptStrategy::TopN, 511, 0).is_err());
        assert!(select_excerpt(&d, ExcerptStrategy::TopBottom, 128, 383).is_err());
    }

    #[test]
    fn halves() {
        assert_eq!(split_halves(4), (0..2, 2..4));
        assert_eq!(split_halves(5), (0..3, 3..5));
        assert_eq!(split_halves(1), (0..1, 1..1));
    }

    #[test]
    fn stats_examples() {
        let mut a = Document::from_texts("a", "en", &["cat cat cat cat cat dog"]);
        let mut b = Document::from_texts("b", "en", &["dog"]);
        let c = Document::from_texts("c", "en", &["dog bird"]);
        a.sentences[0].subword_count = 100;
        b.sentences[0].subword_count = 300;
        let stats = collect_stats([&a, &b, &c]);
        assert_eq!(stats.n_docs, 3);
        assert_eq!(stats.df("dog"), 3);
        assert_eq!(stats.df("cat"), 1);
        assert_eq!(stats.df("fish"), 0);
        assert_eq!(stats.max_len, 300);

        let two = collect_stats([&a, &b]);
        assert_eq!(two.avg_len, 200.0);
        assert_eq!(two.max_len, 300);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut d = Document::from_texts("x1", "fr", &["Bonjour le monde.", "Au revoir."]);
        d.domain_id = Some("example.fr".into());
        d.labels = vec!["GCAT".into()];
        d.split = Split::Test;
        write_manifest(&path, [&d]).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, vec![d]);
    }

    #[test]
    fn manifest_rejects_duplicates_and_empty_docs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let line = r#"{"doc_id":"a","lang":"en","sentences":[{"text":"x"}]}"#;
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Validation(_))));
        std::fs::write(&path, r#"{"doc_id":"a","lang":"en","sentences":[]}"#).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn excerpt_budget_holds(total in 1usize..5000) {
            let d = doc_with_total(total);
            for (strategy, n, m) in [
                (ExcerptStrategy::TopN, 510, 0),
                (ExcerptStrategy::BottomN, 510, 0),
                (ExcerptStrategy::TopBottom, 128, 382),
            ] {
                let spec = select_excerpt(&d, strategy, n, m).unwrap();
                prop_assert!(spec.selected() <= total.min(MAX_ENCODER_TOKENS));
                prop_assert!(spec.ranges.windows(2).all(|w| w[0].1 < w[1].0));
                prop_assert!(spec.ranges.iter().all(|&(s, e)| s < e && e <= total));
            }
            if total <= 510 {
                let all = select_excerpt(&d, ExcerptStrategy::AllTokens, 0, 0).unwrap();
                let top = select_excerpt(&d, ExcerptStrategy::TopN, 510, 0).unwrap();
                prop_assert_eq!(all.ranges, top.ranges);
            }
        }

        #[test]
        fn halves_partition(n in 1usize..200) {
            let (top, bottom) = split_halves(n);
            prop_assert_eq!(top.start, 0);
            prop_assert_eq!(top.end, bottom.start);
            prop_assert_eq!(bottom.end, n);
            prop_assert!(top.len() >= bottom.len());
        }

        #[test]
        fn stats_permutation_invariant(seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let vocab = ["a", "b", "c", "d", "e", "f"];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut docs: Vec<Document> = (0..6)
                .map(|i| {
                    let text: Vec<&str> = (0..5).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
                    let mut d = Document::from_texts(format!("d{i}"), "en", &[text.join(" ")]);
                    d.sentences[0].subword_count = i * 7 + 1;
                    d
                })
                .collect();
            let before = collect_stats(&docs);
            docs.shuffle(&mut rng);
            prop_assert_eq!(before, collect_stats(&docs));
        }
    }
}
