//! Token-budgeted excerpts for a 510-token encoder.
//!
//! Excerpt strategies do not pool sentence embeddings; they pick subword
//! ranges that the external encoder adapter embeds in one pass.

use docpool::corpus::{select_excerpt, split_halves, tokenize_words, write_ranges, Document, ExcerptStrategy, Sentence};

pub fn run_example() -> docpool::Result<()> {
    let sentences = [
        ("Quarterly revenue rose by 4%.", 300),
        ("The board approved the merger.", 400),
        ("Shares closed higher on Friday.", 200),
    ];
    let doc = Document::new(
        "news-001",
        "en",
        sentences.iter().map(|(t, n)| Sentence::new(*t).with_subwords(*n)).collect(),
    );
    println!("{} subwords in {} sentences", doc.total_subwords(), doc.sentences.len());
    println!("words of the first sentence: {:?}", tokenize_words(&doc.sentences[0].text));

    let specs = vec![
        select_excerpt(&doc, ExcerptStrategy::AllTokens, 0, 0)?,
        select_excerpt(&doc, ExcerptStrategy::TopN, 510, 0)?,
        select_excerpt(&doc, ExcerptStrategy::BottomN, 510, 0)?,
        select_excerpt(&doc, ExcerptStrategy::TopBottom, 128, 382)?,
    ];
    for s in &specs {
        println!("{:<12} {:?} ({} tokens)", format!("{:?}", s.strategy_tag), s.ranges, s.selected());
    }
    assert_eq!(specs[1].ranges, vec![(0, 510)]);
    assert_eq!(specs[2].ranges, vec![(390, 900)]);
    assert_eq!(specs[3].ranges, vec![(0, 128), (518, 900)]);

    let (top, bottom) = split_halves(doc.sentences.len());
    println!("top half sentences {top:?}, bottom half {bottom:?}");

    let dir = tempfile::tempdir().map_err(|e| docpool::Error::Validation(e.to_string()))?;
    let path = dir.path().join("news.ranges.jsonl");
    write_ranges(&path, &specs)?;
    println!("ranges file:\n{}", std::fs::read_to_string(&path).unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
