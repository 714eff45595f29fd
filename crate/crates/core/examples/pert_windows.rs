//! Positional PERT windows and the TK-PERT / TF-PERT document vectors.

use docpool::corpus::Document;
use docpool::pert::{boilerplate_weights, tf_pert, tk_pert, window_weights, BoilerplateWeights, PertWindowBank};
use docpool::synthetic::{gaussian_matrix, rng};

pub fn run_example() -> docpool::Result<()> {
    let bank = PertWindowBank::new(4, 20.0, 1024)?;
    for j in 0..bank.parts() {
        let w = bank.window(j);
        println!(
            "window {j}: mode {:.3} on [{:.3}, {:.3}], alpha {:.2} beta {:.2}",
            w.mode, w.min, w.max, w.alpha, w.beta
        );
    }

    let weights = window_weights(&bank, 8)?;
    for j in 0..weights.parts() {
        let row: Vec<String> = weights.row(j).iter().map(|v| format!("{v:.2}")).collect();
        println!("part {j} sentence weights [{}]", row.join(" "));
    }

    let mut r = rng(7);
    let embs = gaussian_matrix(&mut r, 8, 6);
    let tk = tk_pert(&embs, &bank, &BoilerplateWeights::ones(8))?;
    println!("TK-PERT vector has {} = J x d entries, norm {:.6}", tk.len(), tk.iter().map(|v| v * v).sum::<f64>().sqrt());

    let tfidf = [0.9, 0.1, 0.1, 0.5, 0.5, 0.2, 0.8, 0.3];
    let tf = tf_pert(&embs, &bank, &BoilerplateWeights::ones(8), &tfidf)?;
    let cos: f64 = tk.iter().zip(&tf).map(|(a, b)| a * b).sum();
    println!("cosine(TK-PERT, TF-PERT) = {cos:.4}");

    let mut a = Document::from_texts("site-1", "en", &["Cookie notice", "Product launch news"]);
    let mut b = Document::from_texts("site-2", "en", &["Cookie notice", "Quarterly results"]);
    a.domain_id = Some("example.com".into());
    b.domain_id = Some("example.com".into());
    let bp = boilerplate_weights(&[a, b], true);
    println!("boilerplate weights for site-1: {:?}", bp["site-1"].as_slice());
    assert_eq!(bp["site-1"].as_slice(), &[0.5, 1.0]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
