//! Cross-lingual document alignment: top-K retrieval, competitive linking
//! within domains, recall with a bootstrap interval.

use docpool::align::{align_collections, recall_with_ci, IndexBackend, DEFAULT_TOPK};
use docpool::synthetic::parallel_collections;

pub fn run_example() -> docpool::Result<()> {
    for sigma in [0.0, 0.1, 0.3, 0.5] {
        let data = parallel_collections(11, 400, 20, 32, sigma);
        let exact = align_collections(&data.src, &data.tgt, DEFAULT_TOPK, IndexBackend::Exact)?;
        let ci = recall_with_ci(&exact, &data.gold, 1000, 0)?;
        println!("sigma {sigma:.1}: {} pairs, recall {ci}", exact.pairs.len());
    }

    let data = parallel_collections(11, 400, 1, 32, 0.1);
    let ivf = IndexBackend::Partitioned {
        n_lists: 16,
        n_probe: 4,
        seed: 0,
    };
    let approx = align_collections(&data.src, &data.tgt, DEFAULT_TOPK, ivf)?;
    let ci = recall_with_ci(&approx, &data.gold, 1000, 0)?;
    println!("partitioned index, 4 of 16 lists probed: recall {ci}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> docpool::Result<()> {
    run_example()
}
