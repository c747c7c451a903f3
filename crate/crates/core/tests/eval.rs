use lightmove_core::eval::{compute_metrics, rank_of_target};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sorts every index by (score descending, index ascending) and returns the
/// 1-based position of the target.
fn brute_force_rank(row: &[f64], target: usize) -> usize {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| i == target).unwrap() + 1
}

#[test]
fn metrics_agree_with_full_sort_on_random_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ranks = Vec::new();
    let mut oracle = Vec::new();
    for i in 0..1000 {
        let n = rng.gen_range(1..40);
        // Every fifth row is quantized to force ties.
        let row: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = rng.gen();
                if i % 5 == 0 {
                    (x * 4.0).floor() / 4.0
                } else {
                    x
                }
            })
            .collect();
        let target = rng.gen_range(0..n);
        ranks.push(rank_of_target(&row, target).unwrap());
        oracle.push(brute_force_rank(&row, target));
    }
    assert_eq!(ranks, oracle);
    let m = compute_metrics(&ranks).unwrap();
    let n = oracle.len() as f64;
    let hits = |k| oracle.iter().filter(|&&r| r <= k).count() as f64 / n;
    assert_eq!(m.hits1, hits(1));
    assert_eq!(m.hits5, hits(5));
    assert_eq!(m.hits10, hits(10));
    assert_eq!(
        m.mrr,
        oracle.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n
    );
}

proptest! {
    #[test]
    fn metric_ordering(ranks in prop::collection::vec(1usize..30, 1..50)) {
        let m = compute_metrics(&ranks).unwrap();
        prop_assert!(m.hits1 <= m.hits5 && m.hits5 <= m.hits10);
        prop_assert!(m.hits1 <= m.mrr && m.mrr <= 1.0);
    }
}
