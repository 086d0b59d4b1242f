mod common;

use std::collections::{BTreeMap, BTreeSet};

use aspectir::corpus::Grade;
use aspectir::fusion::{fuse, gate_weights, GatingHead};
use aspectir::retrieval::{ndcg_at_k, recall_at_k, search, DenseIndex, GainMap, SearchResult};
use aspectir::tensor::{softmax, Matrix};
use aspectir::vocab::{build_value_vocab, Granularity, Tokenizer};
use common::oracles::{brute_ndcg, brute_recall, full_sort_top_k, split_and_union};
use proptest::prelude::*;

fn index_of(vectors: &[Vec<f64>]) -> (Vec<String>, DenseIndex) {
    let ids: Vec<String> = (0..vectors.len()).map(|i| format!("item{i:03}")).collect();
    let index = DenseIndex::new(ids.clone(), Matrix::from_rows(vectors)).unwrap();
    (ids, index)
}

/// Item vectors on a coarse integer grid so that tied scores are common.
fn grid_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, usize)> {
    (1usize..5).prop_flat_map(|dim| {
        (
            prop::collection::vec(prop::collection::vec((-2i32..=2).prop_map(f64::from), dim), 1..40),
            prop::collection::vec((-2i32..=2).prop_map(f64::from), dim),
            1usize..45,
        )
    })
}

fn continuous_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..6).prop_flat_map(|dim| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 2..30),
            prop::collection::vec(-1.0f64..1.0, dim),
        )
    })
}

fn grade() -> impl Strategy<Value = Grade> {
    prop::sample::select(Grade::ALL.to_vec())
}

/// A ranking over 12 ids plus up to 6 graded judgments drawn from 15 ids.
fn judged_ranking() -> impl Strategy<Value = (Vec<String>, BTreeMap<String, Grade>)> {
    let pool: Vec<String> = (0..15).map(|i| format!("d{i:02}")).collect();
    (
        Just(pool.clone()).prop_shuffle(),
        prop::collection::btree_map(prop::sample::select(pool), grade(), 0..7),
    )
        .prop_map(|(mut ranked, judged)| {
            ranked.truncate(12);
            (ranked, judged)
        })
}

fn result_of(ranked: &[String]) -> SearchResult {
    SearchResult {
        hits: ranked.iter().enumerate().map(|(i, id)| (id.clone(), -(i as f64))).collect(),
    }
}

fn positives(judged: &BTreeMap<String, Grade>) -> BTreeSet<String> {
    judged.iter().filter(|(_, &g)| g == Grade::E).map(|(id, _)| id.clone()).collect()
}

/// Householder reflection `I - 2vvᵀ/|v|²`, an orthogonal map.
fn reflect(v: &[f64], x: &[f64]) -> Vec<f64> {
    let vv: f64 = v.iter().map(|a| a * a).sum();
    let vx: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
    x.iter().zip(v).map(|(xi, vi)| xi - 2.0 * vx / vv * vi).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn search_matches_full_sort((vectors, query, k) in grid_instance()) {
        let (ids, index) = index_of(&vectors);
        let got = search(&index, &query, k).unwrap().hits;
        prop_assert_eq!(got, full_sort_top_k(&ids, &vectors, &query, k));
    }

    #[test]
    fn search_ignores_storage_order((vectors, query, k) in grid_instance(), seed in any::<u64>()) {
        let (ids, index) = index_of(&vectors);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = DenseIndex::new(
            order.iter().map(|&i| ids[i].clone()).collect(),
            Matrix::from_rows(&order.iter().map(|&i| vectors[i].clone()).collect::<Vec<_>>()),
        ).unwrap();
        prop_assert_eq!(search(&index, &query, k).unwrap(), search(&shuffled, &query, k).unwrap());
    }

    #[test]
    fn search_ranking_survives_rotation((vectors, query) in continuous_instance(), axis in prop::collection::vec(0.1f64..1.0, 6)) {
        let axis = &axis[..query.len()];
        let (ids, index) = index_of(&vectors);
        let rotated: Vec<Vec<f64>> = vectors.iter().map(|v| reflect(axis, v)).collect();
        let rindex = DenseIndex::new(ids, Matrix::from_rows(&rotated)).unwrap();
        let k = vectors.len();
        let a = search(&index, &query, k).unwrap();
        let b = search(&rindex, &reflect(axis, &query), k).unwrap();
        for ((ia, sa), (ib, sb)) in a.hits.iter().zip(&b.hits) {
            prop_assert!((sa - sb).abs() < 1e-9);
            if ia != ib {
                // only near-ties may swap
                let other = b.hits.iter().find(|(id, _)| id == ia).unwrap().1;
                prop_assert!((other - sb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant(xs in prop::collection::vec(-30.0f64..30.0, 1..20), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        for (a, b) in softmax(&xs).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn metrics_match_brute_force((ranked, judged) in judged_ranking(), k in 1usize..14) {
        let result = result_of(&ranked);
        let gains = GainMap::default();
        let pos = positives(&judged);
        prop_assert_eq!(recall_at_k(&result, &pos, k), brute_recall(&ranked, &pos, k));
        let fast = ndcg_at_k(&result, &judged, k, &gains);
        let slow = brute_ndcg(&ranked, &judged, k, &gains);
        prop_assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn metric_bounds_and_monotone_recall((ranked, judged) in judged_ranking()) {
        let result = result_of(&ranked);
        let pos = positives(&judged);
        let mut last = 0.0;
        for k in 1..=ranked.len() + 1 {
            let n = ndcg_at_k(&result, &judged, k, &GainMap::default());
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            if let Some(r) = recall_at_k(&result, &pos, k) {
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert!(r >= last);
                last = r;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gate_weights_sum_to_one(
        h in prop::collection::vec(-5.0f64..5.0, 4),
        u in prop::collection::vec(-3.0f64..3.0, 12),
        b in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let (u, b) = (Matrix::from_vec(3, 4, u), Matrix::from_vec(1, 3, b));
        let w = gate_weights(&h, GatingHead::new(&u, &b)).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(w.iter().all(|&x| x > 0.0));
        // the fused vector of identical slots is that slot
        let fused = fuse(&w, &[&h, &h, &h]).unwrap();
        for (a, b) in fused.iter().zip(&h) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

const WORDS: [&str; 12] = [
    "hand", "handmade", "products", "red", "dark", "darkred", "shoe", "shoes", "sport", "home", "garden", "tools",
];

fn phrase() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..4),
        prop::sample::select(vec![" ", "  ", ", ", " & ", "-"]),
        any::<bool>(),
    )
        .prop_map(|(ws, sep, upper)| {
            let p = ws.join(sep);
            if upper {
                p.to_uppercase()
            } else {
                p
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_matches_split_and_union(
        phrases in prop::collection::vec(phrase(), 1..6),
        budget in 40usize..80,
    ) {
        let texts: Vec<&str> = WORDS.iter().copied().chain(phrases.iter().map(String::as_str)).collect();
        let tok = Tokenizer::train(texts, budget).unwrap();
        for g in Granularity::ALL {
            let v = build_value_vocab("category", phrases.iter().map(String::as_str), g, &tok).unwrap();
            let got: BTreeSet<String> = v.values().iter().cloned().collect();
            prop_assert_eq!(v.values().len(), got.len());
            prop_assert_eq!(got, split_and_union(&phrases, g, &tok), "{:?}", g);
        }
    }
}
