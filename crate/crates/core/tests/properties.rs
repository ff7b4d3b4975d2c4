mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use simquery_core::dataset::{
    paired_semantic_sample, sample_balanced, Dataset, PairedSampling, QueryRecord, SamplingPlan,
};
use simquery_core::embedding::{cosine_similarity, dot, EmbeddingVector};
use simquery_core::eval::metrics::evaluate;
use simquery_core::index::{search_topk, BuildOptions, QueryIndex};

/// Every (class, language) group gets `per_group` records.
fn grid_dataset(classes: usize, languages: &[&str], per_group: usize) -> Dataset {
    let mut records = Vec::new();
    for i in 0..per_group {
        for c in 0..classes {
            for lang in languages {
                records.push(QueryRecord::new(
                    format!("k{c}-{i}#{lang}"),
                    format!("text {c} {i}"),
                    format!("c{c}"),
                    *lang,
                ));
            }
        }
    }
    Dataset::new(records).unwrap()
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-10.0f32..10.0, dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balanced_sample_has_n_per_class(classes in 1usize..6, extra in 0usize..5, n in 1usize..5, seed: u64) {
        let d = grid_dataset(classes, &["en"], n + extra);
        let s = sample_balanced(&d, &SamplingPlan::new(n, seed)).unwrap();
        for (_, count) in s.label_counts() {
            prop_assert_eq!(count, n);
        }
        prop_assert_eq!(s.labels().len(), classes);
        // A subsequence of the source, in source order.
        let mut source = d.iter().map(|r| &r.id);
        for r in s.iter() {
            prop_assert!(source.any(|id| *id == r.id));
        }
        prop_assert_eq!(sample_balanced(&d, &SamplingPlan::new(n, seed)).unwrap(), s);
    }

    #[test]
    fn stratified_sample_has_n_per_class_and_language(n in 1usize..4, extra in 0usize..3, seed: u64) {
        let langs = ["de", "en", "fr"];
        let d = grid_dataset(3, &langs, n + extra);
        let plan = SamplingPlan::new(n, seed).with_languages(langs.map(String::from).to_vec());
        let s = sample_balanced(&d, &plan).unwrap();
        let mut groups: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for r in s.iter() {
            *groups.entry((&r.label, &r.language)).or_insert(0) += 1;
        }
        prop_assert_eq!(groups.len(), 9);
        prop_assert!(groups.values().all(|&c| c == n));
    }

    #[test]
    fn paired_samples_share_keys_and_swap(n in 1usize..4, extra in 0usize..3, seed: u64) {
        let d = grid_dataset(2, &["en", "fr", "sw", "ur"], n + extra);
        let a: Vec<String> = vec!["en".into(), "fr".into()];
        let b: Vec<String> = vec!["sw".into(), "ur".into()];
        let plan = SamplingPlan::new(n, seed);
        let opts = PairedSampling::default();
        let (x, y) = paired_semantic_sample(&d, &plan, (&a, &b), &opts).unwrap();
        let keys = |s: &Dataset| s.iter().map(|r| r.semantic_key("#").to_string()).collect::<BTreeSet<_>>();
        prop_assert_eq!(keys(&x), keys(&y));
        prop_assert_eq!(keys(&x).len(), 2 * n);
        prop_assert!(x.iter().all(|r| a.contains(&r.language)));
        prop_assert!(y.iter().all(|r| b.contains(&r.language)));
        let (y2, x2) = paired_semantic_sample(&d, &plan, (&b, &a), &opts).unwrap();
        prop_assert_eq!(x, x2);
        prop_assert_eq!(y, y2);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_free(a in vector(12), b in vector(12), scale in 0.01f32..100.0) {
        let va = EmbeddingVector::new(a).unwrap();
        let vb = EmbeddingVector::new(b).unwrap();
        let ab = cosine_similarity(&va, &vb).unwrap();
        prop_assert_eq!(ab, cosine_similarity(&vb, &va).unwrap());
        prop_assert!((-1.0..=1.0).contains(&ab));
        let scaled = cosine_similarity(&va.scaled(scale).unwrap(), &vb).unwrap();
        prop_assert!((scaled - ab).abs() < 1e-5);
        let (ua, ub) = (va.normalize().unwrap(), vb.normalize().unwrap());
        prop_assert!((dot(ua.values(), ub.values()) - ab).abs() < 1e-5);
    }

    #[test]
    fn shorter_searches_are_prefixes(seed: u64, size in 4usize..80, k in 1usize..40) {
        let mut r = common::rng(seed);
        let vs: Vec<EmbeddingVector> = (0..size).map(|_| common::unit_vector(&mut r, 6)).collect();
        let ids: Vec<String> = (0..size).map(|i| format!("{i}")).collect();
        let ix = QueryIndex::from_vectors(
            ids.iter().zip(&vs).map(|(id, v)| (id.as_str(), "l", "en", v)),
            &BuildOptions::exact(),
        )
        .unwrap();
        let q = common::unit_vector(&mut r, 6);
        let long = search_topk(&ix, &q, k).unwrap();
        prop_assert_eq!(long.len(), k.min(size));
        for j in 1..=k {
            let short = search_topk(&ix, &q, j).unwrap();
            let prefix = long.truncated(j);
            prop_assert_eq!(short.items(), prefix.items());
        }
        let sims: Vec<f64> = long.items().iter().map(|n| n.similarity).collect();
        prop_assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn metrics_ignore_prediction_order(
        labels in prop::collection::vec((0usize..4, 0usize..5), 1..40),
        rotate in 0usize..40,
    ) {
        let alphabet = ["A", "B", "C", "D", "E"];
        let gold = Dataset::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, (g, _))| QueryRecord::new(format!("q{i}"), "t", alphabet[*g], "en"))
                .collect(),
        )
        .unwrap();
        let preds: Vec<(String, String)> = labels
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (format!("q{i}"), alphabet[*p].to_string()))
            .collect();
        let mut moved = preds.clone();
        let len = moved.len();
        moved.rotate_left(rotate % len);
        moved.reverse();
        let a = evaluate(&preds, &gold, None).unwrap();
        let b = evaluate(&moved, &gold, None).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((0.0..=1.0).contains(&a.accuracy) && (0.0..=1.0).contains(&a.macro_f1));
        prop_assert_eq!(a.accuracy, a.correct as f64 / a.total as f64);
    }
}
