//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::RngExt;

use simquery_core::baseline::{fit, logreg_loss_grad, predict_logreg, LogRegModel, TrainConfig};
use simquery_core::classify::{
    classify_batch, classify_query_with, resolve_label, ClassifyOptions,
};
use simquery_core::dataset::{sample_balanced, Dataset, QueryRecord, SamplingPlan};
use simquery_core::embedding::{dot, EmbeddingStore, EmbeddingVector};
use simquery_core::eval::metrics::evaluate;
use simquery_core::eval::{
    rerun_from_manifest, run_experiment, write_outputs, ExperimentConfig, IndexFilter, Manifest,
    Method, RunOptions,
};
use simquery_core::index::{
    build_index, measure_recall, search_topk, BuildOptions, HnswParams, Neighbor, NeighborSet,
    QueryIndex, SearchParams,
};
use simquery_core::sweep::{sweep_k, KRange};

use common::{around, axis_center, corpus, rng, unit_vector};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    check(took <= budget, || {
        format!("took {took:.1?}, budget {budget:?}")
    })
}

fn exact_search_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(11);
    let dims = [8, 64];
    let sizes = [10, 200, 1000];
    let ks = [1, 5, 31];
    for instance in 0..100 {
        let dim = dims[instance % 2];
        let size = sizes[(instance / 2) % 3];
        let k = ks[(instance / 6) % 3];
        let vectors: Vec<EmbeddingVector> = (0..size)
            .map(|i| {
                // A few exact duplicates exercise the id tie-break.
                if i > 0 && r.random_range(0..20) == 0 {
                    EmbeddingVector::new(common::gaussian(&mut rng(i as u64), dim)).unwrap()
                } else {
                    EmbeddingVector::new(common::gaussian(&mut r, dim)).unwrap()
                }
            })
            .collect();
        let ids: Vec<String> = (0..size)
            .map(|i| format!("e{:05}", (i * 7919) % 100_000))
            .collect();
        let ix = QueryIndex::from_vectors(
            ids.iter()
                .zip(&vectors)
                .map(|(id, v)| (id.as_str(), "x", "en", v)),
            &BuildOptions::exact(),
        )
        .map_err(|e| e.to_string())?;
        let q = EmbeddingVector::new(common::gaussian(&mut r, dim)).unwrap();

        // Oracle: score every stored unit vector, sort all of them.
        let qn = q.normalize().unwrap();
        let mut all: Vec<(f64, &str)> = ix
            .entries()
            .iter()
            .map(|e| (dot(qn.values(), e.vector()), e.id.as_str()))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let want: Vec<&str> = all.iter().take(k).map(|p| p.1).collect();

        let got = search_topk(&ix, &q, k).map_err(|e| e.to_string())?;
        check(got.ids() == want, || {
            format!("instance {instance} (dim {dim}, size {size}, k {k}) differs from full sort")
        })?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("100 instances match, {:.1?}", start.elapsed()))
}

fn hnsw_recall() -> Outcome {
    let start = Instant::now();
    let mut r = rng(23);
    let vectors: Vec<EmbeddingVector> = (0..1000).map(|_| unit_vector(&mut r, 64)).collect();
    let ids: Vec<String> = (0..1000).map(|i| format!("v{i:04}")).collect();
    let items = || {
        ids.iter()
            .zip(&vectors)
            .map(|(id, v)| (id.as_str(), "x", "en", v))
    };
    let exact =
        QueryIndex::from_vectors(items(), &BuildOptions::exact()).map_err(|e| e.to_string())?;
    let ann = QueryIndex::from_vectors(items(), &BuildOptions::hnsw(HnswParams::default()))
        .map_err(|e| e.to_string())?;
    let queries: Vec<EmbeddingVector> = (0..500).map(|_| unit_vector(&mut r, 64)).collect();
    let recall = measure_recall(&ann, &exact, &queries, 31, &SearchParams::default())
        .map_err(|e| e.to_string())?;
    check(recall >= 0.95, || format!("recall@31 {recall:.4} < 0.95"))?;
    let full = measure_recall(
        &ann,
        &exact,
        &queries,
        31,
        &SearchParams {
            ef_search: Some(1000),
        },
    )
    .map_err(|e| e.to_string())?;
    check(full == 1.0, || format!("recall@31 at ef=n is {full}"))?;
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "recall@31 {recall:.4} default, {full} at ef=n, {:.1?}",
        start.elapsed()
    ))
}

fn gaussian_clusters_end_to_end() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let dim = 4;
    let sigma = 1.0;
    // Centers 8 sigma out on orthogonal axes, so about 11 sigma apart.
    // Cosine only sees direction, so the dimension is kept low: off-axis
    // noise grows with sqrt(dim) and would blur the angular separation.
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut store = EmbeddingStore::new(dim, "clusters").unwrap();
    for c in 0..3 {
        let center = axis_center(dim, c, 8.0);
        for i in 0..60 {
            let id = format!("train-{c}-{i}");
            store
                .insert(id.clone(), around(&mut r, &center, sigma))
                .unwrap();
            train.push(QueryRecord::new(id, "q", format!("class{c}"), "en"));
        }
        for i in 0..30 {
            let id = format!("test-{c}-{i}");
            store
                .insert(id.clone(), around(&mut r, &center, sigma))
                .unwrap();
            test.push(QueryRecord::new(id, "q", format!("class{c}"), "en"));
        }
    }
    let train = Dataset::new(train).unwrap();
    let test = Dataset::new(test).unwrap();
    let sampled = sample_balanced(&train, &SamplingPlan::new(31, 9)).map_err(|e| e.to_string())?;
    check(sampled.len() == 93, || {
        format!("sampled {} records", sampled.len())
    })?;
    let ix = build_index(&sampled, &store, &BuildOptions::exact()).map_err(|e| e.to_string())?;
    let queries: Vec<(String, EmbeddingVector)> = test
        .iter()
        .map(|t| (t.id.clone(), store.get(&t.id).unwrap().clone()))
        .collect();
    let preds = classify_batch(&ix, &queries, 31, &ClassifyOptions::default())
        .into_iter()
        .map(|b| b.outcome.map(|p| (b.id, p.predicted_label)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let m = evaluate(&preds, &test, None).map_err(|e| e.to_string())?;
    check(m.accuracy == 1.0, || format!("accuracy {}", m.accuracy))?;
    within(Duration::from_secs(5), start)?;
    Ok(format!(
        "accuracy 1.0 on 90 queries, k=31, {:.1?}",
        start.elapsed()
    ))
}

/// Independent vote: most neighbors, then highest summed similarity (each
/// label's similarities summed from largest down), then smallest label.
fn oracle_vote(items: &[(String, f64)]) -> (String, bool) {
    let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (label, s) in items {
        by_label.entry(label).or_default().push(*s);
    }
    let top = by_label.values().map(Vec::len).max().unwrap();
    let mut best: Option<(&str, f64)> = None;
    let mut tied = 0;
    for (label, sims) in &mut by_label {
        if sims.len() != top {
            continue;
        }
        tied += 1;
        sims.sort_by(|a, b| b.total_cmp(a));
        let sum: f64 = sims.iter().sum();
        if best.map_or(true, |(_, b)| sum > b) {
            best = Some((label, sum));
        }
    }
    (best.unwrap().0.to_string(), tied > 1)
}

fn vote_properties() -> Outcome {
    let mut r = rng(31);
    let labels = ["a", "b", "c", "d"];
    let cases = 2000;
    let mut dominance_cases = 0;
    let mut tie_cases = 0;
    for case in 0..cases {
        let n = r.random_range(1..=15);
        let alphabet = r.random_range(1..=labels.len());
        let items: Vec<(String, f64)> = (0..n)
            .map(|_| {
                let label = labels[r.random_range(0..alphabet)].to_string();
                // Coarse similarities make equal sums common.
                let sim = f64::from(r.random_range(-8i32..=8)) / 8.0;
                (label, sim)
            })
            .collect();
        let neighbors: Vec<Neighbor> = items
            .iter()
            .enumerate()
            .map(|(i, (label, sim))| Neighbor {
                similarity: *sim,
                id: format!("n{i:02}"),
                label: label.clone(),
                language: "en".into(),
            })
            .collect();
        let ns = NeighborSet::from_unsorted(neighbors.clone(), n);
        let p = resolve_label(&ns).map_err(|e| format!("case {case}: unresolved: {e}"))?;

        let (want, want_tie) = oracle_vote(&items);
        check(
            p.predicted_label == want && p.tie_broken == want_tie,
            || {
                format!(
                    "case {case}: got {} (tie {}), oracle {want} (tie {want_tie})",
                    p.predicted_label, p.tie_broken
                )
            },
        )?;
        tie_cases += usize::from(want_tie);

        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (label, _) in &items {
            *counts.entry(label).or_insert(0) += 1;
        }
        if let Some((label, _)) = counts.iter().find(|(_, &c)| 2 * c > n) {
            dominance_cases += 1;
            check(p.predicted_label == *label && !p.tie_broken, || {
                format!(
                    "case {case}: strict majority {label} lost to {}",
                    p.predicted_label
                )
            })?;
        }

        let mut shuffled = neighbors;
        shuffled.shuffle(&mut r);
        let q =
            resolve_label(&NeighborSet::from_unsorted(shuffled, n)).map_err(|e| e.to_string())?;
        check(
            q.predicted_label == p.predicted_label
                && q.vote_counts == p.vote_counts
                && q.tie_broken == p.tie_broken,
            || format!("case {case}: permutation changed the vote"),
        )?;
    }
    Ok(format!(
        "{cases} neighbor sets ({dominance_cases} with a strict majority, {tie_cases} ties)"
    ))
}

fn metrics_fixtures() -> Outcome {
    let gold = |labels: &[&str]| {
        Dataset::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| QueryRecord::new(format!("q{i}"), "q", *l, "en"))
                .collect(),
        )
        .unwrap()
    };
    let preds = |labels: &[&str]| -> Vec<(String, String)> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("q{i}"), l.to_string()))
            .collect()
    };
    let m = evaluate(
        &preds(&["A", "B", "B", "B"]),
        &gold(&["A", "A", "B", "B"]),
        None,
    )
    .map_err(|e| e.to_string())?;
    check(m.accuracy == 0.75, || {
        format!("fixture accuracy {}", m.accuracy)
    })?;
    check((m.macro_f1 - 0.7333).abs() <= 1e-4, || {
        format!("fixture macro-F1 {}", m.macro_f1)
    })?;

    let mut r = rng(47);
    let alphabet = ["A", "B", "C", "D", "E", "Z"];
    for case in 0..100 {
        let n = r.random_range(1..=60);
        let gold_labels: Vec<&str> = (0..n).map(|_| alphabet[r.random_range(0..5)]).collect();
        let pred_labels: Vec<&str> = (0..n).map(|_| alphabet[r.random_range(0..6)]).collect();
        let g = gold(&gold_labels);
        let m = evaluate(&preds(&pred_labels), &g, None).map_err(|e| e.to_string())?;

        // Path two: straight from the pairs.
        let correct = gold_labels
            .iter()
            .zip(&pred_labels)
            .filter(|(a, b)| a == b)
            .count();
        let acc = correct as f64 / n as f64;
        let gold_set: BTreeSet<&str> = gold_labels.iter().copied().collect();
        let mut f1s = Vec::new();
        for l in &gold_set {
            let tp = gold_labels
                .iter()
                .zip(&pred_labels)
                .filter(|(a, b)| *a == l && *b == l)
                .count() as f64;
            let predicted = pred_labels.iter().filter(|p| *p == l).count() as f64;
            let support = gold_labels.iter().filter(|g| *g == l).count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = tp / support;
            f1s.push(if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            });
        }
        let macro_f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
        check(
            m.accuracy == acc && (m.macro_f1 - macro_f1).abs() <= 1e-12,
            || {
                format!(
                    "case {case}: matrix ({}, {}) vs pairs ({acc}, {macro_f1})",
                    m.accuracy, m.macro_f1
                )
            },
        )?;
        check(
            m.correct == correct && m.per_class.iter().map(|c| c.support).sum::<usize>() == m.total,
            || format!("case {case}: counts inconsistent"),
        )?;
    }
    Ok("fixture 0.75 / 0.7333, 100 random two-path checks agree".into())
}

/// Loss recomputed from scratch: mean cross-entropy plus (l2/2)|W|^2.
fn oracle_loss(m: &LogRegModel, batch: &[(EmbeddingVector, String)]) -> f64 {
    let (dim, classes) = (m.dim(), m.num_classes());
    let mut total = 0.0;
    for (x, y) in batch {
        let z: Vec<f64> = (0..classes)
            .map(|c| {
                f64::from(m.bias()[c])
                    + (0..dim)
                        .map(|j| f64::from(m.weights()[c * dim + j]) * f64::from(x.values()[j]))
                        .sum::<f64>()
            })
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let yi = m.class_order().iter().position(|c| c == y).unwrap();
        total += lse - z[yi];
    }
    let w2: f64 = m
        .weights()
        .iter()
        .map(|&w| f64::from(w) * f64::from(w))
        .sum();
    total / batch.len() as f64 + 0.5 * m.l2_lambda() * w2
}

/// Weight `i` in row-major order, then the biases.
fn coord(m: &mut LogRegModel, i: usize) -> &mut f32 {
    let n = m.weights().len();
    if i < n {
        &mut m.weights_mut()[i]
    } else {
        &mut m.bias_mut()[i - n]
    }
}

fn logreg_gradient_and_blobs() -> Outcome {
    let start = Instant::now();
    let mut r = rng(59);
    let eps = 1e-3f32;
    let mut worst = 0.0f64;
    for instance in 0..20 {
        let dim = r.random_range(2..=8);
        let classes = r.random_range(2..=5);
        let class_order: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let weights: Vec<f32> = common::gaussian(&mut r, dim * classes);
        let bias: Vec<f32> = common::gaussian(&mut r, classes);
        let l2 = if instance % 2 == 0 {
            0.0
        } else {
            r.random::<f64>() * 0.1
        };
        let mut model = LogRegModel::from_parts(dim, weights, bias, class_order.clone(), l2)
            .map_err(|e| e.to_string())?;
        let batch: Vec<(EmbeddingVector, String)> = (0..r.random_range(1..=10))
            .map(|_| {
                let x = EmbeddingVector::new(common::gaussian(&mut r, dim)).unwrap();
                (x, class_order[r.random_range(0..classes)].clone())
            })
            .collect();
        let refs: Vec<(&EmbeddingVector, &str)> =
            batch.iter().map(|(x, y)| (x, y.as_str())).collect();
        let analytic = logreg_loss_grad(&model, &refs).map_err(|e| e.to_string())?;
        check(
            (analytic.loss - oracle_loss(&model, &batch)).abs()
                <= 1e-9 * analytic.loss.abs().max(1.0),
            || {
                format!(
                    "instance {instance}: loss {} vs oracle {}",
                    analytic.loss,
                    oracle_loss(&model, &batch)
                )
            },
        )?;

        let coords = dim * classes + classes;
        for i in 0..coords {
            let orig = *coord(&mut model, i);
            let (hi, lo) = (orig + eps, orig - eps);
            *coord(&mut model, i) = hi;
            let f_hi = oracle_loss(&model, &batch);
            *coord(&mut model, i) = lo;
            let f_lo = oracle_loss(&model, &batch);
            *coord(&mut model, i) = orig;
            // Divide by the step actually taken after f32 rounding.
            let numeric = (f_hi - f_lo) / (f64::from(hi) - f64::from(lo));
            let a = if i < dim * classes {
                analytic.grad_weights[i]
            } else {
                analytic.grad_bias[i - dim * classes]
            };
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(rel);
            check(rel <= 1e-3, || {
                format!(
                    "instance {instance} coord {i}: analytic {a}, numeric {numeric}, rel {rel:.2e}"
                )
            })?;
        }
    }

    let dim = 8;
    let mut examples = Vec::new();
    for c in 0..4 {
        let center = axis_center(dim, c, 4.0);
        for _ in 0..40 {
            examples.push((around(&mut r, &center, 0.5), format!("blob{c}")));
        }
    }
    let refs: Vec<(&EmbeddingVector, &str)> =
        examples.iter().map(|(x, y)| (x, y.as_str())).collect();
    let (model, trace) = fit(&refs, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let correct = examples
        .iter()
        .filter(|(x, y)| {
            predict_logreg(&model, x)
                .map(|p| p.0 == *y)
                .unwrap_or(false)
        })
        .count();
    check(correct == examples.len(), || {
        format!("blobs: {correct}/{} after 200 epochs", examples.len())
    })?;
    within(Duration::from_secs(20), start)?;
    Ok(format!(
        "20 instances, worst relative error {worst:.1e}; blobs {correct}/{} in {} epochs, {:.1?}",
        examples.len(),
        trace.len() - 1,
        start.elapsed()
    ))
}

fn zero_shot_config(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        name,
        Method::SimSearch,
        "train.jsonl",
        "test.jsonl",
        "emb.qemb",
    );
    cfg.shots = Some(2);
    cfg.stratify_languages = true;
    cfg.target_language = Some("sw-KE".into());
    cfg.k = 5;
    cfg.seed = 3;
    cfg
}

fn sweep_and_zero_shot() -> Outcome {
    // Part one: prefix truncation against a fresh search for every k.
    let mut r = rng(71);
    let dim = 16;
    let mut store = EmbeddingStore::new(dim, "random").unwrap();
    let mut train = Vec::new();
    for i in 0..200 {
        let id = format!("i{i:03}");
        store.insert(id.clone(), unit_vector(&mut r, dim)).unwrap();
        train.push(QueryRecord::new(id, "q", format!("l{}", i % 4), "en"));
    }
    let mut test = Vec::new();
    for i in 0..40 {
        let id = format!("t{i:03}");
        store.insert(id.clone(), unit_vector(&mut r, dim)).unwrap();
        test.push(QueryRecord::new(
            id,
            "q",
            format!("l{}", r.random_range(0..4)),
            "en",
        ));
    }
    let train = Dataset::new(train).unwrap();
    let test = Dataset::new(test).unwrap();
    let ix = build_index(&train, &store, &BuildOptions::exact()).map_err(|e| e.to_string())?;
    let opts = ClassifyOptions::default();
    let table = sweep_k(&ix, &test, &store, KRange::default(), &opts).map_err(|e| e.to_string())?;
    check(table.rows.len() == 38, || {
        format!("{} sweep rows", table.rows.len())
    })?;
    for row in &table.rows {
        let mut preds = Vec::new();
        let mut ties = 0;
        for t in test.iter() {
            let p = classify_query_with(&ix, store.get(&t.id).unwrap(), row.k, &opts)
                .map_err(|e| e.to_string())?;
            ties += usize::from(p.tie_broken);
            preds.push((t.id.clone(), p.predicted_label));
        }
        let m = evaluate(&preds, &test, None).map_err(|e| e.to_string())?;
        let tie_rate = ties as f64 / test.len() as f64;
        check(
            m.accuracy == row.accuracy && m.macro_f1 == row.macro_f1 && tie_rate == row.tie_rate,
            || {
                format!(
                    "k={}: sweep ({}, {}, {}) vs direct ({}, {}, {tie_rate})",
                    row.k, row.accuracy, row.macro_f1, row.tie_rate, m.accuracy, m.macro_f1
                )
            },
        )?;
    }

    // Part two: index language sets as recorded in written manifests.
    let languages = [
        "en-EN", "zh-CN", "es-ES", "fr-FR", "jp-JP", "sw-KE", "ur-PK", "id-ID",
    ];
    let c = corpus(83, 3, &languages, 4, 2, 8);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    c.write(dir.path());

    let mut without = zero_shot_config("all-without-target");
    without.index_filter = IndexFilter::AllWithoutTarget;
    let mut high = zero_shot_config("high-resource");
    high.index_filter = IndexFilter::ExplicitList;
    let five: Vec<String> = ["en-EN", "zh-CN", "es-ES", "fr-FR", "jp-JP"]
        .map(String::from)
        .to_vec();
    high.index_languages = Some(five.clone());

    let all_but_target: Vec<String> = languages
        .iter()
        .filter(|l| **l != "sw-KE")
        .map(|l| l.to_string())
        .collect();
    for (cfg, expected) in [(&without, all_but_target), (&high, five)] {
        let out =
            run_experiment(cfg, dir.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
        let out_dir = dir.path().join(&cfg.name);
        write_outputs(&out_dir, &out).map_err(|e| e.to_string())?;
        let manifest = Manifest::load(&out_dir.join("manifest.json")).map_err(|e| e.to_string())?;
        let got: BTreeSet<&String> = manifest.index_languages.iter().collect();
        let want: BTreeSet<&String> = expected.iter().collect();
        check(
            got == want && manifest.index_languages.len() == expected.len(),
            || {
                format!(
                    "{}: manifest index languages {:?}, expected {:?}",
                    cfg.name, manifest.index_languages, expected
                )
            },
        )?;
        check(!got.contains(&"sw-KE".to_string()), || {
            format!("{}: target language indexed", cfg.name)
        })?;
        check(out.report.test_languages == ["sw-KE"], || {
            format!(
                "{}: test languages {:?}",
                cfg.name, out.report.test_languages
            )
        })?;
    }
    Ok("38 k values match direct evaluation; manifests show 7 languages without sw-KE and the 5-language list".into())
}

fn determinism() -> Outcome {
    let c = corpus(97, 4, &["en-US", "fr-FR", "de-DE"], 6, 4, 12);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    c.write(dir.path());
    let mut checked = 0;
    for method in [Method::SimSearch, Method::Classification] {
        let mut cfg = ExperimentConfig::new("det", method, "train.jsonl", "test.jsonl", "emb.qemb");
        cfg.shots = Some(4);
        cfg.stratify_languages = true;
        cfg.k = 7;
        cfg.epochs = 30;
        cfg.seed = 13;
        cfg.index_mode = simquery_core::index::IndexMode::Hnsw;
        let one = run_experiment(&cfg, dir.path(), &RunOptions { threads: Some(1) })
            .map_err(|e| e.to_string())?;
        let four = run_experiment(&cfg, dir.path(), &RunOptions { threads: Some(4) })
            .map_err(|e| e.to_string())?;
        check(one.report.to_json() == four.report.to_json(), || {
            format!("{method:?}: report depends on threads")
        })?;
        check(one.predictions_jsonl == four.predictions_jsonl, || {
            format!("{method:?}: predictions depend on threads")
        })?;

        let out_dir = dir.path().join(format!("{method:?}"));
        write_outputs(&out_dir, &one).map_err(|e| e.to_string())?;
        let written = std::fs::read(out_dir.join("report.json")).map_err(|e| e.to_string())?;
        let (again, same) = rerun_from_manifest(
            &out_dir.join("manifest.json"),
            &RunOptions { threads: Some(3) },
        )
        .map_err(|e| e.to_string())?;
        check(
            same && again.report.to_json().as_bytes() == written.as_slice(),
            || format!("{method:?}: replayed report differs"),
        )?;
        checked += 1;
    }
    Ok(format!(
        "{checked} methods: byte-identical replays, 1 vs 4 threads identical"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("exact search equals full-sort oracle", exact_search_oracle),
        ("HNSW recall contract", hnsw_recall),
        ("Gaussian clusters end to end", gaussian_clusters_end_to_end),
        ("majority-vote properties", vote_properties),
        ("metrics fixtures and two-path check", metrics_fixtures),
        (
            "logistic-regression gradient check and blobs",
            logreg_gradient_and_blobs,
        ),
        (
            "k-sweep consistency and zero-shot manifests",
            sweep_and_zero_shot,
        ),
        ("determinism across replays and threads", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
