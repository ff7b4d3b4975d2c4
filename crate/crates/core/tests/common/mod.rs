#![allow(dead_code)]

use std::path::Path;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};

use simquery_core::dataset::{Dataset, QueryRecord};
use simquery_core::embedding::{EmbeddingStore, EmbeddingVector};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut StdRng, dim: usize) -> Vec<f32> {
    let n = Normal::new(0.0f64, 1.0).unwrap();
    (0..dim).map(|_| n.sample(rng) as f32).collect()
}

pub fn unit_vector(rng: &mut StdRng, dim: usize) -> EmbeddingVector {
    EmbeddingVector::new(gaussian(rng, dim))
        .unwrap()
        .normalize()
        .unwrap()
}

/// Point drawn from N(center, sigma^2 I).
pub fn around(rng: &mut StdRng, center: &[f32], sigma: f64) -> EmbeddingVector {
    let n = Normal::new(0.0f64, sigma).unwrap();
    EmbeddingVector::new(center.iter().map(|&c| c + n.sample(rng) as f32).collect()).unwrap()
}

/// Center of class `c`: `scale` along axis `c`.
pub fn axis_center(dim: usize, c: usize, scale: f32) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[c] = scale;
    v
}

pub fn pick<'a>(rng: &mut StdRng, items: &'a [&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

/// Synthetic multilingual corpus: every (class, key) pair is present in
/// every language, with vectors clustered by class.
pub struct Corpus {
    pub train: Dataset,
    pub test: Dataset,
    pub store: EmbeddingStore,
}

pub fn corpus(
    seed: u64,
    classes: usize,
    languages: &[&str],
    train_keys: usize,
    test_keys: usize,
    dim: usize,
) -> Corpus {
    let mut r = rng(seed);
    let mut store = EmbeddingStore::new(dim, "synthetic").unwrap();
    let mut make = |prefix: &str, keys: usize, r: &mut StdRng| {
        let mut records = Vec::new();
        for c in 0..classes {
            let center = axis_center(dim, c % dim, 6.0);
            for key in 0..keys {
                for lang in languages {
                    let id = format!("{prefix}{c}-{key}#{lang}");
                    store.insert(id.clone(), around(r, &center, 1.0)).unwrap();
                    records.push(QueryRecord::new(
                        id,
                        format!("query {key}"),
                        format!("intent_{c}"),
                        *lang,
                    ));
                }
            }
        }
        Dataset::new(records).unwrap()
    };
    let train = make("tr", train_keys, &mut r);
    let test = make("te", test_keys, &mut r);
    Corpus { train, test, store }
}

impl Corpus {
    /// Writes train.jsonl, test.jsonl and emb.qemb into `dir`.
    pub fn write(&self, dir: &Path) {
        self.train.save_jsonl(&dir.join("train.jsonl")).unwrap();
        self.test.save_jsonl(&dir.join("test.jsonl")).unwrap();
        self.store.save(&dir.join("emb.qemb")).unwrap();
    }
}
