//! Majority-vote label resolution over retrieved neighbors.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::index::{search_topk_with, NeighborSet, QueryIndex, SearchParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteWeighting {
    /// One vote per neighbor.
    #[default]
    Majority,
    /// Each neighbor votes with its similarity.
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VoteConfig {
    pub weighting: VoteWeighting,
    /// Neighbors below this similarity are dropped before voting.
    pub min_similarity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassifyOptions {
    pub search: SearchParams,
    pub vote: VoteConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predicted_label: String,
    pub vote_counts: BTreeMap<String, usize>,
    /// Set whenever more than one label reached the top vote.
    pub tie_broken: bool,
    pub support: NeighborSet,
}

pub fn resolve_label(ns: &NeighborSet) -> Result<Prediction> {
    resolve_label_with(ns, &VoteConfig::default())
}

/// Mode of the neighbor labels. Ties go to the larger similarity sum, then
/// to the lexicographically smallest label. Under similarity weighting the
/// roles of count and similarity sum swap.
pub fn resolve_label_with(ns: &NeighborSet, cfg: &VoteConfig) -> Result<Prediction> {
    let support = match cfg.min_similarity {
        Some(t) => NeighborSet::from_unsorted(
            ns.items()
                .iter()
                .filter(|n| n.similarity >= t)
                .cloned()
                .collect(),
            ns.k_requested(),
        ),
        None => ns.clone(),
    };
    if support.is_empty() {
        return Err(Error::NoNeighbors);
    }

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut sims: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for n in support.items() {
        *counts.entry(n.label.clone()).or_insert(0) += 1;
        sims.entry(n.label.as_str()).or_default().push(n.similarity);
    }
    // Sum in a canonical order so the result depends only on the multiset.
    let sums: BTreeMap<&str, f64> = sims
        .into_iter()
        .map(|(label, mut s)| {
            s.sort_by(|a, b| b.total_cmp(a));
            (label, s.iter().sum())
        })
        .collect();

    let score = |label: &str| -> (f64, f64) {
        let count = counts[label] as f64;
        let sum = sums[label];
        match cfg.weighting {
            VoteWeighting::Majority => (count, sum),
            VoteWeighting::Similarity => (sum, count),
        }
    };
    let top_primary = counts
        .keys()
        .map(|l| score(l).0)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<&String> = counts
        .keys()
        .filter(|l| score(l).0 == top_primary)
        .collect();
    let tie_broken = tied.len() > 1;
    // BTreeMap order is lexicographic, so the first strict maximum wins.
    let mut best = tied[0];
    for l in &tied[1..] {
        if score(l).1 > score(best).1 {
            best = l;
        }
    }
    Ok(Prediction {
        predicted_label: best.clone(),
        vote_counts: counts.clone(),
        tie_broken,
        support,
    })
}

pub fn classify_query(ix: &QueryIndex, q: &EmbeddingVector, k: usize) -> Result<Prediction> {
    classify_query_with(ix, q, k, &ClassifyOptions::default())
}

pub fn classify_query_with(
    ix: &QueryIndex,
    q: &EmbeddingVector,
    k: usize,
    opts: &ClassifyOptions,
) -> Result<Prediction> {
    let ns = search_topk_with(ix, q, k, &opts.search)?;
    resolve_label_with(&ns, &opts.vote)
}

#[derive(Debug)]
pub struct BatchItem {
    pub id: String,
    pub outcome: Result<Prediction>,
}

/// Classifies every query in parallel on the current rayon pool. Output
/// order matches input order; failures are kept per item.
pub fn classify_batch(
    ix: &QueryIndex,
    queries: &[(String, EmbeddingVector)],
    k: usize,
    opts: &ClassifyOptions,
) -> Vec<BatchItem> {
    queries
        .par_iter()
        .map(|(id, q)| BatchItem {
            id: id.clone(),
            outcome: classify_query_with(ix, q, k, opts),
        })
        .collect()
}

/// One line of the predictions JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted_label: String,
    pub votes: BTreeMap<String, usize>,
    pub tie_broken: bool,
    pub top: Vec<TopNeighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNeighbor {
    pub id: String,
    pub label: String,
    pub similarity: f64,
}

impl PredictionRecord {
    pub fn new(id: &str, p: &Prediction) -> Self {
        Self {
            id: id.to_string(),
            predicted_label: p.predicted_label.clone(),
            votes: p.vote_counts.clone(),
            tie_broken: p.tie_broken,
            top: p
                .support
                .items()
                .iter()
                .map(|n| TopNeighbor {
                    id: n.id.clone(),
                    label: n.label.clone(),
                    similarity: n.similarity,
                })
                .collect(),
        }
    }
}
