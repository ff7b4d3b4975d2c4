//! The labeled query index: exact brute-force search and an HNSW graph.
//!
//! Entries hold L2-normalized copies of the embeddings, so cosine similarity
//! is a plain dot product (accumulated in f64). Results are ordered by
//! descending similarity, ties broken by ascending id bytes.

mod hnsw;
mod io;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::embedding::{dot, EmbeddingStore, EmbeddingVector};
use crate::error::{Error, Result};

pub use hnsw::HnswGraph;
pub use io::{load_index, save_index, QIDX_MAGIC, QIDX_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub label: String,
    pub language: String,
    vector: Vec<f32>,
}

impl IndexEntry {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        language: impl Into<String>,
        vector: &EmbeddingVector,
    ) -> Result<Self> {
        let id = id.into();
        let unit = vector
            .normalize()
            .map_err(|e| Error::InvalidVector(format!("record {id:?}: {e}")))?;
        Ok(Self {
            id,
            label: label.into(),
            language: language.into(),
            vector: unit.into_values(),
        })
    }

    /// The stored unit-norm vector.
    pub fn vector(&self) -> &[f32] {
        &self.vector
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    #[default]
    Exact,
    Hnsw,
}

impl FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "hnsw" => Ok(Self::Hnsw),
            other => Err(Error::InvalidConfig(format!(
                "unknown index mode {other:?} (expected exact or hnsw)"
            ))),
        }
    }
}

impl fmt::Display for IndexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Hnsw => "hnsw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Neighbors per node on upper layers; layer 0 allows twice as many.
    pub m_max: usize,
    pub ef_construction: usize,
    /// Seeds level assignment.
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m_max: 16,
            ef_construction: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    pub mode: IndexMode,
    pub hnsw: HnswParams,
    /// Permit unequal per-class entry counts.
    pub allow_unbalanced: bool,
}

impl BuildOptions {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn hnsw(params: HnswParams) -> Self {
        Self {
            mode: IndexMode::Hnsw,
            hnsw: params,
            allow_unbalanced: false,
        }
    }

    pub fn unbalanced(mut self, allow: bool) -> Self {
        self.allow_unbalanced = allow;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchParams {
    /// HNSW beam width; `max(64, 2k)` when unset. Ignored by exact indexes.
    pub ef_search: Option<usize>,
}

impl SearchParams {
    pub fn ef(&self, k: usize) -> usize {
        self.ef_search.unwrap_or_else(|| (2 * k).max(64)).max(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    graph: Option<HnswGraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub similarity: f64,
    pub id: String,
    pub label: String,
    pub language: String,
}

/// Search results, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    items: Vec<Neighbor>,
    k_requested: usize,
}

fn rank_order(a_sim: f64, a_id: &str, b_sim: f64, b_id: &str) -> Ordering {
    b_sim
        .total_cmp(&a_sim)
        .then_with(|| a_id.as_bytes().cmp(b_id.as_bytes()))
}

impl NeighborSet {
    /// Sorts `items` into result order and keeps the best `k`.
    pub fn from_unsorted(mut items: Vec<Neighbor>, k: usize) -> Self {
        items.sort_by(|a, b| rank_order(a.similarity, &a.id, b.similarity, &b.id));
        items.truncate(k);
        Self {
            items,
            k_requested: k,
        }
    }

    pub fn items(&self) -> &[Neighbor] {
        &self.items
    }

    pub fn k_requested(&self) -> usize {
        self.k_requested
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|n| n.id.as_str()).collect()
    }

    /// The best `k` results. For exact search this equals a fresh top-k search.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            items: self.items.iter().take(k).cloned().collect(),
            k_requested: k,
        }
    }
}

impl QueryIndex {
    /// Builds an index from (id, label, language, vector) tuples; vectors are
    /// normalized on the way in.
    pub fn from_vectors<'a, I>(items: I, opts: &BuildOptions) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str, &'a EmbeddingVector)>,
    {
        let mut entries = Vec::new();
        let mut dim = None;
        let mut ids = HashSet::new();
        for (id, label, language, v) in items {
            let expected = *dim.get_or_insert(v.dim());
            if v.dim() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: v.dim(),
                });
            }
            if !ids.insert(id) {
                return Err(Error::Corrupt(format!("duplicate index id {id:?}")));
            }
            entries.push(IndexEntry::new(id, label, language, v)?);
        }
        let dim = dim.ok_or(Error::EmptyIndex)?;
        if !opts.allow_unbalanced {
            check_balanced(&entries)?;
        }
        let graph = match opts.mode {
            IndexMode::Exact => None,
            IndexMode::Hnsw => Some(HnswGraph::build(&entries, &opts.hnsw)?),
        };
        Ok(Self {
            dim,
            entries,
            graph,
        })
    }

    pub(crate) fn from_parts(
        dim: usize,
        entries: Vec<IndexEntry>,
        graph: Option<HnswGraph>,
    ) -> Self {
        Self {
            dim,
            entries,
            graph,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn graph(&self) -> Option<&HnswGraph> {
        self.graph.as_ref()
    }

    pub fn mode(&self) -> IndexMode {
        if self.graph.is_some() {
            IndexMode::Hnsw
        } else {
            IndexMode::Exact
        }
    }

    pub fn label_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label.as_str()).or_insert(0) += 1;
        }
        counts
    }

    pub fn languages(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.entries.iter().map(|e| e.language.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// A copy without the HNSW graph, searched exhaustively.
    pub fn to_exact(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.clone(),
            graph: None,
        }
    }

    fn neighbor(&self, ordinal: usize, similarity: f64) -> Neighbor {
        let e = &self.entries[ordinal];
        Neighbor {
            similarity: similarity.clamp(-1.0, 1.0),
            id: e.id.clone(),
            label: e.label.clone(),
            language: e.language.clone(),
        }
    }

    fn prepare_query(&self, q: &EmbeddingVector, k: usize) -> Result<EmbeddingVector> {
        if self.entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        q.normalize()
    }

    fn exact_topk(&self, q: &[f32], k: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, dot(&e.vector, q)))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            rank_order(a.1, &self.entries[a.0].id, b.1, &self.entries[b.0].id)
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
    }
}

fn check_balanced(entries: &[IndexEntry]) -> Result<()> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in entries {
        *counts.entry(e.label.as_str()).or_insert(0) += 1;
    }
    let min = counts.values().min().copied().unwrap_or(0);
    let max = counts.values().max().copied().unwrap_or(0);
    if min != max {
        let (lo, _) = counts.iter().find(|(_, &c)| c == min).unwrap();
        let (hi, _) = counts.iter().find(|(_, &c)| c == max).unwrap();
        return Err(Error::Unbalanced(format!(
            "class {lo:?} has {min} entries but {hi:?} has {max}"
        )));
    }
    Ok(())
}

/// Indexes every record of `d` with its vector from `store`.
pub fn build_index(d: &Dataset, store: &EmbeddingStore, opts: &BuildOptions) -> Result<QueryIndex> {
    let mut items = Vec::with_capacity(d.len());
    for r in d.iter() {
        let v = store.require(&r.id)?;
        items.push((r.id.as_str(), r.label.as_str(), r.language.as_str(), v));
    }
    if items.is_empty() {
        return Err(Error::EmptyIndex);
    }
    QueryIndex::from_vectors(items, opts)
}

pub fn search_topk(ix: &QueryIndex, q: &EmbeddingVector, k: usize) -> Result<NeighborSet> {
    search_topk_with(ix, q, k, &SearchParams::default())
}

pub fn search_topk_with(
    ix: &QueryIndex,
    q: &EmbeddingVector,
    k: usize,
    params: &SearchParams,
) -> Result<NeighborSet> {
    let q = ix.prepare_query(q, k)?;
    let hits = match &ix.graph {
        None => ix.exact_topk(q.values(), k),
        Some(g) => {
            let mut hits = g.search(&ix.entries, q.values(), params.ef(k));
            hits.sort_by(|a, b| rank_order(a.1, &ix.entries[a.0].id, b.1, &ix.entries[b.0].id));
            hits.truncate(k);
            hits
        }
    };
    Ok(NeighborSet {
        items: hits.into_iter().map(|(i, s)| ix.neighbor(i, s)).collect(),
        k_requested: k,
    })
}

/// Mean fraction of the exact top-k recovered by the approximate index.
pub fn measure_recall(
    ann: &QueryIndex,
    exact: &QueryIndex,
    queries: &[EmbeddingVector],
    k: usize,
    params: &SearchParams,
) -> Result<f64> {
    if ann.entries != exact.entries {
        return Err(Error::IndexMismatch(format!(
            "{} vs {} entries, or differing contents",
            ann.len(),
            exact.len()
        )));
    }
    if queries.is_empty() {
        return Err(Error::Empty("no recall queries".into()));
    }
    let exact = exact.to_exact();
    let per_query: Vec<f64> = queries
        .par_iter()
        .map(|q| -> Result<f64> {
            let truth = search_topk(&exact, q, k)?;
            let got = search_topk_with(ann, q, k, params)?;
            let truth_ids: HashSet<&str> = truth.ids().into_iter().collect();
            let hits = got
                .ids()
                .iter()
                .filter(|id| truth_ids.contains(*id))
                .count();
            Ok(hits as f64 / truth.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::QueryRecord;
    use crate::rng::SeededRng;

    fn random_unit(rng: &mut SeededRng, dim: usize) -> EmbeddingVector {
        let values = (0..dim)
            .map(|_| (rng.unit_f64() * 2.0 - 1.0) as f32)
            .collect();
        EmbeddingVector::new(values).unwrap()
    }

    fn random_index(
        n: usize,
        dim: usize,
        opts: &BuildOptions,
    ) -> (QueryIndex, Vec<EmbeddingVector>) {
        let mut rng = SeededRng::new(42, &["test-index"]);
        let vs: Vec<_> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
        let ids: Vec<String> = (0..n).map(|i| format!("e{i:04}")).collect();
        let ix = QueryIndex::from_vectors(
            ids.iter()
                .zip(&vs)
                .map(|(id, v)| (id.as_str(), "x", "en", v)),
            opts,
        )
        .unwrap();
        (ix, vs)
    }

    #[test]
    fn self_retrieval() {
        let (ix, vs) = random_index(50, 16, &BuildOptions::exact());
        let ns = search_topk(&ix, &vs[17], 1).unwrap();
        assert_eq!(ns.items()[0].id, "e0017");
        assert!((ns.items()[0].similarity - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn k_is_clamped_to_size() {
        let (ix, vs) = random_index(10, 8, &BuildOptions::exact());
        let ns = search_topk(&ix, &vs[0], 50).unwrap();
        assert_eq!(ns.len(), 10);
        assert_eq!(ns.k_requested(), 50);
        assert!(ns
            .items()
            .windows(2)
            .all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn ties_break_by_id() {
        let v = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let ix = QueryIndex::from_vectors(
            [
                ("b", "x", "en", &v),
                ("a", "x", "en", &v),
                ("c", "x", "en", &v),
            ],
            &BuildOptions::exact(),
        )
        .unwrap();
        let ns = search_topk(&ix, &v, 2).unwrap();
        assert_eq!(ns.ids(), vec!["a", "b"]);
    }

    #[test]
    fn search_errors() {
        let (ix, _) = random_index(5, 8, &BuildOptions::exact());
        let q = EmbeddingVector::new(vec![1.0; 4]).unwrap();
        assert!(matches!(
            search_topk(&ix, &q, 1),
            Err(Error::DimensionMismatch { .. })
        ));
        let q = EmbeddingVector::new(vec![1.0; 8]).unwrap();
        assert!(matches!(search_topk(&ix, &q, 0), Err(Error::InvalidK)));
        let zero = EmbeddingVector::new(vec![0.0; 8]).unwrap();
        assert!(search_topk(&ix, &zero, 1).is_err());
    }

    #[test]
    fn build_requires_embeddings_and_balance() {
        let records = vec![
            QueryRecord::new("q1", "a", "A", "en"),
            QueryRecord::new("q9", "b", "B", "en"),
        ];
        let d = Dataset::new(records).unwrap();
        let mut store = EmbeddingStore::new(2, "t").unwrap();
        store
            .insert("q1", EmbeddingVector::new(vec![1.0, 0.0]).unwrap())
            .unwrap();
        match build_index(&d, &store, &BuildOptions::exact()) {
            Err(Error::MissingEmbedding(id)) => assert_eq!(id, "q9"),
            other => panic!("unexpected {other:?}"),
        }
        store
            .insert("q9", EmbeddingVector::new(vec![0.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(
            build_index(&d, &store, &BuildOptions::exact())
                .unwrap()
                .len(),
            2
        );

        let d3 = Dataset::new(vec![
            QueryRecord::new("q1", "a", "A", "en"),
            QueryRecord::new("q2", "a", "A", "en"),
            QueryRecord::new("q9", "b", "B", "en"),
        ])
        .unwrap();
        store
            .insert("q2", EmbeddingVector::new(vec![1.0, 1.0]).unwrap())
            .unwrap();
        assert!(matches!(
            build_index(&d3, &store, &BuildOptions::exact()),
            Err(Error::Unbalanced(_))
        ));
        assert!(build_index(&d3, &store, &BuildOptions::exact().unbalanced(true)).is_ok());
    }

    #[test]
    fn entries_are_normalized() {
        let v = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        let ix = QueryIndex::from_vectors([("a", "x", "en", &v)], &BuildOptions::exact()).unwrap();
        assert_eq!(ix.entries()[0].vector(), &[0.6, 0.8]);
    }

    #[test]
    fn hnsw_graph_covers_all_entries() {
        let (ix, vs) = random_index(93, 16, &BuildOptions::hnsw(HnswParams::default()));
        assert_eq!(ix.graph().unwrap().node_count(), 93);
        let exact = ix.to_exact();
        let recall = measure_recall(&ix, &exact, &vs[..20], 5, &SearchParams::default()).unwrap();
        assert!(recall > 0.9, "recall {recall}");
    }

    #[test]
    fn recall_of_identical_indexes_is_one() {
        let (ix, vs) = random_index(60, 8, &BuildOptions::exact());
        let r = measure_recall(&ix, &ix, &vs[..10], 7, &SearchParams::default()).unwrap();
        assert_eq!(r, 1.0);
        let (other, _) = random_index(59, 8, &BuildOptions::exact());
        assert!(matches!(
            measure_recall(&ix, &other, &vs[..1], 3, &SearchParams::default()),
            Err(Error::IndexMismatch(_))
        ));
    }

    #[test]
    fn hnsw_build_is_deterministic() {
        let opts = BuildOptions::hnsw(HnswParams {
            seed: 9,
            ..Default::default()
        });
        let (a, _) = random_index(200, 8, &opts);
        let (b, _) = random_index(200, 8, &opts);
        assert_eq!(a, b);
    }
}
