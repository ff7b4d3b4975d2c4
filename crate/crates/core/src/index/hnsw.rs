//! Hierarchical navigable small-world graph over index entries.
//!
//! Construction is single-threaded and inserts entries in index order, so the
//! graph is a pure function of (entries, params). Levels are drawn as
//! `floor(-ln(1 - u) / ln(m_max))` from a seeded stream. Neighbor lists use
//! the diversity heuristic; upper layers keep at most `m_max` links and
//! layer 0 keeps `2 * m_max`. The entry point is the lowest ordinal on the
//! top layer, which lets a persisted graph omit it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{HnswParams, IndexEntry};
use crate::embedding::dot;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

const MAX_LEVEL: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HnswGraph {
    /// `links[node][level]` for levels `0..=node level`.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
    top_level: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Scored {
    sim: f64,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    // Higher similarity first; lower ordinal wins ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Builder<'a> {
    entries: &'a [IndexEntry],
    m_max: usize,
    ef_construction: usize,
    links: Vec<Vec<Vec<u32>>>,
}

impl HnswGraph {
    pub(crate) fn build(entries: &[IndexEntry], params: &HnswParams) -> Result<Self> {
        if params.m_max < 2 {
            return Err(Error::InvalidConfig("HNSW m_max must be at least 2".into()));
        }
        if params.ef_construction == 0 {
            return Err(Error::InvalidConfig(
                "HNSW ef_construction must be positive".into(),
            ));
        }
        if entries.len() > u32::MAX as usize {
            return Err(Error::InvalidConfig("too many entries for HNSW".into()));
        }
        let level_mult = 1.0 / (params.m_max as f64).ln();
        let mut rng = SeededRng::new(params.seed, &["hnsw-levels"]);
        let mut b = Builder {
            entries,
            m_max: params.m_max,
            ef_construction: params.ef_construction.max(params.m_max),
            links: Vec::with_capacity(entries.len()),
        };
        let mut entry_point = 0u32;
        let mut top_level = 0usize;
        for node in 0..entries.len() {
            let u = rng.unit_f64();
            let level = ((-(1.0 - u).ln() * level_mult).floor() as usize).min(MAX_LEVEL);
            b.links.push(vec![Vec::new(); level + 1]);
            if node == 0 {
                top_level = level;
                continue;
            }
            b.insert(node as u32, level, entry_point, top_level);
            if level > top_level {
                top_level = level;
                entry_point = node as u32;
            }
        }
        Ok(Self {
            links: b.links,
            entry_point,
            top_level,
        })
    }

    pub(crate) fn from_links(links: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        let n = links.len();
        let mut top_level = 0;
        let mut entry_point = 0;
        for (node, levels) in links.iter().enumerate() {
            if levels.is_empty() {
                return Err(Error::Corrupt(format!("graph node {node} has no levels")));
            }
            let level = levels.len() - 1;
            if level > top_level {
                top_level = level;
                entry_point = node as u32;
            }
            for (l, nbrs) in levels.iter().enumerate() {
                for &m in nbrs {
                    let ok = (m as usize) < n && links[m as usize].len() > l && m as usize != node;
                    if !ok {
                        return Err(Error::Corrupt(format!(
                            "graph node {node} level {l} links to invalid node {m}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            links,
            entry_point,
            top_level,
        })
    }

    pub fn node_count(&self) -> usize {
        self.links.len()
    }

    pub fn top_level(&self) -> usize {
        self.top_level
    }

    pub fn entry_point(&self) -> usize {
        self.entry_point as usize
    }

    /// Highest level of a node.
    pub fn level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn neighbors(&self, node: usize, level: usize) -> &[u32] {
        &self.links[node][level]
    }

    pub(crate) fn links(&self) -> &[Vec<Vec<u32>>] {
        &self.links
    }

    /// Approximate nearest entries to the unit query `q`, up to `ef` of them,
    /// as (ordinal, similarity) pairs in no particular order.
    pub(crate) fn search(&self, entries: &[IndexEntry], q: &[f32], ef: usize) -> Vec<(usize, f64)> {
        if self.links.is_empty() {
            return Vec::new();
        }
        let mut cur = Scored {
            sim: dot(entries[self.entry_point as usize].vector(), q),
            node: self.entry_point,
        };
        for level in (1..=self.top_level).rev() {
            cur = greedy(&self.links, entries, q, cur, level);
        }
        search_layer(&self.links, entries, q, &[cur], ef, 0)
            .into_iter()
            .map(|s| (s.node as usize, s.sim))
            .collect()
    }
}

fn greedy(
    links: &[Vec<Vec<u32>>],
    entries: &[IndexEntry],
    q: &[f32],
    mut cur: Scored,
    level: usize,
) -> Scored {
    loop {
        let mut improved = false;
        for &m in &links[cur.node as usize][level] {
            let cand = Scored {
                sim: dot(entries[m as usize].vector(), q),
                node: m,
            };
            if cand > cur {
                cur = cand;
                improved = true;
            }
        }
        if !improved {
            return cur;
        }
    }
}

/// Beam search on one layer; returns up to `ef` results sorted best first.
fn search_layer(
    links: &[Vec<Vec<u32>>],
    entries: &[IndexEntry],
    q: &[f32],
    starts: &[Scored],
    ef: usize,
    level: usize,
) -> Vec<Scored> {
    let mut visited = vec![false; links.len()];
    let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
    // Min-heap of the current results: worst on top.
    let mut results: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
    for &s in starts {
        if !visited[s.node as usize] {
            visited[s.node as usize] = true;
            candidates.push(s);
            results.push(std::cmp::Reverse(s));
        }
    }
    while results.len() > ef {
        results.pop();
    }
    while let Some(c) = candidates.pop() {
        let worst = results.peek().expect("results non-empty").0;
        if c < worst && results.len() >= ef {
            break;
        }
        for &m in &links[c.node as usize][level] {
            if visited[m as usize] {
                continue;
            }
            visited[m as usize] = true;
            let s = Scored {
                sim: dot(entries[m as usize].vector(), q),
                node: m,
            };
            let worst = results.peek().expect("results non-empty").0;
            if results.len() < ef || s > worst {
                candidates.push(s);
                results.push(std::cmp::Reverse(s));
                if results.len() > ef {
                    results.pop();
                }
            }
        }
    }
    let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}

impl Builder<'_> {
    fn capacity(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.m_max
        } else {
            self.m_max
        }
    }

    fn sim(&self, a: u32, b: u32) -> f64 {
        dot(
            self.entries[a as usize].vector(),
            self.entries[b as usize].vector(),
        )
    }

    fn insert(&mut self, node: u32, level: usize, entry_point: u32, top_level: usize) {
        let q = self.entries[node as usize].vector();
        let mut cur = Scored {
            sim: dot(self.entries[entry_point as usize].vector(), q),
            node: entry_point,
        };
        for l in (level + 1..=top_level).rev() {
            cur = greedy(&self.links, self.entries, q, cur, l);
        }
        let mut starts = vec![cur];
        for l in (0..=level.min(top_level)).rev() {
            let found = search_layer(
                &self.links,
                self.entries,
                q,
                &starts,
                self.ef_construction,
                l,
            );
            let chosen = self.select(&found, self.m_max);
            self.links[node as usize][l] = chosen.iter().map(|s| s.node).collect();
            for s in &chosen {
                self.link_back(s.node, node, l);
            }
            starts = found;
        }
    }

    /// Adds `new` to `node`'s list at `level`, pruning with the heuristic
    /// when the list overflows.
    fn link_back(&mut self, node: u32, new: u32, level: usize) {
        let cap = self.capacity(level);
        let list = &self.links[node as usize][level];
        if list.len() < cap {
            self.links[node as usize][level].push(new);
            return;
        }
        let mut cands: Vec<Scored> = list
            .iter()
            .chain(std::iter::once(&new))
            .map(|&m| Scored {
                sim: self.sim(node, m),
                node: m,
            })
            .collect();
        cands.sort_by(|a, b| b.cmp(a));
        let kept = self.select(&cands, cap);
        self.links[node as usize][level] = kept.iter().map(|s| s.node).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every already-kept neighbor. `cands` must be sorted best first.
    fn select(&self, cands: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        for &c in cands {
            if kept.len() >= m {
                break;
            }
            if kept.iter().all(|k| self.sim(c.node, k.node) < c.sim) {
                kept.push(c);
            }
        }
        kept
    }
}
