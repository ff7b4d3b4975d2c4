//! Grid search over k, and aggregation of per-provider sweeps.
//!
//! Each query is searched once at the largest k and the neighbor list is
//! truncated for smaller k. With an exact index that is the same as
//! searching again for every k.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{resolve_label_with, ClassifyOptions};
use crate::dataset::Dataset;
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::metrics::ConfusionMatrix;
use crate::index::{search_topk_with, QueryIndex, SearchParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl Default for KRange {
    fn default() -> Self {
        Self {
            min: 1,
            max: 75,
            step: 2,
        }
    }
}

impl KRange {
    pub fn values(&self) -> Result<Vec<usize>> {
        if self.min == 0 || self.step == 0 || self.min > self.max {
            return Err(Error::InvalidConfig(format!(
                "invalid k range {}..={} step {}",
                self.min, self.max, self.step
            )));
        }
        Ok((self.min..=self.max).step_by(self.step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub tie_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub provider: String,
    pub rows: Vec<SweepRow>,
}

pub fn sweep_k(
    ix: &QueryIndex,
    test: &Dataset,
    store: &EmbeddingStore,
    range: KRange,
    opts: &ClassifyOptions,
) -> Result<SweepTable> {
    let mut ks = range.values()?;
    let n = ix.len();
    if ks.iter().any(|&k| k > n) {
        warn!("sweep: k above index size {n} dropped from the grid");
        ks.retain(|&k| k <= n);
    }
    let Some(&k_max) = ks.last() else {
        return Err(Error::InvalidConfig(format!(
            "k range starts at {} but the index has {n} entries",
            range.min
        )));
    };
    if test.is_empty() {
        return Err(Error::Empty("sweep test set has no records".into()));
    }
    let search = SearchParams {
        ef_search: Some(opts.search.ef(k_max)),
    };
    let neighbors = test
        .records()
        .par_iter()
        .map(|r| search_topk_with(ix, store.require(&r.id)?, k_max, &search))
        .collect::<Result<Vec<_>>>()?;

    let rows = ks
        .iter()
        .map(|&k| {
            let mut confusion = ConfusionMatrix::default();
            let mut ties = 0usize;
            for (r, ns) in test.iter().zip(&neighbors) {
                let p = resolve_label_with(&ns.truncated(k), &opts.vote)?;
                ties += usize::from(p.tie_broken);
                confusion.add(&r.label, &p.predicted_label);
            }
            Ok(SweepRow {
                k,
                accuracy: confusion.accuracy()?,
                macro_f1: confusion.macro_f1()?,
                tie_rate: ties as f64 / test.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        provider: String::new(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSweep {
    /// Unweighted means across providers, per k.
    pub rows: Vec<SweepRow>,
    /// Smallest k attaining the highest mean accuracy.
    pub best_k_accuracy: usize,
    /// Smallest k attaining the highest mean macro-F1.
    pub best_k_macro_f1: usize,
}

pub fn aggregate_sweeps(tables: &[SweepTable]) -> Result<AggregateSweep> {
    let Some(first) = tables.first() else {
        return Err(Error::GridMismatch("no sweep tables".into()));
    };
    let grid: Vec<usize> = first.rows.iter().map(|r| r.k).collect();
    if grid.is_empty() {
        return Err(Error::GridMismatch("sweep table has no rows".into()));
    }
    for t in &tables[1..] {
        let other: Vec<usize> = t.rows.iter().map(|r| r.k).collect();
        if other != grid {
            return Err(Error::GridMismatch(format!(
                "k grid of {:?} differs from {:?}",
                t.provider, first.provider
            )));
        }
    }
    let n = tables.len() as f64;
    let rows: Vec<SweepRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mean =
                |f: fn(&SweepRow) -> f64| tables.iter().map(|t| f(&t.rows[i])).sum::<f64>() / n;
            SweepRow {
                k,
                accuracy: mean(|r| r.accuracy),
                macro_f1: mean(|r| r.macro_f1),
                tie_rate: mean(|r| r.tie_rate),
            }
        })
        .collect();
    let argmax = |f: fn(&SweepRow) -> f64| {
        let mut best = &rows[0];
        for r in &rows[1..] {
            if f(r) > f(best) {
                best = r;
            }
        }
        best.k
    };
    Ok(AggregateSweep {
        best_k_accuracy: argmax(|r| r.accuracy),
        best_k_macro_f1: argmax(|r| r.macro_f1),
        rows,
    })
}

/// CSV with columns `k,accuracy,macro_f1,tie_rate`.
pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "accuracy", "macro_f1", "tie_rate"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.accuracy.to_string(),
            r.macro_f1.to_string(),
            r.tie_rate.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// A static line chart of accuracy and macro-F1 against k.
pub fn rows_to_svg(rows: &[SweepRow], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let (kmin, kmax) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.k as f64, b.k as f64),
        _ => (0.0, 1.0),
    };
    let span = (kmax - kmin).max(1.0);
    let x = |k: usize| PAD + (k as f64 - kmin) / span * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let line = |f: fn(&SweepRow) -> f64| {
        rows.iter()
            .map(|r| format!("{:.1},{:.1}", x(r.k), y(f(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{tick:.2}</text>"#,
            PAD - 4.0,
            y(tick) + 3.0
        );
    }
    for r in rows
        .iter()
        .filter(|r| (r.k as f64 - kmin) as usize % 10 == 0 || r.k as f64 == kmax)
    {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            x(r.k),
            H - PAD + 14.0,
            r.k
        );
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#,
        line(|r| r.accuracy)
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{}" stroke="darkorange" stroke-width="2" fill="none"/>"#,
        line(|r| r.macro_f1)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="steelblue">accuracy</text>"#,
        W - PAD - 110.0,
        PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="darkorange">macro F1</text>"#,
        W - PAD - 110.0,
        PAD + 14.0
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
