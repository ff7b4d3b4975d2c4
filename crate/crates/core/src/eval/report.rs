use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::metrics::Metrics;

/// Everything an experiment run reports, including the config it ran with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub provider: String,
    pub method: Method,
    pub row_label: String,
    pub column: String,
    /// Neighbors per vote; absent for the classification head.
    pub k: Option<usize>,
    pub seed: u64,
    /// Records in the index, or in the head's training set.
    pub train_size: usize,
    pub index_languages: Vec<String>,
    pub test_size: usize,
    pub test_languages: Vec<String>,
    /// Share of queries whose vote needed a tie-break.
    pub tie_rate: Option<f64>,
    pub metrics: Metrics,
    pub config: ExperimentConfig,
}

impl MetricsReport {
    /// Pretty JSON with a trailing newline. Report checksums are taken over
    /// exactly these bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text summary, scores at three decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut field = |name: &str, value: String| {
            let _ = writeln!(s, "{name:<16}{value}");
        };
        field("experiment", self.name.clone());
        field("provider", self.provider.clone());
        field("method", self.method.display_name().to_string());
        if let Some(k) = self.k {
            field("k", k.to_string());
        }
        field("seed", self.seed.to_string());
        field(
            "train",
            format!(
                "{} records [{}]",
                self.train_size,
                self.index_languages.join(",")
            ),
        );
        field(
            "test",
            format!(
                "{} records [{}]",
                self.test_size,
                self.test_languages.join(",")
            ),
        );
        field("accuracy", format!("{:.3}", self.metrics.accuracy));
        field("macro F1", format!("{:.3}", self.metrics.macro_f1));
        if let Some(t) = self.tie_rate {
            field("tie rate", format!("{t:.3}"));
        }
        if self.metrics.unseen_gold_labels > 0 {
            field("unseen gold", self.metrics.unseen_gold_labels.to_string());
        }

        let langs: Vec<[String; 4]> = self
            .metrics
            .per_language
            .iter()
            .map(|l| {
                [
                    l.language.clone(),
                    l.count.to_string(),
                    format!("{:.3}", l.accuracy),
                    format!("{:.3}", l.macro_f1),
                ]
            })
            .collect();
        s.push('\n');
        s.push_str(&table(["language", "n", "accuracy", "macro F1"], &langs));

        let classes: Vec<[String; 5]> = self
            .metrics
            .per_class
            .iter()
            .map(|c| {
                [
                    c.label.clone(),
                    c.support.to_string(),
                    format!("{:.3}", c.precision),
                    format!("{:.3}", c.recall),
                    format!("{:.3}", c.f1),
                ]
            })
            .collect();
        s.push('\n');
        s.push_str(&table(
            ["label", "n", "precision", "recall", "F1"],
            &classes,
        ));
        s
    }
}

/// Left-aligned first column, right-aligned numbers.
pub(crate) fn table<const N: usize>(header: [&str; N], rows: &[[String; N]]) -> String {
    let mut width = header.map(str::len);
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut s = String::new();
    let mut line = |cells: &[&str]| {
        for (i, (cell, w)) in cells.iter().zip(&width).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.push('\n');
    };
    line(&header);
    for r in rows {
        line(&r.each_ref().map(String::as_str));
    }
    s
}
