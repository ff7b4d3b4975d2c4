//! Side-by-side tables of several experiment reports.
//!
//! Rows are (provider, row label) pairs in first-seen order; columns are
//! report column labels in first-seen order. Each cell holds accuracy and
//! macro-F1.

use log::warn;

use super::report::MetricsReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub provider: String,
    pub label: String,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_reports(reports: &[MetricsReport]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "comparison needs at least two reports, got {}",
            reports.len()
        )));
    }
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        if !columns.contains(&r.column) {
            columns.push(r.column.clone());
        }
    }
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for r in reports {
        let pos = match rows
            .iter()
            .position(|row| row.provider == r.provider && row.label == r.row_label)
        {
            Some(p) => p,
            None => {
                rows.push(ComparisonRow {
                    provider: r.provider.clone(),
                    label: r.row_label.clone(),
                    cells: vec![None; columns.len()],
                });
                rows.len() - 1
            }
        };
        let col = columns
            .iter()
            .position(|c| *c == r.column)
            .expect("column collected");
        let slot = &mut rows[pos].cells[col];
        if slot.is_some() {
            warn!(
                "compare: {} / {} / {} reported twice, keeping the later report",
                r.provider, r.row_label, r.column
            );
        }
        *slot = Some(Cell {
            accuracy: r.metrics.accuracy,
            macro_f1: r.metrics.macro_f1,
        });
    }
    Ok(ComparisonTable { columns, rows })
}

impl ComparisonTable {
    /// Columns `provider,method`, then `<column> accuracy` and
    /// `<column> macro_f1` per column. Missing cells are empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["provider".to_string(), "method".to_string()];
        for c in &self.columns {
            header.push(format!("{c} accuracy"));
            header.push(format!("{c} macro_f1"));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.provider.clone(), row.label.clone()];
            for cell in &row.cells {
                match cell {
                    Some(c) => {
                        rec.push(format!("{:.3}", c.accuracy));
                        rec.push(format!("{:.3}", c.macro_f1));
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Aligned text, each cell as `accuracy, macro-F1`.
    pub fn to_text(&self) -> String {
        let mut header = vec!["provider", "method"];
        header.extend(self.columns.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut r = vec![row.provider.clone(), row.label.clone()];
                r.extend(row.cells.iter().map(|c| match c {
                    Some(c) => format!("{:.3}, {:.3}", c.accuracy, c.macro_f1),
                    None => String::new(),
                }));
                r
            })
            .collect();
        dyn_table(&header, &rows)
    }
}

fn dyn_table(header: &[&str], rows: &[Vec<String>]) -> String {
    // Two label columns left-aligned, scores right-aligned.
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut s = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        s.push_str(parts.join("  ").trim_end());
        s.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    s
}
