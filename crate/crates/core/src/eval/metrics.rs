//! Accuracy and macro-F1 from a confusion matrix.
//!
//! Macro-F1 averages per-class F1 over the gold label set only. Labels that
//! are predicted but never gold stay in the confusion matrix (they lower the
//! precision of nothing but themselves) and are left out of the average.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, QueryRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// (gold, predicted) -> count
    cells: BTreeMap<(String, String), usize>,
    total: usize,
    correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub gold: String,
    pub predicted: String,
    pub count: usize,
}

impl ConfusionMatrix {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut m = Self::default();
        for (gold, pred) in pairs {
            m.add(gold, pred);
        }
        m
    }

    pub fn add(&mut self, gold: &str, predicted: &str) {
        *self
            .cells
            .entry((gold.to_string(), predicted.to_string()))
            .or_insert(0) += 1;
        self.total += 1;
        if gold == predicted {
            self.correct += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn correct(&self) -> usize {
        self.correct
    }

    pub fn count(&self, gold: &str, predicted: &str) -> usize {
        self.cells
            .get(&(gold.to_string(), predicted.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn gold_labels(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(g, _)| g.as_str()).collect()
    }

    pub fn accuracy(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::Empty("no predictions to score".into()));
        }
        Ok(self.correct as f64 / self.total as f64)
    }

    /// Per-class metrics over the gold labels, in label order.
    pub fn per_class(&self) -> Vec<ClassMetrics> {
        let mut tp: HashMap<&str, usize> = HashMap::new();
        let mut predicted: HashMap<&str, usize> = HashMap::new();
        let mut gold: HashMap<&str, usize> = HashMap::new();
        for ((g, p), &c) in &self.cells {
            *gold.entry(g).or_insert(0) += c;
            *predicted.entry(p).or_insert(0) += c;
            if g == p {
                *tp.entry(g).or_insert(0) += c;
            }
        }
        self.gold_labels()
            .into_iter()
            .map(|label| {
                let tp = tp.get(label).copied().unwrap_or(0) as f64;
                let pred = predicted.get(label).copied().unwrap_or(0) as f64;
                let support = gold[label];
                let precision = if pred > 0.0 { tp / pred } else { 0.0 };
                let recall = tp / support as f64;
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    label: label.to_string(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect()
    }

    pub fn macro_f1(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::Empty("no predictions to score".into()));
        }
        let per_class = self.per_class();
        Ok(per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64)
    }

    pub fn cells(&self) -> Vec<ConfusionCell> {
        self.cells
            .iter()
            .map(|((g, p), &count)| ConfusionCell {
                gold: g.clone(),
                predicted: p.clone(),
                count,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageMetrics {
    pub language: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub count: usize,
}

/// Scores of one prediction run against its gold dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub total: usize,
    pub correct: usize,
    pub per_class: Vec<ClassMetrics>,
    pub per_language: Vec<LanguageMetrics>,
    /// Test records whose gold label the classifier could never predict.
    pub unseen_gold_labels: usize,
    pub confusion: Vec<ConfusionCell>,
}

/// Pairs every gold record with its prediction. Fails on missing, extra or
/// repeated prediction ids, and on an empty gold set.
pub fn align<'a>(
    preds: &'a [(String, String)],
    gold: &'a Dataset,
) -> Result<Vec<(&'a QueryRecord, &'a str)>> {
    if gold.is_empty() {
        return Err(Error::Empty("gold dataset has no records".into()));
    }
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(preds.len());
    for (id, label) in preds {
        if by_id.insert(id, label).is_some() {
            return Err(Error::IdMismatch(format!("id {id:?} predicted twice")));
        }
    }
    let mut out = Vec::with_capacity(gold.len());
    for r in gold.iter() {
        match by_id.remove(r.id.as_str()) {
            Some(p) => out.push((r, p)),
            None => return Err(Error::IdMismatch(format!("no prediction for {:?}", r.id))),
        }
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(Error::IdMismatch(format!(
            "{} predictions for unknown ids, e.g. {extra:?}",
            by_id.len()
        )));
    }
    Ok(out)
}

pub fn accuracy(preds: &[(String, String)], gold: &Dataset) -> Result<f64> {
    let pairs = align(preds, gold)?;
    ConfusionMatrix::from_pairs(pairs.iter().map(|(r, p)| (r.label.as_str(), *p))).accuracy()
}

pub fn macro_f1(preds: &[(String, String)], gold: &Dataset) -> Result<f64> {
    let pairs = align(preds, gold)?;
    ConfusionMatrix::from_pairs(pairs.iter().map(|(r, p)| (r.label.as_str(), *p))).macro_f1()
}

/// Full metrics. `known_labels` is the label universe of the index or
/// training set; gold labels outside it are counted as unseen.
pub fn evaluate(
    preds: &[(String, String)],
    gold: &Dataset,
    known_labels: Option<&BTreeSet<String>>,
) -> Result<Metrics> {
    let pairs = align(preds, gold)?;
    let overall = ConfusionMatrix::from_pairs(pairs.iter().map(|(r, p)| (r.label.as_str(), *p)));
    let mut by_lang: BTreeMap<&str, ConfusionMatrix> = BTreeMap::new();
    for (r, p) in &pairs {
        by_lang
            .entry(r.language.as_str())
            .or_default()
            .add(&r.label, p);
    }
    let per_language = by_lang
        .into_iter()
        .map(|(language, m)| {
            Ok(LanguageMetrics {
                language: language.to_string(),
                accuracy: m.accuracy()?,
                macro_f1: m.macro_f1()?,
                count: m.total(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let unseen_gold_labels = match known_labels {
        Some(known) => pairs
            .iter()
            .filter(|(r, _)| !known.contains(&r.label))
            .count(),
        None => 0,
    };
    Ok(Metrics {
        accuracy: overall.accuracy()?,
        macro_f1: overall.macro_f1()?,
        total: overall.total(),
        correct: overall.correct(),
        per_class: overall.per_class(),
        per_language,
        unseen_gold_labels,
        confusion: overall.cells(),
    })
}
