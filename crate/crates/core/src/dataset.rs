//! Labeled query datasets: loading, language filtering and balanced sampling.
//!
//! Sampling draws without replacement from each (class) or (class, language)
//! group independently, with one RNG stream per group (see [`crate::rng`]).
//! Selected records keep their original dataset order, so a sample depends
//! only on the group members and the seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Default delimiter separating the shared semantic key from the rest of a
/// record id, e.g. `"1234#sw-KE"` has semantic key `"1234"`.
pub const DEFAULT_KEY_DELIMITER: &str = "#";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
    pub label: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_key: Option<String>,
}

impl QueryRecord {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: impl Into<String>,
        language: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            language: language.into(),
            semantic_key: None,
        }
    }

    pub fn with_semantic_key(mut self, key: impl Into<String>) -> Self {
        self.semantic_key = Some(key.into());
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err(format!("record {:?} has empty text", self.id));
        }
        if self.label.is_empty() {
            return Err(format!("record {:?} has empty label", self.id));
        }
        if self.language.is_empty() {
            return Err(format!("record {:?} has empty language", self.id));
        }
        Ok(())
    }

    /// The explicit semantic key, or the id prefix before `delimiter`
    /// (the whole id when the delimiter does not occur).
    pub fn semantic_key(&self, delimiter: &str) -> &str {
        if let Some(key) = &self.semantic_key {
            return key;
        }
        if delimiter.is_empty() {
            return &self.id;
        }
        match self.id.find(delimiter) {
            Some(pos) => &self.id[..pos],
            None => &self.id,
        }
    }
}

/// An ordered, validated collection of records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<QueryRecord>,
    labels: BTreeSet<String>,
    languages: BTreeSet<String>,
}

impl Dataset {
    /// Builds a dataset, checking record invariants and id uniqueness.
    /// Positions in errors are 1-based record positions.
    pub fn new(records: Vec<QueryRecord>) -> Result<Self> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r));
        Self::from_numbered(numbered, false)
    }

    fn from_numbered(
        records: impl IntoIterator<Item = (usize, QueryRecord)>,
        from_file: bool,
    ) -> Result<Self> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut out = Vec::new();
        for (line, record) in records {
            if let Err(message) = record.validate() {
                return Err(if from_file {
                    Error::MalformedLine { line, message }
                } else {
                    Error::InvalidRecord(format!("position {line}: {message}"))
                });
            }
            if let Some(&first) = seen.get(&record.id) {
                return Err(Error::DuplicateId {
                    id: record.id,
                    first,
                    second: line,
                });
            }
            seen.insert(record.id.clone(), line);
            out.push(record);
        }
        Ok(Self::from_valid(out))
    }

    /// Caller guarantees the records are valid and ids unique.
    fn from_valid(records: Vec<QueryRecord>) -> Self {
        let labels = records.iter().map(|r| r.label.clone()).collect();
        let languages = records.iter().map(|r| r.language.clone()).collect();
        Self {
            records,
            labels,
            languages,
        }
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, QueryRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> &BTreeSet<String> {
        &self.labels
    }

    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    pub fn label_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label.as_str()).or_insert(0) += 1;
        }
        counts
    }

    pub fn get(&self, id: &str) -> Option<&QueryRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    fn subset(&self, mut positions: Vec<usize>) -> Self {
        positions.sort_unstable();
        positions.dedup();
        Self::from_valid(
            positions
                .into_iter()
                .map(|i| self.records[i].clone())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    #[serde(rename = "jsonl")]
    JsonLines,
    #[serde(rename = "tsv")]
    Tsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json-lines" => Ok(Self::JsonLines),
            "tsv" => Ok(Self::Tsv),
            other => Err(Error::InvalidConfig(format!(
                "unknown dataset format {other:?} (expected jsonl or tsv)"
            ))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::JsonLines => "jsonl",
            Self::Tsv => "tsv",
        })
    }
}

const TSV_HEADER: [&str; 5] = ["id", "text", "label", "language", "semantic_key"];

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, format)
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Dataset> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty());

    let numbered = match format {
        DatasetFormat::JsonLines => lines
            .map(|(line, l)| {
                serde_json::from_str::<QueryRecord>(l)
                    .map(|r| (line, r))
                    .map_err(|e| Error::MalformedLine {
                        line,
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?,
        DatasetFormat::Tsv => {
            let mut lines = lines;
            let Some((hline, header)) = lines.next() else {
                return Err(Error::Empty("dataset has no header row".into()));
            };
            let cols: Vec<&str> = header.split('\t').collect();
            if cols != TSV_HEADER {
                return Err(Error::MalformedLine {
                    line: hline,
                    message: format!(
                        "expected header {:?}, found {cols:?}",
                        TSV_HEADER.join("\t")
                    ),
                });
            }
            lines
                .map(|(line, l)| {
                    let f: Vec<&str> = l.split('\t').collect();
                    if f.len() != 5 {
                        return Err(Error::MalformedLine {
                            line,
                            message: format!("expected 5 tab-separated columns, found {}", f.len()),
                        });
                    }
                    let mut r = QueryRecord::new(f[0], f[1], f[2], f[3]);
                    if !f[4].is_empty() {
                        r.semantic_key = Some(f[4].to_string());
                    }
                    Ok((line, r))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    if numbered.is_empty() {
        return Err(Error::Empty("dataset has no records".into()));
    }
    Dataset::from_numbered(numbered, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Include,
    Exclude,
}

/// Keeps (include) or drops (exclude) records whose language is in `tags`.
/// Include-mode tags that match nothing are logged as a warning.
pub fn filter_by_language(d: &Dataset, mode: FilterMode, tags: &[String]) -> Result<Dataset> {
    if tags.is_empty() {
        return Err(Error::InvalidPlan(
            "language filter needs at least one tag".into(),
        ));
    }
    let wanted: BTreeSet<&str> = tags.iter().map(String::as_str).collect();
    if mode == FilterMode::Include {
        let unmatched = unmatched_tags(d, tags);
        if !unmatched.is_empty() {
            warn!(
                "language filter: no records for tags {}",
                unmatched.join(",")
            );
        }
    }
    let keep: Vec<usize> = d
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| wanted.contains(r.language.as_str()) == (mode == FilterMode::Include))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Empty(format!(
            "language filter {mode:?} {} leaves no records",
            tags.join(",")
        )));
    }
    Ok(d.subset(keep))
}

/// Tags from `tags` that no record in `d` carries.
pub fn unmatched_tags(d: &Dataset, tags: &[String]) -> Vec<String> {
    tags.iter()
        .filter(|t| !d.languages.contains(*t))
        .cloned()
        .collect()
}

/// C-way N-shot sampling parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub shots_per_class: usize,
    /// Classes to sample; all dataset labels when absent.
    pub classes: Option<Vec<String>>,
    /// When set, sampling is stratified per (class, language).
    pub languages: Option<Vec<String>>,
    pub seed: u64,
    /// Take every available record for groups smaller than N instead of failing.
    #[serde(default)]
    pub clamp_to_available: bool,
}

impl SamplingPlan {
    pub fn new(shots_per_class: usize, seed: u64) -> Self {
        Self {
            shots_per_class,
            classes: None,
            languages: None,
            seed,
            clamp_to_available: false,
        }
    }

    pub fn with_classes(mut self, classes: Vec<String>) -> Self {
        self.classes = Some(classes);
        self
    }

    pub fn with_languages(mut self, languages: Vec<String>) -> Self {
        self.languages = Some(languages);
        self
    }

    pub fn clamped(mut self, clamp: bool) -> Self {
        self.clamp_to_available = clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots_per_class == 0 {
            return Err(Error::InvalidPlan(
                "shots_per_class must be at least 1".into(),
            ));
        }
        if let Some(classes) = &self.classes {
            check_tag_list("classes", classes)?;
        }
        if let Some(langs) = &self.languages {
            check_tag_list("languages", langs)?;
        }
        Ok(())
    }

    fn class_list(&self, d: &Dataset) -> Vec<String> {
        self.classes
            .clone()
            .unwrap_or_else(|| d.labels.iter().cloned().collect())
    }
}

fn check_tag_list(what: &str, tags: &[String]) -> Result<()> {
    if tags.is_empty() {
        return Err(Error::InvalidPlan(format!("{what} list is empty")));
    }
    let mut seen = BTreeSet::new();
    for t in tags {
        if !seen.insert(t) {
            return Err(Error::InvalidPlan(format!("{what} list repeats {t:?}")));
        }
    }
    Ok(())
}

/// Draws exactly N records per class, or per (class, language) when the plan
/// names languages.
pub fn sample_balanced(d: &Dataset, plan: &SamplingPlan) -> Result<Dataset> {
    plan.validate()?;
    let mut groups: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    let stratified = plan.languages.is_some();
    for (i, r) in d.records.iter().enumerate() {
        let lang = if stratified { r.language.as_str() } else { "" };
        groups.entry((r.label.as_str(), lang)).or_default().push(i);
    }

    let languages: Vec<Option<&str>> = match &plan.languages {
        Some(ls) => ls.iter().map(|l| Some(l.as_str())).collect(),
        None => vec![None],
    };
    let mut selected = Vec::new();
    for class in plan.class_list(d) {
        for lang in &languages {
            let members = groups
                .get(&(class.as_str(), lang.unwrap_or("")))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let want = shots_for_group(plan, &class, *lang, members.len())?;
            let mut rng = SeededRng::new(plan.seed, &["sample", &class, lang.unwrap_or("")]);
            selected.extend(
                rng.choose_indices(members.len(), want)
                    .into_iter()
                    .map(|j| members[j]),
            );
        }
    }
    Ok(d.subset(selected))
}

fn shots_for_group(
    plan: &SamplingPlan,
    class: &str,
    language: Option<&str>,
    available: usize,
) -> Result<usize> {
    let requested = plan.shots_per_class;
    if available >= requested {
        return Ok(requested);
    }
    if plan.clamp_to_available && available > 0 {
        warn!(
            "sampling: class {class:?}{} clamped to {available} of {requested} shots",
            language.map(|l| format!(" ({l})")).unwrap_or_default()
        );
        return Ok(available);
    }
    Err(Error::InsufficientShots {
        label: class.to_string(),
        language: language.map(str::to_string),
        available,
        requested,
    })
}

/// How sampled semantic keys are spread over a language set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageAllocation {
    /// Every sampled key appears once in every language of the set
    /// (N per class per language). Both sets must have the same size.
    #[default]
    PerLanguage,
    /// Each sampled key appears once, in a language assigned round-robin
    /// over the set (N per class in total).
    Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedSampling {
    pub key_delimiter: String,
    pub allocation: LanguageAllocation,
}

impl Default for PairedSampling {
    fn default() -> Self {
        Self {
            key_delimiter: DEFAULT_KEY_DELIMITER.to_string(),
            allocation: LanguageAllocation::PerLanguage,
        }
    }
}

/// Samples the same (class, semantic key) pairs for two language sets, so
/// the two results differ only in which translations they contain.
///
/// Key selection depends on the union of both sets, never on their order,
/// so swapping the sets swaps the outputs. `plan.languages` is not used.
pub fn paired_semantic_sample(
    d: &Dataset,
    plan: &SamplingPlan,
    language_sets: (&[String], &[String]),
    opts: &PairedSampling,
) -> Result<(Dataset, Dataset)> {
    plan.validate()?;
    let (set_a, set_b) = language_sets;
    check_tag_list("first language set", set_a)?;
    check_tag_list("second language set", set_b)?;
    if opts.allocation == LanguageAllocation::PerLanguage && set_a.len() != set_b.len() {
        return Err(Error::InvalidPlan(format!(
            "per-language allocation needs equally sized language sets ({} vs {}); use split allocation",
            set_a.len(),
            set_b.len()
        )));
    }
    let union: BTreeSet<&str> = set_a.iter().chain(set_b).map(String::as_str).collect();

    // key -> (label, language -> record positions)
    let mut keys: BTreeMap<&str, (&str, BTreeMap<&str, Vec<usize>>)> = BTreeMap::new();
    for (i, r) in d.records.iter().enumerate() {
        let key = r.semantic_key(&opts.key_delimiter);
        let entry = keys
            .entry(key)
            .or_insert_with(|| (r.label.as_str(), BTreeMap::new()));
        if entry.0 != r.label {
            return Err(Error::InvalidRecord(format!(
                "semantic key {key:?} carries labels {:?} and {:?}",
                entry.0, r.label
            )));
        }
        entry.1.entry(r.language.as_str()).or_default().push(i);
    }

    let mut out_a = Vec::new();
    let mut out_b = Vec::new();
    for class in plan.class_list(d) {
        let class_keys: Vec<&str> = keys
            .iter()
            .filter(|(_, (label, _))| *label == class)
            .map(|(k, _)| *k)
            .collect();
        for key in &class_keys {
            let by_lang = &keys[key].1;
            for lang in &union {
                match by_lang.get(lang).map(Vec::len).unwrap_or(0) {
                    1 => {}
                    0 => {
                        return Err(Error::MissingTranslation {
                            key: key.to_string(),
                            language: lang.to_string(),
                        })
                    }
                    count => {
                        return Err(Error::AmbiguousTranslation {
                            key: key.to_string(),
                            language: lang.to_string(),
                            count,
                        })
                    }
                }
            }
        }
        let want = shots_for_group(plan, &class, None, class_keys.len())?;
        let mut rng = SeededRng::new(plan.seed, &["paired", &class]);
        let drawn = rng.choose_indices(class_keys.len(), want);
        for (n, &j) in drawn.iter().enumerate() {
            let by_lang = &keys[class_keys[j]].1;
            for (set, out) in [(set_a, &mut out_a), (set_b, &mut out_b)] {
                match opts.allocation {
                    LanguageAllocation::PerLanguage => {
                        out.extend(set.iter().map(|l| by_lang[l.as_str()][0]));
                    }
                    LanguageAllocation::Split => {
                        out.push(by_lang[set[n % set.len()].as_str()][0]);
                    }
                }
            }
        }
    }
    Ok((d.subset(out_a), d.subset(out_b)))
}
