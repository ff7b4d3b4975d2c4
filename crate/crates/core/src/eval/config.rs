//! Experiment configs: a flat `key = value` text format.
//!
//! One key per line, `#` starts a comment line, lists are comma-separated.
//! Relative paths resolve against the config file's directory. Unknown or
//! repeated keys are errors. See [`ExperimentConfig`] for the keys; the
//! required ones are `name`, `method`, `train`, `test` and `embeddings`.
//!
//! ```text
//! name = sw-high-resource
//! method = sim_search
//! provider = labse
//! train = massive.train.jsonl
//! test = massive.test.jsonl
//! embeddings = massive.labse.qemb
//! shots = 31
//! stratify_languages = true
//! index_filter = explicit_list
//! index_languages = en-US,zh-CN,es-ES,fr-FR,ja-JP
//! target_language = sw-KE
//! k = 31
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::VoteWeighting;
use crate::dataset::{DatasetFormat, LanguageAllocation, DEFAULT_KEY_DELIMITER};
use crate::error::{Error, Result};
use crate::index::IndexMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SimSearch,
    Classification,
    Translation,
}

impl Method {
    /// Name used in comparison tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            Method::SimSearch => "Sim-Search",
            Method::Classification => "Classification",
            Method::Translation => "Translation",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sim_search" => Ok(Self::SimSearch),
            "classification" => Ok(Self::Classification),
            "translation" => Ok(Self::Translation),
            _ => Err("expected sim_search, classification or translation".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFilter {
    #[default]
    None,
    /// Every training language except `target_language`.
    AllWithoutTarget,
    /// Only `index_languages`.
    ExplicitList,
}

impl FromStr for IndexFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "all_without_target" => Ok(Self::AllWithoutTarget),
            "explicit_list" => Ok(Self::ExplicitList),
            _ => Err("expected none, all_without_target or explicit_list".into()),
        }
    }
}

/// Which training records the classification head sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainRegime {
    /// The same sampled records the index would hold.
    #[default]
    Partial,
    /// Every (language-filtered) training record.
    Full,
}

impl FromStr for TrainRegime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "partial" => Ok(Self::Partial),
            "full" => Ok(Self::Full),
            _ => Err("expected partial or full".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: Method,
    /// Encoder name shown in reports; defaults to the store's provider name.
    pub provider: Option<String>,
    /// Row label in comparisons; defaults to the method name.
    pub row_label: Option<String>,
    /// Column label in comparisons; defaults to the target language, then
    /// the test file stem.
    pub column: Option<String>,

    pub train: PathBuf,
    pub train_format: DatasetFormat,
    pub test: PathBuf,
    pub test_format: DatasetFormat,
    pub translated_test: Option<PathBuf>,
    pub translated_test_format: DatasetFormat,
    pub embeddings: PathBuf,
    pub translated_embeddings: Option<PathBuf>,

    /// Shots per class (per class and language when stratified). No
    /// sampling when absent.
    pub shots: Option<usize>,
    pub classes: Option<Vec<String>>,
    pub stratify_languages: bool,
    pub clamp_shots: bool,
    pub allow_unbalanced: bool,
    /// The other language set of a paired semantic sample.
    pub pair_with_languages: Option<Vec<String>>,
    pub allocation: LanguageAllocation,
    pub key_delimiter: String,

    pub index_filter: IndexFilter,
    pub target_language: Option<String>,
    pub index_languages: Option<Vec<String>>,
    /// Test languages to keep; defaults to the target language when set.
    pub test_languages: Option<Vec<String>>,

    pub k: usize,
    pub index_mode: IndexMode,
    pub m_max: usize,
    pub ef_construction: usize,
    pub ef_search: Option<usize>,
    pub vote: VoteWeighting,
    pub min_similarity: Option<f64>,

    pub train_regime: TrainRegime,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,

    pub seed: u64,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the required keys.
    pub fn new(
        name: impl Into<String>,
        method: Method,
        train: impl Into<PathBuf>,
        test: impl Into<PathBuf>,
        embeddings: impl Into<PathBuf>,
    ) -> Self {
        Self {
            name: name.into(),
            method,
            provider: None,
            row_label: None,
            column: None,
            train: train.into(),
            train_format: DatasetFormat::JsonLines,
            test: test.into(),
            test_format: DatasetFormat::JsonLines,
            translated_test: None,
            translated_test_format: DatasetFormat::JsonLines,
            embeddings: embeddings.into(),
            translated_embeddings: None,
            shots: None,
            classes: None,
            stratify_languages: true,
            clamp_shots: false,
            allow_unbalanced: false,
            pair_with_languages: None,
            allocation: LanguageAllocation::PerLanguage,
            key_delimiter: DEFAULT_KEY_DELIMITER.to_string(),
            index_filter: IndexFilter::None,
            target_language: None,
            index_languages: None,
            test_languages: None,
            k: 31,
            index_mode: IndexMode::Exact,
            m_max: 16,
            ef_construction: 100,
            ef_search: None,
            vote: VoteWeighting::Majority,
            min_similarity: None,
            train_regime: TrainRegime::Partial,
            learning_rate: 0.1,
            l2_lambda: 1e-4,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }

    /// Checks cross-field requirements.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.name.trim().is_empty() {
            return bad("name is empty".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.shots == Some(0) {
            return bad("shots must be at least 1".into());
        }
        if self.method == Method::Translation
            && (self.translated_test.is_none() || self.translated_embeddings.is_none())
        {
            return bad(
                "method translation needs translated_test and translated_embeddings".into(),
            );
        }
        match self.index_filter {
            IndexFilter::AllWithoutTarget if self.target_language.is_none() => {
                return bad("index_filter all_without_target needs target_language".into())
            }
            IndexFilter::ExplicitList
                if self.index_languages.as_ref().map_or(true, Vec::is_empty) =>
            {
                return bad("index_filter explicit_list needs index_languages".into())
            }
            _ => {}
        }
        if self.pair_with_languages.is_some() && self.shots.is_none() {
            return bad("pair_with_languages needs shots".into());
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.l2_lambda >= 0.0) {
            return bad("training needs batch_size >= 1, learning_rate > 0, l2_lambda >= 0".into());
        }
        Ok(())
    }

    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Test languages after defaulting to the target language.
    pub fn effective_test_languages(&self) -> Option<Vec<String>> {
        self.test_languages
            .clone()
            .or_else(|| self.target_language.clone().map(|t| vec![t]))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let cfg_err = |line: usize, message: String| Error::Config { line, message };
        let required = |kv: &mut KeyValues, key: &str| {
            kv.take(key)
                .ok_or_else(|| Error::InvalidConfig(format!("missing required key {key:?}")))
        };

        let (line, method) = required(&mut kv, "method")?;
        let method = method.parse::<Method>().map_err(|m| cfg_err(line, m))?;
        let mut cfg = Self::new(
            required(&mut kv, "name")?.1,
            method,
            required(&mut kv, "train")?.1,
            required(&mut kv, "test")?.1,
            required(&mut kv, "embeddings")?.1,
        );
        kv.opt_string("provider", &mut cfg.provider);
        kv.opt_string("row_label", &mut cfg.row_label);
        kv.opt_string("column", &mut cfg.column);
        kv.parsed("train_format", &mut cfg.train_format)?;
        kv.parsed("test_format", &mut cfg.test_format)?;
        if let Some((_, v)) = kv.take("translated_test") {
            cfg.translated_test = Some(v.into());
        }
        kv.parsed("translated_test_format", &mut cfg.translated_test_format)?;
        if let Some((_, v)) = kv.take("translated_embeddings") {
            cfg.translated_embeddings = Some(v.into());
        }
        kv.opt_parsed("shots", &mut cfg.shots)?;
        kv.opt_list("classes", &mut cfg.classes)?;
        kv.parsed("stratify_languages", &mut cfg.stratify_languages)?;
        kv.parsed("clamp_shots", &mut cfg.clamp_shots)?;
        kv.parsed("allow_unbalanced", &mut cfg.allow_unbalanced)?;
        kv.opt_list("pair_with_languages", &mut cfg.pair_with_languages)?;
        if let Some((line, v)) = kv.take("allocation") {
            cfg.allocation = match v.as_str() {
                "per_language" => LanguageAllocation::PerLanguage,
                "split" => LanguageAllocation::Split,
                _ => return Err(cfg_err(line, "expected per_language or split".into())),
            };
        }
        if let Some((_, v)) = kv.take("key_delimiter") {
            cfg.key_delimiter = v;
        }
        if let Some((line, v)) = kv.take("index_filter") {
            cfg.index_filter = v.parse().map_err(|m| cfg_err(line, m))?;
        }
        kv.opt_string("target_language", &mut cfg.target_language);
        kv.opt_list("index_languages", &mut cfg.index_languages)?;
        kv.opt_list("test_languages", &mut cfg.test_languages)?;
        kv.parsed("k", &mut cfg.k)?;
        kv.parsed("index_mode", &mut cfg.index_mode)?;
        kv.parsed("m_max", &mut cfg.m_max)?;
        kv.parsed("ef_construction", &mut cfg.ef_construction)?;
        kv.opt_parsed("ef_search", &mut cfg.ef_search)?;
        if let Some((line, v)) = kv.take("vote") {
            cfg.vote = match v.as_str() {
                "majority" => VoteWeighting::Majority,
                "similarity" => VoteWeighting::Similarity,
                _ => return Err(cfg_err(line, "expected majority or similarity".into())),
            };
        }
        kv.opt_parsed("min_similarity", &mut cfg.min_similarity)?;
        if let Some((line, v)) = kv.take("train_regime") {
            cfg.train_regime = v.parse().map_err(|m| cfg_err(line, m))?;
        }
        kv.parsed("learning_rate", &mut cfg.learning_rate)?;
        kv.parsed("l2_lambda", &mut cfg.l2_lambda)?;
        kv.parsed("epochs", &mut cfg.epochs)?;
        kv.parsed("batch_size", &mut cfg.batch_size)?;
        kv.parsed("seed", &mut cfg.seed)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

impl fmt::Display for ExperimentConfig {
    /// Renders the config in its file format; `parse` reads it back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[String]| v.join(",");
        writeln!(f, "name = {}", self.name)?;
        let method = match self.method {
            Method::SimSearch => "sim_search",
            Method::Classification => "classification",
            Method::Translation => "translation",
        };
        writeln!(f, "method = {method}")?;
        for (key, v) in [
            ("provider", &self.provider),
            ("row_label", &self.row_label),
            ("column", &self.column),
            ("target_language", &self.target_language),
        ] {
            if let Some(v) = v {
                writeln!(f, "{key} = {v}")?;
            }
        }
        writeln!(f, "train = {}", self.train.display())?;
        writeln!(f, "train_format = {}", self.train_format)?;
        writeln!(f, "test = {}", self.test.display())?;
        writeln!(f, "test_format = {}", self.test_format)?;
        if let Some(p) = &self.translated_test {
            writeln!(f, "translated_test = {}", p.display())?;
        }
        writeln!(
            f,
            "translated_test_format = {}",
            self.translated_test_format
        )?;
        writeln!(f, "embeddings = {}", self.embeddings.display())?;
        if let Some(p) = &self.translated_embeddings {
            writeln!(f, "translated_embeddings = {}", p.display())?;
        }
        if let Some(n) = self.shots {
            writeln!(f, "shots = {n}")?;
        }
        for (key, v) in [
            ("classes", &self.classes),
            ("pair_with_languages", &self.pair_with_languages),
            ("index_languages", &self.index_languages),
            ("test_languages", &self.test_languages),
        ] {
            if let Some(v) = v {
                writeln!(f, "{key} = {}", list(v))?;
            }
        }
        writeln!(f, "stratify_languages = {}", self.stratify_languages)?;
        writeln!(f, "clamp_shots = {}", self.clamp_shots)?;
        writeln!(f, "allow_unbalanced = {}", self.allow_unbalanced)?;
        let allocation = match self.allocation {
            LanguageAllocation::PerLanguage => "per_language",
            LanguageAllocation::Split => "split",
        };
        writeln!(f, "allocation = {allocation}")?;
        writeln!(f, "key_delimiter = {}", self.key_delimiter)?;
        let filter = match self.index_filter {
            IndexFilter::None => "none",
            IndexFilter::AllWithoutTarget => "all_without_target",
            IndexFilter::ExplicitList => "explicit_list",
        };
        writeln!(f, "index_filter = {filter}")?;
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "index_mode = {}", self.index_mode)?;
        writeln!(f, "m_max = {}", self.m_max)?;
        writeln!(f, "ef_construction = {}", self.ef_construction)?;
        if let Some(ef) = self.ef_search {
            writeln!(f, "ef_search = {ef}")?;
        }
        let vote = match self.vote {
            VoteWeighting::Majority => "majority",
            VoteWeighting::Similarity => "similarity",
        };
        writeln!(f, "vote = {vote}")?;
        if let Some(t) = self.min_similarity {
            writeln!(f, "min_similarity = {t}")?;
        }
        let regime = match self.train_regime {
            TrainRegime::Partial => "partial",
            TrainRegime::Full => "full",
        };
        writeln!(f, "train_regime = {regime}")?;
        writeln!(f, "learning_rate = {}", self.learning_rate)?;
        writeln!(f, "l2_lambda = {}", self.l2_lambda)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

struct KeyValues {
    map: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Config {
                    line,
                    message: format!("expected `key = value`, found {trimmed:?}"),
                });
            };
            let key = key.trim().to_string();
            if map
                .insert(key.clone(), (line, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config {
                    line,
                    message: format!("key {key:?} given twice"),
                });
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn opt_string(&mut self, key: &str, slot: &mut Option<String>) {
        if let Some((_, v)) = self.take(key) {
            *slot = Some(v);
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: fmt::Display,
    {
        if let Some((line, v)) = self.take(key) {
            *slot = v.parse().map_err(|e: T::Err| Error::Config {
                line,
                message: format!("{key}: {e}"),
            })?;
        }
        Ok(())
    }

    fn opt_parsed<T: FromStr>(&mut self, key: &str, slot: &mut Option<T>) -> Result<()>
    where
        T::Err: fmt::Display,
    {
        if let Some((line, v)) = self.take(key) {
            *slot = Some(v.parse().map_err(|e: T::Err| Error::Config {
                line,
                message: format!("{key}: {e}"),
            })?);
        }
        Ok(())
    }

    fn opt_list(&mut self, key: &str, slot: &mut Option<Vec<String>>) -> Result<()> {
        if let Some((line, v)) = self.take(key) {
            let items: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
            if items.iter().any(String::is_empty) {
                return Err(Error::Config {
                    line,
                    message: format!("{key}: empty list item"),
                });
            }
            *slot = Some(items);
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Config {
                line,
                message: format!("unknown key {key:?}"),
            }),
        }
    }
}
