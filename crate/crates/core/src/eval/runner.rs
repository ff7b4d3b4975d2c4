//! Runs an experiment config end to end and records a manifest that can
//! replay it.
//!
//! Stages, in order: load, filter, sample, filter-test, embeddings, then
//! index + classify (similarity search) or train + predict (classification
//! head, translation), then metrics. Errors name the stage they came from.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{error, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, IndexFilter, Method, TrainRegime};
use super::metrics::evaluate;
use super::report::MetricsReport;
use crate::baseline::{predict_logreg, train_logreg, translation_pipeline_eval, TrainConfig};
use crate::classify::{classify_batch, ClassifyOptions, PredictionRecord, VoteConfig};
use crate::dataset::{
    filter_by_language, load_dataset, paired_semantic_sample, sample_balanced, Dataset, FilterMode,
    PairedSampling, SamplingPlan,
};
use crate::embedding::{load_embedding_store, EmbeddingStore};
use crate::error::{Error, Result};
use crate::index::{build_index, BuildOptions, HnswParams, SearchParams};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; rayon's default pool when unset.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// What is needed to rerun an experiment and check the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: String,
    /// Directory relative config paths resolve against.
    pub base_dir: PathBuf,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub sample_size: usize,
    /// Digest of the sampled record ids, newline-joined in dataset order.
    pub sample_ids_sha256: String,
    pub index_languages: Vec<String>,
    pub report_sha256: String,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub manifest: Manifest,
    /// One JSON object per test query, in test order.
    pub predictions_jsonl: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Runs `cfg` with relative paths resolved against `base_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    opts: &RunOptions,
) -> Result<RunOutput> {
    cfg.validate()?;
    match opts.threads {
        None => run_inner(cfg, base_dir),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            pool.install(|| run_inner(cfg, base_dir))
        }
    }
}

/// Loads a config file and runs it relative to its own directory.
pub fn run_config_file(path: &Path, opts: &RunOptions) -> Result<RunOutput> {
    let cfg = ExperimentConfig::load(path)?;
    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let base = std::fs::canonicalize(base).map_err(|e| Error::io(base, e))?;
    run_experiment(&cfg, &base, opts)
}

/// Replays a manifest. Every input must still hash to its recorded digest.
/// The flag reports whether the new report is byte-identical to the old.
pub fn rerun_from_manifest(path: &Path, opts: &RunOptions) -> Result<(RunOutput, bool)> {
    let manifest = Manifest::load(path)?;
    for input in &manifest.inputs {
        if file_sha256(&input.path)? != input.sha256 {
            return Err(Error::InputChanged {
                path: input.path.clone(),
            });
        }
    }
    let out = run_experiment(&manifest.config, &manifest.base_dir, opts)?;
    let same = out.manifest.report_sha256 == manifest.report_sha256;
    Ok((out, same))
}

/// Writes report.json, report.txt, manifest.json and predictions.jsonl.
pub fn write_outputs(out_dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, body) in [
        ("report.json", out.report.to_json()),
        ("report.txt", out.report.to_text()),
        ("manifest.json", out.manifest.to_json()),
        ("predictions.jsonl", out.predictions_jsonl.clone()),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HeadPrediction<'a> {
    id: &'a str,
    predicted_label: &'a str,
}

struct Outcome {
    preds: Vec<(String, String)>,
    known: BTreeSet<String>,
    train_size: usize,
    index_languages: Vec<String>,
    tie_rate: Option<f64>,
    jsonl: String,
    metrics: Option<super::metrics::Metrics>,
}

fn run_inner(cfg: &ExperimentConfig, base: &Path) -> Result<RunOutput> {
    let base = if base.is_absolute() {
        base.to_path_buf()
    } else {
        std::fs::canonicalize(base).map_err(|e| Error::io(base, e))?
    };
    let resolve = |p: &Path| cfg.resolve(&base, p);
    let mut inputs = Vec::new();
    let mut digest = |role: &str, p: &Path| -> Result<PathBuf> {
        let path = resolve(p);
        inputs.push(InputDigest {
            role: role.to_string(),
            sha256: file_sha256(&path)?,
            path: path.clone(),
        });
        Ok(path)
    };

    let train_path = digest("train", &cfg.train).map_err(|e| e.at_stage("load"))?;
    let test_path = digest("test", &cfg.test).map_err(|e| e.at_stage("load"))?;
    let emb_path = digest("embeddings", &cfg.embeddings).map_err(|e| e.at_stage("load"))?;
    let translated = match (&cfg.translated_test, &cfg.translated_embeddings) {
        (Some(t), Some(e)) if cfg.method == Method::Translation => Some((
            digest("translated_test", t).map_err(|e| e.at_stage("load"))?,
            digest("translated_embeddings", e).map_err(|e| e.at_stage("load"))?,
        )),
        _ => None,
    };

    let train_all = load_dataset(&train_path, cfg.train_format).map_err(|e| e.at_stage("load"))?;
    let test_all = load_dataset(&test_path, cfg.test_format).map_err(|e| e.at_stage("load"))?;

    let pool = match cfg.index_filter {
        IndexFilter::None => Ok(train_all.clone()),
        IndexFilter::AllWithoutTarget => {
            let target = cfg.target_language.clone().expect("validated");
            filter_by_language(&train_all, FilterMode::Exclude, &[target])
        }
        IndexFilter::ExplicitList => filter_by_language(
            &train_all,
            FilterMode::Include,
            cfg.index_languages.as_deref().expect("validated"),
        ),
    }
    .map_err(|e| e.at_stage("filter"))?;

    let sampled = sample(cfg, &train_all, &pool).map_err(|e| e.at_stage("sample"))?;
    info!(
        "stage=sample records={} classes={} languages={}",
        sampled.len(),
        sampled.labels().len(),
        sampled.languages().len()
    );

    let test = match cfg.effective_test_languages() {
        Some(langs) => filter_by_language(&test_all, FilterMode::Include, &langs),
        None => Ok(test_all),
    }
    .map_err(|e| e.at_stage("filter-test"))?;

    let store = load_embedding_store(&emb_path).map_err(|e| e.at_stage("embeddings"))?;
    let provider = cfg
        .provider
        .clone()
        .unwrap_or_else(|| store.provider().to_string());

    let outcome = match cfg.method {
        Method::SimSearch => sim_search(cfg, &sampled, &test, &store)?,
        Method::Classification | Method::Translation => {
            let train_set = match cfg.train_regime {
                TrainRegime::Partial => &sampled,
                TrainRegime::Full => &pool,
            };
            let tc = TrainConfig {
                learning_rate: cfg.learning_rate,
                l2_lambda: cfg.l2_lambda,
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                seed: cfg.seed,
            };
            let model = train_logreg(train_set, &store, &tc).map_err(|e| e.at_stage("train"))?;
            let (queries, query_store, translated_metrics) = match &translated {
                None => (test.clone(), store, None),
                Some((t_path, e_path)) => {
                    let t_all = load_dataset(t_path, cfg.translated_test_format)
                        .map_err(|e| e.at_stage("load"))?;
                    let t = Dataset::new(
                        t_all
                            .iter()
                            .filter(|r| test.get(&r.id).is_some())
                            .cloned()
                            .collect(),
                    )
                    .map_err(|e| e.at_stage("filter-test"))?;
                    let t_store =
                        load_embedding_store(e_path).map_err(|e| e.at_stage("embeddings"))?;
                    let m = translation_pipeline_eval(&t, &test, &model, &t_store)
                        .map_err(|e| e.at_stage("predict"))?;
                    (t, t_store, Some(m))
                }
            };
            let preds = queries
                .iter()
                .map(|r| {
                    Ok((
                        r.id.clone(),
                        predict_logreg(&model, query_store.require(&r.id)?)?.0,
                    ))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at_stage("predict"))?;
            let mut jsonl = String::new();
            for (id, label) in &preds {
                let line = serde_json::to_string(&HeadPrediction {
                    id,
                    predicted_label: label,
                })?;
                let _ = writeln!(jsonl, "{line}");
            }
            Outcome {
                preds,
                known: model.class_order().iter().cloned().collect(),
                train_size: train_set.len(),
                index_languages: train_set.languages().iter().cloned().collect(),
                tie_rate: None,
                jsonl,
                metrics: translated_metrics,
            }
        }
    };

    let metrics = match outcome.metrics {
        Some(m) => m,
        None => evaluate(&outcome.preds, &test, Some(&outcome.known))
            .map_err(|e| e.at_stage("metrics"))?,
    };
    let test_languages: Vec<String> = test.languages().iter().cloned().collect();
    let column = cfg
        .column
        .clone()
        .or_else(|| cfg.target_language.clone())
        .unwrap_or_else(|| {
            cfg.test
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
    let report = MetricsReport {
        name: cfg.name.clone(),
        provider,
        method: cfg.method,
        row_label: cfg
            .row_label
            .clone()
            .unwrap_or_else(|| cfg.method.display_name().to_string()),
        column,
        k: (cfg.method == Method::SimSearch).then_some(cfg.k),
        seed: cfg.seed,
        train_size: outcome.train_size,
        index_languages: outcome.index_languages.clone(),
        test_size: test.len(),
        test_languages,
        tie_rate: outcome.tie_rate,
        metrics,
        config: cfg.clone(),
    };

    let sample_ids: Vec<&str> = sampled.iter().map(|r| r.id.as_str()).collect();
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        base_dir: base.clone(),
        config: cfg.clone(),
        config_sha256: sha256_hex(cfg.to_string().as_bytes()),
        inputs,
        seed: cfg.seed,
        sample_size: sampled.len(),
        sample_ids_sha256: sha256_hex(sample_ids.join("\n").as_bytes()),
        index_languages: outcome.index_languages,
        report_sha256: sha256_hex(report.to_json().as_bytes()),
    };
    Ok(RunOutput {
        report,
        manifest,
        predictions_jsonl: outcome.jsonl,
    })
}

fn sample(cfg: &ExperimentConfig, train_all: &Dataset, pool: &Dataset) -> Result<Dataset> {
    let Some(shots) = cfg.shots else {
        return Ok(pool.clone());
    };
    let mut plan = SamplingPlan::new(shots, cfg.seed).clamped(cfg.clamp_shots);
    if let Some(classes) = &cfg.classes {
        plan = plan.with_classes(classes.clone());
    }
    let own: Vec<String> = pool.languages().iter().cloned().collect();
    match &cfg.pair_with_languages {
        Some(other) => {
            let opts = PairedSampling {
                key_delimiter: cfg.key_delimiter.clone(),
                allocation: cfg.allocation,
            };
            Ok(paired_semantic_sample(train_all, &plan, (&own, other), &opts)?.0)
        }
        None => {
            if cfg.stratify_languages {
                plan = plan.with_languages(own);
            }
            sample_balanced(pool, &plan)
        }
    }
}

fn sim_search(
    cfg: &ExperimentConfig,
    sampled: &Dataset,
    test: &Dataset,
    store: &EmbeddingStore,
) -> Result<Outcome> {
    let build = BuildOptions {
        mode: cfg.index_mode,
        hnsw: HnswParams {
            m_max: cfg.m_max,
            ef_construction: cfg.ef_construction,
            seed: cfg.seed,
        },
        allow_unbalanced: cfg.allow_unbalanced,
    };
    let ix = build_index(sampled, store, &build).map_err(|e| e.at_stage("index"))?;
    let queries = test
        .iter()
        .map(|r| Ok((r.id.clone(), store.require(&r.id)?.clone())))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("classify"))?;
    let opts = ClassifyOptions {
        search: SearchParams {
            ef_search: cfg.ef_search,
        },
        vote: VoteConfig {
            weighting: cfg.vote,
            min_similarity: cfg.min_similarity,
        },
    };
    let mut preds = Vec::with_capacity(queries.len());
    let mut jsonl = String::new();
    let mut ties = 0usize;
    for item in classify_batch(&ix, &queries, cfg.k, &opts) {
        let p = match item.outcome {
            Ok(p) => p,
            Err(e) => {
                error!("stage=classify id={} error={e}", item.id);
                return Err(e.at_stage("classify"));
            }
        };
        ties += usize::from(p.tie_broken);
        let line = serde_json::to_string(&PredictionRecord::new(&item.id, &p))?;
        let _ = writeln!(jsonl, "{line}");
        preds.push((item.id, p.predicted_label));
    }
    Ok(Outcome {
        tie_rate: Some(ties as f64 / preds.len().max(1) as f64),
        preds,
        known: sampled.labels().clone(),
        train_size: ix.len(),
        index_languages: ix.languages(),
        jsonl,
        metrics: None,
    })
}
