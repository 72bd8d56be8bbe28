//! Train, predict and evaluate end to end, as driven by the command line.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{
    binarize_all, binarize_guessed, ingest_bytes, pairwise_sum, read_input, Bits, DataError,
    FeatureTable, IngestOptions,
};
use crate::model::{ModelError, ModelFile, TrainingMetadata, MODEL_SCHEMA_VERSION};
use crate::objective::{weighted_loss, KernelMode, ObjectiveError, ReferencePredictions};
use crate::reference::{fit_greedy, load_reference, GreedyConfig, ReferenceError, ThresholdSet};
use crate::search::{optimize, Optimality, SearchConfig, SearchError, SearchMode};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Flags that cannot work together; reported with exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("model uses feature `{feature}`, which the data does not have")]
    FeatureMismatch { feature: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binarization {
    All,
    Guessed,
}

impl Binarization {
    pub fn name(self) -> &'static str {
        match self {
            Binarization::All => "all",
            Binarization::Guessed => "guessed",
        }
    }
}

/// Where reference predictions come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ReferenceSource {
    None,
    File { path: PathBuf },
    Fit(GreedyConfig),
}

/// Fully resolved training configuration, recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub label: String,
    pub weight: Option<String>,
    pub depth: usize,
    pub lambda: f64,
    pub mode: SearchMode,
    pub reference: ReferenceSource,
    pub thresholds: Option<PathBuf>,
    pub binarize: Binarization,
    /// `None` picks bitcount for unit weights and weighted-dot otherwise.
    pub kernel: Option<KernelMode>,
    pub time_limit_seconds: Option<f64>,
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(data: impl Into<PathBuf>, label: &str, depth: usize, lambda: f64) -> Self {
        TrainConfig {
            data: data.into(),
            label: label.to_string(),
            weight: None,
            depth,
            lambda,
            mode: SearchMode::Exact,
            reference: ReferenceSource::None,
            thresholds: None,
            binarize: Binarization::All,
            kernel: None,
            time_limit_seconds: None,
            threads: 1,
        }
    }

    /// Checks flag combinations before any data is read.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.depth < 1 {
            return Err(PipelineError::Usage("--depth must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(PipelineError::Usage("--lambda must be a non-negative number".into()));
        }
        if self.mode == SearchMode::Guessed && self.reference == ReferenceSource::None {
            return Err(PipelineError::Usage("--mode guessed needs --reference FILE or --fit-reference".into()));
        }
        if self.binarize == Binarization::Guessed
            && self.thresholds.is_none()
            && !matches!(self.reference, ReferenceSource::Fit(_))
        {
            return Err(PipelineError::Usage("--binarize guessed needs --thresholds FILE or --fit-reference".into()));
        }
        if let Some(t) = self.time_limit_seconds {
            if !(t.is_finite() && t >= 0.0) {
                return Err(PipelineError::Usage("--time-limit must be a non-negative number of seconds".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ingest: f64,
    pub binarize: f64,
    pub reference: f64,
    pub search: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub objective: f64,
    pub weighted_loss: f64,
    pub leaves: usize,
    pub depth: usize,
    pub optimality: String,
    pub kernel: String,
    pub n_samples: usize,
    pub n_columns: usize,
    pub nodes_explored: u64,
    pub cache_hits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: TrainConfig,
    pub dataset_fingerprint: String,
    pub timings: Timings,
    pub result: ResultSummary,
}

pub struct TrainOutput {
    pub model: ModelFile,
    pub manifest: RunManifest,
    pub optimality: Optimality,
    pub elapsed: Duration,
}

/// Hex SHA-256 of the input bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs the whole training pipeline on CSV bytes. `cfg.data` is recorded but
/// not read; reference and threshold files are read from their paths.
pub fn train(bytes: &[u8], cfg: &TrainConfig) -> Result<TrainOutput, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let raw = ingest_bytes(bytes, &IngestOptions { label: cfg.label.clone(), weight: cfg.weight.clone(), ignore: vec![] })?;
    let dataset_fingerprint = fingerprint(bytes);
    timings.ingest = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let full = binarize_all(&raw)?;
    timings.binarize = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (preds, fitted) = match &cfg.reference {
        ReferenceSource::None => (None, None),
        ReferenceSource::File { path } => (Some(load_reference(path, &full)?.preds().to_vec()), None),
        ReferenceSource::Fit(g) => {
            let fit = fit_greedy(&full, g)?;
            (Some(fit.predictions.preds().to_vec()), Some(fit.thresholds))
        }
    };
    timings.reference = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ds = match cfg.binarize {
        Binarization::All => full,
        Binarization::Guessed => {
            let thresholds = match (&cfg.thresholds, fitted) {
                (Some(path), _) => ThresholdSet::from_json(&read_input(path)?)?,
                (None, Some(th)) => th,
                (None, None) => unreachable!("validated above"),
            };
            if thresholds.is_empty() {
                // the reference used no splits; nothing to binarize on
                return Err(PipelineError::Data(DataError::EmptyThresholdSet));
            }
            binarize_guessed(&raw, &thresholds)?
        }
    };
    timings.binarize += t.elapsed().as_secs_f64();

    let kernel = cfg.kernel.unwrap_or_else(|| KernelMode::auto(&ds));
    let mut search = SearchConfig::exact(cfg.lambda, cfg.depth).with_kernel(kernel).with_threads(cfg.threads);
    search.mode = cfg.mode;
    if let Some(p) = preds {
        search.reference = Some(ReferencePredictions::new(p, &ds)?);
    }
    search.time_limit = cfg.time_limit_seconds.map(Duration::from_secs_f64);

    let t = Instant::now();
    let result = optimize(&ds, &search)?;
    timings.search = t.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();

    let loss = weighted_loss(&result.tree, &ds)?;
    let training = TrainingMetadata {
        lambda: cfg.lambda,
        depth_limit: cfg.depth,
        mode: cfg.mode.name().to_string(),
        kernel: kernel.name().to_string(),
        binarization: cfg.binarize.name().to_string(),
        objective: result.objective_value,
        weighted_loss: loss,
        leaves: result.tree.leaf_count(),
        depth: result.tree.depth(),
        optimality: result.optimality.name().to_string(),
        n_samples: ds.n_samples(),
        n_columns: ds.n_columns(),
        dataset_fingerprint: dataset_fingerprint.clone(),
    };
    let model = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        columns: ModelFile::used_columns(&result.tree, &ds),
        tree: result.tree.clone(),
        label_column: raw.label_column().to_string(),
        label_names: ds.label_names().to_vec(),
        training,
    };
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        dataset_fingerprint,
        timings,
        result: ResultSummary {
            objective: result.objective_value,
            weighted_loss: loss,
            leaves: result.tree.leaf_count(),
            depth: result.tree.depth(),
            optimality: result.optimality.name().to_string(),
            kernel: kernel.name().to_string(),
            n_samples: ds.n_samples(),
            n_columns: ds.n_columns(),
            nodes_explored: result.node_count_explored,
            cache_hits: result.cache_hits,
        },
    };
    Ok(TrainOutput { model, manifest, optimality: result.optimality, elapsed: result.elapsed })
}

/// Predicted class ids for every row of `table`.
pub fn predict(model: &ModelFile, table: &FeatureTable) -> Result<Vec<u32>, PipelineError> {
    let n = table.n_rows;
    let width = model.columns.iter().map(|c| c.column + 1).max().unwrap_or(0);
    let mut columns = vec![Bits::zeros(n); width];
    for used in &model.columns {
        let f = table
            .index_of(&used.feature_name)
            .ok_or_else(|| PipelineError::FeatureMismatch { feature: used.feature_name.clone() })?;
        columns[used.column] = used.split.evaluate(&table.columns[f], &used.feature_name)?;
    }
    Ok(model.tree.predict_columns(&columns, n))
}

/// Prediction CSV: row index and predicted label.
pub fn predictions_csv(model: &ModelFile, preds: &[u32]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "prediction"]).expect("writing to memory");
    for (i, &p) in preds.iter().enumerate() {
        w.write_record([i.to_string(), model.label_names[p as usize].clone()]).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub weighted_loss: f64,
    pub accuracy: f64,
    /// Row: true label, column: predicted label, over `label_names`.
    pub confusion: Vec<Vec<u64>>,
    pub label_names: Vec<String>,
    pub leaves: usize,
    pub depth: usize,
    pub n_samples: usize,
}

/// Scores `model` on labelled CSV bytes. Labels the model never saw get
/// their own confusion rows.
pub fn evaluate(model: &ModelFile, bytes: &[u8], weight: Option<&str>) -> Result<Metrics, PipelineError> {
    let raw = ingest_bytes(
        bytes,
        &IngestOptions { label: model.label_column.clone(), weight: weight.map(str::to_string), ignore: vec![] },
    )?;
    let preds = predict(model, raw.table())?;
    let mut names = model.label_names.clone();
    let truth: Vec<usize> = raw
        .labels()
        .iter()
        .map(|&l| {
            let name = &raw.label_names()[l as usize];
            match find_label(&names, name) {
                Some(i) => i,
                None => {
                    names.push(name.clone());
                    names.len() - 1
                }
            }
        })
        .collect();
    let k = names.len();
    let mut confusion = vec![vec![0u64; k]; k];
    let mut correct = 0usize;
    for (&y, &p) in truth.iter().zip(&preds) {
        confusion[y][p as usize] += 1;
        correct += usize::from(y == p as usize);
    }
    let w = raw.weights();
    // same summation order as training-time reporting
    let wrong = truth.iter().zip(&preds).zip(w).filter(|((y, p), _)| **y != **p as usize).fold(0.0, |acc, (_, w)| acc + w);
    let total = pairwise_sum(w);
    if total <= 0.0 {
        return Err(PipelineError::Objective(ObjectiveError::ZeroTotalWeight));
    }
    Ok(Metrics {
        schema_version: METRICS_SCHEMA_VERSION,
        weighted_loss: wrong / total,
        accuracy: correct as f64 / truth.len() as f64,
        confusion,
        label_names: names,
        leaves: model.tree.leaf_count(),
        depth: model.tree.depth(),
        n_samples: truth.len(),
    })
}

fn find_label(names: &[String], label: &str) -> Option<usize> {
    names.iter().position(|n| n == label).or_else(|| {
        let x = label.parse::<f64>().ok()?;
        names.iter().position(|n| n.parse::<f64>().ok() == Some(x))
    })
}
