use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use wsdt::bench::{duplication_grid, kernel_rows, synthetic_dataset, CSV_HEADER};
use wsdt::data::{binarize_all, binarize_guessed, ingest_bytes, read_input, read_table, BinarizedExport, IngestOptions};
use wsdt::model::{deserialize, serialize};
use wsdt::objective::KernelMode;
use wsdt::oracle::{run_verification, VerifyConfig};
use wsdt::pipeline::{
    evaluate, predict, predictions_csv, train, Binarization, PipelineError, ReferenceSource, TrainConfig,
};
use wsdt::reference::{fit_greedy, write_reference_csv, GreedyConfig, ThresholdSet};
use wsdt::search::{Optimality, SearchMode};
use wsdt::weights::{duplicate_raw, weighted_sample_raw, DupConfig, Normalization, SampleConfig};

#[derive(Debug, Error)]
#[error("{0}")]
struct UsageError(String);

#[derive(Parser)]
#[command(name = "wsdt", version, about = "Optimal sparse decision trees for weighted data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find an optimal tree and write the model plus a run manifest.
    Train(TrainArgs),
    /// Predict labels for a CSV with a trained model.
    Predict(PredictArgs),
    /// Score a model on labelled data.
    Evaluate(EvaluateArgs),
    /// Replace weights by integer row copies.
    Duplicate(DuplicateArgs),
    /// Draw a weighted sample with replacement.
    Sample(SampleArgs),
    /// Time the loss-mass sweep under both kernels.
    Bench(BenchArgs),
    /// Check search results and bounds against the exhaustive oracle.
    Verify(VerifyArgs),
    /// Dump the binarized dataset as JSON.
    Binarize(BinarizeArgs),
    /// Fit a greedy reference model; write its predictions and thresholds.
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV input; `-` reads stdin.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    label: String,
    #[arg(long)]
    weight: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Guessed,
}

#[derive(Clone, Copy, ValueEnum)]
enum BinarizeArg {
    All,
    Guessed,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Auto,
    Bitcount,
    WeightedDot,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    depth: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// CSV of reference predictions, one per row, with a header.
    #[arg(long, conflicts_with = "fit_reference")]
    reference: Option<PathBuf>,
    /// Fit a greedy tree (or boosted trees) as the reference.
    #[arg(long)]
    fit_reference: bool,
    #[arg(long, default_value_t = 3, requires = "fit_reference")]
    reference_depth: usize,
    #[arg(long, default_value_t = 1, requires = "fit_reference")]
    reference_rounds: usize,
    /// Threshold JSON for `--binarize guessed`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    binarize: BinarizeArg,
    #[arg(long, value_enum, default_value = "auto")]
    kernel: KernelArg,
    /// Seconds; on expiry the best tree found so far is written.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, env = "WSDT_THREADS", default_value_t = 1)]
    threads: usize,
    /// Model output path; `-` writes to stdout.
    #[arg(long)]
    out: PathBuf,
    /// Manifest path; defaults to the model path with `.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Print the result summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Write a JSON array of labels instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    weight: Option<String>,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Accepted for symmetry; metrics are always JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    Max,
    Sum,
    None,
}

#[derive(Args)]
struct DuplicateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    p: u32,
    #[arg(long, value_enum, default_value = "max")]
    normalization: NormalizationArg,
    /// Refuse to write more rows than this (default: 100 times the input).
    #[arg(long)]
    max_rows: Option<u64>,
    /// Add a `source_row` column.
    #[arg(long)]
    provenance: bool,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Print rounding statistics as JSON on stderr.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    provenance: bool,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKernel {
    Bitcount,
    WeightedDot,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    kernel: BenchKernel,
    /// Synthetic row counts.
    #[arg(long, value_delimiter = ',', default_value = "100000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    columns: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Duplication ratios for the direct-vs-duplicated grid (e.g. `0,1,10`).
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Benchmark a supplied CSV instead of synthetic data.
    #[arg(long, requires = "label")]
    data: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 500)]
    instances: usize,
    #[arg(long, default_value_t = 5000)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct BinarizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = 0.0)]
    min_leaf_weight: f64,
    /// Predictions CSV.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Threshold JSON of the splits the reference uses.
    #[arg(long)]
    thresholds_out: Option<PathBuf>,
}

/// Writes via a temp file in the target directory and renames it into place.
fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.as_os_str() == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        out.flush()?;
        return Ok(());
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn ingest(args: &DataArgs) -> Result<(Vec<u8>, wsdt::data::RawDataset)> {
    let bytes = read_input(&args.data)?;
    let raw = ingest_bytes(&bytes, &IngestOptions { label: args.label.clone(), weight: args.weight.clone(), ignore: vec![] })?;
    Ok((bytes, raw))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let reference = match (&a.reference, a.fit_reference) {
        (Some(path), _) => ReferenceSource::File { path: path.clone() },
        (None, true) => ReferenceSource::Fit(GreedyConfig {
            max_depth: a.reference_depth,
            min_leaf_weight: 0.0,
            rounds: a.reference_rounds,
        }),
        (None, false) => ReferenceSource::None,
    };
    let cfg = TrainConfig {
        data: a.data.data.clone(),
        label: a.data.label.clone(),
        weight: a.data.weight.clone(),
        depth: a.depth,
        lambda: a.lambda,
        mode: match a.mode {
            ModeArg::Exact => SearchMode::Exact,
            ModeArg::Guessed => SearchMode::Guessed,
        },
        reference,
        thresholds: a.thresholds.clone(),
        binarize: match a.binarize {
            BinarizeArg::All => Binarization::All,
            BinarizeArg::Guessed => Binarization::Guessed,
        },
        kernel: match a.kernel {
            KernelArg::Auto => None,
            KernelArg::Bitcount => Some(KernelMode::Bitcount),
            KernelArg::WeightedDot => Some(KernelMode::WeightedDot),
        },
        time_limit_seconds: a.time_limit,
        threads: a.threads,
    };
    cfg.validate()?;
    let bytes = read_input(&a.data.data)?;
    let out = train(&bytes, &cfg)?;
    write_output(&a.out, &serialize(&out.model))?;
    let manifest_path = match (&a.manifest, a.out.as_os_str() == "-") {
        (Some(p), _) => Some(p.clone()),
        (None, false) => Some(PathBuf::from(format!("{}.manifest.json", a.out.display()))),
        (None, true) => None,
    };
    if let Some(p) = manifest_path {
        write_output(&p, &json_bytes(&out.manifest))?;
    }
    let r = &out.manifest.result;
    let summary = if a.json {
        String::from_utf8(json_bytes(&serde_json::json!({
            "schema_version": out.manifest.schema_version,
            "result": r,
            "elapsed_seconds": out.elapsed.as_secs_f64(),
        })))?
    } else {
        format!(
            "objective {:?}\nleaves {}\ndepth {}\nelapsed {:.6}s\noptimality {}\n",
            r.objective,
            r.leaves,
            r.depth,
            out.elapsed.as_secs_f64(),
            r.optimality
        )
    };
    // keep stdout clean when the model itself goes there
    if a.out.as_os_str() == "-" {
        eprint!("{summary}");
    } else {
        print!("{summary}");
    }
    if out.optimality == Optimality::TimedOutBestKnown {
        eprintln!("time limit reached; wrote the best tree found");
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = deserialize(&read_input(&a.model)?)?;
    let table = read_table(&read_input(&a.data)?, &[])?;
    let preds = predict(&model, &table)?;
    let bytes = if a.json {
        let labels: Vec<&str> = preds.iter().map(|&p| model.label_names[p as usize].as_str()).collect();
        json_bytes(&serde_json::json!({ "schema_version": 1, "predictions": labels }))
    } else {
        predictions_csv(&model, &preds)
    };
    write_output(&a.out, &bytes)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let model = deserialize(&read_input(&a.model)?)?;
    let metrics = evaluate(&model, &read_input(&a.data)?, a.weight.as_deref())?;
    write_output(&a.out, &json_bytes(&metrics))
}

fn cmd_duplicate(a: DuplicateArgs) -> Result<()> {
    if a.data.weight.is_none() {
        return Err(UsageError("duplicate needs --weight".into()).into());
    }
    let (_, raw) = ingest(&a.data)?;
    let mut cfg = DupConfig::new(a.p)?;
    cfg.normalization = match a.normalization {
        NormalizationArg::Max => Normalization::Max,
        NormalizationArg::Sum => Normalization::Sum,
        NormalizationArg::None => Normalization::None,
    };
    cfg.max_rows = a.max_rows;
    let dup = duplicate_raw(&raw, &cfg)?;
    let mut buf = Vec::new();
    dup.dataset.write_csv(&mut buf, a.provenance.then_some(dup.source_rows.as_slice()))?;
    write_output(&a.out, &buf)?;
    if a.json {
        let stats = serde_json::json!({
            "schema_version": 1,
            "rows_in": raw.n_rows(),
            "rows_out": dup.source_rows.len(),
            "scale": dup.rounding.scale,
            "epsilon": dup.rounding.epsilon,
        });
        eprint!("{}", String::from_utf8(json_bytes(&stats))?);
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let (_, raw) = ingest(&a.data)?;
    let s = weighted_sample_raw(&raw, &SampleConfig { r: a.r, seed: a.seed })?;
    let mut buf = Vec::new();
    s.dataset.write_csv(&mut buf, a.provenance.then_some(s.source_rows.as_slice()))?;
    write_output(&a.out, &buf)
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let modes: Vec<KernelMode> = match a.kernel {
        BenchKernel::Bitcount => vec![KernelMode::Bitcount],
        BenchKernel::WeightedDot => vec![KernelMode::WeightedDot],
        BenchKernel::Both => vec![KernelMode::Bitcount, KernelMode::WeightedDot],
    };
    let mut rows = Vec::new();
    if let Some(path) = &a.data {
        let label = a.label.clone().expect("clap enforces --label");
        let raw = ingest_bytes(&read_input(path)?, &IngestOptions { label, weight: None, ignore: vec![] })?;
        rows.extend(kernel_rows(&binarize_all(&raw)?, &modes, a.repeats)?);
    } else {
        for &n in &a.sizes {
            rows.extend(kernel_rows(&synthetic_dataset(n, a.columns, a.seed), &modes, a.repeats)?);
            if !a.q.is_empty() {
                rows.extend(duplication_grid(n, a.columns, &a.q, a.repeats, a.seed)?);
            }
        }
    }
    let bytes = if a.json {
        json_bytes(&serde_json::json!({ "schema_version": 1, "rows": rows }))
    } else {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s.into_bytes()
    };
    write_output(&a.out, &bytes)
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let report = run_verification(&VerifyConfig { instances: a.instances, repetitions: a.repetitions, seed: a.seed })?;
    write_output(&a.out, &json_bytes(&report))?;
    Ok(report.passed)
}

fn cmd_binarize(a: BinarizeArgs) -> Result<()> {
    let (_, raw) = ingest(&a.data)?;
    let ds = match &a.thresholds {
        Some(p) => binarize_guessed(&raw, &ThresholdSet::from_json(&read_input(p)?)?)?,
        None => binarize_all(&raw)?,
    };
    write_output(&a.out, &json_bytes(&BinarizedExport::from_dataset(&ds)))
}

fn cmd_reference(a: ReferenceArgs) -> Result<()> {
    let (_, raw) = ingest(&a.data)?;
    let ds = binarize_all(&raw)?;
    let cfg = GreedyConfig { max_depth: a.depth, min_leaf_weight: a.min_leaf_weight, rounds: a.rounds };
    let fit = fit_greedy(&ds, &cfg)?;
    write_output(&a.out, &write_reference_csv(fit.predictions.preds(), ds.label_names())?)?;
    if let Some(p) = &a.thresholds_out {
        write_output(p, &fit.thresholds.to_json(ds.feature_names()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(a) => cmd_train(a)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Duplicate(a) => cmd_duplicate(a)?,
        Command::Sample(a) => cmd_sample(a)?,
        Command::Bench(a) => cmd_bench(a)?,
        Command::Verify(a) => return cmd_verify(a),
        Command::Binarize(a) => cmd_binarize(a)?,
        Command::Reference(a) => cmd_reference(a)?,
    }
    Ok(true)
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.downcast_ref::<UsageError>().is_some() || matches!(err.downcast_ref::<PipelineError>(), Some(PipelineError::Usage(_)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("wsdt: verification failed");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("wsdt: {err:#}");
            ExitCode::from(if is_usage(&err) { 2 } else { 1 })
        }
    }
}
