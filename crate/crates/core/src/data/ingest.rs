use std::io::Read;
use std::path::Path;

use super::{DataError, FeatureColumn, FeatureTable, RawDataset};

/// Column roles for CSV ingestion.
#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    pub label: String,
    pub weight: Option<String>,
    /// Columns to skip entirely (e.g. a `source_row` provenance column).
    pub ignore: Vec<String>,
}

/// Reads a whole input; `-` means stdin.
pub fn read_input(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |e| DataError::Io { path: path.display().to_string(), source: e };
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(io_err)?;
        Ok(buf)
    } else {
        std::fs::read(path).map_err(io_err)
    }
}

pub fn ingest_csv(path: &Path, label_column: &str, weight_column: Option<&str>) -> Result<RawDataset, DataError> {
    ingest_csv_with(
        path,
        &IngestOptions { label: label_column.to_string(), weight: weight_column.map(str::to_string), ignore: vec![] },
    )
}

pub fn ingest_csv_with(path: &Path, opts: &IngestOptions) -> Result<RawDataset, DataError> {
    ingest_bytes(&read_input(path)?, opts)
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan")
}

struct Records {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_records(bytes: &[u8]) -> Result<Records, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Records { header, rows })
}

fn infer_column(name: &str, values: Vec<String>) -> Result<FeatureColumn, DataError> {
    if let Some(row) = values.iter().position(|v| is_missing(v)) {
        return Err(DataError::MissingValue { row: row + 1, column: name.to_string() });
    }
    let parsed: Option<Vec<f64>> =
        values.iter().map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite())).collect();
    Ok(match parsed {
        Some(nums) => FeatureColumn::Numeric(nums),
        None => FeatureColumn::Categorical(values),
    })
}

fn build_table(header: &[String], rows: &[Vec<String>], keep: &[usize]) -> Result<FeatureTable, DataError> {
    let mut names = Vec::with_capacity(keep.len());
    let mut columns = Vec::with_capacity(keep.len());
    for &c in keep {
        let values: Vec<String> = rows.iter().map(|r| r[c].clone()).collect();
        columns.push(infer_column(&header[c], values)?);
        names.push(header[c].clone());
    }
    Ok(FeatureTable { names, columns, n_rows: rows.len() })
}

/// Parses CSV bytes into a labelled, weighted dataset.
///
/// Every column other than the label, weight and ignored columns becomes a
/// feature. Rows are numbered from 1 (the first data row) in errors.
pub fn ingest_bytes(bytes: &[u8], opts: &IngestOptions) -> Result<RawDataset, DataError> {
    let Records { header, rows } = parse_records(bytes)?;
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn { column: name.to_string() })
    };
    let label_idx = find(&opts.label)?;
    let weight_idx = opts.weight.as_deref().map(find).transpose()?;
    let ignored: Vec<usize> = opts.ignore.iter().filter_map(|n| header.iter().position(|h| h == n)).collect();
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let raw_labels: Vec<String> = rows.iter().map(|r| r[label_idx].clone()).collect();
    if let Some(row) = raw_labels.iter().position(|v| v.is_empty()) {
        return Err(DataError::MissingValue { row: row + 1, column: opts.label.clone() });
    }

    let weights = match weight_idx {
        None => None,
        Some(wi) => {
            let mut ws = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                let v = &r[wi];
                let w = v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DataError::NonNumericWeight { row: i + 1, value: v.clone() })?;
                if w < 0.0 {
                    return Err(DataError::NegativeWeight { row: i + 1 });
                }
                ws.push(w);
            }
            Some(ws)
        }
    };

    let keep: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_idx && Some(c) != weight_idx && !ignored.contains(&c))
        .collect();
    let table = build_table(&header, &rows, &keep)?;
    let mut ds = RawDataset::new(table, &raw_labels, weights, &opts.label)?;
    ds.set_weight_column(opts.weight.clone());
    Ok(ds)
}

/// Parses CSV bytes into features only, skipping the named columns. Used for
/// prediction on data that may lack labels.
pub fn read_table(bytes: &[u8], skip: &[&str]) -> Result<FeatureTable, DataError> {
    let Records { header, rows } = parse_records(bytes)?;
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let keep: Vec<usize> = (0..header.len()).filter(|&c| !skip.contains(&header[c].as_str())).collect();
    build_table(&header, &rows, &keep)
}
