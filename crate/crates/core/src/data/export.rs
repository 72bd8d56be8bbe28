//! Columnar JSON dump of a binarized dataset, for debugging and for feeding
//! external tools. Bit payloads are base64 of the little-endian byte form
//! (`ceil(N / 8)` bytes, bit `i` at byte `i / 8`, position `i % 8`).

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BinarizedDataset, Bits, ColumnProvenance, DataError};

pub const EXPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedColumn {
    pub provenance: ColumnProvenance,
    pub bits_base64: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizedExport {
    pub schema_version: u32,
    pub n_samples: usize,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub labels: Vec<u32>,
    pub weights: Vec<f64>,
    pub columns: Vec<ExportedColumn>,
}

impl BinarizedExport {
    pub fn from_dataset(ds: &BinarizedDataset) -> Self {
        BinarizedExport {
            schema_version: EXPORT_SCHEMA_VERSION,
            n_samples: ds.n_samples(),
            feature_names: ds.feature_names().to_vec(),
            label_names: ds.label_names().to_vec(),
            labels: ds.labels().to_vec(),
            weights: ds.weights().to_vec(),
            columns: ds
                .columns()
                .iter()
                .zip(ds.provenance())
                .map(|(bits, p)| ExportedColumn { provenance: p.clone(), bits_base64: STANDARD.encode(bits.to_bytes()) })
                .collect(),
        }
    }

    pub fn into_dataset(self) -> Result<BinarizedDataset, DataError> {
        if self.schema_version != EXPORT_SCHEMA_VERSION {
            return Err(DataError::MalformedExport(format!("unsupported schema_version {}", self.schema_version)));
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        let mut provenance = Vec::with_capacity(self.columns.len());
        for c in self.columns {
            let bytes = STANDARD.decode(&c.bits_base64).map_err(|e| DataError::MalformedExport(e.to_string()))?;
            columns.push(Bits::from_bytes(&bytes, self.n_samples)?);
            provenance.push(c.provenance);
        }
        BinarizedDataset::from_parts(
            columns,
            provenance,
            self.feature_names,
            self.labels,
            self.label_names,
            self.weights,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{binarize_all, ingest_bytes, IngestOptions};

    #[test]
    fn export_round_trip() {
        let csv = "a,c,y,w\n1,x,0,1\n2,y,1,2.5\n4,x,0,1\n3,z,1,0.5\n";
        let raw = ingest_bytes(
            csv.as_bytes(),
            &IngestOptions { label: "y".into(), weight: Some("w".into()), ignore: vec![] },
        )
        .unwrap();
        let ds = binarize_all(&raw).unwrap();
        let json = serde_json::to_string(&BinarizedExport::from_dataset(&ds)).unwrap();
        let back: BinarizedExport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_dataset().unwrap(), ds);
    }
}
