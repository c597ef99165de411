//! Extract, transform and load, plus the warehouse quality report.

mod extract;
mod load;
mod quality;
mod transform;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storage::{Partition, StorageError, Store};

pub use extract::{extract_csv, extract_csv_bytes, REASON_ARITY, REASON_ENCODING, REASON_QUOTING};
pub use load::{
    load, LoadReport, Rejection, REASON_DUPLICATE_FACT_KEY, REASON_DUPLICATE_KEY, REASON_KIND,
    REASON_UNRESOLVED,
};
pub use quality::{quality_report, OverallQuality, QualityCounts, QualityReport, TableQuality};
pub use transform::{transform, Transformed, TypedRows};

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("source `{0}` has no header row")]
    EmptySource(String),
    #[error("source `{source_id}` has a malformed header: {detail}")]
    MalformedHeader { source_id: String, detail: String },
    #[error("source `{source_id}` has no column for required `{table}.{column}`")]
    HeaderMismatch {
        source_id: String,
        table: String,
        column: String,
    },
    #[error("invalid transform policy: {0}")]
    InvalidPolicy(String),
    #[error("reading `{0}`: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// One data record (header excluded) with its 1-based position in the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceRow {
    pub index: usize,
    pub fields: Vec<String>,
}

/// A rejected record with a machine-readable reason code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Quarantined {
    pub row: usize,
    pub raw: String,
    pub reason: String,
}

impl Quarantined {
    pub fn new(row: usize, raw: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            row,
            raw: raw.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecordBatch {
    pub source: String,
    pub header: Vec<String>,
    pub rows: Vec<SourceRow>,
    pub quarantine: Vec<Quarantined>,
    /// Records seen after the header; always `rows.len() + quarantine.len()`.
    pub input_rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnresolvedAction {
    Quarantine,
    MapToUnknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicateAction {
    Quarantine,
    AggregateAdditive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformPolicy {
    pub unresolved: UnresolvedAction,
    pub duplicates: DuplicateAction,
    pub trim: bool,
    /// chrono patterns tried in order; the first that parses wins.
    pub date_formats: Vec<String>,
}

impl Default for TransformPolicy {
    fn default() -> Self {
        Self {
            unresolved: UnresolvedAction::MapToUnknown,
            duplicates: DuplicateAction::AggregateAdditive,
            trim: true,
            date_formats: vec!["%Y-%m-%d".into(), "%d/%m/%Y".into()],
        }
    }
}

impl TransformPolicy {
    pub fn validate(&self) -> Result<(), EtlError> {
        if self.date_formats.is_empty() {
            return Err(EtlError::InvalidPolicy("at least one date format is required".into()));
        }
        Ok(())
    }
}

/// Outcome of a full extract → transform → load run for one source.
#[derive(Clone, Debug, Serialize)]
pub struct IngestReport {
    pub table: String,
    pub partition: Partition,
    pub input_rows: usize,
    pub extract_quarantined: usize,
    pub transform_quarantined: usize,
    pub load: LoadReport,
    #[serde(skip)]
    pub quarantine: Vec<Quarantined>,
    #[serde(skip)]
    pub header: Vec<String>,
}

impl IngestReport {
    pub fn quarantined(&self) -> usize {
        self.extract_quarantined + self.transform_quarantined
    }

    pub fn is_clean(&self) -> bool {
        self.quarantined() == 0 && self.load.rejected == 0
    }
}

/// Runs extract, transform and load for one CSV source and records the
/// quarantine counts in the store's load history.
pub fn ingest(
    store: &mut Store,
    table: &str,
    data: &[u8],
    source_id: &str,
    partition: Partition,
    policy: &TransformPolicy,
) -> Result<IngestReport, EtlError> {
    let batch = extract_csv_bytes(data, source_id)?;
    let snapshot = store.snapshot();
    let out = transform(&batch, table, &snapshot, policy)?;
    let mut load = load(store, table, &out.rows, partition)?;
    for r in &mut load.reasons {
        r.row = out.lineage[r.row][0];
    }
    let dup_quarantined = out
        .quarantine
        .iter()
        .filter(|q| q.reason == transform::REASON_DUPLICATE)
        .count() as u64;
    let h = store.history_mut(table);
    h.quarantined += (batch.quarantine.len() + out.quarantine.len()) as u64;
    h.duplicates += dup_quarantined;
    let mut quarantine = batch.quarantine.clone();
    quarantine.extend(out.quarantine.iter().cloned());
    Ok(IngestReport {
        table: table.to_string(),
        partition,
        input_rows: batch.input_rows,
        extract_quarantined: batch.quarantine.len(),
        transform_quarantined: out.quarantine.len(),
        load,
        quarantine,
        header: batch.header,
    })
}

/// Writes quarantined records as CSV: the source header plus a `reason`
/// column. Records that could not be split into fields keep their raw text
/// in the first column.
pub fn write_quarantine(path: &Path, header: &[String], rows: &[Quarantined]) -> Result<(), EtlError> {
    let io = |e: std::io::Error| EtlError::Io(path.display().to_string(), e);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io(e.into()))?;
    let mut h: Vec<&str> = header.iter().map(String::as_str).collect();
    h.push("reason");
    w.write_record(&h).map_err(|e| io(e.into()))?;
    for q in rows {
        let fields = extract_csv_bytes(format!("{}\n{}\n", header.join(","), q.raw).as_bytes(), "")
            .ok()
            .and_then(|b| b.rows.into_iter().next())
            .map(|r| r.fields);
        let mut record = fields.unwrap_or_else(|| {
            let mut v = vec![String::new(); header.len().max(1)];
            v[0] = q.raw.clone();
            v
        });
        record.push(q.reason.clone());
        w.write_record(&record).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// Lowercased, trimmed, with spaces folded to `_`.
pub(crate) fn normalize_column(name: &str) -> String {
    name.trim().to_lowercase().replace(' ', "_")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_needs_a_date_format() {
        let mut p = TransformPolicy::default();
        assert!(p.validate().is_ok());
        p.date_formats.clear();
        assert!(matches!(p.validate(), Err(EtlError::InvalidPolicy(_))));
    }

    #[test]
    fn column_normalization() {
        assert_eq!(normalize_column(" Variety Name "), "variety_name");
        assert_eq!(normalize_column("CROP_ID"), "crop_id");
    }

    #[test]
    fn quarantine_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("Crop.quarantine.csv");
        let header = vec!["a".to_string(), "b".to_string()];
        let rows = vec![
            Quarantined::new(1, "1,x", "kind-mismatch:a"),
            Quarantined::new(2, "ab\"c,1", REASON_QUOTING),
        ];
        write_quarantine(&path, &header, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a,b,reason");
        assert_eq!(lines[1], "1,x,kind-mismatch:a");
        assert_eq!(lines[2], "\"ab\"\"c,1\",,quoting");
    }
}
