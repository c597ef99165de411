use serde::Serialize;

use crate::storage::{Partition, StorageError, Store};

use super::{EtlError, TypedRows};

pub const REASON_DUPLICATE_KEY: &str = "duplicate-key";
pub const REASON_DUPLICATE_FACT_KEY: &str = "duplicate-fact-key";
pub const REASON_UNRESOLVED: &str = "unresolved-reference";
pub const REASON_KIND: &str = "kind-mismatch";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 0-based position in the loaded batch; [`super::ingest`] rewrites it to
    /// the 1-based source row.
    pub row: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub table: String,
    pub partition: Partition,
    pub inserted: usize,
    pub rejected: usize,
    pub reasons: Vec<Rejection>,
}

fn reason(err: &StorageError) -> Option<&'static str> {
    match err {
        StorageError::DuplicateKey { .. } => Some(REASON_DUPLICATE_KEY),
        StorageError::DuplicateFactKey { .. } => Some(REASON_DUPLICATE_FACT_KEY),
        StorageError::ReferentialViolation { .. } => Some(REASON_UNRESOLVED),
        StorageError::KindMismatch { .. } => Some(REASON_KIND),
        _ => None,
    }
}

/// Inserts transformed rows one at a time so a bad row is rejected on its
/// own. `partition` only applies to fact rows.
pub fn load(store: &mut Store, table: &str, rows: &TypedRows, partition: Partition) -> Result<LoadReport, EtlError> {
    let schema = store.schema().clone();
    let is_fact = match rows {
        TypedRows::Dimension(_) => schema.dimension(table).map(|_| false),
        TypedRows::Fact(_) => schema.fact(table).map(|_| true),
    };
    if is_fact.is_none() {
        return Err(StorageError::UnknownTable(table.to_string()).into());
    }
    let mut report = LoadReport {
        table: table.to_string(),
        partition,
        inserted: 0,
        rejected: 0,
        reasons: Vec::new(),
    };
    for i in 0..rows.len() {
        let outcome = match rows {
            TypedRows::Dimension(r) => store.insert_dimension_rows(table, std::slice::from_ref(&r[i])).map(|_| ()),
            TypedRows::Fact(r) => store.insert_fact_rows(table, std::slice::from_ref(&r[i]), partition).map(|_| ()),
        };
        match outcome {
            Ok(()) => report.inserted += 1,
            Err(e) => {
                let code = reason(&e).ok_or(e)?;
                report.rejected += 1;
                report.reasons.push(Rejection {
                    row: i,
                    reason: code.to_string(),
                });
            }
        }
    }
    let duplicates = report
        .reasons
        .iter()
        .filter(|r| r.reason == REASON_DUPLICATE_KEY || r.reason == REASON_DUPLICATE_FACT_KEY)
        .count() as u64;
    let h = store.history_mut(table);
    h.inserted += report.inserted as u64;
    h.rejected += report.rejected as u64;
    h.duplicates += duplicates;
    Ok(report)
}
