use std::collections::HashMap;

use crate::coerce::coerce;
use crate::schema::{AttributeKind, UNKNOWN_KEY};
use crate::storage::{DimensionRow, FactRow, Snapshot, StorageError};
use crate::Value;

use super::{
    normalize_column, DuplicateAction, EtlError, Quarantined, RecordBatch, SourceRow,
    TransformPolicy, UnresolvedAction,
};

pub(crate) const REASON_DUPLICATE: &str = "duplicate-key";

#[derive(Clone, Debug, PartialEq)]
pub enum TypedRows {
    Dimension(Vec<DimensionRow>),
    Fact(Vec<FactRow>),
}

impl TypedRows {
    pub fn len(&self) -> usize {
        match self {
            TypedRows::Dimension(r) => r.len(),
            TypedRows::Fact(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Typed output of [`transform`]. `lineage[i]` lists the source rows folded
/// into output row `i` (more than one when duplicates were aggregated), so
/// every input row is accounted for by exactly one lineage entry or one
/// quarantine entry.
#[derive(Clone, Debug)]
pub struct Transformed {
    pub table: String,
    pub rows: TypedRows,
    pub lineage: Vec<Vec<usize>>,
    pub quarantine: Vec<Quarantined>,
}

impl Transformed {
    /// Input rows represented by the output rows.
    pub fn represented_rows(&self) -> usize {
        self.lineage.iter().map(Vec::len).sum()
    }
}

fn raw_line(row: &SourceRow) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(&row.fields).expect("in-memory write");
    let mut s = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 fields");
    while s.ends_with(['\n', '\r']) {
        s.pop();
    }
    s
}

/// Maps each required column name to its position in the batch header.
fn locate(
    batch: &RecordBatch,
    table: &str,
    columns: &[(String, bool)],
) -> Result<Vec<Option<usize>>, EtlError> {
    let header: Vec<String> = batch.header.iter().map(|h| normalize_column(h)).collect();
    columns
        .iter()
        .map(|(name, required)| {
            let want = normalize_column(name);
            match header.iter().position(|h| *h == want) {
                Some(p) => Ok(Some(p)),
                None if *required => Err(EtlError::HeaderMismatch {
                    source_id: batch.source.clone(),
                    table: table.to_string(),
                    column: name.clone(),
                }),
                None => Ok(None),
            }
        })
        .collect()
}

/// Cleanses and types a batch for `table`: trims, coerces to declared kinds,
/// normalizes dates, resolves fact references against `snapshot` and
/// handles duplicate keys, all per `policy`. Pure given its inputs.
pub fn transform(
    batch: &RecordBatch,
    table: &str,
    snapshot: &Snapshot,
    policy: &TransformPolicy,
) -> Result<Transformed, EtlError> {
    policy.validate()?;
    let schema = snapshot.schema();
    if let Some(def) = schema.dimension(table) {
        let columns: Vec<(String, bool)> = def
            .attributes
            .iter()
            .map(|a| (a.name.clone(), !a.nullable))
            .collect();
        let pos = locate(batch, table, &columns)?;
        let key_attr = def.key_index();
        let mut rows = Vec::new();
        let mut lineage = Vec::new();
        let mut quarantine = Vec::new();
        let mut seen: HashMap<i64, usize> = HashMap::new();
        'rows: for src in &batch.rows {
            let mut values = Vec::with_capacity(def.attributes.len());
            for (a, p) in def.attributes.iter().zip(&pos) {
                let raw = p.map_or("", |p| cell(&src.fields[p], policy.trim));
                match coerce(a.kind, raw, &policy.date_formats) {
                    Ok(Value::Null) if !a.nullable => {
                        quarantine.push(Quarantined::new(src.index, raw_line(src), format!("missing-required:{}", a.name)));
                        continue 'rows;
                    }
                    Ok(v) => values.push(v),
                    Err(_) => {
                        quarantine.push(Quarantined::new(src.index, raw_line(src), format!("kind-mismatch:{}", a.name)));
                        continue 'rows;
                    }
                }
            }
            let key = values[key_attr].as_i64().expect("non-null identifier");
            if seen.insert(key, rows.len()).is_some() {
                quarantine.push(Quarantined::new(src.index, raw_line(src), REASON_DUPLICATE));
                continue;
            }
            rows.push(DimensionRow(values));
            lineage.push(vec![src.index]);
        }
        return Ok(Transformed {
            table: table.to_string(),
            rows: TypedRows::Dimension(rows),
            lineage,
            quarantine,
        });
    }

    let def = schema
        .fact(table)
        .ok_or_else(|| StorageError::UnknownTable(table.to_string()))?;
    let key_names: Vec<String> = def
        .dimensions
        .iter()
        .map(|d| schema.dimensions[d].key.clone())
        .collect();
    let measure_names: Vec<String> = def.stored_measures().map(|m| m.name.clone()).collect();
    let columns: Vec<(String, bool)> = key_names
        .iter()
        .chain(&measure_names)
        .map(|n| (n.clone(), true))
        .collect();
    let pos: Vec<usize> = locate(batch, table, &columns)?
        .into_iter()
        .map(|p| p.expect("all required"))
        .collect();
    let dims: Vec<_> = def
        .dimensions
        .iter()
        .map(|d| snapshot.dimension(d))
        .collect::<Result<_, _>>()?;
    let nkeys = key_names.len();

    let mut rows: Vec<FactRow> = Vec::new();
    let mut lineage: Vec<Vec<usize>> = Vec::new();
    let mut quarantine = Vec::new();
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    'facts: for src in &batch.rows {
        let mut keys = Vec::with_capacity(nkeys);
        for (i, p) in pos[..nkeys].iter().enumerate() {
            let raw = cell(&src.fields[*p], policy.trim);
            let key = match coerce(AttributeKind::Identifier, raw, &policy.date_formats) {
                Ok(Value::Int(k)) => k,
                Ok(_) => {
                    quarantine.push(Quarantined::new(src.index, raw_line(src), format!("missing-required:{}", key_names[i])));
                    continue 'facts;
                }
                Err(_) => {
                    quarantine.push(Quarantined::new(src.index, raw_line(src), format!("kind-mismatch:{}", key_names[i])));
                    continue 'facts;
                }
            };
            if !dims[i].contains(key) {
                match policy.unresolved {
                    UnresolvedAction::MapToUnknown => {
                        keys.push(UNKNOWN_KEY);
                        continue;
                    }
                    UnresolvedAction::Quarantine => {
                        let reason = format!("unresolved-reference:{}", def.dimensions[i]);
                        quarantine.push(Quarantined::new(src.index, raw_line(src), reason));
                        continue 'facts;
                    }
                }
            }
            keys.push(key);
        }
        let mut measures = Vec::with_capacity(measure_names.len());
        for (j, p) in pos[nkeys..].iter().enumerate() {
            let raw = cell(&src.fields[*p], policy.trim);
            match coerce(AttributeKind::Decimal, raw, &policy.date_formats) {
                Ok(Value::Dec(m)) => measures.push(m),
                Ok(_) => {
                    quarantine.push(Quarantined::new(src.index, raw_line(src), format!("missing-required:{}", measure_names[j])));
                    continue 'facts;
                }
                Err(_) => {
                    quarantine.push(Quarantined::new(src.index, raw_line(src), format!("kind-mismatch:{}", measure_names[j])));
                    continue 'facts;
                }
            }
        }
        match seen.get(&keys) {
            Some(&at) => match policy.duplicates {
                DuplicateAction::AggregateAdditive => {
                    for (acc, m) in rows[at].measures.iter_mut().zip(&measures) {
                        *acc += m;
                    }
                    lineage[at].push(src.index);
                }
                DuplicateAction::Quarantine => {
                    quarantine.push(Quarantined::new(src.index, raw_line(src), REASON_DUPLICATE));
                }
            },
            None => {
                seen.insert(keys.clone(), rows.len());
                rows.push(FactRow { keys, measures });
                lineage.push(vec![src.index]);
            }
        }
    }
    Ok(Transformed {
        table: table.to_string(),
        rows: TypedRows::Fact(rows),
        lineage,
        quarantine,
    })
}

fn cell(raw: &str, trim: bool) -> &str {
    if trim {
        raw.trim()
    } else {
        raw
    }
}
