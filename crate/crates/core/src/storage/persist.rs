//! On-disk layout:
//!
//! ```text
//! <root>/schema.txt
//! <root>/dim/<name>.csv
//! <root>/fact/<name>.base.csv
//! <root>/fact/<name>.delta.csv
//! <root>/history.json
//! ```
//!
//! CSV files carry a header of attribute names, UTF-8, `\n` line ends, and an
//! empty field for NULL. The UNKNOWN member is implicit and never written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::coerce::{coerce, iso_formats};
use crate::schema::{load_schema, serialize_schema, ConstellationSchema, UNKNOWN_KEY};

use super::{DimensionRow, FactRow, LoadHistory, Partition, Snapshot, StorageError, Store};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> StorageError {
    StorageError::Corrupt {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

pub fn dim_path(root: &Path, dim: &str) -> PathBuf {
    root.join("dim").join(format!("{dim}.csv"))
}

pub fn fact_path(root: &Path, fact: &str, partition: Partition) -> PathBuf {
    root.join("fact").join(format!("{fact}.{partition}.csv"))
}

/// Writes `contents` next to `path` and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StorageError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes the full contents of `snap` under `root`.
pub fn save(snap: &Snapshot, root: &Path) -> Result<(), StorageError> {
    let schema = snap.schema();
    write_atomic(&root.join("schema.txt"), serialize_schema(schema).as_bytes())?;
    for table in snap.dimensions() {
        let def = table.def();
        let header: Vec<String> = def.attributes.iter().map(|a| a.name.clone()).collect();
        let rows = (0..table.len())
            .filter(|&r| table.key_at(r) != UNKNOWN_KEY)
            .map(|r| table.row(r).0.iter().map(|v| v.render()).collect());
        write_atomic(&dim_path(root, &def.name), &csv_bytes(&header, rows))?;
    }
    for def in schema.facts.values() {
        let fs = snap.fact(&def.name)?;
        let mut header: Vec<String> = def
            .dimensions
            .iter()
            .map(|d| schema.dimensions[d].key.clone())
            .collect();
        header.extend(def.stored_measures().map(|m| m.name.clone()));
        for p in Partition::BOTH {
            let part = fs.partition(p);
            let rows = (0..part.len()).map(|i| {
                let r = part.row(i);
                r.keys
                    .iter()
                    .map(|k| k.to_string())
                    .chain(r.measures.iter().map(|m| m.to_string()))
                    .collect()
            });
            write_atomic(&fact_path(root, &def.name, p), &csv_bytes(&header, rows))?;
        }
    }
    let history = serde_json::to_vec_pretty(snap.history()).expect("history serializes");
    write_atomic(&root.join("history.json"), &history)
}

/// Reads the schema stored at `root`, if any.
pub fn read_schema(root: &Path) -> Result<Option<ConstellationSchema>, StorageError> {
    let path = root.join("schema.txt");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    load_schema(&text)
        .map(Some)
        .map_err(|e| corrupt(&path, e.to_string()))
}

fn read_csv(path: &Path) -> Result<Option<(Vec<String>, Vec<Vec<String>>)>, StorageError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| corrupt(path, e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| corrupt(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| corrupt(path, e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Some((header, rows)))
}

fn column_positions(path: &Path, header: &[String], expected: &[String]) -> Result<Vec<usize>, StorageError> {
    expected
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| corrupt(path, format!("missing column `{name}`")))
        })
        .collect()
}

/// Opens the store persisted at `root`. Missing table files are treated as
/// empty tables; `schema` overrides `schema.txt` when given.
pub fn open(root: &Path, schema: Option<ConstellationSchema>) -> Result<Store, StorageError> {
    let schema = match schema {
        Some(s) => s,
        None => read_schema(root)?.ok_or_else(|| corrupt(&root.join("schema.txt"), "no schema stored"))?,
    };
    let mut store = Store::new(schema)?;
    let schema = store.schema().clone();
    let iso = iso_formats();
    for def in schema.dimensions.values() {
        let path = dim_path(root, &def.name);
        let Some((header, rows)) = read_csv(&path)? else {
            continue;
        };
        let names: Vec<String> = def.attributes.iter().map(|a| a.name.clone()).collect();
        let pos = column_positions(&path, &header, &names)?;
        let mut typed = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let values = def
                .attributes
                .iter()
                .zip(&pos)
                .map(|(a, p)| coerce(a.kind, &row[*p], &iso))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| corrupt(&path, format!("row {}: {e}", i + 1)))?;
            typed.push(DimensionRow(values));
        }
        store.insert_dimension_rows(&def.name, &typed)?;
    }
    for def in schema.facts.values() {
        let mut names: Vec<String> = def
            .dimensions
            .iter()
            .map(|d| schema.dimensions[d].key.clone())
            .collect();
        names.extend(def.stored_measures().map(|m| m.name.clone()));
        let nkeys = def.dimensions.len();
        for p in Partition::BOTH {
            let path = fact_path(root, &def.name, p);
            let Some((header, rows)) = read_csv(&path)? else {
                continue;
            };
            let pos = column_positions(&path, &header, &names)?;
            let mut typed = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let bad = |e: String| corrupt(&path, format!("row {}: {e}", i + 1));
                let keys = pos[..nkeys]
                    .iter()
                    .map(|p| row[*p].parse::<i64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                let measures = pos[nkeys..]
                    .iter()
                    .map(|p| row[*p].parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                typed.push(FactRow { keys, measures });
            }
            store.insert_fact_rows(&def.name, &typed, p)?;
        }
    }
    let history_path = root.join("history.json");
    if history_path.exists() {
        let bytes = fs::read(&history_path).map_err(io_err(&history_path))?;
        let history: BTreeMap<String, LoadHistory> =
            serde_json::from_slice(&bytes).map_err(|e| corrupt(&history_path, e.to_string()))?;
        store.replace_history(history);
    }
    Ok(store)
}
