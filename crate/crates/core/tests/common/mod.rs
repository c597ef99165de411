//! Fixtures shared by the acceptance suite and the invariant tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use agrodw_core::datagen::Dataset;
use agrodw_core::etl::{ingest, TransformPolicy};
use agrodw_core::olap::{validate_query, GroupBy, PivotSpec, Query, ResultGrid};
use agrodw_core::predicate::{CompareOp, Filter};
use agrodw_core::schema::{AttributeKind, DimensionDef, Level};
use agrodw_core::storage::{Partition, Snapshot, Store};
use agrodw_core::Value;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Where a dataset's fact rows are stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    AllBase,
    AllDelta,
    Half,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Placement::AllBase, Placement::AllDelta, Placement::Half];

    pub fn name(self) -> &'static str {
        match self {
            Placement::AllBase => "all-base",
            Placement::AllDelta => "all-delta",
            Placement::Half => "50/50",
        }
    }
}

fn table_of(rel: &Path) -> String {
    rel.file_name().unwrap().to_str().unwrap().split('.').next().unwrap().to_string()
}

/// Loads a generated dataset through ETL, dimensions first. Every load must
/// be clean.
pub fn load(data: &Dataset, placement: Placement) -> Store {
    let mut store = Store::new(agrodw_core::schema::builtin_schema()).unwrap();
    let policy = TransformPolicy::default();
    let put = |store: &mut Store, table: &str, bytes: &[u8], p: Partition| {
        if bytes.iter().filter(|&&b| b == b'\n').count() < 2 {
            return;
        }
        let r = ingest(store, table, bytes, table, p, &policy).unwrap();
        assert!(r.is_clean(), "{table}: {r:?}");
    };
    for (rel, bytes) in data.files.iter().filter(|(r, _)| r.starts_with("dim")) {
        put(&mut store, &table_of(rel), bytes, Partition::Base);
    }
    for (rel, bytes) in data.files.iter().filter(|(r, _)| r.starts_with("fact")) {
        let table = table_of(rel);
        let text = std::str::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let rows: Vec<&str> = lines.collect();
        let split = match placement {
            Placement::AllBase => rows.len(),
            Placement::AllDelta => 0,
            Placement::Half => rows.len() / 2,
        };
        let csv = |part: &[&str]| {
            let mut s = format!("{header}\n");
            for r in part {
                s.push_str(r);
                s.push('\n');
            }
            s
        };
        put(&mut store, &table, csv(&rows[..split]).as_bytes(), Partition::Base);
        put(&mut store, &table, csv(&rows[split..]).as_bytes(), Partition::Delta);
    }
    store
}

/// Every level a query may group or filter on: the drill path, every other
/// attribute, and month/year of each date attribute.
pub fn candidate_levels(def: &DimensionDef) -> Vec<Level> {
    let mut out = def.drill_path();
    for a in &def.attributes {
        let l = Level::attr(a.name.clone());
        if !out.contains(&l) {
            out.push(l);
        }
        if a.kind == AttributeKind::Date {
            for l in [Level::Month(a.name.clone()), Level::Year(a.name.clone())] {
                if !out.contains(&l) {
                    out.push(l);
                }
            }
        }
    }
    out
}

/// A non-null value some member of `dim` takes at `level`, if any.
pub fn sample_value(rng: &mut ChaCha8Rng, snap: &Snapshot, dim: &str, level: &Level) -> Option<Value> {
    let table = snap.dimension(dim).unwrap();
    for _ in 0..8 {
        let row = rng.gen_range(0..table.len());
        match table.level_value(row, level) {
            Some(v) if !v.is_null() => return Some(v),
            _ => {}
        }
    }
    None
}

pub fn random_filter(rng: &mut ChaCha8Rng, snap: &Snapshot, dim: &str) -> Option<Filter> {
    let def = &snap.schema().dimensions[dim];
    let levels = candidate_levels(def);
    let level = levels.choose(rng).unwrap().clone();
    let ops = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge, CompareOp::In];
    let op = *ops.choose(rng).unwrap();
    let n = if op == CompareOp::In { rng.gen_range(1..=3) } else { 1 };
    let mut values = Vec::new();
    for _ in 0..n {
        values.push(sample_value(rng, snap, dim, &level)?);
    }
    Some(Filter {
        dimension: dim.to_string(),
        level,
        op,
        values,
    })
}

/// A random valid query over `fact`: up to four grouped dimensions at any
/// level, up to two filters, a non-empty measure subset and sometimes a pivot.
pub fn random_query(rng: &mut ChaCha8Rng, snap: &Snapshot, fact: &str) -> Query {
    let schema = snap.schema().clone();
    let def = &schema.facts[fact];
    loop {
        let mut q = Query::new(fact);
        let mut dims = def.dimensions.clone();
        dims.shuffle(rng);
        let k = rng.gen_range(0..=dims.len().min(4));
        for d in &dims[..k] {
            let levels = candidate_levels(&schema.dimensions[d]);
            q.group_by.push(GroupBy::new(d.clone(), levels.choose(rng).unwrap().clone()));
        }
        for _ in 0..rng.gen_range(0..=2) {
            let d = def.dimensions.choose(rng).unwrap();
            if let Some(f) = random_filter(rng, snap, d) {
                q.filters.push(f);
            }
        }
        q.measures = def.measures.iter().filter(|_| rng.gen_bool(0.6)).map(|m| m.name.clone()).collect();
        if q.measures.is_empty() {
            q.measures.push(def.measures.choose(rng).unwrap().name.clone());
        }
        if !q.group_by.is_empty() && rng.gen_bool(0.3) {
            let mut entries = q.group_by.clone();
            entries.shuffle(rng);
            let cut = rng.gen_range(0..=entries.len());
            q.pivot = Some(PivotSpec {
                rows: entries[..cut].to_vec(),
                cols: entries[cut..].to_vec(),
            });
        }
        if validate_query(&schema, &q).is_ok() {
            return q;
        }
    }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn same_value(a: &Option<Value>, b: &Option<Value>, rel: f64) -> bool {
    match (a, b) {
        (Some(Value::Dec(x)), Some(Value::Dec(y))) => close(*x, *y, rel),
        _ => a == b,
    }
}

/// Equal axes, headers and cells; integers exactly, decimals within `rel`.
/// Provenance is ignored.
pub fn compare_grids(got: &ResultGrid, want: &ResultGrid, rel: f64) -> Result<(), String> {
    if (&got.row_axes, &got.col_axes, &got.measures) != (&want.row_axes, &want.col_axes, &want.measures) {
        return Err(format!(
            "axes differ: {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
            got.row_axes, got.col_axes, got.measures, want.row_axes, want.col_axes, want.measures
        ));
    }
    if got.rows != want.rows || got.cols != want.cols {
        return Err(format!("headers differ: {} x {} vs {} x {}", got.rows.len(), got.cols.len(), want.rows.len(), want.cols.len()));
    }
    if got.cells.len() != want.cells.len() {
        return Err(format!("{} cells vs {}", got.cells.len(), want.cells.len()));
    }
    for (g, w) in got.cells.iter().zip(&want.cells) {
        if (g.r, g.c) != (w.r, w.c) {
            return Err(format!("cell position ({}, {}) vs ({}, {})", g.r, g.c, w.r, w.c));
        }
        for (i, (x, y)) in g.values.iter().zip(&w.values).enumerate() {
            if !same_value(x, y, rel) {
                return Err(format!("cell ({}, {}) {}: {x:?} vs {y:?}", g.r, g.c, got.measures[i]));
            }
        }
    }
    Ok(())
}

/// Reads CSV bytes into a header and records.
pub fn read_csv(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

/// `name -> (header, rows)` for every file of a dataset, keyed by table.
pub fn tables(data: &Dataset) -> BTreeMap<String, (Vec<String>, Vec<Vec<String>>)> {
    data.files
        .iter()
        .filter(|(rel, _)| rel.extension().is_some_and(|e| e == "csv"))
        .map(|(rel, bytes)| (table_of(rel), read_csv(bytes)))
        .collect()
}
