//! Columnar storage: dimension tables indexed by surrogate key, and per-fact
//! base (historical) and delta (real-time) partitions.
//!
//! A [`Store`] has a single writer. Readers work on [`Snapshot`]s, which
//! share column data with the store through `Arc` and are copied on the next
//! write, so a snapshot never observes later inserts.

mod column;
pub mod persist;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coerce::kind_accepts;
use crate::predicate::Filter;
use crate::schema::{
    validate_schema, ConstellationSchema, DimensionDef, FactDef, Level, ValidationReport,
    UNKNOWN_KEY,
};
use crate::Value;

pub use column::Column;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("schema invalid: {}", .0.summary())]
    SchemaInvalid(ValidationReport),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown attribute `{dimension}.{attribute}`")]
    UnknownAttribute { dimension: String, attribute: String },
    #[error("duplicate key {key} in `{table}`")]
    DuplicateKey { table: String, key: i64 },
    #[error("kind mismatch in `{table}.{attribute}`: {detail}")]
    KindMismatch {
        table: String,
        attribute: String,
        detail: String,
    },
    #[error("`{fact}` references {dimension} key {key}, which does not exist")]
    ReferentialViolation {
        fact: String,
        dimension: String,
        key: i64,
    },
    #[error("duplicate composite key {keys:?} in `{fact}`")]
    DuplicateFactKey { fact: String, keys: Vec<i64> },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file {path}: {detail}")]
    Corrupt { path: String, detail: String },
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Base,
    Delta,
}

impl Partition {
    pub const BOTH: [Partition; 2] = [Partition::Base, Partition::Delta];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Base => "base",
            Partition::Delta => "delta",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "base" => Ok(Partition::Base),
            "delta" => Ok(Partition::Delta),
            other => Err(format!("unknown partition `{other}` (expected base or delta)")),
        }
    }
}

/// Attribute values in the dimension's declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionRow(pub Vec<Value>);

/// Dimension keys in the fact's dimension order, then stored (additive)
/// measures in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct FactRow {
    pub keys: Vec<i64>,
    pub measures: Vec<f64>,
}

/// Per-table load bookkeeping used by the quality report.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadHistory {
    pub inserted: u64,
    pub rejected: u64,
    pub duplicates: u64,
    pub quarantined: u64,
}

#[derive(Clone, Debug)]
pub struct DimensionTable {
    def: DimensionDef,
    columns: Vec<Column>,
    key_attr: usize,
    index: HashMap<i64, usize>,
}

impl DimensionTable {
    fn new(def: &DimensionDef) -> Self {
        let mut t = Self {
            columns: def.attributes.iter().map(|a| Column::for_kind(a.kind)).collect(),
            key_attr: def.key_index(),
            def: def.clone(),
            index: HashMap::new(),
        };
        let mut unknown = vec![Value::Null; def.attributes.len()];
        unknown[t.key_attr] = Value::Int(UNKNOWN_KEY);
        t.append(&DimensionRow(unknown));
        t
    }

    fn append(&mut self, row: &DimensionRow) {
        let key = row.0[self.key_attr].as_i64().expect("checked key");
        self.index.insert(key, self.len());
        for (c, v) in self.columns.iter_mut().zip(&row.0) {
            c.push(v);
        }
    }

    pub fn def(&self) -> &DimensionDef {
        &self.def
    }

    /// Row count, including the UNKNOWN member.
    pub fn len(&self) -> usize {
        self.columns[self.key_attr].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key_at(&self, row: usize) -> i64 {
        self.columns[self.key_attr].int(row).expect("keys are never null")
    }

    pub fn position(&self, key: i64) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn contains(&self, key: i64) -> bool {
        self.index.contains_key(&key)
    }

    pub fn row(&self, row: usize) -> DimensionRow {
        DimensionRow(self.columns.iter().map(|c| c.get(row)).collect())
    }

    pub fn value(&self, row: usize, attr: usize) -> Value {
        self.columns[attr].get(row)
    }

    pub fn column(&self, attr: usize) -> &Column {
        &self.columns[attr]
    }

    /// Value of `level` for one row; `None` if the level's attribute does not exist.
    pub fn level_value(&self, row: usize, level: &Level) -> Option<Value> {
        let attr = self.def.attribute_index(level.attribute())?;
        let v = self.columns[attr].get(row);
        Some(match level {
            Level::Attribute(_) => v,
            Level::Month(_) => v.month_of(),
            Level::Year(_) => v.year_of(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len()).map(|r| self.key_at(r))
    }
}

#[derive(Clone, Debug, Default)]
pub struct FactPartition {
    key_columns: Vec<Vec<i64>>,
    measure_columns: Vec<Vec<f64>>,
    len: usize,
}

impl FactPartition {
    fn new(fact: &FactDef) -> Self {
        Self {
            key_columns: vec![Vec::new(); fact.dimensions.len()],
            measure_columns: vec![Vec::new(); fact.stored_measures().count()],
            len: 0,
        }
    }

    fn push(&mut self, row: &FactRow) {
        for (c, k) in self.key_columns.iter_mut().zip(&row.keys) {
            c.push(*k);
        }
        for (c, m) in self.measure_columns.iter_mut().zip(&row.measures) {
            c.push(*m);
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Key column of the fact's `dim`-th dimension.
    pub fn keys(&self, dim: usize) -> &[i64] {
        &self.key_columns[dim]
    }

    pub fn measure(&self, m: usize) -> &[f64] {
        &self.measure_columns[m]
    }

    pub fn dimension_count(&self) -> usize {
        self.key_columns.len()
    }

    pub fn measure_count(&self) -> usize {
        self.measure_columns.len()
    }

    pub fn row(&self, i: usize) -> FactRow {
        FactRow {
            keys: self.key_columns.iter().map(|c| c[i]).collect(),
            measures: self.measure_columns.iter().map(|c| c[i]).collect(),
        }
    }

    fn column_lengths_agree(&self) -> bool {
        self.key_columns.iter().all(|c| c.len() == self.len)
            && self.measure_columns.iter().all(|c| c.len() == self.len)
    }
}

#[derive(Clone, Debug)]
struct FactState {
    base: Arc<FactPartition>,
    delta: Arc<FactPartition>,
    tuples: HashSet<Box<[i64]>>,
    base_generation: u64,
}

/// The writable warehouse.
#[derive(Clone, Debug)]
pub struct Store {
    schema: Arc<ConstellationSchema>,
    dims: BTreeMap<String, Arc<DimensionTable>>,
    facts: BTreeMap<String, FactState>,
    history: Arc<BTreeMap<String, LoadHistory>>,
    last_epoch: u64,
}

fn kind_error(table: &str, attribute: &str, detail: impl Into<String>) -> StorageError {
    StorageError::KindMismatch {
        table: table.to_string(),
        attribute: attribute.to_string(),
        detail: detail.into(),
    }
}

impl Store {
    /// Empty store; every dimension starts with its UNKNOWN member (key 0).
    pub fn new(schema: ConstellationSchema) -> Result<Self> {
        Self::with_shared_schema(Arc::new(schema))
    }

    pub fn with_shared_schema(schema: Arc<ConstellationSchema>) -> Result<Self> {
        let report = validate_schema(&schema);
        if !report.is_clean() {
            return Err(StorageError::SchemaInvalid(report));
        }
        let dims = schema
            .dimensions
            .values()
            .map(|d| (d.name.clone(), Arc::new(DimensionTable::new(d))))
            .collect();
        let facts = schema
            .facts
            .values()
            .map(|f| {
                let empty = Arc::new(FactPartition::new(f));
                let state = FactState {
                    base: empty.clone(),
                    delta: empty,
                    tuples: HashSet::new(),
                    base_generation: 0,
                };
                (f.name.clone(), state)
            })
            .collect();
        Ok(Self {
            schema,
            dims,
            facts,
            history: Arc::new(BTreeMap::new()),
            last_epoch: 0,
        })
    }

    pub fn schema(&self) -> &Arc<ConstellationSchema> {
        &self.schema
    }

    /// Appends dimension rows atomically: either every row is inserted or
    /// none is. Links to other dimensions are not checked here.
    pub fn insert_dimension_rows(&mut self, dim: &str, rows: &[DimensionRow]) -> Result<Vec<i64>> {
        let schema = self.schema.clone();
        let def = schema
            .dimension(dim)
            .ok_or_else(|| StorageError::UnknownTable(dim.to_string()))?;
        let table = &self.dims[dim];
        let key_attr = def.key_index();
        let mut batch = HashSet::new();
        let mut keys = Vec::with_capacity(rows.len());
        for row in rows {
            if row.0.len() != def.attributes.len() {
                return Err(kind_error(
                    dim,
                    "*",
                    format!("expected {} values, got {}", def.attributes.len(), row.0.len()),
                ));
            }
            for (a, v) in def.attributes.iter().zip(&row.0) {
                if v.is_null() && !a.nullable {
                    return Err(kind_error(dim, &a.name, "null in non-nullable attribute"));
                }
                if !kind_accepts(a.kind, v) {
                    return Err(kind_error(dim, &a.name, format!("{v} is not a valid {}", a.kind.as_str())));
                }
            }
            let key = row.0[key_attr].as_i64().expect("validated key");
            if table.contains(key) || !batch.insert(key) {
                return Err(StorageError::DuplicateKey {
                    table: dim.to_string(),
                    key,
                });
            }
            keys.push(key);
        }
        let table = Arc::make_mut(self.dims.get_mut(dim).expect("checked"));
        for row in rows {
            table.append(row);
        }
        Ok(keys)
    }

    /// Appends fact rows atomically to one partition.
    pub fn insert_fact_rows(&mut self, fact: &str, rows: &[FactRow], partition: Partition) -> Result<usize> {
        let schema = self.schema.clone();
        let def = schema
            .fact(fact)
            .ok_or_else(|| StorageError::UnknownTable(fact.to_string()))?;
        let measures: Vec<&str> = def.stored_measures().map(|m| m.name.as_str()).collect();
        let state = &self.facts[fact];
        let mut batch: HashSet<&[i64]> = HashSet::new();
        for row in rows {
            if row.keys.len() != def.dimensions.len() {
                return Err(kind_error(fact, "*", format!("expected {} keys, got {}", def.dimensions.len(), row.keys.len())));
            }
            if row.measures.len() != measures.len() {
                return Err(kind_error(fact, "*", format!("expected {} measures, got {}", measures.len(), row.measures.len())));
            }
            if let Some(i) = row.measures.iter().position(|m| !m.is_finite()) {
                return Err(kind_error(fact, measures[i], "measure is not finite"));
            }
            for (d, k) in def.dimensions.iter().zip(&row.keys) {
                if !self.dims[d].contains(*k) {
                    return Err(StorageError::ReferentialViolation {
                        fact: fact.to_string(),
                        dimension: d.clone(),
                        key: *k,
                    });
                }
            }
            if state.tuples.contains(row.keys.as_slice()) || !batch.insert(&row.keys) {
                return Err(StorageError::DuplicateFactKey {
                    fact: fact.to_string(),
                    keys: row.keys.clone(),
                });
            }
        }
        let state = self.facts.get_mut(fact).expect("checked");
        let target = match partition {
            Partition::Base => {
                if !rows.is_empty() {
                    state.base_generation += 1;
                }
                Arc::make_mut(&mut state.base)
            }
            Partition::Delta => Arc::make_mut(&mut state.delta),
        };
        for row in rows {
            target.push(row);
            state.tuples.insert(row.keys.clone().into_boxed_slice());
        }
        Ok(rows.len())
    }

    /// Moves every delta row of `fact` into its base partition.
    pub fn merge_delta(&mut self, fact: &str) -> Result<usize> {
        let schema = self.schema.clone();
        let def = schema
            .fact(fact)
            .ok_or_else(|| StorageError::UnknownTable(fact.to_string()))?;
        let state = self.facts.get_mut(fact).expect("checked");
        let absorbed = state.delta.len();
        if absorbed == 0 {
            return Ok(0);
        }
        let delta = std::mem::replace(&mut state.delta, Arc::new(FactPartition::new(def)));
        let base = Arc::make_mut(&mut state.base);
        for i in 0..delta.len() {
            base.push(&delta.row(i));
        }
        state.base_generation += 1;
        Ok(absorbed)
    }

    pub fn history_mut(&mut self, table: &str) -> &mut LoadHistory {
        Arc::make_mut(&mut self.history)
            .entry(table.to_string())
            .or_default()
    }

    pub(crate) fn replace_history(&mut self, history: BTreeMap<String, LoadHistory>) {
        self.history = Arc::new(history);
    }

    /// Immutable view; each call issues a strictly larger epoch.
    pub fn snapshot(&mut self) -> Snapshot {
        self.last_epoch += 1;
        Snapshot {
            epoch: self.last_epoch,
            schema: self.schema.clone(),
            dims: self.dims.clone(),
            facts: self
                .facts
                .iter()
                .map(|(name, s)| {
                    let fs = FactSnapshot {
                        base: s.base.clone(),
                        delta: s.delta.clone(),
                        base_generation: s.base_generation,
                    };
                    (name.clone(), fs)
                })
                .collect(),
            history: self.history.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FactSnapshot {
    pub base: Arc<FactPartition>,
    pub delta: Arc<FactPartition>,
    /// Bumped whenever the base partition changes; cubes record it to detect staleness.
    pub base_generation: u64,
}

impl FactSnapshot {
    pub fn partition(&self, p: Partition) -> &FactPartition {
        match p {
            Partition::Base => &self.base,
            Partition::Delta => &self.delta,
        }
    }

    pub fn total_rows(&self) -> usize {
        self.base.len() + self.delta.len()
    }
}

/// Frozen view of a [`Store`].
#[derive(Clone, Debug)]
pub struct Snapshot {
    epoch: u64,
    schema: Arc<ConstellationSchema>,
    dims: BTreeMap<String, Arc<DimensionTable>>,
    facts: BTreeMap<String, FactSnapshot>,
    history: Arc<BTreeMap<String, LoadHistory>>,
}

impl Snapshot {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn schema(&self) -> &Arc<ConstellationSchema> {
        &self.schema
    }

    pub fn dimension(&self, dim: &str) -> Result<&DimensionTable> {
        self.dims
            .get(dim)
            .map(|d| d.as_ref())
            .ok_or_else(|| StorageError::UnknownTable(dim.to_string()))
    }

    pub fn fact(&self, fact: &str) -> Result<&FactSnapshot> {
        self.facts
            .get(fact)
            .ok_or_else(|| StorageError::UnknownTable(fact.to_string()))
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &DimensionTable> {
        self.dims.values().map(|d| d.as_ref())
    }

    pub fn history(&self) -> &BTreeMap<String, LoadHistory> {
        &self.history
    }

    /// Row with `key`, or `None`. Key 0 yields the UNKNOWN member.
    pub fn lookup_dimension(&self, dim: &str, key: i64) -> Result<Option<DimensionRow>> {
        let table = self.dimension(dim)?;
        Ok(table.position(key).map(|r| table.row(r)))
    }

    /// Rows of the selected partitions satisfying every filter, in insertion
    /// order (base before delta when both are selected).
    pub fn scan_fact<'a>(
        &'a self,
        fact: &str,
        filters: &[Filter],
        partitions: &[Partition],
    ) -> Result<impl Iterator<Item = FactRow> + 'a> {
        let def = self
            .schema
            .fact(fact)
            .ok_or_else(|| StorageError::UnknownTable(fact.to_string()))?;
        let fs = self.fact(fact)?;
        let mut allowed: Vec<Option<HashSet<i64>>> = vec![None; def.dimensions.len()];
        for f in filters {
            let idx = def
                .dimension_index(&f.dimension)
                .ok_or_else(|| StorageError::UnknownTable(f.dimension.clone()))?;
            let table = self.dimension(&f.dimension)?;
            if table.def().level_kind(&f.level).is_none() {
                return Err(StorageError::UnknownAttribute {
                    dimension: f.dimension.clone(),
                    attribute: f.level.to_string(),
                });
            }
            let pass: HashSet<i64> = (0..table.len())
                .filter(|&r| f.matches(&table.level_value(r, &f.level).unwrap_or(Value::Null)))
                .map(|r| table.key_at(r))
                .collect();
            allowed[idx] = Some(match allowed[idx].take() {
                Some(prev) => prev.intersection(&pass).copied().collect(),
                None => pass,
            });
        }
        let mut parts: Vec<&'a FactPartition> = Vec::new();
        for p in Partition::BOTH {
            if partitions.contains(&p) {
                parts.push(fs.partition(p));
            }
        }
        Ok(parts.into_iter().flat_map(move |part| {
            let allowed = allowed.clone();
            (0..part.len()).filter_map(move |i| {
                let ok = allowed
                    .iter()
                    .enumerate()
                    .all(|(d, set)| set.as_ref().is_none_or(|s| s.contains(&part.keys(d)[i])));
                ok.then(|| part.row(i))
            })
        }))
    }

    /// Walks every table and reports invariant violations: dangling fact
    /// keys, duplicate composite keys and ragged partitions.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for def in self.schema.facts.values() {
            let fs = &self.facts[&def.name];
            let mut seen = HashSet::new();
            for p in Partition::BOTH {
                let part = fs.partition(p);
                if !part.column_lengths_agree() {
                    problems.push(format!("{}.{p}: ragged columns", def.name));
                    continue;
                }
                for i in 0..part.len() {
                    let row = part.row(i);
                    for (d, k) in def.dimensions.iter().zip(&row.keys) {
                        if !self.dims[d].contains(*k) {
                            problems.push(format!("{}.{p} row {i}: {d} key {k} dangles", def.name));
                        }
                    }
                    if !seen.insert(row.keys.clone()) {
                        problems.push(format!("{}.{p} row {i}: duplicate tuple {:?}", def.name, row.keys));
                    }
                }
            }
        }
        for t in self.dims.values() {
            if t.columns.iter().any(|c| c.len() != t.len()) {
                problems.push(format!("{}: ragged columns", t.def.name));
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_schema;

    fn crop(id: i64, name: &str, variety: &str) -> DimensionRow {
        DimensionRow(vec![
            Value::Int(id),
            Value::text(name),
            Value::text(format!("C{id}")),
            Value::text(variety),
            Value::Null,
            Value::Dec(14.0),
            Value::Null,
        ])
    }

    fn keyed(def: &DimensionDef, id: i64) -> DimensionRow {
        let mut v = vec![Value::Null; def.attributes.len()];
        v[def.key_index()] = Value::Int(id);
        DimensionRow(v)
    }

    fn yield_store() -> Store {
        let mut s = Store::new(builtin_schema()).unwrap();
        s.insert_dimension_rows("Crop", &[crop(7, "wheat", "apache"), crop(8, "barley", "planet")])
            .unwrap();
        let schema = s.schema().clone();
        for (dim, ids) in [("Field", [3, 4]), ("Farmer", [2, 5])] {
            let def = schema.dimension(dim).unwrap();
            let rows: Vec<_> = ids.iter().map(|i| keyed(def, *i)).collect();
            s.insert_dimension_rows(dim, &rows).unwrap();
        }
        s
    }

    fn yrow(crop: i64, field: i64, farmer: i64, q: f64, a: f64) -> FactRow {
        FactRow {
            keys: vec![crop, field, farmer],
            measures: vec![q, a],
        }
    }

    #[test]
    fn empty_store_has_unknown_members() {
        let mut s = Store::new(builtin_schema()).unwrap();
        let snap = s.snapshot();
        assert_eq!(snap.dimensions().count(), 19);
        assert!(snap.dimensions().all(|d| d.len() == 1));
        for f in ["Trading", "Operation", "Treatment", "Yield"] {
            assert_eq!(snap.fact(f).unwrap().total_rows(), 0);
        }
        let unknown = snap.lookup_dimension("Crop", 0).unwrap().unwrap();
        assert_eq!(unknown.0[0], Value::Int(0));
        assert!(unknown.0[1..].iter().all(Value::is_null));
    }

    #[test]
    fn dangling_link_schema_is_rejected() {
        let mut schema = builtin_schema();
        schema.dimensions.get_mut("Field").unwrap().links[0].target = "Nowhere".into();
        assert!(matches!(Store::new(schema), Err(StorageError::SchemaInvalid(_))));
    }

    #[test]
    fn dimension_insert_echo_and_duplicates() {
        let mut s = Store::new(builtin_schema()).unwrap();
        assert_eq!(s.insert_dimension_rows("Crop", &[crop(7, "wheat", "apache")]).unwrap(), vec![7]);
        assert!(matches!(
            s.insert_dimension_rows("Crop", &[crop(7, "wheat", "apache")]),
            Err(StorageError::DuplicateKey { key: 7, .. })
        ));
        assert!(matches!(
            s.insert_dimension_rows("Crop", &[crop(9, "a", "b"), crop(9, "a", "b")]),
            Err(StorageError::DuplicateKey { key: 9, .. })
        ));
        // batch was atomic
        assert!(s.snapshot().lookup_dimension("Crop", 9).unwrap().is_none());
        assert!(matches!(s.insert_dimension_rows("Ghost", &[]), Err(StorageError::UnknownTable(_))));
    }

    #[test]
    fn dimension_kind_mismatch() {
        let mut s = Store::new(builtin_schema()).unwrap();
        let mut row = crop(7, "wheat", "apache");
        row.0[5] = Value::text("wet");
        assert!(matches!(
            s.insert_dimension_rows("Crop", &[row]),
            Err(StorageError::KindMismatch { .. })
        ));
    }

    #[test]
    fn soil_link_not_checked_at_insert() {
        let mut s = Store::new(builtin_schema()).unwrap();
        let schema = s.schema().clone();
        let mut row = keyed(schema.dimension("Soil").unwrap(), 11);
        row.0[1] = Value::Int(404);
        assert_eq!(s.insert_dimension_rows("Soil", &[row]).unwrap(), vec![11]);
    }

    #[test]
    fn fact_insert_rules() {
        let mut s = yield_store();
        assert_eq!(s.insert_fact_rows("Yield", &[yrow(7, 3, 2, 12.5, 4.0)], Partition::Delta).unwrap(), 1);
        match s.insert_fact_rows("Yield", &[yrow(99, 3, 2, 1.0, 1.0)], Partition::Delta) {
            Err(StorageError::ReferentialViolation { dimension, key, .. }) => {
                assert_eq!((dimension.as_str(), key), ("Crop", 99));
            }
            other => panic!("{other:?}"),
        }
        // duplicates are detected across partitions
        assert!(matches!(
            s.insert_fact_rows("Yield", &[yrow(7, 3, 2, 1.0, 1.0)], Partition::Base),
            Err(StorageError::DuplicateFactKey { .. })
        ));
        // unknown member is always resolvable
        assert_eq!(s.insert_fact_rows("Yield", &[yrow(0, 3, 2, 1.0, 1.0)], Partition::Base).unwrap(), 1);
        assert!(matches!(
            s.insert_fact_rows("Yield", &[yrow(8, 3, 2, f64::NAN, 1.0)], Partition::Base),
            Err(StorageError::KindMismatch { .. })
        ));
        let snap = s.snapshot();
        assert!(snap.audit().is_empty());
        assert_eq!(snap.fact("Yield").unwrap().base.len(), 1);
        assert_eq!(snap.fact("Yield").unwrap().delta.len(), 1);
    }

    #[test]
    fn snapshots_are_isolated_and_ordered() {
        let mut s = yield_store();
        let first = s.snapshot();
        s.insert_fact_rows("Yield", &[yrow(7, 3, 2, 1.0, 1.0)], Partition::Delta).unwrap();
        s.insert_dimension_rows("Crop", &[crop(20, "oat", "x")]).unwrap();
        let second = s.snapshot();
        assert!(second.epoch() > first.epoch());
        assert_eq!(first.fact("Yield").unwrap().total_rows(), 0);
        assert!(first.lookup_dimension("Crop", 20).unwrap().is_none());
        assert_eq!(second.fact("Yield").unwrap().total_rows(), 1);
        assert!(second.lookup_dimension("Crop", 20).unwrap().is_some());
    }

    #[test]
    fn scan_in_insertion_order_with_filter() {
        let mut s = yield_store();
        let rows = vec![
            yrow(7, 3, 2, 1.0, 1.0),
            yrow(8, 3, 2, 2.0, 1.0),
            yrow(7, 4, 5, 3.0, 1.0),
        ];
        s.insert_fact_rows("Yield", &rows[..2], Partition::Base).unwrap();
        s.insert_fact_rows("Yield", &rows[2..], Partition::Delta).unwrap();
        let snap = s.snapshot();
        let all: Vec<_> = snap.scan_fact("Yield", &[], &Partition::BOTH).unwrap().collect();
        assert_eq!(all, rows);
        let wheat: Vec<_> = snap
            .scan_fact("Yield", &[Filter::eq("Crop", "name", "wheat")], &Partition::BOTH)
            .unwrap()
            .collect();
        assert_eq!(wheat, vec![rows[0].clone(), rows[2].clone()]);
        let delta_only: Vec<_> = snap.scan_fact("Yield", &[], &[Partition::Delta]).unwrap().collect();
        assert_eq!(delta_only, rows[2..].to_vec());
        assert!(snap.scan_fact("Nope", &[], &Partition::BOTH).is_err());
    }

    #[test]
    fn merge_delta_moves_rows() {
        let mut s = yield_store();
        s.insert_fact_rows("Yield", &[yrow(7, 3, 2, 1.0, 1.0), yrow(8, 3, 2, 2.0, 1.0)], Partition::Delta)
            .unwrap();
        let gen0 = s.snapshot().fact("Yield").unwrap().base_generation;
        assert_eq!(s.merge_delta("Yield").unwrap(), 2);
        let snap = s.snapshot();
        let fs = snap.fact("Yield").unwrap();
        assert_eq!((fs.base.len(), fs.delta.len()), (2, 0));
        assert!(fs.base_generation > gen0);
        assert_eq!(s.merge_delta("Yield").unwrap(), 0);
        assert_eq!(s.snapshot().fact("Yield").unwrap().base_generation, fs.base_generation);
    }
}
