//! MOLAP cuboid lattice over a fact's base partition.
//!
//! A plan enumerates every subset of the fact's dimensions at key level plus
//! one single-dimension cuboid per declared hierarchy level. Each cuboid is
//! aggregated straight from base rows into dictionary-encoded columns kept in
//! lexicographic order of their group values, so a parallel build is
//! byte-identical to a sequential one.

mod export;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keymap::{KeyMap, Packer};
use crate::schema::{ConstellationSchema, FactDef, Level, MeasureKind};
use crate::storage::{FactPartition, Snapshot, StorageError, Store};
use crate::Value;

pub use export::{canonical_csv, export_cube, export_file_name};

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("invalid cube policy: {0}")]
    InvalidPolicy(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<StorageError> for CubeError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::UnknownTable(t) => CubeError::UnknownTable(t),
            StorageError::Io { path, source } => CubeError::Io { path, source },
            other => CubeError::InvalidPolicy(other.to_string()),
        }
    }
}

/// Materialization policy. Serialized as `"full"` or `{"cap": N}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubePolicy {
    Full,
    /// Skip cuboids whose estimated group count exceeds the cap.
    Cap(u64),
}

impl fmt::Display for CubePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CubePolicy::Full => f.write_str("full"),
            CubePolicy::Cap(n) => write!(f, "cap:{n}"),
        }
    }
}

impl std::str::FromStr for CubePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" => Ok(CubePolicy::Full),
            other => other
                .strip_prefix("cap:")
                .and_then(|n| n.trim().parse().ok())
                .map(CubePolicy::Cap)
                .ok_or_else(|| format!("unknown cube policy `{other}` (expected full or cap:N)")),
        }
    }
}

/// One grouping column of a cuboid. `level: None` groups by the dimension key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupLevel {
    pub dimension: String,
    pub level: Option<Level>,
}

impl GroupLevel {
    pub fn key(dimension: impl Into<String>) -> Self {
        Self {
            dimension: dimension.into(),
            level: None,
        }
    }

    pub fn at(dimension: impl Into<String>, level: Level) -> Self {
        Self {
            dimension: dimension.into(),
            level: Some(level),
        }
    }
}

impl fmt::Display for GroupLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.level {
            None => f.write_str(&self.dimension),
            Some(l) => write!(f, "{}@{l}", self.dimension),
        }
    }
}

/// A fact plus a group set whose members follow the fact's dimension order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CuboidId {
    pub fact: String,
    pub group: Vec<GroupLevel>,
}

impl CuboidId {
    pub fn apex(fact: impl Into<String>) -> Self {
        Self {
            fact: fact.into(),
            group: Vec::new(),
        }
    }

    pub fn is_apex(&self) -> bool {
        self.group.is_empty()
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &str> {
        self.group.iter().map(|g| g.dimension.as_str())
    }
}

impl fmt::Display for CuboidId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.", self.fact)?;
        if self.group.is_empty() {
            return f.write_str("apex");
        }
        for (i, g) in self.group.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

impl PartialOrd for CuboidId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic by display form.
impl Ord for CuboidId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

impl Serialize for CuboidId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkippedCuboid {
    pub cuboid: CuboidId,
    pub estimate: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatticePlan {
    pub fact: String,
    pub policy: CubePolicy,
    pub candidates: Vec<CuboidId>,
    pub skipped: Vec<SkippedCuboid>,
}

fn fact_def<'a>(schema: &'a ConstellationSchema, fact: &str) -> Result<&'a FactDef, CubeError> {
    schema
        .fact(fact)
        .ok_or_else(|| CubeError::UnknownTable(fact.to_string()))
}

/// Every cuboid the lattice scope admits, smallest group sets first.
pub fn lattice_scope(schema: &ConstellationSchema, fact: &str) -> Result<Vec<CuboidId>, CubeError> {
    let def = fact_def(schema, fact)?;
    let n = def.dimensions.len();
    let mut out = Vec::with_capacity((1usize << n) + n);
    for mask in 0u64..(1u64 << n) {
        let group = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| GroupLevel::key(def.dimensions[i].clone()))
            .collect();
        out.push(CuboidId {
            fact: fact.to_string(),
            group,
        });
    }
    for d in &def.dimensions {
        let dim = &schema.dimensions[d];
        for level in dim.drill_path().into_iter().skip(1) {
            out.push(CuboidId {
                fact: fact.to_string(),
                group: vec![GroupLevel::at(d.clone(), level)],
            });
        }
    }
    out.sort_by_cached_key(|c| (c.group.len(), c.to_string()));
    Ok(out)
}

/// Distinct values of one grouping column over the base rows, as a sorted
/// dictionary plus key→code map.
struct LevelColumn {
    dict: Vec<Value>,
    codes: Vec<u32>,
}

fn level_column(snapshot: &Snapshot, base: &FactPartition, fact: &FactDef, g: &GroupLevel) -> Result<LevelColumn, CubeError> {
    let d = fact
        .dimension_index(&g.dimension)
        .ok_or_else(|| CubeError::UnknownTable(g.dimension.clone()))?;
    let keys = base.keys(d);
    let distinct: BTreeSet<i64> = keys.iter().copied().collect();
    let table = snapshot.dimension(&g.dimension)?;
    let value_of = |k: i64| -> Value {
        match &g.level {
            None => Value::Int(k),
            Some(level) => table
                .position(k)
                .and_then(|r| table.level_value(r, level))
                .unwrap_or(Value::Null),
        }
    };
    let per_key: Vec<(i64, Value)> = distinct.iter().map(|&k| (k, value_of(k))).collect();
    let dict: Vec<Value> = per_key
        .iter()
        .map(|(_, v)| v.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let code_of: HashMap<&Value, u32> = dict.iter().enumerate().map(|(i, v)| (v, i as u32)).collect();
    let map = KeyMap::build(per_key.iter().map(|(k, v)| (*k, code_of[v])));
    let codes = keys.iter().map(|k| map.get(*k).expect("key seen")).collect();
    Ok(LevelColumn { dict, codes })
}

/// Plans the lattice for `fact`. Under a cap, each cuboid's group count is
/// estimated as the product of its columns' distinct counts over the base
/// partition, clamped at the base row count; cuboids above the cap are
/// skipped. The apex is never skipped.
pub fn plan_lattice(snapshot: &Snapshot, fact: &str, policy: CubePolicy) -> Result<LatticePlan, CubeError> {
    if policy == CubePolicy::Cap(0) {
        return Err(CubeError::InvalidPolicy("cap must be at least 1".into()));
    }
    let schema = snapshot.schema();
    let scope = lattice_scope(schema, fact)?;
    let mut plan = LatticePlan {
        fact: fact.to_string(),
        policy,
        candidates: Vec::new(),
        skipped: Vec::new(),
    };
    let CubePolicy::Cap(cap) = policy else {
        plan.candidates = scope;
        return Ok(plan);
    };
    let def = fact_def(schema, fact)?;
    let base = &snapshot.fact(fact)?.base;
    let mut distinct: HashMap<GroupLevel, u64> = HashMap::new();
    for c in &scope {
        for g in &c.group {
            if !distinct.contains_key(g) {
                let col = level_column(snapshot, base, def, g)?;
                distinct.insert(g.clone(), col.dict.len() as u64);
            }
        }
    }
    for c in scope {
        let estimate = if c.is_apex() {
            1
        } else {
            c.group
                .iter()
                .fold(1u64, |acc, g| acc.saturating_mul(distinct[g]))
                .min(base.len() as u64)
        };
        if estimate > cap && !c.is_apex() {
            plan.skipped.push(SkippedCuboid { cuboid: c, estimate });
        } else {
            plan.candidates.push(c);
        }
    }
    Ok(plan)
}

/// Aggregated entries of one cuboid, sorted by group values.
#[derive(Clone, Debug, PartialEq)]
pub struct Cuboid {
    id: CuboidId,
    dicts: Vec<Vec<Value>>,
    codes: Vec<Vec<u32>>,
    counts: Vec<u64>,
    sums: Vec<Vec<f64>>,
}

impl Cuboid {
    pub fn id(&self) -> &CuboidId {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sorted distinct values of group column `col`.
    pub fn dictionary(&self, col: usize) -> &[Value] {
        &self.dicts[col]
    }

    /// Per-entry dictionary codes of group column `col`.
    pub fn codes(&self, col: usize) -> &[u32] {
        &self.codes[col]
    }

    pub fn group_values(&self, entry: usize) -> Vec<Value> {
        (0..self.dicts.len())
            .map(|c| self.dicts[c][self.codes[c][entry] as usize].clone())
            .collect()
    }

    /// Number of base rows folded into each entry.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Per-entry sums of the fact's `m`-th stored measure.
    pub fn sums(&self, m: usize) -> &[f64] {
        &self.sums[m]
    }

    pub fn measure_count(&self) -> usize {
        self.sums.len()
    }
}

/// Group spaces up to this multiple of the row count aggregate into flat arrays.
const DENSE_FACTOR: u128 = 4;

fn aggregate(id: &CuboidId, columns: &[&LevelColumn], base: &FactPartition) -> Cuboid {
    let rows = base.len();
    let nm = base.measure_count();
    let sizes: Vec<usize> = columns.iter().map(|c| c.dict.len()).collect();
    let mut counts: Vec<u64> = Vec::new();
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); nm];
    let mut entry_codes: Vec<Vec<u32>> = vec![Vec::new(); columns.len()];
    let packer = Packer::new(&sizes);
    let tuple = |i: usize| columns.iter().map(move |c| c.codes[i]);

    match packer {
        Some(p) if p.space() <= (DENSE_FACTOR * rows as u128).max(4096) => {
            let space = p.space() as usize;
            let mut dense_counts = vec![0u64; space];
            let mut dense_sums = vec![vec![0f64; space]; nm];
            for i in 0..rows {
                let slot = p.pack(tuple(i)) as usize;
                dense_counts[slot] += 1;
                for (m, acc) in dense_sums.iter_mut().enumerate() {
                    acc[slot] += base.measure(m)[i];
                }
            }
            for slot in 0..space {
                if dense_counts[slot] == 0 {
                    continue;
                }
                for (col, code) in p.unpack(slot as u128).into_iter().enumerate() {
                    entry_codes[col].push(code);
                }
                counts.push(dense_counts[slot]);
                for m in 0..nm {
                    sums[m].push(dense_sums[m][slot]);
                }
            }
        }
        Some(p) => {
            let mut index: HashMap<u128, usize> = HashMap::new();
            let mut keys: Vec<u128> = Vec::new();
            let mut c: Vec<u64> = Vec::new();
            let mut s: Vec<Vec<f64>> = vec![Vec::new(); nm];
            for i in 0..rows {
                let k = p.pack(tuple(i));
                let slot = *index.entry(k).or_insert_with(|| {
                    keys.push(k);
                    c.push(0);
                    s.iter_mut().for_each(|v| v.push(0.0));
                    keys.len() - 1
                });
                c[slot] += 1;
                for (m, acc) in s.iter_mut().enumerate() {
                    acc[slot] += base.measure(m)[i];
                }
            }
            let mut order: Vec<usize> = (0..keys.len()).collect();
            order.sort_unstable_by_key(|&j| keys[j]);
            for j in order {
                for (col, code) in p.unpack(keys[j]).into_iter().enumerate() {
                    entry_codes[col].push(code);
                }
                counts.push(c[j]);
                for m in 0..nm {
                    sums[m].push(s[m][j]);
                }
            }
        }
        None => {
            let mut groups: BTreeMap<Vec<u32>, (u64, Vec<f64>)> = BTreeMap::new();
            for i in 0..rows {
                let e = groups.entry(tuple(i).collect()).or_insert_with(|| (0, vec![0.0; nm]));
                e.0 += 1;
                for (m, acc) in e.1.iter_mut().enumerate() {
                    *acc += base.measure(m)[i];
                }
            }
            for (k, (n, s)) in groups {
                for (col, code) in k.into_iter().enumerate() {
                    entry_codes[col].push(code);
                }
                counts.push(n);
                for m in 0..nm {
                    sums[m].push(s[m]);
                }
            }
        }
    }
    if id.is_apex() && counts.is_empty() {
        counts.push(0);
        sums.iter_mut().for_each(|s| s.push(0.0));
    }
    Cuboid {
        id: id.clone(),
        dicts: columns.iter().map(|c| c.dict.clone()).collect(),
        codes: entry_codes,
        counts,
        sums,
    }
}

/// Materialized cuboids of one fact, valid for one base-partition generation.
#[derive(Clone, Debug)]
pub struct CubeIndex {
    schema: Arc<ConstellationSchema>,
    plan: LatticePlan,
    built_at_epoch: u64,
    base_generation: u64,
    base_rows: usize,
    cuboids: Vec<Cuboid>,
    by_id: HashMap<CuboidId, usize>,
}

impl CubeIndex {
    pub fn fact(&self) -> &str {
        &self.plan.fact
    }

    pub fn plan(&self) -> &LatticePlan {
        &self.plan
    }

    pub fn schema(&self) -> &Arc<ConstellationSchema> {
        &self.schema
    }

    pub fn built_at_epoch(&self) -> u64 {
        self.built_at_epoch
    }

    pub fn base_generation(&self) -> u64 {
        self.base_generation
    }

    pub fn base_rows(&self) -> usize {
        self.base_rows
    }

    /// Cuboids in plan order.
    pub fn cuboids(&self) -> &[Cuboid] {
        &self.cuboids
    }

    pub fn cuboid(&self, id: &CuboidId) -> Option<&Cuboid> {
        self.by_id.get(id).map(|&i| &self.cuboids[i])
    }

    pub fn apex(&self) -> &Cuboid {
        self.cuboid(&CuboidId::apex(self.fact())).expect("apex is always planned")
    }

    /// True when the fact's base partition changed after the build.
    pub fn is_stale(&self, snapshot: &Snapshot) -> bool {
        snapshot
            .fact(self.fact())
            .map_or(true, |f| f.base_generation != self.base_generation)
    }

    pub fn total_entries(&self) -> usize {
        self.cuboids.iter().map(Cuboid::len).sum()
    }
}

/// Aggregates every planned cuboid from the base partition of `snapshot`.
/// Delta rows are never included. `parallel` spreads cuboids over the rayon
/// pool; output is identical either way.
pub fn build_cube(snapshot: &Snapshot, plan: &LatticePlan, parallel: bool) -> Result<CubeIndex, CubeError> {
    let schema = snapshot.schema().clone();
    let def = fact_def(&schema, &plan.fact)?;
    let fs = snapshot.fact(&plan.fact)?;
    let base = &fs.base;

    let mut needed: Vec<&GroupLevel> = plan.candidates.iter().flat_map(|c| &c.group).collect();
    needed.sort();
    needed.dedup();
    let build_col = |g: &&GroupLevel| level_column(snapshot, base, def, g).map(|c| ((*g).clone(), c));
    let columns: HashMap<GroupLevel, LevelColumn> = if parallel {
        needed.par_iter().map(build_col).collect::<Result<_, _>>()?
    } else {
        needed.iter().map(build_col).collect::<Result<_, _>>()?
    };

    let one = |id: &CuboidId| {
        let cols: Vec<&LevelColumn> = id.group.iter().map(|g| &columns[g]).collect();
        aggregate(id, &cols, base)
    };
    let cuboids: Vec<Cuboid> = if parallel {
        plan.candidates.par_iter().map(one).collect()
    } else {
        plan.candidates.iter().map(one).collect()
    };
    let by_id = cuboids.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
    Ok(CubeIndex {
        schema,
        plan: plan.clone(),
        built_at_epoch: snapshot.epoch(),
        base_generation: fs.base_generation,
        base_rows: base.len(),
        cuboids,
        by_id,
    })
}

/// Whether a cuboid column at `have` can produce values at `want` for the
/// same dimension: the key answers any level through the dimension row; a
/// stored level answers itself and its date parts.
pub fn level_covers(have: &Option<Level>, want: &Level, key: &str) -> bool {
    match have {
        None => true,
        Some(l) => *want != Level::attr(key) && want.derivable_from_value(l),
    }
}

/// The smallest materialized cuboid able to answer every `(dimension,
/// level)` in `request`; ties go to the lexicographically smaller id. The
/// caller is responsible for checking staleness.
pub fn cuboid_lookup<'a>(cube: &'a CubeIndex, request: &[(String, Level)]) -> Option<&'a CuboidId> {
    let schema = &cube.schema;
    cube.cuboids
        .iter()
        .filter(|c| {
            request.iter().all(|(dim, level)| {
                let Some(d) = schema.dimension(dim) else {
                    return false;
                };
                c.id.group
                    .iter()
                    .any(|g| g.dimension == *dim && level_covers(&g.level, level, &d.key))
            })
        })
        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.id.cmp(&b.id)))
        .map(|c| &c.id)
}

/// Moves the fact's delta rows into base. Cubes built earlier become stale
/// because the base generation changes.
pub fn merge_delta(store: &mut Store, fact: &str) -> Result<usize, CubeError> {
    Ok(store.merge_delta(fact)?)
}

/// Column names of a cuboid export, in order: group columns, then the
/// fact's count and additive measures in declaration order.
pub fn export_columns(schema: &ConstellationSchema, id: &CuboidId) -> Vec<String> {
    let def = &schema.facts[&id.fact];
    let mut cols: Vec<String> = id
        .group
        .iter()
        .map(|g| match &g.level {
            None => schema.dimensions[&g.dimension].key.clone(),
            Some(l) => l.to_string(),
        })
        .collect();
    cols.extend(
        def.measures
            .iter()
            .filter(|m| !matches!(m.kind, MeasureKind::Ratio { .. }))
            .map(|m| m.name.clone()),
    );
    cols
}
