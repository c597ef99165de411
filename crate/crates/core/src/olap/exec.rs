//! Query execution. The base partition is answered from the smallest fresh
//! cuboid that covers every grouped and filtered level, or by a scan; the
//! delta partition is always scanned. Partial aggregates are merged before
//! ratio measures are derived.

use std::collections::HashMap;

use crate::cube::{cuboid_lookup, CubeIndex, Cuboid};
use crate::keymap::{KeyMap, Packer};
use crate::predicate::Filter;
use crate::schema::{FactDef, Level, MeasureKind};
use crate::storage::{DimensionTable, FactPartition, Snapshot};
use crate::Value;

use super::grid::{Provenance, ResultGrid, Source};
use super::query::{validate_query, Query};
use super::OlapError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Ignore materialized cuboids and scan the base partition.
    pub force_scan: bool,
}

/// Row count and stored-measure sums of one group.
#[derive(Clone, Debug, PartialEq)]
struct Acc {
    count: u64,
    sums: Vec<f64>,
}

impl Acc {
    fn zero(n: usize) -> Self {
        Self {
            count: 0,
            sums: vec![0.0; n],
        }
    }

    fn add(&mut self, o: &Acc) {
        self.count += o.count;
        for (a, b) in self.sums.iter_mut().zip(&o.sums) {
            *a += b;
        }
    }
}

/// Groups sorted by key, keys distinct.
type Partial = Vec<(Vec<Value>, Acc)>;

/// Interns values into dense codes in first-seen order.
#[derive(Default)]
struct Interner {
    values: Vec<Value>,
    index: HashMap<Value, u32>,
}

impl Interner {
    fn code(&mut self, v: Value) -> u32 {
        if let Some(&c) = self.index.get(&v) {
            return c;
        }
        let c = self.values.len() as u32;
        self.index.insert(v.clone(), c);
        self.values.push(v);
        c
    }
}

fn level_value(table: &DimensionTable, row: usize, level: &Level) -> Value {
    table.level_value(row, level).unwrap_or(Value::Null)
}

/// Groups rows by packed code tuples, densely when the code space is small.
struct Grouper {
    packer: Option<Packer>,
    dense: Option<Vec<u32>>,
    hashed: HashMap<u128, u32>,
    tuples: HashMap<Vec<u32>, u32>,
    keys: Vec<Vec<u32>>,
    accs: Vec<Acc>,
    measures: usize,
}

impl Grouper {
    fn new(sizes: &[usize], rows: usize, measures: usize) -> Self {
        let packer = Packer::new(sizes);
        let dense = packer
            .as_ref()
            .filter(|p| p.space() <= (4 * rows as u128).max(4096))
            .map(|p| vec![u32::MAX; p.space() as usize]);
        Self {
            packer,
            dense,
            hashed: HashMap::new(),
            tuples: HashMap::new(),
            keys: Vec::new(),
            accs: Vec::new(),
            measures,
        }
    }

    #[inline]
    fn slot(&mut self, codes: &[u32]) -> usize {
        let fresh = self.accs.len() as u32;
        let slot = match (&self.packer, &mut self.dense) {
            (Some(p), Some(d)) => {
                let s = &mut d[p.pack(codes.iter().copied()) as usize];
                if *s == u32::MAX {
                    *s = fresh;
                }
                *s
            }
            (Some(p), None) => *self.hashed.entry(p.pack(codes.iter().copied())).or_insert(fresh),
            (None, _) => *self.tuples.entry(codes.to_vec()).or_insert(fresh),
        };
        if slot == fresh {
            self.keys.push(codes.to_vec());
            self.accs.push(Acc::zero(self.measures));
        }
        slot as usize
    }

    /// Groups in key order. Codes are replaced by their rank within each
    /// dictionary so tuples sort as plain integers.
    fn finish(self, dicts: &[Vec<Value>]) -> Partial {
        let mut sorted = Vec::with_capacity(dicts.len());
        let mut ranks = Vec::with_capacity(dicts.len());
        for d in dicts {
            let mut order: Vec<u32> = (0..d.len() as u32).collect();
            order.sort_unstable_by(|a, b| d[*a as usize].cmp(&d[*b as usize]));
            let mut rank = vec![0u32; d.len()];
            for (r, &c) in order.iter().enumerate() {
                rank[c as usize] = r as u32;
            }
            sorted.push(order.iter().map(|&c| d[c as usize].clone()).collect::<Vec<_>>());
            ranks.push(rank);
        }
        let mut groups: Vec<(Vec<u32>, Acc)> = self
            .keys
            .into_iter()
            .zip(self.accs)
            .map(|(k, acc)| (k.iter().zip(&ranks).map(|(c, r)| r[*c as usize]).collect(), acc))
            .collect();
        groups.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        groups
            .into_iter()
            .map(|(k, acc)| (k.iter().zip(&sorted).map(|(r, d)| d[*r as usize].clone()).collect(), acc))
            .collect()
    }
}

struct Prepared<'a> {
    fact: &'a FactDef,
    /// (fact dimension index, level, is key level) per group entry.
    groups: Vec<(usize, Level, bool)>,
}

fn prepare<'a>(snapshot: &'a Snapshot, q: &Query) -> Result<Prepared<'a>, OlapError> {
    let schema = snapshot.schema();
    validate_query(schema, q)?;
    let fact = schema.fact(&q.fact).expect("validated");
    let groups = q
        .group_by
        .iter()
        .map(|g| {
            let d = fact.dimension_index(&g.dimension).expect("validated");
            let key = schema.dimensions[&g.dimension].key_level() == g.level;
            (d, g.level.clone(), key)
        })
        .collect();
    Ok(Prepared { fact, groups })
}

fn scan(snapshot: &Snapshot, p: &Prepared, filters: &[Filter], part: &FactPartition) -> Result<Partial, OlapError> {
    let nm = part.measure_count();
    // keys passing every filter, per fact dimension
    let mut pass: Vec<Option<KeyMap<()>>> = (0..p.fact.dimensions.len()).map(|_| None).collect();
    for (d, dim) in p.fact.dimensions.iter().enumerate() {
        let fs: Vec<&Filter> = filters.iter().filter(|f| &f.dimension == dim).collect();
        if fs.is_empty() {
            continue;
        }
        let table = snapshot.dimension(dim)?;
        let keys = (0..table.len())
            .filter(|&r| fs.iter().all(|f| f.matches(&level_value(table, r, &f.level))))
            .map(|r| (table.key_at(r), ()));
        pass[d] = Some(KeyMap::build(keys));
    }
    let mut dicts = Vec::with_capacity(p.groups.len());
    let mut maps = Vec::with_capacity(p.groups.len());
    for (d, level, is_key) in &p.groups {
        let table = snapshot.dimension(&p.fact.dimensions[*d])?;
        let mut interner = Interner::default();
        let map = KeyMap::build((0..table.len()).map(|r| {
            let k = table.key_at(r);
            let v = if *is_key { Value::Int(k) } else { level_value(table, r, level) };
            (k, interner.code(v))
        }));
        dicts.push(interner.values);
        maps.push(map);
    }
    let filtered: Vec<(&[i64], &KeyMap<()>)> = pass
        .iter()
        .enumerate()
        .filter_map(|(d, m)| m.as_ref().map(|m| (part.keys(d), m)))
        .collect();
    let group_cols: Vec<&[i64]> = p.groups.iter().map(|(d, _, _)| part.keys(*d)).collect();
    let sizes: Vec<usize> = dicts.iter().map(Vec::len).collect();
    let mut grouper = Grouper::new(&sizes, part.len(), nm);
    let measures: Vec<&[f64]> = (0..nm).map(|m| part.measure(m)).collect();
    let mut codes = vec![0u32; group_cols.len()];
    for i in 0..part.len() {
        if !filtered.iter().all(|(col, m)| m.get(col[i]).is_some()) {
            continue;
        }
        for (slot, (col, map)) in codes.iter_mut().zip(group_cols.iter().zip(&maps)) {
            *slot = map.get(col[i]).expect("fact keys resolve to dimension members");
        }
        let s = grouper.slot(&codes);
        let acc = &mut grouper.accs[s];
        acc.count += 1;
        for (sum, col) in acc.sums.iter_mut().zip(&measures) {
            *sum += col[i];
        }
    }
    Ok(grouper.finish(&dicts))
}

/// Maps one cuboid column's dictionary onto a requested level.
fn translate(snapshot: &Snapshot, dim: &str, have: &Option<Level>, want: &Level, dict: &[Value]) -> Result<Vec<Value>, OlapError> {
    let table = snapshot.dimension(dim)?;
    let key_level = table.def().key_level();
    Ok(dict
        .iter()
        .map(|v| match have {
            None if *want == key_level => v.clone(),
            None => table
                .position(v.as_i64().expect("key column"))
                .map_or(Value::Null, |r| level_value(table, r, want)),
            Some(l) => want.derive_value(l, v),
        })
        .collect())
}

fn from_cuboid(snapshot: &Snapshot, p: &Prepared, filters: &[Filter], cuboid: &Cuboid) -> Result<Partial, OlapError> {
    let id = cuboid.id();
    let col_of = |dim: &str| id.group.iter().position(|g| g.dimension == dim).expect("cuboid covers request");
    // per cuboid column: dictionary codes that pass the filters
    let mut pass: Vec<Option<Vec<bool>>> = vec![None; id.group.len()];
    for f in filters {
        let c = col_of(&f.dimension);
        let values = translate(snapshot, &f.dimension, &id.group[c].level, &f.level, cuboid.dictionary(c))?;
        let ok: Vec<bool> = values.iter().map(|v| f.matches(v)).collect();
        pass[c] = Some(match pass[c].take() {
            Some(prev) => prev.iter().zip(&ok).map(|(a, b)| *a && *b).collect(),
            None => ok,
        });
    }
    let mut dicts = Vec::new();
    let mut recode: Vec<(usize, Vec<u32>)> = Vec::new();
    for (d, level, _) in &p.groups {
        let dim = &p.fact.dimensions[*d];
        let c = col_of(dim);
        let values = translate(snapshot, dim, &id.group[c].level, level, cuboid.dictionary(c))?;
        let mut interner = Interner::default();
        let codes = values.into_iter().map(|v| interner.code(v)).collect();
        dicts.push(interner.values);
        recode.push((c, codes));
    }
    let nm = cuboid.measure_count();
    let sizes: Vec<usize> = dicts.iter().map(Vec::len).collect();
    let mut grouper = Grouper::new(&sizes, cuboid.len(), nm);
    let mut codes = vec![0u32; recode.len()];
    let filtered: Vec<(usize, &Vec<bool>)> = pass.iter().enumerate().filter_map(|(c, m)| m.as_ref().map(|m| (c, m))).collect();
    for e in 0..cuboid.len() {
        if cuboid.counts()[e] == 0 {
            continue;
        }
        if !filtered.iter().all(|(c, ok)| ok[cuboid.codes(*c)[e] as usize]) {
            continue;
        }
        for (slot, (c, map)) in codes.iter_mut().zip(&recode) {
            *slot = map[cuboid.codes(*c)[e] as usize];
        }
        let s = grouper.slot(&codes);
        let acc = &mut grouper.accs[s];
        acc.count += cuboid.counts()[e];
        for (m, sum) in acc.sums.iter_mut().enumerate() {
            *sum += cuboid.sums(m)[e];
        }
    }
    Ok(grouper.finish(&dicts))
}

/// Merges two key-sorted partials, adding the accumulators of shared keys.
fn merge(a: Partial, b: Partial) -> Partial {
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let (mut a, mut b) = (a.into_iter().peekable(), b.into_iter().peekable());
    loop {
        let next = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => match x.0.cmp(&y.0) {
                std::cmp::Ordering::Less => a.next(),
                std::cmp::Ordering::Greater => b.next(),
                std::cmp::Ordering::Equal => {
                    let (k, mut acc) = a.next().expect("peeked");
                    acc.add(&b.next().expect("peeked").1);
                    Some((k, acc))
                }
            },
            (Some(_), None) => a.next(),
            (None, Some(_)) => b.next(),
            (None, None) => break,
        };
        out.extend(next);
    }
    out
}

/// Measure values of one group, in query order. Ratios over a zero
/// denominator are `None`.
fn finalize(fact: &FactDef, measures: &[String], acc: &Acc) -> Vec<Option<Value>> {
    let raw = |name: &str| -> f64 {
        let m = fact.measure(name).expect("validated measure");
        match m.kind {
            MeasureKind::Count => acc.count as f64,
            _ => acc.sums[fact.stored_measure_index(name).expect("additive")],
        }
    };
    measures
        .iter()
        .map(|name| {
            let m = fact.measure(name).expect("validated measure");
            match &m.kind {
                MeasureKind::Count => Some(Value::Int(acc.count as i64)),
                MeasureKind::Additive => Some(Value::Dec(raw(name))),
                MeasureKind::Ratio { numerator, denominator } => {
                    let den = raw(denominator);
                    (den != 0.0).then(|| Value::Dec(raw(numerator) / den))
                }
            }
        })
        .collect()
}

fn grid(q: &Query, fact: &FactDef, mut groups: Partial, provenance: Provenance) -> ResultGrid {
    if q.group_by.is_empty() && groups.is_empty() {
        groups.push((Vec::new(), Acc::zero(fact.stored_measures().count())));
    }
    let cells = groups
        .into_iter()
        .map(|(k, acc)| {
            let values = finalize(fact, &q.measures, &acc);
            (k, values)
        })
        .collect();
    let axes: Vec<String> = q.group_by.iter().map(|g| g.to_string()).collect();
    let (rows, cols) = q.axes();
    let names = |v: Vec<super::GroupBy>| v.iter().map(|g| g.to_string()).collect::<Vec<_>>();
    ResultGrid::assemble(cells, &axes, &names(rows), &names(cols), q.measures.clone(), provenance)
}

/// Answers `q` over base ∪ delta. `cube` is consulted only when it belongs
/// to the query's fact and is not stale.
pub fn execute(snapshot: &Snapshot, cube: Option<&CubeIndex>, q: &Query, opts: ExecOptions) -> Result<ResultGrid, OlapError> {
    let p = prepare(snapshot, q)?;
    let fs = snapshot.fact(&q.fact)?;
    let usable = cube.filter(|c| !opts.force_scan && c.fact() == q.fact && !c.is_stale(snapshot));
    let request: Vec<(String, Level)> = q
        .group_by
        .iter()
        .map(|g| (g.dimension.clone(), g.level.clone()))
        .chain(q.filters.iter().map(|f| (f.dimension.clone(), f.level.clone())))
        .collect();
    let hit = usable.and_then(|c| cuboid_lookup(c, &request).and_then(|id| c.cuboid(id)));
    let (partial, provenance) = match hit {
        Some(cuboid) => (
            from_cuboid(snapshot, &p, &q.filters, cuboid)?,
            Provenance {
                source: Source::Cuboid,
                cuboid: Some(cuboid.id().to_string()),
                delta_rows_scanned: fs.delta.len(),
                base_rows_covered: cuboid.len(),
            },
        ),
        None => (
            scan(snapshot, &p, &q.filters, &fs.base)?,
            Provenance {
                source: Source::Scan,
                cuboid: None,
                delta_rows_scanned: fs.delta.len(),
                base_rows_covered: fs.base.len(),
            },
        ),
    };
    let partial = merge(partial, scan(snapshot, &p, &q.filters, &fs.delta)?);
    Ok(grid(q, p.fact, partial, provenance))
}

/// Reference answer: joins every fact row with its dimension rows and
/// groups in one pass, ignoring cubes and all scan shortcuts.
pub fn oracle_execute(snapshot: &Snapshot, q: &Query) -> Result<ResultGrid, OlapError> {
    validate_query(snapshot.schema(), q)?;
    let schema = snapshot.schema();
    let fact = schema.fact(&q.fact).expect("validated");
    let fs = snapshot.fact(&q.fact)?;

    let mut joined: HashMap<&str, HashMap<i64, Vec<Value>>> = HashMap::new();
    let needed = q.group_by.iter().map(|g| g.dimension.as_str()).chain(q.filters.iter().map(|f| f.dimension.as_str()));
    for dim in needed {
        if joined.contains_key(dim) {
            continue;
        }
        let table = snapshot.dimension(dim)?;
        let rows = (0..table.len()).map(|r| (table.key_at(r), table.row(r).0)).collect();
        joined.insert(dim, rows);
    }
    // (fact key column, joined rows, attribute index, level) per reference
    fn resolve<'a>(
        schema: &crate::schema::ConstellationSchema,
        fact: &FactDef,
        joined: &'a HashMap<&str, HashMap<i64, Vec<Value>>>,
        dim: &str,
        level: &'a Level,
    ) -> (usize, &'a HashMap<i64, Vec<Value>>, usize, &'a Level) {
        let column = fact.dimension_index(dim).expect("validated");
        let attr = schema.dimensions[dim].attribute_index(level.attribute()).expect("validated level");
        (column, &joined[dim], attr, level)
    }
    let value_at = |(column, rows, attr, level): &(usize, &HashMap<i64, Vec<Value>>, usize, &Level), keys: &[i64]| -> Value {
        let v = &rows[&keys[*column]][*attr];
        match level {
            Level::Attribute(_) => v.clone(),
            Level::Month(_) => v.month_of(),
            Level::Year(_) => v.year_of(),
        }
    };
    let filters: Vec<_> = q.filters.iter().map(|f| (f, resolve(schema, fact, &joined, &f.dimension, &f.level))).collect();
    let entries: Vec<_> = q.group_by.iter().map(|g| resolve(schema, fact, &joined, &g.dimension, &g.level)).collect();
    let nm = fact.stored_measures().count();
    let mut groups: HashMap<Vec<Value>, (u64, Vec<f64>)> = HashMap::new();
    for part in [&fs.base, &fs.delta] {
        for i in 0..part.len() {
            let row = part.row(i);
            if !filters.iter().all(|(f, r)| f.matches(&value_at(r, &row.keys))) {
                continue;
            }
            let k: Vec<Value> = entries.iter().map(|r| value_at(r, &row.keys)).collect();
            let e = groups.entry(k).or_insert_with(|| (0, vec![0.0; nm]));
            e.0 += 1;
            for (s, m) in e.1.iter_mut().zip(&row.measures) {
                *s += m;
            }
        }
    }
    let mut partial: Partial = groups
        .into_iter()
        .map(|(k, (count, sums))| (k, Acc { count, sums }))
        .collect();
    partial.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let provenance = Provenance {
        source: Source::Oracle,
        cuboid: None,
        delta_rows_scanned: fs.delta.len(),
        base_rows_covered: fs.base.len(),
    };
    Ok(grid(q, fact, partial, provenance))
}
