//! Warehouse quality scoring.
//!
//! Five measurable criteria are scored per table and pooled overall:
//!
//! * completeness: non-null attribute cells of real dimension members (the
//!   UNKNOWN member is excluded) plus fact measure cells.
//! * referential_integrity: fact keys that name a real member (key 0 means
//!   the source reference could not be resolved) and non-null
//!   dimension-to-dimension links whose target member exists.
//! * duplicates: rows rejected or quarantined as duplicates, from load history.
//! * consistency: non-null values passing range checks. Decimals must be
//!   finite, dates within 1900-01-01..=2100-12-31, fact measures finite and
//!   non-negative.
//! * timeliness: share of fact rows still in the delta partition.
//!
//! Empty denominators score 1.0.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use crate::schema::UNKNOWN_KEY;
use crate::storage::{Partition, Snapshot};
use crate::Value;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableQuality {
    pub completeness: f64,
    pub referential_integrity: f64,
    pub duplicates: u64,
    pub consistency: f64,
    /// Only defined for fact tables.
    pub timeliness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverallQuality {
    pub completeness: f64,
    pub referential_integrity: f64,
    pub duplicates: u64,
    pub consistency: f64,
    pub timeliness: f64,
    pub loaded: u64,
    pub rejected: u64,
    pub quarantined: u64,
}

/// Raw numerators and denominators behind one table's fractions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QualityCounts {
    pub cells: u64,
    pub non_null: u64,
    pub references: u64,
    pub resolved: u64,
    pub checked: u64,
    pub consistent: u64,
    pub fact_rows: u64,
    pub delta_rows: u64,
}

impl QualityCounts {
    fn add(&mut self, o: &QualityCounts) {
        self.cells += o.cells;
        self.non_null += o.non_null;
        self.references += o.references;
        self.resolved += o.resolved;
        self.checked += o.checked;
        self.consistent += o.consistent;
        self.fact_rows += o.fact_rows;
        self.delta_rows += o.delta_rows;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub tables: BTreeMap<String, TableQuality>,
    pub overall: OverallQuality,
    #[serde(skip)]
    pub counts: BTreeMap<String, QualityCounts>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn date_in_range(d: NaiveDate) -> bool {
    let lo = NaiveDate::from_ymd_opt(1900, 1, 1).expect("valid");
    let hi = NaiveDate::from_ymd_opt(2100, 12, 31).expect("valid");
    (lo..=hi).contains(&d)
}

fn value_consistent(v: &Value) -> bool {
    match v {
        Value::Dec(x) => x.is_finite(),
        Value::Date(d) => date_in_range(*d),
        _ => true,
    }
}

/// Scores every table of `snapshot` by a full walk.
pub fn quality_report(snapshot: &Snapshot) -> QualityReport {
    let schema = snapshot.schema();
    let mut counts: BTreeMap<String, QualityCounts> = BTreeMap::new();

    for table in snapshot.dimensions() {
        let def = table.def();
        let mut c = QualityCounts::default();
        let links: Vec<(usize, _)> = def
            .links
            .iter()
            .map(|l| {
                let attr = def.attribute_index(&l.attribute).expect("validated link");
                (attr, snapshot.dimension(&l.target).expect("validated link"))
            })
            .collect();
        for r in 0..table.len() {
            if table.key_at(r) == UNKNOWN_KEY {
                continue;
            }
            for a in 0..def.attributes.len() {
                let v = table.value(r, a);
                c.cells += 1;
                if !v.is_null() {
                    c.non_null += 1;
                    c.checked += 1;
                    c.consistent += value_consistent(&v) as u64;
                }
            }
            for (attr, target) in &links {
                if let Some(k) = table.value(r, *attr).as_i64() {
                    c.references += 1;
                    c.resolved += (k != UNKNOWN_KEY && target.contains(k)) as u64;
                }
            }
        }
        counts.insert(def.name.clone(), c);
    }

    for def in schema.facts.values() {
        let fs = snapshot.fact(&def.name).expect("schema fact");
        let mut c = QualityCounts::default();
        for p in Partition::BOTH {
            let part = fs.partition(p);
            for d in 0..part.dimension_count() {
                let keys = part.keys(d);
                c.references += keys.len() as u64;
                c.resolved += keys.iter().filter(|&&k| k != UNKNOWN_KEY).count() as u64;
            }
            for m in 0..part.measure_count() {
                let col = part.measure(m);
                c.cells += col.len() as u64;
                c.non_null += col.len() as u64;
                c.checked += col.len() as u64;
                c.consistent += col.iter().filter(|x| x.is_finite() && **x >= 0.0).count() as u64;
            }
        }
        c.fact_rows = fs.total_rows() as u64;
        c.delta_rows = fs.delta.len() as u64;
        counts.insert(def.name.clone(), c);
    }

    let history = snapshot.history();
    let dup = |t: &str| history.get(t).map_or(0, |h| h.duplicates);
    let tables = counts
        .iter()
        .map(|(name, c)| {
            let is_fact = schema.fact(name).is_some();
            let q = TableQuality {
                completeness: ratio(c.non_null, c.cells),
                referential_integrity: ratio(c.resolved, c.references),
                duplicates: dup(name),
                consistency: ratio(c.consistent, c.checked),
                timeliness: is_fact.then(|| ratio(c.delta_rows, c.fact_rows)),
            };
            (name.clone(), q)
        })
        .collect();

    let mut total = QualityCounts::default();
    for c in counts.values() {
        total.add(c);
    }
    let overall = OverallQuality {
        completeness: ratio(total.non_null, total.cells),
        referential_integrity: ratio(total.resolved, total.references),
        duplicates: history.values().map(|h| h.duplicates).sum(),
        consistency: ratio(total.consistent, total.checked),
        timeliness: ratio(total.delta_rows, total.fact_rows),
        loaded: history.values().map(|h| h.inserted).sum(),
        rejected: history.values().map(|h| h.rejected).sum(),
        quarantined: history.values().map(|h| h.quarantined).sum(),
    };
    QualityReport {
        tables,
        overall,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_schema;
    use crate::storage::{DimensionRow, FactRow, Store};

    fn keyed(s: &Store, dim: &str, id: i64) -> DimensionRow {
        let def = s.schema().dimension(dim).unwrap();
        let mut v = vec![Value::Null; def.attributes.len()];
        v[def.key_index()] = Value::Int(id);
        DimensionRow(v)
    }

    #[test]
    fn empty_store_is_vacuously_clean() {
        let mut s = Store::new(builtin_schema()).unwrap();
        let q = quality_report(&s.snapshot());
        let o = &q.overall;
        for f in [o.completeness, o.referential_integrity, o.consistency, o.timeliness] {
            assert_eq!(f, 1.0);
        }
        assert_eq!((o.duplicates, o.loaded, o.rejected, o.quarantined), (0, 0, 0, 0));
        assert_eq!(q.tables.len(), 23);
        assert_eq!(q.tables["Crop"].timeliness, None);
        assert_eq!(q.tables["Yield"].timeliness, Some(1.0));
    }

    #[test]
    fn completeness_counts_nulls() {
        // Maintenance has 4 attributes; 25 rows give 100 cells.
        let mut s = Store::new(builtin_schema()).unwrap();
        let rows: Vec<_> = (1..=25)
            .map(|i| {
                DimensionRow(vec![
                    Value::Int(i),
                    if i <= 5 { Value::Null } else { Value::Dec(1.0) },
                    Value::text("x"),
                    Value::Date(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()),
                ])
            })
            .collect();
        s.insert_dimension_rows("Maintenance", &rows).unwrap();
        let q = quality_report(&s.snapshot());
        assert_eq!(q.counts["Maintenance"].cells, 100);
        assert_eq!(q.tables["Maintenance"].completeness, 0.95);
    }

    #[test]
    fn dangling_soil_links() {
        let mut s = Store::new(builtin_schema()).unwrap();
        let fields: Vec<_> = (1..=4).map(|i| keyed(&s, "Field", i)).collect();
        s.insert_dimension_rows("Field", &fields).unwrap();
        let (n, k) = (10, 3);
        let soils: Vec<_> = (1..=n)
            .map(|i| {
                let mut r = keyed(&s, "Soil", i);
                r.0[1] = Value::Int(if i <= k { 100 + i } else { 1 + i % 4 });
                r
            })
            .collect();
        s.insert_dimension_rows("Soil", &soils).unwrap();
        let q = quality_report(&s.snapshot());
        // oracle: brute-force walk over the inserted rows
        let dangling = soils
            .iter()
            .filter(|r| !(1..=4).contains(&r.0[1].as_i64().unwrap()))
            .count() as i64;
        assert_eq!(dangling, k);
        assert_eq!(q.tables["Soil"].referential_integrity, (n - k) as f64 / n as f64);
        // Field links are all null, so nothing is counted
        assert_eq!(q.counts["Field"].references, 0);
    }

    #[test]
    fn fact_metrics() {
        let mut s = Store::new(builtin_schema()).unwrap();
        for dim in ["Crop", "Field", "Farmer"] {
            let r = keyed(&s, dim, 1);
            s.insert_dimension_rows(dim, &[r]).unwrap();
        }
        let row = |c, q| FactRow {
            keys: vec![c, 1, 1],
            measures: vec![q, 1.0],
        };
        s.insert_fact_rows("Yield", &[row(1, 2.0)], Partition::Base).unwrap();
        s.insert_fact_rows("Yield", &[row(0, -1.0)], Partition::Delta).unwrap();
        let q = quality_report(&s.snapshot());
        let y = &q.tables["Yield"];
        assert_eq!(y.referential_integrity, 5.0 / 6.0);
        assert_eq!(y.consistency, 3.0 / 4.0);
        assert_eq!(y.timeliness, Some(0.5));
        assert_eq!(y.completeness, 1.0);
    }

    #[test]
    fn json_field_names() {
        let mut s = Store::new(builtin_schema()).unwrap();
        let v = serde_json::to_value(quality_report(&s.snapshot())).unwrap();
        let t = v["tables"]["Yield"].as_object().unwrap();
        let keys: Vec<_> = t.keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["completeness", "consistency", "duplicates", "referential_integrity", "timeliness"]
        );
        assert!(v["tables"]["Crop"]["timeliness"].is_null());
        assert!(v["overall"]["loaded"].is_u64());
        assert!(v.get("counts").is_none());
    }
}
