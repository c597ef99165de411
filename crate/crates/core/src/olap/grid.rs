use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::Value;

use super::OlapError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Cuboid,
    Scan,
    Oracle,
}

/// How a grid was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub source: Source,
    pub cuboid: Option<String>,
    pub delta_rows_scanned: usize,
    /// Cuboid entries read for the base partition, or base rows scanned.
    pub base_rows_covered: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub r: usize,
    pub c: usize,
    /// One value per grid measure; `None` when undefined (ratio over zero).
    pub values: Vec<Option<Value>>,
}

/// A cube face: sorted row and column headers plus the non-empty cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultGrid {
    pub row_axes: Vec<String>,
    pub col_axes: Vec<String>,
    pub measures: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub cols: Vec<Vec<Value>>,
    pub cells: Vec<Cell>,
    pub provenance: Provenance,
}

impl ResultGrid {
    /// Lays out `groups` (keyed in `axes` order, sorted and distinct) with the
    /// given row and column axes, which must be a repartition of `axes`.
    pub(crate) fn assemble(
        groups: Vec<(Vec<Value>, Vec<Option<Value>>)>,
        axes: &[String],
        row_axes: &[String],
        col_axes: &[String],
        measures: Vec<String>,
        provenance: Provenance,
    ) -> Self {
        let pos = |names: &[String]| -> Vec<usize> {
            names
                .iter()
                .map(|n| axes.iter().position(|a| a == n).expect("axis is a group entry"))
                .collect()
        };
        let (rp, cp) = (pos(row_axes), pos(col_axes));
        // Unpivoted groups are already sorted and distinct.
        if cp.is_empty() && rp.iter().enumerate().all(|(i, &p)| i == p) {
            let cols = groups.iter().take(1).map(|_| Vec::new()).collect();
            let (rows, cells) = groups
                .into_iter()
                .enumerate()
                .map(|(r, (k, values))| (k, Cell { r, c: 0, values }))
                .unzip();
            return Self {
                row_axes: row_axes.to_vec(),
                col_axes: col_axes.to_vec(),
                measures,
                rows,
                cols,
                cells,
                provenance,
            };
        }
        // Distinct values per axis; tuples are compared as value ranks.
        let distinct: Vec<Vec<Value>> = (0..axes.len())
            .map(|i| {
                let mut v: Vec<Value> = groups.iter().map(|(k, _)| k[i].clone()).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let ranks: Vec<Vec<u32>> = groups
            .iter()
            .map(|(k, _)| {
                k.iter()
                    .zip(&distinct)
                    .map(|(v, d)| d.binary_search(v).expect("distinct value") as u32)
                    .collect()
            })
            .collect();
        let project = |k: &[u32], p: &[usize]| -> Vec<u32> { p.iter().map(|&i| k[i]).collect() };
        let headers = |p: &[usize]| -> Vec<Vec<u32>> {
            let mut h: Vec<Vec<u32>> = ranks.iter().map(|k| project(k, p)).collect();
            h.sort_unstable();
            h.dedup();
            h
        };
        let (row_ranks, col_ranks) = (headers(&rp), headers(&cp));
        let values_of = |h: &[Vec<u32>], p: &[usize]| -> Vec<Vec<Value>> {
            h.iter()
                .map(|t| t.iter().zip(p).map(|(&r, &i)| distinct[i][r as usize].clone()).collect())
                .collect()
        };
        let (rows, cols) = (values_of(&row_ranks, &rp), values_of(&col_ranks, &cp));
        let mut cells: Vec<Cell> = groups
            .into_iter()
            .zip(&ranks)
            .map(|((_, values), k)| Cell {
                r: row_ranks.binary_search(&project(k, &rp)).expect("row header"),
                c: col_ranks.binary_search(&project(k, &cp)).expect("col header"),
                values,
            })
            .collect();
        cells.sort_by_key(|c| (c.r, c.c));
        Self {
            row_axes: row_axes.to_vec(),
            col_axes: col_axes.to_vec(),
            measures,
            rows,
            cols,
            cells,
            provenance,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, r: usize, c: usize) -> Option<&Cell> {
        self.cells
            .binary_search_by_key(&(r, c), |x| (x.r, x.c))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// Group tuple of every cell, keyed in `row_axes ++ col_axes` order.
    pub fn entries(&self) -> BTreeMap<Vec<Value>, Vec<Option<Value>>> {
        self.cells
            .iter()
            .map(|c| {
                let mut k = self.rows[c.r].clone();
                k.extend(self.cols[c.c].iter().cloned());
                (k, c.values.clone())
            })
            .collect()
    }

    /// Value of `measure` in a cell.
    pub fn value<'a>(&self, cell: &'a Cell, measure: &str) -> Option<&'a Value> {
        let m = self.measures.iter().position(|x| x == measure)?;
        cell.values[m].as_ref()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }
}

/// Re-lays out `grid` with new row and column axes without recomputing any
/// value. The new axes must be a repartition of the old ones.
pub fn pivot(grid: &ResultGrid, rows: &[String], cols: &[String]) -> Result<ResultGrid, OlapError> {
    let mut old: Vec<&String> = grid.row_axes.iter().chain(&grid.col_axes).collect();
    let mut new: Vec<&String> = rows.iter().chain(cols).collect();
    old.sort();
    new.sort();
    if old != new {
        return Err(OlapError::AxisMismatch(format!(
            "[{}] does not repartition [{}]",
            new.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            old.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    let axes: Vec<String> = grid.row_axes.iter().chain(&grid.col_axes).cloned().collect();
    Ok(ResultGrid::assemble(
        grid.entries().into_iter().collect(),
        &axes,
        rows,
        cols,
        grid.measures.clone(),
        grid.provenance.clone(),
    ))
}

struct CellJson<'a> {
    cell: &'a Cell,
    measures: &'a [String],
}

struct ValuesJson<'a>(&'a [String], &'a [Option<Value>]);

impl Serialize for ValuesJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (name, v) in self.0.iter().zip(self.1) {
            m.serialize_entry(name, v)?;
        }
        m.end()
    }
}

impl Serialize for CellJson<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Cell", 3)?;
        st.serialize_field("r", &self.cell.r)?;
        st.serialize_field("c", &self.cell.c)?;
        st.serialize_field("values", &ValuesJson(self.measures, &self.cell.values))?;
        st.end()
    }
}

impl Serialize for ResultGrid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<CellJson> = self
            .cells
            .iter()
            .map(|cell| CellJson {
                cell,
                measures: &self.measures,
            })
            .collect();
        let mut st = s.serialize_struct("ResultGrid", 7)?;
        st.serialize_field("row_axes", &self.row_axes)?;
        st.serialize_field("col_axes", &self.col_axes)?;
        st.serialize_field("measures", &self.measures)?;
        st.serialize_field("rows", &self.rows)?;
        st.serialize_field("cols", &self.cols)?;
        st.serialize_field("cells", &cells)?;
        st.serialize_field("provenance", &self.provenance)?;
        st.end()
    }
}
