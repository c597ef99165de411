//! Navigation operators. Each maps a query to a new query; nothing here
//! touches data.

use crate::predicate::Filter;
use crate::schema::ConstellationSchema;
use crate::Value;

use super::query::{check_filter, conform_literal, fact_of, level_kind, GroupBy, Query};
use super::OlapError;
use crate::schema::Level;

fn replace_axis(q: &mut Query, dim: &str, with: Option<&GroupBy>) {
    if let Some(p) = &mut q.pivot {
        for axis in [&mut p.rows, &mut p.cols] {
            match with {
                Some(g) => axis.iter_mut().filter(|e| e.dimension == dim).for_each(|e| *e = g.clone()),
                None => axis.retain(|e| e.dimension != dim),
            }
        }
    }
}

/// Moves `dim` one step coarser along its drill path, or drops it from the
/// group-by when it is already at the coarsest level or off the path.
pub fn roll_up(schema: &ConstellationSchema, q: &Query, dim: &str) -> Result<Query, OlapError> {
    fact_of(schema, &q.fact)?;
    let i = q.group_entry(dim).ok_or_else(|| OlapError::NotGrouped(dim.to_string()))?;
    let path = schema.dimensions[dim].drill_path();
    let mut out = q.clone();
    let coarser = path
        .iter()
        .position(|l| *l == q.group_by[i].level)
        .and_then(|p| path.get(p + 1));
    match coarser {
        Some(level) => {
            let g = GroupBy::new(dim, level.clone());
            out.group_by[i] = g.clone();
            replace_axis(&mut out, dim, Some(&g));
        }
        None => {
            out.group_by.remove(i);
            replace_axis(&mut out, dim, None);
        }
    }
    Ok(out)
}

/// Index at which `dim` enters `entries` so that dimensions stay in the
/// fact's declaration order.
fn fact_position(fact_dims: &[String], entries: &[GroupBy], dim: &str) -> usize {
    let rank = |d: &str| fact_dims.iter().position(|x| x == d).unwrap_or(usize::MAX);
    let r = rank(dim);
    entries.iter().position(|e| rank(&e.dimension) > r).unwrap_or(entries.len())
}

/// Moves `dim` one step finer along its drill path. An absent dimension is
/// introduced at its coarsest level; a grouped level off the drill path
/// drills straight to the key.
pub fn drill_down(schema: &ConstellationSchema, q: &Query, dim: &str) -> Result<Query, OlapError> {
    let fact = fact_of(schema, &q.fact)?;
    let def = schema.dimension(dim).ok_or_else(|| OlapError::semantic(dim, format!("unknown dimension `{dim}`")))?;
    if fact.dimension_index(dim).is_none() {
        return Err(OlapError::semantic(dim, format!("dimension `{dim}` is not used by fact `{}`", fact.name)));
    }
    let path = def.drill_path();
    let mut out = q.clone();
    match q.group_entry(dim) {
        Some(i) => {
            let current = &q.group_by[i].level;
            if *current == def.key_level() {
                return Err(OlapError::AlreadyFinest(dim.to_string()));
            }
            let finer = match path.iter().position(|l| l == current) {
                Some(p) => path[p - 1].clone(),
                None => def.key_level(),
            };
            let g = GroupBy::new(dim, finer);
            out.group_by[i] = g.clone();
            replace_axis(&mut out, dim, Some(&g));
        }
        None => {
            let g = GroupBy::new(dim, def.coarsest_level());
            let at = fact_position(&fact.dimensions, &out.group_by, dim);
            out.group_by.insert(at, g.clone());
            if let Some(p) = &mut out.pivot {
                let at = fact_position(&fact.dimensions, &p.rows, dim);
                p.rows.insert(at, g);
            }
        }
    }
    Ok(out)
}

/// Adds `dim.level = value`; the group-by is unchanged.
pub fn slice(schema: &ConstellationSchema, q: &Query, dim: &str, level: Level, value: Value) -> Result<Query, OlapError> {
    dice(schema, q, &[Filter::new(dim, level, crate::predicate::CompareOp::Eq, value)])
}

/// Conjoins every predicate onto the query's filters.
pub fn dice(schema: &ConstellationSchema, q: &Query, filters: &[Filter]) -> Result<Query, OlapError> {
    let fact = fact_of(schema, &q.fact)?;
    let mut out = q.clone();
    for f in filters {
        let kind = level_kind(schema, fact, &f.dimension, &f.level)?;
        let mut f = f.clone();
        f.values = f.values.into_iter().map(|v| conform_literal(kind, v)).collect();
        check_filter(schema, fact, &f)?;
        out.filters.push(f);
    }
    Ok(out)
}
