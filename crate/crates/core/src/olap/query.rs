use std::collections::HashSet;
use std::fmt;

use crate::coerce::kind_accepts;
use crate::predicate::{CompareOp, Filter};
use crate::schema::{AttributeKind, ConstellationSchema, FactDef, Level, MeasureKind};
use crate::Value;

use super::OlapError;

/// One grouping entry: a dimension of the fact at some level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupBy {
    pub dimension: String,
    pub level: Level,
}

impl GroupBy {
    pub fn new(dimension: impl Into<String>, level: Level) -> Self {
        Self {
            dimension: dimension.into(),
            level,
        }
    }

    pub fn attr(dimension: impl Into<String>, attribute: &str) -> Self {
        Self::new(dimension, Level::attr(attribute))
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.dimension, self.level)
    }
}

/// Assignment of group-by entries to the row and column axes of a grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PivotSpec {
    pub rows: Vec<GroupBy>,
    pub cols: Vec<GroupBy>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub fact: String,
    pub group_by: Vec<GroupBy>,
    pub filters: Vec<Filter>,
    pub measures: Vec<String>,
    pub pivot: Option<PivotSpec>,
}

impl Query {
    pub fn new(fact: impl Into<String>) -> Self {
        Self {
            fact: fact.into(),
            group_by: Vec::new(),
            filters: Vec::new(),
            measures: Vec::new(),
            pivot: None,
        }
    }

    pub fn group(mut self, g: GroupBy) -> Self {
        self.group_by.push(g);
        self
    }

    pub fn filter(mut self, f: Filter) -> Self {
        self.filters.push(f);
        self
    }

    pub fn measure(mut self, m: impl Into<String>) -> Self {
        self.measures.push(m.into());
        self
    }

    /// Row and column axes: the pivot spec, or every entry on rows.
    pub fn axes(&self) -> (Vec<GroupBy>, Vec<GroupBy>) {
        match &self.pivot {
            Some(p) => (p.rows.clone(), p.cols.clone()),
            None => (self.group_by.clone(), Vec::new()),
        }
    }

    pub fn group_entry(&self, dimension: &str) -> Option<usize> {
        self.group_by.iter().position(|g| g.dimension == dimension)
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T], sep: &str) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{it}")?;
    }
    Ok(())
}

/// Renders the query in the text grammar; compiling the output yields an
/// equal query.
impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "from {}", self.fact)?;
        if !self.group_by.is_empty() {
            f.write_str(" group by ")?;
            write_list(f, &self.group_by, ", ")?;
        }
        if !self.filters.is_empty() {
            f.write_str(" where ")?;
            write_list(f, &self.filters, " and ")?;
        }
        f.write_str(" measure ")?;
        write_list(f, &self.measures, ", ")?;
        if let Some(p) = &self.pivot {
            f.write_str(" pivot rows=")?;
            write_list(f, &p.rows, ",")?;
            f.write_str(" cols=")?;
            write_list(f, &p.cols, ",")?;
        }
        Ok(())
    }
}

pub(crate) fn fact_of<'a>(schema: &'a ConstellationSchema, fact: &str) -> Result<&'a FactDef, OlapError> {
    schema
        .fact(fact)
        .ok_or_else(|| OlapError::semantic(fact, format!("unknown fact `{fact}`")))
}

/// Kind of values at `dimension.level` on a dimension of `fact`.
pub(crate) fn level_kind(
    schema: &ConstellationSchema,
    fact: &FactDef,
    dimension: &str,
    level: &Level,
) -> Result<AttributeKind, OlapError> {
    if fact.dimension_index(dimension).is_none() {
        let msg = if schema.dimension(dimension).is_some() {
            format!("dimension `{dimension}` is not used by fact `{}`", fact.name)
        } else {
            format!("unknown dimension `{dimension}`")
        };
        return Err(OlapError::semantic(dimension, msg));
    }
    let dim = &schema.dimensions[dimension];
    dim.level_kind(level).ok_or_else(|| {
        let name = format!("{dimension}.{level}");
        let msg = match dim.attribute(level.attribute()) {
            None => format!("unknown attribute `{name}`"),
            Some(_) => format!("`{name}` is only defined for date attributes"),
        };
        OlapError::semantic(name, msg)
    })
}

/// Converts a literal to the level's kind where that is lossless.
pub(crate) fn conform_literal(kind: AttributeKind, v: Value) -> Value {
    match (kind, v) {
        (AttributeKind::Decimal, Value::Int(i)) => Value::Dec(i as f64),
        (_, v) => v,
    }
}

pub(crate) fn check_filter(schema: &ConstellationSchema, fact: &FactDef, f: &Filter) -> Result<(), OlapError> {
    let kind = level_kind(schema, fact, &f.dimension, &f.level)?;
    let name = format!("{}.{}", f.dimension, f.level);
    if f.values.is_empty() {
        return Err(OlapError::semantic(name, "filter has no literal"));
    }
    if f.op != CompareOp::In && f.values.len() != 1 {
        return Err(OlapError::semantic(name, "only `in` takes a list"));
    }
    for v in &f.values {
        if v.is_null() || !kind_accepts(kind, v) {
            return Err(OlapError::semantic(
                name,
                format!("literal {v} is not a valid {}", kind.as_str()),
            ));
        }
    }
    Ok(())
}

/// Checks every invariant of a query against `schema`.
pub fn validate_query(schema: &ConstellationSchema, q: &Query) -> Result<(), OlapError> {
    let fact = fact_of(schema, &q.fact)?;
    let mut dims = HashSet::new();
    for g in &q.group_by {
        level_kind(schema, fact, &g.dimension, &g.level)?;
        if !dims.insert(&g.dimension) {
            return Err(OlapError::semantic(
                &g.dimension,
                format!("dimension `{}` is grouped more than once", g.dimension),
            ));
        }
    }
    for f in &q.filters {
        check_filter(schema, fact, f)?;
    }
    if q.measures.is_empty() {
        return Err(OlapError::semantic(&q.fact, "at least one measure is required"));
    }
    let mut seen = HashSet::new();
    for m in &q.measures {
        if fact.measure(m).is_none() {
            return Err(OlapError::semantic(m, format!("unknown measure `{m}` on fact `{}`", fact.name)));
        }
        if !seen.insert(m) {
            return Err(OlapError::semantic(m, format!("measure `{m}` listed twice")));
        }
    }
    if let Some(p) = &q.pivot {
        let mut axes: Vec<&GroupBy> = p.rows.iter().chain(&p.cols).collect();
        axes.sort();
        let mut group: Vec<&GroupBy> = q.group_by.iter().collect();
        group.sort();
        if axes != group {
            return Err(OlapError::semantic("pivot", "pivot axes must list each group-by entry exactly once"));
        }
    }
    Ok(())
}

/// The first count measure of a fact, used for `count(*)`.
pub(crate) fn count_measure(fact: &FactDef) -> Option<&str> {
    fact.measures
        .iter()
        .find(|m| m.kind == MeasureKind::Count)
        .map(|m| m.name.as_str())
}
