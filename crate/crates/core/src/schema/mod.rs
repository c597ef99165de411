//! Constellation schema definitions: dimensions, facts, measures and
//! hierarchies, plus the builtin precision-agriculture schema.

mod builtin;
mod text;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::builtin_schema;
pub use text::{load_schema, parse_schema, serialize_schema};
pub use validate::{validate_schema, Finding, Severity, ValidationReport};

/// Reserved surrogate key of every dimension's UNKNOWN member.
pub const UNKNOWN_KEY: i64 = 0;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema invalid: {}", .0.summary())]
    Invalid(ValidationReport),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Identifier,
    Text,
    Integer,
    Decimal,
    Date,
    Enumeration,
}

impl AttributeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Identifier => "identifier",
            AttributeKind::Text => "text",
            AttributeKind::Integer => "integer",
            AttributeKind::Decimal => "decimal",
            AttributeKind::Date => "date",
            AttributeKind::Enumeration => "enumeration",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            AttributeKind::Identifier | AttributeKind::Integer | AttributeKind::Decimal
        )
    }
}

impl FromStr for AttributeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "identifier" => AttributeKind::Identifier,
            "text" => AttributeKind::Text,
            "integer" => AttributeKind::Integer,
            "decimal" => AttributeKind::Decimal,
            "date" => AttributeKind::Date,
            "enumeration" => AttributeKind::Enumeration,
            other => return Err(format!("unknown attribute kind `{other}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttributeKind,
    pub nullable: bool,
}

impl AttributeDef {
    pub fn new(name: impl Into<String>, kind: AttributeKind, nullable: bool) -> Self {
        Self {
            name: name.into(),
            kind,
            nullable,
        }
    }
}

/// A granularity of a dimension: a plain attribute or a synthesized date part.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Attribute(String),
    Month(String),
    Year(String),
}

impl Level {
    pub fn attr(name: impl Into<String>) -> Self {
        Level::Attribute(name.into())
    }

    /// The underlying stored attribute.
    pub fn attribute(&self) -> &str {
        match self {
            Level::Attribute(a) | Level::Month(a) | Level::Year(a) => a,
        }
    }

    pub fn is_date_part(&self) -> bool {
        !matches!(self, Level::Attribute(_))
    }

    /// Whether values at `self` are a pure function of values at `finer`
    /// without consulting dimension rows.
    pub fn derivable_from_value(&self, finer: &Level) -> bool {
        match (finer, self) {
            (a, b) if a == b => true,
            (Level::Attribute(a), Level::Month(b) | Level::Year(b)) => a == b,
            (Level::Month(a), Level::Year(b)) => a == b,
            _ => false,
        }
    }

    /// Derives this level's value from a value held at level `finer`.
    /// Caller must have checked [`Level::derivable_from_value`].
    pub fn derive_value(&self, finer: &Level, v: &crate::Value) -> crate::Value {
        match (finer, self) {
            (a, b) if a == b => v.clone(),
            (_, Level::Month(_)) => v.month_of(),
            (_, Level::Year(_)) => v.year_of(),
            _ => v.clone(),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Attribute(a) => f.write_str(a),
            Level::Month(a) => write!(f, "month({a})"),
            Level::Year(a) => write!(f, "year({a})"),
        }
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(')'))
                .map(|a| a.trim().to_string())
        };
        if let Some(a) = inner("month(") {
            return Ok(Level::Month(a));
        }
        if let Some(a) = inner("year(") {
            return Ok(Level::Year(a));
        }
        if s.is_empty() || s.contains(['(', ')', ' ']) {
            return Err(format!("malformed level `{s}`"));
        }
        Ok(Level::Attribute(s.to_string()))
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered drill path, finest level first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyDef {
    pub name: String,
    pub levels: Vec<Level>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDef {
    pub attribute: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionDef {
    pub name: String,
    pub key: String,
    pub attributes: Vec<AttributeDef>,
    pub links: Vec<LinkDef>,
    pub hierarchies: Vec<HierarchyDef>,
}

impl DimensionDef {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn key_index(&self) -> usize {
        self.attribute_index(&self.key)
            .expect("validated dimension has its key attribute")
    }

    /// Kind of values produced at `level`, or `None` if the level does not
    /// exist on this dimension.
    pub fn level_kind(&self, level: &Level) -> Option<AttributeKind> {
        let attr = self.attribute(level.attribute())?;
        match level {
            Level::Attribute(_) => Some(attr.kind),
            Level::Month(_) | Level::Year(_) if attr.kind != AttributeKind::Date => None,
            Level::Month(_) => Some(AttributeKind::Text),
            Level::Year(_) => Some(AttributeKind::Integer),
        }
    }

    pub fn key_level(&self) -> Level {
        Level::Attribute(self.key.clone())
    }

    /// Granularities along the primary drill path, finest first: the key
    /// followed by the first declared hierarchy's levels.
    pub fn drill_path(&self) -> Vec<Level> {
        let mut path = vec![self.key_level()];
        if let Some(h) = self.hierarchies.first() {
            path.extend(h.levels.iter().filter(|l| **l != self.key_level()).cloned());
        }
        path
    }

    /// Coarsest granularity used when a dimension is reintroduced by drill-down.
    pub fn coarsest_level(&self) -> Level {
        self.drill_path().pop().expect("drill path holds at least the key")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasureKind {
    Additive,
    Count,
    Ratio {
        numerator: String,
        denominator: String,
    },
}

impl MeasureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasureKind::Additive => "additive",
            MeasureKind::Count => "count",
            MeasureKind::Ratio { .. } => "ratio",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: MeasureKind,
    pub unit: String,
}

impl MeasureDef {
    pub fn additive(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: MeasureKind::Additive,
            unit: unit.into(),
        }
    }

    pub fn count(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: MeasureKind::Count,
            unit: "rows".into(),
        }
    }

    pub fn ratio(
        name: impl Into<String>,
        numerator: impl Into<String>,
        denominator: impl Into<String>,
        unit: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: MeasureKind::Ratio {
                numerator: numerator.into(),
                denominator: denominator.into(),
            },
            unit: unit.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactDef {
    pub name: String,
    pub dimensions: Vec<String>,
    pub measures: Vec<MeasureDef>,
}

impl FactDef {
    pub fn measure(&self, name: &str) -> Option<&MeasureDef> {
        self.measures.iter().find(|m| m.name == name)
    }

    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d == name)
    }

    /// Additive measures, in declaration order. These are the only measure
    /// columns physically stored on fact rows.
    pub fn stored_measures(&self) -> impl Iterator<Item = &MeasureDef> {
        self.measures
            .iter()
            .filter(|m| m.kind == MeasureKind::Additive)
    }

    pub fn stored_measure_index(&self, name: &str) -> Option<usize> {
        self.stored_measures().position(|m| m.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstellationSchema {
    pub name: String,
    pub dimensions: BTreeMap<String, DimensionDef>,
    pub facts: BTreeMap<String, FactDef>,
}

impl ConstellationSchema {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            dimensions: BTreeMap::new(),
            facts: BTreeMap::new(),
        }
    }

    pub fn dimension(&self, name: &str) -> Option<&DimensionDef> {
        self.dimensions.get(name)
    }

    pub fn fact(&self, name: &str) -> Option<&FactDef> {
        self.facts.get(name)
    }

    /// Facts whose dimension list names `dim`.
    pub fn facts_using(&self, dim: &str) -> Vec<&str> {
        self.facts
            .values()
            .filter(|f| f.dimensions.iter().any(|d| d == dim))
            .map(|f| f.name.as_str())
            .collect()
    }

    pub fn add_dimension(&mut self, dim: DimensionDef) {
        self.dimensions.insert(dim.name.clone(), dim);
    }

    pub fn add_fact(&mut self, fact: FactDef) {
        self.facts.insert(fact.name.clone(), fact);
    }
}
