//! Comparison predicates over dimension attributes or levels.

use std::fmt;

use serde::Serialize;

use crate::schema::Level;
use crate::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CompareOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "in")]
    In,
}

impl CompareOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::In => "in",
        }
    }
}

/// `<dimension>.<level> <op> <literal(s)>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Filter {
    pub dimension: String,
    pub level: Level,
    pub op: CompareOp,
    pub values: Vec<Value>,
}

impl Filter {
    pub fn new(dimension: impl Into<String>, level: Level, op: CompareOp, value: Value) -> Self {
        Self {
            dimension: dimension.into(),
            level,
            op,
            values: vec![value],
        }
    }

    pub fn eq(dimension: impl Into<String>, attribute: &str, value: impl Into<Value>) -> Self {
        Self::new(dimension, Level::attr(attribute), CompareOp::Eq, value.into())
    }

    /// NULL never satisfies a comparison, including `!=`.
    pub fn matches(&self, v: &Value) -> bool {
        if v.is_null() {
            return false;
        }
        let Some(lit) = self.values.first() else {
            return false;
        };
        match self.op {
            CompareOp::Eq => v == lit,
            CompareOp::Ne => v != lit,
            CompareOp::Lt => v < lit,
            CompareOp::Le => v <= lit,
            CompareOp::Gt => v > lit,
            CompareOp::Ge => v >= lit,
            CompareOp::In => self.values.contains(v),
        }
    }
}

/// Renders a literal so the query parser reads it back unchanged.
pub fn render_literal(v: &Value) -> String {
    match v {
        Value::Null => "null".to_string(),
        Value::Text(s) => {
            let mut out = String::with_capacity(s.len() + 2);
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
            out
        }
        Value::Dec(d) if d.fract() == 0.0 && d.abs() < 1e15 => format!("{d:.1}"),
        other => other.to_string(),
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} {} ", self.dimension, self.level, self.op.as_str())?;
        if self.op == CompareOp::In {
            let parts: Vec<String> = self.values.iter().map(render_literal).collect();
            write!(f, "({})", parts.join(", "))
        } else {
            f.write_str(&render_literal(&self.values[0]))
        }
    }
}
