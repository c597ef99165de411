//! Scalar cell values shared by dimension tables, filters and result grids.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::ser::{Serialize, Serializer};

/// A single typed cell.
///
/// Values are totally ordered: `Null` sorts first, then integers, decimals,
/// text and dates. Columns are kind-homogeneous so cross-kind comparisons
/// only matter for `Null`.
#[derive(Clone, Debug)]
pub enum Value {
    Null,
    Int(i64),
    Dec(f64),
    Text(Arc<str>),
    Date(NaiveDate),
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Self {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Dec(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<NaiveDate> {
        match self {
            Value::Date(d) => Some(*d),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) => 1,
            Value::Dec(_) => 2,
            Value::Text(_) => 3,
            Value::Date(_) => 4,
        }
    }

    /// Month bucket of a date value, rendered `YYYY-MM`.
    pub fn month_of(&self) -> Value {
        match self {
            Value::Date(d) => Value::text(format!("{:04}-{:02}", d.year(), d.month())),
            _ => Value::Null,
        }
    }

    pub fn year_of(&self) -> Value {
        match self {
            Value::Date(d) => Value::Int(i64::from(d.year())),
            // month buckets roll up to their year
            Value::Text(s) if s.len() == 7 && s.as_bytes()[4] == b'-' => {
                s[..4].parse().map(Value::Int).unwrap_or(Value::Null)
            }
            _ => Value::Null,
        }
    }

    /// Plain rendering used for CSV cells; `Null` is the empty string.
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Dec(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Dec(a), Value::Dec(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Int(v) => v.hash(state),
            Value::Dec(v) => v.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
            Value::Date(d) => d.hash(state),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_none(),
            Value::Int(v) => serializer.serialize_i64(*v),
            Value::Dec(v) => serializer.serialize_f64(*v),
            Value::Text(s) => serializer.serialize_str(s),
            Value::Date(d) => serializer.serialize_str(&d.format("%Y-%m-%d").to_string()),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Dec(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::text(v)
    }
}

impl From<NaiveDate> for Value {
    fn from(v: NaiveDate) -> Self {
        Value::Date(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_sorts_first() {
        let mut vals = vec![Value::text("b"), Value::Null, Value::text("a")];
        vals.sort();
        assert_eq!(vals, vec![Value::Null, Value::text("a"), Value::text("b")]);
    }

    #[test]
    fn date_parts() {
        let d = Value::Date(NaiveDate::from_ymd_opt(2020, 3, 9).unwrap());
        assert_eq!(d.month_of(), Value::text("2020-03"));
        assert_eq!(d.year_of(), Value::Int(2020));
        assert_eq!(d.month_of().year_of(), Value::Int(2020));
    }

    #[test]
    fn decimal_render_round_trips() {
        for v in [0.1, 12.5, 1e-7, 123456.789] {
            let s = Value::Dec(v).render();
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
