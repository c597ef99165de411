//! Text to typed-value coercion per attribute kind.

use chrono::NaiveDate;

use crate::schema::AttributeKind;
use crate::Value;

pub const ISO_DATE: &str = "%Y-%m-%d";

/// Coerces one raw cell. Empty input yields `Value::Null`; the caller decides
/// whether that is acceptable.
pub fn coerce(kind: AttributeKind, raw: &str, date_formats: &[String]) -> Result<Value, String> {
    if raw.is_empty() {
        return Ok(Value::Null);
    }
    match kind {
        AttributeKind::Identifier => match raw.parse::<i64>() {
            Ok(v) if v >= 0 => Ok(Value::Int(v)),
            _ => Err(format!("`{raw}` is not a non-negative identifier")),
        },
        AttributeKind::Integer => raw
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|_| format!("`{raw}` is not an integer")),
        AttributeKind::Decimal => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Dec(v)),
            _ => Err(format!("`{raw}` is not a finite decimal")),
        },
        AttributeKind::Date => parse_date(raw, date_formats)
            .map(Value::Date)
            .ok_or_else(|| format!("`{raw}` matches no accepted date format")),
        AttributeKind::Text | AttributeKind::Enumeration => Ok(Value::text(raw)),
    }
}

/// First configured pattern that parses wins.
pub fn parse_date(raw: &str, formats: &[String]) -> Option<NaiveDate> {
    formats
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(raw, f).ok())
}

pub fn iso_formats() -> Vec<String> {
    vec![ISO_DATE.to_string()]
}

/// Whether `v` is an acceptable stored value for `kind`.
pub fn kind_accepts(kind: AttributeKind, v: &Value) -> bool {
    match (kind, v) {
        (_, Value::Null) => true,
        (AttributeKind::Identifier, Value::Int(i)) => *i >= 0,
        (AttributeKind::Integer, Value::Int(_)) => true,
        (AttributeKind::Decimal, Value::Dec(d)) => d.is_finite(),
        (AttributeKind::Date, Value::Date(_)) => true,
        (AttributeKind::Text | AttributeKind::Enumeration, Value::Text(_)) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds() {
        let iso = iso_formats();
        assert_eq!(coerce(AttributeKind::Decimal, "12.5", &iso), Ok(Value::Dec(12.5)));
        assert_eq!(coerce(AttributeKind::Identifier, "7", &iso), Ok(Value::Int(7)));
        assert!(coerce(AttributeKind::Identifier, "-7", &iso).is_err());
        assert!(coerce(AttributeKind::Decimal, "NaN", &iso).is_err());
        assert_eq!(coerce(AttributeKind::Text, "", &iso), Ok(Value::Null));
    }

    #[test]
    fn date_formats_in_order() {
        let formats = vec![ISO_DATE.to_string(), "%d/%m/%Y".to_string()];
        let d = NaiveDate::from_ymd_opt(2021, 3, 4).unwrap();
        assert_eq!(parse_date("2021-03-04", &formats), Some(d));
        assert_eq!(parse_date("04/03/2021", &formats), Some(d));
        assert_eq!(parse_date("2021/03/04", &formats), None);
    }
}
