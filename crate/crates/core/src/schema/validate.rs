use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{AttributeKind, ConstellationSchema, DimensionDef, FactDef, Level, MeasureKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub table: String,
    pub attribute: Option<String>,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attribute {
            Some(a) => write!(f, "[{}] {}.{}: {}", self.rule, self.table, a, self.message),
            None => write!(f, "[{}] {}: {}", self.rule, self.table, self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.findings.iter().any(|f| f.rule == rule)
    }

    pub fn summary(&self) -> String {
        let shown: Vec<String> = self.findings.iter().take(3).map(|f| f.to_string()).collect();
        let mut s = shown.join("; ");
        if self.findings.len() > 3 {
            s.push_str(&format!(" (+{} more)", self.findings.len() - 3));
        }
        s
    }

    pub(crate) fn push(
        &mut self,
        table: &str,
        attribute: Option<&str>,
        rule: &'static str,
        message: impl Into<String>,
    ) {
        self.findings.push(Finding {
            severity: Severity::Error,
            table: table.to_string(),
            attribute: attribute.map(str::to_string),
            rule,
            message: message.into(),
        });
    }
}

pub(crate) fn is_attribute_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

pub(crate) fn is_table_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks every structural invariant of a schema. Findings are data: an
/// empty report means the schema is usable.
pub fn validate_schema(s: &ConstellationSchema) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (name, dim) in &s.dimensions {
        if name != &dim.name {
            report.push(name, None, "name-mismatch", format!("entry keyed `{name}` is named `{}`", dim.name));
        }
        check_dimension(s, dim, &mut report);
    }
    for (name, fact) in &s.facts {
        if name != &fact.name {
            report.push(name, None, "name-mismatch", format!("entry keyed `{name}` is named `{}`", fact.name));
        }
        if s.dimensions.contains_key(name) {
            report.push(name, None, "name-collision", "a fact and a dimension share this name");
        }
        check_fact(s, fact, &mut report);
    }
    report
}

fn check_dimension(s: &ConstellationSchema, dim: &DimensionDef, report: &mut ValidationReport) {
    let t = dim.name.as_str();
    if !is_table_identifier(t) {
        report.push(t, None, "invalid-identifier", "table names must be alphanumeric identifiers");
    }
    let mut seen = HashSet::new();
    for a in &dim.attributes {
        if !is_attribute_identifier(&a.name) {
            report.push(t, Some(&a.name), "invalid-identifier", "attribute names must match [a-z][a-z0-9_]*");
        }
        if !seen.insert(a.name.as_str()) {
            report.push(t, Some(&a.name), "duplicate-attribute", "attribute declared twice");
        }
    }
    match dim.attribute(&dim.key) {
        None => report.push(t, Some(&dim.key), "missing-key", "key attribute is not declared"),
        Some(k) => {
            if k.kind != AttributeKind::Identifier {
                report.push(t, Some(&dim.key), "key-kind", "key attribute must be an identifier");
            }
            if k.nullable {
                report.push(t, Some(&dim.key), "key-nullable", "key attribute must not be nullable");
            }
        }
    }
    for link in &dim.links {
        if dim.attribute(&link.attribute).is_none() {
            report.push(t, Some(&link.attribute), "unresolved-link-attribute", "link names an undeclared attribute");
        }
        if !s.dimensions.contains_key(&link.target) {
            report.push(
                t,
                Some(&link.attribute),
                "unresolved-link-target",
                format!("link target `{}` is not a dimension", link.target),
            );
        }
    }
    for h in &dim.hierarchies {
        if h.levels.len() < 2 {
            report.push(t, None, "hierarchy-too-short", format!("hierarchy `{}` needs at least two levels", h.name));
        }
        let mut levels = HashSet::new();
        for level in &h.levels {
            if !levels.insert(level) {
                report.push(t, Some(level.attribute()), "hierarchy-duplicate-level", format!("level `{level}` repeats in `{}`", h.name));
            }
            if dim.level_kind(level).is_none() {
                let rule = match level {
                    Level::Attribute(_) => "hierarchy-unknown-level",
                    _ if dim.attribute(level.attribute()).is_none() => "hierarchy-unknown-level",
                    _ => "hierarchy-date-part",
                };
                report.push(t, Some(level.attribute()), rule, format!("level `{level}` is not available on {t}"));
            }
        }
    }
}

fn check_fact(s: &ConstellationSchema, fact: &FactDef, report: &mut ValidationReport) {
    let t = fact.name.as_str();
    if !is_table_identifier(t) {
        report.push(t, None, "invalid-identifier", "table names must be alphanumeric identifiers");
    }
    if fact.dimensions.is_empty() {
        report.push(t, None, "fact-no-dimensions", "a fact needs at least one dimension");
    }
    let mut dims = HashSet::new();
    let mut key_columns = HashSet::new();
    for d in &fact.dimensions {
        if !dims.insert(d.as_str()) {
            report.push(t, Some(d), "duplicate-fact-dimension", format!("dimension `{d}` listed twice"));
        }
        match s.dimensions.get(d) {
            None => report.push(t, Some(d), "unresolved-dimension", format!("dimension `{d}` does not exist")),
            Some(def) => {
                if !key_columns.insert(def.key.as_str()) {
                    report.push(t, Some(&def.key), "duplicate-key-column", "two dimensions share a key column name");
                }
            }
        }
    }
    let mut names = HashSet::new();
    for m in &fact.measures {
        if !is_attribute_identifier(&m.name) {
            report.push(t, Some(&m.name), "invalid-identifier", "measure names must match [a-z][a-z0-9_]*");
        }
        if !names.insert(m.name.as_str()) {
            report.push(t, Some(&m.name), "duplicate-measure", "measure declared twice");
        }
        if key_columns.contains(m.name.as_str()) {
            report.push(t, Some(&m.name), "measure-key-collision", "measure shares a name with a key column");
        }
        if let MeasureKind::Ratio { numerator, denominator } = &m.kind {
            for operand in [numerator, denominator] {
                let ok = fact
                    .measure(operand)
                    .is_some_and(|o| matches!(o.kind, MeasureKind::Additive | MeasureKind::Count));
                if !ok {
                    report.push(
                        t,
                        Some(&m.name),
                        "ratio-operand",
                        format!("ratio operand `{operand}` must be an additive or count measure of {t}"),
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{builtin_schema, FactDef, LinkDef, MeasureDef};

    #[test]
    fn builtin_is_clean() {
        let r = validate_schema(&builtin_schema());
        assert!(r.is_clean(), "{}", r.summary());
    }

    #[test]
    fn ghost_dimension_yields_one_finding() {
        let mut s = builtin_schema();
        s.facts.get_mut("Yield").unwrap().dimensions.push("Ghost".into());
        let r = validate_schema(&s);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].rule, "unresolved-dimension");
        assert_eq!(r.findings[0].table, "Yield");
    }

    #[test]
    fn empty_constellation_is_valid() {
        let s = ConstellationSchema::new("empty");
        assert!(validate_schema(&s).is_clean());
    }

    #[test]
    fn dangling_link_and_bad_ratio() {
        let mut s = builtin_schema();
        s.dimensions.get_mut("Soil").unwrap().links.push(LinkDef {
            attribute: "colour".into(),
            target: "Nowhere".into(),
        });
        s.facts.get_mut("Yield").unwrap().measures.push(MeasureDef::ratio("bad", "quantity_t", "yield_t_per_ha", ""));
        let r = validate_schema(&s);
        assert!(r.has_rule("unresolved-link-target"));
        assert!(r.has_rule("ratio-operand"));
    }

    #[test]
    fn identifiers() {
        assert!(is_attribute_identifier("crop_id"));
        assert!(!is_attribute_identifier("Crop"));
        assert!(!is_attribute_identifier("1a"));
        assert!(!is_attribute_identifier(""));
        let mut s = ConstellationSchema::new("x");
        s.add_fact(FactDef {
            name: "F".into(),
            dimensions: vec![],
            measures: vec![MeasureDef::count("Rows")],
        });
        let r = validate_schema(&s);
        assert!(r.has_rule("fact-no-dimensions"));
        assert!(r.has_rule("invalid-identifier"));
    }

    #[test]
    fn hierarchy_rules() {
        let mut s = builtin_schema();
        let crop = s.dimensions.get_mut("Crop").unwrap();
        crop.hierarchies[0].levels = vec![Level::attr("name")];
        crop.hierarchies.push(crate::schema::HierarchyDef {
            name: "x".into(),
            levels: vec![Level::Year("name".into()), Level::attr("nope"), Level::attr("nope")],
        });
        let r = validate_schema(&s);
        for rule in [
            "hierarchy-too-short",
            "hierarchy-date-part",
            "hierarchy-unknown-level",
            "hierarchy-duplicate-level",
        ] {
            assert!(r.has_rule(rule), "missing {rule}");
        }
    }
}
