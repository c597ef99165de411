//! Line-oriented schema-definition format.
//!
//! ```text
//! schema precision_agriculture
//! dimension Crop
//!   attr crop_id identifier
//!   attr name text nullable
//!   key crop_id
//!   hierarchy variety: variety_name > name
//! fact Yield
//!   dim Crop
//!   measure quantity_t additive t
//!   measure yield_t_per_ha ratio quantity_t/area_ha t/ha
//! ```

use std::fmt::Write as _;

use super::{
    validate_schema, AttributeDef, ConstellationSchema, DimensionDef, FactDef, HierarchyDef,
    LinkDef, MeasureDef, MeasureKind, SchemaError, ValidationReport,
};

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    tokens
}

enum Section {
    None,
    Dimension { def: DimensionDef, line: usize },
    Fact(FactDef),
}

struct Parser {
    schema: ConstellationSchema,
    section: Section,
    duplicates: ValidationReport,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> SchemaError {
    SchemaError::Parse {
        line,
        column,
        message: message.into(),
    }
}

impl Parser {
    fn close_section(&mut self) -> Result<(), SchemaError> {
        match std::mem::replace(&mut self.section, Section::None) {
            Section::None => {}
            Section::Dimension { def, line } => {
                if def.key.is_empty() {
                    return Err(err(line, 1, format!("dimension `{}` has no `key` entry", def.name)));
                }
                if self.schema.dimensions.contains_key(&def.name) {
                    self.duplicates.push(&def.name, None, "duplicate-dimension", "dimension declared twice");
                }
                self.schema.add_dimension(def);
            }
            Section::Fact(def) => {
                if self.schema.facts.contains_key(&def.name) {
                    self.duplicates.push(&def.name, None, "duplicate-fact", "fact declared twice");
                }
                self.schema.add_fact(def);
            }
        }
        Ok(())
    }

    fn line(&mut self, lineno: usize, raw: &str) -> Result<(), SchemaError> {
        let content = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(content);
        let Some(head) = tokens.first() else {
            return Ok(());
        };
        let arg = |i: usize, what: &str| -> Result<&Token<'_>, SchemaError> {
            tokens.get(i).ok_or_else(|| {
                err(lineno, content.trim_end().chars().count() + 1, format!("expected {what}"))
            })
        };
        match head.text {
            "schema" => {
                self.schema.name = arg(1, "schema name")?.text.to_string();
            }
            "dimension" | "fact" => {
                self.close_section()?;
                let name = arg(1, "table name")?.text.to_string();
                if let Some(extra) = tokens.get(2) {
                    return Err(err(lineno, extra.column, "unexpected token after table name"));
                }
                self.section = if head.text == "dimension" {
                    Section::Dimension {
                        def: DimensionDef {
                            name,
                            key: String::new(),
                            attributes: Vec::new(),
                            links: Vec::new(),
                            hierarchies: Vec::new(),
                        },
                        line: lineno,
                    }
                } else {
                    Section::Fact(FactDef {
                        name,
                        dimensions: Vec::new(),
                        measures: Vec::new(),
                    })
                };
            }
            "attr" | "key" | "link" | "hierarchy" => {
                let Section::Dimension { def, .. } = &mut self.section else {
                    return Err(err(lineno, head.column, format!("`{}` outside a dimension section", head.text)));
                };
                match head.text {
                    "attr" => {
                        let name = arg(1, "attribute name")?.text;
                        let kind_tok = arg(2, "attribute kind")?;
                        let kind = kind_tok
                            .text
                            .parse()
                            .map_err(|m: String| err(lineno, kind_tok.column, m))?;
                        let nullable = match tokens.get(3) {
                            None => false,
                            Some(t) if t.text == "nullable" => true,
                            Some(t) => return Err(err(lineno, t.column, "expected `nullable`")),
                        };
                        def.attributes.push(AttributeDef::new(name, kind, nullable));
                    }
                    "key" => def.key = arg(1, "key attribute")?.text.to_string(),
                    "link" => {
                        let attribute = arg(1, "link attribute")?.text.to_string();
                        let arrow = arg(2, "`->`")?;
                        if arrow.text != "->" {
                            return Err(err(lineno, arrow.column, "expected `->`"));
                        }
                        let target = arg(3, "link target")?.text.to_string();
                        def.links.push(LinkDef { attribute, target });
                    }
                    _ => {
                        let rest = content.trim_start()["hierarchy".len()..].trim();
                        let Some((name, levels)) = rest.split_once(':') else {
                            return Err(err(lineno, head.column, "expected `hierarchy <name>: a > b`"));
                        };
                        let name = name.trim();
                        if name.is_empty() {
                            return Err(err(lineno, head.column, "hierarchy needs a name"));
                        }
                        let levels = levels
                            .split('>')
                            .map(|l| l.parse())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|m| err(lineno, head.column, m))?;
                        def.hierarchies.push(HierarchyDef {
                            name: name.to_string(),
                            levels,
                        });
                    }
                }
            }
            "dim" | "measure" => {
                let Section::Fact(def) = &mut self.section else {
                    return Err(err(lineno, head.column, format!("`{}` outside a fact section", head.text)));
                };
                if head.text == "dim" {
                    def.dimensions.push(arg(1, "dimension name")?.text.to_string());
                } else {
                    let name = arg(1, "measure name")?.text.to_string();
                    let kind_tok = arg(2, "measure kind")?;
                    let (kind, unit_from) = match kind_tok.text {
                        "additive" => (MeasureKind::Additive, 3),
                        "count" => (MeasureKind::Count, 3),
                        "ratio" => {
                            let op = arg(3, "`numerator/denominator`")?;
                            let Some((n, d)) = op.text.split_once('/') else {
                                return Err(err(lineno, op.column, "expected `numerator/denominator`"));
                            };
                            (
                                MeasureKind::Ratio {
                                    numerator: n.to_string(),
                                    denominator: d.to_string(),
                                },
                                4,
                            )
                        }
                        other => {
                            return Err(err(lineno, kind_tok.column, format!("unknown measure kind `{other}`")))
                        }
                    };
                    let unit = tokens[unit_from.min(tokens.len())..]
                        .iter()
                        .map(|t| t.text)
                        .collect::<Vec<_>>()
                        .join(" ");
                    def.measures.push(MeasureDef { name, kind, unit });
                }
            }
            other => {
                return Err(err(lineno, head.column, format!("unknown directive `{other}`")));
            }
        }
        Ok(())
    }
}

/// Parses a document without validating it.
pub fn parse_schema(text: &str) -> Result<ConstellationSchema, SchemaError> {
    let mut p = Parser {
        schema: ConstellationSchema::new("schema"),
        section: Section::None,
        duplicates: ValidationReport::default(),
    };
    for (i, line) in text.lines().enumerate() {
        p.line(i + 1, line)?;
    }
    p.close_section()?;
    if !p.duplicates.is_clean() {
        return Err(SchemaError::Invalid(p.duplicates));
    }
    Ok(p.schema)
}

/// Parses and validates a schema-definition document.
pub fn load_schema(text: &str) -> Result<ConstellationSchema, SchemaError> {
    let schema = parse_schema(text)?;
    let report = validate_schema(&schema);
    if report.is_clean() {
        Ok(schema)
    } else {
        Err(SchemaError::Invalid(report))
    }
}

/// Canonical text form; `load_schema(&serialize_schema(s)) == s` for valid `s`.
pub fn serialize_schema(s: &ConstellationSchema) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema {}", s.name);
    for d in s.dimensions.values() {
        let _ = writeln!(out, "\ndimension {}", d.name);
        for a in &d.attributes {
            let nullable = if a.nullable { " nullable" } else { "" };
            let _ = writeln!(out, "  attr {} {}{}", a.name, a.kind.as_str(), nullable);
        }
        let _ = writeln!(out, "  key {}", d.key);
        for l in &d.links {
            let _ = writeln!(out, "  link {} -> {}", l.attribute, l.target);
        }
        for h in &d.hierarchies {
            let levels: Vec<String> = h.levels.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(out, "  hierarchy {}: {}", h.name, levels.join(" > "));
        }
    }
    for f in s.facts.values() {
        let _ = writeln!(out, "\nfact {}", f.name);
        for d in &f.dimensions {
            let _ = writeln!(out, "  dim {d}");
        }
        for m in &f.measures {
            let _ = write!(out, "  measure {} {}", m.name, m.kind.as_str());
            if let MeasureKind::Ratio { numerator, denominator } = &m.kind {
                let _ = write!(out, " {numerator}/{denominator}");
            }
            if !m.unit.is_empty() {
                let _ = write!(out, " {}", m.unit);
            }
            out.push('\n');
        }
    }
    out
}
