//! Text grammar for queries:
//!
//! ```text
//! from <Fact>
//!   [group by <Dim>.<level> (, <Dim>.<level>)*]
//!   [where <Dim>.<level> <op> <literal> (and ...)*]
//!   measure <item> (, <item>)*
//!   [pivot rows=<entries> cols=<entries>]
//! ```
//!
//! A level is an attribute name or `month(attr)` / `year(attr)`. Operators are
//! `= != <> < <= > >= in (..)`. A measure item is a measure name, `sum(m)`,
//! `count(m)` or `count(*)`. Keywords are case-insensitive.

use crate::coerce::{coerce, iso_formats};
use crate::predicate::{CompareOp, Filter};
use crate::schema::{ConstellationSchema, Level, MeasureKind};
use crate::Value;

use super::query::{conform_literal, count_measure, fact_of, level_kind, validate_query, GroupBy, PivotSpec, Query};
use super::OlapError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Word(String),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const PUNCT: [&str; 13] = ["<=", ">=", "!=", "<>", "=", "<", ">", ".", ",", "(", ")", "*", ";"];

fn lex(text: &str) -> Result<Vec<Token>, OlapError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut s = String::new();
            s.push(c);
            advance(&mut i, &mut line, &mut col, c);
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || ".:+-_".contains(chars[i])) {
                s.push(chars[i]);
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            Tok::Word(s)
        } else if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(OlapError::parse(tl, tc, "unterminated string literal"));
                };
                advance(&mut i, &mut line, &mut col, ch);
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(&esc) = chars.get(i) else {
                            return Err(OlapError::parse(tl, tc, "unterminated string literal"));
                        };
                        advance(&mut i, &mut line, &mut col, esc);
                        s.push(esc);
                    }
                    other => s.push(other),
                }
            }
            Tok::Str(s)
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
                return Err(OlapError::parse(tl, tc, format!("unexpected character `{c}`")));
            };
            for _ in 0..p.len() {
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            Tok::Punct(p)
        };
        out.push(Token { tok, line: tl, column: tc });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    schema: &'a ConstellationSchema,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::Word(s) => format!("`{s}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, expected: &str) -> OlapError {
        OlapError::parse(t.line, t.column, format!("expected {expected}, found {}", describe(&t.tok)))
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        let hit = self.is_keyword(kw);
        if hit {
            self.next();
        }
        hit
    }

    fn keyword(&mut self, kw: &str) -> Result<(), OlapError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error_at(self.peek(), &format!("`{kw}`")))
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        self.peek().tok == Tok::Punct(PUNCT.iter().find(|x| **x == p).copied().unwrap_or(""))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.next();
        }
        hit
    }

    fn punct(&mut self, p: &str) -> Result<(), OlapError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error_at(self.peek(), &format!("`{p}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, OlapError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error_at(self.peek(), what)),
        }
    }

    /// `<Dim>.<attr>` or `<Dim>.month(attr)` / `<Dim>.year(attr)`.
    fn entry(&mut self) -> Result<GroupBy, OlapError> {
        let dim = self.ident("a dimension name")?;
        self.punct(".")?;
        let name = self.ident("an attribute or level")?;
        let lower = name.to_ascii_lowercase();
        if (lower == "month" || lower == "year") && self.is_punct("(") {
            self.next();
            let attr = self.ident("an attribute name")?;
            self.punct(")")?;
            let level = if lower == "month" { Level::Month(attr) } else { Level::Year(attr) };
            return Ok(GroupBy::new(dim, level));
        }
        Ok(GroupBy::new(dim, Level::Attribute(name)))
    }

    fn entry_list(&mut self) -> Result<Vec<GroupBy>, OlapError> {
        let mut out = vec![self.entry()?];
        while self.eat_punct(",") {
            out.push(self.entry()?);
        }
        Ok(out)
    }

    fn op(&mut self) -> Result<CompareOp, OlapError> {
        if self.eat_keyword("in") {
            return Ok(CompareOp::In);
        }
        let t = self.peek().clone();
        let op = match &t.tok {
            Tok::Punct("=") => CompareOp::Eq,
            Tok::Punct("!=") | Tok::Punct("<>") => CompareOp::Ne,
            Tok::Punct("<") => CompareOp::Lt,
            Tok::Punct("<=") => CompareOp::Le,
            Tok::Punct(">") => CompareOp::Gt,
            Tok::Punct(">=") => CompareOp::Ge,
            _ => return Err(self.error_at(&t, "a comparison operator")),
        };
        self.next();
        Ok(op)
    }

    fn literal(&mut self, target: &GroupBy, fact: &crate::schema::FactDef) -> Result<Value, OlapError> {
        let t = self.next();
        let raw = match &t.tok {
            Tok::Str(s) | Tok::Word(s) => s.clone(),
            _ => return Err(self.error_at(&t, "a literal")),
        };
        let kind = level_kind(self.schema, fact, &target.dimension, &target.level)?;
        let name = target.to_string();
        if raw.is_empty() {
            return Err(OlapError::semantic(name, "empty literal"));
        }
        coerce(kind, &raw, &iso_formats())
            .map(|v| conform_literal(kind, v))
            .map_err(|e| OlapError::semantic(name, format!("literal `{raw}`: {e}")))
    }

    fn condition(&mut self, fact: &crate::schema::FactDef) -> Result<Filter, OlapError> {
        let target = self.entry()?;
        level_kind(self.schema, fact, &target.dimension, &target.level)?;
        let op = self.op()?;
        let mut values = Vec::new();
        if op == CompareOp::In {
            self.punct("(")?;
            values.push(self.literal(&target, fact)?);
            while self.eat_punct(",") {
                values.push(self.literal(&target, fact)?);
            }
            self.punct(")")?;
        } else {
            values.push(self.literal(&target, fact)?);
        }
        Ok(Filter {
            dimension: target.dimension,
            level: target.level,
            op,
            values,
        })
    }

    fn measure_item(&mut self, fact: &crate::schema::FactDef) -> Result<String, OlapError> {
        let name = self.ident("a measure")?;
        let agg = name.to_ascii_lowercase();
        if (agg == "sum" || agg == "count") && self.is_punct("(") {
            self.next();
            let inner = if agg == "count" && self.eat_punct("*") {
                count_measure(fact)
                    .ok_or_else(|| OlapError::semantic(&fact.name, format!("fact `{}` has no count measure", fact.name)))?
                    .to_string()
            } else {
                let m = self.ident("a measure name")?;
                let def = fact
                    .measure(&m)
                    .ok_or_else(|| OlapError::semantic(&m, format!("unknown measure `{m}` on fact `{}`", fact.name)))?;
                let ok = match agg.as_str() {
                    "sum" => def.kind == MeasureKind::Additive,
                    _ => def.kind == MeasureKind::Count,
                };
                if !ok {
                    return Err(OlapError::semantic(&m, format!("`{agg}` does not apply to {} measure `{m}`", def.kind.as_str())));
                }
                m
            };
            self.punct(")")?;
            return Ok(inner);
        }
        if fact.measure(&name).is_none() {
            return Err(OlapError::semantic(&name, format!("unknown measure `{name}` on fact `{}`", fact.name)));
        }
        Ok(name)
    }

    fn axis_list(&mut self, stop: Option<&str>) -> Result<Vec<GroupBy>, OlapError> {
        let at_end = |p: &Self| stop.is_some_and(|s| p.is_keyword(s)) || matches!(p.peek().tok, Tok::Eof) || p.is_punct(";");
        if at_end(self) {
            return Ok(Vec::new());
        }
        self.entry_list()
    }

    fn query(&mut self) -> Result<Query, OlapError> {
        self.keyword("from")?;
        let fact_name = self.ident("a fact name")?;
        let fact = fact_of(self.schema, &fact_name)?;
        let mut q = Query::new(fact_name.clone());
        if self.eat_keyword("group") {
            self.keyword("by")?;
            q.group_by = self.entry_list()?;
            for g in &q.group_by {
                level_kind(self.schema, fact, &g.dimension, &g.level)?;
            }
        }
        if self.eat_keyword("where") {
            q.filters.push(self.condition(fact)?);
            while self.eat_keyword("and") {
                q.filters.push(self.condition(fact)?);
            }
        }
        if !(self.eat_keyword("measure") || self.eat_keyword("measures")) {
            return Err(self.error_at(self.peek(), "`measure`"));
        }
        q.measures.push(self.measure_item(fact)?);
        while self.eat_punct(",") {
            q.measures.push(self.measure_item(fact)?);
        }
        if self.eat_keyword("pivot") {
            self.keyword("rows")?;
            self.punct("=")?;
            let rows = self.axis_list(Some("cols"))?;
            self.keyword("cols")?;
            self.punct("=")?;
            let cols = self.axis_list(None)?;
            q.pivot = Some(PivotSpec { rows, cols });
        }
        self.eat_punct(";");
        if self.peek().tok != Tok::Eof {
            return Err(self.error_at(self.peek(), "end of query"));
        }
        Ok(q)
    }
}

/// Parses and validates a query against `schema`.
pub fn compile_query(schema: &ConstellationSchema, text: &str) -> Result<Query, OlapError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, schema };
    let q = p.query()?;
    validate_query(schema, &q)?;
    Ok(q)
}
