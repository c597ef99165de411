use std::collections::HashMap;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::schema::AttributeKind;
use crate::Value;

/// Dictionary-encoded text column.
#[derive(Clone, Debug, Default)]
pub struct TextColumn {
    codes: Vec<Option<u32>>,
    dict: Vec<Arc<str>>,
    lookup: HashMap<Arc<str>, u32>,
}

impl TextColumn {
    fn push(&mut self, s: Option<&Arc<str>>) {
        let code = s.map(|s| match self.lookup.get(s) {
            Some(c) => *c,
            None => {
                let c = self.dict.len() as u32;
                self.dict.push(s.clone());
                self.lookup.insert(s.clone(), c);
                c
            }
        });
        self.codes.push(code);
    }

    pub fn distinct(&self) -> usize {
        self.dict.len()
    }
}

/// One attribute column of a dimension table.
#[derive(Clone, Debug)]
pub enum Column {
    Int(Vec<Option<i64>>),
    Dec(Vec<Option<f64>>),
    Date(Vec<Option<NaiveDate>>),
    Text(TextColumn),
}

impl Column {
    pub fn for_kind(kind: AttributeKind) -> Self {
        match kind {
            AttributeKind::Identifier | AttributeKind::Integer => Column::Int(Vec::new()),
            AttributeKind::Decimal => Column::Dec(Vec::new()),
            AttributeKind::Date => Column::Date(Vec::new()),
            AttributeKind::Text | AttributeKind::Enumeration => Column::Text(TextColumn::default()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int(v) => v.len(),
            Column::Dec(v) => v.len(),
            Column::Date(v) => v.len(),
            Column::Text(t) => t.codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a value already checked against the column kind.
    pub fn push(&mut self, v: &Value) {
        match (self, v) {
            (Column::Int(c), Value::Int(i)) => c.push(Some(*i)),
            (Column::Int(c), _) => c.push(None),
            (Column::Dec(c), Value::Dec(d)) => c.push(Some(*d)),
            (Column::Dec(c), Value::Int(i)) => c.push(Some(*i as f64)),
            (Column::Dec(c), _) => c.push(None),
            (Column::Date(c), Value::Date(d)) => c.push(Some(*d)),
            (Column::Date(c), _) => c.push(None),
            (Column::Text(c), Value::Text(s)) => c.push(Some(s)),
            (Column::Text(c), _) => c.push(None),
        }
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            Column::Int(c) => c[row].map_or(Value::Null, Value::Int),
            Column::Dec(c) => c[row].map_or(Value::Null, Value::Dec),
            Column::Date(c) => c[row].map_or(Value::Null, Value::Date),
            Column::Text(t) => t.codes[row].map_or(Value::Null, |code| {
                Value::Text(t.dict[code as usize].clone())
            }),
        }
    }

    pub fn is_null(&self, row: usize) -> bool {
        match self {
            Column::Int(c) => c[row].is_none(),
            Column::Dec(c) => c[row].is_none(),
            Column::Date(c) => c[row].is_none(),
            Column::Text(t) => t.codes[row].is_none(),
        }
    }

    pub fn int(&self, row: usize) -> Option<i64> {
        match self {
            Column::Int(c) => c[row],
            _ => None,
        }
    }
}
