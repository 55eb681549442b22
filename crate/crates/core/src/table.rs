//! Column-typed tables shared by generators, the model and the metrics.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Category substituted for missing categorical cells.
pub const MISSING_CATEGORY: &str = "[missing]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Categorical { categories: Vec<String> },
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn numerical(name: &str) -> Self {
        Self { name: name.into(), kind: ColumnKind::Numerical }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical {
                categories: categories.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    pub fn text(name: &str) -> Self {
        Self { name: name.into(), kind: ColumnKind::Text }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self.kind, ColumnKind::Numerical)
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ColumnKind::Categorical { .. })
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            ColumnKind::Categorical { categories } => Some(categories),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(name: &str, columns: Vec<ColumnSpec>) -> Self {
        Self { name: name.into(), columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn numerical(&self) -> Vec<usize> {
        self.indices(|c| c.is_numerical())
    }

    pub fn categorical(&self) -> Vec<usize> {
        self.indices(|c| c.is_categorical())
    }

    pub fn text(&self) -> Vec<usize> {
        self.indices(|c| matches!(c.kind, ColumnKind::Text))
    }

    /// Numerical and categorical columns, in schema order.
    pub fn structured(&self) -> Vec<usize> {
        self.indices(|c| !matches!(c.kind, ColumnKind::Text))
    }

    fn indices(&self, pred: impl Fn(&ColumnSpec) -> bool) -> Vec<usize> {
        self.columns.iter().enumerate().filter(|(_, c)| pred(c)).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// NaN marks a missing value.
    Numerical(Vec<f64>),
    /// The empty string marks a missing value.
    Categorical(Vec<String>),
    Text(Vec<String>),
}

impl ColumnData {
    fn empty_for(kind: &ColumnKind) -> Self {
        match kind {
            ColumnKind::Numerical => ColumnData::Numerical(Vec::new()),
            ColumnKind::Categorical { .. } => ColumnData::Categorical(Vec::new()),
            ColumnKind::Text => ColumnData::Text(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numerical(v) => v.len(),
            ColumnData::Categorical(v) | ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.into())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    columns: Vec<ColumnData>,
}

impl Table {
    pub fn new(schema: Schema) -> Self {
        let columns = schema.columns.iter().map(|c| ColumnData::empty_for(&c.kind)).collect();
        Self { schema, columns }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, ColumnData::len)
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }

    pub fn push_row(&mut self, row: Vec<Value>) -> Result<()> {
        ensure!(
            row.len() == self.schema.len(),
            Shape,
            "row has {} cells, schema has {} columns",
            row.len(),
            self.schema.len()
        );
        for (cell, spec) in row.iter().zip(&self.schema.columns) {
            let ok = match (&spec.kind, cell) {
                (ColumnKind::Numerical, Value::Num(_)) => true,
                (ColumnKind::Categorical { .. } | ColumnKind::Text, Value::Str(_)) => true,
                _ => false,
            };
            ensure!(ok, Data, "cell type does not match column `{}`", spec.name);
        }
        for (cell, col) in row.into_iter().zip(self.columns.iter_mut()) {
            match (col, cell) {
                (ColumnData::Numerical(v), Value::Num(x)) => v.push(x),
                (ColumnData::Categorical(v), Value::Str(s)) | (ColumnData::Text(v), Value::Str(s)) => {
                    v.push(s)
                }
                _ => unreachable!("checked above"),
            }
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnData::Numerical(v) => Value::Num(v[i]),
                ColumnData::Categorical(v) | ColumnData::Text(v) => Value::Str(v[i].clone()),
            })
            .collect()
    }

    pub fn select(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnData::Numerical(v) => ColumnData::Numerical(rows.iter().map(|&r| v[r]).collect()),
                ColumnData::Categorical(v) => {
                    ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
                }
                ColumnData::Text(v) => ColumnData::Text(rows.iter().map(|&r| v[r].clone()).collect()),
            })
            .collect();
        Table { schema: self.schema.clone(), columns }
    }

    pub fn numeric(&self, idx: usize) -> Option<&[f64]> {
        match &self.columns[idx] {
            ColumnData::Numerical(v) => Some(v),
            _ => None,
        }
    }

    pub fn strings(&self, idx: usize) -> Option<&[String]> {
        match &self.columns[idx] {
            ColumnData::Categorical(v) | ColumnData::Text(v) => Some(v),
            ColumnData::Numerical(_) => None,
        }
    }

    pub fn numeric_by_name(&self, name: &str) -> Option<&[f64]> {
        self.schema.index_of(name).and_then(|i| self.numeric(i))
    }

    pub fn strings_by_name(&self, name: &str) -> Option<&[String]> {
        self.schema.index_of(name).and_then(|i| self.strings(i))
    }

    /// Mean-impute missing numerics and map missing categories to
    /// [`MISSING_CATEGORY`], which is appended to the column's vocabulary
    /// when it occurs.
    pub fn impute(&self) -> Result<Table> {
        let mut out = self.clone();
        for (spec, col) in out.schema.columns.iter_mut().zip(out.columns.iter_mut()) {
            match col {
                ColumnData::Numerical(v) => {
                    let present: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
                    if present.len() == v.len() {
                        continue;
                    }
                    ensure!(!present.is_empty(), Data, "column `{}` has no observed values", spec.name);
                    let mean = crate::stats::mean(&present);
                    for x in v.iter_mut().filter(|x| !x.is_finite()) {
                        *x = mean;
                    }
                }
                ColumnData::Categorical(v) => {
                    let mut any = false;
                    for s in v.iter_mut().filter(|s| s.is_empty()) {
                        *s = MISSING_CATEGORY.into();
                        any = true;
                    }
                    if let (true, ColumnKind::Categorical { categories }) = (any, &mut spec.kind) {
                        if !categories.iter().any(|c| c == MISSING_CATEGORY) {
                            categories.push(MISSING_CATEGORY.into());
                        }
                    }
                }
                ColumnData::Text(_) => {}
            }
        }
        Ok(out)
    }

    /// Check categorical cells against the schema vocabulary.
    pub fn validate(&self) -> Result<()> {
        for (spec, col) in self.schema.columns.iter().zip(&self.columns) {
            if let (Some(cats), ColumnData::Categorical(v)) = (spec.categories(), col) {
                if let Some(bad) = v.iter().find(|s| !s.is_empty() && !cats.contains(s)) {
                    return Err(Error::UnknownCategory { column: spec.name.clone(), value: bad.clone() });
                }
            }
        }
        Ok(())
    }
}
