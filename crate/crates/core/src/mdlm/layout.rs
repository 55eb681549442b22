use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, BOS, NUM, PAD, SEP};
use crate::error::{ensure, Error, Result};
use crate::numcodec::QuantileNormalizer;
use crate::table::{ColumnKind, Schema, Table, Value};

/// What to do when a field needs more tokens than its span holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    #[default]
    Fail,
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpan {
    pub column: usize,
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSlot {
    pub column: usize,
    pub name: String,
    pub position: usize,
}

/// Fixed positions of every field in a serialized row: the schema prompt,
/// one fixed-width span per categorical/text column, then one placeholder
/// per numerical column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub prompt: Vec<u32>,
    pub spans: Vec<ColumnSpan>,
    pub numeric: Vec<NumericSlot>,
    pub overflow: OverflowPolicy,
}

/// Conditioning text describing the columns.
pub fn schema_prompt(schema: &Schema) -> String {
    let parts: Vec<String> = schema
        .columns
        .iter()
        .map(|c| {
            let kind = match c.kind {
                ColumnKind::Numerical => "num",
                ColumnKind::Categorical { .. } => "cat",
                ColumnKind::Text => "text",
            };
            alloc::format!("{} {}", c.name, kind)
        })
        .collect();
    parts.join(";")
}

/// Vocabulary over the schema prompt, every declared category and every
/// text cell of `table`.
pub fn build_vocabulary(table: &Table) -> Vocabulary {
    let schema = table.schema();
    let prompt = schema_prompt(schema);
    let mut corpus: Vec<&str> = alloc::vec![prompt.as_str()];
    for (i, spec) in schema.columns.iter().enumerate() {
        if let Some(cats) = spec.categories() {
            corpus.extend(cats.iter().map(String::as_str));
        }
        if matches!(spec.kind, ColumnKind::Text) {
            corpus.extend(table.strings(i).unwrap_or(&[]).iter().map(String::as_str));
        }
    }
    Vocabulary::build(corpus)
}

impl TokenLayout {
    /// Span widths are the longest tokenization seen in `table` (and, for
    /// categorical columns, over all declared categories).
    pub fn build(table: &Table, vocab: &Vocabulary, overflow: OverflowPolicy) -> Result<Self> {
        let schema = table.schema();
        let mut prompt = alloc::vec![BOS];
        prompt.extend(vocab.encode(&schema_prompt(schema))?);
        prompt.push(SEP);
        let mut offset = prompt.len();
        let mut spans = Vec::new();
        for (i, spec) in schema.columns.iter().enumerate() {
            let width = match &spec.kind {
                ColumnKind::Numerical => continue,
                ColumnKind::Categorical { categories } => {
                    let mut w = 0;
                    for c in categories.iter().chain(table.strings(i).unwrap_or(&[])) {
                        w = w.max(vocab.encode(c)?.len());
                    }
                    w
                }
                ColumnKind::Text => {
                    let mut w = 0;
                    for c in table.strings(i).unwrap_or(&[]) {
                        w = w.max(vocab.encode(c)?.len());
                    }
                    w
                }
            };
            let width = width.max(1);
            spans.push(ColumnSpan { column: i, name: spec.name.clone(), offset, width });
            offset += width;
        }
        let mut numeric = Vec::new();
        for i in schema.numerical() {
            numeric.push(NumericSlot { column: i, name: schema.columns[i].name.clone(), position: offset });
            offset += 1;
        }
        Ok(Self { prompt, spans, numeric, overflow })
    }

    pub fn len(&self) -> usize {
        self.prompt.len() + self.spans.iter().map(|s| s.width).sum::<usize>() + self.numeric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt.len()
    }

    /// Positions holding categorical/text tokens (the maskable ones).
    pub fn text_positions(&self) -> core::ops::Range<usize> {
        let start = self.prompt.len();
        start..start + self.spans.iter().map(|s| s.width).sum::<usize>()
    }

    pub fn numeric_positions(&self) -> Vec<usize> {
        self.numeric.iter().map(|s| s.position).collect()
    }

    /// Check that the layout agrees with a schema.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let spans: Vec<usize> = self.spans.iter().map(|s| s.column).collect();
        let nums: Vec<usize> = self.numeric.iter().map(|s| s.column).collect();
        let want_spans: Vec<usize> = (0..schema.len()).filter(|&i| !schema.columns[i].is_numerical()).collect();
        ensure!(spans == want_spans && nums == schema.numerical(), Shape, "token layout does not match schema `{}`", schema.name);
        for s in &self.spans {
            ensure!(schema.columns[s.column].name == s.name, Shape, "layout column `{}` not in schema", s.name);
        }
        Ok(())
    }
}

/// A row as model input: token ids plus normalized numerics in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct SerializedRecord {
    pub tokens: Vec<u32>,
    pub numerics: Vec<f64>,
}

pub fn serialize_record(
    row: &[Value],
    schema: &Schema,
    layout: &TokenLayout,
    vocab: &Vocabulary,
    normalizers: &[QuantileNormalizer],
) -> Result<SerializedRecord> {
    ensure!(row.len() == schema.len(), Shape, "row has {} cells, schema has {}", row.len(), schema.len());
    ensure!(normalizers.len() == layout.numeric.len(), Shape, "need one normalizer per numerical column");
    let mut tokens = alloc::vec![PAD; layout.len()];
    tokens[..layout.prompt.len()].copy_from_slice(&layout.prompt);
    for span in &layout.spans {
        let spec = &schema.columns[span.column];
        let text = row[span.column]
            .as_str()
            .ok_or_else(|| Error::Data(alloc::format!("column `{}` expects a string", spec.name)))?;
        if let Some(cats) = spec.categories() {
            if !cats.iter().any(|c| c == text) {
                return Err(Error::UnknownCategory { column: spec.name.clone(), value: text.into() });
            }
        }
        let mut ids = vocab.encode(text)?;
        if ids.len() > span.width {
            match layout.overflow {
                OverflowPolicy::Fail => {
                    return Err(Error::Overflow { column: spec.name.clone(), tokens: ids.len(), width: span.width })
                }
                OverflowPolicy::Truncate => ids.truncate(span.width),
            }
        }
        tokens[span.offset..span.offset + ids.len()].copy_from_slice(&ids);
    }
    let mut numerics = Vec::with_capacity(layout.numeric.len());
    for (slot, norm) in layout.numeric.iter().zip(normalizers) {
        tokens[slot.position] = NUM;
        let x = row[slot.column]
            .as_num()
            .ok_or_else(|| Error::Data(alloc::format!("column `{}` expects a number", slot.name)))?;
        numerics.push(norm.normalize(x)?);
    }
    Ok(SerializedRecord { tokens, numerics })
}

/// Invert [`serialize_record`]. A span decodes only if it is content tokens
/// followed by padding; categorical spans must name a declared category.
pub fn detokenize(
    tokens: &[u32],
    numerics: &[f64],
    schema: &Schema,
    layout: &TokenLayout,
    vocab: &Vocabulary,
    normalizers: &[QuantileNormalizer],
) -> Result<Vec<Value>> {
    ensure!(tokens.len() == layout.len(), Shape, "sequence length {} does not match layout {}", tokens.len(), layout.len());
    ensure!(numerics.len() == layout.numeric.len(), Shape, "expected {} numerics", layout.numeric.len());
    let mut row: Vec<Option<Value>> = alloc::vec![None; schema.len()];
    for span in &layout.spans {
        let ids = &tokens[span.offset..span.offset + span.width];
        let content = ids.iter().position(|&t| t == PAD).unwrap_or(ids.len());
        ensure!(ids[content..].iter().all(|&t| t == PAD), Data, "column `{}` has tokens after padding", span.name);
        let text = vocab
            .decode(&ids[..content])
            .ok_or_else(|| Error::Data(alloc::format!("column `{}` contains special tokens", span.name)))?;
        if let Some(cats) = schema.columns[span.column].categories() {
            if !cats.iter().any(|c| *c == text) {
                return Err(Error::UnknownCategory { column: span.name.clone(), value: text });
            }
        }
        row[span.column] = Some(Value::Str(text));
    }
    for ((slot, norm), &z) in layout.numeric.iter().zip(normalizers).zip(numerics) {
        row[slot.column] = Some(Value::Num(norm.denormalize(z)?));
    }
    row.into_iter()
        .map(|v| v.ok_or_else(|| Error::Shape("layout does not cover every column".into())))
        .collect()
}
