//! Class-name embeddings read from a word-vector text file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticTable<T> {
    dim: usize,
    entries: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> SemanticTable<T> {
    pub fn new(dim: usize) -> Self {
        SemanticTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<T>) -> Result<()> {
        let name = name.into();
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding for {name:?} has {} values, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.insert(name, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Embedding for a class name. An exact entry wins; otherwise the name
    /// is split on whitespace and underscores and its token vectors are
    /// averaged.
    pub fn resolve(&self, name: &str) -> Result<Vec<T>> {
        if let Some(v) = self.get(name) {
            return Ok(v.to_vec());
        }
        let tokens: Vec<&str> = name
            .split(|c: char| c.is_whitespace() || c == '_')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(Error::Unresolvable {
                name: name.to_string(),
                token: String::new(),
            });
        }
        let mut acc = vec![T::zero(); self.dim];
        for tok in &tokens {
            let v = self.get(tok).ok_or_else(|| Error::Unresolvable {
                name: name.to_string(),
                token: tok.to_string(),
            })?;
            for (a, &x) in acc.iter_mut().zip(v) {
                *a = *a + x;
            }
        }
        let n = T::count(tokens.len());
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    /// Parses `name v1 .. vd` lines. A `dim` of 0 takes the dimension from
    /// the first entry.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let mut table = SemanticTable::new(dim);
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(name) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            // word2vec text exports start with a "<count> <dim>" header.
            if line_no == 1 && values.len() == 1 && name.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok()
            {
                continue;
            }
            if table.dim == 0 && table.is_empty() && !values.is_empty() {
                table.dim = values.len();
            }
            if values.len() != table.dim {
                return Err(Error::Dimension {
                    line: line_no,
                    expected: table.dim,
                    found: values.len(),
                });
            }
            let vector = values
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(T::lit)
                        .ok_or_else(|| Error::Data(format!("line {line_no}: bad number {v:?}")))
                })
                .collect::<Result<Vec<T>>>()?;
            table.insert(name, vector)?;
        }
        Ok(table)
    }

    /// One `name v1 .. vd` line per entry, sorted by name.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in &self.entries {
            out.push_str(name);
            for x in v {
                write!(out, " {}", x.as_f64()).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

pub fn read_semantic_table<T: Scalar>(path: &Path, dim: usize) -> Result<SemanticTable<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SemanticTable::parse(&text, dim)
}
