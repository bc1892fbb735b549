//! Domain data: class catalogs, labeled feature sets, semantic tables and
//! benchmark splits, with their on-disk formats.

mod features;
mod semantics;
mod split;

pub use features::{
    decode_features, encode_features, read_feature_file, write_feature_file, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use semantics::{read_semantic_table, SemanticTable};
pub use split::{apply_split, SplitParts, SplitSpec, TaskMode};

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ordered class names; a class id is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
}

impl ClassCatalog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Data("catalog has no classes".into()));
        }
        if u32::try_from(names.len()).is_err() {
            return Err(Error::Data("too many classes".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Data("empty class name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        Ok(ClassCatalog { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> {
        0..self.names.len() as u32
    }
}

/// Feature rows with one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatureSet<T> {
    features: Tensor<T>,
    labels: Vec<u32>,
    catalog: ClassCatalog,
}

impl<T: Scalar> LabeledFeatureSet<T> {
    pub fn new(features: Tensor<T>, labels: Vec<u32>, catalog: ClassCatalog) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= catalog.len()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: catalog.len(),
            });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("feature set".into()));
        }
        Ok(LabeledFeatureSet {
            features,
            labels,
            catalog,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn feature(&self, i: usize) -> &[T] {
        self.features.row_slice(i)
    }

    /// Row indices per label, for labels that occur.
    pub fn indices_by_label(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l).or_default().push(i);
        }
        out
    }

    /// Subset with the given rows, or `None` when `rows` is empty.
    pub fn subset(&self, rows: &[usize]) -> Result<Option<Self>> {
        if rows.is_empty() {
            return Ok(None);
        }
        let features = self.features.select_rows(rows)?;
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Ok(Some(LabeledFeatureSet {
            features,
            labels,
            catalog: self.catalog.clone(),
        }))
    }

    pub fn cast<U: Scalar>(&self) -> LabeledFeatureSet<U> {
        LabeledFeatureSet {
            features: self.features.cast(),
            labels: self.labels.clone(),
            catalog: self.catalog.clone(),
        }
    }
}
