use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ClassCatalog, LabeledFeatureSet};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::scalar::Scalar;

/// Disjoint seen / unseen class-name sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seen: BTreeSet<String>,
    #[serde(default)]
    pub unseen: BTreeSet<String>,
}

impl SplitSpec {
    pub fn new<S: Into<String>>(
        seen: impl IntoIterator<Item = S>,
        unseen: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let split = SplitSpec {
            seen: seen.into_iter().map(Into::into).collect(),
            unseen: unseen.into_iter().map(Into::into).collect(),
        };
        split.check_shape()?;
        Ok(split)
    }

    fn check_shape(&self) -> Result<()> {
        if self.seen.is_empty() {
            return Err(Error::Data("split has no seen classes".into()));
        }
        if let Some(both) = self.seen.intersection(&self.unseen).next() {
            return Err(Error::Data(format!("class {both:?} is both seen and unseen")));
        }
        Ok(())
    }

    /// Checks disjointness and that every name is in the catalog.
    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        self.check_shape()?;
        for name in self.seen.iter().chain(&self.unseen) {
            if catalog.id(name).is_none() {
                return Err(Error::UnknownClass(name.clone()));
            }
        }
        Ok(())
    }

    pub fn seen_ids(&self, catalog: &ClassCatalog) -> Result<Vec<u32>> {
        ids_of(&self.seen, catalog)
    }

    pub fn unseen_ids(&self, catalog: &ClassCatalog) -> Result<Vec<u32>> {
        ids_of(&self.unseen, catalog)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let split: SplitSpec = serde_json::from_str(text)?;
        split.check_shape()?;
        Ok(split)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

fn ids_of(names: &BTreeSet<String>, catalog: &ClassCatalog) -> Result<Vec<u32>> {
    let mut ids = names
        .iter()
        .map(|n| catalog.id(n).ok_or_else(|| Error::UnknownClass(n.clone())))
        .collect::<Result<Vec<_>>>()?;
    ids.sort_unstable();
    Ok(ids)
}

/// Which classes a model may predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    /// Seen classes only.
    C3ds,
    /// Unseen classes only.
    Z3ds,
    /// Seen and unseen classes together.
    Gz3ds,
}

impl TaskMode {
    /// Sorted class ids of the mode's label space.
    pub fn label_space(self, split: &SplitSpec, catalog: &ClassCatalog) -> Result<Vec<u32>> {
        split.validate(catalog)?;
        let ids = match self {
            TaskMode::C3ds => split.seen_ids(catalog)?,
            TaskMode::Z3ds => split.unseen_ids(catalog)?,
            TaskMode::Gz3ds => {
                let mut all = split.seen_ids(catalog)?;
                all.extend(split.unseen_ids(catalog)?);
                all.sort_unstable();
                all
            }
        };
        if ids.is_empty() {
            return Err(Error::Data(format!("{self} label space is empty")));
        }
        Ok(ids)
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::C3ds => "c3ds",
            TaskMode::Z3ds => "z3ds",
            TaskMode::Gz3ds => "gz3ds",
        })
    }
}

impl FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c3ds" => Ok(TaskMode::C3ds),
            "z3ds" => Ok(TaskMode::Z3ds),
            "gz3ds" => Ok(TaskMode::Gz3ds),
            other => Err(Error::InvalidArgument(format!("unknown task mode {other:?}"))),
        }
    }
}

/// Seen and unseen rows of a feature set; `None` when a side has no rows.
#[derive(Clone, Debug)]
pub struct SplitParts<T> {
    pub seen: Option<LabeledFeatureSet<T>>,
    pub unseen: Option<LabeledFeatureSet<T>>,
}

/// Partitions rows by whether their class is seen or unseen. Every label
/// present must belong to one side of the split.
pub fn apply_split<T: Scalar>(set: &LabeledFeatureSet<T>, split: &SplitSpec) -> Result<SplitParts<T>> {
    split.validate(set.catalog())?;
    let seen: BTreeSet<u32> = split.seen_ids(set.catalog())?.into_iter().collect();
    let unseen: BTreeSet<u32> = split.unseen_ids(set.catalog())?.into_iter().collect();
    let (mut s, mut u) = (Vec::new(), Vec::new());
    for (i, l) in set.labels().iter().enumerate() {
        if seen.contains(l) {
            s.push(i);
        } else if unseen.contains(l) {
            u.push(i);
        } else {
            return Err(Error::UnknownClass(format!(
                "{} is in neither side of the split",
                set.catalog().name(*l).unwrap_or("?")
            )));
        }
    }
    Ok(SplitParts {
        seen: set.subset(&s)?,
        unseen: set.subset(&u)?,
    })
}
