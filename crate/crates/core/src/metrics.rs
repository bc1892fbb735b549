//! Segmentation metrics: confusion matrices, OA/mACC/mIoU, seen/unseen
//! aggregates and their harmonic means.
//!
//! Rates are percentages kept at full precision; [`EvalReport`] rounds to one
//! decimal only when serialized.

use serde::{Serialize, Serializer};

use crate::config::PipelineConfig;
use crate::data::{ClassCatalog, SplitSpec, TaskMode};
use crate::error::{Error, Result};

/// Counts over an ordered label space; rows are gold, columns predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<u32>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty label space".into()));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidArgument("duplicate label in label space".into()));
        }
        let n = labels.len();
        Ok(ConfusionMatrix {
            labels,
            counts: vec![0; n * n],
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    fn position(&self, label: u32) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::Data(format!("label {label} is outside the label space {:?}", self.labels)))
    }

    pub fn record(&mut self, gold: u32, pred: u32) -> Result<()> {
        let g = self.position(gold)?;
        let p = self.position(pred)?;
        self.counts[g * self.labels.len() + p] += 1;
        Ok(())
    }

    /// Count at row `g`, column `p` (positions, not class ids).
    pub fn get(&self, g: usize, p: usize) -> u64 {
        self.counts[g * self.labels.len() + p]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.len()).map(|i| self.get(i, i)).sum()
    }

    pub fn gold_count(&self, i: usize) -> u64 {
        (0..self.len()).map(|p| self.get(i, p)).sum()
    }

    pub fn pred_count(&self, i: usize) -> u64 {
        (0..self.len()).map(|g| self.get(g, i)).sum()
    }

    /// Adds counts from a matrix over the same label space.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::InvalidArgument(
                "merging confusion matrices over different label spaces".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion(golds: &[u32], preds: &[u32], labels: &[u32]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::Shape(format!(
            "{} gold labels vs {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(labels.to_vec())?;
    for (&g, &p) in golds.iter().zip(preds) {
        cm.record(g, p)?;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassRates {
    pub label: u32,
    pub support: u64,
    /// `None` when the class has no gold points.
    pub acc: Option<f64>,
    /// `None` when the class is absent from both gold and predictions.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    pub oa: f64,
    pub macc: f64,
    pub miou: f64,
    pub per_class: Vec<ClassRates>,
}

pub fn overall_and_per_class(cm: &ConfusionMatrix) -> Result<Rates> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassRates> = (0..cm.len())
        .map(|i| {
            let tp = cm.get(i, i);
            let gold = cm.gold_count(i);
            let pred = cm.pred_count(i);
            let union = gold + pred - tp;
            ClassRates {
                label: cm.labels[i],
                support: gold,
                acc: (gold > 0).then(|| 100.0 * tp as f64 / gold as f64),
                iou: (union > 0).then(|| 100.0 * tp as f64 / union as f64),
            }
        })
        .collect();
    let all: Vec<u32> = cm.labels.clone();
    let (macc, miou) = class_means(&per_class, &all);
    Ok(Rates {
        oa: 100.0 * cm.trace() as f64 / total as f64,
        macc,
        miou,
        per_class,
    })
}

/// Unweighted mACC and mIoU over the classes in `subset` that have gold
/// points; 0 when none do.
fn class_means(per_class: &[ClassRates], subset: &[u32]) -> (f64, f64) {
    let present: Vec<&ClassRates> = per_class
        .iter()
        .filter(|c| c.support > 0 && subset.contains(&c.label))
        .collect();
    if present.is_empty() {
        return (0.0, 0.0);
    }
    let n = present.len() as f64;
    let macc = present.iter().map(|c| c.acc.unwrap_or(0.0)).sum::<f64>() / n;
    let miou = present.iter().map(|c| c.iou.unwrap_or(0.0)).sum::<f64>() / n;
    (macc, miou)
}

/// Harmonic mean of a seen and an unseen rate; 0 when both are 0. Equal
/// inputs return themselves exactly.
pub fn harmonic(seen: f64, unseen: f64) -> f64 {
    if seen + unseen == 0.0 {
        0.0
    } else if seen == unseen {
        seen
    } else {
        2.0 * seen * unseen / (seen + unseen)
    }
}

fn round1<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((v * 10.0).round() / 10.0)
}

fn round1_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => round1(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    pub support: u64,
    #[serde(serialize_with = "round1_opt")]
    pub acc: Option<f64>,
    #[serde(serialize_with = "round1_opt")]
    pub iou: Option<f64>,
}

/// Evaluation summary. Seen-side fields are filled for C3DS and GZ3DS,
/// unseen-side fields for Z3DS and GZ3DS, harmonic fields only for GZ3DS.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: TaskMode,
    pub points: u64,
    #[serde(serialize_with = "round1")]
    pub oa: f64,
    #[serde(serialize_with = "round1")]
    pub macc: f64,
    #[serde(serialize_with = "round1")]
    pub miou: f64,
    #[serde(serialize_with = "round1_opt", skip_serializing_if = "Option::is_none")]
    pub macc_s: Option<f64>,
    #[serde(serialize_with = "round1_opt", skip_serializing_if = "Option::is_none")]
    pub macc_u: Option<f64>,
    #[serde(serialize_with = "round1_opt", skip_serializing_if = "Option::is_none")]
    pub hacc: Option<f64>,
    #[serde(serialize_with = "round1_opt", skip_serializing_if = "Option::is_none")]
    pub miou_s: Option<f64>,
    #[serde(serialize_with = "round1_opt", skip_serializing_if = "Option::is_none")]
    pub miou_u: Option<f64>,
    #[serde(serialize_with = "round1_opt", skip_serializing_if = "Option::is_none")]
    pub hiou: Option<f64>,
    pub per_class: Vec<ClassEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
}

impl EvalReport {
    /// Attaches the run configuration.
    pub fn with_config(mut self, config: &PipelineConfig) -> Self {
        self.config_hash = Some(config.hash_hex());
        self.seed = Some(config.seed);
        self.config = Some(config.clone());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Scores predictions against gold labels over the mode's label space.
pub fn evaluate(
    golds: &[u32],
    preds: &[u32],
    mode: TaskMode,
    split: &SplitSpec,
    catalog: &ClassCatalog,
) -> Result<EvalReport> {
    let labels = mode.label_space(split, catalog)?;
    let cm = confusion(golds, preds, &labels)?;
    let rates = overall_and_per_class(&cm)?;
    let seen = split.seen_ids(catalog)?;
    let unseen = split.unseen_ids(catalog)?;
    let (ms, is) = class_means(&rates.per_class, &seen);
    let (mu, iu) = class_means(&rates.per_class, &unseen);

    let (macc_s, miou_s, macc_u, miou_u, hacc, hiou) = match mode {
        TaskMode::C3ds => (Some(rates.macc), Some(rates.miou), None, None, None, None),
        TaskMode::Z3ds => (None, None, Some(rates.macc), Some(rates.miou), None, None),
        TaskMode::Gz3ds => (
            Some(ms),
            Some(is),
            Some(mu),
            Some(iu),
            Some(harmonic(ms, mu)),
            Some(harmonic(is, iu)),
        ),
    };
    let per_class = rates
        .per_class
        .iter()
        .map(|c| ClassEntry {
            id: c.label,
            name: catalog.name(c.label).unwrap_or_default().to_string(),
            support: c.support,
            acc: c.acc,
            iou: c.iou,
        })
        .collect();
    Ok(EvalReport {
        mode,
        points: cm.total(),
        oa: rates.oa,
        macc: rates.macc,
        miou: rates.miou,
        macc_s,
        macc_u,
        hacc,
        miou_s,
        miou_u,
        hiou,
        per_class,
        config_hash: None,
        seed: None,
        config: None,
    })
}
