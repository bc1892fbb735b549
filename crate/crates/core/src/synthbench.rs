//! Gaussian-mixture feature worlds with controllable semantic alignment and
//! an exact Bayes decision rule to compare learned classifiers against.

use serde::{Deserialize, Serialize};

use crate::config::{ClassifierConfig, GanConfig, MixupConfig, PipelineConfig, SynthesisConfig};
use crate::data::{ClassCatalog, LabeledFeatureSet, SemanticTable, SplitSpec};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// The embedding of a class is its mean: truncated when `d < b`,
    /// zero-padded when `d > b`.
    ClassMean,
    /// Independent standard normal embeddings.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    /// One mean per class, each of length `b`.
    pub means: Vec<Vec<f64>>,
    /// Isotropic standard deviation per class.
    pub stds: Vec<f64>,
    pub semantic_dim: usize,
    pub alignment: Alignment,
    pub samples_per_class: usize,
    /// Classes held out as unseen when a split is derived.
    #[serde(default)]
    pub unseen: Vec<u32>,
    pub seed: u64,
}

impl WorldSpec {
    /// Means at `distance / sqrt(2) * e_i`, so every pair is `distance` apart.
    pub fn simplex(classes: usize, dim: usize, distance: f64, std: f64, samples: usize, seed: u64) -> Self {
        let s = distance / 2f64.sqrt();
        let means = (0..classes)
            .map(|i| (0..dim).map(|j| if i == j { s } else { 0.0 }).collect())
            .collect();
        WorldSpec {
            means,
            stds: vec![std; classes],
            semantic_dim: dim,
            alignment: Alignment::ClassMean,
            samples_per_class: samples,
            unseen: Vec::new(),
            seed,
        }
    }

    /// Means on a circle of `radius` in the first two coordinates, at the
    /// given angles in degrees.
    pub fn ring(angles: &[f64], radius: f64, dim: usize, std: f64, samples: usize, seed: u64) -> Self {
        let means = angles
            .iter()
            .map(|a| {
                let t = a.to_radians();
                let mut m = vec![0.0; dim];
                m[0] = radius * t.cos();
                m[1] = radius * t.sin();
                m
            })
            .collect();
        WorldSpec {
            means,
            stds: vec![std; angles.len()],
            semantic_dim: dim,
            alignment: Alignment::ClassMean,
            samples_per_class: samples,
            unseen: Vec::new(),
            seed,
        }
    }

    /// Six classes on a regular hexagon with adjacent means 6 apart, in 16
    /// dimensions, std 1, semantics equal to the means; classes 1 and 4 unseen.
    pub fn default_world(seed: u64) -> Self {
        let angles: Vec<f64> = (0..6).map(|i| 60.0 * i as f64).collect();
        WorldSpec {
            unseen: vec![1, 4],
            ..Self::ring(&angles, 6.0, 16, 1.0, 2000, seed)
        }
    }

    /// Four seen classes at right angles and two unseen classes between the
    /// first pair, close enough to overlap.
    pub fn overlap_world(seed: u64) -> Self {
        WorldSpec {
            unseen: vec![4, 5],
            ..Self::ring(&[0.0, 90.0, 180.0, 270.0, 35.0, 55.0], 6.0, 16, 1.0, 2000, seed)
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        WorldSpec { seed, ..self.clone() }
    }

    pub fn with_samples(&self, samples_per_class: usize) -> Self {
        WorldSpec {
            samples_per_class,
            ..self.clone()
        }
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.feature_dim();
        if self.classes() < 2 {
            return Err(Error::InvalidArgument("a world needs at least 2 classes".into()));
        }
        if b == 0 || self.means.iter().any(|m| m.len() != b) {
            return Err(Error::Shape("class means must share a positive dimension".into()));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("class mean".into()));
        }
        if self.stds.len() != self.classes() || self.stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("one positive std per class required".into()));
        }
        if self.semantic_dim == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidArgument(
                "semantic_dim and samples_per_class must be >= 1".into(),
            ));
        }
        if let Some(&u) = self.unseen.iter().find(|&&u| u as usize >= self.classes()) {
            return Err(Error::LabelOutOfRange {
                label: u,
                classes: self.classes(),
            });
        }
        Ok(())
    }

    pub fn class_name(id: usize) -> String {
        format!("class{id}")
    }

    pub fn catalog(&self) -> ClassCatalog {
        ClassCatalog::new((0..self.classes()).map(Self::class_name)).expect("generated names are unique")
    }

    /// Seen/unseen split from `unseen`.
    pub fn split(&self) -> SplitSpec {
        let (mut seen, mut unseen) = (Vec::new(), Vec::new());
        for c in 0..self.classes() {
            if self.unseen.contains(&(c as u32)) {
                unseen.push(Self::class_name(c));
            } else {
                seen.push(Self::class_name(c));
            }
        }
        SplitSpec::new(seen, unseen).expect("generated split is disjoint")
    }
}

/// Settings sized for the synthetic worlds: the full-scale defaults
/// (300-D noise, 1024-unit layers, classifier batches of 4096 at lr 1e-4)
/// barely move on a few thousand 16-D points. Twenty critic updates per
/// generator update keep the generated class means from circling the true
/// ones, which otherwise shifts boundaries between nearby classes.
pub fn desk_config(seed: u64) -> PipelineConfig {
    let small = ClassifierConfig {
        epochs: 10,
        batch_size: 256,
        lr: 1e-3,
        hidden: vec![64],
    };
    PipelineConfig {
        gan: GanConfig {
            noise_dim: 16,
            generator_hidden: vec![64],
            discriminator_hidden: vec![64],
            critic_steps: 20,
            ..GanConfig::default()
        },
        mixup: MixupConfig::default(),
        classifier: small.clone(),
        v2s: small,
        synthesis: SynthesisConfig { per_class: 5000 },
        seed,
    }
}

pub struct World<T> {
    pub features: LabeledFeatureSet<T>,
    pub semantics: SemanticTable<T>,
    pub catalog: ClassCatalog,
}

/// Samples a world. Embeddings come from the first fork of the seed stream,
/// features from the second, so changing the alignment never moves samples.
pub fn make_world<T: Scalar>(spec: &WorldSpec) -> Result<World<T>> {
    spec.validate()?;
    let (c, b, d, n) = (
        spec.classes(),
        spec.feature_dim(),
        spec.semantic_dim,
        spec.samples_per_class,
    );
    let mut root = SeededRng::new(spec.seed);
    let mut sem_rng = root.fork();
    let mut feat_rng = root.fork();

    let catalog = spec.catalog();
    let mut semantics = SemanticTable::new(d);
    for (k, mean) in spec.means.iter().enumerate() {
        let e: Vec<T> = match spec.alignment {
            Alignment::ClassMean => (0..d).map(|j| T::lit(mean.get(j).copied().unwrap_or(0.0))).collect(),
            Alignment::Random => (0..d).map(|_| sem_rng.gaussian()).collect(),
        };
        semantics.insert(WorldSpec::class_name(k), e)?;
    }

    let mut data = Vec::with_capacity(c * n * b);
    let mut labels = Vec::with_capacity(c * n);
    for (k, mean) in spec.means.iter().enumerate() {
        let s = spec.stds[k];
        for _ in 0..n {
            data.extend(mean.iter().map(|&m| T::lit(m + s * feat_rng.gaussian::<f64>())));
            labels.push(k as u32);
        }
    }
    let features = LabeledFeatureSet::new(Tensor::new(c * n, b, data)?, labels, catalog.clone())?;
    Ok(World {
        features,
        semantics,
        catalog,
    })
}

fn log_likelihood(spec: &WorldSpec, k: usize, x: &[f64]) -> f64 {
    let s = spec.stds[k];
    let sq: f64 = spec.means[k].iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
    -(x.len() as f64) * s.ln() - sq / (2.0 * s * s)
}

/// Maximum-likelihood class under equal priors; ties go to the lower id.
pub fn bayes_oracle<T: Scalar>(spec: &WorldSpec, x: &[T]) -> Result<u32> {
    let all: Vec<u32> = (0..spec.classes() as u32).collect();
    bayes_oracle_in(spec, x, &all)
}

/// [`bayes_oracle`] restricted to `labels`.
pub fn bayes_oracle_in<T: Scalar>(spec: &WorldSpec, x: &[T], labels: &[u32]) -> Result<u32> {
    if x.len() != spec.feature_dim() {
        return Err(Error::Shape(format!(
            "point has {} values, world has {}",
            x.len(),
            spec.feature_dim()
        )));
    }
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let mut best: Option<(u32, f64)> = None;
    for &l in &sorted {
        if l as usize >= spec.classes() {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: spec.classes(),
            });
        }
        let ll = log_likelihood(spec, l as usize, &xf);
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((l, ll));
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::InvalidArgument("empty label space".into()))
}

/// Percentage of points the oracle labels correctly.
pub fn oracle_accuracy<T: Scalar>(spec: &WorldSpec, set: &LabeledFeatureSet<T>) -> Result<f64> {
    let all: Vec<u32> = (0..spec.classes() as u32).collect();
    oracle_accuracy_in(spec, set, &all)
}

/// [`oracle_accuracy`] with predictions restricted to `labels`.
pub fn oracle_accuracy_in<T: Scalar>(spec: &WorldSpec, set: &LabeledFeatureSet<T>, labels: &[u32]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty feature set".into()));
    }
    let mut hits = 0usize;
    for (i, &g) in set.labels().iter().enumerate() {
        if bayes_oracle_in(spec, set.feature(i), labels)? == g {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / set.len() as f64)
}
