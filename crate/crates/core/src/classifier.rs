//! Classifiers trained on generated features, plus the visual-to-semantic
//! embedding baseline.
//!
//! A [`ClassifierModel`] only has outputs for its own label space, so a
//! model built for unseen classes cannot emit a seen class id and vice
//! versa.

use std::path::Path;

use crate::adam::AdamState;
use crate::condgan::CondGanModel;
use crate::config::ClassifierConfig;
use crate::data::{ClassCatalog, LabeledFeatureSet, SemanticTable};
use crate::error::{Error, Result};
use crate::fsio::{put_u32, put_u64, read_bytes, write_atomic, Reader};
use crate::graph::{log_softmax_rows, Graph};
use crate::mlp::{self, Activation, Layer, MlpParams};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CLASSIFIER_MAGIC: &[u8; 4] = b"SCPC";
pub const CLASSIFIER_VERSION: u32 = 1;

/// Generates `per_class` features for every class in `labels`, in label order.
pub fn synthesize_training_set<T: Scalar>(
    gan: &CondGanModel<T>,
    semantics: &SemanticTable<T>,
    catalog: &ClassCatalog,
    labels: &[u32],
    per_class: usize,
    rng: &mut SeededRng,
) -> Result<LabeledFeatureSet<T>> {
    if labels.is_empty() || per_class == 0 {
        return Err(Error::InvalidArgument(
            "synthesis needs at least one label and per_class >= 1".into(),
        ));
    }
    if semantics.dim() != gan.semantic_dim {
        return Err(Error::Shape(format!(
            "semantic table dim {} vs generator conditioning dim {}",
            semantics.dim(),
            gan.semantic_dim
        )));
    }
    let mut data = Vec::with_capacity(labels.len() * per_class * gan.feature_dim);
    let mut out_labels = Vec::with_capacity(labels.len() * per_class);
    for &label in labels {
        let name = catalog
            .name(label)
            .ok_or_else(|| Error::UnknownClass(format!("class id {label}")))?;
        let e = semantics.resolve(name)?;
        let rows = gan.generate(&e, rng, per_class)?;
        data.extend_from_slice(rows.data());
        out_labels.extend(std::iter::repeat_n(label, per_class));
    }
    let features = Tensor::new(out_labels.len(), gan.feature_dim, data)?;
    LabeledFeatureSet::new(features, out_labels, catalog.clone())
}

/// Softmax classifier over a fixed, sorted label space.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel<T> {
    pub params: MlpParams<T>,
    labels: Vec<u32>,
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn new(params: MlpParams<T>, labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty label space".into()));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("label space must be sorted and unique".into()));
        }
        if params.out_dim() != labels.len() {
            return Err(Error::Shape(format!(
                "{} outputs for {} labels",
                params.out_dim(),
                labels.len()
            )));
        }
        Ok(ClassifierModel { params, labels })
    }

    pub fn init(feature_dim: usize, labels: Vec<u32>, config: &ClassifierConfig, rng: &mut SeededRng) -> Result<Self> {
        let params = MlpParams::init(feature_dim, &config.hidden, labels.len(), Activation::leaky(), rng);
        Self::new(params, labels)
    }

    /// Always predicts `label`; used when a label space has one class.
    pub fn constant(feature_dim: usize, label: u32) -> Self {
        ClassifierModel {
            params: MlpParams::zeros(feature_dim, &[], 1),
            labels: vec![label],
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn feature_dim(&self) -> usize {
        self.params.in_dim()
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.params.forward(x)
    }

    pub fn predict(&self, x: &[T]) -> Result<u32> {
        if x.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "feature has {} values, classifier expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        Ok(self.predict_batch(&Tensor::row(x))?[0])
    }

    /// Argmax over the label space per row; ties go to the lower class id.
    pub fn predict_batch(&self, x: &Tensor<T>) -> Result<Vec<u32>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows())
            .map(|r| self.labels[argmax(logits.row_slice(r))])
            .collect())
    }

    /// Mean softmax cross-entropy on a labeled set.
    pub fn mean_loss(&self, set: &LabeledFeatureSet<T>) -> Result<f64> {
        let logits = self.logits(set.features())?;
        let lsm = log_softmax_rows(&logits);
        let mut total = 0.0;
        for (r, &l) in set.labels().iter().enumerate() {
            let col = self.column(l)?;
            total -= lsm.get(r, col).as_f64();
        }
        Ok(total / set.len() as f64)
    }

    fn column(&self, label: u32) -> Result<usize> {
        self.labels
            .binary_search(&label)
            .map_err(|_| Error::Data(format!("label {label} is outside the classifier's label space")))
    }

    pub fn encode(&self, config_hash: u64) -> Vec<u8> {
        encode_model(ModelKind::Softmax, &self.labels, &self.params, config_hash)
    }

    pub fn decode(bytes: &[u8]) -> Result<(Self, u64)> {
        let (kind, labels, params, hash) = decode_model(bytes)?;
        if kind != ModelKind::Softmax {
            return Err(Error::Data("checkpoint holds an embedding model".into()));
        }
        Ok((Self::new(params, labels)?, hash))
    }

    pub fn save(&self, path: &Path, config_hash: u64) -> Result<()> {
        write_atomic(path, &self.encode(config_hash))
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        Self::decode(&read_bytes(path)?)
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains a softmax classifier on the labels present in `features`.
pub fn train_classifier<T: Scalar>(
    features: &LabeledFeatureSet<T>,
    config: &ClassifierConfig,
    rng: &mut SeededRng,
) -> Result<ClassifierModel<T>> {
    let labels: Vec<u32> = features.indices_by_label().into_keys().collect();
    if labels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "classifier training needs at least 2 classes, got {}",
            labels.len()
        )));
    }
    let mut model = ClassifierModel::init(features.feature_dim(), labels, config, rng)?;
    let targets: Vec<usize> = features
        .labels()
        .iter()
        .map(|&l| model.column(l))
        .collect::<Result<_>>()?;
    let k = model.labels.len();
    let mut opt = AdamState::new(&model.params);
    let lr = T::lit(config.lr);

    for _ in 0..config.epochs {
        let order = rng.permutation(features.len());
        for chunk in order.chunks(config.batch_size) {
            let x = features.features().select_rows(chunk)?;
            let onehot = Tensor::from_fn(chunk.len(), k, |r, c| {
                if targets[chunk[r]] == c {
                    T::one()
                } else {
                    T::zero()
                }
            });
            let mut g = Graph::new();
            let net = model.params.bind(&mut g);
            let xi = g.constant(x);
            let logits = net.forward(&mut g, xi)?;
            let lsm = g.log_softmax(logits)?;
            let oh = g.constant(onehot);
            let picked = g.mul(lsm, oh)?;
            let s = g.sum(picked)?;
            let loss = g.scale(s, -T::one() / T::count(chunk.len()))?;
            let grads = g.gradients(loss, &net.params())?;
            opt.step(&mut model.params, &grads, lr)?;
        }
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ModelKind {
    Softmax = 0,
    Embedding = 1,
}

fn encode_model<T: Scalar>(kind: ModelKind, labels: &[u32], params: &MlpParams<T>, config_hash: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CLASSIFIER_MAGIC);
    put_u32(&mut out, CLASSIFIER_VERSION);
    put_u64(&mut out, config_hash);
    out.push(kind as u8);
    put_u32(&mut out, labels.len() as u32);
    for &l in labels {
        put_u32(&mut out, l);
    }
    mlp::encode_layout(params, &mut out);
    mlp::encode_payload(params, &mut out);
    out
}

fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<(ModelKind, Vec<u32>, MlpParams<T>, u64)> {
    let mut r = Reader::new(bytes, "classifier checkpoint");
    r.magic(CLASSIFIER_MAGIC)?;
    let version = r.u32()?;
    if version != CLASSIFIER_VERSION {
        return Err(Error::Version {
            format: "SCPC",
            version,
        });
    }
    let hash = r.u64()?;
    let kind = match r.u8()? {
        0 => ModelKind::Softmax,
        1 => ModelKind::Embedding,
        other => return Err(Error::Data(format!("unknown classifier kind {other}"))),
    };
    let n = r.u32()? as usize;
    if n > r.remaining() / 4 {
        return Err(Error::Truncated("classifier label space".into()));
    }
    let labels = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let mut params = mlp::decode_layout(&mut r)?;
    mlp::decode_payload(&mut params, &mut r)?;
    r.finish()?;
    Ok((kind, labels, params, hash))
}

/// Regression from features to class embeddings; classifies by cosine
/// similarity to the candidate classes' embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct V2sModel<T> {
    pub params: MlpParams<T>,
    /// Classes seen during training.
    pub trained_on: Vec<u32>,
}

impl<T: Scalar> V2sModel<T> {
    /// A fixed linear projection `x -> W x`.
    pub fn linear(weight: Tensor<T>) -> Result<Self> {
        let out = weight.rows();
        let params = MlpParams::from_layers(vec![Layer {
            weight,
            bias: Tensor::zeros(1, out),
            activation: Activation::Identity,
        }])?;
        Ok(V2sModel {
            params,
            trained_on: Vec::new(),
        })
    }

    pub fn embed(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.params.forward(x)
    }

    pub fn encode(&self, config_hash: u64) -> Vec<u8> {
        encode_model(ModelKind::Embedding, &self.trained_on, &self.params, config_hash)
    }

    pub fn decode(bytes: &[u8]) -> Result<(Self, u64)> {
        let (kind, trained_on, params, hash) = decode_model(bytes)?;
        if kind != ModelKind::Embedding {
            return Err(Error::Data("checkpoint holds a softmax classifier".into()));
        }
        Ok((V2sModel { params, trained_on }, hash))
    }
}

/// Least-squares regression of each feature onto its class embedding.
pub fn v2s_baseline_train<T: Scalar>(
    seen: &LabeledFeatureSet<T>,
    semantics: &SemanticTable<T>,
    config: &ClassifierConfig,
    rng: &mut SeededRng,
) -> Result<V2sModel<T>> {
    let by_label = seen.indices_by_label();
    if by_label.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "embedding baseline needs at least 2 classes, got {}",
            by_label.len()
        )));
    }
    let d = semantics.dim();
    let mut targets = Tensor::zeros(seen.len(), d);
    for (&label, rows) in &by_label {
        let name = seen.catalog().name(label).expect("labels are in the catalog");
        let e = semantics.resolve(name)?;
        for &r in rows {
            for (c, &v) in e.iter().enumerate() {
                targets.set(r, c, v);
            }
        }
    }

    let mut params = MlpParams::init(seen.feature_dim(), &config.hidden, d, Activation::leaky(), rng);
    let mut opt = AdamState::new(&params);
    let lr = T::lit(config.lr);
    for _ in 0..config.epochs {
        let order = rng.permutation(seen.len());
        for chunk in order.chunks(config.batch_size) {
            let mut g = Graph::new();
            let net = params.bind(&mut g);
            let x = g.constant(seen.features().select_rows(chunk)?);
            let y = g.constant(targets.select_rows(chunk)?);
            let out = net.forward(&mut g, x)?;
            let diff = g.sub(out, y)?;
            let sq = g.square(diff)?;
            let s = g.sum(sq)?;
            let loss = g.scale(s, T::one() / T::count(chunk.len()))?;
            let grads = g.gradients(loss, &net.params())?;
            opt.step(&mut params, &grads, lr)?;
        }
    }
    Ok(V2sModel {
        params,
        trained_on: by_label.into_keys().collect(),
    })
}

/// Candidate embeddings for a label space, in label order.
pub fn label_embeddings<T: Scalar>(
    semantics: &SemanticTable<T>,
    catalog: &ClassCatalog,
    labels: &[u32],
) -> Result<Vec<(u32, Vec<T>)>> {
    labels
        .iter()
        .map(|&l| {
            let name = catalog
                .name(l)
                .ok_or_else(|| Error::UnknownClass(format!("class id {l}")))?;
            Ok((l, semantics.resolve(name)?))
        })
        .collect()
}

/// Nearest candidate by cosine similarity; ties go to the lower class id.
pub fn v2s_predict<T: Scalar>(model: &V2sModel<T>, x: &[T], candidates: &[(u32, Vec<T>)]) -> Result<u32> {
    Ok(v2s_predict_batch(model, &Tensor::row(x), candidates)?[0])
}

pub fn v2s_predict_batch<T: Scalar>(
    model: &V2sModel<T>,
    x: &Tensor<T>,
    candidates: &[(u32, Vec<T>)],
) -> Result<Vec<u32>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate labels".into()));
    }
    if x.cols() != model.params.in_dim() {
        return Err(Error::Shape(format!(
            "feature has {} values, model expects {}",
            x.cols(),
            model.params.in_dim()
        )));
    }
    let mut sorted: Vec<&(u32, Vec<T>)> = candidates.iter().collect();
    sorted.sort_by_key(|c| c.0);
    let emb = model.embed(x)?;
    Ok((0..emb.rows())
        .map(|r| {
            let v = emb.row_slice(r);
            let scores: Vec<T> = sorted.iter().map(|(_, e)| cosine(v, e)).collect();
            sorted[argmax(&scores)].0
        })
        .collect())
}

fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na: T = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nb: T = b.iter().map(|&x| x * x).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot / (na * nb)
    }
}
