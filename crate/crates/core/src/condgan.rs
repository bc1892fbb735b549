//! Conditional WGAN-GP over feature vectors.
//!
//! The generator maps `[semantic | noise]` to a feature vector; the critic
//! scores `[feature | semantic]`. The critic minimizes
//! `mean D(fake) - mean D(real) + lambda * mean (|grad D(x_hat)| - 1)^2`
//! where `x_hat` interpolates real and fake rows with a per-row
//! `alpha ~ U(0, 1)`; the generator minimizes `-mean D(fake)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::config::GanConfig;
use crate::error::{Error, Result};
use crate::fsio::{put_u32, put_u64, read_bytes, write_atomic, Reader};
use crate::graph::Graph;
use crate::mlp::{self, Activation, MlpGrads, MlpParams};
use crate::rng::{sample_gaussian, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const GAN_MAGIC: &[u8; 4] = b"SCPG";
pub const GAN_VERSION: u32 = 1;

/// A feature paired with the semantic vector it is conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedFeature<T> {
    pub feature: Vec<T>,
    pub semantic: Vec<T>,
    /// Class the pair is grouped under for balanced sampling. For mixup
    /// pairs this is the anchor class.
    pub class: u32,
}

/// Per-epoch averages of the training losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub penalty: f64,
    pub wasserstein_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondGanModel<T> {
    pub generator: MlpParams<T>,
    pub discriminator: MlpParams<T>,
    pub noise_dim: usize,
    pub feature_dim: usize,
    pub semantic_dim: usize,
    pub log: Vec<EpochLog>,
}

impl<T: Scalar> CondGanModel<T> {
    /// Fresh networks: generator first, then critic, both drawn from `rng`.
    pub fn init(feature_dim: usize, semantic_dim: usize, config: &GanConfig, rng: &mut SeededRng) -> Self {
        let generator = MlpParams::init(
            semantic_dim + config.noise_dim,
            &config.generator_hidden,
            feature_dim,
            Activation::leaky(),
            rng,
        );
        let discriminator = MlpParams::init(
            feature_dim + semantic_dim,
            &config.discriminator_hidden,
            1,
            Activation::leaky(),
            rng,
        );
        CondGanModel {
            generator,
            discriminator,
            noise_dim: config.noise_dim,
            feature_dim,
            semantic_dim,
            log: Vec::new(),
        }
    }

    /// Assembles a model from explicit networks, checking the dimension chain.
    pub fn from_parts(generator: MlpParams<T>, discriminator: MlpParams<T>, noise_dim: usize) -> Result<Self> {
        let feature_dim = generator.out_dim();
        let semantic_dim = generator
            .in_dim()
            .checked_sub(noise_dim)
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Shape("generator input narrower than the noise".into()))?;
        if discriminator.in_dim() != feature_dim + semantic_dim || discriminator.out_dim() != 1 {
            return Err(Error::Shape(format!(
                "critic must map {} -> 1, maps {} -> {}",
                feature_dim + semantic_dim,
                discriminator.in_dim(),
                discriminator.out_dim()
            )));
        }
        Ok(CondGanModel {
            generator,
            discriminator,
            noise_dim,
            feature_dim,
            semantic_dim,
            log: Vec::new(),
        })
    }

    fn check_semantic(&self, semantic: &[T]) -> Result<()> {
        if semantic.len() != self.semantic_dim {
            return Err(Error::Shape(format!(
                "semantic vector has {} values, model expects {}",
                semantic.len(),
                self.semantic_dim
            )));
        }
        Ok(())
    }

    /// Generator input rows `[semantic_i | z_i]` with fresh noise.
    fn generator_input(&self, semantics: &Tensor<T>, rng: &mut SeededRng) -> Result<Tensor<T>> {
        let z = sample_gaussian(rng, semantics.rows(), self.noise_dim);
        semantics.concat_cols(&z)
    }

    /// `count` samples `G(semantic, z_k)` with independent noise.
    pub fn generate(&self, semantic: &[T], rng: &mut SeededRng, count: usize) -> Result<Tensor<T>> {
        self.check_semantic(semantic)?;
        if count == 0 {
            return Err(Error::InvalidArgument("generate needs count >= 1".into()));
        }
        let e = Tensor::from_fn(count, self.semantic_dim, |_, c| semantic[c]);
        self.generate_rows(&e, rng)
    }

    /// One generated feature per semantic row.
    pub fn generate_rows(&self, semantics: &Tensor<T>, rng: &mut SeededRng) -> Result<Tensor<T>> {
        if semantics.cols() != self.semantic_dim {
            return Err(Error::Shape(format!(
                "semantic rows have {} columns, model expects {}",
                semantics.cols(),
                self.semantic_dim
            )));
        }
        let input = self.generator_input(semantics, rng)?;
        self.generator.forward(&input)
    }

    pub fn encode(&self, config_hash: u64) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GAN_MAGIC);
        put_u32(&mut out, GAN_VERSION);
        put_u64(&mut out, config_hash);
        put_u32(&mut out, self.noise_dim as u32);
        put_u32(&mut out, self.feature_dim as u32);
        put_u32(&mut out, self.semantic_dim as u32);
        mlp::encode_layout(&self.generator, &mut out);
        mlp::encode_layout(&self.discriminator, &mut out);
        mlp::encode_payload(&self.generator, &mut out);
        mlp::encode_payload(&self.discriminator, &mut out);
        out
    }

    /// Decodes a checkpoint, returning the model and its config hash.
    pub fn decode(bytes: &[u8]) -> Result<(Self, u64)> {
        let mut r = Reader::new(bytes, "generator checkpoint");
        r.magic(GAN_MAGIC)?;
        let version = r.u32()?;
        if version != GAN_VERSION {
            return Err(Error::Version {
                format: "SCPG",
                version,
            });
        }
        let hash = r.u64()?;
        let noise_dim = r.u32()? as usize;
        let feature_dim = r.u32()? as usize;
        let semantic_dim = r.u32()? as usize;
        let mut generator = mlp::decode_layout(&mut r)?;
        let mut discriminator = mlp::decode_layout(&mut r)?;
        mlp::decode_payload(&mut generator, &mut r)?;
        mlp::decode_payload(&mut discriminator, &mut r)?;
        r.finish()?;
        let model = Self::from_parts(generator, discriminator, noise_dim)?;
        if model.feature_dim != feature_dim || model.semantic_dim != semantic_dim {
            return Err(Error::Data("checkpoint header disagrees with its networks".into()));
        }
        Ok((model, hash))
    }

    pub fn save(&self, path: &Path, config_hash: u64) -> Result<()> {
        write_atomic(path, &self.encode(config_hash))
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        Self::decode(&read_bytes(path)?)
    }

    /// Training log as JSON lines, one object per epoch.
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.log {
            writeln!(out, "{}", serde_json::to_string(entry).expect("log serializes")).unwrap();
        }
        out
    }
}

/// `alpha * x + (1 - alpha) * x_bar`.
pub fn interpolate_hat<T: Scalar>(x: &[T], x_bar: &[T], alpha: T) -> Result<Vec<T>> {
    if x.len() != x_bar.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), x_bar.len())));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(x.iter()
        .zip(x_bar)
        .map(|(&a, &b)| alpha * a + (T::one() - alpha) * b)
        .collect())
}

/// A batch of real pairs as `features` (`n x b`) and `semantics` (`n x d`).
#[derive(Clone, Debug)]
pub struct RealBatch<T> {
    pub features: Tensor<T>,
    pub semantics: Tensor<T>,
}

impl<T: Scalar> RealBatch<T> {
    pub fn from_pairs(pairs: &[&ConditionedFeature<T>]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let features = Tensor::from_rows(&pairs.iter().map(|p| &p.feature[..]).collect::<Vec<_>>())?;
        let semantics = Tensor::from_rows(&pairs.iter().map(|p| &p.semantic[..]).collect::<Vec<_>>())?;
        Ok(RealBatch { features, semantics })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct CriticLoss<T> {
    pub loss: T,
    /// `mean D(fake) - mean D(real)`.
    pub wasserstein_gap: T,
    /// `mean (|grad D(x_hat)| - 1)^2`, before weighting.
    pub penalty: T,
    /// Gradients for the critic's parameters.
    pub grads: MlpGrads<T>,
}

#[derive(Clone, Debug)]
pub struct GeneratorLoss<T> {
    pub loss: T,
    /// Gradients for the generator's parameters.
    pub grads: MlpGrads<T>,
}

/// Critic objective on a real batch. Fake rows come from the current
/// generator, drawn from `rng` before the interpolation weights.
pub fn critic_loss<T: Scalar>(
    model: &CondGanModel<T>,
    real: &RealBatch<T>,
    lambda: T,
    rng: &mut SeededRng,
) -> Result<CriticLoss<T>> {
    let fake = model.generate_rows(&real.semantics, rng)?;
    let alpha: Vec<T> = (0..real.len()).map(|_| rng.uniform()).collect();
    critic_loss_with(model, real, &fake, &alpha, lambda)
}

/// Critic objective with explicit fake rows and interpolation weights.
pub fn critic_loss_with<T: Scalar>(
    model: &CondGanModel<T>,
    real: &RealBatch<T>,
    fake: &Tensor<T>,
    alpha: &[T],
    lambda: T,
) -> Result<CriticLoss<T>> {
    let n = real.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if fake.shape() != real.features.shape() || alpha.len() != n {
        return Err(Error::Shape("fake rows / alpha do not match the batch".into()));
    }
    if real.features.cols() != model.feature_dim || real.semantics.cols() != model.semantic_dim {
        return Err(Error::Shape("batch dimensions do not match the model".into()));
    }
    let b = model.feature_dim;
    let hat = Tensor::from_fn(n, b, |r, c| {
        alpha[r] * real.features.get(r, c) + (T::one() - alpha[r]) * fake.get(r, c)
    });

    let mut g = Graph::new();
    let critic = model.discriminator.bind(&mut g);
    let e = g.constant(real.semantics.clone());

    let x_real = g.constant(real.features.clone());
    let in_real = g.concat_cols(x_real, e)?;
    let d_real = critic.forward(&mut g, in_real)?;
    let mean_real = g.mean(d_real)?;

    let x_fake = g.constant(fake.clone());
    let in_fake = g.concat_cols(x_fake, e)?;
    let d_fake = critic.forward(&mut g, in_fake)?;
    let mean_fake = g.mean(d_fake)?;

    let gap = g.sub(mean_fake, mean_real)?;

    // The penalty differentiates the critic with respect to x_hat only.
    let x_hat = g.variable(hat);
    let in_hat = g.concat_cols(x_hat, e)?;
    let d_hat = critic.forward(&mut g, in_hat)?;
    let total_hat = g.sum(d_hat)?;
    let grad_hat = g.grad(total_hat, &[x_hat], true)?[0];
    let norm = g.row_norm(grad_hat)?;
    let dev = g.add_scalar(norm, -T::one())?;
    let sq = g.square(dev)?;
    let penalty = g.mean(sq)?;

    let weighted = g.scale(penalty, lambda)?;
    let loss = g.add(gap, weighted)?;
    let grads = g.gradients(loss, &critic.params())?;

    let loss_v = g.value(loss).item()?;
    if !loss_v.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    Ok(CriticLoss {
        loss: loss_v,
        wasserstein_gap: g.value(gap).item()?,
        penalty: g.value(penalty).item()?,
        grads,
    })
}

/// Generator objective `-mean D(G(e, z), e)` for the given semantic rows.
pub fn generator_loss<T: Scalar>(
    model: &CondGanModel<T>,
    semantics: &Tensor<T>,
    rng: &mut SeededRng,
) -> Result<GeneratorLoss<T>> {
    if semantics.cols() != model.semantic_dim {
        return Err(Error::Shape("semantic rows do not match the model".into()));
    }
    let input = model.generator_input(semantics, rng)?;
    generator_loss_with(model, &input)
}

/// Generator objective on explicit `[semantic | noise]` input rows.
pub fn generator_loss_with<T: Scalar>(model: &CondGanModel<T>, input: &Tensor<T>) -> Result<GeneratorLoss<T>> {
    let mut g = Graph::new();
    let generator = model.generator.bind(&mut g);
    let critic = model.discriminator.bind_frozen(&mut g);
    let x_in = g.constant(input.clone());
    let fake = generator.forward(&mut g, x_in)?;
    let e = g.slice_cols(x_in, 0, model.semantic_dim)?;
    let d_in = g.concat_cols(fake, e)?;
    let d = critic.forward(&mut g, d_in)?;
    let m = g.mean(d)?;
    let loss = g.scale(m, -T::one())?;
    let grads = g.gradients(loss, &generator.params())?;
    let loss_v = g.value(loss).item()?;
    if !loss_v.is_finite() {
        return Err(Error::NonFinite("generator loss".into()));
    }
    Ok(GeneratorLoss { loss: loss_v, grads })
}

/// Draws `n` pairs: a class uniformly, then a member of that class uniformly.
struct BalancedSampler {
    groups: Vec<Vec<usize>>,
}

impl BalancedSampler {
    fn new<T>(data: &[ConditionedFeature<T>]) -> Self {
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, p) in data.iter().enumerate() {
            by_class.entry(p.class).or_default().push(i);
        }
        BalancedSampler {
            groups: by_class.into_values().collect(),
        }
    }

    fn draw(&self, n: usize, rng: &mut SeededRng) -> Vec<usize> {
        (0..n)
            .map(|_| {
                let g = &self.groups[rng.index(self.groups.len())];
                g[rng.index(g.len())]
            })
            .collect()
    }
}

/// Adversarial training. Each epoch runs `ceil(N / batch)` generator
/// updates, each preceded by `critic_steps` critic updates on fresh
/// class-balanced batches.
pub fn train<T: Scalar>(
    data: &[ConditionedFeature<T>],
    config: &GanConfig,
    rng: &mut SeededRng,
) -> Result<CondGanModel<T>> {
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty GAN training set".into()))?;
    let (b, d) = (first.feature.len(), first.semantic.len());
    if b == 0 || d == 0 {
        return Err(Error::Shape("empty feature or semantic vectors".into()));
    }
    for (i, p) in data.iter().enumerate() {
        if p.feature.len() != b || p.semantic.len() != d {
            return Err(Error::Shape(format!("training pair {i} has inconsistent dimensions")));
        }
    }
    let mut model = CondGanModel::init(b, d, config, rng);
    train_from(&mut model, data, config, rng)?;
    Ok(model)
}

/// Continues training an existing model, appending to its log.
pub fn train_from<T: Scalar>(
    model: &mut CondGanModel<T>,
    data: &[ConditionedFeature<T>],
    config: &GanConfig,
    rng: &mut SeededRng,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty GAN training set".into()));
    }
    let sampler = BalancedSampler::new(data);
    let lambda = T::lit(config.lambda_gp);
    let lr = T::lit(config.lr);
    let mut critic_opt = AdamState::new(&model.discriminator);
    let mut gen_opt = AdamState::new(&model.generator);
    let iters = data.len().div_ceil(config.batch_size);
    let start = model.log.len();

    for epoch in 0..config.epochs {
        let (mut c_sum, mut gap_sum, mut pen_sum, mut g_sum) = (0.0, 0.0, 0.0, 0.0);
        let mut c_steps = 0usize;
        for _ in 0..iters {
            for _ in 0..config.critic_steps {
                let idx = sampler.draw(config.batch_size, rng);
                let pairs: Vec<&ConditionedFeature<T>> = idx.iter().map(|&i| &data[i]).collect();
                let batch = RealBatch::from_pairs(&pairs)?;
                let cl =
                    critic_loss(model, &batch, lambda, rng).map_err(|e| diagnose(e, epoch + start + 1, "critic"))?;
                critic_opt.step(&mut model.discriminator, &cl.grads, lr)?;
                c_sum += cl.loss.as_f64();
                gap_sum += cl.wasserstein_gap.as_f64();
                pen_sum += cl.penalty.as_f64();
                c_steps += 1;
            }
            let idx = sampler.draw(config.batch_size, rng);
            let sem = Tensor::from_rows(&idx.iter().map(|&i| &data[i].semantic[..]).collect::<Vec<_>>())?;
            let gl = generator_loss(model, &sem, rng).map_err(|e| diagnose(e, epoch + start + 1, "generator"))?;
            gen_opt.step(&mut model.generator, &gl.grads, lr)?;
            g_sum += gl.loss.as_f64();
        }
        let cs = c_steps.max(1) as f64;
        model.log.push(EpochLog {
            epoch: start + epoch + 1,
            critic_loss: c_sum / cs,
            generator_loss: g_sum / iters as f64,
            penalty: pen_sum / cs,
            wasserstein_gap: gap_sum / cs,
        });
    }
    Ok(())
}

fn diagnose(e: Error, epoch: usize, side: &str) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} ({side} step, epoch {epoch})")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Layer;

    fn tiny_config() -> GanConfig {
        GanConfig {
            epochs: 1,
            batch_size: 4,
            noise_dim: 2,
            critic_steps: 2,
            generator_hidden: vec![5],
            discriminator_hidden: vec![6],
            ..GanConfig::default()
        }
    }

    fn linear(weight: Vec<f64>, in_dim: usize) -> MlpParams<f64> {
        MlpParams::from_layers(vec![Layer {
            weight: Tensor::new(weight.len() / in_dim, in_dim, weight).unwrap(),
            bias: Tensor::zeros(1, 1),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn batch(rows: usize) -> RealBatch<f64> {
        let mut rng = SeededRng::new(99);
        RealBatch {
            features: sample_gaussian(&mut rng, rows, 2),
            semantics: sample_gaussian(&mut rng, rows, 3),
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let x = [0.0, 2.0];
        let xb = [2.0, 0.0];
        assert_eq!(interpolate_hat(&x, &xb, 1.0).unwrap(), x.to_vec());
        assert_eq!(interpolate_hat(&x, &xb, 0.0).unwrap(), xb.to_vec());
        assert_eq!(interpolate_hat(&x, &xb, 0.5).unwrap(), vec![1.0, 1.0]);
        assert!(interpolate_hat(&x, &xb, 1.5).is_err());
        assert!(interpolate_hat(&x, &xb, -0.1).is_err());
        assert!(interpolate_hat(&x, &[1.0], 0.5).is_err());
    }

    #[test]
    fn zero_generator_generates_zeros() {
        let model =
            CondGanModel::from_parts(MlpParams::<f64>::zeros(5, &[4], 2), MlpParams::zeros(5, &[3], 1), 2).unwrap();
        let out = model.generate(&[1.0, -3.0, 2.0], &mut SeededRng::new(1), 7).unwrap();
        assert_eq!(out.shape(), [7, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(model.generate(&[1.0], &mut SeededRng::new(1), 7).is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let model = CondGanModel::<f64>::init(2, 3, &tiny_config(), &mut SeededRng::new(3));
        let a = model.generate(&[1.0, 0.0, 0.5], &mut SeededRng::new(8), 16).unwrap();
        let b = model.generate(&[1.0, 0.0, 0.5], &mut SeededRng::new(8), 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_critic_has_unit_penalty() {
        let model = CondGanModel::from_parts(
            MlpParams::<f64>::init(5, &[4], 2, Activation::leaky(), &mut SeededRng::new(1)),
            MlpParams::zeros(5, &[3], 1),
            2,
        )
        .unwrap();
        let cl = critic_loss(&model, &batch(8), 10.0, &mut SeededRng::new(2)).unwrap();
        assert_eq!(cl.penalty, 1.0);
        assert_eq!(cl.wasserstein_gap, 0.0);
        assert_eq!(cl.loss, 10.0);
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        // D(x, e) = 0.6 x0 + 0.8 x1, ignoring e.
        let critic = linear(vec![0.6, 0.8, 0.0, 0.0, 0.0], 5);
        let model = CondGanModel::from_parts(
            MlpParams::<f64>::init(5, &[4], 2, Activation::leaky(), &mut SeededRng::new(1)),
            critic,
            2,
        )
        .unwrap();
        let cl = critic_loss(&model, &batch(8), 10.0, &mut SeededRng::new(2)).unwrap();
        assert!(cl.penalty.abs() < 1e-15, "penalty {}", cl.penalty);
        assert!((cl.loss - cl.wasserstein_gap - 10.0 * cl.penalty).abs() < 1e-12);
    }

    #[test]
    fn zero_critic_gives_zero_generator_loss() {
        let model = CondGanModel::from_parts(
            MlpParams::<f64>::init(5, &[4], 2, Activation::leaky(), &mut SeededRng::new(1)),
            MlpParams::zeros(5, &[3], 1),
            2,
        )
        .unwrap();
        let gl = generator_loss(&model, &batch(6).semantics, &mut SeededRng::new(4)).unwrap();
        assert_eq!(gl.loss, 0.0);
        assert!(gl.grads.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn sum_critic_and_zero_generator() {
        // D(x, e) = x0 + x1; G == 0.
        let model = CondGanModel::from_parts(
            MlpParams::<f64>::zeros(5, &[4], 2),
            linear(vec![1.0, 1.0, 0.0, 0.0, 0.0], 5),
            2,
        )
        .unwrap();
        let gl = generator_loss(&model, &batch(6).semantics, &mut SeededRng::new(4)).unwrap();
        assert_eq!(gl.loss, 0.0);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data: Vec<ConditionedFeature<f64>> = (0..10)
            .map(|i| ConditionedFeature {
                feature: vec![i as f64, 1.0],
                semantic: vec![1.0, 0.0, 0.0],
                class: 0,
            })
            .collect();
        let cfg = GanConfig {
            epochs: 0,
            ..tiny_config()
        };
        let trained = train(&data, &cfg, &mut SeededRng::new(5)).unwrap();
        let init = CondGanModel::init(2, 3, &cfg, &mut SeededRng::new(5));
        assert_eq!(trained, init);
        assert!(trained.log.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let data: Vec<ConditionedFeature<f64>> = (0..12)
            .map(|i| ConditionedFeature {
                feature: vec![(i % 3) as f64, 1.0],
                semantic: vec![(i % 2) as f64, 1.0, 0.0],
                class: (i % 2) as u32,
            })
            .collect();
        let cfg = GanConfig {
            epochs: 2,
            ..tiny_config()
        };
        let a = train(&data, &cfg, &mut SeededRng::new(6)).unwrap();
        let b = train(&data, &cfg, &mut SeededRng::new(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), 2);
        for e in &a.log {
            assert!(e.penalty >= 0.0);
            let recombined = e.wasserstein_gap + cfg.lambda_gp * e.penalty;
            assert!((recombined - e.critic_loss).abs() < 1e-12);
        }
        assert_eq!(a.log_jsonl().lines().count(), 2);
    }

    #[test]
    fn rejects_empty_and_ragged_data() {
        let cfg = tiny_config();
        assert!(train::<f64>(&[], &cfg, &mut SeededRng::new(1)).is_err());
        let ragged = vec![
            ConditionedFeature {
                feature: vec![1.0, 2.0],
                semantic: vec![1.0],
                class: 0,
            },
            ConditionedFeature {
                feature: vec![1.0],
                semantic: vec![1.0],
                class: 0,
            },
        ];
        assert!(train(&ragged, &cfg, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = CondGanModel::<f64>::init(2, 3, &tiny_config(), &mut SeededRng::new(3));
        let bytes = model.encode(0xdead_beef);
        let (back, hash) = CondGanModel::<f64>::decode(&bytes).unwrap();
        assert_eq!(hash, 0xdead_beef);
        assert_eq!(back, model);
        assert!(matches!(CondGanModel::<f64>::decode(b"SCPC"), Err(Error::BadMagic(_))));
        assert!(matches!(
            CondGanModel::<f64>::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
    }
}
