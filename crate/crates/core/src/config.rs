//! Pipeline hyperparameters, stored as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_gp: f64,
    pub noise_dim: usize,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            epochs: 20,
            batch_size: 32,
            lr: 0.0005,
            lambda_gp: 10.0,
            noise_dim: 300,
            critic_steps: 5,
            generator_hidden: vec![1024],
            discriminator_hidden: vec![1024],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    /// Interpolated samples per real sample.
    pub gamma: f64,
    /// Number of closest classes a partner is drawn from.
    pub neighbors: usize,
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig {
            gamma: 0.5,
            neighbors: 3,
        }
    }
}

/// Settings for a softmax classifier or the embedding-regression baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 10,
            batch_size: 4096,
            lr: 0.0001,
            hidden: vec![256],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Generated features per class.
    pub per_class: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { per_class: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gan: GanConfig,
    pub mixup: MixupConfig,
    pub classifier: ClassifierConfig,
    pub v2s: ClassifierConfig,
    pub synthesis: SynthesisConfig,
    pub seed: u64,
}

impl PipelineConfig {
    /// Epoch counts may be zero (the model stays at its initialization);
    /// every other count must be positive.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("gan.batch_size", self.gan.batch_size),
            ("gan.noise_dim", self.gan.noise_dim),
            ("gan.critic_steps", self.gan.critic_steps),
            ("mixup.neighbors", self.mixup.neighbors),
            ("classifier.batch_size", self.classifier.batch_size),
            ("v2s.batch_size", self.v2s.batch_size),
            ("synthesis.per_class", self.synthesis.per_class),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        let widths = self
            .gan
            .generator_hidden
            .iter()
            .chain(&self.gan.discriminator_hidden)
            .chain(&self.classifier.hidden)
            .chain(&self.v2s.hidden);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        for (name, v) in [
            ("gan.lr", self.gan.lr),
            ("classifier.lr", self.classifier.lr),
            ("v2s.lr", self.v2s.lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.gan.lambda_gp >= 0.0 && self.gan.lambda_gp.is_finite()) {
            return Err(Error::InvalidArgument("gan.lambda_gp must be >= 0".into()));
        }
        if !(self.mixup.gamma >= 0.0 && self.mixup.gamma.is_finite()) {
            return Err(Error::InvalidArgument("mixup.gamma must be >= 0".into()));
        }
        Ok(())
    }

    /// Stable 64-bit digest of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_training_schedule() {
        let c = PipelineConfig::default();
        assert_eq!((c.gan.epochs, c.gan.batch_size, c.gan.lr), (20, 32, 0.0005));
        assert_eq!(c.gan.lambda_gp, 10.0);
        assert_eq!(
            (c.classifier.epochs, c.classifier.batch_size, c.classifier.lr),
            (10, 4096, 0.0001)
        );
        assert_eq!(c.gan.noise_dim, 300);
        assert_eq!(c.gan.critic_steps, 5);
        assert_eq!(c.mixup.neighbors, 3);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = PipelineConfig::from_json(r#"{"mixup": {"gamma": 0.0}, "seed": 9}"#).unwrap();
        assert_eq!(c.mixup.gamma, 0.0);
        assert_eq!(c.mixup.neighbors, 3);
        assert_eq!(c.seed, 9);
        assert_eq!(c.gan, GanConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_json(r#"{"gan": {"epochs": 0}}"#).is_ok());
        assert!(PipelineConfig::from_json(r#"{"gan": {"batch_size": 0}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"mixup": {"gamma": -0.1}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"classifier": {"lr": 0}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.mixup.gamma = 0.0;
        assert_ne!(a.hash(), b.hash());
    }
}
