use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AugmentationSpec;
use crate::metrics::NmiNormalization;

/// What the shrink loss pulls each sample toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkMode {
    /// Every center (the default).
    #[default]
    All,
    /// Only the nearest center.
    Nearest,
}

/// Every hyperparameter of a training run. Serialized as a flat key-value document;
/// field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_lr: f64,
    pub alpha: f64,
    /// Unset means every stage runs on the full graph as a single batch.
    pub batch_size: Option<usize>,
    pub latent_dim: usize,
    pub cluster_count: usize,
    pub seed: u64,
    pub feature_shuffle: bool,
    pub edge_dropout_rate: f64,
    pub feature_mask_rate: f64,
    /// L2-normalize embedding rows and centers before the clustering losses and assignment.
    pub normalize_embeddings: bool,
    pub lloyd_init_iters: usize,
    pub log_every: usize,
    pub encoder_depth: usize,
    pub shrink_mode: ShrinkMode,
    pub freeze_projector: bool,
    /// Return the best fine-tuning epoch (by ACC with labels, else by total loss).
    pub select_best: bool,
    /// Rows per inference batch; unset means one batch.
    pub infer_batch_size: Option<usize>,
    pub nmi_normalization: NmiNormalization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let aug = AugmentationSpec::default();
        Self {
            pretrain_epochs: 200,
            finetune_epochs: 200,
            pretrain_lr: 1e-3,
            finetune_lr: 1e-2,
            alpha: 1e-10,
            batch_size: None,
            latent_dim: 512,
            cluster_count: 2,
            seed: 0,
            feature_shuffle: aug.feature_shuffle,
            edge_dropout_rate: aug.edge_dropout_rate,
            feature_mask_rate: aug.feature_mask_rate,
            normalize_embeddings: true,
            lloyd_init_iters: 20,
            log_every: 1,
            encoder_depth: 1,
            shrink_mode: ShrinkMode::All,
            freeze_projector: false,
            select_best: true,
            infer_batch_size: None,
            nmi_normalization: NmiNormalization::Arithmetic,
        }
    }
}

/// Dataset-specific settings shipped with the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Cora,
    CiteSeer,
    AmazonPhoto,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Cora, Preset::CiteSeer, Preset::AmazonPhoto];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cora => "cora",
            Preset::CiteSeer => "citeseer",
            Preset::AmazonPhoto => "photo",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cora" => Ok(Preset::Cora),
            "citeseer" => Ok(Preset::CiteSeer),
            "photo" | "amazon-photo" | "amazon_photo" => Ok(Preset::AmazonPhoto),
            other => Err(Error::Argument(format!(
                "unknown preset '{other}' (expected cora, citeseer or photo)"
            ))),
        }
    }

    /// The preset's configuration; all other fields keep their defaults.
    pub fn config(self) -> TrainConfig {
        // (T, β, T', β', α, d, K)
        let (t, beta, t2, beta2, alpha, d, k) = match self {
            Preset::Cora => (200, 1e-3, 200, 1e-2, 1e-10, 512, 7),
            Preset::CiteSeer => (100, 5e-4, 200, 1e-2, 1e-10, 1536, 6),
            Preset::AmazonPhoto => (2000, 5e-4, 100, 1e-2, 1e-10, 512, 8),
        };
        TrainConfig {
            pretrain_epochs: t,
            pretrain_lr: beta,
            finetune_epochs: t2,
            finetune_lr: beta2,
            alpha,
            batch_size: None,
            latent_dim: d,
            cluster_count: k,
            ..TrainConfig::default()
        }
    }
}

impl TrainConfig {
    pub fn augmentation(&self) -> AugmentationSpec {
        AugmentationSpec {
            feature_shuffle: self.feature_shuffle,
            edge_dropout_rate: self.edge_dropout_rate,
            feature_mask_rate: self.feature_mask_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Argument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("pretrain_lr", self.pretrain_lr)?;
        positive("finetune_lr", self.finetune_lr)?;
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Argument(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.latent_dim == 0 || self.cluster_count == 0 || self.encoder_depth == 0 {
            return Err(Error::Argument(
                "latent_dim, cluster_count and encoder_depth must be at least 1".into(),
            ));
        }
        if self.batch_size == Some(0) || self.infer_batch_size == Some(0) {
            return Err(Error::Argument("batch sizes must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Argument("log_every must be at least 1".into()));
        }
        self.augmentation().validate()
    }

    fn parse_unchecked(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))
    }

    /// Parses and validates a flat TOML document; absent keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::parse_unchecked(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `self` with the keys present in `text` replaced; absent keys keep their
    /// current values rather than the defaults.
    pub fn overlay_toml_str(&self, text: &str) -> Result<Self> {
        // Rejects unknown keys and ill-typed values before merging.
        Self::parse_unchecked(text)?;
        let overrides: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::format("config", e.to_string()))?;
        let mut base = toml::Table::try_from(self).expect("config serializes");
        base.extend(overrides);
        let merged: Self = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::format("config", e.to_string()))?;
        merged.validate()?;
        Ok(merged)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        for p in Preset::ALL {
            p.config().validate().unwrap();
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
        }
    }

    #[test]
    fn flat_document_round_trip() {
        let mut cfg = Preset::Cora.config();
        cfg.batch_size = Some(256);
        cfg.shrink_mode = ShrinkMode::Nearest;
        let text = cfg.to_toml_string();
        assert!(text.contains("pretrain_epochs = 200"));
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let cfg = TrainConfig::from_toml_str("alpha = 0.5\nseed = 9\n").unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.latent_dim, TrainConfig::default().latent_dim);
    }

    #[test]
    fn overlay_keeps_base_values() {
        let base = Preset::CiteSeer.config();
        let cfg = base
            .overlay_toml_str("finetune_lr = 0.5\nbatch_size = 64\n")
            .unwrap();
        assert_eq!(cfg.finetune_lr, 0.5);
        assert_eq!(cfg.batch_size, Some(64));
        assert_eq!(cfg.latent_dim, 1536);
        assert!(base.overlay_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(TrainConfig::from_toml_str("learning_rate = 1.0").is_err());
        let cfg = TrainConfig {
            finetune_lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            edge_dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
