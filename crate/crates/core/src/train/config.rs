use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::model::ModelConfig;

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub step_size: usize,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    /// Stop gradients from the distillation term into the fused classifier.
    pub detach_teacher: bool,
    /// Softmax temperature applied to both sides of the distillation term.
    pub temperature: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub checkpoint_every: usize,
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            seed: 0,
            epochs: 500,
            batch_size: 64,
            lr: 1e-4,
            weight_decay: 1e-3,
            step_size: 50,
            gamma: 0.9,
            lambda1: 1.0,
            lambda2: 0.01,
            lambda3: 1.0,
            lambda4: 0.1,
            detach_teacher: false,
            temperature: 1.0,
            train_per_class: 20,
            val_per_class: 8,
            checkpoint_every: 50,
            eval_batch: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("step_size", self.step_size),
            ("checkpoint_every", self.checkpoint_every),
            ("eval_batch", self.eval_batch),
        ] {
            if v == 0 {
                return config(format!("{name} must be positive"));
            }
        }
        if self.batch_size < 2 {
            return config("batch_size must be at least 2 (batch statistics need two samples)");
        }
        for (name, v) in [("lr", self.lr), ("gamma", self.gamma), ("temperature", self.temperature)] {
            if !(v.is_finite() && v > 0.0) {
                return config(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return config(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.train_per_class < 1 {
            return config("train_per_class must be at least 1");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| crate::Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c = TrainConfig::from_json(r#"{"epochs": 3, "model": {"d": 8}}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.model.d, 8);
        assert_eq!(c.lr, 1e-4);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(TrainConfig::from_json(r#"{"epoch": 3}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"lambda2": -1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"batch_size": 1}"#).is_err());
    }
}
