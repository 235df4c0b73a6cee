use serde::{Deserialize, Serialize};

use crate::diffnet::OptimizerConfig;
use crate::monitor::{MonitorConfig, StopConfig};

/// How the per-sample L1 change `‖f(x,z) − x‖₁` enters the mapping loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChangeReduction {
    /// Divided by the number of features.
    #[default]
    Mean,
    /// Summed over features.
    Sum,
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Number of subtypes (mapping directions).
    pub m: usize,
    /// Weight of the L1 change loss.
    pub mu: f64,
    /// Weight of the cluster loss.
    pub lambda: f64,
    pub change_reduction: ChangeReduction,
    /// Half-width of the weight box for the mapping and clustering networks.
    pub clip_c: f64,
    pub lr_discriminator: f64,
    pub lr_mapping: f64,
    pub lr_clustering: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 gradient-norm cap applied to each network before its step.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub max_epoch: usize,
    pub monitor: MonitorConfig,
    pub stop: StopConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            m: 4,
            mu: 5.0,
            lambda: 9.0,
            change_reduction: ChangeReduction::Mean,
            clip_c: 0.5,
            lr_discriminator: 0.0004,
            lr_mapping: 0.002,
            lr_clustering: 0.002,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: 1.0,
            batch_size: 64,
            max_epoch: 3000,
            monitor: MonitorConfig::default(),
            stop: StopConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    fn optimizer(&self, learning_rate: f64) -> OptimizerConfig {
        OptimizerConfig { learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn discriminator_optimizer(&self) -> OptimizerConfig {
        self.optimizer(self.lr_discriminator)
    }

    pub fn mapping_optimizer(&self) -> OptimizerConfig {
        self.optimizer(self.lr_mapping)
    }

    pub fn clustering_optimizer(&self) -> OptimizerConfig {
        self.optimizer(self.lr_clustering)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("clip_c", self.clip_c),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_mapping", self.lr_mapping),
            ("lr_clustering", self.lr_clustering),
            ("epsilon", self.epsilon),
            ("grad_clip", self.grad_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("mu", self.mu), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.m < 2 {
            return Err(format!("m must be at least 2, got {}", self.m));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        self.stop.validate()?;
        Ok(())
    }
}
