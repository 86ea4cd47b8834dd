use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Band counts of modality 1 (spectral) and modality 2 (elevation).
    pub bands: [usize; 2],
    pub classes: usize,
    pub cube_sizes: Vec<usize>,
    /// Feature width of the encoders and fusion stage.
    pub d: usize,
    /// Aligned spatial extent of every scale.
    pub s0: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Length of the directional `1×k` / `k×1` kernels.
    pub k: usize,
    pub shallow_width: usize,
    pub shallow_depth: usize,
    pub mapper_width: usize,
    /// Length of the mapped distributions; defaults to `classes`.
    pub d_z: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            bands: [16, 1],
            classes: 4,
            cube_sizes: vec![8, 16, 24],
            d: 64,
            s0: 8,
            d_model: 64,
            layers: 2,
            heads: 4,
            mlp_ratio: 2,
            k: 3,
            shallow_width: 32,
            shallow_depth: 3,
            mapper_width: 8,
            d_z: None,
        }
    }
}

impl ModelConfig {
    /// Reduced widths that keep every structural element.
    pub fn desk() -> Self {
        Self { d: 16, d_model: 32, shallow_width: 16, ..Self::default() }
    }

    pub fn d_z(&self) -> usize {
        self.d_z.unwrap_or(self.classes)
    }

    pub fn scales(&self) -> usize {
        self.cube_sizes.len()
    }

    pub fn tokens(&self) -> usize {
        self.s0 * self.s0 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("s0", self.s0),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("k", self.k),
            ("shallow_width", self.shallow_width),
            ("mapper_width", self.mapper_width),
            ("bands[0]", self.bands[0]),
            ("bands[1]", self.bands[1]),
        ];
        for (name, v) in positive {
            if v == 0 {
                return config(format!("{name} must be positive"));
            }
        }
        if self.classes < 2 {
            return config(format!("classes must be at least 2, got {}", self.classes));
        }
        if self.d_z() < 2 {
            return config("d_z must be at least 2");
        }
        if self.cube_sizes.is_empty() {
            return config("at least one cube size is required");
        }
        for (i, &s) in self.cube_sizes.iter().enumerate() {
            if s < self.s0 {
                return config(format!(
                    "scale {} has extent {s}, below the aligned size s0 = {}",
                    i + 1,
                    self.s0
                ));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return config(format!("{} heads do not divide d_model = {}", self.heads, self.d_model));
        }
        if self.k.is_multiple_of(2) {
            return config(format!("directional kernel length k = {} must be odd", self.k));
        }
        Ok(())
    }

    pub fn bottleneck_width(&self) -> usize {
        (self.d / 4).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::desk().validate().unwrap();
    }

    #[test]
    fn undersized_scale_is_named() {
        let c = ModelConfig { cube_sizes: vec![8, 4], ..Default::default() };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("scale 2"), "{msg}");
    }

    #[test]
    fn head_count_must_divide_width() {
        let c = ModelConfig { heads: 3, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
