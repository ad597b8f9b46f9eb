use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Max,
    Attentive,
}

/// Architecture switches and hyperparameters. Defaults are the tuned values
/// for the full-size model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_w: usize,
    pub d_p: usize,
    pub d_c: usize,
    pub k: usize,
    pub d_h: usize,
    pub pooling: Pooling,
    pub use_gru: bool,
    pub dropout_p: f64,
    pub l2_beta: f64,
    /// Output classes in index order. Filled from the pair schema when empty.
    pub class_names: Vec<String>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_w: 100,
            d_p: 10,
            d_c: 200,
            k: 3,
            d_h: 100,
            pooling: Pooling::Max,
            use_gru: true,
            dropout_p: 0.5,
            l2_beta: 0.0001,
            class_names: Vec::new(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Max-pooled convolution without the recurrent layer.
    pub fn cnn_baseline() -> Self {
        Self {
            use_gru: false,
            pooling: Pooling::Max,
            ..Self::default()
        }
    }

    pub fn token_dim(&self) -> usize {
        self.d_w + 2 * self.d_p
    }

    /// Size of the pooled sentence representation: `2·d_h` with the
    /// bidirectional GRU, `d_c` without it.
    pub fn pooled_dim(&self) -> usize {
        if self.use_gru {
            2 * self.d_h
        } else {
            self.d_c
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_w", self.d_w),
            ("d_p", self.d_p),
            ("d_c", self.d_c),
            ("k", self.k),
            ("d_h", self.d_h),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.pooling == Pooling::Attentive && !self.use_gru {
            return Err(Error::Config(
                "attentive pooling requires use_gru = true".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.l2_beta >= 0.0 && self.l2_beta.is_finite()) {
            return Err(Error::Config(format!(
                "l2_beta must be finite and non-negative, got {}",
                self.l2_beta
            )));
        }
        if self.class_names.len() < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.class_names.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Config(format!("duplicate class name {dup:?}")));
        }
        Ok(())
    }
}
