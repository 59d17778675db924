//! The forward-prediction model: an FNO embedding network, byte-level
//! metadata embedding, a bidirectional transformer body, and a mean-pool
//! linear predictor.

mod model;
mod tokenizer;

pub use model::{ForwardOut, Model};
pub use tokenizer::{detokenize, format_metadata, tokenize, PAD_ID};

use crate::gradkit::{self, Dtype, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("weight mismatch: {0}")]
    WeightMismatch(String),
    #[error(transparent)]
    Grad(#[from] gradkit::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Named parameter collection; `BTreeMap` keeps iteration deterministic.
pub type ParamStore = BTreeMap<String, Arc<Tensor>>;

/// Architecture hyperparameters. `l` doubles as the FNO channel count and
/// the PDE token sequence length; `e` is the body width.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub l: usize,
    pub modes: usize,
    pub fno_depth: usize,
    pub e: usize,
    pub body_depth: usize,
    pub heads: usize,
    pub n: usize,
    pub n_quantities: usize,
    /// Coordinate channels appended to the input (0 disables them).
    pub coord_channels: usize,
    pub use_metadata: bool,
    pub vocab_size: usize,
    pub max_meta_len: usize,
    pub layernorm_eps: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            l: 32,
            modes: 12,
            fno_depth: 3,
            e: 128,
            body_depth: 4,
            heads: 4,
            n: 64,
            n_quantities: crate::unirep::N_QUANTITIES,
            coord_channels: crate::unirep::N_COORDS,
            use_metadata: true,
            vocab_size: tokenizer::VOCAB_SIZE,
            max_meta_len: 64,
            layernorm_eps: 1e-5,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::Config("l must be at least 1".into()));
        }
        if self.modes == 0 || 2 * self.modes > self.n {
            return Err(Error::Config(format!(
                "modes {} must satisfy 1 <= modes <= n/2 = {}",
                self.modes,
                self.n / 2
            )));
        }
        if self.e % self.heads != 0 {
            return Err(Error::Config(format!(
                "e = {} must be divisible by heads = {}",
                self.e, self.heads
            )));
        }
        if !self.n.is_power_of_two() {
            return Err(Error::Config(format!("n = {} must be a power of two", self.n)));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.n_quantities + self.coord_channels
    }

    /// Spectral weight extent per dim for the symmetric retained mode set.
    pub fn spectral_extent(&self) -> usize {
        2 * self.modes - 1
    }

    /// Closed-form trainable parameter count:
    /// lift `l(c_in+1)`, each FNO layer `2 l^2 E^2 + l^2 + l`,
    /// projection `e(n^2+1)`, metadata table `vocab*e`, post-embedding
    /// norm `2e`, each body layer `12 e^2 + 13 e`, predictor `N n^2 (e+1)`.
    pub fn param_count(&self) -> usize {
        let c_in = self.input_channels();
        let ee = self.spectral_extent() * self.spectral_extent();
        let nn = self.n * self.n;
        let e = self.e;
        let mut count = self.l * (c_in + 1);
        count += self.fno_depth * (2 * self.l * self.l * ee + self.l * self.l + self.l);
        count += e * (nn + 1);
        count += self.vocab_size * e + 2 * e;
        count += self.body_depth * (12 * e * e + 13 * e);
        count += self.n_quantities * nn * (e + 1);
        count
    }
}

/// Whether a parameter holds interleaved complex pairs.
pub fn is_complex_param(name: &str) -> bool {
    name.ends_with(".spectral")
}

pub fn save_params(path: &Path, params: &ParamStore) -> Result<()> {
    let entries = params.iter().map(|(name, t)| {
        let dtype = if is_complex_param(name) {
            Dtype::Complex64Pair
        } else {
            Dtype::Real64
        };
        (name.as_str(), t.as_ref(), dtype)
    });
    gradkit::write_weights(path, entries)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let entries = gradkit::read_weights(path)?;
    Ok(entries
        .into_iter()
        .map(|(name, t, _)| (name, Arc::new(t)))
        .collect())
}
