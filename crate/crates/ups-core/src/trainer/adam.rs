//! Adam with bias correction and decoupled weight decay.

use super::{Error, Result};
use crate::gradkit::{GradMap, Tensor};
use crate::upsnet::ParamStore;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global-norm clip threshold; negative disables clipping.
    pub grad_clip: f64,
}

impl AdamHyper {
    pub fn new(lr: f64, weight_decay: f64, grad_clip: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            grad_clip,
        }
    }
}

/// First/second moment accumulators plus the shared step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One optimizer step over `trainable` parameters. Gradients must be
/// finite; parameters without a gradient entry are left untouched.
pub fn adam_step(
    params: &mut ParamStore,
    state: &mut AdamState,
    grads: &GradMap,
    trainable: &BTreeSet<String>,
    hyper: &AdamHyper,
) -> Result<()> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient for {name}")));
        }
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);

    let clip_scale = if hyper.grad_clip > 0.0 {
        let mut sq = 0.0;
        for (name, g) in grads {
            if trainable.contains(name) {
                sq += g.data().iter().map(|x| x * x).sum::<f64>();
            }
        }
        let norm = sq.sqrt();
        if norm > hyper.grad_clip {
            hyper.grad_clip / norm
        } else {
            1.0
        }
    } else {
        1.0
    };

    for name in trainable {
        let Some(g) = grads.get(name) else { continue };
        let p = params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown trainable parameter {name}")))?;
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let pd = Arc::make_mut(p).data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            let gi = g.data()[i] * clip_scale;
            md[i] = hyper.beta1 * md[i] + (1.0 - hyper.beta1) * gi;
            vd[i] = hyper.beta2 * vd[i] + (1.0 - hyper.beta2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            // Decoupled weight decay, applied outside the moment update.
            pd[i] -= hyper.lr * hyper.weight_decay * pd[i];
            pd[i] -= hyper.lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
