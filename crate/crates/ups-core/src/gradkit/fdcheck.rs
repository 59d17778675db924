//! Central finite-difference verification of tape gradients.

use super::tape::{NodeId, Tape};
use super::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

pub type ParamStore = BTreeMap<String, Arc<Tensor>>;

/// Per-parameter outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub name: String,
    pub max_rel_err: f64,
    pub components_checked: usize,
    /// Relative error of a whole-tensor directional derivative.
    pub directional_rel_err: f64,
}

impl FdReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_err.max(self.directional_rel_err)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Compare analytic gradients of `build`'s scalar output against central
/// differences with step `h`.
///
/// For every parameter, up to `samples` components are perturbed at
/// deterministic positions, plus one random-direction directional
/// derivative over the whole tensor so that unsampled components still
/// participate in aggregate.
pub fn check_gradients<F>(params: &ParamStore, build: F, h: f64, samples: usize, seed: u64) -> Result<Vec<FdReport>>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<NodeId>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(store, &mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut tape = Tape::new();
    let loss = build(params, &mut tape)?;
    let grads = tape.backward(loss)?;

    let mut reports = Vec::new();
    for (name, base) in params {
        let grad = &grads[name];
        let numel = base.numel();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fxhash(name));
        let mut indices: Vec<usize> = if numel <= samples {
            (0..numel).collect()
        } else {
            (0..samples).map(|_| rng.gen_range(0..numel)).collect()
        };
        indices.sort_unstable();
        indices.dedup();

        let mut max_rel = 0.0f64;
        for &i in &indices {
            let mut plus = params.clone();
            let mut t = (**base).clone();
            t.data_mut()[i] += h;
            plus.insert(name.clone(), Arc::new(t));
            let fp = eval(&plus)?;

            let mut minus = params.clone();
            let mut t = (**base).clone();
            t.data_mut()[i] -= h;
            minus.insert(name.clone(), Arc::new(t));
            let fm = eval(&minus)?;

            let fd = (fp - fm) / (2.0 * h);
            max_rel = max_rel.max(rel_err(fd, grad.data()[i]));
        }

        // Directional derivative along a random unit vector.
        let dir = Tensor::rand_normal(base.shape(), 1.0, &mut rng);
        let dnorm = dir.norm().max(1e-300);
        let mut plus = params.clone();
        let mut t = (**base).clone();
        for (d, v) in t.data_mut().iter_mut().zip(dir.data()) {
            *d += h * v / dnorm;
        }
        plus.insert(name.clone(), Arc::new(t));
        let fp = eval(&plus)?;
        let mut minus = params.clone();
        let mut t = (**base).clone();
        for (d, v) in t.data_mut().iter_mut().zip(dir.data()) {
            *d -= h * v / dnorm;
        }
        minus.insert(name.clone(), Arc::new(t));
        let fm = eval(&minus)?;
        let fd_dir = (fp - fm) / (2.0 * h);
        let analytic_dir: f64 = grad
            .data()
            .iter()
            .zip(dir.data())
            .map(|(&g, &v)| g * v / dnorm)
            .sum();

        reports.push(FdReport {
            name: name.clone(),
            max_rel_err: max_rel,
            components_checked: indices.len(),
            directional_rel_err: rel_err(fd_dir, analytic_dir),
        });
    }
    Ok(reports)
}

fn fxhash(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
