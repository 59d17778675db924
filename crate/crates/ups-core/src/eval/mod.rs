//! Evaluation harness: one-step nRMSE, autoregressive rollout, unseen
//! resolution transfer, experiment orchestration, and report emission.

mod experiment;
mod report;

pub use experiment::{run_experiment, ExperimentConfig, Preset};
pub use report::{EvalReport, EvalRow};

use crate::gradkit::{Tape, Tensor};
use crate::trainer;
use crate::unirep::{attach_coords, downsample, make_pairs, upsample, FamilyBundle};
use crate::upsnet::Model;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("evaluation error: {0}")]
    Invalid(String),
    #[error("rollout produced non-finite values at step {0}")]
    RolloutNaN(usize),
    #[error(transparent)]
    Model(#[from] crate::upsnet::Error),
    #[error(transparent)]
    Grad(#[from] crate::gradkit::Error),
    #[error(transparent)]
    Train(#[from] crate::trainer::Error),
    #[error(transparent)]
    Unirep(#[from] crate::unirep::Error),
    #[error(transparent)]
    Gen(#[from] crate::pdegen::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn masked_nrmse(pred: &Tensor, truth: &Tensor, mask: &Tensor) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&p, &t), &m) in pred.data().iter().zip(truth.data()).zip(mask.data()) {
        let d = (p - t) * m;
        num += d * d;
        den += t * m * t * m;
    }
    if den < 1e-24 {
        return f64::NAN;
    }
    (num / den).sqrt()
}

/// One-step (teacher-forced) test nRMSE over a family's pairs.
/// Predictions are denormalized with the training statistics before the
/// metric. `cap = 0` scores every pair.
pub fn eval_one_step_nrmse(
    model: &Model,
    bundle: &FamilyBundle,
    metadata: &str,
    cap: usize,
) -> trainer::Result<f64> {
    let mut pairs = make_pairs(bundle.set.num_traj, bundle.set.t_steps)?;
    if cap > 0 && pairs.len() > cap {
        pairs.truncate(cap);
    }
    let mask = bundle.mask_tensor();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|p| -> trainer::Result<f64> {
            let input = bundle.input_frame(p.traj, p.t);
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &input, metadata)?;
            let pred = bundle.denormalize(tape.value(out.prediction));
            let truth = bundle.raw_frame(p.traj, p.t + 1);
            Ok(masked_nrmse(&pred, &truth, &mask))
        })
        .collect::<trainer::Result<Vec<_>>>()?;
    let valid: Vec<f64> = scores.into_iter().filter(|v| v.is_finite()).collect();
    if valid.is_empty() {
        return Err(trainer::Error::Numerical(
            "no valid test pairs (all targets had zero norm)".into(),
        ));
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

/// Autoregressive rollout from a trajectory's first frame. Returns the
/// denormalized predicted frames; a NaN mid-rollout truncates the
/// trajectory and flags the result.
pub struct Rollout {
    pub frames: Vec<Tensor>,
    pub truncated: bool,
}

pub fn rollout(model: &Model, bundle: &FamilyBundle, traj: usize, steps: usize) -> Result<Rollout> {
    if steps == 0 {
        return Err(Error::Invalid("rollout needs at least one step".into()));
    }
    let mask = bundle.mask_tensor();
    let spatial_dim = bundle.set.spatial_dim;
    let metadata = crate::upsnet::format_metadata(
        bundle.set.family.name(),
        &bundle.set.coefficients,
    );
    let mut state = bundle.normalized_frame(traj, 0);
    let mut frames = Vec::with_capacity(steps);
    let mut truncated = false;
    for step in 0..steps {
        let input = attach_coords(&state, spatial_dim);
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &input, &metadata)?;
        // Predictions are masked before re-feeding so padded channels and
        // rows stay exactly zero along the rollout.
        let pred = tape
            .value(out.prediction)
            .zip_map(&mask, "rollout_mask", |p, m| p * m)?;
        if !pred.is_finite() {
            truncated = true;
            log::warn!("rollout truncated at step {step}: non-finite prediction");
            break;
        }
        frames.push(bundle.denormalize(&pred));
        state = pred;
    }
    Ok(Rollout { frames, truncated })
}

/// Mean nRMSE of an autoregressive rollout against ground truth at each
/// step, averaged over trajectories; also returns per-step means.
pub fn eval_rollout_nrmse(
    model: &Model,
    bundle: &FamilyBundle,
    steps: usize,
    max_traj: usize,
) -> Result<(f64, Vec<f64>)> {
    let steps = steps.min(bundle.set.t_steps - 1);
    let n_traj = bundle.set.num_traj.min(max_traj.max(1));
    let mask = bundle.mask_tensor();
    let per_traj: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|traj| -> Result<Vec<f64>> {
            let r = rollout(model, bundle, traj, steps)?;
            let mut scores = Vec::with_capacity(r.frames.len());
            for (s, frame) in r.frames.iter().enumerate() {
                let truth = bundle.raw_frame(traj, s + 1);
                scores.push(masked_nrmse(frame, &truth, &mask));
            }
            Ok(scores)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_step = vec![0.0; steps];
    let mut counts = vec![0usize; steps];
    for traj in &per_traj {
        for (s, &v) in traj.iter().enumerate() {
            if v.is_finite() {
                per_step[s] += v;
                counts[s] += 1;
            }
        }
    }
    for (v, &c) in per_step.iter_mut().zip(&counts) {
        *v /= c.max(1) as f64;
    }
    let mean = per_step.iter().sum::<f64>() / steps as f64;
    Ok((mean, per_step))
}

/// Zero-shot resolution transfer: inputs at resolution `m` are strided
/// down to the model's grid, predicted, Fourier-upsampled back to `m`,
/// and scored against the high-resolution truth. No parameter updates.
pub fn eval_superres(
    model: &Model,
    hires: &FamilyBundle,
    metadata: &str,
    cap: usize,
) -> Result<f64> {
    let m = hires.set.n;
    let n = model.cfg.n;
    if m < n || m % n != 0 || !(m / n).is_power_of_two() {
        return Err(Error::Invalid(format!(
            "test resolution {m} is not a power-of-two multiple of the model grid {n}"
        )));
    }
    let spatial_dim = hires.set.spatial_dim;
    let mut pairs = make_pairs(hires.set.num_traj, hires.set.t_steps)?;
    if cap > 0 && pairs.len() > cap {
        pairs.truncate(cap);
    }
    let hires_mask = hires.mask_tensor();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|p| -> Result<f64> {
            let quantities = hires.normalized_frame(p.traj, p.t);
            let coarse = downsample(&quantities, n)?;
            let input = attach_coords(&coarse, spatial_dim);
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &input, metadata)?;
            let fine_pred = upsample(tape.value(out.prediction), m, spatial_dim)?;
            let pred = hires.denormalize(&fine_pred);
            let truth = hires.raw_frame(p.traj, p.t + 1);
            Ok(masked_nrmse(&pred, &truth, &hires_mask))
        })
        .collect::<Result<Vec<_>>>()?;
    let valid: Vec<f64> = scores.into_iter().filter(|v| v.is_finite()).collect();
    if valid.is_empty() {
        return Err(Error::Invalid("no valid high-resolution test pairs".into()));
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}
