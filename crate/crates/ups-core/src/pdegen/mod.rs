//! Ground-truth trajectory generation with classical solvers.
//!
//! Each solver integrates one PDE family on a periodic or bounded grid and
//! returns snapshots at the stored timestep; internal step sizes are chosen
//! from stability bounds and are decoupled from the snapshot interval.

mod advection;
mod burgers;
mod container;
mod generate;
mod ic;
mod reaction;
mod shallow;
mod sorption;

pub use advection::solve_advection;
pub use burgers::{solve_burgers, BurgersOptions};
pub use container::{inspect_header, read_trajectories, write_trajectories, Header};
pub use generate::{channels_for, default_coefficients, default_time_span, domain_for, generate, traj_seed, GenSpec};
pub use ic::{
    grf_raw, sample_ic_grf, sample_ic_sinusoid, sample_ic_sinusoid_2d, sinusoid_field,
    sinusoid_field_2d,
};
pub use reaction::{
    solve_reaction_diffusion_1d, solve_reaction_diffusion_2d, Rd1dOptions, Rd2dOptions,
};
pub use shallow::{solve_shallow_water, SweBoundary, SweOptions};
pub use sorption::{solve_diffusion_sorption, RetardationParams, SorptionOptions};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("solver blow-up: {0}")]
    BlowUp(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("container format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] crate::gradkit::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// PDE family tags used across generation, unification, and reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Advection,
    Burgers,
    DiffusionSorption,
    ReactionDiffusion1d,
    ReactionDiffusion2d,
    ShallowWater,
    /// Externally produced data ingested through the container reader.
    External,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Advection => "advection",
            Family::Burgers => "burgers",
            Family::DiffusionSorption => "diffusion_sorption",
            Family::ReactionDiffusion1d => "reaction_diffusion_1d",
            Family::ReactionDiffusion2d => "reaction_diffusion_2d",
            Family::ShallowWater => "shallow_water",
            Family::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "advection" => Some(Family::Advection),
            "burgers" => Some(Family::Burgers),
            "diffusion_sorption" => Some(Family::DiffusionSorption),
            "reaction_diffusion_1d" => Some(Family::ReactionDiffusion1d),
            "reaction_diffusion_2d" => Some(Family::ReactionDiffusion2d),
            "shallow_water" => Some(Family::ShallowWater),
            "external" => Some(Family::External),
            _ => None,
        }
    }

    pub fn spatial_dim(&self) -> usize {
        match self {
            Family::ReactionDiffusion2d | Family::ShallowWater => 2,
            Family::External => 2,
            _ => 1,
        }
    }
}

/// A family's solved trajectories plus grid and coefficient metadata.
///
/// The payload is stored as `f32` in `[traj][time][channel][space]` order,
/// matching the on-disk container exactly; model-facing code widens to
/// `f64` at batch assembly.
#[derive(Clone, Debug)]
pub struct TrajectorySet {
    pub family: Family,
    pub spatial_dim: usize,
    pub coefficients: BTreeMap<String, f64>,
    pub n: usize,
    pub t_steps: usize,
    pub num_traj: usize,
    pub channels: Vec<String>,
    pub domain: Vec<(f64, f64)>,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub data: Vec<f32>,
}

impl TrajectorySet {
    pub fn space_len(&self) -> usize {
        self.n.pow(self.spatial_dim as u32)
    }

    pub fn frame_len(&self) -> usize {
        self.channels.len() * self.space_len()
    }

    /// One `[channel][space]` frame.
    pub fn frame(&self, traj: usize, t: usize) -> &[f32] {
        let fl = self.frame_len();
        let start = (traj * self.t_steps + t) * fl;
        &self.data[start..start + fl]
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.num_traj * self.t_steps * self.frame_len();
        if self.data.len() != want {
            return Err(Error::Invalid(format!(
                "payload length {} does not match header ({} expected)",
                self.data.len(),
                want
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("payload contains NaN/Inf".into()));
        }
        if self.snapshot_times.len() != self.t_steps {
            return Err(Error::Invalid("snapshot_times length mismatch".into()));
        }
        Ok(())
    }

    /// Restrict to a trajectory subrange (used for train/test splits and
    /// few-shot subsets).
    pub fn slice_trajectories(&self, range: std::ops::Range<usize>) -> TrajectorySet {
        let fl = self.frame_len() * self.t_steps;
        let mut out = self.clone();
        out.num_traj = range.len();
        out.data = self.data[range.start * fl..range.end * fl].to_vec();
        out
    }
}
