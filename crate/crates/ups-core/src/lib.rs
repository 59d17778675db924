//! Unified neural PDE operator toolkit.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`gradkit`]: dense tensor arithmetic, FFT, and reverse-mode
//!   differentiation over the fixed op set the model needs.
//! - [`pdegen`]: classical solvers for several PDE families plus
//!   initial-condition samplers and the trajectory container format.
//! - [`unirep`]: lifting heterogeneous trajectories into the unified
//!   `N x n x n` representation with masks, coordinates, and normalization.
//! - [`upsnet`]: the forward-prediction model (FNO embedder, metadata
//!   embedding, transformer body, linear predictor).
//! - [`trainer`]: losses, Adam, the two-stage training protocol, and
//!   few-shot adaptation.
//! - [`eval`]: the evaluation harness (one-step nRMSE, rollout,
//!   resolution transfer, experiment orchestration) and report emission.

pub mod config;
pub mod eval;
pub mod gradkit;
pub mod pdegen;
pub mod trainer;
pub mod unirep;
pub mod upsnet;
