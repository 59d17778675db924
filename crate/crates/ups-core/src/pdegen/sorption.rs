//! Diffusion-sorption: u_t = D / R(u) u_xx on (0, 1) with Dirichlet
//! boundaries, solved implicitly (backward Euler, tridiagonal) with the
//! retardation factor lagged from the previous step.
//!
//! R(u) follows the Freundlich form
//! R(u) = 1 + (1 - phi)/phi * rho_s * k_f * n_f * u^(n_f - 1),
//! evaluated on u clamped into [clamp_eps, 1] to avoid the singular
//! exponent at u = 0.

use super::{Error, Result};
use crate::gradkit::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct RetardationParams {
    pub porosity: f64,
    pub bulk_density: f64,
    pub freundlich_k: f64,
    pub freundlich_n: f64,
}

impl Default for RetardationParams {
    fn default() -> Self {
        Self {
            porosity: 0.29,
            bulk_density: 2880.0,
            freundlich_k: 3.5e-4,
            freundlich_n: 0.874,
        }
    }
}

impl RetardationParams {
    pub fn evaluate(&self, u: f64) -> f64 {
        let uc = u.clamp(1e-6, 1.0);
        1.0 + (1.0 - self.porosity) / self.porosity
            * self.bulk_density
            * self.freundlich_k
            * self.freundlich_n
            * uc.powf(self.freundlich_n - 1.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SorptionOptions {
    /// Dirichlet values at x = 0 and x = 1.
    pub bc: (f64, f64),
    /// None disables retardation (plain heat equation).
    pub retardation: Option<RetardationParams>,
    /// Force a number of substeps per stored interval.
    pub forced_substeps: Option<usize>,
}

impl Default for SorptionOptions {
    fn default() -> Self {
        Self {
            bc: (1.0, 0.0),
            retardation: Some(RetardationParams::default()),
            forced_substeps: None,
        }
    }
}

pub fn solve_diffusion_sorption(
    u0: &Tensor,
    diffusivity: f64,
    t_steps: usize,
    dt: f64,
    n: usize,
    opts: SorptionOptions,
) -> Result<Tensor> {
    if u0.shape() != [n] {
        return Err(Error::Invalid(format!(
            "diffusion_sorption: u0 shape {:?} does not match n={n}",
            u0.shape()
        )));
    }
    if u0.data().iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
        return Err(Error::Invalid("diffusion_sorption: u0 must lie in [0, 1]".into()));
    }
    let dx = 1.0 / (n as f64 - 1.0);
    let substeps = opts.forced_substeps.unwrap_or_else(|| {
        // Keep lambda*dt small for the slowest resolvable mode so the
        // first-order implicit step stays accurate.
        let lambda = diffusivity * std::f64::consts::PI.powi(2);
        (dt * lambda / 0.01).ceil().max(1.0) as usize
    });
    let h = dt / substeps as f64;

    let mut u: Vec<f64> = u0.data().to_vec();
    u[0] = opts.bc.0;
    u[n - 1] = opts.bc.1;

    let mut out = Vec::with_capacity(t_steps * n);
    out.extend_from_slice(&u);

    let m = n - 2; // interior unknowns
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut clamp_events = 0usize;

    for _snap in 1..t_steps {
        for _ in 0..substeps {
            for i in 0..m {
                let r = match &opts.retardation {
                    Some(p) => p.evaluate(u[i + 1]),
                    None => 1.0,
                };
                let lam = diffusivity * h / (r * dx * dx);
                lower[i] = -lam;
                diag[i] = 1.0 + 2.0 * lam;
                upper[i] = -lam;
                rhs[i] = u[i + 1];
            }
            // Dirichlet contributions.
            rhs[0] -= lower[0] * opts.bc.0;
            rhs[m - 1] -= upper[m - 1] * opts.bc.1;
            thomas(&lower, &mut diag, &upper, &mut rhs);
            for i in 0..m {
                let mut v = rhs[i];
                if !(-1e-6..=1.0 + 1e-6).contains(&v) {
                    if !(-1e-3..=1.0 + 1e-3).contains(&v) {
                        return Err(Error::BlowUp(format!(
                            "diffusion_sorption left [0,1] persistently (u = {v})"
                        )));
                    }
                    v = v.clamp(0.0, 1.0);
                    clamp_events += 1;
                }
                u[i + 1] = v;
            }
        }
        out.extend_from_slice(&u);
    }
    if clamp_events > 0 {
        log::debug!("diffusion_sorption clamped {clamp_events} values into [0, 1]");
    }
    Tensor::new(vec![t_steps, 1, n], out).map_err(Into::into)
}

/// Thomas algorithm; `diag` and `rhs` are consumed as scratch.
fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let m = diag.len();
    for i in 1..m {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[m - 1] /= diag[m - 1];
    for i in (0..m - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}
