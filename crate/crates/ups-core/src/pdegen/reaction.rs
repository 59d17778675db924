//! Reaction-diffusion solvers.
//!
//! 1D (Fisher): u_t - nu u_xx = rho u (1 - u), periodic, Strang splitting
//! with an exact logistic substep and an exact spectral diffusion substep.
//!
//! 2D (activator/inhibitor): u1_t = nu1 lap(u1) + u1 - u1^3 - k - u2,
//! u2_t = nu2 lap(u2) + u1 - u2, no-flux boundaries, explicit RK2 with a
//! 5-point stencil Laplacian.

use super::{Error, Result};
use crate::gradkit::fft::fft_inplace;
use crate::gradkit::Tensor;
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug)]
pub struct Rd1dOptions {
    pub forced_substeps: Option<usize>,
}

impl Default for Rd1dOptions {
    fn default() -> Self {
        Self {
            forced_substeps: None,
        }
    }
}

/// Exact logistic flow for du/dt = rho u (1 - u) over time h.
fn logistic_step(u: f64, rho: f64, h: f64) -> f64 {
    let g = (rho * h).exp();
    u * g / (1.0 + u * (g - 1.0))
}

pub fn solve_reaction_diffusion_1d(
    u0: &Tensor,
    nu: f64,
    rho: f64,
    t_steps: usize,
    dt: f64,
    n: usize,
    opts: Rd1dOptions,
) -> Result<Tensor> {
    if u0.shape() != [n] {
        return Err(Error::Invalid(format!(
            "reaction_diffusion_1d: u0 shape {:?} does not match n={n}",
            u0.shape()
        )));
    }
    let substeps = opts
        .forced_substeps
        .unwrap_or_else(|| (dt / 0.01).ceil().max(1.0) as usize);
    let h = dt / substeps as f64;

    // Spectral diffusion multiplier for a full substep.
    let diffusion: Option<Vec<f64>> = (nu != 0.0).then(|| {
        (0..n)
            .map(|k| {
                let ks = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let kappa = 2.0 * PI * ks;
                (-nu * kappa * kappa * h).exp()
            })
            .collect()
    });

    let mut u: Vec<f64> = u0.data().to_vec();
    let mut out = Vec::with_capacity(t_steps * n);
    out.extend_from_slice(&u);

    for _snap in 1..t_steps {
        for _ in 0..substeps {
            for v in u.iter_mut() {
                *v = logistic_step(*v, rho, h / 2.0);
            }
            if let Some(mult) = &diffusion {
                let mut buf: Vec<Complex64> =
                    u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft_inplace(&mut buf, false);
                for (b, &m) in buf.iter_mut().zip(mult) {
                    *b *= m;
                }
                fft_inplace(&mut buf, true);
                let inv = 1.0 / n as f64;
                for (v, b) in u.iter_mut().zip(&buf) {
                    // The periodic heat propagator preserves [0, 1] up to
                    // spectral truncation residue; clamp keeps the Fisher
                    // invariant region exact.
                    *v = (b.re * inv).clamp(0.0, 1.0);
                }
            }
            for v in u.iter_mut() {
                *v = logistic_step(*v, rho, h / 2.0);
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp("reaction_diffusion_1d produced NaN".into()));
        }
        out.extend_from_slice(&u);
    }
    Tensor::new(vec![t_steps, 1, n], out).map_err(Into::into)
}

#[derive(Clone, Copy, Debug)]
pub struct Rd2dOptions {
    pub forced_substeps: Option<usize>,
}

impl Default for Rd2dOptions {
    fn default() -> Self {
        Self {
            forced_substeps: None,
        }
    }
}

/// 5-point Laplacian with mirrored ghost cells (no-flux boundaries).
fn laplacian_neumann(src: &[f64], dst: &mut [f64], n: usize, inv_dx2: f64) {
    let at = |i: isize, j: isize| -> f64 {
        let i = i.clamp(0, n as isize - 1) as usize;
        let j = j.clamp(0, n as isize - 1) as usize;
        src[i * n + j]
    };
    for i in 0..n as isize {
        for j in 0..n as isize {
            let c = at(i, j);
            dst[i as usize * n + j as usize] =
                (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * c) * inv_dx2;
        }
    }
}

pub fn solve_reaction_diffusion_2d(
    u0: &Tensor,
    nu1: f64,
    nu2: f64,
    k: f64,
    t_steps: usize,
    dt: f64,
    n: usize,
    opts: Rd2dOptions,
) -> Result<Tensor> {
    if u0.shape() != [2, n, n] {
        return Err(Error::Invalid(format!(
            "reaction_diffusion_2d: u0 shape {:?} does not match [2, {n}, {n}]",
            u0.shape()
        )));
    }
    let dx = 2.0 / n as f64; // domain (-1, 1)^2
    let inv_dx2 = 1.0 / (dx * dx);
    let numax = nu1.max(nu2).max(1e-12);
    let substeps = opts.forced_substeps.unwrap_or_else(|| {
        let stab = 0.2 * dx * dx / numax;
        (dt / stab.min(0.05)).ceil().max(1.0) as usize
    });
    let h = dt / substeps as f64;

    let nn = n * n;
    let mut u1 = u0.data()[..nn].to_vec();
    let mut u2 = u0.data()[nn..].to_vec();
    let mut out = Vec::with_capacity(t_steps * 2 * nn);
    out.extend_from_slice(&u1);
    out.extend_from_slice(&u2);

    let mut lap1 = vec![0.0; nn];
    let mut lap2 = vec![0.0; nn];
    let mut f1 = vec![0.0; nn];
    let mut f2 = vec![0.0; nn];
    let mut s1 = vec![0.0; nn];
    let mut s2 = vec![0.0; nn];
    let mut g1 = vec![0.0; nn];
    let mut g2 = vec![0.0; nn];

    let rhs = |u1: &[f64], u2: &[f64], lap1: &mut [f64], lap2: &mut [f64], f1: &mut [f64], f2: &mut [f64]| {
        laplacian_neumann(u1, lap1, n, inv_dx2);
        laplacian_neumann(u2, lap2, n, inv_dx2);
        for i in 0..nn {
            let a = u1[i];
            let b = u2[i];
            f1[i] = nu1 * lap1[i] + a - a * a * a - k - b;
            f2[i] = nu2 * lap2[i] + a - b;
        }
    };

    for _snap in 1..t_steps {
        for _ in 0..substeps {
            // Heun's method.
            rhs(&u1, &u2, &mut lap1, &mut lap2, &mut f1, &mut f2);
            for i in 0..nn {
                s1[i] = u1[i] + h * f1[i];
                s2[i] = u2[i] + h * f2[i];
            }
            rhs(&s1, &s2, &mut lap1, &mut lap2, &mut g1, &mut g2);
            for i in 0..nn {
                u1[i] += 0.5 * h * (f1[i] + g1[i]);
                u2[i] += 0.5 * h * (f2[i] + g2[i]);
            }
        }
        if u1.iter().chain(u2.iter()).any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(Error::BlowUp("reaction_diffusion_2d blew up".into()));
        }
        out.extend_from_slice(&u1);
        out.extend_from_slice(&u2);
    }
    Tensor::new(vec![t_steps, 2, n, n], out).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdegen::{sample_ic_grf, sample_ic_sinusoid};

    #[test]
    fn logistic_fixed_points_are_preserved() {
        let n = 64;
        for fp in [0.0, 1.0] {
            let u0 = Tensor::full(&[n], fp);
            let traj =
                solve_reaction_diffusion_1d(&u0, 0.5, 1.0, 5, 0.05, n, Rd1dOptions::default())
                    .unwrap();
            for &v in traj.data() {
                assert!((v - fp).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_diffusion_matches_closed_form_logistic() {
        let n = 64;
        let rho = 1.3;
        let u0 = {
            let s = sample_ic_sinusoid(5, n, 3, (0.05, 0.95));
            s
        };
        let dt = 0.1;
        let traj =
            solve_reaction_diffusion_1d(&u0, 0.0, rho, 6, dt, n, Rd1dOptions::default()).unwrap();
        for step in 0..6 {
            let t = step as f64 * dt;
            for i in 0..n {
                let a = u0.data()[i];
                let want = a * (rho * t).exp() / (1.0 + a * ((rho * t).exp() - 1.0));
                assert!(
                    (traj.data()[step * n + i] - want).abs() < 1e-10,
                    "step {step} cell {i}"
                );
            }
        }
    }

    #[test]
    fn stays_in_unit_interval_and_matches_fine_reference() {
        let n = 64;
        let u0 = sample_ic_sinusoid(11, n, 4, (0.0, 1.0));
        let dt = 0.05;
        let t_steps = 21;
        let traj = solve_reaction_diffusion_1d(&u0, 0.5, 1.0, t_steps, dt, n, Rd1dOptions::default())
            .unwrap();
        for &v in traj.data() {
            assert!((-1e-12..=1.0 + 1e-12).contains(&v), "left [0,1]: {v}");
        }
        // Spatial mean is monotone toward 1 for Fisher dynamics.
        let mean = |s: usize| traj.data()[s * n..(s + 1) * n].iter().sum::<f64>() / n as f64;
        for s in 1..t_steps {
            assert!(mean(s) >= mean(s - 1) - 1e-12);
        }
        // Fine-step reference agreement.
        let fine = solve_reaction_diffusion_1d(
            &u0,
            0.5,
            1.0,
            t_steps,
            dt,
            n,
            Rd1dOptions {
                forced_substeps: Some(64),
            },
        )
        .unwrap();
        for (a, b) in traj.data().iter().zip(fine.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn rd2d_uniform_equilibrium_stays_uniform() {
        let n = 32;
        // u2 = u1 and u1 - u1^3 - k - u2 = 0 => u1 = -k^(1/3).
        let k: f64 = 5e-3;
        let eq = -k.cbrt();
        let mut u0 = Tensor::zeros(&[2, n, n]);
        u0.data_mut()[..n * n].iter_mut().for_each(|v| *v = eq);
        u0.data_mut()[n * n..].iter_mut().for_each(|v| *v = eq);
        let traj =
            solve_reaction_diffusion_2d(&u0, 1e-3, 5e-3, k, 4, 0.5, n, Rd2dOptions::default())
                .unwrap();
        for step in 0..4 {
            for i in 0..2 * n * n {
                assert!(
                    (traj.data()[step * 2 * n * n + i] - eq).abs() < 1e-8,
                    "equilibrium drifted"
                );
            }
        }
    }

    #[test]
    fn rd2d_zero_diffusion_matches_pointwise_ode() {
        let n = 8;
        let k = 5e-3;
        let mut u0 = Tensor::zeros(&[2, n, n]);
        {
            let g = sample_ic_grf(3, n, 0.2);
            u0.data_mut()[..n * n].copy_from_slice(g.data());
            let g2 = sample_ic_grf(4, n, 0.2);
            u0.data_mut()[n * n..].copy_from_slice(g2.data());
        }
        let dt = 0.2;
        let t_steps = 4;
        let traj = solve_reaction_diffusion_2d(
            &u0,
            0.0,
            0.0,
            k,
            t_steps,
            dt,
            n,
            Rd2dOptions {
                forced_substeps: Some(2000),
            },
        )
        .unwrap();
        // Reference: RK4 on the 2-species reaction ODE per cell.
        for cell in 0..n * n {
            let mut a = u0.data()[cell];
            let mut b = u0.data()[n * n + cell];
            let f = |a: f64, b: f64| (a - a * a * a - k - b, a - b);
            let h = dt / 4000.0;
            for step in 1..t_steps {
                for _ in 0..4000 {
                    let (k1a, k1b) = f(a, b);
                    let (k2a, k2b) = f(a + 0.5 * h * k1a, b + 0.5 * h * k1b);
                    let (k3a, k3b) = f(a + 0.5 * h * k2a, b + 0.5 * h * k2b);
                    let (k4a, k4b) = f(a + h * k3a, b + h * k3b);
                    a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
                    b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
                }
                let got_a = traj.data()[step * 2 * n * n + cell];
                let got_b = traj.data()[step * 2 * n * n + n * n + cell];
                assert!((got_a - a).abs() < 1e-6, "cell {cell} step {step}: {got_a} vs {a}");
                assert!((got_b - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rd2d_resolution_convergence_at_shared_points() {
        // Neumann-compatible smooth IC; doubling resolution changes shared
        // grid points by less than 1e-2 in max norm at t = 0.1.
        let build_ic = |n: usize| {
            let mut t = Tensor::zeros(&[2, n, n]);
            let d = t.data_mut();
            for i in 0..n {
                let x = -1.0 + 2.0 * i as f64 / n as f64;
                for j in 0..n {
                    let y = -1.0 + 2.0 * j as f64 / n as f64;
                    let v = (PI * x).cos() * (PI * y).cos() * 0.4;
                    d[i * n + j] = v;
                    d[n * n + i * n + j] = -0.5 * v;
                }
            }
            t
        };
        let nc = 32;
        let coarse = solve_reaction_diffusion_2d(
            &build_ic(nc),
            1e-3,
            5e-3,
            5e-3,
            2,
            0.1,
            nc,
            Rd2dOptions {
                forced_substeps: Some(200),
            },
        )
        .unwrap();
        let nf = 64;
        let fine = solve_reaction_diffusion_2d(
            &build_ic(nf),
            1e-3,
            5e-3,
            5e-3,
            2,
            0.1,
            nf,
            Rd2dOptions {
                forced_substeps: Some(200),
            },
        )
        .unwrap();
        let mut worst = 0.0f64;
        for ch in 0..2 {
            for i in 0..nc {
                for j in 0..nc {
                    let c = coarse.data()[2 * nc * nc + ch * nc * nc + i * nc + j];
                    let f = fine.data()[2 * nf * nf + ch * nf * nf + (2 * i) * nf + 2 * j];
                    worst = worst.max((c - f).abs());
                }
            }
        }
        assert!(worst < 1e-2, "resolution gap {worst}");
    }
}
