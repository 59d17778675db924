//! Pseudo-spectral Burgers solver on the periodic unit interval:
//! u_t + (u^2/2)_x = (nu/pi) u_xx.
//!
//! The nonlinear term is evaluated in physical space with 2/3-rule
//! dealiasing; diffusion is integrated exactly through an integrating
//! factor; time stepping is explicit RK4 on the filtered variable. The
//! internal step is refined below the stored snapshot interval from a
//! CFL bound on max|u|.

use super::{Error, Result};
use crate::gradkit::fft::fft_inplace;
use crate::gradkit::Tensor;
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug)]
pub struct BurgersOptions {
    /// CFL number for the advective internal step bound.
    pub cfl: f64,
    /// Force a fixed internal step (used by convergence tests).
    pub forced_dt: Option<f64>,
}

impl Default for BurgersOptions {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            forced_dt: None,
        }
    }
}

struct Spectral {
    n: usize,
    /// 2*pi*k for signed wavenumbers.
    kappa: Vec<f64>,
    /// 2/3-rule mask.
    dealias: Vec<f64>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut kappa = Vec::with_capacity(n);
        let mut dealias = Vec::with_capacity(n);
        for k in 0..n {
            let ks = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            kappa.push(2.0 * PI * ks);
            dealias.push(if ks.abs() <= n as f64 / 3.0 { 1.0 } else { 0.0 });
        }
        Self { n, kappa, dealias }
    }

    /// Spectral nonlinear term N(u) = -F[d/dx (u^2/2)] with dealiasing.
    fn nonlinear(&self, uhat: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut u = uhat.to_vec();
        fft_inplace(&mut u, true);
        let inv = 1.0 / n as f64;
        for v in u.iter_mut() {
            let ur = v.re * inv;
            *v = Complex64::new(0.5 * ur * ur, 0.0);
        }
        fft_inplace(&mut u, false);
        for k in 0..n {
            // d/dx in Fourier space is multiplication by i*kappa.
            let c = u[k] * self.dealias[k];
            u[k] = Complex64::new(self.kappa[k] * c.im, -self.kappa[k] * c.re);
        }
        u
    }

    fn max_abs_u(&self, uhat: &[Complex64]) -> f64 {
        let mut u = uhat.to_vec();
        fft_inplace(&mut u, true);
        let inv = 1.0 / self.n as f64;
        u.iter().fold(0.0, |m, v| m.max((v.re * inv).abs()))
    }
}

pub fn solve_burgers(
    u0: &Tensor,
    nu: f64,
    t_steps: usize,
    dt: f64,
    n: usize,
    opts: BurgersOptions,
) -> Result<Tensor> {
    if u0.shape() != [n] {
        return Err(Error::Invalid(format!(
            "burgers: u0 shape {:?} does not match n={n}",
            u0.shape()
        )));
    }
    if nu <= 0.0 {
        return Err(Error::Invalid("burgers: nu must be positive".into()));
    }
    let sp = Spectral::new(n);
    let visc = nu / PI;
    let dx = 1.0 / n as f64;

    let mut uhat: Vec<Complex64> = u0.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_inplace(&mut uhat, false);

    let mut out = Vec::with_capacity(t_steps * n);
    store_snapshot(&sp, &uhat, &mut out)?;

    for _snap in 1..t_steps {
        let mut remaining = dt;
        while remaining > 1e-14 {
            let h = match opts.forced_dt {
                Some(h) => h.min(remaining),
                None => {
                    let umax = sp.max_abs_u(&uhat).max(1e-8);
                    (opts.cfl * dx / umax).min(remaining)
                }
            };
            rk4_if_step(&sp, &mut uhat, h, visc);
            remaining -= h;
            if sp.max_abs_u(&uhat) > 1e6 {
                return Err(Error::BlowUp(
                    "burgers solution exceeded 1e6; lower the CFL number or increase nu".into(),
                ));
            }
        }
        store_snapshot(&sp, &uhat, &mut out)?;
    }
    Tensor::new(vec![t_steps, 1, n], out).map_err(Into::into)
}

/// Integrating-factor RK4 step: diffusion handled exactly by
/// exp(-visc*kappa^2 h), RK4 on the advective term.
fn rk4_if_step(sp: &Spectral, uhat: &mut [Complex64], h: f64, visc: f64) {
    let n = sp.n;
    let e_half: Vec<f64> = sp
        .kappa
        .iter()
        .map(|&k| (-visc * k * k * h / 2.0).exp())
        .collect();
    let e_full: Vec<f64> = e_half.iter().map(|&e| e * e).collect();

    let a = sp.nonlinear(uhat);
    let mut stage: Vec<Complex64> = (0..n)
        .map(|i| (uhat[i] + a[i] * (h / 2.0)) * e_half[i])
        .collect();
    let b = sp.nonlinear(&stage);
    for i in 0..n {
        stage[i] = uhat[i] * e_half[i] + b[i] * (h / 2.0);
    }
    let c = sp.nonlinear(&stage);
    for i in 0..n {
        stage[i] = uhat[i] * e_full[i] + c[i] * e_half[i] * h;
    }
    let d = sp.nonlinear(&stage);
    for i in 0..n {
        uhat[i] = uhat[i] * e_full[i]
            + (a[i] * e_full[i] + (b[i] + c[i]) * e_half[i] * 2.0 + d[i]) * (h / 6.0);
    }
}

fn store_snapshot(sp: &Spectral, uhat: &[Complex64], out: &mut Vec<f64>) -> Result<()> {
    let mut u = uhat.to_vec();
    fft_inplace(&mut u, true);
    let inv = 1.0 / sp.n as f64;
    for v in &u {
        let val = v.re * inv;
        if !val.is_finite() {
            return Err(Error::BlowUp("burgers produced non-finite values".into()));
        }
        out.push(val);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdegen::sinusoid_field;

    #[test]
    fn constant_state_is_a_fixed_point() {
        let n = 64;
        let u0 = Tensor::full(&[n], 0.7);
        let traj = solve_burgers(&u0, 0.1, 6, 0.05, n, BurgersOptions::default()).unwrap();
        for &v in traj.data() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn large_viscosity_decays_monotonically() {
        let n = 64;
        let u0 = sinusoid_field(n, &[(1.0, 1, 0.0)]);
        let traj = solve_burgers(&u0, 2.0, 8, 0.05, n, BurgersOptions::default()).unwrap();
        let amp = |s: usize| {
            traj.data()[s * n..(s + 1) * n]
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()))
        };
        for s in 1..8 {
            assert!(amp(s) < amp(s - 1) + 1e-12, "amplitude must decay");
        }
    }

    #[test]
    fn spatial_mean_is_conserved() {
        let n = 64;
        let u0 = sinusoid_field(n, &[(0.8, 1, 0.4), (0.3, 3, 1.0)]);
        let shift = 0.25;
        let u0 = Tensor::new(vec![n], u0.data().iter().map(|v| v + shift).collect()).unwrap();
        let traj = solve_burgers(&u0, 0.05, 6, 0.05, n, BurgersOptions::default()).unwrap();
        let mean0: f64 = traj.data()[..n].iter().sum::<f64>() / n as f64;
        for s in 1..6 {
            let m: f64 = traj.data()[s * n..(s + 1) * n].iter().sum::<f64>() / n as f64;
            assert!((m - mean0).abs() / mean0.abs() < 1e-8);
        }
    }

    #[test]
    fn rk4_self_convergence_order() {
        // Error against a reference with 4x finer forced step shrinks by at
        // least 8x per step halving.
        let n = 64;
        let u0 = sinusoid_field(n, &[(1.0, 1, 0.0), (0.4, 2, 0.7)]);
        let nu = 0.5;
        let t_end = 0.4;
        let run = |h: f64| {
            let opts = BurgersOptions {
                forced_dt: Some(h),
                ..Default::default()
            };
            solve_burgers(&u0, nu, 2, t_end, n, opts).unwrap()
        };
        let reference = run(0.0025 / 4.0);
        let err = |h: f64| {
            let t = run(h);
            t.data()[n..]
                .iter()
                .zip(&reference.data()[n..])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        };
        let e1 = err(0.01);
        let e2 = err(0.005);
        let e3 = err(0.0025);
        assert!(e1 / e2 >= 8.0, "first halving ratio {}", e1 / e2);
        assert!(e2 / e3 >= 8.0, "second halving ratio {}", e2 / e3);
    }

    #[test]
    fn blow_up_detection_mentions_cfl() {
        let n = 32;
        let u0 = Tensor::full(&[n], 1e7);
        let err = solve_burgers(&u0, 0.001, 3, 0.1, n, BurgersOptions::default()).unwrap_err();
        assert!(err.to_string().contains("CFL") || err.to_string().contains("1e6"));
    }
}
