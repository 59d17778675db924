//! Linear advection on the periodic unit interval, solved exactly by a
//! spectral phase shift: each Fourier mode picks up exp(-2pi i k beta t).

use super::{Error, Result};
use crate::gradkit::{fft1d, ifft1d, Tensor};
use num_complex::Complex64;
use std::f64::consts::PI;

pub fn solve_advection(u0: &Tensor, beta: f64, t_steps: usize, dt: f64, n: usize) -> Result<Tensor> {
    if u0.shape() != [n] {
        return Err(Error::Invalid(format!(
            "advection: u0 shape {:?} does not match n={n}",
            u0.shape()
        )));
    }
    let uhat = fft1d(u0.data())?;
    let mut out = Vec::with_capacity(t_steps * n);
    for step in 0..t_steps {
        let t = step as f64 * dt;
        let shift = beta * t;
        let mut shifted: Vec<Complex64> = Vec::with_capacity(n);
        for (k, &c) in uhat.iter().enumerate() {
            let ks = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let phase = -2.0 * PI * ks * shift;
            shifted.push(c * Complex64::new(phase.cos(), phase.sin()));
        }
        out.extend(ifft1d(&shifted)?);
    }
    Tensor::new(vec![t_steps, 1, n], out).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdegen::{sample_ic_sinusoid, sinusoid_field};

    #[test]
    fn zero_speed_keeps_every_frame_equal() {
        let n = 64;
        let u0 = sample_ic_sinusoid(3, n, 4, (-1.0, 1.0));
        let traj = solve_advection(&u0, 0.0, 5, 0.1, n).unwrap();
        for step in 0..5 {
            for i in 0..n {
                assert!((traj.data()[step * n + i] - u0.data()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn commensurate_shift_is_circular() {
        let n = 64;
        let u0 = sample_ic_sinusoid(17, n, 4, (-1.0, 1.0));
        // beta * dt * n = 8 cells per step, exactly.
        let beta = 0.5;
        let dt = 8.0 / (beta * n as f64);
        let traj = solve_advection(&u0, beta, 3, dt, n).unwrap();
        for i in 0..n {
            // After one step the field is u0 shifted right by 8 cells.
            let want = u0.data()[(i + n - 8) % n];
            assert!((traj.data()[n + i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_matches_analytic_translation() {
        // beta = 0.4 with 41 snapshots over (0, 2]: dt = 0.05.
        let n = 64;
        let beta = 0.4;
        let t_steps = 41;
        let dt = 2.0 / (t_steps as f64 - 1.0);
        let u0 = sinusoid_field(n, &[(1.0, 1, 0.0)]);
        let traj = solve_advection(&u0, beta, t_steps, dt, n).unwrap();
        for step in 0..t_steps {
            let t = step as f64 * dt;
            for i in 0..n {
                let x = i as f64 / n as f64;
                let want = (2.0 * PI * (x - beta * t)).sin();
                assert!(
                    (traj.data()[step * n + i] - want).abs() < 1e-10,
                    "step {step} cell {i}"
                );
            }
        }
    }

    #[test]
    fn band_limited_ic_matches_analytic_shift_generics() {
        let n = 64;
        let modes = [(0.7, 2, 0.3), (-0.4, 5, 1.2), (0.2, 7, 2.5)];
        let u0 = sinusoid_field(n, &modes);
        let beta = 0.31;
        let dt = 0.17;
        let traj = solve_advection(&u0, beta, 4, dt, n).unwrap();
        for step in 0..4 {
            let t = step as f64 * dt;
            for i in 0..n {
                let x = i as f64 / n as f64;
                let mut want = 0.0;
                for &(a, k, p) in &modes {
                    want += a * (2.0 * PI * k as f64 * (x - beta * t) + p).sin();
                }
                assert!((traj.data()[step * n + i] - want).abs() < 1e-10);
            }
        }
    }
}
