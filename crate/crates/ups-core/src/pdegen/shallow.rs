//! 2D shallow-water equations on [-2.5, 2.5]^2 in conservative variables
//! (h, hu, hv), first-order finite-volume local Lax-Friedrichs fluxes,
//! centered bathymetry source, CFL-limited internal substepping.

use super::{Error, Result};
use crate::gradkit::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweBoundary {
    Periodic,
    Reflective,
}

#[derive(Clone, Copy, Debug)]
pub struct SweOptions {
    pub boundary: SweBoundary,
    pub cfl: f64,
}

impl Default for SweOptions {
    fn default() -> Self {
        Self {
            boundary: SweBoundary::Periodic,
            cfl: 0.4,
        }
    }
}

pub const SWE_DOMAIN: (f64, f64) = (-2.5, 2.5);

struct Grid {
    n: usize,
    dx: f64,
    boundary: SweBoundary,
}

impl Grid {
    /// Neighbor index with boundary handling; returns (index, u-sign, v-sign)
    /// so reflective walls negate the normal momentum. Axis 1 (columns) is
    /// the x direction carrying hu; axis 0 (rows) is y carrying hv.
    fn neighbor(&self, i: isize, j: isize) -> (usize, f64, f64) {
        let n = self.n as isize;
        match self.boundary {
            SweBoundary::Periodic => {
                let ii = i.rem_euclid(n) as usize;
                let jj = j.rem_euclid(n) as usize;
                (ii * self.n + jj, 1.0, 1.0)
            }
            SweBoundary::Reflective => {
                let mut su = 1.0;
                let mut sv = 1.0;
                let ii = if i < 0 {
                    sv = -1.0;
                    0
                } else if i >= n {
                    sv = -1.0;
                    (n - 1) as usize
                } else {
                    i as usize
                };
                let jj = if j < 0 {
                    su = -1.0;
                    0
                } else if j >= n {
                    su = -1.0;
                    (n - 1) as usize
                } else {
                    j as usize
                };
                (ii * self.n + jj, su, sv)
            }
        }
    }
}

#[derive(Clone, Copy)]
struct State {
    h: f64,
    hu: f64,
    hv: f64,
}

#[inline]
fn flux_x(s: State, g: f64) -> (f64, f64, f64) {
    let u = s.hu / s.h;
    (s.hu, s.hu * u + 0.5 * g * s.h * s.h, s.hv * u)
}

#[inline]
fn flux_y(s: State, g: f64) -> (f64, f64, f64) {
    let v = s.hv / s.h;
    (s.hv, s.hu * v, s.hv * v + 0.5 * g * s.h * s.h)
}

/// Local Lax-Friedrichs (Rusanov) interface flux in direction `axis`.
#[inline]
fn rusanov(l: State, r: State, g: f64, axis: usize) -> (f64, f64, f64) {
    let (fl, fr, ul, ur) = if axis == 0 {
        (flux_x(l, g), flux_x(r, g), l.hu / l.h, r.hu / r.h)
    } else {
        (flux_y(l, g), flux_y(r, g), l.hv / l.h, r.hv / r.h)
    };
    let a = (ul.abs() + (g * l.h).sqrt()).max(ur.abs() + (g * r.h).sqrt());
    (
        0.5 * (fl.0 + fr.0) - 0.5 * a * (r.h - l.h),
        0.5 * (fl.1 + fr.1) - 0.5 * a * (r.hu - l.hu),
        0.5 * (fl.2 + fr.2) - 0.5 * a * (r.hv - l.hv),
    )
}

/// Solve from primitive ICs; returns snapshots of (h, u1, u2) as
/// `[t, 3, n, n]`.
#[allow(clippy::too_many_arguments)]
pub fn solve_shallow_water(
    h0: &Tensor,
    u0: &Tensor,
    v0: &Tensor,
    bathymetry: &Tensor,
    g_r: f64,
    t_steps: usize,
    dt: f64,
    n: usize,
    opts: SweOptions,
) -> Result<Tensor> {
    for (name, t) in [("h0", h0), ("u0", u0), ("v0", v0), ("b", bathymetry)] {
        if t.shape() != [n, n] {
            return Err(Error::Invalid(format!(
                "shallow_water: {name} shape {:?} does not match [{n}, {n}]",
                t.shape()
            )));
        }
    }
    if h0.data().iter().any(|&h| h <= 0.0) {
        return Err(Error::Invalid(
            "shallow_water: dry states (h <= 0) are unsupported".into(),
        ));
    }
    let nn = n * n;
    let grid = Grid {
        n,
        dx: (SWE_DOMAIN.1 - SWE_DOMAIN.0) / n as f64,
        boundary: opts.boundary,
    };
    let b = bathymetry.data();

    let mut h: Vec<f64> = h0.data().to_vec();
    let mut hu: Vec<f64> = h0.data().iter().zip(u0.data()).map(|(&h, &u)| h * u).collect();
    let mut hv: Vec<f64> = h0.data().iter().zip(v0.data()).map(|(&h, &v)| h * v).collect();

    let mut out = Vec::with_capacity(t_steps * 3 * nn);
    push_primitives(&h, &hu, &hv, &mut out);

    let mut nh = vec![0.0; nn];
    let mut nhu = vec![0.0; nn];
    let mut nhv = vec![0.0; nn];

    for _snap in 1..t_steps {
        let mut remaining = dt;
        while remaining > 1e-14 {
            // CFL bound from the fastest wave in either direction.
            let mut speed = 1e-12f64;
            for idx in 0..nn {
                let c = (g_r * h[idx]).sqrt();
                let u = (hu[idx] / h[idx]).abs();
                let v = (hv[idx] / h[idx]).abs();
                speed = speed.max(u + c).max(v + c);
            }
            let step = (opts.cfl * grid.dx / speed).min(remaining);

            let get = |h: &[f64], hu: &[f64], hv: &[f64], i: isize, j: isize| -> State {
                let (idx, su, sv) = grid.neighbor(i, j);
                State {
                    h: h[idx],
                    hu: su * hu[idx],
                    hv: sv * hv[idx],
                }
            };

            for i in 0..n as isize {
                for j in 0..n as isize {
                    let idx = i as usize * n + j as usize;
                    let c = get(&h, &hu, &hv, i, j);
                    let xm = get(&h, &hu, &hv, i, j - 1);
                    let xp = get(&h, &hu, &hv, i, j + 1);
                    let ym = get(&h, &hu, &hv, i - 1, j);
                    let yp = get(&h, &hu, &hv, i + 1, j);

                    let fxp = rusanov(c, xp, g_r, 0);
                    let fxm = rusanov(xm, c, g_r, 0);
                    let fyp = rusanov(c, yp, g_r, 1);
                    let fym = rusanov(ym, c, g_r, 1);

                    // Centered bathymetry gradient with the same boundary rule.
                    let (bxm, _, _) = grid.neighbor(i, j - 1);
                    let (bxp, _, _) = grid.neighbor(i, j + 1);
                    let (bym, _, _) = grid.neighbor(i - 1, j);
                    let (byp, _, _) = grid.neighbor(i + 1, j);
                    let dbdx = (b[bxp] - b[bxm]) / (2.0 * grid.dx);
                    let dbdy = (b[byp] - b[bym]) / (2.0 * grid.dx);

                    let lam = step / grid.dx;
                    nh[idx] = c.h - lam * (fxp.0 - fxm.0) - lam * (fyp.0 - fym.0);
                    nhu[idx] =
                        c.hu - lam * (fxp.1 - fxm.1) - lam * (fyp.1 - fym.1) - step * g_r * c.h * dbdx;
                    nhv[idx] =
                        c.hv - lam * (fxp.2 - fxm.2) - lam * (fyp.2 - fym.2) - step * g_r * c.h * dbdy;
                }
            }
            std::mem::swap(&mut h, &mut nh);
            std::mem::swap(&mut hu, &mut nhu);
            std::mem::swap(&mut hv, &mut nhv);
            remaining -= step;

            if h.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::BlowUp(
                    "shallow_water reached a dry or non-finite state".into(),
                ));
            }
        }
        push_primitives(&h, &hu, &hv, &mut out);
    }
    Tensor::new(vec![t_steps, 3, n, n], out).map_err(Into::into)
}

fn push_primitives(h: &[f64], hu: &[f64], hv: &[f64], out: &mut Vec<f64>) {
    out.extend_from_slice(h);
    out.extend(hu.iter().zip(h).map(|(&m, &h)| m / h));
    out.extend(hv.iter().zip(h).map(|(&m, &h)| m / h));
}
