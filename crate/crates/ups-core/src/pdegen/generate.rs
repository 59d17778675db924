//! Seeded trajectory generation for each family. Trajectories are
//! embarrassingly parallel; each owns a seed derived from the set seed and
//! its index, so output is independent of worker count.

use super::ic::{sample_ic_grf, sample_ic_sinusoid};
use super::{
    solve_advection, solve_burgers, solve_diffusion_sorption, solve_reaction_diffusion_1d,
    solve_reaction_diffusion_2d, solve_shallow_water, BurgersOptions, Error, Family, Rd1dOptions,
    Rd2dOptions, Result, RetardationParams, SorptionOptions, SweOptions, TrajectorySet,
};
use crate::gradkit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub t_steps: usize,
    pub num_traj: usize,
    pub seed: u64,
    /// Merged over the family defaults.
    pub coefficients: BTreeMap<String, f64>,
    /// Physical time span covered by the stored snapshots; family default
    /// when absent.
    pub time_span: Option<f64>,
}

impl GenSpec {
    pub fn new(family: Family, n: usize, t_steps: usize, num_traj: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            t_steps,
            num_traj,
            seed,
            coefficients: BTreeMap::new(),
            time_span: None,
        }
    }
}

/// Family defaults mirroring the coefficient table the training preset uses.
pub fn default_coefficients(family: Family) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    match family {
        Family::Advection => {
            m.insert("beta".into(), 0.4);
        }
        Family::Burgers => {
            m.insert("nu".into(), 0.001);
        }
        Family::DiffusionSorption => {
            m.insert("d".into(), 5e-4);
            let r = RetardationParams::default();
            m.insert("phi".into(), r.porosity);
            m.insert("rho_s".into(), r.bulk_density);
            m.insert("k_f".into(), r.freundlich_k);
            m.insert("n_f".into(), r.freundlich_n);
        }
        Family::ReactionDiffusion1d => {
            m.insert("nu".into(), 0.5);
            m.insert("rho".into(), 1.0);
        }
        Family::ReactionDiffusion2d => {
            m.insert("nu1".into(), 1e-3);
            m.insert("nu2".into(), 5e-3);
            m.insert("k".into(), 5e-3);
        }
        Family::ShallowWater => {
            m.insert("g".into(), 1.0);
        }
        Family::External => {}
    }
    m
}

pub fn default_time_span(family: Family) -> f64 {
    match family {
        Family::Advection | Family::Burgers => 2.0,
        Family::DiffusionSorption => 500.0,
        Family::ReactionDiffusion1d => 1.0,
        Family::ReactionDiffusion2d => 5.0,
        Family::ShallowWater => 1.0,
        Family::External => 1.0,
    }
}

pub fn channels_for(family: Family) -> Vec<String> {
    match family {
        Family::ReactionDiffusion2d => vec!["activator".into(), "inhibitor".into()],
        Family::ShallowWater => vec!["h".into(), "u1".into(), "u2".into()],
        _ => vec!["u".into()],
    }
}

pub fn domain_for(family: Family) -> Vec<(f64, f64)> {
    match family {
        Family::ReactionDiffusion2d => vec![(-1.0, 1.0), (-1.0, 1.0)],
        Family::ShallowWater => vec![(-2.5, 2.5), (-2.5, 2.5)],
        f if f.spatial_dim() == 1 => vec![(0.0, 1.0)],
        _ => vec![(0.0, 1.0), (0.0, 1.0)],
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

pub fn traj_seed(set_seed: u64, traj: usize) -> u64 {
    splitmix64(set_seed ^ splitmix64(traj as u64))
}

pub fn generate(spec: &GenSpec) -> Result<TrajectorySet> {
    if spec.family == Family::External {
        return Err(Error::Invalid(
            "external data is never generated; ingest it through the container reader".into(),
        ));
    }
    if spec.t_steps < 2 {
        return Err(Error::Invalid("t_steps must be at least 2".into()));
    }
    let mut coefficients = default_coefficients(spec.family);
    for (k, v) in &spec.coefficients {
        coefficients.insert(k.clone(), *v);
    }
    let span = spec.time_span.unwrap_or_else(|| default_time_span(spec.family));
    let dt = span / (spec.t_steps as f64 - 1.0);
    let snapshot_times: Vec<f64> = (0..spec.t_steps).map(|j| j as f64 * dt).collect();

    let trajs: Vec<Result<Vec<f32>>> = (0..spec.num_traj)
        .into_par_iter()
        .map(|idx| {
            let seed = traj_seed(spec.seed, idx);
            let t = solve_one(spec.family, &coefficients, spec.n, spec.t_steps, dt, seed)?;
            Ok(t.data().iter().map(|&v| v as f32).collect())
        })
        .collect();

    let mut data = Vec::with_capacity(
        spec.num_traj * spec.t_steps * channels_for(spec.family).len() * spec.n.pow(spec.family.spatial_dim() as u32),
    );
    for t in trajs {
        data.extend(t?);
    }
    let set = TrajectorySet {
        family: spec.family,
        spatial_dim: spec.family.spatial_dim(),
        coefficients,
        n: spec.n,
        t_steps: spec.t_steps,
        num_traj: spec.num_traj,
        channels: channels_for(spec.family),
        domain: domain_for(spec.family),
        snapshot_times,
        seed: spec.seed,
        data,
    };
    set.validate()?;
    Ok(set)
}

fn coeff(map: &BTreeMap<String, f64>, key: &str) -> f64 {
    *map.get(key).expect("defaulted coefficient")
}

fn solve_one(
    family: Family,
    c: &BTreeMap<String, f64>,
    n: usize,
    t_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Tensor> {
    match family {
        Family::Advection => {
            let u0 = sample_ic_sinusoid(seed, n, 3, (-1.0, 1.0));
            solve_advection(&u0, coeff(c, "beta"), t_steps, dt, n)
        }
        Family::Burgers => {
            let u0 = sample_ic_sinusoid(seed, n, 3, (-1.0, 1.0));
            solve_burgers(&u0, coeff(c, "nu"), t_steps, dt, n, BurgersOptions::default())
        }
        Family::DiffusionSorption => {
            let u0 = sample_ic_sinusoid(seed, n, 3, (0.1, 0.9));
            let opts = SorptionOptions {
                bc: (1.0, 0.0),
                retardation: Some(RetardationParams {
                    porosity: coeff(c, "phi"),
                    bulk_density: coeff(c, "rho_s"),
                    freundlich_k: coeff(c, "k_f"),
                    freundlich_n: coeff(c, "n_f"),
                }),
                forced_substeps: None,
            };
            solve_diffusion_sorption(&u0, coeff(c, "d"), t_steps, dt, n, opts)
        }
        Family::ReactionDiffusion1d => {
            let u0 = sample_ic_sinusoid(seed, n, 3, (0.01, 0.99));
            solve_reaction_diffusion_1d(
                &u0,
                coeff(c, "nu"),
                coeff(c, "rho"),
                t_steps,
                dt,
                n,
                Rd1dOptions::default(),
            )
        }
        Family::ReactionDiffusion2d => {
            let a = sample_ic_grf(seed, n, 0.15);
            let b = sample_ic_grf(splitmix64(seed ^ 0xABCD), n, 0.15);
            let mut u0 = Tensor::zeros(&[2, n, n]);
            u0.data_mut()[..n * n].copy_from_slice(a.data());
            u0.data_mut()[n * n..].copy_from_slice(b.data());
            solve_reaction_diffusion_2d(
                &u0,
                coeff(c, "nu1"),
                coeff(c, "nu2"),
                coeff(c, "k"),
                t_steps,
                dt,
                n,
                Rd2dOptions::default(),
            )
        }
        Family::ShallowWater => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r0: f64 = rng.gen_range(0.5..1.5);
            let height: f64 = rng.gen_range(0.3..1.0);
            let width = 0.15;
            let mut h0 = Tensor::zeros(&[n, n]);
            {
                let d = h0.data_mut();
                let (lo, hi) = (-2.5, 2.5);
                let dx = (hi - lo) / n as f64;
                for i in 0..n {
                    let x = lo + (i as f64 + 0.5) * dx;
                    for j in 0..n {
                        let y = lo + (j as f64 + 0.5) * dx;
                        let r = (x * x + y * y).sqrt();
                        // Smoothed radial dam break.
                        d[i * n + j] = 1.0 + height * 0.5 * (1.0 + ((r0 - r) / width).tanh());
                    }
                }
            }
            let zero = Tensor::zeros(&[n, n]);
            solve_shallow_water(
                &h0,
                &zero,
                &zero,
                &zero,
                coeff(c, "g"),
                t_steps,
                dt,
                n,
                SweOptions::default(),
            )
        }
        Family::External => unreachable!(),
    }
}
