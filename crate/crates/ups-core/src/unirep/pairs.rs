//! Teacher-forcing pair enumeration: (u_t, u_{t+1}) index pairs that never
//! cross trajectory boundaries.

use super::{Error, Result};

/// Index of one teacher-forcing pair: the input frame is (traj, t) and the
/// target frame is (traj, t + 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairIdx {
    pub traj: usize,
    pub t: usize,
}

/// All `num_traj * (T - 1)` pairs of a trajectory set.
pub fn make_pairs(num_traj: usize, t_steps: usize) -> Result<Vec<PairIdx>> {
    if t_steps < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 timesteps for teacher forcing, got {t_steps}"
        )));
    }
    let mut out = Vec::with_capacity(num_traj * (t_steps - 1));
    for traj in 0..num_traj {
        for t in 0..t_steps - 1 {
            out.push(PairIdx { traj, t });
        }
    }
    Ok(out)
}
