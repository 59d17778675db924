//! Unified representation: every family's state is lifted into a fixed
//! `[N, n, n]` tensor over the quantity set V, with channel and dimension
//! masks, coordinate channels, per-family normalization, teacher-forcing
//! pairs, and resolution resampling.

mod normalize;
mod pairs;
mod resample;

pub use normalize::{ChannelStat, NormStats};
pub use pairs::make_pairs;
pub use resample::{downsample, resample, upsample};

use crate::gradkit::Tensor;
use crate::pdegen::{Family, TrajectorySet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantity map error: {0}")]
    QuantityMap(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] crate::gradkit::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Fixed ordered quantity set V.
pub const QUANTITIES: [&str; 4] = ["velocity_x", "velocity_y", "pressure", "density"];
pub const N_QUANTITIES: usize = 4;
/// Number of coordinate channels appended to model inputs.
pub const N_COORDS: usize = 2;

/// Source channel index -> unified slot index.
pub type QuantityMap = Vec<(usize, usize)>;

/// Deterministic per-family channel assignment: scalar 1D states map to
/// `velocity_x`; the 2D reaction pair maps to (`velocity_x`, `velocity_y`);
/// shallow water maps (u1, u2, h) to (`velocity_x`, `velocity_y`, `density`).
pub fn default_quantity_map(family: Family) -> QuantityMap {
    match family {
        Family::ReactionDiffusion2d => vec![(0, 0), (1, 1)],
        // Channels are stored as [h, u1, u2].
        Family::ShallowWater => vec![(1, 0), (2, 1), (0, 3)],
        _ => vec![(0, 0)],
    }
}

pub fn validate_quantity_map(map: &QuantityMap, num_channels: usize) -> Result<()> {
    let mut used = [false; N_QUANTITIES];
    for &(src, slot) in map {
        if src >= num_channels {
            return Err(Error::QuantityMap(format!(
                "source channel {src} out of range ({num_channels} channels)"
            )));
        }
        if slot >= N_QUANTITIES {
            return Err(Error::QuantityMap(format!("slot {slot} outside V")));
        }
        if used[slot] {
            return Err(Error::QuantityMap(format!(
                "two source channels map to slot {slot} ({})",
                QUANTITIES[slot]
            )));
        }
        used[slot] = true;
    }
    Ok(())
}

/// Binary mask over V: 1 for channels the family populates.
pub fn channel_mask(map: &QuantityMap) -> [f64; N_QUANTITIES] {
    let mut m = [0.0; N_QUANTITIES];
    for &(_, slot) in map {
        m[slot] = 1.0;
    }
    m
}

/// Lift one source frame into the unified `[N, n, n]` tensor. 1D data
/// occupies row 0; unused quantities stay identically zero.
pub fn unify_frame(set: &TrajectorySet, traj: usize, t: usize, map: &QuantityMap) -> Tensor {
    let n = set.n;
    let space = set.space_len();
    let frame = set.frame(traj, t);
    let mut out = Tensor::zeros(&[N_QUANTITIES, n, n]);
    let data = out.data_mut();
    for &(src, slot) in map {
        let src_data = &frame[src * space..(src + 1) * space];
        let dst = &mut data[slot * n * n..(slot + 1) * n * n];
        if set.spatial_dim == 1 {
            for (d, &v) in dst[..n].iter_mut().zip(src_data) {
                *d = v as f64;
            }
        } else {
            for (d, &v) in dst.iter_mut().zip(src_data) {
                *d = v as f64;
            }
        }
    }
    out
}

/// Materialize the whole unified set as `[num_traj, T, N, n, n]` with its
/// channel mask. Intended for small sets and round-trip checks; training
/// lifts frames lazily.
pub fn unify(set: &TrajectorySet, map: &QuantityMap) -> Result<(Tensor, [f64; N_QUANTITIES])> {
    validate_quantity_map(map, set.channels.len())?;
    let n = set.n;
    let mut data = Vec::with_capacity(set.num_traj * set.t_steps * N_QUANTITIES * n * n);
    for traj in 0..set.num_traj {
        for t in 0..set.t_steps {
            data.extend_from_slice(unify_frame(set, traj, t, map).data());
        }
    }
    let tensor = Tensor::new(vec![set.num_traj, set.t_steps, N_QUANTITIES, n, n], data)?;
    Ok((tensor, channel_mask(map)))
}

/// Inverse of `unify_frame` on active channels: mask-select plus row-0
/// slice for 1D families.
pub fn extract_frame(unified: &Tensor, spatial_dim: usize, map: &QuantityMap) -> Vec<f64> {
    let n = unified.shape()[1];
    let space = n.pow(spatial_dim as u32);
    let mut out = vec![0.0; map.len() * space];
    let mut slots: Vec<(usize, usize)> = map.clone();
    slots.sort_by_key(|&(src, _)| src);
    for &(src, slot) in &slots {
        let ch = &unified.data()[slot * n * n..(slot + 1) * n * n];
        out[src * space..(src + 1) * space].copy_from_slice(&ch[..space]);
    }
    out
}

/// Combined channel x dimension mask as `[N, n, n]`: masked channels and,
/// for 1D families, rows beyond row 0 are zero.
pub fn mask_tensor(mask: &[f64; N_QUANTITIES], spatial_dim: usize, n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[N_QUANTITIES, n, n]);
    let data = t.data_mut();
    for (slot, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let rows = if spatial_dim == 1 { 1 } else { n };
        for r in 0..rows {
            for c in 0..n {
                data[slot * n * n + r * n + c] = 1.0;
            }
        }
    }
    t
}

/// Normalized coordinate channels in [0, 1]: channel 0 varies along
/// columns (the embedded 1D axis), channel 1 along rows and is zero for
/// 1D families.
pub fn coord_channels(n: usize, spatial_dim: usize) -> Tensor {
    let mut t = Tensor::zeros(&[N_COORDS, n, n]);
    let data = t.data_mut();
    let denom = (n - 1) as f64;
    for r in 0..n {
        for c in 0..n {
            data[r * n + c] = c as f64 / denom;
            if spatial_dim == 2 {
                data[n * n + r * n + c] = r as f64 / denom;
            }
        }
    }
    t
}

/// Stack quantity channels and coordinate channels into the model input.
pub fn attach_coords(quantities: &Tensor, spatial_dim: usize) -> Tensor {
    let n = quantities.shape()[1];
    let coords = coord_channels(n, spatial_dim);
    let mut data = Vec::with_capacity((N_QUANTITIES + N_COORDS) * n * n);
    data.extend_from_slice(quantities.data());
    data.extend_from_slice(coords.data());
    Tensor::new(vec![N_QUANTITIES + N_COORDS, n, n], data).expect("shape")
}

/// A trajectory set prepared for training: quantity map, masks, and the
/// normalization stats that all model-facing frames pass through.
#[derive(Clone)]
pub struct FamilyBundle {
    pub set: TrajectorySet,
    pub map: QuantityMap,
    pub mask: [f64; N_QUANTITIES],
    pub stats: Vec<ChannelStat>,
}

impl FamilyBundle {
    /// Wrap a set using training statistics computed elsewhere.
    pub fn with_stats(set: TrajectorySet, stats: Vec<ChannelStat>) -> Result<Self> {
        let map = default_quantity_map(set.family);
        validate_quantity_map(&map, set.channels.len())?;
        let mask = channel_mask(&map);
        Ok(Self {
            set,
            map,
            mask,
            stats,
        })
    }

    /// Wrap a training set, computing its normalization stats.
    pub fn from_train_set(set: TrajectorySet) -> Result<Self> {
        let map = default_quantity_map(set.family);
        validate_quantity_map(&map, set.channels.len())?;
        let stats = normalize::compute_stats(&set, &map);
        let mask = channel_mask(&map);
        Ok(Self {
            set,
            map,
            mask,
            stats,
        })
    }

    pub fn family(&self) -> Family {
        self.set.family
    }

    /// Normalized quantity frame `[N, n, n]`.
    pub fn normalized_frame(&self, traj: usize, t: usize) -> Tensor {
        let mut frame = unify_frame(&self.set, traj, t, &self.map);
        normalize::normalize_frame(&mut frame, &self.stats, &self.mask, self.set.spatial_dim);
        frame
    }

    /// Model input at (traj, t): normalized quantities plus coordinates.
    pub fn input_frame(&self, traj: usize, t: usize) -> Tensor {
        attach_coords(&self.normalized_frame(traj, t), self.set.spatial_dim)
    }

    /// Normalized prediction target at (traj, t).
    pub fn target_frame(&self, traj: usize, t: usize) -> Tensor {
        self.normalized_frame(traj, t)
    }

    /// Raw (denormalized) quantity frame for metric computation.
    pub fn raw_frame(&self, traj: usize, t: usize) -> Tensor {
        unify_frame(&self.set, traj, t, &self.map)
    }

    pub fn mask_tensor(&self) -> Tensor {
        mask_tensor(&self.mask, self.set.spatial_dim, self.set.n)
    }

    pub fn denormalize(&self, frame: &Tensor) -> Tensor {
        let mut out = frame.clone();
        normalize::denormalize_frame(&mut out, &self.stats, &self.mask, self.set.spatial_dim);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdegen::{generate, GenSpec};

    #[test]
    fn burgers_unifies_to_slot_zero_with_row_zero_payload() {
        let set = generate(&GenSpec::new(Family::Burgers, 16, 3, 2, 1)).unwrap();
        let map = default_quantity_map(Family::Burgers);
        let (unified, mask) = unify(&set, &map).unwrap();
        assert_eq!(mask, [1.0, 0.0, 0.0, 0.0]);
        let n = 16;
        let frame = unify_frame(&set, 1, 2, &map);
        // Row 0 equals the source; all other rows and channels are zero.
        let src = set.frame(1, 2);
        for c in 0..n {
            assert_eq!(frame.data()[c], src[c] as f64);
        }
        for i in n..N_QUANTITIES * n * n {
            if i >= n {
                let ch = i / (n * n);
                let within = i % (n * n);
                if ch == 0 && within < n {
                    continue;
                }
                assert_eq!(frame.data()[i], 0.0, "index {i} should be zero");
            }
        }
        assert_eq!(unified.shape(), &[2, 3, N_QUANTITIES, n, n]);
    }

    #[test]
    fn shallow_water_mask_and_round_trip() {
        let set = generate(&GenSpec::new(Family::ShallowWater, 16, 3, 1, 2)).unwrap();
        let map = default_quantity_map(Family::ShallowWater);
        let (_, mask) = unify(&set, &map).unwrap();
        assert_eq!(mask, [1.0, 1.0, 0.0, 1.0]);
        let frame = unify_frame(&set, 0, 1, &map);
        let back = extract_frame(&frame, 2, &map);
        let src = set.frame(0, 1);
        for (a, &b) in back.iter().zip(src) {
            assert_eq!(*a, b as f64, "round trip must be bit-exact");
        }
    }

    #[test]
    fn duplicate_slot_mapping_is_rejected() {
        let err = validate_quantity_map(&vec![(0, 0), (1, 0)], 2).unwrap_err();
        assert!(err.to_string().contains("velocity_x"));
    }

    #[test]
    fn coords_match_linspace_and_1d_y_is_zero() {
        let t = coord_channels(4, 1);
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for r in 0..4 {
            for c in 0..4 {
                assert!((t.data()[r * 4 + c] - want[c]).abs() < 1e-15);
                assert_eq!(t.data()[16 + r * 4 + c], 0.0);
            }
        }
        let t2 = coord_channels(4, 2);
        for r in 0..4 {
            for c in 0..4 {
                assert!((t2.data()[16 + r * 4 + c] - want[r]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mask_tensor_zeroes_padded_rows() {
        let m = mask_tensor(&[1.0, 0.0, 0.0, 1.0], 1, 8);
        let d = m.data();
        for c in 0..8 {
            assert_eq!(d[c], 1.0);
            assert_eq!(d[3 * 64 + c], 1.0);
        }
        assert_eq!(d[8], 0.0); // channel 0, row 1
        assert_eq!(d[64], 0.0); // channel 1 entirely
        let total: f64 = d.iter().sum();
        assert_eq!(total, 16.0);
    }
}
