//! Per-family, per-channel normalization. Statistics come from the
//! training split only and are reused verbatim for validation, test, and
//! for denormalizing predictions.

use super::{QuantityMap, Result, N_QUANTITIES, QUANTITIES};
use crate::gradkit::Tensor;
use crate::pdegen::TrajectorySet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChannelStat {
    pub mean: f64,
    pub std: f64,
}

impl Default for ChannelStat {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

/// Active-entry statistics per unified channel; masked channels keep the
/// identity stat.
pub fn compute_stats(set: &TrajectorySet, map: &QuantityMap) -> Vec<ChannelStat> {
    let space = set.space_len();
    let mut stats = vec![ChannelStat::default(); N_QUANTITIES];
    for &(src, slot) in map {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for traj in 0..set.num_traj {
            for t in 0..set.t_steps {
                let frame = set.frame(traj, t);
                for &v in &frame[src * space..(src + 1) * space] {
                    sum += v as f64;
                    count += 1;
                }
            }
        }
        let mean = sum / count.max(1) as f64;
        let mut var = 0.0f64;
        for traj in 0..set.num_traj {
            for t in 0..set.t_steps {
                let frame = set.frame(traj, t);
                for &v in &frame[src * space..(src + 1) * space] {
                    let d = v as f64 - mean;
                    var += d * d;
                }
            }
        }
        let std = (var / count.max(1) as f64).sqrt().max(STD_FLOOR);
        stats[slot] = ChannelStat { mean, std };
    }
    stats
}

/// Normalize active entries of a unified `[N, n, n]` frame in place;
/// masked channels and padded rows stay untouched (zero).
pub fn normalize_frame(frame: &mut Tensor, stats: &[ChannelStat], mask: &[f64; N_QUANTITIES], spatial_dim: usize) {
    apply(frame, stats, mask, spatial_dim, |v, s| (v - s.mean) / s.std);
}

pub fn denormalize_frame(frame: &mut Tensor, stats: &[ChannelStat], mask: &[f64; N_QUANTITIES], spatial_dim: usize) {
    apply(frame, stats, mask, spatial_dim, |v, s| v * s.std + s.mean);
}

fn apply(
    frame: &mut Tensor,
    stats: &[ChannelStat],
    mask: &[f64; N_QUANTITIES],
    spatial_dim: usize,
    f: impl Fn(f64, &ChannelStat) -> f64,
) {
    let n = frame.shape()[1];
    let data = frame.data_mut();
    for slot in 0..N_QUANTITIES {
        if mask[slot] == 0.0 {
            continue;
        }
        let s = &stats[slot];
        let active = if spatial_dim == 1 { n } else { n * n };
        for v in data[slot * n * n..slot * n * n + active].iter_mut() {
            *v = f(*v, s);
        }
    }
}

/// Stats for all families, persisted as JSON beside checkpoints:
/// family -> quantity name -> {mean, std}.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct NormStats(pub BTreeMap<String, BTreeMap<String, ChannelStat>>);

impl NormStats {
    pub fn insert(&mut self, family: &str, stats: &[ChannelStat], mask: &[f64; N_QUANTITIES]) {
        let mut m = BTreeMap::new();
        for (slot, stat) in stats.iter().enumerate() {
            if mask[slot] != 0.0 {
                m.insert(QUANTITIES[slot].to_string(), *stat);
            }
        }
        self.0.insert(family.to_string(), m);
    }

    pub fn channel_stats(&self, family: &str) -> Option<Vec<ChannelStat>> {
        let m = self.0.get(family)?;
        let mut out = vec![ChannelStat::default(); N_QUANTITIES];
        for (slot, name) in QUANTITIES.iter().enumerate() {
            if let Some(s) = m.get(*name) {
                out[slot] = *s;
            }
        }
        Some(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| super::Error::Invalid(format!("stats serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| super::Error::Invalid(format!("stats JSON: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdegen::{generate, Family, GenSpec};
    use crate::unirep::{default_quantity_map, unify_frame};

    #[test]
    fn constant_channel_gets_floored_std_and_normalizes_to_zero() {
        let mut set = generate(&GenSpec::new(Family::Burgers, 8, 2, 1, 3)).unwrap();
        set.data.iter_mut().for_each(|v| *v = 2.5);
        let map = default_quantity_map(Family::Burgers);
        let stats = compute_stats(&set, &map);
        assert_eq!(stats[0].std, STD_FLOOR);
        let mut frame = unify_frame(&set, 0, 0, &map);
        normalize_frame(&mut frame, &stats, &[1.0, 0.0, 0.0, 0.0], 1);
        for &v in &frame.data()[..8] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn normalize_round_trip_identity() {
        let set = generate(&GenSpec::new(Family::ShallowWater, 16, 3, 2, 5)).unwrap();
        let map = default_quantity_map(Family::ShallowWater);
        let stats = compute_stats(&set, &map);
        let mask = crate::unirep::channel_mask(&map);
        let original = unify_frame(&set, 1, 2, &map);
        let mut frame = original.clone();
        normalize_frame(&mut frame, &stats, &mask, 2);
        denormalize_frame(&mut frame, &stats, &mask, 2);
        for (a, b) in frame.data().iter().zip(original.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn post_normalization_moments_are_standard() {
        let set = generate(&GenSpec::new(Family::Burgers, 32, 4, 8, 7)).unwrap();
        let map = default_quantity_map(Family::Burgers);
        let stats = compute_stats(&set, &map);
        let mask = crate::unirep::channel_mask(&map);
        // Recompute the active-entry moments after normalization.
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for traj in 0..set.num_traj {
            for t in 0..set.t_steps {
                let mut frame = unify_frame(&set, traj, t, &map);
                normalize_frame(&mut frame, &stats, &mask, 1);
                for &v in &frame.data()[..32] {
                    sum += v;
                    sumsq += v * v;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let var = sumsq / count as f64 - mean * mean;
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
    }

    #[test]
    fn masked_channels_stay_zero_after_normalization() {
        let set = generate(&GenSpec::new(Family::Burgers, 8, 2, 1, 3)).unwrap();
        let map = default_quantity_map(Family::Burgers);
        let stats = compute_stats(&set, &map);
        let mask = crate::unirep::channel_mask(&map);
        let mut frame = unify_frame(&set, 0, 1, &map);
        normalize_frame(&mut frame, &stats, &mask, 1);
        // Channels 1..4 and rows beyond 0 of channel 0 remain zero.
        for ch in 1..N_QUANTITIES {
            for &v in &frame.data()[ch * 64..(ch + 1) * 64] {
                assert_eq!(v, 0.0);
            }
        }
        for &v in &frame.data()[8..64] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn stats_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        let mut ns = NormStats::default();
        ns.insert(
            "burgers",
            &[
                ChannelStat {
                    mean: 0.3,
                    std: 1.7,
                },
                ChannelStat::default(),
                ChannelStat::default(),
                ChannelStat::default(),
            ],
            &[1.0, 0.0, 0.0, 0.0],
        );
        ns.save(&path).unwrap();
        let back = NormStats::load(&path).unwrap();
        assert_eq!(back, ns);
        let stats = back.channel_stats("burgers").unwrap();
        assert_eq!(stats[0].mean, 0.3);
        assert_eq!(stats[1].std, 1.0);
    }
}
