//! Task (nRMSE) and alignment (MMD) losses.

use crate::gradkit::{NodeId, Tape, Tensor};
use crate::upsnet::tokenize;

pub const ZERO_NORM_GUARD: f64 = 1e-12;

/// Masked L2 norm of the target, used as the per-sample nRMSE denominator.
pub fn target_norm(target: &Tensor, mask: &Tensor) -> f64 {
    target
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&t, &m)| t * m * t * m)
        .sum::<f64>()
        .sqrt()
}

/// Per-sample nRMSE node: ||mask (pred - target)|| / ||mask target||.
/// Returns `None` (sample skipped, logged) when the target norm falls
/// under the epsilon guard.
pub fn nrmse_node(
    tape: &mut Tape,
    pred: NodeId,
    target: &Tensor,
    mask: &Tensor,
) -> crate::gradkit::Result<Option<NodeId>> {
    let denom = target_norm(target, mask);
    if denom < ZERO_NORM_GUARD {
        log::warn!("nrmse sample skipped: zero-norm target");
        return Ok(None);
    }
    let shape = target.shape().to_vec();
    let t = tape.constant(target.clone());
    let m = tape.constant(mask.clone());
    let pred_flat = tape.reshape(pred, &shape)?;
    let diff = tape.sub(pred_flat, t)?;
    let masked = tape.mul(diff, m)?;
    let sq = tape.mul(masked, masked)?;
    let sum = tape.sum_all(sq);
    let norm = tape.sqrt(sum);
    Ok(Some(tape.scale(norm, 1.0 / denom)))
}

/// Gaussian-kernel bandwidth from the median pairwise distance of the
/// joined row sets, floored at 1e-6.
pub fn median_sigma(a: &Tensor, b: &Tensor) -> f64 {
    let e = a.shape()[1];
    let rows: Vec<&[f64]> = a
        .data()
        .chunks(e)
        .chain(b.data().chunks(e))
        .collect();
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d2: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1e-6;
    }
    dists.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    dists[dists.len() / 2].max(1e-6)
}

/// Value-level MMD^2 for reporting; the differentiable path goes through
/// `Tape::mmd_gaussian`.
pub fn mmd_loss_value(a: &Tensor, b: &Tensor, sigma: f64) -> f64 {
    let mut tape = Tape::new();
    let na = tape.constant(a.clone());
    let nb = tape.constant(b.clone());
    let m = tape.mmd_gaussian(na, nb, sigma).expect("shapes checked");
    tape.value(m).item()
}

/// Mean-pooled byte-token embeddings of each corpus line under the
/// current metadata embedding table: one reference vector per line.
/// Empty lines are skipped.
pub fn reference_features(lines: &[&str], table: &Tensor, max_len: usize) -> Tensor {
    let e = table.shape()[1];
    let mut out = Vec::new();
    let mut count = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ids = tokenize(line, max_len);
        let mut pooled = vec![0.0; e];
        for &id in &ids {
            let row = &table.data()[id as usize * e..(id as usize + 1) * e];
            for (p, &v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        out.extend(pooled.into_iter().map(|v| v * inv));
        count += 1;
    }
    Tensor::new(vec![count, e], out).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nrmse_identity_is_zero_and_zero_pred_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = Tensor::rand_normal(&[2, 4, 4], 1.0, &mut rng);
        let mask = Tensor::full(&[2, 4, 4], 1.0);

        let mut tape = Tape::new();
        let pred = tape.constant(target.clone());
        let loss = nrmse_node(&mut tape, pred, &target, &mask).unwrap().unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);

        let zero = tape.constant(Tensor::zeros(&[2, 4, 4]));
        let loss1 = nrmse_node(&mut tape, zero, &target, &mask).unwrap().unwrap();
        assert!((tape.value(loss1).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = Tensor::rand_normal(&[1, 8], 1.0, &mut rng);
        let pred_val = Tensor::rand_normal(&[1, 8], 1.0, &mut rng);
        let mask = Tensor::full(&[1, 8], 1.0);
        let c = -3.7;
        let mut tape = Tape::new();
        let p = tape.constant(pred_val.clone());
        let base = nrmse_node(&mut tape, p, &target, &mask).unwrap().unwrap();
        let ps = tape.constant(pred_val.map(|v| c * v));
        let scaled_target = target.map(|v| c * v);
        let scaled = nrmse_node(&mut tape, ps, &scaled_target, &mask).unwrap().unwrap();
        assert!((tape.value(base).item() - tape.value(scaled).item()).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_target_is_skipped() {
        let target = Tensor::zeros(&[2, 2]);
        let mask = Tensor::full(&[2, 2], 1.0);
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::full(&[2, 2], 1.0));
        assert!(nrmse_node(&mut tape, pred, &target, &mask).unwrap().is_none());
    }

    #[test]
    fn masked_positions_contribute_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = Tensor::rand_normal(&[2, 4], 1.0, &mut rng).map(|v| v + 2.0);
        let mut mask = Tensor::full(&[2, 4], 1.0);
        for j in 0..4 {
            mask.data_mut()[4 + j] = 0.0; // mask the second row
        }
        let mut tape = Tape::new();
        let base_pred = tape.constant(target.clone());
        let base = nrmse_node(&mut tape, base_pred, &target, &mask).unwrap().unwrap();
        // Perturb predictions only on the masked row: loss delta must be 0.
        let mut perturbed = target.clone();
        for j in 0..4 {
            perturbed.data_mut()[4 + j] += 123.0;
        }
        let p = tape.constant(perturbed);
        let l = nrmse_node(&mut tape, p, &target, &mask).unwrap().unwrap();
        assert_eq!(tape.value(base).item(), tape.value(l).item());
    }

    #[test]
    fn reference_features_match_hand_pooling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let table = Tensor::rand_normal(&[258, 6], 1.0, &mut rng);
        let feats = reference_features(&["ab", "", "a"], &table, 16);
        assert_eq!(feats.shape(), &[2, 6]);
        // "ab" -> ids [BOS, 'a'+2, 'b'+2]; mean of those three rows.
        let ids = tokenize("ab", 16);
        for c in 0..6 {
            let want: f64 = ids
                .iter()
                .map(|&id| table.data()[id as usize * 6 + c])
                .sum::<f64>()
                / ids.len() as f64;
            assert!((feats.data()[c] - want).abs() < 1e-12);
        }
        // Repeated identical lines give identical vectors.
        let feats2 = reference_features(&["same", "same"], &table, 16);
        for c in 0..6 {
            assert_eq!(feats2.data()[c], feats2.data()[6 + c]);
        }
    }

    #[test]
    fn median_sigma_is_positive_and_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::rand_normal(&[6, 3], 1.0, &mut rng);
        let b = Tensor::rand_normal(&[4, 3], 1.0, &mut rng);
        let s = median_sigma(&a, &b);
        assert!(s > 0.0);
        let same = Tensor::zeros(&[3, 2]);
        assert_eq!(median_sigma(&same, &same), 1e-6);
    }
}
