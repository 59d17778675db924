//! Central finite-difference checks for every registered tape op.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;
use ups_core::gradkit::{check_gradients, NodeId, Tape, Tensor};

type Store = BTreeMap<String, Arc<Tensor>>;

fn store(entries: &[(&str, Tensor)]) -> Store {
    entries
        .iter()
        .map(|(n, t)| (n.to_string(), Arc::new(t.clone())))
        .collect()
}

fn assert_grads<F>(params: &Store, build: F, tol: f64)
where
    F: Fn(&Store, &mut Tape) -> ups_core::gradkit::Result<NodeId>,
{
    let reports = check_gradients(params, build, 1e-5, 24, 42).unwrap();
    for r in reports {
        assert!(
            r.worst() < tol,
            "{}: rel err {:.3e} (components {:.3e}, directional {:.3e})",
            r.name,
            r.worst(),
            r.max_rel_err,
            r.directional_rel_err
        );
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn matmul_gradient_random_5x7_7x3() {
    let mut r = rng(1);
    let params = store(&[
        ("a", Tensor::rand_normal(&[5, 7], 1.0, &mut r)),
        ("b", Tensor::rand_normal(&[7, 3], 1.0, &mut r)),
    ]);
    assert_grads(
        &params,
        |s, t| {
            let a = t.param("a", s["a"].clone());
            let b = t.param("b", s["b"].clone());
            let c = t.matmul(a, b)?;
            Ok(t.sum_all(c))
        },
        1e-6,
    );
}

#[test]
fn elementwise_suite_gradients() {
    let mut r = rng(2);
    let params = store(&[
        ("x", Tensor::rand_normal(&[4, 6], 1.0, &mut r)),
        ("y", Tensor::rand_normal(&[4, 6], 1.0, &mut r)),
        ("row", Tensor::rand_normal(&[6], 1.0, &mut r)),
        ("col", Tensor::rand_normal(&[4], 1.0, &mut r)),
    ]);
    assert_grads(
        &params,
        |s, t| {
            let x = t.param("x", s["x"].clone());
            let y = t.param("y", s["y"].clone());
            let row = t.param("row", s["row"].clone());
            let col = t.param("col", s["col"].clone());
            let a = t.add(x, y)?;
            let m = t.mul(a, y)?;
            let sc = t.scale(m, 0.7);
            let sh = t.add_scalar(sc, 0.1);
            let br = t.add_row_vec(sh, row)?;
            let mr = t.mul_row_vec(br, row)?;
            let bc = t.add_col_vec(mr, col)?;
            let d = t.sub(bc, y)?;
            Ok(t.sum_all(d))
        },
        1e-6,
    );
}

#[test]
fn gelu_gradient_at_random_points() {
    let mut r = rng(3);
    // 17 points spread over the active region of the nonlinearity.
    let params = store(&[("x", Tensor::rand_uniform(&[1, 17], -3.0, 3.0, &mut r))]);
    assert_grads(
        &params,
        |s, t| {
            let x = t.param("x", s["x"].clone());
            let g = t.gelu(x);
            Ok(t.sum_all(g))
        },
        1e-6,
    );
}

#[test]
fn softmax_layernorm_mean_gradients() {
    let mut r = rng(4);
    let params = store(&[("x", Tensor::rand_normal(&[5, 4], 1.0, &mut r))]);
    for axis in [0usize, 1] {
        assert_grads(
            &params,
            |s, t| {
                let x = t.param("x", s["x"].clone());
                let sm = t.softmax(x, axis)?;
                let ln = t.layer_norm(sm, axis, 1e-5)?;
                let w = t.mul(ln, sm)?;
                let m = t.mean_axis(w, axis)?;
                let m2 = t.reshape(m, &[1, if axis == 0 { 4 } else { 5 }])?;
                let sq = t.mul(m2, m2)?;
                Ok(t.sum_all(sq))
            },
            1e-6,
        );
    }
}

#[test]
fn reshape_transpose_concat_slice_gradients() {
    let mut r = rng(5);
    let params = store(&[
        ("x", Tensor::rand_normal(&[3, 4], 1.0, &mut r)),
        ("y", Tensor::rand_normal(&[2, 4], 1.0, &mut r)),
        ("z", Tensor::rand_normal(&[3, 2], 1.0, &mut r)),
    ]);
    assert_grads(
        &params,
        |s, t| {
            let x = t.param("x", s["x"].clone());
            let y = t.param("y", s["y"].clone());
            let z = t.param("z", s["z"].clone());
            let cat = t.concat(&[x, y], 0)?; // [5,4]
            let tr = t.transpose(cat)?; // [4,5]
            let sl = t.slice_cols(tr, 1, 4)?; // [4,3]
            let rs = t.reshape(sl, &[3, 4])?;
            let catc = t.concat(&[rs, z], 1)?; // [3,6]
            let sq = t.mul(catc, catc)?;
            Ok(t.sum_all(sq))
        },
        1e-6,
    );
}

#[test]
fn sqrt_sum_gradients() {
    let mut r = rng(6);
    let params = store(&[("x", Tensor::rand_uniform(&[2, 5], 0.5, 2.0, &mut r))]);
    assert_grads(
        &params,
        |s, t| {
            let x = t.param("x", s["x"].clone());
            let sq = t.mul(x, x)?;
            let sum = t.sum_all(sq);
            Ok(t.sqrt(sum))
        },
        1e-6,
    );
}

#[test]
fn fft_round_trip_gradients() {
    let mut r = rng(7);
    let params = store(&[("x", Tensor::rand_normal(&[2, 8, 8], 1.0, &mut r))]);
    assert_grads(
        &params,
        |s, t| {
            let x = t.param("x", s["x"].clone());
            let f = t.fft2(x)?;
            let sq = t.mul(f, f)?; // sum of squared spectrum entries
            let back = t.ifft2(f)?;
            let sq2 = t.mul(back, back)?;
            let a = t.sum_all(sq);
            let b = t.sum_all(sq2);
            let a = t.scale(a, 1e-2);
            let combined = t.reshape(a, &[1])?;
            let b2 = t.reshape(b, &[1])?;
            t.add(combined, b2)
        },
        1e-6,
    );
}

#[test]
fn complex_mul_gradients() {
    let mut r = rng(8);
    let params = store(&[
        ("a", Tensor::rand_normal(&[3, 2], 1.0, &mut r)),
        ("b", Tensor::rand_normal(&[3, 2], 1.0, &mut r)),
    ]);
    assert_grads(
        &params,
        |s, t| {
            let a = t.param("a", s["a"].clone());
            let b = t.param("b", s["b"].clone());
            let c = t.complex_mul(a, b)?;
            let sq = t.mul(c, c)?;
            Ok(t.sum_all(sq))
        },
        1e-6,
    );
}

#[test]
fn spectral_conv_gradients() {
    let mut r = rng(9);
    let modes = 3usize;
    let e = 2 * modes - 1;
    let params = store(&[
        ("x", Tensor::rand_normal(&[2, 8, 8], 1.0, &mut r)),
        ("w", Tensor::rand_normal(&[2, 3, e, e, 2], 0.5, &mut r)),
    ]);
    assert_grads(
        &params,
        |s, t| {
            let x = t.param("x", s["x"].clone());
            let w = t.param("w", s["w"].clone());
            let y = t.spectral_conv2d(x, w, modes)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        1e-6,
    );
}

#[test]
fn embed_gradients() {
    let mut r = rng(10);
    let params = store(&[("table", Tensor::rand_normal(&[11, 5], 1.0, &mut r))]);
    assert_grads(
        &params,
        |s, t| {
            let table = t.param("table", s["table"].clone());
            let h = t.embed(table, &[3, 7, 3, 0, 10])?;
            let sq = t.mul(h, h)?;
            Ok(t.sum_all(sq))
        },
        1e-6,
    );
}

#[test]
fn mmd_gradients_both_sides() {
    let mut r = rng(11);
    let params = store(&[
        ("a", Tensor::rand_normal(&[5, 3], 1.0, &mut r)),
        ("b", Tensor::rand_normal(&[4, 3], 1.0, &mut r)),
    ]);
    assert_grads(
        &params,
        |s, t| {
            let a = t.param("a", s["a"].clone());
            let b = t.param("b", s["b"].clone());
            t.mmd_gaussian(a, b, 0.8)
        },
        1e-6,
    );
}

#[test]
fn spectral_conv_identity_and_truncation() {
    // Identity weights on retained modes pass band-limited inputs through.
    let n = 16usize;
    let modes = 3usize;
    let e = 2 * modes - 1;
    let ci = 2usize;
    let mut w = Tensor::zeros(&[ci, ci, e, e, 2]);
    {
        let wd = w.data_mut();
        for c in 0..ci {
            for bx in 0..e {
                for by in 0..e {
                    let idx = (((c * ci + c) * e + bx) * e + by) * 2;
                    wd[idx] = 1.0;
                }
            }
        }
    }
    // Band-limited input: frequencies strictly below `modes`.
    let mut x = Tensor::zeros(&[ci, n, n]);
    {
        let xd = x.data_mut();
        for c in 0..ci {
            for i in 0..n {
                for j in 0..n {
                    let (fx, fy) = (i as f64 / n as f64, j as f64 / n as f64);
                    xd[c * n * n + i * n + j] = (2.0 * std::f64::consts::PI * (fx + 2.0 * fy)
                        + c as f64)
                        .sin()
                        + 0.3 * (2.0 * std::f64::consts::PI * 2.0 * fx).cos();
                }
            }
        }
    }
    let mut t = Tape::new();
    let xn = t.constant(x.clone());
    let wn = t.constant(w.clone());
    let y = t.spectral_conv2d(xn, wn, modes).unwrap();
    for (a, b) in t.value(y).data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-10, "identity filter mismatch");
    }

    // Energy strictly above the retained modes maps to zero.
    let mut hi = Tensor::zeros(&[ci, n, n]);
    {
        let hd = hi.data_mut();
        for c in 0..ci {
            for i in 0..n {
                for j in 0..n {
                    let fy = j as f64 / n as f64;
                    hd[c * n * n + i * n + j] =
                        (2.0 * std::f64::consts::PI * 5.0 * fy).sin();
                }
            }
        }
    }
    let hn = t.constant(hi);
    let y2 = t.spectral_conv2d(hn, wn, modes).unwrap();
    assert!(t.value(y2).max_abs() < 1e-10, "truncation leak");
}

#[test]
fn spectral_conv_matches_direct_dft_reference() {
    // Direct O(n^4) reference with explicit loops, independent of the FFT
    // path, over n in {8, 16} and modes in {2, 3, n/2}.
    use num_complex::Complex64;
    use std::f64::consts::PI;
    let mut r = rng(12);
    for n in [8usize, 16] {
        for modes in [2usize, 3, n / 2] {
            let e = 2 * modes - 1;
            let (ci, co) = (2usize, 2usize);
            let x = Tensor::rand_normal(&[ci, n, n], 1.0, &mut r);
            let w = Tensor::rand_normal(&[ci, co, e, e, 2], 0.5, &mut r);

            let mut t = Tape::new();
            let xn = t.constant(x.clone());
            let wn = t.constant(w.clone());
            let yn = t.spectral_conv2d(xn, wn, modes).unwrap();
            let got = t.value(yn);

            // Reference: direct DFT per channel.
            let dft = |ch: &[f64]| -> Vec<Complex64> {
                let mut out = vec![Complex64::new(0.0, 0.0); n * n];
                for kx in 0..n {
                    for ky in 0..n {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for jx in 0..n {
                            for jy in 0..n {
                                let ph = -2.0 * PI * ((kx * jx + ky * jy) as f64) / n as f64;
                                acc += ch[jx * n + jy] * Complex64::new(ph.cos(), ph.sin());
                            }
                        }
                        out[kx * n + ky] = acc;
                    }
                }
                out
            };
            let xh: Vec<Vec<Complex64>> = (0..ci)
                .map(|c| dft(&x.data()[c * n * n..(c + 1) * n * n]))
                .collect();
            let wd = w.data();
            let freq = |b: usize| if b < modes { b } else { n + b - e };
            let mirror = |b: usize| if b == 0 { 0 } else { e - b };
            let wat = |ci_i: usize, co_i: usize, bx: usize, by: usize| {
                let idx = (((ci_i * co + co_i) * e + bx) * e + by) * 2;
                Complex64::new(wd[idx], wd[idx + 1])
            };
            let mut want = vec![0.0; co * n * n];
            for co_i in 0..co {
                let mut yh = vec![Complex64::new(0.0, 0.0); n * n];
                for bx in 0..e {
                    for by in 0..e {
                        let (gx, gy) = (freq(bx), freq(by));
                        let mut acc = Complex64::new(0.0, 0.0);
                        for ci_i in 0..ci {
                            let weff = (wat(ci_i, co_i, bx, by)
                                + wat(ci_i, co_i, mirror(bx), mirror(by)).conj())
                                * 0.5;
                            acc += weff * xh[ci_i][gx * n + gy];
                        }
                        yh[gx * n + gy] = acc;
                    }
                }
                // Direct inverse DFT, real part, 1/n^2.
                for jx in 0..n {
                    for jy in 0..n {
                        let mut acc = 0.0;
                        for kx in 0..n {
                            for ky in 0..n {
                                let ph = 2.0 * PI * ((kx * jx + ky * jy) as f64) / n as f64;
                                let w = Complex64::new(ph.cos(), ph.sin());
                                acc += (yh[kx * n + ky] * w).re;
                            }
                        }
                        want[co_i * n * n + jx * n + jy] = acc / (n * n) as f64;
                    }
                }
            }
            for (a, b) in got.data().iter().zip(&want) {
                assert!(
                    (a - b).abs() < 1e-10,
                    "n={n} modes={modes}: {a} vs {b}"
                );
            }
        }
    }
}
