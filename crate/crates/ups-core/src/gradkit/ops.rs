//! Forward and backward rules for the tape op set.

use super::fft::{fft2_inplace, ifft2_raw};
use super::tape::NodeId;
use super::{Error, Result, Tensor};
use num_complex::Complex64;

/// Operation recorded on the tape. Leaves carry no op.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    /// `[r, c] + [c]`, the vector added to every row.
    AddRowVec(NodeId, NodeId),
    /// `[r, c] * [c]`, the vector scaling every row.
    MulRowVec(NodeId, NodeId),
    /// `[r, c] + [r]`, the vector added to every column.
    AddColVec(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    /// Columns `lo..hi` of a 2-D tensor.
    SliceCols { x: NodeId, lo: usize, hi: usize },
    Gelu(NodeId),
    Softmax { x: NodeId, axis: usize },
    /// Zero-mean unit-variance normalization along `axis`, no affine part.
    LayerNorm { x: NodeId, axis: usize, eps: f64 },
    MeanAxis { x: NodeId, axis: usize },
    SumAll(NodeId),
    Sqrt(NodeId),
    Fft2(NodeId),
    Ifft2(NodeId),
    /// Elementwise product of interleaved complex tensors.
    ComplexMul(NodeId, NodeId),
    /// Fused FNO spectral convolution: FFT, truncated mode multiply with
    /// Hermitian-symmetrized complex weights, inverse FFT, real output.
    SpectralConv { x: NodeId, w: NodeId, modes: usize },
    /// Embedding-table row gather: `[vocab, e]` indexed by `ids`.
    Embed { table: NodeId, ids: Vec<u32> },
    /// Biased Gaussian-kernel MMD^2 between row sets `a` and `b`.
    MmdGaussian { a: NodeId, b: NodeId, sigma: f64 },
}

impl Op {
    pub fn for_each_input(&self, mut f: impl FnMut(NodeId)) {
        match self {
            Op::Leaf => {}
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRowVec(a, b)
            | Op::MulRowVec(a, b)
            | Op::AddColVec(a, b)
            | Op::Matmul(a, b)
            | Op::ComplexMul(a, b) => {
                f(*a);
                f(*b);
            }
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Gelu(a)
            | Op::SumAll(a)
            | Op::Sqrt(a)
            | Op::Fft2(a)
            | Op::Ifft2(a) => f(*a),
            Op::Concat { parts, .. } => parts.iter().copied().for_each(f),
            Op::SliceCols { x, .. }
            | Op::Softmax { x, .. }
            | Op::LayerNorm { x, .. }
            | Op::MeanAxis { x, .. } => f(*x),
            Op::SpectralConv { x, w, .. } => {
                f(*x);
                f(*w);
            }
            Op::Embed { table, .. } => f(*table),
            Op::MmdGaussian { a, b, .. } => {
                f(*a);
                f(*b);
            }
        }
    }
}

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    // tanh form of GELU.
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// C = alpha * A_view x B_view + beta * C, with optional transposed views
/// of the row-major operands.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    p: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(c.len(), m * p);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (p as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            p,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            p as isize,
            1,
        );
    }
}

// ---------------------------------------------------------------------------
// Spectral convolution.
// ---------------------------------------------------------------------------

/// Retained per-dim frequency count for `modes = m`: the symmetric set
/// {0, ±1, .., ±(m-1)}, hence extent `2m - 1`.
pub(crate) fn spectral_extent(modes: usize) -> usize {
    2 * modes - 1
}

#[inline]
fn block_freq_grid(b: usize, modes: usize, n: usize) -> usize {
    if b < modes {
        b
    } else {
        n + b - (2 * modes - 1)
    }
}

#[inline]
fn block_mirror(b: usize, extent: usize) -> usize {
    if b == 0 {
        0
    } else {
        extent - b
    }
}

pub(crate) struct SpectralShapes {
    pub ci: usize,
    pub co: usize,
    pub n: usize,
    pub extent: usize,
}

pub(crate) fn spectral_check(x: &Tensor, w: &Tensor, modes: usize) -> Result<SpectralShapes> {
    let (ci, n) = super::fft::check_real_cnn(x, "spectral_conv2d")?;
    let e = spectral_extent(modes);
    let ws = w.shape();
    if ws.len() != 5 || ws[0] != ci || ws[2] != e || ws[3] != e || ws[4] != 2 {
        return Err(Error::ShapeMismatch {
            op: "spectral_conv2d",
            lhs: x.shape().to_vec(),
            rhs: ws.to_vec(),
        });
    }
    if modes == 0 || 2 * modes > n {
        return Err(Error::Invalid(format!(
            "spectral_conv2d: modes {modes} invalid for grid {n}"
        )));
    }
    Ok(SpectralShapes {
        ci,
        co: ws[1],
        n,
        extent: e,
    })
}

#[inline]
fn wc(wd: &[f64], ci_i: usize, co_i: usize, bx: usize, by: usize, co: usize, e: usize) -> Complex64 {
    let idx = (((ci_i * co + co_i) * e + bx) * e + by) * 2;
    Complex64::new(wd[idx], wd[idx + 1])
}

fn fft_channels(x: &[f64], c: usize, n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); c * n * n];
    for ch in 0..c {
        let dst = &mut out[ch * n * n..(ch + 1) * n * n];
        for (d, &v) in dst.iter_mut().zip(&x[ch * n * n..(ch + 1) * n * n]) {
            *d = Complex64::new(v, 0.0);
        }
        fft2_inplace(dst, n, false);
    }
    out
}

pub(crate) fn spectral_forward(x: &Tensor, w: &Tensor, modes: usize) -> Result<Tensor> {
    let s = spectral_check(x, w, modes)?;
    let (ci, co, n, e) = (s.ci, s.co, s.n, s.extent);
    let xh = fft_channels(x.data(), ci, n);
    let wd = w.data();
    let mut yh = vec![Complex64::new(0.0, 0.0); co * n * n];
    for bx in 0..e {
        let gx = block_freq_grid(bx, modes, n);
        let mbx = block_mirror(bx, e);
        for by in 0..e {
            let gy = block_freq_grid(by, modes, n);
            let mby = block_mirror(by, e);
            let pos = gx * n + gy;
            for co_i in 0..co {
                let mut acc = Complex64::new(0.0, 0.0);
                for ci_i in 0..ci {
                    // Hermitian-symmetrized effective weight keeps the
                    // output spectrum conjugate-symmetric, so the inverse
                    // transform is exactly real.
                    let weff =
                        (wc(wd, ci_i, co_i, bx, by, co, e) + wc(wd, ci_i, co_i, mbx, mby, co, e).conj())
                            * 0.5;
                    acc += weff * xh[ci_i * n * n + pos];
                }
                yh[co_i * n * n + pos] = acc;
            }
        }
    }
    let inv = 1.0 / (n * n) as f64;
    let mut out = Vec::with_capacity(co * n * n);
    for ch in 0..co {
        let buf = &mut yh[ch * n * n..(ch + 1) * n * n];
        ifft2_raw(buf, n);
        out.extend(buf.iter().map(|v| v.re * inv));
    }
    Tensor::new(vec![co, n, n], out)
}

pub(crate) fn spectral_backward(
    x: &Tensor,
    w: &Tensor,
    modes: usize,
    upstream: &Tensor,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let s = spectral_check(x, w, modes).expect("checked at build");
    let (ci, co, n, e) = (s.ci, s.co, s.n, s.extent);
    let inv = 1.0 / (n * n) as f64;
    let wd = w.data();
    // Cotangent of the output spectrum: FFT of the upstream, scaled 1/n^2.
    let mut gh = fft_channels(upstream.data(), co, n);
    for v in gh.iter_mut() {
        *v *= inv;
    }
    let xh = fft_channels(x.data(), ci, n);

    let mut dw = if need_dw {
        Some(vec![0.0; wd.len()])
    } else {
        None
    };
    let mut dxh = if need_dx {
        Some(vec![Complex64::new(0.0, 0.0); ci * n * n])
    } else {
        None
    };

    for bx in 0..e {
        let gx = block_freq_grid(bx, modes, n);
        let mbx = block_mirror(bx, e);
        for by in 0..e {
            let gy = block_freq_grid(by, modes, n);
            let mby = block_mirror(by, e);
            let pos = gx * n + gy;
            for co_i in 0..co {
                let g = gh[co_i * n * n + pos];
                for ci_i in 0..ci {
                    if let Some(dw) = dw.as_mut() {
                        // d/dW_eff = g * conj(xhat); split between the stored
                        // entry and its conjugate mirror.
                        let dweff = g * xh[ci_i * n * n + pos].conj() * 0.5;
                        let idx = (((ci_i * co + co_i) * e + bx) * e + by) * 2;
                        dw[idx] += dweff.re;
                        dw[idx + 1] += dweff.im;
                        let midx = (((ci_i * co + co_i) * e + mbx) * e + mby) * 2;
                        dw[midx] += dweff.re;
                        dw[midx + 1] -= dweff.im;
                    }
                    if let Some(dxh) = dxh.as_mut() {
                        let weff = (wc(wd, ci_i, co_i, bx, by, co, e)
                            + wc(wd, ci_i, co_i, mbx, mby, co, e).conj())
                            * 0.5;
                        dxh[ci_i * n * n + pos] += weff.conj() * g;
                    }
                }
            }
        }
    }

    let dx = dxh.map(|mut dxh| {
        let mut out = Vec::with_capacity(ci * n * n);
        for ch in 0..ci {
            let buf = &mut dxh[ch * n * n..(ch + 1) * n * n];
            // Adjoint of the unnormalized forward FFT.
            ifft2_raw(buf, n);
            out.extend(buf.iter().map(|v| v.re));
        }
        Tensor::new(vec![ci, n, n], out).expect("shape")
    });
    let dw = dw.map(|d| Tensor::new(w.shape().to_vec(), d).expect("shape"));
    (dx, dw)
}

// ---------------------------------------------------------------------------
// MMD.
// ---------------------------------------------------------------------------

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
}

/// Biased V-statistic MMD^2 with Gaussian kernel of bandwidth `sigma`.
pub(crate) fn mmd_forward(a: &Tensor, b: &Tensor, sigma: f64) -> f64 {
    let e = a.shape()[1];
    let p = a.shape()[0];
    let q = b.shape()[0];
    let ad = a.data();
    let bd = b.data();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut t1 = 0.0;
    for i in 0..p {
        for j in 0..p {
            t1 += (-sq_dist(&ad[i * e..(i + 1) * e], &ad[j * e..(j + 1) * e]) * inv2s2).exp();
        }
    }
    let mut t2 = 0.0;
    for i in 0..p {
        for j in 0..q {
            t2 += (-sq_dist(&ad[i * e..(i + 1) * e], &bd[j * e..(j + 1) * e]) * inv2s2).exp();
        }
    }
    let mut t3 = 0.0;
    for i in 0..q {
        for j in 0..q {
            t3 += (-sq_dist(&bd[i * e..(i + 1) * e], &bd[j * e..(j + 1) * e]) * inv2s2).exp();
        }
    }
    t1 / (p * p) as f64 - 2.0 * t2 / (p * q) as f64 + t3 / (q * q) as f64
}

pub(crate) fn mmd_backward(
    a: &Tensor,
    b: &Tensor,
    sigma: f64,
    upstream: f64,
    need_da: bool,
    need_db: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let e = a.shape()[1];
    let p = a.shape()[0];
    let q = b.shape()[0];
    let ad = a.data();
    let bd = b.data();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let invs2 = 1.0 / (sigma * sigma);
    let da = need_da.then(|| {
        let mut d = vec![0.0; ad.len()];
        for i in 0..p {
            let ai = &ad[i * e..(i + 1) * e];
            let row = &mut d[i * e..(i + 1) * e];
            for j in 0..p {
                let aj = &ad[j * e..(j + 1) * e];
                let k = (-sq_dist(ai, aj) * inv2s2).exp();
                let c = -2.0 / (p * p) as f64 * k * invs2 * upstream;
                for (r, (&x, &y)) in row.iter_mut().zip(ai.iter().zip(aj)) {
                    *r += c * (x - y);
                }
            }
            for j in 0..q {
                let bj = &bd[j * e..(j + 1) * e];
                let k = (-sq_dist(ai, bj) * inv2s2).exp();
                let c = 2.0 / (p * q) as f64 * k * invs2 * upstream;
                for (r, (&x, &y)) in row.iter_mut().zip(ai.iter().zip(bj)) {
                    *r += c * (x - y);
                }
            }
        }
        Tensor::new(a.shape().to_vec(), d).expect("shape")
    });
    let db = need_db.then(|| {
        let mut d = vec![0.0; bd.len()];
        for i in 0..q {
            let bi = &bd[i * e..(i + 1) * e];
            let row = &mut d[i * e..(i + 1) * e];
            for j in 0..q {
                let bj = &bd[j * e..(j + 1) * e];
                let k = (-sq_dist(bi, bj) * inv2s2).exp();
                let c = -2.0 / (q * q) as f64 * k * invs2 * upstream;
                for (r, (&x, &y)) in row.iter_mut().zip(bi.iter().zip(bj)) {
                    *r += c * (x - y);
                }
            }
            for j in 0..p {
                let aj = &ad[j * e..(j + 1) * e];
                let k = (-sq_dist(bi, aj) * inv2s2).exp();
                let c = 2.0 / (p * q) as f64 * k * invs2 * upstream;
                for (r, (&x, &y)) in row.iter_mut().zip(bi.iter().zip(aj)) {
                    *r += c * (x - y);
                }
            }
        }
        Tensor::new(b.shape().to_vec(), d).expect("shape")
    });
    (da, db)
}
