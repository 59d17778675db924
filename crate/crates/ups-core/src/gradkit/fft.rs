//! Radix-2 FFT on power-of-two grids, plus the tensor-level 2D transforms
//! used by the spectral ops and solvers.

use super::{Error, Result, Tensor};
use num_complex::Complex64;
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

thread_local! {
    static TWIDDLES: RefCell<HashMap<usize, Rc<Vec<Complex64>>>> = RefCell::new(HashMap::new());
}

fn twiddles(n: usize) -> Rc<Vec<Complex64>> {
    TWIDDLES.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                // Forward-direction factors e^{-2\pi i k / n} for k < n/2.
                let tw = (0..n / 2)
                    .map(|k| {
                        let a = -2.0 * PI * k as f64 / n as f64;
                        Complex64::new(a.cos(), a.sin())
                    })
                    .collect();
                Rc::new(tw)
            })
            .clone()
    })
}

fn require_pow2(op: &'static str, n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { op, n });
    }
    Ok(())
}

/// In-place radix-2 transform. Unnormalized in both directions; an
/// inverse round trip needs an explicit `1/n` scale from the caller.
pub fn fft_inplace(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let tw = twiddles(n);
    let mut len = 2;
    while len <= n {
        let step = n / len;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            let mut k = 0;
            for i in start..start + half {
                let mut w = tw[k];
                if inverse {
                    w = w.conj();
                }
                let u = buf[i];
                let v = buf[i + half] * w;
                buf[i] = u + v;
                buf[i + half] = u - v;
                k += step;
            }
        }
        len <<= 1;
    }
}

/// 2D transform of a single `n x n` channel, rows then columns, in place.
pub fn fft2_inplace(buf: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), n * n);
    for row in buf.chunks_exact_mut(n) {
        fft_inplace(row, inverse);
    }
    // Column pass via a scratch column buffer; n is small enough that the
    // strided gather stays cache-resident.
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft_inplace(&mut col, inverse);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
}

/// Unnormalized forward DFT of each channel of a real `[c, n, n]` tensor.
/// Returns interleaved complex with shape `[c, n, n, 2]`.
pub fn fft2(x: &Tensor) -> Result<Tensor> {
    let (c, n) = check_real_cnn(x, "fft2")?;
    let mut out = Vec::with_capacity(c * n * n * 2);
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    for ch in 0..c {
        let src = &x.data()[ch * n * n..(ch + 1) * n * n];
        for (b, &v) in buf.iter_mut().zip(src) {
            *b = Complex64::new(v, 0.0);
        }
        fft2_inplace(&mut buf, n, false);
        for v in &buf {
            out.push(v.re);
            out.push(v.im);
        }
    }
    Tensor::new(vec![c, n, n, 2], out)
}

/// Inverse of [`fft2`]: carries the `1/n^2` factor and returns the real
/// part of each channel as `[c, n, n]`.
pub fn ifft2(x: &Tensor) -> Result<Tensor> {
    let (c, n) = check_complex_cnn(x, "ifft2")?;
    let inv = 1.0 / (n * n) as f64;
    let mut out = Vec::with_capacity(c * n * n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    for ch in 0..c {
        let src = &x.data()[ch * n * n * 2..(ch + 1) * n * n * 2];
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(src[2 * i], src[2 * i + 1]);
        }
        fft2_inplace(&mut buf, n, true);
        out.extend(buf.iter().map(|v| v.re * inv));
    }
    Tensor::new(vec![c, n, n], out)
}

/// Forward DFT over a raw complex channel; used by solvers that keep
/// their own `Complex64` buffers.
pub fn fft2_raw(buf: &mut [Complex64], n: usize) {
    fft2_inplace(buf, n, false);
}

/// Unnormalized inverse DFT over a raw complex channel.
pub fn ifft2_raw(buf: &mut [Complex64], n: usize) {
    fft2_inplace(buf, n, true);
}

/// 1D forward DFT of a real sequence (power-of-two length).
pub fn fft1d(x: &[f64]) -> Result<Vec<Complex64>> {
    require_pow2("fft1d", x.len())?;
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_inplace(&mut buf, false);
    Ok(buf)
}

/// 1D inverse DFT carrying the `1/n` factor; returns the real part.
pub fn ifft1d(x: &[Complex64]) -> Result<Vec<f64>> {
    require_pow2("ifft1d", x.len())?;
    let mut buf = x.to_vec();
    fft_inplace(&mut buf, true);
    let inv = 1.0 / buf.len() as f64;
    Ok(buf.iter().map(|v| v.re * inv).collect())
}

pub(crate) fn check_real_cnn(x: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(Error::Invalid(format!(
            "{op}: expected [c, n, n] real tensor, got {s:?}"
        )));
    }
    require_pow2(op, s[1])?;
    Ok((s[0], s[1]))
}

pub(crate) fn check_complex_cnn(x: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() != 4 || s[1] != s[2] || s[3] != 2 {
        return Err(Error::Invalid(format!(
            "{op}: expected [c, n, n, 2] interleaved complex tensor, got {s:?}"
        )));
    }
    require_pow2(op, s[1])?;
    Ok((s[0], s[1]))
}
