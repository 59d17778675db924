//! Resolution resampling: strided subsampling down, Fourier zero-padding
//! up. 1D families resample only along the embedded row-0 axis.

use super::{Error, Result};
use crate::gradkit::fft::fft_inplace;
use crate::gradkit::Tensor;
use num_complex::Complex64;

fn check_pow2(n: usize, what: &str) -> Result<()> {
    if !n.is_power_of_two() {
        return Err(Error::Invalid(format!("{what} = {n} is not a power of two")));
    }
    Ok(())
}

/// Strided subsampling of `[C, m, m]` down to `[C, n, n]` (factor m/n).
pub fn downsample(field: &Tensor, n: usize) -> Result<Tensor> {
    let s = field.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(Error::Invalid(format!("downsample expects [C, m, m], got {s:?}")));
    }
    let (c, m) = (s[0], s[1]);
    check_pow2(m, "m")?;
    check_pow2(n, "n")?;
    if n > m || m % n != 0 {
        return Err(Error::Invalid(format!(
            "downsample factor m/n must be a positive integer ({m}/{n})"
        )));
    }
    if m == n {
        return Ok(field.clone());
    }
    let k = m / n;
    let mut out = Vec::with_capacity(c * n * n);
    for ch in 0..c {
        let src = &field.data()[ch * m * m..(ch + 1) * m * m];
        for i in 0..n {
            for j in 0..n {
                out.push(src[(i * k) * m + j * k]);
            }
        }
    }
    Tensor::new(vec![c, n, n], out).map_err(Into::into)
}

/// Zero-pad a length-n spectrum into length m, splitting the Nyquist bin
/// so band-limited interpolation stays exactly real.
fn pad_spectrum(src: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = src.len();
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    if n == m {
        out.copy_from_slice(src);
        return out;
    }
    let half = n / 2;
    out[..half].copy_from_slice(&src[..half]);
    for j in 1..half {
        out[m - j] = src[n - j];
    }
    let nyq = src[half] * 0.5;
    out[half] = nyq;
    out[m - half] = nyq.conj();
    out
}

fn upsample_rows(data: &[f64], rows: usize, n: usize, m: usize) -> Vec<f64> {
    // Forward transform of length n is unnormalized, so the inverse of the
    // padded spectrum needs exactly 1/n.
    let scale = 1.0 / n as f64;
    let mut out = vec![0.0; rows * m];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..rows {
        for (b, &v) in buf.iter_mut().zip(&data[r * n..(r + 1) * n]) {
            *b = Complex64::new(v, 0.0);
        }
        fft_inplace(&mut buf, false);
        let mut padded = pad_spectrum(&buf, m);
        fft_inplace(&mut padded, true);
        for (o, v) in out[r * m..(r + 1) * m].iter_mut().zip(&padded) {
            *o = v.re * scale;
        }
    }
    out
}

/// Fourier zero-padding interpolation of `[C, n, n]` up to `[C, m, m]`.
/// For `spatial_dim == 1` only row 0 carries data and only that row is
/// interpolated; other rows remain zero.
pub fn upsample(field: &Tensor, m: usize, spatial_dim: usize) -> Result<Tensor> {
    let s = field.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(Error::Invalid(format!("upsample expects [C, n, n], got {s:?}")));
    }
    let (c, n) = (s[0], s[1]);
    check_pow2(m, "m")?;
    check_pow2(n, "n")?;
    if m < n || m % n != 0 {
        return Err(Error::Invalid(format!(
            "upsample factor m/n must be a positive integer ({m}/{n})"
        )));
    }
    if m == n {
        return Ok(field.clone());
    }
    let mut out = vec![0.0; c * m * m];
    for ch in 0..c {
        let src = &field.data()[ch * n * n..(ch + 1) * n * n];
        if spatial_dim == 1 {
            let row = upsample_rows(&src[..n], 1, n, m);
            out[ch * m * m..ch * m * m + m].copy_from_slice(&row);
        } else {
            // Columns first (each row interpolated), then rows.
            let wide = upsample_rows(src, n, n, m); // [n, m]
            // Transpose, interpolate, transpose back.
            let mut t = vec![0.0; m * n];
            for i in 0..n {
                for j in 0..m {
                    t[j * n + i] = wide[i * m + j];
                }
            }
            let tall = upsample_rows(&t, m, n, m); // [m, m] transposed
            let dst = &mut out[ch * m * m..(ch + 1) * m * m];
            for i in 0..m {
                for j in 0..m {
                    dst[j * m + i] = tall[i * m + j];
                }
            }
        }
    }
    Tensor::new(vec![c, m, m], out).map_err(Into::into)
}

/// Resample in either direction; identity when `target == n`.
pub fn resample(field: &Tensor, target: usize, spatial_dim: usize) -> Result<Tensor> {
    let n = field.shape()[1];
    if target <= n {
        downsample(field, target)
    } else {
        upsample(field, target, spatial_dim)
    }
}
