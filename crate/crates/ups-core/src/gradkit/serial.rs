//! Binary weight/tensor file ("UPSW").
//!
//! Layout: magic `UPSW`, version `u32`, then one record per tensor:
//! name length `u32`, UTF-8 name, rank `u32`, extents `u64` each, dtype
//! tag `u8`, raw little-endian data. Records run to end of file.

use super::{Error, Result, Tensor};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"UPSW";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Real64,
    Real32,
    /// Interleaved (re, im) pairs stored as f64; the trailing extent of the
    /// shape is the pair dimension.
    Complex64Pair,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::Real64 => 0,
            Dtype::Real32 => 1,
            Dtype::Complex64Pair => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Dtype::Real64),
            1 => Ok(Dtype::Real32),
            2 => Ok(Dtype::Complex64Pair),
            _ => Err(Error::Format(format!("unknown dtype tag {t}"))),
        }
    }
}

pub fn write_weights<'a, I>(path: &Path, entries: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor, Dtype)>,
{
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, tensor, dtype) in entries {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &ext in tensor.shape() {
            w.write_all(&(ext as u64).to_le_bytes())?;
        }
        w.write_all(&[dtype.tag()])?;
        match dtype {
            Dtype::Real64 | Dtype::Complex64Pair => {
                for &v in tensor.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Dtype::Real32 => {
                for &v in tensor.data() {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_format(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated file while reading {what}")))
}

pub fn read_weights(path: &Path) -> Result<Vec<(String, Tensor, Dtype)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or_format(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected UPSW",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut v4 = [0u8; 4];
    read_exact_or_format(&mut r, &mut v4, "version")?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let mut out = Vec::new();
    loop {
        let mut len4 = [0u8; 4];
        match r.read_exact(&mut len4) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len4) as usize;
        if name_len > 1 << 20 {
            return Err(Error::Format(format!("implausible name length {name_len}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        read_exact_or_format(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Format("name is not valid UTF-8".into()))?;
        read_exact_or_format(&mut r, &mut v4, "rank")?;
        let rank = u32::from_le_bytes(v4) as usize;
        if rank > 16 {
            return Err(Error::Format(format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut e8 = [0u8; 8];
            read_exact_or_format(&mut r, &mut e8, "extent")?;
            shape.push(u64::from_le_bytes(e8) as usize);
        }
        let mut tag = [0u8; 1];
        read_exact_or_format(&mut r, &mut tag, "dtype")?;
        let dtype = Dtype::from_tag(tag[0])?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        match dtype {
            Dtype::Real64 | Dtype::Complex64Pair => {
                let mut b = [0u8; 8];
                for _ in 0..numel {
                    read_exact_or_format(&mut r, &mut b, &format!("data of {name}"))?;
                    data.push(f64::from_le_bytes(b));
                }
            }
            Dtype::Real32 => {
                let mut b = [0u8; 4];
                for _ in 0..numel {
                    read_exact_or_format(&mut r, &mut b, &format!("data of {name}"))?;
                    data.push(f32::from_le_bytes(b) as f64);
                }
            }
        }
        out.push((name, Tensor::new(shape, data)?, dtype));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.upsw");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::rand_normal(&[3, 4], 1.0, &mut rng);
        let b = Tensor::rand_normal(&[2, 2, 3, 3, 2], 0.5, &mut rng);
        write_weights(
            &path,
            [
                ("alpha", &a, Dtype::Real64),
                ("spec", &b, Dtype::Complex64Pair),
            ],
        )
        .unwrap();
        let back = read_weights(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "alpha");
        assert_eq!(back[0].1, a);
        assert_eq!(back[0].2, Dtype::Real64);
        assert_eq!(back[1].1, b);
        assert_eq!(back[1].2, Dtype::Complex64Pair);
    }

    #[test]
    fn bad_magic_and_truncation_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.upsw");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_weights(&path), Err(Error::Format(_))));

        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        write_weights(&path, [("t", &t, Dtype::Real64)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_weights(&path), Err(Error::Format(_))));
    }
}
