//! Trajectory container ("UPST"): magic, version `u32`, length-prefixed
//! UTF-8 JSON header, then the raw little-endian `f32` payload in
//! `[traj][time][channel][space]` order.

use super::{Error, Family, Result, TrajectorySet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"UPST";
pub const VERSION: u32 = 1;

/// JSON header describing the payload; `snapshot_times` makes the stored
/// time grid explicit rather than implied.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Header {
    pub family: Family,
    pub spatial_dim: usize,
    pub n: usize,
    pub t_steps: usize,
    pub num_traj: usize,
    pub channels: Vec<String>,
    pub coefficients: BTreeMap<String, f64>,
    pub domain: Vec<(f64, f64)>,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
}

impl Header {
    fn from_set(set: &TrajectorySet) -> Self {
        Self {
            family: set.family,
            spatial_dim: set.spatial_dim,
            n: set.n,
            t_steps: set.t_steps,
            num_traj: set.num_traj,
            channels: set.channels.clone(),
            coefficients: set.coefficients.clone(),
            domain: set.domain.clone(),
            snapshot_times: set.snapshot_times.clone(),
            seed: set.seed,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.num_traj * self.t_steps * self.channels.len() * self.n.pow(self.spatial_dim as u32)
    }
}

pub fn write_trajectories(set: &TrajectorySet, path: &Path) -> Result<()> {
    set.validate()?;
    let header = Header::from_set(set);
    let json = serde_json::to_vec(&header)
        .map_err(|e| Error::Format(format!("header serialization failed: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for &v in &set.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated file while reading magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected UPST",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|_| Error::Format("truncated file while reading version".into()))?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    r.read_exact(&mut b4)
        .map_err(|_| Error::Format("truncated file while reading header length".into()))?;
    let len = u32::from_le_bytes(b4) as usize;
    if len > 1 << 24 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("truncated file while reading header".into()))?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad header JSON: {e}")))
}

/// Header-only inspection without loading the payload.
pub fn inspect_header(path: &Path) -> Result<Header> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r)
}

pub fn read_trajectories(path: &Path) -> Result<TrajectorySet> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r)?;
    let want = header.payload_len();
    let mut data = vec![0u8; want * 4];
    r.read_exact(&mut data)
        .map_err(|_| Error::Format("truncated payload".into()))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let payload: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let set = TrajectorySet {
        family: header.family,
        spatial_dim: header.spatial_dim,
        coefficients: header.coefficients,
        n: header.n,
        t_steps: header.t_steps,
        num_traj: header.num_traj,
        channels: header.channels,
        domain: header.domain,
        snapshot_times: header.snapshot_times,
        seed: header.seed,
        data: payload,
    };
    set.validate()?;
    Ok(set)
}
