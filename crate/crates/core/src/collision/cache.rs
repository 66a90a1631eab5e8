//! On-disk cache of assembled operator matrices.
//!
//! Layout: 8-byte magic, little-endian `u32` header length, JSON header, then
//! `rows·cols` little-endian `f64` values in column-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rules::CollisionRule;
use super::Backend;
use crate::error::{Result, VpbError};
use crate::velocity_space::VelocityBasis;
use crate::RMat;

const MAGIC: &[u8; 8] = b"VPBMAT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub basis_hash: String,
    pub backend: Backend,
    pub rule_degree: usize,
    pub rule_points: usize,
    pub tolerance: f64,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheStatus {
    Disabled,
    Hit,
    Stored,
    Rebuilt(String),
}

#[derive(Debug)]
pub enum Lookup {
    Hit(RMat),
    Missing,
    Mismatch(String),
}

impl CacheHeader {
    pub fn for_operator(basis: &VelocityBasis, backend: &Backend) -> Self {
        let degree = 2 * basis.max_degree;
        let points = CollisionRule::new(degree, backend.gamma_exponent())
            .map(|r| r.point_count())
            .unwrap_or(0);
        Self {
            basis_hash: basis.descriptor().hash(),
            backend: *backend,
            rule_degree: degree,
            rule_points: points,
            tolerance: basis.tol_quad,
            rows: basis.dim,
            cols: basis.dim,
        }
    }

    /// File stem derived from the basis hash and backend parameters.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.basis_hash.as_bytes());
        h.update(serde_json::to_string(&self.backend).unwrap_or_default().as_bytes());
        let d = hex::encode(h.finalize());
        format!("L-{}-{}", self.backend.name(), &d[..16])
    }

    pub fn path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.bin", self.key()))
    }
}

pub fn store_matrix(dir: &Path, header: &CacheHeader, m: &RMat) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = header.path(dir);
    let json = serde_json::to_vec(header)?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(MAGIC)?;
    f.write_all(&(json.len() as u32).to_le_bytes())?;
    f.write_all(&json)?;
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for x in m.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn load_matrix(dir: &Path, expected: &CacheHeader) -> Result<Lookup> {
    let path = expected.path(dir);
    let mut f = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Lookup::Missing),
        Err(e) => return Err(e.into()),
    };
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Ok(Lookup::Mismatch("bad magic".into()));
    }
    let hl = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let Some(hbytes) = bytes.get(12..12 + hl) else {
        return Ok(Lookup::Mismatch("truncated header".into()));
    };
    let header: CacheHeader = match serde_json::from_slice(hbytes) {
        Ok(h) => h,
        Err(e) => return Ok(Lookup::Mismatch(format!("unreadable header: {e}"))),
    };
    if header != *expected {
        let reason = if header.basis_hash != expected.basis_hash {
            "basis hash differs".to_string()
        } else {
            "assembly parameters differ".to_string()
        };
        return Ok(Lookup::Mismatch(reason));
    }
    let data = &bytes[12 + hl..];
    if data.len() != header.rows * header.cols * 8 {
        return Ok(Lookup::Mismatch("payload length differs".into()));
    }
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(VpbError::Cache(format!("{} holds non-finite values", path.display())));
    }
    Ok(Lookup::Hit(DMatrix::from_vec(header.rows, header.cols, vals)))
}
