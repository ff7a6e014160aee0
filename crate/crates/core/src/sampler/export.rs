use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: [u8; 4] = *b"NSMP";
pub const BINARY_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Terminal chain states, one row per path, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    paths: usize,
    d: usize,
    data: Vec<f64>,
}

impl Samples {
    pub(crate) fn new(paths: usize, d: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), paths * d);
        Self { paths, d, data }
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d)
    }

    /// Empirical mean and unbiased variance of coordinate `j`.
    pub fn coordinate_moments(&self, j: usize) -> (f64, f64) {
        let n = self.paths as f64;
        let mean = self.rows().map(|r| r[j]).sum::<f64>() / n;
        let var = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, var)
    }

    /// Header `x0,…,x{d-1}` and one row per path, shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.d).map(|j| format!("x{j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in self.rows() {
            let row: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Magic, `u32` version, `u64` paths, `u64` d, then row-major `f64`; all little-endian.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(&BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.paths as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: &str| Error::Parse {
            path: "samples".to_string(),
            detail: detail.to_string(),
        };
        if bytes.len() < HEADER_LEN || bytes[..4] != BINARY_MAGIC {
            return Err(bad("missing NSMP header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != BINARY_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let paths = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
        let body = &bytes[HEADER_LEN..];
        if paths.checked_mul(d).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
            return Err(bad("payload length does not match header"));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { paths, d, data })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_binary()).map_err(|e| Error::io(path, e))
    }
}

pub fn read_binary(path: &Path) -> Result<Samples> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Samples::from_binary(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let s = Samples::new(3, 2, vec![1.0, -2.5, 0.1, 3.0, f64::MIN_POSITIVE, 7.0]);
        let bytes = s.to_binary();
        assert_eq!(&bytes[..4], b"NSMP");
        assert_eq!(bytes.len(), 24 + 48);
        assert_eq!(Samples::from_binary(&bytes).unwrap(), s);
        assert!(Samples::from_binary(&bytes[..30]).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = Samples::new(2, 2, vec![0.1, 2.0, -3.0, 1e-20]);
        assert_eq!(s.to_csv(), "x0,x1\n0.1,2.0\n-3.0,1e-20\n");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let s = Samples::new(1, 3, vec![1.0, 2.0, 3.0]);
        s.write_binary(&p).unwrap();
        assert_eq!(read_binary(&p).unwrap(), s);
        assert!(matches!(read_binary(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
