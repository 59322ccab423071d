//! Parameter checkpoints: a little-endian `u64` header length, a JSON header,
//! then the flat parameter array as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, ParameterLayout};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub archs: Vec<ArchitectureSpec>,
    pub seed: u64,
    pub layout: ParameterLayout,
    /// Galerkin coefficients at the time of saving.
    #[serde(default)]
    pub coefficients: Vec<f64>,
    /// Length of the trailing slice holding boundary-network parameters.
    #[serde(default)]
    pub lifting_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Checkpoint(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Checkpoint("trailing bytes after parameter array".into()));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.len() != header.layout.len + header.lifting_len {
            return Err(Error::Checkpoint(format!(
                "parameter array has {} entries, header declares {}",
                values.len(),
                header.layout.len + header.lifting_len
            )));
        }
        Ok(Checkpoint { header, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}
