use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use super::tensor::Tensor2;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ORLB";
const VERSION: u32 = 1;

/// One or more named networks plus training metadata, versioned on disk.
///
/// File layout: magic `ORLB`, u32 version, u32 header length, UTF-8 JSON
/// header, then per-layer weight and bias payload as little-endian `f32`,
/// row-major, in layer order (networks in header order).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub networks: Vec<(String, Network)>,
    pub seed: u64,
    pub meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    seed: u64,
    networks: Vec<NamedSpec>,
    meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct NamedSpec {
    name: String,
    spec: NetworkSpec,
}

impl Checkpoint {
    pub fn single(name: &str, net: Network, seed: u64) -> Self {
        Self { networks: vec![(name.to_string(), net)], seed, meta: BTreeMap::new() }
    }

    pub fn network(&self, name: &str) -> Result<&Network> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
            .ok_or_else(|| Error::Checkpoint(format!("no network named '{name}'")))
    }

    /// Serialize to bytes. Weights are narrowed to `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            seed: self.seed,
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NamedSpec { name: name.clone(), spec: net.spec.clone() })
                .collect(),
            meta: self.meta.clone(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for (_, net) in &self.networks {
            for (w, b) in net.weights.iter().zip(&net.biases) {
                for &v in w.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                for &v in b {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[0..4] != MAGIC {
            return Err(err("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() < 12 + header_len {
            return Err(err("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])?;
        let mut off = 12 + header_len;
        let mut networks = Vec::with_capacity(header.networks.len());
        for named in header.networks {
            named.spec.validate()?;
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 0..named.spec.n_layers() {
                let rows = named.spec.layer_dims[l + 1];
                let cols = named.spec.layer_dims[l];
                let mut read_f32s = |n: usize| -> Result<Vec<f64>> {
                    let need = n * 4;
                    if bytes.len() < off + need {
                        return Err(Error::Checkpoint("truncated payload".into()));
                    }
                    let vals = bytes[off..off + need]
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                        .collect();
                    off += need;
                    Ok(vals)
                };
                weights.push(Tensor2::from_vec(rows, cols, read_f32s(rows * cols)?)?);
                biases.push(read_f32s(rows)?);
            }
            networks.push((named.name, Network { spec: named.spec, weights, biases }));
        }
        Ok(Self { networks, seed: header.seed, meta: header.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::experiment::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
