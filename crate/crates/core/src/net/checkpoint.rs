//! `.nnck` checkpoint files.
//!
//! Line one is a JSON manifest terminated by `\n`; the rest is a payload of
//! little-endian `f32` values holding every parameter tensor in manifest
//! order. Weights are `f64` in memory and round through `f32` on save.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layer::LayerSpec;
use super::mask::PruningMask;
use super::network::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u64,
    input_shape: Vec<usize>,
    class_count: usize,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
    mask: Option<PruningMask>,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    layer: usize,
    name: String,
    /// Byte offset into the payload.
    offset: usize,
    count: usize,
}

/// A network plus the mask it was pruned with, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub mask: Option<PruningMask>,
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            mask: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (i, layer) in net.layers().iter().enumerate() {
            if let Some(p) = &layer.params {
                for (name, t) in [("weight", &p.weight), ("bias", &p.bias)] {
                    tensors.push(TensorEntry {
                        layer: i,
                        name: name.to_owned(),
                        offset: payload.len(),
                        count: t.len(),
                    });
                    for &v in t.data() {
                        payload.extend_from_slice(&(v as f32).to_le_bytes());
                    }
                }
            }
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_VERSION,
            input_shape: net.input_shape().to_vec(),
            class_count: net.class_count(),
            layers: net.specs(),
            tensors,
            mask: self.mask.clone(),
            metadata: net.metadata.clone(),
        };
        let mut bytes = serde_json::to_vec(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        bytes.extend_from_slice(&payload);
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("checkpoint", "missing manifest line"))?;
        let (head, payload) = (&bytes[..newline], &bytes[newline + 1..]);
        let value: serde_json::Value = serde_json::from_slice(head)
            .map_err(|e| Error::format("checkpoint", format!("manifest: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format("checkpoint", "manifest lacks format_version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let manifest: Manifest = serde_json::from_value(value)
            .map_err(|e| Error::format("checkpoint", format!("manifest: {e}")))?;

        let mut network = Network::new(manifest.input_shape, manifest.layers, manifest.class_count)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        network.metadata = manifest.metadata;

        let mut entries = manifest.tensors.iter();
        let mut expected_offset = 0;
        let mut read = |layer: usize, name: &str, count: usize| -> Result<Vec<f64>> {
            let e = entries
                .next()
                .filter(|e| e.layer == layer && e.name == name && e.count == count)
                .ok_or_else(|| {
                    Error::format("checkpoint", format!("tensor table disagrees at layer {layer} {name}"))
                })?;
            if e.offset != expected_offset {
                return Err(Error::format("checkpoint", format!("bad offset for layer {layer} {name}")));
            }
            let end = e.offset + 4 * count;
            let raw = payload
                .get(e.offset..end)
                .ok_or_else(|| Error::format("checkpoint", "payload truncated"))?;
            expected_offset = end;
            Ok(raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect())
        };
        for i in 0..network.layers().len() {
            if let Some((ws, bs)) = network.layers()[i].spec.param_shapes() {
                let w = read(i, "weight", ws.iter().product())?;
                let b = read(i, "bias", bs.iter().product())?;
                network.set_params(i, w, b)?;
            }
        }
        if entries.next().is_some() {
            return Err(Error::format("checkpoint", "extra tensor entries"));
        }
        if expected_offset != payload.len() {
            return Err(Error::format("checkpoint", "payload length disagrees with manifest"));
        }

        let mask = manifest.mask;
        if let Some(m) = &mask {
            network
                .check_mask(m)
                .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        }
        Ok(Self { network, mask })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(digest(&bytes))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Hex SHA-256 of a byte string.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::net::UnitId;

    fn sample_net() -> Network {
        let mut net = Network::small_cnn([1, 6, 6], [2, 3], 5, 3).unwrap();
        net.init_kaiming(11);
        net.metadata.insert("seed".into(), "11".into());
        net
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let ck = Checkpoint {
            network: sample_net(),
            mask: Some(PruningMask::from_units([UnitId::new(0, 1), UnitId::new(7, 4)])),
        };
        let bytes = ck.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!(loaded.mask, ck.mask);
        assert_eq!(loaded.network.specs(), ck.network.specs());
        assert_eq!(loaded.network.metadata, ck.network.metadata);
        let x = Tensor::new(vec![1, 6, 6], vec![0.5; 36]).unwrap();
        let a = ck.network.forward(&x, false).unwrap();
        let b = loaded.network.forward(&x, false).unwrap();
        for (p, q) in a.logits.data().iter().zip(b.logits.data()) {
            assert!((p - q).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let bytes = Checkpoint::new(sample_net()).to_bytes();
        let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()])
            .replace("\"format_version\":1", "\"format_version\":2");
        let mut bad = text.into_bytes();
        bad.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap()..]);
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::UnsupportedVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = Checkpoint::new(sample_net()).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"not json\n").is_err());
        assert!(Checkpoint::from_bytes(b"").is_err());
        let mut garbled = bytes.clone();
        garbled[2] = b'#';
        assert!(Checkpoint::from_bytes(&garbled).is_err());
    }
}
