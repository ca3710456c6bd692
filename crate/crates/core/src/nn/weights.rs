//! Binary weights file: magic, version, input dims, layer table, label
//! frame, then every parameter tensor as little-endian `f32` in order.

use std::path::Path;

use super::network::{LayerSpec, Network, NetworkSpec};
use super::tensor::Tensor;
use super::LabelFrame;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DRNW";
pub const VERSION: u32 = 1;

/// A trained regressor: network parameters plus the label normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub net: Network<f32>,
    pub frame: LabelFrame,
}

fn layer_code(l: &LayerSpec) -> (u8, u32) {
    match *l {
        LayerSpec::Conv { out_channels } => (0, out_channels as u32),
        LayerSpec::Relu => (1, 0),
        LayerSpec::MaxPool => (2, 0),
        LayerSpec::Flatten => (3, 0),
        LayerSpec::Dense { out_features } => (4, out_features as u32),
    }
}

fn layer_from_code(code: u8, arg: u32) -> Result<LayerSpec> {
    Ok(match code {
        0 => LayerSpec::Conv {
            out_channels: arg as usize,
        },
        1 => LayerSpec::Relu,
        2 => LayerSpec::MaxPool,
        3 => LayerSpec::Flatten,
        4 => LayerSpec::Dense {
            out_features: arg as usize,
        },
        _ => return Err(Error::Data(format!("unknown layer code {code} in weights file"))),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("weights file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Weights {
    pub fn encode(&self) -> Vec<u8> {
        let spec = &self.net.spec;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in spec.input {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
        for l in &spec.layers {
            let (code, arg) = layer_code(l);
            out.push(code);
            out.extend_from_slice(&arg.to_le_bytes());
        }
        for v in self.frame.center.iter().chain(&self.frame.half_extent) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.net.params {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Weights> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Data("not a weights file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let input = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let code = r.take(1)?[0];
            let arg = r.u32()?;
            layers.push(layer_from_code(code, arg)?);
        }
        let spec = NetworkSpec { input, layers };
        let mut frame = LabelFrame {
            center: [0.0; 3],
            half_extent: [0.0; 3],
        };
        for v in frame.center.iter_mut().chain(frame.half_extent.iter_mut()) {
            *v = r.f64()?;
        }
        let mut params = Vec::new();
        for (ws, bs) in spec.param_shapes()? {
            for shape in [ws, bs] {
                let n: usize = shape.iter().product();
                let raw = r.take(n * 4)?;
                let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                params.push(Tensor::from_vec(&shape, data)?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Data(format!(
                "weights file has {} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Weights {
            net: Network::from_params(spec, params)?,
            frame,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Weights> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Weights::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Weights {
        Weights {
            net: Network::init(NetworkSpec::tiny(), 3).unwrap(),
            frame: LabelFrame {
                center: [0.0, 0.0, 0.75],
                half_extent: [0.5, 0.35, 0.1],
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let w = sample();
        let bytes = w.encode();
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(Weights::decode(&bytes).unwrap(), w);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().encode();
        assert!(Weights::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Weights::decode(&bad), Err(Error::Version { found: 9, .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(Weights::decode(&extra).is_err());
        assert!(Weights::decode(b"nope").is_err());
    }
}
