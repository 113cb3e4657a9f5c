//! `AGCK` checkpoint files.
//!
//! Layout (all integers u32 little-endian, parameters f64 little-endian):
//!
//! ```text
//! "AGCK" | version | kind tag | layer count | (fan_in, fan_out) per layer | parameters
//! ```
//!
//! Parameters follow layer order. For `mlp` each layer stores its
//! `fan_in * fan_out` input-major weights and then `fan_out` biases. The
//! analytic kinds use a single pseudo-layer:
//!
//! | kind | tag | dims | parameters |
//! |------|-----|------|------------|
//! | mlp | 0 | per layer | weights, biases |
//! | linear | 1 | (D, 1) | D weights, bias |
//! | quadratic | 2 | (D, 1) | D coefficients |
//! | sinusoid1d | 3 | (1, 1) | frequency |

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{Dense, Mlp};
use super::{Model, ModelKind};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AGCK";
pub const VERSION: u32 = 1;

pub(crate) fn encode(model: &Model, out: &mut Vec<u8>) {
    let put = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(MAGIC);
    put(out, VERSION);
    put(out, model.kind().tag());
    let dims: Vec<(usize, usize)> = match model {
        Model::Mlp(m) => m.layers().iter().map(|l| (l.fan_in, l.fan_out)).collect(),
        Model::Linear { weights, .. } => vec![(weights.len(), 1)],
        Model::Quadratic { coefficients } => vec![(coefficients.len(), 1)],
        Model::Sinusoid1d { .. } => vec![(1, 1)],
    };
    put(out, dims.len() as u32);
    for (i, o) in dims {
        put(out, i as u32);
        put(out, o as u32);
    }
    let mut params = Vec::with_capacity(model.parameter_count());
    model.map_parameters(|p| {
        params.push(p);
        p
    });
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

pub fn write_checkpoint(model: &Model, mut w: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    encode(model, &mut buf);
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    encode(model, &mut buf);
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    decode(&std::fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| {
            Error::Checkpoint(format!("file truncated at byte {} (needed {n} more)", self.pos))
        })?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Checkpoint("missing magic".into()))? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not an AGCK checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let tag = r.u32()?;
    let kind = ModelKind::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown kind tag {tag}")))?;
    let layer_count = r.u32()? as usize;
    if layer_count == 0 || layer_count > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {layer_count}")));
    }
    let mut dims = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        dims.push((r.u32()? as usize, r.u32()? as usize));
    }
    let single = |dims: &[(usize, usize)]| -> Result<usize> {
        match dims {
            [(d, 1)] if *d > 0 => Ok(*d),
            _ => Err(Error::Checkpoint(format!("{kind:?} checkpoint needs one (D, 1) layer, got {dims:?}"))),
        }
    };
    let model = match kind {
        ModelKind::Mlp => {
            let mut layers = Vec::with_capacity(layer_count);
            for &(fan_in, fan_out) in &dims {
                let weights = r.f64s(fan_in * fan_out)?;
                let bias = r.f64s(fan_out)?;
                layers.push(Dense::new(fan_in, fan_out, weights, bias).map_err(|e| Error::Checkpoint(e.to_string()))?);
            }
            Model::Mlp(Mlp::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))?)
        }
        ModelKind::Linear => {
            let d = single(&dims)?;
            let weights = r.f64s(d)?;
            let bias = r.f64s(1)?[0];
            Model::linear(weights, bias).map_err(|e| Error::Checkpoint(e.to_string()))?
        }
        ModelKind::Quadratic => {
            let d = single(&dims)?;
            Model::quadratic(r.f64s(d)?).map_err(|e| Error::Checkpoint(e.to_string()))?
        }
        ModelKind::Sinusoid1d => {
            if dims != [(1, 1)] {
                return Err(Error::Checkpoint(format!("sinusoid1d checkpoint needs dims (1, 1), got {dims:?}")));
            }
            Model::sinusoid(r.f64s(1)?[0]).map_err(|e| Error::Checkpoint(e.to_string()))?
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}
