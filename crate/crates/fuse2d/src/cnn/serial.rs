//! Model persistence.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "F2DM"                      magic, 4 bytes
//! u16   format version (1)
//! u32 x3                      input shape h, w, c
//! u32   layer count
//! per layer:
//!   u8  tag: 0 Conv, 1 MaxPool, 2 Flatten, 3 Dense, 4 Softmax
//!   Conv:  u32 filters
//!   Dense: u32 units, u8 relu flag
//! per layer, in order:        raw f32 weight block, then raw f32 bias block
//! per layer:                  u8 freeze flag
//! ```
//!
//! Optimizer state is not persisted; a loaded model starts with fresh Adam
//! moments. Parameters, layer specs and freeze flags round-trip bit-exactly.

use std::path::Path;

use super::model::{plan_shapes, Layer, LayerSpec, Model, Shape};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"F2DM";
const VERSION: u16 = 1;

/// Serializes a model to its byte representation.
pub fn model_to_bytes(model: &Model<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let s = model.input_shape();
    for dim in [s.h, s.w, s.c] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        match layer.spec() {
            LayerSpec::Conv { filters } => {
                out.push(0);
                out.extend_from_slice(&(filters as u32).to_le_bytes());
            }
            LayerSpec::MaxPool => out.push(1),
            LayerSpec::Flatten => out.push(2),
            LayerSpec::Dense { units, relu } => {
                out.push(3);
                out.extend_from_slice(&(units as u32).to_le_bytes());
                out.push(relu as u8);
            }
            LayerSpec::Softmax => out.push(4),
        }
    }
    for layer in model.layers() {
        for &w in layer.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for &b in layer.bias() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    for layer in model.layers() {
        out.push(layer.frozen() as u8);
    }
    out
}

/// Writes the model file.
pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat(format!(
                "truncated file: wanted {n} bytes at offset {}, only {} remain",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses a model from bytes, validating magic, version, architecture and
/// exact length.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::ModelFormat(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    let input_shape = Shape::new(h, w, c);

    let n_layers = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let spec = match r.u8()? {
            0 => LayerSpec::Conv {
                filters: r.u32()? as usize,
            },
            1 => LayerSpec::MaxPool,
            2 => LayerSpec::Flatten,
            3 => LayerSpec::Dense {
                units: r.u32()? as usize,
                relu: r.u8()? != 0,
            },
            4 => LayerSpec::Softmax,
            tag => {
                return Err(Error::ModelFormat(format!(
                    "layer {i}: unknown layer tag {tag}"
                )))
            }
        };
        specs.push(spec);
    }

    let shapes = plan_shapes(&specs, input_shape)?;
    let mut layers = Vec::with_capacity(n_layers);
    for (&spec, (in_shape, out_shape)) in specs.iter().zip(shapes) {
        let (w_len, b_len) = match spec {
            LayerSpec::Conv { filters } => (9 * in_shape.c * filters, filters),
            LayerSpec::Dense { units, .. } => (in_shape.c * units, units),
            _ => (0, 0),
        };
        let weights = r.f32_vec(w_len)?;
        let bias = r.f32_vec(b_len)?;
        layers.push(Layer {
            spec,
            in_shape,
            out_shape,
            m_w: vec![0.0; w_len],
            v_w: vec![0.0; w_len],
            m_b: vec![0.0; b_len],
            v_b: vec![0.0; b_len],
            weights,
            bias,
            step: 0,
            frozen: false,
        });
    }
    for layer in layers.iter_mut() {
        layer.frozen = r.u8()? != 0;
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after the freeze flags",
            bytes.len() - r.pos
        )));
    }
    Ok(Model {
        input_shape,
        layers,
    })
}

/// Reads a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
