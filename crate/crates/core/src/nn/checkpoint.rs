//! Binary model checkpoints.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FRSM"
//! 4       4     format version, u32 (currently 1)
//! 8       4     layer count, u32
//! 12      9*L   per layer: input_dim u32, output_dim u32, activation u8
//!               (0 = identity, 1 = relu)
//! ...           every layer's weight matrix in layer order, row-major f64
//! ...           every layer's bias vector in layer order, f64
//! ```
//!
//! Checkpoints round-trip bit-exactly. Dropout rate is a training-time
//! setting and is not stored; loaded models carry a rate of 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::model::{Activation, DenseLayer, LayerSpec, ModelParams};

pub const MAGIC: [u8; 4] = *b"FRSM";
pub const FORMAT_VERSION: u32 = 1;

/// Writes `model` to `path` in the documented checkpoint layout.
pub fn save_checkpoint(model: &ModelParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);

    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(model.specs().len() as u32)
        .map_err(io_err)?;
    for spec in model.specs() {
        w.write_u32::<LittleEndian>(spec.input_dim as u32).map_err(io_err)?;
        w.write_u32::<LittleEndian>(spec.output_dim as u32).map_err(io_err)?;
        w.write_u8(spec.activation.code()).map_err(io_err)?;
    }
    for layer in model.layers() {
        for &v in layer.weights.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    for layer in model.layers() {
        for &v in layer.bias.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reader that tracks its byte offset so errors can point at it.
struct Cursor<R> {
    inner: R,
    offset: u64,
    path: String,
}

impl<R: Read> Cursor<R> {
    fn format_err(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset: self.offset,
            reason: reason.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(self.format_err("truncated file"))
            }
            Err(e) => Err(Error::io(self.path.clone(), e)),
        }
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn read_u8(&mut self) -> Result<u8> {
        let mut buf = [0u8; 1];
        self.read_exact(&mut buf)?;
        Ok(buf[0])
    }

    fn read_f64(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }
}

/// Loads a checkpoint, validating magic, version, dimension chaining, and
/// exact file length.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Cursor {
        inner: BufReader::new(file),
        offset: 0,
        path: path.display().to_string(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        r.offset = 0;
        return Err(r.format_err(format!("bad magic {magic:02x?}, expected \"FRSM\"")));
    }
    let version = r.read_u32()?;
    if version != FORMAT_VERSION {
        return Err(r.format_err(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let layer_count = r.read_u32()? as usize;
    if layer_count == 0 {
        return Err(r.format_err("layer count must be at least 1"));
    }

    let mut specs = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let input_dim = r.read_u32()? as usize;
        let output_dim = r.read_u32()? as usize;
        let code = r.read_u8()?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| r.format_err(format!("unknown activation code {code}")))?;
        specs.push(LayerSpec::new(input_dim, output_dim, activation));
    }

    let mut weights = Vec::with_capacity(layer_count);
    for spec in &specs {
        let mut values = Vec::with_capacity(spec.input_dim * spec.output_dim);
        for _ in 0..spec.input_dim * spec.output_dim {
            values.push(r.read_f64()?);
        }
        let matrix = Array2::from_shape_vec((spec.output_dim, spec.input_dim), values)
            .expect("length matches by construction");
        weights.push(matrix);
    }
    let mut layers = Vec::with_capacity(layer_count);
    for (spec, weights) in specs.iter().zip(weights) {
        let mut bias = Vec::with_capacity(spec.output_dim);
        for _ in 0..spec.output_dim {
            bias.push(r.read_f64()?);
        }
        layers.push(DenseLayer {
            weights,
            bias: Array1::from_vec(bias),
        });
    }

    // A well-formed checkpoint ends exactly here.
    let mut probe = [0u8; 1];
    match r.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(r.format_err("trailing bytes after parameters")),
        Err(e) => return Err(Error::io(r.path.clone(), e)),
    }

    ModelParams::from_layers(specs, layers, 0.0).map_err(|e| match e {
        Error::Numeric { .. } => r.format_err("non-finite parameter value"),
        Error::Shape { .. } => r.format_err("layer dimensions do not chain"),
        other => other,
    })
}
