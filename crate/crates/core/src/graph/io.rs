//! On-disk model container and image files.
//!
//! A model is a directory holding `model.json` (the layer list plus blob
//! offsets) and `weights.bin` (every weight and bias as raw q7 bytes,
//! referenced by offset and length). Conv weights are `[C_out][K][K][C_in]`,
//! depthwise weights `[K][K][C]`, fully-connected weights `[out][in]`
//! row-major unless the layer is marked `reordered`.
//!
//! An image file is an 8-byte header (`H`, `W`, `C`, `frac_bits`, each a
//! little-endian 16-bit integer, `frac_bits` signed) followed by `H*W*C` q7
//! bytes in HWC order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{LayerKind, LayerSpec, Model};
use crate::error::{Error, Result};
use crate::kernels::tensor::{QTensor, Shape};

pub const MANIFEST_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    input_shape: Shape,
    input_frac: i32,
    weights_file: String,
    weights_len: usize,
    layers: Vec<LayerSpec>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Parses a manifest and its weight store. Syntax and schema problems are
/// [`Error::Manifest`], unknown layer kinds [`Error::UnsupportedLayer`] and a
/// store of the wrong size [`Error::BlobSize`].
pub fn parse_model(manifest: &str, weights: &[u8]) -> Result<Model> {
    let value: serde_json::Value =
        serde_json::from_str(manifest).map_err(|e| Error::Manifest(format!("invalid JSON: {e}")))?;
    if let Some(layers) = value.get("layers").and_then(|l| l.as_array()) {
        for layer in layers {
            if let Some(kind) = layer.get("kind").and_then(|k| k.as_str()) {
                if LayerKind::from_name(kind).is_none() {
                    return Err(Error::UnsupportedLayer(kind.to_string()));
                }
            }
        }
    }
    let m: Manifest = serde_json::from_value(value).map_err(|e| Error::Manifest(e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Manifest(format!("unsupported format version {}", m.format_version)));
    }
    if weights.len() != m.weights_len {
        return Err(Error::BlobSize { what: m.weights_file, needed: m.weights_len, available: weights.len() });
    }
    let model = Model {
        input_shape: m.input_shape,
        input_frac: m.input_frac,
        layers: m.layers,
        store: weights.iter().map(|b| *b as i8).collect(),
    };
    model.validate()?;
    Ok(model)
}

/// Renders the manifest JSON and weight bytes for `model`.
pub fn serialize_model(model: &Model) -> Result<(String, Vec<u8>)> {
    let m = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: model.input_shape,
        input_frac: model.input_frac,
        weights_file: WEIGHTS_FILE.to_string(),
        weights_len: model.store.len(),
        layers: model.layers.clone(),
    };
    let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Manifest(e.to_string()))?;
    Ok((json, model.store.iter().map(|v| *v as u8).collect()))
}

/// Loads a model from a directory or from the path of its `model.json`.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let manifest = manifest_path(path.as_ref());
    let text = fs::read_to_string(&manifest)?;
    let weights_name = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("weights_file").and_then(|w| w.as_str()).map(str::to_owned))
        .unwrap_or_else(|| WEIGHTS_FILE.to_string());
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let weights = fs::read(dir.join(weights_name))?;
    parse_model(&text, &weights)
}

/// Writes `model.json` and `weights.bin` into `dir`, creating it if needed.
pub fn save_model(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (json, weights) = serialize_model(model)?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    fs::write(dir.join(WEIGHTS_FILE), weights)?;
    Ok(())
}

pub fn encode_image(t: &QTensor<i8>) -> Result<Vec<u8>> {
    let s = t.shape();
    let mut out = Vec::with_capacity(8 + s.len());
    for v in [s.height, s.width, s.channels] {
        let v = u16::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds 16 bits")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let frac = i16::try_from(t.frac_bits()).map_err(|_| Error::Format("frac_bits exceeds 16 bits".into()))?;
    out.extend_from_slice(&frac.to_le_bytes());
    out.extend(t.data().iter().map(|v| *v as u8));
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<QTensor<i8>> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!("image file has {} bytes, header needs 8", bytes.len())));
    }
    let field = |i: usize| u16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]);
    let shape = Shape::new(field(0) as usize, field(1) as usize, field(2) as usize);
    let frac = field(3) as i16 as i32;
    let body = &bytes[8..];
    if body.len() != shape.len() {
        return Err(Error::Shape(format!("image header says {shape} ({} bytes) but file holds {}", shape.len(), body.len())));
    }
    QTensor::new(shape, frac, body.iter().map(|b| *b as i8).collect())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<QTensor<i8>> {
    decode_image(&fs::read(path)?)
}

pub fn write_image(t: &QTensor<i8>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_image(t)?)?;
    Ok(())
}
