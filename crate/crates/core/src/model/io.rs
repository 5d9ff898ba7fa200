//! Model directory format.
//!
//! ```text
//! <dir>/manifest.json   {"format", "version", "config", "dtype": "f64",
//!                        "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
//! <dir>/tensors.bin     raw little-endian f64, row-major, concatenated in
//!                        manifest order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::{LayerWeights, ModelConfig, NormWeights, WeightParts, WeightStore};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";
const FORMAT_NAME: &str = "coco-forge-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

/// Write `weights` to `dir` (created if missing).
pub fn save_model(weights: &WeightStore, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    let mut entries = Vec::new();
    for t in weights.parts().named_tensors() {
        let offset = bytes.len() as u64;
        for v in t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: t.name,
            shape: t.shape,
            offset,
            nbytes: bytes.len() as u64 - offset,
        });
    }
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        config: weights.config().clone(),
        dtype: "f64".into(),
        tensors: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    json.push('\n');
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    let tpath = dir.join(TENSORS_FILE);
    fs::write(&tpath, bytes).map_err(|e| Error::io(&tpath, e))?;
    Ok(())
}

fn byte_offset_of(text: &str, line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)) as u64;
        }
        offset += l.len();
    }
    offset as u64
}

/// Load a model directory written by [`save_model`].
pub fn load_model(dir: impl AsRef<Path>) -> Result<WeightStore> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let tpath = dir.join(TENSORS_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: mpath.clone(),
        offset: byte_offset_of(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let bad_manifest = |message: String| Error::Format {
        path: mpath.clone(),
        offset: 0,
        message,
    };
    if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
        return Err(bad_manifest(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    if manifest.dtype != "f64" {
        return Err(bad_manifest(format!("unsupported dtype {}", manifest.dtype)));
    }
    manifest
        .config
        .validate()
        .map_err(|e| bad_manifest(e.to_string()))?;

    let bytes = fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let bad_data = |offset: u64, message: String| Error::Format {
        path: tpath.clone(),
        offset,
        message,
    };

    // The expected tensor list comes from the config; the manifest must
    // describe exactly those tensors in canonical order.
    let template = WeightParts::zeros(&manifest.config);
    let expected = template.named_tensors();
    if expected.len() != manifest.tensors.len() {
        return Err(bad_manifest(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut decoded: Vec<Vec<f64>> = Vec::with_capacity(expected.len());
    for (want, entry) in expected.iter().zip(&manifest.tensors) {
        if want.name != entry.name || want.shape != entry.shape {
            return Err(bad_data(
                entry.offset,
                format!(
                    "tensor {} {:?} where {} {:?} was expected",
                    entry.name, entry.shape, want.name, want.shape
                ),
            ));
        }
        let count: usize = entry.shape.iter().product();
        if entry.nbytes != (count * 8) as u64 {
            return Err(bad_data(
                entry.offset,
                format!("tensor {} declares {} bytes for {count} values", entry.name, entry.nbytes),
            ));
        }
        let end = entry.offset + entry.nbytes;
        if end > bytes.len() as u64 {
            return Err(bad_data(
                bytes.len() as u64,
                format!("tensor {} runs past end of file (needs {end} bytes)", entry.name),
            ));
        }
        let mut values = Vec::with_capacity(count);
        for i in 0..count {
            let at = entry.offset as usize + i * 8;
            let v = f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(bad_data(at as u64, format!("non-finite value in {}", entry.name)));
            }
            values.push(v);
        }
        decoded.push(values);
    }
    let consumed: u64 = manifest.tensors.iter().map(|t| t.nbytes).sum();
    if consumed != bytes.len() as u64 {
        return Err(bad_data(
            consumed,
            format!("{} trailing bytes", bytes.len() as u64 - consumed),
        ));
    }

    let cfg = manifest.config;
    let mut it = decoded.into_iter();
    let mut next_mat = |rows: usize, cols: usize| -> Result<Matrix> {
        Matrix::from_vec(rows, cols, it.next().expect("tensor count checked"))
    };
    let d = cfg.d_model;
    let token_embedding = next_mat(cfg.vocab_size, d)?;
    let position_embedding = next_mat(cfg.max_seq, d)?;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        let ln1 = NormWeights {
            gain: next_mat(1, d)?.into_data(),
            bias: next_mat(1, d)?.into_data(),
        };
        let w_q = next_mat(d, d)?;
        let w_k = next_mat(d, d)?;
        let w_v = next_mat(d, d)?;
        let w_o = next_mat(d, d)?;
        let ln2 = NormWeights {
            gain: next_mat(1, d)?.into_data(),
            bias: next_mat(1, d)?.into_data(),
        };
        let w_ff1 = next_mat(d, cfg.d_ff)?;
        let b_ff1 = next_mat(1, cfg.d_ff)?.into_data();
        let w_ff2 = next_mat(cfg.d_ff, d)?;
        let b_ff2 = next_mat(1, d)?.into_data();
        layers.push(LayerWeights {
            ln1,
            w_q,
            w_k,
            w_v,
            w_o,
            ln2,
            w_ff1,
            b_ff1,
            w_ff2,
            b_ff2,
        });
    }
    let final_norm = NormWeights {
        gain: next_mat(1, d)?.into_data(),
        bias: next_mat(1, d)?.into_data(),
    };
    let unembedding = next_mat(d, cfg.vocab_size)?;
    WeightStore::new(WeightParts {
        config: cfg,
        token_embedding,
        position_embedding,
        layers,
        final_norm,
        unembedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gen_synthetic;

    fn sample() -> WeightStore {
        let cfg = ModelConfig::new(2, 2, 8, 16, 8).unwrap();
        gen_synthetic(&cfg, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let w = sample();
        save_model(&w, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert!(back.bit_eq(&w));
        assert_eq!(back.content_hash(), w.content_hash());
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample(), dir.path()).unwrap();
        let tpath = dir.path().join(TENSORS_FILE);
        let mut bytes = fs::read(&tpath).unwrap();
        let keep = bytes.len() - 16;
        bytes.truncate(keep);
        fs::write(&tpath, bytes).unwrap();
        match load_model(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, keep as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn nan_value_reports_its_offset() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample(), dir.path()).unwrap();
        let tpath = dir.path().join(TENSORS_FILE);
        let mut bytes = fs::read(&tpath).unwrap();
        bytes[80..88].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&tpath, bytes).unwrap();
        match load_model(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 80),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample(), dir.path()).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        fs::write(&mpath, "{\n  \"format\": 12\n}").unwrap();
        match load_model(dir.path()) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample(), dir.path()).unwrap();
        let tpath = dir.path().join(TENSORS_FILE);
        let mut bytes = fs::read(&tpath).unwrap();
        let len = bytes.len() as u64;
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&tpath, bytes).unwrap();
        match load_model(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, len),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
