//! On-disk parameters: `manifest.json` plus one little-endian `f32` file per
//! tensor, values in row-major order.

use super::layer::{LayerParams, LAYER_TENSOR_NAMES};
use super::{TemporalError, ViTConfig, ViTParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "coopalign-vit-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    seed: u64,
    config: ViTConfig,
    layers: usize,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    file: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TemporalError + '_ {
    move |source| TemporalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `(name, rows, cols, row-major values)` for every tensor.
fn named_tensors(p: &ViTParams) -> Vec<(String, usize, usize, Vec<f64>)> {
    let row_major = |m: &DMatrix<f64>| -> Vec<f64> { m.transpose().as_slice().to_vec() };
    let mut out = vec![
        ("embed.weight".to_string(), p.embed_w.nrows(), p.embed_w.ncols(), row_major(&p.embed_w)),
        ("embed.bias".to_string(), p.embed_b.len(), 1, p.embed_b.as_slice().to_vec()),
    ];
    for (l, layer) in p.layers.iter().enumerate() {
        for (name, (rows, cols, data)) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors()) {
            let values = if cols == 1 {
                data.to_vec()
            } else {
                DMatrix::from_column_slice(rows, cols, data).transpose().as_slice().to_vec()
            };
            out.push((format!("layers.{l}.{name}"), rows, cols, values));
        }
    }
    out
}

pub fn save_checkpoint(params: &ViTParams, dir: &Path) -> Result<(), TemporalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for (name, rows, cols, values) in named_tensors(params) {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
        let path = dir.join(&file);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        entries.push(TensorEntry {
            name,
            shape: [rows, cols],
            file,
        });
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        seed: params.seed,
        config: params.config.clone(),
        layers: params.layers.len(),
        tensors: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

fn read_tensor(dir: &Path, entry: &TensorEntry) -> Result<Vec<f64>, TemporalError> {
    let path = dir.join(&entry.file);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    let expected = entry.shape[0] * entry.shape[1] * 4;
    if bytes.len() != expected {
        return Err(TemporalError::Format(format!(
            "{} holds {} bytes, shape needs {expected}",
            entry.file,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn load_checkpoint(dir: &Path) -> Result<ViTParams, TemporalError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| TemporalError::Format(e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(TemporalError::Format(format!("unknown format {:?}", manifest.format)));
    }
    let mut config = manifest.config;
    config.layers = manifest.layers;
    let mut params = ViTParams::zeros(&config)?;
    params.seed = manifest.seed;
    let template = named_tensors(&params);
    if template.len() != manifest.tensors.len() {
        return Err(TemporalError::Format("tensor list does not match the configuration".into()));
    }
    let mut layer_slots: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); config.layers];
    for ((name, rows, cols, _), entry) in template.iter().zip(&manifest.tensors) {
        if *name != entry.name || [*rows, *cols] != entry.shape {
            return Err(TemporalError::Format(format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
        }
        let m = DMatrix::from_row_slice(*rows, *cols, &read_tensor(dir, entry)?);
        match name.as_str() {
            "embed.weight" => params.embed_w = m,
            "embed.bias" => params.embed_b = DVector::from_column_slice(m.as_slice()),
            _ => {
                let l: usize = name.split('.').nth(1).and_then(|s| s.parse().ok()).expect("layer index");
                layer_slots[l].push(m);
            }
        }
    }
    for (layer, slots) in params.layers.iter_mut().zip(layer_slots) {
        fill_layer(layer, slots);
        layer.validate()?;
    }
    Ok(params)
}

fn fill_layer(layer: &mut LayerParams, slots: Vec<DMatrix<f64>>) {
    for (dst, m) in layer.tensors_mut().into_iter().zip(slots) {
        // Column vectors and nalgebra matrices both store column-major.
        dst.copy_from_slice(m.as_slice());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::ViTConfig;

    #[test]
    fn round_trip_through_f32() {
        let cfg = ViTConfig {
            in_channels: 3,
            d_model: 8,
            mlp_hidden: 12,
            ..ViTConfig::default()
        };
        let mut p = ViTParams::init(&cfg, 42, 1.0).unwrap();
        p.layers[1].b1[3] = 0.125;
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&p, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.config, cfg);
        let round = |x: f64| x as f32 as f64;
        assert_eq!(back.embed_w, p.embed_w.map(round));
        for (a, b) in back.layers.iter().zip(&p.layers) {
            for (ta, tb) in a.tensors().iter().zip(b.tensors()) {
                assert_eq!((ta.0, ta.1), (tb.0, tb.1));
                assert!(ta.2.iter().zip(tb.2).all(|(x, y)| *x == round(*y)));
            }
        }
        let bytes = std::fs::read(dir.path().join("layers.1.b1.bin")).unwrap();
        assert_eq!(bytes.len(), 12 * 4);
        assert_eq!(&bytes[12..16], &0.125f32.to_le_bytes());
    }

    #[test]
    fn rejects_truncated_tensor() {
        let p = ViTParams::init(&ViTConfig::default(), 1, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&p, dir.path()).unwrap();
        std::fs::write(dir.path().join("layers.0.wq.bin"), [0u8; 7]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(TemporalError::Format(_))));
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(TemporalError::Io { .. })));
    }
}
