//! BLSTM weights on disk: a flat little-endian `f32` stream plus a JSON manifest
//! listing the tensors in stream order, each row-major.
//!
//! ```json
//! {"hidden": 256, "input": 49, "tensors": [{"name": "forward.w_ih", "shape": [1024, 49]}, ...]}
//! ```
//!
//! Tensor names: `{forward,backward}.{w_ih,w_hh,bias}`, `pool.kernel`, `pool.bias`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::tloc::{BlstmWeights, LstmParams};
use super::NetError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub hidden: usize,
    pub input: usize,
    pub tensors: Vec<TensorShape>,
}

impl WeightManifest {
    pub fn for_shape(hidden: usize, input: usize) -> Self {
        let t = |name: &str, shape: Vec<usize>| TensorShape {
            name: name.to_string(),
            shape,
        };
        let mut tensors = Vec::new();
        for dir in ["forward", "backward"] {
            tensors.push(t(&format!("{dir}.w_ih"), vec![4 * hidden, input]));
            tensors.push(t(&format!("{dir}.w_hh"), vec![4 * hidden, hidden]));
            tensors.push(t(&format!("{dir}.bias"), vec![4 * hidden]));
        }
        tensors.push(t("pool.kernel", vec![hidden]));
        tensors.push(t("pool.bias", vec![1]));
        Self {
            hidden,
            input,
            tensors,
        }
    }
}

fn err(e: impl std::fmt::Display) -> NetError {
    NetError::WeightFile(e.to_string())
}

pub fn load_blstm_weights(bin: &Path, manifest: &Path) -> Result<BlstmWeights, NetError> {
    let m: WeightManifest = serde_json::from_str(&fs::read_to_string(manifest).map_err(err)?).map_err(err)?;
    let bytes = fs::read(bin).map_err(err)?;
    if bytes.len() % 4 != 0 {
        return Err(err(format!("{} bytes is not a whole number of f32", bytes.len())));
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let total: usize = m.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if total != floats.len() {
        return Err(err(format!(
            "manifest describes {total} values, stream holds {}",
            floats.len()
        )));
    }
    let mut by_name: HashMap<&str, (&[usize], &[f64])> = HashMap::new();
    let mut offset = 0;
    for t in &m.tensors {
        let n: usize = t.shape.iter().product();
        by_name.insert(&t.name, (&t.shape, &floats[offset..offset + n]));
        offset += n;
    }
    let take = |name: &str| {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| err(format!("missing tensor '{name}'")))
    };
    let matrix = |name: &str| -> Result<Array2<f64>, NetError> {
        let (shape, data) = take(name)?;
        if shape.len() != 2 {
            return Err(err(format!("'{name}' must be 2-D, got {shape:?}")));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data.to_vec()).map_err(err)
    };
    let vector = |name: &str| -> Result<Array1<f64>, NetError> {
        let (_, data) = take(name)?;
        Ok(Array1::from(data.to_vec()))
    };
    let lstm = |dir: &str| -> Result<LstmParams, NetError> {
        Ok(LstmParams {
            w_ih: matrix(&format!("{dir}.w_ih"))?,
            w_hh: matrix(&format!("{dir}.w_hh"))?,
            bias: vector(&format!("{dir}.bias"))?,
        })
    };
    let pool_bias = vector("pool.bias")?;
    if pool_bias.len() != 1 {
        return Err(err("'pool.bias' must hold one value"));
    }
    let w = BlstmWeights {
        forward: lstm("forward")?,
        backward: lstm("backward")?,
        pool_kernel: vector("pool.kernel")?,
        pool_bias: pool_bias[0],
    };
    if w.hidden() != m.hidden || w.input() != m.input {
        return Err(err(format!(
            "tensors imply hidden {} / input {}, manifest says {} / {}",
            w.hidden(),
            w.input(),
            m.hidden,
            m.input
        )));
    }
    w.validate()?;
    Ok(w)
}

/// Writes `w` as `f32`; values are narrowed from `f64`.
pub fn save_blstm_weights(w: &BlstmWeights, bin: &Path, manifest: &Path) -> Result<(), NetError> {
    w.validate()?;
    let m = WeightManifest::for_shape(w.hidden(), w.input());
    let mut bytes = Vec::new();
    let mut put = |vals: &mut dyn Iterator<Item = &f64>| {
        for v in vals {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    for p in [&w.forward, &w.backward] {
        put(&mut p.w_ih.iter());
        put(&mut p.w_hh.iter());
        put(&mut p.bias.iter());
    }
    put(&mut w.pool_kernel.iter());
    put(&mut std::iter::once(&w.pool_bias));
    fs::write(bin, bytes).map_err(err)?;
    fs::write(manifest, serde_json::to_string_pretty(&m).map_err(err)?).map_err(err)?;
    Ok(())
}
