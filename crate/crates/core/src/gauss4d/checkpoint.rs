//! Binary scene checkpoints with a JSON sidecar.
//!
//! Layout (little-endian): magic `SP4D`, version `u32`, count `u64`,
//! degree `u32`, t0 `f64`, then per primitive the parameter block as `f32`
//! with the agent id (`u32`) after the color.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GaussianPrimitive, GaussianScene, TemporalCoeffs, BASE_PARAMS};
use crate::error::{Error, Result};
use crate::image::write_atomic;

const MAGIC: &[u8; 4] = b"SP4D";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub time_range: [f64; 2],
    pub t0: f64,
    pub degree: usize,
    pub count: usize,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode(scene: &GaussianScene) -> Vec<u8> {
    let n = scene.block_len();
    let mut out = Vec::with_capacity(24 + scene.len() * (n + 1) * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(scene.len() as u64).to_le_bytes());
    out.extend_from_slice(&(scene.degree() as u32).to_le_bytes());
    out.extend_from_slice(&scene.t0().to_le_bytes());
    let mut block = vec![0.0; n];
    for g in &scene.primitives {
        g.write_params(&mut block);
        for v in &block[..BASE_PARAMS] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&g.agent_id.to_le_bytes());
        for v in &block[BASE_PARAMS..] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], time_range: (f64, f64), path: &Path) -> Result<GaussianScene> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 28 || &bytes[..4] != MAGIC {
        return Err(bad("missing SP4D header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let degree = u32_at(16) as usize;
    let t0 = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let n = GaussianPrimitive::param_len(degree);
    let stride = (n + 1) * 4;
    if bytes.len() != 28 + count * stride {
        return Err(bad(format!(
            "expected {} bytes for {count} primitives, found {}",
            28 + count * stride,
            bytes.len()
        )));
    }
    let mut block = vec![0.0; n];
    let mut prims = Vec::with_capacity(count);
    for rec in bytes[28..].chunks_exact(stride) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        for (j, b) in block.iter_mut().enumerate() {
            *b = if j < BASE_PARAMS { f(j) } else { f(j + 1) };
        }
        let agent_id = u32::from_le_bytes(rec[4 * BASE_PARAMS..4 * BASE_PARAMS + 4].try_into().unwrap());
        let mut g = GaussianPrimitive {
            position: Default::default(),
            opacity_logit: 0.0,
            log_scale: Default::default(),
            rotation: [1.0, 0.0, 0.0, 0.0],
            color_logit: Default::default(),
            agent_id,
            temporal: TemporalCoeffs::zeros(degree),
        };
        g.read_params(&block);
        prims.push(g);
    }
    if prims.is_empty() {
        GaussianScene::empty(t0, time_range, degree)
    } else {
        GaussianScene::new(prims, t0, time_range)
    }
}

/// Writes `path` and its `.json` sidecar atomically.
pub fn write_checkpoint(
    path: &Path,
    scene: &GaussianScene,
    provenance: serde_json::Value,
) -> Result<()> {
    let (a, b) = scene.time_range();
    let meta = CheckpointMeta {
        time_range: [a, b],
        t0: scene.t0(),
        degree: scene.degree(),
        count: scene.len(),
        provenance,
    };
    write_atomic(path, &encode(scene))?;
    write_atomic(
        &sidecar_path(path),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )
}

pub fn read_checkpoint(path: &Path) -> Result<(GaussianScene, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let meta: CheckpointMeta = serde_json::from_slice(
        &std::fs::read(&side).map_err(|e| Error::io(&side, e))?,
    )?;
    let scene = decode(&bytes, (meta.time_range[0], meta.time_range[1]), path)?;
    if scene.len() != meta.count || scene.degree() != meta.degree {
        return Err(Error::Format {
            path: side,
            reason: "sidecar disagrees with checkpoint header".into(),
        });
    }
    Ok((scene, meta))
}
