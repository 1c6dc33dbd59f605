//! Raw little-endian array files with a JSON sidecar describing the layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::Vec3;
use crate::field::{DirectorField, DomainMask, OrderField, TorusGrid};
use crate::QTensor;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(rename = "N")]
    pub n: usize,
    pub components: usize,
    /// Always `"x-fastest"`: index `i + N(j + Nk)`, components innermost.
    pub layout: String,
    /// `"f64-le"` or `"u8"`.
    pub dtype: String,
    /// Component meaning, e.g. the traceless-symmetric basis coordinates.
    pub description: String,
}

/// Path of the sidecar belonging to `data`: `field.bin` → `field.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_sidecar(data: &Path, meta: &Sidecar) -> Result<()> {
    let p = sidecar_path(data);
    let text = serde_json::to_string_pretty(meta).map_err(|source| IoError::Json { path: p.clone(), source })?;
    fs::write(&p, text + "\n").map_err(io_err(&p))
}

fn read_sidecar(data: &Path) -> Result<Sidecar> {
    let p = sidecar_path(data);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: p, source })
}

fn write_f64s(path: &Path, n: usize, components: usize, values: impl Iterator<Item = f64>, description: &str) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(io_err(path))?;
    write_sidecar(
        path,
        &Sidecar {
            n,
            components,
            layout: "x-fastest".into(),
            dtype: "f64-le".into(),
            description: description.into(),
        },
    )
}

fn read_f64s(path: &Path, components: usize) -> Result<(TorusGrid, Vec<f64>)> {
    let meta = read_sidecar(path)?;
    let bad = |reason: String| IoError::Format {
        path: path.to_path_buf(),
        reason,
    };
    if meta.components != components || meta.dtype != "f64-le" || meta.layout != "x-fastest" {
        return Err(bad(format!(
            "expected {components} f64-le components in x-fastest layout, sidecar says {} {} {}",
            meta.components, meta.dtype, meta.layout
        )));
    }
    let grid = TorusGrid::new(meta.n).map_err(|e| bad(e.to_string()))?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != grid.len() * components * 8 {
        return Err(bad(format!("{} bytes for N = {}", bytes.len(), meta.n)));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((grid, values))
}

pub fn write_field(path: &Path, field: &OrderField) -> Result<()> {
    write_f64s(
        path,
        field.grid.n,
        5,
        field.values.iter().flat_map(|q| q.0.iter().copied().collect::<Vec<_>>()),
        "coordinates in the orthonormal basis of traceless symmetric 3x3 matrices",
    )
}

pub fn read_field(path: &Path) -> Result<OrderField> {
    let (grid, v) = read_f64s(path, 5)?;
    let values = v.chunks_exact(5).map(|c| QTensor::new(c.try_into().unwrap())).collect();
    Ok(OrderField { grid, values })
}

pub fn write_director(path: &Path, field: &DirectorField) -> Result<()> {
    write_f64s(
        path,
        field.grid.n,
        3,
        field.values.iter().flat_map(|n| [n[0], n[1], n[2]]),
        "unit director (x, y, z)",
    )
}

pub fn read_director(path: &Path) -> Result<DirectorField> {
    let (grid, v) = read_f64s(path, 3)?;
    let raw = v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    DirectorField::normalized(grid, raw).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// One value per cell.
pub fn write_scalar(path: &Path, grid: TorusGrid, values: &[f64], description: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            reason: format!("{} values for N = {}", values.len(), grid.n),
        });
    }
    write_f64s(path, grid.n, 1, values.iter().copied(), description)
}

pub fn read_scalar(path: &Path) -> Result<(TorusGrid, Vec<f64>)> {
    read_f64s(path, 1)
}

/// One byte per cell: 0 interior, 1 collar, 2 exterior.
pub fn write_mask(path: &Path, mask: &DomainMask) -> Result<()> {
    fs::write(path, mask.as_bytes()).map_err(io_err(path))?;
    write_sidecar(
        path,
        &Sidecar {
            n: mask.grid.n,
            components: 1,
            layout: "x-fastest".into(),
            dtype: "u8".into(),
            description: "0 interior, 1 collar, 2 exterior".into(),
        },
    )
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}
