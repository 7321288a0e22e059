//! Field files: a JSON header plus a raw little-endian `f64` blob, three
//! components per node, x fastest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DiscreteField, FieldError, Grid};
use crate::sphergeo::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    /// Blob path, relative to the header's directory unless absolute.
    pub data: String,
}

/// Read a header and its blob into a grid and raw (unnormalized) node values.
pub fn read_field_file(header: &Path) -> Result<(Grid, Vec<Vec3>), FieldError> {
    let text = fs::read_to_string(header).map_err(|e| FieldError::Io(format!("{}: {e}", header.display())))?;
    let h: FieldHeader = serde_json::from_str(&text).map_err(|e| FieldError::Format(e.to_string()))?;
    let grid = Grid::new(h.dims, h.spacing, h.origin).map_err(|e| FieldError::Format(e.to_string()))?;
    let blob_path: PathBuf = {
        let p = PathBuf::from(&h.data);
        if p.is_absolute() {
            p
        } else {
            header.parent().unwrap_or(Path::new(".")).join(p)
        }
    };
    let bytes = fs::read(&blob_path).map_err(|e| FieldError::Io(format!("{}: {e}", blob_path.display())))?;
    let want = 3 * 8 * grid.len();
    if bytes.len() != want {
        return Err(FieldError::Format(format!(
            "blob has {} bytes, expected {want} for dims {:?}",
            bytes.len(),
            h.dims
        )));
    }
    let values = bytes
        .chunks_exact(24)
        .map(|c| {
            let x = |o: usize| f64::from_le_bytes(c[o..o + 8].try_into().expect("8 bytes"));
            Vec3::new(x(0), x(8), x(16))
        })
        .collect();
    Ok((grid, values))
}

/// Write `f` as `header` plus a blob named after it with a `.bin` extension.
pub fn write_field_file(header: &Path, f: &DiscreteField) -> Result<(), FieldError> {
    let blob = header.with_extension("bin");
    let name = blob
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| FieldError::Io(format!("bad path {}", header.display())))?
        .to_string();
    let g = f.grid();
    let h = FieldHeader { dims: g.dims, spacing: g.spacing, origin: g.origin, data: name };
    let mut bytes = Vec::with_capacity(24 * g.len());
    for v in f.values() {
        for x in v.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let io = |e: std::io::Error| FieldError::Io(e.to_string());
    fs::write(&blob, bytes).map_err(io)?;
    let text = serde_json::to_string_pretty(&h).map_err(|e| FieldError::Format(e.to_string()))?;
    fs::write(header, text + "\n").map_err(io)
}
