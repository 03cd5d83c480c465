//! Raw little-endian `f32` files with JSON dimension sidecars.
//!
//! `name.raw` holds the samples; `name.json` holds `{np,nh,nw,layout}` for a
//! projection stack or `{nx,ny,nz,layout}` for a volume.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::{Layout, ProjectionStack, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionHeader {
    pub np: usize,
    pub nh: usize,
    pub nw: usize,
    pub layout: Layout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub layout: Layout,
}

/// Sidecar path for a raw file: same stem, `.json` extension.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_f32_raw(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_f32_raw(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::LengthMismatch {
            expected: bytes.len() / 4 * 4,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_projections(raw: &Path, p: &ProjectionStack<f32>) -> Result<()> {
    write_f32_raw(raw, p.data())?;
    write_json(
        &sidecar_path(raw),
        &ProjectionHeader {
            np: p.np(),
            nh: p.nh(),
            nw: p.nw(),
            layout: p.layout(),
        },
    )
}

pub fn read_projections(raw: &Path) -> Result<ProjectionStack<f32>> {
    let h: ProjectionHeader = read_json(&sidecar_path(raw))?;
    ProjectionStack::from_vec(read_f32_raw(raw)?, h.np, h.nh, h.nw, h.layout)
}

pub fn write_volume(raw: &Path, v: &Volume<f32>) -> Result<()> {
    write_f32_raw(raw, v.data())?;
    write_json(
        &sidecar_path(raw),
        &VolumeHeader {
            nx: v.nx(),
            ny: v.ny(),
            nz: v.nz(),
            layout: v.layout(),
        },
    )
}

pub fn read_volume(raw: &Path) -> Result<Volume<f32>> {
    let h: VolumeHeader = read_json(&sidecar_path(raw))?;
    Volume::from_vec(read_f32_raw(raw)?, h.nx, h.ny, h.nz, h.layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("vol.raw");
        let v = Volume::from_vec(vec![1.5f32, -2.0, 0.25, 8.0, 0.0, 3.0], 3, 2, 1, Layout::Transposed)
            .unwrap();
        write_volume(&raw, &v).unwrap();
        assert_eq!(fs::metadata(&raw).unwrap().len(), 24);
        let header: serde_json::Value = read_json(&dir.path().join("vol.json")).unwrap();
        assert_eq!(header["layout"], "TRANSPOSED");
        assert_eq!(header["nx"], 3);
        assert_eq!(read_volume(&raw).unwrap(), v);
    }

    #[test]
    fn raw_bytes_are_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("p.raw");
        let p = ProjectionStack::from_vec(vec![1.0f32, 2.0, 3.0, 4.0], 1, 2, 2, Layout::Natural).unwrap();
        write_projections(&raw, &p).unwrap();
        let bytes = fs::read(&raw).unwrap();
        assert_eq!(&bytes[4..8], &[0x00, 0x00, 0x00, 0x40]);
        assert_eq!(read_projections(&raw).unwrap(), p);
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("v.raw");
        let v = Volume::<f32>::zeros(2, 2, 2, Layout::Natural).unwrap();
        write_volume(&raw, &v).unwrap();
        fs::write(&raw, [0u8; 12]).unwrap();
        assert!(matches!(read_volume(&raw), Err(Error::LengthMismatch { .. })));
    }
}
