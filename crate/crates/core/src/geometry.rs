//! Circular-trajectory cone-beam geometry and the 3x4 projection matrices
//! derived from it.
//!
//! World frame: Z is the rotation axis, the volume is centred on the origin,
//! and voxel `(i, j, k)` sits at
//! `((i - (nx-1)/2) * s, (j - (ny-1)/2) * s, (k - (nz-1)/2) * s)`.
//! At angle `theta` the source lies at `d * (cos theta, sin theta, 0)` and the
//! flat panel is perpendicular to the source direction at distance `D` from
//! the source, its V axis parallel to Z and its principal point at the panel
//! centre.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::dot4;
use crate::scalar::Scalar;

/// World coordinates of the centre of voxel `idx` in a grid of `dims`
/// centred on the origin.
pub fn voxel_center(dims: (usize, usize, usize), voxel_size: f64, idx: [f64; 3]) -> [f64; 3] {
    let half = |n: usize| (n as f64 - 1.0) / 2.0;
    [
        (idx[0] - half(dims.0)) * voxel_size,
        (idx[1] - half(dims.1)) * voxel_size,
        (idx[2] - half(dims.2)) * voxel_size,
    ]
}

/// Named parameters for [`build_geometry`]. Omitted angles default to an
/// equiangular full circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Source to rotation-axis distance.
    pub d: f64,
    /// Source to detector distance.
    #[serde(rename = "D")]
    pub big_d: f64,
    pub nw: usize,
    pub nh: usize,
    pub pixel_pitch_u: f64,
    pub pixel_pitch_v: f64,
    pub voxel_size: f64,
    pub np: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

/// Validated scan geometry. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryConfig")]
pub struct ScanGeometry {
    d: f64,
    #[serde(rename = "D")]
    big_d: f64,
    nw: usize,
    nh: usize,
    pixel_pitch_u: f64,
    pixel_pitch_v: f64,
    voxel_size: f64,
    np: usize,
    angles: Vec<f64>,
    nx: usize,
    ny: usize,
    nz: usize,
}

impl TryFrom<GeometryConfig> for ScanGeometry {
    type Error = Error;

    fn try_from(config: GeometryConfig) -> Result<Self> {
        build_geometry(config)
    }
}

/// `np` equiangular angles over `[0, 2pi)`.
pub fn equiangular(np: usize) -> Vec<f64> {
    (0..np).map(|s| TAU * s as f64 / np as f64).collect()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Geometry(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn build_geometry(config: GeometryConfig) -> Result<ScanGeometry> {
    let GeometryConfig {
        d,
        big_d,
        nw,
        nh,
        pixel_pitch_u,
        pixel_pitch_v,
        voxel_size,
        np,
        angles,
        nx,
        ny,
        nz,
    } = config;

    positive("d", d)?;
    positive("D", big_d)?;
    if big_d < d {
        return Err(Error::Geometry(format!("D ({big_d}) must be at least d ({d})")));
    }
    positive("pixel_pitch_u", pixel_pitch_u)?;
    positive("pixel_pitch_v", pixel_pitch_v)?;
    positive("voxel_size", voxel_size)?;
    if nw < 2 || nh < 2 {
        return Err(Error::Geometry(format!("detector must be at least 2x2, got {nw}x{nh}")));
    }
    if np < 1 {
        return Err(Error::Geometry("np must be at least 1".into()));
    }
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(Error::Geometry(format!("degenerate volume {nx}x{ny}x{nz}")));
    }
    let angles = match angles {
        Some(a) => {
            if a.len() != np {
                return Err(Error::Geometry(format!(
                    "{} angles given for np={np}",
                    a.len()
                )));
            }
            if let Some(bad) = a.iter().find(|t| !t.is_finite()) {
                return Err(Error::Geometry(format!("non-finite angle {bad}")));
            }
            a
        }
        None => equiangular(np),
    };

    let geom = ScanGeometry {
        d,
        big_d,
        nw,
        nh,
        pixel_pitch_u,
        pixel_pitch_v,
        voxel_size,
        np,
        angles,
        nx,
        ny,
        nz,
    };
    // The homogeneous depth d - a must stay positive over the whole volume.
    for &theta in &geom.angles {
        let (c, s) = (theta.cos(), theta.sin());
        let reach = geom.voxel_size * (geom.half_x() * c.abs() + geom.half_y() * s.abs());
        if reach >= d {
            return Err(Error::Geometry(format!(
                "source at distance {d} lies inside the volume footprint ({reach})"
            )));
        }
    }
    Ok(geom)
}

impl GeometryConfig {
    /// Picks pixel pitches so that every voxel centre projects at least
    /// `margin` pixels inside the panel for every angle.
    ///
    /// The detector coordinates are linear-fractional in world position, so
    /// their extrema over the volume box are attained at its corners.
    pub fn fit_detector(mut self, margin: f64) -> Result<Self> {
        let angles = self.angles.clone().unwrap_or_else(|| equiangular(self.np));
        let s = self.voxel_size;
        let hx = (self.nx as f64 - 1.0) / 2.0 * s;
        let hy = (self.ny as f64 - 1.0) / 2.0 * s;
        let hz = (self.nz as f64 - 1.0) / 2.0 * s;
        let (mut max_u, mut max_v) = (0.0f64, 0.0f64);
        for &theta in &angles {
            let (c, sn) = (theta.cos(), theta.sin());
            for &x in &[-hx, hx] {
                for &y in &[-hy, hy] {
                    let a = x * c + y * sn;
                    let b = -x * sn + y * c;
                    let depth = self.d - a;
                    if depth <= 0.0 {
                        return Err(Error::Geometry("source inside the volume".into()));
                    }
                    max_u = max_u.max((self.big_d * b / depth).abs());
                    max_v = max_v.max((self.big_d * hz / depth).abs());
                }
            }
        }
        let half_u = (self.nw as f64 - 1.0) / 2.0 - margin;
        let half_v = (self.nh as f64 - 1.0) / 2.0 - margin;
        if half_u <= 0.0 || half_v <= 0.0 {
            return Err(Error::Geometry(format!(
                "margin {margin} leaves no room on a {}x{} panel",
                self.nw, self.nh
            )));
        }
        // A single-voxel extent has no footprint; any pitch works.
        self.pixel_pitch_u = if max_u > 0.0 { max_u / half_u } else { 1.0 };
        self.pixel_pitch_v = if max_v > 0.0 { max_v / half_v } else { 1.0 };
        Ok(self)
    }
}

impl ScanGeometry {
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn big_d(&self) -> f64 {
        self.big_d
    }

    pub fn nw(&self) -> usize {
        self.nw
    }

    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn pixel_pitch(&self) -> (f64, f64) {
        (self.pixel_pitch_u, self.pixel_pitch_v)
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Volume dimensions `(nx, ny, nz)`.
    pub fn volume_dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    fn half_x(&self) -> f64 {
        (self.nx as f64 - 1.0) / 2.0
    }

    fn half_y(&self) -> f64 {
        (self.ny as f64 - 1.0) / 2.0
    }

    fn half_z(&self) -> f64 {
        (self.nz as f64 - 1.0) / 2.0
    }

    /// World coordinates of the centre of voxel `(i, j, k)`.
    pub fn voxel_to_world(&self, i: f64, j: f64, k: f64) -> [f64; 3] {
        voxel_center(self.volume_dims(), self.voxel_size, [i, j, k])
    }

    /// Continuous voxel index of a world point (inverse of [`Self::voxel_to_world`]).
    pub fn world_to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.voxel_size;
        [
            p[0] / s + self.half_x(),
            p[1] / s + self.half_y(),
            p[2] / s + self.half_z(),
        ]
    }

    /// Source position in world coordinates for projection `s`.
    pub fn source_position(&self, s: usize) -> [f64; 3] {
        let theta = self.angles[s];
        [self.d * theta.cos(), self.d * theta.sin(), 0.0]
    }

    /// World position of the centre of detector pixel `(u, v)` for projection `s`.
    pub fn pixel_position(&self, s: usize, u: f64, v: f64) -> [f64; 3] {
        let theta = self.angles[s];
        let (c, sn) = (theta.cos(), theta.sin());
        let a = self.d - self.big_d;
        let b = (u - (self.nw as f64 - 1.0) / 2.0) * self.pixel_pitch_u;
        let z = (v - (self.nh as f64 - 1.0) / 2.0) * self.pixel_pitch_v;
        [a * c - b * sn, a * sn + b * c, z]
    }

    /// Double-precision matrix coefficients for projection `s`.
    fn matrix_rows(&self, s: usize) -> [[f64; 4]; 3] {
        let theta = self.angles[s];
        let (c, sn) = (theta.cos(), theta.sin());
        let vs = self.voxel_size;
        let (cx, cy, cz) = (self.half_x(), self.half_y(), self.half_z());
        // depth = d - (x cos + y sin)
        let depth = [-c * vs, -sn * vs, 0.0, self.d + vs * (c * cx + sn * cy)];
        // in-panel horizontal offset b = -x sin + y cos
        let lateral = [-sn * vs, c * vs, 0.0, vs * (sn * cx - c * cy)];
        let vertical = [0.0, 0.0, vs, -vs * cz];
        let fu = self.big_d / self.pixel_pitch_u;
        let fv = self.big_d / self.pixel_pitch_v;
        let u0 = (self.nw as f64 - 1.0) / 2.0;
        let v0 = (self.nh as f64 - 1.0) / 2.0;
        let mut rows = [[0.0; 4]; 3];
        for n in 0..4 {
            rows[0][n] = fu * lateral[n] + u0 * depth[n];
            rows[1][n] = fv * vertical[n] + v0 * depth[n];
            rows[2][n] = depth[n];
        }
        rows
    }

    /// All matrices of the scan, materialized once.
    pub fn matrices<T: Scalar>(&self) -> Vec<ProjectionMatrix<T>> {
        (0..self.np)
            .map(|s| ProjectionMatrix::from_f64(self.matrix_rows(s)))
            .collect()
    }
}

/// 3x4 homogeneous map from voxel index space to detector pixel coordinates.
///
/// Row 0 and row 2 have an exactly zero `k` coefficient, so `u` and the depth
/// are constant along every vertical voxel line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionMatrix<T> {
    pub rows: [[T; 4]; 3],
}

impl<T: Scalar> ProjectionMatrix<T> {
    pub fn from_f64(rows: [[f64; 4]; 3]) -> Self {
        Self {
            rows: rows.map(|r| r.map(T::of_f64)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|c| c.is_finite())
    }

    /// `(u, v, z)` for voxel `(i, j, k)`, evaluated the way the baseline
    /// kernel evaluates it.
    #[inline]
    pub fn project(&self, i: T, j: T, k: T) -> (T, T, T) {
        let vec = [i, j, k, T::one()];
        let z = dot4(&self.rows[2], &vec);
        let f = T::one() / z;
        let u = dot4(&self.rows[0], &vec) * f;
        let v = dot4(&self.rows[1], &vec) * f;
        (u, v, z)
    }
}

impl ProjectionMatrix<f32> {
    /// Twelve little-endian `f32` values, row-major.
    pub fn to_le_bytes(&self) -> [u8; 48] {
        let mut out = [0u8; 48];
        for (n, c) in self.rows.iter().flatten().enumerate() {
            out[4 * n..4 * n + 4].copy_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8; 48]) -> Self {
        let mut rows = [[0.0f32; 4]; 3];
        for (n, c) in rows.iter_mut().flatten().enumerate() {
            let mut word = [0u8; 4];
            word.copy_from_slice(&bytes[4 * n..4 * n + 4]);
            *c = f32::from_le_bytes(word);
        }
        Self { rows }
    }
}

pub fn projection_matrix<T: Scalar>(
    geom: &ScanGeometry,
    angle_index: usize,
) -> Result<ProjectionMatrix<T>> {
    if angle_index >= geom.np {
        return Err(Error::AngleIndex {
            index: angle_index,
            np: geom.np,
        });
    }
    Ok(ProjectionMatrix::from_f64(geom.matrix_rows(angle_index)))
}

pub fn write_matrices(path: &Path, mats: &[ProjectionMatrix<f32>]) -> Result<()> {
    let bytes: Vec<u8> = mats.iter().flat_map(|m| m.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_matrices(path: &Path) -> Result<Vec<ProjectionMatrix<f32>>> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() % 48 != 0 {
        return Err(Error::LengthMismatch {
            expected: bytes.len() / 48 * 48 + 48,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(48)
        .map(|c| ProjectionMatrix::from_le_bytes(c.try_into().expect("48-byte chunk")))
        .collect())
}

pub fn read_geometry(path: &Path) -> Result<ScanGeometry> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn config(n: usize, np: usize) -> GeometryConfig {
        GeometryConfig {
            d: 1000.0,
            big_d: 1536.0,
            nw: n,
            nh: n,
            pixel_pitch_u: 1.0,
            pixel_pitch_v: 1.0,
            voxel_size: 1.0,
            np,
            angles: None,
            nx: n,
            ny: n,
            nz: n,
        }
    }

    #[test]
    fn default_angles_are_equiangular() {
        let g = build_geometry(config(16, 4)).unwrap();
        let expected = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (a, e) in g.angles().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = config(16, 4);
        c.d = 0.0;
        assert!(build_geometry(c).is_err());

        let mut c = config(16, 4);
        c.big_d = 500.0;
        assert!(build_geometry(c).is_err());

        let mut c = config(16, 4);
        c.nw = 1;
        assert!(build_geometry(c).is_err());

        let mut c = config(16, 4);
        c.np = 0;
        assert!(build_geometry(c).is_err());

        let mut c = config(16, 4);
        c.nz = 0;
        assert!(build_geometry(c).is_err());

        let mut c = config(16, 4);
        c.angles = Some(vec![0.0, 1.0]);
        assert!(build_geometry(c).is_err());

        let mut c = config(16, 4);
        c.d = 5.0;
        c.big_d = 10.0;
        assert!(build_geometry(c).is_err(), "source inside the volume");
    }

    #[test]
    fn angle_index_out_of_range() {
        let g = build_geometry(config(16, 4)).unwrap();
        assert!(matches!(
            projection_matrix::<f32>(&g, 4),
            Err(Error::AngleIndex { index: 4, np: 4 })
        ));
    }

    #[test]
    fn volume_centre_maps_to_principal_point() {
        // Odd dims put a voxel exactly on the rotation axis.
        let mut c = config(17, 7);
        c.nw = 33;
        c.nh = 21;
        let g = build_geometry(c).unwrap();
        for m in g.matrices::<f64>() {
            let (u, v, z) = m.project(8.0, 8.0, 8.0);
            assert!((u - 16.0).abs() < 1e-9, "u = {u}");
            assert!((v - 10.0).abs() < 1e-9, "v = {v}");
            assert!((z - 1000.0).abs() < 1e-9, "z = {z}");
        }
    }

    #[test]
    fn vertical_lines_keep_u_and_depth() {
        let g = build_geometry(config(16, 9)).unwrap();
        for m in g.matrices::<f32>() {
            assert_eq!(m.rows[0][2], 0.0);
            assert_eq!(m.rows[2][2], 0.0);
            let (u0, v0, z0) = m.project(3.0, 11.0, 0.0);
            let (u1, v1, z1) = m.project(3.0, 11.0, 9.0);
            assert_eq!(u0.to_bits(), u1.to_bits());
            assert_eq!(z0.to_bits(), z1.to_bits());
            assert!(v1 > v0);
        }
    }

    #[test]
    fn mirrored_voxels_project_symmetrically() {
        let g = build_geometry(config(16, 5)).unwrap();
        let nh = g.nh() as f32;
        for m in g.matrices::<f32>() {
            for k in 0..16 {
                let (_, v, _) = m.project(2.0, 13.0, k as f32);
                let (_, vm, _) = m.project(2.0, 13.0, (15 - k) as f32);
                assert!((v + vm - (nh - 1.0)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn matrices_agree_with_ray_geometry() {
        // The pixel a voxel projects to must lie on the line from the source
        // through the voxel.
        let g = build_geometry(config(12, 6)).unwrap();
        let mats = g.matrices::<f64>();
        for (s, m) in mats.iter().enumerate() {
            let (u, v, z) = m.project(1.0, 7.0, 4.0);
            let src = g.source_position(s);
            let vox = g.voxel_to_world(1.0, 7.0, 4.0);
            let pix = g.pixel_position(s, u, v);
            let a: Vec<f64> = (0..3).map(|n| vox[n] - src[n]).collect();
            let b: Vec<f64> = (0..3).map(|n| pix[n] - src[n]).collect();
            let cross = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            let norm = cross.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(norm < 1e-6, "collinearity residual {norm}");
            assert!(z > 0.0);
        }
    }

    #[test]
    fn fitted_detector_contains_volume() {
        let c = config(32, 16).fit_detector(1.0).unwrap();
        let g = build_geometry(c).unwrap();
        for m in g.matrices::<f32>() {
            for &(i, j, k) in &[(0, 0, 0), (31, 0, 31), (0, 31, 0), (31, 31, 31), (16, 0, 5)] {
                let (u, v, _) = m.project(i as f32, j as f32, k as f32);
                assert!((0.0..31.0).contains(&u), "u = {u}");
                assert!((0.0..31.0).contains(&v), "v = {v}");
            }
        }
    }

    #[test]
    fn json_round_trip_uses_field_names() {
        let g = build_geometry(config(8, 3)).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        for key in [
            "\"d\"", "\"D\"", "\"nw\"", "\"nh\"", "\"pixel_pitch_u\"", "\"pixel_pitch_v\"",
            "\"voxel_size\"", "\"np\"", "\"angles\"",
        ] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        let back: ScanGeometry = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let bad = text.replace("\"d\":1000.0", "\"d\":0.0");
        assert!(serde_json::from_str::<ScanGeometry>(&bad).is_err());
    }

    #[test]
    fn matrix_bytes_are_little_endian_row_major() {
        let m = ProjectionMatrix::<f32> {
            rows: [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0], [9.0, 10.0, 11.0, 12.0]],
        };
        let b = m.to_le_bytes();
        assert_eq!(&b[0..4], &1.0f32.to_le_bytes());
        assert_eq!(&b[44..48], &12.0f32.to_le_bytes());
        assert_eq!(ProjectionMatrix::from_le_bytes(&b), m);
    }
}
