//! Analytic ellipsoid phantoms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxel_center, ScanGeometry};
use crate::io::read_json;
use crate::scalar::Scalar;
use crate::tensors::{Layout, ProjectionStack, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// World units.
    pub center: [f64; 3],
    /// World units.
    pub semi_axes: [f64; 3],
    pub intensity: f32,
    /// Rotation about Z, radians.
    #[serde(default)]
    pub rotation: f64,
}

impl Ellipsoid {
    /// World point in the ellipsoid's unit-sphere frame.
    fn to_unit(&self, p: [f64; 3]) -> [f64; 3] {
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        [
            (c * d[0] + s * d[1]) / self.semi_axes[0],
            (-s * d[0] + c * d[1]) / self.semi_axes[1],
            d[2] / self.semi_axes[2],
        ]
    }

    fn unit_dir(&self, v: [f64; 3]) -> [f64; 3] {
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        [
            (c * v[0] + s * v[1]) / self.semi_axes[0],
            (-s * v[0] + c * v[1]) / self.semi_axes[1],
            v[2] / self.semi_axes[2],
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let q = self.to_unit(p);
        q[0] * q[0] + q[1] * q[1] + q[2] * q[2] <= 1.0
    }

    /// Length of the chord cut by the line `origin + t * dir` (`dir` unit).
    pub fn chord(&self, origin: [f64; 3], dir: [f64; 3]) -> f64 {
        let a = self.to_unit(origin);
        let b = self.unit_dir(dir);
        let bb = dot3(b, b);
        let ab = dot3(a, b);
        let disc = ab * ab - bb * (dot3(a, a) - 1.0);
        if disc > 0.0 {
            2.0 * disc.sqrt() / bb
        } else {
            0.0
        }
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.semi_axes.iter().product::<f64>()
    }
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidPhantom {
    pub ellipsoids: Vec<Ellipsoid>,
}

impl EllipsoidPhantom {
    pub fn new(ellipsoids: Vec<Ellipsoid>) -> Self {
        Self { ellipsoids }
    }

    /// Three-dimensional modified Shepp-Logan head scaled to `radius`.
    /// Overlapping intensities sum to values in `[0, 1]`.
    pub fn shepp_logan(radius: f64) -> Self {
        #[rustfmt::skip]
        const TABLE: [([f64; 3], [f64; 3], f64, f32); 10] = [
            ([0.0, 0.0, 0.0],      [0.69, 0.92, 0.81],   0.0,   1.0),
            ([0.0, -0.0184, 0.0],  [0.6624, 0.874, 0.78], 0.0,  -0.8),
            ([0.22, 0.0, 0.0],     [0.11, 0.31, 0.22],  -18.0, -0.2),
            ([-0.22, 0.0, 0.0],    [0.16, 0.41, 0.28],   18.0, -0.2),
            ([0.0, 0.35, -0.15],   [0.21, 0.25, 0.41],   0.0,   0.1),
            ([0.0, 0.1, 0.25],     [0.046, 0.046, 0.05], 0.0,   0.1),
            ([0.0, -0.1, 0.25],    [0.046, 0.046, 0.05], 0.0,   0.1),
            ([-0.08, -0.605, 0.0], [0.046, 0.023, 0.05], 0.0,   0.1),
            ([0.0, -0.606, 0.0],   [0.023, 0.023, 0.02], 0.0,   0.1),
            ([0.06, -0.605, 0.0],  [0.023, 0.046, 0.02], 0.0,   0.1),
        ];
        let ellipsoids = TABLE
            .iter()
            .map(|&(c, a, deg, intensity)| Ellipsoid {
                center: c.map(|v| v * radius),
                semi_axes: a.map(|v| v * radius),
                intensity,
                rotation: deg.to_radians(),
            })
            .collect();
        Self { ellipsoids }
    }

    /// Checks that every ellipsoid lies inside the sphere inscribed in the
    /// voxel-centre box of `dims`.
    pub fn validate_for(&self, dims: (usize, usize, usize), voxel_size: f64) -> Result<()> {
        let r = inscribed_radius(dims, voxel_size);
        for (n, e) in self.ellipsoids.iter().enumerate() {
            if e.semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(Error::Phantom(format!("ellipsoid {n} has a non-positive semi-axis")));
            }
            if !e.intensity.is_finite() || e.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::Phantom(format!("ellipsoid {n} is not finite")));
            }
            let reach = dot3(e.center, e.center).sqrt() + e.semi_axes.iter().cloned().fold(0.0, f64::max);
            if reach > r {
                return Err(Error::Phantom(format!(
                    "ellipsoid {n} reaches {reach:.3}, outside the inscribed sphere of radius {r:.3}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Sum of the intensities of the ellipsoids containing `p`.
    pub fn density(&self, p: [f64; 3]) -> f64 {
        self.ellipsoids
            .iter()
            .filter(|e| e.contains(p))
            .map(|e| e.intensity as f64)
            .sum()
    }

    /// Exact line integral along `origin + t * dir` (`dir` unit length).
    pub fn line_integral(&self, origin: [f64; 3], dir: [f64; 3]) -> f64 {
        self.ellipsoids
            .iter()
            .map(|e| e.intensity as f64 * e.chord(origin, dir))
            .sum()
    }
}

pub fn inscribed_radius(dims: (usize, usize, usize), voxel_size: f64) -> f64 {
    let n = dims.0.min(dims.1).min(dims.2);
    (n as f64 - 1.0) / 2.0 * voxel_size
}

/// Natural-layout volume whose voxels hold the phantom density at their
/// centres.
pub fn rasterize_phantom<T: Scalar>(
    ph: &EllipsoidPhantom,
    dims: (usize, usize, usize),
    voxel_size: f64,
) -> Result<Volume<T>> {
    let (nx, ny, nz) = dims;
    let mut vol = Volume::zeros(nx, ny, nz, Layout::Natural)?;
    let data = vol.data_mut();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = voxel_center(dims, voxel_size, [i as f64, j as f64, k as f64]);
                data[(k * ny + j) * nx + i] = T::of_f64(ph.density(p));
            }
        }
    }
    Ok(vol)
}

/// Exact projections of the phantom: per detector pixel, the line integral
/// from the source through the pixel centre. Natural layout.
pub fn analytic_projections<T: Scalar>(
    ph: &EllipsoidPhantom,
    geom: &ScanGeometry,
    threads: usize,
) -> Result<ProjectionStack<T>> {
    super::forward::per_pixel(geom, threads, |src, dir| ph.line_integral(src, dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_phantom_rasterizes_to_zero() {
        let v = rasterize_phantom::<f32>(&EllipsoidPhantom::default(), (8, 9, 10), 1.0).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn centre_voxel_only() {
        let ph = EllipsoidPhantom::new(vec![Ellipsoid {
            center: [0.0; 3],
            semi_axes: [0.4; 3],
            intensity: 1.0,
            rotation: 0.0,
        }]);
        let v = rasterize_phantom::<f32>(&ph, (9, 9, 9), 1.0).unwrap();
        let nonzero: Vec<usize> = (0..v.data().len()).filter(|&n| v.data()[n] != 0.0).collect();
        assert_eq!(nonzero, vec![v.index(4, 4, 4)]);
    }

    #[test]
    fn rasterized_mass_matches_analytic_volume() {
        let ph = EllipsoidPhantom::new(vec![Ellipsoid {
            center: [3.0, -2.0, 1.0],
            semi_axes: [20.0, 14.0, 17.0],
            intensity: 0.7,
            rotation: 0.4,
        }]);
        let v = rasterize_phantom::<f32>(&ph, (64, 64, 64), 1.0).unwrap();
        let mass: f64 = v.data().iter().map(|&x| x as f64).sum();
        let exact = ph.ellipsoids[0].volume() * 0.7;
        assert!((mass - exact).abs() / exact < 0.05, "mass {mass} vs {exact}");
    }

    #[test]
    fn shepp_logan_densities_are_normalized() {
        let ph = EllipsoidPhantom::shepp_logan(31.5);
        ph.validate_for((64, 64, 64), 1.0).unwrap();
        let v = rasterize_phantom::<f32>(&ph, (64, 64, 64), 1.0).unwrap();
        let (lo, hi) = v
            .data()
            .iter()
            .fold((f32::MAX, f32::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        assert!(lo >= -1e-6 && hi <= 1.0 + 1e-6, "range [{lo}, {hi}]");
        assert!(hi > 0.9);
    }

    #[test]
    fn oversized_ellipsoid_rejected() {
        let ph = EllipsoidPhantom::shepp_logan(40.0);
        assert!(ph.validate_for((64, 64, 64), 1.0).is_err());
    }

    #[test]
    fn chord_through_sphere_centre() {
        let e = Ellipsoid {
            center: [1.0, 2.0, 3.0],
            semi_axes: [5.0; 3],
            intensity: 1.0,
            rotation: 0.7,
        };
        let len = e.chord([1.0, -50.0, 3.0], [0.0, 1.0, 0.0]);
        assert!((len - 10.0).abs() < 1e-9);
        assert_eq!(e.chord([100.0, -50.0, 3.0], [0.0, 1.0, 0.0]), 0.0);
    }
}
