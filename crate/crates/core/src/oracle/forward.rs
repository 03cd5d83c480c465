//! Ray-driven forward projection through a voxel volume.

use std::thread;

use crate::backprojector::chunk_len;
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::scalar::Scalar;
use crate::tensors::{Layout, ProjectionStack, Volume};

use super::phantom::dot3;

/// Evaluates `ray(source, unit_dir)` for every detector pixel centre and
/// stores the result in a natural-layout stack.
pub(crate) fn per_pixel<T, F>(geom: &ScanGeometry, threads: usize, ray: F) -> Result<ProjectionStack<T>>
where
    T: Scalar,
    F: Fn([f64; 3], [f64; 3]) -> f64 + Sync,
{
    let (np, nh, nw) = (geom.np(), geom.nh(), geom.nw());
    let mut out = ProjectionStack::zeros(np, nh, nw, Layout::Natural)?;
    let data = out.data_mut();
    let per = chunk_len(data.len(), threads);
    let fill = |start: usize, chunk: &mut [T]| {
        for (n, px) in chunk.iter_mut().enumerate() {
            let flat = start + n;
            let s = flat / (nh * nw);
            let v = (flat / nw) % nh;
            let u = flat % nw;
            let src = geom.source_position(s);
            let dst = geom.pixel_position(s, u as f64, v as f64);
            let dir = [dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]];
            let len = dot3(dir, dir).sqrt();
            *px = T::of_f64(ray(src, dir.map(|c| c / len)));
        }
    };
    thread::scope(|scope| {
        for (n, chunk) in data.chunks_mut(per).enumerate() {
            let fill = &fill;
            scope.spawn(move || fill(n * per, chunk));
        }
    });
    Ok(out)
}

/// Parameter interval where `origin + t * dir` crosses the axis-aligned box
/// `[lo, hi]`, if any.
fn clip_to_box(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let ta = (lo[a] - origin[a]) / dir[a];
        let tb = (hi[a] - origin[a]) / dir[a];
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 > t0).then_some((t0.max(0.0), t1))
}

/// Trilinear sample at continuous voxel index `p`; zero outside the grid.
fn trilinear<T: Scalar>(data: &[T], dims: (usize, usize, usize), p: [f64; 3]) -> f64 {
    let (nx, ny, nz) = dims;
    let base = p.map(f64::floor);
    let frac = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
    let mut acc = 0.0;
    for corner in 0..8 {
        let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let idx = [
            base[0] as i64 + off[0] as i64,
            base[1] as i64 + off[1] as i64,
            base[2] as i64 + off[2] as i64,
        ];
        if idx[0] < 0 || idx[1] < 0 || idx[2] < 0 {
            continue;
        }
        let (x, y, z) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
        if x >= nx || y >= ny || z >= nz {
            continue;
        }
        let mut w = 1.0;
        for a in 0..3 {
            w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        acc += w * data[(z * ny + y) * nx + x].as_f64();
    }
    acc
}

/// Line integrals of `vol` along every source-to-pixel ray, with midpoint
/// samples every half voxel and trilinear interpolation. `vol` must be
/// natural layout and match the geometry's volume dimensions.
pub fn forward_project<T: Scalar>(
    vol: &Volume<T>,
    geom: &ScanGeometry,
    threads: usize,
) -> Result<ProjectionStack<T>> {
    if vol.layout() != Layout::Natural {
        return Err(Error::LayoutMismatch {
            expected: Layout::Natural,
            found: vol.layout(),
        });
    }
    let dims = vol.dims();
    if dims != geom.volume_dims() {
        return Err(Error::DimensionMismatch(format!(
            "volume {dims:?} but geometry expects {:?}",
            geom.volume_dims()
        )));
    }
    let s = geom.voxel_size();
    let step = s / 2.0;
    let half = [dims.0, dims.1, dims.2].map(|n| n as f64 * s / 2.0);
    let lo = half.map(|h| -h);
    let data = vol.data();
    per_pixel(geom, threads, |src, dir| {
        let Some((t0, t1)) = clip_to_box(src, dir, lo, half) else {
            return 0.0;
        };
        let steps = ((t1 - t0) / step).ceil() as usize;
        let mut sum = 0.0;
        for n in 0..steps {
            let ta = t0 + n as f64 * step;
            let tb = (ta + step).min(t1);
            let t = 0.5 * (ta + tb);
            let p = [src[0] + t * dir[0], src[1] + t * dir[1], src[2] + t * dir[2]];
            sum += (tb - ta) * trilinear(data, dims, geom.world_to_voxel(p));
        }
        sum
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometryConfig};
    use crate::oracle::phantom::{analytic_projections, rasterize_phantom, Ellipsoid, EllipsoidPhantom};

    fn geom(n: usize, np: usize, det: usize) -> ScanGeometry {
        let cfg = GeometryConfig {
            d: 200.0,
            big_d: 300.0,
            nw: det,
            nh: det,
            pixel_pitch_u: 1.0,
            pixel_pitch_v: 1.0,
            voxel_size: 1.0,
            np,
            angles: None,
            nx: n,
            ny: n,
            nz: n,
        };
        build_geometry(cfg.fit_detector(1.0).unwrap()).unwrap()
    }

    #[test]
    fn clip_misses_and_hits() {
        let lo = [-1.0; 3];
        let hi = [1.0; 3];
        assert!(clip_to_box([5.0, 5.0, 0.0], [1.0, 0.0, 0.0], lo, hi).is_none());
        let (t0, t1) = clip_to_box([-5.0, 0.0, 0.0], [1.0, 0.0, 0.0], lo, hi).unwrap();
        assert!((t0 - 4.0).abs() < 1e-12 && (t1 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn trilinear_reproduces_grid_values() {
        let dims = (3, 4, 5);
        let data: Vec<f32> = (0..60).map(|n| n as f32).collect();
        assert_eq!(trilinear(&data, dims, [2.0, 3.0, 4.0]), 59.0);
        assert_eq!(trilinear(&data, dims, [-2.0, 0.0, 0.0]), 0.0);
        let mid = trilinear(&data, dims, [0.5, 0.0, 0.0]);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forward_agrees_with_analytic_chords() {
        let g = geom(32, 4, 48);
        let ph = EllipsoidPhantom::new(vec![Ellipsoid {
            center: [2.0, -1.0, 0.5],
            semi_axes: [9.0, 7.0, 8.0],
            intensity: 1.0,
            rotation: 0.3,
        }]);
        let vol = rasterize_phantom::<f32>(&ph, g.volume_dims(), 1.0).unwrap();
        let fwd = forward_project(&vol, &g, 2).unwrap();
        let exact = analytic_projections::<f32>(&ph, &g, 2).unwrap();
        let peak = exact.data().iter().cloned().fold(0.0f32, f32::max);
        let worst = fwd
            .data()
            .iter()
            .zip(exact.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 0.2 * peak, "worst {worst} peak {peak}");
    }

    #[test]
    fn forward_is_linear() {
        let g = geom(12, 3, 20);
        let a = rasterize_phantom::<f64>(&EllipsoidPhantom::shepp_logan(5.5), g.volume_dims(), 1.0).unwrap();
        let mut b = a.clone();
        b.data_mut().iter_mut().enumerate().for_each(|(n, v)| *v = (n % 7) as f64 * 0.1);
        let mut sum = a.clone();
        sum.data_mut()
            .iter_mut()
            .zip(b.data())
            .for_each(|(s, &y)| *s = 2.0 * *s + y);
        let pa = forward_project(&a, &g, 1).unwrap();
        let pb = forward_project(&b, &g, 1).unwrap();
        let ps = forward_project(&sum, &g, 1).unwrap();
        for n in 0..ps.data().len() {
            let want = 2.0 * pa.data()[n] + pb.data()[n];
            assert!((ps.data()[n] - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn brightest_pixel_is_central() {
        let g = geom(17, 1, 33);
        let ph = EllipsoidPhantom::new(vec![Ellipsoid {
            center: [0.0; 3],
            semi_axes: [6.0; 3],
            intensity: 1.0,
            rotation: 0.0,
        }]);
        let vol = rasterize_phantom::<f32>(&ph, g.volume_dims(), 1.0).unwrap();
        let p = forward_project(&vol, &g, 1).unwrap();
        let (best, _) = p
            .data()
            .iter()
            .enumerate()
            .fold((0, f32::MIN), |acc, (n, &v)| if v > acc.1 { (n, v) } else { acc });
        assert_eq!((best / g.nw(), best % g.nw()), (g.nh() / 2, g.nw() / 2));
    }

    #[test]
    fn rejects_transposed_or_mismatched() {
        let g = geom(8, 2, 16);
        let v = Volume::<f32>::zeros(8, 8, 8, Layout::Transposed).unwrap();
        assert!(forward_project(&v, &g, 1).is_err());
        let v = Volume::<f32>::zeros(8, 8, 6, Layout::Natural).unwrap();
        assert!(forward_project(&v, &g, 1).is_err());
    }
}
