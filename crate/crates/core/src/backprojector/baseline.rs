//! Voxel-driven reference kernel on natural layouts.

use std::thread;

use super::chunk_len;
use super::counters::Tally;
use crate::geometry::ProjectionMatrix;
use crate::interp::{bilinear_unchecked, dot4, taps_in_range, Grid};
use crate::scalar::Scalar;
use crate::tensors::{ProjectionStack, Volume};

pub(super) fn run<T: Scalar, C: Tally>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    vol: &mut Volume<T>,
    threads: usize,
) -> C {
    let (nx, ny, nz) = vol.dims();
    let slab = nx * ny;
    let slabs_per_worker = chunk_len(nz, threads);
    let data = vol.data_mut();
    if slabs_per_worker >= nz {
        return slabs::<T, C>(img, mats, data, 0, nx, ny);
    }
    thread::scope(|scope| {
        let workers: Vec<_> = data
            .chunks_mut(slabs_per_worker * slab)
            .enumerate()
            .map(|(n, chunk)| {
                scope.spawn(move || slabs::<T, C>(img, mats, chunk, n * slabs_per_worker, nx, ny))
            })
            .collect();
        let mut total = C::default();
        for w in workers {
            total.merge(w.join().expect("baseline worker panicked"));
        }
        total
    })
}

/// Updates the k-slabs `k0..` held in `out`, all projections in order.
fn slabs<T: Scalar, C: Tally>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    out: &mut [T],
    k0: usize,
    nx: usize,
    ny: usize,
) -> C {
    let (nh, nw) = (img.nh(), img.nw());
    let mut tally = C::default();
    for (s, m) in mats.iter().enumerate() {
        let grid = Grid::from_parts(img.image(s), nh, nw);
        let rows = &m.rows;
        for (dk, slab) in out.chunks_exact_mut(nx * ny).enumerate() {
            let k = T::of_usize(k0 + dk);
            for (j, line) in slab.chunks_exact_mut(nx).enumerate() {
                let j = T::of_usize(j);
                for (i, voxel) in line.iter_mut().enumerate() {
                    let vec = [T::of_usize(i), j, k, T::one()];
                    let z = dot4(&rows[2], &vec);
                    let f = T::one() / z;
                    let x = dot4(&rows[0], &vec) * f;
                    let y = dot4(&rows[1], &vec) * f;
                    tally.dots(3);
                    if taps_in_range(x, nw) && taps_in_range(y, nh) {
                        // SAFETY: both coordinates were just range-checked.
                        let val = unsafe { bilinear_unchecked(grid, x, y) };
                        let w = f * f;
                        *voxel = *voxel + val * w;
                        tally.mixes(3);
                        tally.proj_words(4);
                        tally.vol_words(2);
                    }
                }
            }
        }
    }
    tally
}
