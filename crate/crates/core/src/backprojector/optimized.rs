//! Line-driven kernels on transposed layouts.
//!
//! Work items are vertical voxel lines `(i, j)`. In the `[x][y][z]` volume a
//! line is one contiguous run of `nz` values, and its projection onto a
//! `[w][h]` detector image is a contiguous constant-`u` strip, which keeps
//! every inner loop unit-strided.

use std::marker::PhantomData;
use std::thread;

use super::chunk_len;
use super::counters::Tally;
use super::KernelVariant;
use crate::geometry::ProjectionMatrix;
use crate::interp::{
    bilinear_transposed_unchecked as bilinear_t, blend_lines, dot4, sample_line_unchecked, taps_in_range, trunc_index, Grid,
};
use crate::scalar::Scalar;
use crate::tensors::{make_ij_list, ProjectionStack, Volume};

/// Hands out disjoint `nz`-long columns of a transposed volume to workers.
struct Columns<'a, T> {
    ptr: *mut T,
    count: usize,
    len: usize,
    _volume: PhantomData<&'a mut [T]>,
}

// SAFETY: columns are only reached through `column`, whose contract forbids
// handing the same column out twice.
unsafe impl<T: Send> Send for Columns<'_, T> {}
unsafe impl<T: Send> Sync for Columns<'_, T> {}

impl<'a, T> Columns<'a, T> {
    fn new(data: &'a mut [T], len: usize) -> Self {
        Self {
            ptr: data.as_mut_ptr(),
            count: data.len() / len.max(1),
            len,
            _volume: PhantomData,
        }
    }

    /// # Safety
    /// Each index may be requested at most once while `self` is alive.
    #[allow(clippy::mut_from_ref)]
    unsafe fn column(&self, index: usize) -> &'a mut [T] {
        assert!(index < self.count, "column {index} out of {}", self.count);
        std::slice::from_raw_parts_mut(self.ptr.add(index * self.len), self.len)
    }
}

pub(super) fn run<T: Scalar, C: Tally>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    vol: &mut Volume<T>,
    variant: KernelVariant,
    nb: usize,
    threads: usize,
) -> C {
    let (nx, ny, nz) = vol.dims();
    let ij = make_ij_list(nx, ny).expect("volume dimensions validated");
    let ctx = Context {
        img,
        mats,
        nh: img.nh(),
        nw: img.nw(),
        nz,
        nb,
        variant,
    };
    let columns = Columns::new(vol.data_mut(), nz);
    let pairs = ij.pairs();
    let per_worker = chunk_len(pairs.len(), threads);

    let process = |chunk: &[(usize, usize)]| -> C {
        let mut worker = Worker::<T, C>::new(&ctx);
        for &(i, j) in chunk {
            // SAFETY: the ij list enumerates every (i, j) exactly once and the
            // chunks partition it, so each column is requested once.
            let col = unsafe { columns.column(i * ny + j) };
            worker.line(i, j, col);
        }
        worker.tally
    };

    if per_worker >= pairs.len() {
        return process(pairs);
    }
    thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(per_worker)
            .map(|chunk| scope.spawn(|| process(chunk)))
            .collect();
        let mut total = C::default();
        for h in handles {
            total.merge(h.join().expect("kernel worker panicked"));
        }
        total
    })
}

struct Context<'a, T> {
    img: &'a ProjectionStack<T>,
    mats: &'a [ProjectionMatrix<T>],
    nh: usize,
    nw: usize,
    nz: usize,
    nb: usize,
    variant: KernelVariant,
}

impl<'a, T: Scalar> Context<'a, T> {
    /// Transposed image `s` as a `nw x nh` grid.
    #[inline(always)]
    fn grid(&self, s: usize) -> Grid<'a, T> {
        Grid::from_parts(self.img.image(s), self.nw, self.nh)
    }
}

/// Worker-local scratch: shared terms, sub-line buffers, accumulators.
struct Worker<'c, 'a, T, C> {
    ctx: &'c Context<'a, T>,
    /// `1/z` per projection in the batch.
    f: Vec<T>,
    /// `f * f`.
    w: Vec<T>,
    /// Projected `u` per projection in the batch.
    x: Vec<T>,
    /// Whether both `u` taps are on the detector.
    valid: Vec<bool>,
    /// One sub-line per projection (`Subline`), or two (`SublinePrefetch`).
    lines: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    tally: C,
}

impl<'c, 'a, T: Scalar, C: Tally> Worker<'c, 'a, T, C> {
    fn new(ctx: &'c Context<'a, T>) -> Self {
        let nb = ctx.nb;
        let lines = match ctx.variant {
            KernelVariant::Subline => nb * ctx.nh,
            KernelVariant::SublinePrefetch => 2 * ctx.nh,
            _ => 0,
        };
        let half = if ctx.variant == KernelVariant::SublinePrefetch {
            ctx.nz / 2
        } else {
            0
        };
        Self {
            ctx,
            f: vec![T::zero(); nb],
            w: vec![T::zero(); nb],
            x: vec![T::zero(); nb],
            valid: vec![false; nb],
            lines: vec![T::zero(); lines],
            lower: vec![T::zero(); half],
            upper: vec![T::zero(); half],
            tally: C::default(),
        }
    }

    fn line(&mut self, i: usize, j: usize, col: &mut [T]) {
        let (it, jt) = (T::of_usize(i), T::of_usize(j));
        let np = self.ctx.img.np();
        for base in (0..np).step_by(self.ctx.nb) {
            match self.ctx.variant {
                KernelVariant::Transpose => self.transpose_batch(it, jt, base, col),
                KernelVariant::Share => {
                    self.shared_terms(it, jt, base);
                    self.share_batch(it, jt, base, col);
                }
                KernelVariant::Symmetry => {
                    self.shared_terms(it, jt, base);
                    self.symmetry_batch(it, jt, base, col);
                }
                KernelVariant::Subline => {
                    self.shared_terms(it, jt, base);
                    self.subline_batch(it, jt, base, col);
                }
                KernelVariant::SublinePrefetch => {
                    self.shared_terms(it, jt, base);
                    self.prefetch_batch(it, jt, base, col);
                }
                KernelVariant::Baseline => unreachable!("baseline runs on natural layouts"),
            }
        }
    }

    /// F, W and X for the batch starting at `base`; `u` and `z` do not
    /// depend on `k`, so they are evaluated at `k = 0`.
    fn shared_terms(&mut self, it: T, jt: T, base: usize) {
        let vec = [it, jt, T::zero(), T::one()];
        let nw = self.ctx.nw;
        for t in 0..self.ctx.nb {
            let rows = &self.ctx.mats[base + t].rows;
            let f = T::one() / dot4(&rows[2], &vec);
            self.f[t] = f;
            self.w[t] = f * f;
            self.x[t] = dot4(&rows[0], &vec) * f;
            self.valid[t] = taps_in_range(self.x[t], nw);
        }
        self.tally.dots(2 * self.ctx.nb as u64);
    }

    /// Transposed layouts only: every coordinate recomputed per voxel.
    fn transpose_batch(&mut self, it: T, jt: T, base: usize, col: &mut [T]) {
        let ctx = self.ctx;
        let (nh, nw) = (ctx.nh, ctx.nw);
        for (k, voxel) in col.iter_mut().enumerate() {
            let vec = [it, jt, T::of_usize(k), T::one()];
            let mut sum = *voxel;
            for s in base..base + ctx.nb {
                let rows = &ctx.mats[s].rows;
                let z = dot4(&rows[2], &vec);
                let f = T::one() / z;
                let x = dot4(&rows[0], &vec) * f;
                let y = dot4(&rows[1], &vec) * f;
                self.tally.dots(3);
                if taps_in_range(x, nw) && taps_in_range(y, nh) {
                    // SAFETY: both coordinates were just range-checked.
                    sum = sum + unsafe { bilinear_t(ctx.grid(s), x, y) } * (f * f);
                    self.tally.mixes(3);
                    self.tally.proj_words(4);
                }
            }
            *voxel = sum;
            self.tally.vol_words(2);
        }
    }

    fn share_batch(&mut self, it: T, jt: T, base: usize, col: &mut [T]) {
        let ctx = self.ctx;
        let nh = ctx.nh;
        for (k, voxel) in col.iter_mut().enumerate() {
            let vec = [it, jt, T::of_usize(k), T::one()];
            let mut sum = *voxel;
            for t in 0..ctx.nb {
                let y = dot4(&ctx.mats[base + t].rows[1], &vec) * self.f[t];
                self.tally.dots(1);
                if self.valid[t] && taps_in_range(y, nh) {
                    // SAFETY: `valid[t]` and the guard above bound both taps.
                    sum = sum + unsafe { bilinear_t(ctx.grid(base + t), self.x[t], y) } * self.w[t];
                    self.tally.mixes(3);
                    self.tally.proj_words(4);
                }
            }
            *voxel = sum;
            self.tally.vol_words(2);
        }
    }

    fn symmetry_batch(&mut self, it: T, jt: T, base: usize, col: &mut [T]) {
        let ctx = self.ctx;
        let (nh, nz) = (ctx.nh, ctx.nz);
        let top = T::of_usize(nh - 1);
        for k in 0..nz / 2 {
            let vec = [it, jt, T::of_usize(k), T::one()];
            let mut sum = col[k];
            let mut mirror_sum = col[nz - 1 - k];
            for t in 0..ctx.nb {
                let y = dot4(&ctx.mats[base + t].rows[1], &vec) * self.f[t];
                self.tally.dots(1);
                if !self.valid[t] {
                    continue;
                }
                let grid = ctx.grid(base + t);
                // SAFETY: each unchecked sample follows its range guard.
                if taps_in_range(y, nh) {
                    sum = sum + unsafe { bilinear_t(grid, self.x[t], y) } * self.w[t];
                    self.tally.mixes(3);
                    self.tally.proj_words(4);
                }
                let ym = top - y;
                if taps_in_range(ym, nh) {
                    mirror_sum = mirror_sum + unsafe { bilinear_t(grid, self.x[t], ym) } * self.w[t];
                    self.tally.mixes(3);
                    self.tally.proj_words(4);
                }
            }
            col[k] = sum;
            col[nz - 1 - k] = mirror_sum;
            self.tally.vol_words(4);
        }
    }

    /// Blends detector lines `trunc(X)` and `trunc(X) + 1` of projection
    /// `s` into `out`.
    #[inline(always)]
    fn build_line(ctx: &Context<'_, T>, tally: &mut C, s: usize, x: T, out: &mut [T]) {
        let nu = trunc_index(x);
        let grid = ctx.grid(s);
        blend_lines(grid.row(nu), grid.row(nu + 1), x - T::of_usize(nu), out);
        tally.subline_build();
        tally.mixes(ctx.nh as u64);
        tally.proj_words(2 * ctx.nh as u64);
    }

    fn subline_batch(&mut self, it: T, jt: T, base: usize, col: &mut [T]) {
        let ctx = self.ctx;
        let (nh, nz) = (ctx.nh, ctx.nz);
        for t in 0..ctx.nb {
            if self.valid[t] {
                let out = &mut self.lines[t * nh..(t + 1) * nh];
                Self::build_line(ctx, &mut self.tally, base + t, self.x[t], out);
            }
        }
        let top = T::of_usize(nh - 1);
        for k in 0..nz / 2 {
            let vec = [it, jt, T::of_usize(k), T::one()];
            let mut sum = col[k];
            let mut mirror_sum = col[nz - 1 - k];
            for t in 0..ctx.nb {
                let y = dot4(&ctx.mats[base + t].rows[1], &vec) * self.f[t];
                self.tally.dots(1);
                if !self.valid[t] {
                    continue;
                }
                let line = &self.lines[t * nh..(t + 1) * nh];
                // SAFETY: guarded by `taps_in_range` on a line of `nh` values.
                if taps_in_range(y, nh) {
                    sum = sum + unsafe { sample_line_unchecked(line, y) } * self.w[t];
                    self.tally.mixes(1);
                }
                let ym = top - y;
                if taps_in_range(ym, nh) {
                    mirror_sum = mirror_sum + unsafe { sample_line_unchecked(line, ym) } * self.w[t];
                    self.tally.mixes(1);
                }
            }
            col[k] = sum;
            col[nz - 1 - k] = mirror_sum;
            self.tally.vol_words(4);
        }
    }

    /// Sub-line kernel with two line buffers: the line for projection
    /// `t + 1` is built before projection `t` is consumed, so each step's
    /// loads are issued ahead of the work that needs them. Per-voxel
    /// arithmetic is identical to [`Self::subline_batch`].
    fn prefetch_batch(&mut self, it: T, jt: T, base: usize, col: &mut [T]) {
        let ctx = self.ctx;
        let (nh, nz, nb) = (ctx.nh, ctx.nz, ctx.nb);
        let half = nz / 2;
        let top = T::of_usize(nh - 1);

        for k in 0..half {
            self.lower[k] = col[k];
            self.upper[k] = col[nz - 1 - k];
        }

        let (front, back) = self.lines.split_at_mut(nh);
        let mut buffers = [front, back];
        if self.valid[0] {
            Self::build_line(ctx, &mut self.tally, base, self.x[0], buffers[0]);
        }
        for t in 0..nb {
            let (cur, next) = if t % 2 == 0 {
                let [a, b] = &mut buffers;
                (&**a, &mut **b)
            } else {
                let [a, b] = &mut buffers;
                (&**b, &mut **a)
            };
            if t + 1 < nb && self.valid[t + 1] {
                Self::build_line(ctx, &mut self.tally, base + t + 1, self.x[t + 1], next);
            }

            let row_v = &ctx.mats[base + t].rows[1];
            let (f, w) = (self.f[t], self.w[t]);
            if !self.valid[t] {
                self.tally.dots(half as u64);
                continue;
            }
            let (lower, upper) = (&mut self.lower[..half], &mut self.upper[..half]);
            let mut kt = T::zero();
            for (lo, up) in lower.iter_mut().zip(upper.iter_mut()) {
                let y = dot4(row_v, &[it, jt, kt, T::one()]) * f;
                kt = kt + T::one();
                // SAFETY: both samples are guarded by `taps_in_range` on a
                // line of `nh` values.
                if taps_in_range(y, nh) {
                    *lo = *lo + unsafe { sample_line_unchecked(cur, y) } * w;
                    self.tally.mixes(1);
                }
                let ym = top - y;
                if taps_in_range(ym, nh) {
                    *up = *up + unsafe { sample_line_unchecked(cur, ym) } * w;
                    self.tally.mixes(1);
                }
            }
            self.tally.dots(half as u64);
        }

        for k in 0..half {
            col[k] = self.lower[k];
            col[nz - 1 - k] = self.upper[k];
        }
        self.tally.vol_words(2 * nz as u64);
    }
}
