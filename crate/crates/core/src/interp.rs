//! Interpolation primitives: `mix`, `dot4`, point bilinear sampling and the
//! two-pass sub-line scheme.
//!
//! The sub-line scheme blends two adjacent constant-`u` detector lines of a
//! transposed projection into one buffer, then samples that buffer linearly
//! along `v`. It performs exactly the operations of [`bilinear`] in the same
//! order, so the two agree bitwise; only the memory access pattern differs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Linear blend `x * (1 - a) + y * a`.
#[inline(always)]
pub fn mix<T: Scalar>(x: T, y: T, a: T) -> T {
    x * (T::one() - a) + y * a
}

/// Homogeneous inner product. The fourth term is `v0[3]` alone; callers pass
/// `v1[3] == 1`.
#[inline(always)]
pub fn dot4<T: Scalar>(v0: &[T; 4], v1: &[T; 4]) -> T {
    v0[0] * v1[0] + v0[1] * v1[1] + v0[2] * v1[2] + v0[3]
}

/// Round toward zero, like a C `(int)` cast. Callers guarantee `c >= 0`.
#[inline(always)]
pub(crate) fn trunc_index<T: Scalar>(c: T) -> usize {
    c.to_usize().unwrap_or(usize::MAX)
}

/// Whether a sample coordinate keeps both interpolation taps inside a line of
/// `n` pixels, i.e. `floor(c)` lies in `[0, n - 2]`. False for NaN.
#[inline(always)]
pub(crate) fn taps_in_range<T: Scalar>(c: T, n: usize) -> bool {
    c >= T::zero() && c < T::of_usize(n - 1)
}

/// Borrowed row-major 2-D grid.
#[derive(Clone, Copy, Debug)]
pub struct Grid<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
}

impl<'a, T: Scalar> Grid<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    /// Kernel-side constructor; the caller has already validated the shape.
    #[inline(always)]
    pub(crate) fn from_parts(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// # Safety
    /// `r < rows` and `c < cols`.
    #[inline(always)]
    unsafe fn at_unchecked(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        *self.data.get_unchecked(r * self.cols + c)
    }

    /// Row `r` as a contiguous slice.
    #[inline(always)]
    pub fn row(&self, r: usize) -> &'a [T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Bilinear sample of a natural-layout image at column `x`, row `y`.
///
/// Blends along `x` on both rows, then along `y`. Panics if a tap falls
/// outside the grid; see [`try_bilinear`].
#[inline(always)]
pub fn bilinear<T: Scalar>(img: Grid<'_, T>, x: T, y: T) -> T {
    let nx = trunc_index(x);
    let ny = trunc_index(y);
    let dx = x - T::of_usize(nx);
    let s0 = mix(img.at(ny, nx), img.at(ny, nx + 1), dx);
    let s1 = mix(img.at(ny + 1, nx), img.at(ny + 1, nx + 1), dx);
    mix(s0, s1, y - T::of_usize(ny))
}

/// [`bilinear`] without bounds checks.
///
/// # Safety
/// `taps_in_range(x, cols)` and `taps_in_range(y, rows)` must hold.
#[inline(always)]
pub(crate) unsafe fn bilinear_unchecked<T: Scalar>(img: Grid<'_, T>, x: T, y: T) -> T {
    let nx = trunc_index(x);
    let ny = trunc_index(y);
    let dx = x - T::of_usize(nx);
    let s0 = mix(img.at_unchecked(ny, nx), img.at_unchecked(ny, nx + 1), dx);
    let s1 = mix(img.at_unchecked(ny + 1, nx), img.at_unchecked(ny + 1, nx + 1), dx);
    mix(s0, s1, y - T::of_usize(ny))
}

pub fn try_bilinear<T: Scalar>(img: Grid<'_, T>, x: T, y: T) -> Result<T> {
    if img.cols < 2 || img.rows < 2 || !taps_in_range(x, img.cols) || !taps_in_range(y, img.rows) {
        return Err(Error::OutOfBounds {
            x: x.as_f64(),
            y: y.as_f64(),
            rows: img.rows,
            cols: img.cols,
        });
    }
    Ok(bilinear(img, x, y))
}

/// Bilinear sample of a transposed image (rows are detector columns `u`,
/// columns are detector rows `v`) at detector coordinate `(u, v)`.
///
/// Same arithmetic as [`bilinear`] on the untransposed image.
#[inline(always)]
pub fn bilinear_transposed<T: Scalar>(img_t: Grid<'_, T>, u: T, v: T) -> T {
    let nu = trunc_index(u);
    let nv = trunc_index(v);
    let du = u - T::of_usize(nu);
    let s0 = mix(img_t.at(nu, nv), img_t.at(nu + 1, nv), du);
    let s1 = mix(img_t.at(nu, nv + 1), img_t.at(nu + 1, nv + 1), du);
    mix(s0, s1, v - T::of_usize(nv))
}

/// [`bilinear_transposed`] without bounds checks.
///
/// # Safety
/// `taps_in_range(u, rows)` and `taps_in_range(v, cols)` must hold.
#[inline(always)]
pub(crate) unsafe fn bilinear_transposed_unchecked<T: Scalar>(img_t: Grid<'_, T>, u: T, v: T) -> T {
    let nu = trunc_index(u);
    let nv = trunc_index(v);
    let du = u - T::of_usize(nu);
    let s0 = mix(img_t.at_unchecked(nu, nv), img_t.at_unchecked(nu + 1, nv), du);
    let s1 = mix(img_t.at_unchecked(nu, nv + 1), img_t.at_unchecked(nu + 1, nv + 1), du);
    mix(s0, s1, v - T::of_usize(nv))
}

/// Cached blend of two constant-`u` lines of a transposed projection.
#[derive(Clone, Debug, PartialEq)]
pub struct SublineBuffer<T> {
    values: Vec<T>,
    dx: T,
}

impl<T: Scalar> SublineBuffer<T> {
    /// Zeroed buffer for a detector of height `nh`.
    pub fn new(nh: usize) -> Self {
        Self {
            values: vec![T::zero(); nh],
            dx: T::zero(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Blend fraction of the last build.
    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `out[m] = mix(row0[m], row1[m], dx)`. Dependence-free and unit-strided.
#[inline(always)]
pub(crate) fn blend_lines<T: Scalar>(row0: &[T], row1: &[T], dx: T, out: &mut [T]) {
    let n = out.len();
    let (row0, row1) = (&row0[..n], &row1[..n]);
    for ((o, &a), &b) in out.iter_mut().zip(row0).zip(row1) {
        *o = mix(a, b, dx);
    }
}

/// Linear sample of a line at `y`; the taps `trunc(y)` and `trunc(y) + 1`
/// must be in range.
#[inline(always)]
pub(crate) fn sample_line<T: Scalar>(line: &[T], y: T) -> T {
    let ny = trunc_index(y);
    mix(line[ny], line[ny + 1], y - T::of_usize(ny))
}

/// [`sample_line`] without bounds checks, for the kernels' inner loops.
///
/// # Safety
/// `taps_in_range(y, line.len())` must hold.
#[inline(always)]
pub(crate) unsafe fn sample_line_unchecked<T: Scalar>(line: &[T], y: T) -> T {
    let ny = trunc_index(y);
    debug_assert!(ny + 1 < line.len());
    mix(*line.get_unchecked(ny), *line.get_unchecked(ny + 1), y - T::of_usize(ny))
}

pub fn build_subline<T: Scalar>(
    row0: &[T],
    row1: &[T],
    dx: T,
    out: &mut SublineBuffer<T>,
) -> Result<()> {
    let n = out.values.len();
    if row0.len() != n || row1.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: if row0.len() != n { row0.len() } else { row1.len() },
        });
    }
    blend_lines(row0, row1, dx, &mut out.values);
    out.dx = dx;
    Ok(())
}

/// Sample a sub-line buffer at `y`. Panics when `trunc(y) > nh - 2`; see
/// [`try_sample_subline`].
#[inline]
pub fn sample_subline<T: Scalar>(buf: &SublineBuffer<T>, y: T) -> T {
    sample_line(&buf.values, y)
}

pub fn try_sample_subline<T: Scalar>(buf: &SublineBuffer<T>, y: T) -> Result<T> {
    let n = buf.values.len();
    if n < 2 || !taps_in_range(y, n) {
        return Err(Error::OutOfBounds {
            x: 0.0,
            y: y.as_f64(),
            rows: n,
            cols: 1,
        });
    }
    Ok(sample_line(&buf.values, y))
}
