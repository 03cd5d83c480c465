//! Dense projection and volume containers with natural and transposed
//! layouts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Memory order of a container.
///
/// Projections: `Natural` is `[s][h][w]`, `Transposed` is `[s][w][h]`.
/// Volumes: `Natural` is `[z][y][x]`, `Transposed` is `[x][y][z]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Layout {
    Natural,
    Transposed,
}

impl Layout {
    pub fn flipped(self) -> Self {
        match self {
            Layout::Natural => Layout::Transposed,
            Layout::Transposed => Layout::Natural,
        }
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= isize::MAX as usize)
        .ok_or_else(|| Error::DimensionOverflow(dims.to_vec()))
}

fn expect_layout(found: Layout, expected: Layout) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::LayoutMismatch { expected, found })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionStack<T> {
    data: Vec<T>,
    np: usize,
    nh: usize,
    nw: usize,
    layout: Layout,
}

impl<T: Scalar> ProjectionStack<T> {
    pub fn zeros(np: usize, nh: usize, nw: usize, layout: Layout) -> Result<Self> {
        if np == 0 {
            return Err(Error::EmptyStack);
        }
        let len = checked_len(&[np, nh, nw])?;
        Ok(Self {
            data: vec![T::zero(); len],
            np,
            nh,
            nw,
            layout,
        })
    }

    pub fn from_vec(data: Vec<T>, np: usize, nh: usize, nw: usize, layout: Layout) -> Result<Self> {
        if np == 0 {
            return Err(Error::EmptyStack);
        }
        let expected = checked_len(&[np, nh, nw])?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            data,
            np,
            nh,
            nw,
            layout,
        })
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn nw(&self) -> usize {
        self.nw
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Flat offset of detector pixel `(h, w)` of projection `s`.
    #[inline]
    pub fn index(&self, s: usize, h: usize, w: usize) -> usize {
        let plane = self.nh * self.nw;
        match self.layout {
            Layout::Natural => s * plane + h * self.nw + w,
            Layout::Transposed => s * plane + w * self.nh + h,
        }
    }

    #[inline]
    pub fn get(&self, s: usize, h: usize, w: usize) -> T {
        self.data[self.index(s, h, w)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, h: usize, w: usize, value: T) {
        let idx = self.index(s, h, w);
        self.data[idx] = value;
    }

    /// The `s`-th detector image in this stack's layout.
    #[inline]
    pub fn image(&self, s: usize) -> &[T] {
        let plane = self.nh * self.nw;
        &self.data[s * plane..(s + 1) * plane]
    }

    pub fn image_mut(&mut self, s: usize) -> &mut [T] {
        let plane = self.nh * self.nw;
        &mut self.data[s * plane..(s + 1) * plane]
    }

    /// Same values in the other layout. An involution.
    pub fn transposed(&self) -> Self {
        let (rows, cols) = match self.layout {
            Layout::Natural => (self.nh, self.nw),
            Layout::Transposed => (self.nw, self.nh),
        };
        let mut data = vec![T::zero(); self.data.len()];
        let plane = rows * cols;
        for (src, dst) in self.data.chunks_exact(plane).zip(data.chunks_exact_mut(plane)) {
            transpose_plane(src, dst, rows, cols);
        }
        Self {
            data,
            np: self.np,
            nh: self.nh,
            nw: self.nw,
            layout: self.layout.flipped(),
        }
    }
}

/// `dst[c][r] = src[r][c]` for a `rows x cols` plane, in cache tiles.
fn transpose_plane<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// NATURAL `[s][h][w]` to TRANSPOSED `[s][w][h]`.
pub fn transpose_projections<T: Scalar>(p: &ProjectionStack<T>) -> Result<ProjectionStack<T>> {
    if p.np == 0 {
        return Err(Error::EmptyStack);
    }
    expect_layout(p.layout, Layout::Natural)?;
    Ok(p.transposed())
}

/// TRANSPOSED back to NATURAL.
pub fn restore_projections<T: Scalar>(p: &ProjectionStack<T>) -> Result<ProjectionStack<T>> {
    expect_layout(p.layout, Layout::Transposed)?;
    Ok(p.transposed())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    data: Vec<T>,
    nx: usize,
    ny: usize,
    nz: usize,
    layout: Layout,
}

impl<T: Scalar> Volume<T> {
    pub fn zeros(nx: usize, ny: usize, nz: usize, layout: Layout) -> Result<Self> {
        let len = checked_len(&[nx, ny, nz])?;
        Ok(Self {
            data: vec![T::zero(); len],
            nx,
            ny,
            nz,
            layout,
        })
    }

    pub fn from_vec(data: Vec<T>, nx: usize, ny: usize, nz: usize, layout: Layout) -> Result<Self> {
        let expected = checked_len(&[nx, ny, nz])?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            data,
            nx,
            ny,
            nz,
            layout,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        match self.layout {
            Layout::Natural => (z * self.ny + y) * self.nx + x,
            Layout::Transposed => (x * self.ny + y) * self.nz + z,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let idx = self.index(x, y, z);
        self.data[idx] = value;
    }

    /// Same values in the other layout. An involution.
    pub fn transposed(&self) -> Self {
        let mut out = Self {
            data: vec![T::zero(); self.data.len()],
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            layout: self.layout.flipped(),
        };
        // Both layouts keep y in the middle, so each y-plane pair is a 2-D
        // transpose between strided views.
        let (outer, inner) = match self.layout {
            Layout::Natural => (self.nz, self.nx),
            Layout::Transposed => (self.nx, self.nz),
        };
        let ny = self.ny;
        for a in 0..outer {
            for y in 0..ny {
                let src = (a * ny + y) * inner;
                for b in 0..inner {
                    out.data[(b * ny + y) * outer + a] = self.data[src + b];
                }
            }
        }
        out
    }
}

/// NATURAL `[z][y][x]` to TRANSPOSED `[x][y][z]`.
pub fn transpose_volume<T: Scalar>(v: &Volume<T>) -> Result<Volume<T>> {
    expect_layout(v.layout, Layout::Natural)?;
    Ok(v.transposed())
}

/// TRANSPOSED back to NATURAL.
pub fn restore_volume<T: Scalar>(v: &Volume<T>) -> Result<Volume<T>> {
    expect_layout(v.layout, Layout::Transposed)?;
    Ok(v.transposed())
}

/// Work list of vertical voxel lines, `j` outer and `i` inner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IJList {
    pairs: Vec<(usize, usize)>,
}

impl IJList {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn make_ij_list(nx: usize, ny: usize) -> Result<IJList> {
    if nx == 0 || ny == 0 {
        return Err(Error::DimensionMismatch(format!("ij list needs nx, ny >= 1, got {nx}x{ny}")));
    }
    checked_len(&[nx, ny])?;
    let pairs = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).collect();
    Ok(IJList { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transposes_small_stack() {
        let p = ProjectionStack::from_vec(vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0], 1, 2, 3, Layout::Natural)
            .unwrap();
        let t = transpose_projections(&p).unwrap();
        assert_eq!(t.layout(), Layout::Transposed);
        assert_eq!(t.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        for h in 0..2 {
            for w in 0..3 {
                assert_eq!(t.get(0, h, w), p.get(0, h, w));
            }
        }
    }

    #[test]
    fn projection_layout_errors() {
        assert!(matches!(
            ProjectionStack::<f32>::from_vec(vec![], 0, 2, 3, Layout::Natural),
            Err(Error::EmptyStack)
        ));
        assert!(matches!(
            ProjectionStack::<f32>::zeros(0, 2, 2, Layout::Natural),
            Err(Error::EmptyStack)
        ));
        let t = ProjectionStack::<f32>::zeros(1, 2, 2, Layout::Transposed).unwrap();
        assert!(matches!(
            transpose_projections(&t),
            Err(Error::LayoutMismatch { .. })
        ));
        assert!(ProjectionStack::<f32>::from_vec(vec![0.0; 5], 1, 2, 3, Layout::Natural).is_err());
    }

    #[test]
    fn transposes_tiny_volume() {
        let v = Volume::from_vec(vec![7.0f32, 9.0], 1, 1, 2, Layout::Natural).unwrap();
        let t = transpose_volume(&v).unwrap();
        assert_eq!(t.data(), &[7.0, 9.0]);
        assert_eq!(t.get(0, 0, 1), 9.0);

        let v = Volume::from_vec(vec![1.0f32, 2.0], 2, 1, 1, Layout::Natural).unwrap();
        let t = transpose_volume(&v).unwrap();
        assert_eq!(t.get(1, 0, 0), 2.0);
        assert!(restore_volume(&v).is_err());
    }

    #[test]
    fn volume_overflow_is_rejected() {
        assert!(matches!(
            Volume::<f32>::zeros(usize::MAX, 2, 2, Layout::Natural),
            Err(Error::DimensionOverflow(_))
        ));
        assert!(matches!(
            Volume::<f32>::zeros(1 << 40, 1 << 40, 1 << 40, Layout::Natural),
            Err(Error::DimensionOverflow(_))
        ));
    }

    #[test]
    fn ij_list_order() {
        assert_eq!(make_ij_list(2, 2).unwrap().pairs(), &[(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(make_ij_list(1, 3).unwrap().pairs(), &[(0, 0), (0, 1), (0, 2)]);
        assert_eq!(make_ij_list(7, 5).unwrap().len(), 35);
        assert!(make_ij_list(0, 3).is_err());
    }

    proptest! {
        #[test]
        fn projection_transpose_is_involution(np in 1usize..4, nh in 1usize..40, nw in 1usize..40, seed in any::<u32>()) {
            let data: Vec<f32> = (0..np * nh * nw).map(|n| ((n as u32).wrapping_mul(2654435761) ^ seed) as f32).collect();
            let p = ProjectionStack::from_vec(data, np, nh, nw, Layout::Natural).unwrap();
            let t = transpose_projections(&p).unwrap();
            for s in 0..np { for h in 0..nh { for w in 0..nw {
                prop_assert_eq!(t.get(s, h, w).to_bits(), p.get(s, h, w).to_bits());
            }}}
            prop_assert_eq!(restore_projections(&t).unwrap(), p.clone());
            prop_assert_eq!(t.transposed(), p);
        }

        #[test]
        fn volume_transpose_is_involution(nx in 1usize..12, ny in 1usize..12, nz in 1usize..12) {
            let data: Vec<f32> = (0..nx * ny * nz).map(|n| n as f32 * 0.5).collect();
            let v = Volume::from_vec(data, nx, ny, nz, Layout::Natural).unwrap();
            let t = transpose_volume(&v).unwrap();
            for z in 0..nz { for y in 0..ny { for x in 0..nx {
                prop_assert_eq!(t.get(x, y, z), v.get(x, y, z));
            }}}
            let mut a: Vec<u32> = v.data().iter().map(|f| f.to_bits()).collect();
            let mut b: Vec<u32> = t.data().iter().map(|f| f.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
            prop_assert_eq!(t.transposed(), v);
        }
    }
}
