//! Operation and memory-traffic accounting.
//!
//! Kernels are generic over a [`Tally`]; the [`NoTally`] instantiation
//! compiles the bookkeeping away, the [`OpCounters`] one records every dot
//! product, blend and word of traffic the kernel actually performs.
//! [`count_ops`] gives the same totals in closed form for problems whose
//! voxels all project inside the detector.

use serde::{Deserialize, Serialize};

use super::KernelVariant;

/// Exact tallies for one kernel run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// `dot4` invocations.
    pub dot_ops: u64,
    /// `f32` words read from plus written to the volume.
    pub vol_word_accesses: u64,
    /// `f32` words read from the projections.
    pub proj_word_accesses: u64,
    /// `mix` invocations.
    pub interp_ops: u64,
    /// Sub-line buffers built.
    pub subline_builds: u64,
}

impl OpCounters {
    pub fn total_words(&self) -> u64 {
        self.vol_word_accesses + self.proj_word_accesses
    }
}

/// Event sink threaded through the kernels.
pub trait Tally: Default + Send {
    fn dots(&mut self, n: u64);
    fn mixes(&mut self, n: u64);
    fn vol_words(&mut self, n: u64);
    fn proj_words(&mut self, n: u64);
    fn subline_build(&mut self);
    fn merge(&mut self, other: Self);
}

/// Discards everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoTally;

impl Tally for NoTally {
    #[inline(always)]
    fn dots(&mut self, _: u64) {}
    #[inline(always)]
    fn mixes(&mut self, _: u64) {}
    #[inline(always)]
    fn vol_words(&mut self, _: u64) {}
    #[inline(always)]
    fn proj_words(&mut self, _: u64) {}
    #[inline(always)]
    fn subline_build(&mut self) {}
    #[inline(always)]
    fn merge(&mut self, _: Self) {}
}

impl Tally for OpCounters {
    #[inline(always)]
    fn dots(&mut self, n: u64) {
        self.dot_ops += n;
    }
    #[inline(always)]
    fn mixes(&mut self, n: u64) {
        self.interp_ops += n;
    }
    #[inline(always)]
    fn vol_words(&mut self, n: u64) {
        self.vol_word_accesses += n;
    }
    #[inline(always)]
    fn proj_words(&mut self, n: u64) {
        self.proj_word_accesses += n;
    }
    #[inline(always)]
    fn subline_build(&mut self) {
        self.subline_builds += 1;
    }
    fn merge(&mut self, other: Self) {
        self.dot_ops += other.dot_ops;
        self.vol_word_accesses += other.vol_word_accesses;
        self.proj_word_accesses += other.proj_word_accesses;
        self.interp_ops += other.interp_ops;
        self.subline_builds += other.subline_builds;
    }
}

/// Sizes of a reconstruction problem `nw x nh x np => nx x ny x nz`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDims {
    pub np: usize,
    pub nh: usize,
    pub nw: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl ProblemDims {
    /// Voxel updates, `np * nx * ny * nz`.
    pub fn updates(&self) -> u64 {
        self.np as u64 * self.nx as u64 * self.ny as u64 * self.nz as u64
    }

    /// (vertical line, projection) pairs, `np * nx * ny`.
    pub fn line_pairs(&self) -> u64 {
        self.np as u64 * self.nx as u64 * self.ny as u64
    }
}

/// Closed-form counts. `nb` is ignored for the baseline, which updates the
/// volume once per projection; odd `nz` is only meaningful for variants
/// without the symmetry shortcut.
pub fn count_ops(variant: KernelVariant, dims: ProblemDims, nb: usize) -> OpCounters {
    let updates = dims.updates();
    let pairs = dims.line_pairs();
    let nz = dims.nz as u64;
    let nh = dims.nh as u64;
    let nb = nb.max(1) as u64;
    let batched_vol = 2 * updates / nb;
    match variant {
        KernelVariant::Baseline => OpCounters {
            dot_ops: 3 * updates,
            vol_word_accesses: 2 * updates,
            proj_word_accesses: 4 * updates,
            interp_ops: 3 * updates,
            subline_builds: 0,
        },
        KernelVariant::Transpose => OpCounters {
            dot_ops: 3 * updates,
            vol_word_accesses: batched_vol,
            proj_word_accesses: 4 * updates,
            interp_ops: 3 * updates,
            subline_builds: 0,
        },
        KernelVariant::Share => OpCounters {
            dot_ops: pairs * (2 + nz),
            vol_word_accesses: batched_vol,
            proj_word_accesses: 4 * updates,
            interp_ops: 3 * updates,
            subline_builds: 0,
        },
        KernelVariant::Symmetry => OpCounters {
            dot_ops: pairs * (2 + nz / 2),
            vol_word_accesses: batched_vol,
            proj_word_accesses: 4 * updates,
            interp_ops: 3 * updates,
            subline_builds: 0,
        },
        KernelVariant::Subline | KernelVariant::SublinePrefetch => OpCounters {
            dot_ops: pairs * (2 + nz / 2),
            vol_word_accesses: batched_vol,
            proj_word_accesses: 2 * nh * pairs,
            interp_ops: pairs * (nh + nz),
            subline_builds: pairs,
        },
    }
}

/// Fraction of dot operations removed relative to the baseline.
pub fn dot_reduction(variant: KernelVariant, dims: ProblemDims) -> f64 {
    let base = count_ops(KernelVariant::Baseline, dims, 1).dot_ops as f64;
    1.0 - count_ops(variant, dims, 1).dot_ops as f64 / base
}

/// The published asymptotic estimate of the dot reduction, `(5 - 2/nz) / 6`.
pub fn published_dot_reduction(nz: usize) -> f64 {
    (5.0 - 2.0 / nz as f64) / 6.0
}

/// Analytic memory-traffic model in `f32` words: four projection reads per
/// update plus one volume access per update and batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub proj_words: f64,
    pub vol_words: f64,
}

impl TrafficModel {
    pub fn new(dims: ProblemDims, nb: usize) -> Self {
        let updates = dims.updates() as f64;
        Self {
            proj_words: 4.0 * updates,
            vol_words: updates / nb.max(1) as f64,
        }
    }

    /// `N_mem = (4 + 1/nb) * np * nx * ny * nz`.
    pub fn total(&self) -> f64 {
        self.proj_words + self.vol_words
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, np: usize) -> ProblemDims {
        ProblemDims {
            np,
            nh: n,
            nw: n,
            nx: n,
            ny: n,
            nz: n,
        }
    }

    #[test]
    fn baseline_dot_count() {
        assert_eq!(count_ops(KernelVariant::Baseline, cube(32, 8), 1).dot_ops, 786_432);
    }

    #[test]
    fn batched_volume_words() {
        let c = count_ops(KernelVariant::Subline, cube(32, 8), 4);
        assert_eq!(c.vol_word_accesses, 131_072);
    }

    #[test]
    fn reduction_ratio_near_published_value() {
        let dims = cube(256, 8);
        let ours = dot_reduction(KernelVariant::Symmetry, dims);
        assert!((ours - (1.0 - 130.0 / 768.0)).abs() < 1e-12);
        let published = published_dot_reduction(256);
        assert!((published - 0.832_031_25).abs() < 1e-12);
        assert!((ours - published).abs() < 0.01);
    }

    #[test]
    fn traffic_model_total() {
        let m = TrafficModel::new(cube(8, 4), 2);
        let n = 4.0 * 512.0;
        assert_eq!(m.total(), (4.0 + 0.5) * n);
    }

    #[test]
    fn merge_adds_fields() {
        let mut a = OpCounters {
            dot_ops: 1,
            vol_word_accesses: 2,
            proj_word_accesses: 3,
            interp_ops: 4,
            subline_builds: 5,
        };
        a.merge(a);
        assert_eq!(a.subline_builds, 10);
        assert_eq!(a.total_words(), 10);
    }
}
