//! The back-projection kernel ladder.
//!
//! Each [`KernelVariant`] adds one optimization on top of the previous one:
//!
//! | variant            | layout     | hoisted F/W/X | mirror `nh-1-y` | sub-line buffer | double buffer |
//! |--------------------|------------|---------------|-----------------|-----------------|---------------|
//! | `Baseline`         | natural    |               |                 |                 |               |
//! | `Transpose`        | transposed |               |                 |                 |               |
//! | `Share`            | transposed | yes           |                 |                 |               |
//! | `Symmetry`         | transposed | yes           | yes             |                 |               |
//! | `Subline`          | transposed | yes           | yes             | yes             |               |
//! | `SublinePrefetch`  | transposed | yes           | yes             | yes             | yes           |
//!
//! All transposed variants accumulate `nb` projections per voxel before a
//! single read-modify-write of the volume. The accumulator is seeded with the
//! voxel's current value, so every voxel sees the same ascending-`s` sequence
//! of additions regardless of `nb`, the worker count or the variant; variants
//! without the mirror shortcut therefore reproduce the baseline bitwise.

mod baseline;
pub mod counters;
mod optimized;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ProjectionMatrix;
use crate::scalar::Scalar;
use crate::tensors::{Layout, ProjectionStack, Volume};

pub use counters::{
    count_ops, dot_reduction, published_dot_reduction, NoTally, OpCounters, ProblemDims, Tally,
    TrafficModel,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    Baseline,
    Transpose,
    Share,
    Symmetry,
    Subline,
    SublinePrefetch,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 6] = [
        KernelVariant::Baseline,
        KernelVariant::Transpose,
        KernelVariant::Share,
        KernelVariant::Symmetry,
        KernelVariant::Subline,
        KernelVariant::SublinePrefetch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::Baseline => "baseline",
            KernelVariant::Transpose => "transpose",
            KernelVariant::Share => "share",
            KernelVariant::Symmetry => "symmetry",
            KernelVariant::Subline => "subline",
            KernelVariant::SublinePrefetch => "subline_prefetch",
        }
    }

    /// Input and output layout the kernel works on.
    pub fn layout(self) -> Layout {
        if self == KernelVariant::Baseline {
            Layout::Natural
        } else {
            Layout::Transposed
        }
    }

    pub fn uses_symmetry(self) -> bool {
        self >= KernelVariant::Symmetry
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        KernelVariant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// Projections accumulated per volume update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    nb: usize,
}

impl BatchConfig {
    pub const MAX: usize = 32;

    pub fn new(nb: usize) -> Result<Self> {
        if (1..=Self::MAX).contains(&nb) {
            Ok(Self { nb })
        } else {
            Err(Error::BatchRange(nb))
        }
    }

    /// Validated against a projection count: `nb` must divide `np`.
    pub fn for_projections(nb: usize, np: usize) -> Result<Self> {
        let batch = Self::new(nb)?;
        batch.check(np)?;
        Ok(batch)
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    fn check(&self, np: usize) -> Result<()> {
        if self.nb > np || !np.is_multiple_of(self.nb) {
            Err(Error::BatchNotDivisor { nb: self.nb, np })
        } else {
            Ok(())
        }
    }
}

/// Shared validation for every entry point.
fn check_inputs<T: Scalar>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    vol: &Volume<T>,
    variant: KernelVariant,
    batch: BatchConfig,
) -> Result<()> {
    let layout = variant.layout();
    for found in [img.layout(), vol.layout()] {
        if found != layout {
            return Err(Error::LayoutMismatch {
                expected: layout,
                found,
            });
        }
    }
    if mats.len() != img.np() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrices for {} projections",
            mats.len(),
            img.np()
        )));
    }
    if img.nh() < 2 || img.nw() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "detector {}x{} is smaller than 2x2",
            img.nw(),
            img.nh()
        )));
    }
    if let Some(bad) = mats.iter().position(|m| !m.is_finite()) {
        return Err(Error::NonFiniteMatrix(bad));
    }
    batch.check(img.np())?;
    if variant.uses_symmetry() && !vol.nz().is_multiple_of(2) {
        return Err(Error::OddDepth(vol.nz()));
    }
    Ok(())
}

/// Splits `n` items into at most `workers` contiguous chunks of equal size.
pub(crate) fn chunk_len(n: usize, workers: usize) -> usize {
    n.div_ceil(workers.clamp(1, n.max(1))).max(1)
}

/// Kernel selection plus its run parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Backprojector {
    variant: KernelVariant,
    batch: BatchConfig,
    threads: usize,
}

impl Backprojector {
    pub fn new(variant: KernelVariant, nb: usize, threads: usize) -> Result<Self> {
        Ok(Self {
            variant,
            batch: BatchConfig::new(nb)?,
            threads: threads.max(1),
        })
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn nb(&self) -> usize {
        self.batch.nb()
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Accumulates the back-projection of `img` into `vol`. Both must be in
    /// [`KernelVariant::layout`].
    pub fn run<T: Scalar>(
        &self,
        img: &ProjectionStack<T>,
        mats: &[ProjectionMatrix<T>],
        vol: &mut Volume<T>,
    ) -> Result<()> {
        self.dispatch::<T, NoTally>(img, mats, vol).map(|_| ())
    }

    /// As [`Self::run`], recording every operation the kernel performs.
    pub fn run_counted<T: Scalar>(
        &self,
        img: &ProjectionStack<T>,
        mats: &[ProjectionMatrix<T>],
        vol: &mut Volume<T>,
    ) -> Result<OpCounters> {
        self.dispatch::<T, OpCounters>(img, mats, vol)
    }

    fn dispatch<T: Scalar, C: Tally>(
        &self,
        img: &ProjectionStack<T>,
        mats: &[ProjectionMatrix<T>],
        vol: &mut Volume<T>,
    ) -> Result<C> {
        check_inputs(img, mats, vol, self.variant, self.batch)?;
        Ok(match self.variant {
            KernelVariant::Baseline => baseline::run::<T, C>(img, mats, vol, self.threads),
            v => optimized::run::<T, C>(img, mats, vol, v, self.batch.nb(), self.threads),
        })
    }

    /// Natural-layout in, natural-layout out: transposes around the
    /// optimized kernels and returns a fresh volume of `dims`.
    pub fn reconstruct<T: Scalar>(
        &self,
        img: &ProjectionStack<T>,
        mats: &[ProjectionMatrix<T>],
        dims: (usize, usize, usize),
    ) -> Result<Volume<T>> {
        let (nx, ny, nz) = dims;
        if self.variant == KernelVariant::Baseline {
            let mut vol = Volume::zeros(nx, ny, nz, Layout::Natural)?;
            self.run(img, mats, &mut vol)?;
            return Ok(vol);
        }
        let img_t = crate::tensors::transpose_projections(img)?;
        let mut vol = Volume::zeros(nx, ny, nz, Layout::Transposed)?;
        self.run(&img_t, mats, &mut vol)?;
        crate::tensors::restore_volume(&vol)
    }
}

/// The reference kernel on natural layouts, parallel over `k` slabs.
pub fn backproject_baseline<T: Scalar>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    vol: &mut Volume<T>,
    threads: usize,
) -> Result<()> {
    Backprojector::new(KernelVariant::Baseline, 1, threads)?.run(img, mats, vol)
}

/// Any transposed-layout variant, parallel over vertical voxel lines.
pub fn backproject_optimized<T: Scalar>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    vol: &mut Volume<T>,
    variant: KernelVariant,
    batch: BatchConfig,
    threads: usize,
) -> Result<()> {
    if variant == KernelVariant::Baseline {
        return Err(Error::WrongEntryPoint("baseline"));
    }
    Backprojector {
        variant,
        batch,
        threads: threads.max(1),
    }
    .run(img, mats, vol)
}

/// The sub-line kernel with double-buffered line builds.
pub fn backproject_prefetch<T: Scalar>(
    img: &ProjectionStack<T>,
    mats: &[ProjectionMatrix<T>],
    vol: &mut Volume<T>,
    batch: BatchConfig,
    threads: usize,
) -> Result<()> {
    backproject_optimized(img, mats, vol, KernelVariant::SublinePrefetch, batch, threads)
}
