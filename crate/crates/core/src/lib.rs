//! Cone-beam CT back-projection on CPUs.
//!
//! The crate provides a reference voxel-driven kernel and a ladder of
//! optimized kernels ([`KernelVariant`]) that work on transposed layouts,
//! hoist per-line terms, exploit the mid-plane mirror symmetry of the
//! circular trajectory and interpolate through contiguous sub-line buffers.
//! Every kernel can run instrumented to count the operations it performs.
//!
//! ```
//! use backproj::{Backprojector, KernelVariant, ProjectionStack32, Layout};
//! use backproj::geometry::{build_geometry, GeometryConfig};
//!
//! let cfg = GeometryConfig {
//!     d: 100.0, big_d: 150.0, nw: 24, nh: 24,
//!     pixel_pitch_u: 1.0, pixel_pitch_v: 1.0, voxel_size: 1.0,
//!     np: 4, angles: None, nx: 8, ny: 8, nz: 8,
//! };
//! let geom = build_geometry(cfg).unwrap();
//! let img = ProjectionStack32::zeros(4, 24, 24, Layout::Natural).unwrap();
//! let bp = Backprojector::new(KernelVariant::SublinePrefetch, 4, 1).unwrap();
//! let vol = bp.reconstruct(&img, &geom.matrices(), geom.volume_dims()).unwrap();
//! assert!(vol.data().iter().all(|&v| v == 0.0));
//! ```

pub mod backprojector;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod interp;
pub mod io;
pub mod oracle;
pub mod scalar;
pub mod tensors;

pub use backprojector::{
    backproject_baseline, backproject_optimized, backproject_prefetch, count_ops, BatchConfig,
    Backprojector, KernelVariant, OpCounters, ProblemDims, TrafficModel,
};
pub use error::{Error, Result};
pub use geometry::{build_geometry, projection_matrix, GeometryConfig, ScanGeometry};
pub use interp::{bilinear, build_subline, dot4, mix, sample_subline, Grid};
pub use oracle::{forward_project, rasterize_phantom, rmse, EllipsoidPhantom};
pub use scalar::Scalar;
pub use tensors::{make_ij_list, IJList, Layout};

pub type Volume32 = tensors::Volume<f32>;
pub type Volume64 = tensors::Volume<f64>;
pub type ProjectionStack32 = tensors::ProjectionStack<f32>;
pub type ProjectionStack64 = tensors::ProjectionStack<f64>;
pub type ProjectionMatrix32 = geometry::ProjectionMatrix<f32>;
pub type ProjectionMatrix64 = geometry::ProjectionMatrix<f64>;
pub type SublineBuffer32 = interp::SublineBuffer<f32>;
