//! Ground truth for tests and benchmarks: analytic phantoms, a forward
//! projector and volume metrics.

mod forward;
mod metrics;
mod phantom;

pub use forward::forward_project;
pub use metrics::{max_abs, rmse};
pub use phantom::{
    analytic_projections, inscribed_radius, rasterize_phantom, Ellipsoid, EllipsoidPhantom,
};
