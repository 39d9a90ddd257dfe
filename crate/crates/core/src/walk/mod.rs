//! Continuous-time lattice random walks on ℤ: jump kernels, path sampling,
//! the discrete-time approximation and per-path functionals.

mod functionals;
mod kernel;
mod path;

pub use functionals::{
    coincidence_time, hole_volume, local_time, local_time_functional, range_stats, sup_norm,
    thin_count, thin_points, LocalTimeProfile, RangeStats, DENSE_RANGE_LIMIT,
};
pub(crate) use functionals::check_finite_gamma;
pub use kernel::{ExpMoment, JumpKernel, KernelSpec, NORMALIZATION_SLACK};
pub use path::{
    discretize, sample_path, sample_path_or_constant, JumpStream, LatticePath, Segments,
    SteppedKernel,
};
pub(crate) use path::check_horizon;
