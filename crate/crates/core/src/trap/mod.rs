//! The Poisson trap environment: window truncation, counts, lazily
//! generated trap trajectories, the occupation field `ξ(t, x)` and exact
//! quenched survival weights.

mod field;
mod window;

pub use field::{generate_field, QuenchedWeight, TrapField};
pub use window::{log_outside_reach, log_reach_probability, WindowPolicy, DEFAULT_MAX_MARGIN};
