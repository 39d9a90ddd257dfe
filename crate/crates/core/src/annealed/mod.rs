//! Annealed survival `Z^γ_{t,X}` and `Z^γ_t` by Monte Carlo over trap
//! walks, averaged trap fields, and a deterministic Feynman–Kac solve;
//! Pascal's principle, the soft-range identity and the ball strategy.

mod engine;
mod estimate;
mod fk;
mod mc;
mod pascal;
mod soft_range;
mod strategy;

pub use estimate::{Method, SurvivalEstimate};
pub use fk::{annealed_given_path_fk, annealed_total_fk, fk_half_width, fk_policy, fk_window_bound, FkWindow};
pub use mc::{
    annealed_given_path_field, annealed_given_path_mc, annealed_total_mc, expected_superposed_range, Model,
    TotalSurvival, MAX_BIAS_FACTOR, MAX_INNER_REPLICAS, TOTAL_BOOTSTRAP_RESAMPLES,
};
pub(crate) use mc::check_model;
pub use pascal::{pascal_check, PascalReport, PascalRow};
pub use soft_range::{expected_soft_range, soft_range, soft_range_identity_check, SoftClock};
pub use strategy::{strategy_probabilities, StrategyInput, StrategyReport};
