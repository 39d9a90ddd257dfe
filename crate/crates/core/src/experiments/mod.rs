//! Configured experiment runs and the acceptance suite.

mod config;
mod record;
mod run;
mod verify;

pub use config::{ExperimentConfig, ExperimentKind, KernelRef, ModelConfig, OutputConfig, ParamConfig, ReplicaConfig};
pub use record::{read_csv_rows, write_atomic, Overrides, ResultRecord, ARTIFACT_VERSION};
pub use run::{ceil_cbrt, cross_method, execute_payload, pascal_paths, run, soft_range_identity_suite, CrossMethod};
pub use verify::{
    decay_constant_check, nonincreasing_within, run_criterion, verify, verify_with, Check, CriterionOutcome, Suite, VerifyReport,
    DECAY_CONSTANT, DEFAULT_SEED,
};
