//! Exact sampling KL for Gaussian targets and the declarative experiment harness.
//!
//! Sweep points run on the rayon pool; records are always assembled in grid order.

mod kl;
mod result;
mod runners;
mod spec;

pub use kl::{exact_sampling_kl, kl_gaussians, SamplingKl};
pub use result::{
    export, ExperimentResult, ExportFormat, Metadata, PropertyCheck, Record, CSV_COLUMNS, RESULT_FORMAT_VERSION, TOOL_NAME,
    TOOL_VERSION,
};
pub use runners::{run, run_bound_audit, run_gmm_sanity, run_n_scaling, run_u_curve, FLAG_MULTIMODALITY_UNDETECTED};
pub use spec::{
    AcsDraws, AuditCase, BoundAuditSpec, ExperimentKind, ExperimentSpec, GmmAssert, GmmSanitySpec, NScalingAssert, NScalingSpec,
    ScheduleFamily, UCurveAssert, UCurveSpec, MIN_GMM_PATHS,
};
