//! Exploration of the near-optimal space of linear programs.
//!
//! The space `{S x : x feasible, cᵀx ≤ budget}` is bracketed between an inner approximation
//! (convex hull of verified near-optimal points) and an outer approximation (valid halfspaces
//! over a box), refined until their max-min distance falls below a tolerance.

pub mod error;
pub mod exploration;
pub mod geometry;
pub mod mga;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod regions;
pub mod sampler;
pub mod solver;
pub mod toy;
pub mod trace;

pub use error::{Error, Result};
pub use exploration::{build_exploration, derive_z_bounds, CostCut, ExplorationProblem, ExplorationSpec, Projection};
pub use model::{parse_model, LinearProgram};
pub use solver::{Gateway, LpSolution, LpStatus, MilpOptions, MilpSolution, MilpStatus, Program};
pub use toy::generate_toy_model;
pub use oracle::{run_oracle, OracleOptions};
pub use regions::{init_regions, Halfspace, InnerApprox, OuterApprox, PointOrigin, Provenance};
pub use trace::{read_trace_csv, write_trace_csv, CutRecord, ExplorationResult, IterationRecord};
pub use mga::{run_mga, MgaMethod, MgaOptions, MgaRun};
pub use metrics::{
    distance_to_reference, maxmin_distance, metrics_for_trace, volume_mc, volume_ratio, write_metrics_csv,
    MetricsOptions, MetricsRecord, VolumeEstimate, VolumeMethod,
};
pub use sampler::{
    chebyshev_center, diverse_set, hit_and_run, most_distant_design, HitAndRunOptions, SampleBatch, SampleMethod,
    SampleTarget,
};
