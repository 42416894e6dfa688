//! Initialization, assignment, micro iterations and the macro-iteration driver.

mod cost;
mod kmeanspp;
mod lloyd;
mod pipeline;

pub use cost::{
    joint_cost, nearest_semantic_neighbor, CostBreakdown, CostFunction, SemanticContext,
    Supervision, Weights,
};
pub use kmeanspp::kmeanspp_init;
pub use lloyd::{
    assign_all, objective, refresh_centroids, repair_empty_clusters, run_micro_phase,
    update_euclidean_centroids, AssignOutcome, MicroStep, MicroTrace,
};
pub use pipeline::{run_pipeline, ClusterSummary, PipelineFailure, PipelineInputs, PipelineOutput};

pub(crate) use kmeanspp::weighted_pick;
