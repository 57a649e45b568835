//! Design-space exploration: genome encodings, a Gaussian-process outer
//! loop, a simulated-annealing inner loop and Pareto bookkeeping.

mod arch;
mod evaluator;
mod explore;
mod gp;
mod integ;
mod objective;
mod pareto;
mod sa;

pub use arch::{
    arch_features, arch_neighbor, array_dims, balance_pes, decode_arch, default_genome,
    default_shape, normalize_high, random_genome, shape_catalog, spatial_pairs, ArchDesign,
    ArchGenome, ArchHigh, ArchLow, Shape,
};
pub use evaluator::{Evaluator, ModelEvaluator, SystemEval};
pub use explore::{
    run_two_stage, Aborted, EvalRecord, Exploration, ExploreError, SearchConfig, Strategy,
    SystemDesign,
};
pub use gp::{acquisition_pi, gp_posterior, normal_cdf, GpState};
pub use integ::{
    decode_integration, identity_placement, integ_features, network_catalog, placement_neighbor,
    random_placement, selected_chiplets, IntegGenome, IntegLow, NetworkOption, MAX_RADIX,
};
pub use objective::{Metric, Objective};
pub use pareto::{dominates, ParetoEntry, ParetoSet};
pub use sa::{sa_accept, sa_optimize, SaConfig, SaOutcome, MAX_PROPOSALS_PER_EVAL};
