//! Pipeline stages, hierarchical delays, latency and throughput, and full
//! design-point evaluation.

mod design;
mod eval;
mod stage;

pub use design::{
    design_from_file, parse_design, ClusterEntry, DesignFile, DesignPoint, LevelEntry,
    MappingEntry, WorkloadDesign, WorkloadEntry,
};
pub use eval::{
    evaluate_design, workload_delay, ChipletReport, FlowReport, LevelDelay, Metrics, Report,
    StageReport, WorkloadDelay, WorkloadReport,
};
pub use stage::{compute_delay, Stage, StageGraph, StageKind};
