use serde::{Deserialize, Serialize};

use crate::config::ModelParams;
use crate::cost::{CostBreakdown, CostTable, EnergyBreakdown, PackagingKind};
use crate::error::Infeasible;
use crate::mapping::{BufferCaps, Cluster, MapSpec};
use crate::network::{TopologyFile, TopologyKind};
use crate::perf::{evaluate_design, DesignPoint, Metrics, WorkloadDesign};
use crate::workload::WorkloadGraph;

/// Metrics of a whole system with per-term breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemEval {
    pub metrics: Metrics,
    pub energy: EnergyBreakdown,
    pub cost: CostBreakdown,
}

/// Scores candidate designs. Implementations must be pure so evaluations
/// can run on any thread in any order.
pub trait Evaluator: Sync {
    fn graph(&self) -> &WorkloadGraph;
    fn buffer_caps(&self) -> BufferCaps;
    fn node(&self) -> &str;
    /// Stage-one score of workload `w` alone.
    fn arch(&self, w: usize, cluster: &Cluster, spec: &MapSpec) -> Result<Metrics, Infeasible>;
    fn system(&self, dp: &DesignPoint) -> Result<SystemEval, Infeasible>;
}

/// Evaluator backed by the analytical performance, network, energy and
/// cost models.
pub struct ModelEvaluator<'a> {
    graph: &'a WorkloadGraph,
    params: &'a ModelParams,
    table: &'a CostTable,
    node: String,
    singles: Vec<WorkloadGraph>,
}

impl<'a> ModelEvaluator<'a> {
    pub fn new(graph: &'a WorkloadGraph, params: &'a ModelParams, table: &'a CostTable) -> Self {
        let singles = (0..graph.workloads.len())
            .map(|w| single(graph, w))
            .collect();
        Self {
            graph,
            params,
            table,
            node: table.default_node.clone(),
            singles,
        }
    }

    pub fn with_node(mut self, node: impl Into<String>) -> Self {
        self.node = node.into();
        self
    }
}

/// Workload `w` on its own, all inputs from DRAM and its output stored.
fn single(graph: &WorkloadGraph, w: usize) -> WorkloadGraph {
    let nest = graph.workloads[w].clone();
    let tensors = graph
        .tensors
        .iter()
        .filter(|t| nest.access(&t.name).is_some())
        .cloned()
        .collect();
    WorkloadGraph {
        tensors,
        workloads: vec![nest],
        edges: Vec::new(),
    }
}

impl Evaluator for ModelEvaluator<'_> {
    fn graph(&self) -> &WorkloadGraph {
        self.graph
    }

    fn buffer_caps(&self) -> BufferCaps {
        self.params.buffer_caps
    }

    fn node(&self) -> &str {
        &self.node
    }

    /// The workload's chiplets on an organic mesh shaped like its chiplet
    /// array.
    fn arch(&self, w: usize, cluster: &Cluster, spec: &MapSpec) -> Result<Metrics, Infeasible> {
        let (rows, cols) = (cluster.chiplet.rows as usize, cluster.chiplet.cols as usize);
        let placement = (0..rows * cols)
            .map(|k| (k % cols) * rows + k / cols)
            .collect();
        let dp = DesignPoint {
            workloads: vec![WorkloadDesign {
                cluster: *cluster,
                spec: spec.clone(),
                chiplets: (0..rows * cols).collect(),
            }],
            topology: TopologyFile {
                kind: TopologyKind::Mesh,
                rows,
                cols,
                link_bw: None,
                t_s: None,
                mem_nodes: None,
            },
            packaging: PackagingKind::Organic,
            node: self.node.clone(),
            placement,
        };
        evaluate_design(&self.singles[w], &dp, self.params, self.table).map(|r| r.metrics)
    }

    fn system(&self, dp: &DesignPoint) -> Result<SystemEval, Infeasible> {
        let r = evaluate_design(self.graph, dp, self.params, self.table)?;
        Ok(SystemEval {
            metrics: r.metrics,
            energy: r.energy,
            cost: r.cost,
        })
    }
}
