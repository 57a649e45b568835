use chiplet_dse::cost::{CostBreakdown, EnergyBreakdown};
use chiplet_dse::error::Infeasible;
use chiplet_dse::mapping::{BufferCaps, Cluster, MapSpec};
use chiplet_dse::perf::{DesignPoint, Metrics};
use chiplet_dse::search::{Evaluator, SystemEval};
use chiplet_dse::workload::{parse_workload_graph, WorkloadGraph};

pub const MM16: &str = r#"{
  "workloads": [
    {"name": "mm", "loops": [["i", 16], ["j", 16], ["k", 16]],
     "writes": "C", "reads": ["A", "B"],
     "access": {"A": ["i", "k"], "B": ["k", "j"], "C": ["i", "j"]}}
  ],
  "edges": []
}"#;

pub const OPTIMUM: f64 = 1.0;

/// Separable quadratic in log2 tile sizes plus a penalty when the PE
/// array is not spatially mapped over `(i, j)` and one per packaging id.
/// The optimum value is exactly 1.
pub struct Synthetic {
    pub graph: WorkloadGraph,
    pub target: [[u64; 3]; 3],
}

pub const SPATIAL_PENALTY: f64 = 0.5;
pub const PACKAGING_PENALTY: f64 = 0.25;

impl Synthetic {
    pub fn new() -> Self {
        Self {
            graph: parse_workload_graph(MM16).unwrap(),
            target: [[16, 8, 16], [4, 8, 4], [2, 1, 4]],
        }
    }

    pub fn value(&self, spec: &MapSpec) -> f64 {
        let mut v = 1.0;
        for (m, t) in [&spec.chiplet, &spec.core, &spec.pe]
            .iter()
            .zip(&self.target)
        {
            for (a, b) in m.tile.iter().zip(t) {
                let d = (*a as f64).log2() - (*b as f64).log2();
                v += d * d / 4.0;
            }
        }
        if spec.pe.spatial != [0, 1] {
            v += SPATIAL_PENALTY;
        }
        v
    }

    fn metrics(v: f64) -> Metrics {
        Metrics {
            latency_cycles: v,
            throughput_per_cycle: 1.0 / v,
            energy_j: 1.0,
            cost: 1.0,
            area_mm2: 1.0,
            edp: v,
            edp_js: v,
        }
    }
}

impl Evaluator for Synthetic {
    fn graph(&self) -> &WorkloadGraph {
        &self.graph
    }

    fn buffer_caps(&self) -> BufferCaps {
        BufferCaps::UNBOUNDED
    }

    fn node(&self) -> &str {
        "28nm"
    }

    fn arch(&self, _w: usize, _cluster: &Cluster, spec: &MapSpec) -> Result<Metrics, Infeasible> {
        Ok(Self::metrics(self.value(spec)))
    }

    fn system(&self, dp: &DesignPoint) -> Result<SystemEval, Infeasible> {
        let v = self.value(&dp.workloads[0].spec) + PACKAGING_PENALTY * dp.packaging.id() as f64;
        Ok(SystemEval {
            metrics: Self::metrics(v),
            energy: EnergyBreakdown::default(),
            cost: CostBreakdown::default(),
        })
    }
}
