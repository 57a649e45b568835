use chiplet_dse::config::ModelParams;
use chiplet_dse::cost::CostTable;
use chiplet_dse::perf::{evaluate_design, parse_design, StageKind};
use chiplet_dse::workload::parse_workload_graph;

const WORKLOADS: &str = include_str!("../../../configs/transformer.json");
const DESIGN: &str = include_str!("../../../configs/transformer_design.json");

fn setup() -> (
    chiplet_dse::workload::WorkloadGraph,
    chiplet_dse::perf::DesignPoint,
    ModelParams,
    CostTable,
) {
    let g = parse_workload_graph(WORKLOADS).unwrap();
    let p = ModelParams::default();
    let t = CostTable::default();
    let dp = parse_design(DESIGN, &g, &p.buffer_caps, &t.default_node).unwrap();
    (g, dp, p, t)
}

#[test]
fn transformer_block_stages() {
    let (g, dp, p, t) = setup();
    let r = evaluate_design(&g, &dp, &p, &t).unwrap();
    let names: Vec<&str> = r.stages.iter().map(|s| s.name.as_str()).collect();
    for n in ["v0+2", "v1+3", "v4", "e0,1", "e1,2", "e1,3"] {
        assert!(names.contains(&n), "{names:?}");
    }
    assert_eq!(
        r.stages
            .iter()
            .filter(|s| s.kind == StageKind::Transfer)
            .count(),
        3
    );
    assert!(r.metrics.latency_cycles.is_finite() && r.metrics.latency_cycles > 0.0);
    assert_eq!(r.metrics.edp, r.metrics.energy_j * r.metrics.latency_cycles);
}
