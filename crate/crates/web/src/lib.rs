//! Browser bindings. Every export returns a JSON string; failures come
//! back as `{"error": "..."}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use chiplet_dse::config::ModelParams;
use chiplet_dse::cost::{
    bill_for_placement, monolithic_cost, node_yield, total_cost, CostTable, PackagingKind,
};
use chiplet_dse::network::{allocate_bandwidth, Flow, Topology, TopologyKind};
use chiplet_dse::report::scatter_rows;
use chiplet_dse::search::{run_two_stage, ModelEvaluator, SearchConfig};
use chiplet_dse::workload::parse_workload_graph;

const MM_CHAIN: &str = include_str!("../../../configs/mm_chain.json");

fn fail(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Splits `total_mm2` of logic into 1..=`max_chiplets` equal dies in a row
/// and prices each split under every packaging, normalized to the
/// monolithic die.
#[wasm_bindgen]
pub fn cost_sweep(total_mm2: f64, max_chiplets: usize, node: &str) -> String {
    let t = CostTable::default();
    let Ok(n) = t.node(node) else {
        return fail(format!("unknown node `{node}`"));
    };
    if !(total_mm2 > 0.0) || max_chiplets == 0 {
        return fail("area and chiplet count must be positive");
    }
    let mono = monolithic_cost(total_mm2, n);
    let mut rows = Vec::new();
    for k in 1..=max_chiplets {
        let area = total_mm2 / k as f64;
        let dies: Vec<_> = (0..k).map(|i| ((0, i), area)).collect();
        let mut pkgs = serde_json::Map::new();
        for kind in PackagingKind::ALL {
            let bill = bill_for_placement(&dies, vec![0.0; k], node, kind, &t);
            let pkg = t
                .packaging(kind)
                .expect("default table has every packaging");
            match total_cost(&bill, pkg, &t) {
                Ok(c) => {
                    pkgs.insert(
                        kind.name().into(),
                        json!({
                            "normalized": c.total / mono,
                            "die": c.die / mono,
                            "bond": c.bond / mono,
                            "substrate": c.substrate / mono,
                            "interposer": c.interposer / mono,
                            "process": c.process / mono,
                            "interposer_share": c.interposer_share(),
                        }),
                    );
                }
                Err(e) => {
                    pkgs.insert(kind.name().into(), json!({ "error": e.to_string() }));
                }
            }
        }
        rows.push(json!({
            "chiplets": k,
            "die_mm2": area,
            "die_yield": node_yield(area, n),
            "packaging": pkgs,
        }));
    }
    json!({ "monolithic_cost": mono, "monolithic_yield": node_yield(total_mm2, n), "rows": rows })
        .to_string()
}

/// Proportional link sharing on a linear array or ring. `flows` is a JSON
/// array of `[src, dst, bwr]`.
#[wasm_bindgen]
pub fn contention(kind: &str, nodes: usize, link_bw: f64, flows: &str) -> String {
    let kind = match kind {
        "linear" => TopologyKind::Linear,
        "ring" => TopologyKind::Ring,
        other => return fail(format!("unsupported topology `{other}`")),
    };
    let spec: Vec<(usize, usize, f64)> = match serde_json::from_str(flows) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let topo = Topology::new(kind, 1, nodes, link_bw, 4.0, 64.0);
    if let Err(e) = topo.validate() {
        return fail(e);
    }
    let mut list = Vec::with_capacity(spec.len());
    for (i, &(src, dst, bwr)) in spec.iter().enumerate() {
        if src >= nodes || dst >= nodes || src == dst || !(bwr > 0.0) {
            return fail(format!(
                "flow {i}: need distinct nodes below {nodes} and bwr > 0"
            ));
        }
        list.push(Flow {
            name: format!("e{src},{dst}"),
            src,
            dst,
            bytes: 1.0,
            bwr,
        });
    }
    let alloc = allocate_bandwidth(&list, &topo);
    let flows: Vec<Value> = list
        .iter()
        .zip(&alloc.flows)
        .map(|(f, s)| {
            json!({
                "name": f.name,
                "bwr": f.bwr,
                "path": s.path,
                "ebw": s.ebw,
                "rate": s.rate,
            })
        })
        .collect();
    let links: Vec<Value> = alloc
        .demand
        .iter()
        .map(|(&ch, &d)| json!({ "link": ch, "demand": d, "allocated": alloc.allocated(ch) }))
        .collect();
    json!({ "flows": flows, "links": links }).to_string()
}

/// Two-stage exploration of the built-in three-matmul chain.
#[wasm_bindgen]
pub fn explore_chain(
    seed: u32,
    stage1_budget: usize,
    stage2_budget: usize,
    objective: &str,
) -> String {
    let objective = match objective.parse() {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let graph = parse_workload_graph(MM_CHAIN).expect("bundled workload parses");
    let (params, table) = (ModelParams::default(), CostTable::default());
    let ev = ModelEvaluator::new(&graph, &params, &table);
    let cfg = SearchConfig {
        objective,
        stage1_budget,
        stage2_budget,
        seed: u64::from(seed),
        bayes_samples: 8,
        sa_budget: 30,
        pe_budget: 256,
        ..SearchConfig::default()
    };
    let ex = match run_two_stage(&ev, &cfg) {
        Ok(ex) => ex,
        Err(e) => return fail(e),
    };
    let points: Vec<Value> = scatter_rows(&ex)
        .iter()
        .map(|r| {
            json!({
                "id": r.sample_id,
                "packaging": r.packaging,
                "cost": r.cost,
                "latency": r.latency_cycles,
                "energy": r.energy_j,
                "front": r.on_front,
            })
        })
        .collect();
    json!({ "evaluations": ex.log.len(), "points": points }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn sweep_starts_at_one_die() {
        let v = parse(&cost_sweep(993.0, 4, "28nm"));
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0]["die_mm2"], 993.0);
        assert!(rows[3]["die_yield"].as_f64() > rows[0]["die_yield"].as_f64());
        assert!(parse(&cost_sweep(1.0, 1, "3nm"))["error"].is_string());
    }

    #[test]
    fn shared_link_splits_evenly() {
        let v = parse(&contention("linear", 3, 32.0, "[[0,2,32],[1,2,32]]"));
        let f = &v["flows"];
        assert_eq!(f[0]["rate"], 16.0);
        assert_eq!(f[1]["rate"], 16.0);
        assert!(parse(&contention("linear", 3, 32.0, "[[0,5,1]]"))["error"].is_string());
    }

    #[test]
    fn exploration_returns_points() {
        let v = parse(&explore_chain(1, 30, 20, "pareto:(cost,latency)"));
        assert!(!v["points"].as_array().unwrap().is_empty());
        assert!(parse(&explore_chain(1, 30, 20, "speed"))["error"].is_string());
    }
}
