use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compute_delay, DesignPoint, Stage, StageGraph, StageKind};
use crate::config::{Bandwidths, ModelParams};
use crate::cost::{
    bill_for_placement, chiplet_logic_area, energy_totals, io_area, io_links, total_cost,
    ChipletInventory, CostBreakdown, CostTable, EnergyBreakdown, EnergyVolumes, PackagingKind,
};
use crate::error::Infeasible;
use crate::mapping::{
    analyze_reuse, chiplet_traffic, BindingTable, Cluster, Level, MapSpec, ReuseAnalysis,
};
use crate::network::{
    allocate_bandwidth, build_comm_graph, flow_delay, hotspot_link_bw, Topology, TopologyKind,
    TransferReq,
};
use crate::workload::{LoopNest, Tensor, WorkloadGraph};

/// Headline numbers of one evaluated design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub latency_cycles: f64,
    /// Pipeline iterations completed per cycle in steady state.
    pub throughput_per_cycle: f64,
    pub energy_j: f64,
    pub cost: f64,
    pub area_mm2: f64,
    /// Energy × latency in joule-cycles.
    pub edp: f64,
    /// Energy × latency in joule-seconds.
    pub edp_js: f64,
}

/// Delays of one tile at a level: compute, buffer and transfer bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDelay {
    pub level: Level,
    pub compute: f64,
    pub buffer: f64,
    pub transfer: f64,
}

impl LevelDelay {
    pub fn delay(&self) -> f64 {
        self.compute.max(self.buffer).max(self.transfer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDelay {
    /// Chiplet, core and PE tile delays.
    pub levels: Vec<LevelDelay>,
    pub epilogue: f64,
    pub total: f64,
}

/// Hierarchical delay of one workload (one pipeline iteration), from the PE
/// tile up to the whole chiplet array.
pub fn workload_delay(
    w: &LoopNest,
    r: &ReuseAnalysis,
    cluster: &Cluster,
    bw: &Bandwidths,
) -> Result<WorkloadDelay, Infeasible> {
    let pe = r.level(Level::Pe);
    let core = r.level(Level::Core);
    let chip = r.level(Level::Chiplet);
    let d_pe = LevelDelay {
        level: Level::Pe,
        compute: r.pe_tile_macs as f64 / bw.mac_per_cycle,
        buffer: r.pe_tile_operand_bytes as f64 / bw.pe_buffer,
        transfer: pe.tile_footprint_bytes() as f64 / bw.pe_link,
    };
    let d_core = LevelDelay {
        level: Level::Core,
        compute: compute_delay(
            pe.vertices_per_parent,
            pe.engines,
            pe.utilization,
            d_pe.delay(),
        )?,
        buffer: (core.tile_footprint_bytes() + pe.group_bytes_per_parent()) as f64 / bw.core_buffer,
        transfer: core.tile_footprint_bytes() as f64 / bw.core_link,
    };
    let d_chip = LevelDelay {
        level: Level::Chiplet,
        compute: compute_delay(
            core.vertices_per_parent,
            core.engines,
            core.utilization,
            d_core.delay(),
        )?,
        buffer: (chip.tile_footprint_bytes() + core.group_bytes_per_parent()) as f64
            / bw.chiplet_buffer,
        transfer: 0.0,
    };
    let body = compute_delay(
        chip.vertices_per_parent,
        chip.engines,
        chip.utilization,
        d_chip.delay(),
    )?;
    let out_elements = w.output.footprint(&w.extents());
    let epilogue = (w.epilogue_ops as u64 * out_elements) as f64
        / cluster.total_pes() as f64
        / bw.mac_per_cycle;
    Ok(WorkloadDelay {
        levels: vec![d_chip, d_core, d_pe],
        epilogue,
        total: body + epilogue,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub kind: StageKind,
    pub delay: f64,
    /// Computing stages: delay before DRAM traffic is folded in.
    pub compute_delay: f64,
    pub chiplets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    pub bytes: f64,
    pub bwr: f64,
    pub rate: f64,
    pub hops: usize,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipletReport {
    pub id: usize,
    pub node: usize,
    pub pes: u64,
    pub sram_bytes: u64,
    pub logic_mm2: f64,
    pub io_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub name: String,
    pub chiplets: Vec<usize>,
    pub slot: usize,
    pub delay: WorkloadDelay,
    pub utilization: Vec<f64>,
    pub dram_bytes: f64,
}

/// Full evaluation of one design point. Per-stage numbers cover one
/// pipeline iteration; metrics cover all iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: Metrics,
    pub iterations: u64,
    pub stages: Vec<StageReport>,
    pub stage_edges: Vec<(String, String)>,
    pub critical_path: Vec<String>,
    pub flows: Vec<FlowReport>,
    pub link_bw: f64,
    pub workloads: Vec<WorkloadReport>,
    pub chiplets: Vec<ChipletReport>,
    pub energy: EnergyBreakdown,
    pub cost: CostBreakdown,
    pub warnings: Vec<String>,
}

fn invalid(e: impl std::fmt::Display) -> Infeasible {
    Infeasible::Invalid {
        message: e.to_string(),
    }
}

/// Mapping for one pipeline iteration: the pipeline loop collapses to 1.
fn slice_spec(spec: &MapSpec, w: &LoopNest) -> MapSpec {
    let mut s = spec.clone();
    if let Some(p) = w.pipeline_loop {
        for l in Level::ALL {
            s.level_mut(l).tile[p] = 1;
        }
    }
    s
}

struct Prepared {
    nest: LoopNest,
    spec: MapSpec,
    reuse: ReuseAnalysis,
    delay: WorkloadDelay,
}

/// Prepares one workload for a pipeline iteration: slice, reuse and delay.
fn prepare(
    w: &LoopNest,
    spec: &MapSpec,
    cluster: &Cluster,
    sliced: bool,
    tensors: &[Tensor],
    params: &ModelParams,
) -> Result<Prepared, Infeasible> {
    let (nest, spec) = if sliced {
        (w.stage_slice(), slice_spec(spec, w))
    } else {
        (w.clone(), spec.clone())
    };
    let reuse =
        analyze_reuse(&nest, &spec, cluster, tensors, &params.buffer_caps).map_err(invalid)?;
    if let Some(inf) = &reuse.infeasible {
        return Err(inf.clone());
    }
    let delay = workload_delay(&nest, &reuse, cluster, &params.bandwidth)?;
    Ok(Prepared {
        nest,
        spec,
        reuse,
        delay,
    })
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut x = x;
    while parent[x] != r {
        let next = parent[x];
        parent[x] = r;
        x = next;
    }
    r
}

/// Composes mapping, reuse, stage derivation, network contention, energy,
/// area and cost into the metrics of one design point.
pub fn evaluate_design(
    graph: &WorkloadGraph,
    dp: &DesignPoint,
    params: &ModelParams,
    table: &CostTable,
) -> Result<Report, Infeasible> {
    dp.validate(graph).map_err(invalid)?;
    let pkg = table.packaging(dp.packaging).map_err(invalid)?;
    if dp.topology.kind == TopologyKind::AllToAll && dp.packaging != PackagingKind::Active {
        return Err(Infeasible::Packaging {
            message: "all-to-all network needs an active interposer".into(),
        });
    }
    let iterations = graph.pipeline_iterations();
    let sliced = iterations > 1;
    let mut warnings = Vec::new();
    let mut prep = Vec::with_capacity(graph.workloads.len());
    for (w, d) in graph.workloads.iter().zip(&dp.workloads) {
        warnings.extend(d.spec.validate(w, &d.cluster).map_err(invalid)?);
        prep.push(prepare(
            w,
            &d.spec,
            &d.cluster,
            sliced,
            &graph.tensors,
            params,
        )?);
    }

    let mut table_b = BindingTable::new();
    for d in &dp.workloads {
        table_b.bind(&d.cluster, &d.chiplets).map_err(invalid)?;
    }
    let bindings = &table_b.bindings;
    for e in &graph.edges {
        let (bp, bc) = (&bindings[e.producer], &bindings[e.consumer]);
        if bp.chiplets().any(|c| bc.chiplets().any(|d| d == c)) && bc.slot <= bp.slot {
            return Err(Infeasible::BindingOrder {
                producer: e.producer,
                consumer: e.consumer,
            });
        }
    }

    // Computing stages: workloads linked through shared chiplets.
    let n_chip = dp.chiplet_count();
    let mut parent: Vec<usize> = (0..n_chip).collect();
    for d in &dp.workloads {
        for &c in &d.chiplets[1..] {
            let (a, b) = (find(&mut parent, d.chiplets[0]), find(&mut parent, c));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut chip_busy = vec![0.0f64; n_chip];
    for (d, p) in dp.workloads.iter().zip(&prep) {
        for &c in &d.chiplets {
            chip_busy[c] += p.delay.total;
        }
    }
    let mut sg = StageGraph::default();
    let mut stage_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut stage_of_chip = vec![0usize; n_chip];
    for (wi, d) in dp.workloads.iter().enumerate() {
        let root = find(&mut parent, d.chiplets[0]);
        let s = *stage_of_root.entry(root).or_insert_with(|| {
            sg.add(Stage {
                name: String::new(),
                kind: StageKind::Compute,
                delay: 0.0,
                chiplets: Vec::new(),
                workloads: Vec::new(),
            })
        });
        sg.stages[s].workloads.push(wi);
        for &c in &d.chiplets {
            stage_of_chip[c] = s;
            if !sg.stages[s].chiplets.contains(&c) {
                sg.stages[s].chiplets.push(c);
            }
        }
    }
    let n_compute = sg.stages.len();
    let mut compute_only = vec![0.0f64; n_compute];
    for (s, st) in sg.stages.iter_mut().enumerate() {
        st.chiplets.sort_unstable();
        st.name = format!(
            "v{}",
            st.workloads
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join("+")
        );
        compute_only[s] = st
            .chiplets
            .iter()
            .map(|&c| chip_busy[c])
            .fold(0.0, f64::max);
        st.delay = compute_only[s];
    }

    // Inter-chiplet traffic from the dependence sets.
    let mut transfers: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in &graph.edges {
        let (pp, pc) = (&prep[e.producer], &prep[e.consumer]);
        let tensor = graph
            .tensor(&e.tensor)
            .ok_or_else(|| invalid(format!("unknown tensor {}", e.tensor)))?;
        let dims = match (
            pp.nest.implied_dims(&e.tensor),
            pc.nest.implied_dims(&e.tensor),
        ) {
            (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| *x.max(y)).collect(),
            _ => tensor.dims.clone(),
        };
        let slice = Tensor {
            dims,
            ..tensor.clone()
        };
        let (dw_p, dw_c) = (&dp.workloads[e.producer], &dp.workloads[e.consumer]);
        let flows = chiplet_traffic(
            (&pp.nest, &pp.spec, &dw_p.cluster),
            (&pc.nest, &pc.spec, &dw_c.cluster),
            &slice,
        )
        .map_err(invalid)?;
        for f in flows {
            let src = bindings[e.producer].system_chiplet(f.src);
            let dst = bindings[e.consumer].system_chiplet(f.dst);
            if src == dst {
                continue;
            }
            if stage_of_chip[src] == stage_of_chip[dst] {
                return Err(Infeasible::StageCycle);
            }
            *transfers.entry((src, dst)).or_default() += f.bytes as f64;
        }
    }

    let mut topo =
        Topology::from_file(&dp.topology, 1.0, params.t_s, params.dram_bw).map_err(invalid)?;
    if n_chip > topo.nodes() {
        return Err(Infeasible::TooManyChiplets {
            chiplets: n_chip,
            nodes: topo.nodes(),
        });
    }
    let node_of = |c: usize| dp.placement[c];

    let mut reqs = Vec::new();
    let mut transfer_stage = Vec::new();
    for (&(src, dst), &bytes) in &transfers {
        let (sv, dv) = (stage_of_chip[src], stage_of_chip[dst]);
        reqs.push(TransferReq {
            name: format!("e{src},{dst}"),
            src: node_of(src),
            dst: node_of(dst),
            bytes,
            src_delay: compute_only[sv],
            dst_delay: compute_only[dv],
        });
        let e = sg.add(Stage {
            name: format!("e{src},{dst}"),
            kind: StageKind::Transfer,
            delay: 0.0,
            chiplets: vec![src, dst],
            workloads: Vec::new(),
        });
        sg.connect(sv, e);
        sg.connect(e, dv);
        transfer_stage.push(e);
    }
    // Workload-level ordering between computing stages without traffic.
    for e in &graph.edges {
        let (a, b) = (
            stage_of_chip[dp.workloads[e.producer].chiplets[0]],
            stage_of_chip[dp.workloads[e.consumer].chiplets[0]],
        );
        if a != b
            && !transfers
                .keys()
                .any(|&(s, d)| stage_of_chip[s] == a && stage_of_chip[d] == b)
        {
            sg.connect(a, b);
        }
    }
    sg.topological_order()?;

    // DRAM streams, split evenly over each workload's chiplets.
    let mut dram_load = vec![0.0f64; n_chip];
    let mut dram_store = vec![0.0f64; n_chip];
    let mut wl_dram = vec![0.0f64; prep.len()];
    for (wi, p) in prep.iter().enumerate() {
        let top = p.reuse.level(Level::Chiplet);
        let mut load = 0.0;
        let mut store = 0.0;
        for t in &top.tensors {
            let distinct = p.reuse.distinct(&t.tensor) as f64;
            let fetched = t.transfer_bytes as f64;
            if t.is_output {
                let spill = fetched - distinct;
                load += spill;
                store += spill;
                if graph.is_final_output(&t.tensor) {
                    store += distinct;
                }
            } else if graph.is_external_input(&t.tensor) {
                load += fetched;
            } else {
                load += fetched - distinct;
            }
        }
        wl_dram[wi] = load + store;
        let chips = &dp.workloads[wi].chiplets;
        for &c in chips {
            dram_load[c] += load / chips.len() as f64;
            dram_store[c] += store / chips.len() as f64;
        }
    }
    let mut dram_flow_chip = Vec::new();
    for c in 0..n_chip {
        let node = node_of(c);
        let mc = topo.nearest_mem(node);
        let d = compute_only[stage_of_chip[c]];
        if dram_load[c] > 0.0 {
            reqs.push(TransferReq {
                name: format!("dram>{c}"),
                src: mc,
                dst: node,
                bytes: dram_load[c],
                src_delay: d,
                dst_delay: d,
            });
            dram_flow_chip.push(c);
        }
        if dram_store[c] > 0.0 {
            reqs.push(TransferReq {
                name: format!("{c}>dram"),
                src: node,
                dst: mc,
                bytes: dram_store[c],
                src_delay: d,
                dst_delay: d,
            });
            dram_flow_chip.push(c);
        }
    }

    let cg = build_comm_graph(&topo, &reqs).map_err(invalid)?;
    let n_transfer = transfer_stage.len();
    // Every transfer request crosses chiplets, so it maps to one flow.
    debug_assert_eq!(cg.flows.len(), reqs.len());
    topo.link_bw = match dp.topology.link_bw.or(params.link_bw) {
        Some(bw) => bw,
        None => hotspot_link_bw(&cg.flows, &topo, pkg.max_link_bw),
    };
    let alloc = allocate_bandwidth(&cg.flows, &topo);
    let mut flow_reports = Vec::with_capacity(cg.flows.len());
    let mut flow_delays = Vec::with_capacity(cg.flows.len());
    for (f, share) in cg.flows.iter().zip(&alloc.flows) {
        let d = flow_delay(f, share, topo.t_s)?;
        flow_delays.push(d);
        flow_reports.push(FlowReport {
            name: f.name.clone(),
            src: f.src,
            dst: f.dst,
            bytes: f.bytes,
            bwr: f.bwr,
            rate: share.rate,
            hops: share.hops(),
            delay: d,
        });
    }
    for (k, &e) in transfer_stage.iter().enumerate() {
        sg.stages[e].delay = flow_delays[k];
    }
    for (k, &c) in dram_flow_chip.iter().enumerate() {
        let s = stage_of_chip[c];
        let d = flow_delays[n_transfer + k];
        if d > sg.stages[s].delay {
            sg.stages[s].delay = d;
        }
    }

    let (lat1, thr) = sg.latency_throughput()?;
    let latency = lat1 + (iterations - 1) as f64 * sg.max_delay();
    let crit = sg.critical_path()?;

    // Energy per iteration.
    let mut vol = EnergyVolumes::default();
    for p in &prep {
        let bits = p
            .nest
            .inputs
            .iter()
            .filter_map(|a| graph.tensor(&a.tensor))
            .map(|t| t.element_bits)
            .max()
            .unwrap_or(8);
        vol.mac_ops += p.nest.macs() as f64 * bits as f64 / 8.0;
        vol.chiplet_buffer_bytes += p.reuse.level(Level::Chiplet).buffer_bytes_accessed as f64;
        vol.core_buffer_bytes += p.reuse.level(Level::Core).buffer_bytes_accessed as f64;
        vol.pe_buffer_bytes += p.reuse.level(Level::Pe).buffer_bytes_accessed as f64;
        vol.epilogue_ops +=
            (p.nest.epilogue_ops as u64 * p.nest.output.footprint(&p.nest.extents())) as f64;
    }
    vol.dram_bytes = dram_load.iter().chain(&dram_store).sum();
    for (f, share) in cg.flows.iter().zip(&alloc.flows) {
        let fabric_hops = share
            .path
            .iter()
            .filter(|&&ch| !topo.is_memory_channel(ch))
            .count();
        vol.d2d_byte_hops += f.bytes * fabric_hops as f64;
    }
    let it = iterations as f64;
    let vol = EnergyVolumes {
        mac_ops: vol.mac_ops * it,
        pe_buffer_bytes: vol.pe_buffer_bytes * it,
        core_buffer_bytes: vol.core_buffer_bytes * it,
        chiplet_buffer_bytes: vol.chiplet_buffer_bytes * it,
        dram_bytes: vol.dram_bytes * it,
        d2d_byte_hops: vol.d2d_byte_hops * it,
        epilogue_ops: vol.epilogue_ops * it,
    };
    let energy = energy_totals(&vol, &params.energy, dp.packaging);

    // Area and cost.
    let link_gbps = topo.link_bw * params.clock_ghz;
    let mem_gbps = topo.mem_bw * params.clock_ghz;
    let mut chiplets = Vec::with_capacity(n_chip);
    let mut placed = Vec::with_capacity(n_chip);
    let mut io = Vec::with_capacity(n_chip);
    for c in 0..n_chip {
        let mut inv = ChipletInventory {
            routers: u64::from(!dp.packaging.routers_in_interposer() && topo.nodes() > 1),
            ..Default::default()
        };
        for (d, p) in dp.workloads.iter().zip(&prep) {
            if !d.chiplets.contains(&c) {
                continue;
            }
            let cores = d.cluster.core.count();
            let pes = d.cluster.pes_per_chiplet();
            let sram = p.reuse.level(Level::Chiplet).tile_buffer_bytes
                + cores * p.reuse.level(Level::Core).tile_buffer_bytes
                + pes * p.reuse.level(Level::Pe).tile_buffer_bytes;
            inv.pes = inv.pes.max(pes);
            inv.cores = inv.cores.max(cores);
            inv.sram_bytes = inv.sram_bytes.max(sram);
        }
        let node = node_of(c);
        let logic = chiplet_logic_area(&inv, &params.area);
        let mem_links = topo.mem_nodes.iter().filter(|&&m| m == node).count();
        let io_mm2 = io_area(
            link_gbps,
            pkg,
            io_links(dp.packaging, topo.degree(node)).min(topo.degree(node)),
        ) + io_area(mem_gbps, pkg, mem_links);
        placed.push((topo.coord(node), logic + io_mm2));
        io.push(io_mm2);
        chiplets.push(ChipletReport {
            id: c,
            node,
            pes: inv.pes,
            sram_bytes: inv.sram_bytes,
            logic_mm2: logic,
            io_mm2,
        });
    }
    let area: f64 = placed.iter().map(|&(_, a)| a).sum();
    let bill = bill_for_placement(&placed, io, &dp.node, dp.packaging, table);
    let cost = total_cost(&bill, pkg, table)?;

    let metrics = Metrics {
        latency_cycles: latency,
        throughput_per_cycle: thr,
        energy_j: energy.total,
        cost: cost.total,
        area_mm2: area,
        edp: energy.total * latency,
        edp_js: energy.total * latency / (params.clock_ghz * 1e9),
    };
    let stages = sg
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| StageReport {
            name: s.name.clone(),
            kind: s.kind,
            delay: s.delay,
            compute_delay: if i < n_compute {
                compute_only[i]
            } else {
                s.delay
            },
            chiplets: s.chiplets.clone(),
        })
        .collect();
    let stage_edges = sg
        .edges
        .iter()
        .map(|&(a, b)| (sg.stages[a].name.clone(), sg.stages[b].name.clone()))
        .collect();
    let workloads = graph
        .workloads
        .iter()
        .zip(&prep)
        .enumerate()
        .map(|(i, (w, p))| WorkloadReport {
            name: w.name.clone(),
            chiplets: dp.workloads[i].chiplets.clone(),
            slot: bindings[i].slot,
            delay: p.delay.clone(),
            utilization: p.reuse.levels.iter().map(|l| l.utilization).collect(),
            dram_bytes: wl_dram[i],
        })
        .collect();
    Ok(Report {
        metrics,
        iterations,
        stages,
        stage_edges,
        critical_path: crit.iter().map(|&s| sg.stages[s].name.clone()).collect(),
        flows: flow_reports,
        link_bw: topo.link_bw,
        workloads,
        chiplets,
        energy,
        cost,
        warnings,
    })
}
