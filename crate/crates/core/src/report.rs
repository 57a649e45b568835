//! Flat CSV rows and plain-text summaries of evaluations and explorations.
//!
//! Every CSV has a header row and one record per line. Numbers use Rust's
//! shortest round-trip formatting, missing values are empty fields and list
//! fields are `;`-separated. Genomes are compact JSON in a quoted field.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cost::{CostBreakdown, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::network::TopologyKind;
use crate::perf::{Metrics, Report};
use crate::search::{EvalRecord, Exploration};
use crate::workload::WorkloadGraph;

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
}

pub fn from_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Csv(e.to_string()))
}

/// `id,stage,genome,feasible,reason,packaging,` then the metric columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub id: usize,
    pub stage: String,
    pub genome: String,
    pub feasible: bool,
    pub reason: String,
    pub packaging: String,
    pub latency_cycles: Option<f64>,
    pub throughput_per_cycle: Option<f64>,
    pub energy_j: Option<f64>,
    pub cost: Option<f64>,
    pub area_mm2: Option<f64>,
    pub edp: Option<f64>,
    pub edp_js: Option<f64>,
}

impl From<&EvalRecord> for LogRow {
    fn from(r: &EvalRecord) -> Self {
        let m = r.metrics;
        let get = |f: fn(&Metrics) -> f64| m.as_ref().map(f);
        Self {
            id: r.id,
            stage: r.stage.clone(),
            genome: r.genome.clone(),
            feasible: r.feasible,
            reason: r.reason.clone(),
            packaging: r.packaging.map_or(String::new(), |p| p.name().to_string()),
            latency_cycles: get(|m| m.latency_cycles),
            throughput_per_cycle: get(|m| m.throughput_per_cycle),
            energy_j: get(|m| m.energy_j),
            cost: get(|m| m.cost),
            area_mm2: get(|m| m.area_mm2),
            edp: get(|m| m.edp),
            edp_js: get(|m| m.edp_js),
        }
    }
}

/// One stage-one front member; `design_id` is the index used by stage-two
/// selectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchFrontRow {
    pub workload: String,
    pub design_id: usize,
    pub sample_id: usize,
    pub chiplet_grid: String,
    pub core_grid: String,
    pub pe_grid: String,
    pub total_pes: u64,
    pub latency_cycles: f64,
    pub energy_j: f64,
    pub area_mm2: f64,
    pub edp: f64,
    pub genome: String,
}

/// One final-front member with per-term energy (J) and cost breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRow {
    pub rank: usize,
    pub sample_id: usize,
    pub packaging: String,
    pub network: String,
    pub chiplets: usize,
    pub latency_cycles: f64,
    pub throughput_per_cycle: f64,
    pub energy_j: f64,
    pub cost: f64,
    pub area_mm2: f64,
    pub edp: f64,
    pub edp_js: f64,
    pub energy_mac: f64,
    pub energy_pe_buffer: f64,
    pub energy_core_buffer: f64,
    pub energy_chiplet_buffer: f64,
    pub energy_dram: f64,
    pub energy_d2d: f64,
    pub energy_epilogue: f64,
    pub cost_die: f64,
    pub cost_bond: f64,
    pub cost_substrate: f64,
    pub cost_interposer: f64,
    pub cost_process: f64,
    pub genome: String,
}

/// Every feasible system evaluation, for cost/latency scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub sample_id: usize,
    pub packaging: String,
    pub cost: f64,
    pub latency_cycles: f64,
    pub energy_j: f64,
    pub on_front: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub name: String,
    pub kind: String,
    pub delay_cycles: f64,
    pub compute_delay_cycles: f64,
    pub chiplets: String,
}

fn joined(v: &[usize]) -> String {
    v.iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn grid(g: crate::mapping::Grid) -> String {
    format!("{}x{}", g.rows, g.cols)
}

pub fn log_rows(ex: &Exploration) -> Vec<LogRow> {
    ex.log.iter().map(LogRow::from).collect()
}

pub fn arch_front_rows(ex: &Exploration, graph: &WorkloadGraph) -> Vec<ArchFrontRow> {
    let mut rows = Vec::new();
    for (w, nest) in graph.workloads.iter().enumerate() {
        for (design_id, e) in ex.ranked_designs(w).into_iter().enumerate() {
            let d = &e.item;
            rows.push(ArchFrontRow {
                workload: nest.name.clone(),
                design_id,
                sample_id: e.id,
                chiplet_grid: grid(d.cluster.chiplet),
                core_grid: grid(d.cluster.core),
                pe_grid: grid(d.cluster.pe),
                total_pes: d.cluster.total_pes(),
                latency_cycles: d.metrics.latency_cycles,
                energy_j: d.metrics.energy_j,
                area_mm2: d.metrics.area_mm2,
                edp: d.metrics.edp,
                genome: serde_json::to_string(&d.genome).expect("genome serializes"),
            });
        }
    }
    rows
}

fn network_label(kind: TopologyKind, rows: usize, cols: usize) -> String {
    match kind {
        TopologyKind::Mesh => format!("mesh{rows}x{cols}"),
        k => format!("{}{}", k.name(), rows * cols),
    }
}

pub fn front_rows(ex: &Exploration) -> Vec<FrontRow> {
    ex.front
        .ranked(|e| ex.objective.scalar(&e.item.eval.metrics))
        .into_iter()
        .enumerate()
        .map(|(rank, e)| {
            let s = &e.item;
            let (m, en, c) = (&s.eval.metrics, &s.eval.energy, &s.eval.cost);
            let t = &s.design.topology;
            FrontRow {
                rank,
                sample_id: e.id,
                packaging: s.design.packaging.name().to_string(),
                network: network_label(t.kind, t.rows, t.cols),
                chiplets: s.design.chiplet_count(),
                latency_cycles: m.latency_cycles,
                throughput_per_cycle: m.throughput_per_cycle,
                energy_j: m.energy_j,
                cost: m.cost,
                area_mm2: m.area_mm2,
                edp: m.edp,
                edp_js: m.edp_js,
                energy_mac: en.mac,
                energy_pe_buffer: en.pe_buffer,
                energy_core_buffer: en.core_buffer,
                energy_chiplet_buffer: en.chiplet_buffer,
                energy_dram: en.dram,
                energy_d2d: en.d2d,
                energy_epilogue: en.epilogue,
                cost_die: c.die,
                cost_bond: c.bond,
                cost_substrate: c.substrate,
                cost_interposer: c.interposer,
                cost_process: c.process,
                genome: serde_json::to_string(&s.genome).expect("genome serializes"),
            }
        })
        .collect()
}

pub fn scatter_rows(ex: &Exploration) -> Vec<ScatterRow> {
    let front: std::collections::HashSet<usize> = ex.front.entries().iter().map(|e| e.id).collect();
    ex.log
        .iter()
        .filter(|r| r.stage == "system")
        .filter_map(|r| {
            let m = r.metrics?;
            Some(ScatterRow {
                sample_id: r.id,
                packaging: r.packaging.map_or(String::new(), |p| p.name().to_string()),
                cost: m.cost,
                latency_cycles: m.latency_cycles,
                energy_j: m.energy_j,
                on_front: front.contains(&r.id),
            })
        })
        .collect()
}

pub fn stage_rows(report: &Report) -> Vec<StageRow> {
    report
        .stages
        .iter()
        .map(|s| StageRow {
            name: s.name.clone(),
            kind: match s.kind {
                crate::perf::StageKind::Compute => "compute".into(),
                crate::perf::StageKind::Transfer => "transfer".into(),
            },
            delay_cycles: s.delay,
            compute_delay_cycles: s.compute_delay,
            chiplets: joined(&s.chiplets),
        })
        .collect()
}

fn metrics_text(out: &mut String, m: &Metrics) {
    let _ = writeln!(out, "latency_cycles        {:e}", m.latency_cycles);
    let _ = writeln!(out, "throughput_per_cycle  {:e}", m.throughput_per_cycle);
    let _ = writeln!(out, "energy_j              {:e}", m.energy_j);
    let _ = writeln!(out, "cost                  {:e}", m.cost);
    let _ = writeln!(out, "area_mm2              {:e}", m.area_mm2);
    let _ = writeln!(out, "edp                   {:e}", m.edp);
    let _ = writeln!(out, "edp_js                {:e}", m.edp_js);
}

fn energy_text(out: &mut String, e: &EnergyBreakdown) {
    for (k, v) in [
        ("mac", e.mac),
        ("pe_buffer", e.pe_buffer),
        ("core_buffer", e.core_buffer),
        ("chiplet_buffer", e.chiplet_buffer),
        ("dram", e.dram),
        ("d2d", e.d2d),
        ("epilogue", e.epilogue),
        ("total", e.total),
    ] {
        let _ = writeln!(out, "  {k:<16}{v:e}");
    }
}

fn cost_text(out: &mut String, c: &CostBreakdown) {
    for (k, v) in [
        ("die", c.die),
        ("bond", c.bond),
        ("substrate", c.substrate),
        ("interposer", c.interposer),
        ("process", c.process),
        ("total", c.total),
    ] {
        let _ = writeln!(out, "  {k:<16}{v:e}");
    }
}

/// Metrics, energy and cost breakdowns and the per-stage delay table.
pub fn report_text(r: &Report) -> String {
    let mut out = String::from("[metrics]\n");
    metrics_text(&mut out, &r.metrics);
    let _ = writeln!(out, "iterations            {}", r.iterations);
    let _ = writeln!(out, "link_bw               {:e}", r.link_bw);
    out.push_str("\n[energy_j]\n");
    energy_text(&mut out, &r.energy);
    out.push_str("\n[cost]\n");
    cost_text(&mut out, &r.cost);
    out.push_str("\n[stages]\n");
    let _ = writeln!(
        out,
        "  {:<12}{:<10}{:>16}{:>16}  chiplets",
        "name", "kind", "delay", "compute_delay"
    );
    for s in stage_rows(r) {
        let _ = writeln!(
            out,
            "  {:<12}{:<10}{:>16.6e}{:>16.6e}  {}",
            s.name, s.kind, s.delay_cycles, s.compute_delay_cycles, s.chiplets
        );
    }
    let _ = writeln!(out, "\n[critical_path]\n  {}", r.critical_path.join(" -> "));
    if !r.flows.is_empty() {
        out.push_str("\n[flows]\n");
        for f in &r.flows {
            let _ = writeln!(
                out,
                "  {:<12}{} -> {}  bytes {:e}  bwr {:e}  rate {:e}  hops {}  delay {:e}",
                f.name, f.src, f.dst, f.bytes, f.bwr, f.rate, f.hops, f.delay
            );
        }
    }
    if !r.warnings.is_empty() {
        out.push_str("\n[warnings]\n");
        for w in &r.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

/// Final front in rank order with per-term breakdowns.
pub fn front_text(ex: &Exploration) -> String {
    let mut out = format!("objective {}\n", ex.objective);
    for (rank, e) in ex
        .front
        .ranked(|e| ex.objective.scalar(&e.item.eval.metrics))
        .into_iter()
        .enumerate()
    {
        let s = &e.item;
        let t = &s.design.topology;
        let _ = writeln!(
            out,
            "\n[design {rank}] sample {} {} {} chiplets {}",
            e.id,
            s.design.packaging.name(),
            network_label(t.kind, t.rows, t.cols),
            s.design.chiplet_count()
        );
        metrics_text(&mut out, &s.eval.metrics);
        out.push_str("energy_j\n");
        energy_text(&mut out, &s.eval.energy);
        out.push_str("cost\n");
        cost_text(&mut out, &s.eval.cost);
    }
    out
}
