//! Fabrication cost with negative-binomial yield, packaging options, I/O
//! area reservation, and energy/area accounting.

use serde::{Deserialize, Serialize};

use crate::config::{AreaCoeffs, EnergyCoeffs};
use crate::error::{Error, Infeasible, Result};

/// Yields below this are treated as unmanufacturable.
pub const MIN_YIELD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyNode {
    pub name: String,
    /// Defects per mm².
    pub d0: f64,
    pub alpha: f64,
    pub cost_per_mm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackagingKind {
    Organic = 0,
    Passive = 1,
    Active = 2,
}

impl PackagingKind {
    pub const ALL: [PackagingKind; 3] = [
        PackagingKind::Organic,
        PackagingKind::Passive,
        PackagingKind::Active,
    ];

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PackagingKind::Organic => "organic",
            PackagingKind::Passive => "passive_interposer",
            PackagingKind::Active => "active_interposer",
        }
    }

    pub fn has_interposer(self) -> bool {
        self != PackagingKind::Organic
    }

    /// Routers live in the interposer, so only two links per chiplet cross
    /// the bumps.
    pub fn routers_in_interposer(self) -> bool {
        self == PackagingKind::Active
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackagingOption {
    pub kind: PackagingKind,
    pub substrate_cost_per_mm2: f64,
    #[serde(default)]
    pub interposer_cost_per_mm2: f64,
    #[serde(default)]
    pub interposer_d0: f64,
    #[serde(default = "default_alpha")]
    pub interposer_alpha: f64,
    pub bond_cost: f64,
    #[serde(default)]
    pub process_cost: f64,
    /// Bandwidth density, GB/s per mm².
    pub d_bw: f64,
    /// Upper bound on per-link bandwidth, bytes/cycle.
    pub max_link_bw: f64,
}

fn default_alpha() -> f64 {
    3.0
}

fn default_margin() -> f64 {
    1.1
}

/// Cost-table file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTable {
    pub nodes: Vec<TechnologyNode>,
    /// Organic, passive interposer, active interposer.
    pub packaging: Vec<PackagingOption>,
    /// Node used for chiplets unless a design says otherwise.
    pub default_node: String,
    /// Interposer and substrate area over the placed-die bounding box.
    #[serde(default = "default_margin")]
    pub area_margin: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        let node = |name: &str, d0, cost| TechnologyNode {
            name: name.into(),
            d0,
            alpha: 3.0,
            cost_per_mm2: cost,
        };
        Self {
            nodes: vec![
                node("28nm", 0.001, 1.0),
                node("22nm", 0.0012, 1.3),
                node("12nm", 0.0015, 2.2),
                node("7nm", 0.002, 4.0),
            ],
            packaging: vec![
                PackagingOption {
                    kind: PackagingKind::Organic,
                    substrate_cost_per_mm2: 0.05,
                    interposer_cost_per_mm2: 0.0,
                    interposer_d0: 0.0,
                    interposer_alpha: 3.0,
                    bond_cost: 10.0,
                    process_cost: 0.0,
                    d_bw: 20.0,
                    max_link_bw: 64.0,
                },
                PackagingOption {
                    kind: PackagingKind::Passive,
                    substrate_cost_per_mm2: 0.05,
                    interposer_cost_per_mm2: 0.2,
                    interposer_d0: 0.0005,
                    interposer_alpha: 3.0,
                    bond_cost: 10.0,
                    process_cost: 20.0,
                    d_bw: 120.0,
                    max_link_bw: 256.0,
                },
                PackagingOption {
                    kind: PackagingKind::Active,
                    substrate_cost_per_mm2: 0.05,
                    interposer_cost_per_mm2: 0.37,
                    interposer_d0: 0.0007,
                    interposer_alpha: 3.0,
                    bond_cost: 10.0,
                    process_cost: 40.0,
                    d_bw: 120.0,
                    max_link_bw: 256.0,
                },
            ],
            default_node: "28nm".into(),
            area_margin: 1.1,
        }
    }
}

impl CostTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text).map_err(Error::from_json)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost table serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for n in &self.nodes {
            if !(n.d0 >= 0.0 && n.alpha > 0.0 && n.cost_per_mm2 >= 0.0) {
                return Err(Error::Config(format!(
                    "technology node {} has invalid parameters",
                    n.name
                )));
            }
        }
        self.node(&self.default_node)?;
        for k in PackagingKind::ALL {
            let p = self.packaging(k)?;
            let ok = p.d_bw > 0.0
                && p.max_link_bw > 0.0
                && p.interposer_alpha > 0.0
                && [
                    p.substrate_cost_per_mm2,
                    p.interposer_cost_per_mm2,
                    p.interposer_d0,
                    p.bond_cost,
                    p.process_cost,
                ]
                .iter()
                .all(|&v| v >= 0.0);
            if !ok {
                return Err(Error::Config(format!(
                    "packaging {} has invalid parameters",
                    k.name()
                )));
            }
        }
        if !(self.area_margin >= 1.0) {
            return Err(Error::Config("area_margin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn node(&self, name: &str) -> Result<&TechnologyNode> {
        self.nodes
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Config(format!("unknown technology node `{name}`")))
    }

    pub fn packaging(&self, kind: PackagingKind) -> Result<&PackagingOption> {
        self.packaging
            .iter()
            .find(|p| p.kind == kind)
            .ok_or_else(|| Error::Config(format!("cost table lacks packaging {}", kind.name())))
    }
}

/// Negative-binomial yield `(1 + A·D0/α)^-α`.
pub fn die_yield(area_mm2: f64, d0: f64, alpha: f64) -> f64 {
    (1.0 + area_mm2 * d0 / alpha).powf(-alpha)
}

pub fn node_yield(area_mm2: f64, node: &TechnologyNode) -> f64 {
    die_yield(area_mm2, node.d0, node.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Die {
    pub area_mm2: f64,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemBill {
    pub dies: Vec<Die>,
    /// Zero for organic packaging.
    pub interposer_mm2: f64,
    pub substrate_mm2: f64,
    /// Reserved I/O area per die, included in `dies[i].area_mm2`.
    pub io_mm2: Vec<f64>,
}

/// Per-term cost, stacked as die + bond + substrate + interposer + process.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub die: f64,
    pub bond: f64,
    pub substrate: f64,
    pub interposer: f64,
    pub process: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            die: self.die * k,
            bond: self.bond * k,
            substrate: self.substrate * k,
            interposer: self.interposer * k,
            process: self.process * k,
            total: self.total * k,
        }
    }

    pub fn interposer_share(&self) -> f64 {
        self.interposer / self.total
    }
}

/// `Σ(C_die/y_die + C_bond) + C_sub + C_int/y_int + C_proc`.
pub fn total_cost(
    bill: &SystemBill,
    pkg: &PackagingOption,
    table: &CostTable,
) -> std::result::Result<CostBreakdown, Infeasible> {
    let mut b = CostBreakdown::default();
    for d in &bill.dies {
        let node = table.node(&d.node).map_err(|e| Infeasible::Invalid {
            message: e.to_string(),
        })?;
        let y = node_yield(d.area_mm2, node);
        if y < MIN_YIELD {
            return Err(Infeasible::YieldUnderflow {
                area_mm2: d.area_mm2,
            });
        }
        b.die += d.area_mm2 * node.cost_per_mm2 / y;
        b.bond += pkg.bond_cost;
    }
    b.substrate = bill.substrate_mm2 * pkg.substrate_cost_per_mm2;
    if pkg.kind.has_interposer() {
        let y = die_yield(bill.interposer_mm2, pkg.interposer_d0, pkg.interposer_alpha);
        if y < MIN_YIELD {
            return Err(Infeasible::YieldUnderflow {
                area_mm2: bill.interposer_mm2,
            });
        }
        b.interposer = bill.interposer_mm2 * pkg.interposer_cost_per_mm2 / y;
        b.process = pkg.process_cost;
    }
    b.total = b.die + b.bond + b.substrate + b.interposer + b.process;
    Ok(b)
}

/// Die cost of a monolithic chip of the given area; the normalization base.
pub fn monolithic_cost(area_mm2: f64, node: &TechnologyNode) -> f64 {
    area_mm2 * node.cost_per_mm2 / node_yield(area_mm2, node)
}

/// Reserved I/O area `bw / D_bw × N_link` with `bw` in GB/s.
pub fn io_area(bw_gbps: f64, pkg: &PackagingOption, n_links: usize) -> f64 {
    bw_gbps / pkg.d_bw * n_links as f64
}

/// Links of a chiplet that cross the bumps.
pub fn io_links(kind: PackagingKind, router_degree: usize) -> usize {
    if kind.routers_in_interposer() {
        2
    } else {
        router_degree
    }
}

/// Bounding box of square dies placed on a grid: each column is as wide as
/// its widest die and each row as tall as its tallest.
pub fn placement_bbox(dies: &[((usize, usize), f64)]) -> f64 {
    use std::collections::BTreeMap;
    let mut row_h: BTreeMap<usize, f64> = BTreeMap::new();
    let mut col_w: BTreeMap<usize, f64> = BTreeMap::new();
    for &((r, c), area) in dies {
        let side = area.sqrt();
        let h = row_h.entry(r).or_default();
        *h = h.max(side);
        let w = col_w.entry(c).or_default();
        *w = w.max(side);
    }
    row_h.values().sum::<f64>() * col_w.values().sum::<f64>()
}

/// Builds a bill for dies placed on a grid.
pub fn bill_for_placement(
    dies: &[((usize, usize), f64)],
    io_mm2: Vec<f64>,
    node: &str,
    kind: PackagingKind,
    table: &CostTable,
) -> SystemBill {
    let bbox = placement_bbox(dies) * table.area_margin;
    SystemBill {
        dies: dies
            .iter()
            .map(|&(_, area_mm2)| Die {
                area_mm2,
                node: node.into(),
            })
            .collect(),
        interposer_mm2: if kind.has_interposer() { bbox } else { 0.0 },
        substrate_mm2: bbox,
        io_mm2,
    }
}

/// Operation and traffic volumes for energy accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyVolumes {
    /// MACs weighted by operand width over 8 bits.
    pub mac_ops: f64,
    pub pe_buffer_bytes: f64,
    pub core_buffer_bytes: f64,
    pub chiplet_buffer_bytes: f64,
    pub dram_bytes: f64,
    /// Die-to-die bytes times hops.
    pub d2d_byte_hops: f64,
    pub epilogue_ops: f64,
}

impl EnergyVolumes {
    pub fn add(&mut self, o: &EnergyVolumes) {
        self.mac_ops += o.mac_ops;
        self.pe_buffer_bytes += o.pe_buffer_bytes;
        self.core_buffer_bytes += o.core_buffer_bytes;
        self.chiplet_buffer_bytes += o.chiplet_buffer_bytes;
        self.dram_bytes += o.dram_bytes;
        self.d2d_byte_hops += o.d2d_byte_hops;
        self.epilogue_ops += o.epilogue_ops;
    }
}

/// Energy per component in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mac: f64,
    pub pe_buffer: f64,
    pub core_buffer: f64,
    pub chiplet_buffer: f64,
    pub dram: f64,
    pub d2d: f64,
    pub epilogue: f64,
    pub total: f64,
}

const PJ: f64 = 1e-12;

pub fn energy_totals(v: &EnergyVolumes, e: &EnergyCoeffs, kind: PackagingKind) -> EnergyBreakdown {
    let mut b = EnergyBreakdown {
        mac: v.mac_ops * e.mac * PJ,
        pe_buffer: v.pe_buffer_bytes * e.pe_buffer * PJ,
        core_buffer: v.core_buffer_bytes * e.core_buffer * PJ,
        chiplet_buffer: v.chiplet_buffer_bytes * e.chiplet_buffer * PJ,
        dram: v.dram_bytes * e.dram * PJ,
        d2d: v.d2d_byte_hops * e.d2d[kind.id()] * PJ,
        epilogue: v.epilogue_ops * e.epilogue * PJ,
        total: 0.0,
    };
    b.total = b.mac + b.pe_buffer + b.core_buffer + b.chiplet_buffer + b.dram + b.d2d + b.epilogue;
    b
}

/// Silicon inventory of one chiplet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChipletInventory {
    pub pes: u64,
    pub cores: u64,
    pub sram_bytes: u64,
    pub routers: u64,
}

/// Logic area of a chiplet, without reserved I/O.
pub fn chiplet_logic_area(inv: &ChipletInventory, a: &AreaCoeffs) -> f64 {
    inv.pes as f64 * a.pe
        + inv.sram_bytes as f64 / 1024.0 * a.sram_per_kib
        + inv.cores as f64 * a.core_overhead
        + inv.routers as f64 * a.router
        + a.chiplet_overhead
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn yield_examples() {
        assert_eq!(die_yield(500.0, 0.0, 3.0), 1.0);
        assert_relative_eq!(
            die_yield(100.0, 0.001, 3.0),
            (1.0f64 + 0.1 / 3.0).powi(-3),
            max_relative = 1e-15
        );
        assert!(die_yield(331.0, 0.001, 3.0) < die_yield(110.0, 0.001, 3.0));
    }

    #[test]
    fn single_perfect_die_costs_its_area() {
        let t = CostTable {
            nodes: vec![TechnologyNode {
                name: "x".into(),
                d0: 0.0,
                alpha: 3.0,
                cost_per_mm2: 2.0,
            }],
            default_node: "x".into(),
            ..CostTable::default()
        };
        let mut pkg = t.packaging(PackagingKind::Organic).unwrap().clone();
        pkg.bond_cost = 0.0;
        pkg.substrate_cost_per_mm2 = 0.0;
        let bill = SystemBill {
            dies: vec![Die {
                area_mm2: 50.0,
                node: "x".into(),
            }],
            interposer_mm2: 0.0,
            substrate_mm2: 60.0,
            io_mm2: vec![0.0],
        };
        assert_eq!(total_cost(&bill, &pkg, &t).unwrap().total, 100.0);
    }

    #[test]
    fn io_area_examples() {
        let mut pkg = CostTable::default().packaging[0].clone();
        pkg.d_bw = 32.0;
        assert_eq!(io_area(64.0, &pkg, 4), 8.0);
        assert_eq!(io_area(0.0, &pkg, 4), 0.0);
        assert_eq!(io_links(PackagingKind::Active, 4), 2);
        assert_eq!(io_links(PackagingKind::Passive, 4), 4);
    }

    #[test]
    fn d2d_energy_of_one_gigabyte() {
        let mut e = EnergyCoeffs::default();
        let v = EnergyVolumes {
            d2d_byte_hops: 1e9,
            ..Default::default()
        };
        e.d2d = [0.25 * 8.0, 0.81 * 8.0, 0.0];
        assert_relative_eq!(
            energy_totals(&v, &e, PackagingKind::Organic).total,
            2.0e-3,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            energy_totals(&v, &e, PackagingKind::Passive).total,
            6.48e-3,
            max_relative = 1e-12
        );
        assert_eq!(
            energy_totals(&EnergyVolumes::default(), &e, PackagingKind::Active).total,
            0.0
        );
    }

    #[test]
    fn huge_die_underflows() {
        let t = CostTable::default();
        let bill = SystemBill {
            dies: vec![Die {
                area_mm2: 1e9,
                node: "28nm".into(),
            }],
            interposer_mm2: 0.0,
            substrate_mm2: 1.0,
            io_mm2: vec![0.0],
        };
        let pkg = t.packaging(PackagingKind::Organic).unwrap();
        assert!(matches!(
            total_cost(&bill, pkg, &t),
            Err(Infeasible::YieldUnderflow { .. })
        ));
    }

    #[test]
    fn cost_table_round_trips() {
        let t = CostTable::default();
        assert_eq!(CostTable::from_json(&t.to_json()).unwrap(), t);
    }
}
