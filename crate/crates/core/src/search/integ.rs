use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ArchDesign;
use crate::cost::PackagingKind;
use crate::error::Infeasible;
use crate::network::{TopologyFile, TopologyKind};
use crate::perf::{DesignPoint, WorkloadDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkOption {
    pub kind: TopologyKind,
    pub rows: usize,
    pub cols: usize,
}

impl NetworkOption {
    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn label(&self) -> String {
        match self.kind {
            TopologyKind::Mesh => format!("mesh{}x{}", self.rows, self.cols),
            k => format!("{}{}", k.name(), self.nodes()),
        }
    }
}

pub const MAX_RADIX: usize = 6;

/// Meshes of 1 to 6 nodes per side, rings of 3 to 36 nodes and linear
/// arrays of 2 to 36 nodes.
pub fn network_catalog() -> Vec<NetworkOption> {
    let max = MAX_RADIX * MAX_RADIX;
    let mut v = Vec::new();
    for rows in 1..=MAX_RADIX {
        for cols in 1..=MAX_RADIX {
            v.push(NetworkOption {
                kind: TopologyKind::Mesh,
                rows,
                cols,
            });
        }
    }
    for n in 3..=max {
        v.push(NetworkOption {
            kind: TopologyKind::Ring,
            rows: 1,
            cols: n,
        });
    }
    for n in 2..=max {
        v.push(NetworkOption {
            kind: TopologyKind::Linear,
            rows: 1,
            cols: n,
        });
    }
    v
}

/// Integration genome: packaging id, network catalog index, one design
/// rank per workload and, per network node, the chiplet placed there.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntegGenome {
    pub packaging: usize,
    pub network: usize,
    pub selector: Vec<usize>,
    pub placement: Vec<Option<usize>>,
}

/// Bayes-side fields of an integration genome.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntegLow {
    pub packaging: usize,
    pub network: usize,
    pub selector: Vec<usize>,
}

/// Chiplets instantiated by a selection, numbered workload by workload.
pub fn selected_chiplets(selector: &[usize], fronts: &[Vec<ArchDesign>]) -> usize {
    selector
        .iter()
        .zip(fronts)
        .map(|(&s, f)| f.get(s).map_or(0, |d| d.cluster.chiplets() as usize))
        .sum()
}

/// Instantiates the selected designs, numbers their chiplets in workload
/// order and places them on network nodes. Link bandwidth is left to the
/// hotspot rule of the evaluator.
pub fn decode_integration(
    g: &IntegGenome,
    fronts: &[Vec<ArchDesign>],
    catalog: &[NetworkOption],
    node: &str,
) -> Result<DesignPoint, Infeasible> {
    let err = |m: String| Infeasible::Genome { message: m };
    let packaging = PackagingKind::from_id(g.packaging)
        .ok_or_else(|| err(format!("packaging id {}", g.packaging)))?;
    let net = catalog
        .get(g.network)
        .ok_or_else(|| err(format!("network id {}", g.network)))?;
    if g.selector.len() != fronts.len() {
        return Err(err(format!(
            "{} selectors for {} workloads",
            g.selector.len(),
            fronts.len()
        )));
    }
    let mut workloads = Vec::with_capacity(fronts.len());
    let mut next = 0usize;
    for (w, (&s, front)) in g.selector.iter().zip(fronts).enumerate() {
        let d = front
            .get(s)
            .ok_or_else(|| err(format!("workload {w}: design {s} of {}", front.len())))?;
        let k = d.cluster.chiplets() as usize;
        workloads.push(WorkloadDesign {
            cluster: d.cluster,
            spec: d.spec.clone(),
            chiplets: (next..next + k).collect(),
        });
        next += k;
    }
    let chiplets = next;
    let nodes = net.nodes();
    if chiplets > nodes {
        return Err(Infeasible::TooManyChiplets { chiplets, nodes });
    }
    if g.placement.len() != nodes {
        return Err(err(format!(
            "placement has {} slots for {nodes} nodes",
            g.placement.len()
        )));
    }
    let mut placement = vec![usize::MAX; chiplets];
    for (n, slot) in g.placement.iter().enumerate() {
        let Some(c) = *slot else { continue };
        if c >= chiplets {
            return Err(err(format!("node {n} holds nonexistent chiplet {c}")));
        }
        if placement[c] != usize::MAX {
            return Err(Infeasible::DuplicatePlacement { chiplet: c });
        }
        placement[c] = n;
    }
    if let Some(c) = placement.iter().position(|&n| n == usize::MAX) {
        return Err(Infeasible::UnplacedChiplet { chiplet: c });
    }
    Ok(DesignPoint {
        workloads,
        topology: TopologyFile {
            kind: net.kind,
            rows: net.rows,
            cols: net.cols,
            link_bw: None,
            t_s: None,
            mem_nodes: None,
        },
        packaging,
        node: node.to_string(),
        placement,
    })
}

/// Chiplets on the first nodes in node order, the rest empty.
pub fn identity_placement(chiplets: usize, nodes: usize) -> Vec<Option<usize>> {
    (0..nodes).map(|n| (n < chiplets).then_some(n)).collect()
}

/// Swaps the contents of two network nodes.
pub fn placement_neighbor<R: Rng + ?Sized>(p: &[Option<usize>], rng: &mut R) -> Vec<Option<usize>> {
    let mut next = p.to_vec();
    if next.len() >= 2 {
        let a = rng.gen_range(0..next.len());
        let mut b = rng.gen_range(0..next.len() - 1);
        if b >= a {
            b += 1;
        }
        next.swap(a, b);
    }
    next
}

pub fn random_placement<R: Rng + ?Sized>(
    chiplets: usize,
    nodes: usize,
    rng: &mut R,
) -> Vec<Option<usize>> {
    let mut p = identity_placement(chiplets, nodes);
    p.shuffle(rng);
    p
}

/// Normalized features: one-hot packaging, one-hot network kind, mesh
/// rows and columns (or node count) over the largest radix, and each
/// workload's design rank over its front size.
pub fn integ_features(
    low: &IntegLow,
    catalog: &[NetworkOption],
    front_sizes: &[usize],
) -> Vec<f64> {
    let mut x = vec![0.0; 3];
    x[low.packaging.min(2)] = 1.0;
    let net = catalog[low.network];
    let kinds = [TopologyKind::Mesh, TopologyKind::Ring, TopologyKind::Linear];
    x.extend(kinds.iter().map(|k| if *k == net.kind { 1.0 } else { 0.0 }));
    let max = (MAX_RADIX * MAX_RADIX) as f64;
    match net.kind {
        TopologyKind::Mesh => {
            x.push(net.rows as f64 / MAX_RADIX as f64);
            x.push(net.cols as f64 / MAX_RADIX as f64);
        }
        _ => {
            x.push(net.nodes() as f64 / max);
            x.push(net.nodes() as f64 / max);
        }
    }
    for (&s, &n) in low.selector.iter().zip(front_sizes) {
        x.push(if n > 1 {
            s as f64 / (n - 1) as f64
        } else {
            0.0
        });
    }
    x
}
