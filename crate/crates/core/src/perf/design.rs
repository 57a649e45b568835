use serde::{Deserialize, Serialize};

use crate::cost::PackagingKind;
use crate::error::{Error, Result};
use crate::mapping::{default_mapping, BufferCaps, Cluster, Grid, LevelMap, MapSpec};
use crate::network::{TopologyFile, TopologyKind};
use crate::workload::{LoopNest, WorkloadGraph};

/// One workload's cluster, mapping and the system chiplets its cluster
/// chiplets bind to (row-major).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkloadDesign {
    pub cluster: Cluster,
    pub spec: MapSpec,
    pub chiplets: Vec<usize>,
}

/// A fully decoded accelerator system. `workloads[i]` maps graph workload
/// `i`; workloads are bound in index order, so co-located workloads run in
/// that order. `placement[c]` is the network node of system chiplet `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub workloads: Vec<WorkloadDesign>,
    pub topology: TopologyFile,
    pub packaging: PackagingKind,
    pub node: String,
    pub placement: Vec<usize>,
}

impl DesignPoint {
    pub fn chiplet_count(&self) -> usize {
        self.workloads
            .iter()
            .flat_map(|w| w.chiplets.iter())
            .map(|&c| c + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self, graph: &WorkloadGraph) -> Result<()> {
        let fail = |m: String| Err(Error::Design(m));
        if self.workloads.len() != graph.workloads.len() {
            return fail(format!(
                "{} workload designs for {} workloads",
                self.workloads.len(),
                graph.workloads.len()
            ));
        }
        for (w, d) in graph.workloads.iter().zip(&self.workloads) {
            d.spec.validate(w, &d.cluster)?;
            if d.chiplets.len() as u64 != d.cluster.chiplets() {
                return fail(format!(
                    "`{}` binds {} chiplets to a {}-chiplet cluster",
                    w.name,
                    d.chiplets.len(),
                    d.cluster.chiplets()
                ));
            }
        }
        let n = self.chiplet_count();
        let nodes = self.topology.rows * self.topology.cols;
        if self.placement.len() != n {
            return fail(format!(
                "placement covers {} of {n} chiplets",
                self.placement.len()
            ));
        }
        for (c, &node) in self.placement.iter().enumerate() {
            if node >= nodes {
                return fail(format!("chiplet {c} placed on nonexistent node {node}"));
            }
            if self.placement[..c].contains(&node) {
                return fail(format!("node {node} holds two chiplets"));
            }
        }
        for c in 0..n {
            if !self.workloads.iter().any(|w| w.chiplets.contains(&c)) {
                return fail(format!("chiplet {c} runs no workload"));
            }
        }
        Ok(())
    }

    pub fn to_file(&self, graph: &WorkloadGraph) -> DesignFile {
        DesignFile {
            topology: self.topology.clone(),
            packaging: self.packaging,
            node: Some(self.node.clone()),
            placement: Some(self.placement.clone()),
            workloads: graph
                .workloads
                .iter()
                .zip(&self.workloads)
                .map(|(w, d)| WorkloadEntry {
                    workload: w.name.clone(),
                    chiplets: d.chiplets.clone(),
                    cluster: ClusterEntry::from(&d.cluster),
                    mapping: Some(MappingEntry {
                        chiplet: LevelEntry::from_map(&d.spec.chiplet, w),
                        core: LevelEntry::from_map(&d.spec.core, w),
                        pe: LevelEntry::from_map(&d.spec.pe, w),
                    }),
                })
                .collect(),
        }
    }

    pub fn to_json(&self, graph: &WorkloadGraph) -> String {
        serde_json::to_string_pretty(&self.to_file(graph)).expect("design serializes")
    }
}

/// Design file schema. Loops are referenced by name; omitted mappings are
/// filled with the default output-parallel mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub topology: TopologyFile,
    pub packaging: PackagingKind,
    #[serde(default)]
    pub node: Option<String>,
    #[serde(default)]
    pub placement: Option<Vec<usize>>,
    pub workloads: Vec<WorkloadEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadEntry {
    pub workload: String,
    pub chiplets: Vec<usize>,
    pub cluster: ClusterEntry,
    #[serde(default)]
    pub mapping: Option<MappingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterEntry {
    pub chiplet: [u32; 2],
    pub core: [u32; 2],
    pub pe: [u32; 2],
}

impl From<&Cluster> for ClusterEntry {
    fn from(c: &Cluster) -> Self {
        Self {
            chiplet: [c.chiplet.rows, c.chiplet.cols],
            core: [c.core.rows, c.core.cols],
            pe: [c.pe.rows, c.pe.cols],
        }
    }
}

impl ClusterEntry {
    pub fn cluster(&self) -> Cluster {
        let g = |[r, c]: [u32; 2]| Grid::new(r, c);
        Cluster::new(g(self.chiplet), g(self.core), g(self.pe))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingEntry {
    pub chiplet: LevelEntry,
    pub core: LevelEntry,
    pub pe: LevelEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    pub spatial: [String; 2],
    pub order: Vec<String>,
    pub tile: Vec<u64>,
}

impl LevelEntry {
    fn from_map(m: &LevelMap, w: &LoopNest) -> Self {
        let name = |l: usize| w.loops[l].name.clone();
        Self {
            spatial: [name(m.spatial[0]), name(m.spatial[1])],
            order: m.order.iter().map(|&l| name(l)).collect(),
            tile: m.tile.clone(),
        }
    }

    fn to_map(&self, w: &LoopNest) -> Result<LevelMap> {
        let idx = |n: &str| {
            w.loop_index(n)
                .ok_or_else(|| Error::Design(format!("`{}` has no loop `{n}`", w.name)))
        };
        Ok(LevelMap {
            spatial: [idx(&self.spatial[0])?, idx(&self.spatial[1])?],
            order: self.order.iter().map(|n| idx(n)).collect::<Result<_>>()?,
            tile: self.tile.clone(),
        })
    }
}

/// Parses and validates a design file against a workload graph.
pub fn parse_design(
    text: &str,
    graph: &WorkloadGraph,
    caps: &BufferCaps,
    default_node: &str,
) -> Result<DesignPoint> {
    let f: DesignFile = serde_json::from_str(text).map_err(Error::from_json)?;
    design_from_file(&f, graph, caps, default_node)
}

pub fn design_from_file(
    f: &DesignFile,
    graph: &WorkloadGraph,
    caps: &BufferCaps,
    default_node: &str,
) -> Result<DesignPoint> {
    let mut workloads = Vec::with_capacity(graph.workloads.len());
    for w in &graph.workloads {
        let entry = f
            .workloads
            .iter()
            .find(|e| e.workload == w.name)
            .ok_or_else(|| Error::Design(format!("no design entry for workload `{}`", w.name)))?;
        let cluster = entry.cluster.cluster();
        cluster.validate()?;
        let spec = match &entry.mapping {
            Some(m) => MapSpec {
                chiplet: m.chiplet.to_map(w)?,
                core: m.core.to_map(w)?,
                pe: m.pe.to_map(w)?,
            },
            None => default_mapping(w, &cluster, &graph.tensors, caps),
        };
        workloads.push(WorkloadDesign {
            cluster,
            spec,
            chiplets: entry.chiplets.clone(),
        });
    }
    if let Some(extra) = f
        .workloads
        .iter()
        .find(|e| graph.workload_index(&e.workload).is_none())
    {
        return Err(Error::Design(format!(
            "design names unknown workload `{}`",
            extra.workload
        )));
    }
    let mut dp = DesignPoint {
        workloads,
        topology: f.topology.clone(),
        packaging: f.packaging,
        node: f.node.clone().unwrap_or_else(|| default_node.to_string()),
        placement: Vec::new(),
    };
    dp.placement = f
        .placement
        .clone()
        .unwrap_or_else(|| (0..dp.chiplet_count()).collect());
    if dp.topology.kind == TopologyKind::AllToAll && dp.packaging != PackagingKind::Active {
        return Err(Error::Design(
            "all-to-all networks need an active interposer".into(),
        ));
    }
    dp.validate(graph)?;
    Ok(dp)
}
